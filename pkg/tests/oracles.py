"""Reference computations written independently of the package.

Everything here uses plain Python loops over explicit index sets, so it
shares no code with the vectorised estimators it checks.
"""
from __future__ import annotations

import itertools
import math
from typing import Dict, List, Sequence, Tuple


# ---------------------------------------------------------------------------
# estimator formulas, one unit at a time


def ate(y: Sequence[float], t: Sequence[int]) -> float:
    s1 = [yi for yi, ti in zip(y, t) if ti == 1]
    s0 = [yi for yi, ti in zip(y, t) if ti == 0]
    return sum(s1) / len(s1) - sum(s0) / len(s0)


def pav(y, t, f) -> float:
    n1 = sum(t)
    n0 = len(t) - n1
    a = sum(y[i] * f[i] for i in range(len(y)) if t[i] == 1) / n1
    b = sum(y[i] * (1 - f[i]) for i in range(len(y)) if t[i] == 0) / n0
    return a + b


def pape(y, t, f) -> float:
    n = len(y)
    n1 = sum(t)
    n0 = n - n1
    p = sum(f) / n
    acc = 0.0
    for i in range(n):
        if t[i] == 1:
            acc += (f[i] - p) * y[i] / n1
        else:
            acc -= (f[i] - p) * y[i] / n0
    return n / (n - 1) * acc


def pape_ex_ante(y, arm, t, f) -> Tuple[float, float]:
    """(ex-ante estimate, intermediate estimate) for one realisation."""
    n = len(y)
    p = sum(f) / n
    fa = [y[i] for i in range(n) if arm[i] == 1]
    r1 = [y[i] for i in range(n) if arm[i] == 0 and t[i] == 1]
    r0 = [y[i] for i in range(n) if arm[i] == 0 and t[i] == 0]
    inter = sum(fa) / len(fa) - p * sum(r1) / len(r1) - (1 - p) * sum(r0) / len(r0)
    return n / (n - 1) * inter, inter


# ---------------------------------------------------------------------------
# exhaustive enumeration


def assignments(n: int, n1: int):
    for idx in itertools.combinations(range(n), n1):
        t = [0] * n
        for i in idx:
            t[i] = 1
        yield t


def ex_ante_assignments(n: int, n_f: int, n_r1: int):
    for arm_idx in itertools.combinations(range(n), n_f):
        arm = [0] * n
        for i in arm_idx:
            arm[i] = 1
        rest = [i for i in range(n) if arm[i] == 0]
        for tr in itertools.combinations(rest, n_r1):
            t = [0] * n
            for i in tr:
                t[i] = 1
            yield arm, t


def observe(y1, y0, t):
    return [y1[i] if t[i] == 1 else y0[i] for i in range(len(t))]


def mean_var(values: List[float]) -> Tuple[float, float]:
    m = math.fsum(values) / len(values)
    return m, math.fsum((v - m) ** 2 for v in values) / len(values)


# ---------------------------------------------------------------------------
# closed-form conditional means written out as double sums


def cond_mean_pav(y1, y0, f) -> float:
    return sum(y1[i] if f[i] else y0[i] for i in range(len(f))) / len(f)


def cond_mean_intermediate(y1, y0, f) -> float:
    n = len(f)
    first = cond_mean_pav(y1, y0, f)
    double = 0.0
    for i in range(n):
        for j in range(n):
            double += y1[i] * f[j] + y0[i] * (1 - f[j])
    return first - double / n**2


def cond_mean_pape(y1, y0, f) -> float:
    n = len(f)
    p = sum(f) / n
    m1 = sum(y1) / n
    m0 = sum(y0) / n
    return n / (n - 1) * (cond_mean_pav(y1, y0, f) - p * m1 - (1 - p) * m0)


# ---------------------------------------------------------------------------
# superpopulation variance by exact enumeration of all with-replacement
# samples from a tiny table


def superpopulation_variance(y1, y0, f, n: int, n1: int, which: str) -> Tuple[float, float]:
    """Exact mean and variance of an estimator over (iid sample, assignment).

    Every ordered sample of n row indices is equally likely, and every
    assignment with n1 treated is equally likely given the sample.
    ``which`` is "pav" or "pape".
    """
    N = len(y1)
    vals = []
    for rows in itertools.product(range(N), repeat=n):
        ys1 = [y1[r] for r in rows]
        ys0 = [y0[r] for r in rows]
        fs = [f[r] for r in rows]
        for t in assignments(n, n1):
            y = observe(ys1, ys0, t)
            vals.append(pav(y, t, fs) if which == "pav" else pape(y, t, fs))
    return mean_var(vals)


def superpopulation_variance_ex_ante(y1, y0, f, n: int, n_f: int, n_r1: int) -> Tuple[float, float]:
    N = len(y1)
    vals = []
    for rows in itertools.product(range(N), repeat=n):
        ys1 = [y1[r] for r in rows]
        ys0 = [y0[r] for r in rows]
        fs = [f[r] for r in rows]
        for arm, t in ex_ante_assignments(n, n_f, n_r1):
            # the rule arm gets Y(f), the random arm Y(t)
            y = [(ys1[i] if fs[i] else ys0[i]) if arm[i] else (ys1[i] if t[i] else ys0[i]) for i in range(n)]
            vals.append(pape_ex_ante(y, arm, t, fs)[0])
    return mean_var(vals)


# ---------------------------------------------------------------------------
# the simulation outcome model, evaluated term by term


def acic28(x: Dict[str, float], t: int) -> float:
    """E(Y(t) | x), accumulated one displayed term at a time."""
    x4, x17, x27, x29 = x["x4"], x["x17"], x["x27"], x["x29"]
    x30, x37, x42, x54 = x["x30"], x["x37"], x["x42"], x["x54"]
    terms = [1.60]
    terms.append(0.53 * x29)
    terms.append(-3.80 * x29 * (x29 - 0.98) * (x29 + 0.86))
    if x17 > 0:
        terms.append(-0.32)
    if x42 > 0:
        terms.append(0.21)
    terms.append(-0.63 * x27)
    if x27 < -0.61:
        terms.append(4.68)
    if x27 < -0.91:
        terms.append(-0.39 * (x27 + 0.91))
    if x30 <= 0:
        terms.append(0.75)
    if x54 <= 0:
        terms.append(-1.22)
    if x4 <= 0:
        terms.append(0.11 * x37)
    if t == 0:
        if x17 <= 0:
            terms.append(-0.71)
        if x30 <= 0:
            terms.append(0.28)
        terms.append(0.44 * x27)
        if x27 < -0.80:
            terms.append(-4.87)
        if x54 <= 0:
            terms.append(-2.54)
    else:
        if x42 <= 0:
            terms.append(-1.82)
        terms.append(0.58 * x29)
        terms.append(-9.42 * x29 * (x29 - 0.67) * (x29 + 0.34))
    return math.fsum(terms)


# ---------------------------------------------------------------------------
# tables


def shift_change_closed_form(y1, y0, f, n: int, delta: float) -> float:
    """Change in the balanced-design variance difference when outcomes shift by delta."""
    N = len(f)
    p = sum(f) / N
    g1 = [i for i in range(N) if f[i] == 1]
    g0 = [i for i in range(N) if f[i] == 0]
    M11 = sum(y1[i] for i in g1) / len(g1)
    M01 = sum(y0[i] for i in g1) / len(g1)
    M10 = sum(y1[i] for i in g0) / len(g0)
    M00 = sum(y0[i] for i in g0) / len(g0)
    inner = -2 * p * (1 - p) * delta**2 - 2 * p * (1 - p) * delta * (p * (M00 + M10) + (1 - p) * (M11 + M01))
    return 2 * n / (n - 1) ** 2 * inner
