"""Exact expectations of polynomials in sample means.

For an i.i.d. sample of size n drawn from a finite table (rows picked
uniformly with replacement), the expectation of a product of sample means

    E[ mean(g_1) * mean(g_2) * ... * mean(g_R) ]

expands over the set partitions of {1..R}: each partition with k blocks
contributes n (n-1) ... (n-k+1) / n^R times the product, over blocks, of
the table mean of the product of that block's functions. This turns every
"E(S^2)" and "E(p_hat^2 S^2)" appearing in the variance formulas into an
exact finite computation on the table.
"""
from __future__ import annotations

from functools import reduce
from math import prod
from typing import Dict, Iterator, List, Sequence, Tuple

import numpy as np

Term = Tuple[float, Sequence[np.ndarray]]


def set_partitions(items: List[int]) -> Iterator[List[List[int]]]:
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in set_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1 :]
        yield [[first]] + part


def falling_factorial(n: int, k: int) -> int:
    return prod(n - i for i in range(k))


class MeanProductExpectation:
    """Expectation engine for a fixed sample size.

    Block means are cached within a single :meth:`product` or
    :meth:`polynomial` call, keyed on the identity of the input arrays.
    """

    def __init__(self, n: int):
        if n < 1:
            raise ValueError("sample size must be positive")
        self.n = n
        self._cache: Dict[Tuple[int, ...], float] = {}

    def _block_mean(self, funcs: Sequence[np.ndarray], block: List[int]) -> float:
        key = tuple(sorted(id(funcs[i]) for i in block))
        if key not in self._cache:
            self._cache[key] = float(np.mean(reduce(np.multiply, (funcs[i] for i in block))))
        return self._cache[key]

    def product(self, funcs: Sequence[np.ndarray]) -> float:
        """E[prod_r mean(funcs[r])] for a sample of size ``self.n``."""
        self._cache = {}
        return self._product(funcs)

    def _product(self, funcs: Sequence[np.ndarray]) -> float:
        R = len(funcs)
        if R == 0:
            return 1.0
        total = 0.0
        for part in set_partitions(list(range(R))):
            total += falling_factorial(self.n, len(part)) * prod(
                self._block_mean(funcs, b) for b in part
            )
        return total / float(self.n) ** R

    def polynomial(self, terms: Sequence[Term]) -> float:
        self._cache = {}
        return sum(c * self._product(fs) for c, fs in terms)


def expected_sample_variance_centred(f: np.ndarray, y: np.ndarray, n: int) -> float:
    """E of the sample variance (divisor n-1) of (f_i - p_hat) y_i.

    ``p_hat`` is the sample mean of the binary ``f``; the expectation is
    over samples of size n from the table with columns ``f`` and ``y``.
    """
    f = np.asarray(f, dtype=float)
    y = np.asarray(y, dtype=float)
    fy, fyy, yy = f * y, f * y * y, y * y
    e = MeanProductExpectation(n)
    inner = e.polynomial(
        [
            (1.0, [fyy]),
            (-2.0, [f, fyy]),
            (1.0, [f, f, yy]),
            (-1.0, [fy, fy]),
            (2.0, [fy, f, y]),
            (-1.0, [f, f, y, y]),
        ]
    )
    return n / (n - 1.0) * inner


def expected_weighted_sample_variance(w: np.ndarray, y: np.ndarray, n: int) -> float:
    """E[ mean(w)^2 * S^2(y) ] with S^2 the sample variance (divisor n-1)."""
    w = np.asarray(w, dtype=float)
    y = np.asarray(y, dtype=float)
    e = MeanProductExpectation(n)
    return n / (n - 1.0) * e.polynomial([(1.0, [w, w, y * y]), (-1.0, [w, w, y, y])])


def centred_contrast_moments(f: np.ndarray, ite: np.ndarray, n: int) -> Tuple[float, float, float]:
    """Exact (E mean(g), Var mean(g), E S^2(g)) for g_i = (f_i - p_hat) * ite_i."""
    f = np.asarray(f, dtype=float)
    tau = np.asarray(ite, dtype=float)
    e = MeanProductExpectation(n)
    ftau = f * tau
    m1 = e.polynomial([(1.0, [ftau]), (-1.0, [f, tau])])
    m2 = e.polynomial([(1.0, [ftau, ftau]), (-2.0, [ftau, f, tau]), (1.0, [f, f, tau, tau])])
    s2 = expected_sample_variance_centred(f, tau, n)
    return m1, m2 - m1 * m1, s2
