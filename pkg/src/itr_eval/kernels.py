"""Batched Monte Carlo kernels.

Each public kernel evaluates one estimator family on R replications at
once: inputs are ``(R, n)`` matrices, one row per replication. Two
implementations exist for every kernel, a numba ``@njit`` row loop and a
vectorised numpy version. They agree to floating-point rounding; the
``backend`` argument (or ``ITR_EVAL_NUMBA``) picks one.

Randomness never enters a kernel. Callers draw uniform keys with numpy
Generators and pass them in, so both backends see identical assignments.
"""
from __future__ import annotations

import numpy as np

from ._accel import njit, prange, resolve_backend

# column layout of fixed_rule_batch output
ATE, PAV, PAPE, SHIFT_FACTOR, P_HAT, PAV_VAR, PAPE_VAR = range(7)
FIXED_COLUMNS = ("ate", "pav", "pape", "shift_factor", "p_hat", "pav_var_plugin", "pape_var_plugin")

# column layout of ex_ante_batch output
EXA_VALUE, EXA_INTERMEDIATE, EXA_P_HAT, EXA_VAR = range(4)
EX_ANTE_COLUMNS = ("pape_ex_ante", "intermediate", "p_hat", "var_plugin")


# ---------------------------------------------------------------------------
# assignment from keys


@njit(cache=True, nogil=True, parallel=True)
def _complete_assignment_nb(keys, n1):
    R, n = keys.shape
    out = np.zeros((R, n), dtype=np.int8)
    for r in prange(R):
        order = np.argsort(keys[r])
        for j in range(n1):
            out[r, order[j]] = 1
    return out


def _complete_assignment_np(keys, n1):
    R, n = keys.shape
    out = np.zeros((R, n), dtype=np.int8)
    if n1 == 0:
        return out
    idx = np.argpartition(keys, n1 - 1, axis=1)[:, :n1]
    np.put_along_axis(out, idx, 1, axis=1)
    return out


def complete_assignment(keys: np.ndarray, n1: int, backend=None) -> np.ndarray:
    """Treat the ``n1`` units with the smallest keys in each row.

    With i.i.d. uniform keys each row is a uniform draw over all C(n, n1)
    assignments.
    """
    keys = np.ascontiguousarray(keys, dtype=np.float64)
    if resolve_backend(backend) == "numba":
        return _complete_assignment_nb(keys, int(n1))
    return _complete_assignment_np(keys, int(n1))


@njit(cache=True, nogil=True, parallel=True)
def _masked_assignment_nb(keys, mask, k):
    R, n = keys.shape
    out = np.zeros((R, n), dtype=np.int8)
    for r in prange(R):
        row = keys[r].copy()
        for j in range(n):
            if mask[r, j] == 0:
                row[j] = np.inf
        order = np.argsort(row)
        for j in range(k):
            out[r, order[j]] = 1
    return out


def _masked_assignment_np(keys, mask, k):
    R, n = keys.shape
    out = np.zeros((R, n), dtype=np.int8)
    if k == 0:
        return out
    row = np.where(mask == 1, keys, np.inf)
    idx = np.argpartition(row, k - 1, axis=1)[:, :k]
    np.put_along_axis(out, idx, 1, axis=1)
    return out


def masked_assignment(keys: np.ndarray, mask: np.ndarray, k: int, backend=None) -> np.ndarray:
    """Treat the ``k`` smallest-key units among those with ``mask == 1``.

    Every row of ``mask`` must contain at least ``k`` ones.
    """
    keys = np.ascontiguousarray(keys, dtype=np.float64)
    mask = np.ascontiguousarray(mask, dtype=np.int8)
    if resolve_backend(backend) == "numba":
        return _masked_assignment_nb(keys, mask, int(k))
    return _masked_assignment_np(keys, mask, int(k))


# ---------------------------------------------------------------------------
# ex-post fixed-rule estimators


@njit(cache=True, nogil=True, parallel=True)
def _fixed_rule_nb(y1, y0, f, t):
    R, n = y1.shape
    out = np.empty((R, 7))
    for r in prange(R):
        n1 = 0
        nf = 0
        sy1 = 0.0
        sy0 = 0.0
        spav1 = 0.0
        spav0 = 0.0
        sb1 = 0.0
        sb0 = 0.0
        for i in range(n):
            nf += f[r, i]
            if t[r, i] == 1:
                n1 += 1
                sy1 += y1[r, i]
                spav1 += f[r, i] * y1[r, i]
                sb1 += f[r, i]
            else:
                sy0 += y0[r, i]
                spav0 += (1 - f[r, i]) * y0[r, i]
                sb0 += 1 - f[r, i]
        n0 = n - n1
        p = nf / n
        ate = sy1 / n1 - sy0 / n0
        pav = spav1 / n1 + spav0 / n0
        c1 = (spav1 - p * sy1) / n1
        c0 = (spav0 - (1.0 - p) * sy0) / n0
        pape = n / (n - 1.0) * (c1 + c0)
        # within-arm sample variances of the masked and centred outcomes
        m1 = spav1 / n1
        m0 = spav0 / n0
        ssq1 = 0.0
        ssq0 = 0.0
        tsq1 = 0.0
        tsq0 = 0.0
        for i in range(n):
            if t[r, i] == 1:
                d = f[r, i] * y1[r, i] - m1
                ssq1 += d * d
                e = (f[r, i] - p) * y1[r, i] - c1
                tsq1 += e * e
            else:
                d = (1 - f[r, i]) * y0[r, i] - m0
                ssq0 += d * d
                e = (f[r, i] - p) * y0[r, i] + c0
                tsq0 += e * e
        pav_var = ssq1 / (n1 - 1.0) / n1 + ssq0 / (n0 - 1.0) / n0
        if nf == 0 or nf == n:
            pape = 0.0
            pape_var = np.nan
        else:
            br = (pape * pape - n * p * (1 - p) * ate * ate + 2 * (n - 1) * (2 * p - 1) * pape * ate) / (n * n)
            pape_var = (n / (n - 1.0)) ** 2 * (tsq1 / (n1 - 1.0) / n1 + tsq0 / (n0 - 1.0) / n0 + br)
        out[r, 0] = ate
        out[r, 1] = pav
        out[r, 2] = pape
        out[r, 3] = sb1 / n1 + sb0 / n0
        out[r, 4] = p
        out[r, 5] = pav_var
        out[r, 6] = pape_var
    return out


def _arm_var_rows(v, mask, k):
    mean = (v * mask).sum(axis=1) / k
    dev = (v - mean[:, None]) * mask
    return (dev * dev).sum(axis=1) / (k - 1.0)


def _fixed_rule_np(y1, y0, f, t):
    R, n = y1.shape
    tf = t.astype(np.float64)
    cf = 1.0 - tf
    ff = f.astype(np.float64)
    n1 = tf.sum(axis=1)
    n0 = n - n1
    p = ff.mean(axis=1)
    sy1 = (tf * y1).sum(axis=1)
    sy0 = (cf * y0).sum(axis=1)
    spav1 = (tf * ff * y1).sum(axis=1)
    spav0 = (cf * (1 - ff) * y0).sum(axis=1)
    ate = sy1 / n1 - sy0 / n0
    pav = spav1 / n1 + spav0 / n0
    c1 = (spav1 - p * sy1) / n1
    c0 = (spav0 - (1 - p) * sy0) / n0
    pape = n / (n - 1.0) * (c1 + c0)
    out = np.empty((R, 7))
    with np.errstate(invalid="ignore", divide="ignore"):
        pav_var = _arm_var_rows(ff * y1, tf, n1) / n1 + _arm_var_rows((1 - ff) * y0, cf, n0) / n0
        cen1 = (ff - p[:, None]) * y1
        cen0 = (ff - p[:, None]) * y0
        br = (pape**2 - n * p * (1 - p) * ate**2 + 2 * (n - 1) * (2 * p - 1) * pape * ate) / n**2
        pape_var = (n / (n - 1.0)) ** 2 * (
            _arm_var_rows(cen1, tf, n1) / n1 + _arm_var_rows(cen0, cf, n0) / n0 + br
        )
    degenerate = (p == 0) | (p == 1)
    pape = np.where(degenerate, 0.0, pape)
    pape_var = np.where(degenerate, np.nan, pape_var)
    out[:, ATE] = ate
    out[:, PAV] = pav
    out[:, PAPE] = pape
    out[:, SHIFT_FACTOR] = (tf * ff).sum(axis=1) / n1 + (cf * (1 - ff)).sum(axis=1) / n0
    out[:, P_HAT] = p
    out[:, PAV_VAR] = pav_var
    out[:, PAPE_VAR] = pape_var
    return out


def fixed_rule_batch(y1, y0, f, t, backend=None) -> np.ndarray:
    """ATE, PAV and PAPE estimates for each row of a replication batch.

    Parameters
    ----------
    y1, y0 : (R, n) float arrays
        Potential outcomes of the sampled units; only the arm named by
        ``t`` is read for each unit.
    f : (R, n) int8 array
        Rule decisions for the sampled units.
    t : (R, n) int8 array
        Treatment assignment.

    Returns
    -------
    (R, 7) array with columns named by ``FIXED_COLUMNS``. The shift factor
    is the PAV estimator applied to the constant outcome 1.
    """
    args = (
        np.ascontiguousarray(y1, dtype=np.float64),
        np.ascontiguousarray(y0, dtype=np.float64),
        np.ascontiguousarray(f, dtype=np.int8),
        np.ascontiguousarray(t, dtype=np.int8),
    )
    if resolve_backend(backend) == "numba":
        return _fixed_rule_nb(*args)
    return _fixed_rule_np(*args)


# ---------------------------------------------------------------------------
# ex-ante design


@njit(cache=True, nogil=True, parallel=True)
def _ex_ante_nb(y1, y0, f, arm, t):
    R, n = y1.shape
    out = np.empty((R, 4))
    for r in prange(R):
        nf_arm = 0
        nr1 = 0
        nr0 = 0
        n_rule = 0
        s_f = 0.0
        s_1 = 0.0
        s_0 = 0.0
        for i in range(n):
            n_rule += f[r, i]
            if arm[r, i] == 1:
                nf_arm += 1
                if f[r, i] == 1:
                    s_f += y1[r, i]
                else:
                    s_f += y0[r, i]
            elif t[r, i] == 1:
                nr1 += 1
                s_1 += y1[r, i]
            else:
                nr0 += 1
                s_0 += y0[r, i]
        p = n_rule / n
        mf = s_f / nf_arm
        m1 = s_1 / nr1
        m0 = s_0 / nr0
        value = n / (n - 1.0) * (mf - p * m1 - (1 - p) * m0)
        inter = mf - (s_1 + s_0) / (nr1 + nr0)
        qf = 0.0
        q1 = 0.0
        q0 = 0.0
        for i in range(n):
            if arm[r, i] == 1:
                if f[r, i] == 1:
                    d = y1[r, i] - mf
                else:
                    d = y0[r, i] - mf
                qf += d * d
            elif t[r, i] == 1:
                d = y1[r, i] - m1
                q1 += d * d
            else:
                d = y0[r, i] - m0
                q0 += d * d
        tau = m1 - m0
        br = (value * value - n * p * (1 - p) * tau * tau + 2 * (n - 1) * (2 * p - 1) * value * tau) / (n * n)
        var = (n / (n - 1.0)) ** 2 * (
            qf / (nf_arm - 1.0) / nf_arm
            + p * p * q1 / (nr1 - 1.0) / nr1
            + (1 - p) * (1 - p) * q0 / (nr0 - 1.0) / nr0
            + br
        )
        out[r, 0] = value
        out[r, 1] = inter
        out[r, 2] = p
        out[r, 3] = var
    return out


def _ex_ante_np(y1, y0, f, arm, t):
    R, n = y1.shape
    ff = f.astype(np.float64)
    a = arm.astype(np.float64)
    r1 = (1 - a) * t
    r0 = (1 - a) * (1 - t)
    yf = np.where(f == 1, y1, y0)
    nf = a.sum(axis=1)
    nr1 = r1.sum(axis=1)
    nr0 = r0.sum(axis=1)
    p = ff.mean(axis=1)
    mf = (a * yf).sum(axis=1) / nf
    m1 = (r1 * y1).sum(axis=1) / nr1
    m0 = (r0 * y0).sum(axis=1) / nr0
    value = n / (n - 1.0) * (mf - p * m1 - (1 - p) * m0)
    inter = mf - ((r1 * y1).sum(axis=1) + (r0 * y0).sum(axis=1)) / (nr1 + nr0)
    tau = m1 - m0
    with np.errstate(invalid="ignore", divide="ignore"):
        br = (value**2 - n * p * (1 - p) * tau**2 + 2 * (n - 1) * (2 * p - 1) * value * tau) / n**2
        var = (n / (n - 1.0)) ** 2 * (
            _arm_var_rows(yf, a, nf) / nf
            + p**2 * _arm_var_rows(y1, r1, nr1) / nr1
            + (1 - p) ** 2 * _arm_var_rows(y0, r0, nr0) / nr0
            + br
        )
    out = np.empty((R, 4))
    out[:, EXA_VALUE] = value
    out[:, EXA_INTERMEDIATE] = inter
    out[:, EXA_P_HAT] = p
    out[:, EXA_VAR] = var
    return out


def ex_ante_batch(y1, y0, f, arm, t, backend=None) -> np.ndarray:
    """Ex-ante PAPE estimates for each row of a replication batch.

    ``arm`` is 1 for units assigned to follow the rule and 0 for the random
    arm; ``t`` is only read where ``arm == 0``. Returns an ``(R, 4)`` array
    with columns named by ``EX_ANTE_COLUMNS``.
    """
    args = (
        np.ascontiguousarray(y1, dtype=np.float64),
        np.ascontiguousarray(y0, dtype=np.float64),
        np.ascontiguousarray(f, dtype=np.int8),
        np.ascontiguousarray(arm, dtype=np.int8),
        np.ascontiguousarray(t, dtype=np.int8),
    )
    if resolve_backend(backend) == "numba":
        return _ex_ante_nb(*args)
    return _ex_ante_np(*args)


# ---------------------------------------------------------------------------
# cross-fitting with the stratum learner


def stratified_folds(keys: np.ndarray, t: np.ndarray, K: int) -> np.ndarray:
    """Fold index per unit: within each arm, units are dealt round-robin in key order.

    Every row must have the same treated count, divisible by K along with
    the control count. With i.i.d. uniform keys each row's partition is
    uniform over the stratified partitions.
    """
    keys = np.asarray(keys, dtype=np.float64)
    t = np.asarray(t, dtype=np.int8)
    R, n = keys.shape
    n1 = int(t[0].sum())
    order = np.argsort(keys + 2.0 * (1 - t), axis=1)
    dealt = np.concatenate([np.arange(n1) % K, np.arange(n - n1) % K]).astype(np.int64)
    out = np.empty((R, n), dtype=np.int64)
    np.put_along_axis(out, order, np.broadcast_to(dealt, (R, n)), axis=1)
    return out


@njit(cache=True, nogil=True, parallel=True)
def _stratum_crossfit_nb(y1, y0, t, fold, strata, n_strata, K):
    R, n = y1.shape
    pav = np.empty((R, K))
    pape = np.empty((R, K))
    pav_var = np.empty((R, K))
    for r in prange(R):
        c1 = np.zeros((K, n_strata))
        c0 = np.zeros((K, n_strata))
        s1 = np.zeros((K, n_strata))
        s0 = np.zeros((K, n_strata))
        for i in range(n):
            k = fold[r, i]
            s = strata[r, i]
            if t[r, i] == 1:
                c1[k, s] += 1.0
                s1[k, s] += y1[r, i]
            else:
                c0[k, s] += 1.0
                s0[k, s] += y0[r, i]
        for k in range(K):
            # training totals: everything outside fold k
            tc1 = np.zeros(n_strata)
            tc0 = np.zeros(n_strata)
            ts1 = np.zeros(n_strata)
            ts0 = np.zeros(n_strata)
            for j in range(K):
                if j != k:
                    for s in range(n_strata):
                        tc1[s] += c1[j, s]
                        tc0[s] += c0[j, s]
                        ts1[s] += s1[j, s]
                        ts0[s] += s0[j, s]
            a1 = 0.0
            a0 = 0.0
            b1 = 0.0
            b0 = 0.0
            for s in range(n_strata):
                a1 += tc1[s]
                a0 += tc0[s]
                b1 += ts1[s]
                b0 += ts0[s]
            pooled = b1 / a1 - b0 / a0
            decide = np.zeros(n_strata, dtype=np.int8)
            for s in range(n_strata):
                if tc1[s] > 0 and tc0[s] > 0:
                    score = ts1[s] / tc1[s] - ts0[s] / tc0[s]
                else:
                    score = pooled
                if score > 0:
                    decide[s] = 1
            m = 0
            m1 = 0
            nf = 0
            sy1 = 0.0
            sy0 = 0.0
            sp1 = 0.0
            sp0 = 0.0
            for i in range(n):
                if fold[r, i] == k:
                    fi = decide[strata[r, i]]
                    m += 1
                    nf += fi
                    if t[r, i] == 1:
                        m1 += 1
                        sy1 += y1[r, i]
                        sp1 += fi * y1[r, i]
                    else:
                        sy0 += y0[r, i]
                        sp0 += (1 - fi) * y0[r, i]
            m0 = m - m1
            p = nf / m
            pav[r, k] = sp1 / m1 + sp0 / m0
            if nf == 0 or nf == m:
                pape[r, k] = 0.0
            else:
                pape[r, k] = m / (m - 1.0) * ((sp1 - p * sy1) / m1 + (sp0 - (1 - p) * sy0) / m0)
            mu1 = sp1 / m1
            mu0 = sp0 / m0
            q1 = 0.0
            q0 = 0.0
            for i in range(n):
                if fold[r, i] == k:
                    fi = decide[strata[r, i]]
                    if t[r, i] == 1:
                        d = fi * y1[r, i] - mu1
                        q1 += d * d
                    else:
                        d = (1 - fi) * y0[r, i] - mu0
                        q0 += d * d
            pav_var[r, k] = q1 / (m1 - 1.0) / m1 + q0 / (m0 - 1.0) / m0
    return pav, pape, pav_var


def _stratum_crossfit_np(y1, y0, t, fold, strata, n_strata, K):
    R, n = y1.shape
    pav = np.empty((R, K))
    pape = np.empty((R, K))
    pav_var = np.empty((R, K))
    tf = t.astype(np.float64)
    cf = 1.0 - tf
    rows = np.arange(R)[:, None]
    # per-row, per-fold, per-stratum sums via a flat bincount
    cell = (rows * K + fold) * n_strata + strata
    size = R * K * n_strata

    def tally(w):
        return np.bincount(cell.ravel(), weights=w.ravel(), minlength=size).reshape(R, K, n_strata)

    c1, c0 = tally(tf), tally(cf)
    s1, s0 = tally(tf * y1), tally(cf * y0)
    for k in range(K):
        keep = np.arange(K) != k
        tc1, tc0 = c1[:, keep].sum(axis=1), c0[:, keep].sum(axis=1)
        ts1, ts0 = s1[:, keep].sum(axis=1), s0[:, keep].sum(axis=1)
        pooled = ts1.sum(axis=1) / tc1.sum(axis=1) - ts0.sum(axis=1) / tc0.sum(axis=1)
        ok = (tc1 > 0) & (tc0 > 0)
        with np.errstate(invalid="ignore", divide="ignore"):
            score = np.where(ok, ts1 / np.maximum(tc1, 1) - ts0 / np.maximum(tc0, 1), pooled[:, None])
        decide = (score > 0).astype(np.float64)
        f = np.take_along_axis(decide, strata, axis=1)
        infold = (fold == k).astype(np.float64)
        m = infold.sum(axis=1)
        w1, w0 = infold * tf, infold * cf
        m1, m0 = w1.sum(axis=1), w0.sum(axis=1)
        nf = (infold * f).sum(axis=1)
        p = nf / m
        sy1, sy0 = (w1 * y1).sum(axis=1), (w0 * y0).sum(axis=1)
        sp1, sp0 = (w1 * f * y1).sum(axis=1), (w0 * (1 - f) * y0).sum(axis=1)
        pav[:, k] = sp1 / m1 + sp0 / m0
        val = m / (m - 1.0) * ((sp1 - p * sy1) / m1 + (sp0 - (1 - p) * sy0) / m0)
        pape[:, k] = np.where((nf == 0) | (nf == m), 0.0, val)
        pav_var[:, k] = _arm_var_rows(f * y1, w1, m1) / m1 + _arm_var_rows((1 - f) * y0, w0, m0) / m0
    return pav, pape, pav_var


def stratum_crossfit_batch(y1, y0, t, fold, strata, n_strata: int, K: int, backend=None):
    """Cross-fitted fold estimates for the stratum difference-in-means learner.

    For each replication row and fold k, the learner is fitted on the
    units outside fold k and its rule evaluated on fold k. Matches
    :class:`itr_eval.crossfit.StratumCATELearner` followed by the PAV and
    PAPE estimators on each fold.

    Returns
    -------
    pav, pape, pav_var : (R, K) arrays
        Fold PAV estimates, fold PAPE estimates and fold PAV plug-in
        variances.
    """
    args = (
        np.ascontiguousarray(y1, dtype=np.float64),
        np.ascontiguousarray(y0, dtype=np.float64),
        np.ascontiguousarray(t, dtype=np.int8),
        np.ascontiguousarray(fold, dtype=np.int64),
        np.ascontiguousarray(strata, dtype=np.int64),
        int(n_strata),
        int(K),
    )
    if resolve_backend(backend) == "numba":
        return _stratum_crossfit_nb(*args)
    return _stratum_crossfit_np(*args)
