"""Time the Monte Carlo kernels on the numba and numpy backends.

    python3 benchmarks/bench_kernels.py --reps 20000 --n 200

Numba kernels are compiled (or loaded from cache) during a warm-up call
that is not timed. Each timing is the best of ``--repeat`` runs.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from itr_eval import kernels as K
from itr_eval._accel import HAVE_NUMBA


def _best(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def make_inputs(R: int, n: int, folds: int, seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    y1 = rng.normal(1.0, 3.0, (R, n))
    y0 = rng.normal(0.0, 3.0, (R, n))
    f = (rng.random((R, n)) < 0.6).astype(np.int8)
    t = K.complete_assignment(rng.random((R, n)), n // 2, "numpy")
    arm = K.complete_assignment(rng.random((R, n)), n // 2, "numpy")
    t_ante = K.masked_assignment(rng.random((R, n)), 1 - arm, n // 4, "numpy")
    fold = K.stratified_folds(rng.random((R, n)), t, folds)
    strata = rng.integers(0, 4, (R, n)).astype(np.int64)
    return dict(y1=y1, y0=y0, f=f, t=t, arm=arm, t_ante=t_ante, fold=fold, strata=strata, keys=rng.random((R, n)))


def cases(d: dict, folds: int):
    return {
        "complete_assignment": lambda b: K.complete_assignment(d["keys"], d["keys"].shape[1] // 2, b),
        "fixed_rule_batch": lambda b: K.fixed_rule_batch(d["y1"], d["y0"], d["f"], d["t"], b),
        "ex_ante_batch": lambda b: K.ex_ante_batch(d["y1"], d["y0"], d["f"], d["arm"], d["t_ante"], b),
        "stratum_crossfit_batch": lambda b: K.stratum_crossfit_batch(
            d["y1"], d["y0"], d["t"], d["fold"], d["strata"], 4, folds, b
        ),
    }


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--reps", type=int, default=20_000, help="replications per batch")
    p.add_argument("--n", type=int, default=200, help="units per replication (divisible by 4 and --k)")
    p.add_argument("--k", type=int, default=4, help="folds for the cross-fitting kernel")
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)

    d = make_inputs(args.reps, args.n, args.k)
    backends = ["numpy"] + (["numba"] if HAVE_NUMBA else [])
    print(f"R={args.reps} n={args.n} K={args.k}; best of {args.repeat}")
    print(f"{'kernel':<24}" + "".join(f"{b:>12}" for b in backends) + ("     speedup" if HAVE_NUMBA else ""))
    for name, fn in cases(d, args.k).items():
        times = []
        for b in backends:
            fn(b)  # warm-up and compile
            times.append(_best(lambda: fn(b), args.repeat))
        line = f"{name:<24}" + "".join(f"{t * 1e3:>10.1f}ms" for t in times)
        if HAVE_NUMBA:
            line += f"{times[0] / times[1]:>11.1f}x"
        print(line)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
