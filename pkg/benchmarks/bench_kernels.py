"""Time the numba and numpy versions of every hot kernel on audit-sized inputs.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Each kernel is called once before timing so numba compilation is excluded.
Outputs of the two versions are compared before anything is timed.
"""

import argparse
import json
import platform
import timeit

import numpy as np

from mlmaudit.kernels import NUMBA_KERNELS, NUMPY_KERNELS


def cases(rng):
    n = 1271  # training rows in the case study
    x = rng.normal(size=(n, 3))
    y = rng.integers(0, 2, n)
    scores = rng.random(n)
    a, b = rng.normal(size=(500, 3)), rng.normal(size=(500, 3))
    z = np.column_stack([np.ones(n), x, rng.integers(0, 4, (n, 8))]).astype(np.float64)
    return {
        "average_ranks": (rng.integers(0, 50, 5000).astype(np.float64),),
        "rank_auc": (y, scores),
        "rowwise_spearman": (np.abs(a), np.abs(b)),
        "rowwise_sign_mismatch": (a, b, 1e-12),
        "similar_pairs": (x[:400] / 2, scores[:400], 0.25),
        "weighted_normal_equations": (z, rng.random(n), rng.normal(size=n)),
    }


def _same(u, v):
    if isinstance(u, tuple):
        return all(_same(p, q) for p, q in zip(u, v))
    return np.allclose(u, v, rtol=1e-12, atol=1e-12, equal_nan=True)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--number", type=int, default=20)
    p.add_argument("--json")
    args = p.parse_args(argv)

    rows = []
    for name, inputs in cases(np.random.default_rng(0)).items():
        nb, npy = NUMBA_KERNELS[name], NUMPY_KERNELS[name]
        if not _same(nb(*inputs), npy(*inputs)):
            raise SystemExit("kernel %s: numba and numpy outputs differ" % name)
        t_nb = min(timeit.repeat(lambda: nb(*inputs), number=args.number, repeat=args.repeat)) / args.number
        t_np = min(timeit.repeat(lambda: npy(*inputs), number=args.number, repeat=args.repeat)) / args.number
        rows.append({"kernel": name, "numba_us": 1e6 * t_nb, "numpy_us": 1e6 * t_np, "speedup": t_np / t_nb})

    print("%-28s %12s %12s %8s" % ("kernel", "numba [us]", "numpy [us]", "speedup"))
    for r in rows:
        print("%-28s %12.1f %12.1f %8.2f" % (r["kernel"], r["numba_us"], r["numpy_us"], r["speedup"]))
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump({"python": platform.python_version(), "machine": platform.machine(), "results": rows}, fh, indent=2)


if __name__ == "__main__":
    main()
