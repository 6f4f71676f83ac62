"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Each kernel runs on the same inputs under both back-ends; outputs are
checked for agreement before timing.
"""

from __future__ import annotations

import argparse
import json
import timeit

import numpy as np

from sagmec import kernels, matching


def _cases(gen):
    J, K, B = 80, 4, 25
    gain = gen.uniform(1e-9, 1e-6, size=(J, K))
    cell = gen.integers(0, K, size=J)
    band = gen.integers(-1, B, size=J)
    power = gen.uniform(0.0, 0.2, size=J)
    dev = gen.uniform(0.0, 1.0, size=(10, 10))
    bp = gen.uniform(-0.2, 1.0, size=(10, 10))
    res = matching.deferred_acceptance(dev, bp)
    order, _ = matching._strict_rank(dev)
    _, drank = matching._strict_rank(dev)
    _, brank = matching._strict_rank(bp)
    n_ok = (dev > 0).sum(axis=1)
    V = gen.normal(size=(200, 8))
    return {
        "interference_tensor": lambda: kernels.interference_tensor(gain, cell, band, power, K, B),
        "deferred_acceptance": lambda: kernels.deferred_acceptance(order, n_ok, brank, bp > 0),
        "blocking_pairs": lambda: kernels.blocking_pairs(drank, dev > 0, brank, bp > 0, res.match),
        "project_simplex_rows": lambda: kernels.project_simplex_rows(V, 1.0),
    }


def _same(a, b) -> bool:
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    if isinstance(a, list):
        return len(a) == len(b) and all(_same(x, y) for x, y in zip(a, b))
    return np.allclose(np.asarray(a, dtype=float), np.asarray(b, dtype=float), rtol=1e-12, atol=0.0)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--number", type=int, default=200)
    ap.add_argument("--json", help="write the timings here")
    args = ap.parse_args(argv)

    backends = kernels.available()
    if "cython" not in backends:
        print("compiled kernels are not built; only the fallback can be timed")
    cases = _cases(np.random.default_rng(0))
    results = {}
    start = kernels.BACKEND
    try:
        for name, fn in cases.items():
            outputs, times = {}, {}
            for b in backends:
                kernels.use(b)
                outputs[b] = fn()
                times[b] = min(timeit.repeat(fn, repeat=args.repeat, number=args.number)) / args.number
            if len(outputs) == 2 and not _same(outputs["python"], outputs["cython"]):
                print(f"{name}: back-ends disagree")
                return 1
            results[name] = times
    finally:
        kernels.use(start)

    print(f"{'kernel':24s}" + "".join(f"{b:>14s}" for b in backends) + ("    speedup" if len(backends) == 2 else ""))
    for name, t in results.items():
        line = f"{name:24s}" + "".join(f"{t[b] * 1e6:12.1f}us" for b in backends)
        if len(backends) == 2:
            line += f"{t['python'] / t['cython']:10.1f}x"
        print(line)
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=1, sort_keys=True)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
