"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_backends.py [--sizes 1000,100000] [--repeat 5] [--json out.json]

Both implementations are imported directly, so one process compares them.
"""
import argparse
import json
import sys
import timeit

import numpy as np

from layerpot import _kernels_py

try:
    from layerpot import _speedups
except ImportError:
    _speedups = None


def make_inputs(n, count, seed=0):
    rng = np.random.default_rng(seed)
    z = rng.normal(size=(count, n))
    nx = rng.normal(size=(count, n))
    nx /= np.linalg.norm(nx, axis=1)[:, None]
    ny = rng.normal(size=(count, n))
    ny /= np.linalg.norm(ny, axis=1)[:, None]
    m = rng.normal(size=(n, n))
    a2inv = np.linalg.inv(m @ m.T + np.eye(n))
    return z, nx, ny, a2inv


def cases(n, count):
    z, nx, ny, a2inv = make_inputs(n, count)
    return {
        "principal_dl": lambda mod: mod.principal_dl(z, ny, a2inv, 0.5),
        "principal_tangential": lambda mod: mod.principal_tangential(z, nx, ny, a2inv, 0.5),
        "riesz": lambda mod: mod.riesz(z, 0),
    }


def best_time(fn, repeat):
    number = 1
    while timeit.timeit(fn, number=number) < 0.05:
        number *= 2
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", default="1000,100000", help="comma separated node counts")
    p.add_argument("--dims", default="2,3")
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--json", help="also write results to this file")
    args = p.parse_args(argv)
    if _speedups is None:
        print("compiled extension not built; only the numpy fallback is available", file=sys.stderr)
        return 1
    rows = []
    print(f"{'kernel':<22}{'n':>3}{'nodes':>9}{'numpy [ms]':>13}{'cython [ms]':>13}{'speedup':>9}")
    for n in (int(d) for d in args.dims.split(",")):
        for count in (int(s) for s in args.sizes.split(",")):
            for name, call in cases(n, count).items():
                t_py = best_time(lambda: call(_kernels_py), args.repeat)
                t_cy = best_time(lambda: call(_speedups), args.repeat)
                rows.append({"kernel": name, "n": n, "nodes": count, "numpy_s": t_py, "cython_s": t_cy})
                print(f"{name:<22}{n:>3}{count:>9}{1e3 * t_py:>13.3f}{1e3 * t_cy:>13.3f}{t_py / t_cy:>8.1f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
