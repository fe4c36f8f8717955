"""Compare the numba kernels with the numpy fallbacks.

Usage: python3 benchmarks/bench_kernels.py [--sizes 8 16 32] [--runs 5] [--json out.json]

Each kernel is warmed up once (numba compiles on first call), then timed over
``--runs`` repetitions; the median is reported together with the largest
absolute difference between the two outputs.
"""

import argparse
import json
import statistics
import time

import numpy as np

from shadowot import _kernels as K


def _time(fn, runs):
    fn()
    out = []
    for _ in range(runs):
        t0 = time.perf_counter()
        fn()
        out.append(time.perf_counter() - t0)
    return statistics.median(out)


def _case_sinkhorn(rng, n):
    a = rng.dirichlet(np.ones(n))
    b = rng.dirichlet(np.ones(n))
    neg_c = -rng.uniform(0, 4, size=(n, n))
    z = np.zeros(n)
    args = (neg_c, a, b, z, z, 0, 1e-10, 20_000)
    return lambda: K.sinkhorn_log_numba(*args), lambda: K.sinkhorn_log_numpy(*args), lambda r: np.concatenate(r[:2])


def _case_simplex(rng, n):
    a = rng.dirichlet(np.ones(n))
    b = rng.dirichlet(np.ones(n))
    C = rng.uniform(size=(n, n))
    args = (a, b, C, 1e-12, 1_000_000)
    # same algorithm on both paths; report the cost of the plan
    return lambda: K.transport_simplex_numba(*args), lambda: K.transport_simplex_numpy(*args), lambda r: np.array([np.sum(r[0] * C)])


def _case_lipschitz(rng, n):
    m = max(2, int(round(n ** 0.5)))
    pts = [rng.uniform(-1, 1, size=m) for _ in range(2)]
    dists = np.stack([np.abs(x[:, None] - x[None, :]) for x in pts])
    vals = rng.uniform(size=(m, m))
    idx = np.stack(np.unravel_index(np.arange(m * m), (m, m)), axis=1).astype(np.int64)
    args = (vals.reshape(-1), dists, idx, 2.0)
    return lambda: K.lipschitz_numba(*args), lambda: K.lipschitz_numpy(*args), lambda r: np.array([r])


def _case_distances(rng, n):
    m = max(2, int(round(n ** 0.5)))
    pts = [rng.uniform(-1, 1, size=m) for _ in range(2)]
    dists = np.stack([np.abs(x[:, None] - x[None, :]) for x in pts])
    idx = np.stack(np.unravel_index(np.arange(m * m), (m, m)), axis=1).astype(np.int64)
    args = (dists, idx, idx, 2.0, True)
    return lambda: K.product_distances_numba(*args), lambda: K.product_distances_numpy(*args), lambda r: np.ravel(r)


CASES = {
    "sinkhorn_log": _case_sinkhorn,
    "transport_simplex": _case_simplex,
    "lipschitz": _case_lipschitz,
    "product_distances": _case_distances,
}


def run(sizes, runs, seed=0):
    rows = []
    for name, make in CASES.items():
        for n in sizes:
            rng = np.random.default_rng(seed)
            fast, slow, key = make(rng, n)
            diff = float(np.max(np.abs(key(fast()) - key(slow()))))
            t_fast, t_slow = _time(fast, runs), _time(slow, runs)
            rows.append({"kernel": name, "n": n, "numba_s": t_fast, "numpy_s": t_slow, "speedup": t_slow / t_fast, "max_abs_diff": diff})
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[8, 32, 128])
    ap.add_argument("--runs", type=int, default=5)
    ap.add_argument("--json", help="also write the rows to this file")
    args = ap.parse_args(argv)
    rows = run(args.sizes, args.runs)
    print(f"{'kernel':<18} {'n':>5} {'numba [ms]':>11} {'numpy [ms]':>11} {'speedup':>8} {'max diff':>10}")
    for r in rows:
        print(f"{r['kernel']:<18} {r['n']:>5} {1e3 * r['numba_s']:>11.3f} {1e3 * r['numpy_s']:>11.3f} {r['speedup']:>8.1f} {r['max_abs_diff']:>10.2e}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=1)


if __name__ == "__main__":
    main()
