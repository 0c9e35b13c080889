"""Compare the numba and numpy kernels on the two hot paths.

    python benchmarks/bench_backends.py [--states 2000] [--paths 200000]

Transient analysis runs the uniformised Poisson sum; the simulator draws
independent paths. Both backends must give the same answer, which is checked
before timing.
"""

import argparse
import time

import numpy as np

from csl_repair import Smc
from csl_repair.analysis import timed_until_prob
from csl_repair.kernels import available_backends
from csl_repair.oracle import SimConfig, simulate_until


def ring_model(n, seed):
    # birth-death ring with random shortcuts; the last tenth of states are targets
    rng = np.random.default_rng(seed)
    edges = {}
    for s in range(n):
        edges[(s, (s + 1) % n)] = rng.uniform(0.5, 5.0)
        edges[(s, (s - 1) % n)] = rng.uniform(0.5, 5.0)
        d = int(rng.integers(n))
        if d != s:
            edges[(s, d)] = rng.uniform(0.01, 0.5)
    labels = [{"b"} if s >= n - n // 10 else {"a"} for s in range(n)]
    return Smc.from_edges(n, [(s, d, r) for (s, d), r in edges.items()], labels)


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--states", type=int, default=2000)
    ap.add_argument("--time", type=float, default=20.0, help="time bound of the Until")
    ap.add_argument("--paths", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    m = ring_model(args.states, 0)
    phi = np.array(["a" in lab for lab in m.labels])
    psi = ~phi
    backends = available_backends()
    if len(backends) < 2:
        print("numba is not installed; only the numpy backend can be timed")

    results = {}
    for b in backends:
        # first call pays for JIT compilation (or loads it from the cache)
        t0 = time.perf_counter()
        p = timed_until_prob(m, phi, psi, args.time, backend=b)
        warm = time.perf_counter() - t0
        cfg = SimConfig(num_paths=args.paths, seed=1)
        sim = simulate_until(m, 0, phi, psi, args.time, cfg, backend=b)
        t_tr = best_of(lambda: timed_until_prob(m, phi, psi, args.time, backend=b), args.repeat)
        t_mc = best_of(lambda: simulate_until(m, 0, phi, psi, args.time, cfg, backend=b), args.repeat)
        results[b] = (p, sim, warm, t_tr, t_mc)

    if len(results) == 2:
        pa, sa = results["numba"][:2]
        pb, sb = results["numpy"][:2]
        print(f"max |p_numba - p_numpy| = {np.max(np.abs(pa - pb)):.2e}")
        print(f"estimates: numba {sa.estimate:.5f}, numpy {sb.estimate:.5f}")

    print(f"{args.states} states, {m.num_transitions} transitions, t={args.time}, {args.paths} paths")
    print(f"{'backend':<8} {'first call':>11} {'transient':>11} {'simulate':>11}")
    for b, (_, _, warm, t_tr, t_mc) in results.items():
        print(f"{b:<8} {warm:>10.3f}s {t_tr:>10.4f}s {t_mc:>10.3f}s")
    if len(results) == 2:
        nb, npy = results["numba"], results["numpy"]
        print(f"speed-up  {'':>11} {npy[3] / nb[3]:>10.1f}x {npy[4] / nb[4]:>10.1f}x")


if __name__ == "__main__":
    main()
