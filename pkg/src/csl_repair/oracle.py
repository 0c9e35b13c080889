"""Monte Carlo path simulation, used as an independent check on the solvers.

Nothing here shares code with :mod:`csl_repair.analysis`: the dead-state
set used to stop hopeless untimed paths is recomputed by a separate BFS.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from . import kernels
from .smc import Smc, as_mask, require_valid


@dataclass(frozen=True)
class SimConfig:
    num_paths: int = 100_000
    seed: int = 0
    max_jumps: int = 1_000_000

    def __post_init__(self):
        if self.num_paths < 1:
            raise ValueError("num_paths must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.max_jumps < 1:
            raise ValueError("max_jumps must be >= 1")


@dataclass(frozen=True)
class SimResult:
    estimate: float
    std_error: float
    num_paths: int
    capped: int = 0

    def within(self, value: float, sigmas: float) -> bool:
        return abs(self.estimate - value) <= sigmas * self.std_error


def _dead_states(n, succ, phi, psi):
    # states with no path to psi through phi-states
    pred = [[] for _ in range(n)]
    for s, outs in enumerate(succ):
        for d in outs:
            pred[d].append(s)
    alive = np.zeros(n, dtype=bool)
    queue = deque(np.flatnonzero(psi).tolist())
    alive[psi] = True
    while queue:
        x = queue.popleft()
        for p in pred[x]:
            if not alive[p] and phi[p] and not psi[p]:
                alive[p] = True
                queue.append(p)
    return ~alive


def simulate_until(smc: Smc, start: int, phi_states, psi_states, t: float | None = None,
                   cfg: SimConfig = SimConfig(), backend=None) -> SimResult:
    """Estimate ``Pr(start, phi U<=t psi)`` by sampling paths.

    ``t=None`` (or ``inf``) gives the untimed Until.  Paths that hit
    ``max_jumps`` count as failures and are reported in ``capped``.
    """
    require_valid(smc)
    n = smc.num_states
    if not 0 <= start < n:
        raise ValueError(f"start state {start} out of range")
    t_max = math.inf if t is None else float(t)
    if not t_max > 0:
        raise ValueError("time bound must be > 0")
    phi, psi = as_mask(phi_states, n), as_mask(psi_states, n)

    edges = [(s, d, r) for s, d, r in smc.edges() if s != d]
    edges.sort()
    succ = [[] for _ in range(n)]
    for s, d, _ in edges:
        succ[s].append(d)
    indptr = np.zeros(n + 1, dtype=np.int64)
    for s, _, _ in edges:
        indptr[s + 1] += 1
    np.cumsum(indptr, out=indptr)
    cum_end = np.cumsum(np.array([r for _, _, r in edges], dtype=np.float64))
    row_base = np.array([cum_end[indptr[s] - 1] if indptr[s] > 0 else 0.0 for s in range(n)])
    exit_rates = np.array([(cum_end[indptr[s + 1] - 1] - row_base[s]) if indptr[s + 1] > indptr[s] else 0.0
                           for s in range(n)])
    dst = np.array([d for _, d, _ in edges], dtype=np.int64)
    if cum_end.size == 0:
        cum_end, dst = np.zeros(1), np.zeros(1, dtype=np.int64)

    status = np.full(n, kernels.RUNNING, dtype=np.int64)
    status[~phi] = kernels.FAILURE
    status[exit_rates == 0.0] = kernels.FAILURE
    if math.isinf(t_max):
        status[_dead_states(n, succ, phi, psi)] = kernels.FAILURE
    status[psi] = kernels.SUCCESS

    kern = kernels.get_backend(backend)
    hits, capped = kern.simulate_paths(indptr, dst, cum_end, row_base, exit_rates, status,
                                       int(start), t_max, int(cfg.num_paths), int(cfg.seed),
                                       int(cfg.max_jumps))
    p = hits / cfg.num_paths
    se = math.sqrt(p * (1.0 - p) / cfg.num_paths)
    return SimResult(p, se, cfg.num_paths, int(capped))
