"""Random model generators and brute-force oracles shared by the tests.

The oracles deliberately avoid the package's own solvers: transient
probabilities come from a dense matrix exponential, qualitative classes from
plain BFS with a different Prob1 characterisation.
"""

from collections import deque

import numpy as np
import scipy.linalg

from csl_repair import Smc
from csl_repair.smc import StateClass


def random_smc(rng, n_states, max_out=4, exit_range=(0.1, 10.0), p_phi=0.7, p_psi=0.2,
               p_absorbing=0.0, self_loops=False):
    """Random chain with labels ``a`` (phi) and ``b`` (psi).

    Each non-absorbing state gets an exit rate drawn log-uniformly from
    ``exit_range`` that is split over 1..max_out random successors.
    """
    lo, hi = np.log(exit_range[0]), np.log(exit_range[1])
    edges = []
    for s in range(n_states):
        if rng.random() < p_absorbing:
            continue
        others = [d for d in range(n_states) if d != s]
        if not others:
            continue
        k = int(rng.integers(1, min(max_out, len(others)) + 1))
        dests = rng.choice(others, size=k, replace=False)
        total = float(np.exp(rng.uniform(lo, hi)))
        split = rng.dirichlet(np.ones(k)) * total
        for d, r in zip(dests, split):
            edges.append((s, int(d), float(max(r, 1e-9))))
        if self_loops and rng.random() < 0.3:
            edges.append((s, s, float(rng.uniform(0.1, 2.0))))
    labels = []
    for _ in range(n_states):
        lab = set()
        if rng.random() < p_phi:
            lab.add("a")
        if rng.random() < p_psi:
            lab.add("b")
        labels.append(lab)
    return Smc.from_edges(n_states, edges, labels)


def masks(smc):
    phi = np.array(["a" in lab for lab in smc.labels])
    psi = np.array(["b" in lab for lab in smc.labels])
    return phi, psi


def _succ(smc):
    succ = [set() for _ in range(smc.num_states)]
    for s, d, _ in smc.edges():
        if s != d:
            succ[s].add(d)
    return succ


def bfs_can_reach(smc, sources_ok, goal):
    """States that reach ``goal`` by a path whose earlier states satisfy ``sources_ok``."""
    n = smc.num_states
    succ = _succ(smc)
    pred = [set() for _ in range(n)]
    for s in range(n):
        for d in succ[s]:
            pred[d].add(s)
    seen = set(np.flatnonzero(goal).tolist())
    q = deque(seen)
    while q:
        x = q.popleft()
        for p in pred[x]:
            if p not in seen and sources_ok[p]:
                seen.add(p)
                q.append(p)
    return seen


def oracle_partition(smc, phi, psi):
    """Class of each state via BFS only.

    Prob0 = transit states that cannot reach psi through transit states.
    Prob1 = transit states that cannot reach a Prob0/invalid/absorbing-transit
    state through transit states (finite-chain characterisation).
    """
    n = smc.num_states
    transit = phi & ~psi
    reach_psi = bfs_can_reach(smc, transit, psi)
    zero = np.array([transit[s] and s not in reach_psi for s in range(n)])
    bad = zero | (~phi & ~psi)
    reach_bad = bfs_can_reach(smc, transit, bad)
    out = []
    for s in range(n):
        if psi[s]:
            out.append(StateClass.TARGET)
        elif not phi[s]:
            out.append(StateClass.INVALID)
        elif zero[s]:
            out.append(StateClass.GO_TO_INVALID)
        elif s not in reach_bad:
            out.append(StateClass.GO_TO_TARGET)
        else:
            out.append(StateClass.GO_BOTH_WAYS)
    return out


def generator(smc, absorbing):
    n = smc.num_states
    q = np.zeros((n, n))
    for s, d, r in smc.edges():
        if s != d and not absorbing[s]:
            q[s, d] += r
    q -= np.diag(q.sum(axis=1))
    return q


def expm_timed(smc, phi, psi, t):
    """Time-bounded Until by a dense matrix exponential of the absorbing chain."""
    q = generator(smc, psi | ~phi)
    p = scipy.linalg.expm(q * t) @ psi.astype(float)
    p[psi] = 1.0
    p[~phi & ~psi] = 0.0
    return p


def dense_untimed(smc, phi, psi):
    """Untimed Until via the fundamental matrix, with Prob0 states removed by BFS."""
    n = smc.num_states
    transit = phi & ~psi
    reach = bfs_can_reach(smc, transit, psi)
    live = np.array([transit[s] and s in reach for s in range(n)])
    p = np.zeros(n)
    p[psi] = 1.0
    idx = np.flatnonzero(live)
    if idx.size:
        emb = np.zeros((n, n))
        for s, d, r in smc.edges():
            if s != d:
                emb[s, d] += r
        rows = emb.sum(axis=1, keepdims=True)
        emb = np.divide(emb, rows, out=np.zeros_like(emb), where=rows > 0)
        a = np.eye(idx.size) - emb[np.ix_(idx, idx)]
        b = emb[np.ix_(idx, np.flatnonzero(psi))].sum(axis=1)
        p[idx] = np.linalg.solve(a, b)
    return p


# Two gototarget states whose curves cross while lowering i: state 0 leaves
# fast (rate 4.3 straight to the target) but loses time in the unscaled
# detour 0 <-> 1; state 2 leaves a bit slower without any detour.
CROSSING_EDGES = [(0, 1, 2.2), (0, 3, 4.3), (1, 0, 2.0), (2, 3, 2.2)]
CROSSING_LABELS = {0: {"up"}, 1: {"up"}, 2: {"up"}, 3: {"done"}}
CROSSING_FORMULA = "P<=0.22 [ up U<=0.7 done ]"


def crossing_model():
    return Smc.from_edges(4, CROSSING_EDGES, CROSSING_LABELS)
