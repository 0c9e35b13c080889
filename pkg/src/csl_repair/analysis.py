"""Untimed and time-bounded Until probabilities.

Qualitative sets (probability exactly 0 or 1) come from graph fixpoints on
the embedded jump chain.  Time-bounded probabilities are computed by
uniformisation on the chain where target and invalid states are absorbing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .smc import Smc, as_mask, as_set, require_valid

DEFAULT_DELTA = 1e-9
DEFAULT_MAX_TERMS = 10**7
DENSE_LIMIT = 500
SOLVER_TOL = 1e-12
SOLVER_MAX_ITER = 10**6


class ConvergenceError(RuntimeError):
    def __init__(self, message, residual):
        self.residual = residual
        super().__init__(f"{message} (residual {residual:.3e})")


class TruncationError(RuntimeError):
    """The Poisson series would need more terms than allowed."""


@dataclass(frozen=True, eq=False)
class UntimedResult:
    prob: np.ndarray
    exactly_one: frozenset[int]
    exactly_zero: frozenset[int]


@dataclass(frozen=True, eq=False)
class PoissonWeights:
    """Truncated, normalised Poisson probabilities ``w[k - left]`` for k in [left, right]."""

    lam: float
    weights: np.ndarray
    left: int
    right: int
    delta: float

    @property
    def total(self) -> float:
        return float(self.weights.sum())


@dataclass(frozen=True, eq=False)
class TransientSetup:
    q: float
    poisson: PoissonWeights

    @property
    def weights(self):
        return self.poisson.weights

    @property
    def left_trunc(self):
        return self.poisson.left

    @property
    def right_trunc(self):
        return self.poisson.right

    @property
    def delta(self):
        return self.poisson.delta


# ---------------------------------------------------------------------------
# qualitative analysis
# ---------------------------------------------------------------------------

def prob0(smc: Smc, phi: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """Mask of states that cannot reach ``psi`` through ``phi``-states."""
    reach = psi.copy()
    stack = list(np.flatnonzero(psi))
    pred = smc.predecessors()
    while stack:
        x = stack.pop()
        for p in pred[x]:
            if not reach[p] and phi[p]:
                reach[p] = True
                stack.append(p)
    return ~reach


def prob1(smc: Smc, phi: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """Mask of states reaching ``psi`` through ``phi``-states almost surely.

    Greatest fixpoint over U of the least fixpoint over R of
    ``psi | (phi & all successors in U & some successor in R)``.
    """
    n = smc.num_states
    keep = smc.src != smc.dst
    src, dst = smc.src[keep], smc.dst[keep]
    transit = phi & ~psi
    u = np.ones(n, dtype=bool)
    while True:
        leaks = np.bincount(src[~u[dst]], minlength=n) > 0
        candidates = transit & ~leaks
        r = psi.copy()
        while True:
            hits = np.bincount(src[r[dst]], minlength=n) > 0
            nr = r | (candidates & hits)
            if np.array_equal(nr, r):
                break
            r = nr
        if np.array_equal(r, u):
            return u
        u = r


def untimed_until_prob(smc: Smc, phi_states, psi_states, backend=None) -> UntimedResult:
    """Probabilities of ``phi U psi`` with exact 0/1 membership sets."""
    require_valid(smc)
    n = smc.num_states
    phi, psi = as_mask(phi_states, n), as_mask(psi_states, n)
    zero = prob0(smc, phi, psi)
    one = prob1(smc, phi, psi)
    prob = np.zeros(n)
    prob[one] = 1.0
    maybe = ~(zero | one)
    if maybe.any():
        prob[maybe] = _solve_maybe(smc, maybe, one, backend)
    return UntimedResult(prob, as_set(one), as_set(zero))


def _solve_maybe(smc, maybe, one, backend):
    kern = kernels.get_backend(backend)
    idx = np.flatnonzero(maybe)
    local = np.full(smc.num_states, -1, dtype=np.int64)
    local[idx] = np.arange(idx.size)
    exit_rates = smc.exit_rates()
    keep = (smc.src != smc.dst) & maybe[smc.src]
    src, dst, rate = smc.src[keep], smc.dst[keep], smc.rate[keep]
    p = rate / exit_rates[src]
    m = idx.size
    b = np.bincount(local[src[one[dst]]], weights=p[one[dst]], minlength=m)
    inner = maybe[dst]
    rows, cols, vals = local[src[inner]], local[dst[inner]], p[inner]
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    indptr = np.zeros(m + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=m), out=indptr[1:])

    x = np.zeros(m)
    if m <= DENSE_LIMIT:
        a = np.eye(m)
        np.add.at(a, (rows, cols), -vals)
        x = np.linalg.solve(a, b)
    residual = _residual(kern, indptr, cols, vals, b, x)
    if residual > SOLVER_TOL:
        x, residual, _ = kern.gauss_seidel(indptr, cols, vals, b, x, SOLVER_TOL, SOLVER_MAX_ITER)
        if residual > SOLVER_TOL:
            raise ConvergenceError("untimed Until solve did not converge", residual)
    return x


def _residual(kern, indptr, cols, vals, b, x):
    if x.size == 0:
        return 0.0
    return float(np.max(np.abs(kern.csr_matvec(indptr, cols, vals, x) + b - x)))


# ---------------------------------------------------------------------------
# Poisson weights and uniformisation
# ---------------------------------------------------------------------------

def poisson_weights(lam: float, delta: float = DEFAULT_DELTA,
                    max_terms: int = DEFAULT_MAX_TERMS) -> PoissonWeights:
    """Truncated Poisson(lam) probabilities with retained mass in [1 - delta, 1].

    Terms are generated from the mode outwards with the ratio recurrence
    (``w[k+1] = w[k] * lam / (k + 1)``), so nothing under- or overflows.
    Each side stops once a geometric bound on its remaining tail is below
    ``delta / 2`` of the mass collected so far.  The weights are divided by
    the retained mass plus both tail bounds, so every weight is at most the
    exact Poisson probability.
    """
    if not lam >= 0 or math.isinf(lam):
        raise ValueError(f"lambda must be a finite non-negative number, got {lam!r}")
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta!r}")
    mode = int(math.floor(lam))
    half = delta / 2.0
    right_terms = [1.0]
    total = 1.0
    k = mode
    right_bound = 0.0
    while True:
        nxt = right_terms[-1] * lam / (k + 1)
        rho = lam / (k + 2)
        if rho < 1.0:
            bound = nxt / (1.0 - rho)
            if bound <= half * total:
                right_bound = bound
                break
        right_terms.append(nxt)
        total += nxt
        k += 1
        if len(right_terms) > max_terms:
            raise TruncationError(f"Poisson series for lambda={lam} needs more than {max_terms} terms")
    right = k
    left_terms = []
    k = mode
    left_bound = 0.0
    cur = 1.0
    while k > 0:
        prev = cur * k / lam
        bound = prev / (1.0 - (k - 1) / lam)
        if bound <= half * total:
            left_bound = bound
            break
        left_terms.append(prev)
        total += prev
        cur = prev
        k -= 1
        if len(left_terms) + len(right_terms) > max_terms:
            raise TruncationError(f"Poisson series for lambda={lam} needs more than {max_terms} terms")
    left = k
    w = np.array(left_terms[::-1] + right_terms)
    w /= total + left_bound + right_bound
    return PoissonWeights(float(lam), w, left, right, delta)


def _absorbing_uniformised(smc: Smc, absorbing: np.ndarray):
    """Uniformised DTMC (CSR, diagonal included) and rate q."""
    n = smc.num_states
    keep = (smc.src != smc.dst) & ~absorbing[smc.src]
    src, dst, rate = smc.src[keep], smc.dst[keep], smc.rate[keep]
    exit_rates = np.bincount(src, weights=rate, minlength=n)
    q = float(exit_rates.max()) if n else 0.0
    if q <= 0.0:
        q = 1.0
    diag = np.arange(n)
    rows = np.concatenate([src, diag])
    cols = np.concatenate([dst, diag])
    vals = np.concatenate([rate / q, np.maximum(1.0 - exit_rates / q, 0.0)])
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])
    return indptr, cols, vals, q


def transient_setup(smc: Smc, phi_states, psi_states, t: float,
                    delta: float = DEFAULT_DELTA) -> TransientSetup:
    n = smc.num_states
    phi, psi = as_mask(phi_states, n), as_mask(psi_states, n)
    *_, q = _absorbing_uniformised(smc, psi | ~phi)
    return TransientSetup(q, poisson_weights(q * t, delta))


def timed_until_prob(smc: Smc, phi_states, psi_states, t: float,
                     delta: float = DEFAULT_DELTA, backend=None) -> np.ndarray:
    """Per-state probability of reaching ``psi`` within time ``t`` via ``phi``-states.

    The result is within ``delta`` of the exact value and never above it
    (up to rounding).  ``psi`` states get exactly 1.
    """
    if not t > 0 or math.isinf(t):
        raise ValueError(f"time bound must be finite and > 0, got {t!r}")
    if not 0 < delta <= 1e-3:
        raise ValueError(f"delta must lie in (0, 1e-3], got {delta!r}")
    require_valid(smc)
    n = smc.num_states
    phi, psi = as_mask(phi_states, n), as_mask(psi_states, n)
    indptr, cols, vals, q = _absorbing_uniformised(smc, psi | ~phi)
    pw = poisson_weights(q * t, delta)
    kern = kernels.get_backend(backend)
    out = kern.poisson_sum(indptr, cols, vals, psi.astype(np.float64), pw.weights, pw.left)
    np.clip(out, 0.0, 1.0, out=out)
    out[psi] = 1.0
    out[~phi & ~psi] = 0.0
    return out
