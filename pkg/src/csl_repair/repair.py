"""Rate-reduction repair for violated time-bounded Until requirements.

Two strategies, picked by the direction of the probability bound:

* ``P<=b``: :func:`algorithm1` first lowers factor ``i`` (gototarget ->
  target) until every gototarget state is below the bound, then, with ``i``
  fixed, lowers ``k`` (gobothways -> gototarget/target) for the gobothways
  states.  This always succeeds.
* ``P>=b``: :func:`algorithm2` lowers ``j`` (gobothways -> gotoinvalid/invalid)
  and reports failure when no common ``j`` lifts every gobothways state
  above the bound.

Each factor is found with :func:`bsm`, a bisection over ``(0, current]``.
Because probability curves of different states can cross, every phase
re-checks its whole class after each search and searches again (with the
interval shrunk to the factor found so far) while some state still violates.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .analysis import DEFAULT_DELTA, UntimedResult, timed_until_prob, untimed_until_prob
from .csl import Comparison, UntilRequirement, prop_mask
from .smc import (Edge, Factors, Partition, ReducedSmc, Smc, StateClass, build_reduced,
                  instantiate, partition)

log = logging.getLogger(__name__)


class RepairError(RuntimeError):
    """Numerical trouble that should not happen, e.g. the P<=b repair getting stuck."""


@dataclass(frozen=True)
class BsmConfig:
    epsilon: float = 1e-4
    max_iters: int = 64

    def __post_init__(self):
        if not 0.0 < self.epsilon < 0.5:
            raise ValueError(f"epsilon must lie in (0, 0.5), got {self.epsilon!r}")
        if math.ceil(math.log2(1.0 / self.epsilon)) > self.max_iters:
            raise ValueError("max_iters too small for the requested epsilon")


def bsm(satisfies: Callable[[float], bool], lo: float = 0.0, hi: float = 1.0,
        cfg: BsmConfig = BsmConfig(), trace: list | None = None) -> float:
    """Bisect for the largest value in ``(lo, hi]`` that ``satisfies``.

    Returns the lower end of the final interval.  If no probe succeeded the
    result equals ``lo``, which callers treat as failure.  ``trace``, when
    given, receives one ``(value, ok)`` pair per probe.
    """
    if not 0.0 <= lo < hi <= 1.0:
        raise ValueError(f"need 0 <= lo < hi <= 1, got lo={lo!r}, hi={hi!r}")
    iters = 0
    while hi - lo > cfg.epsilon and iters < cfg.max_iters:
        mid = (lo + hi) / 2.0
        ok = bool(satisfies(mid))
        if trace is not None:
            trace.append((mid, ok))
        if ok:
            lo = mid
        else:
            hi = mid
        iters += 1
    return lo


class RepairStatus(enum.Enum):
    NO_REDUCTION_NEEDED = "NoReductionNeeded"
    REPAIRED = "Repaired"
    FAILED = "Failed"
    NOTHING_TO_REPAIR = "NothingToRepair"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True, eq=False)
class RepairOutcome:
    status: RepairStatus
    factors: Factors
    t_i: frozenset[Edge]
    t_j: frozenset[Edge]
    t_k: frozenset[Edge]
    before: np.ndarray
    after: np.ndarray
    iterations: dict[str, int]
    partition: Partition
    scope: frozenset[int]
    message: str = ""
    # probabilities of the scope states at the smallest factor tried (Failed only)
    limit: dict[int, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "status": self.status.value,
            "message": self.message,
            "factors": self.factors.as_dict(),
            "transition_sets": {
                name: sorted([list(e) for e in edges])
                for name, edges in (("T_i", self.t_i), ("T_j", self.t_j), ("T_k", self.t_k))
            },
            "iterations": dict(self.iterations),
            "scope": sorted(self.scope),
            "before": {str(s): float(p) for s, p in enumerate(self.before)},
            "after": {str(s): float(p) for s, p in enumerate(self.after)},
            "limit": {str(s): p for s, p in sorted(self.limit.items())},
        }


@dataclass(frozen=True, eq=False)
class Classification:
    phi: np.ndarray
    psi: np.ndarray
    untimed: UntimedResult
    partition: Partition


def classify(smc: Smc, req: UntilRequirement, strict: bool = False, backend=None) -> Classification:
    """Satisfaction sets, untimed probabilities and state classes for ``req``."""
    phi = prop_mask(smc, req.phi, strict)
    psi = prop_mask(smc, req.psi, strict)
    untimed = untimed_until_prob(smc, phi, psi, backend=backend)
    return Classification(phi, psi, untimed, partition(smc, phi, psi, untimed))


class _Evaluator:
    """Timed Until probabilities of the reduced model for given factors."""

    def __init__(self, reduced: ReducedSmc, cls: Classification, req: UntilRequirement,
                 delta: float, backend):
        self.reduced = reduced
        self.cls = cls
        self.req = req
        self.delta = delta
        self.backend = backend
        self.calls = 0

    def tightened(self, by: float) -> "_Evaluator":
        return _Evaluator(self.reduced, self.cls, self.req, self.delta / by, self.backend)

    def __call__(self, factors: Factors) -> np.ndarray:
        self.calls += 1
        model = instantiate(self.reduced, factors)
        return timed_until_prob(model, self.cls.phi, self.cls.psi, self.req.time_bound,
                                self.delta, backend=self.backend)


def _pick(probs: np.ndarray, states: Sequence[int], highest: bool) -> int:
    vals = probs[list(states)]
    # np.argmax/argmin return the first hit, i.e. the lowest state index on ties
    return states[int(np.argmax(vals) if highest else np.argmin(vals))]


@dataclass
class _PhaseResult:
    factors: Factors
    passes: int
    ok: bool
    message: str = ""
    trace: list = field(default_factory=list)
    stuck_state: int | None = None


def _run_phase(ev: _Evaluator, factors: Factors, name: str, states: Sequence[int],
               cfg: BsmConfig, max_passes: int, retry_tightened: bool) -> _PhaseResult:
    req = ev.req
    highest = req.comparison is Comparison.LEQ
    passes = 0
    trace: list = []
    while True:
        probs = ev(factors)
        if all(req.comparison.holds(probs[s], req.bound) for s in states):
            return _PhaseResult(factors, passes, True, trace=trace)
        if passes >= max_passes:
            return _PhaseResult(factors, passes, False,
                                f"factor {name}: still violating after {passes} passes (cap)", trace)
        s_h = _pick(probs, states, highest)
        current = getattr(factors, name)
        log.debug("phase %s pass %d: state %d at %.6g, %s=%.6g", name, passes + 1, s_h,
                  probs[s_h], name, current)

        def predicate(evaluate, base=factors, target=s_h):
            return lambda x: req.comparison.holds(evaluate(base.replace(**{name: x}))[target],
                                                  req.bound)

        run: list = []
        found = bsm(predicate(ev), 0.0, current, cfg, trace=run)
        if found <= 0.0 and retry_tightened:
            run = []
            found = bsm(predicate(ev.tightened(100.0)), 0.0, current, cfg, trace=run)
        trace.extend(run)
        passes += 1
        if found <= 0.0:
            res = _PhaseResult(factors, passes, False,
                               f"factor {name}: no value in (0, {current:.6g}] makes state {s_h} satisfy "
                               f"the bound at precision {cfg.epsilon:g}", trace)
            res.stuck_state = s_h
            return res
        factors = factors.replace(**{name: found})


def _base_outcome(status, cls, before, after, scope, message="", **kw):
    return RepairOutcome(status, kw.pop("factors", Factors()), frozenset(), frozenset(), frozenset(),
                         before, after, kw.pop("iterations", {}), cls.partition, scope, message, **kw)


def algorithm1(smc: Smc, req: UntilRequirement, cfg: BsmConfig = BsmConfig(),
               delta: float = DEFAULT_DELTA, strict: bool = False, backend=None,
               max_passes: int | None = None) -> RepairOutcome:
    """Repair a ``P<=b`` requirement by lowering factors ``i`` then ``k``."""
    if req.comparison is not Comparison.LEQ:
        raise ValueError("algorithm1 handles P<=b requirements only")
    cls = classify(smc, req, strict, backend)
    part = cls.partition
    C = StateClass
    g2t = sorted(part.states(C.GO_TO_TARGET))
    gbw = sorted(part.states(C.GO_BOTH_WAYS))
    scope = frozenset(g2t) | frozenset(gbw)
    before = timed_until_prob(smc, cls.phi, cls.psi, req.time_bound, delta, backend=backend)
    if not scope:
        return _base_outcome(RepairStatus.NOTHING_TO_REPAIR, cls, before, before, scope,
                             "No states whose probabilities can be modified")
    if all(before[s] <= req.bound for s in scope):
        return _base_outcome(RepairStatus.NO_REDUCTION_NEEDED, cls, before, before, scope,
                             "No need for rate reduction")

    reduced = build_reduced(smc, part)
    ev = _Evaluator(reduced, cls, req, delta, backend)
    cap = smc.num_states if max_passes is None else max_passes
    factors = Factors()
    iterations = {}
    for name, states in (("i", g2t), ("k", gbw)):
        if not states:
            iterations[name] = 0
            continue
        res = _run_phase(ev, factors, name, states, cfg, cap, retry_tightened=True)
        iterations[name] = res.passes
        if not res.ok:
            raise RepairError(res.message + "; the requirement is always repairable, so try a "
                              "smaller epsilon or a tighter truncation error")
        factors = res.factors

    after = ev(factors)
    return RepairOutcome(
        RepairStatus.REPAIRED, factors,
        reduced.t_i if factors.i < 1.0 else frozenset(), frozenset(),
        reduced.t_k if factors.k < 1.0 else frozenset(),
        before, after, iterations, part, scope, "Repaired")


def algorithm2(smc: Smc, req: UntilRequirement, cfg: BsmConfig = BsmConfig(),
               delta: float = DEFAULT_DELTA, strict: bool = False, backend=None,
               max_passes: int | None = None) -> RepairOutcome:
    """Repair a ``P>=b`` requirement by lowering factor ``j``, or report failure."""
    if req.comparison is not Comparison.GEQ:
        raise ValueError("algorithm2 handles P>=b requirements only")
    cls = classify(smc, req, strict, backend)
    part = cls.partition
    gbw = sorted(part.states(StateClass.GO_BOTH_WAYS))
    scope = frozenset(gbw)
    before = timed_until_prob(smc, cls.phi, cls.psi, req.time_bound, delta, backend=backend)
    if not scope:
        return _base_outcome(RepairStatus.NOTHING_TO_REPAIR, cls, before, before, scope,
                             "No states whose probabilities can be modified")
    if all(before[s] >= req.bound for s in scope):
        return _base_outcome(RepairStatus.NO_REDUCTION_NEEDED, cls, before, before, scope,
                             "No need for rate reduction")

    reduced = build_reduced(smc, part)
    ev = _Evaluator(reduced, cls, req, delta, backend)
    cap = smc.num_states if max_passes is None else max_passes
    res = _run_phase(ev, Factors(), "j", gbw, cfg, cap, retry_tightened=False)
    after = ev(res.factors)
    t_j = reduced.t_j if res.factors.j < 1.0 else frozenset()
    if res.ok:
        return RepairOutcome(RepairStatus.REPAIRED, res.factors, frozenset(), t_j, frozenset(),
                             before, after, {"j": res.passes}, part, scope, "Repaired")
    limit = {}
    if res.trace:
        smallest = min(x for x, _ in res.trace)
        probs = ev(res.factors.replace(j=smallest))
        limit = {s: float(probs[s]) for s in gbw}
    return RepairOutcome(RepairStatus.FAILED, res.factors, frozenset(), t_j, frozenset(),
                         before, after, {"j": res.passes}, part, scope, res.message, limit)


def repair(smc: Smc, req: UntilRequirement, cfg: BsmConfig = BsmConfig(), **kw) -> RepairOutcome:
    """Dispatch on the comparison operator of ``req``."""
    if req.comparison is Comparison.LEQ:
        return algorithm1(smc, req, cfg, **kw)
    return algorithm2(smc, req, cfg, **kw)


SWEEP_SCOPE = {
    "i": (StateClass.GO_TO_TARGET,),
    "j": (StateClass.GO_BOTH_WAYS,),
    "k": (StateClass.GO_BOTH_WAYS,),
}


def sweep(smc: Smc, req: UntilRequirement, factor: str, grid: Sequence[float],
          fixed: Factors = Factors(), delta: float = DEFAULT_DELTA, strict: bool = False,
          backend=None) -> list[tuple[float, int, float]]:
    """Probability of each tracked state at every grid value of one factor.

    Rows are ``(value, state, probability)`` ordered by grid point then state.
    """
    if factor not in SWEEP_SCOPE:
        raise ValueError(f"factor must be one of i, j, k; got {factor!r}")
    cls = classify(smc, req, strict, backend)
    tracked = sorted(cls.partition.states(*SWEEP_SCOPE[factor]))
    reduced = build_reduced(smc, cls.partition)
    ev = _Evaluator(reduced, cls, req, delta, backend)
    rows = []
    for x in grid:
        probs = ev(fixed.replace(**{factor: float(x)}))
        rows.extend((float(x), s, float(probs[s])) for s in tracked)
    return rows
