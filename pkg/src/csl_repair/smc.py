"""State-labelled CTMC data model, model files, partitioning and reduced models."""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

ATOM_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")

Edge = tuple[int, int]


class InvalidModelError(ValueError):
    """Raised when an operation needs a well-formed model and gets a broken one."""


class ModelFormatError(ValueError):
    """Syntax error in a model file; carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True, eq=False)
class Smc:
    """A state-labelled continuous-time Markov chain.

    ``src``, ``dst`` and ``rate`` are parallel arrays, one entry per
    transition.  Missing entries have rate zero.  Labels are one frozenset of
    atomic propositions per state.
    """

    num_states: int
    src: np.ndarray
    dst: np.ndarray
    rate: np.ndarray
    labels: tuple[frozenset[str], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "src", np.asarray(self.src, dtype=np.int64).reshape(-1))
        object.__setattr__(self, "dst", np.asarray(self.dst, dtype=np.int64).reshape(-1))
        object.__setattr__(self, "rate", np.asarray(self.rate, dtype=np.float64).reshape(-1))
        labels = tuple(frozenset(lab) for lab in self.labels)
        if len(labels) < self.num_states:
            labels = labels + (frozenset(),) * (self.num_states - len(labels))
        object.__setattr__(self, "labels", labels)
        for arr in (self.src, self.dst, self.rate):
            arr.flags.writeable = False

    @classmethod
    def from_edges(cls, num_states: int, edges: Iterable[tuple[int, int, float]],
                   labels: Mapping[int, Iterable[str]] | Iterable[Iterable[str]] = ()) -> "Smc":
        edges = list(edges)
        src = [e[0] for e in edges]
        dst = [e[1] for e in edges]
        rate = [e[2] for e in edges]
        if isinstance(labels, Mapping):
            labs = [frozenset(labels.get(s, ())) for s in range(num_states)]
        else:
            labs = [frozenset(lab) for lab in labels]
        return cls(num_states, src, dst, rate, tuple(labs))

    @property
    def num_transitions(self) -> int:
        return int(self.src.shape[0])

    def edges(self) -> list[tuple[int, int, float]]:
        return [(int(s), int(d), float(r)) for s, d, r in zip(self.src, self.dst, self.rate)]

    def rate_of(self, s: int, d: int) -> float:
        hit = np.flatnonzero((self.src == s) & (self.dst == d))
        return float(self.rate[hit[0]]) if hit.size else 0.0

    def atoms(self) -> frozenset[str]:
        return frozenset().union(*self.labels) if self.labels else frozenset()

    def csr(self, drop_self_loops: bool = True):
        """Rates as a CSR triple ``(indptr, indices, data)`` sorted by (src, dst)."""
        keep = self.rate > 0
        if drop_self_loops:
            keep &= self.src != self.dst
        src, dst, rate = self.src[keep], self.dst[keep], self.rate[keep]
        order = np.lexsort((dst, src))
        src, dst, rate = src[order], dst[order], rate[order]
        indptr = np.zeros(self.num_states + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=self.num_states), out=indptr[1:])
        return indptr, dst.copy(), rate.copy()

    def exit_rates(self) -> np.ndarray:
        """Total outgoing rate per state, self-loops excluded."""
        keep = self.src != self.dst
        return np.bincount(self.src[keep], weights=self.rate[keep], minlength=self.num_states)

    def successors(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(self.num_states)]
        for s, d in zip(self.src.tolist(), self.dst.tolist()):
            if s != d:
                out[s].append(d)
        return out

    def predecessors(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(self.num_states)]
        for s, d in zip(self.src.tolist(), self.dst.tolist()):
            if s != d:
                out[d].append(s)
        return out


@dataclass(frozen=True)
class ValidationReport:
    errors: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.errors

    def __bool__(self) -> bool:
        return self.ok


def validate(smc: Smc) -> ValidationReport:
    """Check the structural invariants of ``smc`` and list every violation."""
    errors = []
    if smc.num_states < 1:
        errors.append("num_states must be positive")
    if not (smc.src.shape == smc.dst.shape == smc.rate.shape):
        errors.append("transition arrays differ in length")
        return ValidationReport(tuple(errors))
    seen: dict[Edge, int] = {}
    for n, (s, d, r) in enumerate(zip(smc.src.tolist(), smc.dst.tolist(), smc.rate.tolist())):
        if not (0 <= s < smc.num_states and 0 <= d < smc.num_states):
            errors.append(f"transition {n} ({s}->{d}): index out of range")
        if not (r > 0) or math.isinf(r):
            errors.append(f"transition {n} ({s}->{d}): non-positive rate {r!r}"
                          if not r > 0 else f"transition {n} ({s}->{d}): rate is not finite")
        if (s, d) in seen:
            errors.append(f"transition {n} ({s}->{d}): duplicate edge (first at {seen[(s, d)]})")
        else:
            seen[(s, d)] = n
    if len(smc.labels) != smc.num_states:
        errors.append(f"expected {smc.num_states} label sets, got {len(smc.labels)}")
    for s, lab in enumerate(smc.labels):
        for prop in lab:
            if not ATOM_RE.match(prop):
                errors.append(f"state {s}: bad proposition name {prop!r}")
    return ValidationReport(tuple(errors))


def require_valid(smc: Smc) -> None:
    report = validate(smc)
    if not report.ok:
        raise InvalidModelError("; ".join(report.errors))


def as_mask(states, n: int) -> np.ndarray:
    """Normalise a state set (iterable of indices or boolean mask) to a mask."""
    if isinstance(states, np.ndarray) and states.dtype == bool:
        if states.shape != (n,):
            raise ValueError(f"state mask has shape {states.shape}, expected ({n},)")
        return states.copy()
    mask = np.zeros(n, dtype=bool)
    idx = np.fromiter((int(s) for s in states), dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise ValueError("state index out of range")
    mask[idx] = True
    return mask


def as_set(mask: np.ndarray) -> frozenset[int]:
    return frozenset(np.flatnonzero(mask).tolist())


# ---------------------------------------------------------------------------
# model files
# ---------------------------------------------------------------------------

def parse_model(text: str, merge_duplicates: bool = False) -> Smc:
    """Parse the explicit-state model format.

    ::

        states 3
        0 1 2.5
        1 2 0.5
        labels
        0: up
        2: repair

    Blank lines and ``#`` comments are ignored.  Duplicate ``(src, dst)``
    lines are an error unless ``merge_duplicates`` is set, in which case the
    rates are summed.
    """
    num_states = None
    rates: dict[Edge, float] = {}
    labels: dict[int, set[str]] = {}
    section = "header"
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if section == "header":
            parts = line.split()
            if len(parts) != 2 or parts[0] != "states":
                raise ModelFormatError("expected 'states <N>'", lineno)
            num_states = _parse_int(parts[1], lineno)
            if num_states < 1:
                raise ModelFormatError("number of states must be positive", lineno)
            section = "transitions"
        elif section == "transitions":
            if line == "labels":
                section = "labels"
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ModelFormatError("expected '<src> <dst> <rate>'", lineno)
            s, d = _parse_state(parts[0], num_states, lineno), _parse_state(parts[1], num_states, lineno)
            try:
                r = float(parts[2])
            except ValueError:
                raise ModelFormatError(f"bad rate {parts[2]!r}", lineno) from None
            if not (r > 0) or math.isinf(r):
                raise ModelFormatError(f"rate must be a finite positive number, got {parts[2]}", lineno)
            if (s, d) in rates:
                if not merge_duplicates:
                    raise ModelFormatError(f"duplicate transition {s} -> {d}", lineno)
                rates[(s, d)] += r
            else:
                rates[(s, d)] = r
        else:
            head, sep, rest = line.partition(":")
            if not sep:
                raise ModelFormatError("expected '<state>: <prop> ...'", lineno)
            s = _parse_state(head.strip(), num_states, lineno)
            for prop in rest.split():
                if not ATOM_RE.match(prop):
                    raise ModelFormatError(f"bad proposition name {prop!r}", lineno)
                labels.setdefault(s, set()).add(prop)
    if num_states is None:
        raise ModelFormatError("empty model file")
    if section != "labels":
        raise ModelFormatError("missing 'labels' section")
    return Smc.from_edges(num_states, ((s, d, r) for (s, d), r in rates.items()), labels)


def _parse_int(tok: str, lineno: int) -> int:
    try:
        return int(tok)
    except ValueError:
        raise ModelFormatError(f"expected an integer, got {tok!r}", lineno) from None


def _parse_state(tok: str, n: int, lineno: int) -> int:
    s = _parse_int(tok, lineno)
    if not 0 <= s < n:
        raise ModelFormatError(f"state {s} out of range 0..{n - 1}", lineno)
    return s


def read_model(path: str | Path, merge_duplicates: bool = False) -> Smc:
    return parse_model(Path(path).read_text(encoding="utf-8"), merge_duplicates)


def format_model(smc: Smc) -> str:
    lines = [f"states {smc.num_states}"]
    for s, d, r in sorted(smc.edges()):
        lines.append(f"{s} {d} {r!r}")
    lines.append("labels")
    for s, lab in enumerate(smc.labels):
        if lab:
            lines.append(f"{s}: " + " ".join(sorted(lab)))
    return "\n".join(lines) + "\n"


def write_model(smc: Smc, path: str | Path) -> None:
    Path(path).write_text(format_model(smc), encoding="utf-8")


# ---------------------------------------------------------------------------
# partitioning
# ---------------------------------------------------------------------------

class StateClass(enum.Enum):
    INVALID = "invalid"
    TARGET = "target"
    GO_TO_TARGET = "gototarget"
    GO_TO_INVALID = "gotoinvalid"
    GO_BOTH_WAYS = "gobothways"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class Partition:
    class_of: tuple[StateClass, ...]

    def states(self, *classes: StateClass) -> frozenset[int]:
        return frozenset(s for s, c in enumerate(self.class_of) if c in classes)

    def mask(self, *classes: StateClass) -> np.ndarray:
        return np.array([c in classes for c in self.class_of], dtype=bool)

    def counts(self) -> dict[StateClass, int]:
        out = {c: 0 for c in StateClass}
        for c in self.class_of:
            out[c] += 1
        return out

    def __len__(self) -> int:
        return len(self.class_of)


def partition(smc: Smc, phi_states, psi_states, untimed) -> Partition:
    """Split the state space into the five classes.

    ``untimed`` is the result of ``analysis.untimed_until_prob`` for the same
    model and state sets; only its exact qualitative sets are consulted, never
    the floating-point probabilities.
    """
    n = smc.num_states
    if len(untimed.prob) != n:
        raise ValueError(f"untimed result has length {len(untimed.prob)}, model has {n} states")
    phi = as_mask(phi_states, n)
    psi = as_mask(psi_states, n)
    one = as_mask(untimed.exactly_one, n)
    zero = as_mask(untimed.exactly_zero, n)
    classes = []
    for s in range(n):
        if psi[s]:
            classes.append(StateClass.TARGET)
        elif not phi[s]:
            classes.append(StateClass.INVALID)
        elif one[s]:
            classes.append(StateClass.GO_TO_TARGET)
        elif zero[s]:
            classes.append(StateClass.GO_TO_INVALID)
        else:
            classes.append(StateClass.GO_BOTH_WAYS)
    return Partition(tuple(classes))


# ---------------------------------------------------------------------------
# reduced parametric model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Factors:
    i: float = 1.0
    j: float = 1.0
    k: float = 1.0

    def __post_init__(self):
        for name in ("i", "j", "k"):
            v = getattr(self, name)
            if not (0.0 < v <= 1.0):
                raise ValueError(f"factor {name}={v!r} outside (0, 1]")

    def replace(self, **kw) -> "Factors":
        return Factors(**{**self.as_dict(), **kw})

    def as_dict(self) -> dict[str, float]:
        return {"i": self.i, "j": self.j, "k": self.k}


# per-edge placement codes
_PLAIN, _I, _J, _K, _ZERO = 0, 1, 2, 3, 4


@dataclass(frozen=True)
class ReducedSmc:
    base: Smc
    partition: Partition
    t_i: frozenset[Edge] = field(default_factory=frozenset)
    t_j: frozenset[Edge] = field(default_factory=frozenset)
    t_k: frozenset[Edge] = field(default_factory=frozenset)
    zeroed: frozenset[Edge] = field(default_factory=frozenset)

    @cached_property
    def _placement(self) -> np.ndarray:
        code = np.full(self.base.num_transitions, _PLAIN, dtype=np.int8)
        for n, e in enumerate(zip(self.base.src.tolist(), self.base.dst.tolist())):
            if e in self.zeroed:
                code[n] = _ZERO
            elif e in self.t_i:
                code[n] = _I
            elif e in self.t_j:
                code[n] = _J
            elif e in self.t_k:
                code[n] = _K
        return code

    def scaled_rates(self, factors: Factors) -> np.ndarray:
        mult = np.array([1.0, factors.i, factors.j, factors.k, 0.0])
        return self.base.rate * mult[self._placement]


def build_reduced(smc: Smc, part: Partition) -> ReducedSmc:
    """Place the reduction factors on the transitions of ``smc``."""
    if len(part) != smc.num_states:
        raise ValueError("partition does not match the model")
    C = StateClass
    t_i, t_j, t_k, zeroed = set(), set(), set(), set()
    for s, d in zip(smc.src.tolist(), smc.dst.tolist()):
        cs, cd = part.class_of[s], part.class_of[d]
        if cs in (C.TARGET, C.INVALID):
            zeroed.add((s, d))
        elif cs is C.GO_TO_TARGET and cd is C.TARGET:
            t_i.add((s, d))
        elif cs is C.GO_BOTH_WAYS and cd in (C.GO_TO_INVALID, C.INVALID):
            t_j.add((s, d))
        elif cs is C.GO_BOTH_WAYS and cd in (C.GO_TO_TARGET, C.TARGET):
            t_k.add((s, d))
    return ReducedSmc(smc, part, frozenset(t_i), frozenset(t_j), frozenset(t_k), frozenset(zeroed))


def _coerce_factors(factors) -> Factors:
    if isinstance(factors, Factors):
        return factors
    if isinstance(factors, Mapping):
        return Factors(**factors)
    return Factors(*factors)


def instantiate(reduced: ReducedSmc, factors) -> Smc:
    """Concrete model for fixed factors; outgoing edges of target and invalid states vanish."""
    factors = _coerce_factors(factors)
    rates = reduced.scaled_rates(factors)
    keep = reduced._placement != _ZERO
    b = reduced.base
    return Smc(b.num_states, b.src[keep], b.dst[keep], rates[keep], b.labels)


def apply_factors(reduced: ReducedSmc, factors) -> Smc:
    """The repaired plant: factors applied, every other transition kept as is.

    Unlike :func:`instantiate` this leaves the outgoing transitions of target
    and invalid states in place, so the model structure is unchanged.
    """
    factors = _coerce_factors(factors)
    mult = np.array([1.0, factors.i, factors.j, factors.k, 1.0])
    b = reduced.base
    return Smc(b.num_states, b.src, b.dst, b.rate * mult[reduced._placement], b.labels)
