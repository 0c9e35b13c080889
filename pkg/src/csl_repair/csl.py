"""CSL subset: propositional state formulas under one time-bounded Until.

Surface syntax::

    P<=0.2 [ "up" U<=5 "repair" ]
    P>=0.95 [ (up | idle) & !broken U<=2.5 done ]

Atoms are bare identifiers or double-quoted names.  ``&`` is rewritten to
``!``/``|`` at parse time, so the AST only has :class:`Atom`, :class:`Not`
and :class:`Or`.  ``<`` and ``<=`` (and ``>``/``>=``) mean the same thing.
"""

from __future__ import annotations

import enum
import math
import re
import warnings
from dataclasses import dataclass
from typing import Union

import numpy as np

from .analysis import DEFAULT_DELTA, timed_until_prob
from .smc import Smc, as_set


class CslError(ValueError):
    pass


class CslSyntaxError(CslError):
    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__(f"{message} at byte {offset}")


class CslSemanticError(CslError):
    pass


class UnknownAtomError(CslError):
    pass


class UnknownAtomWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Atom:
    name: str


@dataclass(frozen=True)
class Not:
    arg: "PropFormula"


@dataclass(frozen=True)
class Or:
    left: "PropFormula"
    right: "PropFormula"


PropFormula = Union[Atom, Not, Or]


def And(a: PropFormula, b: PropFormula) -> PropFormula:
    return Not(Or(Not(a), Not(b)))


class Comparison(enum.Enum):
    LEQ = "<="
    GEQ = ">="

    def holds(self, prob, bound):
        return prob <= bound if self is Comparison.LEQ else prob >= bound


@dataclass(frozen=True)
class UntilRequirement:
    comparison: Comparison
    bound: float
    phi: PropFormula
    psi: PropFormula
    time_bound: float

    def __post_init__(self):
        if not (0.0 < self.bound < 1.0):
            raise CslSemanticError(f"bound must be in (0,1), got {self.bound!r}")
        if not (self.time_bound > 0.0) or math.isinf(self.time_bound):
            raise CslSemanticError(f"time bound must be finite and > 0, got {self.time_bound!r}")

    def __str__(self) -> str:
        return format_requirement(self)


# ---------------------------------------------------------------------------
# lexer / parser
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<cmp><=|>=|<|>)
  | (?P<quoted>"[^"]*")
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>[\[\]()!|&])
""", re.VERBOSE)


@dataclass
class _Tok:
    kind: str
    text: str
    offset: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise CslSyntaxError(f"unexpected character {text[pos]!r}", _byte_offset(text, pos))
        kind = m.lastgroup
        if kind != "ws":
            toks.append(_Tok(kind, m.group(), _byte_offset(text, pos)))
        pos = m.end()
    toks.append(_Tok("eof", "", _byte_offset(text, len(text))))
    return toks


def _byte_offset(text: str, pos: int) -> int:
    return len(text[:pos].encode("utf-8"))


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.pos = 0

    @property
    def cur(self) -> _Tok:
        return self.toks[self.pos]

    def advance(self) -> _Tok:
        tok = self.toks[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind, text=None) -> _Tok:
        tok = self.cur
        if tok.kind != kind or (text is not None and tok.text != text):
            want = repr(text) if text is not None else kind
            got = repr(tok.text) if tok.kind != "eof" else "end of input"
            raise CslSyntaxError(f"expected {want}, got {got}", tok.offset)
        return self.advance()

    def is_keyword(self, word) -> bool:
        return self.cur.kind == "ident" and self.cur.text == word

    def number(self) -> float:
        return float(self.expect("num").text)

    def requirement(self) -> UntilRequirement:
        self.expect("ident", "P")
        cmp_tok = self.expect("cmp")
        comparison = Comparison.LEQ if cmp_tok.text.startswith("<") else Comparison.GEQ
        bound = self.number()
        self.expect("punct", "[")
        phi = self.prop()
        until = self.cur
        if not self.is_keyword("U"):
            raise CslSyntaxError("expected 'U'", until.offset)
        self.advance()
        if self.cur.kind != "cmp" or not self.cur.text.startswith("<"):
            raise CslSemanticError("only upper time-bounded Until (U<=t) is supported")
        self.advance()
        t = self.number()
        psi = self.prop()
        if self.is_keyword("U"):
            raise CslSemanticError("multiple Until operators are not supported")
        self.expect("punct", "]")
        if self.cur.kind != "eof":
            if self.is_keyword("P") or self.cur.text in ("&", "|"):
                raise CslSemanticError("only a single probability operator is supported")
            self.expect("eof")
        return UntilRequirement(comparison, bound, phi, psi, t)

    def prop(self) -> PropFormula:
        f = self.conj()
        while self.cur.text == "|" and self.cur.kind == "punct":
            self.advance()
            f = Or(f, self.conj())
        return f

    def conj(self) -> PropFormula:
        f = self.unary()
        while self.cur.text == "&" and self.cur.kind == "punct":
            self.advance()
            f = And(f, self.unary())
        return f

    def unary(self) -> PropFormula:
        tok = self.cur
        if tok.kind == "punct" and tok.text == "!":
            self.advance()
            return Not(self.unary())
        if tok.kind == "punct" and tok.text == "(":
            self.advance()
            f = self.prop()
            self.expect("punct", ")")
            return f
        if tok.kind == "quoted":
            self.advance()
            return Atom(tok.text[1:-1])
        if tok.kind == "ident":
            if tok.text == "P":
                raise CslSemanticError("nested probability operators are not supported")
            if tok.text == "U":
                raise CslSemanticError("nested Until operators are not supported")
            self.advance()
            return Atom(tok.text)
        got = repr(tok.text) if tok.kind != "eof" else "end of input"
        raise CslSyntaxError(f"expected a proposition, got {got}", tok.offset)


def parse(text: str) -> UntilRequirement:
    """Parse ``P~b [ phi U<=t psi ]`` into an :class:`UntilRequirement`."""
    return _Parser(text).requirement()


def parse_prop(text: str) -> PropFormula:
    p = _Parser(text)
    f = p.prop()
    p.expect("eof")
    return f


def format_prop(f: PropFormula) -> str:
    if isinstance(f, Atom):
        return f'"{f.name}"'
    if isinstance(f, Not):
        return "!" + format_prop(f.arg)
    return f"({format_prop(f.left)} | {format_prop(f.right)})"


def format_requirement(req: UntilRequirement) -> str:
    return (f"P{req.comparison.value}{req.bound!r} "
            f"[ {format_prop(req.phi)} U<={req.time_bound!r} {format_prop(req.psi)} ]")


# ---------------------------------------------------------------------------
# semantics
# ---------------------------------------------------------------------------

def atoms_of(f: PropFormula) -> frozenset[str]:
    if isinstance(f, Atom):
        return frozenset([f.name])
    if isinstance(f, Not):
        return atoms_of(f.arg)
    return atoms_of(f.left) | atoms_of(f.right)


def prop_mask(smc: Smc, f: PropFormula, strict: bool = False) -> np.ndarray:
    unknown = atoms_of(f) - smc.atoms()
    if unknown:
        msg = "unknown atomic proposition(s): " + ", ".join(sorted(unknown))
        if strict:
            raise UnknownAtomError(msg)
        warnings.warn(msg + " (false everywhere)", UnknownAtomWarning, stacklevel=3)
    return _mask(smc, f)


def _mask(smc: Smc, f: PropFormula) -> np.ndarray:
    if isinstance(f, Atom):
        return np.array([f.name in lab for lab in smc.labels], dtype=bool)
    if isinstance(f, Not):
        return ~_mask(smc, f.arg)
    return _mask(smc, f.left) | _mask(smc, f.right)


def eval_prop(smc: Smc, f: PropFormula, strict: bool = False) -> frozenset[int]:
    """The set of states whose labels satisfy ``f``."""
    return as_set(prop_mask(smc, f, strict))


@dataclass(frozen=True)
class StateCheck:
    prob: float
    sat: bool


@dataclass(frozen=True, eq=False)
class CheckResult:
    prob: np.ndarray
    sat: np.ndarray

    def __getitem__(self, s: int) -> StateCheck:
        return StateCheck(float(self.prob[s]), bool(self.sat[s]))

    def __len__(self) -> int:
        return len(self.prob)

    @property
    def all_sat(self) -> bool:
        return bool(self.sat.all())


def check(smc: Smc, req: UntilRequirement, delta: float = DEFAULT_DELTA,
          strict: bool = False, backend=None) -> CheckResult:
    """Model-check ``req`` in every state of ``smc``."""
    phi = prop_mask(smc, req.phi, strict)
    psi = prop_mask(smc, req.psi, strict)
    prob = timed_until_prob(smc, phi, psi, req.time_bound, delta, backend=backend)
    return CheckResult(prob, req.comparison.holds(prob, req.bound))
