"""Shared syntax: variables, skeletons, dirts, types, constraints, schemes.

The core-language type grammar is shared by the whole pipeline: the source
language uses its monotype fragment, inference decorates its type variables
with skeletons, and the backends consume it wholesale.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Union


# ---------------------------------------------------------------------------
# Errors


@dataclass(frozen=True)
class Span:
    line: int
    col: int

    def __str__(self) -> str:
        return f"{self.line}:{self.col}"


class EffError(Exception):
    """Base class for every diagnostic the pipeline can report."""

    def __init__(self, msg: str, span: Optional[Span] = None):
        self.msg = msg
        self.span = span
        super().__init__(msg if span is None else f"{span}: {msg}")


class LexError(EffError):
    pass


class ParseError(EffError):
    pass


class WfError(EffError):
    """Ill-formed type, dirt, skeleton or constraint."""


class UnknownOperation(WfError):
    pass


class UnboundVariable(EffError):
    pass


class TypecheckError(EffError):
    pass


class SolveError(EffError):
    """Constraint solving failed; carries the offending constraint."""

    def __init__(self, msg: str, constraint=None, span: Optional[Span] = None):
        self.constraint = constraint
        super().__init__(msg, span)


class OccursCheck(SolveError):
    pass


class SkeletonClash(SolveError):
    pass


class DirtClash(SolveError):
    pass


class FuelExhausted(EffError):
    pass


class StuckTerm(EffError):
    def __init__(self, msg: str, term=None):
        self.term = term
        super().__init__(msg)


class ElaborationError(EffError):
    """ExEff-to-pure-backend elaboration hit a term outside its domain."""


class DomainTooLarge(EffError):
    pass


# ---------------------------------------------------------------------------
# Variables and fresh-name supply


@dataclass(frozen=True)
class SkelVar:
    id: int


@dataclass(frozen=True)
class TyVar:
    id: int


@dataclass(frozen=True)
class DirtVar:
    id: int


@dataclass(frozen=True)
class CoVar:
    id: int


@dataclass(frozen=True)
class TermVar:
    id: int
    name: str = field(compare=False, default="x")


class Supply:
    """Monotone per-sort counters; never reissues an id within a session."""

    def __init__(self) -> None:
        self._next = {"skel": 0, "ty": 0, "dirt": 0, "co": 0, "term": 0}

    def _take(self, sort: str) -> int:
        n = self._next[sort]
        self._next[sort] = n + 1
        return n

    def skel(self) -> SkelVar:
        return SkelVar(self._take("skel"))

    def ty(self) -> TyVar:
        return TyVar(self._take("ty"))

    def dirt(self) -> DirtVar:
        return DirtVar(self._take("dirt"))

    def co(self) -> CoVar:
        return CoVar(self._take("co"))

    def term(self, name: str = "x") -> TermVar:
        return TermVar(self._take("term"), name)

    def reserve_terms(self, above: int) -> None:
        """Never issue term ids at or below `above` (for merging id spaces)."""
        self._next["term"] = max(self._next["term"], above + 1)


# ---------------------------------------------------------------------------
# Base types and skeletons


class Base(Enum):
    UNIT = "Unit"
    INT = "Int"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class SkelBase:
    base: Base


@dataclass(frozen=True)
class SkelArrow:
    dom: "Skeleton"
    cod: "Skeleton"


@dataclass(frozen=True)
class SkelHandler:
    dom: "Skeleton"
    cod: "Skeleton"


@dataclass(frozen=True)
class SkelForall:
    var: SkelVar
    body: "Skeleton"


Skeleton = Union[SkelVar, SkelBase, SkelArrow, SkelHandler, SkelForall]

SKEL_UNIT = SkelBase(Base.UNIT)
SKEL_INT = SkelBase(Base.INT)


# ---------------------------------------------------------------------------
# Dirts

# A dirt is a finite set of operation names plus an optional variable tail.
# The representation is canonical (a set, not a cons list), so the intended
# set semantics hold by construction.


@dataclass(frozen=True)
class Dirt:
    ops: frozenset = frozenset()
    tail: Optional[DirtVar] = None

    def is_empty(self) -> bool:
        return not self.ops and self.tail is None

    def is_closed(self) -> bool:
        return self.tail is None

    def sorted_ops(self) -> list:
        return sorted(self.ops)


EMPTY_DIRT = Dirt()


def dirt(ops: Iterable[str] = (), tail: Optional[DirtVar] = None) -> Dirt:
    return Dirt(frozenset(ops), tail)


def dirt_var(v: DirtVar) -> Dirt:
    return Dirt(frozenset(), v)


def dirt_add(ops: Iterable[str], d: Dirt) -> Dirt:
    return Dirt(d.ops | frozenset(ops), d.tail)


# ---------------------------------------------------------------------------
# Value and computation types (shared by ImpEff and ExEff)


@dataclass(frozen=True)
class TBase:
    base: Base


@dataclass(frozen=True)
class TArrow:
    dom: "ValueType"
    cod: "CompType"


@dataclass(frozen=True)
class THandler:
    dom: "CompType"
    cod: "CompType"


@dataclass(frozen=True)
class TForallSkel:
    var: SkelVar
    body: "ValueType"


@dataclass(frozen=True)
class TForallTy:
    var: TyVar
    skel: Skeleton
    body: "ValueType"


@dataclass(frozen=True)
class TForallDirt:
    var: DirtVar
    body: "ValueType"


@dataclass(frozen=True)
class TQual:
    constraint: "SimpleConstraint"
    body: "ValueType"


@dataclass(frozen=True)
class CompType:
    val: "ValueType"
    dirt: Dirt


ValueType = Union[TyVar, TBase, TArrow, THandler, TForallSkel, TForallTy, TForallDirt, TQual]

T_UNIT = TBase(Base.UNIT)
T_INT = TBase(Base.INT)


def pure(t: ValueType) -> CompType:
    return CompType(t, EMPTY_DIRT)


# ---------------------------------------------------------------------------
# Subtyping constraints


@dataclass(frozen=True)
class TySub:
    lhs: ValueType
    rhs: ValueType


@dataclass(frozen=True)
class DirtSub:
    lhs: Dirt
    rhs: Dirt


@dataclass(frozen=True)
class CompSub:
    lhs: CompType
    rhs: CompType


SimpleConstraint = Union[TySub, DirtSub]
ConstraintType = Union[TySub, DirtSub, CompSub]


# ---------------------------------------------------------------------------
# Polytypes (type schemes) for the implicitly-typed language


@dataclass(frozen=True)
class Scheme:
    skel_vars: tuple = ()
    ty_vars: tuple = ()  # of (TyVar, Skeleton)
    dirt_vars: tuple = ()
    qualifiers: tuple = ()  # of (CoVar, SimpleConstraint)
    body: ValueType = T_UNIT

    def is_mono(self) -> bool:
        return not (self.skel_vars or self.ty_vars or self.dirt_vars or self.qualifiers)


def monoscheme(t: ValueType) -> Scheme:
    return Scheme(body=t)


def scheme_type(s: Scheme) -> ValueType:
    """The scheme viewed as a single (rank-1) core-language value type."""
    t = s.body
    for _, ct in reversed(s.qualifiers):
        t = TQual(ct, t)
    for dv in reversed(s.dirt_vars):
        t = TForallDirt(dv, t)
    for tv, sk in reversed(s.ty_vars):
        t = TForallTy(tv, sk, t)
    for sv in reversed(s.skel_vars):
        t = TForallSkel(sv, t)
    return t


# ---------------------------------------------------------------------------
# Operation signature


@dataclass(frozen=True)
class OpSig:
    param: ValueType
    result: ValueType


class Signature:
    """Global operation signature: operation name -> parameter/result types."""

    def __init__(self, ops: Optional[dict] = None):
        self.ops: dict = dict(ops or {})

    def declare(self, name: str, param: ValueType, result: ValueType, span: Optional[Span] = None) -> None:
        if name in self.ops:
            raise ParseError(f"duplicate operation declaration: {name}", span)
        self.ops[name] = OpSig(param, result)

    def lookup(self, name: str, span: Optional[Span] = None) -> OpSig:
        try:
            return self.ops[name]
        except KeyError:
            raise UnknownOperation(f"unknown operation: {name}", span) from None

    def __contains__(self, name: str) -> bool:
        return name in self.ops

    def names(self) -> list:
        return sorted(self.ops)


# ---------------------------------------------------------------------------
# Free variables


def free_skel_vars_skel(s: Skeleton) -> set:
    if isinstance(s, SkelVar):
        return {s}
    if isinstance(s, SkelBase):
        return set()
    if isinstance(s, (SkelArrow, SkelHandler)):
        return free_skel_vars_skel(s.dom) | free_skel_vars_skel(s.cod)
    if isinstance(s, SkelForall):
        return free_skel_vars_skel(s.body) - {s.var}
    raise TypeError(s)


def _fv(t, sort: str) -> set:
    """Free variables of the given sort in a type/dirt/constraint."""
    if isinstance(t, TyVar):
        return {t} if sort == "ty" else set()
    if isinstance(t, (TBase, SkelBase)):
        return set()
    if isinstance(t, SkelVar):
        return {t} if sort == "skel" else set()
    if isinstance(t, (SkelArrow, SkelHandler)):
        return _fv(t.dom, sort) | _fv(t.cod, sort)
    if isinstance(t, SkelForall):
        out = _fv(t.body, sort)
        return out - {t.var} if sort == "skel" else out
    if isinstance(t, Dirt):
        return {t.tail} if sort == "dirt" and t.tail is not None else set()
    if isinstance(t, TArrow):
        return _fv(t.dom, sort) | _fv(t.cod, sort)
    if isinstance(t, THandler):
        return _fv(t.dom, sort) | _fv(t.cod, sort)
    if isinstance(t, CompType):
        return _fv(t.val, sort) | _fv(t.dirt, sort)
    if isinstance(t, TForallSkel):
        out = _fv(t.body, sort)
        return out - {t.var} if sort == "skel" else out
    if isinstance(t, TForallTy):
        out = _fv(t.body, sort) | _fv(t.skel, sort)
        return out - {t.var} if sort == "ty" else out
    if isinstance(t, TForallDirt):
        out = _fv(t.body, sort)
        return out - {t.var} if sort == "dirt" else out
    if isinstance(t, TQual):
        return _fv(t.constraint, sort) | _fv(t.body, sort)
    if isinstance(t, (TySub, DirtSub, CompSub)):
        return _fv(t.lhs, sort) | _fv(t.rhs, sort)
    if isinstance(t, Scheme):
        out = _fv(t.body, sort)
        for _, ct in t.qualifiers:
            out |= _fv(ct, sort)
        for _, sk in t.ty_vars:
            out |= _fv(sk, sort)
        if sort == "skel":
            out -= set(t.skel_vars)
        elif sort == "ty":
            out -= {tv for tv, _ in t.ty_vars}
        elif sort == "dirt":
            out -= set(t.dirt_vars)
        return out
    raise TypeError(f"free variables: unhandled {t!r}")


def free_ty_vars(t) -> set:
    return _fv(t, "ty")


def free_dirt_vars(t) -> set:
    return _fv(t, "dirt")


def free_skel_vars(t) -> set:
    return _fv(t, "skel")


# ---------------------------------------------------------------------------
# Alpha equality of types

# Binders carry globally unique ids; alpha equality compares structurally
# while treating paired binders as equal.


class _AlphaEnv:
    def __init__(self) -> None:
        self.pairs: dict = {}

    def bind(self, a, b) -> "_AlphaEnv":
        out = _AlphaEnv()
        out.pairs = dict(self.pairs)
        out.pairs[("bind", type(a).__name__, a.id)] = b.id
        return out

    def same(self, a, b) -> bool:
        key = ("bind", type(a).__name__, a.id)
        if key in self.pairs:
            return self.pairs[key] == b.id
        return a.id == b.id


def alpha_eq_skel(s1: Skeleton, s2: Skeleton, env: Optional[_AlphaEnv] = None) -> bool:
    env = env or _AlphaEnv()
    if isinstance(s1, SkelVar) and isinstance(s2, SkelVar):
        return env.same(s1, s2)
    if isinstance(s1, SkelBase) and isinstance(s2, SkelBase):
        return s1.base == s2.base
    if type(s1) is not type(s2):
        return False
    if isinstance(s1, (SkelArrow, SkelHandler)):
        return alpha_eq_skel(s1.dom, s2.dom, env) and alpha_eq_skel(s1.cod, s2.cod, env)
    if isinstance(s1, SkelForall):
        return alpha_eq_skel(s1.body, s2.body, env.bind(s1.var, s2.var))
    return False


def alpha_eq_dirt(d1: Dirt, d2: Dirt, env: Optional[_AlphaEnv] = None) -> bool:
    env = env or _AlphaEnv()
    if d1.ops != d2.ops:
        return False
    if (d1.tail is None) != (d2.tail is None):
        return False
    return d1.tail is None or env.same(d1.tail, d2.tail)


def alpha_eq_vty(t1: ValueType, t2: ValueType, env: Optional[_AlphaEnv] = None) -> bool:
    env = env or _AlphaEnv()
    if isinstance(t1, TyVar) and isinstance(t2, TyVar):
        return env.same(t1, t2)
    if type(t1) is not type(t2):
        return False
    if isinstance(t1, TBase):
        return t1.base == t2.base
    if isinstance(t1, TArrow):
        return alpha_eq_vty(t1.dom, t2.dom, env) and alpha_eq_cty(t1.cod, t2.cod, env)
    if isinstance(t1, THandler):
        return alpha_eq_cty(t1.dom, t2.dom, env) and alpha_eq_cty(t1.cod, t2.cod, env)
    if isinstance(t1, TForallSkel):
        return alpha_eq_vty(t1.body, t2.body, env.bind(t1.var, t2.var))
    if isinstance(t1, TForallTy):
        if not alpha_eq_skel(t1.skel, t2.skel, env):
            return False
        return alpha_eq_vty(t1.body, t2.body, env.bind(t1.var, t2.var))
    if isinstance(t1, TForallDirt):
        return alpha_eq_vty(t1.body, t2.body, env.bind(t1.var, t2.var))
    if isinstance(t1, TQual):
        return alpha_eq_constraint(t1.constraint, t2.constraint, env) and alpha_eq_vty(t1.body, t2.body, env)
    return False


def alpha_eq_cty(c1: CompType, c2: CompType, env: Optional[_AlphaEnv] = None) -> bool:
    env = env or _AlphaEnv()
    return alpha_eq_vty(c1.val, c2.val, env) and alpha_eq_dirt(c1.dirt, c2.dirt, env)


def alpha_eq_constraint(p1, p2, env: Optional[_AlphaEnv] = None) -> bool:
    env = env or _AlphaEnv()
    if isinstance(p1, TySub) and isinstance(p2, TySub):
        return alpha_eq_vty(p1.lhs, p2.lhs, env) and alpha_eq_vty(p1.rhs, p2.rhs, env)
    if isinstance(p1, DirtSub) and isinstance(p2, DirtSub):
        return alpha_eq_dirt(p1.lhs, p2.lhs, env) and alpha_eq_dirt(p1.rhs, p2.rhs, env)
    if isinstance(p1, CompSub) and isinstance(p2, CompSub):
        return alpha_eq_cty(p1.lhs, p2.lhs, env) and alpha_eq_cty(p1.rhs, p2.rhs, env)
    return False


def alpha_eq_scheme(s1: Scheme, s2: Scheme) -> bool:
    return alpha_eq_vty(scheme_type(s1), scheme_type(s2))
