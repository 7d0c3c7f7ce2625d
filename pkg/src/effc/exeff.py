"""The explicitly-typed core calculus.

Terms carry their whole typing derivation: System-F-style binders for
skeletons, types and dirts, plus binders and casts for subtyping coercions.
This module provides the ASTs, well-formedness and type checking, coercion
checking, reflexivity-coercion construction, substitution, the result
grammar, and the small-step operational semantics with its push rules.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Union

from .core import (
    Base,
    CompSub,
    CompType,
    CoVar,
    Dirt,
    DirtSub,
    DirtVar,
    EMPTY_DIRT,
    FuelExhausted,
    Signature,
    SkelArrow,
    SkelBase,
    SkelForall,
    SkelHandler,
    SkelVar,
    Skeleton,
    StuckTerm,
    TArrow,
    TBase,
    TForallDirt,
    TForallSkel,
    TForallTy,
    THandler,
    TQual,
    TermVar,
    TyVar,
    TySub,
    TypecheckError,
    UnboundVariable,
    ValueType,
    WfError,
    alpha_eq_cty,
    alpha_eq_dirt,
    alpha_eq_skel,
    alpha_eq_vty,
    alpha_eq_constraint,
    dirt_add,
)

# ---------------------------------------------------------------------------
# Coercions


@dataclass(frozen=True)
class CoVarRef:
    var: CoVar


@dataclass(frozen=True)
class CoBaseRefl:
    base: Base


@dataclass(frozen=True)
class CoTyRefl:
    var: TyVar


@dataclass(frozen=True)
class CoDirtRefl:
    dirt: Dirt


@dataclass(frozen=True)
class CoArrow:
    dom: "Coercion"
    cod: "Coercion"


@dataclass(frozen=True)
class CoHandler:
    dom: "Coercion"
    cod: "Coercion"


@dataclass(frozen=True)
class CoEmpty:
    dirt: Dirt


@dataclass(frozen=True)
class CoOpUnion:
    op: str
    rest: "Coercion"


@dataclass(frozen=True)
class CoForallSkel:
    var: SkelVar
    body: "Coercion"


@dataclass(frozen=True)
class CoForallTy:
    var: TyVar
    skel: Skeleton
    body: "Coercion"


@dataclass(frozen=True)
class CoForallDirt:
    var: DirtVar
    body: "Coercion"


@dataclass(frozen=True)
class CoQual:
    constraint: Union[TySub, DirtSub]
    body: "Coercion"


@dataclass(frozen=True)
class CoComp:
    val: "Coercion"
    dirt: "Coercion"


Coercion = Union[
    CoVarRef, CoBaseRefl, CoTyRefl, CoDirtRefl, CoArrow, CoHandler,
    CoEmpty, CoOpUnion, CoForallSkel, CoForallTy, CoForallDirt, CoQual, CoComp,
]


# ---------------------------------------------------------------------------
# Terms


@dataclass(frozen=True)
class EVar:
    var: TermVar


@dataclass(frozen=True)
class EUnit:
    pass


@dataclass(frozen=True)
class EInt:
    value: int


@dataclass(frozen=True)
class EAbs:
    var: TermVar
    ty: ValueType
    body: "Comp"


@dataclass(frozen=True)
class OpClause:
    op: str
    param: TermVar
    kont: TermVar
    body: "Comp"


@dataclass(frozen=True)
class EHandler:
    ret_var: TermVar
    ret_ty: ValueType
    ret_body: "Comp"
    clauses: tuple = ()

    def clause_for(self, op: str) -> Optional[OpClause]:
        for cl in self.clauses:
            if cl.op == op:
                return cl
        return None


@dataclass(frozen=True)
class ESkelAbs:
    var: SkelVar
    body: "Value"


@dataclass(frozen=True)
class ESkelApp:
    val: "Value"
    skel: Skeleton


@dataclass(frozen=True)
class ETyAbs:
    var: TyVar
    skel: Skeleton
    body: "Value"


@dataclass(frozen=True)
class ETyApp:
    val: "Value"
    ty: ValueType


@dataclass(frozen=True)
class EDirtAbs:
    var: DirtVar
    body: "Value"


@dataclass(frozen=True)
class EDirtApp:
    val: "Value"
    dirt: Dirt


@dataclass(frozen=True)
class ECoAbs:
    var: CoVar
    constraint: Union[TySub, DirtSub]
    body: "Value"


@dataclass(frozen=True)
class ECoApp:
    val: "Value"
    co: Coercion


@dataclass(frozen=True)
class ECast:
    val: "Value"
    co: Coercion


Value = Union[
    EVar, EUnit, EInt, EAbs, EHandler, ESkelAbs, ESkelApp, ETyAbs, ETyApp,
    EDirtAbs, EDirtApp, ECoAbs, ECoApp, ECast,
]


@dataclass(frozen=True)
class CReturn:
    val: Value


@dataclass(frozen=True)
class COp:
    op: str
    arg: Value
    var: TermVar
    var_ty: ValueType
    body: "Comp"


@dataclass(frozen=True)
class CDo:
    var: TermVar
    first: "Comp"
    second: "Comp"


@dataclass(frozen=True)
class CHandle:
    handler: Value
    body: "Comp"


@dataclass(frozen=True)
class CApp:
    fn: Value
    arg: Value


@dataclass(frozen=True)
class CLet:
    var: TermVar
    val: Value
    body: "Comp"


@dataclass(frozen=True)
class CCast:
    comp: "Comp"
    co: Coercion


Comp = Union[CReturn, COp, CDo, CHandle, CApp, CLet, CCast]


# ---------------------------------------------------------------------------
# Typing environments


class TypeEnv:
    """Binding telescope for all five variable sorts plus the signature."""

    def __init__(self, sig: Signature):
        self.sig = sig
        self.skel_vars: frozenset = frozenset()
        self.ty_vars: dict = {}
        self.dirt_vars: frozenset = frozenset()
        self.term_vars: dict = {}
        self.co_vars: dict = {}

    def _copy(self) -> "TypeEnv":
        out = TypeEnv(self.sig)
        out.skel_vars = self.skel_vars
        out.ty_vars = self.ty_vars
        out.dirt_vars = self.dirt_vars
        out.term_vars = self.term_vars
        out.co_vars = self.co_vars
        return out

    def with_skel(self, v: SkelVar) -> "TypeEnv":
        out = self._copy()
        out.skel_vars = self.skel_vars | {v.id}
        return out

    def with_ty(self, v: TyVar, skel: Skeleton) -> "TypeEnv":
        out = self._copy()
        out.ty_vars = {**self.ty_vars, v.id: skel}
        return out

    def with_dirt(self, v: DirtVar) -> "TypeEnv":
        out = self._copy()
        out.dirt_vars = self.dirt_vars | {v.id}
        return out

    def with_term(self, v: TermVar, t: ValueType) -> "TypeEnv":
        out = self._copy()
        out.term_vars = {**self.term_vars, v.id: t}
        return out

    def with_co(self, v: CoVar, ct: Union[TySub, DirtSub]) -> "TypeEnv":
        out = self._copy()
        out.co_vars = {**self.co_vars, v.id: ct}
        return out


# ---------------------------------------------------------------------------
# Well-formedness


def wf_skeleton(env: TypeEnv, s: Skeleton) -> None:
    if isinstance(s, SkelVar):
        if s.id not in env.skel_vars:
            raise WfError(f"unbound skeleton variable s{s.id}")
    elif isinstance(s, SkelBase):
        pass
    elif isinstance(s, (SkelArrow, SkelHandler)):
        wf_skeleton(env, s.dom)
        wf_skeleton(env, s.cod)
    elif isinstance(s, SkelForall):
        wf_skeleton(env.with_skel(s.var), s.body)
    else:
        raise TypeError(s)


def wf_dirt(env: TypeEnv, d: Dirt) -> None:
    for op in d.sorted_ops():
        env.sig.lookup(op)
    if d.tail is not None and d.tail.id not in env.dirt_vars:
        raise WfError(f"unbound dirt variable d{d.tail.id}")


def wf_vty(env: TypeEnv, t: ValueType) -> Skeleton:
    """Check well-formedness and return the type's skeleton."""
    if isinstance(t, TyVar):
        try:
            return env.ty_vars[t.id]
        except KeyError:
            raise WfError(f"unbound type variable a{t.id}") from None
    if isinstance(t, TBase):
        return SkelBase(t.base)
    if isinstance(t, TArrow):
        return SkelArrow(wf_vty(env, t.dom), wf_cty(env, t.cod))
    if isinstance(t, THandler):
        return SkelHandler(wf_cty(env, t.dom), wf_cty(env, t.cod))
    if isinstance(t, TForallSkel):
        return SkelForall(t.var, wf_vty(env.with_skel(t.var), t.body))
    if isinstance(t, TForallTy):
        wf_skeleton(env, t.skel)
        return wf_vty(env.with_ty(t.var, t.skel), t.body)
    if isinstance(t, TForallDirt):
        return wf_vty(env.with_dirt(t.var), t.body)
    if isinstance(t, TQual):
        wf_constraint(env, t.constraint)
        return wf_vty(env, t.body)
    raise TypeError(t)


def wf_cty(env: TypeEnv, c: CompType) -> Skeleton:
    sk = wf_vty(env, c.val)
    wf_dirt(env, c.dirt)
    return sk


def wf_constraint(env: TypeEnv, ct) -> None:
    if isinstance(ct, TySub):
        s1 = wf_vty(env, ct.lhs)
        s2 = wf_vty(env, ct.rhs)
        if not alpha_eq_skel(s1, s2):
            raise WfError("subtyping constraint relates types with different skeletons")
    elif isinstance(ct, DirtSub):
        wf_dirt(env, ct.lhs)
        wf_dirt(env, ct.rhs)
    elif isinstance(ct, CompSub):
        s1 = wf_cty(env, ct.lhs)
        s2 = wf_cty(env, ct.rhs)
        if not alpha_eq_skel(s1, s2):
            raise WfError("subtyping constraint relates types with different skeletons")
    else:
        raise TypeError(ct)


# ---------------------------------------------------------------------------
# Reflexivity coercions


def refl_of_dirt(d: Dirt) -> Coercion:
    if d.tail is None:
        co: Coercion = CoEmpty(EMPTY_DIRT)
    else:
        co = CoDirtRefl(Dirt(frozenset(), d.tail))
    for op in sorted(d.ops, reverse=True):
        co = CoOpUnion(op, co)
    return co


def refl_of(t) -> Coercion:
    """A coercion witnessing t <= t, built by traversing the structure of t."""
    if isinstance(t, Dirt):
        return refl_of_dirt(t)
    if isinstance(t, CompType):
        return CoComp(refl_of(t.val), refl_of_dirt(t.dirt))
    if isinstance(t, TyVar):
        return CoTyRefl(t)
    if isinstance(t, TBase):
        return CoBaseRefl(t.base)
    if isinstance(t, TArrow):
        return CoArrow(refl_of(t.dom), refl_of(t.cod))
    if isinstance(t, THandler):
        return CoHandler(refl_of(t.dom), refl_of(t.cod))
    if isinstance(t, TForallSkel):
        return CoForallSkel(t.var, refl_of(t.body))
    if isinstance(t, TForallTy):
        return CoForallTy(t.var, t.skel, refl_of(t.body))
    if isinstance(t, TForallDirt):
        return CoForallDirt(t.var, refl_of(t.body))
    if isinstance(t, TQual):
        return CoQual(t.constraint, refl_of(t.body))
    raise TypeError(t)


# ---------------------------------------------------------------------------
# Substitution

# A four-sorted substitution instantiating skeleton, type, dirt and coercion
# variables.  Replacing a type variable under a reflexivity coercion rewrites
# the coercion via refl_of, so coercions stay well-formed.


class Subst:
    def __init__(self, skel=None, ty=None, dirt=None, co=None):
        self.skel: dict = dict(skel or {})
        self.ty: dict = dict(ty or {})
        self.dirt: dict = dict(dirt or {})
        self.co: dict = dict(co or {})

    def is_empty(self) -> bool:
        return not (self.skel or self.ty or self.dirt or self.co)

    def then(self, later: "Subst") -> "Subst":
        """Compose: apply self first, then `later`."""
        out = Subst(
            {k: substitute(later, v) for k, v in self.skel.items()},
            {k: substitute(later, v) for k, v in self.ty.items()},
            {k: substitute(later, v) for k, v in self.dirt.items()},
            {k: substitute(later, v) for k, v in self.co.items()},
        )
        for attr in ("skel", "ty", "dirt", "co"):
            mine = getattr(out, attr)
            for k, v in getattr(later, attr).items():
                if k not in mine:
                    mine[k] = v
        return out

    @staticmethod
    def one_skel(v: SkelVar, s: Skeleton) -> "Subst":
        return Subst(skel={v.id: s})

    @staticmethod
    def one_ty(v: TyVar, t: ValueType) -> "Subst":
        return Subst(ty={v.id: t})

    @staticmethod
    def one_dirt(v: DirtVar, d: Dirt) -> "Subst":
        return Subst(dirt={v.id: d})

    @staticmethod
    def one_co(v: CoVar, c: Coercion) -> "Subst":
        return Subst(co={v.id: c})


def subst_dirt(s: Subst, d: Dirt) -> Dirt:
    if d.tail is not None and d.tail.id in s.dirt:
        repl = s.dirt[d.tail.id]
        return Dirt(d.ops | repl.ops, repl.tail)
    return d


def substitute(s: Subst, subject):
    """Apply a substitution to any core-language entity, capture-avoidingly.

    Binders carry globally unique identities, so no renaming is needed.
    """
    if s.is_empty():
        return subject
    return _subst(s, subject)


def _subst(s: Subst, t):
    # Skeletons
    if isinstance(t, SkelVar):
        return s.skel.get(t.id, t)
    if isinstance(t, SkelBase):
        return t
    if isinstance(t, SkelArrow):
        return SkelArrow(_subst(s, t.dom), _subst(s, t.cod))
    if isinstance(t, SkelHandler):
        return SkelHandler(_subst(s, t.dom), _subst(s, t.cod))
    if isinstance(t, SkelForall):
        return SkelForall(t.var, _subst(s, t.body))
    # Dirts
    if isinstance(t, Dirt):
        return subst_dirt(s, t)
    # Value/computation types
    if isinstance(t, TyVar):
        return s.ty.get(t.id, t)
    if isinstance(t, TBase):
        return t
    if isinstance(t, TArrow):
        return TArrow(_subst(s, t.dom), _subst(s, t.cod))
    if isinstance(t, THandler):
        return THandler(_subst(s, t.dom), _subst(s, t.cod))
    if isinstance(t, CompType):
        return CompType(_subst(s, t.val), subst_dirt(s, t.dirt))
    if isinstance(t, TForallSkel):
        return TForallSkel(t.var, _subst(s, t.body))
    if isinstance(t, TForallTy):
        return TForallTy(t.var, _subst(s, t.skel), _subst(s, t.body))
    if isinstance(t, TForallDirt):
        return TForallDirt(t.var, _subst(s, t.body))
    if isinstance(t, TQual):
        return TQual(_subst(s, t.constraint), _subst(s, t.body))
    # Constraints
    if isinstance(t, TySub):
        return TySub(_subst(s, t.lhs), _subst(s, t.rhs))
    if isinstance(t, DirtSub):
        return DirtSub(subst_dirt(s, t.lhs), subst_dirt(s, t.rhs))
    if isinstance(t, CompSub):
        return CompSub(_subst(s, t.lhs), _subst(s, t.rhs))
    # Coercions
    if isinstance(t, CoVarRef):
        return s.co.get(t.var.id, t)
    if isinstance(t, CoBaseRefl):
        return t
    if isinstance(t, CoTyRefl):
        if t.var.id in s.ty:
            return refl_of(s.ty[t.var.id])
        return t
    if isinstance(t, CoDirtRefl):
        return refl_of_dirt(subst_dirt(s, t.dirt))
    if isinstance(t, CoArrow):
        return CoArrow(_subst(s, t.dom), _subst(s, t.cod))
    if isinstance(t, CoHandler):
        return CoHandler(_subst(s, t.dom), _subst(s, t.cod))
    if isinstance(t, CoEmpty):
        return CoEmpty(subst_dirt(s, t.dirt))
    if isinstance(t, CoOpUnion):
        return CoOpUnion(t.op, _subst(s, t.rest))
    if isinstance(t, CoForallSkel):
        return CoForallSkel(t.var, _subst(s, t.body))
    if isinstance(t, CoForallTy):
        return CoForallTy(t.var, _subst(s, t.skel), _subst(s, t.body))
    if isinstance(t, CoForallDirt):
        return CoForallDirt(t.var, _subst(s, t.body))
    if isinstance(t, CoQual):
        return CoQual(_subst(s, t.constraint), _subst(s, t.body))
    if isinstance(t, CoComp):
        return CoComp(_subst(s, t.val), _subst(s, t.dirt))
    # Values
    if isinstance(t, (EVar, EUnit, EInt)):
        return t
    if isinstance(t, EAbs):
        return EAbs(t.var, _subst(s, t.ty), _subst(s, t.body))
    if isinstance(t, EHandler):
        return EHandler(
            t.ret_var, _subst(s, t.ret_ty), _subst(s, t.ret_body),
            tuple(OpClause(c.op, c.param, c.kont, _subst(s, c.body)) for c in t.clauses),
        )
    if isinstance(t, ESkelAbs):
        return ESkelAbs(t.var, _subst(s, t.body))
    if isinstance(t, ESkelApp):
        return ESkelApp(_subst(s, t.val), _subst(s, t.skel))
    if isinstance(t, ETyAbs):
        return ETyAbs(t.var, _subst(s, t.skel), _subst(s, t.body))
    if isinstance(t, ETyApp):
        return ETyApp(_subst(s, t.val), _subst(s, t.ty))
    if isinstance(t, EDirtAbs):
        return EDirtAbs(t.var, _subst(s, t.body))
    if isinstance(t, EDirtApp):
        return EDirtApp(_subst(s, t.val), subst_dirt(s, t.dirt))
    if isinstance(t, ECoAbs):
        return ECoAbs(t.var, _subst(s, t.constraint), _subst(s, t.body))
    if isinstance(t, ECoApp):
        return ECoApp(_subst(s, t.val), _subst(s, t.co))
    if isinstance(t, ECast):
        return ECast(_subst(s, t.val), _subst(s, t.co))
    # Computations
    if isinstance(t, CReturn):
        return CReturn(_subst(s, t.val))
    if isinstance(t, COp):
        return COp(t.op, _subst(s, t.arg), t.var, _subst(s, t.var_ty), _subst(s, t.body))
    if isinstance(t, CDo):
        return CDo(t.var, _subst(s, t.first), _subst(s, t.second))
    if isinstance(t, CHandle):
        return CHandle(_subst(s, t.handler), _subst(s, t.body))
    if isinstance(t, CApp):
        return CApp(_subst(s, t.fn), _subst(s, t.arg))
    if isinstance(t, CLet):
        return CLet(t.var, _subst(s, t.val), _subst(s, t.body))
    if isinstance(t, CCast):
        return CCast(_subst(s, t.comp), _subst(s, t.co))
    raise TypeError(f"substitute: unhandled {t!r}")


def subst_term(value: Value, var: TermVar, subject):
    """Substitute `value` for occurrences of the term variable `var`."""
    def go(t):
        if isinstance(t, EVar):
            return value if t.var.id == var.id else t
        if isinstance(t, (EUnit, EInt)):
            return t
        if isinstance(t, EAbs):
            return t if t.var.id == var.id else EAbs(t.var, t.ty, go(t.body))
        if isinstance(t, EHandler):
            ret_body = t.ret_body if t.ret_var.id == var.id else go(t.ret_body)
            clauses = tuple(
                cl if var.id in (cl.param.id, cl.kont.id)
                else OpClause(cl.op, cl.param, cl.kont, go(cl.body))
                for cl in t.clauses
            )
            return EHandler(t.ret_var, t.ret_ty, ret_body, clauses)
        if isinstance(t, ESkelAbs):
            return ESkelAbs(t.var, go(t.body))
        if isinstance(t, ESkelApp):
            return ESkelApp(go(t.val), t.skel)
        if isinstance(t, ETyAbs):
            return ETyAbs(t.var, t.skel, go(t.body))
        if isinstance(t, ETyApp):
            return ETyApp(go(t.val), t.ty)
        if isinstance(t, EDirtAbs):
            return EDirtAbs(t.var, go(t.body))
        if isinstance(t, EDirtApp):
            return EDirtApp(go(t.val), t.dirt)
        if isinstance(t, ECoAbs):
            return ECoAbs(t.var, t.constraint, go(t.body))
        if isinstance(t, ECoApp):
            return ECoApp(go(t.val), t.co)
        if isinstance(t, ECast):
            return ECast(go(t.val), t.co)
        if isinstance(t, CReturn):
            return CReturn(go(t.val))
        if isinstance(t, COp):
            body = t.body if t.var.id == var.id else go(t.body)
            return COp(t.op, go(t.arg), t.var, t.var_ty, body)
        if isinstance(t, CDo):
            second = t.second if t.var.id == var.id else go(t.second)
            return CDo(t.var, go(t.first), second)
        if isinstance(t, CHandle):
            return CHandle(go(t.handler), go(t.body))
        if isinstance(t, CApp):
            return CApp(go(t.fn), go(t.arg))
        if isinstance(t, CLet):
            body = t.body if t.var.id == var.id else go(t.body)
            return CLet(t.var, go(t.val), body)
        if isinstance(t, CCast):
            return CCast(go(t.comp), t.co)
        raise TypeError(f"subst_term: unhandled {t!r}")

    return go(subject)


# ---------------------------------------------------------------------------
# Type checking


def typecheck_value(env: TypeEnv, v: Value) -> ValueType:
    if isinstance(v, EVar):
        try:
            return env.term_vars[v.var.id]
        except KeyError:
            raise UnboundVariable(f"unbound variable {v.var.name}") from None
    if isinstance(v, EUnit):
        return TBase(Base.UNIT)
    if isinstance(v, EInt):
        return TBase(Base.INT)
    if isinstance(v, EAbs):
        wf_vty(env, v.ty)
        body_ty = typecheck_comp(env.with_term(v.var, v.ty), v.body)
        return TArrow(v.ty, body_ty)
    if isinstance(v, EHandler):
        wf_vty(env, v.ret_ty)
        out_cty = typecheck_comp(env.with_term(v.ret_var, v.ret_ty), v.ret_body)
        seen = set()
        for cl in v.clauses:
            if cl.op in seen:
                raise TypecheckError(f"handler lists operation {cl.op} twice")
            seen.add(cl.op)
            sig = env.sig.lookup(cl.op)
            cl_env = env.with_term(cl.param, sig.param).with_term(
                cl.kont, TArrow(sig.result, out_cty)
            )
            got = typecheck_comp(cl_env, cl.body)
            if not alpha_eq_cty(got, out_cty):
                raise TypecheckError(
                    f"handler clause for {cl.op} has a different type than the return clause"
                )
        in_dirt = dirt_add(seen, out_cty.dirt)
        return THandler(CompType(v.ret_ty, in_dirt), out_cty)
    if isinstance(v, ESkelAbs):
        return TForallSkel(v.var, typecheck_value(env.with_skel(v.var), v.body))
    if isinstance(v, ESkelApp):
        fn_ty = typecheck_value(env, v.val)
        if not isinstance(fn_ty, TForallSkel):
            raise TypecheckError("skeleton application of a non-skeleton-polymorphic value")
        wf_skeleton(env, v.skel)
        return substitute(Subst.one_skel(fn_ty.var, v.skel), fn_ty.body)
    if isinstance(v, ETyAbs):
        wf_skeleton(env, v.skel)
        return TForallTy(v.var, v.skel, typecheck_value(env.with_ty(v.var, v.skel), v.body))
    if isinstance(v, ETyApp):
        fn_ty = typecheck_value(env, v.val)
        if not isinstance(fn_ty, TForallTy):
            raise TypecheckError("type application of a non-type-polymorphic value")
        arg_skel = wf_vty(env, v.ty)
        if not alpha_eq_skel(arg_skel, fn_ty.skel):
            raise TypecheckError("type application instantiates at the wrong skeleton")
        return substitute(Subst.one_ty(fn_ty.var, v.ty), fn_ty.body)
    if isinstance(v, EDirtAbs):
        return TForallDirt(v.var, typecheck_value(env.with_dirt(v.var), v.body))
    if isinstance(v, EDirtApp):
        fn_ty = typecheck_value(env, v.val)
        if not isinstance(fn_ty, TForallDirt):
            raise TypecheckError("dirt application of a non-dirt-polymorphic value")
        wf_dirt(env, v.dirt)
        return substitute(Subst.one_dirt(fn_ty.var, v.dirt), fn_ty.body)
    if isinstance(v, ECoAbs):
        wf_constraint(env, v.constraint)
        body_ty = typecheck_value(env.with_co(v.var, v.constraint), v.body)
        return TQual(v.constraint, body_ty)
    if isinstance(v, ECoApp):
        fn_ty = typecheck_value(env, v.val)
        if not isinstance(fn_ty, TQual):
            raise TypecheckError("coercion application of a non-qualified value")
        got = typecheck_coercion(env, v.co)
        if not alpha_eq_constraint(got, fn_ty.constraint):
            raise TypecheckError("coercion application witnesses the wrong constraint")
        return fn_ty.body
    if isinstance(v, ECast):
        subj_ty = typecheck_value(env, v.val)
        ct = typecheck_coercion(env, v.co)
        if not isinstance(ct, TySub):
            raise TypecheckError("value cast by a non-value coercion")
        if not alpha_eq_vty(ct.lhs, subj_ty):
            raise TypecheckError("cast coercion's source type differs from the subject's type")
        return ct.rhs
    raise TypeError(v)


def typecheck_comp(env: TypeEnv, c: Comp) -> CompType:
    if isinstance(c, CApp):
        fn_ty = typecheck_value(env, c.fn)
        if not isinstance(fn_ty, TArrow):
            raise TypecheckError("application of a non-function value")
        arg_ty = typecheck_value(env, c.arg)
        if not alpha_eq_vty(arg_ty, fn_ty.dom):
            raise TypecheckError("function applied to an argument of the wrong type")
        return fn_ty.cod
    if isinstance(c, CLet):
        val_ty = typecheck_value(env, c.val)
        return typecheck_comp(env.with_term(c.var, val_ty), c.body)
    if isinstance(c, CReturn):
        return CompType(typecheck_value(env, c.val), EMPTY_DIRT)
    if isinstance(c, CDo):
        first = typecheck_comp(env, c.first)
        second = typecheck_comp(env.with_term(c.var, first.val), c.second)
        if not alpha_eq_dirt(first.dirt, second.dirt):
            raise TypecheckError("do-sequence branches draw from different dirts")
        return second
    if isinstance(c, COp):
        sig = env.sig.lookup(c.op)
        arg_ty = typecheck_value(env, c.arg)
        if not alpha_eq_vty(arg_ty, sig.param):
            raise TypecheckError(f"operation {c.op} applied to an argument of the wrong type")
        if not alpha_eq_vty(c.var_ty, sig.result):
            raise TypecheckError(f"operation {c.op} continuation binder annotation mismatch")
        body_ty = typecheck_comp(env.with_term(c.var, c.var_ty), c.body)
        if c.op not in body_ty.dirt.ops:
            raise TypecheckError(f"operation {c.op} missing from the computation's dirt")
        return body_ty
    if isinstance(c, CHandle):
        h_ty = typecheck_value(env, c.handler)
        if not isinstance(h_ty, THandler):
            raise TypecheckError("with-handle applied to a non-handler value")
        body_ty = typecheck_comp(env, c.body)
        if not alpha_eq_cty(body_ty, h_ty.dom):
            raise TypecheckError("handled computation does not match the handler's input type")
        return h_ty.cod
    if isinstance(c, CCast):
        subj = typecheck_comp(env, c.comp)
        ct = typecheck_coercion(env, c.co)
        if not isinstance(ct, CompSub):
            raise TypecheckError("computation cast by a non-computation coercion")
        if not alpha_eq_cty(ct.lhs, subj):
            raise TypecheckError("cast coercion's source type differs from the subject's type")
        return ct.rhs
    raise TypeError(c)


def typecheck_coercion(env: TypeEnv, co: Coercion):
    """Return the coercion's constraint type: TySub, DirtSub or CompSub."""
    if isinstance(co, CoVarRef):
        try:
            return env.co_vars[co.var.id]
        except KeyError:
            raise UnboundVariable(f"unbound coercion variable w{co.var.id}") from None
    if isinstance(co, CoBaseRefl):
        t = TBase(co.base)
        return TySub(t, t)
    if isinstance(co, CoTyRefl):
        if co.var.id not in env.ty_vars:
            raise WfError(f"unbound type variable a{co.var.id}")
        return TySub(co.var, co.var)
    if isinstance(co, CoDirtRefl):
        wf_dirt(env, co.dirt)
        return DirtSub(co.dirt, co.dirt)
    if isinstance(co, CoArrow):
        dom = typecheck_coercion(env, co.dom)
        cod = typecheck_coercion(env, co.cod)
        if not (isinstance(dom, TySub) and isinstance(cod, CompSub)):
            raise TypecheckError("ill-kinded arrow coercion")
        return TySub(TArrow(dom.rhs, cod.lhs), TArrow(dom.lhs, cod.rhs))
    if isinstance(co, CoHandler):
        dom = typecheck_coercion(env, co.dom)
        cod = typecheck_coercion(env, co.cod)
        if not (isinstance(dom, CompSub) and isinstance(cod, CompSub)):
            raise TypecheckError("ill-kinded handler coercion")
        return TySub(THandler(dom.rhs, cod.lhs), THandler(dom.lhs, cod.rhs))
    if isinstance(co, CoEmpty):
        wf_dirt(env, co.dirt)
        return DirtSub(EMPTY_DIRT, co.dirt)
    if isinstance(co, CoOpUnion):
        env.sig.lookup(co.op)
        rest = typecheck_coercion(env, co.rest)
        if not isinstance(rest, DirtSub):
            raise TypecheckError("ill-kinded dirt-extension coercion")
        return DirtSub(dirt_add([co.op], rest.lhs), dirt_add([co.op], rest.rhs))
    if isinstance(co, CoForallSkel):
        body = typecheck_coercion(env.with_skel(co.var), co.body)
        if not isinstance(body, TySub):
            raise TypecheckError("ill-kinded skeleton-forall coercion")
        return TySub(TForallSkel(co.var, body.lhs), TForallSkel(co.var, body.rhs))
    if isinstance(co, CoForallTy):
        wf_skeleton(env, co.skel)
        body = typecheck_coercion(env.with_ty(co.var, co.skel), co.body)
        if not isinstance(body, TySub):
            raise TypecheckError("ill-kinded type-forall coercion")
        return TySub(TForallTy(co.var, co.skel, body.lhs), TForallTy(co.var, co.skel, body.rhs))
    if isinstance(co, CoForallDirt):
        body = typecheck_coercion(env.with_dirt(co.var), co.body)
        if not isinstance(body, TySub):
            raise TypecheckError("ill-kinded dirt-forall coercion")
        return TySub(TForallDirt(co.var, body.lhs), TForallDirt(co.var, body.rhs))
    if isinstance(co, CoQual):
        wf_constraint(env, co.constraint)
        body = typecheck_coercion(env, co.body)
        if not isinstance(body, TySub):
            raise TypecheckError("ill-kinded qualified coercion")
        return TySub(TQual(co.constraint, body.lhs), TQual(co.constraint, body.rhs))
    if isinstance(co, CoComp):
        val = typecheck_coercion(env, co.val)
        d = typecheck_coercion(env, co.dirt)
        if not (isinstance(val, TySub) and isinstance(d, DirtSub)):
            raise TypecheckError("ill-kinded computation coercion")
        return CompSub(CompType(val.lhs, d.lhs), CompType(val.rhs, d.rhs))
    raise TypeError(co)


# ---------------------------------------------------------------------------
# Result classification

# Evaluation results are stratified: terminal values, cast value results,
# terminal computations (return under computation casts) and computation
# results (terminal computations or operation calls).


class ResultClass(Enum):
    TERMINAL_VALUE = "terminal value"
    VALUE_RESULT = "value result"
    TERMINAL_COMP = "terminal computation"
    COMP_RESULT = "computation result"
    NON_RESULT = "non-result"


_TERMINAL_HEADS = (EUnit, EInt, EAbs, EHandler, ESkelAbs, ETyAbs, EDirtAbs, ECoAbs)

# Cast heads a value result of each terminal shape may carry.  Base-type
# values admit no casts at all (their only coercions are reflexivity forms,
# which reduce away), so an ill-sorted cast like `unit |> (g1 -> g2)` is not
# a result.
_COMPATIBLE_CAST = {
    EAbs: CoArrow,
    EHandler: CoHandler,
    ESkelAbs: CoForallSkel,
    ETyAbs: CoForallTy,
    EDirtAbs: CoForallDirt,
    ECoAbs: CoQual,
}


def is_terminal_value(v: Value) -> bool:
    return isinstance(v, _TERMINAL_HEADS)


def _cast_head_ok(head: Value, co: Coercion) -> bool:
    expect = _COMPATIBLE_CAST.get(type(head))
    return expect is not None and isinstance(co, expect)


def is_value_result(v: Value) -> bool:
    if is_terminal_value(v):
        return True
    if isinstance(v, ECast):
        head = v.val
        while isinstance(head, ECast):
            head = head.val
        return is_value_result(v.val) and _cast_head_ok(head, v.co)
    return False


def is_terminal_comp(c: Comp) -> bool:
    if isinstance(c, CReturn):
        return is_value_result(c.val)
    if isinstance(c, CCast):
        return is_terminal_comp(c.comp) and isinstance(c.co, CoComp)
    return False


def is_comp_result(c: Comp) -> bool:
    if is_terminal_comp(c):
        return True
    return isinstance(c, COp) and is_value_result(c.arg)


_COMP_NODES = (CReturn, COp, CDo, CHandle, CApp, CLet, CCast)


def classify_result(term) -> ResultClass:
    if isinstance(term, _COMP_NODES):
        if is_terminal_comp(term):
            return ResultClass.TERMINAL_COMP
        if is_comp_result(term):
            return ResultClass.COMP_RESULT
        return ResultClass.NON_RESULT
    if is_terminal_value(term):
        return ResultClass.TERMINAL_VALUE
    if is_value_result(term):
        return ResultClass.VALUE_RESULT
    return ResultClass.NON_RESULT


# ---------------------------------------------------------------------------
# Small-step operational semantics


def _peel_return_casts(c: Comp):
    """Split a terminal computation into (value-result, pure coercion parts).

    The pure parts are returned innermost-first, matching the order in which
    the cast chain is peeled off.
    """
    cos = []
    while isinstance(c, CCast):
        assert isinstance(c.co, CoComp)
        cos.append(c.co.val)
        c = c.comp
    assert isinstance(c, CReturn)
    cos.reverse()
    return c.val, cos


def _cast_chain(v: Value, cos) -> Value:
    for co in cos:
        v = ECast(v, co)
    return v


def step_value(v: Value) -> Optional[Value]:
    """One step of the value relation; None when `v` is a result."""
    if isinstance(v, ECast):
        inner = step_value(v.val)
        if inner is not None:
            return ECast(inner, v.co)
        if is_value_result(v.val) and isinstance(v.co, CoBaseRefl):
            return v.val
        return None
    if isinstance(v, ESkelApp):
        inner = step_value(v.val)
        if inner is not None:
            return ESkelApp(inner, v.skel)
        f = v.val
        if isinstance(f, ECast) and is_value_result(f) and isinstance(f.co, CoForallSkel):
            pushed = substitute(Subst.one_skel(f.co.var, v.skel), f.co.body)
            return ECast(ESkelApp(f.val, v.skel), pushed)
        if isinstance(f, ESkelAbs):
            return substitute(Subst.one_skel(f.var, v.skel), f.body)
        return None
    if isinstance(v, ETyApp):
        inner = step_value(v.val)
        if inner is not None:
            return ETyApp(inner, v.ty)
        f = v.val
        if isinstance(f, ECast) and is_value_result(f) and isinstance(f.co, CoForallTy):
            pushed = substitute(Subst.one_ty(f.co.var, v.ty), f.co.body)
            return ECast(ETyApp(f.val, v.ty), pushed)
        if isinstance(f, ETyAbs):
            return substitute(Subst.one_ty(f.var, v.ty), f.body)
        return None
    if isinstance(v, EDirtApp):
        inner = step_value(v.val)
        if inner is not None:
            return EDirtApp(inner, v.dirt)
        f = v.val
        if isinstance(f, ECast) and is_value_result(f) and isinstance(f.co, CoForallDirt):
            pushed = substitute(Subst.one_dirt(f.co.var, v.dirt), f.co.body)
            return ECast(EDirtApp(f.val, v.dirt), pushed)
        if isinstance(f, EDirtAbs):
            return substitute(Subst.one_dirt(f.var, v.dirt), f.body)
        return None
    if isinstance(v, ECoApp):
        inner = step_value(v.val)
        if inner is not None:
            return ECoApp(inner, v.co)
        f = v.val
        if isinstance(f, ECast) and is_value_result(f) and isinstance(f.co, CoQual):
            return ECast(ECoApp(f.val, v.co), f.co.body)
        if isinstance(f, ECoAbs):
            return substitute(Subst.one_co(f.var, v.co), f.body)
        return None
    return None


def step_comp(c: Comp) -> Optional[Comp]:
    """One step of the computation relation; None when `c` is a result."""
    if isinstance(c, CCast):
        inner = step_comp(c.comp)
        if inner is not None:
            return CCast(inner, c.co)
        if isinstance(c.comp, COp) and is_comp_result(c.comp):
            op = c.comp
            return COp(op.op, op.arg, op.var, op.var_ty, CCast(op.body, c.co))
        return None
    if isinstance(c, CApp):
        fn = step_value(c.fn)
        if fn is not None:
            return CApp(fn, c.arg)
        if isinstance(c.fn, ECast) and is_value_result(c.fn) and isinstance(c.fn.co, CoArrow):
            co = c.fn.co
            return CCast(CApp(c.fn.val, ECast(c.arg, co.dom)), co.cod)
        if is_terminal_value(c.fn):
            arg = step_value(c.arg)
            if arg is not None:
                return CApp(c.fn, arg)
            if isinstance(c.fn, EAbs) and is_value_result(c.arg):
                return subst_term(c.arg, c.fn.var, c.fn.body)
        return None
    if isinstance(c, CLet):
        val = step_value(c.val)
        if val is not None:
            return CLet(c.var, val, c.body)
        if is_value_result(c.val):
            return subst_term(c.val, c.var, c.body)
        return None
    if isinstance(c, CReturn):
        val = step_value(c.val)
        return None if val is None else CReturn(val)
    if isinstance(c, COp):
        arg = step_value(c.arg)
        return None if arg is None else COp(c.op, arg, c.var, c.var_ty, c.body)
    if isinstance(c, CDo):
        first = step_comp(c.first)
        if first is not None:
            return CDo(c.var, first, c.second)
        if is_terminal_comp(c.first):
            v, cos = _peel_return_casts(c.first)
            return subst_term(_cast_chain(v, cos), c.var, c.second)
        if isinstance(c.first, COp) and is_comp_result(c.first):
            op = c.first
            return COp(op.op, op.arg, op.var, op.var_ty, CDo(c.var, op.body, c.second))
        return None
    if isinstance(c, CHandle):
        h = step_value(c.handler)
        if h is not None:
            return CHandle(h, c.body)
        if isinstance(c.handler, ECast) and is_value_result(c.handler) and isinstance(c.handler.co, CoHandler):
            co = c.handler.co
            return CCast(CHandle(c.handler.val, CCast(c.body, co.dom)), co.cod)
        if is_terminal_value(c.handler):
            body = step_comp(c.body)
            if body is not None:
                return CHandle(c.handler, body)
            if not isinstance(c.handler, EHandler):
                return None
            h = c.handler
            if is_terminal_comp(c.body):
                v, cos = _peel_return_casts(c.body)
                return subst_term(_cast_chain(v, cos), h.ret_var, h.ret_body)
            if isinstance(c.body, COp) and is_comp_result(c.body):
                op = c.body
                clause = h.clause_for(op.op)
                if clause is None:
                    return COp(op.op, op.arg, op.var, op.var_ty, CHandle(c.handler, op.body))
                kont = EAbs(op.var, op.var_ty, CHandle(c.handler, op.body))
                out = subst_term(op.arg, clause.param, clause.body)
                return subst_term(kont, clause.kont, out)
        return None
    raise TypeError(c)


@dataclass
class EvalOutcome:
    result: object
    steps: int
    trace: Optional[list] = None


def eval_comp(c: Comp, fuel: int = 100_000, keep_trace: bool = False) -> EvalOutcome:
    """Iterate step_comp until a computation result is reached."""
    trace = [c] if keep_trace else None
    steps = 0
    while True:
        if is_comp_result(c):
            return EvalOutcome(c, steps, trace)
        nxt = step_comp(c)
        if nxt is None:
            raise StuckTerm("stuck computation (metatheory violation)", c)
        c = nxt
        steps += 1
        if keep_trace:
            trace.append(c)
        if steps > fuel:
            raise FuelExhausted(f"evaluation exceeded {fuel} steps")


def eval_value(v: Value, fuel: int = 100_000) -> EvalOutcome:
    steps = 0
    while True:
        if is_value_result(v):
            return EvalOutcome(v, steps)
        nxt = step_value(v)
        if nxt is None:
            raise StuckTerm("stuck value (metatheory violation)", v)
        v = nxt
        steps += 1
        if steps > fuel:
            raise FuelExhausted(f"evaluation exceeded {fuel} steps")
