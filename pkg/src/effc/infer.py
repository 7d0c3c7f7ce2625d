"""Constraint-based type inference with simultaneous elaboration.

Constraint generation walks the implicitly-typed source term, threading a
queue of skeleton equalities, skeleton annotations and subtyping constraints,
and producing the explicitly-typed core term as it goes.  Let-generalization
interleaves solving (for simplification) with a split of the residual
constraints into a generalized and a floated part.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from . import exeff, source
from .core import (
    Base,
    CompType,
    CoVar,
    Dirt,
    DirtSub,
    EMPTY_DIRT,
    DirtClash,
    OccursCheck,
    Scheme,
    Signature,
    SkeletonClash,
    SkelArrow,
    SkelBase,
    SkelHandler,
    SkelVar,
    Skeleton,
    SolveError,
    Span,
    Supply,
    TArrow,
    TBase,
    THandler,
    TQual,
    TermVar,
    TyVar,
    TySub,
    UnboundVariable,
    ValueType,
    dirt_add,
    dirt_var,
    monoscheme,
)
from .exeff import (
    CoComp,
    CoDirtRefl,
    CoEmpty,
    CoOpUnion,
    CoTyRefl,
    CoVarRef,
    Subst,
    refl_of,
    substitute,
)

# ---------------------------------------------------------------------------
# Constraint items


@dataclass(frozen=True)
class SkelEq:
    lhs: Skeleton
    rhs: Skeleton


@dataclass(frozen=True)
class SkelAnn:
    var: TyVar
    skel: Skeleton


@dataclass(frozen=True)
class SubCt:
    co: CoVar
    constraint: object  # TySub | DirtSub
    span: Optional[Span] = field(default=None, compare=False)


def subst_item(s: Subst, item):
    if isinstance(item, SkelEq):
        return SkelEq(substitute(s, item.lhs), substitute(s, item.rhs))
    if isinstance(item, SkelAnn):
        assert item.var.id not in s.ty, "annotation subject must never be substituted"
        return SkelAnn(item.var, substitute(s, item.skel))
    if isinstance(item, SubCt):
        assert item.co.id not in s.co, "pending coercion variable must never be substituted"
        return SubCt(item.co, substitute(s, item.constraint), item.span)
    raise TypeError(item)


# ---------------------------------------------------------------------------
# Inference session


class Session:
    """One inference run: owns the fresh supply and the skeleton annotations."""

    def __init__(self, sig: Signature, supply: Optional[Supply] = None):
        self.sig = sig
        self.supply = supply or Supply()
        self.ann: dict = {}  # type-variable id -> current skeleton annotation
        self.let_schemes: list = []  # (name, Scheme) in elaboration order

    def fresh_ty(self, skel: Skeleton) -> TyVar:
        v = self.supply.ty()
        self.ann[v.id] = skel
        return v

    def apply_subst_to_ann(self, s: Subst) -> None:
        self.ann = {k: substitute(s, v) for k, v in self.ann.items()}

    def skeleton_of(self, t: ValueType) -> Skeleton:
        """The skeleton of an inference-annotated monotype."""
        if isinstance(t, TyVar):
            return self.ann[t.id]
        if isinstance(t, TBase):
            return SkelBase(t.base)
        if isinstance(t, TArrow):
            return SkelArrow(self.skeleton_of(t.dom), self.skeleton_of(t.cod.val))
        if isinstance(t, THandler):
            return SkelHandler(self.skeleton_of(t.dom.val), self.skeleton_of(t.cod.val))
        raise TypeError(f"skeleton_of: not a monotype: {t!r}")


def skeleton_of(session: Session, t: ValueType) -> Skeleton:
    return session.skeleton_of(t)


# ---------------------------------------------------------------------------
# Elaboration of schemes, types and environments into the core language

# Core types are a superset of source types, so elaboration is the identity
# on structure; schemes become nested quantifiers.


def elaborate_type(s) -> ValueType:
    if isinstance(s, Scheme):
        from .core import scheme_type

        return scheme_type(s)
    return s


def elaborate_env(env: dict, sig: Signature) -> exeff.TypeEnv:
    out = exeff.TypeEnv(sig)
    for vid, (var, scheme) in env.items():
        out = out.with_term(var, elaborate_type(scheme))
    return out


# ---------------------------------------------------------------------------
# Ordered free-variable collection (for reproducible generalization)


def _walk_vars(obj, out_ty: list, out_dirt: list, seen_ty: set, seen_dirt: set) -> None:
    if isinstance(obj, TyVar):
        if obj.id not in seen_ty:
            seen_ty.add(obj.id)
            out_ty.append(obj)
        return
    if isinstance(obj, TBase):
        return
    if isinstance(obj, Dirt):
        if obj.tail is not None and obj.tail.id not in seen_dirt:
            seen_dirt.add(obj.tail.id)
            out_dirt.append(obj.tail)
        return
    if isinstance(obj, TArrow):
        _walk_vars(obj.dom, out_ty, out_dirt, seen_ty, seen_dirt)
        _walk_vars(obj.cod, out_ty, out_dirt, seen_ty, seen_dirt)
        return
    if isinstance(obj, THandler):
        _walk_vars(obj.dom, out_ty, out_dirt, seen_ty, seen_dirt)
        _walk_vars(obj.cod, out_ty, out_dirt, seen_ty, seen_dirt)
        return
    if isinstance(obj, CompType):
        _walk_vars(obj.val, out_ty, out_dirt, seen_ty, seen_dirt)
        _walk_vars(obj.dirt, out_ty, out_dirt, seen_ty, seen_dirt)
        return
    if isinstance(obj, (TySub, DirtSub)):
        _walk_vars(obj.lhs, out_ty, out_dirt, seen_ty, seen_dirt)
        _walk_vars(obj.rhs, out_ty, out_dirt, seen_ty, seen_dirt)
        return
    if isinstance(obj, SkelAnn):
        _walk_vars(obj.var, out_ty, out_dirt, seen_ty, seen_dirt)
        return
    if isinstance(obj, SubCt):
        _walk_vars(obj.constraint, out_ty, out_dirt, seen_ty, seen_dirt)
        return
    if isinstance(obj, TQual):
        _walk_vars(obj.constraint, out_ty, out_dirt, seen_ty, seen_dirt)
        _walk_vars(obj.body, out_ty, out_dirt, seen_ty, seen_dirt)
        return
    raise TypeError(f"free-variable walk: unhandled {obj!r}")


def ordered_free_vars(objs) -> tuple:
    out_ty: list = []
    out_dirt: list = []
    _walk_vars_list(objs, out_ty, out_dirt, set(), set())
    return out_ty, out_dirt


def _walk_vars_list(objs, out_ty, out_dirt, seen_ty, seen_dirt):
    for obj in objs:
        _walk_vars(obj, out_ty, out_dirt, seen_ty, seen_dirt)


# ---------------------------------------------------------------------------
# Generalization: split


def split(env: dict, Q: list, a: ValueType) -> tuple:
    """Partition residual constraints for let-generalization.

    env maps term-variable ids to (TermVar, Scheme).  Returns
    (skel_vars, [(ty_var, skeleton)], dirt_vars, generalized [(co, ct)],
    floated queue items).
    """
    from .core import free_dirt_vars, free_ty_vars

    env_ty: set = set()
    env_dirt: set = set()
    for _, (_, scheme) in env.items():
        env_ty |= {v.id for v in free_ty_vars(scheme)}
        env_dirt |= {v.id for v in free_dirt_vars(scheme)}

    q_objs = [it for it in Q]
    free_ty_ordered, free_dirt_ordered = ordered_free_vars(q_objs + [a])
    gen_ty = [v for v in free_ty_ordered if v.id not in env_ty]
    gen_dirt = [v for v in free_dirt_ordered if v.id not in env_dirt]
    gen_ty_ids = {v.id for v in gen_ty}

    ann: dict = {}
    skel_of_ann: dict = {}
    for it in Q:
        if isinstance(it, SkelAnn):
            ann[it.var.id] = it.skel
            if isinstance(it.skel, SkelVar):
                skel_of_ann.setdefault(it.skel.id, []).append(it.var.id)

    # Skeleton variables all of whose annotated type variables generalize.
    gen_skel = []
    seen_skel: set = set()
    for it in Q:
        if isinstance(it, SkelAnn) and isinstance(it.skel, SkelVar):
            sv = it.skel
            if sv.id in seen_skel:
                continue
            seen_skel.add(sv.id)
            if all(aid in gen_ty_ids for aid in skel_of_ann[sv.id]):
                gen_skel.append(sv)

    ty_binders = []
    for v in gen_ty:
        if v.id not in ann:
            raise SolveError(f"generalized type variable a{v.id} lacks a skeleton annotation")
        ty_binders.append((v, ann[v.id]))

    generalized = []
    floated = []
    for it in Q:
        if isinstance(it, SubCt):
            c_ty, c_dirt = ordered_free_vars([it.constraint])
            fv = {("t", v.id) for v in c_ty} | {("d", v.id) for v in c_dirt}
            env_fv = {("t", i) for i in env_ty} | {("d", i) for i in env_dirt}
            if not fv <= env_fv:
                generalized.append((it.co, it.constraint))
            else:
                floated.append(it)
        elif isinstance(it, SkelAnn):
            if it.var.id not in gen_ty_ids:
                floated.append(it)
        else:
            floated.append(it)
    return gen_skel, ty_binders, gen_dirt, generalized, floated


# ---------------------------------------------------------------------------
# The solver


class _SolveState:
    """Mutable solver state: accumulated substitution, processed, and queue."""

    def __init__(self, session: Session, sigma: Subst, processed: list, queue: list):
        self.session = session
        self.sigma = sigma
        self.P = list(processed)
        self.Q = list(queue)

    def record(self, s: Subst) -> None:
        self.sigma = self.sigma.then(s)

    def apply_all(self, s: Subst) -> None:
        """Accumulate a substitution and re-enqueue all processed constraints."""
        self.sigma = self.sigma.then(s)
        self.session.apply_subst_to_ann(s)
        self.Q = [subst_item(s, it) for it in self.Q] + [subst_item(s, it) for it in self.P]
        self.P = []

    def prepend(self, items) -> None:
        self.Q[0:0] = items


def solve(session: Session, sigma: Subst, processed: list, queue: list) -> tuple:
    """Process the constraint queue; returns (substitution, residual items).

    Queue discipline is FIFO; whenever a substitution can affect already
    processed constraints, they are re-enqueued.
    """
    st = _SolveState(session, sigma, processed, queue)
    while st.Q:
        item = st.Q.pop(0)
        if isinstance(item, SkelEq):
            _solve_skel_eq(st, item)
        elif isinstance(item, SkelAnn):
            _solve_skel_ann(st, item)
        elif isinstance(item, SubCt) and isinstance(item.constraint, TySub):
            _solve_ty_sub(st, item)
        elif isinstance(item, SubCt) and isinstance(item.constraint, DirtSub):
            _solve_dirt_sub(st, item)
        else:
            raise TypeError(item)
    return st.sigma, st.P


def _occurs(v: SkelVar, s: Skeleton) -> bool:
    from .core import free_skel_vars_skel

    return v in free_skel_vars_skel(s)


def _solve_skel_eq(st: _SolveState, item: SkelEq) -> None:
    t1, t2 = item.lhs, item.rhs
    if isinstance(t1, SkelVar) and isinstance(t2, SkelVar) and t1.id == t2.id:
        return
    if isinstance(t1, SkelVar):
        if _occurs(t1, t2):
            raise OccursCheck(f"occurs check: s{t1.id} in its own instantiation", item)
        st.apply_all(Subst.one_skel(t1, t2))
        return
    if isinstance(t2, SkelVar):
        if _occurs(t2, t1):
            raise OccursCheck(f"occurs check: s{t2.id} in its own instantiation", item)
        st.apply_all(Subst.one_skel(t2, t1))
        return
    if isinstance(t1, SkelBase) and isinstance(t2, SkelBase) and t1.base == t2.base:
        return
    if isinstance(t1, SkelArrow) and isinstance(t2, SkelArrow):
        st.prepend([SkelEq(t1.dom, t2.dom), SkelEq(t1.cod, t2.cod)])
        return
    if isinstance(t1, SkelHandler) and isinstance(t2, SkelHandler):
        st.prepend([SkelEq(t1.dom, t2.dom), SkelEq(t1.cod, t2.cod)])
        return
    raise SkeletonClash(f"skeletons do not unify: {t1!r} vs {t2!r}", item)


def _solve_skel_ann(st: _SolveState, item: SkelAnn) -> None:
    session = st.session
    a, sk = item.var, item.skel
    if isinstance(sk, SkelVar):
        st.P.append(item)
        return
    if isinstance(sk, SkelBase):
        st.apply_all(Subst.one_ty(a, TBase(sk.base)))
        return
    if isinstance(sk, SkelArrow):
        a1 = session.fresh_ty(sk.dom)
        a2 = session.fresh_ty(sk.cod)
        d = session.supply.dirt()
        repl = TArrow(a1, CompType(a2, dirt_var(d)))
        st.apply_all(Subst.one_ty(a, repl))
        st.prepend([SkelAnn(a1, sk.dom), SkelAnn(a2, sk.cod)])
        return
    if isinstance(sk, SkelHandler):
        a1 = session.fresh_ty(sk.dom)
        a2 = session.fresh_ty(sk.cod)
        d1 = session.supply.dirt()
        d2 = session.supply.dirt()
        repl = THandler(CompType(a1, dirt_var(d1)), CompType(a2, dirt_var(d2)))
        st.apply_all(Subst.one_ty(a, repl))
        st.prepend([SkelAnn(a1, sk.dom), SkelAnn(a2, sk.cod)])
        return
    raise SolveError(f"cannot instantiate a type variable at skeleton {sk!r}", item)


def _solve_ty_sub(st: _SolveState, item: SubCt) -> None:
    session = st.session
    ct: TySub = item.constraint
    a1, a2 = ct.lhs, ct.rhs
    if a1 == a2:
        st.record(Subst.one_co(item.co, refl_of(a1)))
        return
    if isinstance(a1, TyVar):
        st.P.append(item)
        st.prepend([SkelEq(session.ann[a1.id], session.skeleton_of(a2))])
        return
    if isinstance(a2, TyVar):
        st.P.append(item)
        st.prepend([SkelEq(session.skeleton_of(a1), session.ann[a2.id])])
        return
    if isinstance(a1, TArrow) and isinstance(a2, TArrow):
        w1 = session.supply.co()
        w2 = session.supply.co()
        w3 = session.supply.co()
        st.record(
            Subst.one_co(item.co, exeff.CoArrow(CoVarRef(w1), CoComp(CoVarRef(w2), CoVarRef(w3))))
        )
        st.prepend(
            [
                SubCt(w1, TySub(a2.dom, a1.dom), item.span),
                SubCt(w2, TySub(a1.cod.val, a2.cod.val), item.span),
                SubCt(w3, DirtSub(a1.cod.dirt, a2.cod.dirt), item.span),
            ]
        )
        return
    if isinstance(a1, THandler) and isinstance(a2, THandler):
        w1 = session.supply.co()
        w2 = session.supply.co()
        w3 = session.supply.co()
        w4 = session.supply.co()
        st.record(
            Subst.one_co(
                item.co,
                exeff.CoHandler(
                    CoComp(CoVarRef(w1), CoVarRef(w2)), CoComp(CoVarRef(w3), CoVarRef(w4))
                ),
            )
        )
        st.prepend(
            [
                SubCt(w1, TySub(a2.dom.val, a1.dom.val), item.span),
                SubCt(w2, DirtSub(a2.dom.dirt, a1.dom.dirt), item.span),
                SubCt(w3, TySub(a1.cod.val, a2.cod.val), item.span),
                SubCt(w4, DirtSub(a1.cod.dirt, a2.cod.dirt), item.span),
            ]
        )
        return
    raise SkeletonClash(f"value types have incompatible shapes: {a1!r} vs {a2!r}", item, item.span)


def _fold_ops(ops, co):
    for op in sorted(ops, reverse=True):
        co = CoOpUnion(op, co)
    return co


def _solve_dirt_sub(st: _SolveState, item: SubCt) -> None:
    session = st.session
    ct: DirtSub = item.constraint
    d1, d2 = ct.lhs, ct.rhs
    ops1, t1 = d1.ops, d1.tail
    ops2, t2 = d2.ops, d2.tail

    if not ops1 and t1 is None:
        # The empty dirt is below everything.
        st.record(Subst.one_co(item.co, CoEmpty(d2)))
        return
    if t1 is not None and t2 is not None:
        if ops1:
            fresh = session.supply.dirt()
            w2 = session.supply.co()
            s = Subst.one_dirt(t2, Dirt(ops1 - ops2, fresh))
            st.record(Subst.one_co(item.co, _fold_ops(ops1, CoVarRef(w2))))
            new = SubCt(
                w2,
                DirtSub(exeff.subst_dirt(s, dirt_var(t1)), exeff.subst_dirt(s, d2)),
                item.span,
            )
            st.apply_all(s)
            st.prepend([new])
            return
        st.P.append(item)
        return
    if t1 is not None and t2 is None:
        if not ops1 and not ops2:
            # A dirt variable below the empty dirt has exactly one solution.
            st.record(Subst.one_co(item.co, CoEmpty(EMPTY_DIRT)))
            st.apply_all(Subst.one_dirt(t1, EMPTY_DIRT))
            return
        if not ops1 <= ops2:
            raise DirtClash(
                f"operations {sorted(ops1 - ops2)} cannot flow into "
                f"{{{', '.join(sorted(ops2))}}}",
                item,
                item.span,
            )
        if ops1:
            w2 = session.supply.co()
            st.record(Subst.one_co(item.co, _fold_ops(ops1, CoVarRef(w2))))
            st.P.append(SubCt(w2, DirtSub(dirt_var(t1), d2), item.span))
        else:
            st.P.append(item)
        return
    if t1 is None and t2 is None:
        if ops1 <= ops2:
            st.record(Subst.one_co(item.co, _fold_ops(ops1, CoEmpty(Dirt(ops2 - ops1)))))
            return
        raise DirtClash(
            f"operations {sorted(ops1 - ops2)} cannot flow into {{{', '.join(sorted(ops2))}}}",
            item,
            item.span,
        )
    # Closed, non-empty dirt below an open dirt: partially instantiate the tail.
    fresh = session.supply.dirt()
    s = Subst.one_dirt(t2, Dirt(ops1 - ops2, fresh))
    st.record(Subst.one_co(item.co, _fold_ops(ops1, CoEmpty(Dirt(ops2 - ops1, fresh)))))
    st.apply_all(s)


# ---------------------------------------------------------------------------
# Constraint generation with elaboration


def _subst_scheme(s: Subst, scheme: Scheme) -> Scheme:
    return Scheme(
        scheme.skel_vars,
        tuple((v, substitute(s, sk)) for v, sk in scheme.ty_vars),
        scheme.dirt_vars,
        tuple((w, substitute(s, ct)) for w, ct in scheme.qualifiers),
        substitute(s, scheme.body),
    )


def _subst_env(s: Subst, env: dict) -> dict:
    if s.is_empty():
        return env
    return {vid: (var, _subst_scheme(s, sch)) for vid, (var, sch) in env.items()}


def _env_bind(env: dict, var: TermVar, scheme: Scheme) -> dict:
    return {**env, var.id: (var, scheme)}


def gen_value(session: Session, Q: list, env: dict, v) -> tuple:
    """Returns (value type, new queue, substitution, elaborated core value)."""
    if isinstance(v, source.SrcVar):
        try:
            var, scheme = env[v.var.id]
        except KeyError:
            raise UnboundVariable(f"unbound variable {v.var.name}", v.span) from None
        if scheme.is_mono():
            return scheme.body, Q, Subst(), exeff.EVar(var)
        inst = Subst()
        skels = []
        for sv in scheme.skel_vars:
            fresh_sv = session.supply.skel()
            inst = inst.then(Subst.one_skel(sv, fresh_sv))
            skels.append(fresh_sv)
        tys = []
        anns = []
        for tv, sk in scheme.ty_vars:
            fresh_tv = session.fresh_ty(substitute(inst, sk))
            inst = inst.then(Subst.one_ty(tv, fresh_tv))
            tys.append(fresh_tv)
            anns.append(SkelAnn(fresh_tv, substitute(inst, sk)))
        dirts = []
        for dv in scheme.dirt_vars:
            fresh_dv = session.supply.dirt()
            inst = inst.then(Subst.one_dirt(dv, dirt_var(fresh_dv)))
            dirts.append(fresh_dv)
        subs = []
        term: exeff.Value = exeff.EVar(var)
        for sv in skels:
            term = exeff.ESkelApp(term, sv)
        for tv in tys:
            term = exeff.ETyApp(term, tv)
        for dv in dirts:
            term = exeff.EDirtApp(term, dirt_var(dv))
        for _, ct in scheme.qualifiers:
            w = session.supply.co()
            subs.append(SubCt(w, substitute(inst, ct), v.span))
            term = exeff.ECoApp(term, CoVarRef(w))
        return substitute(inst, scheme.body), subs + anns + Q, Subst(), term
    if isinstance(v, source.SrcUnit):
        return TBase(Base.UNIT), Q, Subst(), exeff.EUnit()
    if isinstance(v, source.SrcInt):
        return TBase(Base.INT), Q, Subst(), exeff.EInt(v.value)
    if isinstance(v, source.SrcFun):
        sv = session.supply.skel()
        a = session.fresh_ty(sv)
        cty, Q1, s, body = gen_comp(
            session, [SkelAnn(a, sv)] + Q, _env_bind(env, v.var, monoscheme(a)), v.body
        )
        dom = substitute(s, a)
        return TArrow(dom, cty), Q1, s, exeff.EAbs(v.var, dom, body)
    if isinstance(v, source.SrcHandler):
        return _gen_handler(session, Q, env, v)
    raise TypeError(v)


def _gen_handler(session: Session, Q: list, env: dict, v: source.SrcHandler) -> tuple:
    sup = session.supply
    sv_r = sup.skel()
    a_r = session.fresh_ty(sv_r)
    ret_cty, Q0, s_r, ret_body = gen_comp(
        session, [SkelAnn(a_r, sv_r)] + Q, _env_bind(env, v.ret_var, monoscheme(a_r)), v.ret_body
    )

    s_n = Subst()
    Qi = Q0
    clause_infos = []
    for cl in v.clauses:
        sig_op = session.sig.lookup(cl.op)
        sv_i = sup.skel()
        a_i = session.fresh_ty(sv_i)
        d_i = sup.dirt()
        env_i = _subst_env(s_n, _subst_env(s_r, env))
        env_i = _env_bind(env_i, cl.param, monoscheme(sig_op.param))
        k_ty = TArrow(sig_op.result, CompType(a_i, dirt_var(d_i)))
        env_i = _env_bind(env_i, cl.kont, monoscheme(k_ty))
        cl_cty, Qi, s_i, cl_body = gen_comp(session, [SkelAnn(a_i, sv_i)] + Qi, env_i, cl.body)
        s_n = s_n.then(s_i)
        clause_infos.append((cl, sig_op, a_i, d_i, cl_cty, cl_body))

    a_in = session.fresh_ty(sup.skel())
    a_out = session.fresh_ty(sup.skel())
    d_in = sup.dirt()
    d_out = sup.dirt()
    w1, w2 = sup.co(), sup.co()
    w6, w7 = sup.co(), sup.co()
    ops = frozenset(cl.op for cl in v.clauses)

    new_items = [
        SkelAnn(a_in, session.ann[a_in.id]),
        SkelAnn(a_out, session.ann[a_out.id]),
        SubCt(w1, TySub(substitute(s_n, ret_cty.val), a_out), v.span),
        SubCt(w2, DirtSub(substitute(s_n, ret_cty.dirt), dirt_var(d_out)), v.span),
    ]
    clause_terms = []
    for cl, sig_op, a_i, d_i, cl_cty, cl_body in clause_infos:
        w3 = sup.co()
        w4 = sup.co()
        w5 = sup.co()
        new_items.append(SubCt(w3, TySub(substitute(s_n, cl_cty.val), a_out), v.span))
        new_items.append(SubCt(w4, DirtSub(substitute(s_n, cl_cty.dirt), dirt_var(d_out)), v.span))
        inner = substitute(s_n, CompType(a_i, dirt_var(d_i)))
        new_items.append(
            SubCt(
                w5,
                TySub(
                    TArrow(sig_op.result, CompType(a_out, dirt_var(d_out))),
                    TArrow(sig_op.result, inner),
                ),
                v.span,
            )
        )
        fresh_k = sup.term(cl.kont.name)
        body = substitute(s_n, cl_body)
        body = exeff.subst_term(exeff.ECast(exeff.EVar(fresh_k), CoVarRef(w5)), cl.kont, body)
        body = exeff.CCast(body, CoComp(CoVarRef(w3), CoVarRef(w4)))
        clause_terms.append(exeff.OpClause(cl.op, cl.param, fresh_k, body))
    new_items.append(SubCt(w6, TySub(a_in, substitute(s_n, substitute(s_r, a_r))), v.span))
    new_items.append(
        SubCt(w7, DirtSub(dirt_var(d_in), dirt_add(ops, dirt_var(d_out))), v.span)
    )

    fresh_y = sup.term(v.ret_var.name)
    ret = substitute(s_n, ret_body)
    ret = exeff.subst_term(exeff.ECast(exeff.EVar(fresh_y), CoVarRef(w6)), v.ret_var, ret)
    ret = exeff.CCast(ret, CoComp(CoVarRef(w1), CoVarRef(w2)))

    handler = exeff.EHandler(fresh_y, a_in, ret, tuple(clause_terms))
    cast = exeff.CoHandler(
        CoComp(CoTyRefl(a_in), CoVarRef(w7)),
        CoComp(CoTyRefl(a_out), CoDirtRefl(dirt_var(d_out))),
    )
    result = exeff.ECast(handler, cast)
    h_ty = THandler(CompType(a_in, dirt_var(d_in)), CompType(a_out, dirt_var(d_out)))
    return h_ty, new_items + Qi, s_r.then(s_n), result


def gen_comp(session: Session, Q: list, env: dict, c) -> tuple:
    """Returns (computation type, new queue, substitution, elaborated core term)."""
    sup = session.supply
    if isinstance(c, source.SrcApp):
        a1, Q1, s1, v1 = gen_value(session, Q, env, c.fn)
        a2, Q2, s2, v2 = gen_value(session, Q1, _subst_env(s1, env), c.arg)
        sv = sup.skel()
        a = session.fresh_ty(sv)
        d = sup.dirt()
        w = sup.co()
        cty = CompType(a, dirt_var(d))
        items = [SkelAnn(a, sv), SubCt(w, TySub(substitute(s2, a1), TArrow(a2, cty)), c.span)]
        term = exeff.CApp(exeff.ECast(substitute(s2, v1), CoVarRef(w)), v2)
        return cty, items + Q2, s1.then(s2), term
    if isinstance(c, source.SrcReturn):
        a, Q1, s, v = gen_value(session, Q, env, c.val)
        return CompType(a, EMPTY_DIRT), Q1, s, exeff.CReturn(v)
    if isinstance(c, source.SrcLet):
        # Solve and generalize over the bound value's own constraints only;
        # constraints inherited from the enclosing context are held aside (and
        # re-joined after substitution) so that in-flight variables of
        # enclosing terms can never be captured by this scheme.
        a, Qv, s1, v1 = gen_value(session, [], env, c.val)
        s1p, Qv_res = solve(session, Subst(), [], Qv)
        s_pre = s1.then(s1p)
        inherited = [subst_item(s_pre, it) for it in Q]
        env1 = _subst_env(s1p, _subst_env(s1, env))
        a1 = substitute(s1p, a)
        gen_skel, ty_binders, gen_dirt, generalized, floated = split(env1, Qv_res, a1)
        scheme = Scheme(
            tuple(gen_skel), tuple(ty_binders), tuple(gen_dirt), tuple(generalized), a1
        )
        session.let_schemes.append((c.var.name, scheme))
        cty, Q2, s2, body = gen_comp(
            session, floated + inherited, _env_bind(env1, c.var, scheme), c.body
        )
        bound = substitute(s1p, v1)
        for w, ct in reversed(generalized):
            bound = exeff.ECoAbs(w, ct, bound)
        for dv in reversed(gen_dirt):
            bound = exeff.EDirtAbs(dv, bound)
        for tv, sk in reversed(ty_binders):
            bound = exeff.ETyAbs(tv, sk, bound)
        for sv in reversed(gen_skel):
            bound = exeff.ESkelAbs(sv, bound)
        term = exeff.CLet(c.var, substitute(s2, bound), body)
        return cty, Q2, s1.then(s1p).then(s2), term
    if isinstance(c, source.SrcOpCall):
        sig_op = session.sig.lookup(c.op, c.span)
        a1, Q1, s1, v1 = gen_value(session, Q, env, c.arg)
        env2 = _env_bind(_subst_env(s1, env), c.var, monoscheme(sig_op.result))
        cty2, Q2, s2, body = gen_comp(session, Q1, env2, c.body)
        w = sup.co()
        # The continuation is cast so the called operation shows up in its
        # dirt, as the syntax-directed core typing rule demands.
        w_k = sup.co()
        out_dirt = dirt_add([c.op], cty2.dirt)
        items = [
            SubCt(w, TySub(substitute(s2, a1), sig_op.param), c.span),
            SubCt(w_k, DirtSub(cty2.dirt, out_dirt), c.span),
        ]
        body = exeff.CCast(body, CoComp(refl_of(cty2.val), CoVarRef(w_k)))
        term = exeff.COp(
            c.op, exeff.ECast(substitute(s2, v1), CoVarRef(w)), c.var, sig_op.result, body
        )
        return (
            CompType(cty2.val, out_dirt),
            items + Q2,
            s1.then(s2),
            term,
        )
    if isinstance(c, source.SrcDo):
        cty1, Q1, s1, c1 = gen_comp(session, Q, env, c.first)
        env2 = _env_bind(_subst_env(s1, env), c.var, monoscheme(cty1.val))
        cty2, Q2, s2, c2 = gen_comp(session, Q1, env2, c.second)
        d = sup.dirt()
        w1 = sup.co()
        w2 = sup.co()
        items = [
            SubCt(w1, DirtSub(substitute(s2, cty1.dirt), dirt_var(d)), c.span),
            SubCt(w2, DirtSub(cty2.dirt, dirt_var(d)), c.span),
        ]
        a1 = substitute(s2, cty1.val)
        first = exeff.CCast(substitute(s2, c1), CoComp(refl_of(a1), CoVarRef(w1)))
        second = exeff.CCast(c2, CoComp(refl_of(cty2.val), CoVarRef(w2)))
        return CompType(cty2.val, dirt_var(d)), items + Q2, s1.then(s2), exeff.CDo(c.var, first, second)
    if isinstance(c, source.SrcHandle):
        a1, Q1, s1, v1 = gen_value(session, Q, env, c.handler)
        cty2, Q2, s2, body = gen_comp(session, Q1, _subst_env(s1, env), c.body)
        al1 = session.fresh_ty(sup.skel())
        al2 = session.fresh_ty(sup.skel())
        d1 = sup.dirt()
        d2 = sup.dirt()
        w1, w2, w3 = sup.co(), sup.co(), sup.co()
        want = THandler(CompType(al1, dirt_var(d1)), CompType(al2, dirt_var(d2)))
        items = [
            SkelAnn(al1, session.ann[al1.id]),
            SkelAnn(al2, session.ann[al2.id]),
            SubCt(w1, TySub(substitute(s2, a1), want), c.span),
            SubCt(w2, TySub(cty2.val, al1), c.span),
            SubCt(w3, DirtSub(cty2.dirt, dirt_var(d1)), c.span),
        ]
        term = exeff.CHandle(
            exeff.ECast(substitute(s2, v1), CoVarRef(w1)),
            exeff.CCast(body, CoComp(CoVarRef(w2), CoVarRef(w3))),
        )
        return CompType(al2, dirt_var(d2)), items + Q2, s1.then(s2), term
    raise TypeError(c)


# ---------------------------------------------------------------------------
# Top-level driver: inference, then defaulting of residual constraints


@dataclass
class InferOutcome:
    cty: CompType
    residual: list
    subst: Subst
    term: exeff.Comp
    session: Session
    generated: list  # constraint queue as handed to the final solve


def _max_term_id(c) -> int:
    worst = -1

    def bump(v: TermVar):
        nonlocal worst
        worst = max(worst, v.id)

    def walk(t):
        if isinstance(t, source.SrcVar):
            bump(t.var)
        elif isinstance(t, (source.SrcUnit, source.SrcInt)):
            pass
        elif isinstance(t, source.SrcFun):
            bump(t.var)
            walk(t.body)
        elif isinstance(t, source.SrcHandler):
            bump(t.ret_var)
            walk(t.ret_body)
            for cl in t.clauses:
                bump(cl.param)
                bump(cl.kont)
                walk(cl.body)
        elif isinstance(t, source.SrcReturn):
            walk(t.val)
        elif isinstance(t, source.SrcOpCall):
            walk(t.arg)
            bump(t.var)
            walk(t.body)
        elif isinstance(t, (source.SrcDo, source.SrcLet)):
            bump(t.var)
            walk(t.first if isinstance(t, source.SrcDo) else t.val)
            walk(t.second if isinstance(t, source.SrcDo) else t.body)
        elif isinstance(t, source.SrcHandle):
            walk(t.handler)
            walk(t.body)
        elif isinstance(t, source.SrcApp):
            walk(t.fn)
            walk(t.arg)
        else:
            raise TypeError(t)

    walk(c)
    return worst


def infer_top(sig: Signature, comp, supply: Optional[Supply] = None) -> InferOutcome:
    """Infer a type for the main computation and elaborate it."""
    session = Session(sig, supply)
    # The source term carries binder identities from its own supply; fresh
    # term variables must not collide with them.
    session.supply.reserve_terms(_max_term_id(comp))
    cty, Q, s, term = gen_comp(session, [], {}, comp)
    generated = list(Q)
    s2, residual = solve(session, Subst(), [], Q)
    return InferOutcome(
        cty=substitute(s2, cty),
        residual=residual,
        subst=s.then(s2),
        term=substitute(s2, term),
        session=session,
        generated=generated,
    )


def _fill_skeleton(sk: Skeleton) -> ValueType:
    """The base-type filling of a ground skeleton: shape with empty dirts."""
    if isinstance(sk, SkelBase):
        return TBase(sk.base)
    if isinstance(sk, SkelArrow):
        return TArrow(_fill_skeleton(sk.dom), CompType(_fill_skeleton(sk.cod), EMPTY_DIRT))
    if isinstance(sk, SkelHandler):
        return THandler(
            CompType(_fill_skeleton(sk.dom), EMPTY_DIRT),
            CompType(_fill_skeleton(sk.cod), EMPTY_DIRT),
        )
    raise TypeError(f"cannot fill non-ground skeleton {sk!r}")


def default_residual(outcome: InferOutcome) -> Subst:
    """Ground the residual constraints: free dirt variables become the empty
    dirt, free type variables the base filling of their skeletons, and
    residual coercion variables the coercion obtained by re-solving."""
    session = outcome.session
    free_skels: list = []
    seen = set()
    for it in outcome.residual:
        if isinstance(it, SkelAnn) and isinstance(it.skel, SkelVar) and it.skel.id not in seen:
            seen.add(it.skel.id)
            free_skels.append(it.skel)
    s = Subst(skel={sv.id: SkelBase(Base.UNIT) for sv in free_skels})

    ty_map = {}
    for it in outcome.residual:
        if isinstance(it, SkelAnn):
            ty_map[it.var.id] = _fill_skeleton(substitute(s, it.skel))
    s = Subst(skel=s.skel, ty=ty_map)

    objs = [it.constraint for it in outcome.residual if isinstance(it, SubCt)]
    _, dirt_vars = ordered_free_vars(objs + [outcome.cty])
    dirt_ids = {v.id for v in dirt_vars}
    dirt_ids |= {v.id for v in _term_dirt_vars(outcome.term)}
    s = Subst(skel=s.skel, ty=s.ty, dirt={vid: EMPTY_DIRT for vid in dirt_ids})

    ground_items = [
        SubCt(it.co, substitute(s, it.constraint), it.span)
        for it in outcome.residual
        if isinstance(it, SubCt)
    ]
    s_rest, leftover = solve(session, Subst(), [], ground_items)
    assert not leftover, "defaulted residual constraints must solve completely"
    return s.then(s_rest)


def _term_dirt_vars(term) -> list:
    """Free dirt variables occurring anywhere in an elaborated term."""
    out = []
    seen = set()

    def add(d: Dirt, bound: frozenset):
        if d.tail is not None and d.tail.id not in bound and d.tail.id not in seen:
            seen.add(d.tail.id)
            out.append(d.tail)

    def walk(t, bound: frozenset):
        if isinstance(t, (exeff.EVar, exeff.EUnit, exeff.EInt)):
            return
        if isinstance(t, Dirt):
            add(t, bound)
            return
        if isinstance(t, (SkelVar, SkelBase, SkelArrow, SkelHandler)):
            return
        if isinstance(t, (TyVar, TBase)):
            return
        if isinstance(t, (TArrow, THandler)):
            walk(t.dom, bound)
            walk(t.cod, bound)
            return
        if isinstance(t, CompType):
            walk(t.val, bound)
            add(t.dirt, bound)
            return
        if isinstance(t, (TySub, DirtSub)):
            for side in (t.lhs, t.rhs):
                if isinstance(side, Dirt):
                    add(side, bound)
                else:
                    walk(side, bound)
            return
        if isinstance(t, TQual):
            walk(t.constraint, bound)
            walk(t.body, bound)
            return
        from .core import TForallDirt, TForallSkel, TForallTy

        if isinstance(t, (TForallSkel, TForallTy)):
            walk(t.body, bound)
            return
        if isinstance(t, TForallDirt):
            walk(t.body, bound | {t.var.id})
            return
        if isinstance(t, exeff.EAbs):
            walk(t.ty, bound)
            walk(t.body, bound)
            return
        if isinstance(t, exeff.EHandler):
            walk(t.ret_ty, bound)
            walk(t.ret_body, bound)
            for cl in t.clauses:
                walk(cl.body, bound)
            return
        if isinstance(t, exeff.ESkelAbs):
            walk(t.body, bound)
            return
        if isinstance(t, exeff.EDirtAbs):
            walk(t.body, bound | {t.var.id})
            return
        if isinstance(t, exeff.ESkelApp):
            walk(t.val, bound)
            return
        if isinstance(t, exeff.ETyAbs):
            walk(t.body, bound)
            return
        if isinstance(t, exeff.ETyApp):
            walk(t.val, bound)
            walk(t.ty, bound)
            return
        if isinstance(t, exeff.EDirtApp):
            walk(t.val, bound)
            add(t.dirt, bound)
            return
        if isinstance(t, exeff.ECoAbs):
            walk(t.constraint, bound)
            walk(t.body, bound)
            return
        if isinstance(t, (exeff.ECoApp, exeff.ECast)):
            walk(t.val, bound)
            walk(t.co, bound)
            return
        if isinstance(t, exeff.CReturn):
            walk(t.val, bound)
            return
        if isinstance(t, exeff.COp):
            walk(t.arg, bound)
            walk(t.var_ty, bound)
            walk(t.body, bound)
            return
        if isinstance(t, exeff.CDo):
            walk(t.first, bound)
            walk(t.second, bound)
            return
        if isinstance(t, exeff.CHandle):
            walk(t.handler, bound)
            walk(t.body, bound)
            return
        if isinstance(t, exeff.CApp):
            walk(t.fn, bound)
            walk(t.arg, bound)
            return
        if isinstance(t, exeff.CLet):
            walk(t.val, bound)
            walk(t.body, bound)
            return
        if isinstance(t, exeff.CCast):
            walk(t.comp, bound)
            walk(t.co, bound)
            return
        if isinstance(t, (CoVarRef, exeff.CoBaseRefl, CoTyRefl)):
            return
        if isinstance(t, CoDirtRefl):
            add(t.dirt, bound)
            return
        if isinstance(t, (exeff.CoArrow, exeff.CoHandler)):
            walk(t.dom, bound)
            walk(t.cod, bound)
            return
        if isinstance(t, CoEmpty):
            add(t.dirt, bound)
            return
        if isinstance(t, CoOpUnion):
            walk(t.rest, bound)
            return
        if isinstance(t, exeff.CoForallSkel):
            walk(t.body, bound)
            return
        if isinstance(t, exeff.CoForallDirt):
            walk(t.body, bound | {t.var.id})
            return
        if isinstance(t, exeff.CoForallTy):
            walk(t.body, bound)
            return
        if isinstance(t, exeff.CoQual):
            walk(t.constraint, bound)
            walk(t.body, bound)
            return
        if isinstance(t, CoComp):
            walk(t.val, bound)
            walk(t.dirt, bound)
            return
        raise TypeError(f"dirt-variable walk: unhandled {t!r}")

    walk(term, frozenset())
    return out


def infer_and_default(sig: Signature, comp, supply: Optional[Supply] = None) -> tuple:
    """Infer, then ground all residual variables; returns (CompType, core term, outcome)."""
    outcome = infer_top(sig, comp, supply)
    d = default_residual(outcome)
    cty = substitute(d, outcome.cty)
    term = substitute(d, outcome.term)
    return cty, term, outcome
