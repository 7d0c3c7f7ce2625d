"""Inference: constraint generation, the solver, split, and the driver."""

import pytest

from effc import exeff, infer, source
from effc.core import (
    Base,
    CompType,
    DirtClash,
    DirtSub,
    EMPTY_DIRT,
    OccursCheck,
    SkelBase,
    SkeletonClash,
    Supply,
    TArrow,
    TBase,
    TySub,
    alpha_eq_scheme,
    dirt,
    dirt_var,
    monoscheme,
)
from gen_helpers import make_signature, signature_header
from paper_examples import RunningExample, tick_tock_signature

T_UNIT = TBase(Base.UNIT)


def _infer_text(text):
    sig, comp = source.parse_program(text)
    return sig, comp, infer.infer_top(sig, comp)


# -- generation -----------------------------------------------------------------


def test_gen_return_unit_is_pure_and_identity():
    sig = tick_tock_signature()
    session = infer.Session(sig)
    _, comp = source.parse_program("return unit")
    cty, q, s, term = infer.gen_comp(session, [], {}, comp)
    assert cty == CompType(T_UNIT, EMPTY_DIRT)
    assert q == []
    assert s.is_empty()
    assert term == exeff.CReturn(exeff.EUnit())


def test_gen_do_introduces_fresh_dirt_and_casts():
    sig = tick_tock_signature()
    session = infer.Session(sig)
    _, comp = source.parse_program("do x <- return unit in return unit")
    cty, q, s, term = infer.gen_comp(session, [], {}, comp)
    subs = [it for it in q if isinstance(it, infer.SubCt)]
    assert len(subs) == 2
    assert all(isinstance(it.constraint, DirtSub) for it in subs)
    d = cty.dirt
    assert d.tail is not None and not d.ops
    assert subs[0].constraint.rhs == d and subs[1].constraint.rhs == d
    assert isinstance(term, exeff.CDo)
    assert isinstance(term.first, exeff.CCast) and isinstance(term.second, exeff.CCast)
    assert isinstance(term.first.co, exeff.CoComp)


def test_gen_variable_instantiates_scheme():
    ex = RunningExample()
    session = infer.Session(ex.sig)
    env = {ex.f_var.id: (ex.f_var, ex.scheme)}
    v = source.SrcVar(ex.f_var)
    a, q, s, term = infer.gen_value(session, [], env, v)
    # One skeleton application, two type, two dirt, two coercion applications.
    count = {"sk": 0, "ty": 0, "di": 0, "co": 0}
    t = term
    while not isinstance(t, exeff.EVar):
        if isinstance(t, exeff.ESkelApp):
            count["sk"] += 1
        elif isinstance(t, exeff.ETyApp):
            count["ty"] += 1
        elif isinstance(t, exeff.EDirtApp):
            count["di"] += 1
        elif isinstance(t, exeff.ECoApp):
            count["co"] += 1
        t = t.val
    assert count == {"sk": 1, "ty": 2, "di": 2, "co": 2}
    subs = [it for it in q if isinstance(it, infer.SubCt)]
    anns = [it for it in q if isinstance(it, infer.SkelAnn)]
    assert len(subs) == 2 and len(anns) == 2


# -- split -----------------------------------------------------------------------


def test_split_empty():
    out = infer.split({}, [], T_UNIT)
    assert out == ([], [], [], [], [])


def test_split_running_example_instance():
    sig = tick_tock_signature()
    session = infer.Session(sig)
    sup = session.supply
    sk = sup.skel()
    a = session.fresh_ty(sk)
    a2 = session.fresh_ty(sk)
    d, d2 = sup.dirt(), sup.dirt()
    w, w2 = sup.co(), sup.co()
    q = [
        infer.SkelAnn(a, sk),
        infer.SkelAnn(a2, sk),
        infer.SubCt(w, TySub(a, a2)),
        infer.SubCt(w2, DirtSub(dirt_var(d), dirt_var(d2))),
    ]
    ty = TArrow(TArrow(T_UNIT, CompType(a, dirt_var(d))), CompType(a2, dirt_var(d2)))
    gen_skel, ty_binders, gen_dirt, generalized, floated = infer.split({}, q, ty)
    assert gen_skel == [sk]
    assert [v for v, _ in ty_binders] == [a, a2]
    assert gen_dirt == [d, d2]
    assert [wv for wv, _ in generalized] == [w, w2]
    assert floated == []


def test_split_env_keeps_variable_free():
    sig = tick_tock_signature()
    session = infer.Session(sig)
    sup = session.supply
    sk = sup.skel()
    a = session.fresh_ty(sk)
    a2 = session.fresh_ty(sk)
    w = sup.co()
    q = [infer.SkelAnn(a, sk), infer.SkelAnn(a2, sk), infer.SubCt(w, TySub(a, a2))]
    xv = sup.term("x")
    env = {xv.id: (xv, monoscheme(a))}  # the environment mentions a
    gen_skel, ty_binders, gen_dirt, generalized, floated = infer.split(env, q, a2)
    assert [v for v, _ in ty_binders] == [a2]
    # The constraint still generalizes: its free variables are not all in the env.
    assert [wv for wv, _ in generalized] == [w]
    # a's annotation floats, and its skeleton must not generalize.
    assert gen_skel == []
    assert any(isinstance(it, infer.SkelAnn) and it.var == a for it in floated)


# -- solver ----------------------------------------------------------------------


def _solve_items(items, sig=None):
    session = infer.Session(sig or make_signature())
    return session, *infer.solve(session, exeff.Subst(), [], items)


def test_solve_open_open_dirt_instantiates_tail():
    session = infer.Session(make_signature())
    sup = session.supply
    d1, d2 = sup.dirt(), sup.dirt()
    w = sup.co()
    items = [infer.SubCt(w, DirtSub(dirt(["Tick"], d1), dirt(["Tock"], d2)))]
    s, residual = infer.solve(session, exeff.Subst(), [], items)
    repl = s.dirt[d2.id]
    assert repl.ops == frozenset(["Tick"]) and repl.tail is not None
    co = s.co[w.id]
    assert isinstance(co, exeff.CoOpUnion) and co.op == "Tick"
    assert len(residual) == 1
    ct = residual[0].constraint
    assert ct.lhs == dirt_var(d1)
    assert ct.rhs == dirt(["Tick", "Tock"], repl.tail)


def test_solve_empty_below_anything():
    session = infer.Session(make_signature())
    sup = session.supply
    d = sup.dirt()
    w = sup.co()
    items = [infer.SubCt(w, DirtSub(EMPTY_DIRT, dirt(["Tick"], d)))]
    s, residual = infer.solve(session, exeff.Subst(), [], items)
    assert residual == []
    assert s.co[w.id] == exeff.CoEmpty(dirt(["Tick"], d))


def test_solve_var_below_empty():
    session = infer.Session(make_signature())
    sup = session.supply
    d = sup.dirt()
    w = sup.co()
    items = [infer.SubCt(w, DirtSub(dirt_var(d), EMPTY_DIRT))]
    s, residual = infer.solve(session, exeff.Subst(), [], items)
    assert residual == []
    assert s.dirt[d.id] == EMPTY_DIRT
    assert s.co[w.id] == exeff.CoEmpty(EMPTY_DIRT)


def test_solve_closed_dirt_clash():
    session = infer.Session(make_signature())
    w = session.supply.co()
    items = [infer.SubCt(w, DirtSub(dirt(["Tick"]), dirt(["Tock"])))]
    with pytest.raises(DirtClash):
        infer.solve(session, exeff.Subst(), [], items)


def residual_env(sig, outcome_or_residual, extra_dirts=()):
    """A core environment binding all variables left free by solving."""
    residual = getattr(outcome_or_residual, "residual", outcome_or_residual)
    env = exeff.TypeEnv(sig)
    skels = set()
    for it in residual:
        if isinstance(it, infer.SkelAnn):
            skels.add(it.skel)
    for sk in skels:
        env = env.with_skel(sk)
    for it in residual:
        if isinstance(it, infer.SkelAnn):
            env = env.with_ty(it.var, it.skel)
    dirts = set(extra_dirts)
    for it in residual:
        if isinstance(it, infer.SubCt):
            for side in (it.constraint.lhs, it.constraint.rhs):
                if hasattr(side, "tail") and side.tail is not None:
                    dirts.add(side.tail)
    for d in dirts:
        env = env.with_dirt(d)
    for it in residual:
        if isinstance(it, infer.SubCt):
            env = env.with_co(it.co, it.constraint)
    return env


def test_solved_coercions_typecheck_at_their_constraints():
    # Let-free program, so no coercion variable is scheme-bound: every solved
    # coercion must check against the fully substituted original constraint.
    text = signature_header() + "(fun g -> g unit) (fun x -> Tick x)"
    sig, comp = source.parse_program(text)
    session = infer.Session(sig)
    session.supply.reserve_terms(infer._max_term_id(comp))
    cty, q, s, term = infer.gen_comp(session, [], {}, comp)
    originals = {it.co.id: it.constraint for it in q if isinstance(it, infer.SubCt)}
    s2, residual = infer.solve(session, exeff.Subst(), [], q)
    from effc.exeff import substitute

    env = residual_env(sig, residual)
    # Dirt variables can occur in coercion ranges without a residual constraint.
    for wid, co in s2.co.items():
        for d in free_dirt_vars_of_coercion(co):
            env = env.with_dirt(d)
    checked = 0
    for wid, ct in originals.items():
        want = substitute(s2, ct)
        if wid in s2.co:
            got = exeff.typecheck_coercion(env, s2.co[wid])
            assert got == want, (wid, got, want)
            checked += 1
    assert checked >= 3


def free_dirt_vars_of_coercion(co):
    out = []
    if isinstance(co, (exeff.CoEmpty, exeff.CoDirtRefl)):
        if co.dirt.tail is not None:
            out.append(co.dirt.tail)
    elif isinstance(co, (exeff.CoArrow, exeff.CoHandler, exeff.CoComp)):
        first = co.dom if hasattr(co, "dom") else co.val
        second = co.cod if hasattr(co, "cod") else co.dirt
        out += free_dirt_vars_of_coercion(first)
        out += free_dirt_vars_of_coercion(second)
    elif isinstance(co, exeff.CoOpUnion):
        out += free_dirt_vars_of_coercion(co.rest)
    return out


def test_solve_skeleton_occurs_check():
    text = "(fun f -> f f) (fun x -> return x)"
    sig, comp = source.parse_program(text)
    with pytest.raises(OccursCheck):
        infer.infer_top(sig, comp)


def test_solve_skeleton_clash_handler_as_function():
    text = "(handler { return x -> return x }) unit"
    sig, comp = source.parse_program(text)
    with pytest.raises(SkeletonClash):
        infer.infer_top(sig, comp)


# -- skeletons of annotated types ---------------------------------------------------


def test_skeleton_of_clauses():
    session = infer.Session(tick_tock_signature())
    sk = session.supply.skel()
    a = session.fresh_ty(sk)
    assert infer.skeleton_of(session, a) == sk
    assert infer.skeleton_of(session, T_UNIT) == SkelBase(Base.UNIT)
    from effc.core import SkelHandler, THandler

    h = THandler(CompType(a, EMPTY_DIRT), CompType(T_UNIT, dirt(["Tick"])))
    assert infer.skeleton_of(session, h) == SkelHandler(sk, SkelBase(Base.UNIT))


def test_elaborate_type_identity():
    assert infer.elaborate_type(T_UNIT) == T_UNIT
    arrow = TArrow(T_UNIT, CompType(T_UNIT, EMPTY_DIRT))
    assert infer.elaborate_type(arrow) == arrow
    ex = RunningExample()
    from effc.core import alpha_eq_vty

    assert alpha_eq_vty(infer.elaborate_type(ex.scheme), ex.poly_type)


# -- whole-program inference ----------------------------------------------------------


def test_infer_running_example_scheme():
    text = "let f = fun g -> g unit in f (fun x -> return x)"
    sig, comp, outcome = _infer_text("effect Tick : Unit -> Unit\n" + text)
    assert len(outcome.session.let_schemes) == 1
    _, scheme = outcome.session.let_schemes[0]
    ex = RunningExample()
    assert alpha_eq_scheme(scheme, ex.scheme)


def test_infer_f_id_defaults_to_pure_unit():
    text = "effect Tick : Unit -> Unit\nlet f = fun g -> g unit in f (fun x -> return x)"
    sig, comp = source.parse_program(text)
    cty, term, _ = infer.infer_and_default(sig, comp)
    assert cty == CompType(T_UNIT, EMPTY_DIRT)


def test_infer_return_unit():
    sig, comp, outcome = _infer_text("return unit")
    assert outcome.cty == CompType(T_UNIT, EMPTY_DIRT)


def test_infer_tick_then_tock_dirt():
    text = (
        "effect Tick : Unit -> Unit\neffect Tock : Unit -> Unit\n"
        "let f = fun x -> Tock x in do y <- Tick unit in f y"
    )
    sig, comp = source.parse_program(text)
    cty, term, _ = infer.infer_and_default(sig, comp)
    assert cty == CompType(T_UNIT, dirt(["Tick", "Tock"]))


def test_elaboration_preserves_types_on_corpus(corpus_paths):
    for path in corpus_paths:
        sig, comp = source.parse_program(path.read_text())
        cty, term, _ = infer.infer_and_default(sig, comp)
        got = exeff.typecheck_comp(exeff.TypeEnv(sig), term)
        from effc.core import alpha_eq_cty

        assert alpha_eq_cty(got, cty), path.name


def test_dump_constraints_is_deterministic():
    text = signature_header() + "let f = fun g -> g unit in f (fun x -> Tick x)"
    from effc import pipeline

    sig1, comp1 = source.parse_program(text)
    out1 = pipeline.dump_constraints(infer.infer_top(sig1, comp1))
    sig2, comp2 = source.parse_program(text)
    out2 = pipeline.dump_constraints(infer.infer_top(sig2, comp2))
    assert out1 == out2
    assert "--- substitution ---" in out1


def test_split_postconditions_extensionally_random():
    import random as _random
    from effc.core import free_dirt_vars, free_ty_vars

    rng = _random.Random(31)
    sig = make_signature()
    for _ in range(60):
        session = infer.Session(sig)
        sup = session.supply
        sks = [sup.skel() for _ in range(3)]
        tys = [session.fresh_ty(rng.choice(sks)) for _ in range(4)]
        dirts = [sup.dirt() for _ in range(3)]
        q = [infer.SkelAnn(a, session.ann[a.id]) for a in tys]
        for _ in range(rng.randint(0, 4)):
            w = sup.co()
            if rng.random() < 0.5:
                a, b = rng.sample(tys, 2)
                if session.ann[a.id] == session.ann[b.id]:
                    q.append(infer.SubCt(w, TySub(a, b)))
            else:
                d1, d2 = rng.sample(dirts, 2)
                q.append(infer.SubCt(w, DirtSub(dirt_var(d1), dirt_var(d2))))
        a_res = rng.choice(tys)
        env = {}
        if rng.random() < 0.5:
            xv = sup.term("x")
            env = {xv.id: (xv, monoscheme(rng.choice(tys)))}
        gen_skel, ty_binders, gen_dirt, generalized, floated = infer.split(env, q, a_res)
        env_ty = set()
        env_dirt = set()
        for _, (_, sch) in env.items():
            env_ty |= {v.id for v in free_ty_vars(sch)}
            env_dirt |= {v.id for v in free_dirt_vars(sch)}
        # Direct evaluation of the set formulas.
        q_ty = {it.var.id for it in q if isinstance(it, infer.SkelAnn)}
        for it in q:
            if isinstance(it, infer.SubCt):
                q_ty |= {v.id for v in free_ty_vars(it.constraint)}
        want_gen_ty = (q_ty | {v.id for v in free_ty_vars(a_res)}) - env_ty
        assert {v.id for v, _ in ty_binders} == want_gen_ty
        ann = {it.var.id: it.skel for it in q if isinstance(it, infer.SkelAnn)}
        for sv in gen_skel:
            annotated = [aid for aid, sk in ann.items() if sk == sv]
            assert annotated and all(aid in want_gen_ty for aid in annotated)
        for w, ct in generalized:
            fv = {("t", v.id) for v in free_ty_vars(ct)} | {("d", v.id) for v in free_dirt_vars(ct)}
            envv = {("t", i) for i in env_ty} | {("d", i) for i in env_dirt}
            assert not fv <= envv
        for it in floated:
            if isinstance(it, infer.SubCt):
                fv = {("t", v.id) for v in free_ty_vars(it.constraint)} | {
                    ("d", v.id) for v in free_dirt_vars(it.constraint)
                }
                envv = {("t", i) for i in env_ty} | {("d", i) for i in env_dirt}
                assert fv <= envv


def test_solver_skeleton_discipline():
    # Processing a variable-sided subtyping constraint first equates both
    # sides' skeletons: solving [a : s, w : a <= Unit] must instantiate s.
    session = infer.Session(make_signature())
    sk = session.supply.skel()
    a = session.fresh_ty(sk)
    w = session.supply.co()
    items = [infer.SkelAnn(a, sk), infer.SubCt(w, TySub(a, T_UNIT))]
    s, residual = infer.solve(session, exeff.Subst(), [], items)
    assert s.skel[sk.id] == SkelBase(Base.UNIT)
    assert s.ty[a.id] == T_UNIT
    assert residual == []
    assert s.co[w.id] == exeff.CoBaseRefl(Base.UNIT)


def test_elaborate_env_embeds_schemes():
    ex = __import__("paper_examples").RunningExample()
    env = {ex.f_var.id: (ex.f_var, ex.scheme)}
    core_env = infer.elaborate_env(env, ex.sig)
    from effc.core import alpha_eq_vty

    assert alpha_eq_vty(core_env.term_vars[ex.f_var.id], ex.poly_type)
    mono = {ex.x.id: (ex.x, monoscheme(T_UNIT))}
    assert infer.elaborate_env(mono, ex.sig).term_vars[ex.x.id] == T_UNIT
