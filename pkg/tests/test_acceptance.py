"""Acceptance suite: one check per criterion, each printing a PASS line.

Everything runs at desk scale; tolerances are exact (structural equality up
to canonical renaming) since the checked claims are all type-theoretic.
"""

import random

import pytest

from effc import display, exeff, infer, noeff, oracle, pipeline, skeleff, source
from effc.core import (
    Base,
    CompType,
    DirtSub,
    Dirt,
    Supply,
    TBase,
    TySub,
    alpha_eq_cty,
    alpha_eq_scheme,
    alpha_eq_skel,
    dirt,
)
from conftest import CORPUS, GOLDEN
from gen_helpers import (
    make_signature,
    random_program,
    random_ty_pair,
    random_value_of,
)
from paper_examples import RunningExample, erasure_discussion_pair
import test_solver_oracle as tso


def report(n: int, text: str) -> None:
    print(f"ACCEPTANCE {n} PASS: {text}")


@pytest.fixture(scope="module")
def corpus_programs():
    out = []
    for path in sorted(CORPUS.glob("*.eff")):
        sig, comp = source.parse_program(path.read_text())
        out.append((path.name, sig, comp))
    assert len(out) >= 30
    return out


@pytest.fixture(scope="module")
def random_programs():
    rng = random.Random(20260810)
    out = []
    while len(out) < 1000:
        depth = rng.randint(2, 6)
        sig, comp = random_program(rng, depth)
        out.append((f"random-{len(out)}", sig, comp))
    return out


@pytest.fixture(scope="module")
def elaborated(corpus_programs, random_programs):
    """Every program elaborated once, shared by several criteria."""
    out = []
    for name, sig, comp in corpus_programs + random_programs:
        cty, term, outcome = infer.infer_and_default(sig, comp)
        out.append((name, sig, cty, term))
    return out


def test_criterion_1_golden_scheme():
    sig, comp = source.parse_program(
        "effect Tick : Unit -> Unit\nlet f = fun g -> g unit in return unit"
    )
    outcome = infer.infer_top(sig, comp)
    (_, scheme), = outcome.session.let_schemes
    want = RunningExample().scheme
    assert alpha_eq_scheme(scheme, want)
    canon = display.show_scheme(display.canonicalize(scheme))
    assert canon == display.show_scheme(display.canonicalize(want))
    report(1, f"inference yields the golden polymorphic scheme {canon}")


def test_criterion_2_elaboration_soundness(elaborated):
    checked = 0
    for name, sig, cty, term in elaborated:
        got = exeff.typecheck_comp(exeff.TypeEnv(sig), term)
        assert alpha_eq_cty(got, cty), name
        checked += 1
    assert checked >= 1030
    report(2, f"core checker accepts all {checked} elaborated programs at their types")


def test_criterion_3_type_safety_along_traces(elaborated):
    fuel = 100_000
    programs = elaborated[:34] + elaborated[34 : 34 + 300]
    steps_total = 0
    for name, sig, cty, term in programs:
        env = exeff.TypeEnv(sig)
        ty = exeff.typecheck_comp(env, term)
        t = term
        steps = 0
        while not exeff.is_comp_result(t):
            nxt = exeff.step_comp(t)
            assert nxt is not None, f"{name}: well-typed non-result failed to step"
            got = exeff.typecheck_comp(env, nxt)
            assert alpha_eq_cty(got, ty), f"{name}: a step changed the type"
            t = nxt
            steps += 1
            assert steps <= fuel
        steps_total += steps
    report(3, f"subject reduction and progress hold along {len(programs)} traces ({steps_total} steps)")


def test_criterion_4_erasure(elaborated):
    # Typing is preserved by erasure on every program; semantic preservation
    # via the congruence closure is checked along traces for a subset.
    for name, sig, cty, term in elaborated:
        erased = skeleff.erase_comp({}, term)
        got = skeleff.typecheck_sk(skeleff.SkEnv(sig), erased)
        assert alpha_eq_skel(got, skeleff.erase_cty({}, cty)), name
    traced = 0
    for name, sig, cty, term in elaborated[:34] + elaborated[34 : 34 + 120]:
        t = term
        while not exeff.is_comp_result(t):
            nxt = exeff.step_comp(t)
            assert skeleff.congruent(
                skeleff.erase_comp({}, t), skeleff.erase_comp({}, nxt)
            ), name
            t = nxt
            traced += 1
    c1, c2 = erasure_discussion_pair()
    n1 = skeleff.normalize_full(skeleff.erase_comp({}, c1))
    n2 = skeleff.normalize_full(skeleff.erase_comp({}, c2))
    assert skeleff.alpha_eq_sk(n1, n2)
    report(
        4,
        f"erasure preserves types on {len(elaborated)} programs and semantics on "
        f"{traced} steps; the discussion pair normalizes alpha-equal",
    )


def test_criterion_5_coercion_irrelevance():
    rng = random.Random(5150)
    sup = Supply()
    sig = make_signature()
    env = exeff.TypeEnv(sig)
    pairs = 0
    while pairs < 200:
        small, big, co = random_ty_pair(rng, sup, 3)
        if small == big and rng.random() < 0.5:
            continue  # keep a healthy share of non-trivial casts
        v = random_value_of(rng, sup, small, 2)
        assert exeff.typecheck_value(env, v) == small
        ct = exeff.typecheck_coercion(env, co)
        assert ct == TySub(small, big)
        r1 = exeff.eval_value(v).result
        r2 = exeff.eval_value(exeff.ECast(v, co)).result
        assert skeleff.congruent(
            skeleff.erase_value({}, r1), skeleff.erase_value({}, r2)
        )
        pairs += 1
    report(5, f"erased results of v and v|>co are congruent for {pairs} generated pairs")


def test_criterion_6_noeff_elaboration_typing(elaborated):
    for name, sig, cty, term in elaborated:
        env = exeff.TypeEnv(sig)
        _, nterm = noeff.elab_comp(env, term)
        nenv = noeff.NEnv(noeff.elab_signature(sig))
        got = noeff.typecheck_noeff(nenv, nterm)
        want = noeff.elab_cty(env, cty)[1]
        assert noeff.alpha_eq_nty(got, want), name
    # The bridging coercions of dirt instantiation obey their typing lemma.
    rng = random.Random(66)
    sup = Supply()
    sig = make_signature()
    nenv = noeff.NEnv(noeff.elab_signature(sig))
    lemma_checked = 0
    for _ in range(200):
        base_env = exeff.TypeEnv(sig)
        d = sup.dirt()
        env_d = base_env.with_dirt(d)
        ty = _random_delta_type(rng, sup, d, depth=3)
        inst = Dirt(frozenset(op for op in ("Tick", "Tock") if rng.random() < 0.4))
        co = noeff.from_impure_vty(env_d, ty, d, inst)
        _, before = noeff.elab_vty(env_d, ty)
        inst_ty = exeff.substitute(exeff.Subst.one_dirt(d, inst), ty)
        _, after = noeff.elab_vty(base_env, inst_ty)
        got = noeff.typecheck_noeff_coercion(nenv, co)
        assert noeff.alpha_eq_nty(got.lhs, before)
        assert noeff.alpha_eq_nty(got.rhs, after)
        lemma_checked += 1
    report(
        6,
        f"pure-backend checker accepts all {len(elaborated)} elaborations; "
        f"{lemma_checked} bridging coercions satisfy the typing lemma",
    )


def _random_delta_type(rng, sup, d, depth):
    from effc.core import TArrow, THandler

    if depth <= 0 or rng.random() < 0.4:
        return TBase(rng.choice((Base.UNIT, Base.INT)))

    def some_dirt():
        ops = frozenset(op for op in ("Tick", "Tock") if rng.random() < 0.3)
        tail = d if rng.random() < 0.5 else None
        return Dirt(ops, tail)

    if rng.random() < 0.7:
        return TArrow(
            _random_delta_type(rng, sup, d, depth - 1),
            CompType(_random_delta_type(rng, sup, d, depth - 1), some_dirt()),
        )
    return THandler(
        CompType(_random_delta_type(rng, sup, d, depth - 1), some_dirt()),
        CompType(_random_delta_type(rng, sup, d, depth - 1), some_dirt()),
    )


def test_criterion_7_noeff_no_stuck_and_differential(corpus_programs):
    checked = 0
    for name, sig, comp in corpus_programs:
        text = source.show_program(sig, comp)
        rep = pipeline.differential_check_text(text, name, check_each_step=False)
        assert rep.agreement, (name, rep.failure)
        checked += 1
    # The worked example applications evaluate without sticking and agree.
    ex = RunningExample()
    env = ex.env()
    for app, want in ((ex.app_id(), "return unit"), (ex.app_tick(), "operation Tick")):
        whole = exeff.CLet(ex.f_var, ex.poly_value, app)
        out = exeff.eval_comp(whole)
        assert str(pipeline.observe_exeff(out.result)) == want
        _, nterm = noeff.elab_comp(exeff.TypeEnv(ex.sig), whole)
        nres, _ = noeff.eval_noeff(nterm)
        assert str(pipeline.observe_noeff(nres)) == want
    report(7, f"no stuck terms and full observation agreement on {checked} programs + worked examples")


def test_criterion_8_solver_correctness():
    sets_checked = 0
    # Exhaustive single dirt constraints over the bounded shapes (144 sets).
    for i in range(tso.shape_count()):
        for j in range(tso.shape_count()):
            sess = tso.fresh_session()
            tails = [sess.supply.dirt(), sess.supply.dirt()]
            w = sess.supply.co()
            items = [
                infer.SubCt(
                    w, DirtSub(tso.build_shape(sess, tails, i), tso.build_shape(sess, tails, j))
                )
            ]
            tso.check_against_oracle(sess, items)
            sets_checked += 1
    # Deterministic family of paired dirt constraints (12 x 12 x 3 = 432 sets).
    combos = [(i, j) for i in range(tso.shape_count()) for j in range(tso.shape_count())]
    rng = random.Random(88)
    for i, j in combos:
        for k in (0, 5, 10):
            sess = tso.fresh_session()
            tails = [sess.supply.dirt(), sess.supply.dirt()]
            w1, w2 = sess.supply.co(), sess.supply.co()
            items = [
                infer.SubCt(
                    w1, DirtSub(tso.build_shape(sess, tails, i), tso.build_shape(sess, tails, j))
                ),
                infer.SubCt(
                    w2, DirtSub(tso.build_shape(sess, tails, k), tso.build_shape(sess, tails, i))
                ),
            ]
            tso.check_against_oracle(sess, items)
            sets_checked += 1
    # Type constraints with annotated variables.
    from effc.core import TArrow

    arrows = [TArrow(TBase(Base.UNIT), CompType(TBase(Base.UNIT), dd)) for dd in oracle.ground_dirts()]
    for arrow in arrows:
        for flip in (False, True):
            sess = tso.fresh_session()
            sk = sess.supply.skel()
            a = sess.fresh_ty(sk)
            w = sess.supply.co()
            ct = TySub(a, arrow) if not flip else TySub(arrow, a)
            items = [infer.SkelAnn(a, sk), infer.SubCt(w, ct)]
            tso.check_against_oracle(sess, items)
            sets_checked += 1
    assert sets_checked >= 500
    report(8, f"solver agrees with the ground oracle on {sets_checked} constraint sets")


def test_criterion_9_golden_displays():
    ex = RunningExample()
    env = ex.env()
    sub = dict(env.ty_vars)

    def C(x):
        return display.canonicalize(x)

    got = {
        "running_target.txt": "\n".join(
            [display.show_value(C(ex.poly_value)), display.show_vty(C(ex.poly_type))]
        )
        + "\n",
        "running_erasure.txt": "\n".join(
            [
                display.show_sk_value(C(skeleff.erase_value(sub, ex.poly_value))),
                display.show_skeleton(C(skeleff.erase_vty({}, ex.poly_type))),
                display.show_sk_comp(C(skeleff.erase_comp(dict(sub), ex.app_id()))),
                display.show_sk_comp(C(skeleff.erase_comp(dict(sub), ex.app_tick()))),
            ]
        )
        + "\n",
    }
    _, npoly = noeff.elab_value(exeff.TypeEnv(ex.sig), ex.poly_value)
    _, na = noeff.elab_vty(exeff.TypeEnv(ex.sig), ex.poly_type)
    _, napp_id = noeff.elab_comp(env, ex.app_id())
    _, napp_tick = noeff.elab_comp(env, ex.app_tick())
    got["running_noeff.txt"] = (
        "\n".join(
            [
                display.show_nterm(C(npoly)),
                display.show_nty(C(na)),
                display.show_nterm(C(napp_id)),
                display.show_nterm(C(napp_tick)),
            ]
        )
        + "\n"
    )
    c1, c2 = erasure_discussion_pair()
    got["erasure_discussion.txt"] = (
        "\n".join(
            [
                display.show_comp(C(c1)),
                display.show_comp(C(c2)),
                display.show_sk_comp(C(skeleff.normalize_full(skeleff.erase_comp({}, c1)))),
            ]
        )
        + "\n"
    )
    for name, text in got.items():
        want = (GOLDEN / name).read_text()
        assert text == want, f"golden mismatch in {name}"
    report(9, f"{len(got)} golden example displays reproduce byte-for-byte")
