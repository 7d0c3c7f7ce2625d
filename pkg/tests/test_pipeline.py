"""Pipeline orchestration, CLI, dumps and their round-trips."""

import json
import subprocess
import sys

import pytest

from effc import cli, display, pipeline, readers
from effc.core import DirtClash, EffError, SkeletonClash
from conftest import CORPUS, CORPUS_BAD


def test_compile_stages_re_typecheck(tmp_path):
    path = CORPUS / "p09_do_tick_tock.eff"
    for stage in pipeline.STAGES:
        art = pipeline.compile_path(str(path), stage)
        assert art.exeff_term is not None
        if stage in ("skeleff", "noeff"):
            assert art.skeleff_term is not None
        if stage == "noeff":
            assert art.noeff_term is not None


def test_compile_reports_polymorphic_scheme():
    art = pipeline.compile_path(str(CORPUS / "p06_running_f_id.eff"), "infer")
    schemes = art.inferred.session.let_schemes
    assert len(schemes) == 1
    from paper_examples import RunningExample
    from effc.core import alpha_eq_scheme

    assert alpha_eq_scheme(schemes[0][1], RunningExample().scheme)


def test_ill_typed_programs_fail_with_expected_classes():
    expect = {
        "b01_dirtclash.eff": DirtClash,
        "b02_handler_as_fun.eff": SkeletonClash,
        "b03_occurs.eff": EffError,
        "b04_unbound.eff": EffError,
        "b05_unknown_op.eff": EffError,
        "b06_skeleton_clash.eff": SkeletonClash,
    }
    for name, exc in expect.items():
        with pytest.raises(exc):
            pipeline.compile_path(str(CORPUS_BAD / name), "noeff")


def test_run_return_unit_zero_steps():
    out = pipeline.run_path(str(CORPUS / "p01_return_unit.eff"), "exeff")
    assert str(out.observation) == "return unit"
    assert out.steps == 0


def test_run_unhandled_tick_observations_match():
    e = pipeline.run_path(str(CORPUS / "p08_tick_unhandled.eff"), "exeff")
    n = pipeline.run_path(str(CORPUS / "p08_tick_unhandled.eff"), "noeff")
    s = pipeline.run_path(str(CORPUS / "p08_tick_unhandled.eff"), "skeleff")
    assert str(e.observation) == str(n.observation) == str(s.observation) == "operation Tick"


def test_differential_corpus_agreement(corpus_paths):
    for path in corpus_paths:
        report = pipeline.differential_check(str(path))
        assert report.agreement, (path.name, report.failure)


def test_corpus_expectations(corpus_paths):
    expected = json.loads((CORPUS / "expected.json").read_text())
    for path in corpus_paths:
        rep = pipeline.differential_check(str(path), check_each_step=False)
        art = pipeline.compile_path(str(path), "infer")
        want = expected[path.name]
        assert display.show_cty(display.canonicalize(art.cty)) == want["type"], path.name
        assert str(rep.observations["exeff"]) == want["observation"], path.name


def test_dump_roundtrips_alpha_equal(corpus_paths):
    # Dumping and re-reading any stage's representation is alpha-stable on
    # the whole corpus.
    for path in corpus_paths:
        art = pipeline.compile_path(str(path), "noeff")
        ex_text = pipeline.dump_stage(art, "exeff")
        back = readers.read_exeff_comp(ex_text)
        assert display.show_comp(display.canonicalize(back)) == ex_text.strip(), path.name
        sk_text = pipeline.dump_stage(art, "skeleff")
        back_sk = readers.read_skeleff_comp(sk_text)
        assert display.show_sk_comp(display.canonicalize(back_sk)) == sk_text.strip(), path.name
        n_text = pipeline.dump_stage(art, "noeff")
        back_n = readers.read_noeff_term(n_text)
        assert display.show_nterm(display.canonicalize(back_n)) == n_text.strip(), path.name


def test_deterministic_diagnostics():
    path = str(CORPUS_BAD / "b01_dirtclash.eff")
    msgs = set()
    for _ in range(3):
        try:
            pipeline.compile_path(path, "noeff")
        except EffError as e:
            msgs.add(str(e))
    assert len(msgs) == 1


# -- command-line interface ----------------------------------------------------------


def run_cli(*args):
    return cli.main(list(args))


def test_cli_check_ok(capsys):
    assert run_cli("check", str(CORPUS / "p01_return_unit.eff")) == 0
    assert "ok" in capsys.readouterr().out


def test_cli_infer_prints_scheme(capsys):
    assert run_cli("infer", str(CORPUS / "p06_running_f_id.eff"), "--defaulted") == 0
    out = capsys.readouterr().out
    assert "let f : all s0 (a0 : s0) (a1 : s0) d0 d1 [a0 <= a1] [d0 <= d1]." in out
    assert "defaulted: Unit ! {}" in out


def test_cli_run_backends(capsys):
    for backend in pipeline.BACKENDS:
        assert run_cli("run", str(CORPUS / "p12_handle_tick_discard.eff"), "--backend", backend) == 0
        assert "return 2" in capsys.readouterr().out


def test_cli_run_trace(capsys):
    assert run_cli("run", str(CORPUS / "p03_id_app.eff"), "--trace") == 0
    out = capsys.readouterr().out
    assert "[0]" in out and "return unit" in out


def test_cli_exit_codes(capsys):
    assert run_cli("check", str(CORPUS_BAD / "b01_dirtclash.eff")) == 1
    capsys.readouterr()
    assert run_cli("run", str(CORPUS / "p28_apply_twice.eff"), "--fuel", "1") == 2
    capsys.readouterr()
    assert run_cli("diff", str(CORPUS / "p15_get_constant.eff")) == 0
    capsys.readouterr()


def test_cli_dump_stages(capsys):
    for stage in ("constraints", "exeff", "skeleff", "noeff"):
        assert run_cli("dump", str(CORPUS / "p10_handle_ret_only.eff"), "--stage", stage) == 0
        assert capsys.readouterr().out.strip()


def test_cli_corpus(capsys):
    assert run_cli("corpus", str(CORPUS)) == 0
    out = capsys.readouterr().out
    assert out.count("ok") >= 30


def test_cli_entry_point_subprocess():
    proc = subprocess.run(
        [sys.executable, "-m", "effc.cli", "check", str(CORPUS / "p02_return_int.eff")],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert "ok" in proc.stdout
