"""Pipeline orchestration: staged compilation, evaluation, differential checks.

Every stage re-typechecks its artifact in its own calculus before returning,
so a report of success certifies the metatheoretic contracts at desk scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from . import display, exeff, infer, noeff, skeleff, source
from .core import (
    CompType,
    EffError,
    Signature,
    StuckTerm,
    TypecheckError,
    alpha_eq_cty,
    alpha_eq_skel,
)

STAGES = ("infer", "exeff", "skeleff", "noeff")
BACKENDS = ("exeff", "skeleff", "noeff")


@dataclass
class PipelineArtifacts:
    source_sig: Signature
    source_comp: object
    inferred: Optional[infer.InferOutcome] = None
    cty: Optional[CompType] = None
    exeff_term: Optional[object] = None
    skeleff_term: Optional[object] = None
    skeleff_type: Optional[object] = None
    noeff_term: Optional[object] = None
    noeff_type: Optional[object] = None


@dataclass(frozen=True)
class Observation:
    kind: str  # "returned" | "operation"
    payload: str

    def __str__(self) -> str:
        if self.kind == "returned":
            return f"return {self.payload}"
        return f"operation {self.payload}"


@dataclass
class DiffReport:
    program: str
    observations: dict = field(default_factory=dict)
    steps: dict = field(default_factory=dict)
    agreement: bool = True
    failure: Optional[str] = None


def compile_text(text: str, stage: str = "noeff") -> PipelineArtifacts:
    if stage not in STAGES:
        raise ValueError(f"unknown stage {stage!r}")
    sig, comp = source.parse_program(text)
    source.check_signature(sig)
    art = PipelineArtifacts(sig, comp)

    cty, term, outcome = infer.infer_and_default(sig, comp)
    art.inferred = outcome
    art.cty = cty
    art.exeff_term = term
    env = exeff.TypeEnv(sig)
    checked = exeff.typecheck_comp(env, term)
    if not alpha_eq_cty(checked, cty):
        raise TypecheckError("elaborated term does not re-typecheck at the inferred type")
    if stage in ("infer", "exeff"):
        return art

    if stage in ("skeleff", "noeff"):
        sk = skeleff.erase_comp({}, term)
        sk_ty = skeleff.typecheck_sk(skeleff.SkEnv(sig), sk)
        if not alpha_eq_skel(sk_ty, skeleff.erase_cty({}, cty)):
            raise TypecheckError("erased term does not re-typecheck at the erased type")
        art.skeleff_term = sk
        art.skeleff_type = sk_ty
    if stage == "noeff":
        _, nterm = noeff.elab_comp(env, term)
        nenv = noeff.NEnv(noeff.elab_signature(sig))
        nty = noeff.typecheck_noeff(nenv, nterm)
        want = noeff.elab_cty(env, cty)[1]
        if not noeff.alpha_eq_nty(nty, want):
            raise TypecheckError("elaborated pure term does not re-typecheck at the elaborated type")
        art.noeff_term = nterm
        art.noeff_type = nty
    return art


def compile_path(path: str, stage: str = "noeff") -> PipelineArtifacts:
    with open(path, encoding="utf-8") as f:
        return compile_text(f.read(), stage)


# ---------------------------------------------------------------------------
# Observations


def observe_exeff(result) -> Observation:
    if isinstance(result, exeff.COp):
        return Observation("operation", result.op)
    v, _ = exeff._peel_return_casts(result)
    return Observation("returned", _ground_value_exeff(v))


def _ground_value_exeff(v) -> str:
    if isinstance(v, exeff.EUnit):
        return "unit"
    if isinstance(v, exeff.EInt):
        return str(v.value)
    raise EffError("observation requires a ground result type")


def observe_skeleff(result) -> Observation:
    if isinstance(result, skeleff.SOp):
        return Observation("operation", result.op)
    v = result.val
    if isinstance(v, skeleff.SUnit):
        return Observation("returned", "unit")
    if isinstance(v, skeleff.SInt):
        return Observation("returned", str(v.value))
    raise EffError("observation requires a ground result type")


def observe_noeff(result) -> Observation:
    while isinstance(result, noeff.MReturn):
        result = result.term
    if isinstance(result, noeff.MOp):
        return Observation("operation", result.op)
    if isinstance(result, noeff.MUnit):
        return Observation("returned", "unit")
    if isinstance(result, noeff.MInt):
        return Observation("returned", str(result.value))
    raise EffError("observation requires a ground result type")


# ---------------------------------------------------------------------------
# Running programs


@dataclass
class RunOutcome:
    observation: Observation
    steps: int
    trace: Optional[list] = None


def run_text(text: str, backend: str = "exeff", fuel: int = 100_000, keep_trace: bool = False) -> RunOutcome:
    if backend not in BACKENDS:
        raise ValueError(f"unknown backend {backend!r}")
    art = compile_text(text, stage=backend)
    if backend == "exeff":
        out = exeff.eval_comp(art.exeff_term, fuel, keep_trace=keep_trace)
        return RunOutcome(observe_exeff(out.result), out.steps, out.trace)
    if backend == "skeleff":
        res, steps = skeleff.eval_sk(art.skeleff_term, fuel)
        return RunOutcome(observe_skeleff(res), steps)
    res, steps = noeff.eval_noeff(art.noeff_term, fuel)
    return RunOutcome(observe_noeff(res), steps)


def run_path(path: str, backend: str = "exeff", fuel: int = 100_000, keep_trace: bool = False) -> RunOutcome:
    with open(path, encoding="utf-8") as f:
        return run_text(f.read(), backend, fuel, keep_trace)


# ---------------------------------------------------------------------------
# Differential checking


def differential_check_text(
    text: str, program_id: str = "<text>", fuel: int = 100_000, check_each_step: bool = True
) -> DiffReport:
    """Evaluate on all three backends, asserting the metatheorems along the way.

    Along the core trace every step must preserve the exact type, and the
    erasures of consecutive terms must be congruent.  Any violation or
    cross-backend disagreement produces a failing report.
    """
    report = DiffReport(program_id)
    art = compile_text(text, stage="noeff")
    env = exeff.TypeEnv(art.source_sig)

    term = art.exeff_term
    ty = exeff.typecheck_comp(env, term)
    steps = 0
    while not exeff.is_comp_result(term):
        nxt = exeff.step_comp(term)
        if nxt is None:
            report.agreement = False
            report.failure = "metatheory: well-typed non-result failed to step"
            return report
        if check_each_step:
            ty2 = exeff.typecheck_comp(env, nxt)
            if not alpha_eq_cty(ty2, ty):
                report.agreement = False
                report.failure = "metatheory: a step changed the subject's type"
                return report
            if not skeleff.congruent(skeleff.erase_comp({}, term), skeleff.erase_comp({}, nxt), fuel):
                report.agreement = False
                report.failure = "metatheory: erasure of a step is not congruent"
                return report
        term = nxt
        steps += 1
        if steps > fuel:
            report.agreement = False
            report.failure = "fuel exhausted on the core backend"
            return report
    report.observations["exeff"] = observe_exeff(term)
    report.steps["exeff"] = steps

    sk_res, sk_steps = skeleff.eval_sk(art.skeleff_term, fuel)
    report.observations["skeleff"] = observe_skeleff(sk_res)
    report.steps["skeleff"] = sk_steps

    try:
        n_res, n_steps = noeff.eval_noeff(art.noeff_term, fuel)
    except StuckTerm:
        report.agreement = False
        report.failure = "no-stuck violation: elaborated pure program got stuck"
        return report
    report.observations["noeff"] = observe_noeff(n_res)
    report.steps["noeff"] = n_steps

    obs = set(str(o) for o in report.observations.values())
    if len(obs) != 1:
        report.agreement = False
        report.failure = "backends disagree: " + ", ".join(
            f"{k}={v}" for k, v in sorted(report.observations.items())
        )
    return report


def differential_check(path: str, fuel: int = 100_000, check_each_step: bool = True) -> DiffReport:
    with open(path, encoding="utf-8") as f:
        return differential_check_text(f.read(), path, fuel, check_each_step)


# ---------------------------------------------------------------------------
# Dumps


def dump_constraints(outcome: infer.InferOutcome) -> str:
    lines = []
    anns = sorted(
        (it for it in outcome.generated if isinstance(it, infer.SkelAnn)), key=lambda it: it.var.id
    )
    subs = sorted(
        (it for it in outcome.generated if isinstance(it, infer.SubCt)), key=lambda it: it.co.id
    )
    for it in anns:
        lines.append(f"a{it.var.id} : {display.show_skeleton(it.skel)}")
    for it in subs:
        lines.append(f"w{it.co.id} : {display.show_constraint(it.constraint)}")
    lines.append("--- substitution ---")
    s = outcome.subst
    for sid in sorted(s.skel):
        lines.append(f"s{sid} := {display.show_skeleton(s.skel[sid])}")
    for tid in sorted(s.ty):
        lines.append(f"a{tid} := {display.show_vty(s.ty[tid])}")
    for did in sorted(s.dirt):
        lines.append(f"d{did} := {display.show_dirt(s.dirt[did])}")
    for wid in sorted(s.co):
        lines.append(f"w{wid} := {display.show_coercion(s.co[wid])}")
    return "\n".join(lines) + "\n"


def dump_stage(art: PipelineArtifacts, stage: str) -> str:
    if stage == "constraints":
        return dump_constraints(art.inferred)
    if stage == "exeff":
        return display.show_comp(display.canonicalize(art.exeff_term)) + "\n"
    if stage == "skeleff":
        return display.show_sk_comp(display.canonicalize(art.skeleff_term)) + "\n"
    if stage == "noeff":
        return display.show_nterm(display.canonicalize(art.noeff_term)) + "\n"
    raise ValueError(f"unknown dump stage {stage!r}")
