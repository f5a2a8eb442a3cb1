"""Command-line front end.

Subcommands::

    validate     invariant report for a population, counts, margins or curves file
    estimate     two-arm (or single-trial design) report from a counts CSV
    simulate     draw a trial from a population file (``--seed`` required)
    sensitivity  witness sweep over tau and the lambda_s(rho) curve
    combine      design estimators: two-trial, three-arm-binary, closeout, cve-cpe, curves
    report       merge earlier JSON reports

JSON reports go to ``--output`` (or stdout); a short human summary goes to
stderr.  Failures print ``{"error": {...}}`` to stderr and exit with the code
of their category: 2 parse, 3 validation, 4 precondition, 5 internal.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .bounds import lambda_s_sensitivity, rho_endpoints, tau_sweep
from .counts import ARM_CODES, StratifiedTrialCounts
from .designs import (
    AssignmentDesign,
    CurveTable,
    closeout_identify,
    combine_curves,
    cve_cpe_curves,
    three_arm_binary_identify,
    two_trial_standardize,
)
from .effects import EFFECT_FIELDS, EffectReport, is_defined, report_from_values
from .errors import EXIT_CODES, MediationError, ParseError, ValidationError
from .estimators import get_estimator
from .identification import check_testable_constraints, theorem2_identify
from .popmodel import (
    PhiTable,
    load_population,
    oracle_effects,
    raw_population_from_json,
    validate_population,
)
from .trialsim import TrialDesignSpec, bootstrap_ci, expected_counts, simulate_trial

SCHEMA_VERSION = 1


@dataclass
class RunConfig:
    """Everything a subcommand needs; built from argv by :func:`parse_args`."""

    command: str
    inputs: list = field(default_factory=list)
    output: Optional[str] = None
    estimator: str = "si2"
    design: Optional[str] = None
    approach: str = "standardize"
    m2_design: Optional[str] = None
    predictor: Optional[str] = None
    weighting: str = "conditional"
    continuity: bool = False
    bootstrap: int = 0
    seed: Optional[int] = None
    workers: int = 1
    n_grid: int = 101
    tau_grid: str = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1"
    sizes: Optional[str] = None
    exposure: float = 1.0
    closeout: bool = False
    expected: bool = False
    curves_out: Optional[str] = None
    curve_out: Optional[str] = None
    percent: bool = False
    quiet: bool = False


# ---------------------------------------------------------------------------
# helpers


def _read_text(path: str) -> str:
    p = Path(path)
    if not p.is_file():
        raise ParseError(f"{path}: no such file")
    return p.read_text()


def _read_json(path: str):
    try:
        return json.loads(_read_text(path))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None


def _read_counts(path: str, continuity: bool = False) -> StratifiedTrialCounts:
    counts = StratifiedTrialCounts.from_csv_text(_read_text(path), source=path)
    return counts.with_continuity_correction() if continuity else counts


def _parse_sizes(text: str) -> dict:
    sizes = {}
    try:
        for part in text.split(","):
            name, n = part.split("=")
            name = name.strip().lower()
            arm = ARM_CODES[name] if name in ARM_CODES else int(name)
            sizes[arm] = int(n)
    except (ValueError, KeyError) as exc:
        raise ParseError(f"--sizes {text!r}: expected e.g. placebo=1000,vaccine=1000 ({exc})") from None
    return sizes


def _parse_predictor(text: str) -> dict:
    if Path(text).is_file():
        data = _read_json(text)
        return {str(k): int(v) for k, v in data.items()}
    try:
        return {k.strip(): int(v) for k, v in (part.split(":") for part in text.split(","))}
    except ValueError as exc:
        raise ParseError(f"--predictor {text!r}: expected stratum:0|1 pairs ({exc})") from None


def _parse_design(text: Optional[str]) -> Optional[AssignmentDesign]:
    if text is None:
        return None
    if Path(text).is_file():
        return AssignmentDesign.parse(_read_text(text))
    return AssignmentDesign.parse(text)


def _parse_grid(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ParseError(f"grid {text!r}: {exc}") from None


def _clean(obj):
    """JSON-safe copy: non-finite floats become null."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def _document(command: str, report: Optional[EffectReport], **extra) -> dict:
    doc = {"schema_version": SCHEMA_VERSION, "command": command, "testable_constraints": []}
    if report is not None:
        doc.update(report.to_dict())
    doc.update({k: v for k, v in extra.items() if v is not None})
    return _clean(doc)


def _emit(config: RunConfig, doc: dict):
    text = json.dumps(doc, sort_keys=True, indent=2) + "\n"
    if config.output:
        Path(config.output).write_text(text)
    else:
        sys.stdout.write(text)
    if not config.quiet and "effects" in doc:
        lines = []
        for name in EFFECT_FIELDS:
            v = doc["effects"].get(name)
            if v is None:
                shown = "undefined"
            elif config.percent:
                shown = f"{100 * v:.1f}%"
            else:
                shown = f"{v:.4f}"
            lines.append(f"{name:>9}: {shown}")
        sys.stderr.write("\n".join(lines) + "\n")


def _constraints(phi: PhiTable) -> list:
    return [c.to_dict() for c in check_testable_constraints(phi)]


def _with_bootstrap(config, counts, report, estimator, **kw):
    if config.bootstrap <= 0:
        return report
    if config.seed is None:
        raise ValidationError("--bootstrap needs --seed")
    boot = bootstrap_ci(counts, estimator, config.bootstrap, config.seed, workers=config.workers, **kw)
    return boot.apply(report)


# ---------------------------------------------------------------------------
# subcommands


def _detect_kind(path: str) -> str:
    if path.endswith(".csv"):
        head = _read_text(path).splitlines()[:1]
        return "curves" if head and head[0].startswith("m,") else "counts"
    data = _read_json(path)
    if isinstance(data, dict) and "phi_vaf" in data:
        return "phi"
    return "population"


def cmd_validate(config: RunConfig) -> int:
    path = config.inputs[0]
    kind = _detect_kind(path)
    violations = []
    if kind == "population":
        pop = raw_population_from_json(_read_json(path))
        violations = [v.to_dict() for v in validate_population(pop).violations]
    elif kind == "counts":
        counts = StratifiedTrialCounts.from_csv_text(_read_text(path), source=path)
        violations = [{"invariant": msg, "key": "counts", "magnitude": None} for msg in counts.issues()]
    elif kind == "phi":
        try:
            PhiTable.from_mapping(_read_json(path))
        except ValidationError as exc:
            violations = [{"invariant": str(exc), "key": "phi", "magnitude": None}]
    else:
        try:
            CurveTable.from_csv_text(_read_text(path), source=path)
        except ValidationError as exc:
            violations = [{"invariant": str(exc), "key": "curves", "magnitude": None}]
    doc = _document("validate", None, kind=kind, ok=not violations, violations=violations)
    _emit(config, doc)
    return 0 if not violations else EXIT_CODES["validation"]


def cmd_estimate(config: RunConfig) -> int:
    counts = _read_counts(config.inputs[0], config.continuity)
    est = get_estimator(config.estimator)
    kw = {}
    if config.estimator in ("cve_cpe", "closeout"):
        kw["design"] = _parse_design(config.m2_design)
    if config.estimator == "cve_cpe":
        kw["weighting"] = config.weighting
    if config.estimator == "three_arm_binary":
        kw["predictor"] = _parse_predictor(config.predictor) if config.predictor else None
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        report = est(counts, **kw)
    report = report.with_notes(*(str(w.message) for w in caught))
    report = _with_bootstrap(config, counts, report, config.estimator, **kw)
    constraints, margins, closed = [], None, None
    if counts.arm_size(0) and counts.arm_size(1):
        phi = counts.phi()
        margins = phi.to_dict()
        constraints = _constraints(phi)
        if phi.paf == 0 and phi.vn > 0:
            t2 = theorem2_identify(phi)
            closed = {
                "pi_components": dict(t2.pi_components),
                "ey1m0": t2.ey1m0,
                "constraint_violation": t2.constraint_violation,
            }
    doc = _document(
        "estimate",
        report,
        estimator=config.estimator,
        continuity_correction=config.continuity,
        phi=margins,
        closed_form=closed,
    )
    doc["testable_constraints"] = _clean(constraints)
    if config.curves_out and config.estimator == "cve_cpe":
        Path(config.curves_out).write_text(cve_cpe_curves(counts, kw.get("design"), config.weighting).to_csv())
    _emit(config, doc)
    return 0


def cmd_simulate(config: RunConfig) -> int:
    if config.seed is None:
        raise ValidationError("simulate requires --seed (no implicit randomness)")
    if not config.sizes:
        raise ValidationError("simulate requires --sizes")
    pop = load_population(config.inputs[0])
    spec = TrialDesignSpec(
        sizes=_parse_sizes(config.sizes),
        exposure=config.exposure,
        m2_design=_parse_design(config.m2_design),
        closeout=config.closeout,
        seed=config.seed,
    )
    counts = expected_counts(pop, spec) if config.expected else simulate_trial(pop, spec)
    text = counts.to_csv()
    if config.output:
        Path(config.output).write_text(text)
    else:
        sys.stdout.write(text)
    if not config.quiet:
        oracle = oracle_effects(pop)
        sys.stderr.write(
            "simulated " + ", ".join(f"arm {a}: {counts.arm_size(a):g}" for a in sorted(spec.sizes))
            + f"; oracle lambda_s={_fmt(oracle.lambda_s)}, lambda_a={_fmt(oracle.lambda_a)}\n"
        )
    return 0


def _fmt(v) -> str:
    return f"{v:.4f}" if is_defined(v) else "undefined"


def _phi_from_input(path: str, continuity: bool) -> PhiTable:
    if path.endswith(".csv"):
        return _read_counts(path, continuity).phi()
    return PhiTable.from_mapping(_read_json(path))


def cmd_sensitivity(config: RunConfig) -> int:
    phi = _phi_from_input(config.inputs[0], config.continuity)
    t2 = theorem2_identify(phi)
    ends = rho_endpoints(phi)
    curve = lambda_s_sensitivity(phi, n_grid=config.n_grid)
    taus = _parse_grid(config.tau_grid)
    sweep = [
        {"tau_s": t, "lambda_s": (float(v) if is_defined(v) else None)}
        for t, v in tau_sweep(phi, taus, workers=config.workers)
    ]
    if config.curve_out:
        Path(config.curve_out).write_text(curve.to_csv())
    doc = _document(
        "sensitivity",
        None,
        phi=phi.to_dict(),
        point_estimate={"ey1m0": t2.ey1m0, "lambda_s": t2.lambda_s if is_defined(t2.lambda_s) else None},
        rho_endpoints=ends.to_dict(),
        rho_monotone=curve.monotone,
        tau_sweep=sweep,
        curve=[
            {"rho": p.rho, "ey1m0": p.ey1m0, "lambda_s": p.lambda_s if is_defined(p.lambda_s) else None}
            for p in curve.points
        ],
    )
    doc["testable_constraints"] = _constraints(phi)
    _emit(config, doc)
    return 0


def cmd_combine(config: RunConfig) -> int:
    design = config.design
    diagnostics = None
    curves = None
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if design == "two-trial":
            if len(config.inputs) != 2:
                raise ValidationError("two-trial needs two counts files: VP then IP")
            vp = _read_counts(config.inputs[0], config.continuity)
            ip = _read_counts(config.inputs[1], config.continuity)
            curves = two_trial_standardize(vp, ip, config.approach)
            report = combine_curves(curves)
        elif design == "curves":
            curves = CurveTable.from_csv_text(_read_text(config.inputs[0]), source=config.inputs[0])
            report = combine_curves(curves)
        elif design == "cve-cpe":
            counts = _read_counts(config.inputs[0], config.continuity)
            curves = cve_cpe_curves(counts, _parse_design(config.m2_design), config.weighting)
            report = combine_curves(curves)
            report = _with_bootstrap(config, counts, report, "cve_cpe",
                                     design=_parse_design(config.m2_design), weighting=config.weighting)
        elif design == "closeout":
            counts = _read_counts(config.inputs[0], config.continuity)
            m2 = _parse_design(config.m2_design)
            if m2 is None:
                raise ValidationError("closeout needs --m2-design")
            res = closeout_identify(counts, m2)
            report = _with_bootstrap(config, counts, res.report, "closeout", design=m2)
            diagnostics = {**dict(res.diagnostics), "per_level": list(res.per_level)}
        elif design == "three-arm-binary":
            counts = _read_counts(config.inputs[0], config.continuity)
            if not config.predictor:
                raise ValidationError("three-arm-binary needs --predictor")
            pred = _parse_predictor(config.predictor)
            res = three_arm_binary_identify(counts, pred)
            report = _with_bootstrap(config, counts, res.report, "three_arm_binary", predictor=pred)
            diagnostics = dict(res.diagnostics)
        else:
            raise ValidationError(f"unknown design {design!r}")
    report = report.with_notes(*(str(w.message) for w in caught))
    if curves is not None:
        diagnostics = {**dict(curves.diagnostics), **(diagnostics or {})}
        if config.curves_out:
            Path(config.curves_out).write_text(curves.to_csv())
    doc = _document("combine", report, design=design, diagnostics=diagnostics)
    _emit(config, doc)
    return 0


def merge_reports(docs: Sequence[dict]) -> EffectReport:
    """First defined value of each field wins; xi filled in when derivable."""
    values, prov = {}, {}
    for doc in docs:
        effects = doc.get("effects", {})
        for name in EFFECT_FIELDS:
            if name not in values and effects.get(name) is not None:
                values[name] = float(effects[name])
                prov[name] = doc.get("provenance", {}).get(name, "undefined")
    t, i_s, i_a = values.get("theta_t"), values.get("theta_is"), values.get("theta_ia")
    if t is not None and i_s is not None and "theta_ds" not in values and i_s > 0:
        values["theta_ds"] = t / i_s
        prov["theta_ds"] = prov["theta_is"]
    if t is not None and i_a is not None and "theta_da" not in values and i_a > 0:
        values["theta_da"] = t / i_a
        prov["theta_da"] = prov["theta_ia"]
    if "xi" not in values and i_s is not None and i_a is not None and i_a > 0:
        values["xi"] = i_s / i_a
        kinds = {prov["theta_is"], prov["theta_ia"]}
        prov["xi"] = "identified-design" if "identified-design" in kinds else kinds.pop()
    return report_from_values(values, prov)


def cmd_report(config: RunConfig) -> int:
    docs = [_read_json(p) for p in config.inputs]
    for p, d in zip(config.inputs, docs):
        if not isinstance(d, dict) or d.get("schema_version") != SCHEMA_VERSION:
            raise ParseError(f"{p}: not a schema_version {SCHEMA_VERSION} report")
    report = merge_reports(docs)
    constraints = []
    for d in docs:
        constraints.extend(d.get("testable_constraints", []))
    doc = _document("report", report, sources=list(config.inputs))
    doc["testable_constraints"] = constraints
    _emit(config, doc)
    return 0


COMMANDS = {
    "validate": cmd_validate,
    "estimate": cmd_estimate,
    "simulate": cmd_simulate,
    "sensitivity": cmd_sensitivity,
    "combine": cmd_combine,
    "report": cmd_report,
}


def run_command(config: RunConfig) -> int:
    try:
        return COMMANDS[config.command](config)
    except MediationError as exc:
        return _fail(exc.category, str(exc))
    except (OSError, UnicodeDecodeError) as exc:
        return _fail("parse", str(exc))
    except Exception as exc:  # anything else is a bug, still reported as JSON
        return _fail("internal", f"{type(exc).__name__}: {exc}")


def _fail(category: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": {"category": category, "message": message}}, sort_keys=True) + "\n")
    return EXIT_CODES[category]


# ---------------------------------------------------------------------------
# argv


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vaxmed", description="Antibody mediation of vaccine efficacy.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, n_inputs="+"):
        sp.add_argument("inputs", nargs=n_inputs)
        sp.add_argument("-o", "--output")
        sp.add_argument("--percent", action="store_true", help="show the stderr summary in percent")
        sp.add_argument("--quiet", action="store_true")
        sp.add_argument("--continuity", action="store_true",
                        help="add 0.5 to every outcome cell before estimating (off by default)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--workers", type=int, default=1)

    sp = sub.add_parser("validate", help="report invariant violations of an input file")
    common(sp, 1)

    sp = sub.add_parser("estimate", help="effects from a counts CSV")
    common(sp, 1)
    sp.add_argument("--estimator", default="si2")
    sp.add_argument("--m2-design")
    sp.add_argument("--predictor")
    sp.add_argument("--weighting", choices=("conditional", "marginal"), default="conditional")
    sp.add_argument("--bootstrap", type=int, default=0, metavar="B")
    sp.add_argument("--curves-out")

    sp = sub.add_parser("simulate", help="simulate a trial from a population JSON")
    common(sp, 1)
    sp.add_argument("--sizes", required=True, help="e.g. placebo=1000,vaccine=1000,immunization=1000")
    sp.add_argument("--exposure", type=float, default=1.0)
    sp.add_argument("--m2-design")
    sp.add_argument("--closeout", action="store_true")
    sp.add_argument("--expected", action="store_true", help="write expected (fractional) counts instead")

    sp = sub.add_parser("sensitivity", help="tau sweep and lambda_s(rho) curve")
    common(sp, 1)
    sp.add_argument("--n-grid", type=int, default=101)
    sp.add_argument("--tau-grid", default=RunConfig.tau_grid)
    sp.add_argument("--curve-out", help="write the rho curve as CSV")

    sp = sub.add_parser("combine", help="design-based identification of the adding indirect effect")
    common(sp)
    sp.add_argument("--design", required=True,
                    choices=("two-trial", "three-arm-binary", "closeout", "cve-cpe", "curves"))
    sp.add_argument("--approach", choices=("quota", "standardize"), default="standardize")
    sp.add_argument("--m2-design")
    sp.add_argument("--predictor")
    sp.add_argument("--weighting", choices=("conditional", "marginal"), default="conditional")
    sp.add_argument("--bootstrap", type=int, default=0, metavar="B")
    sp.add_argument("--curves-out")

    sp = sub.add_parser("report", help="merge JSON reports")
    common(sp)
    return p


def parse_args(argv: Optional[Sequence[str]] = None) -> RunConfig:
    ns = build_parser().parse_args(argv)
    known = RunConfig.__dataclass_fields__
    kwargs = {k: v for k, v in vars(ns).items() if k in known}
    return RunConfig(**kwargs)


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        config = parse_args(argv)
    except SystemExit as exc:
        code = exc.code if isinstance(exc.code, int) else EXIT_CODES["parse"]
        return EXIT_CODES["parse"] if code not in (0,) else 0
    return run_command(config)


if __name__ == "__main__":
    sys.exit(main())
