"""Trial designs that identify the adding indirect effect.

A passive-immunization arm (arm 2) sets the antibody level by design, so
its outcome at level m behaves like a placebo recipient's Y_0m.  Three ways
of turning that into E[Y_{0 M1}] are provided:

* a binary mediator whose vaccine response is predicted exactly by a
  baseline stratum (:func:`three_arm_binary_identify`);
* closeout vaccination of event-free immunization participants, which
  reveals their M1 (:func:`closeout_identify`);
* per-level controlled efficacy curves, from one three-arm trial or from
  two separate trials standardized to a common stratum mix
  (:func:`cve_cpe_curves`, :func:`two_trial_standardize`,
  :func:`combine_curves`).
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Mapping, Optional

from scipy.stats import chisquare

from .counts import StratifiedTrialCounts
from .effects import (
    CurvePoint,
    EffectReport,
    Undefined,
    Value,
    build_report,
    is_defined,
    log_ratio,
    ratio,
)
from .errors import (
    DataCompletenessError,
    ParseError,
    PositivityError,
    PreconditionError,
    SchemaError,
    ValidationError,
)
from .levels import NEG, Level, format_level, level_to_json, parse_level, sort_levels

WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class AssignmentDesign:
    """Known distribution used to assign antibody levels in arm 2."""

    pmf: Mapping

    def __post_init__(self):
        if not self.pmf:
            raise ValidationError("assignment design is empty")
        bad = [format_level(lv) for lv, p in self.pmf.items() if not p > 0]
        if bad:
            raise ValidationError(f"assignment design must be positive on every level; zero at {', '.join(bad)}")
        total = math.fsum(self.pmf.values())
        if abs(total - 1.0) > WEIGHT_TOL:
            raise ValidationError(f"assignment design sums to {total!r}")
        object.__setattr__(self, "pmf", MappingProxyType(dict(self.pmf)))

    @property
    def support(self) -> list:
        return sort_levels(self.pmf)

    @classmethod
    def uniform(cls, levels) -> "AssignmentDesign":
        levels = list(levels)
        return cls({lv: 1.0 / len(levels) for lv in levels})

    @classmethod
    def parse(cls, text: str) -> "AssignmentDesign":
        """``"neg:0.2,1:0.4,2:0.4"`` or a JSON object ``{"neg": 0.2, ...}``."""
        text = text.strip()
        try:
            if text.startswith("{"):
                import json

                items = json.loads(text).items()
            else:
                items = (part.split(":") for part in text.split(",") if part.strip())
            pmf = {parse_level(str(k)): float(v) for k, v in items}
        except (ValueError, TypeError) as exc:
            raise ParseError(f"assignment design {text!r}: {exc}") from None
        return cls(pmf)

    def to_json(self) -> dict:
        return {format_level(lv): self.pmf[lv] for lv in self.support}


@dataclass(frozen=True)
class CurveRow:
    m: Optional[Level]
    theta_c: Value
    theta_ia_m: Value
    weight: float


@dataclass(frozen=True)
class CurveTable:
    """Per-level controlled ratios with the vaccine-arm level weights."""

    rows: tuple
    diagnostics: Mapping = field(default_factory=dict)

    def __post_init__(self):
        total = math.fsum(r.weight for r in self.rows)
        if abs(total - 1.0) > WEIGHT_TOL:
            raise ValidationError(f"curve weights sum to {total!r}, not 1")
        for r in self.rows:
            if r.weight < 0:
                raise ValidationError(f"negative weight at m={_m_text(r.m)}")
            for name in ("theta_c", "theta_ia_m"):
                v = getattr(r, name)
                if is_defined(v) and not v >= 0:
                    raise ValidationError(f"{name} at m={_m_text(r.m)} is negative")

    def lambda_a_m(self) -> list:
        return [log_ratio(r.theta_ia_m, r.theta_c, f"lambda_a(m={_m_text(r.m)})") for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["m", "cve", "cpe", "theta_c", "theta_ia", "lambda_a_m", "weight"])
        for r, lam in zip(self.rows, self.lambda_a_m()):
            w.writerow([
                "" if r.m is None else format_level(r.m),
                _num(1.0 - r.theta_c if is_defined(r.theta_c) else None),
                _num(1.0 - r.theta_ia_m if is_defined(r.theta_ia_m) else None),
                _num(r.theta_c),
                _num(r.theta_ia_m),
                _num(lam),
                _num(r.weight),
            ])
        return buf.getvalue()

    @classmethod
    def from_csv_text(cls, text: str, source: str = "<curves>") -> "CurveTable":
        """Read rows with ``m``, ``weight`` and ``theta_c``/``theta_ia``
        (or ``cve``/``cpe``)."""
        reader = csv.DictReader(io.StringIO(text))
        cols = set(reader.fieldnames or ())
        if not {"m", "weight"} <= cols:
            raise ParseError(f"{source}: line 1: curve CSV needs columns m and weight")
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            try:
                m = parse_level(rec["m"]) if rec["m"].strip() else None
                theta_c = _opt(rec.get("theta_c"))
                if theta_c is None and _opt(rec.get("cve")) is not None:
                    theta_c = 1.0 - _opt(rec["cve"])
                theta_ia = _opt(rec.get("theta_ia"))
                if theta_ia is None and _opt(rec.get("cpe")) is not None:
                    theta_ia = 1.0 - _opt(rec["cpe"])
                weight = float(rec["weight"])
            except (ValueError, TypeError) as exc:
                raise ParseError(f"{source}: line {lineno}: {exc}") from None
            rows.append(CurveRow(
                m,
                theta_c if theta_c is not None else Undefined("theta_c absent"),
                theta_ia if theta_ia is not None else Undefined("theta_ia absent"),
                weight,
            ))
        return cls(tuple(rows))


def _opt(text):
    if text is None or not str(text).strip():
        return None
    return float(text)


def _num(v) -> str:
    if v is None or not is_defined(v):
        return ""
    return repr(float(v))


def _m_text(m) -> str:
    return "all" if m is None else format_level(m)


# ---------------------------------------------------------------------------
# curves


def _placebo_mean(counts: StratifiedTrialCounts) -> float:
    e00 = counts.mean(arm=0)
    if e00 is None:
        raise PositivityError("placebo arm is empty")
    if e00 == 0:
        raise PreconditionError("placebo event rate is zero; ratios against it are undefined")
    return e00


def _design_diagnostic(counts: StratifiedTrialCounts, design: AssignmentDesign) -> dict:
    """Compare realized arm-2 assignments with the design (reported only)."""
    levels = design.support
    observed = [counts.total(arm=2, mediator=lv) for lv in levels]
    n = math.fsum(observed)
    expected = [n * design.pmf[lv] for lv in levels]
    if len(levels) < 2 or n == 0:
        return {"assignment_chisq": 0.0, "assignment_p": 1.0}
    stat, p = chisquare(observed, expected)
    return {"assignment_chisq": float(stat), "assignment_p": float(p)}


def _check_assignments(counts: StratifiedTrialCounts, design: AssignmentDesign):
    empty = [format_level(lv) for lv in design.support if counts.total(arm=2, mediator=lv) == 0]
    if empty:
        raise PositivityError(f"no immunization participants assigned M2 = {', '.join(empty)}")
    extra = [format_level(lv) for lv in counts.levels(2) if lv not in design.pmf]
    if extra:
        raise PreconditionError(f"assigned M2 level(s) {', '.join(extra)} outside the design support")


def cve_cpe_curves(
    counts: StratifiedTrialCounts,
    design: AssignmentDesign | None = None,
    weighting: str = "conditional",
) -> CurveTable:
    """Controlled ratios theta_C(m) and theta_Ia(m) from one trial.

    ``weighting="conditional"`` standardizes vaccine-arm stratum means with
    Pr[X=x | M1=m]; ``"marginal"`` uses Pr[X=x] (the g-formula for
    E[Y_1m] under sequential ignorability).  Every (stratum, level) cell of
    the vaccine arm must be non-empty.
    """
    if weighting not in ("conditional", "marginal"):
        raise ValueError(f"unknown weighting {weighting!r}")
    if counts.arm_size(1) == 0:
        raise PositivityError("vaccine arm is empty")
    e00 = _placebo_mean(counts)
    levels = counts.levels(1)
    strata = sorted({r.stratum for r in counts.rows if r.arm == 1 and r.count > 0})
    empty = [
        f"(x={x}, m={format_level(lv)})"
        for x in strata
        for lv in levels
        if counts.total(arm=1, stratum=x, mediator=lv) == 0
    ]
    if empty:
        raise PositivityError("PosM1 cell(s) empty: " + ", ".join(empty))

    nv = counts.arm_size(1)
    n_strata = {x: counts.total(arm=1, stratum=x) for x in strata}
    has_imm = counts.arm_size(2) > 0
    diagnostics = {}
    if has_imm:
        if design is None:
            design = AssignmentDesign.uniform(levels)
            diagnostics["design"] = "assumed uniform over vaccine-arm levels"
        _check_assignments(counts, design)
        diagnostics.update(_design_diagnostic(counts, design))

    rows = []
    for lv in levels:
        n_m = counts.total(arm=1, mediator=lv)
        terms = []
        for x in strata:
            n_xm = counts.total(arm=1, stratum=x, mediator=lv)
            mean_xm = counts.total(arm=1, stratum=x, mediator=lv, outcome=1) / n_xm
            w = n_xm / n_m if weighting == "conditional" else n_strata[x] / nv
            terms.append(mean_xm * w)
        theta_c = math.fsum(terms) / e00
        if has_imm:
            mean2 = counts.mean(arm=2, mediator=lv)
            theta_ia = (
                mean2 / e00 if mean2 is not None
                else Undefined(f"no immunization participants at m={format_level(lv)}")
            )
        else:
            theta_ia = Undefined("no immunization arm")
        rows.append(CurveRow(lv, theta_c, theta_ia, n_m / nv))
    return CurveTable(tuple(rows), MappingProxyType(diagnostics))


def combine_curves(curves: CurveTable) -> EffectReport:
    """theta_T and theta_Ia as level-weighted sums of the controlled ratios."""

    def weighted(name):
        parts = []
        for r in curves.rows:
            v = getattr(r, name)
            if r.weight == 0:
                continue
            if not is_defined(v):
                return Undefined(f"{name} missing at m={_m_text(r.m)}")
            parts.append(v * r.weight)
        return math.fsum(parts)

    theta_t = weighted("theta_c")
    theta_ia = weighted("theta_ia_m")
    report = build_report(
        theta_t if is_defined(theta_t) else None,
        None,
        theta_ia if is_defined(theta_ia) else None,
        1.0,
        "identified-design",
        keep_expectations=False,
    )
    points = tuple(
        CurvePoint(r.m, r.theta_c, r.theta_ia_m, lam)
        for r, lam in zip(curves.rows, curves.lambda_a_m())
    )
    return replace(report, curves=points)


# ---------------------------------------------------------------------------
# three-arm trial, binary mediator, exact baseline predictor


@dataclass(frozen=True)
class DesignResult:
    ey0m1: float
    theta_ia: Value
    lambda_a: Value
    theta_t: Value
    report: EffectReport
    diagnostics: Mapping = field(default_factory=dict)


def _is_responder(level) -> bool:
    return level is not NEG and level != 0


def three_arm_binary_identify(counts: StratifiedTrialCounts, predictor: Mapping[str, int]) -> DesignResult:
    """E[Y_{0M1}] when a baseline stratum predicts the vaccine response.

    Predicted responders contribute their immunization-arm event rate,
    predicted non-responders their placebo event rate, each weighted by the
    share of participants in that predicted class.
    """
    for arm in (0, 1, 2):
        if counts.arm_size(arm) == 0:
            raise PositivityError(f"arm {arm} is empty; the design needs all three arms")
    strata = counts.strata()
    missing = [x for x in strata if x not in predictor]
    if missing:
        raise PreconditionError(f"predictor undefined for stratum/strata {', '.join(missing)}")
    bad = {x: v for x, v in predictor.items() if v not in (0, 1)}
    if bad:
        raise ValidationError(f"predictor values must be 0 or 1: {bad}")
    for lv in counts.levels(1):
        if lv is not NEG and lv != 1:
            raise PreconditionError(f"binary design but vaccine arm shows level {format_level(lv)}")

    resp = [x for x in strata if predictor[x] == 1]
    nonresp = [x for x in strata if predictor[x] == 0]

    def pooled(arm, group, outcome=None):
        kw = {} if outcome is None else {"outcome": outcome}
        return math.fsum(counts.total(arm=arm, stratum=x, **kw) for x in group)

    n_all = math.fsum(counts.arm_size(a) for a in (0, 1, 2))
    p_resp = math.fsum(counts.total(stratum=x) for x in resp) / n_all
    terms = []
    if p_resp > 0:
        n2 = pooled(2, resp)
        if n2 == 0:
            raise PositivityError("no immunization participants among predicted responders")
        terms.append(pooled(2, resp, 1) / n2 * p_resp)
    if p_resp < 1:
        n0 = pooled(0, nonresp)
        if n0 == 0:
            raise PositivityError("no placebo participants among predicted non-responders")
        terms.append(pooled(0, nonresp, 1) / n0 * (1.0 - p_resp))
    ey0m1 = math.fsum(terms)

    nv = counts.arm_size(1)
    wrong = math.fsum(
        r.count for r in counts.rows
        if r.arm == 1 and _is_responder(r.mediator) != (predictor[r.stratum] == 1)
    )
    misclass = wrong / nv
    if misclass > 0:
        warnings.warn(
            f"predictor disagrees with observed vaccine response for {misclass:.3%} of the vaccine arm",
            RuntimeWarning,
            stacklevel=2,
        )
    e00 = _placebo_mean(counts)
    e11 = counts.mean(arm=1)
    report = build_report(e11, None, ey0m1, e00, "identified-design")
    diagnostics = {"misclassification_rate": misclass, "p_predicted_responder": p_resp}
    if misclass > 0:
        report = report.with_notes(f"predictor misclassification rate {misclass:.6g}")
    return DesignResult(ey0m1, report.theta_ia, report.lambda_a, report.theta_t, report, MappingProxyType(diagnostics))


# ---------------------------------------------------------------------------
# closeout vaccination


@dataclass(frozen=True)
class CloseoutResult:
    ey2m1: float
    theta_ia: Value
    lambda_a: Value
    theta_t: Value
    report: EffectReport
    per_level: tuple
    diagnostics: Mapping = field(default_factory=dict)


def closeout_identify(counts: StratifiedTrialCounts, design: AssignmentDesign) -> CloseoutResult:
    """E[Y_{2M1}] = sum_m {Pr[M1=m] - Pr(M1=m | Y_2m=0) Pr(Y_2m=0)}.

    Pr[M1=m] comes from the vaccine arm; the two other factors come from the
    immunization participants assigned M2=m, using the closeout M1 of those
    without an event.
    """
    for arm in (0, 1, 2):
        if counts.arm_size(arm) == 0:
            raise PositivityError(f"arm {arm} is empty; the design needs all three arms")
    _check_assignments(counts, design)
    outside = [format_level(lv) for lv in counts.levels(1) if lv not in design.pmf]
    if outside:
        raise PreconditionError(f"vaccine-arm level(s) {', '.join(outside)} not covered by the design")
    incomplete = [r for r in counts.rows if r.arm == 2 and r.outcome == 0 and r.count > 0 and r.closeout is None]
    if incomplete:
        n = math.fsum(r.count for r in incomplete)
        raise DataCompletenessError(f"{n:g} event-free immunization participants lack a closeout M1")

    nv = counts.arm_size(1)
    terms = []
    per_level = []
    for lv in design.support:
        p_m1 = counts.total(arm=1, mediator=lv) / nv
        n_m = counts.total(arm=2, mediator=lv)
        n_m_ok = counts.total(arm=2, mediator=lv, outcome=0)
        p_no_event = n_m_ok / n_m
        p_m1_given_ok = (
            counts.total(arm=2, mediator=lv, outcome=0, closeout=lv) / n_m_ok if n_m_ok > 0 else 0.0
        )
        term = p_m1 - p_m1_given_ok * p_no_event
        terms.append(term)
        per_level.append({
            "m": level_to_json(lv),
            "p_m1": p_m1,
            "p_no_event": p_no_event,
            "p_m1_given_no_event": p_m1_given_ok,
        })
    ey2m1 = math.fsum(terms)
    notes = []
    if not 0.0 <= ey2m1 <= 1.0:
        msg = f"E[Y_2M1] estimate {ey2m1:.6g} outside [0,1]; clamped"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        notes.append(msg)
        ey2m1 = min(max(ey2m1, 0.0), 1.0)
    e00 = _placebo_mean(counts)
    e11 = counts.mean(arm=1)
    report = build_report(e11, None, ey2m1, e00, "identified-design").with_notes(*notes)
    return CloseoutResult(
        ey2m1,
        report.theta_ia,
        report.lambda_a,
        report.theta_t,
        report,
        tuple(per_level),
        MappingProxyType(_design_diagnostic(counts, design)),
    )


# ---------------------------------------------------------------------------
# two trials


def _stratum_mix(counts: StratifiedTrialCounts) -> dict:
    n = math.fsum(r.count for r in counts.rows)
    mix = {}
    for x in counts.strata():
        mix[x] = counts.total(stratum=x) / n
    return mix


def two_trial_standardize(
    counts_vp: StratifiedTrialCounts,
    counts_ip: StratifiedTrialCounts,
    approach: str = "standardize",
) -> CurveTable:
    """Curves from a vaccine/placebo trial and an immunization/placebo trial.

    ``"quota"`` assumes the second trial was recruited to match the first
    and returns a single pooled row; ``"standardize"`` reweights every
    stratum mean to the first trial's stratum mix, numerator and
    denominator alike.
    """
    if approach not in ("quota", "standardize"):
        raise ValueError(f"unknown approach {approach!r}")
    for name, c, arms in (("vaccine/placebo", counts_vp, (0, 1)), ("immunization/placebo", counts_ip, (0, 2))):
        for a in arms:
            if c.arm_size(a) == 0:
                raise PositivityError(f"{name} trial has an empty arm {a}")
    mix_vp = _stratum_mix(counts_vp)
    mix_ip = _stratum_mix(counts_ip)
    if not set(mix_vp) & set(mix_ip):
        raise SchemaError("the two trials share no stratum codes")
    tv = 0.5 * math.fsum(abs(mix_vp.get(x, 0.0) - mix_ip.get(x, 0.0)) for x in set(mix_vp) | set(mix_ip))
    diagnostics = {"stratum_total_variation": tv}

    if approach == "quota":
        theta_c = counts_vp.mean(arm=1) / _placebo_mean(counts_vp)
        theta_ia = counts_ip.mean(arm=2) / _placebo_mean(counts_ip)
        return CurveTable((CurveRow(None, theta_c, theta_ia, 1.0),), MappingProxyType(diagnostics))

    support = [x for x, w in sorted(mix_vp.items()) if w > 0]
    empty = []

    def stratum_mean(c, arm, x, **kw):
        m = c.mean(arm=arm, stratum=x, **kw)
        if m is None:
            lv = kw.get("mediator")
            empty.append(f"(trial={'VP' if c is counts_vp else 'IP'}, arm={arm}, x={x}"
                         + (f", m={format_level(lv)})" if "mediator" in kw else ")"))
            return 0.0
        return m

    def standardized(c, arm, **kw):
        return math.fsum(stratum_mean(c, arm, x, **kw) * mix_vp[x] for x in support)

    den_vp = standardized(counts_vp, 0)
    den_ip = standardized(counts_ip, 0)
    levels = counts_vp.levels(1)
    nv = counts_vp.arm_size(1)
    rows = []
    for lv in levels:
        num_c = standardized(counts_vp, 1, mediator=lv)
        num_ia = standardized(counts_ip, 2, mediator=lv)
        rows.append(CurveRow(
            lv,
            ratio(num_c, den_vp, f"theta_c(m={format_level(lv)})"),
            ratio(num_ia, den_ip, f"theta_ia(m={format_level(lv)})"),
            counts_vp.total(arm=1, mediator=lv) / nv,
        ))
    if empty:
        raise PositivityError("standardization needs non-empty cells: " + ", ".join(empty))
    return CurveTable(tuple(rows), MappingProxyType(diagnostics))


__all__ = [
    "AssignmentDesign",
    "CloseoutResult",
    "CurveRow",
    "CurveTable",
    "DesignResult",
    "closeout_identify",
    "combine_curves",
    "cve_cpe_curves",
    "three_arm_binary_identify",
    "two_trial_standardize",
]
