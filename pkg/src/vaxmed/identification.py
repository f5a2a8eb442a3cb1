"""Map observed-data quantities to cross-world means and effects.

Two routes are implemented:

* the stratified mediation formula, which needs sequential ignorability
  and positivity of the mediator within each stratum;
* closed forms for the binary base model plus independence of potential
  outcomes from the potential mediator (the "two-assumption" model below),
  which need only the six observable margins of a two-arm trial.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from types import MappingProxyType
from typing import Mapping

from .effects import EffectReport, Value, build_report, log_ratio, ratio
from .errors import PositivityError, PreconditionError, ValidationError
from .levels import NEG, format_level, sort_levels
from .popmodel import PROB_TOL, PhiTable

CLAMP_TOL = 1e-9
CONSTRAINT_TOL = 1e-12


@dataclass(frozen=True)
class StratumData:
    """Observed summaries for one baseline stratum.

    ``means`` maps ``(arm, level)`` to E[Y | A=arm, M=level, X=x]; cells with
    no participants are simply absent.  ``mediator`` maps an arm to the
    distribution of its observed mediator.
    """

    weight: float
    means: Mapping[tuple, float]
    mediator: Mapping[int, Mapping]


@dataclass(frozen=True)
class StratifiedConditionalMeans:
    strata: Mapping[str, StratumData]

    def __post_init__(self):
        problems = []
        total = math.fsum(s.weight for s in self.strata.values())
        if abs(total - 1.0) > PROB_TOL:
            problems.append(f"stratum weights sum to {total!r}")
        for label, s in self.strata.items():
            if s.weight < 0:
                problems.append(f"stratum {label}: negative weight {s.weight}")
            for key, mean in s.means.items():
                if not 0.0 <= mean <= 1.0:
                    problems.append(f"stratum {label}: mean {mean} at {key} outside [0,1]")
            for arm, dist in s.mediator.items():
                mass = math.fsum(dist.values())
                if s.weight > 0 and abs(mass - 1.0) > PROB_TOL:
                    problems.append(f"stratum {label}: arm {arm} mediator mass {mass!r}")
                if any(p < 0 for p in dist.values()):
                    problems.append(f"stratum {label}: arm {arm} negative mediator probability")
        if problems:
            raise ValidationError("; ".join(problems), problems)

    @classmethod
    def single(cls, means: Mapping[tuple, float], mediator: Mapping[int, Mapping]) -> "StratifiedConditionalMeans":
        return cls({"all": StratumData(1.0, dict(means), dict(mediator))})

    def supported(self):
        """Strata with positive weight, in label order."""
        return [(label, s) for label, s in sorted(self.strata.items()) if s.weight > 0]

    @classmethod
    def from_json(cls, data) -> "StratifiedConditionalMeans":
        """``{"strata": [{"label", "weight", "means": [{"arm","m","mean"}],
        "mediator": {"<arm>": {"<level>": p}}}]}``."""
        from .errors import ParseError
        from .levels import parse_level

        strata = {}
        try:
            for s in data["strata"]:
                means = {(int(c["arm"]), parse_level(c["m"])): float(c["mean"]) for c in s["means"]}
                mediator = {
                    int(arm): {parse_level(lv): float(p) for lv, p in dist.items()}
                    for arm, dist in s["mediator"].items()
                }
                strata[str(s["label"])] = StratumData(float(s["weight"]), means, mediator)
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"conditional means JSON: {exc!r}") from None
        return cls(strata)


def _weighted_cell_sum(data: StratifiedConditionalMeans, a: int, a_prime: int) -> float:
    terms = []
    for label, s in data.supported():
        dist = s.mediator.get(a_prime)
        if dist is None:
            raise PositivityError(f"arm {a_prime} mediator distribution missing in stratum x={label}")
        for level in sort_levels(dist):
            p = dist[level]
            if p <= 0:
                continue
            mean = s.means.get((a, level))
            if mean is None:
                raise PositivityError(
                    f"PosM cell (x={label}, m={format_level(level)}) empty in arm {a}"
                )
            terms.append(s.weight * mean * p)
    return math.fsum(terms)


def mediation_formula(data: StratifiedConditionalMeans, a: int, a_prime: int) -> float:
    """E[Y_{a M_{a'}}] = sum_x Pr[x] sum_m E[Y | a, m, x] Pr[m | a', x]."""
    return _weighted_cell_sum(data, a, a_prime)


@dataclass(frozen=True)
class UndetectableResult:
    ey1m0: float
    notes: tuple = ()


def identify_ey1m0_undetectable(data: StratifiedConditionalMeans) -> float:
    """E[Y_{1 M0}] when nobody on placebo has detectable antibody.

    Reduces to the vaccine-arm event rate among those with undetectable
    antibody, standardized over strata.
    """
    return identify_ey1m0_undetectable_detail(data).ey1m0


def identify_ey1m0_undetectable_detail(data: StratifiedConditionalMeans) -> UndetectableResult:
    notes = []
    for label, s in data.supported():
        dist = s.mediator.get(0, {NEG: 1.0})
        detectable = [lv for lv, p in dist.items() if lv is not NEG and p > 0]
        if detectable:
            raise PreconditionError(
                f"placebo arm has detectable mediator in stratum x={label}; "
                "use mediation_formula instead"
            )
        if (1, NEG) not in s.means:
            raise PositivityError(f"PosM1 cell (x={label}, m=neg) empty in vaccine arm")
        if not any(arm == 1 and lv is not NEG for arm, lv in s.means):
            notes.append(
                f"stratum x={label} has no vaccinated participants with detectable antibody; "
                "its contribution compares undetectable levels only"
            )
    placebo_point_mass = {}
    for label, s in data.strata.items():
        mediator = dict(s.mediator)
        mediator[0] = {NEG: 1.0}
        placebo_point_mass[label] = StratumData(s.weight, s.means, mediator)
    ey1m0 = _weighted_cell_sum(StratifiedConditionalMeans(placebo_point_mass), 1, 0)
    return UndetectableResult(ey1m0, tuple(notes))


# ---------------------------------------------------------------------------
# binary base model with outcome/mediator independence


@dataclass(frozen=True)
class ClosedFormResult:
    """Closed-form identification from the six observable margins."""

    pi_components: Mapping[str, float]
    ey1m0: Value
    theta_is: Value
    lambda_s: Value
    constraint_violation: bool
    warnings: tuple = ()


def theorem2_identify(phi: PhiTable) -> ClosedFormResult:
    """Type proportions, E[Y_{1M0}], theta_Is and lambda_s from margins.

    Component keys use ``x`` as a wildcard over the collapsed outcome
    positions, e.g. ``"00/00x1"`` is the total of ``00/0001`` and ``00/0011``.
    """
    if phi.paf > 0 or phi.pas > 0:
        raise PreconditionError("placebo arm has detectable antibody; the closed form assumes none")
    vn = phi.vn
    if vn <= 0:
        raise PreconditionError("no vaccinated non-responders (phi_vn = 0); E[Y_1M0] not identified")
    va = phi.va
    comps = {
        "00/0000": phi.pns * vn,
        "00/00x1": phi.vns - phi.pns * vn,
        "00/x1x1": phi.vnf,
        "10/0000": phi.pns * va,
        "10/0xx1": phi.vas - phi.pns * va,
        "10/1111": phi.vaf,
    }
    notes = []
    violation = False
    for key in ("00/00x1", "10/0xx1"):
        v = comps[key]
        if v < 0:
            if v >= -CLAMP_TOL:
                msg = f"component {key}={v:.3g} clamped to 0"
                warnings.warn(msg, RuntimeWarning, stacklevel=2)
                notes.append(msg)
                comps[key] = 0.0
            else:
                violation = True
                notes.append(f"component {key}={v:.3g} is negative: testable constraint violated")
    ey1m0 = phi.vnf / vn
    theta_is = ratio(phi.vf, ey1m0, "theta_is")
    theta_t = ratio(phi.vf, phi.pnf, "theta_t")
    lambda_s = log_ratio(theta_is, theta_t, "lambda_s")
    return ClosedFormResult(
        pi_components=MappingProxyType(comps),
        ey1m0=ey1m0,
        theta_is=theta_is,
        lambda_s=lambda_s,
        constraint_violation=violation,
        warnings=tuple(notes),
    )


@dataclass(frozen=True)
class ConstraintCheck:
    constraint: str
    lhs: float | None
    rhs: float
    satisfied: bool | None
    evaluable: bool = True

    def to_dict(self):
        return {
            "constraint": self.constraint,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "satisfied": self.satisfied,
            "evaluable": self.evaluable,
        }


def check_testable_constraints(phi: PhiTable) -> list:
    """The two observable inequalities implied by the model.

    Event rates among vaccinated non-responders and among vaccinated
    responders cannot exceed the placebo event rate.
    """
    out = []
    for name, num, den in (
        ("phi_vnf/phi_vn <= phi_pnf", phi.vnf, phi.vn),
        ("phi_vaf/phi_va <= phi_pnf", phi.vaf, phi.va),
    ):
        if den <= 0:
            out.append(ConstraintCheck(name, None, phi.pnf, None, evaluable=False))
            continue
        lhs = num / den
        out.append(ConstraintCheck(name, lhs, phi.pnf, lhs <= phi.pnf + CONSTRAINT_TOL))
    return out


def effects_from_expectations(e11, e10, e01, e00) -> EffectReport:
    """Every estimand from identified cross-world means (``None`` = absent)."""
    if e00 is None or e00 <= 0:
        raise PreconditionError("E[Y_0M0] must be positive")
    return build_report(e11, e10, e01, e00, "identified-SI2")


def closed_form_report(phi: PhiTable) -> EffectReport:
    """Full report for a two-arm trial under the closed-form identification."""
    t2 = theorem2_identify(phi)
    if phi.pnf <= 0:
        raise PreconditionError("placebo event rate is zero; E[Y_0M0] must be positive")
    report = effects_from_expectations(phi.vf, t2.ey1m0, None, phi.pnf)
    return report.with_notes(*t2.warnings)


__all__ = [
    "ConstraintCheck",
    "StratifiedConditionalMeans",
    "StratumData",
    "ClosedFormResult",
    "check_testable_constraints",
    "effects_from_expectations",
    "identify_ey1m0_undetectable",
    "identify_ey1m0_undetectable_detail",
    "mediation_formula",
    "theorem2_identify",
    "closed_form_report",
]
