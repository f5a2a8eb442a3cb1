"""Ratio-scale mediation estimands and the report that carries them.

All effects are ratios of expected potential outcomes::

    theta_t  = E[Y_1M1] / E[Y_0M0]          (VE = 1 - theta_t)
    theta_is = E[Y_1M1] / E[Y_1M0]          subtracting indirect
    theta_ds = E[Y_1M0] / E[Y_0M0]
    theta_ia = E[Y_0M1] / E[Y_0M0]          adding indirect
    theta_da = E[Y_1M1] / E[Y_0M1]
    xi       = E[Y_1M1] E[Y_0M0] / (E[Y_1M0] E[Y_0M1])
    lambda_* = log(theta_i*) / log(theta_t)

A quantity that cannot be computed is an :class:`Undefined` carrying the
reason, never ``0`` or ``nan``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Mapping, Optional, Union

PROVENANCES = ("oracle", "identified-SI2", "identified-design", "undefined")

EFFECT_FIELDS = (
    "ve",
    "theta_t",
    "theta_is",
    "theta_ia",
    "theta_ds",
    "theta_da",
    "xi",
    "lambda_s",
    "lambda_a",
)

EXPECTATION_KEYS = ("e11", "e10", "e01", "e00")


@dataclass(frozen=True)
class Undefined:
    reason: str

    def __bool__(self):
        return False

    def __repr__(self):
        return f"Undefined({self.reason!r})"


Value = Union[float, Undefined]


def is_defined(value) -> bool:
    return value is not None and not isinstance(value, Undefined)


@dataclass(frozen=True)
class CurvePoint:
    """Per-level controlled effects: theta_c(m), theta_ia(m), lambda_a(m)."""

    m: object
    theta_c: Value
    theta_ia: Value
    lambda_a_m: Value


@dataclass(frozen=True)
class EffectReport:
    ve: Value
    theta_t: Value
    theta_is: Value
    theta_ia: Value
    theta_ds: Value
    theta_da: Value
    xi: Value
    lambda_s: Value
    lambda_a: Value
    provenance: Mapping[str, str]
    expectations: Mapping[str, Optional[float]] = field(default_factory=dict)
    curves: Optional[tuple] = None
    ci: Mapping[str, tuple] = field(default_factory=dict)
    ci_undefined_fraction: Mapping[str, float] = field(default_factory=dict)
    notes: tuple = ()

    def get(self, name: str) -> Value:
        if name not in EFFECT_FIELDS:
            raise KeyError(name)
        return getattr(self, name)

    def defined(self, name: str) -> bool:
        return is_defined(self.get(name))

    def values(self) -> dict:
        return {name: getattr(self, name) for name in EFFECT_FIELDS}

    def with_ci(self, ci, undefined_fraction) -> "EffectReport":
        return replace(
            self,
            ci=MappingProxyType(dict(ci)),
            ci_undefined_fraction=MappingProxyType(dict(undefined_fraction)),
        )

    def with_notes(self, *notes) -> "EffectReport":
        return replace(self, notes=self.notes + tuple(notes))

    def to_dict(self) -> dict:
        out = {
            "effects": {},
            "provenance": dict(self.provenance),
            "undefined_reasons": {},
        }
        for name in EFFECT_FIELDS:
            value = getattr(self, name)
            if is_defined(value):
                out["effects"][name] = float(value)
            else:
                out["effects"][name] = None
                out["undefined_reasons"][name] = value.reason
        if self.expectations:
            out["expectations"] = {k: self.expectations.get(k) for k in EXPECTATION_KEYS}
        if self.curves is not None:
            out["curves"] = [_curve_point_dict(p) for p in self.curves]
        if self.ci:
            out["ci"] = {k: [float(lo), float(hi)] for k, (lo, hi) in self.ci.items()}
            out["ci_undefined_fraction"] = dict(self.ci_undefined_fraction)
        if self.notes:
            out["notes"] = list(self.notes)
        return out


def _curve_point_dict(point: CurvePoint) -> dict:
    from .levels import level_to_json

    def num(v):
        return float(v) if is_defined(v) else None

    return {
        "m": None if point.m is None else level_to_json(point.m),
        "theta_c": num(point.theta_c),
        "theta_ia": num(point.theta_ia),
        "lambda_a_m": num(point.lambda_a_m),
    }


def ratio(num, den, what: str) -> Value:
    if num is None or den is None:
        return Undefined(f"{what}: input not identified")
    if isinstance(num, Undefined):
        return num
    if isinstance(den, Undefined):
        return den
    if den == 0:
        return Undefined(f"{what}: zero denominator")
    return num / den


def log_ratio(indirect: Value, total: Value, what: str) -> Value:
    """``log(indirect) / log(total)``; undefined when total is 1 or a log hits 0."""
    if isinstance(indirect, Undefined):
        return indirect
    if isinstance(total, Undefined):
        return total
    if total == 1:
        return Undefined(f"{what}: theta_t = 1, log denominator is zero")
    if total <= 0 or indirect <= 0:
        return Undefined(f"{what}: log of a zero ratio")
    return math.log(indirect) / math.log(total) + 0.0  # no negative zero


def build_report(e11, e10, e01, e00, provenance: str, *, keep_expectations=True) -> EffectReport:
    """Every estimand from the four (possibly absent) cross-world means.

    ``e10`` is E[Y_1M0] and ``e01`` is E[Y_0M1]; pass ``None`` for a mean the
    caller could not identify.
    """
    if provenance not in PROVENANCES:
        raise ValueError(f"unknown provenance {provenance!r}")
    theta_t = ratio(e11, e00, "theta_t")
    theta_is = ratio(e11, e10, "theta_is")
    theta_ds = ratio(e10, e00, "theta_ds")
    theta_ia = ratio(e01, e00, "theta_ia")
    theta_da = ratio(e11, e01, "theta_da")
    if e10 is None or e01 is None:
        xi = Undefined("xi: needs both E[Y_1M0] and E[Y_0M1]")
    else:
        xi = ratio(e11 * e00, e10 * e01, "xi")
    ve = 1.0 - theta_t if is_defined(theta_t) else theta_t
    values = dict(
        ve=ve,
        theta_t=theta_t,
        theta_is=theta_is,
        theta_ia=theta_ia,
        theta_ds=theta_ds,
        theta_da=theta_da,
        xi=xi,
        lambda_s=log_ratio(theta_is, theta_t, "lambda_s"),
        lambda_a=log_ratio(theta_ia, theta_t, "lambda_a"),
    )
    prov = {k: (provenance if is_defined(v) else "undefined") for k, v in values.items()}
    expectations = {"e11": e11, "e10": e10, "e01": e01, "e00": e00} if keep_expectations else {}
    return EffectReport(
        **values,
        provenance=MappingProxyType(prov),
        expectations=MappingProxyType(expectations),
    )


def report_from_values(values: Mapping[str, Value], provenance: Mapping[str, str], **extra) -> EffectReport:
    """Assemble a report from already computed fields (missing ones undefined)."""
    full = {}
    prov = {}
    for name in EFFECT_FIELDS:
        v = values.get(name, Undefined(f"{name}: not identified by this design"))
        full[name] = v
        prov[name] = provenance.get(name, "undefined") if is_defined(v) else "undefined"
    return EffectReport(**full, provenance=MappingProxyType(prov), **extra)


__all__ = [
    "CurvePoint",
    "EFFECT_FIELDS",
    "EffectReport",
    "PROVENANCES",
    "Undefined",
    "build_report",
    "is_defined",
    "log_ratio",
    "ratio",
    "report_from_values",
]
