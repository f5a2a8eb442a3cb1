"""Named estimators: ``counts -> EffectReport``, shared by the CLI and the bootstrap."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .counts import StratifiedTrialCounts
from .designs import (
    AssignmentDesign,
    closeout_identify,
    combine_curves,
    cve_cpe_curves,
    three_arm_binary_identify,
)
from .effects import EFFECT_FIELDS, EffectReport
from .errors import PositivityError, PreconditionError, SchemaError
from .identification import (
    effects_from_expectations,
    identify_ey1m0_undetectable_detail,
    mediation_formula,
)
from .levels import NEG


def _require_arms(counts: StratifiedTrialCounts, arms, name):
    missing = [a for a in arms if counts.arm_size(a) == 0]
    if missing:
        raise SchemaError(f"estimator {name!r} needs arm(s) {missing} in the counts")


def si2(counts: StratifiedTrialCounts) -> EffectReport:
    """Two-arm identification under sequential ignorability of M given strata."""
    _require_arms(counts, (0, 1), "si2")
    cm = counts.conditional_means((0, 1))
    placebo_detectable = any(lv is not NEG for lv in counts.levels(0))
    notes = []
    if placebo_detectable:
        ey1m0 = mediation_formula(cm, 1, 0)
    else:
        detail = identify_ey1m0_undetectable_detail(cm)
        ey1m0, notes = detail.ey1m0, list(detail.notes)
    try:
        ey0m1 = mediation_formula(cm, 0, 1)
    except PositivityError:
        ey0m1 = None
    e00 = counts.mean(arm=0)
    if not e00:
        raise PreconditionError("placebo event rate is zero")
    report = effects_from_expectations(counts.mean(arm=1), ey1m0, ey0m1, e00)
    return report.with_notes(*notes)


def _si2_vectorized(counts: StratifiedTrialCounts, draws: np.ndarray):
    """All bootstrap replicates at once for the single-stratum two-arm case."""
    rows = counts.rows
    if len({r.stratum for r in rows}) != 1 or any(r.arm == 0 and r.mediator not in (None, NEG) for r in rows):
        return None
    vac = np.array([r.arm == 1 for r in rows])
    pla = np.array([r.arm == 0 for r in rows])
    neg = np.array([r.mediator is NEG or r.mediator is None for r in rows])
    ev = np.array([r.outcome == 1 for r in rows])
    d = draws.astype(float)
    nv = d[:, vac].sum(1)
    npl = d[:, pla].sum(1)
    with np.errstate(divide="ignore", invalid="ignore"):
        e11 = d[:, vac & ev].sum(1) / nv
        e00 = d[:, pla & ev].sum(1) / npl
        e10 = d[:, vac & ev & neg].sum(1) / d[:, vac & neg].sum(1)
        theta_t = e11 / e00
        theta_is = e11 / e10
        theta_ds = e10 / e00
        log_t = np.log(theta_t)
        lam = np.where(log_t != 0, np.log(theta_is) / log_t, np.nan)
    nan = np.full(len(d), np.nan)
    out = {name: nan for name in EFFECT_FIELDS}
    out.update(ve=1 - theta_t, theta_t=theta_t, theta_is=theta_is, theta_ds=theta_ds, lambda_s=lam)
    return {k: np.where(np.isfinite(v), v, np.nan) for k, v in out.items()}


si2.vectorized = _si2_vectorized


def cve_cpe(counts: StratifiedTrialCounts, design: AssignmentDesign | None = None, weighting="conditional") -> EffectReport:
    _require_arms(counts, (0, 1), "cve_cpe")
    return combine_curves(cve_cpe_curves(counts, design, weighting))


def closeout(counts: StratifiedTrialCounts, design: AssignmentDesign | None = None) -> EffectReport:
    _require_arms(counts, (0, 1, 2), "closeout")
    if design is None:
        raise SchemaError("closeout estimator needs the M2 assignment design")
    return closeout_identify(counts, design).report


def three_arm_binary(counts: StratifiedTrialCounts, predictor=None) -> EffectReport:
    _require_arms(counts, (0, 1, 2), "three_arm_binary")
    if predictor is None:
        raise SchemaError("three_arm_binary estimator needs a stratum -> predicted M1 map")
    return three_arm_binary_identify(counts, predictor).report


REGISTRY: dict = {
    "si2": si2,
    "cve_cpe": cve_cpe,
    "closeout": closeout,
    "three_arm_binary": three_arm_binary,
}


def get_estimator(name: str) -> Callable:
    try:
        return REGISTRY[name]
    except KeyError:
        raise SchemaError(f"unknown estimator {name!r}; choose from {', '.join(sorted(REGISTRY))}") from None


__all__ = ["REGISTRY", "get_estimator", "si2", "cve_cpe", "closeout", "three_arm_binary"]
