"""What the two-arm margins cannot pin down, and how far it can move.

Without the outcome/mediator independence assumption the six observable
margins are compatible with any proportion mediated between 0 and 1.
:func:`construct_pi_for_tau` builds an explicit witness for each point of
that range.  The correlation between the potential mediator and the
cross-world outcome Y_{1M0} then indexes a sensitivity analysis: zero
correlation gives the point-identified value, and the two extreme
correlations give lambda_s = 0 and lambda_s = 1.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import bisect

from .effects import Undefined, Value, is_defined
from .errors import InternalConsistencyError, PreconditionError, ValidationError
from .popmodel import BinaryTypeDistribution, PhiTable, oracle_effects

EPS = 1e-12
BISECT_XTOL = 1e-13
MONOTONE_SAMPLES = 1024
DEFAULT_GRID = 101


def _check_admissible(phi: PhiTable):
    if phi.paf > 0 or phi.pas > 0:
        raise PreconditionError("placebo arm has detectable antibody")
    slack = phi.pnf - phi.vf
    if slack < -EPS:
        raise PreconditionError(
            f"vaccine event rate {phi.vf:g} exceeds placebo rate {phi.pnf:g}: "
            "no type distribution without vaccine harm matches these margins"
        )
    if phi.vns - phi.pns > slack + EPS:
        raise PreconditionError("margins leave no room for a non-negative 00/0000 type")
    return max(slack, 0.0)


def max_tau(phi: PhiTable) -> float:
    """Largest reachable share of lifted types for these margins.

    Equals 1 whenever phi_vns <= phi_pns; otherwise some of the slack is
    forced into non-responders whose Y_10 is 0.
    """
    slack = _check_admissible(phi)
    if slack == 0:
        return 1.0
    base = max(0.0, phi.vns - phi.pns)
    return (slack - base) / slack


def construct_pi_for_tau(phi: PhiTable, tau_s: float) -> BinaryTypeDistribution:
    """A type distribution matching ``phi`` with lambda_s driven by ``tau_s``.

    The placebo-free slack ``phi_pnf - phi_vf`` is split between types whose
    Y_10 is 0 and "lifted" responder types (10/0101, 10/0111) whose Y_10 is 1
    but Y_11 is 0.  A fraction ``tau_s`` of the slack goes to lifted types, so
    E[Y_1M0] = phi_vf + tau_s * slack and lambda_s runs from 0 to 1.
    """
    if not 0.0 <= tau_s <= 1.0:
        raise ValidationError(f"tau_s={tau_s} outside [0, 1]")
    slack = _check_admissible(phi)
    base = max(0.0, phi.vns - phi.pns)
    lifted = tau_s * slack
    rest = slack - base - lifted
    if rest < -EPS:
        raise PreconditionError(
            f"tau_s={tau_s} not reachable for these margins (max {max_tau(phi):.6g})"
        )
    rest = max(rest, 0.0)
    third = phi.vnf / 3.0
    pi = {
        "00/0000": phi.vns - base,
        "00/0001": base / 2.0,
        "00/0011": base / 2.0,
        "00/0101": third,
        "00/0111": third,
        "00/1111": phi.vnf - 2.0 * third,
        "10/0000": phi.pns - phi.vns + base,
        "10/0001": rest / 2.0,
        "10/0011": rest / 2.0,
        "10/0101": lifted / 2.0,
        "10/0111": lifted / 2.0,
        "10/1111": phi.vaf,
    }
    return BinaryTypeDistribution.from_mapping({k: max(v, 0.0) for k, v in pi.items()})


def tau_sweep(phi: PhiTable, taus: Sequence[float], workers: int = 1) -> list:
    """Oracle lambda_s for the witness population at each tau (grid order kept)."""

    def one(tau):
        return (tau, oracle_effects(construct_pi_for_tau(phi, tau)).lambda_s)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(one, taus))
    return [one(t) for t in taus]


# ---------------------------------------------------------------------------
# correlation index


def rho_of_ey1m0(phi: PhiTable, e: float) -> Value:
    """Corr(M1, Y_{1M0}) implied by a value ``e`` of E[Y_{1M0}]."""
    vn = phi.vn
    if not 0.0 < vn < 1.0:
        return Undefined("rho: phi_vn must lie strictly between 0 and 1")
    if e <= 0.0 or e >= 1.0:
        return Undefined("rho: E[Y_1M0] at 0 or 1 has zero variance")
    return (e - phi.vnf / vn) * vn / math.sqrt((1.0 - vn) * vn * e * (1.0 - e))


@dataclass(frozen=True)
class RhoEndpoints:
    """Sorted correlation extremes with the E[Y_{1M0}] value behind each."""

    low: float
    high: float
    e_low: float
    e_high: float

    def __iter__(self):
        return iter((self.low, self.high))

    def to_dict(self):
        return {"low": self.low, "high": self.high, "e_low": self.e_low, "e_high": self.e_high}


def rho_endpoints(phi: PhiTable) -> RhoEndpoints:
    at_vf = rho_of_ey1m0(phi, phi.vf)
    at_pnf = rho_of_ey1m0(phi, phi.pnf)
    if not (is_defined(at_vf) and is_defined(at_pnf)):
        raise PreconditionError("degenerate margins: correlation endpoints undefined")
    if at_vf <= at_pnf:
        return RhoEndpoints(at_vf, at_pnf, phi.vf, phi.pnf)
    return RhoEndpoints(at_pnf, at_vf, phi.pnf, phi.vf)


@dataclass(frozen=True)
class SensitivityPoint:
    rho: float
    ey1m0: float
    lambda_s: Value


@dataclass(frozen=True)
class SensitivityCurve:
    points: tuple
    endpoints: RhoEndpoints
    monotone: bool

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["rho", "ey1m0", "lambda_s"])
        for p in self.points:
            lam = repr(float(p.lambda_s)) if is_defined(p.lambda_s) else ""
            w.writerow([repr(float(p.rho)), repr(float(p.ey1m0)), lam])
        return buf.getvalue()

    def lambda_at(self, rho: float) -> list:
        return [p.lambda_s for p in self.points if p.rho == rho]


def _lambda_from_e(phi: PhiTable, e: float) -> Value:
    den = math.log(phi.vf / phi.pnf)
    if den == 0:
        return Undefined("lambda_s: theta_t = 1")
    return math.log(phi.vf / e) / den + 0.0  # no negative zero


def lambda_s_sensitivity(phi: PhiTable, rho_grid: Sequence[float] | None = None, n_grid: int = DEFAULT_GRID) -> SensitivityCurve:
    """lambda_s as a function of Corr(M1, Y_{1M0}).

    Each rho is inverted to E[Y_{1M0}] on ``[phi_vf, phi_pnf]`` by bisection.
    If the correlation is not monotone on that bracket, every root is
    returned for each rho.
    """
    if not 0.0 < phi.vf < phi.pnf < 1.0:
        raise PreconditionError(
            "need 0 < phi_vf < phi_pnf < 1 for a non-degenerate sensitivity curve"
        )
    ends = rho_endpoints(phi)
    lo_e, hi_e = phi.vf, phi.pnf
    if rho_grid is None:
        rho_grid = np.linspace(ends.low, ends.high, n_grid)
        rho_grid[0], rho_grid[-1] = ends.low, ends.high

    sample_e = np.linspace(lo_e, hi_e, MONOTONE_SAMPLES)
    sample_rho = np.array([rho_of_ey1m0(phi, float(e)) for e in sample_e])
    steps = np.diff(sample_rho)
    monotone = bool(np.all(steps > 0) or np.all(steps < 0))

    points = []
    for rho in rho_grid:
        rho = float(rho)
        if rho < ends.low - EPS or rho > ends.high + EPS:
            raise ValidationError(f"rho={rho} outside [{ends.low}, {ends.high}]")
        if monotone:
            brackets = [(lo_e, hi_e)]
        else:
            brackets = _sign_change_brackets(sample_e, sample_rho - rho)
        roots = [_solve(phi, rho, a, b) for a, b in brackets]
        if not roots:
            raise InternalConsistencyError(f"no sign change for rho={rho} on the bracket")
        for e in roots:
            points.append(SensitivityPoint(rho, e, _lambda_from_e(phi, e)))
    return SensitivityCurve(tuple(points), ends, monotone)


def _sign_change_brackets(xs, fs) -> list:
    out = []
    for i in range(len(xs) - 1):
        if fs[i] == 0:
            out.append((float(xs[i]), float(xs[i])))
        elif fs[i] * fs[i + 1] < 0:
            out.append((float(xs[i]), float(xs[i + 1])))
    if fs[-1] == 0:
        out.append((float(xs[-1]), float(xs[-1])))
    return out


def _solve(phi: PhiTable, rho: float, a: float, b: float) -> float:
    def f(e):
        return rho_of_ey1m0(phi, e) - rho

    fa, fb = f(a), f(b)
    if fa == 0:
        return a
    if fb == 0:
        return b
    if fa * fb > 0:
        raise InternalConsistencyError(f"no sign change for rho={rho} on [{a}, {b}]")
    return float(bisect(f, a, b, xtol=BISECT_XTOL, maxiter=500))


__all__ = [
    "RhoEndpoints",
    "SensitivityCurve",
    "SensitivityPoint",
    "construct_pi_for_tau",
    "lambda_s_sensitivity",
    "max_tau",
    "rho_endpoints",
    "rho_of_ey1m0",
    "tau_sweep",
]
