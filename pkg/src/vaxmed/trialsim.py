"""Finite-sample trials drawn from a known population, and the bootstrap.

Each participant carries a principal type (an atom of the population), an
exposure indicator Z independent of everything else, and an observed event
``Z * Y*`` where ``Y*`` is the type's potential outcome at the realized arm
and antibody level.  Participants sharing every observable are aggregated,
so a trial is simulated with multinomial and binomial draws per cell rather
than a loop over people; the resulting table has the same distribution.

Randomness is derived from a master seed through
``SeedSequence(seed, spawn_key=(k,))``: key ``k`` is the arm code for
simulation and the replicate index for the bootstrap, so any replicate can
be recomputed alone and parallel runs match sequential ones exactly.
"""

from __future__ import annotations

import math
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Callable, Mapping, Optional, Union

import numpy as np

from .counts import CountRow, StratifiedTrialCounts
from .designs import AssignmentDesign
from .effects import EFFECT_FIELDS, EffectReport, is_defined
from .errors import MediationError, SchemaError, ValidationError
from .levels import NEG
from .popmodel import BinaryTypeDistribution, GeneralPopulation, StratifiedPopulation, as_general, validate_population

ARMS = (0, 1, 2)


@dataclass(frozen=True)
class TrialDesignSpec:
    """Arm sizes, exposure probability, arm-2 assignment and closeout flag.

    ``sizes`` maps arm code (0 placebo, 1 vaccine, 2 immunization) to the
    number randomized.  Stratified populations are passed to
    :func:`simulate_trial` directly as a :class:`StratifiedPopulation`.
    """

    sizes: Mapping[int, int]
    exposure: float = 1.0
    m2_design: Optional[AssignmentDesign] = None
    closeout: bool = False
    seed: int = 0

    def __post_init__(self):
        problems = []
        for arm, n in self.sizes.items():
            if arm not in ARMS:
                problems.append(f"unknown arm {arm!r}")
            if int(n) != n or n <= 0:
                problems.append(f"arm {arm}: size must be a positive integer, got {n}")
        if not 0.0 < self.exposure <= 1.0:
            problems.append(f"exposure {self.exposure} outside (0, 1]")
        has_imm = 2 in self.sizes
        if has_imm and self.m2_design is None:
            problems.append("immunization arm needs an M2 assignment design")
        if self.closeout and not has_imm:
            problems.append("closeout vaccination requires an immunization arm")
        if problems:
            raise ValidationError("invalid trial spec: " + "; ".join(problems), problems)
        object.__setattr__(self, "sizes", MappingProxyType({int(a): int(n) for a, n in self.sizes.items()}))


Population = Union[BinaryTypeDistribution, GeneralPopulation, StratifiedPopulation]


def _cells(pop: Population):
    """(stratum label, atom, probability) for every type in every stratum."""
    report = validate_population(pop)
    report.raise_if_invalid()
    if isinstance(pop, StratifiedPopulation):
        out = []
        for label, w, sub in pop.strata:
            for atom in as_general(sub).atoms:
                out.append((label, atom, w * atom.prob))
        return as_general(pop.strata[0][2]).support, out
    gp = as_general(pop)
    return gp.support, [("all", atom, atom.prob) for atom in gp.atoms]


def _design_indices(support, design: AssignmentDesign):
    idx = []
    for lv in design.support:
        if lv not in support:
            raise SchemaError(f"design level {lv} not in the population support")
        idx.append(support.index(lv))
    return idx, np.array([design.pmf[lv] for lv in design.support])


def _observed_cells(support, cells, arm, spec, m2_index=None):
    """Observable key and Y* for each (cell, assigned level) of an arm."""
    out = []
    for c, (label, atom, _) in enumerate(cells):
        if arm == 0:
            out.append((c, None, (label, NEG), atom.y0[0], None))
        elif arm == 1:
            out.append((c, None, (label, support[atom.m1]), atom.y1[atom.m1], None))
        else:
            for j, k in enumerate(m2_index):
                closeout = support[atom.m1] if spec.closeout else None
                out.append((c, j, (label, support[k]), atom.y0[k], closeout))
    return out


def simulate_trial(pop: Population, spec: TrialDesignSpec) -> StratifiedTrialCounts:
    """Draw one trial; deterministic given ``spec.seed``."""
    support, cells = _cells(pop)
    probs = np.array([p for _, _, p in cells], dtype=float)
    probs = probs / probs.sum()
    m2_index, m2_p = (None, None)
    if 2 in spec.sizes:
        m2_index, m2_p = _design_indices(support, spec.m2_design)

    table = defaultdict(int)
    for arm in sorted(spec.sizes):
        rng = np.random.default_rng(np.random.SeedSequence(spec.seed, spawn_key=(arm,)))
        n_cell = rng.multinomial(spec.sizes[arm], probs)
        if arm == 2:
            n_assigned = rng.multinomial(n_cell, m2_p)  # shape (cells, levels)
        for c, j, (label, level), ystar, closeout in _observed_cells(support, cells, arm, spec, m2_index):
            n = int(n_assigned[c, j]) if arm == 2 else int(n_cell[c])
            if n == 0:
                continue
            events = int(rng.binomial(n, spec.exposure)) if ystar == 1 else 0
            if events:
                table[(arm, label, level, 1, None)] += events
            if n - events:
                co = closeout if arm == 2 else None
                table[(arm, label, level, 0, co)] += n - events
    return _to_counts(table, exact=False)


def expected_counts(pop: Population, spec: TrialDesignSpec) -> StratifiedTrialCounts:
    """Population-level cell expectations (fractional counts, no noise)."""
    support, cells = _cells(pop)
    m2_index, m2_p = (None, None)
    if 2 in spec.sizes:
        m2_index, m2_p = _design_indices(support, spec.m2_design)
    table = defaultdict(float)
    for arm in sorted(spec.sizes):
        for c, j, (label, level), ystar, closeout in _observed_cells(support, cells, arm, spec, m2_index):
            n = spec.sizes[arm] * cells[c][2] * (m2_p[j] if arm == 2 else 1.0)
            if n == 0:
                continue
            events = n * spec.exposure * ystar
            table[(arm, label, level, 1, None)] += events
            table[(arm, label, level, 0, closeout if arm == 2 else None)] += n - events
    return _to_counts({k: v for k, v in table.items() if v > 0}, exact=True)


def _to_counts(table, exact) -> StratifiedTrialCounts:
    rows = [CountRow(a, x, m, y, co, n) for (a, x, m, y, co), n in table.items()]
    return StratifiedTrialCounts.from_rows(rows, exact=exact).merged()


# ---------------------------------------------------------------------------
# bootstrap


@dataclass(frozen=True)
class BootstrapResult:
    ci: Mapping[str, tuple]
    undefined_fraction: Mapping[str, float]
    b: int
    replicates: Mapping[str, np.ndarray] = field(repr=False, default_factory=dict)

    def se(self, name: str) -> float:
        vals = self.replicates[name]
        vals = vals[np.isfinite(vals)]
        return float(np.std(vals, ddof=1)) if vals.size > 1 else float("nan")

    def apply(self, report: EffectReport) -> EffectReport:
        return report.with_ci(self.ci, self.undefined_fraction)


def _resample_groups(counts: StratifiedTrialCounts, stratify_by_stratum: bool):
    groups = defaultdict(list)
    for i, r in enumerate(counts.rows):
        key = (r.arm, r.stratum) if stratify_by_stratum else r.arm
        groups[key].append(i)
    return [(np.array(idx), np.array([counts.rows[i].count for i in idx], dtype=float)) for _, idx in sorted(groups.items())]


def resample_counts(counts: StratifiedTrialCounts, rng, stratify_by_stratum=False, groups=None) -> np.ndarray:
    """One bootstrap draw of the per-row counts, arm sizes held fixed."""
    groups = groups or _resample_groups(counts, stratify_by_stratum)
    out = np.zeros(len(counts.rows), dtype=np.int64)
    for idx, n in groups:
        total = int(round(n.sum()))
        if total == 0:
            continue
        out[idx] = rng.multinomial(total, n / n.sum())
    return out


def _replicate_rng(seed: int, i: int):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,)))


def bootstrap_ci(
    counts: StratifiedTrialCounts,
    estimator: Union[str, Callable],
    b: int,
    seed: int,
    stratify_by_stratum: bool = False,
    workers: int = 1,
    level: float = 0.95,
    **estimator_kwargs,
) -> BootstrapResult:
    """Percentile intervals for every report field.

    Participants are resampled within arm (and within stratum if
    requested).  A replicate whose estimator fails a precondition or
    returns an undefined field counts toward that field's undefined
    fraction; intervals use the defined replicates only.
    """
    from .estimators import get_estimator

    if b < 1:
        raise ValidationError("bootstrap needs b >= 1")
    est = get_estimator(estimator) if isinstance(estimator, str) else estimator
    groups = _resample_groups(counts, stratify_by_stratum)

    values = None
    vectorized = getattr(est, "vectorized", None)
    if vectorized is not None and not estimator_kwargs:
        try:
            est(counts)  # surfaces schema problems before resampling
        except SchemaError:
            raise
        except MediationError:
            pass
        draws = np.stack([resample_counts(counts, _replicate_rng(seed, i), groups=groups) for i in range(b)])
        values = vectorized(counts, draws)
    if values is None:
        try:
            est(counts, **estimator_kwargs)
        except SchemaError:
            raise
        except MediationError:
            pass

        def one(i):
            new = resample_counts(counts, _replicate_rng(seed, i), groups=groups)
            rows = tuple(
                CountRow(r.arm, r.stratum, r.mediator, r.outcome, r.closeout, int(n))
                for r, n in zip(counts.rows, new)
            )
            try:
                report = est(StratifiedTrialCounts(rows), **estimator_kwargs)
            except SchemaError:
                raise
            except MediationError:
                return {name: math.nan for name in EFFECT_FIELDS}
            return {name: (float(v) if is_defined(v) else math.nan) for name, v in report.values().items()}

        if workers > 1:
            with ThreadPoolExecutor(workers) as pool:
                results = list(pool.map(one, range(b)))
        else:
            results = [one(i) for i in range(b)]
        values = {name: np.array([r[name] for r in results]) for name in EFFECT_FIELDS}

    alpha = (1.0 - level) / 2.0
    ci, undefined = {}, {}
    for name in EFFECT_FIELDS:
        vals = np.asarray(values.get(name, np.full(b, np.nan)), dtype=float)
        ok = vals[np.isfinite(vals)]
        undefined[name] = 1.0 - ok.size / b
        if ok.size:
            lo, hi = np.percentile(ok, [100 * alpha, 100 * (1 - alpha)])
            ci[name] = (float(lo), float(hi))
    return BootstrapResult(MappingProxyType(ci), MappingProxyType(undefined), b, MappingProxyType(values))


__all__ = [
    "BootstrapResult",
    "TrialDesignSpec",
    "bootstrap_ci",
    "expected_counts",
    "resample_counts",
    "simulate_trial",
]
