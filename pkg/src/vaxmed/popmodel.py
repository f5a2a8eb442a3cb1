"""Population ground truth and the brute-force cross-world oracle.

Two population encodings are supported:

* :class:`BinaryTypeDistribution` -- the twelve principal types left by the
  monotonicity assumptions (vaccination never blocks antibodies, never causes
  disease, antibodies never cause disease) together with ``M0 = 0``.  Keys are
  ``"<M1 M0>/<Y11 Y10 Y01 Y00>"``, e.g. ``"10/0101"``.
* :class:`GeneralPopulation` -- a sparse list of atoms over a discrete
  mediator support whose first level is the undetectable token ``NEG``.

The oracle reads each individual's potential outcome at their own potential
mediator value, so every cross-world mean is exact.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Mapping, Sequence, Union

from .effects import EffectReport, build_report
from .errors import ParseError, ValidationError
from .levels import NEG, Level, format_level, level_to_json, parse_level

PROB_TOL = 1e-12
MAX_SUPPORT = 16

M_PATTERNS = ("00", "10")
Y_PATTERNS = ("0000", "0001", "0011", "0101", "0111", "1111")
BINARY_KEYS = tuple(f"{m}/{y}" for m in M_PATTERNS for y in Y_PATTERNS)


@dataclass(frozen=True)
class Violation:
    invariant: str
    key: str
    magnitude: float

    def __str__(self):
        return f"{self.invariant} [{self.key}] ({self.magnitude:g})"

    def to_dict(self):
        return {"invariant": self.invariant, "key": self.key, "magnitude": self.magnitude}


@dataclass(frozen=True)
class ValidationResult:
    violations: tuple = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def raise_if_invalid(self, what="population"):
        if self.violations:
            detail = "; ".join(str(v) for v in self.violations)
            raise ValidationError(f"invalid {what}: {detail}", self.violations)


# ---------------------------------------------------------------------------
# binary base model


@dataclass(frozen=True)
class BinaryTypeDistribution:
    """Proportions of the 12 admissible principal types.

    The plain constructor stores what it is given so that
    :func:`validate_population` can report problems; use
    :meth:`from_mapping` to validate and normalize in one step.
    """

    pi: Mapping[str, float]

    @classmethod
    def from_mapping(cls, pi: Mapping[str, float]) -> "BinaryTypeDistribution":
        raw = cls(dict(pi))
        validate_population(raw).raise_if_invalid("type distribution")
        full = {k: float(pi.get(k, 0.0)) for k in BINARY_KEYS}
        total = math.fsum(full.values())
        return cls(MappingProxyType({k: v / total for k, v in full.items()}))

    @classmethod
    def uniform(cls) -> "BinaryTypeDistribution":
        return cls.from_mapping({k: 1.0 / 12 for k in BINARY_KEYS})

    @classmethod
    def point_mass(cls, key: str) -> "BinaryTypeDistribution":
        return cls.from_mapping({key: 1.0})

    @classmethod
    def factorized(cls, y_marginal: Mapping[str, float], p_responder: float) -> "BinaryTypeDistribution":
        """Potential outcomes independent of the potential mediator.

        ``y_marginal`` maps each of the six outcome patterns to its
        probability; ``p_responder`` is Pr[M1 = 1].
        """
        pi = {}
        for y in Y_PATTERNS:
            p = float(y_marginal.get(y, 0.0))
            pi[f"00/{y}"] = (1.0 - p_responder) * p
            pi[f"10/{y}"] = p_responder * p
        return cls.from_mapping(pi)

    def __getitem__(self, key: str) -> float:
        return float(self.pi.get(key, 0.0))

    def total(self, *keys) -> float:
        return math.fsum(self[k] for k in keys)

    def to_general(self) -> "GeneralPopulation":
        """Same population on support ``(NEG, 1)``.

        Outcome vectors are indexed by level: ``y1 = (Y10, Y11)``,
        ``y0 = (Y00, Y01)``.
        """
        atoms = []
        for key in BINARY_KEYS:
            p = self[key]
            if p == 0.0:
                continue
            m, y = key.split("/")
            y11, y10, y01, y00 = (int(c) for c in y)
            atoms.append(Atom(m1=1 if m[0] == "1" else 0, y1=(y10, y11), y0=(y00, y01), prob=p))
        return GeneralPopulation(support=(NEG, 1), atoms=tuple(atoms), monotone=True)

    def to_json(self) -> dict:
        return {"pi": {k: self[k] for k in BINARY_KEYS}}


@dataclass(frozen=True)
class PhiTable:
    """Observable within-arm proportions (arm, antibody, outcome).

    ``v``/``p``/``i`` = vaccine, placebo, passive immunization arm;
    ``a``/``n`` = detectable / no detectable antibody; ``f``/``s`` = failure
    (event) / success.
    """

    vaf: float
    vas: float
    vnf: float
    vns: float
    pnf: float
    pns: float
    paf: float = 0.0
    pas: float = 0.0
    imm_f: float | None = None
    imm_s: float | None = None

    def __post_init__(self):
        for name in ("vaf", "vas", "vnf", "vns", "pnf", "pns", "paf", "pas", "imm_f", "imm_s"):
            v = getattr(self, name)
            if v is None:
                continue
            if not (-PROB_TOL <= v <= 1 + PROB_TOL) or v != v:
                raise ValidationError(f"phi_{name}={v} is not a proportion")
        sums = {
            "vaccine": (self.vaf, self.vas, self.vnf, self.vns),
            "placebo": (self.pnf, self.pns, self.paf, self.pas),
        }
        if (self.imm_f is None) != (self.imm_s is None):
            raise ValidationError("immunization arm needs both phi_if and phi_is")
        if self.imm_f is not None:
            sums["immunization"] = (self.imm_f, self.imm_s)
        for arm, parts in sums.items():
            total = math.fsum(parts)
            if abs(total - 1.0) > PROB_TOL:
                raise ValidationError(f"{arm}-arm phi entries sum to {total!r}, not 1")

    @property
    def vn(self) -> float:
        return self.vnf + self.vns

    @property
    def va(self) -> float:
        return self.vaf + self.vas

    @property
    def vf(self) -> float:
        return self.vnf + self.vaf

    @property
    def vs(self) -> float:
        return self.vns + self.vas

    @classmethod
    def from_mapping(cls, data: Mapping[str, float]) -> "PhiTable":
        names = {
            "vaf": "phi_vaf", "vas": "phi_vas", "vnf": "phi_vnf", "vns": "phi_vns",
            "pnf": "phi_pnf", "pns": "phi_pns", "paf": "phi_paf", "pas": "phi_pas",
            "imm_f": "phi_if", "imm_s": "phi_is",
        }
        kwargs = {}
        for attr, key in names.items():
            if key in data:
                kwargs[attr] = data[key]
            elif attr in data:
                kwargs[attr] = data[attr]
        try:
            return cls(**{k: (None if v is None else float(v)) for k, v in kwargs.items()})
        except TypeError as exc:
            raise ParseError(f"phi table: {exc}") from None

    def to_dict(self) -> dict:
        out = {
            "phi_vaf": self.vaf, "phi_vas": self.vas, "phi_vnf": self.vnf, "phi_vns": self.vns,
            "phi_pnf": self.pnf, "phi_pns": self.pns, "phi_paf": self.paf, "phi_pas": self.pas,
        }
        if self.imm_f is not None:
            out["phi_if"] = self.imm_f
            out["phi_is"] = self.imm_s
        return out

    def as_tuple(self) -> tuple:
        return (self.vaf, self.vas, self.vnf, self.vns, self.pnf, self.pns, self.paf, self.pas)


def phi_from_pi(pi: BinaryTypeDistribution, *, immunization: bool = False) -> PhiTable:
    """Observable margins implied by a type distribution.

    With ``immunization=True`` the passive-immunization margins (placebo with
    the mediator set to 1, so the outcome is Y01) are filled in as well.
    """
    validate_population(pi).raise_if_invalid("type distribution")
    vaf = pi["10/1111"]
    vnf = pi.total("00/0101", "00/0111", "00/1111")
    vas = pi.total("10/0000", "10/0001", "10/0011", "10/0101", "10/0111")
    vns = pi.total("00/0000", "00/0001", "00/0011")
    pns = pi.total("00/0000", "10/0000")
    kwargs = {}
    if immunization:
        imm_f = pi.total(*(f"{m}/{y}" for m in M_PATTERNS for y in ("0011", "0111", "1111")))
        kwargs = {"imm_f": imm_f, "imm_s": 1.0 - imm_f}
    return PhiTable(vaf=vaf, vas=vas, vnf=vnf, vns=vns, pnf=1.0 - pns, pns=pns, **kwargs)


# ---------------------------------------------------------------------------
# general discrete mediator


@dataclass(frozen=True)
class Atom:
    """One principal type: potential M1 (index into the support) and the
    outcome vectors Y_1m, Y_0m over the support. M0 is always NEG; the
    immunization arm reuses ``y0``."""

    m1: int
    y1: tuple
    y0: tuple
    prob: float


@dataclass(frozen=True)
class GeneralPopulation:
    support: tuple
    atoms: tuple
    monotone: bool = False

    @classmethod
    def from_atoms(cls, support: Sequence[Level], atoms: Sequence[Atom], monotone=False) -> "GeneralPopulation":
        raw = cls(tuple(support), tuple(atoms), monotone)
        validate_population(raw).raise_if_invalid()
        total = math.fsum(a.prob for a in raw.atoms)
        atoms = tuple(Atom(a.m1, tuple(a.y1), tuple(a.y0), a.prob / total) for a in raw.atoms)
        return cls(raw.support, atoms, monotone)

    def level_index(self, level: Level) -> int:
        try:
            return self.support.index(level)
        except ValueError:
            raise KeyError(f"level {format_level(level)} not in support") from None

    def m1_distribution(self) -> dict:
        dist = {lv: 0.0 for lv in self.support}
        for a in self.atoms:
            dist[self.support[a.m1]] += a.prob
        return dist

    def to_json(self) -> dict:
        return {
            "support": [level_to_json(lv) for lv in self.support],
            "monotone": self.monotone,
            "atoms": [
                {
                    "m1": level_to_json(self.support[a.m1]),
                    "y1": list(a.y1),
                    "y0": list(a.y0),
                    "prob": a.prob,
                }
                for a in self.atoms
            ],
        }


@dataclass(frozen=True)
class StratifiedPopulation:
    """Baseline strata, each with its own population on a shared support."""

    strata: tuple  # of (label, weight, population)

    @classmethod
    def from_strata(cls, strata) -> "StratifiedPopulation":
        items = tuple((str(label), float(w), pop) for label, w, pop in strata)
        total = math.fsum(w for _, w, _ in items)
        if not total > 0:
            raise ValidationError("stratum weights must have positive total")
        out = cls(tuple((lab, w / total, p) for lab, w, p in items))
        validate_population(out).raise_if_invalid("stratified population")
        return cls(tuple((lab, w, _as_general(p)) for lab, w, p in out.strata))

    @property
    def support(self) -> tuple:
        return _as_general(self.strata[0][2]).support

    def flatten(self) -> GeneralPopulation:
        """Marginal population, mixing strata by weight."""
        atoms = []
        for _, w, pop in self.strata:
            for a in _as_general(pop).atoms:
                atoms.append(Atom(a.m1, a.y1, a.y0, w * a.prob))
        monotone = all(_as_general(p).monotone for _, _, p in self.strata)
        return GeneralPopulation(self.support, tuple(atoms), monotone)


Population = Union[BinaryTypeDistribution, GeneralPopulation, StratifiedPopulation]


def _as_general(pop) -> GeneralPopulation:
    if isinstance(pop, BinaryTypeDistribution):
        return pop.to_general()
    if isinstance(pop, StratifiedPopulation):
        return pop.flatten()
    if isinstance(pop, GeneralPopulation):
        return pop
    raise TypeError(f"not a population: {type(pop).__name__}")


def as_general(pop: Population) -> GeneralPopulation:
    return _as_general(pop)


# ---------------------------------------------------------------------------
# validation


def _binary_violations(pi: Mapping[str, float]) -> list:
    out = []
    for key, p in pi.items():
        if key not in BINARY_KEYS:
            out.append(Violation("inadmissible type key", str(key), float("nan")))
            continue
        if p != p:
            out.append(Violation("proportion is NaN", key, float("nan")))
        elif p < 0:
            out.append(Violation("negative proportion", key, float(p)))
        elif p > 1 + PROB_TOL:
            out.append(Violation("proportion above 1", key, float(p)))
    total = math.fsum(float(v) for v in pi.values() if v == v)
    if abs(total - 1.0) > PROB_TOL:
        out.append(Violation(f"mass {total:g} != 1", "total", total))
    return out


def _general_violations(pop: GeneralPopulation) -> list:
    out = []
    support = pop.support
    if not support or support[0] is not NEG:
        out.append(Violation("first support level must be the undetectable level", "support", float("nan")))
    if len(support) > MAX_SUPPORT:
        out.append(Violation(f"support larger than {MAX_SUPPORT} levels", "support", len(support)))
    numeric = [lv for lv in support[1:]]
    if any(lv is NEG for lv in numeric) or any(b <= a for a, b in zip(numeric, numeric[1:])):
        out.append(Violation("detectable levels must be distinct and increasing", "support", float("nan")))
    k = len(support)
    for i, a in enumerate(pop.atoms):
        tag = f"atom {i}"
        if not (0 <= a.m1 < k):
            out.append(Violation("m1 index outside support", tag, a.m1))
        for name, vec in (("y1", a.y1), ("y0", a.y0)):
            if len(vec) != k:
                out.append(Violation(f"{name} length differs from support", tag, len(vec)))
            elif any(v not in (0, 1) for v in vec):
                out.append(Violation(f"{name} entries must be 0/1", tag, float("nan")))
        if a.prob != a.prob:
            out.append(Violation("probability is NaN", tag, float("nan")))
        elif a.prob < 0:
            out.append(Violation("negative proportion", tag, a.prob))
        if pop.monotone and len(a.y1) == k and len(a.y0) == k:
            for name, vec in (("y1", a.y1), ("y0", a.y0)):
                if any(vec[j + 1] > vec[j] for j in range(k - 1)):
                    out.append(Violation(f"{name} increases with antibody level", tag, 1.0))
            if any(y1 > y0 for y1, y0 in zip(a.y1, a.y0)):
                out.append(Violation("vaccination causes disease (y1 > y0)", tag, 1.0))
    total = math.fsum(a.prob for a in pop.atoms if a.prob == a.prob)
    if abs(total - 1.0) > PROB_TOL:
        out.append(Violation(f"mass {total:g} != 1", "total", total))
    return out


def validate_population(pop) -> ValidationResult:
    """Every broken invariant of a population, with key and magnitude.

    Accepts the population types of this module or a raw ``{key: prob}``
    mapping of binary types.
    """
    if isinstance(pop, BinaryTypeDistribution):
        issues = _binary_violations(pop.pi)
    elif isinstance(pop, GeneralPopulation):
        issues = _general_violations(pop)
    elif isinstance(pop, StratifiedPopulation):
        issues = []
        total = math.fsum(w for _, w, _ in pop.strata)
        if abs(total - 1.0) > PROB_TOL:
            issues.append(Violation(f"stratum weights sum to {total:g}", "strata", total))
        supports = set()
        for label, w, sub in pop.strata:
            if w < 0:
                issues.append(Violation("negative stratum weight", label, w))
            for v in validate_population(sub).violations:
                issues.append(Violation(v.invariant, f"{label}: {v.key}", v.magnitude))
            supports.add(_as_general(sub).support if not validate_population(sub).violations else None)
        if len(supports) > 1:
            issues.append(Violation("strata do not share a mediator support", "strata", float("nan")))
    elif isinstance(pop, Mapping):
        issues = _binary_violations(pop)
    else:
        raise TypeError(f"cannot validate {type(pop).__name__}")
    return ValidationResult(tuple(issues))


def _require_valid(pop):
    validate_population(pop).raise_if_invalid()


# ---------------------------------------------------------------------------
# oracle


def oracle_cross_world(pop: Population, a: int, a_prime: int) -> float:
    """E[Y_{a M_{a'}}] by enumeration over principal types.

    ``a`` is the arm setting the outcome (2 = passive immunization, which
    acts as placebo with the mediator set); ``a_prime`` the arm whose
    potential mediator is plugged in.
    """
    if a not in (0, 1, 2) or a_prime not in (0, 1):
        raise ValueError(f"bad arms a={a}, a'={a_prime}")
    _require_valid(pop)
    gp = _as_general(pop)
    terms = []
    for atom in gp.atoms:
        m = atom.m1 if a_prime == 1 else 0
        y = atom.y1 if a == 1 else atom.y0
        terms.append(atom.prob * y[m])
    return math.fsum(terms)


def oracle_controlled(pop: Population, a: int, level: Level) -> float:
    """E[Y_{a m}] with the mediator set to ``level`` for everyone."""
    _require_valid(pop)
    gp = _as_general(pop)
    j = gp.level_index(level)
    return math.fsum(atom.prob * (atom.y1 if a == 1 else atom.y0)[j] for atom in gp.atoms)


def oracle_expectations(pop: Population) -> dict:
    return {
        "e11": oracle_cross_world(pop, 1, 1),
        "e10": oracle_cross_world(pop, 1, 0),
        "e01": oracle_cross_world(pop, 0, 1),
        "e00": oracle_cross_world(pop, 0, 0),
    }


def oracle_effects(pop: Population) -> EffectReport:
    e = oracle_expectations(pop)
    return build_report(e["e11"], e["e10"], e["e01"], e["e00"], "oracle")


# ---------------------------------------------------------------------------
# JSON


def population_from_json(data) -> Population:
    """Parse a population document (binary ``pi`` or general ``atoms``)."""
    if not isinstance(data, Mapping):
        raise ParseError("population JSON must be an object")
    if "pi" in data:
        pi = data["pi"]
        if not isinstance(pi, Mapping):
            raise ParseError("field 'pi' must be an object")
        try:
            return BinaryTypeDistribution.from_mapping({str(k): float(v) for k, v in pi.items()})
        except (TypeError, ValueError) as exc:
            raise ParseError(f"field 'pi': {exc}") from None
    if "strata" in data:
        strata = []
        for i, s in enumerate(data["strata"]):
            try:
                strata.append((s["label"], float(s["weight"]), population_from_json(s["population"])))
            except KeyError as exc:
                raise ParseError(f"strata[{i}]: missing field {exc}") from None
        return StratifiedPopulation.from_strata(strata)
    try:
        support = tuple(parse_level(lv) for lv in data["support"])
        atoms = []
        for i, a in enumerate(data["atoms"]):
            try:
                m1 = support.index(parse_level(a["m1"]))
            except ValueError:
                raise ParseError(f"atoms[{i}].m1: level {a['m1']!r} not in support") from None
            atoms.append(Atom(m1, tuple(int(v) for v in a["y1"]), tuple(int(v) for v in a["y0"]), float(a["prob"])))
    except KeyError as exc:
        raise ParseError(f"population JSON missing field {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ParseError(f"population JSON: {exc}") from None
    return GeneralPopulation.from_atoms(support, atoms, bool(data.get("monotone", False)))


def raw_population_from_json(data) -> Population:
    """Like :func:`population_from_json` but without validation, for reporting."""
    if isinstance(data, Mapping) and "pi" in data and isinstance(data["pi"], Mapping):
        return BinaryTypeDistribution({str(k): float(v) for k, v in data["pi"].items()})
    if isinstance(data, Mapping) and "atoms" in data:
        try:
            support = tuple(parse_level(lv) for lv in data["support"])
            atoms = []
            for a in data["atoms"]:
                lv = parse_level(a["m1"])
                m1 = support.index(lv) if lv in support else -1
                atoms.append(Atom(m1, tuple(int(v) for v in a["y1"]), tuple(int(v) for v in a["y0"]), float(a["prob"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"population JSON: {exc}") from None
        return GeneralPopulation(support, tuple(atoms), bool(data.get("monotone", False)))
    return population_from_json(data)


def population_to_json(pop: Population) -> dict:
    if isinstance(pop, StratifiedPopulation):
        return {
            "strata": [
                {"label": lab, "weight": w, "population": population_to_json(p)}
                for lab, w, p in pop.strata
            ]
        }
    return pop.to_json()


def load_population(path) -> Population:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    return population_from_json(data)


__all__ = [
    "Atom",
    "BINARY_KEYS",
    "BinaryTypeDistribution",
    "EffectReport",
    "GeneralPopulation",
    "PhiTable",
    "StratifiedPopulation",
    "ValidationResult",
    "Violation",
    "as_general",
    "load_population",
    "oracle_controlled",
    "oracle_cross_world",
    "oracle_effects",
    "oracle_expectations",
    "phi_from_pi",
    "population_from_json",
    "population_to_json",
    "validate_population",
]
