"""Aggregated trial data: one row per (arm, stratum, mediator, outcome, closeout).

Arms are coded 0 = placebo, 1 = vaccine, 2 = passive immunization.  The
``mediator`` column holds the measured M1 for vaccine rows and the assigned
M2 for immunization rows; placebo rows may leave it blank (read as the
undetectable level).  ``closeout`` is the M1 revealed by closeout
vaccination and is only meaningful for immunization rows with outcome 0.
"""

from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Optional

from .errors import ParseError, ValidationError
from .levels import NEG, Level, format_level, parse_level, sort_levels
from .popmodel import PhiTable

ARM_NAMES = {0: "placebo", 1: "vaccine", 2: "immunization"}
ARM_CODES = {name: code for code, name in ARM_NAMES.items()}
CSV_HEADER = ("arm", "stratum", "mediator", "outcome", "closeout_mediator", "count")


@dataclass(frozen=True)
class CountRow:
    arm: int
    stratum: str
    mediator: Optional[Level]
    outcome: int
    closeout: Optional[Level]
    count: float


@dataclass(frozen=True)
class StratifiedTrialCounts:
    """Immutable table of trial counts.

    ``exact=True`` marks a table of expected (possibly fractional) counts,
    used to run estimators on population-level cell probabilities.
    """

    rows: tuple
    exact: bool = False

    @classmethod
    def from_rows(cls, rows: Iterable, exact: bool = False) -> "StratifiedTrialCounts":
        built = []
        for r in rows:
            if not isinstance(r, CountRow):
                r = CountRow(*r)
            built.append(r)
        out = cls(tuple(built), exact)
        problems = out.issues()
        if problems:
            raise ValidationError("invalid counts: " + "; ".join(problems), problems)
        return out

    def issues(self) -> list:
        problems = []
        for i, r in enumerate(self.rows):
            where = f"row {i + 1}"
            if r.arm not in ARM_NAMES:
                problems.append(f"{where}: unknown arm {r.arm!r}")
            if r.outcome not in (0, 1):
                problems.append(f"{where}: outcome must be 0 or 1")
            if r.count != r.count or r.count < 0:
                problems.append(f"{where}: negative count {r.count}")
            elif not self.exact and r.count != int(r.count):
                problems.append(f"{where}: non-integer count {r.count}")
            if r.arm == 1 and r.mediator is None:
                problems.append(f"{where}: vaccine row without mediator level")
            if r.arm == 2 and r.mediator is None:
                problems.append(f"{where}: immunization row without assigned M2")
            if r.closeout is not None and (r.arm != 2 or r.outcome != 0):
                problems.append(f"{where}: closeout level only allowed on immunization rows with outcome 0")
        return problems

    # -- basic queries -----------------------------------------------------

    def arms(self) -> set:
        return {r.arm for r in self.rows if r.count > 0}

    def strata(self) -> list:
        return sorted({r.stratum for r in self.rows})

    def levels(self, arm: int) -> list:
        return sort_levels({_mediator(r) for r in self.rows if r.arm == arm and r.count > 0})

    def select(self, **where) -> list:
        out = []
        for r in self.rows:
            if all(_field(r, k) == v for k, v in where.items()):
                out.append(r)
        return out

    def total(self, **where) -> float:
        return math.fsum(r.count for r in self.select(**where))

    def mean(self, **where) -> Optional[float]:
        n = self.total(**where)
        if n == 0:
            return None
        return self.total(outcome=1, **where) / n

    def arm_size(self, arm: int) -> float:
        return self.total(arm=arm)

    # -- derived summaries --------------------------------------------------

    def phi(self) -> PhiTable:
        """Observed two-arm margins (plus immunization margins if present)."""
        nv = self.arm_size(1)
        npl = self.arm_size(0)
        if nv == 0 or npl == 0:
            raise ValidationError("margins need both vaccine and placebo arms")

        def share(arm, detectable, outcome, n):
            tot = math.fsum(
                r.count for r in self.rows
                if r.arm == arm and r.outcome == outcome and (_mediator(r) is not NEG) == detectable
            )
            return tot / n

        kwargs = dict(
            vaf=share(1, True, 1, nv),
            vas=share(1, True, 0, nv),
            vnf=share(1, False, 1, nv),
            vns=share(1, False, 0, nv),
            pnf=share(0, False, 1, npl),
            pns=share(0, False, 0, npl),
            paf=share(0, True, 1, npl),
            pas=share(0, True, 0, npl),
        )
        ni = self.arm_size(2)
        if ni > 0:
            f = self.total(arm=2, outcome=1) / ni
            kwargs.update(imm_f=f, imm_s=1.0 - f)
        return PhiTable(**kwargs)

    def conditional_means(self, arms=(0, 1)):
        """Cell-wise empirical means per stratum, for the mediation formula."""
        from .identification import StratifiedConditionalMeans, StratumData

        n_all = math.fsum(r.count for r in self.rows if r.arm in arms)
        strata = {}
        for x in self.strata():
            # stratum weight pooled over the requested arms (randomization)
            nx = math.fsum(r.count for r in self.rows if r.arm in arms and r.stratum == x)
            means = {}
            mediator = {}
            for a in arms:
                na = self.total(arm=a, stratum=x)
                if na == 0:
                    continue
                dist = {}
                for lv in sort_levels({_mediator(r) for r in self.select(arm=a, stratum=x)}):
                    n_cell = self.total(arm=a, stratum=x, mediator=lv)
                    if n_cell == 0:
                        continue
                    means[(a, lv)] = self.total(arm=a, stratum=x, mediator=lv, outcome=1) / n_cell
                    dist[lv] = n_cell / na
                mediator[a] = dist
            strata[x] = StratumData(nx / n_all if n_all else 0.0, means, mediator)
        return StratifiedConditionalMeans(strata)

    def with_continuity_correction(self, amount: float = 0.5) -> "StratifiedTrialCounts":
        """Add ``amount`` to both outcome cells of every observed cell.

        Cells missing the complementary outcome get a row created so that a
        zero event count becomes ``amount`` rather than staying 0.
        """
        cells = defaultdict(float)
        keys = set()
        for r in self.rows:
            cells[(r.arm, r.stratum, r.mediator, r.outcome, r.closeout)] += r.count
            keys.add((r.arm, r.stratum, r.mediator))
        for arm, x, m in keys:
            for y in (0, 1):
                if not any(k[:4] == (arm, x, m, y) for k in cells):
                    cells[(arm, x, m, y, None)] = 0.0
        rows = [CountRow(a, x, m, y, c, n + amount) for (a, x, m, y, c), n in cells.items()]
        return StratifiedTrialCounts(tuple(sorted(rows, key=_row_key)), exact=True)

    def merged(self) -> "StratifiedTrialCounts":
        """Identical keys summed, rows in canonical order."""
        cells = defaultdict(float)
        for r in self.rows:
            cells[(r.arm, r.stratum, r.mediator, r.outcome, r.closeout)] += r.count
        rows = [CountRow(a, x, m, y, c, n if self.exact else int(n)) for (a, x, m, y, c), n in cells.items()]
        return replace(self, rows=tuple(sorted(rows, key=_row_key)))

    # -- IO -------------------------------------------------------------------

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            w.writerow([
                ARM_NAMES[r.arm],
                r.stratum,
                "" if r.mediator is None else format_level(r.mediator),
                r.outcome,
                "" if r.closeout is None else format_level(r.closeout),
                _format_count(r.count),
            ])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def read_csv(cls, path, exact: bool = False) -> "StratifiedTrialCounts":
        return cls.from_csv_text(Path(path).read_text(), source=str(path), exact=exact)

    @classmethod
    def from_csv_text(cls, text: str, source: str = "<counts>", exact: bool = False) -> "StratifiedTrialCounts":
        reader = csv.DictReader(io.StringIO(text))
        header = tuple(reader.fieldnames or ())
        missing = [c for c in CSV_HEADER if c not in header]
        if missing:
            raise ParseError(f"{source}: line 1: missing column(s) {', '.join(missing)}")
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            try:
                arm = _parse_arm(rec["arm"])
                mediator = parse_level(rec["mediator"]) if rec["mediator"].strip() else None
                closeout = parse_level(rec["closeout_mediator"]) if rec["closeout_mediator"].strip() else None
                outcome = int(rec["outcome"])
                count = float(rec["count"])
            except (ValueError, TypeError, AttributeError) as exc:
                raise ParseError(f"{source}: line {lineno}: {exc}") from None
            if count == int(count) and not exact:
                count = int(count)
            rows.append(CountRow(arm, rec["stratum"].strip() or "all", mediator, outcome, closeout, count))
        return cls.from_rows(rows, exact=exact)


def _parse_arm(text: str) -> int:
    t = text.strip().lower()
    if t in ARM_CODES:
        return ARM_CODES[t]
    if t in ("0", "1", "2"):
        return int(t)
    raise ValueError(f"unknown arm {text!r}")


def _mediator(r: CountRow):
    # placebo rows without a measurement are undetectable by assumption
    if r.mediator is None:
        return NEG
    return r.mediator


def _field(r: CountRow, name: str):
    if name == "mediator":
        return _mediator(r)
    return getattr(r, name)


def _row_key(r: CountRow):
    def lv(v):
        if v is None:
            return (-1, 0)
        return (0, 0) if v is NEG else (1, v)

    return (r.arm, r.stratum, lv(r.mediator), r.outcome, lv(r.closeout))


def _format_count(n) -> str:
    if float(n) == int(n):
        return str(int(n))
    return repr(float(n))


__all__ = ["ARM_NAMES", "CSV_HEADER", "CountRow", "StratifiedTrialCounts"]
