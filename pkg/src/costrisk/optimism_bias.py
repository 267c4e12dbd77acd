"""Published optimism-bias uplift schedules and the mitigation adjustment.

Three kinds of table live here:

* the staged CAPEX/OPEX uplifts by project development level (GRIP 1-5),
* confidence-level uplift curves per project type (e.g. rail P50/P80/P90/P95),
* upper/lower uplift bounds per project type and metric, used as the start
  point and residual floor when an uplift is reduced for managed risks.

The second and third are read from a CSV schedule file (``type,metric,anchor,
value``) so they can be replaced with newer data; the staged table is fixed.
"""
from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Mapping, NamedTuple

from .reference_class import Category

SCHEDULE_HEADER = ("type", "metric", "anchor", "value")
FACTOR_SUM_TOLERANCE = 1e-9


class CostKind(str, enum.Enum):
    CAPEX = "capex"
    OPEX = "opex"


class UpliftUnit(str, enum.Enum):
    PERCENT_OF_PRESENT_VALUE = "percent_of_present_value"
    PERCENT_PER_ANNUM = "percent_per_annum"


class Metric(str, enum.Enum):
    CAPEX = "capex"
    WORKS_DURATION = "works_duration"


class StageUplift(NamedTuple):
    cost_kind: CostKind
    stage: int
    value: float
    unit: UpliftUnit
    qra_required: bool


def _stage_rows():
    pv = UpliftUnit.PERCENT_OF_PRESENT_VALUE
    pa = UpliftUnit.PERCENT_PER_ANNUM
    capex = [0.66, 0.50, 0.40, 0.18, 0.06]
    opex = [(0.41, pv), (0.016, pa), (0.01, pa), (0.01, pa), (0.01, pa)]
    rows = {}
    for stage, value in enumerate(capex, start=1):
        rows[CostKind.CAPEX, stage] = StageUplift(CostKind.CAPEX, stage, value, pv, stage >= 4)
    for stage, (value, unit) in enumerate(opex, start=1):
        rows[CostKind.OPEX, stage] = StageUplift(CostKind.OPEX, stage, value, unit, stage >= 4)
    return rows


#: Risk treatment by project development level; stages 4-5 require a QRA at mean.
STAGE_TABLE: Mapping[tuple[CostKind, int], StageUplift] = _stage_rows()


def lookup_stage_uplift(cost_kind: CostKind | str, stage: int) -> StageUplift:
    kind = CostKind(cost_kind)
    if isinstance(stage, bool) or int(stage) != stage or not 1 <= stage <= 5:
        raise ValueError(f"stage must be an integer in 1..5, got {stage!r}")
    return STAGE_TABLE[kind, int(stage)]


def ob_basis_for_stage(stage: int) -> str:
    """Which cost the OB uplift applies to at a given GRIP stage.

    Stages 1-3 uplift the base cost alone; stages 4-5 uplift base plus the
    QRA mean risk.
    """
    return "risk_adjusted" if lookup_stage_uplift(CostKind.CAPEX, stage).qra_required else "base_only"


@dataclass(frozen=True)
class UpliftBounds:
    project_type: Category
    metric: Metric
    upper: float
    lower: float

    def __post_init__(self):
        object.__setattr__(self, "project_type", Category(self.project_type))
        object.__setattr__(self, "metric", Metric(self.metric))
        if not 0.0 <= self.lower <= self.upper:
            raise ValueError(f"need 0 <= lower <= upper, got lower={self.lower}, upper={self.upper}")


@dataclass(frozen=True)
class UpliftSchedule:
    """Confidence curves and bounds keyed by ``(project_type, metric)``."""

    curves: Mapping[tuple[Category, Metric], tuple[tuple[float, float], ...]]
    bounds: Mapping[tuple[Category, Metric], UpliftBounds]
    source: str = "<builtin>"

    def curve(self, project_type, metric=Metric.CAPEX) -> tuple[tuple[float, float], ...]:
        key = (Category(project_type), Metric(metric))
        if key not in self.curves:
            raise KeyError(f"no confidence schedule for project type {key[0].value!r}, metric {key[1].value!r}")
        return self.curves[key]

    def bounds_for(self, project_type, metric=Metric.CAPEX) -> UpliftBounds:
        key = (Category(project_type), Metric(metric))
        if key not in self.bounds:
            raise KeyError(f"no uplift bounds for project type {key[0].value!r}, metric {key[1].value!r}")
        return self.bounds[key]


def parse_schedule(text: str, source: str = "<string>") -> UpliftSchedule:
    curves: dict[tuple[Category, Metric], dict[float, float]] = {}
    limits: dict[tuple[Category, Metric], dict[str, float]] = {}
    header_seen = False
    for lineno, line in enumerate(io.StringIO(text), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        row = [c.strip() for c in next(csv.reader([line]))]
        if not header_seen:
            if tuple(row) != SCHEDULE_HEADER:
                raise ValueError(f"{source}:{lineno}: expected header {','.join(SCHEDULE_HEADER)!r}")
            header_seen = True
            continue
        if len(row) != 4:
            raise ValueError(f"{source}:{lineno}: expected 4 fields, got {len(row)}")
        try:
            key = (Category(row[0]), Metric(row[1]))
            value = float(row[3])
        except ValueError as exc:
            raise ValueError(f"{source}:{lineno}: {exc}") from None
        anchor = row[2]
        if anchor in ("upper", "lower"):
            limits.setdefault(key, {})[anchor] = value
            continue
        try:
            level = float(anchor)
        except ValueError:
            raise ValueError(f"{source}:{lineno}: anchor must be a probability, 'upper' or 'lower'") from None
        if not 0.0 < level < 1.0:
            raise ValueError(f"{source}:{lineno}: anchor probability out of range: {level}")
        points = curves.setdefault(key, {})
        if level in points:
            raise ValueError(f"{source}:{lineno}: duplicate anchor {level} for {row[0]}/{row[1]}")
        points[level] = value
    bounds = {}
    for key, lim in limits.items():
        if set(lim) != {"upper", "lower"}:
            raise ValueError(f"{source}: {key[0].value}/{key[1].value} needs both upper and lower rows")
        bounds[key] = UpliftBounds(key[0], key[1], upper=lim["upper"], lower=lim["lower"])
    frozen_curves = {}
    for key, points in curves.items():
        anchors = tuple(sorted(points.items()))
        if any(b[1] < a[1] for a, b in zip(anchors, anchors[1:])):
            raise ValueError(f"{source}: uplifts for {key[0].value}/{key[1].value} decrease with confidence")
        frozen_curves[key] = anchors
    return UpliftSchedule(frozen_curves, bounds, source)


def load_schedule(path: str | Path) -> UpliftSchedule:
    path = Path(path)
    return parse_schedule(path.read_text(encoding="utf-8"), source=str(path))


@lru_cache(maxsize=1)
def default_schedule() -> UpliftSchedule:
    text = resources.files("costrisk").joinpath("data/uplifts.csv").read_text(encoding="utf-8")
    return parse_schedule(text, source="costrisk/data/uplifts.csv")


def lookup_confidence_uplift(project_type, confidence: float, schedule: UpliftSchedule | None = None,
                             metric=Metric.CAPEX) -> float:
    """Uplift for a project type at a confidence level.

    Published anchors are returned exactly. Between anchors the uplift is
    interpolated linearly; outside the anchor range it is an error.

    >>> lookup_confidence_uplift("rail", 0.8)
    0.57
    """
    anchors = (schedule or default_schedule()).curve(project_type, metric)
    confidence = float(confidence)
    lo_p, hi_p = anchors[0][0], anchors[-1][0]
    if math.isnan(confidence) or not lo_p <= confidence <= hi_p:
        raise ValueError(f"confidence {confidence} outside schedule anchors [{lo_p}, {hi_p}]")
    for (p0, v0), (p1, v1) in zip(anchors, anchors[1:]):
        if confidence == p0:
            return v0
        if p0 < confidence < p1:
            return v0 + (confidence - p0) / (p1 - p0) * (v1 - v0)
    return anchors[-1][1]


class Factor(NamedTuple):
    name: str
    label: str
    share: float


@dataclass(frozen=True)
class FactorBreakdown:
    """Contribution of each optimism-bias factor to the total uplift."""

    factors: tuple[Factor, ...]

    def __post_init__(self):
        names = [f.name for f in self.factors]
        if len(set(names)) != len(names):
            raise ValueError("duplicate factor names in breakdown")
        if any(f.share < 0 for f in self.factors):
            raise ValueError("factor shares must be nonnegative")
        total = math.fsum(f.share for f in self.factors)
        if abs(total - 1.0) > FACTOR_SUM_TOLERANCE:
            raise ValueError(f"factor shares sum to {total}, expected 1")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.factors)


NONSTANDARD_CIVIL_CAPEX_BREAKDOWN = FactorBreakdown((
    Factor("procurement", "Procurement", 0.02),
    Factor("design_complexity", "Design complexity", 0.08),
    Factor("innovation", "Innovation", 0.09),
    Factor("environmental_impact", "Environmental impact", 0.05),
    Factor("business_case", "Inadequacy of the business case", 0.35),
    Factor("funding_availability", "Funding availability", 0.05),
    Factor("project_management_team", "Project management team", 0.02),
    Factor("project_intelligence", "Poor project intelligence", 0.09),
    Factor("site_characteristics", "Site characteristics", 0.05),
    Factor("economic_influences", "Economic influences", 0.03),
    Factor("legislation_regulation", "Legislation and regulation", 0.08),
    Factor("technology", "Technology", 0.08),
    Factor("other_external", "Other external influences", 0.01),
))


class Evidence(str, enum.Enum):
    OBJECTIVE = "objective"
    SUBJECTIVE = "subjective"


class FactorMitigation(NamedTuple):
    managed: float
    evidence: Evidence = Evidence.SUBJECTIVE


#: factor name -> how far that factor's risks are managed, and on what evidence
MitigationAssessment = Mapping[str, FactorMitigation]


def mitigated_uplift(bounds: UpliftBounds, breakdown: FactorBreakdown, assessment: MitigationAssessment,
                     require_objective: bool = True) -> float:
    """Reduce the upper-bound uplift by the share of managed risk factors.

    ``uplift = max(lower, upper * (1 - sum(share_i * managed_i)))``

    With ``require_objective`` set, factors whose mitigation rests only on
    subjective evidence count as unmanaged.
    """
    missing = [n for n in breakdown.names if n not in assessment]
    if missing:
        raise ValueError(f"assessment missing factors: {', '.join(missing)}")
    extra = sorted(set(assessment) - set(breakdown.names))
    if extra:
        raise ValueError(f"assessment has unknown factors: {', '.join(extra)}")
    reduction_terms = []
    for factor in breakdown.factors:
        managed, evidence = assessment[factor.name]
        if not 0.0 <= managed <= 1.0:
            raise ValueError(f"managed share for {factor.name!r} must be in [0, 1], got {managed}")
        if require_objective and Evidence(evidence) is not Evidence.OBJECTIVE:
            managed = 0.0
        reduction_terms.append(factor.share * managed)
    reduction = min(1.0, math.fsum(reduction_terms))
    return max(bounds.lower, bounds.upper * (1.0 - reduction))


def green_book_adjust(base_cost: float, uplift: float) -> float:
    """Apply an uplift to a capital cost estimate: ``base * (1 + uplift)``."""
    if base_cost < 0 or uplift < 0:
        raise ValueError(f"base cost and uplift must be nonnegative, got {base_cost}, {uplift}")
    return base_cost * (1.0 + uplift)


class Scenarios(NamedTuple):
    low: float
    central: float
    high: float


def sensitivity_scenarios(base_cost: float, bounds: UpliftBounds, central: float) -> Scenarios:
    """Low/central/high adjusted costs from the lower bound, central case and upper bound."""
    if not bounds.lower <= central <= bounds.upper:
        raise ValueError(f"central uplift {central} outside bounds [{bounds.lower}, {bounds.upper}]")
    return Scenarios(
        green_book_adjust(base_cost, bounds.lower),
        green_book_adjust(base_cost, central),
        green_book_adjust(base_cost, bounds.upper),
    )
