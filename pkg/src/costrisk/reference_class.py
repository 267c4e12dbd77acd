"""Outside-view cost forecasting from historic overrun data.

A :class:`ReferenceClass` holds the real-terms cost overruns of comparable,
completed projects as decimal fractions (``0.52`` is +52%). Queries on the
class answer the usual reference class forecasting questions: what uplift
gives P80 certainty, which projects are extreme outliers, and what the
cumulative risk curve looks like.

All quantiles use Hazen plotting positions, ``(k - 0.5) / n``, with linear
interpolation between order statistics.
"""
from __future__ import annotations

import csv
import enum
import io
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from .quantiles import check_probability, hazen_cdf, hazen_quantile

#: Below this many projects a reference class is considered thin.
RECOMMENDED_MIN_SIZE = 20
OUTLIER_IQR_MULTIPLIER = 1.5
CSV_HEADER = ("project_id", "category", "overrun", "baseline")


class SmallReferenceClassWarning(UserWarning):
    """Reference class smaller than the usual 20-30 project minimum."""


class Category(str, enum.Enum):
    RAIL = "rail"
    ROAD = "road"
    FIXED_LINK = "fixed_link"
    BUILDING = "building"
    IT = "it"
    STANDARD_CIVIL = "standard_civil"
    NONSTANDARD_CIVIL = "nonstandard_civil"
    OTHER = "other"


class Baseline(str, enum.Enum):
    """Decision point the overrun was measured against."""

    OUTLINE_BUSINESS_CASE = "outline_business_case"
    FINAL_BUSINESS_CASE = "final_business_case"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class OverrunObservation:
    project_id: str
    overrun: float
    category: Category = Category.OTHER
    baseline: Baseline = Baseline.UNKNOWN

    def __post_init__(self):
        object.__setattr__(self, "category", Category(self.category))
        object.__setattr__(self, "baseline", Baseline(self.baseline))
        overrun = float(self.overrun)
        if not overrun > -1.0:
            raise ValueError(
                f"overrun for {self.project_id!r} must be > -1.0 (cost cannot be negative), got {overrun}"
            )
        object.__setattr__(self, "overrun", overrun)


@dataclass(frozen=True)
class ReferenceClass:
    """An immutable, sorted collection of overrun observations."""

    label: str
    observations: tuple[OverrunObservation, ...] = field(default=())

    def __post_init__(self):
        obs = tuple(sorted(self.observations, key=lambda o: (o.overrun, o.project_id)))
        object.__setattr__(self, "observations", obs)
        if 0 < len(obs) < RECOMMENDED_MIN_SIZE:
            warnings.warn(
                f"reference class {self.label!r} has {len(obs)} projects; "
                f"at least {RECOMMENDED_MIN_SIZE}-30 are recommended",
                SmallReferenceClassWarning,
                stacklevel=3,
            )

    @classmethod
    def from_overruns(cls, overruns: Iterable[float], label: str = "unnamed",
                      category: Category | str = Category.OTHER) -> "ReferenceClass":
        """Build a class from bare overrun fractions; ids are assigned ``p1, p2, ...``."""
        obs = [OverrunObservation(f"p{i}", v, category) for i, v in enumerate(overruns, start=1)]
        return cls(label, tuple(obs))

    def __len__(self) -> int:
        return len(self.observations)

    @cached_property
    def values(self) -> np.ndarray:
        """Sorted overruns as a read-only float array."""
        arr = np.array([o.overrun for o in self.observations], dtype=float)
        arr.setflags(write=False)
        return arr

    def _require_nonempty(self) -> np.ndarray:
        if len(self.observations) == 0:
            raise ValueError("empty reference class")
        return self.values

    def filter(self, *, category: Category | str | None = None,
               baseline: Baseline | str | None = None, label: str | None = None) -> "ReferenceClass":
        """Subset by category and/or baseline."""
        obs = self.observations
        if category is not None:
            obs = tuple(o for o in obs if o.category == Category(category))
        if baseline is not None:
            obs = tuple(o for o in obs if o.baseline == Baseline(baseline))
        return ReferenceClass(label or self.label, obs)


class SCurvePoint(NamedTuple):
    uplift: float
    cumulative_probability: float


@dataclass(frozen=True)
class OutlierReport:
    q1: float
    q3: float
    iqr: float
    threshold: float
    outlier_ids: frozenset[str]
    outlier_share: float


def empirical_cdf(ref: ReferenceClass, x: float) -> float:
    """Share of observations with overrun ``<= x`` (right-continuous step function)."""
    values = ref._require_nonempty()
    count = int(np.searchsorted(values, float(x), side="right"))
    return count / len(values)


def plotting_cdf(ref: ReferenceClass, x: float) -> float:
    """Cumulative probability of ``x`` read off the interpolated S-curve.

    Unlike :func:`empirical_cdf` this is the exact inverse of
    :func:`quantile`, so ``quantile(ref, plotting_cdf(ref, v)) == v`` for any
    observed ``v`` strictly inside the plotted range.
    """
    return hazen_cdf(ref._require_nonempty(), x)


def quantile(ref: ReferenceClass, p: float) -> float:
    """Overrun at certainty level ``p`` (e.g. ``p=0.8`` gives P80)."""
    values = ref._require_nonempty()
    return hazen_quantile(values, p)


def required_uplift(ref: ReferenceClass, confidence: float) -> float:
    """Uplift leaving at most ``1 - confidence`` chance of exceedance.

    Underruns in the class can push the quantile below zero; the uplift is
    clamped at zero because an uplift never reduces an estimate.
    """
    return max(0.0, quantile(ref, confidence))


def detect_outliers(ref: ReferenceClass, multiplier: float = OUTLIER_IQR_MULTIPLIER) -> OutlierReport:
    """Flag "black swan" projects at or above ``Q3 + 1.5 * IQR``.

    The threshold is inclusive. Quartiles come from :func:`quantile`, so they
    follow the same Hazen convention as every other query.
    """
    if len(ref) < 4:
        raise ValueError("too few observations for quartiles (need at least 4)")
    q1 = quantile(ref, 0.25)
    q3 = quantile(ref, 0.75)
    iqr = q3 - q1
    threshold = q3 + multiplier * iqr
    ids = frozenset(o.project_id for o in ref.observations if o.overrun >= threshold)
    return OutlierReport(q1, q3, iqr, threshold, ids, len(ids) / len(ref))


def s_curve(ref: ReferenceClass, resolution: int = 99) -> list[SCurvePoint]:
    """Sample the cumulative cost-risk curve on an even probability grid.

    The grid is ``i / (resolution + 1)`` for ``i = 1..resolution``, which keeps
    every probability strictly inside (0, 1).
    """
    ref._require_nonempty()
    if int(resolution) != resolution or resolution < 2:
        raise ValueError(f"resolution must be an integer >= 2, got {resolution!r}")
    resolution = int(resolution)
    points = []
    for i in range(1, resolution + 1):
        p = i / (resolution + 1)
        points.append(SCurvePoint(quantile(ref, p), p))
    return points


class ReferenceClassFormatError(ValueError):
    def __init__(self, path, line: int, message: str):
        self.path = path
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


def parse_reference_class(text: str, label: str = "unnamed", source: str = "<string>") -> ReferenceClass:
    """Parse reference class CSV text.

    The header must be ``project_id,category,overrun,baseline``. Lines whose
    first non-blank character is ``#`` are comments. Overruns are fractions.
    """
    header_seen = False
    obs: list[OverrunObservation] = []
    seen_ids: set[str] = set()
    for lineno, line in enumerate(io.StringIO(text), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        row = [cell.strip() for cell in next(csv.reader([line]))]
        if not header_seen:
            if tuple(row) != CSV_HEADER:
                raise ReferenceClassFormatError(
                    source, lineno, f"expected header {','.join(CSV_HEADER)!r}, got {stripped!r}"
                )
            header_seen = True
            continue
        if len(row) != len(CSV_HEADER):
            raise ReferenceClassFormatError(source, lineno, f"expected 4 fields, got {len(row)}")
        pid, cat, over, base = row
        if not pid:
            raise ReferenceClassFormatError(source, lineno, "empty project_id")
        if pid in seen_ids:
            raise ReferenceClassFormatError(source, lineno, f"duplicate project_id {pid!r}")
        try:
            value = float(over)
        except ValueError:
            raise ReferenceClassFormatError(source, lineno, f"overrun is not a number: {over!r}") from None
        try:
            obs.append(OverrunObservation(pid, value, Category(cat), Baseline(base or "unknown")))
        except ValueError as exc:
            raise ReferenceClassFormatError(source, lineno, str(exc)) from None
        seen_ids.add(pid)
    if not header_seen:
        raise ReferenceClassFormatError(source, 1, "missing header")
    return ReferenceClass(label, tuple(obs))


def load_reference_class(path: str | Path, label: str | None = None) -> ReferenceClass:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    return parse_reference_class(text, label=label or path.stem, source=str(path))
