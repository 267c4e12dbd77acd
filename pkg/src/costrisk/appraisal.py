"""Cost estimate composition, viability metrics and audit rules.

Audit rules return an :class:`AuditFinding` holding the inputs, every
intermediate value and a verdict, so a finding can be re-derived by hand.
Money is a unitless scalar throughout.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Mapping

from .qra import SimulationResult, risk_allowance
from .reference_class import ReferenceClass, required_uplift

DEFAULT_RESIDUAL_UPLIFT = 0.06
DEFAULT_GAP_RATIO = 0.5


class Verdict(str, enum.Enum):
    PASS = "pass"
    FLAG = "flag"
    FAIL = "fail"


class ObBasis(str, enum.Enum):
    BASE_ONLY = "base_only"
    RISK_ADJUSTED = "risk_adjusted"


@dataclass(frozen=True)
class CostEstimate:
    base_cost: float
    risk_adjustment: float
    ob_adjustment: float
    total: float
    ob_basis: ObBasis
    price_basis: str = ""


@dataclass(frozen=True)
class AppraisalInput:
    funding_envelope: float
    pv_costs: float
    pv_benefits: float


@dataclass(frozen=True)
class AuditFinding:
    rule_id: str
    inputs: Mapping[str, Any]
    computed: Mapping[str, float]
    verdict: Verdict
    message: str
    notes: tuple[str, ...] = field(default=())

    def to_dict(self) -> dict:
        return {
            "rule_id": self.rule_id,
            "verdict": self.verdict.value,
            "inputs": dict(self.inputs),
            "computed": dict(self.computed),
            "message": self.message,
            "notes": list(self.notes),
        }


def _nonnegative(**values):
    for name, v in values.items():
        if v < 0:
            raise ValueError(f"{name} must be nonnegative, got {v}")


def compose_estimate(base: float, mean_risk: float, ob_uplift: float, ob_basis: ObBasis | str,
                     price_basis: str = "") -> CostEstimate:
    """Base cost + QRA mean risk + optimism-bias adjustment.

    With ``risk_adjusted`` the uplift applies to base plus mean risk (GRIP
    stages 4-5); with ``base_only`` it applies to the base cost (stages 1-3).
    """
    _nonnegative(base=base, mean_risk=mean_risk, ob_uplift=ob_uplift)
    basis = ObBasis(ob_basis)
    uplifted = base + mean_risk if basis is ObBasis.RISK_ADJUSTED else base
    ob = ob_uplift * uplifted
    return CostEstimate(base, mean_risk, ob, base + mean_risk + ob, basis, price_basis)


def mean_plus_six_check(total_estimate: float, p_level_risk: float, mean_risk: float,
                        uplift: float = DEFAULT_RESIDUAL_UPLIFT) -> AuditFinding:
    """Compare a project's P-level risk provision with QRA mean plus a residual OB uplift.

    The base cost is backed out of the total as ``total - p_level_risk``;
    the guidance benchmark is ``mean_risk + uplift * (base + mean_risk)``. A
    provision below the benchmark fails.
    """
    _nonnegative(p_level_risk=p_level_risk, mean_risk=mean_risk, uplift=uplift)
    if not total_estimate > p_level_risk:
        raise ValueError(f"total estimate {total_estimate} must exceed the P-level risk {p_level_risk}")
    base = total_estimate - p_level_risk
    risk_adjusted = base + mean_risk
    residual = uplift * risk_adjusted
    benchmark = mean_risk + residual
    verdict = Verdict.FAIL if p_level_risk < benchmark else Verdict.PASS
    relation = "below" if verdict is Verdict.FAIL else "at or above"
    message = (
        f"P-level risk provision {p_level_risk:.1f} is {relation} the mean + {uplift:.0%} benchmark "
        f"{benchmark:.1f} (mean risk {mean_risk:.1f} + {uplift:.0%} of risk-adjusted cost {risk_adjusted:.1f})"
    )
    return AuditFinding(
        "mean-plus-six",
        {"total_estimate": total_estimate, "p_level_risk": p_level_risk, "mean_risk": mean_risk, "uplift": uplift},
        {"base_cost": base, "risk_adjusted_cost": risk_adjusted, "residual_uplift": residual, "benchmark": benchmark},
        verdict,
        message,
    )


def bcr(inp: AppraisalInput, digits: int | None = None) -> float:
    """Benefit-cost ratio, optionally rounded to ``digits`` decimal places."""
    if not inp.pv_costs > 0:
        raise ValueError(f"present value of costs must be positive, got {inp.pv_costs}")
    ratio = inp.pv_benefits / inp.pv_costs
    return round(ratio, digits) if digits is not None else ratio


def headroom(funding: float, estimate: float) -> float:
    """Funding margin as a fraction of the estimate; negative means a shortfall."""
    if not estimate > 0:
        raise ValueError(f"estimate must be positive, got {estimate}")
    return (funding - estimate) / estimate


def overrun(actual: float, estimated: float) -> float:
    if not estimated > 0:
        raise ValueError(f"estimated cost must be positive, got {estimated}")
    return (actual - estimated) / estimated


def bcr_check(benefits: float, costs: float, digits: int = 2) -> AuditFinding:
    ratio = bcr(AppraisalInput(0.0, costs, benefits))
    shown = round(ratio, digits)
    verdict = Verdict.PASS if ratio >= 1.0 else Verdict.FLAG
    return AuditFinding(
        "bcr", {"benefits": benefits, "costs": costs, "digits": digits},
        {"bcr": ratio, "bcr_rounded": shown}, verdict,
        f"benefit-cost ratio {shown:.{digits}f}" + ("" if ratio >= 1.0 else " (benefits below costs)"),
    )


HEADROOM_NOTE = (
    "headroom is measured against the estimate; business-case headroom figures quoted on an "
    "unstated basis (e.g. against base cost or net of a risk allowance) are not reproducible from "
    "funding and estimate alone"
)


def headroom_check(funding: float, estimate: float) -> AuditFinding:
    value = headroom(funding, estimate)
    verdict = Verdict.PASS if value >= 0 else Verdict.FAIL
    word = "headroom" if value >= 0 else "shortfall"
    return AuditFinding(
        "headroom", {"funding": funding, "estimate": estimate},
        {"headroom": value, "margin": funding - estimate}, verdict,
        f"{word} of {abs(value):.2%} of the estimate ({funding - estimate:.1f})",
        (HEADROOM_NOTE,),
    )


def overrun_check(actual: float, estimated: float) -> AuditFinding:
    value = overrun(actual, estimated)
    verdict = Verdict.PASS if value <= 0 else Verdict.FLAG
    return AuditFinding(
        "overrun", {"actual": actual, "estimated": estimated},
        {"overrun": value}, verdict,
        f"outturn is {value:+.1%} against the estimate",
        ("ratio of the given figures; no deflation to real terms is applied",),
    )


def gap_check(inside: float, outside: float, ratio: float = DEFAULT_GAP_RATIO, p: float | None = None) -> AuditFinding:
    """Flag an inside-view allowance that falls short of the outside-view uplift.

    Flags when ``inside < ratio * outside``.
    """
    if not 0 < ratio <= 1:
        raise ValueError(f"threshold ratio must be in (0, 1], got {ratio}")
    _nonnegative(outside=outside)
    verdict = Verdict.FLAG if inside < ratio * outside else Verdict.PASS
    computed = {"inside": inside, "outside": outside, "gap": outside - inside}
    if inside > 0:
        computed["outside_over_inside"] = outside / inside
    level = f" at P{round(p * 100)}" if p is not None else ""
    message = f"inside-view allowance {inside:.1%} vs outside-view uplift {outside:.1%}{level}"
    if inside > 0 and outside > 0:
        message += f" (outside is {outside / inside:.2f}x inside)"
    inputs = {"inside": inside, "outside": outside, "ratio": ratio}
    if p is not None:
        inputs["p"] = p
    return AuditFinding("gap", inputs, computed, verdict, message)


def inside_outside_gap(result: SimulationResult, base_cost: float, ref: ReferenceClass, p: float,
                       ratio: float = DEFAULT_GAP_RATIO) -> AuditFinding:
    """Compare the QRA P-level allowance with the reference class uplift at the same P-level."""
    inside = risk_allowance(result, p, base_cost)
    outside = required_uplift(ref, p)
    return gap_check(inside, outside, ratio, p)


def contingency_readings(total: float, contingency: float, stated_share: float,
                         tolerance: float = 0.005) -> AuditFinding:
    """Check a stated contingency percentage against the two usual readings.

    The contingency is expressed both as a share of the total budget and as a
    share of the budget net of contingency. Neither is preferred; the finding
    flags when the stated share matches neither within ``tolerance``.
    """
    _nonnegative(contingency=contingency, stated_share=stated_share)
    if not total > contingency:
        raise ValueError("total must exceed the contingency")
    of_total = contingency / total
    of_base = contingency / (total - contingency)
    matches = abs(of_total - stated_share) <= tolerance or abs(of_base - stated_share) <= tolerance
    verdict = Verdict.PASS if matches else Verdict.FLAG
    return AuditFinding(
        "contingency",
        {"total": total, "contingency": contingency, "stated_share": stated_share, "tolerance": tolerance},
        {"share_of_total": of_total, "share_of_base": of_base},
        verdict,
        f"contingency is {of_total:.1%} of total and {of_base:.1%} of base; stated {stated_share:.1%}",
    )
