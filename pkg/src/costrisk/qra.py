"""Inside-view quantitative risk analysis over a risk register.

Each risk occurs with its probability and, if it occurs, costs a draw from
its impact distribution. :func:`expected_value` gives the probability-weighted
sum; :func:`simulate` runs a Monte Carlo over the register with optional rank
correlation between risks; :func:`brute_force_enumerate` computes the exact
outcome distribution for small registers of fixed impacts and is used to
check the simulator.

Random numbers
--------------
Trials are split into fixed blocks of :data:`BLOCK_TRIALS`. Block ``b`` draws
from a Philox-4x64 counter-based generator keyed by the seed with the block
index in the second counter word, so every block's stream is fixed by
``(seed, b)`` alone. Blocks may be run on any number of workers in any order
and the result is bit-identical.

Sampling model
--------------
Each (trial, risk) pair gets one latent uniform ``u``. The risk occurs when
``u >= 1 - p``; the impact is then the inverse CDF of its distribution at
``(u - (1 - p)) / p``. The cost of a risk is therefore nondecreasing in ``u``,
and rank correlation induced on the latent uniforms (Iman-Conover, applied
per block) carries over to both occurrence and severity.
"""
from __future__ import annotations

import enum
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.special import ndtri

from .quantiles import check_probability, hazen_quantile

BLOCK_TRIALS = 8192
MAX_ENUMERATION_RISKS = 20
RNG_NAME = "Philox-4x64-10 (numpy.random.Philox), key=seed, counter word 1 = block index"
_PSD_TOLERANCE = 1e-10


class ImpactKind(str, enum.Enum):
    FIXED = "fixed"
    THREE_POINT = "three_point"


@dataclass(frozen=True)
class Impact:
    """Cost impact if a risk occurs: a fixed amount or a triangular three-point estimate."""

    kind: ImpactKind
    low: float
    mode: float
    high: float
    opportunity: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", ImpactKind(self.kind))
        vals = [float(self.low), float(self.mode), float(self.high)]
        if any(not math.isfinite(v) for v in vals):
            raise ValueError("impact values must be finite")
        if self.kind is ImpactKind.FIXED and not vals[0] == vals[1] == vals[2]:
            raise ValueError("fixed impact needs low == mode == high")
        if not vals[0] <= vals[1] <= vals[2]:
            raise ValueError(f"three-point impact needs low <= mode <= high, got {vals}")
        if vals[0] < 0 and not self.opportunity:
            raise ValueError("negative impact requires opportunity=True")
        object.__setattr__(self, "low", vals[0])
        object.__setattr__(self, "mode", vals[1])
        object.__setattr__(self, "high", vals[2])

    @classmethod
    def fixed(cls, value: float, opportunity: bool = False) -> "Impact":
        return cls(ImpactKind.FIXED, value, value, value, opportunity)

    @classmethod
    def three_point(cls, low: float, mode: float, high: float, opportunity: bool = False) -> "Impact":
        return cls(ImpactKind.THREE_POINT, low, mode, high, opportunity)

    @property
    def mean(self) -> float:
        if self.kind is ImpactKind.FIXED:
            return self.mode
        return (self.low + self.mode + self.high) / 3.0

    def ppf(self, q: np.ndarray) -> np.ndarray:
        """Inverse CDF at ``q`` in [0, 1]."""
        q = np.asarray(q, dtype=float)
        if self.kind is ImpactKind.FIXED or self.low == self.high:
            return np.full(q.shape, self.mode)
        lo, mo, hi = self.low, self.mode, self.high
        width = hi - lo
        split = (mo - lo) / width
        left = lo + np.sqrt(q * width * (mo - lo))
        right = hi - np.sqrt((1.0 - q) * width * (hi - mo))
        return np.where(q < split, left, right)


@dataclass(frozen=True)
class RiskItem:
    id: str
    name: str
    probability: float
    impact: Impact
    group: str | None = None
    catastrophic: bool = False

    def __post_init__(self):
        p = float(self.probability)
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"risk {self.id!r}: probability must be in [0, 1], got {p}")
        object.__setattr__(self, "probability", p)


@dataclass(frozen=True)
class RiskRegister:
    risks: tuple[RiskItem, ...]

    def __post_init__(self):
        object.__setattr__(self, "risks", tuple(self.risks))
        ids = [r.id for r in self.risks]
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        if dupes:
            raise ValueError(f"duplicate risk ids: {', '.join(dupes)}")

    def __len__(self):
        return len(self.risks)

    def __iter__(self):
        return iter(self.risks)

    @property
    def modelled(self) -> tuple[RiskItem, ...]:
        """Risks that take part in the analysis (catastrophic ones are set aside)."""
        return tuple(r for r in self.risks if not r.catastrophic)

    @property
    def catastrophic(self) -> tuple[RiskItem, ...]:
        return tuple(r for r in self.risks if r.catastrophic)


@dataclass(frozen=True)
class CorrelationSpec:
    """Target Spearman rank correlations.

    ``pairs`` maps ``(a, b)`` risk ids to a target; ``groups`` maps a
    dependence-group label to a target shared by every pair of risks in that
    group. An explicit pair overrides its group value.
    """

    pairs: Mapping[tuple[str, str], float] = field(default_factory=dict)
    groups: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for key, rho in list(self.pairs.items()) + list(self.groups.items()):
            if not -1.0 <= rho <= 1.0:
                raise ValueError(f"correlation target for {key!r} must be in [-1, 1], got {rho}")

    def __bool__(self):
        return bool(self.pairs) or bool(self.groups)


@dataclass(frozen=True)
class SimulationConfig:
    trials: int
    seed: int

    def __post_init__(self):
        if int(self.trials) != self.trials or self.trials < 1:
            raise ValueError(f"trials must be a positive integer, got {self.trials!r}")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")


class SimulationResult:
    """Sorted Monte Carlo trial totals.

    Attributes
    ----------
    totals : ndarray
        Trial totals sorted ascending (read-only).
    mean : float
        Arithmetic mean of the totals (correctly rounded sum / count).
    excluded : tuple of str
        Ids of catastrophic risks left out of the simulation.
    contributions : ndarray or None
        Per-trial, per-risk costs in trial order, if requested.
    """

    def __init__(self, totals: np.ndarray, excluded: Sequence[str] = (),
                 risk_ids: Sequence[str] = (), contributions: np.ndarray | None = None):
        totals = np.sort(np.asarray(totals, dtype=float))
        totals.setflags(write=False)
        self.totals = totals
        self.excluded = tuple(excluded)
        self.risk_ids = tuple(risk_ids)
        self.contributions = contributions
        self.mean = math.fsum(totals.tolist()) / len(totals) if len(totals) else 0.0

    @property
    def count(self) -> int:
        return len(self.totals)

    @property
    def std(self) -> float:
        return float(np.std(self.totals)) if self.count else 0.0

    def quantile(self, p: float) -> float:
        return hazen_quantile(self.totals, p)

    def __repr__(self):
        return f"SimulationResult(count={self.count}, mean={self.mean!r})"


def expected_value(register: RiskRegister) -> float:
    """Probability-weighted sum of mean impacts over the modelled risks."""
    if len(register) == 0:
        raise ValueError("empty risk register")
    return math.fsum(r.probability * r.impact.mean for r in register.modelled)


def risk_allowance(result: SimulationResult, p: float, base_cost: float) -> float:
    """P-level risk provision as a fraction of base cost."""
    if not base_cost > 0:
        raise ValueError(f"base cost must be positive, got {base_cost}")
    return result.quantile(p) / base_cost


# -- correlation -------------------------------------------------------------

class InfeasibleCorrelationError(ValueError):
    def __init__(self, a: str, b: str, detail: str):
        self.pair = (a, b)
        super().__init__(f"infeasible correlation target for pair ({a}, {b}): {detail}")


def _spearman_to_pearson(rho: np.ndarray) -> np.ndarray:
    # Pearson correlation of a bivariate normal with the given Spearman rho
    return 2.0 * np.sin(np.pi * rho / 6.0)


def _is_psd(matrix: np.ndarray) -> bool:
    return bool(np.linalg.eigvalsh(matrix).min() >= -_PSD_TOLERANCE)


def correlation_targets(register: RiskRegister, spec: CorrelationSpec) -> tuple[list[str], np.ndarray]:
    """Resolve a correlation spec into the list of correlated risk ids and their target Spearman matrix.

    Only risks that appear in some pair or group are included. Raises
    :class:`InfeasibleCorrelationError` naming the first pair (in the order
    given) whose target makes the normal-score correlation matrix
    non-positive-semidefinite.
    """
    ids = [r.id for r in register.modelled]
    known = set(ids)
    skipped = {r.id for r in register.catastrophic}
    ordered_pairs: list[tuple[str, str, float]] = []
    for group, rho in spec.groups.items():
        members = [r.id for r in register.modelled if r.group == group]
        for i, a in enumerate(members):
            for b in members[i + 1:]:
                ordered_pairs.append((a, b, rho))
    for (a, b), rho in spec.pairs.items():
        for rid in (a, b):
            if rid in skipped:
                raise ValueError(f"correlation refers to catastrophic risk {rid!r}, which is not simulated")
            if rid not in known:
                raise ValueError(f"correlation refers to unknown risk {rid!r}")
        if a == b:
            raise InfeasibleCorrelationError(a, b, "a risk cannot be paired with itself")
        ordered_pairs.append((a, b, rho))
    if not ordered_pairs:
        return [], np.eye(0)
    involved = [i for i in ids if any(i in (a, b) for a, b, _ in ordered_pairs)]
    index = {rid: k for k, rid in enumerate(involved)}
    target = np.eye(len(involved))
    final: dict[tuple[int, int], tuple[str, str, float]] = {}
    for a, b, rho in ordered_pairs:
        i, j = sorted((index[a], index[b]))
        target[i, j] = target[j, i] = rho
        final[i, j] = (a, b, rho)
    normal = _spearman_to_pearson(target)
    w, v = np.linalg.eigh(normal)
    if w[0] < -_PSD_TOLERANCE:
        # blame the pair pulling hardest on the negative eigenvalue: w0 = sum_ij v_i v_j C_ij
        vec = v[:, 0]
        order = {ij: n for n, ij in enumerate(final)}
        worst = min(final, key=lambda ij: (round(2.0 * vec[ij[0]] * vec[ij[1]] * normal[ij], 9), order[ij]))
        a, b, rho = final[worst]
        raise InfeasibleCorrelationError(
            a, b, f"target {rho} leaves the correlation matrix not positive semidefinite "
                  f"(smallest eigenvalue {w[0]:.3g})")
    return involved, target


def _factor(corr: np.ndarray) -> np.ndarray:
    """A matrix ``L`` with ``L @ L.T == corr`` that tolerates semidefinite input."""
    try:
        return np.linalg.cholesky(corr)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(corr)
        return v * np.sqrt(np.clip(w, 0.0, None))


def iman_conover(u: np.ndarray, normal_corr_factor: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Reorder each column of ``u`` so its ranks follow a target correlation.

    Parameters
    ----------
    u : ndarray, shape (N, K)
        Samples whose marginals must be preserved.
    normal_corr_factor : ndarray, shape (K, K)
        Factor of the target correlation of the normal scores.
    rng : Generator
        Source for the random permutations of the score matrix.

    Returns
    -------
    ndarray, shape (N, K)
        Column-wise permutation of ``u``.
    """
    n, k = u.shape
    if n < 2 or k < 2:
        return u
    base_scores = ndtri(np.arange(1, n + 1) / (n + 1.0))
    scores = np.empty((n, k))
    for j in range(k):
        scores[:, j] = base_scores[rng.permutation(n)]
    if n > k + 1:
        emp = np.corrcoef(scores, rowvar=False)
        try:
            emp_factor = np.linalg.cholesky(emp)
            scores = np.linalg.solve(emp_factor, scores.T).T
        except np.linalg.LinAlgError:
            pass
    target_scores = scores @ normal_corr_factor.T
    out = np.empty_like(u)
    for j in range(k):
        order = np.argsort(np.argsort(target_scores[:, j], kind="stable"), kind="stable")
        out[:, j] = np.sort(u[:, j])[order]
    return out


# -- simulation --------------------------------------------------------------

def _block_generator(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed, counter=[0, block, 0, 0]))


def _simulate_block(risks: Sequence[RiskItem], corr_cols: Sequence[int], corr_factor: np.ndarray | None,
                    seed: int, block: int, n: int) -> np.ndarray:
    rng = _block_generator(seed, block)
    k = len(risks)
    # one stream segment per risk column, so appending a risk leaves earlier columns unchanged
    latent = rng.random((k, n)).T.copy()
    if corr_factor is not None and len(corr_cols):
        latent[:, corr_cols] = iman_conover(latent[:, corr_cols], corr_factor, rng)
    costs = np.zeros((n, k))
    for j, risk in enumerate(risks):
        p = risk.probability
        if p == 0.0:
            continue
        u = latent[:, j]
        occurs = u >= 1.0 - p
        if not occurs.any():
            continue
        q = np.clip((u[occurs] - (1.0 - p)) / p, 0.0, 1.0)
        costs[occurs, j] = risk.impact.ppf(q)
    return costs


def simulate(register: RiskRegister, correlation: CorrelationSpec | None, config: SimulationConfig,
             workers: int = 1, keep_contributions: bool = False) -> SimulationResult:
    """Monte Carlo over the register.

    Parameters
    ----------
    register : RiskRegister
    correlation : CorrelationSpec or None
        Target rank correlations; ``None`` or empty means independent risks.
    config : SimulationConfig
        Trial count and seed. The result depends only on these and the inputs.
    workers : int
        Threads used to run blocks. Does not affect the result.
    keep_contributions : bool
        Keep the per-risk cost matrix (trials x risks) on the result.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    risks = register.modelled
    ids = [r.id for r in risks]
    excluded = [r.id for r in register.catastrophic]
    trials = int(config.trials)
    if not risks:
        contrib = np.zeros((trials, 0)) if keep_contributions else None
        return SimulationResult(np.zeros(trials), excluded, ids, contrib)

    corr_cols: list[int] = []
    corr_factor = None
    if correlation:
        involved, target = correlation_targets(register, correlation)
        if involved:
            corr_cols = [ids.index(i) for i in involved]
            corr_factor = _factor(_spearman_to_pearson(target))

    n_blocks = -(-trials // BLOCK_TRIALS)
    sizes = [min(BLOCK_TRIALS, trials - b * BLOCK_TRIALS) for b in range(n_blocks)]

    def run(b):
        return _simulate_block(risks, corr_cols, corr_factor, int(config.seed), b, sizes[b])

    if workers == 1 or n_blocks == 1:
        blocks = [run(b) for b in range(n_blocks)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            blocks = list(pool.map(run, range(n_blocks)))
    costs = np.concatenate(blocks, axis=0)
    totals = np.zeros(trials)
    for j in range(costs.shape[1]):
        totals += costs[:, j]
    return SimulationResult(totals, excluded, ids, costs if keep_contributions else None)


# -- exact oracle ------------------------------------------------------------

@dataclass(frozen=True)
class ExactDistribution:
    """Exact outcome distribution: distinct outcomes ascending with their probabilities."""

    outcomes: np.ndarray
    probabilities: np.ndarray

    @property
    def mean(self) -> float:
        return math.fsum((self.outcomes * self.probabilities).tolist())

    @property
    def std(self) -> float:
        m = self.mean
        var = math.fsum(((self.outcomes - m) ** 2 * self.probabilities).tolist())
        return math.sqrt(max(var, 0.0))

    def quantile(self, p: float) -> float:
        """Lowest outcome whose cumulative probability reaches ``p``."""
        p = check_probability(p)
        cum = np.cumsum(self.probabilities)
        # guard against cumulative sums landing a hair under p through rounding
        idx = int(np.searchsorted(cum, p - 1e-12, side="left"))
        return float(self.outcomes[min(idx, len(self.outcomes) - 1)])

    def pairs(self) -> list[tuple[float, float]]:
        return list(zip(self.outcomes.tolist(), self.probabilities.tolist()))


def brute_force_enumerate(register: RiskRegister) -> ExactDistribution:
    """Enumerate all 2^n occurrence patterns of independent fixed-impact risks."""
    risks = register.modelled
    if len(risks) > MAX_ENUMERATION_RISKS:
        raise ValueError(f"too many risks to enumerate ({len(risks)} > {MAX_ENUMERATION_RISKS})")
    for r in risks:
        if r.impact.kind is not ImpactKind.FIXED:
            raise ValueError(f"risk {r.id!r} has a non-fixed impact; enumeration needs fixed impacts")
    outcomes = np.zeros(1)
    probs = np.ones(1)
    for r in risks:
        p, v = r.probability, r.impact.mode
        outcomes = np.concatenate([outcomes, outcomes + v])
        probs = np.concatenate([probs * (1.0 - p), probs * p])
    keep = probs > 0.0
    outcomes, probs = outcomes[keep], probs[keep]
    distinct, inverse = np.unique(outcomes, return_inverse=True)
    merged = np.bincount(inverse.ravel(), weights=probs, minlength=len(distinct))
    return ExactDistribution(distinct, merged)


# -- file formats ------------------------------------------------------------

class RegisterFormatError(ValueError):
    pass


_RISK_FIELDS = {"id", "name", "probability", "impact", "group", "catastrophic"}
_IMPACT_FIELDS = {"fixed": {"kind", "value", "opportunity"},
                  "three_point": {"kind", "low", "mode", "high", "opportunity"}}


def _number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise RegisterFormatError(f"{where}: expected a number, got {value!r}")
    return float(value)


def register_from_dict(data: Mapping) -> RiskRegister:
    """Build a register from the decoded ``{"risks": [...]}`` structure."""
    if not isinstance(data, Mapping) or "risks" not in data:
        raise RegisterFormatError("risks: top-level 'risks' array is required")
    if not isinstance(data["risks"], list):
        raise RegisterFormatError("risks: must be an array")
    items = []
    for i, rec in enumerate(data["risks"]):
        where = f"risks[{i}]"
        if not isinstance(rec, Mapping):
            raise RegisterFormatError(f"{where}: must be an object")
        unknown = sorted(set(rec) - _RISK_FIELDS)
        if unknown:
            raise RegisterFormatError(f"{where}.{unknown[0]}: unknown field")
        for req in ("id", "name", "probability", "impact"):
            if req not in rec:
                raise RegisterFormatError(f"{where}.{req}: required field missing")
        if not isinstance(rec["id"], str) or not rec["id"]:
            raise RegisterFormatError(f"{where}.id: must be a nonempty string")
        if not isinstance(rec["name"], str):
            raise RegisterFormatError(f"{where}.name: must be a string")
        prob = _number(rec["probability"], f"{where}.probability")
        if not 0.0 <= prob <= 1.0:
            raise RegisterFormatError(f"{where}.probability: must be in [0, 1], got {prob}")
        imp = rec["impact"]
        if not isinstance(imp, Mapping) or imp.get("kind") not in _IMPACT_FIELDS:
            raise RegisterFormatError(f"{where}.impact.kind: must be 'fixed' or 'three_point'")
        unknown = sorted(set(imp) - _IMPACT_FIELDS[imp["kind"]])
        if unknown:
            raise RegisterFormatError(f"{where}.impact.{unknown[0]}: unknown field for {imp['kind']} impact")
        opportunity = imp.get("opportunity", False)
        if not isinstance(opportunity, bool):
            raise RegisterFormatError(f"{where}.impact.opportunity: must be true or false")
        try:
            if imp["kind"] == "fixed":
                if "value" not in imp:
                    raise RegisterFormatError(f"{where}.impact.value: required field missing")
                impact = Impact.fixed(_number(imp["value"], f"{where}.impact.value"), opportunity)
            else:
                vals = []
                for key in ("low", "mode", "high"):
                    if key not in imp:
                        raise RegisterFormatError(f"{where}.impact.{key}: required field missing")
                    vals.append(_number(imp[key], f"{where}.impact.{key}"))
                impact = Impact.three_point(*vals, opportunity=opportunity)
        except RegisterFormatError:
            raise
        except ValueError as exc:
            raise RegisterFormatError(f"{where}.impact: {exc}") from None
        group = rec.get("group")
        if group is not None and not isinstance(group, str):
            raise RegisterFormatError(f"{where}.group: must be a string")
        catastrophic = rec.get("catastrophic", False)
        if not isinstance(catastrophic, bool):
            raise RegisterFormatError(f"{where}.catastrophic: must be true or false")
        items.append(RiskItem(rec["id"], rec["name"], prob, impact, group, catastrophic))
    try:
        return RiskRegister(tuple(items))
    except ValueError as exc:
        raise RegisterFormatError(f"risks: {exc}") from None


def correlation_from_records(records: Iterable[Mapping]) -> CorrelationSpec:
    """Build a correlation spec from ``[{"a", "b", "rho"} | {"group", "rho"}, ...]`` records."""
    if not isinstance(records, list):
        raise RegisterFormatError("correlation: top level must be an array")
    pairs: dict[tuple[str, str], float] = {}
    groups: dict[str, float] = {}
    for i, rec in enumerate(records):
        where = f"correlation[{i}]"
        if not isinstance(rec, Mapping):
            raise RegisterFormatError(f"{where}: must be an object")
        if "rho" not in rec:
            raise RegisterFormatError(f"{where}.rho: required field missing")
        rho = _number(rec["rho"], f"{where}.rho")
        if not -1.0 <= rho <= 1.0:
            raise RegisterFormatError(f"{where}.rho: must be in [-1, 1], got {rho}")
        keys = set(rec) - {"rho"}
        if keys == {"a", "b"}:
            a, b = rec["a"], rec["b"]
            if not isinstance(a, str) or not isinstance(b, str):
                raise RegisterFormatError(f"{where}: a and b must be risk id strings")
            key = (a, b) if a <= b else (b, a)
            if key in pairs:
                raise RegisterFormatError(f"{where}: duplicate pair ({a}, {b})")
            pairs[key] = rho
        elif keys == {"group"}:
            if not isinstance(rec["group"], str):
                raise RegisterFormatError(f"{where}.group: must be a string")
            if rec["group"] in groups:
                raise RegisterFormatError(f"{where}: duplicate group {rec['group']!r}")
            groups[rec["group"]] = rho
        else:
            raise RegisterFormatError(f"{where}: expected fields a, b, rho or group, rho")
    return CorrelationSpec(pairs, groups)


def load_register(path: str | Path) -> RiskRegister:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise RegisterFormatError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from None
    return register_from_dict(data)


def load_correlation(path: str | Path) -> CorrelationSpec:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise RegisterFormatError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from None
    return correlation_from_records(data)
