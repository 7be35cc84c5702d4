"""
Strategic positioning of pooled candidate portfolios

The final fronts of every scenario are pooled, evaluated in all scenarios,
and each portfolio is scored on robustness (probability mass of scenarios in
which its aggregated score reaches the aspiration level), risk (probability
mass of scenarios in which it fails) and adaptation cost (expected purchase
cost to turn it into each scenario's best portfolio).
"""
import logging
from dataclasses import dataclass
from typing import Callable, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from apps.planning.domain import AcceptanceLimits, Portfolio, RiskMode, RunConfig, Scenario
from apps.planning.exceptions import DegenerateInputError
from apps.planning.simulation import scenario_futures

logger = logging.getLogger(__name__)

Weights = Tuple[float, float]


@dataclass(frozen=True, eq=False)
class CandidateSet:
    """Deduplicated portfolios with their cost and per-scenario success rates"""
    portfolios: Tuple[Portfolio, ...]
    costs: np.ndarray    # (N,)
    success: np.ndarray  # (N, Q)

    def __post_init__(self):
        if self.success.ndim != 2 or self.success.shape[0] != len(self.portfolios):
            raise ValueError("success must be an N x Q matrix")
        if len(self.costs) != len(self.portfolios):
            raise ValueError("costs must have one entry per portfolio")

    @property
    def size(self) -> int:
        return len(self.portfolios)

    @property
    def scenario_count(self) -> int:
        return self.success.shape[1]

    @property
    def counts(self) -> np.ndarray:
        """N x n matrix of asset counts"""
        return np.array([p.counts for p in self.portfolios], dtype=np.int64).reshape(self.size, -1)


def deduplicate(portfolios: Iterable[Portfolio]) -> List[Portfolio]:
    """Unique portfolios by decoded counts, in order of first appearance"""
    seen = set()
    unique = []
    for portfolio in portfolios:
        if portfolio.counts not in seen:
            seen.add(portfolio.counts)
            unique.append(portfolio)
    return unique


def cross_evaluate(portfolios: Sequence[Portfolio], scenario: Scenario, config: RunConfig) -> np.ndarray:
    """Success rate of every portfolio in one scenario, against that scenario's shared futures"""
    futures = scenario_futures(scenario, config.space, config.catalog, config.master_seed)
    return np.array([futures.success_rate(portfolio) for portfolio in portfolios], dtype=float)


ColumnEvaluator = Callable[[List[Portfolio]], List[np.ndarray]]


def build_candidate_set(
    portfolios: Sequence[Portfolio], config: RunConfig, evaluate_columns: Optional[ColumnEvaluator] = None
) -> CandidateSet:
    """
    Deduplicate and evaluate the pooled portfolios in every scenario.

    evaluate_columns returns one success column per scenario in scenario order;
    the default evaluates them sequentially in this process.
    """
    unique = deduplicate(portfolios)
    if not unique:
        raise DegenerateInputError("no candidates")
    if evaluate_columns is None:
        columns = [cross_evaluate(unique, scenario, config) for scenario in config.space.scenarios]
    else:
        columns = evaluate_columns(unique)
    success = np.column_stack(columns)
    costs = np.array([p.cost(config.catalog) for p in unique])
    return CandidateSet(tuple(unique), costs, success)


# =================================================================
# PER-SCENARIO SCORE
# =================================================================

def _normalize(values: np.ndarray, higher_is_better: bool) -> np.ndarray:
    high, low = values.max(), values.min()
    if high == low:
        return np.ones_like(values, dtype=float)
    if higher_is_better:
        return (values - low) / (high - low)
    return (high - values) / (high - low)


def normalized_objectives(candidates: CandidateSet, scenario_index: int) -> Tuple[np.ndarray, np.ndarray]:
    """Cost and success of scenario j mapped to [0, 1] with the best value at 1"""
    if candidates.size == 0:
        raise DegenerateInputError("empty candidate set")
    return (
        _normalize(np.asarray(candidates.costs, dtype=float), higher_is_better=False),
        _normalize(np.asarray(candidates.success[:, scenario_index], dtype=float), higher_is_better=True),
    )


def aggregate_score(candidates: CandidateSet, scenario_index: int, weights: Weights) -> np.ndarray:
    """F_j for every candidate: w_cost * normalised cost + w_success * normalised success"""
    w_cost, w_success = weights
    norm_cost, norm_success = normalized_objectives(candidates, scenario_index)
    return w_cost * norm_cost + w_success * norm_success


def score_matrix(candidates: CandidateSet, weights: Weights) -> np.ndarray:
    """N x Q matrix of F_j"""
    if candidates.size == 0:
        raise DegenerateInputError("empty candidate set")
    return np.column_stack([
        aggregate_score(candidates, j, weights) for j in range(candidates.scenario_count)
    ])


# =================================================================
# METRICS
# =================================================================

def robustness(scores: np.ndarray, probabilities: np.ndarray,
               aspiration: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """
    Probability mass of scenarios with F_j >= aspiration.

    Accepts one portfolio's Q scores or an N x Q score matrix; aspiration is
    a single level or one level per scenario.
    """
    passed = np.asarray(scores) >= np.asarray(aspiration)
    value = passed.astype(float) @ np.asarray(probabilities, dtype=float)
    return float(value) if np.ndim(value) == 0 else value


def failures(success_rates: np.ndarray, threshold: float, mode: RiskMode = RiskMode.THRESHOLD) -> np.ndarray:
    """Failed_j per scenario: a strict threshold indicator, or expected failure 1 - success"""
    success_rates = np.asarray(success_rates, dtype=float)
    if mode is RiskMode.EXPECTED:
        return 1.0 - success_rates
    return (success_rates < threshold).astype(float)


def risk(success_rates: np.ndarray, probabilities: np.ndarray, threshold: float = 0.6,
         mode: RiskMode = RiskMode.THRESHOLD) -> Union[float, np.ndarray]:
    """Probability-weighted failure over the scenarios"""
    value = failures(success_rates, threshold, mode) @ np.asarray(probabilities, dtype=float)
    return float(value) if np.ndim(value) == 0 else value


def purchase_costs(counts: np.ndarray, best_counts: np.ndarray, unit_costs: np.ndarray) -> np.ndarray:
    """
    Cost of the assets each portfolio must buy to reach each scenario's best.

    Args:
        counts: (n,) or (N, n) asset counts
        best_counts: (Q, n) counts of s_j^best
        unit_costs: (n,) c_i

    Returns:
        (Q,) or (N, Q) purchase cost; shedding assets is free
    """
    counts = np.asarray(counts)
    shortfall = np.maximum(0, np.asarray(best_counts)[None, :, :] - np.atleast_2d(counts)[:, None, :])
    cost = shortfall @ np.asarray(unit_costs, dtype=float)
    return cost[0] if counts.ndim == 1 else cost


def adaptation_cost(counts: np.ndarray, best_counts: np.ndarray, unit_costs: np.ndarray,
                    probabilities: np.ndarray) -> Union[float, np.ndarray]:
    """Expected purchase cost of adapting to the best portfolio of whichever scenario occurs"""
    value = purchase_costs(counts, best_counts, unit_costs) @ np.asarray(probabilities, dtype=float)
    return float(value) if np.ndim(value) == 0 else value


def select_best(candidates: CandidateSet, scenario_index: int, scores: np.ndarray) -> int:
    """
    Index of s_j^best: highest F_j, then lowest cost, then lexicographically
    smallest counts.

    Args:
        scores: F_j of every candidate for this scenario, or the full N x Q matrix
    """
    if candidates.size == 0:
        raise DegenerateInputError("empty candidate set")
    scores = np.asarray(scores)
    column = scores[:, scenario_index] if scores.ndim == 2 else scores
    counts = candidates.counts
    keys = [counts[:, i] for i in reversed(range(counts.shape[1]))]
    keys += [np.asarray(candidates.costs), -column]
    return int(np.lexsort(keys)[0])


def best_indices(candidates: CandidateSet, scores: np.ndarray) -> np.ndarray:
    """s_j^best for every scenario"""
    return np.array([select_best(candidates, j, scores) for j in range(candidates.scenario_count)], dtype=int)


def pareto_filter_3d(robustness_values: np.ndarray, risk_values: np.ndarray,
                     adapt_values: np.ndarray) -> np.ndarray:
    """
    Non-dominated flags for (maximise robustness, minimise risk, minimise adapt cost).

    Equal triples never dominate each other, so duplicates are all kept.
    """
    points = np.column_stack([
        -np.asarray(robustness_values, dtype=float),
        np.asarray(risk_values, dtype=float),
        np.asarray(adapt_values, dtype=float),
    ])
    if len(points) == 0:
        return np.zeros(0, dtype=bool)
    no_worse = (points[:, None, :] <= points[None, :, :]).all(axis=2)
    better = (points[:, None, :] < points[None, :, :]).any(axis=2)
    dominated = (no_worse & better).any(axis=0)
    return ~dominated


def display_scale(robustness_values: np.ndarray, risk_values: np.ndarray,
                  adapt_values: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Metrics on [0, 100]: robustness and risk as percentages, adapt cost min-max scaled"""
    adapt_values = np.asarray(adapt_values, dtype=float)
    if len(adapt_values) == 0:
        raise DegenerateInputError("empty candidate set")
    high, low = adapt_values.max(), adapt_values.min()
    if high == low:
        adapt_scaled = np.zeros_like(adapt_values)
    else:
        adapt_scaled = (adapt_values - low) / (high - low) * 100.0
    return np.asarray(robustness_values) * 100.0, np.asarray(risk_values) * 100.0, adapt_scaled


def shortlist(non_dominated: np.ndarray, robustness_values: np.ndarray, risk_values: np.ndarray,
              adapt_values: np.ndarray, limits: AcceptanceLimits) -> np.ndarray:
    """Non-dominated portfolios that also meet every configured acceptance level"""
    keep = np.asarray(non_dominated, dtype=bool).copy()
    if limits.min_robustness is not None:
        keep &= np.asarray(robustness_values) >= limits.min_robustness
    if limits.max_risk is not None:
        keep &= np.asarray(risk_values) <= limits.max_risk
    if limits.max_adapt_cost is not None:
        keep &= np.asarray(adapt_values) <= limits.max_adapt_cost
    return keep


# =================================================================
# REPORT
# =================================================================

@dataclass(frozen=True, eq=False)
class PositioningReport:
    scores: np.ndarray          # (N, Q) F_j
    best: np.ndarray            # (Q,) candidate index of s_j^best
    robustness: np.ndarray      # (N,)
    risk: np.ndarray            # (N,)
    adapt_cost: np.ndarray      # (N,)
    robustness_display: np.ndarray
    risk_display: np.ndarray
    adapt_cost_display: np.ndarray
    non_dominated: np.ndarray   # (N,) bool
    shortlisted: np.ndarray     # (N,) bool

    @property
    def size(self) -> int:
        return len(self.robustness)


def nominal_metrics(candidates: CandidateSet, config: RunConfig, weights: Optional[Weights] = None,
                    probabilities: Optional[np.ndarray] = None):
    """(scores, best, robustness, risk, adapt_cost) under the given or configured weights and P(j)"""
    positioning = config.positioning
    weights = weights or (positioning.w_cost, positioning.w_success)
    probabilities = config.space.probabilities if probabilities is None else probabilities

    scores = score_matrix(candidates, weights)
    best = best_indices(candidates, scores)
    counts = candidates.counts
    return (
        scores,
        best,
        robustness(scores, probabilities, config.aspirations),
        risk(candidates.success, probabilities, positioning.failure_threshold, positioning.risk_mode),
        adaptation_cost(counts, counts[best], config.catalog.unit_costs, probabilities),
    )


def position(candidates: CandidateSet, config: RunConfig) -> PositioningReport:
    """Score every candidate on robustness, risk and adaptation cost"""
    scores, best, robustness_values, risk_values, adapt_values = nominal_metrics(candidates, config)
    flags = pareto_filter_3d(robustness_values, risk_values, adapt_values)
    robustness_display, risk_display, adapt_display = display_scale(robustness_values, risk_values, adapt_values)
    selected = shortlist(flags, robustness_values, risk_values, adapt_values, config.positioning.acceptance)

    logger.info(
        f"Positioned {candidates.size} candidates: {int(flags.sum())} non-dominated, "
        f"{int(selected.sum())} shortlisted"
    )
    return PositioningReport(
        scores=scores,
        best=best,
        robustness=robustness_values,
        risk=risk_values,
        adapt_cost=adapt_values,
        robustness_display=robustness_display,
        risk_display=risk_display,
        adapt_cost_display=adapt_display,
        non_dominated=flags,
        shortlisted=selected,
    )
