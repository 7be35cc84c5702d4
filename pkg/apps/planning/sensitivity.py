"""
Sensitivity of the positioning metrics to the scenario probabilities and to
the objective weights

Only the analysis layer is perturbed: success rates, normalised objectives
and (for probability perturbations) the per-scenario best portfolios are
reused, never re-simulated. Every sample s draws from its own stream so
samples can be split across workers in any way.
"""
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from django.conf import settings

from apps.planning.domain import RunConfig
from apps.planning.exceptions import DegenerateInputError
from apps.planning.positioning import (
    CandidateSet,
    adaptation_cost,
    best_indices,
    failures,
    normalized_objectives,
    nominal_metrics,
    purchase_costs,
    robustness,
    risk,
)
from core.streams import derive_stream

logger = logging.getLogger(__name__)

METRICS = ('robustness', 'risk', 'adapt_cost')

PROBABILITY = 'probability'
WEIGHTS = 'weights'


def probability_path(sample: int):
    return [('probability-sensitivity', sample)]


def weight_path(sample: int):
    return [('weight-sensitivity', sample)]


def perturb_probabilities(nominal: np.ndarray, stream: np.random.Generator, stddev: float = 0.1) -> np.ndarray:
    """
    Jitter every P(j) by Normal(0, stddev), clamp at 0 and renormalise.

    A draw that clamps to all zeros is redrawn; after
    PLANNING['MAX_PERTURBATION_ATTEMPTS'] such draws the input is degenerate.
    """
    nominal = np.asarray(nominal, dtype=float)
    if stddev == 0:
        return nominal.copy()

    for _ in range(settings.PLANNING['MAX_PERTURBATION_ATTEMPTS']):
        raw = np.maximum(nominal + stream.normal(0.0, stddev, len(nominal)), 0.0)
        total = raw.sum()
        if total > 0:
            return raw / total
    raise DegenerateInputError("degenerate perturbation")


def perturb_weights(nominal: Tuple[float, float], stream: np.random.Generator,
                    stddev: float = 0.1) -> Tuple[float, float]:
    """Jitter w_cost by Normal(0, stddev), clamp to [0, 1], and set w_success = 1 - w_cost"""
    if stddev == 0:
        return nominal
    w_cost = float(np.clip(nominal[0] + stream.normal(0.0, stddev), 0.0, 1.0))
    return w_cost, 1.0 - w_cost


@dataclass(frozen=True, eq=False)
class SensitivityBand:
    """Quartiles of one metric over the perturbation samples, one entry per candidate"""
    kind: str
    metric: str
    nominal: np.ndarray
    q1: np.ndarray
    median: np.ndarray
    q3: np.ndarray

    @property
    def width(self) -> np.ndarray:
        return self.q3 - self.q1


def summarize(kind: str, nominal: Dict[str, np.ndarray], samples: Dict[str, np.ndarray]) -> List[SensitivityBand]:
    """
    Reduce N x S sample matrices to quartile bands.

    Args:
        kind: PROBABILITY or WEIGHTS
        nominal: metric -> (N,) values under the configured P(j) and weights
        samples: metric -> (N, S) values, one column per perturbation sample
    """
    bands = []
    for metric in METRICS:
        q1, median, q3 = np.percentile(samples[metric], [25, 50, 75], axis=1)
        bands.append(SensitivityBand(kind, metric, np.asarray(nominal[metric]), q1, median, q3))
    return bands


def _sample_range(config: RunConfig, indices: Optional[Sequence[int]]) -> Sequence[int]:
    return range(config.sensitivity.samples) if indices is None else indices


# =================================================================
# PROBABILITY PERTURBATION
# =================================================================

def probability_samples(config: RunConfig, indices: Optional[Sequence[int]] = None) -> np.ndarray:
    """S x Q matrix of perturbed probability vectors"""
    nominal = config.space.probabilities
    stddev = config.sensitivity.stddev
    rows = [
        perturb_probabilities(nominal, derive_stream(config.master_seed, probability_path(s)), stddev)
        for s in _sample_range(config, indices)
    ]
    return np.array(rows, dtype=float).reshape(len(rows), len(nominal))


def probability_metric_samples(candidates: CandidateSet, scores: np.ndarray, config: RunConfig,
                               indices: Optional[Sequence[int]] = None) -> Dict[str, np.ndarray]:
    """
    Metrics of every candidate under each perturbed P(j).

    F_j and s_j^best do not depend on P(j), so the pass, fail and purchase
    matrices are built once and every sample is a single matrix product.
    """
    positioning = config.positioning
    draws = probability_samples(config, indices)
    counts = candidates.counts
    best = best_indices(candidates, scores)

    passed = (np.asarray(scores) >= config.aspirations).astype(float)
    failed = failures(candidates.success, positioning.failure_threshold, positioning.risk_mode)
    purchases = purchase_costs(counts, counts[best], config.catalog.unit_costs)
    return {
        'robustness': passed @ draws.T,
        'risk': failed @ draws.T,
        'adapt_cost': purchases @ draws.T,
    }


def probability_sensitivity(candidates: CandidateSet, scores: np.ndarray, config: RunConfig) -> List[SensitivityBand]:
    """Quartile bands of every metric over config.sensitivity.samples perturbed P(j)"""
    _, _, *nominal = nominal_metrics(candidates, config)
    samples = probability_metric_samples(candidates, scores, config)
    logger.info(f"Probability sensitivity: {config.sensitivity.samples} samples over {candidates.size} candidates")
    return summarize(PROBABILITY, dict(zip(METRICS, nominal)), samples)


# =================================================================
# WEIGHT PERTURBATION
# =================================================================

def weight_samples(config: RunConfig, indices: Optional[Sequence[int]] = None) -> List[Tuple[float, float]]:
    nominal = (config.positioning.w_cost, config.positioning.w_success)
    stddev = config.sensitivity.stddev
    return [
        perturb_weights(nominal, derive_stream(config.master_seed, weight_path(s)), stddev)
        for s in _sample_range(config, indices)
    ]


def weight_metric_samples(candidates: CandidateSet, config: RunConfig,
                          indices: Optional[Sequence[int]] = None) -> Dict[str, np.ndarray]:
    """
    Metrics of every candidate under each perturbed weight pair.

    F_j and therefore s_j^best are recomputed per sample; risk does not
    depend on the weights and is reported for every sample all the same.
    """
    positioning = config.positioning
    probabilities = config.space.probabilities
    counts = candidates.counts
    unit_costs = config.catalog.unit_costs

    norm_cost = normalized_objectives(candidates, 0)[0]
    norm_success = np.column_stack([
        normalized_objectives(candidates, j)[1] for j in range(candidates.scenario_count)
    ])
    nominal_risk = risk(candidates.success, probabilities, positioning.failure_threshold, positioning.risk_mode)

    columns = {metric: [] for metric in METRICS}
    for w_cost, w_success in weight_samples(config, indices):
        scores = w_cost * norm_cost[:, None] + w_success * norm_success
        best = best_indices(candidates, scores)
        columns['robustness'].append(robustness(scores, probabilities, config.aspirations))
        columns['risk'].append(nominal_risk)
        columns['adapt_cost'].append(adaptation_cost(counts, counts[best], unit_costs, probabilities))

    return {
        metric: np.column_stack(values) if values else np.zeros((candidates.size, 0))
        for metric, values in columns.items()
    }


def weight_sensitivity(candidates: CandidateSet, config: RunConfig) -> List[SensitivityBand]:
    """Quartile bands of every metric over config.sensitivity.samples perturbed weight pairs"""
    _, _, *nominal = nominal_metrics(candidates, config)
    samples = weight_metric_samples(candidates, config)
    logger.info(f"Weight sensitivity: {config.sensitivity.samples} samples over {candidates.size} candidates")
    return summarize(WEIGHTS, dict(zip(METRICS, nominal)), samples)
