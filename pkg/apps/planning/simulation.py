"""
Future generation and the greedy asset-assignment kernel

A scenario is instantiated ``instances_per_scenario`` times (one beta each)
and every instance is simulated ``futures_per_instance`` times. Each future
is a matrix of beta-scaled demands that a portfolio either fully satisfies
or not; the success rate of a portfolio is the fraction of futures it
satisfies. All futures are derived from the master seed alone, so every
portfolio is evaluated against byte-identical demands.
"""
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterator, List, Tuple

import numpy as np
from django.conf import settings

from apps.planning.domain import AssetCatalog, Portfolio, Scenario, ScenarioSpace
from core.streams import derive_stream

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FutureDemands:
    """I_t x m matrix of beta-scaled, nonnegative demands"""
    demands: np.ndarray

    @property
    def time_points(self) -> int:
        return self.demands.shape[0]


@dataclass(frozen=True)
class Commitment:
    time_point: int
    demand_type: int
    asset: int
    units: int


@dataclass
class AssignmentTrace:
    """Commitments in the order the heuristic made them, plus unmet demand"""
    commitments: List[Commitment] = field(default_factory=list)
    residuals: np.ndarray = None

    @property
    def satisfied(self) -> bool:
        return bool(np.all(self.residuals == 0.0))

    def committed(self, time_point: int, demand_type: int) -> List[Tuple[int, int]]:
        """(asset, units) pairs committed to one demand cell"""
        return [
            (c.asset, c.units) for c in self.commitments
            if c.time_point == time_point and c.demand_type == demand_type
        ]

    def units_used(self, time_point: int, asset_count: int) -> np.ndarray:
        """Units of every asset type committed during one time point"""
        used = np.zeros(asset_count, dtype=np.int64)
        for c in self.commitments:
            if c.time_point == time_point:
                used[c.asset] += c.units
        return used

    def to_records(self) -> List[dict]:
        """Tabular dump: one row per commitment, plus one per cell left unmet"""
        records = []
        for c in self.commitments:
            records.append({
                'time_point': c.time_point,
                'demand_type': c.demand_type,
                'asset': c.asset,
                'units': c.units,
                'residual': float(self.residuals[c.time_point, c.demand_type]),
            })
        served = {(c.time_point, c.demand_type) for c in self.commitments}
        for t, k in zip(*np.nonzero(self.residuals)):
            if (t, k) not in served:
                records.append({
                    'time_point': int(t), 'demand_type': int(k), 'asset': -1, 'units': 0,
                    'residual': float(self.residuals[t, k]),
                })
        return records


# =================================================================
# STREAM PATHS
# =================================================================

def beta_path(scenario_id: int, instance: int):
    return [('scenario', scenario_id), ('instance', instance), 'beta']


def demand_path(scenario_id: int, instance: int, future: int):
    return [('scenario', scenario_id), ('instance', instance), ('future', future), 'demand']


def ties_path(scenario_id: int, instance: int, future: int):
    return [('scenario', scenario_id), ('instance', instance), ('future', future), 'ties']


# =================================================================
# SAMPLING
# =================================================================

def draw_beta(space: ScenarioSpace, stream: np.random.Generator) -> float:
    low, high = space.beta_range
    return float(stream.uniform(low, high))


def sample_future(scenario: Scenario, beta: float, stream: np.random.Generator,
                  space: ScenarioSpace) -> FutureDemands:
    """
    Sample one future: d_k = max(0, Normal(mu_k, sigma_k)) * beta per time point.

    Args:
        scenario: Demand distribution to sample from
        beta: Problem-instance scale factor within space.beta_range
        stream: Fresh stream for this (scenario, instance, future) path
        space: Provides the number of time points I_t
    """
    raw = stream.normal(
        loc=np.asarray(scenario.demand_mean, dtype=float),
        scale=np.asarray(scenario.demand_stddev, dtype=float),
        size=(space.time_points, len(scenario.demand_mean)),
    )
    demands = np.maximum(raw, 0.0) * beta
    demands.flags.writeable = False
    return FutureDemands(demands=demands)


def draw_tie_keys(stream: np.random.Generator, time_points: int, demand_types: int,
                  asset_count: int) -> np.ndarray:
    """One uniform priority per (time point, demand type, asset); lower wins among equal cost ratios"""
    return stream.random((time_points, demand_types, asset_count))


# =================================================================
# ASSIGNMENT HEURISTIC
# =================================================================

def _units_needed(residual: float, capability: float, tolerance: float) -> int:
    needed = math.ceil((residual - tolerance) / capability)
    # ceil of a quotient rounded down can fall one unit short
    if residual - needed * capability > tolerance:
        needed += 1
    return int(needed)


def assign_assets(portfolio: Portfolio, demands: FutureDemands, catalog: AssetCatalog,
                  stream: np.random.Generator) -> AssignmentTrace:
    """
    Greedily cover one future's demands with the portfolio's assets.

    Availability resets to x_i at every time point and is shared by the
    demand types of that time point, which are served in ascending k. For a
    demand cell the cheapest available capable asset (lowest c_i / w_ik) is
    committed unit by unit until the demand is met or the asset runs out,
    then the next cheapest is tried. Ties on cost ratio go to the asset with
    the lowest priority key drawn from ``stream``.
    """
    tolerance = settings.PLANNING['RESIDUAL_TOLERANCE']
    matrix = demands.demands
    time_points, demand_types = matrix.shape
    capability = catalog.capability_matrix
    ratio = catalog.cost_per_capability
    keys = draw_tie_keys(stream, time_points, demand_types, catalog.size)
    counts = portfolio.counts

    trace = AssignmentTrace(residuals=np.zeros((time_points, demand_types)))
    for t in range(time_points):
        available = list(counts)
        for k in range(demand_types):
            residual = float(matrix[t, k])
            if residual <= tolerance:
                residual = 0.0
            while residual > 0.0:
                candidates = [i for i in range(catalog.size) if capability[i, k] > 0 and available[i] > 0]
                if not candidates:
                    break
                chosen = min(candidates, key=lambda i: (ratio[i, k], keys[t, k, i]))
                w = float(capability[chosen, k])
                units = min(available[chosen], _units_needed(residual, w, tolerance))
                available[chosen] -= units
                trace.commitments.append(Commitment(t, k, chosen, units))
                residual = max(0.0, residual - units * w)
                if residual <= tolerance:
                    residual = 0.0
            trace.residuals[t, k] = residual
    return trace


def future_success(portfolio: Portfolio, demands: FutureDemands, catalog: AssetCatalog,
                   stream: np.random.Generator) -> bool:
    """True iff the portfolio meets every demand of the future"""
    return assign_assets(portfolio, demands, catalog, stream).satisfied


# =================================================================
# COMMON RANDOM NUMBERS
# =================================================================

class ScenarioFutures:
    """
    The r futures of one scenario, materialised once and shared by every
    portfolio evaluated in the run.

    ``success`` runs the same greedy rule as ``assign_assets`` but across all
    (future, time point) rows at once; the per-row asset order (cost ratio,
    then tie key) is precomputed because it does not depend on the portfolio.
    """

    def __init__(self, scenario: Scenario, space: ScenarioSpace, catalog: AssetCatalog, master_seed: int):
        self.scenario = scenario
        self.space = space
        self.catalog = catalog
        self.master_seed = master_seed

        instances, futures = space.instances_per_scenario, space.futures_per_instance
        time_points, demand_types = space.time_points, catalog.demand_type_count

        self.betas = np.array([
            draw_beta(space, derive_stream(master_seed, beta_path(scenario.id, p)))
            for p in range(instances)
        ])
        demands = np.empty((instances, futures, time_points, demand_types))
        keys = np.empty((instances, futures, time_points, demand_types, catalog.size))
        for p in range(instances):
            for h in range(futures):
                future = sample_future(
                    scenario, self.betas[p], derive_stream(master_seed, demand_path(scenario.id, p, h)), space
                )
                demands[p, h] = future.demands
                keys[p, h] = draw_tie_keys(
                    derive_stream(master_seed, ties_path(scenario.id, p, h)),
                    time_points, demand_types, catalog.size,
                )
        self.demands = demands
        self._rows = demands.reshape(-1, demand_types)
        self._orders = self._assignment_orders(keys.reshape(-1, demand_types, catalog.size))
        logger.debug(
            f"Materialised {self.size} futures for {scenario.label} "
            f"(beta {self.betas.min():.3f}..{self.betas.max():.3f})"
        )

    @property
    def size(self) -> int:
        return self.demands.shape[0] * self.demands.shape[1]

    def _assignment_orders(self, keys: np.ndarray) -> List[np.ndarray]:
        """Per demand type, a rows x capable-assets matrix of asset indices in greedy order"""
        orders = []
        ratio = self.catalog.cost_per_capability
        for k in range(self.catalog.demand_type_count):
            capable = np.flatnonzero(self.catalog.capability_matrix[:, k] > 0)
            row_keys = keys[:, k, capable]
            row_ratio = np.broadcast_to(ratio[capable, k], row_keys.shape)
            order = np.lexsort((row_keys, row_ratio), axis=-1)
            orders.append(capable[order])
        return orders

    def unmet_rows(self, counts: np.ndarray) -> np.ndarray:
        """Boolean per (future, time point) row: True where some demand stayed unmet"""
        tolerance = settings.PLANNING['RESIDUAL_TOLERANCE']
        capability = self.catalog.capability_matrix
        rows = self._rows.shape[0]
        row_index = np.arange(rows)
        available = np.tile(np.asarray(counts, dtype=np.int64), (rows, 1))
        unmet = np.zeros(rows, dtype=bool)

        for k, order in enumerate(self._orders):
            residual = np.where(self._rows[:, k] <= tolerance, 0.0, self._rows[:, k])
            for position in range(order.shape[1]):
                assets = order[:, position]
                w = capability[assets, k]
                needed = np.where(residual > 0.0, np.ceil((residual - tolerance) / w), 0.0)
                needed = np.where(residual - needed * w > tolerance, needed + 1.0, needed)
                have = available[row_index, assets]
                units = np.minimum(have, needed.astype(np.int64))
                available[row_index, assets] = have - units
                residual = np.maximum(0.0, residual - units * w)
                residual = np.where(residual <= tolerance, 0.0, residual)
            unmet |= residual > 0.0
        return unmet

    def success(self, portfolio: Portfolio) -> np.ndarray:
        """Success flag per future, ordered by (instance, future)"""
        unmet = self.unmet_rows(portfolio.count_array)
        return ~unmet.reshape(self.size, self.space.time_points).any(axis=1)

    def success_rate(self, portfolio: Portfolio) -> float:
        return float(self.success(portfolio).mean())

    def future(self, instance: int, future: int) -> FutureDemands:
        matrix = self.demands[instance, future].copy()
        matrix.flags.writeable = False
        return FutureDemands(demands=matrix)

    def iter_traces(self, portfolio: Portfolio) -> Iterator[Tuple[int, int, AssignmentTrace]]:
        """Replay every future through assign_assets, for trace dumps"""
        for p in range(self.space.instances_per_scenario):
            for h in range(self.space.futures_per_instance):
                stream = derive_stream(self.master_seed, ties_path(self.scenario.id, p, h))
                yield p, h, assign_assets(portfolio, self.future(p, h), self.catalog, stream)


@lru_cache(maxsize=64)
def scenario_futures(scenario: Scenario, space: ScenarioSpace, catalog: AssetCatalog,
                     master_seed: int) -> ScenarioFutures:
    """Futures for one scenario, built once per process and reused for every portfolio"""
    return ScenarioFutures(scenario, space, catalog, master_seed)


def scenario_success_rate(portfolio: Portfolio, scenario: Scenario, space: ScenarioSpace,
                          catalog: AssetCatalog, master_seed: int) -> float:
    """Fraction of the scenario's r futures in which the portfolio meets every demand"""
    return scenario_futures(scenario, space, catalog, master_seed).success_rate(portfolio)
