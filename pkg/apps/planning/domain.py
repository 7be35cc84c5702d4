"""
Domain types for scenario-based resource planning

Everything here is immutable after construction so configs, catalogs and
portfolios can be shared freely between worker processes.
"""
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from typing import Optional, Sequence, Tuple

import numpy as np


class RiskMode(Enum):
    """How Failed_j is derived from a scenario's success rate"""
    THRESHOLD = 'threshold'  # indicator(success_rate < failure threshold)
    EXPECTED = 'expected'    # expected failure over the futures, 1 - success_rate


def _frozen_array(values, dtype=float) -> np.ndarray:
    array = np.array(values, dtype=dtype)
    array.flags.writeable = False
    return array


@dataclass(frozen=True)
class AssetType:
    """One purchasable asset type: unit cost c_i and capability row w_ik"""
    id: int
    unit_cost: float
    capability: Tuple[float, ...]

    def __post_init__(self):
        if self.unit_cost < 0:
            raise ValueError(f"Asset {self.id}: unit cost must be >= 0")
        if any(w < 0 for w in self.capability):
            raise ValueError(f"Asset {self.id}: capabilities must be >= 0")
        if not any(w > 0 for w in self.capability):
            raise ValueError(f"Asset {self.id}: at least one capability must be > 0")


@dataclass(frozen=True)
class AssetCatalog:
    assets: Tuple[AssetType, ...]
    demand_type_count: int

    def __post_init__(self):
        if len(self.assets) < 1 or self.demand_type_count < 1:
            raise ValueError("Catalog needs n >= 1 asset types and m >= 1 demand types")
        for asset in self.assets:
            if len(asset.capability) != self.demand_type_count:
                raise ValueError(f"Asset {asset.id}: expected {self.demand_type_count} capabilities")
        for k in range(self.demand_type_count):
            if not any(asset.capability[k] > 0 for asset in self.assets):
                raise ValueError(f"No asset can satisfy demand type {k}")

    @classmethod
    def from_rows(cls, unit_costs: Sequence[float], capabilities: Sequence[Sequence[float]]) -> 'AssetCatalog':
        assets = tuple(
            AssetType(id=i, unit_cost=float(cost), capability=tuple(float(w) for w in row))
            for i, (cost, row) in enumerate(zip(unit_costs, capabilities))
        )
        return cls(assets=assets, demand_type_count=len(capabilities[0]) if capabilities else 0)

    @property
    def size(self) -> int:
        return len(self.assets)

    @cached_property
    def unit_costs(self) -> np.ndarray:
        return _frozen_array([asset.unit_cost for asset in self.assets])

    @cached_property
    def capability_matrix(self) -> np.ndarray:
        """n x m matrix of w_ik"""
        return _frozen_array([asset.capability for asset in self.assets])

    @cached_property
    def cost_per_capability(self) -> np.ndarray:
        """n x m matrix of c_i / w_ik, infinite where the asset cannot serve k"""
        capability = self.capability_matrix
        with np.errstate(divide='ignore', invalid='ignore'):
            ratio = np.where(capability > 0, self.unit_costs[:, None] / capability, np.inf)
        return _frozen_array(ratio)


@dataclass(frozen=True)
class Scenario:
    """Demand distribution (mu_k, sigma_k) of one scenario and its probability P(j)"""
    id: int
    demand_mean: Tuple[float, ...]
    demand_stddev: Tuple[float, ...]
    probability: float
    aspiration: Optional[float] = None
    name: str = ''

    def __post_init__(self):
        if len(self.demand_mean) != len(self.demand_stddev):
            raise ValueError(f"Scenario {self.id}: mean and stddev lengths differ")
        if not 0.0 <= self.probability <= 1.0:
            raise ValueError(f"Scenario {self.id}: probability must lie in [0, 1]")
        if any(s < 0 for s in self.demand_stddev) or any(mu < 0 for mu in self.demand_mean):
            raise ValueError(f"Scenario {self.id}: demand mean and stddev must be >= 0")

    @property
    def label(self) -> str:
        return self.name or f"scenario-{self.id}"


@dataclass(frozen=True)
class ScenarioSpace:
    scenarios: Tuple[Scenario, ...]
    beta_range: Tuple[float, float] = (1.0, 10.0)
    time_points: int = 10
    instances_per_scenario: int = 10
    futures_per_instance: int = 10

    def __post_init__(self):
        low, high = self.beta_range
        if not 0 < low <= high:
            raise ValueError("beta range needs 0 < lower <= upper")
        if self.time_points < 1 or self.futures_per_scenario < 1:
            raise ValueError("time points and futures per scenario must be >= 1")

    @property
    def size(self) -> int:
        return len(self.scenarios)

    @property
    def futures_per_scenario(self) -> int:
        """r, the number of simulated futures behind one success rate"""
        return self.instances_per_scenario * self.futures_per_instance

    @cached_property
    def probabilities(self) -> np.ndarray:
        return _frozen_array([scenario.probability for scenario in self.scenarios])


@dataclass(frozen=True)
class Portfolio:
    """Candidate plan: real genotype in [0, 1]^n and its decoded asset counts x_i"""
    genotype: Tuple[float, ...]
    counts: Tuple[int, ...]

    @classmethod
    def from_genotype(cls, genotype: Sequence[float], x_max: int) -> 'Portfolio':
        genes = np.clip(np.asarray(genotype, dtype=float), 0.0, 1.0)
        return cls(genotype=tuple(float(g) for g in genes), counts=decode_counts(genes, x_max))

    @classmethod
    def from_counts(cls, counts: Sequence[int], x_max: int) -> 'Portfolio':
        values = tuple(int(x) for x in counts)
        if any(x < 0 or x > x_max for x in values):
            raise ValueError(f"Asset counts must lie in [0, {x_max}], got {values}")
        return cls(genotype=tuple(x / x_max for x in values), counts=values)

    @property
    def count_array(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=np.int64)

    def cost(self, catalog: AssetCatalog) -> float:
        """Total investment, sum of c_i * x_i"""
        return float(np.dot(catalog.unit_costs, self.count_array))


def decode_counts(genotype: np.ndarray, x_max: int) -> Tuple[int, ...]:
    """Round genotype * x_max half up; the result stays within [0, x_max]"""
    scaled = np.floor(np.asarray(genotype, dtype=float) * x_max + 0.5)
    return tuple(int(x) for x in np.clip(scaled, 0, x_max))


@dataclass(frozen=True)
class EASettings:
    population: int = 20
    evaluations: int = 2000
    mutation_stddev: float = 0.1
    mutation_prob: float = 0.4  # 2/n for the five-asset catalog


@dataclass(frozen=True)
class AcceptanceLimits:
    """Minimally acceptable levels used to shortlist non-dominated plans"""
    min_robustness: Optional[float] = None
    max_risk: Optional[float] = None
    max_adapt_cost: Optional[float] = None


@dataclass(frozen=True)
class PositioningSettings:
    w_cost: float = 0.3
    w_success: float = 0.7
    aspiration: float = 0.8
    failure_threshold: float = 0.6
    risk_mode: RiskMode = RiskMode.THRESHOLD
    acceptance: AcceptanceLimits = field(default_factory=AcceptanceLimits)


@dataclass(frozen=True)
class SensitivitySettings:
    stddev: float = 0.1
    samples: int = 1000


@dataclass(frozen=True)
class RunConfig:
    catalog: AssetCatalog
    space: ScenarioSpace
    master_seed: int
    x_max: int = 500
    ea: EASettings = field(default_factory=EASettings)
    positioning: PositioningSettings = field(default_factory=PositioningSettings)
    sensitivity: SensitivitySettings = field(default_factory=SensitivitySettings)

    def __post_init__(self):
        for scenario in self.space.scenarios:
            if len(scenario.demand_mean) != self.catalog.demand_type_count:
                raise ValueError(f"Scenario {scenario.id}: expected {self.catalog.demand_type_count} demand types")

    @cached_property
    def aspirations(self) -> np.ndarray:
        """F_j^aspire per scenario, falling back to the global aspiration level"""
        default = self.positioning.aspiration
        return _frozen_array([
            default if scenario.aspiration is None else scenario.aspiration
            for scenario in self.space.scenarios
        ])

    def with_seed(self, master_seed: int) -> 'RunConfig':
        return replace(self, master_seed=int(master_seed))
