"""
Shared builders for planning tests
"""
import copy
import json

from django.conf import settings

from apps.planning.domain import AssetCatalog, Scenario, ScenarioSpace
from apps.planning.serializers import load_config

REFERENCE_CONFIG = settings.BASE_DIR / 'configs' / 'reference.json'

# Asset catalog with unit costs 1 and five capability rows over four demand types
REFERENCE_COSTS = [1, 1, 1, 1, 1]
REFERENCE_CAPABILITIES = [
    [3, 3, 3, 3],
    [1, 6, 5, 0],
    [0, 0, 6, 6],
    [10, 0, 0, 2],
    [0, 4, 4, 4],
]


def reference_document():
    with open(REFERENCE_CONFIG) as handle:
        return json.load(handle)


def reference_config():
    return load_config(reference_document())


def small_document(**overrides):
    """Reference catalog and scenarios with a budget small enough for end-to-end runs"""
    document = copy.deepcopy(reference_document())
    document['space'] = {
        'beta_min': 1.0, 'beta_max': 10.0, 'time_points': 3, 'instances': 2, 'futures_per_instance': 3,
    }
    document['ea'] = {'population': 6, 'evaluations': 40, 'mutation_stddev': 0.1, 'mutation_prob': '2/n'}
    document['sensitivity'] = {'stddev': 0.1, 'samples': 40}
    for key, value in overrides.items():
        document[key] = value
    return document


def reference_catalog():
    return AssetCatalog.from_rows(REFERENCE_COSTS, REFERENCE_CAPABILITIES)


def deterministic_space(mean, beta=1.0, time_points=1, instances=1, futures=1):
    """One scenario with zero variance and a fixed beta"""
    scenario = Scenario(id=0, demand_mean=tuple(mean), demand_stddev=tuple(0.0 for _ in mean), probability=1.0)
    return ScenarioSpace(
        scenarios=(scenario,),
        beta_range=(beta, beta),
        time_points=time_points,
        instances_per_scenario=instances,
        futures_per_instance=futures,
    )
