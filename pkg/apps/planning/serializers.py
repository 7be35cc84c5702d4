"""
Serializers for the planning config document

The document is JSON; these serializers own its schema, defaults and every
cross-field invariant, and convert between the document and RunConfig.
"""
import io
import logging
import math
from collections.abc import Mapping
from pathlib import Path
from typing import Any, Dict, List, Tuple, Union

from django.conf import settings
from rest_framework import serializers
from rest_framework.exceptions import ParseError
from rest_framework.parsers import JSONParser
from rest_framework.renderers import JSONRenderer

from apps.planning.domain import (
    AcceptanceLimits, AssetCatalog, AssetType, EASettings, PositioningSettings,
    RiskMode, RunConfig, Scenario, ScenarioSpace, SensitivitySettings,
)
from apps.planning.exceptions import ConfigurationError
from core.streams import MAX_SEED

logger = logging.getLogger(__name__)


class StrictSerializer(serializers.Serializer):
    """Serializer that rejects keys it does not declare, to catch typos"""

    def to_internal_value(self, data):
        if isinstance(data, Mapping):
            unknown = sorted(set(data) - set(self.fields))
            if unknown:
                raise serializers.ValidationError({name: ['Unknown field.'] for name in unknown})
        return super().to_internal_value(data)


class AssetSerializer(StrictSerializer):
    cost = serializers.FloatField(min_value=0)
    capability = serializers.ListField(child=serializers.FloatField(min_value=0), allow_empty=False)

    def validate_capability(self, value):
        if not any(w > 0 for w in value):
            raise serializers.ValidationError("At least one capability entry must be > 0.")
        return value


class ScenarioSerializer(StrictSerializer):
    name = serializers.CharField(required=False, allow_blank=True, max_length=100)
    mean = serializers.ListField(child=serializers.FloatField(min_value=0), allow_empty=False)
    stddev = serializers.ListField(child=serializers.FloatField(min_value=0), allow_empty=False)
    probability = serializers.FloatField(min_value=0, max_value=1)
    aspiration = serializers.FloatField(min_value=0, max_value=1, required=False, allow_null=True)

    def validate(self, data):
        if len(data['mean']) != len(data['stddev']):
            raise serializers.ValidationError({'stddev': ["Must have as many entries as mean."]})
        return data


class SpaceSerializer(StrictSerializer):
    beta_min = serializers.FloatField(required=False)
    beta_max = serializers.FloatField(required=False)
    time_points = serializers.IntegerField(min_value=1, required=False)
    instances = serializers.IntegerField(min_value=1, required=False)
    futures_per_instance = serializers.IntegerField(min_value=1, required=False)

    def validate(self, data):
        low, high = ScenarioSpace.__dataclass_fields__['beta_range'].default
        low = data.get('beta_min', low)
        high = data.get('beta_max', high)
        if low <= 0:
            raise serializers.ValidationError({'beta_min': ["Must be > 0."]})
        if low > high:
            raise serializers.ValidationError({'beta_max': ["Must be >= beta_min."]})
        return data


class EASerializer(StrictSerializer):
    population = serializers.IntegerField(min_value=1, required=False)
    evaluations = serializers.IntegerField(min_value=1, required=False)
    mutation_stddev = serializers.FloatField(min_value=0, required=False)
    # Either a probability or a "<k>/n" expression resolved against the catalog size
    mutation_prob = serializers.CharField(required=False)

    def validate_mutation_prob(self, value):
        text = value.strip().replace(' ', '')
        if text.endswith('/n'):
            try:
                k = float(text[:-2])
            except ValueError:
                raise serializers.ValidationError("Expected a number or '<k>/n'.")
            if not math.isfinite(k) or k < 0:
                raise serializers.ValidationError("k in '<k>/n' must be a finite number >= 0.")
            return text
        try:
            probability = float(text)
        except ValueError:
            raise serializers.ValidationError("Expected a number or '<k>/n'.")
        if not 0.0 <= probability <= 1.0:
            raise serializers.ValidationError("Must lie in [0, 1].")
        return text


class AcceptanceSerializer(StrictSerializer):
    min_robustness = serializers.FloatField(min_value=0, max_value=1, required=False, allow_null=True)
    max_risk = serializers.FloatField(min_value=0, max_value=1, required=False, allow_null=True)
    max_adapt_cost = serializers.FloatField(min_value=0, required=False, allow_null=True)


class PositioningSerializer(StrictSerializer):
    w_cost = serializers.FloatField(min_value=0, max_value=1, required=False)
    w_success = serializers.FloatField(min_value=0, max_value=1, required=False)
    aspiration = serializers.FloatField(min_value=0, max_value=1, required=False)
    failure_threshold = serializers.FloatField(min_value=0, max_value=1, required=False)
    risk_mode = serializers.ChoiceField(choices=[mode.value for mode in RiskMode], required=False)
    acceptance = AcceptanceSerializer(required=False)

    def validate(self, data):
        defaults = PositioningSettings()
        w_cost = data.get('w_cost', defaults.w_cost)
        w_success = data.get('w_success', defaults.w_success)
        if not math.isclose(w_cost + w_success, 1.0, rel_tol=0.0, abs_tol=1e-12):
            raise serializers.ValidationError(
                {'w_success': [f"Weights must satisfy w_cost + w_success = 1, got {w_cost + w_success!r}."]}
            )
        return data


class SensitivitySerializer(StrictSerializer):
    stddev = serializers.FloatField(min_value=0, required=False)
    samples = serializers.IntegerField(min_value=1, required=False)


class RunConfigSerializer(StrictSerializer):
    """Canonical planning config document"""
    assets = AssetSerializer(many=True)
    scenarios = ScenarioSerializer(many=True)
    space = SpaceSerializer(required=False)
    x_max = serializers.IntegerField(min_value=1, required=False)
    ea = EASerializer(required=False)
    positioning = PositioningSerializer(required=False)
    sensitivity = SensitivitySerializer(required=False)
    seed = serializers.IntegerField(min_value=0, max_value=MAX_SEED)

    def validate_assets(self, value):
        if len(value) < 1:
            raise serializers.ValidationError("n >= 1: at least one asset type is required.")
        return value

    def validate_scenarios(self, value):
        if len(value) < 1:
            raise serializers.ValidationError("Q >= 1: at least one scenario is required.")
        return value

    def validate(self, data):
        errors: Dict[str, Any] = {}
        assets = data['assets']
        demand_types = len(assets[0]['capability'])

        for index, asset in enumerate(assets):
            if len(asset['capability']) != demand_types:
                errors.setdefault('assets', []).append(
                    f"assets[{index}].capability has {len(asset['capability'])} entries, expected m = {demand_types}."
                )
        if 'assets' not in errors:
            for k in range(demand_types):
                if not any(asset['capability'][k] > 0 for asset in assets):
                    errors.setdefault('assets', []).append(
                        f"No asset can satisfy demand type {k}; every demand type needs some w_ik > 0."
                    )

        for index, scenario in enumerate(data['scenarios']):
            if len(scenario['mean']) != demand_types:
                errors.setdefault('scenarios', []).append(
                    f"scenarios[{index}] has {len(scenario['mean'])} demand types, expected m = {demand_types}."
                )
        total = sum(scenario['probability'] for scenario in data['scenarios'])
        if abs(total - 1.0) > settings.PLANNING['PROBABILITY_TOLERANCE']:
            errors.setdefault('scenarios', []).append(
                f"Scenario probabilities sum to {total!r}, not 1 (probabilities sum != 1)."
            )

        ea = data.get('ea', {})
        defaults = EASettings()
        population = ea.get('population', defaults.population)
        evaluations = ea.get('evaluations', defaults.evaluations)
        if evaluations < population:
            errors['ea'] = [f"evaluations ({evaluations}) must cover the initial population ({population})."]

        if errors:
            raise serializers.ValidationError(errors)
        return data


# =================================================================
# DOCUMENT <-> RunConfig
# =================================================================

def flatten_errors(detail, prefix: str = '') -> List[Tuple[str, str]]:
    """Turn nested DRF error detail into (path, message) pairs"""
    flat: List[Tuple[str, str]] = []
    if isinstance(detail, Mapping):
        for key, value in detail.items():
            if key == 'non_field_errors':
                path = prefix
            elif isinstance(key, int):
                path = f"{prefix}[{key}]"
            else:
                path = f"{prefix}.{key}" if prefix else str(key)
            flat.extend(flatten_errors(value, path))
    elif isinstance(detail, list):
        for index, item in enumerate(detail):
            if isinstance(item, (Mapping, list)):
                flat.extend(flatten_errors(item, f"{prefix}[{index}]"))
            else:
                flat.append((prefix, str(item)))
    else:
        flat.append((prefix, str(detail)))
    return flat


def resolve_mutation_prob(expression: str, asset_count: int) -> float:
    if expression.endswith('/n'):
        return min(1.0, float(expression[:-2]) / asset_count)
    return float(expression)


def build_run_config(data: Dict[str, Any]) -> RunConfig:
    """Convert validated document data into the immutable RunConfig"""
    capabilities = [asset['capability'] for asset in data['assets']]
    catalog = AssetCatalog(
        assets=tuple(
            AssetType(id=index, unit_cost=float(asset['cost']), capability=tuple(float(w) for w in asset['capability']))
            for index, asset in enumerate(data['assets'])
        ),
        demand_type_count=len(capabilities[0]),
    )

    scenarios = tuple(
        Scenario(
            id=index,
            demand_mean=tuple(float(mu) for mu in scenario['mean']),
            demand_stddev=tuple(float(sigma) for sigma in scenario['stddev']),
            probability=float(scenario['probability']),
            aspiration=scenario.get('aspiration'),
            name=scenario.get('name', ''),
        )
        for index, scenario in enumerate(data['scenarios'])
    )

    space_data = data.get('space', {})
    space_kwargs: Dict[str, Any] = {}
    if 'beta_min' in space_data or 'beta_max' in space_data:
        low, high = ScenarioSpace.__dataclass_fields__['beta_range'].default
        space_kwargs['beta_range'] = (space_data.get('beta_min', low), space_data.get('beta_max', high))
    for source, target in (('time_points', 'time_points'),
                           ('instances', 'instances_per_scenario'),
                           ('futures_per_instance', 'futures_per_instance')):
        if source in space_data:
            space_kwargs[target] = space_data[source]
    space = ScenarioSpace(scenarios=scenarios, **space_kwargs)

    ea_data = dict(data.get('ea', {}))
    ea_data['mutation_prob'] = resolve_mutation_prob(ea_data.get('mutation_prob', '2/n'), catalog.size)
    ea = EASettings(**ea_data)

    positioning_data = dict(data.get('positioning', {}))
    if 'risk_mode' in positioning_data:
        positioning_data['risk_mode'] = RiskMode(positioning_data['risk_mode'])
    if 'acceptance' in positioning_data:
        positioning_data['acceptance'] = AcceptanceLimits(**positioning_data['acceptance'])
    positioning = PositioningSettings(**positioning_data)

    sensitivity = SensitivitySettings(**data.get('sensitivity', {}))

    config_kwargs = {'x_max': data['x_max']} if 'x_max' in data else {}
    return RunConfig(
        catalog=catalog,
        space=space,
        master_seed=data['seed'],
        ea=ea,
        positioning=positioning,
        sensitivity=sensitivity,
        **config_kwargs,
    )


def load_config(source: Union[str, bytes, Dict[str, Any]]) -> RunConfig:
    """
    Parse and validate a config document.

    Args:
        source: JSON text (str or bytes) or an already-parsed mapping

    Returns:
        Fully validated RunConfig

    Raises:
        ConfigurationError: If the document is malformed or violates an invariant
    """
    if isinstance(source, Mapping):
        document = source
    else:
        raw = source.encode('utf-8') if isinstance(source, str) else source
        try:
            document = JSONParser().parse(io.BytesIO(raw))
        except ParseError as e:
            raise ConfigurationError("Config parse error", [('', str(e.detail))])

    serializer = RunConfigSerializer(data=document)
    if not serializer.is_valid():
        errors = flatten_errors(serializer.errors)
        logger.warning(f"Config validation failed with {len(errors)} error(s)")
        raise ConfigurationError("Config validation error", errors)

    try:
        return build_run_config(serializer.validated_data)
    except ValueError as e:
        raise ConfigurationError("Config validation error", [('', str(e))])


def load_config_file(path: Union[str, Path]) -> RunConfig:
    """Read and validate the config document stored at ``path``"""
    return load_config(Path(path).read_bytes())


def save_config(config: RunConfig) -> Dict[str, Any]:
    """Render a RunConfig back into its canonical document form"""
    scenarios = []
    for scenario in config.space.scenarios:
        entry: Dict[str, Any] = {
            'mean': list(scenario.demand_mean),
            'stddev': list(scenario.demand_stddev),
            'probability': scenario.probability,
        }
        if scenario.name:
            entry['name'] = scenario.name
        if scenario.aspiration is not None:
            entry['aspiration'] = scenario.aspiration
        scenarios.append(entry)

    positioning = config.positioning
    acceptance = {
        key: value
        for key, value in (
            ('min_robustness', positioning.acceptance.min_robustness),
            ('max_risk', positioning.acceptance.max_risk),
            ('max_adapt_cost', positioning.acceptance.max_adapt_cost),
        )
        if value is not None
    }
    positioning_document: Dict[str, Any] = {
        'w_cost': positioning.w_cost,
        'w_success': positioning.w_success,
        'aspiration': positioning.aspiration,
        'failure_threshold': positioning.failure_threshold,
        'risk_mode': positioning.risk_mode.value,
    }
    if acceptance:
        positioning_document['acceptance'] = acceptance

    return {
        'assets': [
            {'cost': asset.unit_cost, 'capability': list(asset.capability)}
            for asset in config.catalog.assets
        ],
        'scenarios': scenarios,
        'space': {
            'beta_min': config.space.beta_range[0],
            'beta_max': config.space.beta_range[1],
            'time_points': config.space.time_points,
            'instances': config.space.instances_per_scenario,
            'futures_per_instance': config.space.futures_per_instance,
        },
        'x_max': config.x_max,
        'ea': {
            'population': config.ea.population,
            'evaluations': config.ea.evaluations,
            'mutation_stddev': config.ea.mutation_stddev,
            'mutation_prob': repr(config.ea.mutation_prob),
        },
        'positioning': positioning_document,
        'sensitivity': {
            'stddev': config.sensitivity.stddev,
            'samples': config.sensitivity.samples,
        },
        'seed': config.master_seed,
    }


def render_config(config: RunConfig) -> bytes:
    """Serialized config document, stable across runs"""
    return JSONRenderer().render(save_config(config), renderer_context={'indent': 2})
