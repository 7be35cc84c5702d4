"""
Celery tasks for queued planning runs
"""
from typing import Any, Dict, List, Optional

from celery import Task, shared_task
from celery.utils.log import get_task_logger
from django.conf import settings

from apps.planning.evolution import ScenarioSolver
from apps.planning.exceptions import PlanningError
from apps.planning.pipeline import run_pipeline
from apps.planning.serializers import load_config

logger = get_task_logger(__name__)


class PlanningTask(Task):
    """Base task class for planning runs"""

    def on_failure(self, exc, task_id, args, kwargs, einfo):
        logger.error(f"Planning task {task_id} failed: {exc}")


def _resolve_config(document: Dict[str, Any], seed: Optional[int]):
    config = load_config(document)
    if seed is not None:
        return config.with_seed(seed)
    if settings.PLAN_SEED is not None:
        return config.with_seed(settings.PLAN_SEED)
    return config


@shared_task(base=PlanningTask, bind=True)
def solve_scenario_task(self, document: Dict[str, Any], scenario_index: int,
                        seed: Optional[int] = None) -> List[Dict[str, Any]]:
    """
    Evolve the front of one scenario and return it as plain rows
    """
    config = _resolve_config(document, seed)
    if not 0 <= scenario_index < config.space.size:
        raise PlanningError(f"Scenario index {scenario_index} out of range 0..{config.space.size - 1}")

    scenario = config.space.scenarios[scenario_index]
    logger.info(f"Solving {scenario.label} with seed {config.master_seed}")
    result = ScenarioSolver(scenario, config).solve()
    return [
        {
            'portfolio_id': row,
            'counts': list(member.portfolio.counts),
            'cost': member.objectives.cost,
            'success_rate': member.objectives.success_rate,
        }
        for row, member in enumerate(result.front)
    ]


@shared_task(base=PlanningTask, bind=True)
def run_pipeline_task(self, document: Dict[str, Any], out_dir: str, seed: Optional[int] = None,
                      jobs: Optional[int] = None, trace: bool = False) -> Dict[str, Any]:
    """
    Full planning run into ``out_dir``; returns the manifest document
    """
    config = _resolve_config(document, seed)
    jobs = jobs or settings.PLANNING['JOBS']
    logger.info(f"Starting planning run into {out_dir}: seed={config.master_seed}, jobs={jobs}")
    manifest = run_pipeline(config, out_dir, jobs=jobs, trace=trace)
    logger.info(f"Planning run into {out_dir} complete ({len(manifest.files)} files)")
    return manifest.to_document()
