"""
Stage orchestration for planning runs

solve -> crosseval -> position -> sensitivity, each stage reading only the
files the previous one wrote. ``run`` chains all four and finishes with the
manifest; an output directory without a manifest is an incomplete run.
"""
import logging
import multiprocessing
import os
import time
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Sequence, Tuple, Union

import numpy as np
from django.conf import settings

from apps.planning import __version__, artifacts
from apps.planning.domain import Portfolio, RunConfig, Scenario
from apps.planning.evolution import Member, ScenarioSolver, SolveResult
from apps.planning.positioning import (
    CandidateSet,
    build_candidate_set,
    cross_evaluate,
    nominal_metrics,
    position as position_candidates,
    score_matrix,
)
from apps.planning.sensitivity import (
    METRICS,
    PROBABILITY,
    WEIGHTS,
    probability_metric_samples,
    summarize,
    weight_metric_samples,
)
from apps.planning.serializers import render_config
from apps.planning.simulation import scenario_futures

logger = logging.getLogger(__name__)

STAGES = ('solve', 'crosseval', 'position', 'sensitivity')


# =================================================================
# WORKER POOL
# =================================================================

def default_start_method() -> str:
    methods = multiprocessing.get_all_start_methods()
    if os.name == 'posix' and 'fork' in methods:
        return 'fork'
    if 'spawn' in methods:
        return 'spawn'
    return methods[0]


def _init_worker():
    import django
    django.setup()


def map_in_order(func: Callable, tasks: Iterable, jobs: int = 1) -> List[Any]:
    """
    Apply ``func`` to every task, on up to ``jobs`` processes.

    Results come back in task order whatever the job count, so reductions
    over them are identical for any degree of parallelism.
    """
    tasks = list(tasks)
    workers = max(1, min(jobs, len(tasks)))
    if workers <= 1:
        return [func(task) for task in tasks]

    start_method = settings.PLANNING['START_METHOD'] or default_start_method()
    context = multiprocessing.get_context(start_method)
    logger.debug(f"Dispatching {len(tasks)} tasks to {workers} {start_method} workers")
    with ProcessPoolExecutor(max_workers=workers, mp_context=context, initializer=_init_worker) as executor:
        return list(executor.map(func, tasks))


def sample_chunks(samples: int, jobs: int) -> List[np.ndarray]:
    """Contiguous sample-index chunks, one per job"""
    return [chunk for chunk in np.array_split(np.arange(samples), max(1, jobs)) if len(chunk)]


def _solve_task(task: Tuple[Scenario, RunConfig]) -> SolveResult:
    scenario, config = task
    return ScenarioSolver(scenario, config).solve()


def _crosseval_task(task: Tuple[Sequence, Scenario, RunConfig]) -> np.ndarray:
    portfolios, scenario, config = task
    return cross_evaluate(portfolios, scenario, config)


def _trace_task(task: Tuple[List[Member], Scenario, RunConfig]) -> List[dict]:
    front, scenario, config = task
    futures = scenario_futures(scenario, config.space, config.catalog, config.master_seed)
    records = []
    for portfolio_id, member in enumerate(front):
        for instance, future, trace in futures.iter_traces(member.portfolio):
            for record in trace.to_records():
                records.append({'portfolio_id': portfolio_id, 'instance': instance, 'future': future, **record})
    return records


def _probability_task(task) -> Dict[str, np.ndarray]:
    candidates, scores, config, indices = task
    return probability_metric_samples(candidates, scores, config, indices)


def _weight_task(task) -> Dict[str, np.ndarray]:
    candidates, config, indices = task
    return weight_metric_samples(candidates, config, indices)


def _merge_samples(chunks: List[Dict[str, np.ndarray]]) -> Dict[str, np.ndarray]:
    return {metric: np.concatenate([chunk[metric] for chunk in chunks], axis=1) for metric in METRICS}


# =================================================================
# PIPELINE
# =================================================================

class PlanningPipeline:
    """Runs planning stages for one config into one output directory"""

    def __init__(self, config: RunConfig, out_dir: Union[str, Path], jobs: int = 1, trace: bool = False):
        self.config = config
        self.out_dir = Path(out_dir)
        self.jobs = max(1, int(jobs))
        self.trace = trace
        self.timings: Dict[str, float] = {}
        self.written: List[str] = []

    def log(self, message: str, level: str = 'INFO'):
        log_func = getattr(logger, level.lower(), logger.info)
        log_func(f"[seed {self.config.master_seed}] {message}")

    @contextmanager
    def stage(self, name: str):
        self.log(f"Stage {name} started")
        started = time.monotonic()
        yield
        self.timings[name] = time.monotonic() - started
        self.log(f"Stage {name} finished in {self.timings[name]:.2f}s")

    def path(self, name: str) -> Path:
        return self.out_dir / name

    def record(self, name: str):
        if name not in self.written:
            self.written.append(name)

    def prepare(self):
        """Create the output directory, drop any stale manifest and record the effective config"""
        self.out_dir.mkdir(parents=True, exist_ok=True)
        manifest = self.path(artifacts.MANIFEST)
        if manifest.exists():
            manifest.unlink()
        self.path(artifacts.CONFIG).write_bytes(render_config(self.config))
        self.record(artifacts.CONFIG)

    # -----------------------------------------------------------------
    # Stages
    # -----------------------------------------------------------------

    def solve(self) -> List[SolveResult]:
        scenarios = self.config.space.scenarios
        with self.stage('solve'):
            results = map_in_order(_solve_task, [(s, self.config) for s in scenarios], self.jobs)
            for j, result in enumerate(results):
                name = artifacts.front_name(j)
                artifacts.write_csv(artifacts.front_frame(result.front, j, self.config.catalog.size), self.path(name))
                self.record(name)
                self.log(f"{result.scenario.label}: front of {len(result.front)} after {result.evaluations} evaluations")

            if self.trace:
                traces = map_in_order(
                    _trace_task, [(r.front, r.scenario, self.config) for r in results], self.jobs
                )
                for j, records in enumerate(traces):
                    name = artifacts.trace_name(j)
                    artifacts.write_csv(artifacts.trace_frame(records), self.path(name))
                    self.record(name)
        return results

    def evaluate_columns(self, portfolios: List[Portfolio]) -> List[np.ndarray]:
        return map_in_order(
            _crosseval_task, [(portfolios, s, self.config) for s in self.config.space.scenarios], self.jobs
        )

    def crosseval(self) -> CandidateSet:
        with self.stage('crosseval'):
            pooled = []
            for j in range(self.config.space.size):
                pooled.extend(artifacts.read_front(self.path(artifacts.front_name(j)), j, self.config))
            candidates = build_candidate_set(pooled, self.config, self.evaluate_columns)
            artifacts.write_csv(artifacts.crosseval_frame(candidates), self.path(artifacts.CROSSEVAL))
            self.record(artifacts.CROSSEVAL)
            self.log(f"{len(pooled)} front rows pooled into {candidates.size} candidates")
        return candidates

    def position(self):
        with self.stage('position'):
            candidates = artifacts.read_crosseval(self.path(artifacts.CROSSEVAL), self.config)
            report = position_candidates(candidates, self.config)
            artifacts.write_csv(artifacts.positioning_frame(candidates, report), self.path(artifacts.POSITIONING))
            artifacts.write_csv(artifacts.best_frame(candidates, report), self.path(artifacts.BEST))
            self.record(artifacts.POSITIONING)
            self.record(artifacts.BEST)
        return report

    def sensitivity(self):
        config = self.config
        with self.stage('sensitivity'):
            candidates = artifacts.read_crosseval(self.path(artifacts.CROSSEVAL), config)
            scores = score_matrix(candidates, (config.positioning.w_cost, config.positioning.w_success))
            _, _, *values = nominal_metrics(candidates, config)
            nominal = dict(zip(METRICS, values))
            chunks = sample_chunks(config.sensitivity.samples, self.jobs)

            probability = map_in_order(
                _probability_task, [(candidates, scores, config, chunk) for chunk in chunks], self.jobs
            )
            weights = map_in_order(_weight_task, [(candidates, config, chunk) for chunk in chunks], self.jobs)
            bands = [
                *summarize(PROBABILITY, nominal, _merge_samples(probability)),
                *summarize(WEIGHTS, nominal, _merge_samples(weights)),
            ]
            artifacts.write_csv(artifacts.sensitivity_frame(bands), self.path(artifacts.SENSITIVITY))
            self.record(artifacts.SENSITIVITY)
        return bands

    def manifest(self) -> artifacts.RunManifest:
        manifest = artifacts.RunManifest.collect(
            self.out_dir,
            self.written,
            version=__version__,
            config_bytes=render_config(self.config),
            master_seed=self.config.master_seed,
            timings=self.timings,
        )
        manifest.write(self.out_dir)
        return manifest

    def run_stage(self, name: str):
        if name not in STAGES:
            raise ValueError(f"Unknown stage {name!r}")
        self.prepare()
        return getattr(self, name)()

    def run(self) -> artifacts.RunManifest:
        self.prepare()
        for name in STAGES:
            getattr(self, name)()
        manifest = self.manifest()
        self.log(f"Run complete: {len(manifest.files)} files in {self.out_dir}")
        return manifest


def run_pipeline(config: RunConfig, out_dir: Union[str, Path], jobs: int = 1, trace: bool = False) -> artifacts.RunManifest:
    """Full planning run: every stage, then the manifest"""
    return PlanningPipeline(config, out_dir, jobs=jobs, trace=trace).run()
