"""
Steady-state multi-objective evolution of portfolios within one scenario

Objectives: investment cost (minimise) and success rate over the scenario's
futures (maximise). Parents are drawn at random from a population that
drifts towards a non-dominated set; every offspring either replaces one
inferior member, joins the population, or is discarded.
"""
import logging
import time
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np
from django.conf import settings

from apps.planning.domain import EASettings, Portfolio, RunConfig, Scenario
from apps.planning.simulation import scenario_futures
from core.streams import derive_stream

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ObjectivePair:
    cost: float
    success_rate: float


@dataclass(frozen=True)
class Member:
    portfolio: Portfolio
    objectives: ObjectivePair


def dominates(a: ObjectivePair, b: ObjectivePair) -> bool:
    """Pareto dominance for (minimise cost, maximise success rate)"""
    no_worse = a.cost <= b.cost and a.success_rate >= b.success_rate
    better = a.cost < b.cost or a.success_rate > b.success_rate
    return no_worse and better


def dominance_matrix(members: Sequence[Member]) -> np.ndarray:
    """M[i, j] is True when member i dominates member j"""
    cost = np.array([m.objectives.cost for m in members])
    success = np.array([m.objectives.success_rate for m in members])
    no_worse = (cost[:, None] <= cost[None, :]) & (success[:, None] >= success[None, :])
    better = (cost[:, None] < cost[None, :]) | (success[:, None] > success[None, :])
    return no_worse & better


def non_dominated(members: Sequence[Member]) -> List[Member]:
    """Rank-1 subset, in population order; equal objective pairs are all kept"""
    if not members:
        return []
    dominated = dominance_matrix(members).any(axis=0)
    return [member for member, flag in zip(members, dominated) if not flag]


def evaluate(portfolio: Portfolio, scenario: Scenario, config: RunConfig) -> ObjectivePair:
    """Cost and success rate of a portfolio within one scenario"""
    futures = scenario_futures(scenario, config.space, config.catalog, config.master_seed)
    return ObjectivePair(
        cost=portfolio.cost(config.catalog),
        success_rate=futures.success_rate(portfolio),
    )


def make_offspring(p1: Portfolio, p2: Portfolio, stream: np.random.Generator,
                   ea: EASettings, x_max: int) -> Portfolio:
    """
    Uniform crossover then per-gene Gaussian mutation in genotype space.

    Every gene draws its crossover coin, mutation coin and mutation noise so
    the stream is consumed identically whatever the outcome.
    """
    first = np.asarray(p1.genotype, dtype=float)
    second = np.asarray(p2.genotype, dtype=float)
    genes = len(first)

    take_first = stream.random(genes) < 0.5
    child = np.where(take_first, first, second)

    mutate = stream.random(genes) < ea.mutation_prob
    noise = stream.normal(0.0, ea.mutation_stddev, genes)
    child = np.clip(child + np.where(mutate, noise, 0.0), 0.0, 1.0)
    return Portfolio.from_genotype(child, x_max)


def steady_state_update(population: Sequence[Member], child: Member,
                        stream: np.random.Generator) -> List[Member]:
    """
    Insert an evaluated offspring into the population.

    A dominated child is discarded. Otherwise the child replaces exactly one
    member that it dominates (preferred) or that another member dominates,
    chosen at random among the candidates; with no such member it is
    appended and the population grows by one.
    """
    members = list(population)
    if any(dominates(member.objectives, child.objectives) for member in members):
        return members

    beaten_by_child = [
        index for index, member in enumerate(members)
        if dominates(child.objectives, member.objectives)
    ]
    if beaten_by_child:
        candidates = beaten_by_child
    else:
        candidates = list(np.flatnonzero(dominance_matrix(members).any(axis=0))) if members else []

    if not candidates:
        members.append(child)
        return members

    pick = candidates[int(stream.integers(len(candidates)))] if len(candidates) > 1 else candidates[0]
    members[int(pick)] = child
    return members


@dataclass
class SolveResult:
    scenario: Scenario
    front: List[Member]
    population: List[Member]
    evaluations: int
    elapsed: float


class ScenarioSolver:
    """Runs the steady-state EA against one scenario until the evaluation budget is spent"""

    def __init__(self, scenario: Scenario, config: RunConfig):
        self.scenario = scenario
        self.config = config
        self.evaluations = 0
        self.progress_every = settings.PLANNING['PROGRESS_EVERY']

    def stream(self, *path):
        return derive_stream(self.config.master_seed, [('solve', self.scenario.id), *path])

    def evaluate(self, portfolio: Portfolio) -> Member:
        self.evaluations += 1
        return Member(portfolio, evaluate(portfolio, self.scenario, self.config))

    def log_progress(self, population: List[Member]):
        if self.evaluations % self.progress_every == 0:
            logger.info(
                f"[{self.scenario.label}] {self.evaluations}/{self.config.ea.evaluations} evaluations, "
                f"population {len(population)}, front {len(non_dominated(population))}"
            )

    def initial_population(self) -> List[Member]:
        ea, x_max = self.config.ea, self.config.x_max
        genotypes = self.stream('init').random((ea.population, self.config.catalog.size))
        population = []
        for genotype in genotypes:
            population.append(self.evaluate(Portfolio.from_genotype(genotype, x_max)))
            self.log_progress(population)
        return population

    def solve(self) -> SolveResult:
        started = time.monotonic()
        ea = self.config.ea
        population = self.initial_population()

        offspring = 0
        while self.evaluations < ea.evaluations:
            stream = self.stream(('offspring', offspring))
            first, second = stream.integers(len(population), size=2)
            child = make_offspring(
                population[first].portfolio, population[second].portfolio, stream, ea, self.config.x_max
            )
            population = steady_state_update(population, self.evaluate(child), stream)
            offspring += 1
            self.log_progress(population)

        front = non_dominated(population)
        elapsed = time.monotonic() - started
        logger.info(
            f"[{self.scenario.label}] finished: {self.evaluations} evaluations, "
            f"population {len(population)}, front {len(front)} in {elapsed:.2f}s"
        )
        return SolveResult(self.scenario, front, population, self.evaluations, elapsed)


def solve_scenario(scenario: Scenario, config: RunConfig) -> List[Member]:
    """Evolve portfolios for one scenario and return the final non-dominated set"""
    return ScenarioSolver(scenario, config).solve().front
