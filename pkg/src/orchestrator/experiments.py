# src/orchestrator/experiments.py
"""Batch experiments: the clique-cost benchmark sweep and navigation method comparison."""
import time
from typing import Iterable, List, Sequence

import numpy as np

from src.core.belief import init_belief
from src.core.explorer import EdgeKnowledge, estimate_method_cost, navigate
from src.core.inference import benchmark_network, network_clique_cost, propagate
from src.core.world_model import sample_map
from src.models.models import BenchmarkRow, GridSpec, MethodSummary, NavigationMethod, NoiseModel, Scenario
from src.orchestrator.orchestrator import sample_world
from src.utils.custom_logging import get_logger
from src.utils.errors import ConfigError

logger = get_logger(__name__)

HYPOTHESIS_SIZES = (10, 20, 30)
EXPLORATION_LENGTHS = (4, 6, 8, 10)


def _run_rng(seed: int, run: int) -> np.random.Generator:
    return np.random.default_rng([seed, run])


def clique_cost_sweep(
    grid: GridSpec = GridSpec(nx=4, ny=4),
    hypothesis_sizes: Sequence[int] = HYPOTHESIS_SIZES,
    exploration_lengths: Sequence[int] = EXPLORATION_LENGTHS,
    runs: int = 10,
    seed: int = 0,
    measure_time: bool = False,
) -> List[BenchmarkRow]:
    """Mean largest clique cost (and optionally propagation time) per (|H|, exploration length) cell.

    Each run samples one true world and one permutation of the intersections;
    explored sets are prefixes of that permutation, shared by every |H|.
    """
    points = grid.intersections()
    too_long = [n for n in exploration_lengths if n > len(points)]
    if too_long:
        raise ConfigError(f"exploration lengths {too_long} exceed the {len(points)} intersections")
    costs = {(k, n): [] for k in hypothesis_sizes for n in exploration_lengths}
    times = {(k, n): [] for k in hypothesis_sizes for n in exploration_lengths}

    for run in range(runs):
        rng = _run_rng(seed, run)
        world = sample_map(grid, rng)
        order = [points[int(i)] for i in rng.permutation(len(points))]
        for k in hypothesis_sizes:
            hypotheses = init_belief(grid, k, rng, NoiseModel(false_negative=0.0, false_positive=0.0)).hypotheses
            for n in exploration_lengths:
                net, evidence = benchmark_network(grid, hypotheses, order[:n], world)
                costs[(k, n)].append(network_clique_cost(net, evidence))
                if measure_time:
                    started = time.perf_counter()
                    propagate(net, evidence)
                    times[(k, n)].append((time.perf_counter() - started) * 1000.0)
        logger.info(f"benchmark run {run + 1}/{runs} done")

    rows = []
    for k in hypothesis_sizes:
        for n in exploration_lengths:
            rows.append(BenchmarkRow(
                hypothesis_size=k,
                exploration_length=n,
                update_time_ms=round(float(np.mean(times[(k, n)])), 3) if measure_time else None,
                largest_clique_cost=round(float(np.mean(costs[(k, n)])), 12),
            ))
            logger.debug(f"|H|={k} length={n}: clique cost {rows[-1].largest_clique_cost:g}")
    return rows


def compare_methods(
    scenario: Scenario,
    methods: Iterable[NavigationMethod],
    trials: int,
    rollouts: int = 20,
) -> List[MethodSummary]:
    """Realized and rollout-estimated cost of each navigation method.

    Trial t draws the same world and prior for every method, so methods differ
    only by how they move. Within a trial the tasks run in order and share the
    edge knowledge and belief gathered so far.
    """
    if trials < 1:
        raise ConfigError("trials must be at least 1")
    if not scenario.tasks:
        raise ConfigError("method comparison needs at least one task")
    methods = list(methods)
    summaries = []
    for method in methods:
        realized, estimated, reached, learned = [], [], 0, []
        for t in range(trials):
            setup = _run_rng(scenario.seed, t)
            world = sample_world(scenario, setup)
            belief = init_belief(scenario.grid, scenario.hypotheses, setup, scenario.noise, scenario.structure)
            knowledge = EdgeKnowledge(grid=scenario.grid)
            moves = _run_rng(scenario.seed + 1, t)
            for task in scenario.tasks:
                mean, _ = estimate_method_cost(method, belief, task, rollouts, moves, knowledge)
                estimated.append(mean)
                result = navigate(
                    method, task.origin, task.destination, world, knowledge, belief=belief, rng=moves,
                )
                knowledge, belief = result.knowledge, result.belief
                realized.append(result.cost)
                learned.append(result.new_edges)
                reached += result.status == "reached"
        runs = len(realized)
        summaries.append(MethodSummary(
            method=method,
            trials=trials,
            mean_cost=round(float(np.mean(realized)), 12),
            std_cost=round(float(np.std(realized)), 12),
            estimated_cost=round(float(np.mean(estimated)), 12),
            estimated_std=round(float(np.std(estimated)), 12),
            success_rate=round(reached / runs, 12),
            mean_new_edges=round(float(np.mean(learned)), 12),
        ))
        logger.info(
            f"{method.value}: mean cost {summaries[-1].mean_cost:.3f} over {runs} runs, "
            f"success {summaries[-1].success_rate:.2f}"
        )
    return summaries
