# src/core/decision.py
from __future__ import annotations
from dataclasses import dataclass
from itertools import product
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from src.core.sensing import detector_index, feature_table, location_likelihoods, reading_likelihood
from src.core.world_model import intersect, layout_from_edges, shortest_path
from src.models.models import (
    BeliefState, CorridorLayout, Detector, GridSpec, HypothesisSet, Intersection, PathChoice,
    TaskSpec, TimeScale, edge_between,
)
from src.utils.custom_logging import get_logger
from src.utils.errors import OutcomesNotExhaustive

logger = get_logger(__name__)


def penalty_bound(grid: GridSpec) -> int:
    """B: the cost charged when a task cannot be completed in a map."""
    return 2 * grid.nx * grid.ny

# ---------- Costs ----------

def cost(task: TaskSpec, plan_map: CorridorLayout, true_map: CorridorLayout) -> float:
    """Shortest path in plan ∩ true; B when the destination is cut off there."""
    d = shortest_path(intersect(plan_map, true_map), task.origin, task.destination)
    return float(penalty_bound(true_map.grid) if d is None else d)


def route_cost(route: Sequence[Intersection], plan_map: CorridorLayout, true_map: CorridorLayout) -> float:
    """Follow `route` in `true_map`; a missing edge costs one failed attempt, then
    the shortest path over (plan ∪ traversed) ∩ true finishes the trip."""
    if len(route) < 2:
        return 0.0
    penalty = float(penalty_bound(true_map.grid))
    goal = route[-1]
    traversed = []
    steps = 0
    here = route[0]
    for nxt in route[1:]:
        e = edge_between(here, nxt)
        steps += 1
        if not true_map.has_edge(e):
            known = layout_from_edges(true_map.grid, list(plan_map.sorted_edges()) + traversed)
            d = shortest_path(intersect(known, true_map), here, goal)
            return penalty if d is None else float(steps + d)
        traversed.append(e)
        here = nxt
    return float(steps)


@dataclass
class CostTable:
    """cost[t, p, j]: task t planned in map p (hypotheses, then M*) executed in true map j."""
    tasks: Tuple[TaskSpec, ...]
    counts: np.ndarray
    cost: np.ndarray
    penalty: float

    @property
    def task_ids(self) -> Tuple[str, ...]:
        return tuple(t.id for t in self.tasks)

    def index(self, task_id: str) -> int:
        return self.task_ids.index(task_id)

    def lookup(self, task_id: str, plan_index: int, true_index: int) -> float:
        return float(self.cost[self.index(task_id), plan_index, true_index])

    @property
    def plan_row(self) -> int:
        """Row of the current plan map M*."""
        return self.cost.shape[1] - 1


def build_cost_table(
    tasks: Sequence[TaskSpec], hypotheses: HypothesisSet, plan_map: Optional[CorridorLayout] = None
) -> CostTable:
    maps = list(hypotheses.maps)
    grid = maps[0].grid if maps else (plan_map.grid if plan_map is not None else GridSpec(nx=1, ny=1))
    plans: List[CorridorLayout] = maps + [plan_map if plan_map is not None else CorridorLayout(grid=grid)]
    table = np.zeros((len(tasks), len(plans), len(maps)))
    for t, task in enumerate(tasks):
        for p, plan in enumerate(plans):
            for j, true_map in enumerate(maps):
                table[t, p, j] = cost(task, plan, true_map)
    return CostTable(
        tasks=tuple(tasks),
        counts=np.array([t.expected_count for t in tasks], dtype=float),
        cost=table,
        penalty=float(penalty_bound(grid)),
    )

# ---------- Futures ----------

def map_index(probs: Sequence[float]) -> int:
    """MAP map (NOTA excluded); the lowest index wins ties."""
    return int(np.argmax(np.asarray(probs)[:-1]))


def futures_vector(probs: Sequence[float], table: CostTable) -> np.ndarray:
    """Futures(M_j, I) for every hypothesis map j, then NOTA's B·ΣE."""
    k = table.cost.shape[2]
    out = np.empty(k + 1)
    if k:
        plan = map_index(probs)
        out[:k] = table.counts @ table.cost[:, plan, :]
    out[k] = table.penalty * table.counts.sum()
    return out


def futures(true_map: Optional[CorridorLayout], belief: BeliefState, tasks: Sequence[TaskSpec]) -> float:
    """Σ E(|T|)·Cost(T, M_MAP, true_map); `None` stands for NOTA."""
    grid = belief.grid
    counts = sum(t.expected_count for t in tasks)
    if true_map is None:
        return float(penalty_bound(grid) * counts)
    plan = belief.hypotheses.maps[map_index(belief.probs)]
    return float(sum(t.expected_count * cost(t, plan, true_map) for t in tasks))

# ---------- Expected values ----------

def known_path_value(
    probs: np.ndarray, immediate: np.ndarray, futures_costs: np.ndarray, penalty: float, total_count: float
) -> float:
    """Σ_j p_j [immediate_j + futures_j] with NOTA charged B + B·ΣE."""
    k = len(immediate)
    value = float(np.dot(probs[:k], immediate + futures_costs[:k]))
    return value + float(probs[k]) * (penalty + penalty * total_count)


def unknown_path_value(
    probs: np.ndarray,
    route_costs: np.ndarray,
    likelihoods: np.ndarray,
    table: CostTable,
) -> float:
    """Immediate cost of the exploratory route plus outcome-averaged futures.

    `likelihoods[i, j]` is Pr(O_i | M_j) with NOTA in the last column.
    """
    k = len(route_costs)
    _check_exhaustive(likelihoods)
    value = float(np.dot(probs[:k], route_costs)) + float(probs[k]) * table.penalty
    for row in likelihoods:
        joint = row * probs
        p_outcome = joint.sum()
        if p_outcome <= 0.0:
            continue
        posterior = joint / p_outcome
        value += p_outcome * float(np.dot(posterior, futures_vector(posterior, table)))
    return value


def _check_exhaustive(likelihoods: np.ndarray) -> None:
    sums = likelihoods.sum(axis=0)
    if not np.allclose(sums, 1.0, atol=1e-9, rtol=0.0):
        raise OutcomesNotExhaustive(f"outcome likelihoods sum to {sums.tolist()}")


def _immediate_known(task: TaskSpec, plan_map: CorridorLayout, maps: Sequence[CorridorLayout]) -> np.ndarray:
    return np.array([cost(task, plan_map, m) for m in maps], dtype=float)


def ev_known_path(
    task: TaskSpec,
    plan_map: CorridorLayout,
    belief: BeliefState,
    table: CostTable,
    perfect_world: Optional[CorridorLayout] = None,
) -> float:
    """EV(P_K). With `perfect_world` the robot classifies perfectly and the
    expectation collapses onto that world."""
    probs = np.asarray(belief.probs)
    if perfect_world is not None:
        plan = belief.hypotheses.maps[map_index(probs)] if belief.k else plan_map
        future = sum(t.expected_count * cost(t, plan, perfect_world) for t in table.tasks)
        return cost(task, plan_map, perfect_world) + float(future)
    immediate = _immediate_known(task, plan_map, belief.hypotheses.maps)
    return known_path_value(probs, immediate, futures_vector(probs, table), table.penalty, float(table.counts.sum()))


def ev_unknown_path(
    task: TaskSpec,
    plan_map: CorridorLayout,
    belief: BeliefState,
    proposal: "SensingProposal",
    table: CostTable,
) -> float:
    probs = np.asarray(belief.probs)
    route_costs = np.array([route_cost(proposal.route, plan_map, m) for m in belief.hypotheses.maps], dtype=float)
    return unknown_path_value(probs, route_costs, proposal.matrix(), table)


def decide(ev_pk: float, ev_pu: float) -> PathChoice:
    """Argmin of the two expected values; ties keep the known route."""
    return PathChoice.KNOWN if ev_pk <= ev_pu else PathChoice.UNKNOWN


class DecisionTrace(BaseModel):
    model_config = ConfigDict(frozen=True)

    ev_pk: float
    ev_pu: float
    choice: PathChoice


def choose_path(
    task: TaskSpec,
    plan_map: CorridorLayout,
    belief: BeliefState,
    proposal: "SensingProposal",
    table: CostTable,
) -> DecisionTrace:
    ev_pk = ev_known_path(task, plan_map, belief, table)
    ev_pu = ev_unknown_path(task, plan_map, belief, proposal, table)
    choice = decide(ev_pk, ev_pu)
    logger.debug(f"task {task.id}: EV(P_K)={ev_pk:.4f} EV(P_U)={ev_pu:.4f} -> {choice.value}")
    return DecisionTrace(ev_pk=ev_pk, ev_pu=ev_pu, choice=choice)

# ---------- Sensing proposals ----------

class SensingProposal(BaseModel):
    """One exploratory sensing action at `location` and the route it would serve."""
    model_config = ConfigDict(frozen=True)

    location: Intersection
    detectors: Tuple[Detector, ...]
    outcomes: Tuple[Tuple[bool, ...], ...]
    # likelihoods[i][j] = Pr(O_i | M_j), NOTA last
    likelihoods: Tuple[Tuple[float, ...], ...]
    route: Tuple[Intersection, ...]

    def matrix(self) -> np.ndarray:
        return np.array(self.likelihoods, dtype=float)


def build_proposal(
    belief: BeliefState,
    location: Intersection,
    detectors: Sequence[Detector],
    route: Sequence[Intersection],
) -> SensingProposal:
    """Enumerate the 2^|D| joint outcomes of firing `detectors` at `location`."""
    noise = belief.noise
    outcomes = list(product((False, True), repeat=len(detectors)))
    idx = [detector_index(d) for d in detectors]
    here = [r for r in belief.evidence if r.location == location]
    types, lik = location_likelihoods(belief.grid, location, here, noise)
    nota_types = lik / lik.sum() if lik.sum() > 0 else np.full(len(types), 1.0 / len(types))

    def outcome_likelihood(bits: int, outcome: Tuple[bool, ...]) -> float:
        table = feature_table(bits)
        return float(np.prod([reading_likelihood(o, table[i], noise) for o, i in zip(outcome, idx)]))

    rows = []
    for outcome in outcomes:
        row = [outcome_likelihood(m.direction_bits(location), outcome) for m in belief.hypotheses.maps]
        row.append(float(sum(w * outcome_likelihood(b, outcome) for w, b in zip(nota_types, types))))
        rows.append(tuple(row))
    return SensingProposal(
        location=location,
        detectors=tuple(detectors),
        outcomes=tuple(outcomes),
        likelihoods=tuple(rows),
        route=tuple(route),
    )

# ---------- Time ----------

def simulated_minutes(traversals: int, readings: int, time: TimeScale) -> float:
    return traversals * time.minutes_per_traversal + readings * time.minutes_per_sensing
