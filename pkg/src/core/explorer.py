# src/core/explorer.py
from __future__ import annotations
import heapq
from collections import Counter
from typing import Dict, FrozenSet, Iterable, List, Literal, Mapping, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from src.core.belief import posterior_sample, update
from src.core.sensing import opening_detector
from src.core.world_model import Seed, as_rng, layout_from_edges
from src.models.models import (
    WEDGE_DIRECTION, AttemptRecord, BeliefState, CorridorLayout, Edge, EdgeStatus,
    Feature, GridSpec, HypothesisSet, Intersection, NavigationMethod, SensorReading, TaskSpec,
    direction_between, edge_at, edge_between,
)
from src.utils.custom_logging import get_logger
from src.utils.errors import DegenerateEvidence

logger = get_logger(__name__)

NavigationStatus = Literal["reached", "blocked", "step_bound_exceeded"]


class EdgeKnowledge(BaseModel):
    """Per-edge status learned from traversal attempts; everything else is unknown."""
    model_config = ConfigDict(frozen=True)

    grid: GridSpec
    present: FrozenSet[Edge] = frozenset()
    absent: FrozenSet[Edge] = frozenset()

    def status(self, edge: Edge) -> EdgeStatus:
        if edge in self.present:
            return EdgeStatus.PRESENT
        if edge in self.absent:
            return EdgeStatus.ABSENT
        return EdgeStatus.UNKNOWN

    def learn(self, edge: Edge, exists: bool) -> "EdgeKnowledge":
        if exists:
            return self.model_copy(update={"present": self.present | {edge}})
        return self.model_copy(update={"absent": self.absent | {edge}})

    def known_map(self) -> CorridorLayout:
        """M*: the corridors known to exist."""
        return layout_from_edges(self.grid, sorted(self.present, key=Edge.sort_key))

    def as_mapping(self) -> Dict[Edge, EdgeStatus]:
        out = {e: EdgeStatus.PRESENT for e in self.present}
        out.update({e: EdgeStatus.ABSENT for e in self.absent})
        return out

    @property
    def known_count(self) -> int:
        return len(self.present) + len(self.absent)


def knowledge_from_evidence(grid: GridSpec, evidence: Iterable[SensorReading]) -> EdgeKnowledge:
    """Edge knowledge implied by traversal readings (perfect channel)."""
    knowledge = EdgeKnowledge(grid=grid)
    for r in evidence:
        if r.source != "traversal" or r.detector.feature != Feature.OPENING or r.detector.wedge % 2:
            continue
        direction = WEDGE_DIRECTION[r.detector.wedge]
        if grid.neighbor(r.location, direction) is None:
            continue
        knowledge = knowledge.learn(edge_at(r.location, direction), r.result)
    return knowledge

# ---------- Edge weights ----------

def edge_counts(hypotheses: HypothesisSet) -> Counter:
    """m per edge: how many hypothesis maps contain it."""
    counts: Counter = Counter()
    for m in hypotheses.maps:
        counts.update(m.sorted_edges())
    return counts


def edge_weight(
    edge: Edge,
    knowledge: EdgeKnowledge,
    hypotheses: HypothesisSet,
    counts: Optional[Mapping[Edge, int]] = None,
) -> float:
    """1 when known present, 0 when known absent, (m+1)/(|H|+1) otherwise."""
    status = knowledge.status(edge)
    if status == EdgeStatus.PRESENT:
        return 1.0
    if status == EdgeStatus.ABSENT:
        return 0.0
    m = (counts if counts is not None else edge_counts(hypotheses))[edge]
    return (m + 1) / (len(hypotheses) + 1)


def method_weights(
    method: NavigationMethod, knowledge: EdgeKnowledge, hypotheses: HypothesisSet
) -> Dict[Edge, float]:
    counts = edge_counts(hypotheses)
    weights = {}
    for e in knowledge.grid.edges():
        w = edge_weight(e, knowledge, hypotheses, counts)
        status = knowledge.status(e)
        if method == NavigationMethod.AVOID_KNOWN and status == EdgeStatus.PRESENT:
            w = 0.5
        elif method in (NavigationMethod.SHORTEST_IGNORING_UNKNOWN, NavigationMethod.RANDOM_WALK) and w > 0:
            w = 1.0
        weights[e] = w
    return weights


def path_value(path: Sequence[Edge], knowledge: EdgeKnowledge, hypotheses: HypothesisSet) -> float:
    """Product of edge weights along the path; the empty path is worth 1."""
    counts = edge_counts(hypotheses)
    value = 1.0
    for e in path:
        value *= edge_weight(e, knowledge, hypotheses, counts)
    return value

# ---------- Path search ----------

def _lex(p: Intersection) -> Tuple[int, int]:
    return (p[1], p[0])


def best_path(
    position: Intersection,
    goal: Intersection,
    weights: Mapping[Edge, float],
    grid: GridSpec,
) -> Optional[List[Intersection]]:
    """Highest-value route; ties go to fewer edges, then to the lexicographically
    smallest stop sequence. None when every route has value 0."""
    if position == goal:
        return [position]
    start = (-1.0, 0, (_lex(position),))
    heap = [(start, [position])]
    settled = set()
    while heap:
        (neg_value, length, key), route = heapq.heappop(heap)
        here = route[-1]
        if here in settled:
            continue
        settled.add(here)
        if here == goal:
            return route
        for _, e in grid.incident_edges(here):
            a, b = e.endpoints()
            nxt = b if a == here else a
            w = weights.get(e, 0.0)
            if w <= 0.0 or nxt in settled:
                continue
            value = round(-neg_value * w, 12)
            heapq.heappush(heap, ((-value, length + 1, key + (_lex(nxt),)), route + [nxt]))
    return None


def best_step(
    position: Intersection,
    goal: Intersection,
    knowledge: EdgeKnowledge,
    hypotheses: HypothesisSet,
    method: NavigationMethod = NavigationMethod.WEIGHTED_PATH,
) -> Optional[Edge]:
    """First edge of the best route under `method`'s weights; None means Blocked."""
    route = best_path(position, goal, method_weights(method, knowledge, hypotheses), knowledge.grid)
    if route is None or len(route) < 2:
        return None
    return edge_between(route[0], route[1])


def plan_route(
    method: NavigationMethod,
    position: Intersection,
    goal: Intersection,
    knowledge: EdgeKnowledge,
    hypotheses: HypothesisSet,
) -> Optional[List[Intersection]]:
    """Full route a method would currently follow; random_walk plans like shortest_ignoring_unknown."""
    if method == NavigationMethod.RANDOM_WALK:
        method = NavigationMethod.SHORTEST_IGNORING_UNKNOWN
    return best_path(position, goal, method_weights(method, knowledge, hypotheses), knowledge.grid)


def random_step(position: Intersection, knowledge: EdgeKnowledge, rng: np.random.Generator) -> Optional[Edge]:
    options = [e for _, e in knowledge.grid.incident_edges(position) if knowledge.status(e) != EdgeStatus.ABSENT]
    if not options:
        return None
    return options[int(rng.integers(len(options)))]

# ---------- Navigation ----------

class NavigationResult(BaseModel):
    status: NavigationStatus
    position: Intersection
    trajectory: List[AttemptRecord]
    knowledge: EdgeKnowledge
    belief: Optional[BeliefState] = None
    new_edges: int = 0

    @property
    def cost(self) -> int:
        return len(self.trajectory)


def traversal_reading(origin: Intersection, target: Intersection, success: bool, timestamp: int = 0) -> SensorReading:
    """Implied noiseless opening reading at `origin` toward `target`."""
    return SensorReading(
        location=origin,
        detector=opening_detector(direction_between(origin, target)),
        result=success,
        timestamp=timestamp,
        source="traversal",
    )


def attempt(
    edge: Edge,
    position: Intersection,
    world: CorridorLayout,
    knowledge: EdgeKnowledge,
    belief: Optional[BeliefState],
    step: int,
) -> Tuple[Intersection, AttemptRecord, EdgeKnowledge, Optional[BeliefState]]:
    """Try to cross `edge`; the true world decides and the outcome is learned."""
    a, b = edge.endpoints()
    target = b if a == position else a
    success = world.has_edge(edge)
    record = AttemptRecord(step=step, origin=position, target=target, success=success)
    knowledge = knowledge.learn(edge, success)
    if belief is not None:
        try:
            belief = update(belief, traversal_reading(position, target, success, step))
        except DegenerateEvidence:
            logger.warning(f"traversal of {edge} contradicts every hypothesis; belief unchanged")
    return (target if success else position), record, knowledge, belief


def step_bound(grid: GridSpec) -> int:
    return 4 * grid.edge_count


def navigate(
    method: NavigationMethod,
    start: Intersection,
    goal: Intersection,
    world: CorridorLayout,
    knowledge: EdgeKnowledge,
    belief: Optional[BeliefState] = None,
    rng: Seed = None,
    hypotheses: Optional[HypothesisSet] = None,
    max_steps: Optional[int] = None,
) -> NavigationResult:
    """Step with `method` until the goal, a block, or the step bound."""
    rng = as_rng(rng)
    hypotheses = hypotheses or (belief.hypotheses if belief is not None else HypothesisSet(maps=()))
    bound = step_bound(world.grid) if max_steps is None else max_steps
    known_before = knowledge.known_count
    position = start
    trajectory: List[AttemptRecord] = []
    status: NavigationStatus = "reached"
    while position != goal:
        if len(trajectory) >= bound:
            status = "step_bound_exceeded"
            logger.warning(f"{method.value} hit the step bound {bound} between {start} and {goal}")
            break
        if method == NavigationMethod.RANDOM_WALK:
            edge = random_step(position, knowledge, rng)
        else:
            current = belief.hypotheses if belief is not None else hypotheses
            edge = best_step(position, goal, knowledge, current, method)
        if edge is None:
            status = "blocked"
            break
        position, record, knowledge, belief = attempt(edge, position, world, knowledge, belief, len(trajectory))
        trajectory.append(record)
    return NavigationResult(
        status=status,
        position=position,
        trajectory=trajectory,
        knowledge=knowledge,
        belief=belief,
        new_edges=knowledge.known_count - known_before,
    )


def estimate_method_cost(
    method: NavigationMethod,
    belief: BeliefState,
    task: TaskSpec,
    rollouts: int,
    rng: Seed = None,
    knowledge: Optional[EdgeKnowledge] = None,
) -> Tuple[float, float]:
    """Monte Carlo (mean, std) of traversal attempts over worlds drawn from Bel(H)."""
    if rollouts < 1:
        raise ValueError("rollouts must be at least 1")
    rng = as_rng(rng)
    knowledge = knowledge or EdgeKnowledge(grid=belief.grid)
    costs = []
    for _ in range(rollouts):
        world = posterior_sample(belief, rng)
        result = navigate(method, task.origin, task.destination, world, knowledge,
                          belief=None, rng=rng, hypotheses=belief.hypotheses)
        costs.append(result.cost)
    values = np.array(costs, dtype=float)
    return float(values.mean()), float(values.std())
