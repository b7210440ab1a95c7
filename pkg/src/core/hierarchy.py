# src/core/hierarchy.py
from __future__ import annotations
import math
from typing import Callable, Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.core.belief import evidence_constraints
from src.core.world_model import (
    Seed, as_rng, enumerate_consistent, pinned_edges, pins_of, sample_map, shortest_path,
)
from src.models.models import (
    BeliefState, CorridorLayout, Direction, Edge, EdgeStatus, GridSpec, Intersection, TaskSpec,
)
from src.utils.config import get_settings
from src.utils.custom_logging import get_logger
from src.utils.errors import BudgetExceeded, NotAdjacent, Unreachable

logger = get_logger(__name__)

Region = Tuple[int, int]
RegionPair = Tuple[Region, Region]


class AbstractionLevel(BaseModel):
    """Block partition of the base grid into square regions of side 2^index."""
    model_config = ConfigDict(frozen=True)

    index: int = Field(ge=0)
    grid: GridSpec

    @property
    def side(self) -> int:
        return 1 << self.index

    @property
    def shape(self) -> Tuple[int, int]:
        return (-(-self.grid.nx // self.side), -(-self.grid.ny // self.side))

    def region_of(self, point: Intersection) -> Region:
        return (point[0] // self.side, point[1] // self.side)

    def regions(self) -> List[Region]:
        rx, ry = self.shape
        return [(x, y) for y in range(ry) for x in range(rx)]

    def members(self, region: Region) -> List[Intersection]:
        x0, y0 = region[0] * self.side, region[1] * self.side
        return [
            (x, y)
            for y in range(y0, min(y0 + self.side, self.grid.ny))
            for x in range(x0, min(x0 + self.side, self.grid.nx))
        ]

    def extent(self, region: Region) -> int:
        """Side length of the (possibly clipped) block."""
        w = min(self.side, self.grid.nx - region[0] * self.side)
        h = min(self.side, self.grid.ny - region[1] * self.side)
        return max(w, h)

    def adjacent(self, a: Region, b: Region) -> bool:
        return abs(a[0] - b[0]) + abs(a[1] - b[1]) == 1

    def region_pairs(self) -> List[RegionPair]:
        """Adjacent region pairs, lower region first, sorted by (y, x)."""
        rx, ry = self.shape
        out = []
        for y in range(ry):
            for x in range(rx):
                if x + 1 < rx:
                    out.append(((x, y), (x + 1, y)))
                if y + 1 < ry:
                    out.append(((x, y), (x, y + 1)))
        return out

    def boundary_edges(self, a: Region, b: Region) -> List[Edge]:
        """Base corridor slots crossing the shared boundary of two adjacent regions."""
        if not self.adjacent(a, b):
            raise NotAdjacent(f"regions {a} and {b} are not adjacent at level {self.index}")
        a, b = sorted((a, b), key=lambda r: (r[1], r[0]))
        if b[0] == a[0] + 1:
            x = b[0] * self.side - 1
            ys = range(a[1] * self.side, min((a[1] + 1) * self.side, self.grid.ny))
            return [Edge(x, y, Direction.E) for y in ys]
        y = b[1] * self.side - 1
        xs = range(a[0] * self.side, min((a[0] + 1) * self.side, self.grid.nx))
        return [Edge(x, y, Direction.N) for x in xs]


class AbstractMap(BaseModel):
    model_config = ConfigDict(frozen=True)

    level: AbstractionLevel
    edges: FrozenSet[RegionPair]
    ldp_counts: Dict[Region, int]
    internally_connected: Dict[Region, bool]

    def has_edge(self, a: Region, b: Region) -> bool:
        return _pair(a, b) in self.edges


def _pair(a: Region, b: Region) -> RegionPair:
    return tuple(sorted((a, b), key=lambda r: (r[1], r[0])))


def build_hierarchy(grid: GridSpec) -> List[AbstractionLevel]:
    """Levels from the base grid up to a single region."""
    depth = math.ceil(math.log2(max(grid.nx, grid.ny))) + 1 if max(grid.nx, grid.ny) > 1 else 1
    return [AbstractionLevel(index=i, grid=grid) for i in range(depth)]

# ---------- Abstract maps ----------

def abstract_edge_exists(level: AbstractionLevel, a: Region, b: Region, base_map: CorridorLayout) -> bool:
    return any(base_map.has_edge(e) for e in level.boundary_edges(a, b))


def abstract_edge_set(level: AbstractionLevel, base_map: CorridorLayout) -> FrozenSet[RegionPair]:
    return frozenset(p for p in level.region_pairs() if abstract_edge_exists(level, *p, base_map))


def abstract_map(level: AbstractionLevel, base_map: CorridorLayout) -> AbstractMap:
    counts = {}
    connected = {}
    graph = nx.Graph()
    for e in base_map.sorted_edges():
        a, b = e.endpoints()
        if level.region_of(a) == level.region_of(b):
            graph.add_edge(a, b)
    for r in level.regions():
        ldps = [p for p in level.members(r) if base_map.is_ldp(p)]
        counts[r] = len(ldps)
        sub = graph.subgraph(ldps)
        connected[r] = len(ldps) <= 1 or (sub.number_of_nodes() == len(ldps) and nx.is_connected(sub))
    return AbstractMap(
        level=level,
        edges=abstract_edge_set(level, base_map),
        ldp_counts=counts,
        internally_connected=connected,
    )


def implied_abstract_edges(
    level: AbstractionLevel, knowledge: Mapping[Edge, EdgeStatus]
) -> Tuple[FrozenSet[RegionPair], FrozenSet[RegionPair]]:
    """(known present, known absent) abstract edges implied by base edge knowledge."""
    present, absent = set(), set()
    for pair in level.region_pairs():
        statuses = [knowledge.get(e, EdgeStatus.UNKNOWN) for e in level.boundary_edges(*pair)]
        if any(s == EdgeStatus.PRESENT for s in statuses):
            present.add(pair)
        elif all(s == EdgeStatus.ABSENT for s in statuses):
            absent.add(pair)
    return frozenset(present), frozenset(absent)


def knowledge_from_pins(grid: GridSpec, belief: BeliefState) -> Dict[Edge, EdgeStatus]:
    """Edge statuses fixed by junctions pinned under noiseless reading of the evidence."""
    constraints = {p: a for p, a in evidence_constraints(grid, belief.evidence).items() if a}
    try:
        fixed, values = pinned_edges(grid, pins_of(constraints))
    except ValueError:
        return {}
    out = {}
    for i, e in enumerate(grid.edges()):
        if fixed >> i & 1:
            out[e] = EdgeStatus.PRESENT if values >> i & 1 else EdgeStatus.ABSENT
    return out


def project_belief(level: AbstractionLevel, belief: BeliefState) -> Tuple[List[Tuple[FrozenSet[RegionPair], float]], float]:
    """Bel over abstract edge sets (maps with equal abstractions merged) plus the NOTA share."""
    merged: Dict[FrozenSet[RegionPair], float] = {}
    for m, p in zip(belief.hypotheses.maps, belief.probs):
        key = abstract_edge_set(level, m)
        merged[key] = merged.get(key, 0.0) + p
    return list(merged.items()), belief.nota

# ---------- Abstract costs ----------

RegionEstimate = Callable[[AbstractionLevel, Region], float]


def side_estimate(level: AbstractionLevel, region: Region) -> float:
    return float(level.extent(region))


def abstract_cost(
    task: TaskSpec,
    amap: AbstractMap,
    level: Optional[AbstractionLevel] = None,
    estimate: RegionEstimate = side_estimate,
) -> float:
    """Abstract edges cost 1; each region on the way costs its intra-region estimate,
    with the two endpoint regions sharing one estimate between them."""
    level = level or amap.level
    ra, rb = level.region_of(task.origin), level.region_of(task.destination)
    if ra == rb:
        return estimate(level, ra)
    g = nx.Graph()
    g.add_nodes_from(level.regions())
    for u, v in sorted(amap.edges):
        g.add_edge(u, v, weight=1.0 + (estimate(level, u) + estimate(level, v)) / 2.0)
    try:
        return float(nx.dijkstra_path_length(g, ra, rb, weight="weight"))
    except nx.NetworkXNoPath as e:
        raise Unreachable(f"no abstract route from {ra} to {rb} at level {level.index}") from e

# ---------- Level switching ----------

def consistent_count(
    hierarchy: Sequence[AbstractionLevel],
    level_index: int,
    belief: BeliefState,
    budget: Optional[int] = None,
) -> Tuple[float, bool]:
    """Estimated count of hypotheses at `level_index` consistent with the evidence.

    Exact (second item True) when the base enumeration fits the budget; otherwise
    an upper bound.
    """
    grid = belief.grid
    level = hierarchy[level_index]
    constraints = {p: a for p, a in evidence_constraints(grid, belief.evidence).items() if a}
    try:
        maps = enumerate_consistent(grid, pins_of(constraints), budget, constraints)
    except BudgetExceeded:
        maps = None
    except ValueError:
        # contradictory pins under noise: nothing narrows the count
        constraints, maps = {}, None
    if maps is not None:
        if level_index == 0:
            return float(len(maps)), True
        return float(len({abstract_edge_set(level, m) for m in maps})), True

    if level_index == 0:
        fixed, _ = pinned_edges(grid, pins_of(constraints))
        free_bound = 2.0 ** (grid.edge_count - bin(fixed).count("1"))
        product_bound = float(np.prod([
            len(constraints[p]) if p in constraints else 2 ** bin(grid.allowed_bits(p)).count("1")
            for p in grid.intersections()
        ]))
        return min(free_bound, product_bound), False
    knowledge = knowledge_from_pins(grid, belief)
    present, absent = implied_abstract_edges(level, knowledge)
    undetermined = len(level.region_pairs()) - len(present) - len(absent)
    return 2.0 ** undetermined, False


def should_descend(
    hierarchy: Sequence[AbstractionLevel],
    level_index: int,
    belief: BeliefState,
    threshold: Optional[float] = None,
    budget: Optional[int] = None,
) -> bool:
    """Descend once the next more detailed level is simple enough."""
    if level_index <= 0:
        raise ValueError("the base level has no more detailed level")
    threshold = get_settings().descend_threshold if threshold is None else threshold
    if math.isinf(threshold):
        return True
    count, _ = consistent_count(hierarchy, level_index - 1, belief, budget)
    return count <= threshold


def active_level(
    hierarchy: Sequence[AbstractionLevel],
    belief: BeliefState,
    threshold: Optional[float] = None,
    budget: Optional[int] = None,
) -> Tuple[int, float]:
    """Walk down from the coarsest level while descending is allowed.

    Returns the level and the consistent-count estimate at that level.
    """
    level = len(hierarchy) - 1
    while level > 0 and should_descend(hierarchy, level, belief, threshold, budget):
        level -= 1
    count, _ = consistent_count(hierarchy, level, belief, budget)
    return level, count


def cost_envelope(
    grid: GridSpec, level_index: int, samples: int = 100, seed: Seed = None
) -> Tuple[float, float]:
    """(min, max) of abstract cost over base shortest path for random maps and LDP pairs."""
    rng = as_rng(seed)
    level = build_hierarchy(grid)[level_index]
    ratios: List[float] = []
    for _ in range(samples):
        world = sample_map(grid, rng)
        ldps = world.ldps()
        if len(ldps) < 2:
            continue
        i, j = rng.choice(len(ldps), size=2, replace=False)
        task = TaskSpec(id="envelope", origin=ldps[int(i)], destination=ldps[int(j)])
        base = shortest_path(world, task.origin, task.destination)
        if not base:
            continue
        ratios.append(abstract_cost(task, abstract_map(level, world), level) / base)
    if not ratios:
        return (float("nan"), float("nan"))
    logger.info(f"cost envelope at level {level_index}: {min(ratios):.3f}..{max(ratios):.3f} over {len(ratios)} pairs")
    return (min(ratios), max(ratios))
