# src/models/models.py
from __future__ import annotations
from enum import Enum
from functools import lru_cache
from typing import Annotated, Dict, FrozenSet, List, Literal, NamedTuple, Optional, Tuple, Union

import networkx as nx
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.utils.config import get_settings

Intersection = Tuple[int, int]
Wedge = Annotated[int, Field(ge=0, le=7)]
StructureMode = Literal["singly", "multiply"]
ReadingSource = Literal["detector", "traversal"]

# ---------- Grid geometry ----------

class Direction(str, Enum):
    N = "N"
    E = "E"
    S = "S"
    W = "W"

DIRECTION_ORDER: Tuple[Direction, ...] = (Direction.N, Direction.E, Direction.S, Direction.W)
DIRECTION_BIT: Dict[Direction, int] = {Direction.N: 1, Direction.E: 2, Direction.S: 4, Direction.W: 8}
DELTA: Dict[Direction, Tuple[int, int]] = {
    Direction.N: (0, 1),
    Direction.E: (1, 0),
    Direction.S: (0, -1),
    Direction.W: (-1, 0),
}
OPPOSITE: Dict[Direction, Direction] = {
    Direction.N: Direction.S,
    Direction.S: Direction.N,
    Direction.E: Direction.W,
    Direction.W: Direction.E,
}


class Edge(NamedTuple):
    """Corridor slot between (x, y) and its E or N neighbour (canonical form)."""
    x: int
    y: int
    direction: Direction

    def endpoints(self) -> Tuple[Intersection, Intersection]:
        dx, dy = DELTA[self.direction]
        return (self.x, self.y), (self.x + dx, self.y + dy)

    def sort_key(self) -> Tuple[int, int, str]:
        return (self.y, self.x, self.direction.value)


def edge_at(point: Intersection, direction: Direction) -> Edge:
    """Canonical edge leaving `point` toward `direction`."""
    x, y = point
    if direction in (Direction.E, Direction.N):
        return Edge(x, y, direction)
    dx, dy = DELTA[direction]
    return Edge(x + dx, y + dy, OPPOSITE[direction])


def edge_between(a: Intersection, b: Intersection) -> Edge:
    dx, dy = b[0] - a[0], b[1] - a[1]
    for d, delta in DELTA.items():
        if delta == (dx, dy):
            return edge_at(a, d)
    raise ValueError(f"{a} and {b} are not grid neighbours")


def direction_between(a: Intersection, b: Intersection) -> Direction:
    dx, dy = b[0] - a[0], b[1] - a[1]
    for d, delta in DELTA.items():
        if delta == (dx, dy):
            return d
    raise ValueError(f"{a} and {b} are not grid neighbours")


class GridSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    nx: int = Field(ge=1)   # vertical grid lines
    ny: int = Field(ge=1)   # horizontal grid lines

    def contains(self, point: Intersection) -> bool:
        x, y = point
        return 0 <= x < self.nx and 0 <= y < self.ny

    def intersections(self) -> Tuple[Intersection, ...]:
        return _intersections(self.nx, self.ny)

    def edges(self) -> Tuple[Edge, ...]:
        return _edges(self.nx, self.ny)

    def edge_bit(self, edge: Edge) -> int:
        return _edge_bits(self.nx, self.ny)[edge]

    @property
    def edge_count(self) -> int:
        return self.nx * (self.ny - 1) + self.ny * (self.nx - 1)

    def neighbor(self, point: Intersection, direction: Direction) -> Optional[Intersection]:
        dx, dy = DELTA[direction]
        n = (point[0] + dx, point[1] + dy)
        return n if self.contains(n) else None

    def allowed_bits(self, point: Intersection) -> int:
        """Direction bits that stay inside the grid at `point`."""
        return _allowed_bits(self.nx, self.ny, point)

    def incident_edges(self, point: Intersection) -> Tuple[Tuple[Direction, Edge], ...]:
        return _incident(self.nx, self.ny, point)


@lru_cache(maxsize=None)
def _intersections(nx: int, ny: int) -> Tuple[Intersection, ...]:
    return tuple((x, y) for y in range(ny) for x in range(nx))


@lru_cache(maxsize=None)
def _edges(nx: int, ny: int) -> Tuple[Edge, ...]:
    out = []
    for y in range(ny):
        for x in range(nx):
            if x + 1 < nx:
                out.append(Edge(x, y, Direction.E))
            if y + 1 < ny:
                out.append(Edge(x, y, Direction.N))
    return tuple(sorted(out, key=Edge.sort_key))


@lru_cache(maxsize=None)
def _edge_bits(nx: int, ny: int) -> Dict[Edge, int]:
    return {e: i for i, e in enumerate(_edges(nx, ny))}


@lru_cache(maxsize=None)
def _allowed_bits(nx: int, ny: int, point: Intersection) -> int:
    bits = 0
    x, y = point
    for d in DIRECTION_ORDER:
        dx, dy = DELTA[d]
        if 0 <= x + dx < nx and 0 <= y + dy < ny:
            bits |= DIRECTION_BIT[d]
    return bits


@lru_cache(maxsize=None)
def _incident(nx: int, ny: int, point: Intersection) -> Tuple[Tuple[Direction, Edge], ...]:
    out = []
    x, y = point
    for d in DIRECTION_ORDER:
        dx, dy = DELTA[d]
        if 0 <= x + dx < nx and 0 <= y + dy < ny:
            out.append((d, edge_at(point, d)))
    return tuple(out)

# ---------- Junctions ----------

class JunctionClass(str, Enum):
    NONE = "none"
    DEAD_END = "dead_end"
    STRAIGHT = "straight"
    L = "L"
    T = "T"
    CROSS = "cross"


class JunctionType(BaseModel):
    model_config = ConfigDict(frozen=True)

    directions: FrozenSet[Direction] = frozenset()

    @property
    def bits(self) -> int:
        return sum(DIRECTION_BIT[d] for d in self.directions)

    @property
    def class_label(self) -> JunctionClass:
        n = len(self.directions)
        if n == 0:
            return JunctionClass.NONE
        if n == 1:
            return JunctionClass.DEAD_END
        if n == 2:
            a, b = sorted(self.directions, key=DIRECTION_ORDER.index)
            return JunctionClass.STRAIGHT if OPPOSITE[a] == b else JunctionClass.L
        if n == 3:
            return JunctionClass.T
        return JunctionClass.CROSS

    @classmethod
    def from_bits(cls, bits: int) -> "JunctionType":
        return _junction_from_bits(bits)


@lru_cache(maxsize=16)
def _junction_from_bits(bits: int) -> JunctionType:
    return JunctionType(directions=frozenset(d for d in DIRECTION_ORDER if bits & DIRECTION_BIT[d]))


def valid_junction_bits(grid: GridSpec, point: Intersection) -> Tuple[int, ...]:
    """Junction types (as direction bits) admissible at `point`, ascending."""
    allowed = grid.allowed_bits(point)
    return tuple(b for b in range(16) if b & ~allowed == 0)

# ---------- Maps ----------

def _ldp_connected(grid: GridSpec, mask: int) -> bool:
    graph = nx.Graph()
    graph.add_edges_from(e.endpoints() for i, e in enumerate(grid.edges()) if mask >> i & 1)
    return graph.number_of_nodes() == 0 or nx.is_connected(graph)


class CorridorLayout(BaseModel):
    """A set of corridor edges on a grid; no connectivity requirement."""
    model_config = ConfigDict(frozen=True)

    grid: GridSpec
    mask: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _mask_in_range(self):
        if self.mask >> self.grid.edge_count:
            raise ValueError("edge mask has bits outside the grid")
        return self

    def has_edge(self, edge: Edge) -> bool:
        return bool(self.mask >> self.grid.edge_bit(edge) & 1)

    def edges(self) -> FrozenSet[Edge]:
        return frozenset(e for i, e in enumerate(self.grid.edges()) if self.mask >> i & 1)

    def sorted_edges(self) -> List[Edge]:
        return [e for i, e in enumerate(self.grid.edges()) if self.mask >> i & 1]

    def edge_total(self) -> int:
        return bin(self.mask).count("1")

    def direction_bits(self, point: Intersection) -> int:
        bits = 0
        for d, e in self.grid.incident_edges(point):
            if self.mask >> self.grid.edge_bit(e) & 1:
                bits |= DIRECTION_BIT[d]
        return bits

    def junction_at(self, point: Intersection) -> JunctionType:
        return JunctionType.from_bits(self.direction_bits(point))

    def is_ldp(self, point: Intersection) -> bool:
        return self.direction_bits(point) != 0

    def ldps(self) -> List[Intersection]:
        return [p for p in self.grid.intersections() if self.is_ldp(p)]

    def is_connected(self) -> bool:
        return _ldp_connected(self.grid, self.mask)


class MapHypothesis(CorridorLayout):
    """Edge-consistent (by construction) and LDP-connected corridor map."""

    @model_validator(mode="after")
    def _ldps_connected(self):
        if not _ldp_connected(self.grid, self.mask):
            raise ValueError("locally distinctive places are not connected")
        return self


class MapDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    nx: int = Field(ge=1)
    ny: int = Field(ge=1)
    edges: List[Tuple[int, int, Direction]] = Field(default_factory=list)

# ---------- Sensing ----------

class Feature(str, Enum):
    OPENING = "opening"
    FLAT_WALL = "flat_wall"
    CONVEX_CORNER = "convex_corner"
    CONCAVE_CORNER = "concave_corner"

FEATURE_ORDER: Tuple[Feature, ...] = (
    Feature.OPENING, Feature.FLAT_WALL, Feature.CONVEX_CORNER, Feature.CONCAVE_CORNER,
)
# counterclockwise from north; odd wedges are the diagonals
CARDINAL_WEDGE: Dict[Direction, int] = {Direction.N: 0, Direction.W: 2, Direction.S: 4, Direction.E: 6}
WEDGE_DIRECTION: Dict[int, Direction] = {w: d for d, w in CARDINAL_WEDGE.items()}


class Detector(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    feature: Feature
    wedge: Wedge

    def sort_key(self) -> Tuple[int, int]:
        return (FEATURE_ORDER.index(self.feature), self.wedge)


ALL_DETECTORS: Tuple[Detector, ...] = tuple(
    Detector(feature=f, wedge=w) for f in FEATURE_ORDER for w in range(8)
)


def _default_fn() -> float:
    return get_settings().false_negative

def _default_fp() -> float:
    return get_settings().false_positive


class NoiseModel(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    false_negative: float = Field(default_factory=_default_fn, ge=0.0, le=1.0)
    false_positive: float = Field(default_factory=_default_fp, ge=0.0, le=1.0)

    @property
    def noiseless(self) -> bool:
        return self.false_negative == 0.0 and self.false_positive == 0.0


PERFECT_CHANNEL = NoiseModel(false_negative=0.0, false_positive=0.0)


class SensorReading(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    location: Intersection
    detector: Detector
    result: bool
    timestamp: int = Field(0, ge=0)
    source: ReadingSource = "detector"   # traversal readings use a perfect channel


class EvidenceDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    readings: List[SensorReading] = Field(default_factory=list)

# ---------- Belief ----------

class HypothesisSet(BaseModel):
    model_config = ConfigDict(frozen=True)

    maps: Tuple[MapHypothesis, ...]
    exhaustive: bool = False

    @model_validator(mode="after")
    def _distinct(self):
        if len({m.mask for m in self.maps}) != len(self.maps):
            raise ValueError("hypothesis maps must be pairwise distinct")
        if len({m.grid for m in self.maps}) > 1:
            raise ValueError("hypothesis maps must share one grid")
        return self

    def __len__(self) -> int:
        return len(self.maps)


class BeliefState(BaseModel):
    """Bel(H) over K maps plus NOTA (last entry)."""
    model_config = ConfigDict(frozen=True)

    grid: GridSpec
    hypotheses: HypothesisSet
    probs: Tuple[float, ...]
    evidence: Tuple[SensorReading, ...] = ()
    noise: NoiseModel = Field(default_factory=NoiseModel)
    structure: StructureMode = "singly"
    capacity: Optional[int] = Field(None, ge=1)      # requested K for regeneration
    nota_log_likelihood: float = 0.0                 # log Pr(evidence | NOTA)

    @model_validator(mode="after")
    def _normalized(self):
        if len(self.probs) != len(self.hypotheses.maps) + 1:
            raise ValueError("probs must hold one entry per map plus NOTA")
        if any(p < 0 for p in self.probs):
            raise ValueError("probabilities must be nonnegative")
        if abs(sum(self.probs) - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {sum(self.probs)}")
        return self

    @property
    def k(self) -> int:
        return len(self.hypotheses.maps)

    @property
    def nota(self) -> float:
        return self.probs[-1]

    @property
    def target_k(self) -> int:
        return self.capacity if self.capacity is not None else self.k

# ---------- Tasks & decisions ----------

class TaskSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    id: str
    origin: Intersection
    destination: Intersection
    expected_count: float = Field(1.0, ge=0.0)


class PathChoice(str, Enum):
    KNOWN = "P_K"
    UNKNOWN = "P_U"


class NavigationMethod(str, Enum):
    WEIGHTED_PATH = "weighted_path"
    SHORTEST_IGNORING_UNKNOWN = "shortest_ignoring_unknown"
    AVOID_KNOWN = "avoid_known"
    RANDOM_WALK = "random_walk"


class EdgeStatus(str, Enum):
    PRESENT = "known_present"
    ABSENT = "known_absent"
    UNKNOWN = "unknown"

# ---------- Scenario ----------

class HierarchyConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    enabled: bool = False
    threshold: float = Field(default_factory=lambda: get_settings().descend_threshold, ge=0)


class TimeScale(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    minutes_per_traversal: float = Field(default_factory=lambda: get_settings().minutes_per_traversal, ge=0)
    minutes_per_sensing: float = Field(default_factory=lambda: get_settings().minutes_per_sensing, ge=0)


class Scenario(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str = "scenario"
    grid: GridSpec
    seed: int = 0
    hypotheses: int = Field(10, ge=1)          # K
    noise: NoiseModel = Field(default_factory=NoiseModel)
    tasks: List[TaskSpec] = Field(default_factory=list)
    task_draws: Optional[int] = Field(None, ge=0)   # defaults to len(tasks)
    structure: StructureMode = "singly"
    hierarchy: HierarchyConfig = Field(default_factory=HierarchyConfig)
    method: NavigationMethod = NavigationMethod.WEIGHTED_PATH
    proposal_detectors: int = Field(2, ge=1, le=4)
    time: TimeScale = Field(default_factory=TimeScale)
    start: Optional[Intersection] = None
    world: Optional[MapDocument] = None

    @model_validator(mode="after")
    def _inside_grid(self):
        points = [p for t in self.tasks for p in (t.origin, t.destination)]
        if self.start is not None:
            points.append(self.start)
        for p in points:
            if not self.grid.contains(p):
                raise ValueError(f"intersection {p} lies outside the {self.grid.nx}x{self.grid.ny} grid")
        if len({t.id for t in self.tasks}) != len(self.tasks):
            raise ValueError("task ids must be unique")
        if self.world is not None and (self.world.nx, self.world.ny) != (self.grid.nx, self.grid.ny):
            raise ValueError("embedded world does not match the scenario grid")
        return self

    @property
    def draws(self) -> int:
        return len(self.tasks) if self.task_draws is None else self.task_draws

# ---------- Episode log ----------

class ReadingRecord(BaseModel):
    kind: Literal["reading"] = "reading"
    step: int
    x: int
    y: int
    feature: Feature
    wedge: int
    result: bool
    source: ReadingSource = "detector"


class BeliefRecord(BaseModel):
    kind: Literal["belief"] = "belief"
    step: int
    entries: List[Tuple[str, float]]    # (map-id, probability), NOTA last


class DecisionRecord(BaseModel):
    kind: Literal["decision"] = "decision"
    step: int
    ev_pk: float
    ev_pu: float
    choice: PathChoice
    frontier: Optional[Intersection] = None


class AttemptRecord(BaseModel):
    kind: Literal["attempt"] = "attempt"
    step: int
    origin: Intersection
    target: Intersection
    success: bool


class RegenerationRecord(BaseModel):
    kind: Literal["regeneration"] = "regeneration"
    step: int
    hypothesis_count: int
    exhaustive: bool
    pinned: int


class HierarchyRecord(BaseModel):
    kind: Literal["hierarchy"] = "hierarchy"
    step: int
    active_level: int
    consistent_estimate: float
    descended: bool
    abstract_cost: Optional[float] = None


class TaskRecord(BaseModel):
    kind: Literal["task"] = "task"
    step: int
    task_id: str
    origin: Intersection
    destination: Intersection
    status: Literal["started", "completed", "blocked", "step_bound_exceeded"]


LogRecord = Annotated[
    Union[ReadingRecord, BeliefRecord, DecisionRecord, AttemptRecord,
          RegenerationRecord, HierarchyRecord, TaskRecord],
    Field(discriminator="kind"),
]


class EpisodeMetrics(BaseModel):
    total_traversal_cost: int = 0
    tasks_drawn: int = 0
    tasks_completed: int = 0
    readings: int = 0
    regenerations: int = 0
    posterior_true_mass: float = 0.0
    simulated_minutes: float = 0.0


class EpisodeLog(BaseModel):
    scenario: str
    seed: int
    world: MapDocument
    records: List[LogRecord] = Field(default_factory=list)
    metrics: EpisodeMetrics = Field(default_factory=EpisodeMetrics)

# ---------- Experiments ----------

class BenchmarkRow(BaseModel):
    hypothesis_size: int
    exploration_length: int
    update_time_ms: Optional[float] = None
    largest_clique_cost: float


class MethodSummary(BaseModel):
    method: NavigationMethod
    trials: int
    mean_cost: float
    std_cost: float
    estimated_cost: float
    estimated_std: float
    success_rate: float
    mean_new_edges: float


class PosteriorDocument(BaseModel):
    structure: StructureMode
    entries: List[Tuple[str, float]]
    maps: Dict[str, MapDocument] = Field(default_factory=dict)
