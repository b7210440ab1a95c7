# src/core/world_model.py
from __future__ import annotations
from typing import Dict, FrozenSet, Iterable, Iterator, List, Optional, Tuple, Union

import networkx as nx
import numpy as np

from src.models.models import (
    DIRECTION_BIT, OPPOSITE, CorridorLayout, Edge, GridSpec, Intersection, MapDocument,
    MapHypothesis, edge_at,
)
from src.utils.config import get_settings
from src.utils.custom_logging import get_logger
from src.utils.errors import BudgetExceeded, NoConsistentMap

logger = get_logger(__name__)

Seed = Union[int, np.random.Generator, None]
# pinned junctions: intersection -> direction bits
Pins = Dict[Intersection, int]
# admissible junction types per intersection, as direction bits
Constraints = Dict[Intersection, FrozenSet[int]]


def as_rng(seed: Seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)

# ---------- Density ----------

def density(layout: CorridorLayout) -> float:
    total = layout.grid.edge_count
    if total == 0:
        return 0.0
    return layout.edge_total() / total


def density_weight(d: float, floor: Optional[float] = None) -> float:
    """Triangular preference for medium density, peaking at 0.5."""
    floor = get_settings().density_floor if floor is None else floor
    return max(floor, 1.0 - 2.0 * abs(d - 0.5))

# ---------- Pins ----------

def pinned_edges(grid: GridSpec, pins: Pins) -> Tuple[int, int]:
    """(fixed_mask, fixed_values) implied by pinned junctions.

    Raises NoConsistentMap when two pins disagree on a shared edge.
    """
    fixed = 0
    values = 0
    for point, bits in pins.items():
        for d, e in grid.incident_edges(point):
            bit = 1 << grid.edge_bit(e)
            present = bool(bits & DIRECTION_BIT[d])
            if fixed & bit and bool(values & bit) != present:
                raise NoConsistentMap(f"pinned junctions disagree on edge {e}")
            fixed |= bit
            if present:
                values |= bit
        if bits & ~grid.allowed_bits(point):
            raise NoConsistentMap(f"pinned junction at {point} leaves the grid")
    return fixed, values


def matches_pins(layout: CorridorLayout, pins: Pins) -> bool:
    return all(layout.direction_bits(p) == bits for p, bits in pins.items())


def pins_of(constraints: Constraints) -> Pins:
    return {p: next(iter(allowed)) for p, allowed in constraints.items() if len(allowed) == 1}


def satisfies(layout: CorridorLayout, constraints: Optional[Constraints]) -> bool:
    if not constraints:
        return True
    return all(layout.direction_bits(p) in allowed for p, allowed in constraints.items())

# ---------- Enumeration ----------

def _free_masks(grid: GridSpec, fixed: int, values: int) -> Iterator[int]:
    free_bits = [i for i in range(grid.edge_count) if not fixed >> i & 1]
    for combo in range(1 << len(free_bits)):
        mask = values
        for j, bit in enumerate(free_bits):
            if combo >> j & 1:
                mask |= 1 << bit
        yield mask


def enumeration_size(grid: GridSpec, pins: Optional[Pins] = None) -> int:
    if not pins:
        return 1 << grid.edge_count
    fixed, _ = pinned_edges(grid, pins)
    return 1 << (grid.edge_count - bin(fixed).count("1"))


def enumerate_maps(grid: GridSpec, budget: Optional[int] = None) -> List[MapHypothesis]:
    """Every edge-consistent, LDP-connected map of the grid, by ascending edge bitmask."""
    return enumerate_consistent(grid, {}, budget)


def enumerate_consistent(
    grid: GridSpec,
    pins: Pins,
    budget: Optional[int] = None,
    constraints: Optional[Constraints] = None,
) -> List[MapHypothesis]:
    """Connected maps honoring `pins` (and any wider `constraints`), by ascending bitmask."""
    budget = get_settings().enumeration_budget if budget is None else budget
    fixed, values = pinned_edges(grid, pins)
    size = 1 << (grid.edge_count - bin(fixed).count("1"))
    if size > budget:
        raise BudgetExceeded(f"{size} edge subsets exceed the enumeration budget {budget}")
    maps = []
    for mask in sorted(_free_masks(grid, fixed, values)):
        layout = CorridorLayout(grid=grid, mask=mask)
        if layout.is_connected() and satisfies(layout, constraints):
            maps.append(MapHypothesis(grid=grid, mask=mask))
    return maps

# ---------- Sampling ----------

def _propose(grid: GridSpec, rng: np.random.Generator, fixed: int, values: int) -> int:
    draws = rng.random(grid.edge_count) < 0.5
    mask = values
    for i, present in enumerate(draws):
        if present and not fixed >> i & 1:
            mask |= 1 << i
    return mask


def sample_map(
    grid: GridSpec,
    seed: Seed = None,
    density_pref: bool = True,
    pins: Optional[Pins] = None,
    max_attempts: Optional[int] = None,
    constraints: Optional[Constraints] = None,
) -> MapHypothesis:
    """Rejection-sample a connected map; acceptance is the density weight when preferred."""
    rng = as_rng(seed)
    pins = {**pins_of(constraints or {}), **(pins or {})}
    fixed, values = pinned_edges(grid, pins)
    attempts = 0
    while True:
        attempts += 1
        mask = _propose(grid, rng, fixed, values)
        layout = CorridorLayout(grid=grid, mask=mask)
        accept = density_weight(density(layout)) if density_pref else 1.0
        # one uniform draw per proposal keeps the stream layout fixed
        if rng.random() < accept and layout.is_connected() and satisfies(layout, constraints):
            return MapHypothesis(grid=grid, mask=mask)
        if max_attempts is not None and attempts >= max_attempts:
            raise NoConsistentMap(f"no connected map found in {max_attempts} attempts")

# ---------- Paths ----------

def corridor_graph(layout: CorridorLayout, extra: Iterable[Edge] = ()) -> nx.Graph:
    g = nx.Graph()
    g.add_nodes_from(layout.grid.intersections())
    for e in layout.sorted_edges():
        g.add_edge(*e.endpoints())
    for e in extra:
        g.add_edge(*e.endpoints())
    return g


def shortest_path(layout: CorridorLayout, a: Intersection, b: Intersection) -> Optional[int]:
    """Edge traversals between a and b over corridors, None when unreachable."""
    if a == b:
        return 0
    try:
        return nx.shortest_path_length(corridor_graph(layout), a, b)
    except nx.NetworkXNoPath:
        return None


def shortest_route(layout: CorridorLayout, a: Intersection, b: Intersection) -> Optional[List[Intersection]]:
    """Lexicographically smallest shortest route (by (y, x) of each stop)."""
    if a == b:
        return [a]
    g = corridor_graph(layout)
    dist = nx.single_source_shortest_path_length(g, b)
    if a not in dist:
        return None
    route = [a]
    here = a
    while here != b:
        options = [n for n in g.neighbors(here) if dist.get(n) == dist[here] - 1]
        here = min(options, key=lambda p: (p[1], p[0]))
        route.append(here)
    return route


def intersect(a: CorridorLayout, b: CorridorLayout) -> CorridorLayout:
    return CorridorLayout(grid=a.grid, mask=a.mask & b.mask)


def layout_from_edges(grid: GridSpec, edges: Iterable[Edge]) -> CorridorLayout:
    mask = 0
    for e in edges:
        mask |= 1 << grid.edge_bit(e)
    return CorridorLayout(grid=grid, mask=mask)

# ---------- Validation & serialization ----------

def validate_map(layout: CorridorLayout) -> bool:
    """Both hypothesis invariants: edge consistency and LDP connectivity."""
    grid = layout.grid
    for p in grid.intersections():
        bits = layout.direction_bits(p)
        if bits & ~grid.allowed_bits(p):
            return False
        for d, e in grid.incident_edges(p):
            q = grid.neighbor(p, d)
            if bool(bits & DIRECTION_BIT[d]) != bool(layout.direction_bits(q) & DIRECTION_BIT[OPPOSITE[d]]):
                return False
    return layout.is_connected()


def map_to_document(layout: CorridorLayout) -> MapDocument:
    return MapDocument(
        nx=layout.grid.nx,
        ny=layout.grid.ny,
        edges=[(e.x, e.y, e.direction) for e in layout.sorted_edges()],
    )


def map_from_document(doc: MapDocument) -> MapHypothesis:
    grid = GridSpec(nx=doc.nx, ny=doc.ny)
    try:
        layout = layout_from_edges(grid, (edge_at((x, y), d) for x, y, d in doc.edges))
    except KeyError as e:
        raise ValueError(f"edge {e} lies outside the {doc.nx}x{doc.ny} grid") from e
    return MapHypothesis(grid=grid, mask=layout.mask)
