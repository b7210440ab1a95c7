import numpy as np
import pytest

from src.core.world_model import (
    density, enumerate_consistent, enumerate_maps, enumeration_size, intersect, layout_from_edges,
    map_from_document, map_to_document, pinned_edges, sample_map, shortest_path, shortest_route,
    validate_map,
)
from src.models.models import (
    CorridorLayout, Direction, Edge, GridSpec, JunctionClass, JunctionType, MapDocument, MapHypothesis,
    edge_at, edge_between, valid_junction_bits,
)
from src.utils.errors import BudgetExceeded, NoConsistentMap

GRID_2X2 = GridSpec(nx=2, ny=2)


def make_map(grid, edges):
    return MapHypothesis(grid=grid, mask=layout_from_edges(grid, edges).mask)


@pytest.mark.parametrize("nx,ny,count", [(1, 1, 1), (1, 2, 2), (2, 1, 2), (2, 2, 14)])
def test_enumerate_maps_counts(nx, ny, count):
    assert len(enumerate_maps(GridSpec(nx=nx, ny=ny))) == count


def test_enumerated_maps_pass_validation():
    maps = enumerate_maps(GRID_2X2)
    assert all(validate_map(m) for m in maps)
    assert [m.mask for m in maps] == sorted(m.mask for m in maps)


def test_opposite_edges_are_not_a_map():
    bottom, top = Edge(0, 0, Direction.E), Edge(0, 1, Direction.E)
    with pytest.raises(ValueError):
        make_map(GRID_2X2, [bottom, top])
    assert not validate_map(layout_from_edges(GRID_2X2, [bottom, top]))


def test_enumeration_budget():
    with pytest.raises(BudgetExceeded):
        enumerate_maps(GridSpec(nx=3, ny=3), budget=100)


def test_canonical_edges():
    assert edge_at((1, 1), Direction.W) == Edge(0, 1, Direction.E)
    assert edge_at((1, 1), Direction.S) == Edge(1, 0, Direction.N)
    assert edge_between((0, 1), (0, 0)) == Edge(0, 0, Direction.N)
    with pytest.raises(ValueError):
        edge_between((0, 0), (1, 1))
    assert GRID_2X2.edges() == (
        Edge(0, 0, Direction.E), Edge(0, 0, Direction.N), Edge(1, 0, Direction.N), Edge(0, 1, Direction.E),
    )


def test_junction_classes():
    assert JunctionType.from_bits(0).class_label == JunctionClass.NONE
    assert JunctionType.from_bits(1).class_label == JunctionClass.DEAD_END
    assert JunctionType.from_bits(1 | 4).class_label == JunctionClass.STRAIGHT
    assert JunctionType.from_bits(1 | 2).class_label == JunctionClass.L
    assert JunctionType.from_bits(7).class_label == JunctionClass.T
    assert JunctionType.from_bits(15).class_label == JunctionClass.CROSS


def test_valid_junction_bits_respect_the_border():
    assert valid_junction_bits(GRID_2X2, (0, 0)) == (0, 1, 2, 3)
    assert len(valid_junction_bits(GridSpec(nx=3, ny=3), (1, 1))) == 16


def test_pins_restrict_enumeration():
    # (0,0) is an L opening north and east
    maps = enumerate_consistent(GRID_2X2, {(0, 0): 3})
    assert maps
    assert all(m.direction_bits((0, 0)) == 3 for m in maps)
    assert enumeration_size(GRID_2X2, {(0, 0): 3}) == 4


def test_conflicting_pins():
    # (0,0) says the east corridor exists, (1,0) says it does not
    with pytest.raises(NoConsistentMap):
        pinned_edges(GRID_2X2, {(0, 0): 2, (1, 0): 0})


def test_sample_map_is_deterministic_and_valid():
    grid = GridSpec(nx=3, ny=3)
    a = sample_map(grid, 7)
    b = sample_map(grid, 7)
    assert a == b
    assert validate_map(a)


@pytest.mark.slow
def test_sampled_density_prefers_medium():
    grid = GridSpec(nx=3, ny=3)
    rng = np.random.default_rng(0)
    densities = [density(sample_map(grid, rng)) for _ in range(10000)]
    assert 0.4 <= float(np.mean(densities)) <= 0.6


def test_uniform_sampling_matches_enumeration_frequency():
    rng = np.random.default_rng(3)
    maps = enumerate_maps(GRID_2X2)
    samples = [sample_map(GRID_2X2, rng, density_pref=False) for _ in range(4000)]
    for e in GRID_2X2.edges():
        expected = sum(m.has_edge(e) for m in maps) / len(maps)
        observed = sum(m.has_edge(e) for m in samples) / len(samples)
        assert observed == pytest.approx(expected, abs=0.04)


def test_shortest_path_examples():
    single = make_map(GridSpec(nx=2, ny=1), [Edge(0, 0, Direction.E)])
    assert shortest_path(single, (0, 0), (0, 0)) == 0
    assert shortest_path(single, (0, 0), (1, 0)) == 1

    three = make_map(GRID_2X2, [Edge(0, 0, Direction.E), Edge(1, 0, Direction.N), Edge(0, 1, Direction.E)])
    assert shortest_path(three, (0, 0), (0, 1)) == 3
    assert shortest_route(three, (0, 0), (0, 1)) == [(0, 0), (1, 0), (1, 1), (0, 1)]


def test_shortest_path_unreachable_is_none():
    layout = CorridorLayout(grid=GRID_2X2)
    assert shortest_path(layout, (0, 0), (1, 1)) is None
    assert shortest_route(layout, (0, 0), (1, 1)) is None


def test_shortest_route_prefers_lexicographically_small_stops():
    full = make_map(GRID_2X2, GRID_2X2.edges())
    # both routes have length 2; (1, 0) sorts before (0, 1) by (y, x)
    assert shortest_route(full, (0, 0), (1, 1)) == [(0, 0), (1, 0), (1, 1)]


def test_intersect():
    full = make_map(GRID_2X2, GRID_2X2.edges())
    one = layout_from_edges(GRID_2X2, [Edge(0, 0, Direction.N)])
    assert intersect(full, one).sorted_edges() == [Edge(0, 0, Direction.N)]


def test_map_document_round_trip():
    m = sample_map(GridSpec(nx=3, ny=2), 11)
    assert map_from_document(map_to_document(m)) == m


def test_map_document_outside_grid():
    doc = MapDocument(nx=2, ny=2, edges=[(1, 0, Direction.E)])
    with pytest.raises(ValueError):
        map_from_document(doc)
