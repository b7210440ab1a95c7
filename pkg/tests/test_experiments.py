import pytest

from src.models.models import GridSpec, NavigationMethod, NoiseModel, Scenario, TaskSpec
from src.orchestrator.experiments import clique_cost_sweep, compare_methods
from src.utils.errors import ConfigError

GRID_3X3 = GridSpec(nx=3, ny=3)


def small_benchmark(**kwargs):
    params = dict(grid=GRID_3X3, hypothesis_sizes=(2, 4), exploration_lengths=(3, 9), runs=2, seed=1)
    params.update(kwargs)
    return clique_cost_sweep(**params)


def test_benchmark_rows_cover_every_cell():
    rows = small_benchmark()
    assert [(r.hypothesis_size, r.exploration_length) for r in rows] == [(2, 3), (2, 9), (4, 3), (4, 9)]
    assert all(r.update_time_ms is None for r in rows)


def test_fully_explored_grid_leaves_only_the_hypothesis_node():
    rows = {(r.hypothesis_size, r.exploration_length): r.largest_clique_cost for r in small_benchmark()}
    assert rows[(2, 9)] == 3.0
    assert rows[(4, 9)] == 5.0
    assert rows[(2, 3)] > rows[(2, 9)]


def test_benchmark_is_reproducible():
    assert small_benchmark() == small_benchmark()


def test_benchmark_timing_is_optional():
    rows = small_benchmark(runs=1, measure_time=True)
    assert all(r.update_time_ms is not None and r.update_time_ms >= 0.0 for r in rows)


def test_benchmark_rejects_long_explorations():
    with pytest.raises(ConfigError):
        small_benchmark(exploration_lengths=(10,))


@pytest.mark.slow
def test_clique_cost_falls_as_exploration_grows():
    rows = clique_cost_sweep()
    cost = {(r.hypothesis_size, r.exploration_length): r.largest_clique_cost for r in rows}
    for k in (10, 20, 30):
        assert cost[(k, 10)] < cost[(k, 4)]
    lengths = sorted({r.exploration_length for r in rows})
    for n in lengths:
        assert cost[(10, n)] < cost[(20, n)] < cost[(30, n)]
    assert cost[(10, 4)] == pytest.approx(23654.4)
    assert cost[(20, 4)] == pytest.approx(45158.4)
    assert cost[(30, 4)] == pytest.approx(66662.4)


def compare_scenario(**overrides):
    data = dict(
        grid=GRID_3X3,
        seed=5,
        hypotheses=4,
        noise=NoiseModel(false_negative=0.1, false_positive=0.05),
        tasks=[TaskSpec(id="a", origin=(0, 0), destination=(2, 2))],
    )
    data.update(overrides)
    return Scenario(**data)


def test_compare_single_method():
    rows = compare_methods(compare_scenario(), [NavigationMethod.WEIGHTED_PATH], trials=1, rollouts=2)
    assert len(rows) == 1
    row = rows[0]
    assert row.method == NavigationMethod.WEIGHTED_PATH
    assert row.trials == 1
    assert row.std_cost == 0.0
    assert 0.0 <= row.success_rate <= 1.0
    assert row.mean_cost >= 0.0


def test_compare_methods_share_worlds():
    methods = [NavigationMethod.WEIGHTED_PATH, NavigationMethod.SHORTEST_IGNORING_UNKNOWN]
    first = compare_methods(compare_scenario(), methods, trials=2, rollouts=2)
    second = compare_methods(compare_scenario(), methods, trials=2, rollouts=2)
    assert first == second
    assert [r.method for r in first] == methods


def test_compare_needs_trials_and_tasks():
    with pytest.raises(ConfigError):
        compare_methods(compare_scenario(), [NavigationMethod.RANDOM_WALK], trials=0)
    with pytest.raises(ConfigError):
        compare_methods(compare_scenario(tasks=[]), [NavigationMethod.RANDOM_WALK], trials=1)


def test_later_tasks_reuse_what_earlier_tasks_learned():
    route = dict(origin=(0, 0), destination=(2, 2))
    methods = [NavigationMethod.WEIGHTED_PATH]
    one = compare_methods(compare_scenario(tasks=[TaskSpec(id="a", **route)]), methods, trials=1, rollouts=1)[0]
    two = compare_methods(
        compare_scenario(tasks=[TaskSpec(id="a", **route), TaskSpec(id="b", **route)]), methods, trials=1, rollouts=1,
    )[0]
    assert one.success_rate == two.success_rate == 1.0
    assert one.mean_new_edges > 0
    # the repeat trip runs on corridors the first one already learned
    assert two.mean_new_edges < one.mean_new_edges
    assert two.mean_cost <= one.mean_cost


@pytest.mark.slow
def test_method_trends_on_round_trips():
    tasks = [
        TaskSpec(id="out", origin=(0, 0), destination=(2, 2)),
        TaskSpec(id="back", origin=(2, 2), destination=(0, 0)),
        TaskSpec(id="across", origin=(0, 2), destination=(2, 0)),
        TaskSpec(id="return", origin=(2, 0), destination=(0, 2)),
    ]
    rows = compare_methods(compare_scenario(tasks=tasks), list(NavigationMethod), trials=20, rollouts=5)
    by_method = {r.method: r for r in rows}
    weighted = by_method[NavigationMethod.WEIGHTED_PATH]
    avoid = by_method[NavigationMethod.AVOID_KNOWN]
    walk = by_method[NavigationMethod.RANDOM_WALK]
    assert avoid.mean_new_edges >= weighted.mean_new_edges
    assert weighted.estimated_cost <= walk.estimated_cost
    assert weighted.mean_cost <= walk.mean_cost
