import networkx as nx
import numpy as np
import pytest

from src.core.inference import (
    DiscreteNetwork, Factor, benchmark_network, brute_force_posterior, build_network, evidence_probability,
    junction_node, largest_clique_cost, map_network, marginal, moralize, network_clique_cost,
    nota_log_likelihood, posterior_over_maps, propagate, triangulate,
)
from src.core.belief import init_belief, nota_evidence_log_likelihood, update_many
from src.core.sensing import scan
from src.core.world_model import enumerate_maps, sample_map
from src.models.models import (
    ALL_DETECTORS, PERFECT_CHANNEL, BeliefState, GridSpec, HypothesisSet, NoiseModel, SensorReading,
)
from src.utils.errors import ZeroProbabilityEvidence

GRID_2X2 = GridSpec(nx=2, ny=2)
NOISY = NoiseModel(false_negative=0.1, false_positive=0.05)


def chain_network():
    net = DiscreteNetwork()
    net.add_node("A", 2, (), [0.3, 0.7])
    net.add_node("B", 2, ("A",), [[0.9, 0.1], [0.2, 0.8]])
    net.add_node("C", 2, ("B",), [[0.6, 0.4], [0.25, 0.75]])
    return net


def v_structure():
    net = DiscreteNetwork()
    net.add_node("A", 2, (), [0.5, 0.5])
    net.add_node("B", 2, (), [0.4, 0.6])
    cpt = np.array([[[0.9, 0.1], [0.5, 0.5]], [[0.3, 0.7], [0.05, 0.95]]])
    net.add_node("C", 2, ("A", "B"), cpt)
    return net


def edge_set(g):
    return {frozenset(e) for e in g.edges}


# ---------- Factors & networks ----------

def test_factor_product_and_marginal():
    a = Factor(("A",), [0.3, 0.7])
    ab = Factor(("A", "B"), [[0.9, 0.1], [0.2, 0.8]])
    joint = a.product(ab)
    assert joint.scope == ("A", "B")
    assert joint.marginalize(("B",)).table == pytest.approx([0.41, 0.59])
    assert joint.reduce({"A": 1}).table == pytest.approx([0.14, 0.56])


def test_add_node_validation():
    net = DiscreteNetwork()
    with pytest.raises(ValueError):
        net.add_node("B", 2, ("A",), [[0.5, 0.5], [0.5, 0.5]])
    net.add_node("A", 2, (), [0.5, 0.5])
    with pytest.raises(ValueError):
        net.add_node("B", 2, ("A",), [[0.5, 0.6], [0.5, 0.5]])
    with pytest.raises(ValueError):
        net.add_node("A", 2, (), [0.5, 0.5])


# ---------- Moralization & triangulation ----------

def test_moralize_chain_and_v_structure():
    assert edge_set(moralize(chain_network())) == {frozenset("AB"), frozenset("BC")}
    assert edge_set(moralize(v_structure())) == {frozenset("AB"), frozenset("AC"), frozenset("BC")}


def test_singly_network_on_1x2_moralizes_to_a_tree():
    grid = GridSpec(nx=2, ny=1)
    maps = enumerate_maps(grid)
    net = map_network(grid, HypothesisSet(maps=tuple(maps)), NOISY, (), "singly")
    assert net.cardinalities["H"] == 3
    assert nx.is_tree(moralize(net))


def test_multiply_network_on_2x2_has_a_junction_cycle():
    maps = enumerate_maps(GRID_2X2)[:2]
    net = map_network(GRID_2X2, HypothesisSet(maps=tuple(maps)), NOISY, (), "multiply")
    moral = moralize(net)
    junctions = [junction_node(p) for p in GRID_2X2.intersections()]
    without_h = moral.subgraph(junctions)
    assert len(nx.cycle_basis(without_h)) >= 1


def test_shared_feature_node_has_both_junction_parents():
    maps = enumerate_maps(GRID_2X2)[:2]
    net = map_network(GRID_2X2, HypothesisSet(maps=tuple(maps)), NOISY, (), "multiply")
    assert net.parents["X(opening,0,0,E)"] == ("J(0,0)", "J(1,0)")


def test_triangulate_four_cycle():
    chordal, cliques = triangulate(nx.cycle_graph(["A", "B", "C", "D"]))
    assert chordal.number_of_edges() == 5
    assert nx.is_chordal(chordal)
    assert sorted(len(c) for c in cliques) == [3, 3]


def test_triangulate_tree_is_unchanged():
    tree = nx.Graph([("A", "B"), ("B", "C"), ("B", "D")])
    chordal, cliques = triangulate(tree)
    assert edge_set(chordal) == edge_set(tree)
    assert {frozenset(c) for c in cliques} == edge_set(tree)


def test_triangulate_single_node():
    g = nx.Graph()
    g.add_node("A")
    _, cliques = triangulate(g)
    assert cliques == [frozenset({"A"})]


def test_largest_clique_cost_examples():
    net = chain_network()
    _, cliques = triangulate(moralize(net), net.cardinalities)
    assert largest_clique_cost(cliques, net.cardinalities) == 4
    _, cliques = triangulate(moralize(v_structure()))
    assert largest_clique_cost(cliques, {"A": 2, "B": 2, "C": 2}) == 8


# ---------- Propagation ----------

def test_propagate_without_evidence_returns_priors():
    tree = propagate(chain_network())
    assert marginal(tree, "A") == pytest.approx([0.3, 0.7])
    assert marginal(tree, "B") == pytest.approx([0.3 * 0.9 + 0.7 * 0.2, 0.3 * 0.1 + 0.7 * 0.8])


@pytest.mark.parametrize("evidence", [{"C": 1}, {"C": 0, "B": 1}, {"A": 0}])
def test_propagate_matches_brute_force(evidence):
    for net in (chain_network(), v_structure()):
        tree = propagate(net, evidence)
        for node in net.cardinalities:
            assert marginal(tree, node) == pytest.approx(brute_force_posterior(net, evidence, node), abs=1e-12)


def test_evidence_probability():
    net = chain_network()
    p_c1 = 0.41 * 0.4 + 0.59 * 0.75
    assert evidence_probability(net, {"C": 1}) == pytest.approx(p_c1)
    assert evidence_probability(net) == pytest.approx(1.0)


def test_impossible_evidence():
    net = DiscreteNetwork()
    net.add_node("A", 2, (), [1.0, 0.0])
    net.add_node("B", 2, ("A",), [[1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(ZeroProbabilityEvidence):
        propagate(net, {"B": 1})


def test_deterministic_chain_gives_point_masses():
    net = DiscreteNetwork()
    net.add_node("A", 2, (), [0.0, 1.0])
    net.add_node("B", 2, ("A",), [[1.0, 0.0], [0.0, 1.0]])
    net.add_node("C", 2, ("B",), [[0.0, 1.0], [1.0, 0.0]])
    tree = propagate(net)
    assert marginal(tree, "B") == pytest.approx([0.0, 1.0])
    assert marginal(tree, "C") == pytest.approx([1.0, 0.0])


def test_separators_are_consistent_after_propagation():
    maps = enumerate_maps(GRID_2X2)[:3]
    readings = scan(maps[0], (0, 0), NOISY, np.random.default_rng(0))[:6]
    net = map_network(GRID_2X2, HypothesisSet(maps=tuple(maps)), NOISY, readings, "multiply", False)
    tree = propagate(net, net.observations)
    for i, j in tree.tree.edges:
        scope = tree.separator(i, j).scope
        if not scope:
            continue
        a = tree.potentials[i].marginalize(scope).table
        b = tree.potentials[j].marginalize(scope).table
        assert np.abs(a / a.sum() - b / b.sum()).max() <= 1e-10


# ---------- Map networks ----------

def random_evidence(rng, world, count, noise):
    readings = []
    for _ in range(count):
        p = GRID_2X2.intersections()[int(rng.integers(4))]
        d = ALL_DETECTORS[int(rng.integers(len(ALL_DETECTORS)))]
        readings.extend(r for r in scan(world, p, noise, rng) if r.detector == d)
    return readings


@pytest.mark.parametrize("structure", ["singly", "multiply"])
def test_map_posterior_matches_brute_force(structure):
    rng = np.random.default_rng(12)
    maps = enumerate_maps(GRID_2X2)
    for trial in range(20):
        noise = [NOISY, NoiseModel(false_negative=0.3, false_positive=0.2), PERFECT_CHANNEL][trial % 3]
        chosen = rng.choice(len(maps), size=int(rng.integers(1, 6)), replace=False)
        hypotheses = HypothesisSet(maps=tuple(maps[int(i)] for i in sorted(chosen)))
        world = maps[int(chosen[0])]
        readings = random_evidence(rng, world, int(rng.integers(1, 8)), noise)
        net = map_network(GRID_2X2, hypotheses, noise, readings, structure, False)
        tree = propagate(net, net.observations)
        oracle = brute_force_posterior(net, net.observations, "H")
        assert np.abs(marginal(tree, "H") - oracle).max() <= 1e-9


@pytest.mark.parametrize("structure", ["singly", "multiply"])
def test_network_posterior_matches_belief_update(structure):
    maps = enumerate_maps(GRID_2X2)[1:5]
    n = len(maps) + 1
    belief = BeliefState(
        grid=GRID_2X2, hypotheses=HypothesisSet(maps=tuple(maps)), probs=tuple([1.0 / n] * n),
        noise=NOISY, structure=structure,
    )
    rng = np.random.default_rng(4)
    readings = scan(maps[2], (1, 1), NOISY, rng)[:5] + scan(maps[2], (0, 1), NOISY, rng)[8:12]
    updated = update_many(belief, readings)
    assert np.abs(posterior_over_maps(updated) - np.array(updated.probs)).max() <= 1e-10


def test_exhaustive_belief_network_matches_the_update():
    belief = init_belief(GRID_2X2, 14, seed=0, noise=NOISY)
    readings = scan(belief.hypotheses.maps[3], (0, 0), NOISY, np.random.default_rng(0))[:4]
    updated = update_many(belief, readings)
    posterior = posterior_over_maps(updated)
    assert 0.0 < posterior[-1] <= max(posterior[:-1]) + 1e-12
    assert np.abs(posterior - np.array(updated.probs)).max() <= 1e-10


def test_unobserved_junction_under_nota_is_uniform():
    maps = enumerate_maps(GRID_2X2)[:2]
    k = len(maps)
    belief = BeliefState(
        grid=GRID_2X2, hypotheses=HypothesisSet(maps=tuple(maps)), probs=(0.0, 0.0, 1.0), noise=NOISY,
    )
    net = build_network(belief, include_unobserved_features=False)
    tree = propagate(net, {"H": k})
    assert marginal(tree, junction_node((1, 1))) == pytest.approx(np.full(4, 0.25))


def test_nota_likelihood_agrees_with_closed_form():
    world = enumerate_maps(GRID_2X2)[6]
    rng = np.random.default_rng(8)
    readings = scan(world, (0, 0), NOISY, rng)[:6] + scan(world, (1, 1), NOISY, rng)[20:24]
    closed = nota_evidence_log_likelihood(GRID_2X2, readings, NOISY, "singly")
    assert nota_log_likelihood(GRID_2X2, readings, NOISY, "singly") == pytest.approx(closed, abs=1e-10)


def test_nota_likelihood_without_evidence():
    assert nota_log_likelihood(GRID_2X2, [], NOISY, "multiply") == 0.0


def test_traversal_readings_use_a_perfect_channel():
    maps = enumerate_maps(GRID_2X2)[:2]
    reading = SensorReading(location=(0, 0), detector=ALL_DETECTORS[6], result=True, source="traversal")
    net = map_network(GRID_2X2, HypothesisSet(maps=tuple(maps)), NOISY, [reading], "singly", False)
    assert net.cpts["S0"] == pytest.approx(np.array([[1.0, 0.0], [0.0, 1.0]]))


# ---------- Benchmark construction ----------

def test_benchmark_clique_cost_shrinks_when_everything_is_explored():
    grid = GridSpec(nx=3, ny=3)
    rng = np.random.default_rng(0)
    world = sample_map(grid, rng)
    hypotheses = init_belief(grid, 5, rng, PERFECT_CHANNEL).hypotheses
    net, none = benchmark_network(grid, hypotheses, [], world)
    _, everything = benchmark_network(grid, hypotheses, grid.intersections(), world)
    assert none == {}
    assert len(everything) == 9
    assert network_clique_cost(net, everything) < network_clique_cost(net, none)
    # with every junction fixed, H stands alone
    assert network_clique_cost(net, everything) == len(hypotheses) + 1
