# src/core/inference.py
"""Discrete Bayesian-network engine: moralization, min-fill triangulation,
clique trees and Hugin-style two-pass propagation.

Factors are numpy tables indexed by an ordered scope of node names; every
product and marginal goes through `np.einsum` with integer subscripts.
"""
from __future__ import annotations
import math
from dataclasses import dataclass, field
from functools import reduce
from typing import Dict, FrozenSet, Hashable, Iterable, List, Mapping, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from src.core.sensing import channel, feature_table, detector_index
from src.models.models import (
    ALL_DETECTORS, DIRECTION_BIT, OPPOSITE, WEDGE_DIRECTION, BeliefState, CorridorLayout, Detector,
    Feature, GridSpec, HypothesisSet, Intersection, NoiseModel, SensorReading, StructureMode,
    direction_between, edge_at, valid_junction_bits,
)
from src.utils.custom_logging import get_logger
from src.utils.errors import ZeroProbabilityEvidence

logger = get_logger(__name__)

Evidence = Mapping[str, int]

# ---------- Factors ----------

class Factor:
    """A nonnegative table over an ordered scope of discrete variables."""
    __slots__ = ("scope", "table")

    def __init__(self, scope: Sequence[str], table):
        self.scope: Tuple[str, ...] = tuple(scope)
        self.table = np.asarray(table, dtype=float)
        if self.table.ndim != len(self.scope):
            raise ValueError(f"table has {self.table.ndim} axes for scope {self.scope}")

    def product(self, other: "Factor") -> "Factor":
        scope = self.scope + tuple(v for v in other.scope if v not in self.scope)
        ids = {v: i for i, v in enumerate(scope)}
        table = np.einsum(
            self.table, [ids[v] for v in self.scope],
            other.table, [ids[v] for v in other.scope],
            list(range(len(scope))),
        )
        return Factor(scope, table)

    def marginalize(self, keep: Iterable[str]) -> "Factor":
        """Sum out everything outside `keep`; the result follows `keep`'s order."""
        keep = tuple(keep)
        ids = {v: i for i, v in enumerate(self.scope)}
        missing = [v for v in keep if v not in ids]
        if missing:
            raise KeyError(f"{missing} not in scope {self.scope}")
        table = np.einsum(self.table, list(range(len(self.scope))), [ids[v] for v in keep])
        return Factor(keep, table)

    def reduce(self, evidence: Evidence) -> "Factor":
        """Slice observed variables out of the table (their axes are dropped)."""
        if not any(v in evidence for v in self.scope):
            return self
        index = tuple(evidence[v] if v in evidence else slice(None) for v in self.scope)
        return Factor(tuple(v for v in self.scope if v not in evidence), self.table[index])

    def total(self) -> float:
        return float(self.table.sum())

    def __repr__(self) -> str:
        return f"Factor({self.scope}, shape={self.table.shape})"

# ---------- Networks ----------

@dataclass
class DiscreteNetwork:
    """DAG of discrete nodes; each CPT has axes (parents..., node)."""
    cardinalities: Dict[str, int] = field(default_factory=dict)
    parents: Dict[str, Tuple[str, ...]] = field(default_factory=dict)
    cpts: Dict[str, np.ndarray] = field(default_factory=dict)
    # observed S nodes produced by build_network
    observations: Dict[str, int] = field(default_factory=dict)

    def add_node(self, name: str, cardinality: int, parents: Sequence[str], cpt) -> None:
        if name in self.cardinalities:
            raise ValueError(f"duplicate node {name}")
        for p in parents:
            if p not in self.cardinalities:
                raise ValueError(f"parent {p} of {name} must be added first")
        table = np.asarray(cpt, dtype=float)
        expected = tuple(self.cardinalities[p] for p in parents) + (cardinality,)
        if table.shape != expected:
            raise ValueError(f"CPT of {name} has shape {table.shape}, expected {expected}")
        if not np.allclose(table.sum(axis=-1), 1.0, atol=1e-12, rtol=0.0):
            raise ValueError(f"CPT rows of {name} do not sum to 1")
        self.cardinalities[name] = cardinality
        self.parents[name] = tuple(parents)
        self.cpts[name] = table

    @property
    def nodes(self) -> List[str]:
        return list(self.cardinalities)

    def dag(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(self.cardinalities)
        for child, ps in self.parents.items():
            g.add_edges_from((p, child) for p in ps)
        return g

    def validate(self) -> None:
        if not nx.is_directed_acyclic_graph(self.dag()):
            raise ValueError("network contains a directed cycle")

    def factors(self) -> List[Factor]:
        return [Factor(self.parents[n] + (n,), self.cpts[n]) for n in self.cardinalities]


def moralize(net: DiscreteNetwork) -> nx.Graph:
    """Marry co-parents and drop edge directions."""
    return nx.moral_graph(net.dag())

# ---------- Triangulation ----------

def _node_key(node: Hashable) -> str:
    return str(node)


def triangulate(
    graph: nx.Graph, cardinalities: Optional[Mapping[Hashable, int]] = None
) -> Tuple[nx.Graph, List[FrozenSet]]:
    """Min-fill elimination; ties go to the smallest state-space weight, then node id.

    Returns the chordal fill-in graph and its maximal cliques in elimination order.
    """
    cards = {n: (cardinalities or {}).get(n, 2) for n in graph.nodes}
    chordal = nx.Graph(graph)
    adjacency = {n: set(graph.neighbors(n)) - {n} for n in graph.nodes}

    def score(n):
        nbrs = sorted(adjacency[n], key=_node_key)
        fill = sum(
            1 for i, a in enumerate(nbrs) for b in nbrs[i + 1:] if b not in adjacency[a]
        )
        weight = cards[n] * math.prod(cards[m] for m in nbrs)
        return (fill, weight, _node_key(n))

    scores = {n: score(n) for n in adjacency}
    cliques: List[FrozenSet] = []
    while scores:
        v = min(scores, key=scores.__getitem__)
        nbrs = adjacency[v]
        candidate = frozenset(nbrs | {v})
        if not any(candidate <= c for c in cliques):
            cliques.append(candidate)
        for a in nbrs:
            for b in nbrs:
                if a != b and b not in adjacency[a]:
                    adjacency[a].add(b)
                    chordal.add_edge(a, b)
        for a in nbrs:
            adjacency[a].discard(v)
        del adjacency[v]
        del scores[v]
        touched = set(nbrs)
        for a in nbrs:
            touched |= adjacency[a]
        for n in touched:
            scores[n] = score(n)
    return chordal, cliques


def largest_clique_cost(cliques: Iterable[Iterable[Hashable]], cardinalities: Mapping[Hashable, int]) -> int:
    """Max over cliques of the product of member state-space sizes."""
    return max((math.prod(cardinalities[n] for n in c) for c in cliques), default=0)

# ---------- Clique tree ----------

@dataclass
class CliqueTree:
    cliques: List[Tuple[str, ...]]
    tree: nx.Graph
    potentials: List[Factor]
    separators: Dict[Tuple[int, int], Factor]
    evidence: Dict[str, int]
    cardinalities: Dict[str, int]
    log_evidence: float = 0.0

    def separator(self, i: int, j: int) -> Factor:
        return self.separators[(min(i, j), max(i, j))]


def build_clique_tree(cliques: Sequence[FrozenSet]) -> nx.Graph:
    """Maximum-weight spanning tree over separator sizes; components joined by empty separators."""
    g = nx.Graph()
    g.add_nodes_from(range(len(cliques)))
    for i in range(len(cliques)):
        for j in range(i + 1, len(cliques)):
            w = len(cliques[i] & cliques[j])
            if w:
                g.add_edge(i, j, weight=w)
    tree = nx.maximum_spanning_tree(g)
    tree.add_nodes_from(range(len(cliques)))
    components = sorted((min(c) for c in nx.connected_components(tree)))
    for a, b in zip(components, components[1:]):
        tree.add_edge(a, b, weight=0)
    return tree


def condition(net: DiscreteNetwork, evidence: Optional[Evidence] = None) -> List[Factor]:
    evidence = dict(evidence or {})
    for node, state in evidence.items():
        if node not in net.cardinalities:
            raise KeyError(f"unknown evidence node {node}")
        if not 0 <= state < net.cardinalities[node]:
            raise ValueError(f"state {state} out of range for {node}")
    return [f.reduce(evidence) for f in net.factors()]


def interaction_graph(factors: Iterable[Factor]) -> nx.Graph:
    g = nx.Graph()
    for f in factors:
        g.add_nodes_from(f.scope)
        for i, a in enumerate(f.scope):
            for b in f.scope[i + 1:]:
                g.add_edge(a, b)
    return g


def _divide(new: np.ndarray, old: np.ndarray) -> np.ndarray:
    return np.divide(new, old, out=np.zeros_like(new), where=old != 0)


def propagate(net: DiscreteNetwork, evidence: Optional[Evidence] = None) -> CliqueTree:
    """Enter evidence by slicing, then run collect/distribute over a clique tree."""
    evidence = dict(evidence or {})
    factors = condition(net, evidence)
    log_z = 0.0
    live = []
    for f in factors:
        if f.scope:
            live.append(f)
            continue
        value = float(f.table)
        if value <= 0.0:
            raise ZeroProbabilityEvidence("evidence contradicts a fully observed table")
        log_z += math.log(value)

    order = {n: i for i, n in enumerate(net.cardinalities)}
    _, clique_sets = triangulate(interaction_graph(live), net.cardinalities)
    cliques = [tuple(sorted(c, key=order.__getitem__)) for c in clique_sets]
    tree = build_clique_tree(clique_sets)

    potentials = [Factor(c, np.ones([net.cardinalities[n] for n in c])) for c in cliques]
    for f in live:
        needed = set(f.scope)
        home = next(i for i, c in enumerate(clique_sets) if needed <= c)
        # product keeps the clique's own axis order first
        potentials[home] = potentials[home].product(f)

    separators: Dict[Tuple[int, int], Factor] = {}
    for i, j in tree.edges:
        scope = tuple(n for n in cliques[i] if n in clique_sets[j])
        separators[(min(i, j), max(i, j))] = Factor(scope, np.ones([net.cardinalities[n] for n in scope]))

    ct = CliqueTree(cliques, tree, potentials, separators, evidence, dict(net.cardinalities))
    if cliques:
        root = 0
        post_order = list(nx.dfs_postorder_nodes(tree, root))
        parent = {child: p for p, child in nx.bfs_edges(tree, root)}
        # collect
        for child in post_order:
            if child == root:
                continue
            p = parent[child]
            sep = ct.separator(child, p)
            msg = ct.potentials[child].marginalize(sep.scope)
            z = msg.total()
            if z <= 0.0:
                raise ZeroProbabilityEvidence("evidence has probability zero under the network")
            log_z += math.log(z)
            msg = Factor(msg.scope, msg.table / z)
            ct.potentials[p] = ct.potentials[p].product(Factor(sep.scope, _divide(msg.table, sep.table)))
            ct.separators[(min(child, p), max(child, p))] = msg
        z = ct.potentials[root].total()
        if z <= 0.0:
            raise ZeroProbabilityEvidence("evidence has probability zero under the network")
        log_z += math.log(z)
        ct.potentials[root] = Factor(ct.potentials[root].scope, ct.potentials[root].table / z)
        # distribute
        for p, child in nx.bfs_edges(tree, root):
            sep = ct.separator(p, child)
            msg = ct.potentials[p].marginalize(sep.scope)
            updated = ct.potentials[child].product(Factor(sep.scope, _divide(msg.table, sep.table)))
            total = updated.total()
            ct.potentials[child] = Factor(updated.scope, updated.table / total if total > 0 else updated.table)
            ct.separators[(min(child, p), max(child, p))] = msg
    ct.log_evidence = log_z
    return ct


def marginal(tree: CliqueTree, node: str) -> np.ndarray:
    """Posterior distribution of `node` read from the smallest clique holding it."""
    if node in tree.evidence:
        out = np.zeros(tree.cardinalities[node])
        out[tree.evidence[node]] = 1.0
        return out
    holders = [i for i, c in enumerate(tree.cliques) if node in c]
    if not holders:
        raise KeyError(f"{node} is not in the clique tree")
    home = min(holders, key=lambda i: tree.potentials[i].table.size)
    table = tree.potentials[home].marginalize((node,)).table
    return table / table.sum()


def evidence_log_probability(net: DiscreteNetwork, evidence: Optional[Evidence] = None) -> float:
    return propagate(net, evidence).log_evidence


def evidence_probability(net: DiscreteNetwork, evidence: Optional[Evidence] = None) -> float:
    return math.exp(evidence_log_probability(net, evidence))


def brute_force_posterior(net: DiscreteNetwork, evidence: Optional[Evidence], query: str) -> np.ndarray:
    """Multiply every conditioned factor into one joint table and read `query` off it."""
    evidence = dict(evidence or {})
    if query in evidence:
        out = np.zeros(net.cardinalities[query])
        out[evidence[query]] = 1.0
        return out
    joint = reduce(lambda a, b: a.product(b), condition(net, evidence), Factor((), np.array(1.0)))
    table = joint.marginalize((query,)).table
    total = table.sum()
    if total <= 0.0:
        raise ZeroProbabilityEvidence("evidence has probability zero under the network")
    return table / total

# ---------- Map networks ----------

def junction_node(location: Intersection) -> str:
    return f"J({location[0]},{location[1]})"


def feature_node(
    grid: GridSpec, location: Intersection, detector: Detector, structure: StructureMode
) -> Tuple[str, Tuple[Intersection, ...]]:
    """Node name and junction parents of the feature `detector` looks at from `location`.

    In multiply mode the cardinal opening/flat-wall feature facing a neighbour
    is one node shared by both junctions.
    """
    x, y = location
    cardinal = detector.wedge % 2 == 0 and detector.feature in (Feature.OPENING, Feature.FLAT_WALL)
    if structure == "multiply" and cardinal:
        direction = WEDGE_DIRECTION[detector.wedge]
        neighbour = grid.neighbor(location, direction)
        if neighbour is not None:
            e = edge_at(location, direction)
            a, b = e.endpoints()
            return f"X({detector.feature.value},{e.x},{e.y},{e.direction.value})", (a, b)
    return f"X({detector.feature.value},{detector.wedge},{x},{y})", (location,)


def _single_parent_cpt(grid: GridSpec, location: Intersection, detector: Detector) -> np.ndarray:
    idx = detector_index(detector)
    types = valid_junction_bits(grid, location)
    present = np.array([feature_table(b)[idx] for b in types], dtype=float)
    return np.stack([1.0 - present, present], axis=-1)


def _shared_edge_cpt(grid: GridSpec, a: Intersection, b: Intersection, feature: Feature) -> np.ndarray:
    """Opening iff both ends carry the corridor; flat wall otherwise."""
    da = direction_between(a, b)
    db = OPPOSITE[da]
    types_a = valid_junction_bits(grid, a)
    types_b = valid_junction_bits(grid, b)
    table = np.zeros((len(types_a), len(types_b), 2))
    for i, ta in enumerate(types_a):
        for j, tb in enumerate(types_b):
            opening = bool(ta & DIRECTION_BIT[da]) and bool(tb & DIRECTION_BIT[db])
            present = opening if feature == Feature.OPENING else not opening
            table[i, j, int(present)] = 1.0
    return table


def _channel_cpt(noise: NoiseModel) -> np.ndarray:
    # rows: feature absent / present; columns: reading false / true
    return np.array([
        [1.0 - noise.false_positive, noise.false_positive],
        [noise.false_negative, 1.0 - noise.false_negative],
    ])


def map_network(
    grid: GridSpec,
    hypotheses: Optional[HypothesisSet],
    noise: NoiseModel,
    evidence: Sequence[SensorReading] = (),
    structure: StructureMode = "singly",
    include_unobserved_features: bool = True,
) -> DiscreteNetwork:
    """The H / J / X / S network over a grid.

    With `hypotheses=None` the network has no H node and every junction is a
    uniform root (the NOTA-only network).
    """
    net = DiscreteNetwork()
    points = grid.intersections()
    if hypotheses is not None:
        k = len(hypotheses)
        prior = np.full(k + 1, 1.0 / (k + 1))
        net.add_node("H", k + 1, (), prior)
    for p in points:
        types = valid_junction_bits(grid, p)
        uniform = np.full(len(types), 1.0 / len(types))
        if hypotheses is None:
            net.add_node(junction_node(p), len(types), (), uniform)
            continue
        position = {b: i for i, b in enumerate(types)}
        rows = np.zeros((len(hypotheses) + 1, len(types)))
        for i, m in enumerate(hypotheses.maps):
            rows[i, position[m.direction_bits(p)]] = 1.0
        rows[-1] = uniform
        net.add_node(junction_node(p), len(types), ("H",), rows)

    wanted = []
    if include_unobserved_features:
        wanted = [(p, d) for p in points for d in ALL_DETECTORS]
    else:
        seen = set()
        for r in evidence:
            if (r.location, r.detector) not in seen:
                seen.add((r.location, r.detector))
                wanted.append((r.location, r.detector))
    for p, d in wanted:
        name, owners = feature_node(grid, p, d, structure)
        if name in net.cardinalities:
            continue
        if len(owners) == 2:
            cpt = _shared_edge_cpt(grid, owners[0], owners[1], d.feature)
        else:
            cpt = _single_parent_cpt(grid, p, d)
        net.add_node(name, 2, tuple(junction_node(o) for o in owners), cpt)

    for t, r in enumerate(evidence):
        name, _ = feature_node(grid, r.location, r.detector, structure)
        net.add_node(f"S{t}", 2, (name,), _channel_cpt(channel(r, noise)))
        net.observations[f"S{t}"] = int(r.result)
    return net


def build_network(
    belief: BeliefState,
    structure: Optional[StructureMode] = None,
    include_unobserved_features: bool = True,
) -> DiscreteNetwork:
    return map_network(
        belief.grid,
        belief.hypotheses,
        belief.noise,
        belief.evidence,
        structure or belief.structure,
        include_unobserved_features,
    )


def posterior_over_maps(belief: BeliefState, structure: Optional[StructureMode] = None) -> np.ndarray:
    """Pr(H | evidence) by propagation from the uniform prior the belief started with."""
    net = build_network(belief, structure, include_unobserved_features=False)
    return marginal(propagate(net, net.observations), "H")


def nota_log_likelihood(
    grid: GridSpec, evidence: Sequence[SensorReading], noise: NoiseModel, structure: StructureMode
) -> float:
    """log Pr(evidence | NOTA): junctions uniform and independent a priori."""
    if not evidence:
        return 0.0
    net = map_network(grid, None, noise, evidence, structure, include_unobserved_features=False)
    return evidence_log_probability(net, net.observations)

# ---------- Benchmark construction ----------

def benchmark_network(
    grid: GridSpec,
    hypotheses: HypothesisSet,
    explored: Iterable[Intersection],
    world: CorridorLayout,
) -> Tuple[DiscreteNetwork, Dict[str, int]]:
    """Multiply-connected network with every feature node; explored junctions are instantiated."""
    net = map_network(grid, hypotheses, NoiseModel(), (), "multiply", include_unobserved_features=True)
    evidence = {}
    for p in explored:
        types = valid_junction_bits(grid, p)
        evidence[junction_node(p)] = types.index(world.direction_bits(p))
    return net, evidence


def network_clique_cost(net: DiscreteNetwork, evidence: Optional[Evidence] = None) -> int:
    """Largest clique cost of the triangulated network after entering `evidence`."""
    factors = [f for f in condition(net, evidence) if f.scope]
    _, cliques = triangulate(interaction_graph(factors), net.cardinalities)
    return largest_clique_cost(cliques, net.cardinalities)
