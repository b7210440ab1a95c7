# src/core/belief.py
from __future__ import annotations
from collections import defaultdict
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence

import numpy as np

from src.core.inference import nota_log_likelihood
from src.core.sensing import channel, detector_index, feature_table, location_likelihoods, reading_likelihood
from src.core.world_model import (
    Constraints, Seed, as_rng, density, density_weight, enumerate_consistent, pinned_edges, pins_of,
    sample_map,
)
from src.models.models import (
    BeliefState, CorridorLayout, GridSpec, HypothesisSet, Intersection, MapHypothesis, NoiseModel,
    SensorReading, StructureMode, valid_junction_bits,
)
from src.utils.config import get_settings
from src.utils.custom_logging import get_logger
from src.utils.errors import DegenerateEvidence, NoConsistentMap

logger = get_logger(__name__)

# ---------- Hypothesis generation ----------

def _generate(
    grid: GridSpec,
    k: int,
    rng: np.random.Generator,
    constraints: Constraints,
    budget: Optional[int] = None,
) -> HypothesisSet:
    budget = get_settings().enumeration_budget if budget is None else budget
    pins = pins_of(constraints)
    fixed, _ = pinned_edges(grid, pins)
    size = 1 << (grid.edge_count - bin(fixed).count("1"))
    if size <= budget:
        consistent = enumerate_consistent(grid, pins, budget, constraints)
        if not consistent:
            raise NoConsistentMap("no connected map satisfies the evidence")
        if len(consistent) <= k:
            return HypothesisSet(maps=tuple(consistent), exhaustive=True)
        weights = np.array([density_weight(density(m)) for m in consistent])
        chosen = rng.choice(len(consistent), size=k, replace=False, p=weights / weights.sum())
        return HypothesisSet(maps=tuple(consistent[i] for i in sorted(chosen)), exhaustive=False)

    attempts = get_settings().sample_attempts
    maps: Dict[int, MapHypothesis] = {}
    repeats = 0
    while len(maps) < k and repeats < attempts:
        try:
            m = sample_map(grid, rng, constraints=constraints, max_attempts=attempts)
        except NoConsistentMap:
            break
        if m.mask in maps:
            repeats += 1
            continue
        maps[m.mask] = m
    if not maps:
        raise NoConsistentMap("sampling found no map satisfying the evidence")
    if len(maps) < k:
        logger.warning(f"hypothesis set short: {len(maps)} of {k} distinct maps")
    return HypothesisSet(maps=tuple(maps.values()), exhaustive=False)


def init_belief(
    grid: GridSpec,
    k: int,
    seed: Seed = None,
    noise: Optional[NoiseModel] = None,
    structure: StructureMode = "singly",
    budget: Optional[int] = None,
) -> BeliefState:
    """K density-preferring distinct maps plus NOTA, uniform prior, no evidence."""
    if k < 1:
        raise ValueError("K must be at least 1")
    hypotheses = _generate(grid, k, as_rng(seed), {}, budget)
    return _uniform(grid, hypotheses, noise or NoiseModel(), structure, k)


def _uniform(
    grid: GridSpec,
    hypotheses: HypothesisSet,
    noise: NoiseModel,
    structure: StructureMode,
    capacity: int,
) -> BeliefState:
    """Uniform prior over the maps and NOTA; evidence alone moves NOTA."""
    k = len(hypotheses)
    probs = [1.0 / (k + 1)] * (k + 1)
    return BeliefState(
        grid=grid,
        hypotheses=hypotheses,
        probs=tuple(probs),
        noise=noise,
        structure=structure,
        capacity=capacity,
    )

# ---------- Updates ----------

def _map_log_likelihood(m: MapHypothesis, readings: Sequence[SensorReading], noise: NoiseModel) -> float:
    total = 0.0
    for r in readings:
        present = feature_table(m.direction_bits(r.location))[detector_index(r.detector)]
        p = reading_likelihood(r.result, present, channel(r, noise))
        if p <= 0.0:
            return float("-inf")
        total += np.log(p)
    return total


def nota_evidence_log_likelihood(
    grid: GridSpec, evidence: Sequence[SensorReading], noise: NoiseModel, structure: StructureMode
) -> float:
    """log Pr(evidence | NOTA) with junction types uniform and independent a priori."""
    if structure == "multiply":
        try:
            return nota_log_likelihood(grid, evidence, noise, structure)
        except ValueError:
            return float("-inf")
    by_location: Dict[Intersection, List[SensorReading]] = defaultdict(list)
    for r in evidence:
        by_location[r.location].append(r)
    total = 0.0
    for p, readings in by_location.items():
        types, lik = location_likelihoods(grid, p, readings, noise)
        z = lik.sum() / len(types)
        if z <= 0.0:
            return float("-inf")
        total += float(np.log(z))
    return total


def update_many(belief: BeliefState, readings: Iterable[SensorReading]) -> BeliefState:
    """Bayes update with a batch of readings (one NOTA recomputation)."""
    readings = list(readings)
    if not readings:
        return belief
    for r in readings:
        if not belief.grid.contains(r.location):
            raise ValueError(f"reading location {r.location} lies outside the grid")
    with np.errstate(divide="ignore"):
        log_w = np.log(np.array(belief.probs))
    for i, m in enumerate(belief.hypotheses.maps):
        log_w[i] += _map_log_likelihood(m, readings, belief.noise)
    evidence = belief.evidence + tuple(readings)
    nota_ll = nota_evidence_log_likelihood(belief.grid, evidence, belief.noise, belief.structure)
    log_w[-1] += nota_ll - belief.nota_log_likelihood
    if not np.isfinite(log_w).any():
        raise DegenerateEvidence("every hypothesis, NOTA included, has zero likelihood")
    log_w -= log_w[np.isfinite(log_w)].max()
    w = np.exp(log_w)
    probs = w / w.sum()
    return belief.model_copy(update={
        "probs": tuple(float(p) for p in probs),
        "evidence": evidence,
        "nota_log_likelihood": nota_ll if np.isfinite(nota_ll) else belief.nota_log_likelihood,
    })


def update(belief: BeliefState, reading: SensorReading) -> BeliefState:
    return update_many(belief, [reading])


def nota_triggered(belief: BeliefState) -> bool:
    """NOTA strictly exceeds every map entry."""
    return belief.probs[-1] > max(belief.probs[:-1], default=0.0)


def true_map_mass(belief: BeliefState, world: CorridorLayout) -> float:
    return float(sum(p for m, p in zip(belief.hypotheses.maps, belief.probs) if m.mask == world.mask))


def map_id(index: int) -> str:
    return f"M{index}"


def snapshot(belief: BeliefState) -> List[tuple]:
    """(map-id, probability) pairs with NOTA last."""
    entries = [(map_id(i), p) for i, p in enumerate(belief.probs[:-1])]
    entries.append(("NOTA", belief.probs[-1]))
    return entries

# ---------- Evidence constraints ----------

def evidence_constraints(grid: GridSpec, evidence: Iterable[SensorReading]) -> Dict[Intersection, FrozenSet[int]]:
    """Junction types consistent with every reading at each observed location, read noiselessly."""
    by_location: Dict[Intersection, List[SensorReading]] = defaultdict(list)
    for r in evidence:
        by_location[r.location].append(r)
    out = {}
    for p in sorted(by_location, key=lambda q: (q[1], q[0])):
        readings = by_location[p]
        out[p] = frozenset(
            b for b in valid_junction_bits(grid, p)
            if all(feature_table(b)[detector_index(r.detector)] == r.result for r in readings)
        )
    return out


def pinned_junctions(grid: GridSpec, evidence: Iterable[SensorReading]) -> Dict[Intersection, int]:
    """Locations where exactly one junction type explains the readings."""
    return pins_of(evidence_constraints(grid, evidence))


def regenerate(belief: BeliefState, seed: Seed = None, budget: Optional[int] = None) -> BeliefState:
    """Fresh map set as consistent as possible with the evidence; prior reset, evidence re-applied."""
    rng = as_rng(seed)
    grid = belief.grid
    constraints = evidence_constraints(grid, belief.evidence)
    contradicted = [p for p, allowed in constraints.items() if not allowed]
    if contradicted:
        if belief.noise.noiseless:
            raise NoConsistentMap(f"noiseless evidence is contradictory at {contradicted}")
        logger.warning(f"ignoring contradictory readings at {contradicted}")
        constraints = {p: a for p, a in constraints.items() if a}

    relaxed = dict(constraints)
    while True:
        try:
            hypotheses = _generate(grid, belief.target_k, rng, relaxed, budget)
            break
        except NoConsistentMap:
            if belief.noise.noiseless and len(relaxed) == len(constraints):
                raise
            if not relaxed:
                raise
            dropped = max(relaxed, key=lambda q: (q[1], q[0]))
            logger.warning(f"relaxing evidence constraint at {dropped}")
            del relaxed[dropped]

    logger.info(
        f"regenerated {len(hypotheses)} maps (exhaustive={hypotheses.exhaustive}, "
        f"pinned={len(pins_of(relaxed))})"
    )
    fresh = _uniform(grid, hypotheses, belief.noise, belief.structure, belief.target_k)
    try:
        return update_many(fresh, belief.evidence)
    except DegenerateEvidence as e:
        raise NoConsistentMap(str(e)) from e


def posterior_sample(
    belief: BeliefState, rng: np.random.Generator, budget: Optional[int] = None
) -> MapHypothesis:
    """Draw a world from Bel(H); NOTA draws a density-preferred map honoring the evidence."""
    index = int(rng.choice(len(belief.probs), p=np.array(belief.probs) / sum(belief.probs)))
    if index < belief.k:
        return belief.hypotheses.maps[index]
    constraints = {p: a for p, a in evidence_constraints(belief.grid, belief.evidence).items() if a}
    try:
        return sample_map(belief.grid, rng, constraints=constraints,
                          max_attempts=get_settings().sample_attempts)
    except NoConsistentMap:
        return sample_map(belief.grid, rng)

