# src/core/sensing.py
from __future__ import annotations
from functools import lru_cache
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np

from src.models.models import (
    ALL_DETECTORS, CARDINAL_WEDGE, DIRECTION_BIT, PERFECT_CHANNEL, WEDGE_DIRECTION,
    BeliefState, CorridorLayout, Detector, Direction, Feature, GridSpec, Intersection,
    JunctionType, NoiseModel, SensorReading, valid_junction_bits,
)
from src.utils.custom_logging import get_logger
from src.utils.errors import AllDetectorsUsed

logger = get_logger(__name__)


def _wedge_feature(bits: int, wedge: int) -> Feature:
    if wedge % 2 == 0:
        d = WEDGE_DIRECTION[wedge]
        return Feature.OPENING if bits & DIRECTION_BIT[d] else Feature.FLAT_WALL
    left = bits & DIRECTION_BIT[WEDGE_DIRECTION[wedge - 1]]
    right = bits & DIRECTION_BIT[WEDGE_DIRECTION[(wedge + 1) % 8]]
    if left and right:
        return Feature.CONVEX_CORNER
    if not left and not right:
        return Feature.CONCAVE_CORNER
    return Feature.FLAT_WALL


@lru_cache(maxsize=16)
def feature_table(bits: int) -> Tuple[bool, ...]:
    """Presence flags for the 32 detectors (canonical order) of a junction."""
    return tuple(_wedge_feature(bits, d.wedge) == d.feature for d in ALL_DETECTORS)


_DETECTOR_INDEX: Dict[Detector, int] = {d: i for i, d in enumerate(ALL_DETECTORS)}


def detector_index(detector: Detector) -> int:
    return _DETECTOR_INDEX[detector]


def feature_present(bits: int, detector: Detector) -> bool:
    return feature_table(bits)[_DETECTOR_INDEX[detector]]


def geometry_features(junction: JunctionType) -> Dict[Detector, bool]:
    """Deterministic feature layout of a junction type, one entry per detector."""
    table = feature_table(junction.bits)
    return {d: table[i] for i, d in enumerate(ALL_DETECTORS)}


def opening_detector(direction: Direction) -> Detector:
    return Detector(feature=Feature.OPENING, wedge=CARDINAL_WEDGE[direction])

# ---------- Channel ----------

def channel(reading: SensorReading, noise: NoiseModel) -> NoiseModel:
    return PERFECT_CHANNEL if reading.source == "traversal" else noise


def reading_likelihood(result: bool, present: bool, noise: NoiseModel) -> float:
    """Pr(S = result | X = present)."""
    p_true = 1.0 - noise.false_negative if present else noise.false_positive
    return p_true if result else 1.0 - p_true


def location_likelihoods(
    grid: GridSpec, location: Intersection, readings: Iterable[SensorReading], noise: NoiseModel
) -> Tuple[Tuple[int, ...], np.ndarray]:
    """Valid junction types at `location` and the likelihood of `readings` under each."""
    types = valid_junction_bits(grid, location)
    lik = np.ones(len(types))
    for r in readings:
        ch = channel(r, noise)
        idx = _DETECTOR_INDEX[r.detector]
        lik *= np.array([reading_likelihood(r.result, feature_table(b)[idx], ch) for b in types])
    return types, lik

# ---------- Simulated sensing ----------

def sense(
    world: CorridorLayout,
    location: Intersection,
    detector: Detector,
    noise: NoiseModel,
    rng: np.random.Generator,
    timestamp: int = 0,
) -> SensorReading:
    present = feature_present(world.direction_bits(location), detector)
    p_true = 1.0 - noise.false_negative if present else noise.false_positive
    return SensorReading(
        location=location,
        detector=detector,
        result=bool(rng.random() < p_true),
        timestamp=timestamp,
    )


def scan(
    world: CorridorLayout,
    location: Intersection,
    noise: NoiseModel,
    rng: np.random.Generator,
    timestamp: int = 0,
) -> List[SensorReading]:
    return [sense(world, location, d, noise, rng, timestamp) for d in ALL_DETECTORS]

# ---------- Detector selection ----------

def _entropy(p: np.ndarray) -> float:
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


def junction_marginal(belief: BeliefState, location: Intersection) -> Tuple[Tuple[int, ...], np.ndarray]:
    """Junction-type marginal at `location`: map point masses plus NOTA's local posterior.

    NOTA's share uses per-junction independence (readings elsewhere do not move it).
    """
    here = [r for r in belief.evidence if r.location == location]
    types, lik = location_likelihoods(belief.grid, location, here, belief.noise)
    marginal = np.zeros(len(types))
    position = {b: i for i, b in enumerate(types)}
    for m, p in zip(belief.hypotheses.maps, belief.probs):
        marginal[position[m.direction_bits(location)]] += p
    if belief.nota > 0 and lik.sum() > 0:
        marginal += belief.nota * lik / lik.sum()
    total = marginal.sum()
    return types, marginal / total if total > 0 else marginal


def expected_information_gain(
    types: Sequence[int], marginal: np.ndarray, detector: Detector, noise: NoiseModel
) -> float:
    idx = _DETECTOR_INDEX[detector]
    present = np.array([feature_table(b)[idx] for b in types])
    p_true_given = np.where(present, 1.0 - noise.false_negative, noise.false_positive)
    prior_entropy = _entropy(marginal)
    expected = 0.0
    for likelihood in (p_true_given, 1.0 - p_true_given):
        joint = marginal * likelihood
        p_outcome = joint.sum()
        if p_outcome > 0:
            expected += p_outcome * _entropy(joint / p_outcome)
    return prior_entropy - expected


def used_detectors(belief: BeliefState, location: Intersection) -> set:
    return {r.detector for r in belief.evidence if r.location == location and r.source == "detector"}


def select_detector(belief: BeliefState, location: Intersection, exclude: Iterable[Detector] = ()) -> Detector:
    """Unused detector with the largest expected entropy drop of the junction marginal."""
    used = used_detectors(belief, location) | set(exclude)
    candidates = [d for d in ALL_DETECTORS if d not in used]
    if not candidates:
        raise AllDetectorsUsed(f"all {len(ALL_DETECTORS)} detectors already fired at {location}")
    types, marginal = junction_marginal(belief, location)
    gains = [expected_information_gain(types, marginal, d, belief.noise) for d in candidates]
    best = max(gains)
    for d, g in zip(candidates, gains):
        if g >= best - 1e-12:
            logger.debug(f"selected detector {d.feature.value}/{d.wedge} at {location} (gain {g:.4f})")
            return d
    return candidates[0]
