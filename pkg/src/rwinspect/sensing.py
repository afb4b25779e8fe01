"""Poisson measurement model.

Counts are Poisson with mean ``B`` plus, when a source is present and
visible, an inverse-square signal ``s / max(r, r_0)^2``.  Obstacles are
completely attenuating, so a blocked line of sight removes the signal
entirely.  The near-field clamp ``r_0`` keeps the signal finite when the
detector sits on top of the source.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .geometry import MapSpec, Vec2, line_of_sight


@dataclass(frozen=True)
class DetectorModel:
    """Detector parameters: background mean, threshold level, near-field clamp."""

    background: float
    z: float = 3.0
    clamp: float = 0.1

    def __post_init__(self):
        if self.background < 0.0:
            raise ValueError("background must be >= 0")
        if self.z < 0.0:
            raise ValueError("z must be >= 0")
        if self.clamp <= 0.0:
            raise ValueError("clamp must be positive")

    @property
    def threshold(self) -> float:
        """Count threshold B + z*sqrt(B) above which a measurement is anomalous."""
        return self.background + self.z * math.sqrt(self.background)


@dataclass(frozen=True)
class Measurement:
    counts: int
    exceeded: bool


def expected_counts(det: DetectorModel, map_spec: MapSpec, position: Vec2 | tuple[float, float]) -> float:
    """Mean of the count distribution at a position."""
    source = map_spec.effective_source
    if source is None:
        return det.background
    x, y = position
    if not line_of_sight(map_spec, (x, y), (source.x, source.y)):
        return det.background
    r = math.hypot(x - source.x, y - source.y)
    r = max(r, det.clamp)
    return det.background + source.strength / (r * r)


def sample_counts(rng, mu: float) -> int:
    """One Poisson(mu) draw; deterministic given the generator state."""
    if mu < 0.0 or not math.isfinite(mu):
        raise ValueError("mu must be finite and >= 0")
    if mu == 0.0:
        return 0
    return int(rng.poisson(mu))


def threshold_exceeded(counts: int, background: float, z: float) -> bool:
    """True iff counts strictly exceed B + z*sqrt(B) (small-step branch)."""
    return counts > background + z * math.sqrt(background)


def measure(det: DetectorModel, map_spec: MapSpec, position, rng) -> Measurement:
    counts = sample_counts(rng, expected_counts(det, map_spec, position))
    return Measurement(counts, counts > det.threshold)


def exceedance_probability(background: float, z: float) -> float:
    """P(X > B + z*sqrt(B)) for X ~ Poisson(B).

    This is the chance a source-free measurement lands in the small-step
    branch.  Computed by direct tail summation starting at the first integer
    above the threshold; terms decay monotonically there, so truncating at
    machine-relative size keeps the relative error far below 1e-10.
    """
    if background < 0.0 or z < 0.0:
        raise ValueError("background and z must be >= 0")
    if background == 0.0:
        return 0.0
    c = background + z * math.sqrt(background)
    m = math.floor(c) + 1  # P(X > c) = P(X >= floor(c) + 1) for any real c >= 0
    log_term = m * math.log(background) - background - math.lgamma(m + 1)
    if log_term < -745.0:  # exp underflows: tail is zero to double precision
        return 0.0
    term = math.exp(log_term)
    total = term
    k = m
    while True:
        k += 1
        term *= background / k
        total += term
        if term <= total * 1e-17:
            return min(total, 1.0)
