"""Metaplasticity core: the learning-rate scaling function, the per-synapse
update rule, flexibility sampling, and reference-weight bookkeeping.

Every trainable weight carries a fixed flexibility value in [0, 1].  A weight
with flexibility 1 updates like plain gradient descent; as flexibility drops
toward 0 the weight freezes once it has drifted away from its initial value.
The drift that matters, delta_w, is the difference between the weight's value
at the start of the current item phase and its value at initialization; it is
held constant within a phase and refreshed only at phase boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Union

import numpy as np

from .errors import ConfigurationError, NumericalFault

DEFAULT_FLEXIBILITY_FLOOR = 1e-12


@dataclass(frozen=True)
class Flexibility:
    """A per-synapse flexibility value, validated to [0, 1]."""

    value: float

    def __post_init__(self):
        if not (0.0 <= self.value <= 1.0) or not math.isfinite(self.value):
            raise ConfigurationError(f"flexibility must be in [0, 1], got {self.value}")


@dataclass(frozen=True)
class SynapseState:
    """Scalar synapse: current weight, phase-start snapshot, and fixed flexibility.

    `initial_weight` is the value at network initialization; delta_w for the
    current phase is reference_weight - initial_weight.
    """

    weight: float
    reference_weight: float
    flexibility: Flexibility
    initial_weight: float

    @classmethod
    def fresh(cls, weight: float, flexibility: Flexibility) -> "SynapseState":
        return cls(weight=weight, reference_weight=weight,
                   flexibility=flexibility, initial_weight=weight)

    @property
    def delta_w(self) -> float:
        return self.reference_weight - self.initial_weight


@dataclass(frozen=True)
class RuleConfig:
    """Hyperparameters of the update rule.

    alpha scales the width of the suppression curve; eta is the base learning
    rate; flexibility_floor clamps the denominator of (1 - f) / f.
    """

    alpha: float = 1.0
    eta: float = 0.01
    flexibility_floor: float = DEFAULT_FLEXIBILITY_FLOOR

    def __post_init__(self):
        if self.alpha <= 0:
            raise ConfigurationError(f"alpha must be positive, got {self.alpha}")
        if self.eta <= 0:
            raise ConfigurationError(f"eta must be positive, got {self.eta}")
        if not (0 < self.flexibility_floor < 1e-2):
            raise ConfigurationError(
                f"flexibility_floor must be a small positive value, got {self.flexibility_floor}")


# --- flexibility profiles ---------------------------------------------------


@dataclass(frozen=True)
class Constant:
    """Every synapse gets the same flexibility; Constant(1.0) is the
    conventional model, Constant(0.3) the stable model."""

    value: float
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.value <= 1.0):
            raise ConfigurationError(f"constant flexibility must be in [0, 1], got {self.value}")

    def _sample(self, count: int, _rng) -> np.ndarray:
        return np.full(count, self.value, dtype=np.float64)


@dataclass(frozen=True)
class Uniform:
    """Flexibility sampled uniformly from [lo, hi]; Uniform(0, 1) is the
    hybrid model."""

    lo: float = 0.0
    hi: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.lo <= self.hi <= 1.0):
            raise ConfigurationError(f"uniform bounds invalid: lo={self.lo}, hi={self.hi}")

    def _sample(self, count: int, rng) -> np.ndarray:
        return self.lo + (self.hi - self.lo) * rng.random(count)


@dataclass(frozen=True)
class Biased:
    """Uniform draw raised to a power: shape > 1 biases mass toward the
    stable end (0), shape < 1 toward the unstable end (1)."""

    shape: float
    seed: int = 0

    def __post_init__(self):
        if not (self.shape > 0 and math.isfinite(self.shape)):
            raise ConfigurationError(f"bias shape must be positive, got {self.shape}")

    def _sample(self, count: int, rng) -> np.ndarray:
        return rng.random(count) ** self.shape


FlexibilityProfile = Union[Constant, Uniform, Biased]


def sample_values(profile: FlexibilityProfile, count: int) -> np.ndarray:
    """Sample `count` flexibility values as a float array, deterministic in
    profile.seed."""
    if count < 0:
        raise ConfigurationError(f"count must be >= 0, got {count}")
    rng = np.random.default_rng(profile.seed)
    values = profile._sample(count, rng)
    return np.asarray(values, dtype=np.float64)


def sample_profile(profile: FlexibilityProfile, count: int) -> list[Flexibility]:
    """Same draw as sample_values, wrapped in validated Flexibility objects."""
    return [Flexibility(float(v)) for v in sample_values(profile, count)]


# --- the rule ----------------------------------------------------------------


def scale(flexibility, delta_w, alpha, floor=DEFAULT_FLEXIBILITY_FLOOR):
    """Learning-rate scale in [0, 1]: 1 - tanh^2(alpha * (1-f)/max(f, floor) * delta_w).

    Works elementwise on arrays. At flexibility 1 the ratio is exactly 0 and
    the scale is exactly 1 for any delta_w; at flexibility 0 the clamped ratio
    saturates tanh, giving the limit behavior (1 if delta_w == 0 else 0).
    """
    f = np.asarray(flexibility, dtype=np.float64)
    ratio = (1.0 - f) / np.maximum(f, floor)
    s = 1.0 - np.tanh(alpha * ratio * np.asarray(delta_w, dtype=np.float64)) ** 2
    if s.ndim == 0:
        return float(s)
    return s


def metaplastic_step(state: SynapseState, gradient: float, config: RuleConfig) -> SynapseState:
    """One gradient-descent step with the flexibility-scaled learning rate.

    delta_w comes from the phase-start snapshot and stays fixed; the
    reference weight is not touched here.
    """
    if not math.isfinite(gradient):
        raise NumericalFault(f"non-finite gradient: {gradient}")
    s = scale(state.flexibility.value, state.delta_w, config.alpha, config.flexibility_floor)
    return replace(state, weight=state.weight - (s * config.eta) * gradient)


def refresh_reference(state: SynapseState, initial_weight: float) -> SynapseState:
    """Phase-boundary bookkeeping: snapshot the current weight as the
    reference for the upcoming phase, so delta_w = current - initial."""
    return replace(state, reference_weight=state.weight, initial_weight=initial_weight)
