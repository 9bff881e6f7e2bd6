"""Local randomizers, their blanket distributions, and the de-bias estimator.

Each randomizer perturbs a value from the unit interval into a transmitted
domain (integers {0..b} for the discrete mechanism, unbounded reals for
Laplace). A :class:`BlanketSpec` describes the input-independent component
of the output distribution: the shuffler draws dummy values from it, and
the analyzer inverts its contribution when estimating means.

All samplers take an explicit ``numpy.random.Generator`` and are pure,
so callers may parallelize across users with independent streams spawned
from the run seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Protocol

import numpy as np

from .core import ContractViolationError, InvalidInputError

__all__ = [
    "BlanketSpec",
    "DegenerateEstimatorError",
    "IdentityRandomizer",
    "KrrRandomizer",
    "LaplaceRandomizer",
    "Randomizer",
    "debias_mean",
    "gaussian_noise",
    "gaussian_sigma",
    "krr_blanket",
    "krr_gamma",
    "krr_randomize",
    "laplace_blanket",
    "laplace_gamma",
    "laplace_randomize",
    "make_randomizer",
]


class DegenerateEstimatorError(ValueError):
    """The de-bias estimator has no probability mass left on real reports."""


@dataclass(frozen=True)
class BlanketSpec:
    """Input-independent ("blanket") component of a randomizer's output.

    Attributes:
        gamma: probability that a single real report is replaced by a
            blanket draw. This is the estimator's mixing weight; it is zero
            for purely additive mechanisms, whose every report carries the
            signal.
        blanket_mean: mean of one blanket draw after mapping to the unit
            interval.
        sample: draws values in the transmitted domain, suitable for dummy
            padding; called as ``sample(size, rng)``.
    """

    gamma: float
    blanket_mean: float
    sample: Callable[[int, np.random.Generator], np.ndarray]

    def __post_init__(self) -> None:
        if not 0.0 <= self.gamma <= 1.0:
            raise InvalidInputError(f"gamma must lie in [0, 1], got {self.gamma}")
        if not 0.0 <= self.blanket_mean <= 1.0:
            raise InvalidInputError(
                f"blanket_mean must lie in [0, 1], got {self.blanket_mean}"
            )


# ---------------------------------------------------------------------------
# Discrete randomizer on {0..b}
# ---------------------------------------------------------------------------


def krr_gamma(eps: float, b: int) -> float:
    """Blanket probability b / (e^eps + b - 1) of the discrete randomizer."""
    if not eps > 0:
        raise InvalidInputError(f"eps must be positive, got {eps}")
    if b < 2:
        raise InvalidInputError(f"b must be >= 2, got {b}")
    return b / (math.exp(eps) + b - 1)


def krr_randomize(
    x: np.ndarray, eps: float, b: int, rng: np.random.Generator
) -> np.ndarray:
    """Discretize and randomize unit-interval values.

    With probability 1 - gamma the output is the stochastic rounding
    floor(x*b) + Ber(x*b - floor(x*b)), whose mean is exactly x*b; with
    probability gamma it is a uniform draw from {1..b}. The output support
    is {0..b}.
    """
    gamma = krr_gamma(eps, b)
    x = np.asarray(x, dtype=np.float64)
    if np.any((x < 0.0) | (x > 1.0)):
        raise ContractViolationError("inputs must lie in [0, 1]")
    scaled = x * b
    low = np.floor(scaled)
    rounded = low + (rng.random(x.shape) < scaled - low)
    blanket = rng.integers(1, b + 1, size=x.shape)
    keep = rng.random(x.shape) >= gamma
    return np.where(keep, rounded, blanket).astype(np.int64)


def krr_blanket(eps: float, b: int) -> BlanketSpec:
    """Blanket of the discrete randomizer: Unif{1..b}, unit-mean (b+1)/(2b)."""
    if b < 1:
        raise InvalidInputError(f"b must be >= 1, got {b}")
    gamma = krr_gamma(eps, b) if b >= 2 else 1.0
    return BlanketSpec(
        gamma=gamma,
        blanket_mean=(b + 1) / (2.0 * b),
        sample=lambda size, rng: rng.integers(1, b + 1, size=size).astype(np.float64),
    )


# ---------------------------------------------------------------------------
# Laplace randomizer on [0, 1]
# ---------------------------------------------------------------------------


def laplace_randomize(x: np.ndarray, eps: float, rng: np.random.Generator) -> np.ndarray:
    """Add Laplace noise of scale 1/eps (sensitivity 1 on the unit interval).

    The output is unbounded and transmitted unclamped; the analyzer only
    clamps the final denormalized model delta.
    """
    if not eps > 0:
        raise InvalidInputError(f"eps must be positive, got {eps}")
    x = np.asarray(x, dtype=np.float64)
    return x + rng.laplace(0.0, 1.0 / eps, size=x.shape)


def laplace_gamma(eps: float) -> float:
    """Blanket probability mass e^(-eps/2) of the unit-interval Laplace
    mechanism, used by amplification accounting."""
    if not eps > 0:
        raise InvalidInputError(f"eps must be positive, got {eps}")
    return math.exp(-eps / 2.0)


def laplace_blanket(eps: float) -> BlanketSpec:
    """Dummy-value distribution for the Laplace randomizer.

    Dummies are drawn as laplace_randomize(u, eps) with u ~ Unif[0, 1], a
    symmetric stand-in for the exact common part of the mechanism's output
    mixture (mean 1/2 either way). The estimator's mixing weight is zero
    because the additive mechanism delivers the signal in every real
    report; the analytical blanket mass e^(-eps/2) matters only to the
    accountant and is exposed as :func:`laplace_gamma`.
    """
    if not eps > 0:
        raise InvalidInputError(f"eps must be positive, got {eps}")
    return BlanketSpec(
        gamma=0.0,
        blanket_mean=0.5,
        sample=lambda size, rng: rng.uniform(0.0, 1.0, size=size)
        + rng.laplace(0.0, 1.0 / eps, size=size),
    )


# ---------------------------------------------------------------------------
# Gaussian noise (curator-model baseline)
# ---------------------------------------------------------------------------


def gaussian_sigma(eps: float, delta: float, l2_sensitivity: float) -> float:
    """Gaussian-mechanism scale (sensitivity / eps) * sqrt(2 ln(1.25/delta))."""
    if not eps > 0:
        raise InvalidInputError(f"eps must be positive, got {eps}")
    if not 0.0 < delta < 1.0:
        raise InvalidInputError(f"delta must lie in (0, 1), got {delta}")
    if not l2_sensitivity > 0:
        raise InvalidInputError("sensitivity must be positive")
    return (l2_sensitivity / eps) * math.sqrt(2.0 * math.log(1.25 / delta))


def gaussian_noise(sigma: float, dims: int, rng: np.random.Generator) -> np.ndarray:
    """An i.i.d. zero-mean Gaussian vector with per-coordinate sd sigma."""
    if not sigma > 0:
        raise InvalidInputError(f"sigma must be positive, got {sigma}")
    return rng.normal(0.0, sigma, size=dims)


# ---------------------------------------------------------------------------
# De-bias estimator
# ---------------------------------------------------------------------------


def debias_mean(
    total: np.ndarray | float,
    n_received: float,
    n_real: float,
    blanket: BlanketSpec,
) -> np.ndarray | float:
    """Invert the blanket mixture to estimate the mean of the real inputs.

    Args:
        total: sum of all received values for one dimension, already mapped
            to the unit interval (arrays are handled per dimension).
        n_received: how many values the dimension received in total
            (real reports plus decoys plus dummies).
        n_real: assumed number of real reports among them.
        blanket: blanket of the randomizer that produced the reports.

    Returns:
        (total - (n_received - n_real*(1-gamma)) * blanket_mean)
        / (n_real * (1-gamma)), which is unbiased for the true mean: each
        real report carries the signal with weight (1-gamma), and every
        other contribution has mean blanket_mean.
    """
    effective = n_real * (1.0 - blanket.gamma)
    if effective <= 0:
        raise DegenerateEstimatorError(
            "no estimator mass on real reports "
            f"(n_real={n_real}, gamma={blanket.gamma})"
        )
    total = np.asarray(total, dtype=np.float64)
    estimate = (total - (n_received - effective) * blanket.blanket_mean) / effective
    return float(estimate) if estimate.ndim == 0 else estimate


# ---------------------------------------------------------------------------
# Randomizer strategies used by the protocol pipeline
# ---------------------------------------------------------------------------


class Randomizer(Protocol):
    """Strategy interface tying a mechanism to its transmitted domain."""

    def randomize(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Perturb unit-interval values into the transmitted domain."""
        ...

    def to_unit(self, y: np.ndarray) -> np.ndarray:
        """Map transmitted values back onto the unit-interval scale."""
        ...

    def blanket(self) -> BlanketSpec:
        """Blanket used for decoys, dummy padding and de-biasing."""
        ...


@dataclass(frozen=True)
class KrrRandomizer:
    """Discrete randomizer transmitting integers in {0..b}."""

    eps: float
    b: int = 2

    def randomize(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return krr_randomize(x, self.eps, self.b, rng).astype(np.float64)

    def to_unit(self, y: np.ndarray) -> np.ndarray:
        return np.asarray(y, dtype=np.float64) / self.b

    def blanket(self) -> BlanketSpec:
        return krr_blanket(self.eps, self.b)


@dataclass(frozen=True)
class LaplaceRandomizer:
    """Additive Laplace randomizer transmitting unclamped reals."""

    eps: float

    def randomize(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return laplace_randomize(x, self.eps, rng)

    def to_unit(self, y: np.ndarray) -> np.ndarray:
        return np.asarray(y, dtype=np.float64)

    def blanket(self) -> BlanketSpec:
        return laplace_blanket(self.eps)


@dataclass(frozen=True)
class IdentityRandomizer:
    """Pass-through used by the non-private pipeline identity."""

    def randomize(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return np.asarray(x, dtype=np.float64)

    def to_unit(self, y: np.ndarray) -> np.ndarray:
        return np.asarray(y, dtype=np.float64)

    def blanket(self) -> BlanketSpec:
        return BlanketSpec(
            gamma=0.0,
            blanket_mean=0.5,
            sample=lambda size, rng: rng.uniform(0.0, 1.0, size=size),
        )


def make_randomizer(kind: str, eps: float = 1.0, b: int = 2) -> Randomizer:
    """Build the randomizer strategy named by a config string."""
    if kind == "krr":
        return KrrRandomizer(eps=eps, b=b)
    if kind == "laplace":
        return LaplaceRandomizer(eps=eps)
    if kind == "none":
        return IdentityRandomizer()
    raise InvalidInputError(f"unknown randomizer kind {kind!r}")
