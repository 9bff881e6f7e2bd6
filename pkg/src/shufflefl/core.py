"""Shared domain types and value-level transforms.

Everything in this module is an immutable value: privacy guarantees,
protocol configuration, the global model, the message record handled by
the shuffler, and the sealed envelope that stands in for public-key
encryption between users and the analyzer. Operations are pure functions,
so values can be moved freely between threads.
"""

from __future__ import annotations

import math
import secrets
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "AuthorizationError",
    "ConfigurationError",
    "ContractViolationError",
    "EncodedMessage",
    "GlobalModel",
    "InvalidInputError",
    "PrivacyParams",
    "ProtocolConfig",
    "ProtocolViolationError",
    "PublicKey",
    "SealedPayload",
    "SecretKey",
    "clip_linf",
    "denormalize",
    "new_keypair",
    "normalize",
    "register_scheme",
    "seal",
    "unseal",
    "PROTOCOLS",
    "RANDOMIZERS",
]


class InvalidInputError(ValueError):
    """An argument violates a documented precondition."""


class ContractViolationError(ValueError):
    """A value reached an operation whose contract does not admit it."""


class ConfigurationError(ValueError):
    """A protocol configuration is internally inconsistent or infeasible."""


class AuthorizationError(PermissionError):
    """A sealed payload was opened with the wrong credentials."""


class ProtocolViolationError(RuntimeError):
    """A message batch does not satisfy the protocol's structural rules."""


PROTOCOLS = ("simple", "double", "topk")
RANDOMIZERS = ("krr", "laplace", "none")


@dataclass(frozen=True)
class PrivacyParams:
    """An (epsilon, delta) differential-privacy guarantee, epsilon in nats."""

    epsilon: float
    delta: float = 0.0

    def __post_init__(self) -> None:
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise InvalidInputError(
                f"epsilon must be positive and finite, got {self.epsilon}"
            )
        if not 0.0 <= self.delta < 1.0:
            raise InvalidInputError(f"delta must lie in [0, 1), got {self.delta}")


def _ceil_tol(x: float, tol: float = 1e-9) -> int:
    """Ceiling that forgives floating-point overshoot just below an integer."""
    return int(math.ceil(x - tol))


@dataclass(frozen=True)
class ProtocolConfig:
    """Knobs of one shuffle-model aggregation protocol.

    Attributes:
        protocol: "simple" (every coordinate randomized, plain shuffle),
            "double" (uniform subsample of k coordinates plus dummy padding)
            or "topk" (magnitude-based selection with decoy reports).
        d: model dimension.
        n: users participating per round.
        k: coordinates each user actually perturbs (k = d for "simple").
        eps_l: local privacy budget for the whole vector, nats. The budget
            for each perturbed coordinate is eps_l / k.
        clip: per-coordinate clip bound C; updates live in [-C, C].
        b: granularity of the discrete randomizer (values land in {0..b}).
        n_p: padded per-dimension report count for "double"/"topk".
        l: report multiplier for "topk"; each user sends l messages of k
            coordinates, only k of which are real.
        nu: requested index-privacy level (>= 1; 1 is strongest).
        randomizer: "krr", "laplace", or "none" (pass-through, used by the
            non-private pipeline identity).
        rounds: number of aggregation rounds to run.
        seed: RNG seed for the whole run.
    """

    protocol: str
    d: int
    n: int
    k: int
    eps_l: float
    clip: float = 1.0
    b: int = 2
    n_p: int = 1
    l: int = 1
    nu: float = 1.0
    randomizer: str = "krr"
    rounds: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.protocol not in PROTOCOLS:
            raise ConfigurationError(f"unknown protocol {self.protocol!r}")
        if self.randomizer not in RANDOMIZERS:
            raise ConfigurationError(f"unknown randomizer {self.randomizer!r}")
        if self.d < 1 or self.n < 1 or self.rounds < 1:
            raise ConfigurationError("d, n and rounds must be positive")
        if not 1 <= self.k <= self.d:
            raise ConfigurationError(f"k must lie in [1, d], got k={self.k}, d={self.d}")
        if self.clip <= 0:
            raise ConfigurationError(f"clip bound must be positive, got {self.clip}")
        if self.randomizer == "krr" and self.b < 2:
            raise ConfigurationError(f"discretization b must be >= 2, got {self.b}")
        if self.randomizer != "none" and not self.eps_l > 0:
            raise ConfigurationError(f"eps_l must be positive, got {self.eps_l}")
        if self.n_p < 1:
            raise ConfigurationError(f"n_p must be >= 1, got {self.n_p}")
        if not 1 <= self.l <= _ceil_tol(1.0 / self.beta):
            raise ConfigurationError(
                f"l must lie in [1, ceil(1/beta)], got l={self.l}, beta={self.beta}"
            )
        if self.k * self.l > self.d:
            raise ConfigurationError(
                f"k*l must not exceed d, got {self.k}*{self.l} > {self.d}"
            )
        if self.protocol == "simple" and (self.k != self.d or self.l != 1):
            raise ConfigurationError("'simple' requires k = d and l = 1")
        if self.protocol == "double" and self.l != 1:
            raise ConfigurationError("'double' requires l = 1")
        if self.nu < 1:
            raise ConfigurationError(f"nu must be >= 1, got {self.nu}")

    @property
    def beta(self) -> float:
        """Coordinate sampling rate k/d."""
        return self.k / self.d

    @property
    def per_dim_eps(self) -> float:
        """Local budget per perturbed coordinate, eps_l / k."""
        return self.eps_l / self.k

    @property
    def padded(self) -> bool:
        """Whether the shuffler pads every dimension to n_p values."""
        return self.protocol in ("double", "topk")


@dataclass(frozen=True)
class GlobalModel:
    """The d-dimensional parameter vector together with its round counter."""

    theta: np.ndarray
    round: int = 0

    def __post_init__(self) -> None:
        theta = np.asarray(self.theta, dtype=np.float64)
        if theta.ndim != 1:
            raise InvalidInputError("model parameters must be a flat vector")
        if not np.all(np.isfinite(theta)):
            raise InvalidInputError("model parameters must be finite")
        if self.round < 0:
            raise InvalidInputError("round counter must be non-negative")
        object.__setattr__(self, "theta", theta)

    @property
    def d(self) -> int:
        return self.theta.shape[0]


# ---------------------------------------------------------------------------
# Clipping and normalization
# ---------------------------------------------------------------------------


def clip_linf(x: np.ndarray, bound: float) -> np.ndarray:
    """Clamp every coordinate of ``x`` into [-bound, bound].

    Coordinates already inside the interval are returned unchanged;
    non-finite coordinates are rejected.
    """
    if not bound > 0:
        raise InvalidInputError(f"clip bound must be positive, got {bound}")
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("cannot clip non-finite values")
    return np.clip(x, -bound, bound)


def normalize(x: np.ndarray, bound: float) -> np.ndarray:
    """Map a clipped vector from [-bound, bound] onto the unit interval.

    Applies (x + bound) / (2 * bound) coordinate-wise. Raises if any
    coordinate lies outside [-bound, bound]; clip first.
    """
    if not bound > 0:
        raise InvalidInputError(f"clip bound must be positive, got {bound}")
    x = np.asarray(x, dtype=np.float64)
    if np.any(np.abs(x) > bound):
        raise ContractViolationError(
            f"normalize requires values in [-{bound}, {bound}]"
        )
    return (x + bound) / (2.0 * bound)


def denormalize(z: np.ndarray, bound: float) -> np.ndarray:
    """Inverse of :func:`normalize`: bound * (2 * z - 1).

    Inputs outside [0, 1] are mapped linearly; noisy mean estimates are
    legal arguments.
    """
    if not bound > 0:
        raise InvalidInputError(f"clip bound must be positive, got {bound}")
    return bound * (2.0 * np.asarray(z, dtype=np.float64) - 1.0)


# ---------------------------------------------------------------------------
# Sealed envelope
# ---------------------------------------------------------------------------
#
# The default "passthrough" scheme is a tagged container with no actual
# cipher: the privacy analysis never depends on the cipher strength, only
# on who holds the unseal capability. A real scheme can be registered via
# register_scheme(); payloads carry the scheme tag so mixed batches fail
# loudly.


@dataclass(frozen=True)
class SealedPayload:
    """Opaque byte sequence holding a sealed list of values."""

    scheme: str
    key_id: str
    blob: bytes


@dataclass(frozen=True)
class PublicKey:
    """Sealing capability. Safe to hand to every party."""

    scheme: str
    key_id: str


@dataclass(frozen=True)
class SecretKey:
    """Unsealing capability. Held by the analyzer only."""

    scheme: str
    key_id: str
    token: str


_SCHEMES: dict[str, tuple[Callable[[np.ndarray], bytes], Callable[[bytes], np.ndarray]]] = {
    "passthrough": (
        lambda values: values.astype("<f8").tobytes(),
        lambda blob: np.frombuffer(blob, dtype="<f8").copy(),
    )
}


def register_scheme(
    name: str,
    encode: Callable[[np.ndarray], bytes],
    decode: Callable[[bytes], np.ndarray],
) -> None:
    """Register an alternative sealing scheme (e.g. a real cipher)."""
    _SCHEMES[name] = (encode, decode)


def new_keypair(scheme: str = "passthrough") -> tuple[PublicKey, SecretKey]:
    """Create a fresh (public, secret) capability pair for ``scheme``."""
    if scheme not in _SCHEMES:
        raise ConfigurationError(f"unknown sealing scheme {scheme!r}")
    key_id = secrets.token_hex(8)
    return PublicKey(scheme, key_id), SecretKey(scheme, key_id, secrets.token_hex(16))


def seal(values: np.ndarray, key: PublicKey) -> SealedPayload:
    """Seal a list of values under the analyzer's public key."""
    if key.scheme not in _SCHEMES:
        raise ConfigurationError(f"unknown sealing scheme {key.scheme!r}")
    encode, _ = _SCHEMES[key.scheme]
    values = np.atleast_1d(np.asarray(values, dtype=np.float64))
    return SealedPayload(key.scheme, key.key_id, encode(values))


def unseal(payload: SealedPayload, key: SecretKey) -> np.ndarray:
    """Open a sealed payload. Raises AuthorizationError on a key mismatch."""
    if payload.scheme != key.scheme or payload.key_id != key.key_id:
        raise AuthorizationError(
            f"payload sealed for key {payload.key_id!r} cannot be opened with "
            f"key {key.key_id!r}"
        )
    _, decode = _SCHEMES[payload.scheme]
    return decode(payload.blob)


@dataclass(frozen=True)
class EncodedMessage:
    """One report as the shuffler sees it: plaintext coordinate ids plus
    sealed perturbed values.

    ``indexes`` holds distinct coordinate ids in [0, d); ``payload`` seals
    the parallel value list. ``origin`` and ``sender`` are simulation
    bookkeeping for audits and tests; both are stripped before delivery to
    the analyzer.
    """

    indexes: np.ndarray
    payload: SealedPayload
    origin: str = "user"
    sender: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "indexes", np.atleast_1d(np.asarray(self.indexes, dtype=np.int64))
        )
