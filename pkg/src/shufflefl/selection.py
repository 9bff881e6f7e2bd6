"""Dimension selection: uniform subsampling, magnitude-based top-k with
decoy reports, and the index-privacy calculus relating the report
multiplier l to the privacy level nu.

A user reporting l*k coordinate ids of which only k are real limits an
observer's posterior that a reported id is a true top-k coordinate to
1/l, against the prior beta = k/d. The level nu bounds how much observing
a report may inflate that posterior over the prior; nu = 1 is strongest
(the report reveals nothing) and nu = 1/beta means no protection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ConfigurationError, ContractViolationError, InvalidInputError
from .randomizers import Randomizer

__all__ = [
    "SelectionResult",
    "max_index_privacy",
    "min_valid_l",
    "random_subsample",
    "topk_select",
    "valid_l_range",
]


@dataclass(frozen=True)
class SelectionResult:
    """Coordinates selected by one user, ready to seal.

    ``indexes`` and ``values`` are parallel arrays of length l*k in the
    randomizer's transmitted domain, already jointly permuted so position
    reveals nothing. ``real_mask`` flags which entries carry a perturbed
    true value rather than a blanket decoy; it is simulation metadata only
    and never leaves the user in a message.
    """

    indexes: np.ndarray
    values: np.ndarray
    real_mask: np.ndarray


def random_subsample(d: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """Sample k distinct coordinate ids uniformly from [0, d)."""
    if not 1 <= k <= d:
        raise InvalidInputError(f"need 1 <= k <= d, got k={k}, d={d}")
    return rng.choice(d, size=k, replace=False)


def _ceil_tol(x: float, tol: float = 1e-9) -> int:
    return int(math.ceil(x - tol))


def _floor_tol(x: float, tol: float = 1e-9) -> int:
    return int(math.floor(x + tol))


def valid_l_range(nu: float, beta: float) -> tuple[int, int]:
    """Admissible report multipliers [l_min, l_max] for an index-privacy
    level nu at sampling rate beta.

    The observer's posterior 1/l must satisfy both
    1/l <= nu*beta and 1/l <= (nu - 1 + beta)/nu, giving
    l >= max(1/(nu*beta), nu/(nu - 1 + beta)); the largest useful value is
    ceil(1/beta), at which the posterior equals the prior (nu = 1).
    At nu >= 1/beta the posterior cap nu*beta reaches 1, no constraint
    remains, and every l >= 1 qualifies (l = 1 is the no-protection
    extreme).
    """
    if nu < 1:
        raise InvalidInputError(f"nu must be >= 1, got {nu}")
    if not 0 < beta <= 1:
        raise InvalidInputError(f"beta must lie in (0, 1], got {beta}")
    upper = _ceil_tol(1.0 / beta)
    if nu * beta >= 1.0 - 1e-12:
        return 1, upper
    lower = _ceil_tol(max(1.0 / (nu * beta), nu / (nu - 1.0 + beta)))
    if lower > upper:
        raise ConfigurationError(
            f"no admissible l for nu={nu}, beta={beta} (empty interval)"
        )
    return lower, upper


def min_valid_l(nu: float, beta: float) -> int:
    """Smallest admissible report multiplier for (nu, beta)."""
    return valid_l_range(nu, beta)[0]


def max_index_privacy(n_p: int, n: int, beta: float) -> float:
    """Strongest index-privacy level a padding target n_p allows.

    The padded per-dimension count n_p supports at most
    floor(n_p / (n*beta)) reports per real coordinate, hence
    nu = max(1, 1 / (floor(n_p/(n*beta)) * beta)).
    """
    if n_p < 1 or n < 1:
        raise InvalidInputError("n_p and n must be positive")
    if not 0 < beta <= 1:
        raise InvalidInputError(f"beta must lie in (0, 1], got {beta}")
    supported_l = _floor_tol(n_p / (n * beta))
    if supported_l < 1:
        raise ConfigurationError(
            f"n_p={n_p} cannot absorb even the real reports (n*beta={n * beta:g})"
        )
    return max(1.0, 1.0 / (supported_l * beta))


def _ranked_by_magnitude(x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Coordinate ids sorted by decreasing |x - 0.5|, ties uniform at random.

    0.5 encodes a zero gradient in normalized space, so |x - 0.5| is the
    coordinate's magnitude. Ranking the randomly permuted vector with a
    stable sort makes every ordering of tied coordinates equally likely.
    """
    perm = rng.permutation(x.shape[0])
    magnitude = np.abs(x[perm] - 0.5)
    return perm[np.argsort(-magnitude, kind="stable")]


def topk_select(
    x: np.ndarray,
    k: int,
    l: int,
    randomizer: Randomizer,
    rng: np.random.Generator,
) -> SelectionResult:
    """Select the k largest-magnitude coordinates and hide them among
    k*(l-1) decoys.

    The k top coordinates (by |x - 0.5|, ties broken uniformly) carry
    randomized true values; the decoys are drawn uniformly without
    replacement from the remaining coordinates and carry blanket draws.
    All l*k (id, value) pairs are jointly permuted before return, so their
    order within the report is uninformative.
    """
    x = np.asarray(x, dtype=np.float64)
    d = x.shape[0]
    if np.any((x < 0.0) | (x > 1.0)):
        raise ContractViolationError("inputs must lie in [0, 1]")
    if l < 1:
        raise InvalidInputError(f"l must be >= 1, got {l}")
    if not 1 <= k <= d or k * l > d:
        raise InvalidInputError(f"need k*l <= d, got k={k}, l={l}, d={d}")

    ranked = _ranked_by_magnitude(x, rng)
    top = ranked[:k]
    n_decoys = k * (l - 1)
    if n_decoys == 0:
        decoys = np.empty(0, dtype=np.int64)
    elif n_decoys == d - k:
        decoys = ranked[k:]
    else:
        decoys = rng.choice(ranked[k:], size=n_decoys, replace=False)

    blanket = randomizer.blanket()
    indexes = np.concatenate([top, decoys])
    values = np.concatenate(
        [
            np.asarray(randomizer.randomize(x[top], rng), dtype=np.float64),
            blanket.sample(n_decoys, rng),
        ]
    )
    real = np.zeros(k * l, dtype=bool)
    real[:k] = True

    shuffle = rng.permutation(k * l)
    return SelectionResult(
        indexes=indexes[shuffle], values=values[shuffle], real_mask=real[shuffle]
    )
