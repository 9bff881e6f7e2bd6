"""The analyzer: unseals shuffled values, de-biases per-dimension means,
and applies the model update.

The analyzer works purely from the delivered view of a batch (coordinate
ids plus sealed payloads); it has no access to origin or sender metadata,
which the shuffler strips before delivery.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import IO

import numpy as np

from .core import (
    GlobalModel,
    InvalidInputError,
    ProtocolConfig,
    ProtocolViolationError,
    SecretKey,
    denormalize,
    unseal,
)
from .randomizers import BlanketSpec, Randomizer, debias_mean, make_randomizer
from .shuffler import ShuffledBatch

__all__ = [
    "RoundEstimate",
    "aggregate",
    "update_model",
    "write_round_diagnostics",
]


@dataclass(frozen=True)
class RoundEstimate:
    """Per-dimension mean estimate for one round.

    ``zbar`` is the de-biased estimate in normalized space, ``z`` its
    gradient-unit counterpart C*(2*zbar - 1) clamped to [-C, C].
    ``received`` and ``n_real_assumed`` are the diagnostics the estimate
    was computed from.
    """

    zbar: np.ndarray
    z: np.ndarray
    received: np.ndarray
    n_real_assumed: float


def aggregate(
    batch: ShuffledBatch,
    cfg: ProtocolConfig,
    blanket: BlanketSpec,
    key: SecretKey,
    randomizer: Randomizer | None = None,
) -> RoundEstimate:
    """Unseal a shuffled batch and estimate the per-dimension mean update.

    Every dimension must hold exactly n_p values for the padded protocols
    (n for "simple"); a count mismatch is a protocol violation and an
    unseal failure aborts the round. The assumed real-report count is
    n*beta for the subsampled protocols (the expected number of true
    values landing on each dimension) and n for "simple"; for "topk" this
    assumption is magnitude-dependent and the received counts are exposed
    for diagnosis.
    """
    if randomizer is None:
        randomizer = make_randomizer(cfg.randomizer, cfg.per_dim_eps, cfg.b)

    expected = cfg.n_p if cfg.padded else cfg.n
    bad = np.flatnonzero(batch.per_dim_count != expected)
    if bad.size:
        j = int(bad[0])
        raise ProtocolViolationError(
            f"dimension {j} received {int(batch.per_dim_count[j])} values, "
            f"expected {expected}"
        )

    sums = np.zeros(cfg.d, dtype=np.float64)
    for record in batch.messages:
        values = randomizer.to_unit(unseal(record.payload, key))
        np.add.at(sums, record.indexes, values)

    n_real = cfg.n * cfg.beta if cfg.padded else float(cfg.n)
    zbar = debias_mean(sums, float(expected), n_real, blanket)
    z = np.clip(denormalize(zbar, cfg.clip), -cfg.clip, cfg.clip)
    return RoundEstimate(
        zbar=zbar, z=z, received=batch.per_dim_count.copy(), n_real_assumed=n_real
    )


def update_model(model: GlobalModel, estimate: RoundEstimate) -> GlobalModel:
    """Apply the round's mean update: theta + z, round counter + 1."""
    if estimate.z.shape != model.theta.shape:
        raise InvalidInputError(
            f"update has dimension {estimate.z.shape[0]}, model has {model.d}"
        )
    return GlobalModel(theta=model.theta + estimate.z, round=model.round + 1)


def write_round_diagnostics(
    fh: IO[str], round_index: int, estimate: RoundEstimate, header: bool = False
) -> None:
    """Append one CSV row per dimension: round, dimension, received count,
    zbar, z."""
    writer = csv.writer(fh)
    if header:
        writer.writerow(["round", "dimension", "received", "zbar", "z"])
    for j in range(estimate.z.shape[0]):
        writer.writerow(
            [
                round_index,
                j,
                int(estimate.received[j]),
                repr(float(estimate.zbar[j])),
                repr(float(estimate.z[j])),
            ]
        )
