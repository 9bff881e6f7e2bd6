"""Desk-scale federated training: protocol drivers for the shuffle-model
pipeline (encode, shuffle, analyze) and the non-private / curator-model /
local-model baselines.

Per-user work is expressed as vectorized batch operations over the n
users of a round; shuffling and aggregation are serial barriers. A single
seeded generator drives every draw, so (config, settings, seed) fully
determines the result.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field
from typing import IO

import numpy as np

from . import logreg
from .accountant import protocol_report
from .analyzer import RoundEstimate, aggregate, update_model
from .core import (
    ConfigurationError,
    EncodedMessage,
    GlobalModel,
    InvalidInputError,
    PrivacyParams,
    ProtocolConfig,
    PublicKey,
    SecretKey,
    clip_linf,
    new_keypair,
    normalize,
    seal,
)
from .datasets import Dataset
from .randomizers import Randomizer, gaussian_sigma, make_randomizer
from .shuffler import ShuffledBatch, pad_and_shuffle, shuffle_simple, validate_submissions

__all__ = [
    "BASELINES",
    "ExperimentResult",
    "TrainSettings",
    "encode_round",
    "result_output_dict",
    "run_baseline",
    "run_protocol",
    "run_protocol_round",
    "write_result_csv",
    "write_result_json",
]

BASELINES = ("npfl", "dpfl_gauss", "ldpfl_gauss", "ldpfl_lap")


@dataclass(frozen=True)
class TrainSettings:
    """Harness knobs on top of the protocol configuration.

    ``lr`` scales each user's negative shard gradient. An epoch is
    ceil(train_size / (n * shard_size)) rounds unless ``rounds_per_epoch``
    overrides it. ``delta_budget`` is the per-epoch delta handed to the
    accountant. ``l2_clip`` bounds update norms for the Gaussian baselines
    (defaults to the per-coordinate clip bound). ``label_skew`` in [0, 1]
    sorts that fraction of each epoch's samples by label before dealing
    shards, 0 being the IID default.
    """

    lr: float = 1.0
    epochs: int = 1
    shard_size: int = 1
    rounds_per_epoch: int | None = None
    delta_budget: float = 5e-6
    l2_clip: float | None = None
    label_skew: float = 0.0

    def __post_init__(self) -> None:
        if self.lr <= 0 or self.epochs < 1 or self.shard_size < 1:
            raise InvalidInputError("lr, epochs and shard_size must be positive")
        if self.rounds_per_epoch is not None and self.rounds_per_epoch < 1:
            raise InvalidInputError("rounds_per_epoch must be >= 1")
        if not 0.0 <= self.label_skew <= 1.0:
            raise InvalidInputError("label_skew must lie in [0, 1]")

    def resolve_rounds_per_epoch(self, train_size: int, n: int) -> int:
        if self.rounds_per_epoch is not None:
            return self.rounds_per_epoch
        return max(1, math.ceil(train_size / (n * self.shard_size)))


@dataclass(frozen=True)
class ExperimentResult:
    """Carrier for one training run's outputs.

    ``accuracies`` has one test-set entry per round. ``privacy_per_epoch``
    is the accountant's per-epoch central guarantee when one applies
    (None for the non-private run and for randomizers without a shipped
    closed form). ``config`` echoes every resolved knob so the run can be
    reproduced from the result alone.
    """

    kind: str
    accuracies: tuple[float, ...]
    final_accuracy: float
    privacy_per_epoch: PrivacyParams | None
    wall_clock: float
    config: dict
    seed: int


# ---------------------------------------------------------------------------
# Per-round encoding (vectorized across the n users)
# ---------------------------------------------------------------------------


def _ranked_rows(x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Row-wise coordinate ids by decreasing |x - 0.5|, ties uniform."""
    n, d = x.shape
    perm = rng.permuted(np.tile(np.arange(d), (n, 1)), axis=1)
    magnitude = np.take_along_axis(np.abs(x - 0.5), perm, axis=1)
    order = np.argsort(-magnitude, kind="stable", axis=1)
    return np.take_along_axis(perm, order, axis=1)


def encode_round(
    cfg: ProtocolConfig,
    updates: np.ndarray,
    randomizer: Randomizer,
    key: PublicKey,
    rng: np.random.Generator,
) -> tuple[list[EncodedMessage], np.ndarray]:
    """Encode one round of raw local updates into sealed messages.

    ``updates`` is the (n, d) matrix of gradient-unit local updates; each
    row is clipped, normalized, put through the protocol's selection and
    randomization, and sealed. Returns the messages plus the per-dimension
    count of real (non-decoy) values, which is simulation metadata used by
    audits and tests only.
    """
    n, d = updates.shape
    if n != cfg.n or d != cfg.d:
        raise InvalidInputError(
            f"updates have shape {updates.shape}, config expects ({cfg.n}, {cfg.d})"
        )
    x = normalize(clip_linf(updates, cfg.clip), cfg.clip)
    blanket = randomizer.blanket()
    messages: list[EncodedMessage] = []

    if cfg.protocol == "simple":
        values = randomizer.randomize(x, rng)
        all_idx = np.arange(d)
        for i in range(n):
            messages.append(
                EncodedMessage(all_idx, seal(values[i], key), sender=i)
            )
        real_counts = np.full(d, n, dtype=np.int64)
        return messages, real_counts

    if cfg.protocol == "double":
        keys = rng.random((n, d))
        idx = np.argpartition(keys, cfg.k - 1, axis=1)[:, : cfg.k]
        values = randomizer.randomize(np.take_along_axis(x, idx, axis=1), rng)
        for i in range(n):
            messages.append(EncodedMessage(idx[i], seal(values[i], key), sender=i))
        return messages, np.bincount(idx.ravel(), minlength=d)

    # topk: k true coordinates hidden among k*(l-1) blanket decoys,
    # jointly permuted and split into l messages of k entries.
    k, l = cfg.k, cfg.l
    ranked = _ranked_rows(x, rng)
    top = ranked[:, :k]
    n_decoys = k * (l - 1)
    if n_decoys == 0:
        idx = top
        values = randomizer.randomize(np.take_along_axis(x, top, axis=1), rng)
    else:
        rest = ranked[:, k:]
        if n_decoys == d - k:
            decoys = rest
        else:
            pick = np.argpartition(rng.random((n, d - k)), n_decoys - 1, axis=1)
            decoys = np.take_along_axis(rest, pick[:, :n_decoys], axis=1)
        idx = np.hstack([top, decoys])
        values = np.hstack(
            [
                randomizer.randomize(np.take_along_axis(x, top, axis=1), rng),
                blanket.sample((n, n_decoys), rng),
            ]
        )
        joint = rng.permuted(np.tile(np.arange(k * l), (n, 1)), axis=1)
        idx = np.take_along_axis(idx, joint, axis=1)
        values = np.take_along_axis(values, joint, axis=1)
    for i in range(n):
        for chunk in range(l):
            lo, hi = chunk * k, (chunk + 1) * k
            messages.append(
                EncodedMessage(idx[i, lo:hi], seal(values[i, lo:hi], key), sender=i)
            )
    return messages, np.bincount(top.ravel(), minlength=d)


def _shuffle_round(
    cfg: ProtocolConfig,
    messages: list[EncodedMessage],
    randomizer: Randomizer,
    key: PublicKey,
    rng: np.random.Generator,
) -> ShuffledBatch:
    if cfg.protocol == "simple":
        return shuffle_simple(messages, rng, d=cfg.d)
    validate_submissions(messages, cfg.n, cfg.l, cfg.k)
    return pad_and_shuffle(
        messages, cfg.d, cfg.n_p, cfg.k, randomizer.blanket(), key, rng
    )


def run_protocol_round(
    cfg: ProtocolConfig,
    model: GlobalModel,
    updates: np.ndarray,
    rng: np.random.Generator,
    keys: tuple[PublicKey, SecretKey],
    randomizer: Randomizer | None = None,
) -> tuple[GlobalModel, RoundEstimate, np.ndarray]:
    """Execute encode -> shuffle(/pad) -> aggregate -> update for one round.

    Returns the updated model, the round estimate, and the per-dimension
    real-report counts (simulation metadata).
    """
    if randomizer is None:
        randomizer = make_randomizer(cfg.randomizer, cfg.per_dim_eps, cfg.b)
    public, secret = keys
    messages, real_counts = encode_round(cfg, updates, randomizer, public, rng)
    batch = _shuffle_round(cfg, messages, randomizer, public, rng)
    estimate = aggregate(batch, cfg, randomizer.blanket(), secret, randomizer)
    return update_model(model, estimate), estimate, real_counts


# ---------------------------------------------------------------------------
# Training loops
# ---------------------------------------------------------------------------


def _epoch_order(
    train: Dataset, settings: TrainSettings, rng: np.random.Generator
) -> np.ndarray:
    order = rng.permutation(len(train))
    if settings.label_skew > 0.0:
        head = int(round(settings.label_skew * len(order)))
        skewed = order[:head]
        order[:head] = skewed[np.argsort(train.labels[skewed], kind="stable")]
    return order


def _round_shards(
    order: np.ndarray, round_index: int, n: int, shard_size: int
) -> np.ndarray:
    start = round_index * n * shard_size
    positions = np.arange(start, start + n * shard_size) % order.size
    return order[positions].reshape(n, shard_size)


def _local_updates(
    model: GlobalModel, train: Dataset, shards: np.ndarray, lr: float, classes: int
) -> np.ndarray:
    updates = np.empty((shards.shape[0], model.d))
    for i, shard in enumerate(shards):
        updates[i] = logreg.local_update(
            model, train.features[shard], train.labels[shard], classes, lr
        )
    return updates


def _epoch_privacy(
    cfg: ProtocolConfig, rounds_per_epoch: int, delta_budget: float
) -> PrivacyParams | None:
    if cfg.randomizer != "krr":
        return None
    return protocol_report(cfg, rounds_per_epoch, delta_budget).central


def run_protocol(
    cfg: ProtocolConfig,
    settings: TrainSettings,
    train: Dataset,
    test: Dataset,
    classes: int = 10,
) -> ExperimentResult:
    """Train by running the configured shuffle-model protocol every round."""
    started = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    keys = new_keypair()
    randomizer = make_randomizer(cfg.randomizer, cfg.per_dim_eps, cfg.b)
    model = logreg.init_model(train.n_features, classes)
    if model.d != cfg.d:
        raise ConfigurationError(
            f"config d={cfg.d} does not match model dimension {model.d}"
        )
    rounds_per_epoch = settings.resolve_rounds_per_epoch(len(train), cfg.n)

    accuracies = []
    for epoch in range(settings.epochs):
        order = _epoch_order(train, settings, rng)
        for r in range(rounds_per_epoch):
            shards = _round_shards(order, r, cfg.n, settings.shard_size)
            updates = _local_updates(model, train, shards, settings.lr, classes)
            model, _, _ = run_protocol_round(cfg, model, updates, rng, keys, randomizer)
            accuracies.append(
                logreg.accuracy(model.theta, test.features, test.labels, classes)
            )

    return ExperimentResult(
        kind=cfg.protocol,
        accuracies=tuple(accuracies),
        final_accuracy=accuracies[-1],
        privacy_per_epoch=_epoch_privacy(cfg, rounds_per_epoch, settings.delta_budget),
        wall_clock=time.perf_counter() - started,
        config=_echo_config(cfg.protocol, cfg, settings, None),
        seed=cfg.seed,
    )


def _l2_clip_rows(updates: np.ndarray, bound: float) -> np.ndarray:
    norms = np.linalg.norm(updates, axis=1, keepdims=True)
    return updates * np.minimum(1.0, bound / np.maximum(norms, 1e-300))


def run_baseline(
    kind: str,
    cfg: ProtocolConfig,
    settings: TrainSettings,
    train: Dataset,
    test: Dataset,
    budget: PrivacyParams | None = None,
    classes: int = 10,
) -> ExperimentResult:
    """Train one of the reference baselines.

    npfl averages raw updates. dpfl_gauss clips updates to an L2 bound and
    adds central Gaussian noise calibrated to a per-epoch ``budget`` split
    evenly across rounds (sensitivity 2*C2 under replacement). ldpfl_gauss
    adds the same-calibrated Gaussian per user; ldpfl_lap splits the
    per-round budget over coordinates, adding Laplace noise of scale
    d/eps on normalized values.
    """
    if kind not in BASELINES:
        raise InvalidInputError(f"unknown baseline {kind!r}")
    if kind != "npfl" and budget is None:
        raise InvalidInputError(f"baseline {kind!r} requires a privacy budget")
    started = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    model = logreg.init_model(train.n_features, classes)
    if model.d != cfg.d:
        raise ConfigurationError(
            f"config d={cfg.d} does not match model dimension {model.d}"
        )
    rounds_per_epoch = settings.resolve_rounds_per_epoch(len(train), cfg.n)
    l2_bound = settings.l2_clip if settings.l2_clip is not None else cfg.clip

    if kind == "npfl":
        eps_round = delta_round = None
    else:
        eps_round = budget.epsilon / rounds_per_epoch
        delta_round = budget.delta / rounds_per_epoch if budget.delta > 0 else None

    accuracies = []
    for epoch in range(settings.epochs):
        order = _epoch_order(train, settings, rng)
        for r in range(rounds_per_epoch):
            shards = _round_shards(order, r, cfg.n, settings.shard_size)
            updates = _local_updates(model, train, shards, settings.lr, classes)

            if kind == "npfl":
                z = updates.mean(axis=0)
            elif kind == "dpfl_gauss":
                sigma = gaussian_sigma(eps_round, delta_round, 2.0 * l2_bound)
                total = _l2_clip_rows(updates, l2_bound).sum(axis=0)
                z = (total + rng.normal(0.0, sigma, size=cfg.d)) / cfg.n
            elif kind == "ldpfl_gauss":
                sigma = gaussian_sigma(eps_round, delta_round, 2.0 * l2_bound)
                noisy = _l2_clip_rows(updates, l2_bound) + rng.normal(
                    0.0, sigma, size=updates.shape
                )
                z = noisy.mean(axis=0)
            else:  # ldpfl_lap
                x = normalize(clip_linf(updates, cfg.clip), cfg.clip)
                noisy = x + rng.laplace(0.0, cfg.d / eps_round, size=x.shape)
                z = cfg.clip * (2.0 * noisy.mean(axis=0) - 1.0)

            model = GlobalModel(theta=model.theta + z, round=model.round + 1)
            accuracies.append(
                logreg.accuracy(model.theta, test.features, test.labels, classes)
            )

    return ExperimentResult(
        kind=kind,
        accuracies=tuple(accuracies),
        final_accuracy=accuracies[-1],
        privacy_per_epoch=budget,
        wall_clock=time.perf_counter() - started,
        config=_echo_config(kind, cfg, settings, budget),
        seed=cfg.seed,
    )


# ---------------------------------------------------------------------------
# Result serialization
# ---------------------------------------------------------------------------


def _echo_config(
    kind: str,
    cfg: ProtocolConfig,
    settings: TrainSettings,
    budget: PrivacyParams | None,
) -> dict:
    echo = {
        "kind": kind,
        "protocol": cfg.protocol,
        "d": cfg.d,
        "n": cfg.n,
        "k": cfg.k,
        "beta": cfg.beta,
        "n_p": cfg.n_p,
        "l": cfg.l,
        "nu": cfg.nu,
        "clip": cfg.clip,
        "b": cfg.b,
        "eps_l": cfg.eps_l,
        "randomizer": cfg.randomizer,
        "seed": cfg.seed,
        "lr": settings.lr,
        "epochs": settings.epochs,
        "shard_size": settings.shard_size,
        "rounds_per_epoch": settings.rounds_per_epoch,
        "delta_budget": settings.delta_budget,
        "l2_clip": settings.l2_clip,
        "label_skew": settings.label_skew,
    }
    if budget is not None:
        echo["budget_epsilon"] = budget.epsilon
        echo["budget_delta"] = budget.delta
    return echo


def result_output_dict(result: ExperimentResult) -> dict:
    """Deterministic view of a result: everything except wall-clock time,
    so identical (config, seed) runs produce byte-identical files."""
    privacy = None
    if result.privacy_per_epoch is not None:
        privacy = {
            "epsilon": result.privacy_per_epoch.epsilon,
            "delta": result.privacy_per_epoch.delta,
        }
    return {
        "kind": result.kind,
        "seed": result.seed,
        "config": result.config,
        "accuracies": list(result.accuracies),
        "final_accuracy": result.final_accuracy,
        "privacy_per_epoch": privacy,
    }


def write_result_json(result: ExperimentResult, fh: IO[str]) -> None:
    json.dump(result_output_dict(result), fh, indent=2, sort_keys=True)
    fh.write("\n")


def write_result_csv(result: ExperimentResult, fh: IO[str]) -> None:
    """Flat per-round table: round, accuracy, eps_c, delta_c (the per-epoch
    central guarantee, blank when no accountant applies)."""
    writer = csv.writer(fh)
    writer.writerow(["round", "accuracy", "eps_c", "delta_c"])
    privacy = result.privacy_per_epoch
    eps = repr(privacy.epsilon) if privacy is not None else ""
    delta = repr(privacy.delta) if privacy is not None else ""
    for i, acc in enumerate(result.accuracies, start=1):
        writer.writerow([i, repr(acc), eps, delta])
