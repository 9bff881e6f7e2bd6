"""The shuffler: plain uniform permutation of messages, and the padded
variant that tops every dimension up to exactly n_p values with sealed
blanket draws before permuting.

The shuffler sees plaintext coordinate ids but only sealed values; it
holds the analyzer's public key (to seal the dummies it fabricates) and
never an unseal capability. Delivered batches carry only the record schema
the analyzer is entitled to: coordinate ids and payload. Origin and sender
bookkeeping is moved into a separate audit object for tests.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass

import numpy as np

from .core import (
    ConfigurationError,
    EncodedMessage,
    ProtocolViolationError,
    PublicKey,
    SealedPayload,
    seal,
)
from .randomizers import BlanketSpec

__all__ = [
    "DeliveredRecord",
    "ShuffleAudit",
    "ShuffledBatch",
    "dump_batch",
    "load_batch",
    "pad_and_shuffle",
    "shuffle_simple",
    "validate_submissions",
]


@dataclass(frozen=True)
class DeliveredRecord:
    """A message as delivered to the analyzer: ids and sealed values only."""

    indexes: np.ndarray
    payload: SealedPayload


@dataclass(frozen=True)
class ShuffleAudit:
    """Simulation-side bookkeeping. Analyzer logic must never read this."""

    user_messages: int
    dummy_messages: int
    user_values: int
    origins: tuple[str, ...]


@dataclass(frozen=True)
class ShuffledBatch:
    """Permuted message collection handed to the analyzer.

    ``per_dim_count`` maps each coordinate id to the number of values it
    received; after padding it equals n_p everywhere. ``audit`` is optional
    simulation metadata aligned with ``messages``.
    """

    messages: tuple[DeliveredRecord, ...]
    per_dim_count: np.ndarray
    total: int
    audit: ShuffleAudit | None = None


def _count_values(messages: list[EncodedMessage], d: int) -> np.ndarray:
    if not messages:
        return np.zeros(d, dtype=np.int64)
    all_idx = np.concatenate([m.indexes for m in messages])
    if all_idx.size and (all_idx.min() < 0 or all_idx.max() >= d):
        raise ProtocolViolationError(
            f"coordinate id out of range [0, {d}): {int(all_idx.min())}..{int(all_idx.max())}"
        )
    return np.bincount(all_idx, minlength=d)


def _deliver(
    messages: list[EncodedMessage],
    d: int,
    rng: np.random.Generator,
    dummy_messages: int,
    user_values: int,
) -> ShuffledBatch:
    order = rng.permutation(len(messages))
    permuted = [messages[i] for i in order]
    records = tuple(DeliveredRecord(m.indexes, m.payload) for m in permuted)
    audit = ShuffleAudit(
        user_messages=len(messages) - dummy_messages,
        dummy_messages=dummy_messages,
        user_values=user_values,
        origins=tuple(m.origin for m in permuted),
    )
    return ShuffledBatch(
        messages=records,
        per_dim_count=_count_values(messages, d),
        total=len(messages),
        audit=audit,
    )


def shuffle_simple(
    messages: list[EncodedMessage], rng: np.random.Generator, d: int | None = None
) -> ShuffledBatch:
    """Uniformly permute the messages without modifying their contents."""
    if d is None:
        d = 1 + max(
            (int(m.indexes.max()) for m in messages if m.indexes.size), default=-1
        )
    user_values = int(sum(m.indexes.size for m in messages))
    return _deliver(list(messages), d, rng, dummy_messages=0, user_values=user_values)


def validate_submissions(messages: list[EncodedMessage], n: int, l: int, k: int) -> None:
    """Reject malformed user submissions before padding.

    Each of the n users must submit exactly l messages, every message at
    most k distinct coordinate ids, and no id may repeat anywhere within
    one user's report.
    """
    per_sender: dict[int, list[np.ndarray]] = {}
    for m in messages:
        if m.sender is None:
            raise ProtocolViolationError("user message lacks a sender id")
        if m.indexes.size == 0 or m.indexes.size > k:
            raise ProtocolViolationError(
                f"user {m.sender} sent a message with {m.indexes.size} "
                f"coordinates (expected 1..{k})"
            )
        per_sender.setdefault(m.sender, []).append(m.indexes)
    if len(per_sender) != n:
        raise ProtocolViolationError(
            f"expected submissions from {n} users, got {len(per_sender)}"
        )
    for sender, chunks in per_sender.items():
        if len(chunks) != l:
            raise ProtocolViolationError(
                f"user {sender} sent {len(chunks)} messages (expected {l})"
            )
        combined = np.concatenate(chunks)
        if np.unique(combined).size != combined.size:
            raise ProtocolViolationError(
                f"user {sender} reported a duplicate coordinate id"
            )


def _pack_dummies(deficits: np.ndarray, k: int) -> list[np.ndarray]:
    """Split the per-dimension deficits into dummy index lists of <= k
    distinct coordinates each.

    Deficit copies are laid out grouped per dimension (largest deficit
    first) and dealt round-robin over v = max(max deficit, ceil(total/k))
    messages, so a dimension's copies land in distinct messages and no
    message exceeds ceil(total/v) <= k entries. The final messages may be
    short; per-dimension counts are what the padding guarantee needs.
    """
    total = int(deficits.sum())
    if total == 0:
        return []
    v = max(int(deficits.max()), -(-total // k))
    dims = np.argsort(-deficits, kind="stable")
    dims = dims[deficits[dims] > 0]
    copies = np.repeat(dims, deficits[dims])
    slots = np.arange(total) % v
    order = np.argsort(slots, kind="stable")
    bounds = np.searchsorted(slots[order], np.arange(1, v))
    return np.split(copies[order], bounds)


def pad_and_shuffle(
    messages: list[EncodedMessage],
    d: int,
    n_p: int,
    k: int,
    blanket: BlanketSpec,
    analyzer_key: PublicKey,
    rng: np.random.Generator,
) -> ShuffledBatch:
    """Pad every dimension to exactly n_p values with sealed blanket draws,
    then uniformly permute user and dummy messages together.

    Dummy messages carry between 1 and k distinct coordinate ids, drawn
    from the dimensions still short of n_p, with values sampled from the
    blanket and sealed under the analyzer's key exactly like user values.
    A dimension already holding more than n_p values is a configuration
    error (n_p too small); user reports are never dropped.
    """
    counts = _count_values(messages, d)
    over = np.flatnonzero(counts > n_p)
    if over.size:
        j = int(over[0])
        raise ConfigurationError(
            f"dimension {j} received {int(counts[j])} values > n_p={n_p}; "
            "increase the padding target"
        )
    user_values = int(counts.sum())

    dummies = []
    for idx in _pack_dummies(n_p - counts, k):
        values = blanket.sample(idx.size, rng)
        dummies.append(
            EncodedMessage(
                indexes=idx, payload=seal(values, analyzer_key), origin="dummy"
            )
        )
    return _deliver(
        list(messages) + dummies,
        d,
        rng,
        dummy_messages=len(dummies),
        user_values=user_values,
    )


# ---------------------------------------------------------------------------
# On-disk round dumps
# ---------------------------------------------------------------------------
#
# JSON-lines container: a header object {"format": ..., "version": 1,
# "total": N}, then one record per line with plaintext coordinate ids and
# the base64-coded sealed payload.

_DUMP_FORMAT = "shufflefl-batch"


def dump_batch(batch: ShuffledBatch, path: str) -> None:
    """Write the delivered view of a batch (ids + sealed payloads) as
    JSON lines. Audit metadata is intentionally not persisted."""
    with open(path, "w", encoding="utf-8") as fh:
        header = {"format": _DUMP_FORMAT, "version": 1, "total": batch.total}
        fh.write(json.dumps(header) + "\n")
        for record in batch.messages:
            row = {
                "indexes": [int(i) for i in record.indexes],
                "payload": {
                    "scheme": record.payload.scheme,
                    "key_id": record.payload.key_id,
                    "blob": base64.b64encode(record.payload.blob).decode("ascii"),
                },
            }
            fh.write(json.dumps(row) + "\n")


def load_batch(path: str, d: int | None = None) -> ShuffledBatch:
    """Read a batch dump written by :func:`dump_batch`."""
    with open(path, "r", encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        if header.get("format") != _DUMP_FORMAT:
            raise ProtocolViolationError(f"not a batch dump: {path}")
        records = []
        for line in fh:
            row = json.loads(line)
            payload = SealedPayload(
                scheme=row["payload"]["scheme"],
                key_id=row["payload"]["key_id"],
                blob=base64.b64decode(row["payload"]["blob"]),
            )
            records.append(
                DeliveredRecord(np.asarray(row["indexes"], dtype=np.int64), payload)
            )
    if header["total"] != len(records):
        raise ProtocolViolationError(
            f"batch dump truncated: header says {header['total']}, found {len(records)}"
        )
    if d is None:
        d = 1 + max(
            (int(r.indexes.max()) for r in records if r.indexes.size), default=-1
        )
    counts = np.zeros(d, dtype=np.int64)
    for r in records:
        counts += np.bincount(r.indexes, minlength=d)
    return ShuffledBatch(
        messages=tuple(records), per_dim_count=counts, total=len(records), audit=None
    )
