"""Exact flat L2 key-value retrieval store with metadata and deletion.

Keys are pooled float32 feature vectors; values are the sample's label and
metadata.  Search is an exhaustive scan over all keys (no approximation),
reporting *squared* L2 distances, a monotone equivalent of L2, so rankings
are identical.  Ties are broken by insertion rank, which removals never
renumber.

Mutations build a fresh immutable snapshot under a lock and swap it in
atomically; a concurrent search works on whichever snapshot it grabbed and
never observes a half-applied mutation.

Snapshot file layout (little-endian):

    magic   4 bytes  b"NPDS"
    version u32      currently 1
    layer   u32
    channel u8       0 = original, 1 = reversed
    N       u64
    D       u32
    then N records:
        id_len u16 | id UTF-8 | label u8 | age u8 | sex u8 | D float32 key
"""

from __future__ import annotations

import struct
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import (
    BadMagicError,
    DimensionMismatchError,
    DuplicateIdError,
    IoFailureError,
    MalformedFileError,
    TruncatedFileError,
    UnsupportedVersionError,
)
from .ingest import (
    AGE_CODE,
    AGE_FROM_CODE,
    CHANNEL_CODE,
    CHANNEL_FROM_CODE,
    SEX_CODE,
    SEX_FROM_CODE,
    AgeGroup,
    Channel,
    FeatureSequence,
    SampleRecord,
    Sex,
)

SNAPSHOT_MAGIC = b"NPDS"
SNAPSHOT_FORMAT_VERSION = 1

_SNAPSHOT_HEADER = struct.Struct("<4sIIBQI")


def temporal_mean(seq: FeatureSequence) -> np.ndarray:
    """Pool a T x D frame matrix to a single D-dim float32 key.

    Accumulates in float64 before rounding back to float32.
    """
    return seq.frames.mean(axis=0, dtype=np.float64).astype(np.float32)


@dataclass
class DatastoreEntry:
    sample_id: str
    key: np.ndarray
    label: int
    age_group: AgeGroup = AgeGroup.UNKNOWN
    sex: Sex = Sex.UNKNOWN


@dataclass
class SearchHit:
    """One retrieved neighbor.  ``squared_l2_distance`` is squared L2."""

    sample_id: str
    squared_l2_distance: float
    label: int
    age_group: AgeGroup
    sex: Sex


@dataclass
class FilteredSearch:
    """Post-filtered hits plus how many hits existed before filtering."""

    hits: list[SearchHit]
    prefilter_count: int


class _Snapshot:
    """Immutable view of the store's contents.  Never mutated after build."""

    __slots__ = ("ids", "keys", "keys64", "labels", "ages", "sexes", "ranks", "index")

    def __init__(
        self,
        ids: list[str],
        keys: np.ndarray,
        labels: np.ndarray,
        ages: np.ndarray,
        sexes: np.ndarray,
        ranks: np.ndarray,
    ) -> None:
        self.ids = ids
        self.keys = keys
        self.keys64 = keys.astype(np.float64)
        self.labels = labels
        self.ages = ages
        self.sexes = sexes
        self.ranks = ranks
        self.index = {sid: row for row, sid in enumerate(ids)}

    @property
    def size(self) -> int:
        return len(self.ids)


def _empty_snapshot(dim: int | None) -> _Snapshot:
    d = dim if dim is not None else 0
    return _Snapshot(
        ids=[],
        keys=np.empty((0, d), dtype=np.float32),
        labels=np.empty(0, dtype=np.uint8),
        ages=np.empty(0, dtype=np.uint8),
        sexes=np.empty(0, dtype=np.uint8),
        ranks=np.empty(0, dtype=np.int64),
    )


class Datastore:
    """Flat exact-L2 store for one (layer, channel)."""

    def __init__(self, layer: int, channel: Channel, dim: int | None = None) -> None:
        self.layer = int(layer)
        self.channel = channel
        self._dim = dim
        self._lock = threading.Lock()
        self._counter = 0
        self._snapshot = _empty_snapshot(dim)

    # --- construction ------------------------------------------------------

    @classmethod
    def build(
        cls,
        layer: int,
        channel: Channel,
        entries: Iterable[tuple[SampleRecord, FeatureSequence]],
        dim: int | None = None,
    ) -> "Datastore":
        """Build a store in one pass; keys are temporal means of the sequences."""
        store = cls(layer, channel, dim=dim)
        pooled = [
            DatastoreEntry(
                sample_id=record.sample_id,
                key=temporal_mean(seq),
                label=record.label,
                age_group=record.age_group,
                sex=record.sex,
            )
            for record, seq in entries
        ]
        store.add_entries(pooled)
        return store

    def add_entries(self, entries: Sequence[DatastoreEntry]) -> None:
        """Append many pre-pooled entries at once (one snapshot rebuild)."""
        if not entries:
            return
        with self._lock:
            snap = self._snapshot
            ids = list(snap.ids)
            seen = set(snap.index)
            keys = [snap.keys]
            dim = self._dim
            labels = [snap.labels]
            ages = [snap.ages]
            sexes = [snap.sexes]
            ranks = [snap.ranks]
            new_ranks = []
            for entry in entries:
                key = np.ascontiguousarray(entry.key, dtype=np.float32)
                if key.ndim != 1:
                    raise DimensionMismatchError(
                        f"key for {entry.sample_id!r} must be 1-D, got shape {key.shape}"
                    )
                if dim is None:
                    dim = int(key.shape[0])
                elif key.shape[0] != dim:
                    raise DimensionMismatchError(
                        f"key for {entry.sample_id!r} has dim {key.shape[0]}, store has {dim}"
                    )
                if not np.isfinite(key).all():
                    raise ValueError(f"key for {entry.sample_id!r} has non-finite values")
                if entry.sample_id in seen:
                    raise DuplicateIdError(f"duplicate sample_id {entry.sample_id!r}")
                seen.add(entry.sample_id)
                ids.append(entry.sample_id)
                keys.append(key[None, :])
                labels.append(np.array([entry.label], dtype=np.uint8))
                ages.append(np.array([AGE_CODE[entry.age_group]], dtype=np.uint8))
                sexes.append(np.array([SEX_CODE[entry.sex]], dtype=np.uint8))
                new_ranks.append(self._counter)
                self._counter += 1
            ranks.append(np.asarray(new_ranks, dtype=np.int64))
            if snap.keys.shape[1] == 0 and dim is not None:
                keys[0] = np.empty((0, dim), dtype=np.float32)
            self._dim = dim
            self._snapshot = _Snapshot(
                ids=ids,
                keys=np.concatenate(keys, axis=0),
                labels=np.concatenate(labels),
                ages=np.concatenate(ages),
                sexes=np.concatenate(sexes),
                ranks=np.concatenate(ranks),
            )

    def add(self, record: SampleRecord, seq: FeatureSequence) -> None:
        """Append one sample; its key is the temporal mean of ``seq``."""
        self.add_entries(
            [
                DatastoreEntry(
                    sample_id=record.sample_id,
                    key=temporal_mean(seq),
                    label=record.label,
                    age_group=record.age_group,
                    sex=record.sex,
                )
            ]
        )

    def remove(self, sample_id: str) -> bool:
        """Remove one entry.  Returns False (store unchanged) if absent.

        Remaining entries keep their insertion ranks.
        """
        with self._lock:
            snap = self._snapshot
            row = snap.index.get(sample_id)
            if row is None:
                return False
            keep = np.ones(snap.size, dtype=bool)
            keep[row] = False
            ids = [sid for i, sid in enumerate(snap.ids) if i != row]
            self._snapshot = _Snapshot(
                ids=ids,
                keys=snap.keys[keep],
                labels=snap.labels[keep],
                ages=snap.ages[keep],
                sexes=snap.sexes[keep],
                ranks=snap.ranks[keep],
            )
            return True

    # --- queries -----------------------------------------------------------

    @property
    def size(self) -> int:
        return self._snapshot.size

    @property
    def dim(self) -> int | None:
        return self._dim

    def __contains__(self, sample_id: str) -> bool:
        return sample_id in self._snapshot.index

    def _hit(self, snap: _Snapshot, row: int, dist: float) -> SearchHit:
        return SearchHit(
            sample_id=snap.ids[row],
            squared_l2_distance=float(dist),
            label=int(snap.labels[row]),
            age_group=AGE_FROM_CODE[int(snap.ages[row])],
            sex=SEX_FROM_CODE[int(snap.sexes[row])],
        )

    def search(self, query: np.ndarray, k: int) -> list[SearchHit]:
        """Exact top-k by squared L2 distance.

        Returns min(k, size) hits ordered by (distance, insertion rank).
        The scan runs in float64 over the whole store; candidate selection
        uses a partition to avoid fully sorting large stores.
        """
        if k < 1:
            raise ValueError(f"k must be positive, got {k}")
        snap = self._snapshot
        if snap.size == 0:
            return []
        q = np.ascontiguousarray(query, dtype=np.float64)
        if q.ndim != 1 or q.shape[0] != snap.keys.shape[1]:
            raise DimensionMismatchError(
                f"query has shape {q.shape}, store dim is {snap.keys.shape[1]}"
            )
        diff = snap.keys64 - q
        dists = np.einsum("nd,nd->n", diff, diff)
        if k >= snap.size:
            order = np.lexsort((snap.ranks, dists))
        else:
            # Candidates = everything not beyond the k-th smallest distance,
            # so boundary ties are kept and resolved by insertion rank.
            kth = np.partition(dists, k - 1)[k - 1]
            cand = np.flatnonzero(dists <= kth)
            order = cand[np.lexsort((snap.ranks[cand], dists[cand]))][:k]
        return [self._hit(snap, int(row), dists[row]) for row in order]

    def search_filtered(
        self, query: np.ndarray, k: int, predicate: Callable[[SearchHit], bool]
    ) -> FilteredSearch:
        """Top-k search, then drop hits failing ``predicate``.

        Filtering happens after retrieval, so fewer than k hits may remain;
        ``prefilter_count`` reports how many there were before the filter.
        """
        hits = self.search(query, k)
        return FilteredSearch(
            hits=[h for h in hits if predicate(h)], prefilter_count=len(hits)
        )

    def entry(self, sample_id: str) -> DatastoreEntry | None:
        snap = self._snapshot
        row = snap.index.get(sample_id)
        if row is None:
            return None
        return DatastoreEntry(
            sample_id=sample_id,
            key=snap.keys[row].copy(),
            label=int(snap.labels[row]),
            age_group=AGE_FROM_CODE[int(snap.ages[row])],
            sex=SEX_FROM_CODE[int(snap.sexes[row])],
        )

    def entries(self) -> list[DatastoreEntry]:
        snap = self._snapshot
        return [
            DatastoreEntry(
                sample_id=snap.ids[row],
                key=snap.keys[row].copy(),
                label=int(snap.labels[row]),
                age_group=AGE_FROM_CODE[int(snap.ages[row])],
                sex=SEX_FROM_CODE[int(snap.sexes[row])],
            )
            for row in range(snap.size)
        ]

    def stats(self) -> dict:
        """Counts by label, age group and sex, plus shape information."""
        snap = self._snapshot
        return {
            "layer": self.layer,
            "channel": self.channel.value,
            "size": snap.size,
            "dim": self._dim,
            "labels": {
                "asymptomatic": int((snap.labels == 0).sum()),
                "symptomatic": int((snap.labels == 1).sum()),
            },
            "age_groups": {
                group.value: int((snap.ages == code).sum())
                for group, code in AGE_CODE.items()
            },
            "sexes": {
                sex.value: int((snap.sexes == code).sum()) for sex, code in SEX_CODE.items()
            },
        }

    # --- persistence ---------------------------------------------------------

    def save(self, path: str | Path) -> None:
        """Write a snapshot file.  Entries are written in insertion-rank order."""
        snap = self._snapshot
        dim = self._dim if self._dim is not None else 0
        parts = [
            _SNAPSHOT_HEADER.pack(
                SNAPSHOT_MAGIC,
                SNAPSHOT_FORMAT_VERSION,
                self.layer,
                CHANNEL_CODE[self.channel],
                snap.size,
                dim,
            )
        ]
        for row in range(snap.size):
            raw_id = snap.ids[row].encode("utf-8")
            if len(raw_id) > 0xFFFF:
                raise ValueError(f"sample_id too long to serialize: {snap.ids[row]!r}")
            parts.append(struct.pack("<H", len(raw_id)))
            parts.append(raw_id)
            parts.append(
                struct.pack(
                    "<BBB", int(snap.labels[row]), int(snap.ages[row]), int(snap.sexes[row])
                )
            )
            parts.append(np.ascontiguousarray(snap.keys[row], dtype="<f4").tobytes())
        path = Path(path)
        try:
            tmp = path.with_name(path.name + ".tmp")
            tmp.write_bytes(b"".join(parts))
            tmp.replace(path)
        except OSError as exc:
            raise IoFailureError(f"cannot write {path}: {exc}") from exc

    @classmethod
    def load(cls, path: str | Path) -> "Datastore":
        """Read a snapshot file.  File order becomes insertion order."""
        path = Path(path)
        try:
            raw = path.read_bytes()
        except OSError as exc:
            raise IoFailureError(f"cannot read {path}: {exc}") from exc
        if len(raw) < _SNAPSHOT_HEADER.size:
            raise TruncatedFileError(
                f"{path}: file ends at offset {len(raw)}, "
                f"header needs {_SNAPSHOT_HEADER.size} bytes"
            )
        magic, version, layer, channel_code, n, dim = _SNAPSHOT_HEADER.unpack_from(raw, 0)
        if magic != SNAPSHOT_MAGIC:
            raise BadMagicError(f"{path}: bad magic {magic!r} at offset 0")
        if version != SNAPSHOT_FORMAT_VERSION:
            raise UnsupportedVersionError(f"{path}: unsupported version {version} at offset 4")
        if channel_code not in CHANNEL_FROM_CODE:
            raise MalformedFileError(f"{path}: unknown channel byte {channel_code} at offset 12")

        offset = _SNAPSHOT_HEADER.size
        ids: list[str] = []
        keys = np.empty((n, dim), dtype=np.float32)
        labels = np.empty(n, dtype=np.uint8)
        ages = np.empty(n, dtype=np.uint8)
        sexes = np.empty(n, dtype=np.uint8)
        for row in range(n):
            if offset + 2 > len(raw):
                raise TruncatedFileError(f"{path}: record {row} truncated at offset {offset}")
            (id_len,) = struct.unpack_from("<H", raw, offset)
            offset += 2
            end = offset + id_len + 3 + 4 * dim
            if end > len(raw):
                raise TruncatedFileError(f"{path}: record {row} truncated at offset {offset}")
            sample_id = raw[offset : offset + id_len].decode("utf-8")
            offset += id_len
            label, age, sex = struct.unpack_from("<BBB", raw, offset)
            offset += 3
            if label not in (0, 1):
                raise MalformedFileError(f"{path}: record {row} has label byte {label}")
            if age not in AGE_FROM_CODE or sex not in SEX_FROM_CODE:
                raise MalformedFileError(f"{path}: record {row} has invalid metadata bytes")
            keys[row] = np.frombuffer(raw, dtype="<f4", count=dim, offset=offset)
            offset += 4 * dim
            ids.append(sample_id)
            labels[row] = label
            ages[row] = age
            sexes[row] = sex
        if offset != len(raw):
            raise MalformedFileError(f"{path}: {len(raw) - offset} trailing bytes at offset {offset}")
        if len(set(ids)) != len(ids):
            raise DuplicateIdError(f"{path}: snapshot contains duplicate sample_ids")

        store = cls(int(layer), CHANNEL_FROM_CODE[channel_code], dim=int(dim) if dim else None)
        store._counter = n
        store._snapshot = _Snapshot(
            ids=ids,
            keys=keys,
            labels=labels,
            ages=ages,
            sexes=sexes,
            ranks=np.arange(n, dtype=np.int64),
        )
        if n and not np.isfinite(keys).all():
            raise MalformedFileError(f"{path}: snapshot contains non-finite key values")
        return store


def build_from_manifest(
    records: Iterable[SampleRecord],
    features_root: str | Path,
    layer: int,
    channel: Channel,
    split=None,
) -> Datastore:
    """Build a store from manifest records, reading each referenced feature file.

    ``split`` limits which records are ingested (None means all).
    """
    from .ingest import load_features

    selected = [r for r in records if split is None or r.split == split]
    return Datastore.build(
        layer,
        channel,
        ((r, load_features(r, features_root, layer, channel)) for r in selected),
    )
