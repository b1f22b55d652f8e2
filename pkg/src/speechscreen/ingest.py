"""On-disk feature-file and manifest formats, and their validated loaders.

Feature file layout (little-endian):

    magic   4 bytes  b"NPSA"
    version u32      currently 1
    layer   u32
    channel u8       0 = original, 1 = reversed
    reserved 3 bytes written as zero
    T       u32      number of frames, >= 1
    D       u32      feature dimension, >= 1
    payload T*D float32, row-major

The manifest is JSON-lines: one object per sample with keys ``sample_id``,
``label`` (0|1), ``age_group`` ("le39"|"40to59"|"ge60"|"unknown", optional),
``sex`` ("male"|"female"|"unknown", optional), ``split``
("train"|"validation"|"test") and ``features`` mapping
"<layer>/<original|reversed>" to a relative feature-file path.
"""

from __future__ import annotations

import enum
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import (
    BadMagicError,
    DuplicateIdError,
    IoFailureError,
    MalformedFileError,
    MissingFieldError,
    NonFiniteValueError,
    TruncatedFileError,
    UnknownEnumValueError,
    UnsupportedVersionError,
)

FEATURE_MAGIC = b"NPSA"
FEATURE_FORMAT_VERSION = 1

# magic | version u32 | layer u32 | channel u8 | 3 reserved bytes | T u32 | D u32
_HEADER = struct.Struct("<4sIIB3xII")
HEADER_SIZE = _HEADER.size  # 24 bytes


class Channel(str, enum.Enum):
    """Waveform channel a feature sequence was extracted from."""

    ORIGINAL = "original"
    REVERSED = "reversed"


class AgeGroup(str, enum.Enum):
    LE39 = "le39"
    F40TO59 = "40to59"
    GE60 = "ge60"
    UNKNOWN = "unknown"


class Sex(str, enum.Enum):
    MALE = "male"
    FEMALE = "female"
    UNKNOWN = "unknown"


class Split(str, enum.Enum):
    TRAIN = "train"
    VALIDATION = "validation"
    TEST = "test"


# Byte codes used by the binary formats.  Stable; do not reorder.
CHANNEL_CODE = {Channel.ORIGINAL: 0, Channel.REVERSED: 1}
AGE_CODE = {AgeGroup.LE39: 0, AgeGroup.F40TO59: 1, AgeGroup.GE60: 2, AgeGroup.UNKNOWN: 3}
SEX_CODE = {Sex.MALE: 0, Sex.FEMALE: 1, Sex.UNKNOWN: 2}
CHANNEL_FROM_CODE = {v: k for k, v in CHANNEL_CODE.items()}
AGE_FROM_CODE = {v: k for k, v in AGE_CODE.items()}
SEX_FROM_CODE = {v: k for k, v in SEX_CODE.items()}


@dataclass
class FeatureSequence:
    """Frame-level features for one (sample, layer, channel).

    ``frames`` is a T x D float32 matrix with T >= 1, D >= 1 and no
    non-finite values; construction enforces this.
    """

    sample_id: str
    layer: int
    channel: Channel
    frames: np.ndarray

    def __post_init__(self) -> None:
        frames = np.ascontiguousarray(self.frames, dtype=np.float32)
        if frames.ndim != 2:
            raise ValueError(f"frames must be 2-D, got shape {frames.shape}")
        if frames.shape[0] < 1 or frames.shape[1] < 1:
            raise ValueError(f"frames must be at least 1x1, got shape {frames.shape}")
        if not np.isfinite(frames).all():
            bad = int(np.flatnonzero(~np.isfinite(frames.ravel()))[0])
            raise ValueError(f"frames contain a non-finite value at flat index {bad}")
        self.frames = frames

    @property
    def num_frames(self) -> int:
        return int(self.frames.shape[0])

    @property
    def dim(self) -> int:
        return int(self.frames.shape[1])


@dataclass
class SampleRecord:
    """Label and metadata for one recording, plus where its features live."""

    sample_id: str
    label: int
    age_group: AgeGroup = AgeGroup.UNKNOWN
    sex: Sex = Sex.UNKNOWN
    split: Split = Split.TRAIN
    feature_paths: dict[tuple[int, Channel], str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label!r}")

    def require_features(self, pairs: Iterable[tuple[int, Channel]]) -> None:
        """Raise MissingFieldError unless every (layer, channel) pair has a path."""
        missing = [p for p in pairs if p not in self.feature_paths]
        if missing:
            pretty = ", ".join(f"{l}/{c.value}" for l, c in missing)
            raise MissingFieldError(
                f"sample {self.sample_id!r} lacks feature paths for: {pretty}"
            )


def read_feature_file(path: str | Path, sample_id: str | None = None) -> FeatureSequence:
    """Read and validate one feature file.

    ``sample_id`` defaults to the file's stem.  Errors name the byte offset
    of the offending content.
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise IoFailureError(f"cannot read {path}: {exc}") from exc

    if len(raw) < HEADER_SIZE:
        raise TruncatedFileError(
            f"{path}: file ends at offset {len(raw)}, header needs {HEADER_SIZE} bytes"
        )
    magic, version, layer, channel_code, t, d = _HEADER.unpack_from(raw, 0)
    if magic != FEATURE_MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r} at offset 0")
    if version != FEATURE_FORMAT_VERSION:
        raise UnsupportedVersionError(f"{path}: unsupported version {version} at offset 4")
    if channel_code not in CHANNEL_FROM_CODE:
        raise MalformedFileError(f"{path}: unknown channel byte {channel_code} at offset 12")
    if t < 1 or d < 1:
        raise MalformedFileError(f"{path}: invalid shape T={t}, D={d} at offset 16")

    expected = HEADER_SIZE + 4 * t * d
    if len(raw) < expected:
        raise TruncatedFileError(
            f"{path}: file ends at offset {len(raw)}, payload needs {expected} bytes"
        )
    if len(raw) > expected:
        raise MalformedFileError(f"{path}: {len(raw) - expected} trailing bytes at offset {expected}")

    frames = np.frombuffer(raw, dtype="<f4", count=t * d, offset=HEADER_SIZE)
    finite = np.isfinite(frames)
    if not finite.all():
        bad = int(np.flatnonzero(~finite)[0])
        raise NonFiniteValueError(
            f"{path}: non-finite value at offset {HEADER_SIZE + 4 * bad} (element {bad})"
        )
    return FeatureSequence(
        sample_id=sample_id if sample_id is not None else path.stem,
        layer=int(layer),
        channel=CHANNEL_FROM_CODE[channel_code],
        frames=frames.reshape(t, d).copy(),
    )


def write_feature_file(seq: FeatureSequence, path: str | Path) -> None:
    """Write ``seq`` in the binary layout documented above."""
    path = Path(path)
    header = _HEADER.pack(
        FEATURE_MAGIC,
        FEATURE_FORMAT_VERSION,
        seq.layer,
        CHANNEL_CODE[seq.channel],
        seq.num_frames,
        seq.dim,
    )
    payload = np.ascontiguousarray(seq.frames, dtype="<f4").tobytes()
    try:
        path.write_bytes(header + payload)
    except OSError as exc:
        raise IoFailureError(f"cannot write {path}: {exc}") from exc


def _parse_feature_key(key: str, line_no: int) -> tuple[int, Channel]:
    layer_part, sep, channel_part = key.partition("/")
    if not sep:
        raise UnknownEnumValueError(
            f"manifest line {line_no}: feature key {key!r} is not '<layer>/<channel>'"
        )
    try:
        layer = int(layer_part)
    except ValueError:
        raise UnknownEnumValueError(
            f"manifest line {line_no}: feature key {key!r} has non-integer layer"
        ) from None
    try:
        channel = Channel(channel_part)
    except ValueError:
        raise UnknownEnumValueError(
            f"manifest line {line_no}: unknown channel {channel_part!r} in feature key"
        ) from None
    return layer, channel


def _parse_enum(cls, value, field_name: str, line_no: int):
    try:
        return cls(value)
    except ValueError:
        raise UnknownEnumValueError(
            f"manifest line {line_no}: unknown {field_name} {value!r}"
        ) from None


def parse_manifest_line(line: str, line_no: int = 0) -> SampleRecord:
    """Parse and validate one manifest line."""
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MalformedFileError(f"manifest line {line_no}: invalid JSON ({exc})") from exc
    if not isinstance(obj, dict):
        raise MalformedFileError(f"manifest line {line_no}: expected a JSON object")

    for name in ("sample_id", "label", "split"):
        if name not in obj:
            raise MissingFieldError(f"manifest line {line_no}: missing field {name!r}")
    if obj["label"] not in (0, 1):
        raise UnknownEnumValueError(
            f"manifest line {line_no}: label must be 0 or 1, got {obj['label']!r}"
        )

    features: dict[tuple[int, Channel], str] = {}
    for key, rel_path in obj.get("features", {}).items():
        features[_parse_feature_key(key, line_no)] = str(rel_path)

    return SampleRecord(
        sample_id=str(obj["sample_id"]),
        label=int(obj["label"]),
        age_group=_parse_enum(AgeGroup, obj.get("age_group", "unknown"), "age_group", line_no),
        sex=_parse_enum(Sex, obj.get("sex", "unknown"), "sex", line_no),
        split=_parse_enum(Split, obj["split"], "split", line_no),
        feature_paths=features,
    )


def load_manifest(path: str | Path) -> list[SampleRecord]:
    """Load a JSON-lines manifest, preserving record order.

    Blank lines are ignored.  Duplicate sample_ids are rejected.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailureError(f"cannot read {path}: {exc}") from exc

    records: list[SampleRecord] = []
    seen: set[str] = set()
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        record = parse_manifest_line(line, line_no)
        if record.sample_id in seen:
            raise DuplicateIdError(
                f"manifest line {line_no}: duplicate sample_id {record.sample_id!r}"
            )
        seen.add(record.sample_id)
        records.append(record)
    return records


def manifest_line(record: SampleRecord) -> str:
    """Serialize one record to its manifest JSON line."""
    obj = {
        "sample_id": record.sample_id,
        "label": record.label,
        "age_group": record.age_group.value,
        "sex": record.sex.value,
        "split": record.split.value,
        "features": {
            f"{layer}/{channel.value}": rel
            for (layer, channel), rel in sorted(
                record.feature_paths.items(), key=lambda kv: (kv[0][0], kv[0][1].value)
            )
        },
    }
    return json.dumps(obj, separators=(",", ":"), sort_keys=False)


def write_manifest(records: Iterable[SampleRecord], path: str | Path) -> None:
    """Write records as a JSON-lines manifest in the given order."""
    path = Path(path)
    lines = [manifest_line(r) for r in records]
    try:
        path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    except OSError as exc:
        raise IoFailureError(f"cannot write {path}: {exc}") from exc


def load_features(
    record: SampleRecord, root: str | Path, layer: int, channel: Channel
) -> FeatureSequence:
    """Load the feature file a record references for (layer, channel).

    The file's own header must agree with the manifest key.
    """
    record.require_features([(layer, channel)])
    path = Path(root) / record.feature_paths[(layer, channel)]
    seq = read_feature_file(path, sample_id=record.sample_id)
    if seq.layer != layer or seq.channel != channel:
        raise MalformedFileError(
            f"{path}: header says layer {seq.layer}/{seq.channel.value}, "
            f"manifest says {layer}/{channel.value}"
        )
    return seq
