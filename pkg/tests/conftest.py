"""Shared fixtures: synthetic feature corpora small enough for fast tests."""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from speechscreen.ingest import (
    AgeGroup,
    Channel,
    FeatureSequence,
    SampleRecord,
    Sex,
    Split,
    manifest_line,
    write_feature_file,
)

AGE_CYCLE = [AgeGroup.LE39, AgeGroup.F40TO59, AgeGroup.GE60, AgeGroup.UNKNOWN]
SEX_CYCLE = [Sex.MALE, Sex.FEMALE, Sex.UNKNOWN]


def make_corpus(
    root: Path,
    n_train: int = 16,
    n_test: int = 8,
    layers=(3, 4),
    dim: int = 6,
    separation: float = 3.0,
    seed: int = 0,
):
    """Two-class Gaussian corpus with feature files and a manifest on disk.

    Class 1 is centered ``separation`` away from class 0 per coordinate.
    Returns (manifest_path, records).
    """
    rng = np.random.default_rng(seed)
    records = []
    lines = []
    for i in range(n_train + n_test):
        label = i % 2
        split = Split.TRAIN if i < n_train else Split.TEST
        sid = f"s{i:03d}"
        paths = {}
        for layer in layers:
            t = int(rng.integers(8, 20))
            frames = rng.normal(separation * label, 1.0, size=(t, dim)).astype(np.float32)
            for ch, data in (
                (Channel.ORIGINAL, frames),
                (Channel.REVERSED, frames[::-1]),
            ):
                rel = f"{sid}_l{layer}_{ch.value}.npsa"
                write_feature_file(FeatureSequence(sid, layer, ch, data), root / rel)
                paths[(layer, ch)] = rel
        record = SampleRecord(
            sid,
            label,
            AGE_CYCLE[i % len(AGE_CYCLE)],
            SEX_CYCLE[i % len(SEX_CYCLE)],
            split,
            paths,
        )
        records.append(record)
        lines.append(manifest_line(record))
    manifest = root / "manifest.jsonl"
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return manifest, records


@pytest.fixture
def corpus(tmp_path):
    manifest, records = make_corpus(tmp_path)
    return tmp_path, manifest, records
