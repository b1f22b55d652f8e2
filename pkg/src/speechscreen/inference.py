"""Assessment scoring over the retrieval datastores.

Per model layer, three retrieval paths feed a label pool:

* segment level: k-means segment features, top-k each from the original
  datastore (no metadata filter, no reversed store);
* utterance level: whole-utterance pooled vector, top-(n*k) from the
  original datastore, metadata-refined;
* utterance level (reversed): same, against the reversed-waveform store.

The layer score is the fraction of symptomatic labels among the pooled
retrievals; the final score averages the layer scores and the decision is a
strict comparison against the threshold.
"""

from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Mapping, Sequence

from .datastore import Datastore, SearchHit, temporal_mean
from .errors import (
    DimensionMismatchError,
    EmptyDatastoreError,
    NoLabelsRetrievedError,
    SpeechScreenError,
)
from .ingest import AgeGroup, Channel, FeatureSequence, SampleRecord, Sex
from .segmentation import derive_seed, segment_features

StoreMap = Mapping[tuple[int, Channel], Datastore]
FeatureMap = Mapping[tuple[int, Channel], FeatureSequence]

DEFAULT_SEED = 17


class Refinement(str, enum.Enum):
    """Metadata filter applied to utterance-level retrievals."""

    NONE = "none"
    AGE = "age"
    SEX = "sex"


class Combine(str, enum.Enum):
    """How the per-path label multisets form a layer score.

    POOL counts symptomatic labels over the union of all retrieved labels;
    AVERAGE computes one proportion per non-empty path and averages those.
    The two differ once refinement shrinks a path.
    """

    POOL = "pool"
    AVERAGE = "average"


@dataclass(frozen=True)
class InferenceConfig:
    layers: tuple[int, ...] = (3, 4, 5)
    n_per_layer: Mapping[int, int] = field(default_factory=lambda: {3: 2, 4: 2, 5: 2})
    k: int = 5
    refinement: Refinement = Refinement.NONE
    use_segment: bool = True
    use_utterance: bool = True
    use_utterance_reversed: bool = True
    threshold: float = 0.5
    exclude_self: bool = False
    combine: Combine = Combine.POOL
    seed: int = DEFAULT_SEED

    def __post_init__(self) -> None:
        if not self.layers:
            raise ValueError("at least one layer is required")
        if not (self.use_segment or self.use_utterance or self.use_utterance_reversed):
            raise ValueError("at least one retrieval path must be enabled")
        if not (0.0 < self.threshold < 1.0):
            raise ValueError(f"threshold must be in (0, 1), got {self.threshold}")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        missing = [l for l in self.layers if l not in self.n_per_layer]
        if missing:
            raise ValueError(f"n_per_layer lacks entries for layers {missing}")
        bad = [l for l in self.layers if self.n_per_layer[l] < 1]
        if bad:
            raise ValueError(f"n_per_layer must be >= 1 for layers {bad}")

    def required_pairs(self) -> list[tuple[int, Channel]]:
        """Every (layer, channel) the enabled paths need."""
        pairs: list[tuple[int, Channel]] = []
        for layer in self.layers:
            if self.use_segment or self.use_utterance:
                pairs.append((layer, Channel.ORIGINAL))
            if self.use_utterance_reversed:
                pairs.append((layer, Channel.REVERSED))
        return pairs


def covid19_config(**overrides) -> InferenceConfig:
    """Defaults tuned for the COVID-19 Sounds setup: n=2/73/73, age refinement."""
    base = InferenceConfig(
        layers=(3, 4, 5),
        n_per_layer={3: 2, 4: 73, 5: 73},
        k=5,
        refinement=Refinement.AGE,
    )
    return replace(base, **overrides) if overrides else base


def coswara_config(**overrides) -> InferenceConfig:
    """Defaults tuned for the Coswara setup: n=2 everywhere, no refinement."""
    base = InferenceConfig(
        layers=(3, 4, 5),
        n_per_layer={3: 2, 4: 2, 5: 2},
        k=5,
        refinement=Refinement.NONE,
    )
    return replace(base, **overrides) if overrides else base


@dataclass
class LayerScore:
    layer: int
    labels_seg: list[int]
    labels_utt: list[int]
    labels_utt_rev: list[int]
    score: float

    @property
    def total_labels(self) -> int:
        return len(self.labels_seg) + len(self.labels_utt) + len(self.labels_utt_rev)


@dataclass
class AssessmentResult:
    sample_id: str
    layer_scores: list[LayerScore]
    final_score: float
    decision: int
    provenance: dict[str, list[SearchHit]] = field(default_factory=dict)


@dataclass
class BatchFailure:
    sample_id: str
    error: str


def refinement_predicate(
    mode: Refinement, age_group: AgeGroup, sex: Sex
) -> Callable[[SearchHit], bool] | None:
    """Equality filter for the query's metadata; None when no filter applies.

    Unknown metadata matches only entries whose metadata is also unknown.
    """
    if mode is Refinement.AGE:
        return lambda hit: hit.age_group == age_group
    if mode is Refinement.SEX:
        return lambda hit: hit.sex == sex
    return None


def _top_hits(
    store: Datastore, query, count: int, exclude_id: str | None
) -> list[SearchHit]:
    """Top-`count` hits, transparently skipping the query's own entry.

    Fetching one extra and dropping the self-hit reproduces exactly what a
    store without that entry would return.
    """
    if store.size == 0:
        raise EmptyDatastoreError(
            f"datastore layer {store.layer}/{store.channel.value} is empty"
        )
    if exclude_id is None:
        return store.search(query, count)
    hits = store.search(query, count + 1)
    return [h for h in hits if h.sample_id != exclude_id][:count]


def segment_level_labels(
    seq: FeatureSequence,
    store: Datastore,
    n: int,
    k: int,
    seed: int,
    exclude_id: str | None = None,
) -> tuple[list[int], list[SearchHit]]:
    """Labels from n segment queries, k neighbors each (n*k retrievals).

    Segment-level retrieval uses only the original-channel store and applies
    no metadata filter.
    """
    if seq.channel is not Channel.ORIGINAL or store.channel is not Channel.ORIGINAL:
        raise ValueError("segment-level retrieval runs on the original channel")
    if seq.layer != store.layer:
        raise DimensionMismatchError(
            f"sequence layer {seq.layer} does not match store layer {store.layer}"
        )
    hits: list[SearchHit] = []
    for segment in segment_features(seq, n, seed):
        hits.extend(_top_hits(store, segment, k, exclude_id))
    return [h.label for h in hits], hits


def utterance_level_labels(
    seq_orig: FeatureSequence | None,
    seq_rev: FeatureSequence | None,
    store_orig: Datastore | None,
    store_rev: Datastore | None,
    n: int,
    k: int,
    refinement: Refinement = Refinement.NONE,
    age_group: AgeGroup = AgeGroup.UNKNOWN,
    sex: Sex = Sex.UNKNOWN,
    exclude_id: str | None = None,
) -> tuple[list[int], list[int], list[SearchHit], list[SearchHit]]:
    """Labels from whole-utterance retrieval on each enabled channel.

    Each channel retrieves the top-(n*k) neighbors from its own store and
    then drops those failing the metadata filter; a path may therefore come
    back with fewer labels, or none.  Pass None for a channel to skip it.
    """
    predicate = refinement_predicate(refinement, age_group, sex)
    count = n * k

    def one_channel(seq: FeatureSequence | None, store: Datastore | None) -> list[SearchHit]:
        if seq is None or store is None:
            return []
        hits = _top_hits(store, temporal_mean(seq), count, exclude_id)
        if predicate is not None:
            hits = [h for h in hits if predicate(h)]
        return hits

    hits_orig = one_channel(seq_orig, store_orig)
    hits_rev = one_channel(seq_rev, store_rev)
    return (
        [h.label for h in hits_orig],
        [h.label for h in hits_rev],
        hits_orig,
        hits_rev,
    )


def _layer_score(
    labels_seg: list[int],
    labels_utt: list[int],
    labels_utt_rev: list[int],
    config: InferenceConfig,
) -> float:
    if config.combine is Combine.POOL:
        pooled = labels_seg + labels_utt + labels_utt_rev
        return sum(pooled) / len(pooled)
    path_scores = [
        sum(labels) / len(labels)
        for labels in (labels_seg, labels_utt, labels_utt_rev)
        if labels
    ]
    return sum(path_scores) / len(path_scores)


def assess(
    record: SampleRecord,
    features: FeatureMap,
    stores: StoreMap,
    config: InferenceConfig,
) -> AssessmentResult:
    """Score one sample across all configured layers.

    ``features`` must contain a sequence for every (layer, channel) an
    enabled path needs.  Raises NoLabelsRetrievedError if a layer ends up
    with no labels at all (every enabled path empty after filtering).
    """
    for pair in config.required_pairs():
        if pair not in features:
            raise DimensionMismatchError(
                f"sample {record.sample_id!r} lacks features for "
                f"layer {pair[0]}/{pair[1].value}"
            )
        if pair not in stores:
            raise EmptyDatastoreError(
                f"no datastore for layer {pair[0]}/{pair[1].value}"
            )

    exclude_id = record.sample_id if config.exclude_self else None
    seed = derive_seed(config.seed, record.sample_id)
    layer_scores: list[LayerScore] = []
    provenance: dict[str, list[SearchHit]] = {}

    for layer in config.layers:
        n = config.n_per_layer[layer]
        labels_seg: list[int] = []
        labels_utt: list[int] = []
        labels_utt_rev: list[int] = []

        if config.use_segment:
            labels_seg, hits = segment_level_labels(
                features[(layer, Channel.ORIGINAL)],
                stores[(layer, Channel.ORIGINAL)],
                n,
                config.k,
                seed,
                exclude_id,
            )
            provenance[f"layer{layer}/segment"] = hits

        if config.use_utterance or config.use_utterance_reversed:
            labels_utt, labels_utt_rev, hits_o, hits_r = utterance_level_labels(
                features[(layer, Channel.ORIGINAL)] if config.use_utterance else None,
                features[(layer, Channel.REVERSED)] if config.use_utterance_reversed else None,
                stores[(layer, Channel.ORIGINAL)] if config.use_utterance else None,
                stores[(layer, Channel.REVERSED)] if config.use_utterance_reversed else None,
                n,
                config.k,
                config.refinement,
                record.age_group,
                record.sex,
                exclude_id,
            )
            if config.use_utterance:
                provenance[f"layer{layer}/utterance"] = hits_o
            if config.use_utterance_reversed:
                provenance[f"layer{layer}/utterance_reversed"] = hits_r

        if not (labels_seg or labels_utt or labels_utt_rev):
            raise NoLabelsRetrievedError(
                f"sample {record.sample_id!r}, layer {layer}: every enabled path "
                f"returned no labels after filtering"
            )
        layer_scores.append(
            LayerScore(
                layer=layer,
                labels_seg=labels_seg,
                labels_utt=labels_utt,
                labels_utt_rev=labels_utt_rev,
                score=_layer_score(labels_seg, labels_utt, labels_utt_rev, config),
            )
        )

    final_score = sum(s.score for s in layer_scores) / len(layer_scores)
    return AssessmentResult(
        sample_id=record.sample_id,
        layer_scores=layer_scores,
        final_score=final_score,
        decision=int(final_score > config.threshold),
        provenance=provenance,
    )


def assess_batch(
    records: Sequence[SampleRecord],
    feature_loader: Callable[[SampleRecord], FeatureMap],
    stores: StoreMap,
    config: InferenceConfig,
    jobs: int = 1,
) -> tuple[list[AssessmentResult], list[BatchFailure]]:
    """Assess many samples, collecting per-sample failures instead of raising.

    Results preserve record order and are identical for any ``jobs`` value:
    each sample's work is independent and seeded by its own id.
    """

    def one(record: SampleRecord) -> AssessmentResult | BatchFailure:
        try:
            return assess(record, feature_loader(record), stores, config)
        except SpeechScreenError as exc:
            return BatchFailure(record.sample_id, f"{type(exc).__name__}: {exc}")

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(one, records))
    else:
        outcomes = [one(r) for r in records]

    results = [o for o in outcomes if isinstance(o, AssessmentResult)]
    failures = [o for o in outcomes if isinstance(o, BatchFailure)]
    return results, failures


def manifest_feature_loader(
    features_root, pairs: Iterable[tuple[int, Channel]]
) -> Callable[[SampleRecord], FeatureMap]:
    """Loader that reads the needed feature files relative to ``features_root``."""
    from .ingest import load_features

    wanted = list(pairs)

    def load(record: SampleRecord) -> FeatureMap:
        return {pair: load_features(record, features_root, *pair) for pair in wanted}

    return load
