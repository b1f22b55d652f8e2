"""Scoring pipeline tests: retrieval paths, refinement, pooling, batch."""

import numpy as np
import pytest

from _oracles import (
    knn_label_proportion_oracle,
    knn_oracle,
    mean_oracle,
)
from speechscreen.datastore import Datastore, DatastoreEntry, temporal_mean
from speechscreen.errors import (
    EmptyDatastoreError,
    NoLabelsRetrievedError,
    SpeechScreenError,
)
from speechscreen.inference import (
    Combine,
    InferenceConfig,
    Refinement,
    assess,
    assess_batch,
    covid19_config,
    coswara_config,
    manifest_feature_loader,
    refinement_predicate,
    segment_level_labels,
    utterance_level_labels,
)
from speechscreen.ingest import (
    AgeGroup,
    Channel,
    FeatureSequence,
    SampleRecord,
    Sex,
    Split,
)


def seq_of(sample_id, frames, layer=3, channel=Channel.ORIGINAL):
    return FeatureSequence(sample_id, layer, channel, np.asarray(frames, np.float32))


def store_with_keys(keys, labels, layer=3, channel=Channel.ORIGINAL,
                    ages=None, sexes=None, ids=None):
    store = Datastore(layer, channel)
    n = len(keys)
    ages = ages or [AgeGroup.UNKNOWN] * n
    sexes = sexes or [Sex.UNKNOWN] * n
    ids = ids or [f"e{i}" for i in range(n)]
    store.add_entries(
        [
            DatastoreEntry(ids[i], np.asarray(keys[i], np.float32), labels[i],
                           ages[i], sexes[i])
            for i in range(n)
        ]
    )
    return store


class TestConfig:
    def test_defaults(self):
        config = InferenceConfig()
        assert config.layers == (3, 4, 5)
        assert config.k == 5
        assert config.threshold == 0.5
        assert config.seed == 17

    def test_presets_match_published_setup(self):
        covid = covid19_config()
        assert covid.n_per_layer == {3: 2, 4: 73, 5: 73}
        assert covid.refinement is Refinement.AGE
        assert covid.k == 5
        cos = coswara_config()
        assert cos.n_per_layer == {3: 2, 4: 2, 5: 2}
        assert cos.refinement is Refinement.NONE

    def test_preset_overrides(self):
        config = covid19_config(k=9, threshold=0.6)
        assert config.k == 9 and config.threshold == 0.6
        assert config.refinement is Refinement.AGE

    def test_no_paths_rejected(self):
        with pytest.raises(ValueError, match="path"):
            InferenceConfig(use_segment=False, use_utterance=False,
                            use_utterance_reversed=False)

    def test_threshold_bounds(self):
        with pytest.raises(ValueError):
            InferenceConfig(threshold=0.0)
        with pytest.raises(ValueError):
            InferenceConfig(threshold=1.0)

    def test_layer_without_n_rejected(self):
        with pytest.raises(ValueError, match="n_per_layer"):
            InferenceConfig(layers=(3, 9), n_per_layer={3: 2})

    def test_required_pairs(self):
        config = InferenceConfig(layers=(3,), n_per_layer={3: 2},
                                 use_utterance_reversed=False)
        assert config.required_pairs() == [(3, Channel.ORIGINAL)]
        full = InferenceConfig(layers=(4,), n_per_layer={4: 2})
        assert full.required_pairs() == [(4, Channel.ORIGINAL), (4, Channel.REVERSED)]


class TestRefinementPredicate:
    def test_none_mode(self):
        assert refinement_predicate(Refinement.NONE, AgeGroup.LE39, Sex.MALE) is None

    def test_age_equality(self):
        predicate = refinement_predicate(Refinement.AGE, AgeGroup.GE60, Sex.UNKNOWN)
        hit_match = type("H", (), {"age_group": AgeGroup.GE60})()
        hit_other = type("H", (), {"age_group": AgeGroup.LE39})()
        assert predicate(hit_match) and not predicate(hit_other)

    def test_unknown_matches_only_unknown(self):
        predicate = refinement_predicate(Refinement.AGE, AgeGroup.UNKNOWN, Sex.UNKNOWN)
        unknown = type("H", (), {"age_group": AgeGroup.UNKNOWN})()
        known = type("H", (), {"age_group": AgeGroup.LE39})()
        assert predicate(unknown) and not predicate(known)


class TestSegmentLevelLabels:
    def test_all_label_one_store(self):
        rng = np.random.default_rng(0)
        store = store_with_keys(rng.normal(size=(12, 4)), [1] * 12)
        seq = seq_of("q", rng.normal(size=(10, 4)))
        labels, hits = segment_level_labels(seq, store, n=2, k=5, seed=17)
        assert labels == [1] * 10  # n*k = 10
        assert len(hits) == 10

    def test_n1_reduces_to_pooled_query(self):
        rng = np.random.default_rng(1)
        keys = rng.normal(size=(15, 4)).astype(np.float32)
        store = store_with_keys(keys, [i % 2 for i in range(15)])
        seq = seq_of("q", rng.normal(size=(8, 4)))
        labels, hits = segment_level_labels(seq, store, n=1, k=5, seed=17)
        direct = store.search(temporal_mean(seq), 5)
        assert [h.sample_id for h in hits] == [h.sample_id for h in direct]
        assert labels == [h.label for h in direct]

    def test_pipeline_matches_independent_chain(self):
        # Utterance frames form two tight blobs, so the cluster means are the
        # blob means; chain oracle blob means -> oracle kNN for the labels.
        rng = np.random.default_rng(2)
        keys = rng.normal(scale=4.0, size=(30, 3)).astype(np.float32)
        labels_store = [int(rng.integers(2)) for _ in range(30)]
        store = store_with_keys(keys, labels_store)
        centers = [(-40.0, 0.0, 0.0), (40.0, 0.0, 0.0)]
        frames = []
        membership = []
        for i in range(12):
            blob = i % 2
            frames.append(rng.normal(centers[blob], 0.01, size=3))
            membership.append(blob)
        seq = seq_of("q", np.asarray(frames, np.float32))

        got_labels, got_hits = segment_level_labels(seq, store, n=2, k=5, seed=17)

        blob_means = [
            np.mean([f for f, m in zip(seq.frames.astype(np.float64), membership) if m == b],
                    axis=0)
            for b in (0, 1)
        ]
        ranks = list(range(30))
        want = []
        for mean in blob_means:
            rows = knn_oracle(keys, ranks, mean.astype(np.float32), 5)
            want.append([labels_store[r] for r in rows])
        # Cluster order is seed-dependent; compare as unordered pair of lists.
        got_split = [got_labels[:5], got_labels[5:]]
        assert sorted(got_split) == sorted(want)

    def test_wrong_channel_rejected(self):
        store = store_with_keys(np.zeros((3, 2)), [0, 0, 0], channel=Channel.REVERSED)
        seq = seq_of("q", np.zeros((5, 2)))
        with pytest.raises(ValueError):
            segment_level_labels(seq, store, n=2, k=1, seed=17)

    def test_empty_store_rejected(self):
        store = Datastore(3, Channel.ORIGINAL, dim=2)
        seq = seq_of("q", np.zeros((5, 2)))
        with pytest.raises(EmptyDatastoreError):
            segment_level_labels(seq, store, n=2, k=1, seed=17)


class TestUtteranceLevelLabels:
    def test_no_refinement_sizes(self):
        rng = np.random.default_rng(3)
        keys = rng.normal(size=(20, 4))
        store_o = store_with_keys(keys, [1] * 20)
        store_r = store_with_keys(keys, [0] * 20, channel=Channel.REVERSED)
        seq_o = seq_of("q", rng.normal(size=(6, 4)))
        seq_r = seq_of("q", rng.normal(size=(6, 4)), channel=Channel.REVERSED)
        labels_o, labels_r, _, _ = utterance_level_labels(
            seq_o, seq_r, store_o, store_r, n=3, k=5
        )
        assert len(labels_o) == 15 and len(labels_r) == 15  # min(n*k, 20)
        big_o, big_r, _, _ = utterance_level_labels(
            seq_o, seq_r, store_o, store_r, n=5, k=5
        )
        assert len(big_o) == 20 and len(big_r) == 20  # store smaller than n*k

    def test_age_filter_keeps_exact_matches(self):
        rng = np.random.default_rng(4)
        keys = rng.normal(size=(10, 3))
        ages = [AgeGroup.GE60 if i in (2, 5, 7) else AgeGroup.LE39 for i in range(10)]
        labels = [i % 2 for i in range(10)]
        store = store_with_keys(keys, labels, ages=ages)
        seq = seq_of("q", rng.normal(size=(5, 3)))
        labels_o, _, hits_o, _ = utterance_level_labels(
            seq, None, store, None, n=2, k=5,
            refinement=Refinement.AGE, age_group=AgeGroup.GE60,
        )
        assert {h.sample_id for h in hits_o} == {"e2", "e5", "e7"}
        assert labels_o == [h.label for h in hits_o]

    def test_reversed_copy_gives_identical_multisets(self):
        rng = np.random.default_rng(5)
        keys = rng.normal(size=(12, 4))
        labels = [int(rng.integers(2)) for _ in range(12)]
        store_o = store_with_keys(keys, labels)
        store_r = store_with_keys(keys, labels, channel=Channel.REVERSED)
        frames = rng.normal(size=(7, 4))
        seq_o = seq_of("q", frames)
        seq_r = seq_of("q", frames, channel=Channel.REVERSED)
        labels_o, labels_r, hits_o, hits_r = utterance_level_labels(
            seq_o, seq_r, store_o, store_r, n=2, k=3
        )
        assert labels_o == labels_r
        assert [h.sample_id for h in hits_o] == [h.sample_id for h in hits_r]

    def test_filter_can_empty_a_path(self):
        store = store_with_keys(np.zeros((4, 2)), [1] * 4,
                                ages=[AgeGroup.LE39] * 4)
        seq = seq_of("q", np.zeros((3, 2)))
        labels_o, labels_r, _, _ = utterance_level_labels(
            seq, None, store, None, n=1, k=2,
            refinement=Refinement.AGE, age_group=AgeGroup.GE60,
        )
        assert labels_o == [] and labels_r == []


class TestAssess:
    def _features(self, rng, config, dim=4, t=10):
        out = {}
        for pair in config.required_pairs():
            out[pair] = seq_of("q", rng.normal(size=(t, dim)), layer=pair[0],
                               channel=pair[1])
        return out

    def _stores(self, rng, config, labels_fn, size=12, dim=4):
        stores = {}
        for pair in config.required_pairs():
            keys = rng.normal(size=(size, dim))
            stores[pair] = store_with_keys(
                keys, [labels_fn(i) for i in range(size)], layer=pair[0],
                channel=pair[1],
            )
        return stores

    def test_all_label_one(self):
        rng = np.random.default_rng(6)
        config = InferenceConfig(layers=(3, 4), n_per_layer={3: 2, 4: 2})
        stores = self._stores(rng, config, lambda i: 1)
        features = self._features(rng, config)
        result = assess(SampleRecord("q", 0), features, stores, config)
        assert result.final_score == 1.0
        assert result.decision == 1
        assert all(s.score == 1.0 for s in result.layer_scores)

    def test_exact_half_is_negative_decision(self):
        # One layer, utterance path only, n=2, k=2: the four nearest entries
        # carry labels 1,1,0,0, so the pooled score is exactly 0.5.
        config = InferenceConfig(
            layers=(3,), n_per_layer={3: 2}, k=2,
            use_segment=False, use_utterance_reversed=False,
        )
        keys = [[1.0], [2.0], [3.0], [4.0], [50.0]]
        labels = [1, 1, 0, 0, 1]
        store = store_with_keys(keys, labels)
        features = {(3, Channel.ORIGINAL): seq_of("q", [[0.0]])}
        result = assess(SampleRecord("q", 0), features,
                        {(3, Channel.ORIGINAL): store}, config)
        assert result.final_score == 0.5
        assert result.decision == 0  # strict inequality at the threshold

    def test_score_bounds_and_layer_average(self):
        rng = np.random.default_rng(7)
        config = InferenceConfig(layers=(3, 4, 5), n_per_layer={3: 2, 4: 2, 5: 2})
        stores = self._stores(rng, config, lambda i: i % 2)
        features = self._features(rng, config)
        result = assess(SampleRecord("q", 0), features, stores, config)
        assert 0.0 <= result.final_score <= 1.0
        want = mean_oracle([s.score for s in result.layer_scores])
        assert result.final_score == pytest.approx(want, abs=1e-12)

    def test_provenance_keys(self):
        rng = np.random.default_rng(8)
        config = InferenceConfig(layers=(3,), n_per_layer={3: 2})
        stores = self._stores(rng, config, lambda i: 1)
        features = self._features(rng, config)
        result = assess(SampleRecord("q", 0), features, stores, config)
        assert set(result.provenance) == {
            "layer3/segment", "layer3/utterance", "layer3/utterance_reversed",
        }

    def test_exclude_self_equals_store_without_sample(self):
        rng = np.random.default_rng(9)
        config = InferenceConfig(layers=(3,), n_per_layer={3: 2}, exclude_self=True)
        keys = rng.normal(size=(10, 4))
        labels = [i % 2 for i in range(10)]
        frames = rng.normal(size=(8, 4))
        seq_o = seq_of("q", frames)
        seq_r = seq_of("q", frames[::-1], channel=Channel.REVERSED)

        def build_stores(include_query):
            stores = {}
            for channel, seq in ((Channel.ORIGINAL, seq_o), (Channel.REVERSED, seq_r)):
                store = store_with_keys(keys, labels, channel=channel)
                if include_query:
                    store.add(SampleRecord("q", 1), seq)
                stores[(3, channel)] = store
            return stores

        features = {(3, Channel.ORIGINAL): seq_o, (3, Channel.REVERSED): seq_r}
        with_self = assess(SampleRecord("q", 1), features, build_stores(True), config)
        without = assess(
            SampleRecord("q", 1), features, build_stores(False),
            InferenceConfig(layers=(3,), n_per_layer={3: 2}, exclude_self=False),
        )
        assert with_self.final_score == without.final_score
        for key in with_self.provenance:
            got = [(h.sample_id, h.squared_l2_distance) for h in with_self.provenance[key]]
            want = [(h.sample_id, h.squared_l2_distance) for h in without.provenance[key]]
            assert got == want

    def test_insertion_order_permutation_invariance(self):
        rng = np.random.default_rng(10)
        config = InferenceConfig(layers=(3,), n_per_layer={3: 2})
        keys = rng.normal(size=(10, 4))
        labels = [i % 2 for i in range(10)]
        perm = rng.permutation(10)
        frames = rng.normal(size=(9, 4))
        features = {
            (3, Channel.ORIGINAL): seq_of("q", frames),
            (3, Channel.REVERSED): seq_of("q", frames[::-1], channel=Channel.REVERSED),
        }

        def stores_in_order(order):
            out = {}
            for channel in (Channel.ORIGINAL, Channel.REVERSED):
                out[(3, channel)] = store_with_keys(
                    [keys[i] for i in order], [labels[i] for i in order],
                    channel=channel, ids=[f"e{i}" for i in order],
                )
            return out

        a = assess(SampleRecord("q", 0), features, stores_in_order(range(10)), config)
        b = assess(SampleRecord("q", 0), features, stores_in_order(perm), config)
        assert a.final_score == b.final_score

    def test_label_flip_monotonicity(self):
        rng = np.random.default_rng(11)
        config = InferenceConfig(layers=(3,), n_per_layer={3: 2})
        keys = rng.normal(size=(8, 3))
        base_labels = [0] * 8
        frames = rng.normal(size=(6, 3))
        features = {
            (3, Channel.ORIGINAL): seq_of("q", frames),
            (3, Channel.REVERSED): seq_of("q", frames[::-1], channel=Channel.REVERSED),
        }

        def run(labels):
            stores = {
                (3, ch): store_with_keys(keys, labels, channel=ch)
                for ch in (Channel.ORIGINAL, Channel.REVERSED)
            }
            return assess(SampleRecord("q", 0), features, stores, config).final_score

        baseline = run(base_labels)
        for flip in range(8):
            labels = list(base_labels)
            labels[flip] = 1
            assert run(labels) >= baseline

    def test_n1_single_path_reduces_to_knn_oracle(self):
        rng = np.random.default_rng(12)
        config = InferenceConfig(
            layers=(3,), n_per_layer={3: 1}, k=5,
            use_segment=False, use_utterance_reversed=False,
            refinement=Refinement.NONE,
        )
        keys = rng.normal(size=(30, 4)).astype(np.float32)
        labels = [int(rng.integers(2)) for _ in range(30)]
        store = store_with_keys(keys, labels)
        frames = rng.normal(size=(7, 4)).astype(np.float32)
        features = {(3, Channel.ORIGINAL): seq_of("q", frames)}
        result = assess(SampleRecord("q", 0), features,
                        {(3, Channel.ORIGINAL): store}, config)
        want = knn_label_proportion_oracle(keys, labels, temporal_mean(features[(3, Channel.ORIGINAL)]), 5)
        assert result.final_score == pytest.approx(want, abs=1e-12)

    def test_pool_vs_average_differ_under_refinement(self):
        # Two tight key blobs at -10 and +10 carry label 1; a lone label-0
        # entry with the only matching age sits at 0. Segment queries land on
        # the blobs (ten label-1 hits); the pooled utterance query lands at 0
        # and the age filter keeps only the label-0 entry. Pooling then gives
        # 10/11 while averaging the two path proportions gives 1/2.
        keys = [[-10.0], [-10.2], [-10.4], [-10.6], [-10.8],
                [10.0], [10.2], [10.4], [10.6], [10.8], [0.0]]
        labels = [1] * 10 + [0]
        ages = [AgeGroup.LE39] * 10 + [AgeGroup.GE60]
        base = dict(
            layers=(3,), n_per_layer={3: 2}, k=5,
            use_utterance_reversed=False, refinement=Refinement.AGE,
        )
        store = store_with_keys(keys, labels, ages=ages)
        frames = [[-10.1], [-10.3], [-10.5], [10.1], [10.3], [10.5]]
        features = {(3, Channel.ORIGINAL): seq_of("q", frames)}
        record = SampleRecord("q", 0, age_group=AgeGroup.GE60)
        stores = {(3, Channel.ORIGINAL): store}

        pooled = assess(record, features, stores,
                        InferenceConfig(**base, combine=Combine.POOL))
        averaged = assess(record, features, stores,
                          InferenceConfig(**base, combine=Combine.AVERAGE))
        assert pooled.final_score == pytest.approx(10 / 11, abs=1e-12)
        assert averaged.final_score == pytest.approx((1.0 + 0.0) / 2, abs=1e-12)

    def test_all_paths_filtered_raises(self):
        store = store_with_keys(np.zeros((4, 2)), [1] * 4, ages=[AgeGroup.LE39] * 4)
        config = InferenceConfig(
            layers=(3,), n_per_layer={3: 1}, use_segment=False,
            use_utterance_reversed=False, refinement=Refinement.AGE,
        )
        features = {(3, Channel.ORIGINAL): seq_of("q", np.zeros((3, 2)))}
        record = SampleRecord("q", 0, age_group=AgeGroup.GE60)
        with pytest.raises(NoLabelsRetrievedError):
            assess(record, features, {(3, Channel.ORIGINAL): store}, config)

    def test_missing_feature_pair_rejected(self):
        config = InferenceConfig(layers=(3,), n_per_layer={3: 2})
        with pytest.raises(SpeechScreenError):
            assess(SampleRecord("q", 0), {}, {}, config)


class TestAssessBatch:
    def _setup(self, corpus, layers=(3, 4)):
        root, manifest, records = corpus
        from speechscreen.datastore import build_from_manifest

        config = InferenceConfig(
            layers=layers, n_per_layer={l: 2 for l in layers}, k=3
        )
        stores = {}
        for layer in layers:
            for channel in (Channel.ORIGINAL, Channel.REVERSED):
                stores[(layer, channel)] = build_from_manifest(
                    records, root, layer, channel, split=Split.TRAIN
                )
        loader = manifest_feature_loader(root, config.required_pairs())
        test_records = [r for r in records if r.split is Split.TEST]
        return config, stores, loader, test_records

    def test_empty_split(self, corpus):
        config, stores, loader, _ = self._setup(corpus)
        results, failures = assess_batch([], loader, stores, config)
        assert results == [] and failures == []

    def test_batch_equals_one_by_one(self, corpus):
        config, stores, loader, test_records = self._setup(corpus)
        batch, failures = assess_batch(test_records, loader, stores, config)
        assert failures == []
        for record, from_batch in zip(test_records, batch):
            single = assess(record, loader(record), stores, config)
            assert single.final_score == from_batch.final_score
            assert single.sample_id == from_batch.sample_id

    def test_jobs_do_not_change_results(self, corpus):
        config, stores, loader, test_records = self._setup(corpus)
        serial, _ = assess_batch(test_records, loader, stores, config, jobs=1)
        parallel, _ = assess_batch(test_records, loader, stores, config, jobs=4)
        assert [r.sample_id for r in serial] == [r.sample_id for r in parallel]
        assert [r.final_score for r in serial] == [r.final_score for r in parallel]

    def test_corrupt_file_becomes_structured_failure(self, corpus):
        root, manifest, records = corpus
        config, stores, loader, test_records = self._setup(corpus)
        victim = test_records[0]
        victim_path = root / victim.feature_paths[(3, Channel.ORIGINAL)]
        victim_path.write_bytes(b"garbage")
        results, failures = assess_batch(test_records[:2], loader, stores, config)
        assert len(results) == 1 and len(failures) == 1
        assert failures[0].sample_id == victim.sample_id
        assert "Error" in failures[0].error
