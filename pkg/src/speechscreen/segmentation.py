"""Segment-level feature construction.

An utterance's frame vectors are clustered with seeded k-means (k-means++
initialization, Lloyd iterations); the per-cluster temporal means become the
segment-level features.  The dataset-wide segment count is chosen by the
mean silhouette score over a sample of sequences.

Clusters group frames by feature-space similarity; they are not required to
be contiguous in time.
"""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .errors import NoValidCandidateError, SingleClusterError, TooFewFramesError
from .ingest import FeatureSequence

KMEANS_MAX_ITER = 300
KMEANS_SHIFT_TOL = 1e-4  # relative to the mean per-feature variance of the input


def derive_seed(root_seed: int, sample_id: str) -> int:
    """Per-sequence seed: root_seed mixed with a stable hash of the id.

    The hash is the first 8 bytes of blake2b(sample_id), little-endian, so
    seeds do not depend on process hash randomization or scheduling order.
    """
    digest = hashlib.blake2b(sample_id.encode("utf-8"), digest_size=8).digest()
    return (int(root_seed) ^ int.from_bytes(digest, "little")) & 0xFFFFFFFFFFFFFFFF


@dataclass
class ClusterAssignment:
    """Result of one k-means run.

    ``centroids`` are the block means of the final assignment, so every
    cluster index in [0, n) is non-empty and ``inertia`` is the within-block
    sum of squared distances.  ``inertia_history`` records the objective
    after every Lloyd iteration.
    """

    assignments: np.ndarray
    centroids: np.ndarray
    inertia: float
    inertia_history: list[float] = field(default_factory=list)
    n_iter: int = 0

    @property
    def n_clusters(self) -> int:
        return int(self.centroids.shape[0])


@dataclass
class SegmentCountSelection:
    candidates: list[int]
    mean_silhouette: dict[int, float]
    selected_n: int
    sequences_skipped: dict[int, int] = field(default_factory=dict)


def _pairwise_sq_dists(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Squared distances point-to-center via the expansion identity, clipped at 0.

    The cross term deliberately goes through einsum (not BLAS matmul) so the
    reduction order, and hence the result, is identical on any machine or
    thread configuration.
    """
    p2 = np.einsum("nd,nd->n", points, points)
    c2 = np.einsum("kd,kd->k", centers, centers)
    d2 = p2[:, None] - 2.0 * np.einsum("nd,kd->nk", points, centers) + c2[None, :]
    np.maximum(d2, 0.0, out=d2)
    return d2


def _kmeans_pp_init(frames: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Seeded k-means++: first center uniform, the rest weighted by min squared distance."""
    t = frames.shape[0]
    centers = np.empty((n, frames.shape[1]), dtype=np.float64)
    first = int(rng.integers(t))
    centers[0] = frames[first]
    if n == 1:
        return centers
    diff = frames - centers[0]
    d2 = np.einsum("nd,nd->n", diff, diff)
    for j in range(1, n):
        total = float(d2.sum())
        if total > 0.0:
            idx = int(rng.choice(t, p=d2 / total))
        else:
            # All remaining mass is on already-chosen points (duplicates).
            idx = int(rng.integers(t))
        centers[j] = frames[idx]
        diff = frames - centers[j]
        np.minimum(d2, np.einsum("nd,nd->n", diff, diff), out=d2)
    return centers


def _repair_empty_clusters(
    assign: np.ndarray, point_d2: np.ndarray, counts: np.ndarray
) -> None:
    """Give each empty cluster the farthest reassignable point (in place)."""
    empties = np.flatnonzero(counts == 0)
    if empties.size == 0:
        return
    order = np.argsort(-point_d2, kind="stable")
    cursor = 0
    for empty in empties:
        while cursor < order.size:
            p = int(order[cursor])
            cursor += 1
            if counts[assign[p]] >= 2:
                counts[assign[p]] -= 1
                assign[p] = empty
                counts[empty] = 1
                break
        else:
            raise RuntimeError("empty-cluster repair ran out of reassignable points")


def kmeans(
    frames: np.ndarray,
    n: int,
    seed: int,
    max_iter: int = KMEANS_MAX_ITER,
    tol: float = KMEANS_SHIFT_TOL,
) -> ClusterAssignment:
    """Seeded Lloyd's k-means over frame vectors.

    Deterministic for a fixed seed regardless of thread count.  Stops when
    assignments stabilize, when the squared centroid shift falls below
    ``tol`` times the mean per-feature variance of the input, or after
    ``max_iter`` iterations.
    """
    x = np.ascontiguousarray(frames, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"frames must be 2-D, got shape {x.shape}")
    t = x.shape[0]
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if t < n:
        raise TooFewFramesError(f"{t} frames cannot form {n} clusters")

    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp_init(x, n, rng)
    shift_tol = tol * float(np.var(x, axis=0).mean())

    assign = np.full(t, -1, dtype=np.int64)
    history: list[float] = []
    n_iter = 0
    for _ in range(max_iter):
        n_iter += 1
        d2 = _pairwise_sq_dists(x, centroids)
        new_assign = d2.argmin(axis=1)  # ties resolve to the lowest cluster index
        counts = np.bincount(new_assign, minlength=n)
        if (counts == 0).any():
            point_d2 = d2[np.arange(t), new_assign]
            _repair_empty_clusters(new_assign, point_d2, counts)

        sums = np.zeros((n, x.shape[1]), dtype=np.float64)
        np.add.at(sums, new_assign, x)
        new_centroids = sums / counts[:, None]

        resid = x - new_centroids[new_assign]
        inertia = float(np.einsum("nd,nd->", resid, resid))
        if history:
            assert inertia <= history[-1] * (1.0 + 1e-12) + 1e-12, (
                f"inertia increased: {history[-1]} -> {inertia}"
            )
        history.append(inertia)

        stable = bool(np.array_equal(new_assign, assign))
        shift = float(((new_centroids - centroids) ** 2).sum())
        assign = new_assign
        centroids = new_centroids
        if stable or shift <= shift_tol:
            break

    return ClusterAssignment(
        assignments=assign,
        centroids=centroids,
        inertia=history[-1],
        inertia_history=history,
        n_iter=n_iter,
    )


def mean_silhouette(frames: np.ndarray, assignment: ClusterAssignment) -> float:
    """Mean silhouette coefficient of an assignment, in [-1, 1].

    Per frame: s = (b - a) / max(a, b) with a the mean Euclidean distance to
    the frame's own cluster (self excluded) and b the smallest mean distance
    to any other cluster.  Frames in singleton clusters score 0, as do
    frames where a = b = 0.
    """
    n = assignment.n_clusters
    if n < 2:
        raise SingleClusterError(f"silhouette needs >= 2 clusters, got {n}")
    x = np.ascontiguousarray(frames, dtype=np.float64)
    assign = assignment.assignments
    t = x.shape[0]

    dists = cdist(x, x)
    onehot = np.zeros((t, n), dtype=np.float64)
    onehot[np.arange(t), assign] = 1.0
    cluster_sums = dists @ onehot  # [i, c] = total distance from i to cluster c
    counts = onehot.sum(axis=0)

    own = assign
    own_counts = counts[own]
    scores = np.zeros(t, dtype=np.float64)
    multi = own_counts > 1
    a = np.zeros(t)
    a[multi] = cluster_sums[np.arange(t), own][multi] / (own_counts[multi] - 1.0)

    safe_counts = np.maximum(counts, 1.0)
    mean_to = cluster_sums / safe_counts[None, :]
    mean_to[:, counts == 0] = np.inf  # hand-built assignments may skip an index
    mean_to[np.arange(t), own] = np.inf
    b = mean_to.min(axis=1)

    denom = np.maximum(a, b)
    valid = multi & (denom > 0.0)
    scores[valid] = (b[valid] - a[valid]) / denom[valid]
    return float(scores.mean())


def segment_features(seq: FeatureSequence, n: int, seed: int) -> np.ndarray:
    """Per-cluster temporal means as an (n, D) float32 matrix, by cluster index.

    The size-weighted mean of the rows equals the utterance's temporal mean.
    """
    result = kmeans(seq.frames, n, seed)
    return result.centroids.astype(np.float32)


def _one_candidate_score(seq: FeatureSequence, n: int, seed: int) -> float | None:
    if seq.num_frames < n:
        return None
    if seq.num_frames == n:
        # Every frame its own cluster: each silhouette term is 0 by the
        # singleton rule, so skip the cluster run.
        return 0.0
    return mean_silhouette(seq.frames, kmeans(seq.frames, n, derive_seed(seed, seq.sample_id)))


def select_n(
    sequences: list[FeatureSequence],
    candidates: list[int],
    seed: int,
    jobs: int = 1,
) -> SegmentCountSelection:
    """Pick the segment count with the best mean silhouette across sequences.

    For each candidate n, every sequence is clustered with its own derived
    seed and scored; sequences with fewer than n frames are skipped and
    counted.  Ties (and exact float equality does occur for degenerate
    data) resolve to the smallest candidate.
    """
    if not candidates:
        raise ValueError("candidates must be non-empty")
    cleaned = sorted(set(int(c) for c in candidates))
    if cleaned[0] < 2:
        raise ValueError(f"candidates must all be >= 2, got {cleaned[0]}")
    if not sequences:
        raise NoValidCandidateError("no sequences supplied")

    means: dict[int, float] = {}
    skipped: dict[int, int] = {}

    def score_all(n: int) -> tuple[list[float], int]:
        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                raw = list(pool.map(lambda s: _one_candidate_score(s, n, seed), sequences))
        else:
            raw = [_one_candidate_score(s, n, seed) for s in sequences]
        kept = [r for r in raw if r is not None]
        return kept, len(raw) - len(kept)

    for n in cleaned:
        kept, skip_count = score_all(n)
        skipped[n] = skip_count
        means[n] = float(np.mean(kept)) if kept else math.nan

    usable = [n for n in cleaned if not math.isnan(means[n])]
    if not usable:
        raise NoValidCandidateError(
            f"all {len(sequences)} sequences were skipped for every candidate"
        )
    selected = max(usable, key=lambda n: (means[n], -n))
    return SegmentCountSelection(
        candidates=cleaned,
        mean_silhouette=means,
        selected_n=selected,
        sequences_skipped=skipped,
    )
