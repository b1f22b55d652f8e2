"""Evaluation metrics: ROC AUC, sensitivity/specificity, score distributions,
and the ablation harness over retrieval paths, refinement modes, and layers.

The symptomatic label (1) is the positive class throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import EmptyClassError, SingleClassError
from .inference import (
    AssessmentResult,
    BatchFailure,
    InferenceConfig,
    Refinement,
    assess_batch,
)
from .ingest import SampleRecord


def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """ROC AUC by concordant-pair counting with half credit for ties.

    Exactly (#{pos > neg} + 0.5 * #{pos == neg}) / (n_pos * n_neg), computed
    by a single sweep over the scores sorted into tie groups, so the count
    arithmetic stays in integers.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise SingleClassError(
            f"ROC AUC needs both classes, got {n_pos} positive / {n_neg} negative"
        )
    order = np.argsort(s, kind="stable")
    s_sorted = s[order]
    y_sorted = y[order]

    concordant = 0
    tied = 0
    neg_seen = 0
    i = 0
    n = len(s_sorted)
    while i < n:
        j = i
        while j < n and s_sorted[j] == s_sorted[i]:
            j += 1
        pos_here = int((y_sorted[i:j] == 1).sum())
        neg_here = (j - i) - pos_here
        concordant += pos_here * neg_seen  # every negative strictly below
        tied += pos_here * neg_here
        neg_seen += neg_here
        i = j
    return (concordant + 0.5 * tied) / (n_pos * n_neg)


def roc_points(scores: Sequence[float], labels: Sequence[int]) -> list[tuple[float, float]]:
    """ROC curve vertices from (0,0) to (1,1), one per distinct score.

    Tied scores move diagonally, so the trapezoidal area under these points
    equals the pair-counting AUC.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise SingleClassError(
            f"ROC curve needs both classes, got {n_pos} positive / {n_neg} negative"
        )
    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    y_sorted = y[order]

    points = [(0.0, 0.0)]
    tp = 0
    fp = 0
    i = 0
    n = len(s_sorted)
    while i < n:
        j = i
        while j < n and s_sorted[j] == s_sorted[i]:
            j += 1
        tp += int((y_sorted[i:j] == 1).sum())
        fp += (j - i) - int((y_sorted[i:j] == 1).sum())
        points.append((fp / n_neg, tp / n_pos))
        i = j
    return points


def trapezoid_area(points: Sequence[tuple[float, float]]) -> float:
    """Area under a piecewise-linear curve given as (x, y) vertices."""
    area = 0.0
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        area += (x1 - x0) * (y0 + y1) / 2.0
    return area


def confusion_at(
    scores: Sequence[float], labels: Sequence[int], threshold: float
) -> tuple[float | None, float | None]:
    """(sensitivity, specificity) for prediction = score > threshold (strict).

    A rate whose class is absent is returned as None, not 0.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if len(s) == 0:
        raise ValueError("scores must be non-empty")
    pred = s > threshold
    tp = int((pred & (y == 1)).sum())
    fn = int((~pred & (y == 1)).sum())
    tn = int((~pred & (y == 0)).sum())
    fp = int((pred & (y == 0)).sum())
    sensitivity = tp / (tp + fn) if (tp + fn) > 0 else None
    specificity = tn / (tn + fp) if (tn + fp) > 0 else None
    return sensitivity, specificity


@dataclass
class ClassStats:
    n: int
    mean: float
    std: float  # population standard deviation


def score_distribution(
    scores: Sequence[float], labels: Sequence[int]
) -> dict[str, ClassStats]:
    """Per-class score mean and population standard deviation."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    out: dict[str, ClassStats] = {}
    for name, label in (("asymptomatic", 0), ("symptomatic", 1)):
        cls = s[y == label]
        if cls.size == 0:
            raise EmptyClassError(f"no {name} samples")
        out[name] = ClassStats(
            n=int(cls.size), mean=float(cls.mean()), std=float(cls.std(ddof=0))
        )
    return out


def score_histogram(
    scores: Sequence[float], labels: Sequence[int], bins: int = 20
) -> list[dict]:
    """Per-class score counts over equal-width bins spanning [0, 1]."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    edges = np.linspace(0.0, 1.0, bins + 1)
    rows = []
    pos_counts, _ = np.histogram(s[y == 1], bins=edges)
    neg_counts, _ = np.histogram(s[y == 0], bins=edges)
    for b in range(bins):
        rows.append(
            {
                "bin_low": float(edges[b]),
                "bin_high": float(edges[b + 1]),
                "asymptomatic": int(neg_counts[b]),
                "symptomatic": int(pos_counts[b]),
            }
        )
    return rows


@dataclass
class EvalReport:
    roc_auc: float
    sensitivity: float | None
    specificity: float | None
    threshold: float
    n_pos: int
    n_neg: int
    score_stats: dict[str, ClassStats]
    roc_points: list[tuple[float, float]]


def evaluate_scores(
    scores: Sequence[float], labels: Sequence[int], threshold: float = 0.5
) -> EvalReport:
    """Full metric report for one set of assessment scores."""
    y = np.asarray(labels)
    sensitivity, specificity = confusion_at(scores, labels, threshold)
    return EvalReport(
        roc_auc=roc_auc(scores, labels),
        sensitivity=sensitivity,
        specificity=specificity,
        threshold=threshold,
        n_pos=int((y == 1).sum()),
        n_neg=int((y == 0).sum()),
        score_stats=score_distribution(scores, labels),
        roc_points=roc_points(scores, labels),
    )


@dataclass
class AblationRow:
    axis: str
    value: str
    config: InferenceConfig
    report: EvalReport
    n_failures: int


# Retrieval-path ablations mirror the reported variants: everything enabled,
# or exactly one path.
PATH_VARIANTS: Mapping[str, tuple[bool, bool, bool]] = {
    "all": (True, True, True),
    "segment": (True, False, False),
    "utterance": (False, True, False),
    "utterance_reversed": (False, False, True),
}


def _path_config(base: InferenceConfig, variant: str) -> InferenceConfig:
    seg, utt, rev = PATH_VARIANTS[variant]
    return replace(
        base, use_segment=seg, use_utterance=utt, use_utterance_reversed=rev
    )


def ablation_configs(
    base: InferenceConfig, axes: Sequence[str]
) -> list[tuple[str, str, InferenceConfig]]:
    """Expand ablation axes into labeled configurations.

    Supported axes: "paths" (all / segment / utterance / utterance_reversed),
    "refinement" (none / age / sex), "layers" (each configured layer alone).
    No axes yields the base configuration only.
    """
    known = {"paths", "refinement", "layers"}
    unknown = set(axes) - known
    if unknown:
        raise ValueError(f"unknown ablation axes: {sorted(unknown)}")
    if not axes:
        return [("base", "base", base)]
    out: list[tuple[str, str, InferenceConfig]] = []
    for axis in axes:
        if axis == "paths":
            for variant in PATH_VARIANTS:
                out.append(("paths", variant, _path_config(base, variant)))
        elif axis == "refinement":
            for mode in Refinement:
                out.append(("refinement", mode.value, replace(base, refinement=mode)))
        elif axis == "layers":
            for layer in base.layers:
                out.append(
                    (
                        "layers",
                        str(layer),
                        replace(
                            base,
                            layers=(layer,),
                            n_per_layer={layer: base.n_per_layer[layer]},
                        ),
                    )
                )
    return out


def evaluate_batch(
    records: Sequence[SampleRecord],
    feature_loader,
    stores,
    config: InferenceConfig,
    jobs: int = 1,
) -> tuple[EvalReport, list[AssessmentResult], list[BatchFailure]]:
    """Assess every record and report metrics against the manifest labels."""
    results, failures = assess_batch(records, feature_loader, stores, config, jobs=jobs)
    label_by_id = {r.sample_id: r.label for r in records}
    scores = [r.final_score for r in results]
    labels = [label_by_id[r.sample_id] for r in results]
    report = evaluate_scores(scores, labels, config.threshold)
    return report, results, failures


def ablation_run(
    records: Sequence[SampleRecord],
    feature_loader_factory: Callable[[InferenceConfig], Callable],
    stores,
    base_config: InferenceConfig,
    axes: Sequence[str],
    jobs: int = 1,
) -> list[AblationRow]:
    """Evaluate one configuration per ablation axis value.

    ``feature_loader_factory`` builds a loader for each configuration, since
    different path settings need different (layer, channel) features.
    """
    rows: list[AblationRow] = []
    for axis, value, config in ablation_configs(base_config, axes):
        report, _, failures = evaluate_batch(
            records, feature_loader_factory(config), stores, config, jobs=jobs
        )
        rows.append(
            AblationRow(
                axis=axis, value=value, config=config, report=report,
                n_failures=len(failures),
            )
        )
    return rows
