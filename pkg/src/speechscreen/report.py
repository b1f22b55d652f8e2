"""Report emission: CSV, JSON and SVG outputs for evaluation runs.

All writers are deterministic (no timestamps, stable key order), so
repeated runs over identical inputs produce byte-identical files.  Score
standard deviations are population (not sample) values; report headers say
so, and carry the seed that produced the scores.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict
from pathlib import Path
from typing import Sequence

from .evaluation import AblationRow, EvalReport, score_histogram
from .inference import AssessmentResult, BatchFailure, InferenceConfig


def _fmt(value: float | None) -> str:
    if value is None:
        return "undefined"
    return f"{value:.6f}"


def config_summary(config: InferenceConfig) -> dict:
    return {
        "layers": list(config.layers),
        "n_per_layer": {str(l): config.n_per_layer[l] for l in config.layers},
        "k": config.k,
        "refinement": config.refinement.value,
        "paths": {
            "segment": config.use_segment,
            "utterance": config.use_utterance,
            "utterance_reversed": config.use_utterance_reversed,
        },
        "threshold": config.threshold,
        "exclude_self": config.exclude_self,
        "combine": config.combine.value,
        "seed": config.seed,
    }


def report_to_dict(report: EvalReport) -> dict:
    return {
        "roc_auc": report.roc_auc,
        "sensitivity": report.sensitivity,
        "specificity": report.specificity,
        "threshold": report.threshold,
        "n_pos": report.n_pos,
        "n_neg": report.n_neg,
        "score_stats": {name: asdict(stats) for name, stats in report.score_stats.items()},
        "std_kind": "population",
    }


def result_to_dict(result: AssessmentResult, provenance: bool = False) -> dict:
    out = {
        "sample_id": result.sample_id,
        "layer_scores": {str(s.layer): s.score for s in result.layer_scores},
        "final_score": result.final_score,
        "decision": result.decision,
    }
    if provenance:
        out["provenance"] = {
            path: [
                {
                    "sample_id": h.sample_id,
                    "squared_l2_distance": h.squared_l2_distance,
                    "label": h.label,
                }
                for h in hits
            ]
            for path, hits in sorted(result.provenance.items())
        }
    return out


def write_results_jsonl(
    results: Sequence[AssessmentResult],
    failures: Sequence[BatchFailure],
    path: str | Path,
    provenance: bool = False,
) -> None:
    """One JSON line per assessed sample, then one per failed sample."""
    lines = [json.dumps(result_to_dict(r, provenance), sort_keys=True) for r in results]
    lines += [
        json.dumps({"sample_id": f.sample_id, "error": f.error}, sort_keys=True)
        for f in failures
    ]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def load_results_jsonl(path: str | Path) -> tuple[list[dict], list[dict]]:
    """Read back an assess run; returns (results, failures)."""
    results: list[dict] = []
    failures: list[dict] = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        (failures if "error" in obj else results).append(obj)
    return results, failures


def write_eval_json(
    report: EvalReport, config: InferenceConfig, path: str | Path, extra: dict | None = None
) -> None:
    payload = {"config": config_summary(config), "metrics": report_to_dict(report)}
    if extra:
        payload.update(extra)
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_roc_csv(report: EvalReport, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fpr", "tpr"])
        for fpr, tpr in report.roc_points:
            writer.writerow([f"{fpr:.9f}", f"{tpr:.9f}"])


def write_scores_csv(
    results: Sequence[AssessmentResult], labels: dict[str, int], path: str | Path
) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "label", "final_score", "decision"])
        for r in results:
            writer.writerow(
                [r.sample_id, labels[r.sample_id], f"{r.final_score:.9f}", r.decision]
            )


def write_selection_csv(selection, path_or_handle) -> None:
    """CSV for segment-count selection: candidate_n, mean_silhouette, sequences_skipped."""

    def emit(fh) -> None:
        writer = csv.writer(fh)
        writer.writerow(["candidate_n", "mean_silhouette", "sequences_skipped"])
        for n in selection.candidates:
            writer.writerow(
                [n, f"{selection.mean_silhouette[n]:.6f}", selection.sequences_skipped[n]]
            )

    if hasattr(path_or_handle, "write"):
        emit(path_or_handle)
    else:
        with open(path_or_handle, "w", newline="", encoding="utf-8") as fh:
            emit(fh)


def write_ablation_csv(rows: Sequence[AblationRow], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["axis", "value", "roc_auc", "sensitivity", "specificity",
             "n_pos", "n_neg", "n_failures"]
        )
        for row in rows:
            writer.writerow(
                [
                    row.axis,
                    row.value,
                    f"{row.report.roc_auc:.6f}",
                    _fmt(row.report.sensitivity),
                    _fmt(row.report.specificity),
                    row.report.n_pos,
                    row.report.n_neg,
                    row.n_failures,
                ]
            )


def write_histogram_csv(scores, labels, path: str | Path, bins: int = 20) -> None:
    rows = score_histogram(scores, labels, bins=bins)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_low", "bin_high", "asymptomatic", "symptomatic"])
        for row in rows:
            writer.writerow(
                [
                    f"{row['bin_low']:.4f}",
                    f"{row['bin_high']:.4f}",
                    row["asymptomatic"],
                    row["symptomatic"],
                ]
            )


def write_histogram_svg(scores, labels, path: str | Path, bins: int = 20) -> None:
    """Self-contained side-by-side bar chart of the two class histograms."""
    rows = score_histogram(scores, labels, bins=bins)
    width, height = 640, 360
    margin_l, margin_b, margin_t = 50, 40, 20
    plot_w = width - margin_l - 10
    plot_h = height - margin_b - margin_t
    peak = max(1, max(max(r["asymptomatic"], r["symptomatic"]) for r in rows))
    bar_w = plot_w / bins / 2

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin_l}" y1="{margin_t + plot_h}" x2="{margin_l + plot_w}" '
        f'y2="{margin_t + plot_h}" stroke="black"/>',
        f'<line x1="{margin_l}" y1="{margin_t}" x2="{margin_l}" '
        f'y2="{margin_t + plot_h}" stroke="black"/>',
    ]
    for b, row in enumerate(rows):
        x0 = margin_l + b * (plot_w / bins)
        for offset, key, color in ((0, "asymptomatic", "#4878a8"), (1, "symptomatic", "#c44e52")):
            h = plot_h * row[key] / peak
            parts.append(
                f'<rect x="{x0 + offset * bar_w:.2f}" y="{margin_t + plot_h - h:.2f}" '
                f'width="{bar_w:.2f}" height="{h:.2f}" fill="{color}"/>'
            )
    for tick in (0.0, 0.25, 0.5, 0.75, 1.0):
        x = margin_l + tick * plot_w
        parts.append(
            f'<text x="{x:.1f}" y="{margin_t + plot_h + 16}" font-size="11" '
            f'text-anchor="middle">{tick:g}</text>'
        )
    parts.append(
        f'<text x="{margin_l}" y="{margin_t - 6}" font-size="11">count (peak {peak})</text>'
    )
    parts.append(
        f'<text x="{margin_l + plot_w - 170}" y="{margin_t + 4}" font-size="11" '
        f'fill="#4878a8">asymptomatic</text>'
    )
    parts.append(
        f'<text x="{margin_l + plot_w - 70}" y="{margin_t + 4}" font-size="11" '
        f'fill="#c44e52">symptomatic</text>'
    )
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n", encoding="utf-8")
