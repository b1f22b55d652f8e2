"""Command-line surface.

Every subcommand is a thin wrapper over the library: parse arguments, call
the core, print or write the result.  Outputs are deterministic given the
same inputs and seed.  Usage errors exit 2, data errors exit 1.

Options can come from a TOML config file (``--config``); explicit flags win
over the file.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import __version__
from .datastore import SNAPSHOT_FORMAT_VERSION, Datastore, build_from_manifest
from .errors import SpeechScreenError
from .evaluation import ablation_run, evaluate_batch
from .inference import (
    DEFAULT_SEED,
    Combine,
    InferenceConfig,
    Refinement,
    covid19_config,
    coswara_config,
    manifest_feature_loader,
)
from .ingest import FEATURE_FORMAT_VERSION, Channel, Split, load_manifest
from .report import (
    load_results_jsonl,
    write_ablation_csv,
    write_eval_json,
    write_histogram_csv,
    write_histogram_svg,
    write_results_jsonl,
    write_roc_csv,
    write_scores_csv,
    write_selection_csv,
)
from .segmentation import select_n as run_select_n


def _fail(message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


def _parse_candidates(text: str) -> list[int]:
    """Accept "2..10" ranges or "2,3,5" lists."""
    if ".." in text:
        low, _, high = text.partition("..")
        return list(range(int(low), int(high) + 1))
    return [int(part) for part in text.split(",") if part.strip()]


def _parse_n_map(text: str, layers: tuple[int, ...]) -> dict[int, int]:
    """Accept a single n ("2") or per-layer pairs ("3=2,4=73,5=73")."""
    if "=" not in text:
        n = int(text)
        return {layer: n for layer in layers}
    out: dict[int, int] = {}
    for part in text.split(","):
        layer, _, n = part.partition("=")
        out[int(layer)] = int(n)
    return out


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _resolve_config(
    config_path: str | None,
    preset: str | None,
    layers: str | None,
    n: str | None,
    k: int | None,
    refinement: str | None,
    paths: str | None,
    threshold: float | None,
    exclude_self: bool | None,
    combine: str | None,
    seed: int | None,
) -> InferenceConfig:
    """Merge preset < config file < explicit flags into an InferenceConfig."""
    if preset == "covid19":
        config = covid19_config()
    elif preset == "coswara":
        config = coswara_config()
    else:
        config = InferenceConfig()

    fields: dict = {}
    file_cfg = _load_config_file(config_path)
    inf = file_cfg.get("inference", {})
    if "layers" in inf:
        fields["layers"] = tuple(int(l) for l in inf["layers"])
    if "n_per_layer" in inf:
        fields["n_per_layer"] = {int(l): int(v) for l, v in inf["n_per_layer"].items()}
    if "k" in inf:
        fields["k"] = int(inf["k"])
    if "refinement" in inf:
        fields["refinement"] = Refinement(inf["refinement"])
    if "threshold" in inf:
        fields["threshold"] = float(inf["threshold"])
    if "exclude_self" in inf:
        fields["exclude_self"] = bool(inf["exclude_self"])
    if "combine" in inf:
        fields["combine"] = Combine(inf["combine"])
    for key, flag in (
        ("segment", "use_segment"),
        ("utterance", "use_utterance"),
        ("utterance_reversed", "use_utterance_reversed"),
    ):
        if key in inf:
            fields[flag] = bool(inf[key])
    if "seed" in file_cfg:
        fields["seed"] = int(file_cfg["seed"])

    if layers is not None:
        fields["layers"] = tuple(int(l) for l in layers.split(","))
    resolved_layers = fields.get("layers", config.layers)
    if n is not None:
        fields["n_per_layer"] = _parse_n_map(n, resolved_layers)
    elif "layers" in fields and "n_per_layer" not in fields:
        # Layer list changed without an explicit n map: keep known entries,
        # default new layers to the preset's smallest n.
        base_n = dict(config.n_per_layer)
        fallback = min(base_n.values())
        fields["n_per_layer"] = {l: base_n.get(l, fallback) for l in resolved_layers}
    if k is not None:
        fields["k"] = k
    if refinement is not None:
        fields["refinement"] = Refinement(refinement)
    if paths is not None:
        enabled = {p.strip() for p in paths.split(",")}
        if enabled == {"all"}:
            enabled = {"segment", "utterance", "utterance_reversed"}
        unknown = enabled - {"segment", "utterance", "utterance_reversed"}
        if unknown:
            raise click.BadParameter(f"unknown paths: {sorted(unknown)}")
        fields["use_segment"] = "segment" in enabled
        fields["use_utterance"] = "utterance" in enabled
        fields["use_utterance_reversed"] = "utterance_reversed" in enabled
    if threshold is not None:
        fields["threshold"] = threshold
    if exclude_self is not None:
        fields["exclude_self"] = exclude_self
    if combine is not None:
        fields["combine"] = Combine(combine)
    if seed is not None:
        fields["seed"] = seed

    from dataclasses import replace

    return replace(config, **fields) if fields else config


def _config_options(fn):
    """Shared inference-config options for assess/evaluate/ablate."""
    options = [
        click.option("--config", "config_path", type=click.Path(exists=True), default=None,
                     help="TOML config file; flags override it."),
        click.option("--preset", type=click.Choice(["covid19", "coswara"]), default=None),
        click.option("--layers", default=None, help="Comma-separated layer list, e.g. 3,4,5."),
        click.option("--n", default=None,
                     help="Segment count: one value or per-layer pairs 3=2,4=73,5=73."),
        click.option("--k", type=int, default=None, help="Neighbors per segment query."),
        click.option("--refinement", type=click.Choice([r.value for r in Refinement]),
                     default=None),
        click.option("--paths", default=None,
                     help="Enabled retrieval paths: 'all' or comma list of "
                          "segment,utterance,utterance_reversed."),
        click.option("--threshold", type=float, default=None),
        click.option("--exclude-self/--no-exclude-self", "exclude_self", default=None),
        click.option("--combine", type=click.Choice([c.value for c in Combine]), default=None),
        click.option("--seed", type=int, default=None, help=f"Root seed (default {DEFAULT_SEED})."),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


def load_store_dir(path: str | Path) -> dict[tuple[int, Channel], Datastore]:
    """Load every *.npds snapshot in a directory, keyed by (layer, channel)."""
    stores: dict[tuple[int, Channel], Datastore] = {}
    files = sorted(Path(path).glob("*.npds"))
    if not files:
        raise SpeechScreenError(f"no *.npds snapshots found in {path}")
    for file in files:
        store = Datastore.load(file)
        key = (store.layer, store.channel)
        if key in stores:
            raise SpeechScreenError(
                f"duplicate datastore for layer {key[0]}/{key[1].value} in {path}"
            )
        stores[key] = store
    return stores


def _print_version(ctx, param, value):
    if not value or ctx.resilient_parsing:
        return
    click.echo(
        f"speechscreen {__version__} "
        f"(feature-file format v{FEATURE_FORMAT_VERSION}, "
        f"snapshot format v{SNAPSHOT_FORMAT_VERSION})"
    )
    ctx.exit(0)


@click.group()
@click.option("--version", is_flag=True, callback=_print_version, expose_value=False,
              is_eager=True, help="Print version and format versions.")
def main() -> None:
    """Retrieval-based speech symptom screening toolkit."""


@main.command()
@click.option("--manifest", required=True, type=click.Path(exists=True))
@click.option("--features-root", default=None, type=click.Path(),
              help="Base directory for manifest-relative feature paths "
                   "(default: the manifest's directory).")
@click.option("--layer", required=True, type=int)
@click.option("--channel", type=click.Choice([c.value for c in Channel]), default="original")
@click.option("--split", type=click.Choice([s.value for s in Split] + ["all"]), default="train",
              help="Which split to ingest (default train).")
@click.option("--out", default=None, type=click.Path(),
              help="Snapshot path or directory (default layer<L>_<channel>.npds).")
def build(manifest, features_root, layer, channel, split, out) -> None:
    """Build a datastore snapshot from a manifest."""
    try:
        records = load_manifest(manifest)
        root = Path(features_root) if features_root else Path(manifest).parent
        store = build_from_manifest(
            records, root, layer, Channel(channel),
            split=None if split == "all" else Split(split),
        )
        target = Path(out) if out else Path(f"layer{layer}_{channel}.npds")
        if target.is_dir():
            target = target / f"layer{layer}_{channel}.npds"
        store.save(target)
        click.echo(json.dumps({"snapshot": str(target), **store.stats()}, sort_keys=True))
    except SpeechScreenError as exc:
        _fail(str(exc))


@main.command()
@click.option("--store", "store_path", required=True, type=click.Path(exists=True))
@click.option("--manifest", required=True, type=click.Path(exists=True))
@click.option("--features-root", default=None, type=click.Path())
@click.option("--id", "sample_id", required=True)
def add(store_path, manifest, features_root, sample_id) -> None:
    """Add one manifest sample to an existing snapshot."""
    try:
        store = Datastore.load(store_path)
        records = {r.sample_id: r for r in load_manifest(manifest)}
        if sample_id not in records:
            _fail(f"sample {sample_id!r} not in manifest")
        root = Path(features_root) if features_root else Path(manifest).parent
        from .ingest import load_features

        record = records[sample_id]
        store.add(record, load_features(record, root, store.layer, store.channel))
        store.save(store_path)
        click.echo(json.dumps({"added": sample_id, "size": store.size}))
    except SpeechScreenError as exc:
        _fail(str(exc))


@main.command()
@click.option("--store", "store_path", required=True, type=click.Path(exists=True))
@click.option("--id", "sample_id", required=True)
def remove(store_path, sample_id) -> None:
    """Remove one entry from a snapshot; reports whether it was present."""
    try:
        store = Datastore.load(store_path)
        removed = store.remove(sample_id)
        if removed:
            store.save(store_path)
        click.echo(json.dumps({"removed": removed, "size": store.size}))
    except SpeechScreenError as exc:
        _fail(str(exc))


@main.command()
@click.option("--store", "store_path", required=True, type=click.Path(exists=True))
def stats(store_path) -> None:
    """Print snapshot statistics as JSON."""
    try:
        click.echo(json.dumps(Datastore.load(store_path).stats(), sort_keys=True))
    except SpeechScreenError as exc:
        _fail(str(exc))


@main.command("select-n")
@click.option("--manifest", required=True, type=click.Path(exists=True))
@click.option("--features-root", default=None, type=click.Path())
@click.option("--layer", required=True, type=int)
@click.option("--channel", type=click.Choice([c.value for c in Channel]), default="original")
@click.option("--split", type=click.Choice([s.value for s in Split] + ["all"]), default="train")
@click.option("--candidates", default="2..10", show_default=True,
              help="Range '2..10' or list '2,3,5'.")
@click.option("--seed", type=int, default=DEFAULT_SEED, show_default=True)
@click.option("--jobs", type=int, default=1, show_default=True)
@click.option("--out", default=None, type=click.Path(), help="CSV path (default stdout).")
def select_n_cmd(manifest, features_root, layer, channel, split, candidates, seed, jobs, out):
    """Choose the dataset-wide segment count by mean silhouette."""
    try:
        from .ingest import load_features

        records = load_manifest(manifest)
        if split != "all":
            records = [r for r in records if r.split == Split(split)]
        root = Path(features_root) if features_root else Path(manifest).parent
        sequences = [load_features(r, root, layer, Channel(channel)) for r in records]
        selection = run_select_n(sequences, _parse_candidates(candidates), seed, jobs=jobs)
        if out:
            write_selection_csv(selection, out)
        else:
            write_selection_csv(selection, sys.stdout)
        click.echo(f"selected_n={selection.selected_n}", err=True)
    except SpeechScreenError as exc:
        _fail(str(exc))


def _load_eval_inputs(manifest, features_root, stores_dir, split):
    records = load_manifest(manifest)
    if split != "all":
        records = [r for r in records if r.split == Split(split)]
    root = Path(features_root) if features_root else Path(manifest).parent
    stores = load_store_dir(stores_dir)
    return records, root, stores


@main.command()
@click.option("--manifest", required=True, type=click.Path(exists=True))
@click.option("--features-root", default=None, type=click.Path())
@click.option("--stores", "stores_dir", required=True, type=click.Path(exists=True))
@click.option("--split", type=click.Choice([s.value for s in Split] + ["all"]), default="test")
@click.option("--jobs", type=int, default=1, show_default=True)
@click.option("--provenance", is_flag=True, default=False,
              help="Include retrieved neighbor ids and distances.")
@click.option("--out", default=None, type=click.Path(), help="JSONL path (default stdout).")
@_config_options
def assess(manifest, features_root, stores_dir, split, jobs, provenance, out, **config_flags):
    """Assess every sample in a split; emits one JSON line per sample."""
    try:
        config = _resolve_config(**config_flags)
        records, root, stores = _load_eval_inputs(manifest, features_root, stores_dir, split)
        loader = manifest_feature_loader(root, config.required_pairs())
        from .inference import assess_batch

        results, failures = assess_batch(records, loader, stores, config, jobs=jobs)
        if out:
            write_results_jsonl(results, failures, out, provenance=provenance)
        else:
            from .report import result_to_dict

            for r in results:
                click.echo(json.dumps(result_to_dict(r, provenance), sort_keys=True))
            for f in failures:
                click.echo(json.dumps({"sample_id": f.sample_id, "error": f.error},
                                      sort_keys=True))
        if failures:
            click.echo(f"{len(failures)} sample(s) failed", err=True)
    except SpeechScreenError as exc:
        _fail(str(exc))


@main.command()
@click.option("--manifest", required=True, type=click.Path(exists=True))
@click.option("--features-root", default=None, type=click.Path())
@click.option("--stores", "stores_dir", required=True, type=click.Path(exists=True))
@click.option("--split", type=click.Choice([s.value for s in Split] + ["all"]), default="test")
@click.option("--jobs", type=int, default=1, show_default=True)
@click.option("--report-dir", required=True, type=click.Path())
@_config_options
def evaluate(manifest, features_root, stores_dir, split, jobs, report_dir, **config_flags):
    """Assess a split and write the full metric report."""
    try:
        config = _resolve_config(**config_flags)
        records, root, stores = _load_eval_inputs(manifest, features_root, stores_dir, split)
        loader = manifest_feature_loader(root, config.required_pairs())
        report, results, failures = evaluate_batch(records, loader, stores, config, jobs=jobs)

        out = Path(report_dir)
        out.mkdir(parents=True, exist_ok=True)
        labels = {r.sample_id: r.label for r in records}
        scores = [r.final_score for r in results]
        result_labels = [labels[r.sample_id] for r in results]
        write_eval_json(report, config, out / "eval.json",
                        extra={"n_failures": len(failures), "split": split})
        write_roc_csv(report, out / "roc.csv")
        write_scores_csv(results, labels, out / "scores.csv")
        write_histogram_csv(scores, result_labels, out / "histogram.csv")
        write_histogram_svg(scores, result_labels, out / "histogram.svg")
        sens = "undefined" if report.sensitivity is None else f"{report.sensitivity:.3f}"
        spec = "undefined" if report.specificity is None else f"{report.specificity:.3f}"
        click.echo(
            f"roc_auc={report.roc_auc:.3f} sensitivity={sens} specificity={spec} "
            f"n={report.n_pos + report.n_neg} failures={len(failures)}"
        )
    except SpeechScreenError as exc:
        _fail(str(exc))


@main.command()
@click.option("--manifest", required=True, type=click.Path(exists=True))
@click.option("--features-root", default=None, type=click.Path())
@click.option("--stores", "stores_dir", required=True, type=click.Path(exists=True))
@click.option("--split", type=click.Choice([s.value for s in Split] + ["all"]), default="test")
@click.option("--jobs", type=int, default=1, show_default=True)
@click.option("--axes", default="paths", show_default=True,
              help="Comma list of ablation axes: paths,refinement,layers.")
@click.option("--out", default="ablation.csv", show_default=True, type=click.Path())
@_config_options
def ablate(manifest, features_root, stores_dir, split, jobs, axes, out, **config_flags):
    """Evaluate one configuration per ablation axis value; writes a CSV table."""
    try:
        config = _resolve_config(**config_flags)
        records, root, stores = _load_eval_inputs(manifest, features_root, stores_dir, split)
        axis_list = [a.strip() for a in axes.split(",") if a.strip()]
        rows = ablation_run(
            records,
            lambda cfg: manifest_feature_loader(root, cfg.required_pairs()),
            stores,
            config,
            axis_list,
            jobs=jobs,
        )
        write_ablation_csv(rows, out)
        for row in rows:
            click.echo(f"{row.axis}={row.value}: roc_auc={row.report.roc_auc:.3f}")
    except SpeechScreenError as exc:
        _fail(str(exc))


@main.command("report")
@click.option("--results", "results_path", required=True, type=click.Path(exists=True),
              help="JSONL output of `assess`.")
@click.option("--manifest", required=True, type=click.Path(exists=True),
              help="Manifest supplying the reference labels.")
@click.option("--threshold", type=float, default=0.5, show_default=True)
@click.option("--report-dir", required=True, type=click.Path())
def report_cmd(results_path, manifest, threshold, report_dir) -> None:
    """Metric and distribution reports from a saved assess run."""
    try:
        from .evaluation import evaluate_scores
        from .report import report_to_dict

        results, failures = load_results_jsonl(results_path)
        labels = {r.sample_id: r.label for r in load_manifest(manifest)}
        missing = [r["sample_id"] for r in results if r["sample_id"] not in labels]
        if missing:
            _fail(f"results contain sample_ids absent from the manifest: {missing[:5]}")
        scores = [r["final_score"] for r in results]
        result_labels = [labels[r["sample_id"]] for r in results]
        eval_report = evaluate_scores(scores, result_labels, threshold)

        out = Path(report_dir)
        out.mkdir(parents=True, exist_ok=True)
        payload = {"metrics": report_to_dict(eval_report), "n_failures": len(failures)}
        (out / "report.json").write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        write_roc_csv(eval_report, out / "roc.csv")
        write_histogram_csv(scores, result_labels, out / "histogram.csv")
        write_histogram_svg(scores, result_labels, out / "histogram.svg")
        click.echo(f"roc_auc={eval_report.roc_auc:.3f} n={len(scores)}")
    except SpeechScreenError as exc:
        _fail(str(exc))


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--stores", "stores_dir", default=None, type=click.Path(exists=True),
              help="Directory of snapshots to preload into the service registry.")
def serve(host, port, stores_dir) -> None:
    """Run the HTTP service wrapping the datastore and assessment pipeline."""
    import uvicorn

    from .service.app import create_app

    app = create_app(stores_dir=stores_dir)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
