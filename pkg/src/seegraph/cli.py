"""Command-line interface: synth, train, eval, explain, bands.

Batch operation only. Every command resolves its configuration (defaults <-
config file <- --set overrides <- dedicated flags, last wins), writes the
fully resolved config next to its outputs, and confines all outputs to the
--out directory. Exit codes: 0 success, 1 usage/validation, 2
training/numerical failure. SEEGRAPH_THREADS caps internal parallelism
(default 1 for bit-reproducibility).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import training
from .cohort import CohortSpec, LabeledCohort, generate_cohort, subject_split
from .config import (ABLATION_SWITCHES, RunConfig, apply_setting, dump_config,
                     load_config)
from .errors import (ConfigError, EmptyBandError, FormatError,
                     InsufficientDataError, NumericalError, SeeGraphError,
                     TrainingError, UsageError, ValidationError)
from .mask import salience_ranking
from .model import SeeGraphModel
from .recordings import load_recording, read_manifest, save_recording, write_manifest


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_shared(parser: _Parser):
    parser.add_argument("--config", type=Path, help="key = value config file")
    parser.add_argument("--seed", type=int, help="override the run seed")
    parser.add_argument("--out", type=Path, help="output directory")
    parser.add_argument("--force", action="store_true",
                        help="allow writing into a non-empty output directory")
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override any config key")


def build_parser() -> _Parser:
    parser = _Parser(prog="seegraph",
                     description="Sparse-explanatory dynamic EEG-graph network")
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="generate a synthetic cohort")
    _add_shared(synth)
    synth.add_argument("--subjects-per-class", type=int)
    synth.set_defaults(fn=cmd_synth)

    trainp = sub.add_parser("train", help="train on a cohort manifest")
    _add_shared(trainp)
    trainp.add_argument("--cohort", type=Path, required=False,
                        help="cohort manifest (or its directory)")
    trainp.add_argument("--band", type=str, help="frequency band for this run")
    trainp.add_argument("--noise-sigma", type=float, default=None,
                        help="additive Gaussian noise std on the z-scored inputs")
    trainp.add_argument("--ablate", choices=ABLATION_SWITCHES,
                        help="disable exactly one component")
    trainp.set_defaults(fn=cmd_train)

    evalp = sub.add_parser("eval", help="evaluate a checkpoint on the test split")
    _add_shared(evalp)
    evalp.add_argument("--checkpoint", type=Path, required=False)
    evalp.add_argument("--cohort", type=Path, required=False)
    evalp.add_argument("--noise-sigma", type=float, default=None)
    evalp.add_argument("--top-k", type=int, default=None)
    evalp.set_defaults(fn=cmd_eval)

    explain = sub.add_parser("explain", help="export edge-level explanations")
    _add_shared(explain)
    explain.add_argument("--checkpoint", type=Path, required=False)
    explain.add_argument("--cohort", type=Path, required=False)
    explain.add_argument("--top-k", type=int, default=None)
    explain.set_defaults(fn=cmd_explain)

    bands = sub.add_parser("bands", help="band-wise train/eval sweep")
    _add_shared(bands)
    bands.add_argument("--cohort", type=Path, required=False)
    bands.add_argument("--noise-sigma", type=float, default=None)
    bands.set_defaults(fn=cmd_bands)

    return parser


def resolve_config(args) -> RunConfig:
    run = load_config(args.config) if args.config else RunConfig()
    for item in args.overrides:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        key, raw = item.split("=", 1)
        apply_setting(run, key.strip(), raw.strip())
    if getattr(args, "subjects_per_class", None) is not None:
        run.cohort.subjects_per_class = args.subjects_per_class
    if getattr(args, "band", None) is not None:
        run.model.band = args.band
    if getattr(args, "noise_sigma", None) is not None:
        run.noise_sigma = args.noise_sigma
    if getattr(args, "top_k", None) is not None:
        run.top_k = args.top_k
    if args.seed is not None:
        run.model.seed = args.seed
    if getattr(args, "ablate", None):
        run.model = run.model.ablated(args.ablate)
    return run.validate()


def prepare_out_dir(args, must_be_empty: bool = False) -> Path:
    if args.out is None:
        raise UsageError("--out is required")
    out = Path(args.out)
    if out.exists():
        if not out.is_dir():
            raise UsageError(f"{out} exists and is not a directory")
        if must_be_empty and any(out.iterdir()) and not args.force:
            raise UsageError(f"{out} is not empty; pass --force to reuse it")
    else:
        out.mkdir(parents=True)
    return out


def write_resolved(out: Path, run: RunConfig):
    (out / "resolved_config.cfg").write_text(dump_config(run), encoding="utf-8")


def _write_json(path: Path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_cohort(manifest_path: Path) -> LabeledCohort:
    manifest_path = Path(manifest_path)
    if manifest_path.is_dir():
        manifest_path = manifest_path / "manifest.json"
    if not manifest_path.exists():
        raise UsageError(f"cohort manifest not found: {manifest_path}")
    doc = read_manifest(manifest_path)
    base = manifest_path.parent
    recordings = []
    splits = {}
    for entry in doc["subjects"]:
        rec = load_recording(base / entry["path"])
        if rec.label != entry["label"]:
            raise FormatError(
                f"manifest label {entry['label']} != recording label {rec.label} "
                f"for {entry['subject_id']}")
        recordings.append(rec)
        splits[entry["subject_id"]] = entry["split"]
    planted = {int(k): [tuple(e[:2]) for e in v]
               for k, v in doc.get("planted", {}).items()}
    return LabeledCohort(recordings=recordings, planted=planted, splits=splits,
                         sample_rate_hz=recordings[0].sample_rate_hz)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    run = resolve_config(args)
    out = prepare_out_dir(args, must_be_empty=True)
    seed = run.model.seed
    spec = CohortSpec.from_settings(run.cohort, seed)
    cohort = generate_cohort(spec, seed)
    cohort = subject_split(cohort, run.cohort.train_fraction, seed)

    rec_dir = out / "recordings"
    rec_dir.mkdir(exist_ok=True)
    subjects = []
    for rec in cohort.recordings:
        rel = f"recordings/{rec.subject_id}.sgrc"
        save_recording(rec, out / rel)
        subjects.append({
            "subject_id": rec.subject_id,
            "path": rel,
            "label": rec.label,
            "split": cohort.splits[rec.subject_id],
        })
    planted = {label: [list(edge) for edge in edges]
               for label, edges in cohort.planted.items()}
    write_manifest(out / "manifest.json", subjects, planted=planted,
                   meta={"n_channels": spec.n_channels,
                         "sample_rate_hz": spec.sample_rate_hz})
    write_resolved(out, run)

    n_train = sum(1 for s in subjects if s["split"] == "train")
    n_test = len(subjects) - n_train
    print(f"wrote {len(subjects)} subjects ({n_train} train / {n_test} test) "
          f"across {spec.classes} classes to {out}")
    return 0


def _metrics_row(tag: str, report) -> str:
    return (f"{tag:<12} ACC {report.accuracy:.3f}  "
            f"AUROC {report.macro_auroc:.3f}  F1 {report.macro_f1:.3f}")


def cmd_train(args) -> int:
    run = resolve_config(args)
    if getattr(args, "cohort", None) is None:
        raise UsageError("--cohort is required")
    cohort = load_cohort(args.cohort)
    out = prepare_out_dir(args)

    explain_k = run.top_k if cohort.planted else None
    result = training.train(cohort, run.model, noise_sigma=run.noise_sigma,
                            explain_k=explain_k)
    result.model.store.save(out / "checkpoint.sgwt")
    _write_json(out / "metrics.json", result.report.to_dict())
    with open(out / "runlog.jsonl", "w", encoding="utf-8") as fh:
        for entry in result.runlog:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
    write_resolved(out, run)
    print(_metrics_row(f"train[{result.dataset.band}]", result.report))
    if result.report.precision_at_k is not None:
        print(f"explanation precision@{run.top_k}: "
              f"{result.report.precision_at_k:.3f}")
    return 0


def _rebuild_model(run: RunConfig, cohort: LabeledCohort,
                   checkpoint: Path) -> tuple[SeeGraphModel, "training.PreparedDataset"]:
    if checkpoint is None:
        raise UsageError("--checkpoint is required")
    checkpoint = Path(checkpoint)
    if not checkpoint.exists():
        raise UsageError(f"checkpoint not found: {checkpoint}")
    dataset = training.prepare_dataset(cohort, run.model,
                                       noise_sigma=run.noise_sigma)
    model = SeeGraphModel(run.model, dataset.feature_dim, dataset.n_channels,
                          dataset.n_classes)
    model.store.load(checkpoint)
    return model, dataset


def _resolve_run_for_checkpoint(args) -> RunConfig:
    """Eval/explain default to the config written next to the checkpoint."""
    if args.config is None and getattr(args, "checkpoint", None):
        sibling = Path(args.checkpoint).parent / "resolved_config.cfg"
        if sibling.exists():
            args.config = sibling
    return resolve_config(args)


def cmd_eval(args) -> int:
    run = _resolve_run_for_checkpoint(args)
    if getattr(args, "cohort", None) is None:
        raise UsageError("--cohort is required")
    cohort = load_cohort(args.cohort)
    model, dataset = _rebuild_model(run, cohort, args.checkpoint)
    tau = training.final_tau(run.model)
    report, artifacts = training.evaluate(model, dataset, dataset.test_idx, tau,
                                          band=dataset.band)
    if cohort.planted:
        report.precision_at_k = training.explanation_precision(
            artifacts, cohort.planted, run.top_k, dataset.n_channels)
        report.extras["explain_k"] = run.top_k
    print(_metrics_row(f"eval[{dataset.band}]", report))
    if args.out is not None:
        out = prepare_out_dir(args)
        _write_json(out / "eval_metrics.json", report.to_dict())
        write_resolved(out, run)
    return 0


def _dot_document(n_channels: int, channel_names: list[str],
                  edges: list[dict]) -> str:
    """Undirected DOT graph; edge thickness proportional to salience."""
    peak = max((e["salience"] for e in edges), default=0.0) or 1.0
    lines = ["graph explanation {", "  layout=circo;", "  node [shape=circle];"]
    for i in range(n_channels):
        lines.append(f'  n{i} [label="{channel_names[i]}"];')
    for e in edges:
        width = 0.5 + 4.5 * e["salience"] / peak
        lines.append(
            f'  n{e["i"]} -- n{e["j"]} [penwidth={width:.2f}, '
            f'label="{e["salience"]:.3f}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def cmd_explain(args) -> int:
    run = _resolve_run_for_checkpoint(args)
    if getattr(args, "cohort", None) is None:
        raise UsageError("--cohort is required")
    cohort = load_cohort(args.cohort)
    model, dataset = _rebuild_model(run, cohort, args.checkpoint)
    n = dataset.n_channels
    max_k = n * (n - 1) // 2
    if not (1 <= run.top_k <= max_k):
        raise UsageError(f"--top-k must lie in [1, {max_k}]")
    tau = training.final_tau(run.model)
    _, artifacts = training.evaluate(model, dataset, dataset.test_idx, tau)

    names = cohort.recordings[0].channels
    threshold = run.model.export_threshold
    subjects = []
    for art in artifacts:
        ranked = salience_ranking(art["mask"], art["fused"])
        if threshold > 0:
            ranked = [e for e in ranked if e["salience"] >= threshold]
        edges = [{**e,
                  "channel_i": names[e["i"]],
                  "channel_j": names[e["j"]]} for e in ranked]
        subjects.append({
            "subject_id": art["subject_id"],
            "predicted": art["predicted"],
            "label": art["label"],
            "edges": edges,
        })
    payload: dict = {"subjects": subjects}
    if cohort.planted:
        payload["precision_at_k"] = training.explanation_precision(
            artifacts, cohort.planted, run.top_k, n)
        payload["k"] = run.top_k

    out = prepare_out_dir(args) if args.out is not None else Path(
        args.checkpoint).parent
    _write_json(out / "explanations.json", payload)

    # One DOT per class: mean salience over that class's test subjects,
    # drawing the top-k edges.
    by_label: dict[int, list[dict]] = {}
    for art in artifacts:
        by_label.setdefault(art["label"], []).append(art)
    for label, arts in sorted(by_label.items()):
        mean_mask = np.mean([a["mask"] for a in arts], axis=0)
        mean_fused = np.mean([a["fused"] for a in arts], axis=0)
        ranked = salience_ranking(mean_mask, mean_fused)[:run.top_k]
        dot = _dot_document(n, names, ranked)
        (out / f"explanation_class{label}.dot").write_text(dot, encoding="utf-8")
    write_resolved(out, run)
    if "precision_at_k" in payload:
        print(f"precision@{run.top_k}: {payload['precision_at_k']:.3f}")
    print(f"explanations for {len(subjects)} test subjects -> {out}")
    return 0


def cmd_bands(args) -> int:
    run = resolve_config(args)
    if getattr(args, "cohort", None) is None:
        raise UsageError("--cohort is required")
    cohort = load_cohort(args.cohort)
    results = training.band_sweep(cohort, run.model, noise_sigma=run.noise_sigma)

    rows = {}
    print(f"{'band':<12} {'ACC':>6} {'AUROC':>6} {'F1':>6}")
    for band, report in results.items():
        if report is None:
            print(f"{band:<12} {'NA':>6} {'NA':>6} {'NA':>6}")
            rows[band] = None
        else:
            print(f"{band:<12} {report.accuracy:>6.3f} "
                  f"{report.macro_auroc:>6.3f} {report.macro_f1:>6.3f}")
            rows[band] = report.to_dict()
    if args.out is not None:
        out = prepare_out_dir(args)
        _write_json(out / "bands.json", rows)
        write_resolved(out, run)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except (UsageError, ValidationError, ConfigError, FormatError,
            InsufficientDataError, EmptyBandError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (TrainingError, NumericalError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
