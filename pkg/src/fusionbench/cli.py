"""Command-line pipeline: prep -> train -> eval -> ablate -> export ->
bench -> compare-runtimes -> report.

One experiment config file plus flag overrides (flags win); every run is
keyed by the resolved config's hash, outputs land under
<output_dir>/<hash>/ and nothing is silently overwritten.

Exit codes: 0 success, 2 validation/configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import subprocess
import sys
from dataclasses import asdict, replace
from pathlib import Path
from typing import List, Optional

import numpy as np
import torch

from . import __version__
from .ablation import run_ablation
from .data import Label, SampleSet, split_sample_set
from .determinism import seed_everything
from .errors import (
    ConfigurationError,
    FusionBenchError,
    TrainingDiverged,
    ValidationError,
)
from .experiment import ExperimentConfig, load_config, prepare_data
from .export import export_graph, verify_parity
from .flops import count_flops_params
from .fusion import decide
from .latency import (
    DEFAULT_ITERS,
    DEFAULT_WARMUP,
    LatencyReport,
    compare_report_sets,
    measure_latency,
    model_runner,
)
from .metrics import MetricsRecord, binary_accuracy, f1_score
from .report import collect_tradeoff, emit_tradeoff
from .training import STAGES, evaluate_accuracy, load_checkpoint, load_into, train

FUSED_STAGES = ("late", "intermediate", "early")


# ---------------------------------------------------------------------------
# helpers

def _resolve_config(args) -> ExperimentConfig:
    overrides = {}
    for dotted, attr in (
        ("training.seed", "seed"),
        ("fusion.strategy", "strategy"),
        ("vision.kind", "vision"),
        ("output_dir", "out"),
        ("dataset.synth_size", "synth_size"),
    ):
        value = getattr(args, attr, None)
        if value is not None:
            overrides[dotted] = value
    # train's --blocks is an integer model override; ablate's --blocks is
    # the comma-separated grid and never touches the fusion spec
    blocks = getattr(args, "blocks", None)
    if args.command == "train" and blocks is not None:
        overrides["fusion.num_attention_blocks"] = blocks
    # recipe flags scope to the stage being trained (ablate drives "early")
    stage = getattr(args, "stage", None) or ("early" if args.command == "ablate" else None)
    if stage:
        for attr in ("epochs", "lr", "batch_size"):
            value = getattr(args, attr, None)
            if value is not None:
                overrides[f"training.{stage}.{attr}"] = value
    cfg = load_config(getattr(args, "config", None), overrides)
    cfg.write_resolved()
    return cfg


def _data_paths(cfg: ExperimentConfig):
    data_dir = cfg.run_dir() / "data"
    return data_dir, data_dir / "corpus.npz", data_dir / "corpus.sha256"


def ensure_data(cfg: ExperimentConfig, log=print, force: bool = False):
    """Prepare (or reuse) the preprocessed corpus and splits for this config."""
    data_dir, corpus_path, hash_path = _data_paths(cfg)
    if corpus_path.exists() and hash_path.exists() and not force:
        data = SampleSet.load(corpus_path)
        if data.content_hash() == hash_path.read_text().strip():
            log(f"prep: outputs up to date under {data_dir} (no-op)")
            from .data import SplitManifest, make_splits

            manifest = SplitManifest.load(data_dir / "splits", cfg.dataset.seed, cfg.dataset.fractions)
            return {"manifest": manifest, "full": data, **split_sample_set(data, manifest)}
        log("prep: cached corpus hash mismatch; rebuilding")
    bundle = prepare_data(cfg)
    bundle["full"].save(corpus_path)
    hash_path.write_text(bundle["full"].content_hash() + "\n")
    bundle["manifest"].save(data_dir / "splits")
    log(
        f"prep: wrote {len(bundle['full'])} samples "
        f"(train {len(bundle['train'])} / val {len(bundle['val'])} / test {len(bundle['test'])}) "
        f"under {data_dir}"
    )
    return bundle


def _load_base_backbone(backbone, ckpt_path: Path, log=print) -> bool:
    """Copy backbone.* weights from a unimodal base checkpoint."""
    if not ckpt_path.exists():
        return False
    state, _ = load_checkpoint(ckpt_path)
    prefix = "backbone."
    sub = {k[len(prefix):]: v for k, v in state.items() if k.startswith(prefix)}
    backbone.load_state_dict(sub)
    log(f"loaded fine-tuned base weights from {ckpt_path}")
    return True


def build_stage_model(cfg: ExperimentConfig, stage: str, log=print, use_base_checkpoints: bool = True):
    """Build the model for a pipeline stage, reusing fine-tuned base
    checkpoints for late fusion when they exist in this run directory."""
    seed_everything(cfg.training_seed)
    if stage in ("text_base", "cnn_base"):
        return cfg.build_unimodal(stage)
    if stage not in FUSED_STAGES:
        raise ConfigurationError(f"unknown stage {stage!r}; expected one of {STAGES}")
    text = cfg.build_text()
    vision = cfg.build_vision()
    if stage == "late" and use_base_checkpoints:
        ckpt_root = cfg.run_dir() / "checkpoints"
        _load_base_backbone(text, ckpt_root / "text_base" / "final.ckpt.npz", log)
        _load_base_backbone(vision, ckpt_root / cfg.model_name("cnn_base") / "final.ckpt.npz", log)
    spec = replace(cfg.fusion, strategy=stage)
    from .fusion import build_fusion

    return build_fusion(text, vision, spec)


def _checkpoint_path(cfg: ExperimentConfig, stage: str) -> Path:
    return cfg.run_dir() / "checkpoints" / cfg.model_name(stage) / "final.ckpt.npz"


def _reports_dir(cfg: ExperimentConfig) -> Path:
    return cfg.run_dir() / "reports"


# ---------------------------------------------------------------------------
# commands

def cmd_prep(args) -> int:
    cfg = _resolve_config(args)
    ensure_data(cfg, force=getattr(args, "force", False))
    return 0


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    stage = args.stage
    if stage not in STAGES:
        raise ConfigurationError(f"unknown stage {stage!r}; expected one of {STAGES}")
    bundle = ensure_data(cfg)
    model = build_stage_model(cfg, stage)
    recipe = cfg.recipe(stage)
    name = cfg.model_name(stage)
    ckpt_dir = cfg.run_dir() / "checkpoints" / name
    manifest = {"model_name": name, "stage": stage, "config_hash": cfg.config_hash(),
                "toolkit_version": __version__}
    print(f"train: stage={stage} model={name} optimizer={recipe.optimizer} "
          f"lr={recipe.lr} epochs={recipe.epochs} batch={recipe.batch_size} "
          f"frozen={sorted(recipe.freeze) or sorted(model.frozen_set)}")
    result = train(model, bundle["train"], recipe, bundle["val"], ckpt_dir, manifest,
                   log=print if args.verbose else None)
    print(f"train: final train_acc={result.history.train_acc[-1]:.4f} "
          f"val_acc={result.history.val_acc[-1]:.4f} -> {result.checkpoint_path}")
    return 0


def cmd_eval(args) -> int:
    cfg = _resolve_config(args)
    stage = args.stage
    bundle = ensure_data(cfg)
    model = build_stage_model(cfg, stage, use_base_checkpoints=False)
    ckpt = Path(args.checkpoint) if args.checkpoint else _checkpoint_path(cfg, stage)
    if not ckpt.exists():
        raise ValidationError(
            f"missing checkpoint {ckpt}; produce it with `fusionbench train --stage {stage}`"
        )
    load_into(model, ckpt)
    model.eval()
    data = bundle[args.split]
    tokens = torch.from_numpy(data.tokens)
    mask = torch.from_numpy(data.mask)
    images = torch.from_numpy(data.images)
    preds = []
    with torch.no_grad():
        for start in range(0, len(data), 64):
            sl = slice(start, start + 64)
            preds.append(decide(model(tokens[sl], mask[sl], images[sl])).numpy())
    preds = np.concatenate(preds)
    acc = binary_accuracy(preds, data.labels)
    f1 = f1_score(preds, data.labels, Label.NON_NEGATIVE)
    modality = {"text_base": "T", "cnn_base": "V"}.get(stage, "T+V")
    record = MetricsRecord(
        model_name=cfg.model_name(stage), modality=modality,
        binary_accuracy=acc, f1=f1,
        vision=None if stage == "text_base" else cfg.vision_kind,
    ).validate()
    out = _reports_dir(cfg) / f"metrics_{record.model_name}.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(asdict(record), indent=2, sort_keys=True) + "\n")
    print(f"eval[{args.split}]: {record.model_name} modality={modality} "
          f"BA={100 * acc:.2f}% F1={100 * f1:.2f}% -> {out}")
    return 0


def cmd_ablate(args) -> int:
    cfg = _resolve_config(args)
    blocks = [int(b) for b in args.blocks.split(",")] if args.blocks else [2, 4, 6, 8]
    bundle = ensure_data(cfg)
    recipe = cfg.recipe("early")

    def build(count: int):
        return cfg.build_fused("early", blocks=count)

    result = run_ablation(build, bundle["train"], bundle["val"], recipe, blocks,
                          log=print if args.verbose else None)
    out = cfg.run_dir() / "ablation" / "ablation.csv"
    result.to_csv(out)
    for count, acc in result.rows:
        print(f"ablate: blocks={count} accuracy={100 * acc:.2f}%")
    for err in result.errors:
        print(f"ablate: ERROR {err}", file=sys.stderr)
    if result.rows:
        print(f"ablate: selected blocks={result.selected()} (ties favor fewer blocks) -> {out}")
    return 0 if not result.errors else 3


def cmd_export(args) -> int:
    cfg = _resolve_config(args)
    stage = args.stage
    model = build_stage_model(cfg, stage, use_base_checkpoints=False)
    if args.init:
        print(f"export: using freshly initialized weights (seed {cfg.training_seed})")
    else:
        ckpt = Path(args.checkpoint) if args.checkpoint else _checkpoint_path(cfg, stage)
        if not ckpt.exists():
            raise ValidationError(
                f"missing checkpoint {ckpt}; train first or pass --init for an untrained export"
            )
        load_into(model, ckpt)
    name = cfg.model_name(stage)
    path = cfg.run_dir() / "exports" / f"{name}.onnx"
    artifact = export_graph(model, path, model_name=name, config_hash=cfg.config_hash())
    print(f"export: wrote {artifact.graph_path} (+ {artifact.meta_path.name})")
    if args.verify:
        report = verify_parity(model, artifact, n_batches=4, tol=1e-5)
        status = "ok" if report.passed else "FAILED"
        print(f"export: parity {status} max|diff|={report.max_abs_diff:.2e} "
              f"argmax agreement {100 * report.argmax_agreement:.0f}%")
        if not report.passed:
            return 3
    return 0


def cmd_bench(args) -> int:
    cfg = _resolve_config(args)
    reports_dir = _reports_dir(cfg)
    reports_dir.mkdir(parents=True, exist_ok=True)
    if args.target == "live":
        stages = list(FUSED_STAGES) + ["text_base", "cnn_base"] if args.all else [args.stage]
        if not all(stages):
            raise ConfigurationError("bench --target live needs --stage or --all")
        for stage in stages:
            model = build_stage_model(cfg, stage, use_base_checkpoints=False)
            ckpt = _checkpoint_path(cfg, stage)
            if ckpt.exists() and not args.init:
                load_into(model, ckpt)
            name = cfg.model_name(stage)
            flops = count_flops_params(model)
            report = measure_latency(
                model_runner(model), cfg.eval_warmup, cfg.eval_iters,
                model_name=name, runtime="in_process", hardware=cfg.eval_hardware,
            )
            out = reports_dir / f"latency_{name}_in_process.json"
            report.to_json(out)
            print(f"bench[live]: {name} mean={report.mean_ms:.2f}ms median={report.median_ms:.2f}ms "
                  f"p95={report.p95_ms:.2f}ms macs={flops.flops} -> {out}")
        return 0
    # exchange target: invoke the external bench-runner or ingest its reports
    if args.runner:
        exports = sorted((cfg.run_dir() / "exports").glob("*.onnx"))
        if not exports:
            raise ValidationError(
                "no exported graphs found; produce them with `fusionbench export --stage <s>`"
            )
        for graph in exports:
            out = reports_dir / f"latency_{graph.stem}_exchange_runtime.json"
            cmd = args.runner.split() + [
                "--graph", str(graph), "--warmup", str(cfg.eval_warmup),
                "--iters", str(cfg.eval_iters), "--seed", "0", "--out", str(out),
            ]
            print(f"bench[exchange]: invoking {' '.join(cmd)}")
            proc = subprocess.run(cmd, capture_output=True, text=True)
            if proc.returncode != 0:
                raise FusionBenchError(f"bench-runner failed for {graph.name}: {proc.stderr.strip()}")
            LatencyReport.from_json(out)  # schema check
            print(f"bench[exchange]: wrote {out}")
        return 0
    if args.reports:
        ingested = 0
        for path in sorted(Path(args.reports).glob("*.json")):
            report = LatencyReport.from_json(path)
            out = reports_dir / f"latency_{report.model_name}_{report.runtime}.json"
            out.write_text(path.read_text())
            ingested += 1
            print(f"bench[exchange]: ingested {path} -> {out}")
        if not ingested:
            raise ValidationError(f"no report JSON files under {args.reports}")
        return 0
    raise ConfigurationError("bench --target exchange needs --runner CMD or --reports DIR")


def cmd_compare_runtimes(args) -> int:
    def load_side(path: str) -> List[LatencyReport]:
        p = Path(path)
        files = sorted(p.glob("latency_*.json")) if p.is_dir() else [p]
        if not files:
            raise ValidationError(f"no latency reports under {p}")
        return [LatencyReport.from_json(f) for f in files]

    side_a, side_b = load_side(args.report_a), load_side(args.report_b)
    result = compare_report_sets(side_a, side_b)
    for row in result["rows"]:
        print(f"compare: {row['model_name']}: mean delta {row['mean_delta_ms']:+.3f} ms "
              f"median delta {row['median_delta_ms']:+.3f} ms")
    for warning in result["warnings"]:
        print(f"compare: WARNING {warning}", file=sys.stderr)
    print(f"compare: ordering agreement: {result['ordering_agreement']} "
          f"({' < '.join(result['ordering_a'])})")
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(json.dumps(result, indent=2, sort_keys=True) + "\n")
    return 0


def cmd_report(args) -> int:
    cfg = _resolve_config(args)
    reports_dir = _reports_dir(cfg)
    metrics = []
    for path in sorted(reports_dir.glob("metrics_*.json")):
        metrics.append(MetricsRecord(**json.loads(path.read_text())).validate())
    latencies = []
    for path in sorted(reports_dir.glob("latency_*.json")):
        latencies.append(LatencyReport.from_json(path))
    if args.include_reference:
        from .reference import (
            REFERENCE_ACCURACY,
            REFERENCE_LATENCY_EXCHANGE,
            REFERENCE_LATENCY_OPTIMIZED,
        )
        metrics = metrics + REFERENCE_ACCURACY
        latencies = latencies + REFERENCE_LATENCY_EXCHANGE + REFERENCE_LATENCY_OPTIMIZED
    if not metrics and not latencies:
        raise ValidationError(
            "no metrics or latency reports found; run `fusionbench eval` and `fusionbench bench` first"
        )
    if not latencies:
        print("report: WARNING no latency reports found; emitting accuracy tables only",
              file=sys.stderr)
    records = collect_tradeoff(metrics, latencies)
    out_dir = reports_dir / "tradeoff"
    paths = emit_tradeoff(records, out_dir, metrics)
    points = sum(1 for r in records if r.binary_accuracy is not None and r.mean_ms is not None)
    print(f"report: {len(records)} records ({points} scatter points) -> {out_dir}")
    for key, path in paths.items():
        print(f"report: {key}: {path}")
    return 0


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fusionbench",
        description="Multimodal fusion accuracy-vs-latency experimentation pipeline",
    )
    parser.add_argument("--version", action="version", version=f"fusionbench {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, default=None, help="experiment config YAML")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--seed", type=int, default=None, help="training seed override")
        p.add_argument("--synth-size", dest="synth_size", type=int, default=None)
        p.add_argument("--vision", choices=("cnn", "vit"), default=None)
        p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("prep", help="preprocess the corpus and write split manifests")
    common(p)
    p.add_argument("--force", action="store_true", help="rebuild even when cached outputs match")
    p.set_defaults(func=cmd_prep)

    p = sub.add_parser("train", help="train one pipeline stage")
    common(p)
    p.add_argument("--stage", required=True)
    p.add_argument("--blocks", type=int, default=None, help="early-fusion attention blocks")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a trained checkpoint")
    common(p)
    p.add_argument("--stage", required=True)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="attention-block-count grid for early fusion")
    common(p)
    p.add_argument("--blocks", default=None, help="comma list, default 2,4,6,8")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("export", help="serialize a model to the exchange format")
    common(p)
    p.add_argument("--stage", required=True)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--init", action="store_true",
                   help="export freshly initialized weights (latency work is weight-independent)")
    p.add_argument("--no-verify", dest="verify", action="store_false")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("bench", help="latency benchmark (in-process or exchange runtime)")
    common(p)
    p.add_argument("--target", choices=("live", "exchange"), default="live")
    p.add_argument("--stage", default=None)
    p.add_argument("--all", action="store_true", help="bench all fused strategies plus bases")
    p.add_argument("--init", action="store_true", help="ignore checkpoints (weights do not matter)")
    p.add_argument("--runner", default=None, help="external bench-runner command to invoke")
    p.add_argument("--reports", default=None, help="directory of bench-runner reports to ingest")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("compare-runtimes", help="delta table between two latency report sets")
    p.add_argument("report_a")
    p.add_argument("report_b")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_compare_runtimes)

    p = sub.add_parser("report", help="collect metrics + latency into the trade-off report")
    common(p)
    p.add_argument("--include-reference", action="store_true",
                   help="add published full-scale reference records to the tables")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}; report: {exc.report}", file=sys.stderr)
        return 3
    except FusionBenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
