"""CLI entry point for PointFormer.

Usage:
    pointformer synth --profile tiny --seed 0 --out weights/
    pointformer make-dataset --profile tiny --out data/
    pointformer preprocess data/raw/manifest.tsv --out data/clean
    pointformer train --profile tiny --train data/train/manifest.tsv --synth-seed 0
    pointformer eval --profile tiny --data data/test/manifest.tsv --weights runs/train/model.apfw
    pointformer fewshot --profile tiny --data data/train/manifest.tsv --synth-seed 0
    pointformer inspect weights/backbone.apfw --profile tiny
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import Any, NoReturn

import numpy as np
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from pointformer import __app_name__, __version__
from pointformer.core.config import PROFILES, PointFormerConfig, config_to_dict, load_config
from pointformer.core.errors import (
    EXIT_DATA,
    EXIT_OK,
    EXIT_USER,
    ConfigError,
    InvalidArgumentError,
    PointFormerError,
)
from pointformer.core.logging import setup_logging
from pointformer.geometry.pointcloud import normalize_unit_sphere
from pointformer.geometry.sampling import resample
from pointformer.io import checkpoint as apfw
from pointformer.io import point_binary as apfp
from pointformer.io.dataset import (
    EMBEDDED_PARTS,
    LabeledCloud,
    ManifestRecord,
    class_count,
    load_dataset,
    load_manifest,
    load_sample,
    read_part_labels,
    resolve,
    write_manifest,
)
from pointformer.io.synth import synth_pretrained
from pointformer.io.synthetic import SHAPES, make_benchmark, make_segmentation_set
from pointformer.model.backbone import (
    BackboneWeights,
    adapter_parameter_count,
    frozen_parameter_count,
)
from pointformer.model.pipeline import PointFormerModel, trainable_parameter_count
from pointformer.train.fewshot import run_fewshot
from pointformer.train.trainer import History, evaluate, train_classifier, train_segmenter

console = Console()
logger = logging.getLogger("pointformer.cli")

ABLATIONS = ("none", "no-sequencer", "no-adapter")
FORMAT_VERSIONS = {"APFW": apfw.VERSION, "APFP": apfp.VERSION}


class _Parser(argparse.ArgumentParser):
    """argparse with usage errors mapped to the user-error exit code."""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        console.print(f"[red]{self.prog}: error:[/red] {message}")
        sys.exit(EXIT_USER)


# ---------------------------------------------------------------------------
# Config and run bookkeeping
# ---------------------------------------------------------------------------


def _resolve_config(args: argparse.Namespace) -> PointFormerConfig:
    """YAML/profile config with command-line overrides applied, validated before compute."""
    config = load_config(args.config, args.profile)
    if args.seed is not None:
        config.train.seed = args.seed
    if args.deterministic:
        config.train.deterministic = True
    if getattr(args, "embedding", None):
        config.embed.mode = args.embedding
    ablation = getattr(args, "ablation", "none")
    if ablation == "no-sequencer":
        config.geometry.sequencer = False
    elif ablation == "no-adapter":
        config.backbone.use_adapters = False
    if getattr(args, "task", None):
        config.heads.task = args.task
    if getattr(args, "lr_max", None) is not None:
        config.train.lr_max = args.lr_max
    if getattr(args, "epochs", None) is not None:
        config.train.epochs = args.epochs
    if getattr(args, "n_points", None) is not None:
        config.geometry.n_points = args.n_points
    config.validate()
    setup_logging(args.log_level or config.system.log_level)
    return config


def _out_dir(args: argparse.Namespace) -> Path:
    out = Path(args.out or Path("runs") / args.command)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_run(
    out: Path, args: argparse.Namespace, config: PointFormerConfig, **extra: Any
) -> None:
    record = {
        "command": args.command,
        "version": __version__,
        "seed": config.train.seed,
        "profile": config.system.profile,
        "embedding": config.embed.mode,
        "ablation": getattr(args, "ablation", "none"),
        "sequencer": config.geometry.sequencer,
        "adapters": config.backbone.use_adapters,
        "formats": FORMAT_VERSIONS,
        "config": config_to_dict(config),
        **extra,
    }
    (out / "run.json").write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")


def _write_jsonl(path: Path, records: Sequence[dict]) -> None:
    path.write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in records))


def _load_backbone(args: argparse.Namespace, config: PointFormerConfig) -> BackboneWeights:
    if args.checkpoint:
        return apfw.load_backbone(apfw.read_checkpoint(args.checkpoint), config.backbone)
    if args.synth_seed is None:
        raise ConfigError("pass --checkpoint PATH or --synth-seed N for the frozen backbone")
    logger.info("using synthetic backbone from seed %d", args.synth_seed)
    return synth_pretrained(args.synth_seed, config.backbone)


def _check_labels(config: PointFormerConfig, dataset: Sequence[LabeledCloud]) -> None:
    if config.heads.task == "classification":
        if any(s.label is None for s in dataset):
            raise ConfigError("classification needs a manifest with class labels")
        if class_count(dataset) > config.heads.num_classes:
            raise ConfigError(
                f"dataset has {class_count(dataset)} classes, "
                f"heads.num_classes is {config.heads.num_classes}"
            )
    else:
        if any(s.part_labels is None for s in dataset):
            raise ConfigError("segmentation needs a manifest with part labels")
        top = max(int(s.part_labels.max()) for s in dataset) + 1
        if top > config.heads.num_parts:
            raise ConfigError(
                f"dataset has {top} parts, heads.num_parts is {config.heads.num_parts}"
            )


def _metrics_table(title: str, record: dict) -> Table:
    table = Table(title=title, show_header=True, header_style="bold cyan")
    table.add_column("metric")
    table.add_column("value", justify="right")
    for key, value in record.items():
        if isinstance(value, float):
            table.add_row(key, f"{value:.4f}")
        elif not isinstance(value, dict):
            table.add_row(key, str(value))
    return table


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_synth(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    out = _out_dir(args)
    weights = synth_pretrained(config.train.seed, config.backbone)
    path = out / "backbone.apfw"
    apfw.write_checkpoint(weights.named_parameters(), path)
    _write_run(out, args, config, checkpoint=str(path))
    frozen = frozen_parameter_count(config.backbone)
    console.print(f"[green]wrote[/green] {path}  ({frozen:,} frozen)")
    return EXIT_OK


def _write_split(out: Path, samples: Sequence[LabeledCloud]) -> None:
    out.mkdir(parents=True, exist_ok=True)
    records = []
    for sample in samples:
        name = f"{sample.name}.apfp"
        apfp.write_point_binary(sample.cloud, sample.part_labels, out / name)
        target = EMBEDDED_PARTS if sample.part_labels is not None else str(sample.label)
        records.append(ManifestRecord(path=name, target=target))
    write_manifest(records, out / "manifest.tsv")


def cmd_make_dataset(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    out = _out_dir(args)
    n_points = config.geometry.n_points or 1024
    seed = config.train.seed
    if config.heads.task == "classification":
        train, test = make_benchmark(seed, args.train_per_class, args.test_per_class, n_points)
    else:
        train = make_segmentation_set(seed * 2, args.train_per_class * len(SHAPES), n_points)
        test = make_segmentation_set(seed * 2 + 1, args.test_per_class * len(SHAPES), n_points)
    _write_split(out / "train", train)
    _write_split(out / "test", test)
    _write_run(out, args, config, train_samples=len(train), test_samples=len(test))
    console.print(
        f"[green]wrote[/green] {len(train)} train / {len(test)} test samples under {out}"
    )
    return EXIT_OK


def cmd_preprocess(args: argparse.Namespace) -> int:
    """Resample, normalize and store every manifest sample as APFP."""
    config = _resolve_config(args)
    out = _out_dir(args)
    records = load_manifest(args.manifest)
    if not records:
        raise InvalidArgumentError(f"{args.manifest}: no samples")

    report: list[dict] = []
    written: list[ManifestRecord] = []
    for record in records:
        source = resolve(record.path, args.manifest)
        try:
            cloud, parts = load_sample(source)
            if record.is_segmentation and record.target != EMBEDDED_PARTS:
                parts = read_part_labels(resolve(record.target, args.manifest))
            if parts is not None and parts.shape != (len(cloud),):
                raise InvalidArgumentError(f"{len(parts)} part labels for {len(cloud)} points")
            n_in = len(cloud)
            if config.geometry.n_points:
                indices = resample(cloud, config.geometry.n_points)
                cloud = cloud.take(indices)
                parts = None if parts is None else parts[indices]
            cloud = normalize_unit_sphere(cloud)
            name = Path(record.path).with_suffix(".apfp").name
            keep_parts = parts if record.is_segmentation else None
            apfp.write_point_binary(cloud, keep_parts, out / name)
        except PointFormerError as exc:
            logger.warning("%s: %s", record.path, exc)
            report.append({"path": record.path, "ok": False, "error": str(exc)})
            if not args.keep_going:
                _write_jsonl(out / "report.jsonl", report)
                raise
            continue
        target = EMBEDDED_PARTS if record.is_segmentation else record.target
        written.append(ManifestRecord(path=name, target=target))
        report.append({"path": record.path, "ok": True, "n_in": n_in, "n_out": len(cloud)})

    write_manifest(written, out / "manifest.tsv")
    _write_jsonl(out / "report.jsonl", report)
    _write_run(out, args, config, manifest=str(args.manifest))
    failures = sum(not r["ok"] for r in report)
    table = Table(title="Preprocessing", header_style="bold cyan")
    table.add_column("file")
    table.add_column("points", justify="right")
    table.add_column("status")
    for r in report:
        status = "[green]ok[/green]" if r["ok"] else f"[red]{r['error']}[/red]"
        table.add_row(r["path"], str(r.get("n_in", "-")), status)
    console.print(table)
    return EXIT_DATA if failures else EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    out = _out_dir(args)
    train_set = load_dataset(args.train)
    _check_labels(config, train_set)
    backbone = _load_backbone(args, config)
    model = PointFormerModel.build(config, backbone)

    fit = train_classifier if config.heads.task == "classification" else train_segmenter
    with console.status("[bold cyan]Training…[/bold cyan]", spinner="dots"):
        history: History = fit(model, train_set, config.train)
    history.write_history(out / "history.jsonl")

    metrics = [{"split": "train", **evaluate(model, train_set).as_record()}]
    if args.test:
        test_set = load_dataset(args.test)
        _check_labels(config, test_set)
        metrics.append({"split": "test", **evaluate(model, test_set).as_record()})
    _write_jsonl(out / "metrics.jsonl", metrics)
    apfw.write_checkpoint(apfw.model_to_checkpoint(model), out / "model.apfw")
    _write_run(out, args, config, synth_seed=args.synth_seed, checkpoint=args.checkpoint)
    for record in metrics:
        console.print(_metrics_table(f"{record['split']} metrics", record))
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    out = _out_dir(args)
    dataset = load_dataset(args.data)
    _check_labels(config, dataset)
    model = PointFormerModel.build(config, _load_backbone(args, config))
    if args.weights:
        apfw.apply_checkpoint(model, apfw.read_checkpoint(args.weights))
    with console.status("[bold cyan]Evaluating…[/bold cyan]", spinner="dots"):
        record = {"split": "eval", **evaluate(model, dataset).as_record()}
    _write_jsonl(out / "metrics.jsonl", [record])
    _write_run(out, args, config, weights=args.weights, synth_seed=args.synth_seed)
    console.print(_metrics_table("evaluation", record))
    return EXIT_OK


def cmd_fewshot(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    if config.heads.task != "classification":
        raise ConfigError("few-shot episodes are defined for classification only")
    spec = config.fewshot
    for key in ("n_way", "k_shot", "repeats"):
        if getattr(args, key) is not None:
            setattr(spec, key, getattr(args, key))
    spec.validate()
    out = _out_dir(args)
    dataset = load_dataset(args.data)
    backbone = _load_backbone(args, config)
    episode_config = dataclasses.replace(
        config, heads=dataclasses.replace(config.heads, num_classes=spec.n_way)
    )

    def build(seed: int) -> PointFormerModel:
        return PointFormerModel.build(episode_config, backbone, seed)

    with console.status("[bold cyan]Running episodes…[/bold cyan]", spinner="dots"):
        result = run_fewshot(build, dataset, spec, config.train)
    records = [{"episode": i, "accuracy": acc} for i, acc in enumerate(result.accuracies)]
    summary = {
        "setting": f"{spec.n_way}-way {spec.k_shot}-shot",
        "repeats": spec.repeats,
        "mean": result.mean,
        "std": result.std,
    }
    _write_jsonl(out / "metrics.jsonl", [*records, summary])
    _write_run(out, args, config, synth_seed=args.synth_seed, checkpoint=args.checkpoint)
    console.print(
        Panel(
            f"[bold green]{result.mean * 100:.1f} ± {result.std * 100:.1f}[/bold green] "
            f"over {spec.repeats} episodes",
            title=f"[dim]{summary['setting']}[/dim]",
            border_style="green",
        )
    )
    return EXIT_OK


def cmd_inspect(args: argparse.Namespace) -> int:
    """Tensor table plus frozen/trainable totals checked against the analytic counts."""
    config = _resolve_config(args)
    tensors = apfw.read_checkpoint(args.path)
    table = Table(title=str(args.path), header_style="bold cyan")
    for column, justify in (("name", "left"), ("shape", "left"), ("dtype", "left"),
                            ("trainable", "center"), ("params", "right")):  # fmt: skip
        table.add_column(column, justify=justify)
    frozen = trainable = backbone_total = adapter_total = 0
    for name, tensor in tensors.items():
        count = int(np.prod(tensor.shape, dtype=np.int64))
        if tensor.requires_grad:
            trainable += count
        else:
            frozen += count
        if name.startswith("backbone."):
            backbone_total += count
        if name.startswith("adapters.") and name.endswith((".w_enc", ".w_dec")):
            adapter_total += count
        table.add_row(
            name,
            str(tensor.shape),
            str(tensor.data.dtype),
            "yes" if tensor.requires_grad else "",
            f"{count:,}",
        )
    console.print(table)

    expected_frozen = frozen_parameter_count(config.backbone)
    expected_adapters = adapter_parameter_count(config.backbone)
    expected_trainable = trainable_parameter_count(config)
    summary = Table(title="Totals", header_style="bold cyan")
    summary.add_column("group")
    summary.add_column("params", justify="right")
    summary.add_column("expected", justify="right")
    summary.add_row("frozen", f"{frozen:,}", "")
    summary.add_row(
        "trainable", f"{trainable:,}", f"{expected_trainable:,}" if trainable else ""
    )
    summary.add_row("backbone", f"{backbone_total:,}", f"{expected_frozen:,}")
    if adapter_total:
        summary.add_row("adapter matrices", f"{adapter_total:,}", f"{expected_adapters:,}")
    console.print(summary)

    if backbone_total and backbone_total != expected_frozen:
        raise ConfigError(
            f"backbone holds {backbone_total:,} parameters, "
            f"the {config.system.profile} profile expects {expected_frozen:,}"
        )
    if adapter_total and adapter_total != expected_adapters:
        raise ConfigError(
            f"adapter matrices hold {adapter_total:,} parameters, expected {expected_adapters:,}"
        )
    if trainable and trainable != expected_trainable:
        raise ConfigError(
            f"checkpoint holds {trainable:,} trainable parameters, "
            f"the {config.heads.task} model expects {expected_trainable:,}"
        )
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="Path to pointformer_config.yaml")
    common.add_argument("--seed", type=int, help="Override train.seed")
    common.add_argument("--out", metavar="DIR", help="Output directory (default runs/<command>)")
    common.add_argument("--deterministic", action="store_true", help="Force deterministic mode")
    common.add_argument("--profile", choices=PROFILES, help="Size profile")
    common.add_argument("--log-level", metavar="LEVEL", help="Override system.log_level")

    model = _Parser(add_help=False)
    model.add_argument("--checkpoint", metavar="PATH", help="APFW file with backbone weights")
    model.add_argument("--synth-seed", type=int, help="Use a synthetic backbone from this seed")
    model.add_argument("--embedding", choices=("pointnet", "rpn"), help="Point embedding mode")
    model.add_argument("--ablation", choices=ABLATIONS, default="none", help="Component ablation")
    model.add_argument("--task", choices=("classification", "segmentation"))

    parser = _Parser(prog="pointformer", description=f"{__app_name__}: point cloud adapters")
    parser.add_argument("--version", action="version", version=f"{__app_name__} {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="Write a synthetic pretrained backbone")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("make-dataset", parents=[common], help="Write the synthetic benchmark")
    p.add_argument("--task", choices=("classification", "segmentation"))
    p.add_argument("--train-per-class", type=int, default=32)
    p.add_argument("--test-per-class", type=int, default=32)
    p.set_defaults(func=cmd_make_dataset)

    p = sub.add_parser("preprocess", parents=[common], help="Normalize samples into APFP files")
    p.add_argument("manifest", help="Tab-separated manifest of OFF/APFP samples")
    p.add_argument("--n-points", type=int, help="Override geometry.n_points")
    p.add_argument("--keep-going", action="store_true", help="Continue past per-file failures")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", parents=[common, model], help="Train embed, adapters and head")
    p.add_argument("--train", required=True, metavar="MANIFEST")
    p.add_argument("--test", metavar="MANIFEST")
    p.add_argument("--lr-max", type=float)
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common, model], help="Evaluate a model on a manifest")
    p.add_argument("--data", required=True, metavar="MANIFEST")
    p.add_argument("--weights", metavar="PATH", help="APFW file with trained tensors")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("fewshot", parents=[common, model], help="N-way K-shot episodes")
    p.add_argument("--data", required=True, metavar="MANIFEST")
    p.add_argument("--n-way", type=int)
    p.add_argument("--k-shot", type=int)
    p.add_argument("--repeats", type=int)
    p.add_argument("--lr-max", type=float)
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=cmd_fewshot)

    p = sub.add_parser("inspect", parents=[common], help="Print a checkpoint's tensor table")
    p.add_argument("path", help="APFW checkpoint")
    p.add_argument("--embedding", choices=("pointnet", "rpn"), help="Point embedding mode")
    p.add_argument("--ablation", choices=ABLATIONS, default="none", help="Component ablation")
    p.add_argument("--task", choices=("classification", "segmentation"))
    p.set_defaults(func=cmd_inspect)
    return parser


def run(argv: Sequence[str] | None = None) -> int:
    """Parse *argv*, run the subcommand and return its exit code."""
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PointFormerError as exc:
        console.print(f"[red]error:[/red] {exc}")
        return exc.exit_code


def main() -> None:
    try:
        sys.exit(run())
    except KeyboardInterrupt:
        console.print("\n[dim]Interrupted.[/dim]")
        sys.exit(EXIT_USER)


if __name__ == "__main__":
    main()
