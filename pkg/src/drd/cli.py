"""Command-line entry points wrapping the training/evaluation harness."""

import csv
import json
import logging
import time
from pathlib import Path

import click

from .data import SyntheticSpec, TileSpec, generate_synthetic, load_dataset, save_dataset
from .harness import (evaluate, eval_tile_spec, distill as run_distill, load_checkpoint,
                      load_config, plot_report, train_teacher)
from .models import ModelSpec, model_report


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Enable info logging.")
def main(verbose):
    """Dual-relation distillation toolkit for compact segmentation models."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")


@main.command("train-teacher")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out-root", default="runs", show_default=True)
def train_teacher_cmd(config_path, out_root):
    """Train the teacher network with cross-entropy only."""
    ckpt = train_teacher(load_config(config_path), out_root=out_root)
    click.echo(str(ckpt))


@main.command("distill")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--teacher", "teacher_ckpt", required=True, type=click.Path(exists=True))
@click.option("--out-root", default="runs", show_default=True)
def distill_cmd(config_path, teacher_ckpt, out_root):
    """Distill a student from a frozen teacher checkpoint."""
    ckpt = run_distill(load_config(config_path), teacher_ckpt, out_root=out_root)
    click.echo(str(ckpt))


@main.command("evaluate")
@click.option("--ckpt", required=True, type=click.Path(exists=True))
@click.option("--data", "data_root", required=True, type=click.Path(exists=True))
@click.option("--tile", type=int, default=None, help="Square tile size; whole image if omitted.")
@click.option("--stride", type=int, default=None, help="Tile stride; tile-100 if omitted.")
@click.option("--split", default="all", show_default=True, type=click.Choice(["all", "train", "val"]))
@click.option("--out", "out_path", type=click.Path(), default=None, help="Also write the JSON here.")
@click.option("--append-csv", type=click.Path(), default=None,
              help="Append a one-line summary row for experiment tracking.")
def evaluate_cmd(ckpt, data_root, tile, stride, split, out_path, append_csv):
    """Evaluate a checkpoint on a folder dataset, with tiled stitching."""
    model, _ = load_checkpoint(ckpt)
    dataset = load_dataset(data_root, num_classes=model.spec.num_classes)
    spec = None
    if tile is not None:
        spec = TileSpec.square(tile, stride) if stride is not None else eval_tile_spec(TileSpec.square(tile))
    result = evaluate(model, dataset, spec, split=split)
    text = json.dumps(result, indent=2)
    click.echo(text)
    if out_path:
        Path(out_path).write_text(text)
    if append_csv:
        path = Path(append_csv)
        new = not path.exists()
        with open(path, "a", newline="") as f:
            w = csv.writer(f)
            if new:
                w.writerow(["timestamp", "checkpoint", "split", "miou", "mean_f1", "overall_accuracy"])
            w.writerow([time.strftime("%Y-%m-%dT%H:%M:%S"), ckpt, split,
                        result["miou"], result["mean_f1"], result["overall_accuracy"]])


@main.command("model-report")
@click.option("--spec", "backbone", required=True,
              type=click.Choice(["resnet101", "resnet18", "resnet18_half", "tiny_cnn"]))
@click.option("--hw", nargs=2, type=int, default=(512, 1024), show_default=True)
@click.option("--classes", type=int, default=19, show_default=True)
@click.option("--head", type=click.Choice(["ppm", "none"]), default=None,
              help="Defaults to ppm for resnets, none for tiny_cnn.")
@click.option("--width-multiplier", type=float, default=1.0, show_default=True)
def model_report_cmd(backbone, hw, classes, head, width_multiplier):
    """Print parameter count, FLOPs, and tap shape as JSON."""
    if head is None:
        head = "none" if backbone == "tiny_cnn" else "ppm"
    spec = ModelSpec(backbone=backbone, head=head, num_classes=classes,
                     width_multiplier=width_multiplier)
    click.echo(model_report(spec, hw[0], hw[1]).to_json())


@main.command("gen-synthetic")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--classes", type=int, default=5, show_default=True)
@click.option("--size", nargs=2, type=int, default=(64, 64), show_default=True)
@click.option("--count", type=int, default=100, show_default=True)
@click.option("--shapes", type=click.Choice(["rects", "blobs"]), default="rects", show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
def gen_synthetic_cmd(seed, classes, size, count, shapes, out_dir):
    """Generate a deterministic synthetic dataset as an images/labels folder pair."""
    spec = SyntheticSpec(num_images=count, size=tuple(size), num_classes=classes,
                         shape_family=shapes, seed=seed)
    save_dataset(generate_synthetic(spec), out_dir)
    click.echo(f"wrote {count} samples to {out_dir}")


@main.command("plot")
@click.option("--runs", "runs_dir", required=True, type=click.Path(exists=True),
              help="A run directory, or a directory containing run directories.")
@click.option("--out", "out_dir", required=True, type=click.Path())
def plot_cmd(runs_dir, out_dir):
    """Render loss curves, accuracy-vs-size scatter, and F1 bars for finished runs."""
    root = Path(runs_dir)
    if (root / "config.yaml").exists():
        run_dirs = [root]
    else:
        run_dirs = sorted(d for d in root.iterdir() if (d / "config.yaml").exists())
    if not run_dirs:
        raise click.ClickException(f"no finished runs under {root}")
    for path in plot_report(run_dirs, out_dir):
        click.echo(str(path))


if __name__ == "__main__":
    main()
