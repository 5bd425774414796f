"""Experiment orchestration: teacher pre-training, student distillation with
the four loss toggles, tiled evaluation, and run records with plots.

Every run writes a self-contained directory (config snapshot, per-step loss
CSV, periodic metric snapshots, model report, checkpoint + JSON sidecar) so
results can be compared and re-plotted later.
"""

import csv
import json
import logging
import subprocess
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import torch
import yaml

from .adversarial import Discriminator, DiscriminatorSpec, alternating_step, param_checksum
from .data import (SegmentationDataset, SyntheticSpec, TileSpec, generate_synthetic,
                   load_dataset, random_flips, stitch_predictions, tile_raster)
from .distill import LossBreakdown, LossToggles, LossWeights, masked_cross_entropy, total_loss
from .metrics import ConfusionMatrix, accumulate, metrics_summary
from .models import ModelSpec, build_model, count_flops, count_params, tap_shape
from .relation import ChannelProjection

log = logging.getLogger(__name__)

LOSS_CSV_HEADER = ("step", "l_ce", "l_p", "l_adv", "l_s", "l_c", "total", "l_d")


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "sgd"
    lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 1e-4
    disc_lr: float = 1e-4  # Adam, fixed (no poly decay on the critic)

    def __post_init__(self):
        if self.kind != "sgd":
            raise ValueError(f"only sgd is supported, got {self.kind!r}")


@dataclass(frozen=True)
class ScheduleConfig:
    iters: int = 1000
    poly_power: float = 0.9
    teacher_iters: int | None = None  # defaults to iters

    def __post_init__(self):
        if self.iters < 0 or (self.teacher_iters is not None and self.teacher_iters < 0):
            raise ValueError("iteration counts must be >= 0")


@dataclass
class ExperimentConfig:
    name: str
    teacher: ModelSpec
    student: ModelSpec
    data_root: str | None = None
    synthetic: SyntheticSpec | None = None
    weights: LossWeights = field(default_factory=LossWeights)
    toggles: LossToggles = field(default_factory=LossToggles)
    tile: TileSpec = field(default_factory=lambda: TileSpec.square(64))
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    batch_size: int = 8
    seed: int = 0
    disc_seed: int | None = None  # defaults to seed + 1000
    deterministic: bool = True
    snapshot_every: int = 100
    gp_weight: float = 10.0
    tap_pool_limit: int = 64
    disc_widths: tuple = (64, 128, 256, 512)

    def __post_init__(self):
        if (self.data_root is None) == (self.synthetic is None):
            raise ValueError("config needs exactly one of data_root or synthetic")
        if self.teacher.num_classes != self.student.num_classes:
            raise ValueError("teacher and student must agree on num_classes")
        if self.synthetic is not None and self.synthetic.num_classes != self.student.num_classes:
            raise ValueError("synthetic num_classes must match the models")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    @property
    def effective_disc_seed(self) -> int:
        return self.seed + 1000 if self.disc_seed is None else self.disc_seed

    @property
    def teacher_iters(self) -> int:
        s = self.schedule
        return s.iters if s.teacher_iters is None else s.teacher_iters


def _hydrate(cls, d: dict):
    names = {f.name for f in fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**d)


def _parse_tile(d) -> TileSpec:
    if isinstance(d, dict) and "tile" in d:
        tile = d["tile"]
        th, tw = (tile, tile) if isinstance(tile, int) else tuple(tile)
        stride = d.get("stride", tile)
        sh, sw = (stride, stride) if isinstance(stride, int) else tuple(stride)
        return TileSpec(th, tw, sh, sw, d.get("pad_mode", "reflect"))
    return _hydrate(TileSpec, dict(d))


def config_from_dict(d: dict) -> ExperimentConfig:
    d = dict(d)
    parsed = {
        "teacher": _hydrate(ModelSpec, d.pop("teacher")),
        "student": _hydrate(ModelSpec, d.pop("student")),
    }
    if "synthetic" in d and d["synthetic"] is not None:
        synth = dict(d.pop("synthetic"))
        synth["size"] = tuple(synth["size"])
        parsed["synthetic"] = _hydrate(SyntheticSpec, synth)
    else:
        d.pop("synthetic", None)
    for key, cls in (("weights", LossWeights), ("toggles", LossToggles),
                     ("optimizer", OptimizerConfig), ("schedule", ScheduleConfig)):
        if key in d and d[key] is not None:
            parsed[key] = _hydrate(cls, dict(d.pop(key)))
    if "tile" in d and d["tile"] is not None:
        parsed["tile"] = _parse_tile(d.pop("tile"))
    if "disc_widths" in d:
        d["disc_widths"] = tuple(d["disc_widths"])
    return _hydrate(ExperimentConfig, {**d, **parsed})


def config_to_dict(cfg: ExperimentConfig) -> dict:
    d = asdict(cfg)
    if d.get("synthetic") is not None:
        d["synthetic"]["size"] = list(d["synthetic"]["size"])
    d["disc_widths"] = list(d["disc_widths"])
    return d


def load_config(path) -> ExperimentConfig:
    with open(path) as f:
        return config_from_dict(yaml.safe_load(f))


def save_config(cfg: ExperimentConfig, path) -> None:
    with open(path, "w") as f:
        yaml.safe_dump(config_to_dict(cfg), f, sort_keys=False)


# ---------------------------------------------------------------------------
# datasets and batching

def resolve_dataset(cfg: ExperimentConfig) -> SegmentationDataset:
    if cfg.synthetic is not None:
        return generate_synthetic(cfg.synthetic)
    return load_dataset(cfg.data_root, num_classes=cfg.student.num_classes)


def _training_tiles(dataset: SegmentationDataset, tile: TileSpec):
    tiles = []
    for i in dataset.train_indices:
        tiles.extend(tile_raster(dataset.images[i], dataset.labels[i], tile,
                                 ignore_index=dataset.ignore_index))
    if not tiles:
        raise ValueError("dataset has no training tiles")
    return tiles


def _sample_batch(tiles, batch_size: int, rng: np.random.Generator, augment: bool = True):
    idx = rng.integers(0, len(tiles), size=batch_size)
    images, labels = [], []
    for i in idx:
        img, lbl = tiles[i].image, tiles[i].labels
        if augment:
            img, lbl = random_flips(img, lbl, rng)
        images.append(img)
        labels.append(lbl)
    x = torch.from_numpy(np.stack(images)).permute(0, 3, 1, 2).float() / 255.0
    y = torch.from_numpy(np.stack(labels).astype(np.int64))
    return x, y


def _image_to_tensor(img: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(img)).permute(2, 0, 1).float() / 255.0


# ---------------------------------------------------------------------------
# run records

def _git_hash() -> str | None:
    try:
        return subprocess.run(["git", "rev-parse", "HEAD"], capture_output=True,
                              text=True, timeout=5, check=True).stdout.strip()
    except Exception:
        return None


class RunWriter:
    """Owns one run directory and its artifact files."""

    def __init__(self, run_dir: Path):
        self.run_dir = Path(run_dir)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self.snapshots = []
        self._loss_file = open(self.run_dir / "losses.csv", "w", newline="")
        self._loss_writer = csv.writer(self._loss_file)
        self._loss_writer.writerow(LOSS_CSV_HEADER)

    def log_losses(self, step: int, breakdown: LossBreakdown, l_d: float):
        row = [step] + [repr(float(v)) for v in breakdown.csv_row() + [l_d]]
        self._loss_writer.writerow(row)

    def log_snapshot(self, step: int, metrics: dict):
        self.snapshots.append({"step": step, **metrics})

    def finish(self, config: ExperimentConfig, report: dict):
        self._loss_file.close()
        save_config(config, self.run_dir / "config.yaml")
        with open(self.run_dir / "snapshots.json", "w") as f:
            json.dump(self.snapshots, f, indent=2)
        with open(self.run_dir / "report.json", "w") as f:
            json.dump(report, f, indent=2)

    def abort(self):
        self._loss_file.close()


@dataclass
class RunRecord:
    """A finished run's artifacts, loaded back from its directory."""

    run_dir: Path
    config: dict
    losses: list
    snapshots: list
    report: dict

    @staticmethod
    def load(run_dir) -> "RunRecord":
        run_dir = Path(run_dir)
        with open(run_dir / "config.yaml") as f:
            config = yaml.safe_load(f)
        losses = []
        with open(run_dir / "losses.csv", newline="") as f:
            for row in csv.DictReader(f):
                losses.append({k: (int(v) if k == "step" else float(v)) for k, v in row.items()})
        with open(run_dir / "snapshots.json") as f:
            snapshots = json.load(f)
        with open(run_dir / "report.json") as f:
            report = json.load(f)
        return RunRecord(run_dir=run_dir, config=config, losses=losses,
                         snapshots=snapshots, report=report)


def new_run_dir(root, name: str) -> Path:
    stamp = time.strftime("%Y%m%d-%H%M%S")
    run_dir = Path(root) / f"{stamp}-{name}"
    suffix = 0
    while run_dir.exists():
        suffix += 1
        run_dir = Path(root) / f"{stamp}-{name}-{suffix}"
    return run_dir


def save_checkpoint(path: Path, model, spec: ModelSpec, seed: int, kind: str,
                    metrics: dict | None = None, extra: dict | None = None) -> Path:
    payload = {"model": model.state_dict(), "spec": asdict(spec), "seed": seed, "kind": kind}
    if extra:
        payload.update(extra)
    torch.save(payload, path)
    sidecar = {"spec": asdict(spec), "seed": seed, "kind": kind,
               "git_hash": _git_hash(), "metrics": metrics}
    with open(path.with_suffix(".json"), "w") as f:
        json.dump(sidecar, f, indent=2)
    return path


def load_checkpoint(path):
    """Rebuild the saved network and return (model, payload)."""
    payload = torch.load(path, map_location="cpu", weights_only=True)
    # the checkpoint itself supplies the weights; the spec's original
    # pretrained_path may no longer exist and must not be re-read
    spec = _hydrate(ModelSpec, {**payload["spec"], "pretrained_path": None})
    model = build_model(spec)
    model.load_state_dict(payload["model"])
    model.eval()
    return model, payload


# ---------------------------------------------------------------------------
# training

def _poly_lr(base_lr: float, step: int, total: int, power: float) -> float:
    if total <= 0:
        return base_lr
    return base_lr * (1.0 - step / total) ** power


def _set_lr(optimizer, lr: float):
    for group in optimizer.param_groups:
        group["lr"] = lr


def _seed_everything(cfg: ExperimentConfig):
    torch.manual_seed(cfg.seed)
    if cfg.deterministic:
        torch.use_deterministic_algorithms(True)


def eval_tile_spec(tile: TileSpec) -> TileSpec:
    """Evaluation tiling: 100 px overlap when the tile allows it, else no overlap."""
    sh = tile.tile_h - 100 if tile.tile_h > 100 else tile.tile_h
    sw = tile.tile_w - 100 if tile.tile_w > 100 else tile.tile_w
    return TileSpec(tile.tile_h, tile.tile_w, sh, sw, tile.pad_mode)


def _model_report_dict(spec: ModelSpec, model, tile: TileSpec) -> dict:
    h, w = tile.tile_h, tile.tile_w
    return {
        "params_millions": count_params(model),
        "flops_giga": count_flops(model, h, w),
        "input_hw": [h, w],
        "tap_shape": list(tap_shape(model, h, w)),
    }


class _LastGood:
    """Rolling copy of the most recent healthy model state, written out when a
    run aborts on a non-finite loss."""

    def __init__(self, model):
        self.model = model
        self.state = None
        self.step = -1
        self.refresh(0)

    def refresh(self, step: int):
        self.state = {k: v.detach().clone() for k, v in self.model.state_dict().items()}
        self.step = step

    def dump(self, run_dir: Path) -> Path:
        path = run_dir / "checkpoint_last_good.pt"
        torch.save({"model": self.state, "step": self.step}, path)
        return path


def train_teacher(cfg: ExperimentConfig, out_root="runs") -> Path:
    """Train the teacher with cross-entropy only; returns the checkpoint path.

    With zero iterations the checkpoint is the seeded initialization. A
    non-finite loss aborts the run, leaving the last healthy snapshot as
    checkpoint_last_good.pt.
    """
    _seed_everything(cfg)
    dataset = resolve_dataset(cfg)
    _check_classes(cfg.teacher, dataset)
    model = build_model(cfg.teacher, seed=cfg.seed)
    opt = torch.optim.SGD(model.parameters(), lr=cfg.optimizer.lr,
                          momentum=cfg.optimizer.momentum, weight_decay=cfg.optimizer.weight_decay)
    tiles = _training_tiles(dataset, cfg.tile)
    rng = np.random.default_rng(cfg.seed)
    run_dir = new_run_dir(out_root, f"{cfg.name}-teacher")
    writer = RunWriter(run_dir)
    guard = _LastGood(model)
    iters = cfg.teacher_iters
    started = time.monotonic()

    try:
        model.train()
        for step in range(iters):
            _set_lr(opt, _poly_lr(cfg.optimizer.lr, step, iters, cfg.schedule.poly_power))
            images, labels = _sample_batch(tiles, cfg.batch_size, rng)
            opt.zero_grad(set_to_none=True)
            loss = masked_cross_entropy(model(images)["logits"], labels,
                                        ignore_index=dataset.ignore_index)
            if not torch.isfinite(loss):
                raise RuntimeError(f"teacher loss diverged at step {step}: {loss.item()}")
            loss.backward()
            opt.step()
            writer.log_losses(step, total_loss(loss.item(), 0.0, 0.0, 0.0, 0.0, cfg.weights), 0.0)
            if (step + 1) % cfg.snapshot_every == 0 or step + 1 == iters:
                writer.log_snapshot(step + 1, evaluate(model, dataset, eval_tile_spec(cfg.tile)))
                guard.refresh(step + 1)
                model.train()
    except RuntimeError:
        path = guard.dump(run_dir)
        writer.abort()
        log.error("teacher run aborted; last good checkpoint at %s", path)
        raise

    model.eval()
    final_metrics = evaluate(model, dataset, eval_tile_spec(cfg.tile)) if len(dataset.val_indices) else None
    ckpt = save_checkpoint(run_dir / "checkpoint.pt", model, cfg.teacher, cfg.seed,
                           "teacher", metrics=final_metrics)
    writer.finish(cfg, {
        "name": cfg.name, "kind": "teacher",
        "wall_clock_sec": time.monotonic() - started,
        "model": _model_report_dict(cfg.teacher, model, cfg.tile),
        "final_metrics": final_metrics,
        "checkpoint": ckpt.name,
    })
    return ckpt


def distill(cfg: ExperimentConfig, teacher_ckpt, out_root="runs") -> Path:
    """Distill the student from a frozen teacher checkpoint.

    Runs one alternating (discriminator, student) update per iteration with
    poly learning-rate decay on the student. Toggled-off loss terms are logged
    as exact zeros. Returns the student checkpoint path.
    """
    _seed_everything(cfg)
    dataset = resolve_dataset(cfg)
    _check_classes(cfg.student, dataset)

    teacher, payload = load_checkpoint(teacher_ckpt)
    _check_classes(teacher.spec, dataset)
    teacher.eval()
    for p in teacher.parameters():
        p.requires_grad_(False)
    frozen_checksum = param_checksum(teacher)

    student = build_model(cfg.student, seed=cfg.seed)
    student_params = list(student.parameters())

    projector = None
    if student.tap_channels != teacher.tap_channels and (cfg.toggles.use_lc):
        with torch.random.fork_rng():
            torch.manual_seed(cfg.seed + 1)
            projector = ChannelProjection(student.tap_channels, teacher.tap_channels)
        student_params += list(projector.parameters())

    adv_active = cfg.toggles.use_adv and cfg.weights.lambda2 > 0
    discriminator = None
    optimizers = {}
    noise_generator = None
    if adv_active:
        with torch.random.fork_rng():
            torch.manual_seed(cfg.effective_disc_seed)
            discriminator = Discriminator(3, cfg.student.num_classes,
                                          DiscriminatorSpec(conv_widths=tuple(cfg.disc_widths)))
        optimizers["discriminator"] = torch.optim.Adam(
            discriminator.parameters(), lr=cfg.optimizer.disc_lr, betas=(0.5, 0.9))
        noise_generator = torch.Generator().manual_seed(cfg.effective_disc_seed)

    optimizers["student"] = torch.optim.SGD(student_params, lr=cfg.optimizer.lr,
                                            momentum=cfg.optimizer.momentum,
                                            weight_decay=cfg.optimizer.weight_decay)

    tiles = _training_tiles(dataset, cfg.tile)
    rng = np.random.default_rng(cfg.seed)
    run_dir = new_run_dir(out_root, f"{cfg.name}-distill")
    writer = RunWriter(run_dir)
    guard = _LastGood(student)
    iters = cfg.schedule.iters
    started = time.monotonic()

    try:
        student.train()
        for step in range(iters):
            _set_lr(optimizers["student"],
                    _poly_lr(cfg.optimizer.lr, step, iters, cfg.schedule.poly_power))
            batch = _sample_batch(tiles, cfg.batch_size, rng)
            breakdown, l_d = alternating_step(
                batch, teacher, student, discriminator, optimizers, cfg.weights,
                toggles=cfg.toggles, projector=projector, ignore_index=dataset.ignore_index,
                gp_weight=cfg.gp_weight, tap_pool_limit=cfg.tap_pool_limit,
                noise_generator=noise_generator)
            writer.log_losses(step, breakdown, l_d)
            if (step + 1) % cfg.snapshot_every == 0 or step + 1 == iters:
                writer.log_snapshot(step + 1, evaluate(student, dataset, eval_tile_spec(cfg.tile)))
                guard.refresh(step + 1)
                student.train()
    except RuntimeError:
        path = guard.dump(run_dir)
        writer.abort()
        log.error("distillation aborted; last good checkpoint at %s", path)
        raise

    if param_checksum(teacher) != frozen_checksum:
        raise RuntimeError("teacher parameters drifted during distillation")

    student.eval()
    final_metrics = evaluate(student, dataset, eval_tile_spec(cfg.tile)) if len(dataset.val_indices) else None
    extra = {"projector": projector.state_dict() if projector is not None else None}
    ckpt = save_checkpoint(run_dir / "checkpoint.pt", student, cfg.student, cfg.seed,
                           "student", metrics=final_metrics, extra=extra)
    if discriminator is not None:
        torch.save({"model": discriminator.state_dict(), "seed": cfg.effective_disc_seed},
                   run_dir / "discriminator.pt")
    writer.finish(cfg, {
        "name": cfg.name, "kind": "distill",
        "wall_clock_sec": time.monotonic() - started,
        "model": _model_report_dict(cfg.student, student, cfg.tile),
        "final_metrics": final_metrics,
        "checkpoint": ckpt.name,
    })
    return ckpt


def _check_classes(spec: ModelSpec, dataset: SegmentationDataset):
    if spec.num_classes != dataset.num_classes:
        raise ValueError(f"class-count mismatch: model has {spec.num_classes}, "
                         f"dataset has {dataset.num_classes}")


# ---------------------------------------------------------------------------
# evaluation

@torch.no_grad()
def evaluate(model_or_ckpt, dataset: SegmentationDataset, tile: TileSpec | None = None,
             split: str = "val", oracle: bool = False, batch_size: int = 8) -> dict:
    """Tile, predict, stitch, and score a checkpoint or in-memory model.

    `split` selects "val", "train", or "all" images. With `oracle` set the
    stitched prediction is replaced by the ground truth, which must score 1.0
    on every metric; it exists to validate the metric plumbing end to end.
    """
    if isinstance(model_or_ckpt, (str, Path)):
        model, _ = load_checkpoint(model_or_ckpt)
    else:
        model = model_or_ckpt
    _check_classes(model.spec, dataset)

    was_training = model.training
    model.eval()
    indices = {"val": dataset.val_indices, "train": dataset.train_indices,
               "all": list(range(len(dataset)))}.get(split)
    if indices is None:
        raise ValueError(f"unknown split {split!r}")
    if not indices:
        raise ValueError(f"split {split!r} is empty")

    cm = ConfusionMatrix(dataset.num_classes, dataset.ignore_index)
    for i in indices:
        image, labels = dataset.images[i], dataset.labels[i]
        h, w = labels.shape
        spec = tile if tile is not None else TileSpec.square(max(h, w))
        tiles = tile_raster(image, labels, spec, ignore_index=dataset.ignore_index)
        scored = []
        for start in range(0, len(tiles), batch_size):
            chunk = tiles[start:start + batch_size]
            x = torch.stack([_image_to_tensor(t.image) for t in chunk])
            probs = torch.softmax(model(x)["logits"], dim=1).numpy()
            scored += [(probs[k], chunk[k].origin) for k in range(len(chunk))]
        stitched = stitch_predictions(scored, h, w)
        pred = stitched.argmax(axis=0)
        if oracle:
            pred = np.where(labels == dataset.ignore_index, 0, labels)
        accumulate(cm, pred, labels)

    if was_training:
        model.train()
    return {"split": split, "num_images": len(indices), **metrics_summary(cm)}


# ---------------------------------------------------------------------------
# plotting

def plot_report(run_dirs, out_dir) -> list[Path]:
    """Emit loss curves, an accuracy-vs-size scatter, per-class F1 bars, and
    the snapshot table as CSV for one or more finished runs."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    records = [r if isinstance(r, RunRecord) else RunRecord.load(r) for r in run_dirs]
    if not records:
        raise ValueError("plot_report needs at least one run")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    # loss curves, one panel per run
    fig, axes = plt.subplots(1, len(records), figsize=(6 * len(records), 4), squeeze=False)
    for ax, rec in zip(axes[0], records):
        steps = [row["step"] for row in rec.losses]
        for key in ("l_ce", "l_p", "l_adv", "l_s", "l_c", "total"):
            values = [row[key] for row in rec.losses]
            if any(v != 0 for v in values) or key in ("l_ce", "total"):
                ax.plot(steps, values, label=key, linewidth=1)
        ax.set_title(_run_label(rec))
        ax.set_xlabel("step")
        ax.set_ylabel("loss")
        ax.legend(fontsize=8)
    fig.tight_layout()
    path = out_dir / "loss_curves.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    # final mIoU vs parameter count, one point per run
    fig, ax = plt.subplots(figsize=(6, 4))
    for rec in records:
        miou = _final_miou(rec)
        ax.scatter(rec.report["model"]["params_millions"], miou, s=40)
        ax.annotate(_run_label(rec), (rec.report["model"]["params_millions"], miou),
                    fontsize=8, xytext=(4, 4), textcoords="offset points")
    ax.set_xlabel("parameters (M)")
    ax.set_ylabel("val mIoU")
    fig.tight_layout()
    path = out_dir / "miou_vs_params.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    # per-class F1 bars
    fig, ax = plt.subplots(figsize=(7, 4))
    width = 0.8 / len(records)
    for k, rec in enumerate(records):
        f1 = _final_metrics(rec).get("per_class_f1", [])
        xs = np.arange(len(f1)) + k * width
        ax.bar(xs, f1, width=width, label=_run_label(rec))
    ax.set_xlabel("class")
    ax.set_ylabel("F1")
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = out_dir / "f1_bars.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    # snapshot table backing the figures
    path = out_dir / "snapshots.csv"
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["run", "step", "miou", "mean_f1", "overall_accuracy"])
        for rec in records:
            for snap in rec.snapshots:
                w.writerow([_run_label(rec), snap["step"], snap["miou"],
                            snap["mean_f1"], snap["overall_accuracy"]])
    written.append(path)
    return written


def _run_label(rec: RunRecord) -> str:
    return f"{rec.config.get('name', rec.run_dir.name)}-{rec.report.get('kind', '')}"


def _final_metrics(rec: RunRecord) -> dict:
    if rec.report.get("final_metrics"):
        return rec.report["final_metrics"]
    return rec.snapshots[-1] if rec.snapshots else {}


def _final_miou(rec: RunRecord) -> float:
    return float(_final_metrics(rec).get("miou", 0.0))
