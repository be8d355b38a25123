"""Experiment steps: dataset synthesis, per-cell training, evaluation and SAR figures.

Directory layout under the experiment output directory::

    config.txt                       canonical copy of the configuration
    data/manifest.txt                file checksums and composition
    data/{train,val}_{mode}.fgl      datasets (one file per preprocessing mode)
    cells/{mode}_{mix}_s{seed}/      checkpoint.fgc, metrics.csv, cell.txt
    sar/                             PGM images, extent sidecars, sar.txt
"""
from __future__ import annotations

import csv
import hashlib
import io
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..dsp import Mode, preprocess
from ..nn import Metrics, NetworkSpec, Split, TrainResult, evaluate, train
from ..radar_model import ArrayGeometry, NoiseSpec, RadarConfig, TargetCloud
from ..scene_synth import (GestureClass, VariantKind, make_gesture_cloud, sample_keys,
                           synth_sample, validation_indices)
from ..sar_imaging import (ImageGrid, backproject, box_mask, image_snr, raster_positions,
                           simulate_aperture, write_pgm)
from .config import ExperimentConfig, Mix
from .io import Dataset, FormatError, read_checkpoint, read_dataset, sha256_file, write_checkpoint, write_dataset

log = logging.getLogger(__name__)

EXPECTED_WIDTH = {Mode.RANGE: 8, Mode.RANGE_ANGLE: 16}


class DataError(RuntimeError):
    """Missing, corrupt or inconsistent experiment files."""


def _mode_tag(mode: Mode) -> str:
    return Mode(mode).label


def data_path(out_dir, split: str, mode: Mode) -> Path:
    return Path(out_dir) / "data" / f"{split}_{_mode_tag(mode)}.fgl"


def cell_dir(out_dir, mode: Mode, mix: Mix, seed: int) -> Path:
    return Path(out_dir) / "cells" / f"{_mode_tag(mode)}_{mix.value}_s{seed}"


def write_kv(path, items) -> None:
    Path(path).write_text("".join(f"{k} = {v}\n" for k, v in items), encoding="utf-8")


def read_kv(path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    out = {}
    for line in text.splitlines():
        if line.strip():
            k, _, v = line.partition("=")
            out[k.strip()] = v.strip()
    return out


# ----------------------------------------------------------------------------- synth

@dataclass
class Composition:
    train_human: int
    train_sterile: int
    val_human: int
    val_sterile: int

    def sterile_fraction(self, mix: Mix) -> float:
        n_sterile = self.train_sterile if mix is Mix.COMBINED else 0
        return n_sterile / (self.train_human + n_sterile)

    def summary(self) -> str:
        comb = self.train_human + self.train_sterile
        return (f"validation: {self.val_human} human, {self.val_sterile} sterile\n"
                f"HumanOnly training: {self.train_human} human, 0 sterile\n"
                f"Combined training: {self.train_human} human + {self.train_sterile} sterile = {comb} "
                f"(sterile {100 * self.sterile_fraction(Mix.COMBINED):.1f}%, "
                f"human {100 * (1 - self.sterile_fraction(Mix.COMBINED)):.1f}%)")


def synthesize(cfg: ExperimentConfig, out_dir, progress=None) -> Composition:
    """Generate every sample once and write train/val files for each mode."""
    out_dir = Path(out_dir)
    data_dir = out_dir / "data"
    try:
        data_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "config.txt").write_text(cfg.to_text(include_out_dir=False), encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot write to {out_dir}: {exc}") from None
    spec = cfg.dataset_spec()
    val_idx = {g: set(v.tolist()) for g, v in validation_indices(spec, cfg.val_per_class).items()}
    keys = sample_keys(spec)
    images = {m: [] for m in cfg.modes}
    labels, variants, is_val = [], [], []
    for n, (gesture, kind, i) in enumerate(keys):
        sample = synth_sample(spec, gesture, kind, i)
        for m in cfg.modes:
            images[m].append(preprocess(sample.cube, m, start_bin=cfg.start_bin).astype(np.float32))
        labels.append(int(gesture))
        variants.append(int(kind))
        is_val.append(kind == VariantKind.HUMAN and i in val_idx[gesture])
        if progress is not None and (n + 1) % 500 == 0:
            progress(n + 1, len(keys))
    labels = np.array(labels, dtype=np.uint8)
    variants = np.array(variants, dtype=np.uint8)
    is_val = np.array(is_val)
    comp = Composition(int(np.sum(~is_val & (variants == 0))), int(np.sum(~is_val & (variants == 1))),
                       int(np.sum(is_val & (variants == 0))), int(np.sum(is_val & (variants == 1))))
    items = [("master_seed", cfg.master_seed),
             ("config_sha256", hashlib.sha256(cfg.to_text(include_out_dir=False).encode()).hexdigest())]
    for m in cfg.modes:
        x = np.stack(images[m])
        for split, mask in (("train", ~is_val), ("val", is_val)):
            ds = Dataset(m, x[mask], labels[mask], variants[mask])
            digest = write_dataset(ds, data_path(out_dir, split, m))
            items.append((f"sha256.{split}_{_mode_tag(m)}", digest))
    items += [("count.train.human", comp.train_human), ("count.train.sterile", comp.train_sterile),
              ("count.val.human", comp.val_human), ("count.val.sterile", comp.val_sterile)]
    write_kv(data_dir / "manifest.txt", items)
    return comp


def read_manifest(out_dir) -> dict:
    return read_kv(Path(out_dir) / "data" / "manifest.txt")


def composition(out_dir) -> Composition:
    man = read_manifest(out_dir)
    try:
        return Composition(*(int(man[f"count.{k}"]) for k in
                             ("train.human", "train.sterile", "val.human", "val.sterile")))
    except (KeyError, ValueError) as exc:
        raise DataError(f"manifest lacks composition counts: {exc}") from None


def verified_dataset(out_dir, split: str, mode: Mode, manifest: dict | None = None) -> Dataset:
    """Read a dataset after checking its sha256 against the manifest."""
    manifest = read_manifest(out_dir) if manifest is None else manifest
    path = data_path(out_dir, split, mode)
    key = f"sha256.{split}_{_mode_tag(mode)}"
    if key not in manifest:
        raise DataError(f"manifest has no checksum for {path.name}")
    if not path.exists():
        raise DataError(f"missing dataset file {path}")
    digest = sha256_file(path)
    if digest != manifest[key]:
        raise DataError(f"checksum mismatch for {path.name}: manifest {manifest[key][:12]}..., "
                        f"file {digest[:12]}...")
    try:
        ds = read_dataset(path)
    except FormatError as exc:
        raise DataError(f"{path.name}: {exc}") from None
    check_mode_shape(ds, mode)
    return ds


def check_mode_shape(ds: Dataset, mode: Mode) -> None:
    h, w, c = ds.shape
    if ds.mode != mode or w != EXPECTED_WIDTH[Mode(mode)] or c != 2:
        raise DataError(f"dataset is {ds.mode.label} {ds.shape}, incompatible with {Mode(mode).label}")


def to_split(ds: Dataset) -> Split:
    return Split(ds.images.astype(np.float64), ds.labels.astype(np.int64), ds.variants.astype(np.int64))


# ----------------------------------------------------------------------------- train

def select_training(ds: Dataset, mix: Mix) -> np.ndarray:
    """Indices of the training file used by a cell."""
    if mix is Mix.HUMAN_ONLY:
        return np.flatnonzero(ds.variants == int(VariantKind.HUMAN))
    return np.arange(len(ds))


def metrics_csv(result: TrainResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "train_loss", "train_acc", "val_loss", "val_acc"])
    for r in result.history:
        w.writerow([r.epoch, repr(r.train_loss), repr(r.train_acc), repr(r.val_loss), repr(r.val_acc)])
    return buf.getvalue()


def train_cell(cfg: ExperimentConfig, out_dir, mode: Mode, mix: Mix, seed: int, progress=None) -> dict:
    """Train one (mode, mix, seed) cell and write its checkpoint, metrics and cell manifest."""
    manifest = read_manifest(out_dir)
    train_ds = verified_dataset(out_dir, "train", mode, manifest)
    val_ds = verified_dataset(out_dir, "val", mode, manifest)
    if np.any(val_ds.variants != int(VariantKind.HUMAN)):
        raise DataError("validation file contains sterile samples")
    idx = select_training(train_ds, mix)
    sub = train_ds.subset(idx)
    spec = NetworkSpec.for_input(sub.shape)
    result = train(spec, to_split(sub), to_split(val_ds), cfg.train_config(seed), progress=progress)
    d = cell_dir(out_dir, mode, mix, seed)
    d.mkdir(parents=True, exist_ok=True)
    ckpt_sha = write_checkpoint(result.model, mode, d / "checkpoint.fgc")
    (d / "metrics.csv").write_text(metrics_csv(result), encoding="utf-8")
    items = [
        ("mode", Mode(mode).label), ("mix", mix.value), ("seed", seed),
        ("train_file", data_path(out_dir, "train", mode).name),
        ("train_sha256", manifest[f"sha256.train_{_mode_tag(mode)}"]),
        ("val_sha256", manifest[f"sha256.val_{_mode_tag(mode)}"]),
        ("n_train", len(sub)),
        ("n_train_human", int(np.sum(sub.variants == 0))),
        ("n_train_sterile", int(np.sum(sub.variants == 1))),
        ("selection_sha256", hashlib.sha256(idx.astype("<i8").tobytes()).hexdigest()),
        ("learning_rate", repr(cfg.learning_rate)), ("batch_size", cfg.batch_size), ("epochs", cfg.epochs),
        ("best_epoch", result.best_epoch),
        ("best_val_accuracy", repr(result.best_val.accuracy)),
        ("best_val_loss", repr(result.best_val.loss)),
        ("confusion", ";".join(",".join(str(v) for v in row) for row in result.best_val.confusion)),
        ("checkpoint_sha256", ckpt_sha),
    ]
    write_kv(d / "cell.txt", items)
    return dict(items)


def evaluate_checkpoint(checkpoint, data_file, manifest_file=None) -> Metrics:
    """Evaluate a checkpoint on a dataset file.

    When the dataset is listed in ``manifest_file`` (default: ``manifest.txt``
    next to it) its checksum is verified first.
    """
    data_file = Path(data_file)
    manifest_file = Path(manifest_file) if manifest_file else data_file.parent / "manifest.txt"
    if manifest_file.exists():
        man = read_kv(manifest_file)
        key = "sha256." + data_file.stem
        if key in man and sha256_file(data_file) != man[key]:
            raise DataError(f"checksum mismatch for {data_file.name}")
    try:
        model, mode = read_checkpoint(checkpoint)
        ds = read_dataset(data_file)
    except OSError as exc:
        raise DataError(str(exc)) from None
    except FormatError as exc:
        raise DataError(str(exc)) from None
    if ds.mode != mode or tuple(ds.shape) != tuple(model.spec.input_shape):
        raise DataError(f"checkpoint expects {mode.label} {model.spec.input_shape}, "
                        f"dataset is {ds.mode.label} {ds.shape}")
    return evaluate(model, to_split(ds))


# ----------------------------------------------------------------------------- SAR

@dataclass
class SarResult:
    snr_human: float
    snr_sterile: float
    point_error_px: float
    files: list


def palm_scan(cfg: ExperimentConfig, kind: VariantKind, n_positions: int | None = None,
              n_k: int | None = None):
    """Raster scan of a palm gesture at (0, 0, z0_ref) for one variant.

    Both variants use the same subject geometry so only the variant differs.
    """
    spec = cfg.dataset_spec()
    n_pos = n_positions or cfg.sar_positions
    radar = RadarConfig.from_bandwidth(n_k=n_k or cfg.sar_n_k)
    geom = ArrayGeometry.default(radar)
    subject = spec.human_subjects[0]
    variant = spec.human if kind == VariantKind.HUMAN else spec.sterile
    center = (0.0, 0.0, cfg.z0_ref)
    positions = raster_positions(spec.aperture.width, spec.aperture.height, n_pos, n_pos)
    seed = np.random.SeedSequence([cfg.master_seed, 7, int(kind)])
    jitter_seed, noise_seed = (int(s) for s in seed.generate_state(2, dtype=np.uint64))

    n_hand = len(make_gesture_cloud(GestureClass.PALM, subject, spec.sterile, center,
                                    aperture=spec.aperture))
    # A live hand drifts during the mechanical scan; the mounted cutout does not.
    sway_std = cfg.sar_sway_std if kind == VariantKind.HUMAN else 0.0
    sway = np.random.default_rng(seed.spawn(1)[0]).normal(0.0, sway_std, (len(positions), 3))
    index = {tuple(p): i for i, p in enumerate(np.asarray(positions, dtype=float))}

    def cloud_at(xy):
        cloud = make_gesture_cloud(GestureClass.PALM, subject, variant, center, seed=jitter_seed,
                                   aperture=spec.aperture, clutter=spec.clutter,
                                   reflectance=spec.reflectance, radar_xy=xy)
        i = index.get(tuple(np.asarray(xy, dtype=float)))
        if i is None or not sway_std:
            return cloud
        xyz = cloud.xyz.copy()
        xyz[:n_hand] += sway[i]
        return TargetCloud(xyz, cloud.sigma)

    noise = NoiseSpec(power=variant.noise_power, seed=noise_seed)
    scan = simulate_aperture(cloud_at, positions, geom, radar, noise, z0_ref=cfg.z0_ref)
    hand = cloud_at((0.0, 0.0))
    return scan, hand.xyz[:n_hand]


def hand_mask(grid: ImageGrid, hand_xyz: np.ndarray, margin: float = 0.01) -> np.ndarray:
    lo = hand_xyz.min(axis=0) - margin
    hi = hand_xyz.max(axis=0) + margin
    return box_mask(grid, (lo[0], hi[0]), (lo[1], hi[1]))


def sar_contrast(cfg: ExperimentConfig, n_positions: int | None = None, n_pixels: int | None = None,
                 n_k: int | None = None):
    """Back-projected human and sterile palm images plus their image SNRs."""
    grid = ImageGrid.square(0.15, n_pixels or cfg.sar_pixels)
    out = {}
    for kind in (VariantKind.HUMAN, VariantKind.STERILE):
        scan, hand = palm_scan(cfg, kind, n_positions, n_k)
        img = backproject(scan, grid, cfg.z0_ref)
        out[kind] = (img, image_snr(img, hand_mask(grid, hand)))
    return out


def point_target_image(cfg: ExperimentConfig, target=(0.03, -0.02), n_positions: int = 32,
                       n_pixels: int | None = None, n_k: int | None = None):
    radar = RadarConfig.from_bandwidth(n_k=n_k or cfg.sar_n_k)
    geom = ArrayGeometry.default(radar)
    cloud = TargetCloud(np.array([[target[0], target[1], cfg.z0_ref]]), np.array([1.0]))
    positions = raster_positions(0.25, 0.25, n_positions, n_positions)
    scan = simulate_aperture(cloud, positions, geom, radar, z0_ref=cfg.z0_ref)
    grid = ImageGrid.square(0.15, n_pixels or cfg.sar_pixels)
    return backproject(scan, grid, cfg.z0_ref)


def sar_figures(cfg: ExperimentConfig, out_dir) -> SarResult:
    d = Path(out_dir) / "sar"
    d.mkdir(parents=True, exist_ok=True)
    files = []
    images = sar_contrast(cfg)
    for kind, name in ((VariantKind.HUMAN, "palm_human"), (VariantKind.STERILE, "palm_sterile")):
        files += write_pgm(images[kind][0], d / f"{name}.pgm")
    point = point_target_image(cfg)
    files += write_pgm(point, d / "point_target.pgm")
    px, py = point.peak_position()
    dx, dy = point.grid.pixel_size
    err = max(abs(px - 0.03) / dx, abs(py + 0.02) / dy)
    res = SarResult(images[VariantKind.HUMAN][1], images[VariantKind.STERILE][1], err, files)
    write_kv(d / "sar.txt", [("snr_human", repr(res.snr_human)), ("snr_sterile", repr(res.snr_sterile)),
                             ("snr_ratio", repr(res.snr_sterile / res.snr_human)),
                             ("point_peak_error_px", repr(err))])
    return res
