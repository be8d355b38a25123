"""Accuracy table across cells and seeds, plus supporting figures."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..dsp import Mode
from .config import ExperimentConfig, Mix, load_config
from .pipeline import DataError, cell_dir, composition, data_path, read_kv, sar_figures

# Full-scale accuracies obtained on real captures, for orientation only.
REFERENCE = {Mode.RANGE: (0.849, 0.931), Mode.RANGE_ANGLE: (0.902, 0.954)}


@dataclass
class CellStats:
    mode: Mode
    mix: Mix
    per_seed: dict            # seed -> accuracy

    @property
    def values(self) -> np.ndarray:
        return np.array([self.per_seed[s] for s in sorted(self.per_seed)])

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    @property
    def low(self) -> float:
        return float(np.min(self.values))

    @property
    def high(self) -> float:
        return float(np.max(self.values))


def missing_cells(cfg: ExperimentConfig, out_dir) -> list:
    out = []
    for mode in cfg.modes:
        for mix in cfg.mixes:
            for seed in cfg.seeds:
                if not (cell_dir(out_dir, mode, mix, seed) / "cell.txt").exists():
                    out.append(f"{mode.label}/{mix.value}/seed {seed}")
    return out


def collect(cfg: ExperimentConfig, out_dir) -> dict:
    missing = missing_cells(cfg, out_dir)
    if missing:
        raise DataError("missing trained cells: " + ", ".join(missing))
    stats = {}
    for mode in cfg.modes:
        for mix in cfg.mixes:
            acc = {}
            for seed in cfg.seeds:
                cell = read_kv(cell_dir(out_dir, mode, mix, seed) / "cell.txt")
                acc[seed] = float(cell["best_val_accuracy"])
            stats[(mode, mix)] = CellStats(mode, mix, acc)
    return stats


def _pct(v: float) -> str:
    return f"{100 * v:5.1f}%"


def render_text(cfg: ExperimentConfig, stats: dict, comp, sar: dict | None = None) -> str:
    seeds = ",".join(str(s) for s in cfg.seeds)
    lines = ["Gesture classification: human-only vs. sterile-supplemented training", ""]
    lines.append("Dataset composition")
    lines += ["  " + s for s in comp.summary().splitlines()]
    lines.append("")
    lines.append(f"Validation accuracy, best epoch (mean over seeds {seeds}; [min, max])")
    header = f"  {'mode':<12}" + "".join(f"{m.label:>24}" for m in cfg.mixes)
    both = Mix.HUMAN_ONLY in cfg.mixes and Mix.COMBINED in cfg.mixes
    if both:
        header += f"{'delta':>12}"
    lines.append(header)
    for mode in cfg.modes:
        row = f"  {mode.label:<12}"
        for mix in cfg.mixes:
            s = stats[(mode, mix)]
            row += f"{_pct(s.mean):>8} [{_pct(s.low)}, {_pct(s.high)}]"
        if both:
            delta = stats[(mode, Mix.COMBINED)].mean - stats[(mode, Mix.HUMAN_ONLY)].mean
            row += f"{100 * delta:+9.1f} pts"
        lines.append(row)
    lines.append("")
    lines.append("Per seed")
    for mode in cfg.modes:
        for mix in cfg.mixes:
            s = stats[(mode, mix)]
            vals = "  ".join(f"s{seed}={_pct(acc).strip()}" for seed, acc in sorted(s.per_seed.items()))
            lines.append(f"  {mode.label:<12} {mix.label:<10} {vals}")
    lines.append("")
    lines.append("Reference, full-scale real captures (not expected at desk scale)")
    for mode in cfg.modes:
        h, c = REFERENCE[mode]
        lines.append(f"  {mode.label:<12} HumanOnly {_pct(h).strip()} -> Combined {_pct(c).strip()} "
                     f"({100 * (c - h):+.1f} pts)")
    if sar:
        lines.append("")
        lines.append("SAR palm images (image SNR = mask peak / off-mask RMS)")
        lines.append(f"  human {sar['snr_human']:.2f}, sterile {sar['snr_sterile']:.2f}, "
                     f"ratio {sar['snr_sterile'] / sar['snr_human']:.2f}")
    return "\n".join(lines) + "\n"


def render_csv(cfg: ExperimentConfig, stats: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["mode", "mix", "seed", "accuracy"])
    for mode in cfg.modes:
        for mix in cfg.mixes:
            s = stats[(mode, mix)]
            for seed, acc in sorted(s.per_seed.items()):
                w.writerow([mode.label, mix.value, seed, f"{acc:.6f}"])
            w.writerow([mode.label, mix.value, "mean", f"{s.mean:.6f}"])
    return buf.getvalue()


def range_profile_plot(out_dir, path) -> None:
    """Mean range-profile magnitude per class and variant from the range training file."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    from .io import read_dataset

    ds = read_dataset(data_path(out_dir, "train", Mode.RANGE))
    mag = np.hypot(ds.images[..., 0], ds.images[..., 1]).mean(axis=2)
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5), sharey=True)
    names = ("palm", "perpendicular", "thumbs-up")
    for ax, variant, title in zip(axes, (0, 1), ("human", "sterile")):
        for g, name in enumerate(names):
            sel = (ds.labels == g) & (ds.variants == variant)
            if sel.any():
                ax.plot(mag[sel].mean(axis=0), label=name)
        ax.set_title(f"{title} captures")
        ax.set_xlabel("cropped range bin")
    axes[0].set_ylabel("mean normalized magnitude")
    axes[1].legend()
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def make_report(out_dir, cfg: ExperimentConfig | None = None, figures: bool = True) -> str:
    out_dir = Path(out_dir)
    if cfg is None:
        cfg = load_config(out_dir / "config.txt", out_dir=str(out_dir))
    stats = collect(cfg, out_dir)
    comp = composition(out_dir)
    sar = None
    if figures:
        sar_file = out_dir / "sar" / "sar.txt"
        if not sar_file.exists():
            sar_figures(cfg, out_dir)
        sar = {k: float(v) for k, v in read_kv(sar_file).items()}
        if Mode.RANGE in cfg.modes:
            range_profile_plot(out_dir, out_dir / "range_profiles.png")
    text = render_text(cfg, stats, comp, sar)
    (out_dir / "report.txt").write_text(text, encoding="utf-8")
    (out_dir / "report.csv").write_text(render_csv(cfg, stats), encoding="utf-8")
    return text
