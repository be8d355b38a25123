"""Command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 data/format error,
3 numeric failure (NaN or Inf during training).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from ..dsp import Mode
from ..nn import NumericError
from .config import ConfigError, ExperimentConfig, Mix, load_config
from .io import FormatError
from .pipeline import DataError, data_path, evaluate_checkpoint, sar_figures, synthesize, train_cell
from .report import make_report

EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _config(args, **overrides) -> ExperimentConfig:
    if getattr(args, "out", None):
        overrides["out_dir"] = args.out
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if args.config:
        return load_config(args.config, **overrides)
    return ExperimentConfig(**overrides)


def _modes(args, cfg):
    mode = getattr(args, "mode", None)
    return (Mode.parse(mode),) if mode else cfg.modes


def _mixes(args, cfg):
    mix = getattr(args, "mix", None)
    return (Mix.parse(mix),) if mix else cfg.mixes


def cmd_synth(args) -> int:
    cfg = _config(args, master_seed=getattr(args, "seed", None))
    comp = synthesize(cfg, cfg.out_dir, progress=lambda n, t: logging.info("synth %d/%d", n, t))
    print(f"wrote datasets to {Path(cfg.out_dir) / 'data'}")
    print(comp.summary())
    return 0


def cmd_train(args) -> int:
    cfg = _config(args)
    seed = getattr(args, "seed", None)
    seeds = (seed,) if seed is not None else cfg.seeds
    for mode in _modes(args, cfg):
        for mix in _mixes(args, cfg):
            for seed in seeds:
                t0 = time.perf_counter()
                cell = train_cell(cfg, cfg.out_dir, mode, mix, seed,
                                  progress=lambda r: logging.info("epoch %d val_acc %.4f", r.epoch, r.val_acc))
                print(f"{mode.label:<12} {mix.label:<10} seed {seed}: best epoch {cell['best_epoch']}, "
                      f"val accuracy {100 * float(cell['best_val_accuracy']):.2f}% "
                      f"({time.perf_counter() - t0:.0f} s)")
    return 0


def cmd_eval(args) -> int:
    if args.data:
        data = Path(args.data)
    else:
        cfg = _config(args)
        data = data_path(cfg.out_dir, "val", Mode.parse(args.mode or "range"))
    m = evaluate_checkpoint(args.checkpoint, data, args.manifest)
    print(json.dumps(m.as_dict(), indent=2))
    return 0


def cmd_sar(args) -> int:
    cfg = _config(args)
    res = sar_figures(cfg, cfg.out_dir)
    print(f"image SNR human {res.snr_human:.2f}, sterile {res.snr_sterile:.2f} "
          f"(ratio {res.snr_sterile / res.snr_human:.2f}); point target peak error {res.point_error_px:.2f} px")
    for f in res.files:
        print(f"  {f}")
    return 0


def cmd_report(args) -> int:
    out = Path(args.out) if args.out else Path(_config(args).out_dir)
    cfg = load_config(args.config, out_dir=str(out)) if args.config else None
    print(make_report(out, cfg, figures=not args.no_figures), end="")
    return 0


def cmd_run(args) -> int:
    for step in (cmd_synth, cmd_train, cmd_report):
        code = step(args)
        if code:
            return code
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gesture-radar", description="Radar gesture simulation and sterile-data experiment")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, mode_mix=False, seed=False):
        sp.add_argument("--config", help="key = value configuration file")
        sp.add_argument("--out", help="experiment output directory (overrides out_dir)")
        if seed:
            sp.add_argument("--seed", type=int, help="master seed (synth) or training seed (train)")
        if mode_mix:
            sp.add_argument("--mode", choices=["range", "range-angle"])
            sp.add_argument("--mix", choices=["human", "combined"])

    sp = sub.add_parser("synth", help="generate the train/validation datasets")
    common(sp, seed=True)
    sp.set_defaults(func=cmd_synth)
    sp = sub.add_parser("train", help="train cells (all configured cells unless narrowed)")
    common(sp, mode_mix=True, seed=True)
    sp.set_defaults(func=cmd_train)
    sp = sub.add_parser("eval", help="evaluate a checkpoint on a dataset file")
    common(sp)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--data", help="dataset file (default: the frozen validation file)")
    sp.add_argument("--mode", choices=["range", "range-angle"])
    sp.add_argument("--manifest", help="manifest to verify against (default: next to the data)")
    sp.set_defaults(func=cmd_eval)
    sp = sub.add_parser("sar", help="back-projected palm and point-target images")
    common(sp)
    sp.set_defaults(func=cmd_sar)
    sp = sub.add_parser("report", help="accuracy table and supporting figures")
    common(sp)
    sp.add_argument("--no-figures", action="store_true", help="skip SAR images and plots")
    sp.set_defaults(func=cmd_report)
    sp = sub.add_parser("run", help="synth, train every cell, then report")
    common(sp)
    sp.add_argument("--no-figures", action="store_true")
    sp.set_defaults(func=cmd_run)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:      # usage errors and --help
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FormatError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
