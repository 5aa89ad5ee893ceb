"""Command-line front end.

    adepos synth     --out DIR                      synthetic dataset + manifest.ini
    adepos train     --manifest M --out DIR          ensembles/<id>.json, train_report.csv
    adepos calibrate --manifest M --out DIR          thresholds.csv, tx.csv
    adepos monitor   --manifest M --bearing ID --ensemble F --thresholds T --out DIR
    adepos report    --manifest M --out DIR          accuracy.csv, energy.csv, summary.csv
    adepos sweep     --manifest M --out DIR          sweep_accuracy.csv, sweep_energy.csv

Settings come from the built-in defaults, then ``--config``, then flags.
Every command computes all of its outputs before writing any of them, and
exits nonzero without touching the output directory on error.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import shutil
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import calibration, controller, energy
from .config import ConfigError, RunConfig, load_config
from .ensemble import dumps, load_ensemble
from .ingest import IngestError, load_manifest
from .pipeline import (BearingData, SynthSet, load_bearing, load_manifest_data, monitor_bearing,
                       restore_bearing, train_bearing, write_synthetic_dataset)
from .sweep import Grid, sweep_accuracy, sweep_energy, write_accuracy_grid, write_energy_grid


class CliError(Exception):
    pass


# ---------------------------------------------------------------- helpers

def _bits(text: str):
    if text.lower() in ("float", "none"):
        return "float"
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bits must be an integer or 'float', got {text!r}") from None


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.bits == "float":
        cfg = replace(cfg, bits=None, frac=None)
    elif args.bits is not None:
        cfg = replace(cfg, bits=args.bits)
    return cfg.with_overrides(manifest=args.manifest, L=args.l, n_max=args.n_max, k=args.k,
                              c=args.c, seed=args.seed, frac=args.frac, out=args.out,
                              replicas=getattr(args, "replicas", None))


def _csv_text(write, *payload) -> str:
    buf = io.StringIO()
    write(buf, *payload)
    return buf.getvalue()


def _rows_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def commit(out: str | Path, files: dict[str, str]) -> None:
    """Write all files under *out*; each lands via a temp file and rename."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    for rel, text in files.items():
        dest = out / rel
        dest.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=dest.parent, prefix=".tmp-")
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, dest)


def _manifest(cfg: RunConfig):
    if not cfg.manifest:
        raise CliError("no manifest given (use --manifest or set it in the config file)")
    return load_manifest(cfg.manifest)


def _bearings(cfg: RunConfig, only: list[str] | None = None) -> list[BearingData]:
    manifest = _manifest(cfg)
    if only:
        return [load_bearing(manifest, b) for b in only]
    return load_manifest_data(manifest)


def _energy_bits(cfg: RunConfig) -> int:
    return 16 if cfg.bits is None else cfg.bits


# ---------------------------------------------------------------- commands

def cmd_synth(args, cfg: RunConfig) -> dict[str, str]:
    layout = SynthSet(n_healthy=args.n_healthy, n_degrading=args.n_degrading,
                      n_windows=args.n_windows, onset=args.onset, amp_growth=args.amp_growth,
                      impulse_growth=args.impulse_growth, window_size=args.window_size)
    out = Path(cfg.out)
    if out.exists() and any(out.iterdir()):
        raise CliError(f"output directory {out} is not empty")
    staging = Path(tempfile.mkdtemp(prefix=".synth-", dir=out.parent if out.parent.exists() else None))
    try:
        write_synthetic_dataset(staging, cfg.seed, layout)
        if out.exists():
            out.rmdir()
        shutil.move(str(staging), str(out))
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    return {}


def cmd_train(args, cfg: RunConfig) -> dict[str, str]:
    files, rows = {}, []
    for data in _bearings(cfg, args.bearing):
        t = train_bearing(data, cfg)
        files[f"ensembles/{data.bearing_id}.json"] = dumps(t.ensemble)
        for i, (m, at) in enumerate(zip(t.ensemble.learners, t.ensemble.converged_at)):
            rows.append((data.bearing_id, i, m.seed, at, t.train_end))
    files["train_report.csv"] = _rows_text(
        ("bearing_id", "learner", "lfsr_seed", "converged_at", "training_samples"), rows)
    return files


def cmd_calibrate(args, cfg: RunConfig) -> dict[str, str]:
    trained = [train_bearing(b, cfg) for b in _bearings(cfg)]
    folds = calibration.fold_thresholds(trained, cfg.k)
    return {"thresholds.csv": _csv_text(calibration.write_threshold_csv, folds),
            "tx.csv": _csv_text(calibration.write_tx_csv, trained)}


def cmd_monitor(args, cfg: RunConfig) -> dict[str, str]:
    if not args.bearing or len(args.bearing) != 1:
        raise CliError("monitor needs exactly one --bearing")
    bid = args.bearing[0]
    if not args.ensemble:
        raise CliError("monitor needs --ensemble (a file written by 'train')")
    if args.thr is None and not args.thresholds:
        raise CliError("monitor needs --thresholds (from 'calibrate') or --thr")
    if args.thr is not None:
        thr = args.thr
    else:
        with open(args.thresholds, encoding="utf-8", newline="") as fh:
            table = calibration.read_threshold_csv(fh)
        if bid not in table:
            raise CliError(f"{args.thresholds} has no threshold for bearing {bid!r}")
        thr = table[bid]
    ens = load_ensemble(args.ensemble)
    if cfg.n_max > ens.N:
        raise CliError(f"n_max = {cfg.n_max} exceeds the {ens.N} learners in {args.ensemble}")
    trained = restore_bearing(_bearings(cfg, [bid])[0], ens, cfg)
    if trained.train_end >= len(trained.data):
        raise CliError(f"bearing {bid!r} has no samples after training")
    log = monitor_bearing(trained, thr, cfg)
    report = energy.trace_energy(energy.calibrate(), log, _energy_bits(cfg), ens.mode)
    return {f"monitor_{bid}.csv": _csv_text(controller.write_log_csv, log),
            f"energy_{bid}.csv": _csv_text(energy.write_energy_csv, report)}


def cmd_report(args, cfg: RunConfig) -> dict[str, str]:
    rep = calibration.loo_evaluate(_bearings(cfg), cfg)
    model = energy.calibrate()
    rows = []
    for o in rep.outcomes:
        e = energy.trace_energy(model, rep.logs[o.replica, o.bearing_id], _energy_bits(cfg), cfg.mode)
        rows.append((o.replica, o.bearing_id, o.label, e.n_samples, e.n_evaluations,
                     repr(o.avg_l_eff), repr(e.avg_nj_per_sample), repr(e.baseline_nj),
                     repr(e.savings_ratio),
                     "" if e.reconstruction_ratio is None else repr(e.reconstruction_ratio)))
    healthy = [o.avg_l_eff for o in rep.outcomes if o.label == 0]
    summary = [("accuracy", repr(rep.accuracy)),
               ("mean_l_eff", repr(rep.mean_l_eff)),
               ("healthy_mean_l_eff", repr(float(np.mean(healthy))) if healthy else ""),
               ("baseline_l_eff", cfg.L * cfg.n_max),
               ("mean_savings_ratio", repr(float(np.mean([float(r[8]) for r in rows]))))]
    return {"accuracy.csv": _csv_text(calibration.write_accuracy_csv, rep),
            "energy.csv": _rows_text(("replica", "bearing_id", "label", "n_samples",
                                      "n_evaluations", "avg_l_eff", "avg_nj_per_sample",
                                      "baseline_nj", "savings_ratio", "reconstruction_ratio"),
                                     rows),
            "summary.csv": _rows_text(("metric", "value"), summary)}


def cmd_sweep(args, cfg: RunConfig) -> dict[str, str]:
    L = args.grid_l if args.grid_l is not None else Grid().L
    n_bl = args.grid_nbl
    if n_bl is None:
        n_bl = tuple({20: 9, 30: 7, 40: 5}.get(v, cfg.n_max) for v in L)
    grid = Grid(L, n_bl, args.grid_bits if args.grid_bits is not None else Grid().bits)
    acc = sweep_accuracy(_bearings(cfg), cfg, grid)
    en = sweep_energy(energy.calibrate(), grid, cfg.mode)
    return {"sweep_accuracy.csv": _csv_text(write_accuracy_grid, acc),
            "sweep_energy.csv": _csv_text(write_energy_grid, en)}


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "calibrate": cmd_calibrate,
            "monitor": cmd_monitor, "report": cmd_report, "sweep": cmd_sweep}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file with a [run] section")
    common.add_argument("--manifest", help="bearing manifest (INI)")
    common.add_argument("--bits", type=_bits, help="datapath width 8..16, or 'float'")
    common.add_argument("--frac", type=int, help="fraction bits (default bits - 4)")
    common.add_argument("--l", type=int, help="hidden neurons per learner")
    common.add_argument("--n-max", type=int, help="ensemble size")
    common.add_argument("--k", type=float, help="threshold spread multiplier")
    common.add_argument("--c", type=float, help="OPIUM regularization constant")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--out", help="output directory")

    parser = argparse.ArgumentParser(prog="adepos", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic dataset")
    p.add_argument("--n-healthy", type=int, default=SynthSet.n_healthy)
    p.add_argument("--n-degrading", type=int, default=SynthSet.n_degrading)
    p.add_argument("--n-windows", type=int, default=SynthSet.n_windows)
    p.add_argument("--onset", type=int, default=SynthSet.onset)
    p.add_argument("--amp-growth", type=float, default=SynthSet.amp_growth)
    p.add_argument("--impulse-growth", type=float, default=SynthSet.impulse_growth)
    p.add_argument("--window-size", type=int, default=SynthSet.window_size)

    p = sub.add_parser("train", parents=[common], help="train one ensemble per bearing")
    p.add_argument("--bearing", action="append", help="restrict to this bearing (repeatable)")

    sub.add_parser("calibrate", parents=[common], help="leave-one-out thresholds")

    p = sub.add_parser("monitor", parents=[common], help="run the controller on one bearing")
    p.add_argument("--bearing", action="append", help="bearing to monitor")
    p.add_argument("--ensemble", help="ensemble JSON written by 'train'")
    p.add_argument("--thresholds", help="thresholds.csv written by 'calibrate'")
    p.add_argument("--thr", type=float, help="explicit threshold, overrides --thresholds")

    p = sub.add_parser("report", parents=[common], help="leave-one-out accuracy and energy")
    p.add_argument("--replicas", type=int)

    p = sub.add_parser("sweep", parents=[common], help="accuracy/energy tables over a grid")
    p.add_argument("--grid-l", type=_int_list, help="hidden sizes, e.g. 20,30,40")
    p.add_argument("--grid-nbl", type=_int_list, help="largest learner count per L, e.g. 9,7,5")
    p.add_argument("--grid-bits", type=_int_list, help="bit widths, e.g. 8,12,16")
    p.add_argument("--replicas", type=int)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        files = COMMANDS[args.command](args, cfg)
        if files:
            commit(cfg.out, files)
    except (CliError, ConfigError, IngestError, calibration.CalibrationError,
            controller.ControllerError, OSError, KeyError, ValueError) as exc:
        print(f"adepos {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
