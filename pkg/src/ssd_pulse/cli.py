"""Command-line entry point: ``ssd-pulse {synth,forward,eval,bench}``.

Exit codes: 0 success, 2 usage/input error, 3 data/shape error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from ssd_pulse import bench as bench_mod
from ssd_pulse.dsp import BvpSignal, bland_altman, evaluate_clip, format_report_row, metrics_report
from ssd_pulse.errors import (
    ArgumentError,
    CheckpointError,
    ShapeError,
    TensorFormatError,
)
from ssd_pulse.model import PhysMambaConfig, forward, init_weights, load_checkpoint
from ssd_pulse.stem import VideoClip
from ssd_pulse.synth import SynthSpec, gen_video
from ssd_pulse.tensor_core import atomic_write_bytes, read_ptnsr, write_ptnsr

log = logging.getLogger("ssd_pulse")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
THREADS_ENV = "SSD_PULSE_THREADS"


class UsageError(Exception):
    """Bad flags, unreadable or missing inputs."""


class DataError(Exception):
    """Inputs are readable but inconsistent (shapes, sampling rates, criteria)."""


def _write_text(path: Path, text: str) -> None:
    atomic_write_bytes(path, text.encode())


def _csv_text(header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(x: float) -> str:
    return repr(float(x)) if math.isfinite(x) else ("inf" if x > 0 else "-inf")


# --- synth -------------------------------------------------------------------


def cmd_synth(args) -> int:
    out = Path(args.out)
    clips = []
    for i in range(args.count):
        try:
            spec = SynthSpec(
                hr_bpm=args.hr,
                fps=args.fps,
                duration_s=args.seconds,
                noise_std=args.noise,
                motion_amp=args.motion,
                harmonic_ratio=args.harmonic,
                seed=args.seed + i,
            )
        except ArgumentError as exc:
            raise UsageError(str(exc)) from exc
        clip, label = gen_video(spec, size=args.size)
        cid = f"clip_{i:03d}"
        write_ptnsr(out / f"{cid}.ptnsr", clip.data)
        write_ptnsr(out / f"label_{i:03d}.ptnsr", label.samples.astype(np.float32))
        clips.append({"id": cid, "clip": f"{cid}.ptnsr", "label": f"label_{i:03d}.ptnsr", "spec": spec.to_dict()})
        log.info("wrote %s (hr=%.1f bpm, seed=%d)", cid, spec.hr_bpm, spec.seed)
    manifest = {"fps": args.fps, "size": args.size, "clips": clips}
    _write_text(out / "manifest.json", json.dumps(manifest, indent=2) + "\n")
    return EXIT_OK


# --- forward -------------------------------------------------------------------


def _manifest_fps(path: Path) -> float | None:
    manifest = path.parent / "manifest.json"
    if manifest.is_file():
        try:
            return float(json.loads(manifest.read_text())["fps"])
        except (KeyError, TypeError, ValueError, json.JSONDecodeError):
            return None
    return None


def _read_tensor(path: Path):
    if not path.is_file():
        raise UsageError(f"missing file: {path}")
    try:
        return read_ptnsr(path)
    except TensorFormatError as exc:
        raise DataError(f"{path}: {exc}") from exc


def waveform_csv(sig: BvpSignal) -> str:
    rows = [(f"{t:.6f}", f"{v:.9g}") for t, v in zip(sig.times, sig.samples)]
    return _csv_text(["time", "value"], rows)


def cmd_forward(args) -> int:
    if args.ckpt is None and args.init_seed is None:
        raise UsageError("forward needs --ckpt or --init-seed")
    clip_path = Path(args.clip)
    data = _read_tensor(clip_path)
    fps = args.fps or _manifest_fps(clip_path) or 30.0
    if data.ndim != 4:
        raise DataError(f"clip tensor must be [3, T, H, W], got {data.shape}")
    if args.ckpt is not None:
        ckpt = Path(args.ckpt)
        if not (ckpt / "manifest.json").is_file():
            raise UsageError(f"missing checkpoint manifest in {ckpt}")
        weights, config = load_checkpoint(ckpt)
    else:
        # fresh weights do not depend on the frame size, so adopt the clip's
        config = PhysMambaConfig(clip_len=data.shape[1], height=data.shape[2], width=data.shape[3])
        weights = init_weights(config, args.init_seed)
    pred = forward(VideoClip(data, fps), weights, config)
    if not np.all(np.isfinite(pred.samples)):
        raise DataError("forward produced non-finite values")
    _write_text(Path(args.out), waveform_csv(pred))
    log.info("wrote %d samples to %s", len(pred), args.out)
    return EXIT_OK


# --- eval ----------------------------------------------------------------------


def read_waveform(path: Path, fs: float | None) -> BvpSignal:
    """Load a waveform from ``time,value`` CSV or a 1-D PTNSR tensor."""
    if not path.is_file():
        raise UsageError(f"missing file: {path}")
    if path.suffix == ".csv":
        try:
            table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        except ValueError as exc:
            raise DataError(f"{path}: unreadable CSV ({exc})") from exc
        times, values = table[:, 0], table[:, 1]
        if fs is None:
            if times.size < 2 or times[-1] <= times[0]:
                raise DataError(f"{path}: cannot infer sampling rate from time column")
            fs = round((times.size - 1) / (times[-1] - times[0]), 3)
        return BvpSignal(values, fs)
    values = _read_tensor(path).reshape(-1)
    fs = fs or _manifest_fps(path)
    if fs is None:
        raise UsageError(f"{path}: sampling rate unknown, pass --fs")
    return BvpSignal(values, fs)


def cmd_eval(args) -> int:
    preds, labels = args.pred, args.label
    if len(preds) != len(labels):
        raise UsageError(f"--pred and --label must pair up ({len(preds)} vs {len(labels)})")
    rows, pred_hrs, gt_hrs, snrs = [], [], [], []
    for p, l in zip(preds, labels):
        pred = read_waveform(Path(p), args.fs)
        label = read_waveform(Path(l), args.fs)
        if not math.isclose(pred.fs, label.fs, rel_tol=1e-3):
            raise DataError(f"{p} sampled at {pred.fs} Hz but {l} at {label.fs} Hz")
        label = BvpSignal(label.samples, pred.fs)
        ev = evaluate_clip(pred, label)
        cid = Path(p).stem
        rows.append((cid, _fmt(ev.gt_hr), _fmt(ev.pred_hr), _fmt(ev.snr_db)))
        pred_hrs.append(ev.pred_hr)
        gt_hrs.append(ev.gt_hr)
        snrs.append(ev.snr_db)
    report = metrics_report(pred_hrs, gt_hrs, snrs, strict_r=False)
    if math.isnan(report.pearson_r):
        log.warning("Pearson r undefined over %d clip(s); written as null", len(rows))
    out = Path(args.out)
    _write_text(out / "per_clip.csv", _csv_text(["clip_id", "gt_hr", "pred_hr", "snr_db"], rows))
    json_report = {k: (v if math.isfinite(v) else None) for k, v in report.to_dict().items()}
    _write_text(out / "summary.json", json.dumps(json_report, indent=2) + "\n")
    means, diffs = bland_altman(pred_hrs, gt_hrs)
    _write_text(out / "bland_altman.csv", _csv_text(["mean_hr", "diff_hr"], [(_fmt(m), _fmt(d)) for m, d in zip(means, diffs)]))
    print("MAE | RMSE | MAPE | r | SNR")
    print(format_report_row(report))
    return EXIT_OK


# --- bench ---------------------------------------------------------------------


def cmd_bench(args) -> int:
    result = bench_mod.run_bench(tuple(args.lengths), repeats=args.repeats, seed=args.seed)
    text = bench_mod.rows_to_csv(result.rows)
    if args.out:
        _write_text(Path(args.out), text)
    else:
        sys.stdout.write(text)
    print(
        f"# max rel err {max(result.max_rel_err.values()):.2e}; "
        f"chunked ratio {result.chunked_ratio:.2f} (<= {bench_mod.MAX_CHUNKED_RATIO}); "
        f"quadratic ratio {result.quadratic_ratio:.2f} (>= {bench_mod.MIN_QUADRATIC_RATIO})",
        file=sys.stderr,
    )
    if args.check and not result.passed:
        raise DataError("scaling or equivalence criterion failed")
    return EXIT_OK


# --- argument handling -----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file whose keys overlay this subcommand's flags")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=None, help=f"BLAS threads (fallback: ${THREADS_ENV})")

    parser = argparse.ArgumentParser(prog="ssd-pulse", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate synthetic clips and labels")
    p.add_argument("--hr", type=float, default=72.0)
    p.add_argument("--seconds", type=float, default=10.0)
    p.add_argument("--fps", type=float, default=30.0)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--motion", type=float, default=0.0)
    p.add_argument("--harmonic", type=float, default=0.3)
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("forward", parents=[common], help="predict a waveform from a clip")
    p.add_argument("--ckpt")
    p.add_argument("--init-seed", type=int)
    p.add_argument("--clip", required=True)
    p.add_argument("--fps", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_forward)

    p = sub.add_parser("eval", parents=[common], help="filter, estimate HR and score predictions")
    p.add_argument("--pred", nargs="+", required=True)
    p.add_argument("--label", nargs="+", required=True)
    p.add_argument("--fs", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("bench", parents=[common], help="time the SSD formulations")
    p.add_argument("--lengths", type=int, nargs="+", default=list(bench_mod.LENGTHS))
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--out")
    p.add_argument("--no-check", dest="check", action="store_false")
    p.set_defaults(handler=cmd_bench)
    return parser


def _subparser(parser: argparse.ArgumentParser, name: str) -> argparse.ArgumentParser:
    for action in parser._subparsers._group_actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def _config_path(argv) -> tuple[str | None, str | None]:
    """Subcommand name and ``--config`` value, found before full parsing."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("command", nargs="?")
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    return known.command, known.config


def parse_args(argv) -> argparse.Namespace:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    command, config = _config_path(argv)
    if config and command in {"synth", "forward", "eval", "bench"}:
        try:
            overlay = json.loads(Path(config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {config}: {exc}") from exc
        if not isinstance(overlay, dict):
            raise UsageError("config file must hold a JSON object")
        sp = _subparser(parser, command)
        known = {a.dest for a in sp._actions} - {"help", "config"}
        overlay = {k.replace("-", "_"): v for k, v in overlay.items()}
        unknown = sorted(set(overlay) - known)
        if unknown:
            raise UsageError(f"unknown config keys for {command}: {unknown}")
        # file values become defaults, so explicit flags still win
        sp.set_defaults(**overlay)
        for action in sp._actions:
            if action.dest in overlay:
                action.required = False
    return parser.parse_args(argv)


def _thread_limit(args):
    threads = args.threads
    if threads is None and os.environ.get(THREADS_ENV):
        try:
            threads = int(os.environ[THREADS_ENV])
        except ValueError as exc:
            raise UsageError(f"${THREADS_ENV} must be an integer") from exc
    if threads is None:
        return nullcontext()
    if threads < 1:
        raise UsageError("--threads must be >= 1")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=threads)


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        with _thread_limit(args):
            return args.handler(args)
    except (UsageError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ShapeError, ArgumentError, CheckpointError, TensorFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
