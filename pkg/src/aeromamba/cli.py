"""Command-line entry point.

Subcommands: degrade, synth-data, train, enhance, eval, bench and
inspect-checkpoint.  Exit codes: 0 on success, 2 on usage errors, 3 on
I/O errors, 4 on numeric or internal-contract errors.  Report-producing
commands (train, eval, bench) write a PNG figure next to each CSV.
The AEROMAMBA_THREADS environment variable caps per-channel worker
parallelism (0 or unset = auto).
"""

from __future__ import annotations

import argparse
import concurrent.futures
import os
import sys
import zlib
from pathlib import Path

import numpy as np

from .dsp import (AudioBuffer, degrade, load_wav, lsd, mann_whitney_u,
                  save_wav)
from .errors import (ArgumentError, AudioFormatError, ContractError,
                     NumericError, UnsupportedFormatError)
from .infer import StreamSession, bench, enhance_array, load_model
from .model import load_checkpoint
from .train import TrainConfig, fit, load_train_config, synth_dataset

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_NUMERIC = 4


def max_workers() -> int:
    raw = os.environ.get("AEROMAMBA_THREADS", "0")
    try:
        cap = int(raw)
    except ValueError:
        raise ArgumentError(f"AEROMAMBA_THREADS must be an integer, got {raw!r}")
    if cap < 0:
        raise ArgumentError(f"AEROMAMBA_THREADS must be >= 0, got {cap}")
    return cap if cap > 0 else (os.cpu_count() or 1)


def _map_channels(fn, channels):
    workers = min(max_workers(), max(len(channels), 1))
    if workers <= 1 or len(channels) <= 1:
        return [fn(ch) for ch in channels]
    with concurrent.futures.ThreadPoolExecutor(workers) as pool:
        return list(pool.map(fn, channels))


def _save_figure(fig, path) -> None:
    fig.savefig(path, dpi=110)


def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_degrade(args) -> int:
    buf = load_wav(args.in_path)
    save_wav(degrade(buf, args.low_rate), args.out_path)
    return EXIT_OK


def cmd_synth_data(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tracks = synth_dataset(seed=args.seed, n_tracks=args.tracks,
                           seconds=args.seconds)
    for i, track in enumerate(tracks):
        save_wav(track, out / f"track{i:03d}.wav")
    print(f"wrote {len(tracks)} tracks to {out}")
    return EXIT_OK


def _train_figure(metrics_csv: Path) -> Path:
    rows = np.genfromtxt(metrics_csv, delimiter=",", names=True)
    rows = np.atleast_1d(rows)
    plt = _pyplot()
    fig, (ax_loss, ax_val) = plt.subplots(2, 1, figsize=(8, 7), sharex=True)
    steps = rows["step"]
    for name in ("L_G", "L_adv", "L_rec", "L_fmap", "L_D"):
        ax_loss.plot(steps, rows[name], label=name)
    ax_loss.set_yscale("log")
    ax_loss.set_ylabel("loss")
    ax_loss.legend(ncol=3, fontsize=8)
    has_val = np.isfinite(rows["val_lsd"])
    ax_val.plot(steps[has_val], rows["val_lsd"][has_val], marker="o")
    ax_val.set_xlabel("step")
    ax_val.set_ylabel("validation LSD")
    fig.tight_layout()
    path = metrics_csv.with_suffix(".png")
    _save_figure(fig, path)
    plt.close(fig)
    return path


def cmd_train(args) -> int:
    cfg = load_train_config(args.config) if args.config else TrainConfig()
    data = Path(args.data)
    wavs = sorted(data.glob("*.wav"))
    if not wavs:
        raise ArgumentError(f"no .wav files found in {data}")
    tracks = [load_wav(p) for p in wavs]
    result = fit(cfg, tracks, out_dir=args.out)
    fig_path = _train_figure(result.metrics_csv)
    print(f"steps: {result.steps}")
    print(f"baseline LSD: {result.baseline_lsd:.4f}")
    print(f"best validation LSD: {result.best_val_lsd:.4f}")
    print(f"best checkpoint: {result.best_checkpoint}")
    print(f"last checkpoint: {result.last_checkpoint}")
    print(f"metrics: {result.metrics_csv}")
    print(f"figure: {fig_path}")
    return EXIT_OK


def cmd_enhance(args) -> int:
    model = load_model(args.checkpoint)
    buf = load_wav(args.in_path)

    if args.streaming:
        def run(channel):
            session = StreamSession(model, args.chunk_frames)
            outs = []
            pos = 0
            while pos < channel.size:
                outs.append(session.process(
                    channel[pos:pos + session.chunk_samples]))
                pos += session.chunk_samples
            if not session._finished:
                outs.append(session.flush())
            return np.concatenate(outs)
    else:
        def run(channel):
            return enhance_array(model, channel)

    out = np.stack(_map_channels(run, list(buf.samples)))
    save_wav(AudioBuffer(samples=out, sample_rate=buf.sample_rate),
             args.out_path)
    return EXIT_OK


def _collect_tracks(path: Path) -> dict[str, Path]:
    if path.is_dir():
        files = sorted(path.glob("*.wav"))
        if not files:
            raise ArgumentError(f"no .wav files found in {path}")
        return {p.stem: p for p in files}
    return {path.stem: path}


def _lsd_rows(ref_map, est_map, label=""):
    missing = sorted(set(ref_map) - set(est_map))
    if missing:
        raise ArgumentError(f"estimate set is missing tracks: {missing}")
    rows = []
    for name in sorted(ref_map):
        score = lsd(load_wav(ref_map[name]), load_wav(est_map[name]))
        rows.append((f"{label}{name}", score))
    return rows


def _eval_figure(rows, csv_path: Path) -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(8, 0.6 + 0.35 * len(rows)))
    names = [name for name, _ in rows]
    scores = [score for _, score in rows]
    ax.barh(np.arange(len(rows)), scores)
    ax.set_yticks(np.arange(len(rows)), names, fontsize=8)
    ax.invert_yaxis()
    ax.set_xlabel("LSD")
    fig.tight_layout()
    path = csv_path.with_suffix(".png")
    _save_figure(fig, path)
    plt.close(fig)
    return path


def cmd_eval(args) -> int:
    ref_map = _collect_tracks(Path(args.ref))
    est_dirs = [Path(p) for p in args.est]
    if len(est_dirs) > 2:
        raise ArgumentError("eval accepts at most two estimate sets")
    two = len(est_dirs) == 2
    lines = ["track,lsd"]
    all_rows = []
    per_set = []
    for est in est_dirs:
        label = f"{est.name}/" if two else ""
        rows = _lsd_rows(ref_map, _collect_tracks(est), label)
        per_set.append([score for _, score in rows])
        all_rows.extend(rows)
        lines.extend(f"{name},{score!r}" for name, score in rows)
    if two:
        result = mann_whitney_u(per_set[0], per_set[1])
        lines.append(f"mw_u,{result.U!r},{result.p_two_sided!r}")
    csv_path = Path(args.csv)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    csv_path.write_text("\n".join(lines) + "\n")
    fig_path = _eval_figure(all_rows, csv_path)
    print(f"wrote {csv_path} and {fig_path}")
    return EXIT_OK


def _bench_figure(report, csv_path: Path) -> Path:
    plt = _pyplot()
    fig, (ax_rt, ax_mem) = plt.subplots(1, 2, figsize=(10, 4))
    modes = sorted({r.mode for r in report.rows})
    for mode in modes:
        rows = [r for r in report.rows if r.mode == mode]
        segs = [r.segment_s for r in rows]
        ax_rt.plot(segs, [r.rt_factor for r in rows], marker="o", label=mode)
        ax_mem.plot(segs, [r.state_bytes for r in rows], marker="o",
                    label=mode)
    ax_rt.set_xlabel("segment (s)")
    ax_rt.set_ylabel("realtime factor")
    ax_rt.legend()
    ax_mem.set_xlabel("segment (s)")
    ax_mem.set_ylabel("state bytes")
    ax_mem.set_yscale("log")
    ax_mem.legend()
    fig.tight_layout()
    path = csv_path.with_suffix(".png")
    _save_figure(fig, path)
    plt.close(fig)
    return path


def cmd_bench(args) -> int:
    try:
        segments = tuple(float(s) for s in args.segments.split(","))
    except ValueError:
        raise ArgumentError(f"bad --segments list: {args.segments!r}")
    if not segments or any(s <= 0 for s in segments):
        raise ArgumentError(f"segments must be positive: {args.segments!r}")
    model = load_model(args.checkpoint)
    report = bench(model, segments=segments, repeats=args.repeats,
                   chunk_frames=args.chunk_frames)
    csv_path = Path(args.csv)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    csv_path.write_text(report.to_csv())
    fig_path = _bench_figure(report, csv_path)
    print(f"wrote {csv_path} and {fig_path}")
    return EXIT_OK


def cmd_inspect_checkpoint(args) -> int:
    tensors, config_text = load_checkpoint(args.checkpoint)
    print(f"{'name':<40} {'shape':<20} checksum")
    for name, data in tensors.items():
        crc = zlib.crc32(np.ascontiguousarray(data, dtype="<f4").tobytes())
        print(f"{name:<40} {str(data.shape):<20} {crc:08x}")
    print(f"tensors: {len(tensors)}")
    print("config:")
    for line in config_text.strip().split("\n"):
        print(f"  {line}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):  # uniform usage exit code, no SystemExit(2) text
        raise ArgumentError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="aeromamba", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("degrade", parents=[], help="band-limit a wav file")
    p.add_argument("--in", dest="in_path", required=True, help="input wav")
    p.add_argument("--out", dest="out_path", required=True, help="output wav")
    p.add_argument("--low-rate", type=int, default=11025,
                   help="band limit as a sample rate (default 11025)")
    p.set_defaults(fn=cmd_degrade)

    p = sub.add_parser("synth-data", help="render a synthetic dataset")
    p.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    p.add_argument("--tracks", type=int, default=16,
                   help="number of tracks (default 16)")
    p.add_argument("--seconds", type=float, default=20.0,
                   help="track length in seconds (default 20)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(fn=cmd_synth_data)

    p = sub.add_parser("train", help="train on a directory of wav files")
    p.add_argument("--config", default=None,
                   help="INI config file (default: built-in defaults)")
    p.add_argument("--data", required=True, help="directory of full-band wavs")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("enhance", help="enhance a wav file")
    p.add_argument("--checkpoint", required=True, help="model checkpoint")
    p.add_argument("--in", dest="in_path", required=True, help="input wav")
    p.add_argument("--out", dest="out_path", required=True, help="output wav")
    p.add_argument("--streaming", action="store_true",
                   help="use the chunked streaming path (default: offline)")
    p.add_argument("--chunk-frames", type=int, default=None,
                   help="streaming chunk size in frames "
                        "(default: one model block)")
    p.set_defaults(fn=cmd_enhance)

    p = sub.add_parser("eval", help="score estimates against references")
    p.add_argument("--ref", required=True, help="reference wav or directory")
    p.add_argument("--est", required=True, action="append",
                   help="estimate wav or directory; give twice to compare "
                        "two systems (adds a mw_u row)")
    p.add_argument("--csv", required=True, help="output CSV path")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("bench", help="runtime and memory benchmark")
    p.add_argument("--checkpoint", required=True, help="model checkpoint")
    p.add_argument("--csv", required=True, help="output CSV path")
    p.add_argument("--segments", default="1,2,5,10,20",
                   help="comma-separated segment lengths in seconds "
                        "(default 1,2,5,10,20)")
    p.add_argument("--repeats", type=int, default=3,
                   help="timing repeats per row (default 3)")
    p.add_argument("--chunk-frames", type=int, default=None,
                   help="streaming chunk size in frames "
                        "(default: one model block)")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("inspect-checkpoint",
                       help="print the tensor table and embedded config")
    p.add_argument("checkpoint", help="checkpoint file")
    p.set_defaults(fn=cmd_inspect_checkpoint)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.fn(args)
    except ArgumentError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (AudioFormatError, UnsupportedFormatError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_IO
    except (NumericError, ContractError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
