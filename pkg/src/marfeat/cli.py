"""Command-line entry point: ``marfeat {extract,beamform,inspect}``.

Exit codes: 0 success, 2 bad configuration, 3 I/O failure, 4 numerical
failure or malformed archive.
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import __version__
from .beamform import delay_and_sum, estimate_tdoa
from .config import ConfigError, PipelineConfig
from .features import FeatureExtractionError, assemble_context, extract
from .mar_core import SingularSystemError, SingularTransferError
from .wave_io import (
    ArchiveFormatError,
    WaveFormatError,
    read_feature_archive,
    read_wave,
    write_feature_archive,
    write_wave,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4

log = logging.getLogger("marfeat")

# flag dest -> PipelineConfig field
_FLAG_FIELDS = {
    "mode": "mode",
    "bands": "bands",
    "order": "order",
    "low_hz": "low_hz",
    "high_hz": "high_hz",
    "segment_seconds": "segment_seconds",
    "frame_ms": "frame_ms",
    "shift_ms": "shift_ms",
    "env_rate": "env_rate",
    "gain_norm": "gain_normalize",
    "group_size": "group_size",
    "context": "context",
    "max_delay_ms": "max_delay_ms",
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="marfeat", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    ex = sub.add_parser("extract", help="extract MC-MAR, BF-MB or FBANK features to a MARF archive")
    ex.add_argument("input", help="PCM WAV file")
    ex.add_argument("output", help="MARF archive to write")
    ex.add_argument("--config", help="JSON file with PipelineConfig keys; flags override it")
    ex.add_argument("--mode", choices=["mc-mar", "bf-mb", "fbank"])
    ex.add_argument("--bands", type=int)
    ex.add_argument("--order", type=int)
    ex.add_argument("--low-hz", type=float)
    ex.add_argument("--high-hz", type=float)
    ex.add_argument("--segment-seconds", type=float)
    ex.add_argument("--frame-ms", type=float)
    ex.add_argument("--shift-ms", type=float)
    ex.add_argument("--env-rate", type=float, help="envelope points per second")
    ex.add_argument("--gain-norm", action=argparse.BooleanOptionalAction, default=None)
    ex.add_argument("--group-size", type=int, help="bands per vector fit in bf-mb mode")
    ex.add_argument("--context", type=int)
    ex.add_argument("--max-delay-ms", type=float)
    ex.add_argument("--context-windows", action="store_true",
                    help="write (T, C, context, B) windows instead of the (C, T, B) spectrogram")
    ex.add_argument("--threads", type=int, default=1)

    bf = sub.add_parser("beamform", help="delay-and-sum a multi-channel WAV to mono")
    bf.add_argument("input")
    bf.add_argument("output")
    bf.add_argument("--max-delay-ms", type=float, default=10.0)

    ins = sub.add_parser("inspect", help="summarize a MARF archive")
    ins.add_argument("archive")
    return parser


def _config_from_args(args) -> PipelineConfig:
    overrides = {
        field: getattr(args, dest)
        for dest, field in _FLAG_FIELDS.items()
        if getattr(args, dest) is not None
    }
    if args.config:
        return PipelineConfig.load(args.config, **overrides)
    return PipelineConfig.from_dict(overrides)


def cmd_extract(args) -> int:
    try:
        cfg = _config_from_args(args)
    except OSError as exc:
        log.error("cannot read config: %s", exc)
        return EXIT_IO
    except ConfigError as exc:
        log.error("bad config: %s", exc)
        return EXIT_CONFIG
    if args.threads < 1:
        log.error("bad config: --threads must be >= 1")
        return EXIT_CONFIG

    try:
        wave = read_wave(args.input)
    except (OSError, WaveFormatError) as exc:
        log.error("cannot read %s: %s", args.input, exc)
        return EXIT_IO

    try:
        spec = extract(wave, cfg, threads=args.threads)
    except ConfigError as exc:
        log.error("bad config: %s", exc)
        return EXIT_CONFIG
    except (FeatureExtractionError, SingularSystemError, SingularTransferError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC

    tensor = spec.values
    if args.context_windows:
        try:
            tensor = assemble_context(spec, cfg.context)
        except ValueError as exc:
            log.error("bad config: %s", exc)
            return EXIT_CONFIG

    metadata = {
        "config": cfg.to_dict(),
        "mode": cfg.mode,
        "band_count": cfg.bands,
        "frame_ms": cfg.frame_ms,
        "frame_shift_ms": cfg.shift_ms,
        "frames_per_segment": spec.frames_per_segment,
        "valid_frames": list(spec.valid_frames),
        "sample_rate": wave.sample_rate,
        "input_channels": wave.num_channels,
        "layout": "T,C,context,B" if args.context_windows else "C,T,B",
    }
    try:
        write_feature_archive(args.output, tensor, metadata)
    except OSError as exc:
        log.error("cannot write %s: %s", args.output, exc)
        return EXIT_IO
    log.info("wrote %s with dims %s", args.output, "x".join(map(str, tensor.shape)))
    return EXIT_OK


def cmd_beamform(args) -> int:
    if not args.max_delay_ms > 0:
        log.error("bad config: --max-delay-ms must be positive")
        return EXIT_CONFIG
    try:
        wave = read_wave(args.input)
    except (OSError, WaveFormatError) as exc:
        log.error("cannot read %s: %s", args.input, exc)
        return EXIT_IO
    if wave.num_channels == 1:
        out = wave
    else:
        delays = estimate_tdoa(wave, args.max_delay_ms)
        log.info("delays (samples): %s", delays.delays.tolist())
        out = delay_and_sum(wave, delays)
    try:
        write_wave(args.output, out)
    except OSError as exc:
        log.error("cannot write %s: %s", args.output, exc)
        return EXIT_IO
    return EXIT_OK


def cmd_inspect(args) -> int:
    try:
        tensor, meta = read_feature_archive(args.archive)
    except OSError as exc:
        log.error("cannot read %s: %s", args.archive, exc)
        return EXIT_IO
    except ArchiveFormatError as exc:
        log.error("%s", exc)
        return EXIT_NUMERIC

    print(f"archive: {args.archive}")
    print(f"dims: {'x'.join(map(str, tensor.shape))}")
    print("dtype: float32 (little-endian)")
    print(f"mode: {meta.get('mode', 'unknown')}")
    for key in sorted(meta.get("config", {})):
        print(f"  {key}: {meta['config'][key]}")
    for key in sorted(k for k in meta if k not in ("config", "mode")):
        print(f"{key}: {meta[key]}")
    print(f"value range: {tensor.min():.6g} .. {tensor.max():.6g}")
    axes = meta.get("layout", ",".join(f"axis{i}" for i in range(tensor.ndim))).split(",")
    chan_axis = axes.index("C") if "C" in axes else 0
    for ax, label in ((chan_axis, "channel"), (tensor.ndim - 1, "band")):
        other = tuple(i for i in range(tensor.ndim) if i != ax)
        lo, hi = tensor.min(axis=other), tensor.max(axis=other)
        print(f"per-{label} ranges ({axes[ax]} axis, {tensor.shape[ax]} entries):")
        for i in range(min(len(lo), 64)):
            print(f"  {i:3d}: {lo[i]:.6g} .. {hi[i]:.6g}")
    print(f"finite: {bool(np.all(np.isfinite(tensor)))}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(name)s: %(levelname)s: %(message)s",
    )
    handler = {"extract": cmd_extract, "beamform": cmd_beamform, "inspect": cmd_inspect}
    return handler[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
