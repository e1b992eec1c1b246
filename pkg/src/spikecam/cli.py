"""Command-line surface tying the library into user workflows.

Every subcommand is a thin wrapper over library calls, so CLI output is
byte-identical to doing the same calls directly with the same seed.  Exit
codes: 0 success, 1 usage error, 2 data or format error, 3 calibration
quality error.
"""

from __future__ import annotations

import argparse
import re
import sys
from pathlib import Path

import numpy as np

from .bench import MethodSpec, Scene, make_scenes, run_benchmark, synthetic_calibration
from .calibration import CalibrationError, build_calibration, identity_calibration
from .formats import (
    FormatError,
    center_crop,
    read_calibration,
    read_image,
    read_raw_stream,
    read_stream,
    write_calibration,
    write_image,
    write_stream,
)
from .metrics import psnr, ssim
from .noise import NoiseConfig
from .reconstruct import RestorerState, adaptive_transform, correct_fixed_pattern, restore_recurrent, tfi, tfp
from .simulate import SimulationRequest, simulate
from .streams import SpikeStream


class UsageError(ValueError):
    """Bad command line or bad argument combination."""


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad flags; route through UsageError for exit 1
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(f"{self.prog}: {message}")


_NOISE_FLAGS = {
    "shot": "enable_shot",
    "dark": "enable_dark",
    "rnu": "enable_nonuniformity",
    "quant": "enable_quantization",
}


def _parse_noise(text: str, seed: int) -> NoiseConfig:
    if text == "none":
        return NoiseConfig.none(seed)
    if text == "all":
        return NoiseConfig.all(seed)
    enabled = dict.fromkeys(_NOISE_FLAGS.values(), False)
    for token in text.split(","):
        token = token.strip()
        if token not in _NOISE_FLAGS:
            raise UsageError(
                f"unknown noise source {token!r}; choose from "
                f"{', '.join(_NOISE_FLAGS)}, or 'all' or 'none'"
            )
        enabled[_NOISE_FLAGS[token]] = True
    return NoiseConfig(rng_seed=seed, **enabled)


def _parse_raw(text: str) -> tuple[int, int]:
    m = re.fullmatch(r"(\d+)x(\d+)", text)
    if not m:
        raise UsageError(f"--raw expects WIDTHxHEIGHT, got {text!r}")
    return int(m.group(1)), int(m.group(2))


def _parse_ticks(text: str) -> list[int]:
    try:
        return [int(tok) for tok in text.split(",")]
    except ValueError:
        raise UsageError(f"--at expects comma-separated tick numbers, got {text!r}")


def _add_stream_input(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("stream", help="spike stream file")
    parser.add_argument(
        "--raw",
        metavar="WxH",
        help="treat the file as a headerless packed dump with these dimensions",
    )
    parser.add_argument(
        "--msb-first",
        action="store_true",
        help="raw dump packs the most significant bit first",
    )


def _load_stream(path: str, raw: str | None, msb_first: bool) -> SpikeStream:
    if raw is None:
        return read_stream(path)
    width, height = _parse_raw(raw)
    stream = read_raw_stream(path, width, height, msb_first=msb_first)
    w8, h8 = width - width % 8, height - height % 8
    if (w8, h8) != (width, height):
        if w8 == 0 or h8 == 0:
            raise FormatError(f"raw dimensions {width}x{height} are below one 8-pixel tile")
        print(
            f"note: center-cropping {width}x{height} raw input to {w8}x{h8} "
            f"(dimensions must be divisible by 8 for processing)",
            file=sys.stderr,
        )
        stream = center_crop(stream, w8, h8)
    return stream


def _load_calibration(path: str | None, stream: SpikeStream):
    if path is None:
        return identity_calibration(stream.width, stream.height, clock=stream.clock)
    calib = read_calibration(path)
    calib.require_shape((stream.height, stream.width))
    return calib


def _fmt_metric(value: float, digits: int) -> str:
    return str(round(value, digits))


# ----------------------------------------------------------------------
# subcommands


def _cmd_simulate(args: argparse.Namespace) -> int:
    if (args.input is None) == (args.sequence is None):
        raise UsageError("exactly one of --input or --sequence is required")
    if args.input is not None:
        source = read_image(args.input)
    else:
        frames = sorted(Path(args.sequence).glob("*.pgm"))
        if not frames:
            raise FormatError(f"no .pgm frames found in {args.sequence}")
        source = np.stack([read_image(f) for f in frames])
    calib = read_calibration(args.calib) if args.calib else None
    noise = _parse_noise(args.noise, args.seed)
    req = SimulationRequest(
        source=source, theta=args.theta, length=args.length, calib=calib, noise=noise
    )
    write_stream(simulate(req), args.out)
    return 0


def _cmd_calibrate(args: argparse.Namespace) -> int:
    def lit(spec: str) -> tuple[str, float]:
        path, sep, level = spec.rpartition(":")
        if not sep or not path:
            raise UsageError(f"expected FILE:INTENSITY, got {spec!r}")
        try:
            return path, float(level)
        except ValueError:
            raise UsageError(f"bad intensity {level!r} in {spec!r}")

    path1, L_1 = lit(args.light1)
    path2, L_2 = lit(args.light2)
    dark = _load_stream(args.dark, args.raw, args.msb_first)
    light1 = _load_stream(path1, args.raw, args.msb_first)
    light2 = _load_stream(path2, args.raw, args.msb_first)
    calib = build_calibration(dark, light1, L_1, light2, L_2)
    write_calibration(calib, args.out)
    return 0


def _cmd_reconstruct(args: argparse.Namespace) -> int:
    stream = _load_stream(args.stream, args.raw, args.msb_first)
    ticks = _parse_ticks(args.at)
    if args.method == "tfp":
        if args.window is None:
            raise UsageError("--method tfp requires --window")
        images = [tfp(stream, t, args.window) for t in ticks]
    elif args.method == "tfi":
        images = [tfi(stream, t) for t in ticks]
    elif args.method == "ast":
        calib = _load_calibration(args.calib, stream)
        state = RestorerState(density_map=stream.density_map(0, min(64, stream.length)))
        images = [
            correct_fixed_pattern(adaptive_transform(stream, t, state), calib)
            for t in ticks
        ]
    else:
        calib = _load_calibration(args.calib, stream)
        images = restore_recurrent(stream, calib, ticks=ticks)
    for t, image in zip(ticks, images):
        path = f"{args.out_prefix}{t:06d}.pgm"
        write_image(np.clip(image, 0.0, 255.0), path, bit_depth=16)
        print(f"wrote {path}")
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    gt = read_image(args.gt)
    pred = read_image(args.pred)
    print(f"psnr={_fmt_metric(psnr(gt, pred), 4)} ssim={_fmt_metric(ssim(gt, pred), 6)}")
    return 0


def _cmd_bench(args: argparse.Namespace) -> int:
    if args.scenes is not None:
        files = sorted(Path(args.scenes).glob("*.pgm"))
        if not files:
            raise FormatError(f"no .pgm scenes found in {args.scenes}")
        scenes = [Scene(f.stem, read_image(f)) for f in files]
    else:
        scenes = make_scenes()
    height, width = scenes[0].image.shape
    if args.calib:
        calib = read_calibration(args.calib)
    else:
        calib = synthetic_calibration(width, height, seed=args.seed)
    methods = [MethodSpec("tfp", w) for w in (32, 64, 128, 256)]
    methods += [MethodSpec("tfi"), MethodSpec("ast"), MethodSpec("recurrent")]
    report = run_benchmark(scenes, calib, methods, args.seed)
    sys.stdout.write(report.to_csv())
    if args.report:
        with open(args.report, "w", encoding="ascii") as fh:
            fh.write(report.to_text())
    return 0


def _cmd_inspect(args: argparse.Namespace) -> int:
    stream = _load_stream(args.stream, args.raw, args.msb_first)
    print(f"width {stream.width}")
    print(f"height {stream.height}")
    print(f"length {stream.length}")
    print(f"tick_nanoseconds {round(stream.clock.tick_seconds * 1e9)}")
    if stream.length == 0:
        return 0
    frame_counts = np.bitwise_count(stream.bits).sum(axis=1)
    n_pixels = stream.width * stream.height
    frame_density = frame_counts / n_pixels
    pixel_density = stream.density_map(0, stream.length)
    print(f"mean density {frame_density.mean():.6g}")
    print(f"pixel density min {pixel_density.min():.6g} max {pixel_density.max():.6g}")
    print("frame density histogram")
    counts, edges = np.histogram(frame_density, bins=10, range=(0.0, 1.0))
    for lo, hi, count in zip(edges[:-1], edges[1:], counts):
        print(f"  {lo:.1f}-{hi:.1f} {count}")
    return 0


# ----------------------------------------------------------------------
# parser


def _build_parser() -> _Parser:
    parser = _Parser(prog="spikecam", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="render a spike stream from an image or sequence")
    p.add_argument("--input", help="static scene graymap")
    p.add_argument("--sequence", help="directory of per-tick .pgm frames (sorted by name)")
    p.add_argument("--theta", type=float, default=1.0, help="exposure factor")
    p.add_argument("--length", type=int, required=True, help="ticks to simulate")
    p.add_argument("--calib", help="calibration document for the sensor model")
    p.add_argument(
        "--noise",
        default="all",
        help="comma-separated subset of shot,dark,rnu,quant, or 'all' or 'none'",
    )
    p.add_argument("--seed", type=int, default=0, help="noise stream seed")
    p.add_argument("--out", required=True, help="output spike stream file")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("calibrate", help="build sensor calibration from three recordings")
    p.add_argument("--dark", required=True, help="lens-capped recording")
    p.add_argument("--light1", required=True, metavar="FILE:L1", help="uniform scene at intensity L1")
    p.add_argument("--light2", required=True, metavar="FILE:L2", help="uniform scene at intensity L2")
    p.add_argument("--raw", metavar="WxH", help="recordings are headerless packed dumps")
    p.add_argument("--msb-first", action="store_true", help="raw dumps pack the most significant bit first")
    p.add_argument("--out", required=True, help="output calibration document")
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("reconstruct", help="restore intensity images from a stream")
    _add_stream_input(p)
    p.add_argument("--method", required=True, choices=("tfp", "tfi", "ast", "rsir"))
    p.add_argument("--window", type=int, help="tick window for tfp")
    p.add_argument("--at", required=True, metavar="T[,T...]", help="ticks to restore")
    p.add_argument("--calib", help="calibration document (identity if omitted)")
    p.add_argument("--out-prefix", required=True, help="output files get PREFIX<tick>.pgm")
    p.set_defaults(func=_cmd_reconstruct)

    p = sub.add_parser("eval", help="compare a prediction against ground truth")
    p.add_argument("--gt", required=True, help="ground-truth graymap")
    p.add_argument("--pred", required=True, help="predicted graymap")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("bench", help="run the benchmark harness")
    p.add_argument("--scenes", help="directory of .pgm scenes (builtin scenes if omitted)")
    p.add_argument("--calib", help="calibration document (synthetic sensor if omitted)")
    p.add_argument("--seed", type=int, default=0, help="benchmark seed")
    p.add_argument("--report", help="write the structured text report here")
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("inspect", help="print stream header and density summary")
    _add_stream_input(p)
    p.set_defaults(func=_cmd_inspect)

    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        args = _build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except CalibrationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
