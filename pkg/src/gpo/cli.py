"""``gpo-bench`` command line."""
import argparse
import sys

from .bench import PROTOCOLS, BenchConfig, run
from .errors import GpoError


def _durations(text):
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of seconds: {text!r}") from None


def _knots(text):
    if text == "auto":
        return text
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("--knots takes an integer or 'auto'") from None


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--pattern", choices=("slow", "fast"), default="fast")
    common.add_argument("--durations", type=_durations, default=None, help="comma-separated seconds")
    common.add_argument("--trials", type=int, default=None)
    common.add_argument("--rate-gyro", type=float, default=100.0, metavar="HZ")
    common.add_argument("--rate-accel", type=float, default=100.0, metavar="HZ")
    common.add_argument("--jitter", type=float, default=0.0, metavar="S")
    common.add_argument("--noise-gyro", type=float, default=1e-5, metavar="STD")
    common.add_argument("--noise-accel", type=float, default=1e-5, metavar="STD")
    common.add_argument("--knots", type=_knots, default="auto", metavar="N|auto")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default="-", help="output CSV path ('-' for stdout)")
    common.add_argument("--qc", type=float, default=100.0, help="rotation prior PSD")
    common.add_argument("--qr", type=float, default=100.0, help="translation prior PSD")

    parser = argparse.ArgumentParser(prog="gpo-bench", description="GP pseudo-measurement preintegration benchmarks")
    sub = parser.add_subparsers(dest="protocol", required=True)
    for name in PROTOCOLS:
        sub.add_parser(name, parents=[common])
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = BenchConfig(
            protocol=args.protocol, pattern=args.pattern, durations=args.durations, trials=args.trials,
            rate_gyro=args.rate_gyro, rate_accel=args.rate_accel, jitter=args.jitter,
            noise_gyro=args.noise_gyro, noise_accel=args.noise_accel, knots=args.knots, seed=args.seed,
            out=args.out, qc=args.qc, qr=args.qr,
        )
        run(cfg)
    except (GpoError, OSError) as exc:
        print(f"gpo-bench: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
