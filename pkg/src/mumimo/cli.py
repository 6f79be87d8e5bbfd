"""Command line entry point: run a configured BER sweep and write CSV."""

import argparse
import sys
from dataclasses import replace

import numpy as np

from .errors import ConfigError, NumericalError
from .harness import parse_config, parse_snr_spec, run_sweep, write_csv

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="simulate",
        description="Uplink multiuser MIMO link-level BER sweep")
    parser.add_argument("--config", required=True, metavar="FILE",
                        help="flat key = value scenario file")
    parser.add_argument("--snr", metavar="A:B:STEP",
                        help="override the swept SNR points (dB)")
    parser.add_argument("--detector", help="override the detector")
    parser.add_argument("--seed", type=int, help="override the master seed")
    parser.add_argument("--packets", type=int, help="override packets per point")
    parser.add_argument("--out", help="override the output CSV path")
    parser.add_argument("--workers", type=int, default=1,
                        help="worker processes (default 1; any count gives "
                             "identical results)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            spec = parse_config(fh.read())
        overrides = {}
        if args.snr is not None:
            overrides["snr_db"] = parse_snr_spec(args.snr)
        if args.detector is not None:
            overrides["detector"] = args.detector
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.packets is not None:
            overrides["packets"] = args.packets
        if args.out is not None:
            overrides["out"] = args.out
        if overrides:
            spec = replace(spec, **overrides).validate()
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        result = run_sweep(spec, workers=max(1, args.workers))
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL

    write_csv(result, spec.out)
    for row in result.rows:
        if row.failed:
            print(f"snr {row.snr_db:g} dB: FAILED ({row.message})")
        else:
            print(f"snr {row.snr_db:g} dB: ber {row.ber:.6g} "
                  f"({row.errors}/{row.bits} bits)")
    print(f"wrote {spec.out} [{result.scenario_hash}] "
          f"in {result.wall_time_s:.1f} s")
    if result.failures:
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
