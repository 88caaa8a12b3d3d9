"""Command-line entry points: keygen, run, report, timing."""

from __future__ import annotations

import argparse
import json
import random
import sys

from .config import load_config
from .errors import SimfedError
from .paillier import (
    deserialize_private_key,
    deserialize_public_key,
    generate_keypair,
    serialize_private_key,
    serialize_public_key,
)
from .report import comparison_table, load_runs, render_table, write_plot_series
from .runner import measure_similarity_timings, run_experiment, write_report_files


def _cmd_keygen(args) -> int:
    rng = random.Random(args.seed)
    pk, sk = generate_keypair(args.key_bits, rng)
    pub_path = args.out + ".pub"
    priv_path = args.out + ".key"
    with open(pub_path, "wb") as fh:
        fh.write(serialize_public_key(pk))
    with open(priv_path, "wb") as fh:
        fh.write(serialize_private_key(sk))
    print(f"wrote {pub_path} and {priv_path} (key_bits={args.key_bits}, key_id={pk.key_id})")
    return 0


def _cmd_run(args) -> int:
    cfg = load_config(
        args.config,
        mode=args.mode,
        seed_override=args.seed_override,
        paper_keys=args.paper_keys,
    )
    report = run_experiment(cfg)
    paths = write_report_files(report, args.out_dir)
    print(
        f"mode={report.mode} rounds={report.rounds_completed} "
        f"final_accuracy={report.final_accuracy:.4f} "
        f"final_test_error={report.final_test_error:.4f} ({report.stopped_reason})"
    )
    for kind, path in paths.items():
        print(f"  {kind}: {path}")
    return 0


def _cmd_report(args) -> int:
    runs = load_runs(args.metrics)
    print(render_table(comparison_table(runs)))
    if args.out:
        write_plot_series(runs, args.out)
        print(f"plot series written to {args.out}")
    return 0


def _cmd_timing(args) -> int:
    cfg = load_config(args.config, paper_keys=args.paper_keys)
    timing = measure_similarity_timings(cfg, repetitions=args.repetitions)
    print(timing.render())
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(
                {
                    "model_initiator_s": timing.model_initiator_s,
                    "participant_s": timing.participant_s,
                    "server_s": timing.server_s,
                    "repetitions": timing.repetitions,
                    "param_count": timing.param_count,
                    "key_bits": timing.key_bits,
                },
                fh,
                indent=2,
                sort_keys=True,
            )
            fh.write("\n")
        print(f"timing report written to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="simfed",
        description="Privacy-preserving multi-party training with encrypted "
        "weight-similarity filtering.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    keygen = sub.add_parser("keygen", help="generate and serialize a keypair")
    keygen.add_argument("--key-bits", type=int, default=256)
    keygen.add_argument("--out", required=True, help="output path prefix")
    keygen.add_argument("--seed", type=int, default=None)
    keygen.set_defaults(func=_cmd_keygen)

    run = sub.add_parser("run", help="execute one experiment from a config file")
    run.add_argument("--config", required=True)
    run.add_argument("--out-dir", default="runs/latest")
    run.add_argument("--mode", choices=("filtered", "nofilter", "centralized", "standalone"))
    run.add_argument("--seed-override", type=int, default=None)
    run.add_argument("--paper-keys", action="store_true", help="use 1024-bit keys")
    run.set_defaults(func=_cmd_run)

    report = sub.add_parser("report", help="align metrics files into one table")
    report.add_argument("metrics", nargs="+", help="metrics.csv paths")
    report.add_argument("--out", default=None, help="write plot-ready JSON series here")
    report.set_defaults(func=_cmd_report)

    timing = sub.add_parser("timing", help="time the similarity pipeline per role")
    timing.add_argument("--config", required=True)
    timing.add_argument("--repetitions", type=int, default=3)
    timing.add_argument("--paper-keys", action="store_true")
    timing.add_argument("--out", default=None)
    timing.set_defaults(func=_cmd_timing)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SimfedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
