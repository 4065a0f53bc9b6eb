"""Command-line entry point: prepare, train-baseline, replay, report, serve, synth."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import RunConfig
from .data import DataError
from .gbdt import TrainingError
from .harness import (
    HarnessError,
    cmd_prepare,
    cmd_replay,
    cmd_report,
    cmd_synth,
    cmd_train_baseline,
    load_prepared,
)
from .integration import IntegrationError

POLICY_CLI = {
    "labels": "labels",
    "labels-unfair": "labels_unfair",
    "labels-weights": "labels_weights",
    "labels-unfair-weights": "labels_unfair_weights",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fairloop",
        description=(
            "Human-in-the-loop fairness platform: prepare loan data, train a"
            " boosted baseline, replay fairness feedback, and serve the live"
            " retraining API."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic loan-application CSV")
    p.add_argument("--rows", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--config-out", help="also write a matching run config JSON")

    p = sub.add_parser("prepare", help="split, impute, and encode raw data")
    p.add_argument("--config", required=True, help="run config JSON")
    p.add_argument("--raw", required=True, help="raw CSV input")
    p.add_argument("--out", required=True, help="prepared output directory")
    p.add_argument("--seed", type=int, help="override the config seed")

    p = sub.add_parser("train-baseline", help="train the class-balanced baseline model")
    p.add_argument("--prepared", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, help="override the training seed")

    p = sub.add_parser("replay", help="replay a feedback log and emit tables/series")
    p.add_argument("--prepared", required=True)
    p.add_argument("--baseline", required=True)
    p.add_argument("--feedback", required=True, help="feedback log (JSONL, or CSV with --mapping)")
    p.add_argument("--mode", choices=("global", "personalized"), required=True)
    p.add_argument("--policy", choices=sorted(POLICY_CLI), required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mapping", help="mapping config JSON for foreign feedback datasets")
    p.add_argument("--alpha", type=float, help="feedback contribution ratio override")

    p = sub.add_parser("report", help="render figures and text tables from a replay directory")
    p.add_argument("--run", required=True, help="replay output directory")
    p.add_argument("--out", help="figure output directory (default <run>/figures)")

    p = sub.add_parser("serve", help="start the interactive retraining API")
    p.add_argument("--prepared", required=True)
    p.add_argument("--baseline-dir", "--baseline", dest="baseline_dir", required=True)
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--session-store-dir", help="directory for append-only session event logs")

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "synth":
            cmd_synth(args.rows, args.seed, args.out, args.config_out)
            print(f"wrote {args.rows} rows to {args.out}")

        elif args.command == "prepare":
            config = RunConfig.load(args.config)
            if args.seed is not None:
                config = config.with_seed(args.seed)
            prepared = cmd_prepare(config, args.raw, args.out)
            print(
                f"prepared {prepared.train.n_rows} train / {prepared.test.n_rows} test /"
                f" {prepared.display.n_rows} display rows into {args.out}"
            )

        elif args.command == "train-baseline":
            prepared = load_prepared(args.prepared)
            params = prepared.config.gbdt
            if args.seed is not None:
                params = type(params).from_dict({**params.to_dict(), "seed": args.seed})
            model, rep = cmd_train_baseline(prepared, args.out, params)
            print(f"baseline model {model.fingerprint[:12]} written to {args.out}")
            acc = rep.accuracy.value
            print(f"test accuracy {acc:.4f}" if acc is not None else "accuracy undefined")

        elif args.command == "replay":
            mapping = None
            if args.mapping:
                with open(args.mapping, encoding="utf-8") as fh:
                    mapping = json.load(fh)
            result = cmd_replay(
                args.prepared,
                args.baseline,
                args.feedback,
                args.mode,
                POLICY_CLI[args.policy],
                args.out,
                mapping=mapping,
                alpha=args.alpha,
            )
            for w in result.warnings:
                print(f"warning: {w}", file=sys.stderr)
            print(f"replay ({args.mode}, {args.policy}) written to {args.out}")

        elif args.command == "report":
            produced = cmd_report(args.run, args.out)
            for path in produced:
                print(f"wrote {path}")

        elif args.command == "serve":
            from .service import run_server

            run_server(
                args.prepared,
                args.baseline_dir,
                port=args.port,
                host=args.host,
                session_store_dir=args.session_store_dir,
            )

    except (DataError, TrainingError, IntegrationError, HarnessError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
