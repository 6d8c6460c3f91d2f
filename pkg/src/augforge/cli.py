"""Command-line entry point.

    augforge run|compose|score|assign|emit|eval|stats --config cfg.json
             [--alpha F] [--delta F] [--seed N] [--mode basic|extra] [--jobs N]
             [--w-ood F] [--predictions PATH]

`run` executes every stage; each subcommand reruns one stage on the
intermediate files in the configured output directory, and chaining them
reproduces the monolithic run byte for byte. AUGFORGE_JOBS is the fallback
for --jobs.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import pipeline
from .errors import AugforgeError, ConfigError, exit_code_for

log = logging.getLogger(__name__)

STAGES = ("run", "compose", "score", "assign", "emit", "eval", "stats")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="augforge",
        description="Compose, filter, and pseudo-label augmented VQA training pairs.",
    )
    parser.add_argument("stage", choices=STAGES, help="pipeline stage to run")
    parser.add_argument("--config", required=True, help="path to the JSON run config")
    parser.add_argument("--alpha", type=float, default=None, help="relevance filter percentage (0, 100]")
    parser.add_argument("--delta", type=float, default=None,
                        help="percentage of rule-covered pairs anchored on initial answers [0, 100]")
    parser.add_argument("--seed", type=int, default=None, help="seed for the yes/no group sampler")
    parser.add_argument("--mode", choices=pipeline.MODES, default=None,
                        help="basic: yes/no, counting, color, and what questions; extra: all types")
    parser.add_argument("--jobs", type=int, default=None,
                        help="worker threads for composition (env AUGFORGE_JOBS)")
    parser.add_argument("--w-ood", dest="w_ood", type=float, default=None,
                        help="force a fixed out-of-distribution teacher weight instead of dynamic fusion")
    parser.add_argument("--predictions", default=None, help="predictions JSONL for the eval stage")
    parser.add_argument("--hm-with", dest="hm_with", type=float, default=None,
                        help="companion overall accuracy; eval also reports the harmonic mean")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    return parser


def _jobs_from_env() -> int | None:
    raw = os.environ.get("AUGFORGE_JOBS")
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"AUGFORGE_JOBS must be an integer, got {raw!r}") from None


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        overrides = {
            "alpha_percent": args.alpha,
            "delta_percent": args.delta,
            "seed": args.seed,
            "mode": args.mode,
            "jobs": args.jobs if args.jobs is not None else _jobs_from_env(),
            "fixed_w_ood": args.w_ood,
        }
        cfg = pipeline.load_config(args.config, overrides=overrides)
        cfg.output_dir.mkdir(parents=True, exist_ok=True)

        if args.stage == "run":
            finished = pipeline.run_pipeline(cfg)
            if not finished:
                print(f"phase 1 complete; teacher request at {cfg.output_dir / pipeline.TEACHER_REQUEST_FILE}")
            else:
                print(f"augmented dataset written to {cfg.output_dir}")
        elif args.stage == "compose":
            out = pipeline.run_compose(cfg)
            print(f"candidates written to {out}")
        elif args.stage == "score":
            out = pipeline.run_score(cfg)
            print(f"filtered candidates written to {out}")
        elif args.stage == "assign":
            out = pipeline.run_assign(cfg)
            print(f"pseudo answers written to {out}")
        elif args.stage == "emit":
            result = pipeline.run_emit(cfg)
            print(f"emitted {result.count} samples to {cfg.output_dir}")
        elif args.stage == "stats":
            stats = pipeline.run_stats(cfg)
            print(json.dumps(stats, sort_keys=True, indent=2))
        else:  # eval
            if args.predictions is None:
                raise ConfigError("eval requires --predictions")
            result = pipeline.run_eval(cfg, args.predictions, hm_with=args.hm_with)
            print(f"overall accuracy: {result.overall:.2f}% over {result.n} questions")
    except AugforgeError as err:
        print(f"error ({err.category}): {err}", file=sys.stderr)
        return exit_code_for(err)
    except Exception as err:  # internal
        log.exception("internal error")
        print(f"error (internal): {err}", file=sys.stderr)
        return exit_code_for(err)
    return 0


if __name__ == "__main__":
    sys.exit(main())
