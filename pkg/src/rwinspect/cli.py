"""Command-line front end.

Subcommands: trial, batch, coverage, privacy-audit, bound, plot-data.
Exit codes: 0 success, 1 usage error, 2 config/map error, 3 internal
invariant violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import ConfigError, InvariantViolation, MapError
from .geometry import SourceSpec, load_map
from .grid import discretize, validate
from .harness import (
    PLOT_KINDS,
    emit_plot_data,
    load_config,
    privacy_audit,
    run_batch,
    run_coverage,
)
from .policy import run_trial
from . import coverage as cov

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CONFIG = 2
EXIT_INTERNAL = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rwinspect", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("trial", help="run one inspection trial")
    p.add_argument("--map", required=True, help="map JSON path")
    p.add_argument("--config", required=True, help="experiment config JSON path")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--source", help="override source as x,y,strength")
    p.add_argument("--out", help="write the result JSON here instead of stdout")

    p = sub.add_parser("batch", help="run the configured Monte Carlo batch")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--save-steps", action="store_true", help="persist raw step sizes")

    p = sub.add_parser("coverage", help="source-free cover-time sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("privacy-audit", help="pairwise distribution audit over source-free maps")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("bound", help="hierarchical high-probability cover-time bound")
    p.add_argument("--map", required=True)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--config", help="walk parameters (defaults otherwise)")
    p.add_argument("--rollouts", type=int, default=400)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the bound JSON here instead of stdout")

    p = sub.add_parser("plot-data", help="emit tidy CSV + rendered figure for one plot kind")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--kind", required=True, help="|".join(PLOT_KINDS))
    p.add_argument("--out", help="output directory (defaults to --in)")
    return parser


def _cmd_trial(args) -> int:
    config = load_config(args.config)
    map_spec = load_map(args.map)
    if args.source:
        try:
            x, y, s = (float(v) for v in args.source.split(","))
        except ValueError:
            raise _UsageError("--source expects x,y,strength") from None
        map_spec = map_spec.with_source(SourceSpec(x, y, s))
    grid = None
    if config.discretizations:
        grid = discretize(map_spec, config.discretizations[0], config.inspector.r_I)
    result = run_trial(
        config.algorithm, map_spec, config.detector, config.inspector, args.seed, grid=grid
    )
    doc = {
        "schema_version": 1,
        "decision": result.decision.value,
        "steps": result.steps,
        "p_min": result.memory.p_min,
        "p_trace": [[t, p] for t, p in result.p_trace],
        "cover_steps": result.omniscient.cover_step if result.omniscient else None,
        "seed": args.seed,
    }
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_bound(args) -> int:
    map_spec = load_map(args.map).without_source()
    if args.config:
        config = load_config(args.config)
        inspector, detector, algorithm = config.inspector, config.detector, config.algorithm
    else:
        from .geometry import InspectorSpec
        from .sensing import DetectorModel
        from .policy import default_params

        inspector = InspectorSpec(r_I=0.4, r_D=1.0)
        detector = DetectorModel(map_spec.background, 3.0, 0.1)
        algorithm = default_params(map_spec.background, map_spec)
    cm = discretize(map_spec, args.epsilon, inspector.r_I)
    report = validate(args.epsilon, inspector, cm)
    if not report.traversable:
        raise MapError(f"map not traversable at epsilon={args.epsilon}")
    quantiles = cov.monte_carlo_quantile_estimator(
        map_spec, cm, algorithm, detector, inspector,
        rollouts=args.rollouts, seed=args.seed,
    )
    bound = cov.hierarchical_bound(cm, quantiles, args.delta)
    doc = {
        "schema_version": 1,
        "T_bound": bound.T_bound,
        "confidence": bound.confidence,
        "rounds": bound.rounds,
        "union_bounds_used": bound.union_bounds_used,
        "free_bins": cm.n_free,
        "epsilon": args.epsilon,
        "valid_lower": report.satisfies_lower,
        "valid_upper": report.satisfies_upper,
    }
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "trial":
            return _cmd_trial(args)
        if args.command == "batch":
            run_batch(load_config(args.config), workers=args.workers,
                      out_dir=args.out, save_steps=args.save_steps)
            return EXIT_OK
        if args.command == "coverage":
            run_coverage(load_config(args.config), workers=args.workers, out_dir=args.out)
            return EXIT_OK
        if args.command == "privacy-audit":
            privacy_audit(load_config(args.config), workers=args.workers, out_dir=args.out)
            return EXIT_OK
        if args.command == "bound":
            return _cmd_bound(args)
        if args.command == "plot-data":
            try:
                path = emit_plot_data(args.in_dir, args.kind, args.out)
            except ValueError as exc:
                raise _UsageError(str(exc)) from None
            print(path)
            return EXIT_OK
        raise _UsageError(f"unknown command {args.command!r}")
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, MapError, FileNotFoundError) as exc:
        print(f"config/map error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantViolation as exc:
        print(f"internal invariant violation: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
