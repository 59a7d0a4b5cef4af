"""
Command-line front end.

Subcommands: generate, cubes, analyze, jns, regularity, theorem-check.
Exit codes: 0 success, 1 validation failure (filtration violations, JNS
hypothesis or bound failure), 2 input error.
"""

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from core.carleson import (
    approx_decomposition_check,
    carleson_sum_balls,
    carleson_sum_cubes,
    dist_carleson_sum,
    enlarged_carleson_sum,
    restricted_carleson_sum,
)
from core.config import EXACT_ALWAYS, AnalysisConfig, ConfigManager
from core.cubes import (
    build_filtrations,
    build_nets,
    min_separation,
    multiresolution_balls,
    validate_filtration,
)
from core.errors import CarlesonError
from core.generators import GENERATOR_KINDS, gen_segment, generator_usage, make_set
from core.io import (
    cube_records,
    dump_instance,
    labels_path,
    load_distance_matrix,
    load_instance,
    load_labels,
    load_point_cloud,
    write_json,
    write_labels,
    write_point_cloud,
    write_scale_csv,
)
from core.jns import STYLES, generate_instance, verify_jns
from core.metric_space import check_ahlfors_regularity
from core.workers import ParallelEvaluator
from cli.theorem_check import THEOREM_SETS, TheoremCheckConfig, theorem_check

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_INPUT = 2


# =============================================================================
# Argument helpers
# =============================================================================

def parse_int_list(text: str) -> list[int]:
    """``"256,512"`` or an inclusive range ``"2..5"``."""
    text = text.strip()
    if not text:
        return []
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            return list(range(int(lo), int(hi) + 1))
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected N,M,... or A..B, got {text!r}") from None


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _add_space_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("input", type=Path, help="point-cloud CSV (x_1,...,x_dim,weight)")
    p.add_argument("--matrix", action="store_true",
                   help="input is a distance-matrix CSV instead of a point cloud")
    p.add_argument("--weights", type=Path, help="weights file for --matrix input")


def _add_analysis_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("analysis")
    g.add_argument("--config", type=Path, help="analysis config JSON (default .config/)")
    g.add_argument("--save-config", action="store_true",
                   help="persist the effective configuration to the config file")
    g.add_argument("--A", type=float, dest="A", help="ball-family inflation (default 4)")
    g.add_argument("--A-prime", type=float, dest="A_prime",
                   help="enlarged-domain factor for --labels sums (default 2A)")
    g.add_argument("--P1", type=_positive_int, dest="P1", help="number of shifted filtrations")
    g.add_argument("--scales", type=_positive_int, help="number of scales from k_min")
    g.add_argument("--seed", type=int, help="seed for every random stream")
    g.add_argument("--threads", type=_positive_int, help="worker threads (default MC_THREADS)")
    g.add_argument("--estimator", choices=("auto", "exact", "mc"), default="auto",
                   help="exact sums, Monte Carlo, or exact up to --exact-cutoff points")
    g.add_argument("--exact-cutoff", type=_positive_int, dest="exact_cutoff")
    g.add_argument("--mc-samples", type=_positive_int, dest="mc_samples")
    g.add_argument("--repeats", type=_positive_int, help="Monte Carlo batches per estimate")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="carleson-check",
        description="Multiscale triangle-excess (Carleson) analysis of finite metric spaces.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    parser.add_argument("-q", "--quiet", action="store_true", help="errors only")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a reference point set")
    p.add_argument("kind", choices=GENERATOR_KINDS)
    p.add_argument("params", nargs="*",
                   help="; ".join(generator_usage(k) for k in GENERATOR_KINDS))
    p.add_argument("--out", type=Path, required=True, help="point-cloud CSV to write")
    p.set_defaults(handler=cmd_generate)

    p = sub.add_parser("cubes", help="build and validate the dyadic filtrations")
    _add_space_args(p)
    _add_analysis_args(p)
    p.add_argument("--filtration", type=_positive_int, default=1,
                   help="which shifted filtration to dump")
    p.add_argument("--out", help="cube-dump JSON (default stdout)")
    p.set_defaults(handler=cmd_cubes)

    p = sub.add_parser("analyze", help="Carleson sums of the triangle excess")
    _add_space_args(p)
    _add_analysis_args(p)
    p.add_argument("--labels", type=Path, help="in_E,in_Etilde sidecar for restricted sums")
    p.add_argument("--filtration", type=_positive_int, default=1)
    p.add_argument("--ball", help="ball form at X,R (point index, radius)")
    p.add_argument("--out", help="report JSON (default stdout)")
    p.add_argument("--scales-csv", type=Path, dest="scales_csv", help="per-scale CSV")
    p.set_defaults(handler=cmd_analyze)

    p = sub.add_parser("jns", help="verify the packing lemma on an instance")
    p.add_argument("instance", nargs="?", type=Path, help="instance JSON")
    p.add_argument("--generate", help="STYLE,SEED with STYLE in " + "|".join(STYLES))
    p.add_argument("--points", type=Path, help="point cloud for the generated tree")
    p.add_argument("--n", type=_positive_int, default=128,
                   help="segment size when no --points are given")
    p.add_argument("--scales", type=_positive_int, help="number of scales of the tree")
    p.add_argument("--N", type=float, dest="N", default=1.0)
    p.add_argument("--eta", type=float, default=0.5)
    p.add_argument("--threads", type=_positive_int)
    p.add_argument("--dump", help="write the generated instance JSON here")
    p.add_argument("--out", help="report JSON (default stdout)")
    p.set_defaults(handler=cmd_jns)

    p = sub.add_parser("regularity", help="empirical 1-Ahlfors-regularity ratios")
    _add_space_args(p)
    p.add_argument("--r-min", type=float, dest="r_min")
    p.add_argument("--r-max", type=float, dest="r_max")
    p.add_argument("--samples", type=_positive_int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="report JSON (default stdout)")
    p.set_defaults(handler=cmd_regularity)

    p = sub.add_parser("theorem-check", help="Carleson ratios along generator ladders")
    _add_analysis_args(p)
    p.add_argument("--set", action="append", dest="sets", default=[], choices=THEOREM_SETS)
    p.add_argument("--sizes", type=parse_int_list, default=[256, 512])
    p.add_argument("--gens", type=parse_int_list, default=[2, 3, 4, 5])
    p.add_argument("--out", help="summary JSON (default stdout)")
    p.add_argument("--scales-csv", type=Path, dest="scales_csv", help="per-scale CSV")
    p.set_defaults(handler=cmd_theorem_check)

    return parser


def analysis_config(args) -> AnalysisConfig:
    """Loaded configuration with command-line overrides applied."""
    manager = ConfigManager(args.config)
    config = manager.config

    overrides = {key: getattr(args, key) for key in ("A", "A_prime", "P1", "seed", "threads")
                 if getattr(args, key, None) is not None}
    if getattr(args, "scales", None) is not None:
        overrides["k_max"] = config.k_min + args.scales - 1

    estimator = config.estimator
    est_overrides = {key: getattr(args, key) for key in ("exact_cutoff", "mc_samples", "repeats")
                     if getattr(args, key, None) is not None}
    if "seed" in overrides:
        est_overrides["seed"] = overrides["seed"]
    if args.estimator == "exact":
        est_overrides["exact_cutoff"] = EXACT_ALWAYS
    elif args.estimator == "mc":
        est_overrides["exact_cutoff"] = 2
    if est_overrides:
        estimator = replace(estimator, **est_overrides)

    config = replace(config, estimator=estimator, **overrides)
    if args.save_config:
        manager.save(config)
    return config


def _load_space(args):
    if args.matrix:
        return load_distance_matrix(args.input, args.weights)
    return load_point_cloud(args.input)


def _filtrations(space, config: AnalysisConfig, evaluator: ParallelEvaluator):
    hierarchy = build_nets(space, config.k_min, config.k_max, config.seed)
    return hierarchy, build_filtrations(hierarchy, config.P1, evaluator)


def _pick(filtrations, index: int):
    if index > len(filtrations):
        raise ValueError(f"--filtration {index} exceeds P1={len(filtrations)}")
    return filtrations[index - 1]


# =============================================================================
# Subcommands
# =============================================================================

def cmd_generate(args) -> int:
    generated = make_set(args.kind, args.params)
    write_point_cloud(args.out, generated.space)
    if generated.labelled:
        write_labels(labels_path(args.out), generated.E_labels, generated.Etilde_labels)
    return EXIT_OK


def cmd_cubes(args) -> int:
    config = analysis_config(args)
    evaluator = ParallelEvaluator(config.threads)
    space = _load_space(args)
    _, filtrations = _filtrations(space, config, evaluator)

    failed = False
    for f in filtrations:
        violations = validate_filtration(space, f)
        for v in violations:
            logger.error("filtration %d: %s at %s (measured %g) %s", f.shift_index,
                         v.invariant, v.cube_id, v.measured, v.detail)
        failed = failed or bool(violations)

    write_json(args.out, cube_records(_pick(filtrations, args.filtration)))
    return EXIT_FAILED if failed else EXIT_OK


def cmd_analyze(args) -> int:
    config = analysis_config(args)
    evaluator = ParallelEvaluator(config.threads)
    space = _load_space(args)
    hierarchy, filtrations = _filtrations(space, config, evaluator)
    f = _pick(filtrations, args.filtration)
    root = f.root

    report = carleson_sum_cubes(space, f, root, config.estimator, evaluator)
    out = report.to_dict()

    if args.ball:
        try:
            x_text, r_text = args.ball.split(",")
            x, r = int(x_text), float(r_text)
        except ValueError:
            raise ValueError(f"--ball expects X,R, got {args.ball!r}") from None
        family = multiresolution_balls(hierarchy, config.A)
        out["ball"] = carleson_sum_balls(space, family, x, r, config.estimator,
                                         evaluator).to_dict()

    if args.labels:
        E_set, Etilde = load_labels(args.labels, space.n)
        out["restricted"] = restricted_carleson_sum(space, f, root, Etilde, config.estimator,
                                                    evaluator).to_dict()
        out["dist_ratio"] = dist_carleson_sum(space, E_set, Etilde, f, root) / root.nominal_diam
        A_prime = config.effective_A_prime
        out["enlarged"] = enlarged_carleson_sum(space, f, root, Etilde, A_prime, config.estimator,
                                                evaluator).to_dict()
        meeting = [c for c in f if bool(Etilde[c.members].any())]
        checks = evaluator.map(
            lambda c: approx_decomposition_check(space, c, Etilde, A_prime, config.estimator),
            meeting,
        )
        out["decomposition_max"] = max((d.ratio for d in checks), default=0.0)

    write_json(args.out, out)
    if args.scales_csv:
        write_scale_csv(args.scales_csv, report.scale_rows())
    return EXIT_OK


def cmd_jns(args) -> int:
    if (args.instance is None) == (args.generate is None):
        raise ValueError("give either an instance file or --generate STYLE,SEED")
    evaluator = ParallelEvaluator(args.threads)

    if args.instance is not None:
        instance = load_instance(args.instance)
    else:
        try:
            style, seed_text = args.generate.split(",")
            seed = int(seed_text)
        except ValueError:
            raise ValueError(f"--generate expects STYLE,SEED, got {args.generate!r}") from None
        space = load_point_cloud(args.points) if args.points else gen_segment(args.n)
        k_max = args.scales - 1 if args.scales else None
        hierarchy = build_nets(space, 0, k_max, seed)
        filtration = build_filtrations(hierarchy, 1)[0]
        instance = generate_instance(filtration, style, args.N, args.eta, seed)
        if args.dump:
            dump_instance(args.dump, instance)

    report = verify_jns(instance, evaluator)
    write_json(args.out, report.to_dict())
    return EXIT_OK if report.pass_ else EXIT_FAILED


def cmd_regularity(args) -> int:
    space = _load_space(args)
    r_min = args.r_min if args.r_min is not None else 10.0 * min_separation(space)
    r_max = args.r_max if args.r_max is not None else space.diameter / 2.0
    report = check_ahlfors_regularity(space, r_min, r_max, args.samples, args.seed)
    write_json(args.out, {
        "ratio_min": report.ratio_min,
        "ratio_max": report.ratio_max,
        "spread": report.spread,
        "r_min": r_min,
        "r_max": r_max,
        "samples": len(report.samples),
    })
    return EXIT_OK


def cmd_theorem_check(args) -> int:
    config = TheoremCheckConfig(sets=args.sets, sizes=args.sizes, gens=args.gens,
                                analysis=analysis_config(args))
    summary = theorem_check(config)
    write_json(args.out, summary.to_dict())
    if args.scales_csv:
        write_scale_csv(args.scales_csv, summary.scale_rows, keys=("set", "step"))
    return EXIT_OK


# =============================================================================
# Entry
# =============================================================================

def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse ``argv`` and run one subcommand; returns the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_INPUT

    if args.verbose:
        logging.getLogger().setLevel(logging.DEBUG)
    elif args.quiet:
        logging.getLogger().setLevel(logging.ERROR)

    try:
        return args.handler(args)
    except (CarlesonError, ValueError, IndexError, OSError) as e:
        print(f"{parser.prog} {args.command}: error: {e}", file=sys.stderr)
        return EXIT_INPUT
