import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from gridiql.errors import GridIQLError
from gridiql.geometry import Metric
from gridiql.grid_env import generate_map, is_reachable, read_map, render_map, shortest_path
from gridiql.harness import (
    REFERENCE_TABLE,
    format_report,
    load_config,
    paired_eta_wins,
    read_reference_table,
    report_from_dir,
    run_batch,
    write_outputs,
)
from gridiql.qlearn_core import Variant

log = logging.getLogger(__name__)


def cmd_run(args):
    cfg = load_config(args.config)
    out_dir = Path(args.out) if args.out is not None else cfg.output_dir
    print(f"Reading config from: {args.config}")
    report = run_batch(cfg, jobs=args.jobs, progress=not args.quiet)
    print(format_report(report))
    for j_row in report.j_rows:
        wins, pairs = paired_eta_wins(report, j_row.variant, j_row.metric)
        print(f"variant {j_row.variant} ({j_row.metric}) converged before a on {wins}/{pairs} seeds")
    print(f"Writing results to: {out_dir}")
    write_outputs(report, out_dir, cfg)
    print("Done.")


def cmd_validate_map(args):
    grid = read_map(args.map_file)
    print(f"{args.map_file}: {grid.h}x{grid.v}, {grid.obstacle_count} obstacles, start {grid.start}, goal {grid.goal}")
    if not is_reachable(grid):
        print("Error: goal is unreachable from start", file=sys.stderr)
        sys.exit(1)
    for metric in Metric:
        length, cells = shortest_path(grid, metric)
        print(f"shortest path ({metric}): {length:.4f} over {len(cells) - 1} moves")


def cmd_gen_map(args):
    rng = np.random.default_rng(args.seed)
    grid = generate_map(args.h, args.v, args.density, rng)
    comment = f"generated: {args.h}x{args.v}, density {args.density}, seed {args.seed}"
    print(f"Writing map to: {args.out}")
    Path(args.out).write_text(render_map(grid, comments=[comment]), encoding="utf-8")


def cmd_report(args):
    in_dir = Path(args.in_dir)
    report = report_from_dir(in_dir)
    print(format_report(report))
    for variant in (Variant.B_PACO_INIT_ONLY, Variant.C_UCH_REWARD_ONLY, Variant.D_IQL):
        for agg in report.aggregates:
            if agg.variant is variant:
                wins, pairs = paired_eta_wins(report, variant, agg.metric)
                if pairs:
                    print(f"variant {variant} ({agg.metric}) converged before a on {wins}/{pairs} seeds")
    reference = in_dir / "paper_reference.csv"
    print()
    print("Published reference values")
    for line in read_reference_table(reference if reference.exists() else REFERENCE_TABLE):
        print(line)


def cmd_plot_curves(args):
    # imported here so the other commands never load matplotlib
    from gridiql.plot_curves import plot_curves

    out_path = plot_curves(args.in_dir, args.out)
    print(f"Writing plot to: {out_path}")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gridiql",
        description="Q-learning path planning on raster maps with PACO Q-table seeding and UCH reward shaping.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="Log debug messages.")
    parser.add_argument("-q", "--quiet", action="store_true", help="Hide progress bars and info logs.")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="Run an experiment batch from a config file.")
    run.add_argument("-c", "--config", required=True, help="Path to the `key = value` config file.")
    run.add_argument("-o", "--out", default=None, help="Output directory (overrides output_dir in the config).")
    run.add_argument("-j", "--jobs", type=int, default=1, help="Number of worker processes.")
    run.set_defaults(func=cmd_run)

    validate = commands.add_parser("validate-map", help="Parse a map file and report its shortest paths.")
    validate.add_argument("map_file", help="Path to the map file.")
    validate.set_defaults(func=cmd_validate_map)

    gen = commands.add_parser("gen-map", help="Generate a random map with a reachable goal.")
    gen.add_argument("--h", type=int, required=True, help="Map width.")
    gen.add_argument("--v", type=int, required=True, help="Map height.")
    gen.add_argument("--density", type=float, required=True, help="Obstacle probability per cell.")
    gen.add_argument("--seed", type=int, default=0, help="Random seed.")
    gen.add_argument("-o", "--out", required=True, help="Path of the map file to write.")
    gen.set_defaults(func=cmd_gen_map)

    report = commands.add_parser("report", help="Re-aggregate the results.csv of a previous run.")
    report.add_argument("-i", "--in", dest="in_dir", required=True, help="Directory written by `run`.")
    report.set_defaults(func=cmd_report)

    plot = commands.add_parser("plot-curves", help="Plot mean learning curves from curves.csv.")
    plot.add_argument("-i", "--in", dest="in_dir", required=True, help="Directory written by `run`.")
    plot.add_argument("-o", "--out", default=None, help="PNG path (default: <in>/curves.png).")
    plot.set_defaults(func=cmd_plot_curves)
    return parser


def main(argv=None):
    """Main function to parse command-line arguments."""
    args = build_parser().parse_args(argv)
    if args.command == "run" and args.jobs < 1:
        print(f"Error: --jobs must be >= 1, got {args.jobs}", file=sys.stderr)
        sys.exit(1)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        args.func(args)
    except FileNotFoundError as e:
        print(f"Error: file not found: {e.filename}", file=sys.stderr)
        sys.exit(1)
    except GridIQLError as e:
        print(f"Error: {e}", file=sys.stderr)
        sys.exit(1)


if __name__ == "__main__":
    main()
