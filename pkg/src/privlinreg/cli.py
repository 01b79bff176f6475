"""Command line interface for privlinreg."""

import argparse
import logging
import sys
import warnings
from typing import List, Optional

from .core.config import OUTPUT_DIR_ENV, ExperimentConfig
from .core.data_model import (
    adjacency_params,
    closed_form_solution,
    format_dataset,
    make_adjacent,
    perturbed_local,
    stack,
)
from .core.engine import Scenario
from .core.errors import PrivLinRegError, RegimeViolation
from .core.experiments import mean_error, run_trials, sweep
from .core.privacy_audit import audit
from .core.projection import check_containment
from .core.schedules import BudgetInputs, ScheduleParams, regime_summary
from .core.topology import format_graph
from .utils.provenance import provenance_info, write_frame, write_text

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_FAILED = 3


def _load_config(args) -> ExperimentConfig:
    return ExperimentConfig.from_file(args.config)


def _beta_star(scenario: Scenario):
    return closed_form_solution(*stack(scenario.dataset))


def _print_provenance(config_hash: str) -> None:
    info = provenance_info(config_hash)
    print("\nProvenance:")
    print(f"Config hash: {info['config_hash']}")
    print(f"Package: {info['package']} {info['version']}")
    print(f"Generator: {info['generator']}")


def generate_data(args) -> int:
    """Write the dataset and graph files described by the configuration."""
    config = _load_config(args)
    graph = config.build_graph()
    dataset = config.build_dataset(graph.k)
    beta_star = closed_form_solution(*stack(dataset))
    bounds = adjacency_params(dataset)

    output_dir = config.output_dir(args.output_dir)
    digest = config.config_hash
    dataset_path = write_text(
        format_dataset(dataset), output_dir / "dataset.txt", digest, args.overwrite
    )
    graph_path = write_text(format_graph(graph), output_dir / "graph.txt", digest, args.overwrite)

    print(f"Generated {dataset.k} nodes, {dataset.n} rows, {dataset.m} features")
    print(f"Data saved to: {dataset_path.absolute()}")
    print(f"Graph saved to: {graph_path.absolute()}")
    print(f"delta_X: {bounds.delta_x!r}")
    print(f"delta_y: {bounds.delta_y!r}")
    print(f"beta*: {' '.join(repr(float(v)) for v in beta_star)}")
    _print_provenance(digest)
    return EXIT_OK


def run_simulation(args) -> int:
    """Run R trials and write the trajectory dumps and the mean error series."""
    private = not args.baseline
    config = _load_config(args).with_overrides(
        "cli", mode="private" if private else "baseline", zero_noise=args.zero_noise
    )
    scenario = config.build_scenario()
    beta_star = _beta_star(scenario)
    if private:
        check_containment(scenario.region, beta_star)

    mode = "private" if private else "baseline"
    print(f"Running {config.trials} {mode} trials of {scenario.rounds} rounds...")
    trajectories = run_trials(
        scenario, config.seeds, private=private, zero_noise=args.zero_noise, workers=config.workers
    )
    series = mean_error(trajectories, beta_star)

    output_dir = config.output_dir(args.output_dir)
    digest = config.config_hash
    if args.dump_all:
        for index, trajectory in enumerate(trajectories):
            path = output_dir / f"trajectory_{index}.csv"
            write_frame(trajectory.to_frame(), path, digest, args.overwrite)
    else:
        path = output_dir / "trajectory.csv"
        write_frame(trajectories[0].to_frame(), path, digest, args.overwrite)
    series_path = write_frame(series.to_frame(), output_dir / "series.csv", digest, args.overwrite)

    final = float(series.values[-1])
    print(f"Final mean error: {final!r}")
    print(f"Series saved to: {series_path.absolute()}")
    _print_provenance(digest)

    threshold = config.error_threshold
    if threshold is not None and final > threshold:
        print(f"Final mean error exceeds the threshold {threshold!r}")
        return EXIT_FAILED
    return EXIT_OK


def audit_privacy(args) -> int:
    """Audit R private trajectories against an adjacent dataset."""
    base = _load_config(args)
    node, perturbation = base.audit_settings()
    node = args.node if args.node is not None else node
    perturbation = args.perturbation or perturbation
    config = base.with_overrides("cli", audit_node=node, perturbation=perturbation)

    scenario = config.build_scenario()
    bounds = adjacency_params(scenario.dataset)
    replacement = perturbed_local(scenario.dataset.local(node), perturbation, bounds, config.seed)
    adjacent = make_adjacent(scenario.dataset, node, replacement, bounds)
    inputs = BudgetInputs.from_dataset(scenario.dataset, scenario.region, scenario.rounds)

    print(f"Auditing {config.trials} trajectories, node {node} perturbed by {perturbation}...")
    trajectories = run_trials(scenario, config.seeds, workers=config.workers)
    report = audit(
        trajectories,
        scenario.dataset,
        adjacent,
        scenario.weights,
        scenario.region,
        scenario.params,
        inputs,
    )

    output_dir = config.output_dir(args.output_dir)
    digest = config.config_hash
    write_frame(report.to_frame(), output_dir / "audit.csv", digest, args.overwrite)
    summary_path = write_frame(
        report.summary_frame(), output_dir / "audit_summary.csv", digest, args.overwrite
    )

    print(f"Total realized loss: {report.total_realized!r}")
    print(f"Epsilon (formula): {report.budget_formula!r}")
    print(f"Epsilon (sum): {report.budget_sum!r}")
    if report.regime_violation:
        print("Schedule is outside the closed-form regime; compared against the sum only")
    print(f"Verdict: {report.verdict}")
    print(f"Report saved to: {summary_path.absolute()}")
    _print_provenance(digest)
    return EXIT_FAILED if report.regime_violation or not report.passed else EXIT_OK


def compute_budget(args) -> int:
    """Print the closed-form budget and the per-step sum."""
    params = ScheduleParams(
        c_alpha=args.c_alpha,
        d_alpha=args.d_alpha,
        e_alpha=args.e_alpha,
        c_v=args.c_v,
        d_v=args.d_v,
        e_v=args.e_v,
    )
    inputs = BudgetInputs(
        rounds=args.rounds,
        m=args.m,
        k=args.k,
        n_max=args.n_max,
        delta_x=args.delta_x,
        delta_y=args.delta_y,
        b_omega=args.b_omega,
    )
    summary = regime_summary(params, inputs, force=args.force)
    if summary.epsilon_formula is not None:
        print(f"epsilon: {summary.epsilon_formula!r}")
    print(f"epsilon_sum: {summary.epsilon_sum!r}")
    print(f"epsilon_limit: {summary.epsilon_limit!r}")
    failures = summary.regime.failures()
    for failure in failures:
        print(f"regime {failure}")
    if not summary.regime.closed_form_valid and not args.force:
        print("Error: closed-form budget does not apply (pass --force to print it anyway)")
        return EXIT_FAILED
    return EXIT_OK


def sweep_schedules(args) -> int:
    """Cartesian sweep over the listed schedule values."""
    config = _load_config(args)
    scenario = config.build_scenario()
    beta_star = _beta_star(scenario)
    fit_window, test_window, slack = config.envelope_settings()
    grid = config.schedule_grid()
    points = 1
    for values in grid.values():
        points *= len(values)

    print(f"Sweeping {points} schedule points with {config.trials} trials each...")
    with warnings.catch_warnings():
        # Regime status is reported per row.
        warnings.simplefilter("ignore")
        results = sweep(
            scenario,
            grid,
            config.trials,
            config.seeds,
            beta_star,
            BudgetInputs.from_dataset(scenario.dataset, scenario.region, scenario.rounds),
            fit_window,
            test_window,
            slack,
            workers=config.workers,
        )

    output_path = config.output_dir(args.output_dir) / "sweep.csv"
    write_frame(results, output_path, config.config_hash, args.overwrite)
    passed = int((results["envelope_verdict"] == "pass").sum())
    print(f"{passed}/{len(results)} points within the growth envelope")
    print(f"Results saved to: {output_path.absolute()}")
    _print_provenance(config.config_hash)
    return EXIT_OK


def _add_common(parser: argparse.ArgumentParser, needs_config: bool = True) -> None:
    if needs_config:
        parser.add_argument("-c", "--config", type=str, required=True, help="Experiment INI file")
        parser.add_argument(
            "-o",
            "--output-dir",
            type=str,
            default=None,
            help=f"Output directory (default: [run] output_dir, ${OUTPUT_DIR_ENV}, or results)",
        )
        parser.add_argument(
            "--overwrite", action="store_true", help="Replace existing output files"
        )
    parser.add_argument("-v", "--verbose", action="store_true", help="Enable verbose logging")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="privlinreg", description="Differentially private decentralized linear regression"
    )
    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    generate_parser = subparsers.add_parser("generate", help="Write the dataset and graph files")
    _add_common(generate_parser)

    run_parser = subparsers.add_parser("run", help="Simulate the private or baseline dynamics")
    mode = run_parser.add_mutually_exclusive_group(required=True)
    mode.add_argument("--private", action="store_true", help="Noisy projected dynamics")
    mode.add_argument("--baseline", action="store_true", help="Noise-free unprojected dynamics")
    run_parser.add_argument(
        "--zero-noise", action="store_true", help="Publish true states (private mode only)"
    )
    run_parser.add_argument("--dump-all", action="store_true", help="Dump every trial's trajectory")
    _add_common(run_parser)

    audit_parser = subparsers.add_parser("audit", help="Audit realized privacy loss")
    audit_parser.add_argument("--node", type=int, default=None, help="Node whose data is replaced")
    audit_parser.add_argument(
        "--perturbation",
        type=str,
        default=None,
        help="identity, negate-labels, negate-design, scale-labels:<f> or resample:<seed>",
    )
    _add_common(audit_parser)

    budget_parser = subparsers.add_parser("budget", help="Closed-form privacy budget")
    for name, default in (
        ("c-alpha", 1.0),
        ("d-alpha", 2.0),
        ("e-alpha", 1.0),
        ("c-v", 1.0),
        ("d-v", 1.0),
        ("e-v", 1.0),
        ("delta-x", 1.0),
        ("delta-y", 1.0),
        ("b-omega", 1.0),
    ):
        budget_parser.add_argument(
            f"--{name}", type=float, default=default, help=f"(default: {default})"
        )
    for name in ("rounds", "m", "k", "n-max"):
        budget_parser.add_argument(f"--{name}", type=int, default=1, help="(default: 1)")
    budget_parser.add_argument(
        "--force", action="store_true", help="Print the closed form outside its regime"
    )
    _add_common(budget_parser, needs_config=False)

    sweep_parser = subparsers.add_parser("sweep", help="Sweep listed schedule values")
    _add_common(sweep_parser)
    return parser


COMMANDS = {
    "generate": generate_data,
    "run": run_simulation,
    "audit": audit_privacy,
    "budget": compute_budget,
    "sweep": sweep_schedules,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Main CLI function."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE

    if args.command is None:
        parser.print_help()
        return EXIT_USAGE
    if getattr(args, "zero_noise", False) and args.baseline:
        print("Error: --zero-noise only applies to --private runs")
        return EXIT_USAGE

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except RegimeViolation as e:
        print(f"Error: {e}")
        return EXIT_FAILED
    except KeyboardInterrupt:
        print("\nInterrupted by user")
        return EXIT_ERROR
    except (PrivLinRegError, ValueError, OSError) as e:
        print(f"Error: {e}")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
