# main.py - Command-line front end for the slotted-Aloha network toolkit
import argparse
import json
import logging
import math
import os
import sys

import numpy as np
import pandas as pd

import analytic
import simulator
import stability
import sweep_runner
from config_presets import PRESETS, get_preset, REVERSE_PRESET_ALIASES
from network_model import (
    ChannelSaturatedError,
    ConfigError,
    InfeasibleArrivalsError,
    OptimizationError,
    PermutationCapError,
    SimulationOverflowError,
    UnstableNetworkError,
    load_config,
)
from output_ledger import OutputLedger
from power_optimizer import (
    DEFAULT_STARTS,
    DelayWeights,
    max_d2d_rate,
    numeric_power_oracle,
    numeric_rate_search,
    optimal_powers,
)

LOGS_DIR = "logs"
LOG_FILE = "aloha_network.log"

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_UNSTABLE = 2
EXIT_INFEASIBLE = 3


class UsageError(Exception):
    pass


class CliParser(argparse.ArgumentParser):
    """ArgumentParser that reports usage errors with exit code 1 instead of exiting."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def setup_logging(verbose=False):
    logs_dir = os.environ.get("ALOHA_LOGS_DIR", LOGS_DIR)
    os.makedirs(logs_dir, exist_ok=True)

    console = logging.StreamHandler(sys.stderr)
    console.setLevel(logging.INFO if verbose else logging.WARNING)
    logging.basicConfig(
        level=logging.INFO,
        format='%(asctime)s - %(levelname)s - [%(module)s:%(lineno)d] - %(message)s',
        handlers=[
            logging.FileHandler(os.path.join(logs_dir, LOG_FILE)),
            console,
        ],
        force=True,
    )


def env_int(name, default):
    value = os.environ.get(name)
    if value is None:
        return default
    try:
        return int(value)
    except ValueError:
        raise UsageError(f"{name} must be an integer (got {value!r})") from None


def parse_floats(text):
    """'0.1,0.2,0.3' or 'start:stop:count' (inclusive linspace)."""
    try:
        if ":" in text:
            start, stop, count = text.split(":")
            return [float(v) for v in np.linspace(float(start), float(stop), int(count))]
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"cannot parse number list '{text}'") from None


def _require_config(args):
    if not args.config:
        raise ConfigError("--config <path> is required for this command")
    return load_config(args.config)


def _emit(ledger, frame, name, fmt):
    """Prints a table to stdout and writes it under the output directory."""
    if fmt == "json":
        print(frame.to_json(orient="records", indent=2))
    else:
        print(frame.to_string(index=False))
    return ledger.write_frame(frame, name, fmt)


def _finite(value):
    return None if value is None or not math.isfinite(value) else value


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_analyze(args):
    config = _require_config(args)
    ledger = OutputLedger(args.out)
    n = config.n_classes
    bounds = [analytic.single_class_bound(config, k) for k in range(n)]

    if n == 1 and config.classes[0].access_prob != 1:
        result = analytic.single_class_analysis(config)
        a, p = config.classes[0].arrival_rate, config.classes[0].access_prob
        frame = pd.DataFrame(
            {
                "class": [0],
                "success_prob": [result.success_prob],
                "mean_delay": [result.mean_delay],
                "load": [a / (p * result.success_prob)],
                "channel_share": [math.nan],
                "single_class_bound": bounds,
            }
        )
        summary = {"mode": "single-class", "closure_bound": result.closure_bound, "config": config.to_dict()}
    else:
        metrics = analytic.multi_class_metrics(config)
        residuals = analytic.lemma1_residuals(metrics, config)
        frame = pd.DataFrame(
            {
                "class": np.arange(n),
                "success_prob": metrics.success_prob,
                "mean_delay": metrics.mean_delay,
                "load": metrics.load,
                "channel_share": metrics.channel_share,
                "single_class_bound": bounds,
            }
        )
        summary = {
            "mode": "multi-class",
            "sum_residual": _finite(residuals.sum_residual),
            "pairwise_residual": _finite(residuals.pairwise_residual),
            "physical_identity_lhs": analytic.physical_identity_lhs(config, metrics),
            "physical_identity_rhs": analytic.physical_identity_rhs(config.alpha),
            "config": config.to_dict(),
        }
        logging.info(f"Channel-share residuals: sum={residuals.sum_residual:.3g}, pairwise={residuals.pairwise_residual:.3g}")

    _emit(ledger, frame, "analyze", args.format)
    ledger.write_json(summary, "analyze_summary")
    return EXIT_OK


def cmd_stability(args):
    config = _require_config(args)
    ledger = OutputLedger(args.out)
    if args.method == "theorem":
        verdict = stability.check_region(config)
    elif args.method == "permutation":
        verdict = stability.check_permutation_region(config, cap=args.cap)
    else:
        verdict = stability.check_feasibility(config)

    if args.method == "corollary":
        print("feasible" if verdict.stable else "infeasible")
    else:
        print("stable" if verdict.stable else "unstable")
    if verdict.witness_permutation is not None:
        print(f"witness permutation: {' '.join(str(c) for c in verdict.witness_permutation)}")
    if verdict.violated_class is not None:
        print(f"violated class: {verdict.violated_class}")
    if verdict.detail:
        print(verdict.detail)
    ledger.write_json(verdict.to_dict(), "stability")

    if verdict.stable:
        return EXIT_OK
    if args.method == "corollary":
        return EXIT_INFEASIBLE
    return EXIT_UNSTABLE


def cmd_optimize(args):
    config = _require_config(args)
    ledger = OutputLedger(args.out)
    weights = DelayWeights(tuple(parse_floats(args.weights))) if args.weights else DelayWeights.uniform(config.n_classes)
    allocation = optimal_powers(config, weights)

    frame = pd.DataFrame(
        {
            "class": np.arange(config.n_classes),
            "weight": weights.as_array(),
            "power": allocation.powers,
            "mean_delay": allocation.mean_delay,
        }
    )
    _emit(ledger, frame, "optimize", args.format)
    summary = {"allocation": allocation.to_dict(), "weights": list(weights.c)}
    print(f"objective: {allocation.objective:.12g}")

    if args.verify:
        oracle = numeric_power_oracle(config, weights, starts=args.starts, seed=args.seed)
        deviation = float(np.max(np.abs(oracle.powers - allocation.powers) / allocation.powers))
        summary["oracle"] = oracle.to_dict()
        summary["max_power_deviation"] = deviation
        summary["objective_gap"] = oracle.objective - allocation.objective
        print(f"oracle objective: {oracle.objective:.12g}, max relative power deviation: {deviation:.3g}")

    ledger.write_json(summary, "optimize_summary")
    return EXIT_OK


def cmd_max_rate(args):
    config = _require_config(args)
    ledger = OutputLedger(args.out)
    envelope = max_d2d_rate(config, d2d=args.d2d, cell=args.cell, d1_max=args.d1_max, d2_max=args.d2_max)
    summary = envelope.to_dict()
    print(f"max arrival rate of class {args.d2d}: {envelope.max_a1:.12g}")
    print(f"power ratio term: {envelope.power_ratio:.12g}, cellular share: {envelope.psi2_star:.6g}")

    if args.verify:
        rate, ratio = numeric_rate_search(config, d2d=args.d2d, cell=args.cell, d1_max=args.d1_max, d2_max=args.d2_max)
        summary["numeric_max_a1"] = rate
        summary["numeric_power_ratio"] = ratio
        summary["excess"] = rate - envelope.max_a1
        print(f"numeric search: {rate:.12g} at P_{args.d2d}/P_{args.cell} = {ratio:.6g}")

    ledger.write_json(summary, "max_rate")
    return EXIT_OK


def cmd_simulate(args):
    config = _require_config(args)
    ledger = OutputLedger(args.out)
    spec = simulator.SimulationSpec(
        config=config,
        target_links_per_class=args.links,
        slots=args.slots,
        warmup_fraction=args.warmup,
        mode=args.mode,
        seed=args.seed,
        replications=args.replications,
        saturated=args.saturated,
        record_links=args.record_links,
        trajectory_stride=args.stride,
        workers=args.workers,
        queue_capacity=args.queue_capacity,
    )
    result = simulator.run(spec)

    for k, replication in enumerate(result.replications):
        ledger.write_frame(simulator.trajectory_frame(replication, args.stride), f"trajectory_rep{k}", "csv")
    table = sweep_runner.simulation_table(result, config if args.compare_analytic else None)
    _emit(ledger, table, "simulation", args.format)
    ledger.write_json({**result.to_dict(), "config": config.to_dict()}, "simulation_summary")

    if args.record_links:
        records = [r.link_records for r in result.replications if r.link_records is not None]
        if records:
            ledger.write_frame(_conditional_table(config, pd.concat(records, ignore_index=True), args.saturated), "conditional_success", "csv")

    if result.no_data:
        logging.warning(f"No transmissions recorded for classes {list(result.no_data)}")
    if result.growing_classes:
        logging.warning(f"Queues of classes {list(result.growing_classes)} keep growing: the configuration looks unstable")
    return EXIT_OK


def _conditional_table(config, records, saturated):
    frames = []
    for cls, group in records.groupby("class", sort=True):
        binned = simulator.binned_conditional_success(group)
        binned.insert(0, "class", int(cls))
        if saturated:
            binned["analytic"] = analytic.conditional_success(config, binned["distance_mean"].to_numpy(), analyzed=int(cls))
        else:
            binned["analytic"] = math.nan
        frames.append(binned)
    return pd.concat(frames, ignore_index=True)


def cmd_sweep(args):
    config = _require_config(args)
    ledger = OutputLedger(args.out)
    spec = sweep_runner.SweepSpec(
        parameter=args.param,
        grid=tuple(parse_floats(args.grid)),
        outputs=tuple(o.strip() for o in args.outputs.split(",") if o.strip()),
    )
    frame = sweep_runner.run_sweep(config, spec)
    _emit(ledger, frame, "sweep", args.format)
    return EXIT_OK


def cmd_preset(args):
    preset = get_preset(args.name)
    ledger = OutputLedger(args.out)
    budget = None
    if not args.skip_simulation:
        budget = sweep_runner.SimulationBudget(
            slots=args.slots,
            replications=args.replications,
            links=args.links,
            mode=simulator.SimulationMode(args.mode),
            seed=args.seed,
            workers=args.workers,
            queue_capacity=args.queue_capacity,
        )
    frame = sweep_runner.run_preset(preset, budget)
    path = _emit(ledger, frame, preset.name, args.format)
    if args.gnuplot:
        if args.format != "csv":
            ledger.write_frame(frame, preset.name, "csv")
        ledger.write_text(sweep_runner.gnuplot_stub(preset, f"{preset.name}.csv"), f"{preset.name}.gp")
    logging.info(f"Preset {preset.name} (alias '{REVERSE_PRESET_ALIASES.get(preset.name)}') written to {path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def build_parser():
    common = CliParser(add_help=False)
    common.add_argument("--config", help="network config JSON file")
    common.add_argument("--out", default=os.environ.get("ALOHA_OUT_DIR", "results"), help="output directory")
    common.add_argument("--seed", type=int, default=env_int("ALOHA_SEED", 0), help="RNG seed (u64)")
    common.add_argument("--format", choices=["csv", "json"], default="csv", help="table output format")
    common.add_argument("--verbose", action="store_true", help="log INFO messages to stderr")

    sim = CliParser(add_help=False)
    sim.add_argument("--mode", choices=[m.value for m in simulator.SimulationMode], default="spatial")
    sim.add_argument("--slots", type=int, default=20_000)
    sim.add_argument("--links", type=int, default=400, help="target links per class")
    sim.add_argument("--replications", type=int, default=10)
    sim.add_argument("--workers", type=int, default=env_int("ALOHA_WORKERS", 1), help="replication processes")
    sim.add_argument(
        "--queue-capacity",
        type=int,
        default=simulator.DEFAULT_QUEUE_CAPACITY,
        help=f"initial per-source queue buffer, doubled on demand up to {simulator.MAX_QUEUE_CAPACITY}",
    )

    parser = CliParser(prog="aloha-network", description="Slotted-Aloha Poisson network analysis and simulation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", parents=[common], help="stationary metrics and channel-share identities")
    p.set_defaults(handler=cmd_analyze)

    p = sub.add_parser("stability", parents=[common], help="stability-region membership")
    p.add_argument("--method", choices=["theorem", "permutation", "corollary"], default="theorem")
    p.add_argument(
        "--cap",
        type=int,
        default=env_int("ALOHA_PERMUTATION_CAP", stability.DEFAULT_PERMUTATION_CAP),
        help="max classes for --method permutation",
    )
    p.set_defaults(handler=cmd_stability)

    p = sub.add_parser("optimize", parents=[common], help="delay-optimal transmit powers")
    p.add_argument("--weights", help="comma-separated delay weights (default: all 1)")
    p.add_argument("--verify", action="store_true", help="cross-check with the numeric optimizer")
    p.add_argument("--starts", type=int, default=DEFAULT_STARTS, help="numeric optimizer restarts")
    p.set_defaults(handler=cmd_optimize)

    p = sub.add_parser("max-rate", parents=[common], help="maximum D2D arrival rate under delay limits")
    p.add_argument("--d2d", type=int, default=0)
    p.add_argument("--cell", type=int, default=1)
    p.add_argument("--d1-max", type=float, default=3.0)
    p.add_argument("--d2-max", type=float, default=3.0)
    p.add_argument("--verify", action="store_true", help="cross-check with a numeric search over the power ratio")
    p.set_defaults(handler=cmd_max_rate)

    p = sub.add_parser("simulate", parents=[common, sim], help="Monte Carlo simulation")
    p.add_argument("--warmup", type=float, default=0.2, help="fraction of slots discarded")
    p.add_argument("--stride", type=int, default=100, help="trajectory thinning in slots")
    p.add_argument("--saturated", action="store_true", help="every source always backlogged")
    p.add_argument("--record-links", action="store_true", help="keep per-attempt link distances")
    p.add_argument("--compare-analytic", action="store_true", help="add closed-form columns and relative errors")
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("sweep", parents=[common], help="analytic parameter sweep")
    p.add_argument("--param", required=True, help="e.g. classes[1].arrival_rate or alpha")
    p.add_argument("--grid", required=True, help="'v1,v2,...' or 'start:stop:count'")
    p.add_argument("--outputs", default="success_prob,mean_delay", help=f"any of {', '.join(sweep_runner.METRICS)}")
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("preset", parents=[common, sim], help="data behind a preset experiment")
    p.add_argument("name", help=f"one of {', '.join(PRESETS)}")
    p.add_argument("--gnuplot", action="store_true", help="also write a gnuplot script stub")
    p.add_argument("--skip-simulation", action="store_true", help="analytic columns only")
    p.set_defaults(handler=cmd_preset)

    return parser


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_ERROR

    setup_logging(args.verbose)
    logging.info(f"--- RUN: {args.command} {json.dumps(vars(args), default=str)} ---")

    try:
        return args.handler(args)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_ERROR
    except (ConfigError, PermutationCapError) as e:
        logging.error(f"Configuration error: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
    except UnstableNetworkError as e:
        logging.error(f"Unstable network: {e}")
        print(f"unstable: {e}", file=sys.stderr)
        return EXIT_UNSTABLE
    except (InfeasibleArrivalsError, ChannelSaturatedError) as e:
        logging.error(f"Infeasible: {e}")
        print(f"infeasible: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (OptimizationError, SimulationOverflowError) as e:
        logging.error(f"{type(e).__name__}: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as e:
        logging.critical(f"Unexpected critical error: {e}", exc_info=True)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
