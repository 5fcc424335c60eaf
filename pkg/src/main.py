"""
wtransfer - Command-line entry point
Builds schedules, runs protocols and sweeps, fits decay laws and evaluates bounds
"""

import argparse
import logging
import math
import sys
from typing import List, Optional

from core.dynamics import run_multi, run_single
from core.errors import CapacityError, ConfigError, TransferError
from core.experiments import (ExperimentPlan, OutputFormat, emit, fit_power_law, load_records,
                              monte_carlo, record_distances, tradeoff)
from core.geometry import build_geometry, geometry_to_dict
from core.noise import LRMode, bound_report, delta_lr_bound
from core.ortho import block_size
from core.schedule import build_schedule, runtime_closed_form
from utils.config import ConfigManager
from utils.serialization import dump_amplitudes, write_csv, write_json

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

logger = logging.getLogger(__name__)

PROTOCOL_FLAGS = ("d", "alpha", "h0", "n", "variant", "beta", "epsilon", "m", "seed",
                  "convention", "center_rule", "redraw")


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with one subcommand per workflow"""
    common = argparse.ArgumentParser(add_help=False)
    proto = common.add_argument_group("protocol")
    proto.add_argument("--d", type=int, help="spatial dimension")
    proto.add_argument("--alpha", type=float, help="power-law exponent")
    proto.add_argument("--h0", type=float, help="base coupling strength")
    proto.add_argument("--n", type=int, help="number of hierarchy levels")
    proto.add_argument("--variant", choices=["nested", "disjoint", "physical"])
    proto.add_argument("--beta", type=float, help="gap prefactor")
    proto.add_argument("--epsilon", type=float, help="coupling noise strength")
    proto.add_argument("--m", type=int, help="number of qubits")
    proto.add_argument("--seed", type=int, help="64-bit reproducibility seed")
    proto.add_argument("--convention", choices=["uncorrected", "corrected"],
                       help="nested step angle convention")
    proto.add_argument("--center", dest="center_rule", choices=["bracket", "geometric"],
                       help="center coupling rule of gapped steps")
    proto.add_argument("--redraw", choices=["per-step", "static"], help="noise redraw policy")

    run_opts = common.add_argument_group("run")
    run_opts.add_argument("--config", help="JSON config file")
    run_opts.add_argument("--trials", type=int, help="trials per sweep point")
    run_opts.add_argument("--threads", type=int, help="worker threads (0 = all cores)")
    run_opts.add_argument("--gamma", type=float, help="confidence parameter of the noise bounds")
    run_opts.add_argument("--out", help="output file (stdout when omitted)")
    run_opts.add_argument("--format", choices=["csv", "json"], help="output format")
    run_opts.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    run_opts.add_argument("-q", "--quiet", action="store_true", help="warnings and errors only")

    parser = argparse.ArgumentParser(
        prog="wtransfer",
        description="Hierarchical long-range state transfer simulator",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    commands.add_parser("schedule", parents=[common], help="print the schedule and runtimes")

    run = commands.add_parser("run", parents=[common], help="run a single trial")
    run.add_argument("--trial", type=int, default=0, help="trial index (selects noise draws)")
    run.add_argument("--delta", action="store_true", help="record per-step propagator errors")
    run.add_argument("--dump", help="CSV of site probabilities after every step")

    sweep = commands.add_parser("sweep", parents=[common], help="Monte Carlo sweep")
    sweep.add_argument("--axis", required=True, choices=["n", "epsilon", "beta", "m"])
    sweep.add_argument("--values", required=True, type=float, nargs="+")

    fit = commands.add_parser("fit", parents=[common], help="power-law fit of a sweep")
    fit.add_argument("--input", required=True, help="sweep output (CSV or JSON)")

    trade = commands.add_parser("tradeoff", parents=[common], help="fidelity-speed tradeoff")
    trade.add_argument("--fidelity", required=True, type=float, nargs="+")
    trade.add_argument("--betas", required=True, type=float, nargs="+")

    bounds = commands.add_parser("bounds", parents=[common], help="analytic error bounds")
    bounds.add_argument("--realized", action="store_true",
                        help="also compute exact error-block norms")

    commands.add_parser("layout", parents=[common], help="dump the geometry as JSON")
    return parser


class TransferApp:
    """Dispatches parsed arguments to the library"""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.config = ConfigManager(args.config, strict=bool(args.config))
        self.config.apply_overrides("protocol", {
            key: getattr(args, key, None) for key in PROTOCOL_FLAGS
        })
        self.config.apply_overrides("experiment", {
            "trials": args.trials,
            "threads": args.threads,
            "format": args.format,
            "out": args.out,
            "gamma": args.gamma,
        })
        self.protocol = self.config.protocol_config()
        self.max_sites = self.config.get("limits", "max_sites")
        self.max_family_depth = self.config.get("limits", "max_family_depth")
        depth = block_size(self.protocol.m, self.protocol.d).bit_length() - 1
        if depth > self.max_family_depth:
            raise CapacityError(f"{self.protocol.m} qubits need family depth {depth}, above the configured limit")
        self.out = self.config.get("experiment", "out")
        self.fmt = OutputFormat(self.config.get("experiment", "format", "csv"))

    def run(self) -> int:
        """Run the selected command"""
        handler = getattr(self, f"_cmd_{self.args.command}")
        handler()
        return 0

    def _cmd_schedule(self):
        schedule = build_schedule(self.protocol)
        summary = runtime_closed_form(self.protocol, schedule)
        for step in schedule:
            print(f"{step.phase.value:8s} q={step.q:<3d} sign={step.sign:+d} "
                  f"coupling={step.coupling.strength:.12g} duration={step.duration:.17g}")
        print(f"total_runtime {summary.total:.17g} ({summary.total / math.pi:.12g} pi)")
        print(f"closed_form {summary.closed_form:.17g} "
              f"({'exact' if summary.exact else 'approximate'})")
        if summary.mp_bound is not None:
            print(f"mp_bound {summary.mp_bound:.17g}")
        if self.out:
            write_json(self.out, {"schedule": schedule.to_dict(), "summary": summary.to_dict()})

    def _cmd_run(self):
        cfg = self.protocol
        if cfg.m > 1:
            result = run_multi(cfg, self.args.trial, self.max_sites, self.max_family_depth)
            print(f"per_qubit {' '.join(f'{p:.17g}' for p in result.per_qubit)}")
            print(f"aggregate {result.aggregate:.17g}")
            print(f"runtime {result.runtime:.17g}")
            if self.out:
                write_json(self.out, vars(result))
            return

        result = run_single(cfg, self.args.trial, compute_delta=self.args.delta,
                            record_states=bool(self.args.dump), max_sites=self.max_sites)
        print(f"p_final {result.p_final:.17g}")
        print(f"runtime {result.runtime:.17g}")
        if result.per_step_uniformity:
            print(f"max_uniformity_deviation {max(result.per_step_uniformity):.3e}")
        if result.per_step_delta:
            print(f"per_step_delta {' '.join(f'{d:.6g}' for d in result.per_step_delta)}")
        if self.args.dump:
            dump_amplitudes(self.args.dump, result.snapshots)
        if self.out:
            data = vars(result).copy()
            data.pop("snapshots")
            write_json(self.out, data)

    def _cmd_sweep(self):
        plan = ExperimentPlan(
            base=self.protocol,
            axis=self.args.axis,
            values=list(self.args.values),
            trials=self.config.get("experiment", "trials"),
            gamma=self.config.get("experiment", "gamma"),
            out=self.out,
            fmt=self.fmt,
        )
        records = monte_carlo(plan, self.config.threads(), self.max_sites, self.max_family_depth)
        emit(records, plan.fmt, plan.out)

    def _cmd_fit(self):
        records = load_records(self.args.input)
        distances = record_distances(records, self.protocol, self.max_sites)
        result = fit_power_law(records, distances)
        print(f"a {result.a:.17g}")
        print(f"b {result.b:.17g}")
        print(f"stderr_a {result.stderr_a:.17g}")
        print(f"r_squared {result.r_squared:.17g}")
        print(f"points_used {result.points_used}")
        if self.out:
            write_json(self.out, result.to_dict())

    def _cmd_tradeoff(self):
        curves = [
            tradeoff(f, self.args.betas, self.protocol,
                     trials=self.config.get("experiment", "trials"),
                     threads=self.config.threads(), max_sites=self.max_sites)
            for f in self.args.fidelity
        ]
        if self.fmt is OutputFormat.JSON:
            write_json(self.out, [curve.to_dict() for curve in curves])
            return
        rows = (
            (curve.fidelity, row.beta, row.p_x, row.repeats, row.tau_lr, row.tau_eff, row.tau_star)
            for curve in curves for row in curve.rows
        )
        write_csv(self.out, ("F", "beta", "p_x", "repeats", "tau_lr", "tau_eff", "tau_star"), rows)

    def _cmd_bounds(self):
        gamma = self.config.get("experiment", "gamma")
        report = bound_report(self.protocol, gamma, realized=self.args.realized)
        data = {"config": self.protocol.to_dict(), "report": report.to_dict()}
        if report.herr_bounds:
            distance = (4.0 * self.protocol.beta + 3.0) * (2 ** self.protocol.n - 1)
            data["delta_lr_large_beta"] = delta_lr_bound(
                distance, self.protocol.beta, self.protocol.alpha, LRMode.LARGE_BETA)
        write_json(self.out, data)

    def _cmd_layout(self):
        layout, hierarchy = build_geometry(self.protocol, self.max_sites)
        write_json(self.out, geometry_to_dict(layout, hierarchy, self.protocol))


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code in (0, None) else 2

    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT, force=True)

    try:
        return TransferApp(args).run()
    except ConfigError as e:
        logger.error(f"Invalid configuration: {e}")
        parser.print_usage(sys.stderr)
        return 2
    except (TransferError, OSError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        return 1
    except Exception as e:
        logger.critical(f"Critical error: {e}", exc_info=True)
        return 1


if __name__ == "__main__":
    sys.exit(main())
