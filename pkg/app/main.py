import argparse
import dataclasses
import os
import sys
import time

import logging
from logging.handlers import TimedRotatingFileHandler

from pathlib import Path

import numpy as np
import psutil

from helpers import __version__
from helpers.benchmarks import (
    BENCHMARK_AMPLITUDES,
    benchmark_connection,
    exact_tangent_holonomy,
    frames_from_transfer_model,
    tangent_frame_loop,
)
from helpers.configs import Config
from helpers.correction import EffectiveGate
from helpers.errors import HolokitError, UsageError
from helpers.linalg import eigenphases
from helpers.logging import SQLiteHandler
from helpers.reports import (
    SummaryRecord,
    build_report,
    load_gate,
    load_transfer_matrices,
    write_csv,
    write_report,
)
from helpers.sqlite import SQLite
from helpers.studies import (
    abelian_study,
    connection_convergence,
    correction_study,
    frame_convergence,
    gauge_study,
    noise_study,
    rho_grid,
)
from helpers.transport import Frame, estimate_holonomy, max_projector_step


STUDIES = (
    "reconstruct",
    "gauge-test",
    "converge-connection",
    "converge-frames",
    "abelian",
    "correct",
    "noise",
    "summary",
)

# config section each study reads its overrides into
SECTIONS = {
    "reconstruct": "reconstruct",
    "gauge-test": "gauge",
    "converge-connection": "connection",
    "converge-frames": "frames",
    "abelian": "abelian",
    "correct": "correction",
    "noise": "noise",
}

OVERRIDES = {
    "theta0": "theta0",
    "ladder": "ladder",
    "m": "m_values",
    "n": "n_values",
    "sequences": "sequences",
    "trials": "trials",
    "mu": "mu_levels",
    "kind": "kind",
    "fixed_eta": "fixed_eta",
    "check_steps": "check_steps",
    "method": "method",
    "convention": "convention",
    "rank": "rank",
    "steps": "steps",
}

# reference invariants of the default benchmark
CONNECTION_EIGENPHASE = 0.70134
CONNECTION_WILSON_TRACES = (1.52795, 0.33464, -1.01663)
INVARIANT_TOL = 1e-3
CONDITIONING_SLOPE = 0.36445


@dataclasses.dataclass
class Outcome:
    result: object
    checks: list
    tables: dict = dataclasses.field(default_factory=dict)


check = SummaryRecord.check


# ################################################################################
# sub routines


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="master seed (default: 0)")
    common.add_argument("--config", help="yaml config file (default: config.yml)")
    common.add_argument("--out", help="output directory, wins over HOLOKIT_OUT")
    common.add_argument("--workers", type=int, help="worker threads per study")
    common.add_argument(
        "--log-level",
        type=str.upper,
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
    )

    parser = argparse.ArgumentParser(
        prog="holokit",
        description="reconstruct non-abelian holonomies from sampled frames and validate them.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="study", required=True, metavar="study")

    p = subparsers.add_parser("reconstruct", parents=[common], help="one holonomy estimate")
    p.add_argument("--transfer", help="json file of transfer matrices")
    p.add_argument("--gate", help="json file holding one effective gate to correct")
    p.add_argument("--convention", choices=["left", "right"])
    p.add_argument("--method", choices=["qr", "svd"])
    p.add_argument("--rank", type=int, help="logical rank m of a transfer model")
    p.add_argument("--steps", type=int, help="steps of the default tangent loop")
    p.add_argument("--theta0", type=float)

    p = subparsers.add_parser("gauge-test", parents=[common], help="gauge covariance")
    p.add_argument("--m", type=int, nargs="+")
    p.add_argument("--n", type=int, nargs="+")
    p.add_argument("--sequences", type=int)

    p = subparsers.add_parser(
        "converge-connection", parents=[common], help="connection benchmark convergence"
    )
    p.add_argument("--ladder", type=int, nargs="+")

    p = subparsers.add_parser("converge-frames", parents=[common], help="frame pipeline convergence")
    p.add_argument("--theta0", type=float)
    p.add_argument("--ladder", type=int, nargs="+")

    p = subparsers.add_parser("abelian", parents=[common], help="rank-1 phase limit")
    p.add_argument("--theta0", type=float)
    p.add_argument("--ladder", type=int, nargs="+")
    p.add_argument("--check-steps", type=int)

    p = subparsers.add_parser("correct", parents=[common], help="feed-forward correction")
    p.add_argument("--ladder", type=int, nargs="+")

    p = subparsers.add_parser("noise", parents=[common], help="overlap noise and conditioning")
    p.add_argument("--trials", type=int)
    p.add_argument("--mu", type=float, nargs="+")
    p.add_argument("--kind", choices=["complex", "real"])
    p.add_argument("--theta0", type=float)
    p.add_argument("--fixed-eta", type=float)

    subparsers.add_parser("summary", parents=[common], help="every study, one verdict")

    return parser


def apply_arguments(config, args):
    if args.out:
        config.output.directory = args.out

    if args.workers is not None:
        config.process.workers = args.workers

    if args.log_level:
        config.logging.level = args.log_level

    if args.study not in SECTIONS:
        return

    section = getattr(config, SECTIONS[args.study])
    for flag, key in OVERRIDES.items():
        value = getattr(args, flag, None)

        if value is not None:
            setattr(section, key, tuple(value) if isinstance(value, list) else value)


def load_config(config, args):
    if args.config and not Path(args.config).exists():
        raise UsageError(f"config file {args.config} not found")

    sha256 = config.load(args.config)

    # flags > environment > file > defaults
    config.apply_environment()
    apply_arguments(config, args)

    if args.seed < 0:
        raise UsageError(f"seed must be non-negative, got {args.seed}")

    config.validate()
    config.output_path.mkdir(parents=True, exist_ok=True)

    return sha256


def setup_logging(config, sqlite):
    # set up logging
    console_handler = logging.StreamHandler()
    console_handler.setLevel(logging.INFO)

    file_handler = TimedRotatingFileHandler(
        config.output_path / config.logging.filename, when="midnight", backupCount=3
    )
    file_handler.setLevel(logging.DEBUG)
    sqlite_handler = SQLiteHandler(sqlite)

    logging.basicConfig(
        format=config.logging.format,
        level=logging.getLevelName(config.logging.level.upper()),
        handlers=[console_handler, file_handler, sqlite_handler],
        force=True,
    )

    # ... and silent the others
    for logger in ["sqlalchemy", "matplotlib", "numexpr"]:
        logging.getLogger(logger).setLevel(logging.WARNING)


def teardown_logging():
    root = logging.getLogger()

    for handler in root.handlers[:]:
        root.removeHandler(handler)
        handler.close()


def setup_process(config):
    # nice the process, posix only
    p = psutil.Process(os.getpid())

    if config.process.nice and psutil.POSIX:
        try:
            p.nice(config.process.nice)
        except psutil.AccessDenied:
            logging.warning(f"nice {config.process.nice} denied, keeping {p.nice()}.")

    logging.info(f"workers: {config.process.workers}, nice: {p.nice()}.")
    return p


def resident_memory(p):
    info = p.memory_info()
    return int(getattr(info, "peak_wset", info.rss))


# ################################################################################
# studies


def convergence_rows(report):
    return [
        {
            "N": n,
            "h": h,
            "error": error,
            "mu_min": mu,
            "unitarity_residual": residual,
            "max_projector_step": step,
        }
        for n, h, error, mu, residual, step in zip(
            report.partition_sizes,
            report.mesh_sizes,
            report.errors,
            report.mu_min_per_partition,
            report.unitarity_residuals,
            report.max_projector_steps,
        )
    ]


CONVERGENCE_FIELDS = ["N", "h", "error", "mu_min", "unitarity_residual", "max_projector_step"]


def run_reconstruct(config, seed, args):
    cfg, tol = config.reconstruct, config.tolerances
    transfer = getattr(args, "transfer", None)
    gate_file = getattr(args, "gate", None)

    if transfer:
        matrices = load_transfer_matrices(transfer)
        d = matrices[0].shape[0]

        if cfg.rank > d:
            raise UsageError(f"rank {cfg.rank} exceeds the transfer dimension {d}")

        input_frame = Frame(np.eye(d, cfg.rank, dtype=np.complex128), tol.frame)
        path = frames_from_transfer_model(matrices, input_frame, cfg.method, tol=tol.singular)
    else:
        path = tangent_frame_loop(cfg.theta0, cfg.steps)

    gate = None
    if gate_file:
        gate = EffectiveGate(load_gate(gate_file), cfg.convention, tol=tol.gate)

    estimate = estimate_holonomy(path, tol=tol.singular, gate=gate)
    result = {
        "source": "transfer" if transfer else "tangent-loop",
        "steps": path.steps,
        "closed_subspace": path.closed_subspace,
        "holonomy": estimate.holonomy,
        "base_frame_holonomy": estimate.base_frame_holonomy,
        "endpoint_identification": estimate.endpoint_identification,
        "eigenphases": estimate.eigenphase_list,
        "wilson_traces": estimate.wilson_traces,
        "mu_min": estimate.mu_min,
        "unitarity_residual": estimate.unitarity_residual,
        "max_projector_step": max_projector_step(path),
        "convention": None if gate is None else gate.convention,
        "corrected_gate": estimate.corrected_gate,
    }

    checks = [check("unitarity_residual", estimate.unitarity_residual, 0.0, tol.unitary)]
    return Outcome(result, checks)


def run_gauge(config, seed, args):
    cfg = config.gauge
    report = gauge_study(cfg.m_values, cfg.n_values, cfg.sequences, seed, config.process.workers)

    checks = [
        check("max_covariance_residual", report.max_covariance_residual, 0.0, 1e-12),
        check("max_unitarity_residual", report.max_unitarity_residual, 0.0, 1e-12),
    ]
    fields = list(report.cells[0])

    return Outcome(report, checks, {"gauge.csv": (fields, report.cells)})


def run_connection(config, seed, args):
    cfg = config.connection
    report = connection_convergence(
        benchmark_connection(cfg.amplitudes),
        cfg.ladder,
        cfg.refine_factor,
        cfg.extrapolate,
        tuple(cfg.interval),
        seed,
        config.process.workers,
    )

    checks = [check("fitted_order", report.fitted_order, 2.0, 0.1)]

    benchmark = np.allclose(cfg.amplitudes, BENCHMARK_AMPLITUDES) and np.allclose(
        cfg.interval, (0.0, 2.0 * np.pi)
    )
    if benchmark:
        low, high = report.reference_eigenphases
        checks += [
            check("eigenphase_low", low, -CONNECTION_EIGENPHASE, INVARIANT_TOL),
            check("eigenphase_high", high, CONNECTION_EIGENPHASE, INVARIANT_TOL),
        ]
        checks += [
            check(f"wilson_trace_{r}", trace.real, expected, INVARIANT_TOL)
            for r, (trace, expected) in enumerate(
                zip(report.reference_wilson_traces, CONNECTION_WILSON_TRACES), start=1
            )
        ]

    return Outcome(report, checks, {"convergence.csv": (CONVERGENCE_FIELDS, convergence_rows(report))})


def run_frames(config, seed, args):
    cfg = config.frames
    report = frame_convergence(cfg.theta0, cfg.ladder, seed, config.process.workers)

    checks = [check("fitted_order", report.fitted_order, 2.0, 0.1)]

    exact = eigenphases(exact_tangent_holonomy(cfg.theta0))
    checks += [
        check(f"eigenphase_{j}", value, expected, INVARIANT_TOL)
        for j, (value, expected) in enumerate(zip(report.finest_eigenphases, exact))
    ]

    resolved = [
        mu for n, mu in zip(report.partition_sizes, report.mu_min_per_partition) if n >= 80
    ]
    if resolved:
        # passes iff mu_min >= 0.9
        checks.append(check("mu_min_at_80_plus", min(resolved), 1.0, 0.1))

    if report.partition_sizes and report.partition_sizes[-1] >= 640:
        checks.append(check("finest_error", report.finest_error, 0.0, 1e-4))

    return Outcome(report, checks, {"convergence.csv": (CONVERGENCE_FIELDS, convergence_rows(report))})


def run_abelian(config, seed, args):
    cfg = config.abelian
    report = abelian_study(cfg.theta0, cfg.ladder, cfg.check_steps, config.process.workers)

    checks = [
        check("check_phase_error", report.check_phase_error, 0.0, 1e-4),
        # passes iff the slope lies in [0.9, 3.1]
        check("fitted_order", report.fitted_order, 2.0, 1.1),
    ]
    rows = [
        {"N": n, "h": 2.0 * np.pi / n, "error": error}
        for n, error in zip(report.partition_sizes, report.errors)
    ]

    return Outcome(report, checks, {"abelian.csv": (["N", "h", "error"], rows)})


def run_correction(config, seed, args):
    connection = config.connection
    report = correction_study(
        benchmark_connection(connection.amplitudes),
        config.correction.ladder,
        connection.refine_factor,
        connection.extrapolate,
        tuple(connection.interval),
        seed,
        config.process.workers,
    )

    def gap(order):
        if order is None or report.holonomy_order is None:
            return None
        return order - report.holonomy_order

    checks = [
        check("final_infidelity", report.final_infidelity, 0.0, 1e-9),
        check("left_order_gap", gap(report.left_order), 0.0, 0.1),
        check("right_order_gap", gap(report.right_order), 0.0, 0.1),
    ]

    fields = [
        "N",
        "holonomy_error",
        "left_error",
        "right_error",
        "left_infidelity",
        "right_infidelity",
    ]
    rows = [
        dict(zip(fields, values))
        for values in zip(
            report.partition_sizes,
            report.holonomy_errors,
            report.left_errors,
            report.right_errors,
            report.left_infidelities,
            report.right_infidelities,
        )
    ]

    return Outcome(report, checks, {"correction.csv": (fields, rows)})


def run_noise(config, seed, args):
    cfg = config.noise
    report = noise_study(
        tangent_frame_loop(cfg.theta0, cfg.baseline_steps),
        mu_levels=cfg.mu_levels,
        rhos=rho_grid(cfg.rho_start, cfg.rho_stop, cfg.per_decade),
        trials=cfg.trials,
        seed=seed,
        workers=config.process.workers,
        kind=cfg.kind,
        fixed_eta=cfg.fixed_eta,
        tol=config.tolerances.singular,
    )

    checks = [
        check("mean_slope", report.mean_slope, 1.0, 0.15),
        check("fixed_eta_monotone", float(report.fixed_eta_monotone), 1.0, 0.0),
        check("telescoping_violations", report.telescoping_violations, 0.0, 0.0),
        check("conditioning_slope", report.conditioning_slope, CONDITIONING_SLOPE, 0.15),
    ]

    noise_rows = [
        {"mu": mu, "rho": rho, "eta": rho * mu, "mean_error": error}
        for mu, errors in zip(report.conditioning_levels, report.mean_errors)
        for rho, error in zip(report.noise_ratios, errors)
    ]
    fixed_rows = [
        {
            "mu": mu,
            "inverse_mu": 1.0 / mu,
            "eta": report.fixed_eta,
            "mean_error": error,
            "rho_slope": slope,
        }
        for mu, error, slope in zip(
            report.conditioning_levels, report.fixed_eta_errors, report.fitted_slopes
        )
    ]

    return Outcome(
        report,
        checks,
        {
            "noise.csv": (["mu", "rho", "eta", "mean_error"], noise_rows),
            "fixed_eta.csv": (["mu", "inverse_mu", "eta", "mean_error", "rho_slope"], fixed_rows),
        },
    )


RUNNERS = {
    "reconstruct": run_reconstruct,
    "gauge-test": run_gauge,
    "converge-connection": run_connection,
    "converge-frames": run_frames,
    "abelian": run_abelian,
    "correct": run_correction,
    "noise": run_noise,
}


def write_outcome(config, study, seed, sha256, outcome):
    directory = config.output_path / study
    report = build_report(study, seed, config.to_dict(), sha256, outcome.result, outcome.checks)
    path = write_report(directory, report)

    for name, (fields, rows) in outcome.tables.items():
        write_csv(directory / name, fields, rows)

    logging.info(f"{study}: {report['status']}, report written to {path}.")
    return report, path


def run_study(config, study, seed, sha256=None, args=None):
    """Run one study (or every study for ``summary``) and write its files.

    Returns ``(report, report_path, checks)``.
    """
    if study not in STUDIES:
        raise UsageError(f"unknown study {study!r}")

    started = time.perf_counter()

    if study == "summary":
        checks, statuses = [], {}

        for name in RUNNERS:
            report, _, sub_checks = run_study(config, name, seed, sha256, None)
            statuses[name] = report["status"]
            checks += [dataclasses.replace(c, metric=f"{name}:{c.metric}") for c in sub_checks]

        rows = [dataclasses.asdict(c) for c in checks]
        outcome = Outcome(
            {"studies": statuses},
            checks,
            {"summary.csv": (["metric", "value", "expected", "tolerance", "status"], rows)},
        )

    else:
        outcome = RUNNERS[study](config, seed, args)

    report, path = write_outcome(config, study, seed, sha256, outcome)
    logging.debug(f"{study}: finished in {time.perf_counter() - started:.2f}s.")

    return report, path, outcome.checks


# ################################################################################
# main routine


def main(argv=None):
    args = build_parser().parse_args(argv)
    config = Config()

    try:
        sha256 = load_config(config, args)
    except UsageError as err:
        print(f"holokit: error: {err}", file=sys.stderr)
        return 2

    sqlite = SQLite(config.sqlite_uri, config.sqlite.echo)
    sqlite.update("config-sha256", sha256 or "")

    setup_logging(config, sqlite)
    logging.info(f"holokit {__version__}, {args.study} with seed {args.seed}, initialized!")

    p = setup_process(config)
    rss = resident_memory(p)

    started = time.perf_counter()
    status, exit_code, path, checks = "fail", 1, None, []

    try:
        report, path, checks = run_study(config, args.study, args.seed, sha256, args)
        status = report["status"]
        exit_code = 0 if status == "pass" else 1

        failed = [c.metric for c in checks if not c.passed]
        if failed:
            logging.error(f"{args.study}: {len(failed)} checks failed, {', '.join(failed)}!")
        else:
            logging.info(f"{args.study}: all {len(checks)} checks passed!")

    except UsageError as err:
        logging.error(f"{args.study}: {err}.")
        status, exit_code = "error", 2

    except HolokitError as err:
        logging.error(f"{args.study}: {err}.")
        status = "error"

    except Exception as err:
        logging.error(f"unexpected {err=}, {type(err)=}")
        status = "error"

    finally:
        run_id = sqlite.record_run(
            study=args.study,
            seed=args.seed,
            config_sha256=sha256,
            status=status,
            exit_code=exit_code,
            report_path=path,
            peak_rss=max(rss, resident_memory(p)),
            wall_seconds=time.perf_counter() - started,
        )
        sqlite.record_summary(run_id, checks)

        logging.info("sayonara!")
        teardown_logging()
        sqlite.close()

    return exit_code


# ################################################################################
# where it all begins


if __name__ == "__main__":
    sys.exit(main())
