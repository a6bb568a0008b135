"""
Command line front-end.

    python -m src solve --config solver_configs/power_1d.cfg
    python -m src check-nonlinearity --config solver_configs/power_1d.cfg
    python -m src gradcheck --config solver_configs/power_1d.cfg
    python -m src oracle --config solver_configs/power_1d.cfg --count 20
    python -m src toy --c 4

Every failure prints one `CODE: reason` line on standard error and maps to
an exit code: 0 success, 1 gradient check tolerance exceeded, 2 condition
check failed, 3 no convergence or inner failure, 4 invalid config.
"""
import argparse
import json
import os
import sys
from datetime import datetime

import numpy as np
import pandas as pd

from src.config import Config, load_config
from src.energy import GridEnergy
from src.errors import (
    ConditionCheckError,
    ConfigError,
    InnerMaximizationError,
    NehariError,
    OracleError,
    OuterConvergenceError,
    SolverFailure,
)
from src.gradcheck import phi_gradcheck, psi_gradcheck
from src.nehari import NehariMap
from src.nonlinearity import check_conditions
from src.oracle import NewtonMultistart, ToyModel, toy_mhat
from src.solver import (
    GroundStateSolver,
    SolverOptions,
    minimize_psi,
    palais_smale_trace,
)
from src.utils import close_logger, history_logger, initialize_logger

EXIT_OK = 0
EXIT_GRADCHECK = 1
EXIT_CONDITIONS = 2
EXIT_NO_CONVERGENCE = 3
EXIT_CONFIG = 4

_EXIT_CODES = (
    (ConfigError, EXIT_CONFIG),
    (ConditionCheckError, EXIT_CONDITIONS),
    (OuterConvergenceError, EXIT_NO_CONVERGENCE),
    (SolverFailure, EXIT_NO_CONVERGENCE),
    (InnerMaximizationError, EXIT_NO_CONVERGENCE),
    (OracleError, EXIT_NO_CONVERGENCE),
)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="nehari",
        description="Ground states of -Lap u = F_u, Lap v = F_v via the "
        "generalized Nehari manifold.",
    )
    parser.add_argument("--verbosity", type=int, choices=(0, 1, 2), default=1)
    subparsers = parser.add_subparsers(dest="command", required=True)

    solve = subparsers.add_parser("solve", help="compute the ground state")
    solve.add_argument("--config", required=True)
    solve.add_argument("--out", default=None, help="overrides output.dir")

    check = subparsers.add_parser(
        "check-nonlinearity", help="spot-check (F1)-(F8) for the configured F"
    )
    check.add_argument("--config", default=None)
    check.add_argument("--count", type=int, default=None,
                       help="overrides solver.condition_sample.count")
    check.add_argument("--seed", type=int, default=None,
                       help="overrides solver.condition_sample.seed")

    gradcheck = subparsers.add_parser(
        "gradcheck", help="finite-difference checks of Phi' and Psi'"
    )
    gradcheck.add_argument("--config", default=None)
    gradcheck.add_argument("--count", type=int, default=20)
    gradcheck.add_argument("--seed", type=int, default=0)

    oracle = subparsers.add_parser(
        "oracle", help="critical points by damped Newton multistart"
    )
    oracle.add_argument("--config", default=None)
    oracle.add_argument("--count", type=int, default=20)
    oracle.add_argument("--seed", type=int, default=0)
    oracle.add_argument("--tol", type=float, default=1e-10)

    toy = subparsers.add_parser("toy", help="closed-form toy model demonstration")
    toy.add_argument("--c", type=float, default=1.0)
    toy.add_argument("--n-plus", type=int, default=1)
    toy.add_argument("--n-minus", type=int, default=1)
    toy.add_argument("--restarts", type=int, default=3)
    toy.add_argument("--seed", type=int, default=0)
    return parser


def _config(path):
    return load_config(path) if path is not None else Config()


def write_fields(grid, z, path):
    """fields.csv: header x[,y],u,v, one row per interior node."""
    columns = ["x", "y"][: grid.dim]
    frame = pd.DataFrame(grid.coordinates, columns=columns)
    frame["u"] = z.u
    frame["v"] = z.v
    frame.to_csv(path, index=False, float_format="%.17g")
    return frame


def summary_dict(report, config, trace=None):
    summary = {
        "energy": float(report.energy),
        "s_final": float(report.s_final),
        "v_norm": float(report.v_norm),
        "outer_iterations": int(report.outer_iterations),
        "residual_pde_inf": float(report.residual_pde_inf),
        "residual_manifold": float(report.residual_manifold),
        "converged": bool(report.converged),
        # failed starts are null
        "multistart_energies": [
            float(e) if np.isfinite(e) else None for e in report.multistart_energies
        ],
        "palais_smale": trace.status if trace is not None else "n/a",
        "palais_smale_warnings": list(trace.warnings) if trace is not None else [],
        "timestamp": datetime.now().strftime("%Y-%m-%d-%H-%M-%S"),
    }
    summary.update(config.echo())
    return summary


def _write_outputs(grid, report, config, output_dir):
    trace = None
    if len(report.psi_history) >= 2:
        trace = palais_smale_trace(report)
    write_fields(grid, report.ground_state, os.path.join(output_dir, "fields.csv"))
    with open(os.path.join(output_dir, "summary.json"), "w") as file_handle:
        json.dump(summary_dict(report, config, trace), file_handle, indent=2,
                  sort_keys=True)


def _solve(args):
    config = _config(args.config)
    if args.out is not None:
        config.output_dir = args.out
    config.validate()
    output_dir = config.output_dir
    os.makedirs(output_dir, exist_ok=True)
    logger = initialize_logger(output_dir, args.verbosity)
    history = history_logger("outer_history", output_dir)
    grid, spec = config.build_grid(), config.build_spec()
    logger.info("config: {0}".format(config.echo()))
    try:
        report = minimize_psi(grid, spec, opts=config.solver_options(),
                              history=history, progress=args.verbosity > 0)
    except OuterConvergenceError as exc:
        if exc.report is not None:
            _write_outputs(grid, exc.report, config, output_dir)
        raise
    finally:
        close_logger(history)
    _write_outputs(grid, report, config, output_dir)
    print(
        "energy={0:.15g} s={1:.12g} iterations={2} converged={3} "
        "residual_pde_inf={4:.3e}".format(
            report.energy, report.s_final, report.outer_iterations,
            report.converged, report.residual_pde_inf,
        )
    )
    return EXIT_OK


def _check_nonlinearity(args):
    config = _config(args.config)
    grid = config.build_grid()
    spec = config.build_spec()
    sample = config.condition_sample()
    if args.count is not None:
        sample.count = args.count
    if args.seed is not None:
        sample.seed = args.seed
    report = check_conditions(spec, sample, grid=grid)
    print(report.to_text())
    if not report.passed:
        raise ConditionCheckError(
            "conditions failed: {0}".format(", ".join(report.failed())), report=report
        )
    return EXIT_OK


def _gradcheck(args):
    config = _config(args.config).validate()
    energy = GridEnergy(config.build_grid(), config.build_spec())
    options = config.solver_options().inner_options
    checks = [
        phi_gradcheck(energy, count=args.count, seed=args.seed),
        psi_gradcheck(energy, count=args.count, seed=args.seed, options=options),
    ]
    for check in checks:
        print(check.to_text())
    failed = [check.name for check in checks if not check.passed]
    if failed:
        print(
            "GRADCHECK_FAILED: tolerance exceeded for {0}".format(", ".join(failed)),
            file=sys.stderr,
        )
        return EXIT_GRADCHECK
    return EXIT_OK


def _oracle(args):
    config = _config(args.config).validate()
    energy = GridEnergy(config.build_grid(), config.build_spec())
    points = NewtonMultistart(energy, tol=args.tol).run(
        args.count, seed=args.seed, progress=args.verbosity > 0
    )
    frame = points.to_frame(energy)
    print(frame.to_string(index=False, float_format=lambda value: "%.12g" % value))
    print(
        "{0} critical points, {1} diverged, {2} trivial; min energy {3}".format(
            len(points.points), points.n_diverged, points.n_trivial,
            points.min_energy,
        )
    )
    return EXIT_OK


def _toy(args):
    model = ToyModel(n_plus=args.n_plus, n_minus=args.n_minus, c=args.c)
    exact = toy_mhat(model, model.principal_direction())
    inner = NehariMap(model).maximize(model.principal_direction())
    print("m^(w): s={0:.15g} value={1:.15g} (closed form s={2:.15g} value={3:.15g})"
          .format(inner.s, inner.phi_value, exact.s, exact.value))
    options = SolverOptions(restarts=args.restarts, seed=args.seed)
    report = GroundStateSolver(model, options).solve()
    print("ground energy={0:.15g} (closed form {1:.15g}) s={2:.15g} |v|={3:.3g}"
          .format(report.energy, exact.value, report.s_final, report.v_norm))
    return EXIT_OK


_COMMANDS = {
    "solve": _solve,
    "check-nonlinearity": _check_nonlinearity,
    "gradcheck": _gradcheck,
    "oracle": _oracle,
    "toy": _toy,
}


def run(argv=None):
    """Parses `argv`, dispatches the subcommand and returns the exit code."""
    args = build_parser().parse_args(argv)
    if args.command != "solve":
        initialize_logger(None, args.verbosity)
    try:
        return _COMMANDS[args.command](args)
    except NehariError as exc:
        print(exc.one_line(), file=sys.stderr)
        for error_type, code in _EXIT_CODES:
            if isinstance(exc, error_type):
                return code
        return EXIT_NO_CONVERGENCE
    except ValueError as exc:
        # numerical preconditions violated by the inputs
        print("CONFIG_INVALID: {0}".format(exc), file=sys.stderr)
        return EXIT_CONFIG


def main():
    return run(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
