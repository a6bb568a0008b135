"""
This module provides the `GroundStateSolver` class: outer minimization of
the reduced functional Psi over the unit sphere S+ of X+, followed by the
ground state m(w*) and its diagnostics.

Descent is Riemannian steepest descent in the X inner product with the
normalization retraction w(alpha) = (w - alpha G) / ||w - alpha G|| and an
Armijo backtracking line search. Each line search starts from the
Barzilai-Borwein step of the previous move. Once Psi differences sink to the
rounding floor a step is accepted on the slope test
phi'(alpha) <= (1 - 2 c1) |phi'(0)| instead, which is what the Armijo
condition reduces to for a quadratic model, and a rejected trial is shortened
to the secant root of phi' rather than halved.
"""
import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np
from tqdm import tqdm

from src.energy import GridEnergy, StatePair
from src.errors import (
    ConditionCheckError,
    InnerMaximizationError,
    OuterConvergenceError,
    SolverFailure,
)
from src.nehari import InnerOptions, ReducedFunctional
from src.nonlinearity import SamplingConfig, check_conditions

logger = logging.getLogger("nehari")

# relative size of Psi differences treated as rounding noise
NOISE_FLOOR = 1e-12
# Barzilai-Borwein trial steps are clipped to this range times alpha0
MIN_STEP_RATIO = 1e-6
MAX_STEP_RATIO = 1e3
TRIVIAL_NORM = 1e-12
# Palais-Smale trace: growth factor and window flagged as unbounded iterates
UNBOUNDED_FACTOR = 10.0
UNBOUNDED_WINDOW = 20

ARMIJO = "armijo"
APPROXIMATE = "approximate"


@dataclass
class ArmijoOptions:
    c1: float = 1e-4
    backtrack: float = 0.5
    alpha0: float = 1.0
    max_backtracks: int = 60


@dataclass
class SolverOptions:
    """
    Parameters
    ----------
    tol_outer : float, optional
        Default is 1e-8. Stop when the tangent gradient norm of Psi is
        at or below this value.
    max_outer : int, optional
        Default is 500. Maximum number of descent steps per start.
    armijo : ArmijoOptions, optional
    restarts : int, optional
        Default is 5. Number of starts; start 0 uses the given or default
        direction, the others seeded random directions.
    seed : int, optional
        Default is 0.
    tol_inner : float, optional
        Default is 1e-10.
    max_iter_inner : int, optional
        Default is 200.
    start : {"eigen", "random"}, optional
        Default is "eigen". Direction of start 0 when none is given.
    skip_condition_check : bool, optional
        Default is False. Solve even if (F1)-(F8) spot checks fail.
    condition_sample : SamplingConfig, optional
    """

    tol_outer: float = 1e-8
    max_outer: int = 500
    armijo: ArmijoOptions = field(default_factory=ArmijoOptions)
    restarts: int = 5
    seed: int = 0
    tol_inner: float = 1e-10
    max_iter_inner: int = 200
    start: str = "eigen"
    skip_condition_check: bool = False
    condition_sample: SamplingConfig = field(default_factory=SamplingConfig)

    @property
    def inner_options(self):
        return InnerOptions(tol_inner=self.tol_inner, max_iter=self.max_iter_inner)


@dataclass
class Residuals:
    residual_pde_inf: float
    residual_manifold: float
    is_trivial: bool


@dataclass
class SolveReport:
    ground_state: StatePair
    energy: float
    s_final: float
    v_norm: float
    outer_iterations: int
    psi_history: List[float]
    grad_norm_history: List[float]
    residual_pde_inf: float
    residual_manifold: float
    converged: bool
    multistart_energies: List[float] = field(default_factory=list)
    state_norm_history: List[float] = field(default_factory=list)
    alpha_history: List[float] = field(default_factory=list)
    step_kinds: List[str] = field(default_factory=list)
    direction: Optional[np.ndarray] = None
    tol_outer: float = 1e-8
    restart_index: int = 0
    restart_seeds: List[int] = field(default_factory=list)


@dataclass
class PalaisSmaleTrace:
    status: str
    warnings: List[str]
    level: float
    final_grad_norm: float
    max_state_norm: float

    def to_text(self):
        text = "palais-smale {0}: level={1:.12g} grad={2:.3g} max|z|={3:.6g}".format(
            self.status, self.level, self.final_grad_norm, self.max_state_norm
        )
        if self.warnings:
            text += " warnings=" + ",".join(self.warnings)
        return text


def compute_residuals(energy, z):
    """
    Strong-form residual max_i |(-Lap_h u)_i - F_u| , |(Lap_h v)_i - F_v|
    and the manifold residual
    max(|<Phi'(z), z>|, max_e |<Phi'(z), (0, e)>|) / (1 + ||z||^2).
    """
    energy.check_state(z)
    norm = energy.norm(z)
    pointwise = energy.pointwise_residual(z)
    residual_pde_inf = float(np.max(np.abs(pointwise.as_vector()), initial=0.0))
    gradient = energy.euclidean_gradient(z)
    along_z = float(gradient.u @ z.u + gradient.v @ z.v)
    manifold = max(abs(along_z), float(np.max(np.abs(gradient.v), initial=0.0)))
    return Residuals(
        residual_pde_inf=residual_pde_inf,
        residual_manifold=manifold / (1.0 + norm ** 2),
        is_trivial=norm < TRIVIAL_NORM,
    )


def residuals(grid, spec, z):
    """`compute_residuals` for the discretized system."""
    return compute_residuals(GridEnergy(grid, spec), z)


class GroundStateSolver:
    """
    Minimizes Psi over S+ for an `EnergyFunctional` and returns the ground
    state m(w*).

    Parameters
    ----------
    energy : src.energy.EnergyFunctional
    options : SolverOptions or None, optional
    history : logging.Logger or None, optional
        Message-only logger receiving one tab-separated line per step.
    progress : bool, optional
        Default is False. Show a progress bar over restarts.
    """

    def __init__(self, energy, options=None, history=None, progress=False):
        self.energy = energy
        self.options = options if options is not None else SolverOptions()
        self.history = history
        self.progress = progress
        if self.history is not None:
            self.history.info("restart\titeration\tpsi\tgrad_norm\talpha\ts\tstep_kind")

    def initial_direction(self, w0=None, rng=None):
        if w0 is not None:
            u = w0.u if isinstance(w0, StatePair) else np.asarray(w0, dtype=float)
        elif self.options.start == "random":
            u = self.energy.sample_state(rng or np.random.default_rng(0)).u
        elif self.options.start == "eigen":
            u = self.energy.principal_direction()
        else:
            raise ValueError("unknown start mode: {0}".format(self.options.start))
        return u

    def initial_step(self, previous, w, gradient):
        """
        Barzilai-Borwein trial step <s, s> / <s, y> from the last accepted
        move s = w_k - w_{k-1}, y = G_k - G_{k-1}; `alpha0` on the first step
        or when the curvature <s, y> is not positive.
        """
        alpha0 = self.options.armijo.alpha0
        if previous is None:
            return alpha0
        move = w - previous[0]
        change = gradient - previous[1]
        curvature = self.energy.inner_plus(move, change)
        if not curvature > 0:
            return alpha0
        alpha = self.energy.inner_plus(move, move) / curvature
        return float(np.clip(alpha, MIN_STEP_RATIO * alpha0, MAX_STEP_RATIO * alpha0))

    def _line_search(self, reduced, w, value, gradient, grad_norm, alpha):
        armijo = self.options.armijo
        slope = grad_norm ** 2
        noise = NOISE_FLOOR * (1.0 + abs(value))
        for _ in range(armijo.max_backtracks):
            trial = reduced.retract(w - alpha * gradient)
            trial_value = reduced.value(trial)
            if abs(trial_value - value) > noise:
                if trial_value <= value - armijo.c1 * alpha * slope:
                    return trial, trial_value, alpha, ARMIJO
                alpha *= armijo.backtrack
                continue
            # Psi differences are rounding noise; decide on phi'(alpha)
            trial_gradient = reduced.gradient(trial)
            directional = -self.energy.inner_plus(trial_gradient, gradient)
            if directional <= (1.0 - 2.0 * armijo.c1) * slope:
                return trial, trial_value, alpha, APPROXIMATE
            # past the line minimum: secant root of phi', below alpha / 2
            alpha *= slope / (directional + slope)
        return None

    def descend(self, w0, restart_index=0):
        """
        Runs one descent from `w0` and returns its `SolveReport`
        (`converged` is False if `max_outer` was hit or the line search
        stalled).

        Raises
        ------
        SolverFailure
            If an inner maximization fails.
        """
        options = self.options
        reduced = ReducedFunctional(self.energy, options.inner_options)
        try:
            w = reduced.retract(np.asarray(w0, dtype=float))
            value = reduced.value(w)
            gradient = reduced.gradient(w)
        except InnerMaximizationError as exc:
            raise SolverFailure(exc.one_line(), cause=exc) from exc
        grad_norm = self.energy.norm_plus(gradient)

        psi_history = [value]
        grad_norm_history = [grad_norm]
        state_norm_history = [self.energy.norm(reduced.mhat(w).z)]
        alpha_history, step_kinds = [], []
        self._log_step(restart_index, 0, value, grad_norm, np.nan,
                       reduced.mhat(w).s, "start")

        converged = grad_norm <= options.tol_outer
        iteration = 0
        previous = None
        while not converged and iteration < options.max_outer:
            alpha = self.initial_step(previous, w, gradient)
            try:
                step = self._line_search(reduced, w, value, gradient, grad_norm, alpha)
            except InnerMaximizationError as exc:
                raise SolverFailure(exc.one_line(), cause=exc) from exc
            if step is None:
                logger.warning(
                    "line search stalled at iteration {0} (grad {1:.3g})".format(
                        iteration, grad_norm
                    )
                )
                break
            previous = (w, gradient)
            w, value, alpha, kind = step
            try:
                gradient = reduced.gradient(w)
            except InnerMaximizationError as exc:
                raise SolverFailure(exc.one_line(), cause=exc) from exc
            grad_norm = self.energy.norm_plus(gradient)
            iteration += 1
            mhat = reduced.mhat(w)
            psi_history.append(value)
            grad_norm_history.append(grad_norm)
            state_norm_history.append(self.energy.norm(mhat.z))
            alpha_history.append(alpha)
            step_kinds.append(kind)
            self._log_step(restart_index, iteration, value, grad_norm, alpha, mhat.s,
                           kind)
            converged = grad_norm <= options.tol_outer

        mhat = reduced.mhat(w)
        ground_state = mhat.z
        residual = compute_residuals(self.energy, ground_state)
        return SolveReport(
            ground_state=ground_state,
            energy=self.energy.phi(ground_state),
            s_final=mhat.s,
            v_norm=self.energy.norm_minus(mhat.v),
            outer_iterations=iteration,
            psi_history=psi_history,
            grad_norm_history=grad_norm_history,
            residual_pde_inf=residual.residual_pde_inf,
            residual_manifold=residual.residual_manifold,
            converged=converged,
            state_norm_history=state_norm_history,
            alpha_history=alpha_history,
            step_kinds=step_kinds,
            direction=w,
            tol_outer=options.tol_outer,
            restart_index=restart_index,
        )

    def _log_step(self, restart, iteration, value, grad_norm, alpha, s, kind):
        logger.debug(
            "restart {0} step {1}: psi={2:.15g} grad={3:.3g} alpha={4:.3g}".format(
                restart, iteration, value, grad_norm, alpha
            )
        )
        if self.history is not None:
            self.history.info(
                "{0}\t{1}\t{2:.17g}\t{3:.6g}\t{4:.6g}\t{5:.17g}\t{6}".format(
                    restart, iteration, value, grad_norm, alpha, s, kind
                )
            )

    def solve(self, w0=None):
        """
        Runs `restarts` descents and returns the minimum-energy converged
        report, with `multistart_energies` listing the final energy of every
        start in seed order.

        Raises
        ------
        OuterConvergenceError
            If no start converged; carries the lowest partial report.
        SolverFailure
            If every start failed in the inner maximizer.
        """
        options = self.options
        if options.restarts < 1:
            raise ValueError("restarts must be >= 1")
        seeds = np.random.SeedSequence(options.seed).spawn(options.restarts)
        reports, failures, energies = [], [], []
        for index, seed in enumerate(tqdm(seeds, disable=not self.progress)):
            rng = np.random.default_rng(seed)
            if index == 0:
                start = self.initial_direction(w0, rng)
            else:
                start = self.energy.sample_state(rng).u
            try:
                report = self.descend(start, restart_index=index)
            except SolverFailure as exc:
                logger.warning("restart {0} failed: {1}".format(index, exc.reason))
                failures.append(exc)
                energies.append(np.nan)
                continue
            logger.info(
                "restart {0}: energy={1:.15g} iterations={2} converged={3}".format(
                    index, report.energy, report.outer_iterations, report.converged
                )
            )
            reports.append(report)
            energies.append(report.energy)

        if not reports:
            raise SolverFailure(
                "all {0} starts failed: {1}".format(len(failures), failures[0].reason),
                cause=failures[0],
            )
        converged = [report for report in reports if report.converged]
        pool = converged if converged else reports
        best = min(pool, key=lambda report: report.energy)
        best.multistart_energies = energies
        best.restart_seeds = [int(seed.generate_state(1)[0]) for seed in seeds]
        if not converged:
            raise OuterConvergenceError(
                "no start reached tol_outer={0:g} within {1} steps "
                "(best gradient {2:.3g})".format(
                    options.tol_outer, options.max_outer, best.grad_norm_history[-1]
                ),
                report=best,
            )
        logger.info(
            "ground state energy {0:.15g} (restart {1}, s={2:.12g})".format(
                best.energy, best.restart_index, best.s_final
            )
        )
        return best


def _grid_starting_options(w0, opts):
    if isinstance(w0, dict):
        opts = replace(
            opts, start=w0.get("mode", opts.start), seed=w0.get("seed", opts.seed)
        )
        return None, opts
    return w0, opts


def minimize_psi(grid, spec, w0=None, opts=None, history=None, progress=False):
    """
    Ground state of the discretized system via the two-step reduction.

    Parameters
    ----------
    grid : src.mesh.Grid
    spec : src.nonlinearity.NonlinearitySpec
    w0 : np.ndarray or StatePair or dict or None, optional
        Initial direction, or `{"mode": "eigen" | "random", "seed": int}`.
    opts : SolverOptions or None, optional

    Returns
    -------
    SolveReport

    Raises
    ------
    ConfigError
        `CONFIG_INVALID` for p <= 2 or a non-positive weight.
    ConditionCheckError
        If the (F1)-(F8) spot checks fail and the check is not skipped.
    OuterConvergenceError, SolverFailure
    """
    opts = opts if opts is not None else SolverOptions()
    w0, opts = _grid_starting_options(w0, opts)
    spec.validate(grid.coordinates)
    if opts.skip_condition_check:
        logger.warning("condition check skipped; solving without (F1)-(F8) gate")
    else:
        report = check_conditions(spec, opts.condition_sample, grid=grid)
        if not report.passed:
            raise ConditionCheckError(
                "conditions failed: {0}".format(", ".join(report.failed())),
                report=report,
            )
    solver = GroundStateSolver(GridEnergy(grid, spec), opts, history=history,
                               progress=progress)
    return solver.solve(w0)


def palais_smale_trace(report, tol=None):
    """
    Reads a `SolveReport` as a Palais-Smale sequence: bounded levels,
    gradients vanishing to `tol`, bounded iterates m(w_k).

    Returns
    -------
    PalaisSmaleTrace
        `status` is "pass" or "warn"; `warnings` holds MONOTONICITY,
        UNBOUNDED and/or NOT_CONVERGED.
    """
    psi = np.asarray(report.psi_history, dtype=float)
    grads = np.asarray(report.grad_norm_history, dtype=float)
    norms = np.asarray(report.state_norm_history, dtype=float)
    if len(psi) < 2:
        raise ValueError("Palais-Smale trace needs at least 2 iterates")
    tol = report.tol_outer if tol is None else tol

    warnings = []
    noise = NOISE_FLOOR * (1.0 + np.abs(psi[:-1]))
    if np.any(np.diff(psi) > noise):
        warnings.append("MONOTONICITY")
    unbounded = not np.all(np.isfinite(psi)) or not np.all(np.isfinite(norms))
    for start in range(len(norms)):
        window = norms[start : start + UNBOUNDED_WINDOW + 1]
        if norms[start] > 0 and np.max(window) >= UNBOUNDED_FACTOR * norms[start]:
            unbounded = True
            break
    if unbounded:
        warnings.append("UNBOUNDED")
    if not grads[-1] <= tol:
        warnings.append("NOT_CONVERGED")

    trace = PalaisSmaleTrace(
        status="warn" if warnings else "pass",
        warnings=warnings,
        level=float(psi[-1]),
        final_grad_norm=float(grads[-1]),
        max_state_norm=float(np.max(norms)) if len(norms) else np.nan,
    )
    for warning in warnings:
        logger.warning("Palais-Smale trace: {0}".format(warning))
    return trace
