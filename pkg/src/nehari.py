"""
The generalized Nehari manifold machinery.

For w in X with w+ != 0 the inner maximizer m^(w) is the unique global
maximum of Phi on the half-space

    X^(w) = { s e + (0, v) : s >= 0, v in X- },   e = w+ / ||w+||,

so m^ maps X \\ X- onto the manifold M and its restriction m to the unit
sphere S+ of X+ is a homeomorphism with inverse z -> z+ / ||z+||. The
reduced functional is Psi = Phi o m on S+.

The maximizer alternates a concave Newton ascent in v at fixed s with a
safeguarded Newton/bisection search for the root of dPhi/ds at fixed v, and
ends each round with joint Newton steps on the first-order system in (s, v),
so that m^ and the gradient of Psi are accurate to rounding.
"""
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import List, Optional

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from src.energy import EnergyFunctional, GridEnergy, StatePair
from src.errors import InnerMaximizationError, SphereError

logger = logging.getLogger("nehari")

# ||w+|| at or below this counts as w in X-
XMINUS_THRESHOLD = 1e-14
# converged s at or below this contradicts ||m^(w)+|| >= delta > 0
DEGENERATE_S = 1e-10
SPHERE_TOLERANCE = 1e-10
ARMIJO_C1 = 1e-4
MAX_BRACKET_DOUBLINGS = 100
MAX_S_ITERATIONS = 200
MAX_BACKTRACKS = 30
MAX_POLISH_STEPS = 3
UNIQUENESS_TOLERANCE = 1e-6


@dataclass(frozen=True)
class InnerOptions:
    """
    Parameters
    ----------
    tol_inner : float, optional
        Default is 1e-10. Stop once the X-gradient of Phi restricted to
        R e (+) X- and the manifold residuals are below
        `tol_inner * (1 + |Phi|)`.
    max_iter : int, optional
        Default is 200. Maximum number of s/v alternations.
    max_newton : int, optional
        Default is 50. Maximum Newton iterations of one v-block ascent.
    """

    tol_inner: float = 1e-10
    max_iter: int = 200
    max_newton: int = 50


@dataclass
class InnerMaxResult:
    s: float
    v: np.ndarray
    z: StatePair
    phi_value: float
    iterations: int
    grad_norm: float
    converged: bool
    direction: np.ndarray = None
    manifold_residual: float = np.nan

    @property
    def warm_start(self):
        return self.s, self.v


class NehariMap:
    """
    Computes m^(w) for an `EnergyFunctional`.

    Parameters
    ----------
    energy : src.energy.EnergyFunctional
    options : InnerOptions or None, optional
    """

    def __init__(self, energy, options=None):
        self.energy = energy
        self.options = options if options is not None else InnerOptions()

    def direction(self, w):
        """e = w+ / ||w+||; raises W_IN_XMINUS when w+ vanishes."""
        u = w.u if isinstance(w, StatePair) else np.asarray(w, dtype=float)
        norm = self.energy.norm_plus(u)
        if not norm > XMINUS_THRESHOLD:
            raise InnerMaximizationError(
                "w lies in X- (||w+|| = {0:.3g})".format(norm), code="W_IN_XMINUS"
            )
        return u / norm

    def _state(self, e, s, v):
        return StatePair(s * e, v)

    def _phi(self, e, s, v):
        return self.energy.phi(self._state(e, s, v))

    def _v_gradient(self, e, s, v):
        r = self.energy.nonlinear_gradient(self._state(e, s, v))
        return -(self.energy.gram_minus @ v) - r.v

    def _ascend_v(self, e, s, v):
        """Maximizes the concave map v -> Phi(s e + (0, v))."""
        energy = self.energy
        for _ in range(self.options.max_newton):
            z = self._state(e, s, v)
            gradient = self._v_gradient(e, s, v)
            phi0 = energy.phi(z)
            bound = 0.01 * self.options.tol_inner * (1.0 + abs(phi0))
            if np.max(np.abs(gradient), initial=0.0) <= bound:
                break
            step, newton = None, True
            try:
                _, _, vv = energy.nonlinear_hessian(z)
                step = spsolve((energy.gram_minus + vv).tocsc(), gradient)
                step = np.atleast_1d(step)
                if not np.all(np.isfinite(step)) or gradient @ step <= 0:
                    step = None
            except (RuntimeError, ValueError, np.linalg.LinAlgError):
                step = None
            if step is None:
                # Sobolev-gradient ascent
                step, newton = energy.riesz_minus(gradient), False
            slope = float(gradient @ step)
            noise = 1e-13 * (1.0 + abs(phi0))
            alpha, accepted = 1.0, False
            for _ in range(MAX_BACKTRACKS):
                trial = self._phi(e, s, v + alpha * step)
                if trial >= phi0 + ARMIJO_C1 * alpha * slope:
                    accepted = True
                    break
                if newton and alpha == 1.0 and trial >= phi0 - noise:
                    # full Newton step inside the rounding floor
                    accepted = True
                    break
                alpha *= 0.5
            if not accepted:
                break
            v = v + alpha * step
        return v

    def _ds(self, e, s, v):
        r = self.energy.nonlinear_gradient(self._state(e, s, v))
        return s * self.energy.inner_plus(e, e) - float(r.u @ e)

    def _dds(self, e, s, v):
        uu, _, _ = self.energy.nonlinear_hessian(self._state(e, s, v))
        return self.energy.inner_plus(e, e) - float(e @ (uu @ e))

    def _maximize_s(self, e, s, v):
        """Root of dPhi/ds on the bracket [0, 2^k], Newton with bisection fallback."""
        lo, hi = 0.0, 1.0
        doublings = 0
        while self._ds(e, hi, v) >= 0:
            lo, hi = hi, 2.0 * hi
            doublings += 1
            if doublings > MAX_BRACKET_DOUBLINGS:
                raise InnerMaximizationError(
                    "no sign change of dPhi/ds up to s = {0:.3g}".format(hi),
                    code="NO_CONVERGENCE",
                )
        phi_scale = 1.0 + abs(self._phi(e, 0.5 * (lo + hi), v))
        tolerance = 0.1 * self.options.tol_inner * phi_scale
        s = s if lo < s < hi else 0.5 * (lo + hi)
        for _ in range(MAX_S_ITERATIONS):
            ds = self._ds(e, s, v)
            # the manifold residual sees s * dPhi/ds
            if abs(ds) * max(1.0, s) <= tolerance:
                break
            if ds > 0:
                lo = s
            else:
                hi = s
            if hi - lo <= 1e-15 * max(1.0, hi):
                break
            dds = self._dds(e, s, v)
            candidate = s - ds / dds if dds < 0 else None
            if candidate is not None and lo < candidate < hi:
                s = candidate
            else:
                s = 0.5 * (lo + hi)
        return s

    def _residuals(self, e, s, v):
        energy = self.energy
        z = self._state(e, s, v)
        r = energy.nonlinear_gradient(z)
        ds = s * energy.inner_plus(e, e) - float(r.u @ e)
        gradient_v = -(energy.gram_minus @ v) - r.v
        restricted = np.sqrt(
            ds ** 2 + max(float(gradient_v @ energy.riesz_minus(gradient_v)), 0.0)
        )
        manifold = max(
            abs(s * ds + float(gradient_v @ v)),
            np.max(np.abs(gradient_v), initial=0.0),
        )
        return restricted, manifold

    def _newton_step(self, e, s, v):
        """Joint Newton step on (dPhi/ds, dPhi/dv) = 0 over R e (+) X-."""
        energy = self.energy
        z = self._state(e, s, v)
        uu, uv, vv = energy.nonlinear_hessian(z)
        r = energy.nonlinear_gradient(z)
        ee = energy.inner_plus(e, e)
        ds = s * ee - float(r.u @ e)
        dds = ee - float(e @ (uu @ e))
        if energy.size_minus == 0:
            return s - ds / dds, v
        gradient_v = -(energy.gram_minus @ v) - r.v
        mixed = -np.asarray(uv.T @ e).ravel()
        hessian = sparse.bmat(
            [
                [sparse.csr_matrix([[dds]]), sparse.csr_matrix(mixed[None, :])],
                [sparse.csr_matrix(mixed[:, None]), -(energy.gram_minus + vv)],
            ],
            format="csc",
        )
        step = np.atleast_1d(spsolve(hessian, -np.concatenate([[ds], gradient_v])))
        return s + step[0], v + step[1:]

    def _polish(self, e, s, v):
        """
        Refines (s, v) by joint Newton steps while they lower the residual
        without lowering Phi; returns the point with its residuals.
        """
        restricted, manifold = self._residuals(e, s, v)
        phi_value = self._phi(e, s, v)
        for _ in range(MAX_POLISH_STEPS):
            try:
                s_new, v_new = self._newton_step(e, s, v)
            except (RuntimeError, ValueError, ZeroDivisionError,
                    np.linalg.LinAlgError):
                break
            if not (s_new > 0 and np.isfinite(s_new) and np.all(np.isfinite(v_new))):
                break
            restricted_new, manifold_new = self._residuals(e, s_new, v_new)
            phi_new = self._phi(e, s_new, v_new)
            if restricted_new >= restricted or phi_new < phi_value - 1e-13 * (
                1.0 + abs(phi_value)
            ):
                break
            s, v, phi_value = s_new, v_new, phi_new
            restricted, manifold = restricted_new, manifold_new
        return s, v, restricted, manifold

    def maximize(self, w, warm_start=None):
        """
        Computes m^(w).

        Parameters
        ----------
        w : StatePair or np.ndarray
            Any w with w+ != 0; only the direction of w+ matters.
        warm_start : tuple(float, np.ndarray) or None, optional
            Initial (s, v), typically the previous result of a nearby w.

        Returns
        -------
        InnerMaxResult

        Raises
        ------
        InnerMaximizationError
            `W_IN_XMINUS`, `NO_CONVERGENCE` or `DEGENERATE_S`.
        """
        e = self.direction(w)
        if warm_start is not None:
            s, v = float(warm_start[0]), np.array(warm_start[1], dtype=float)
            if not s > 0:
                s = 1.0
        else:
            s, v = 1.0, np.zeros(self.energy.size_minus)

        converged = False
        restricted = manifold = np.inf
        iteration = 0
        for iteration in range(1, self.options.max_iter + 1):
            previous_s, previous_v = s, v
            v = self._ascend_v(e, s, v)
            s = self._maximize_s(e, s, v)
            s, v, restricted, manifold = self._polish(e, s, v)
            phi_value = self._phi(e, s, v)
            bound = self.options.tol_inner * (1.0 + abs(phi_value))
            logger.debug(
                "inner {0}: s={1:.12g} |v|={2:.3g} phi={3:.12g} grad={4:.3g}".format(
                    iteration, s, self.energy.norm_minus(v), phi_value, restricted
                )
            )
            if restricted <= bound and manifold <= bound:
                converged = True
                break
            if s == previous_s and np.array_equal(v, previous_v):
                logger.debug("inner iteration stagnated at s={0:.12g}".format(s))
                break

        result = InnerMaxResult(
            s=s,
            v=v,
            z=self._state(e, s, v),
            phi_value=self._phi(e, s, v),
            iterations=iteration,
            grad_norm=restricted,
            converged=converged,
            direction=e,
            manifold_residual=manifold,
        )
        if not converged:
            raise InnerMaximizationError(
                "inner maximization did not converge in {0} iterations "
                "(gradient {1:.3g})".format(iteration, restricted),
                code="NO_CONVERGENCE",
                result=result,
            )
        if s <= DEGENERATE_S:
            raise InnerMaximizationError(
                "inner maximizer collapsed to s = {0:.3g}".format(s),
                code="DEGENERATE_S",
                result=result,
            )
        if result.phi_value <= 0:
            logger.warning(
                "inner maximum {0:.6g} is not positive".format(result.phi_value)
            )
        return result


def retract(energy, u):
    """Pulls a point of X+ back onto S+ by normalization."""
    norm = energy.norm_plus(u)
    if not norm > XMINUS_THRESHOLD:
        raise SphereError("cannot normalize a vanishing X+ component")
    return u / norm


def m_inverse(space, z):
    """
    m^-1(z) = z+ / ||z+||, an element of S+.

    Parameters
    ----------
    space : src.mesh.Grid or src.energy.EnergyFunctional
        Supplies the X+ norm.
    z : StatePair

    Raises
    ------
    SphereError
        `Z_IN_XMINUS` if z+ vanishes.
    """
    norm = space.norm_plus(z.u) if isinstance(space, EnergyFunctional) else space.norm(
        z.u
    )
    if not norm > XMINUS_THRESHOLD:
        raise SphereError("z lies in X- (||z+|| = {0:.3g})".format(norm))
    return StatePair(z.u / norm, np.zeros_like(z.v))


class ReducedFunctional:
    """
    Psi = Phi o m on the unit sphere S+, with its exact tangent gradient

        <Psi'(w), z> = ||m(w)+|| <Phi'(m(w)), z>,   z tangent at w.

    Points of S+ are passed as X+ coefficient vectors. Inner results are
    cached per point and the most recent one warm-starts the next solve.
    """

    def __init__(self, energy, options=None, cache_size=4):
        self.energy = energy
        self.nehari = NehariMap(energy, options)
        self.cache_size = cache_size
        self._cache = {}
        self._last = None

    def check_sphere(self, w):
        if isinstance(w, StatePair):
            if np.any(w.v):
                raise ValueError("points of S+ have zero X- component")
            w = w.u
        w = np.asarray(w, dtype=float)
        if w.shape != (self.energy.size_plus,):
            raise ValueError("sphere point has shape {0}".format(w.shape))
        norm = self.energy.norm_plus(w)
        if abs(norm - 1.0) > SPHERE_TOLERANCE:
            raise ValueError("||w|| = {0!r} is not on the unit sphere".format(norm))
        return w

    def mhat(self, w):
        w = self.check_sphere(w)
        key = w.tobytes()
        if key in self._cache:
            return self._cache[key]
        warm = self._last.warm_start if self._last is not None else None
        try:
            result = self.nehari.maximize(w, warm_start=warm)
        except InnerMaximizationError:
            if warm is None:
                raise
            # a poor warm start must not decide failure
            result = self.nehari.maximize(w)
        if len(self._cache) >= self.cache_size:
            self._cache.pop(next(iter(self._cache)))
        self._cache[key] = result
        self._last = result
        return result

    def value(self, w):
        return self.mhat(w).phi_value

    def gradient(self, w):
        w = self.check_sphere(w)
        result = self.mhat(w)
        full = self.energy.phi_gradient(result.z)
        scaled = self.energy.norm_plus(result.z.u) * full.u
        return scaled - self.energy.inner_plus(scaled, w) * w

    def retract(self, u):
        return retract(self.energy, u)


@lru_cache(maxsize=8)
def _grid_reduced_functional(grid, spec, options):
    return ReducedFunctional(GridEnergy(grid, spec), options)


def inner_maximize(grid, spec, w, opts=None, warm_start=None):
    """m^(w) for the discretized system; see `NehariMap.maximize`."""
    return NehariMap(GridEnergy(grid, spec), opts).maximize(w, warm_start=warm_start)


def psi_hat(grid, spec, w, opts=None):
    """Psi^(w) = Phi(m^(w)) for any w with w+ != 0."""
    return inner_maximize(grid, spec, w, opts).phi_value


def psi(grid, spec, w_on_sphere, opts=None):
    """Psi(w) for w on S+ (a `StatePair` with zero v or an X+ vector)."""
    reduced = _grid_reduced_functional(grid, spec, opts or InnerOptions())
    return reduced.value(w_on_sphere)


def psi_gradient(grid, spec, w_on_sphere, opts=None):
    """Tangent Sobolev gradient of Psi at w on S+."""
    reduced = _grid_reduced_functional(grid, spec, opts or InnerOptions())
    return reduced.gradient(w_on_sphere)


@dataclass
class UniquenessReport:
    """
    Result of restarting the inner maximizer from random (s, v).
    `code` is `NON_UNIQUE` when two restarts disagree, and `points` then
    holds the reference and the farthest maximizer.
    """

    agree: bool
    max_distance: float
    results: List[InnerMaxResult] = field(default_factory=list)
    code: Optional[str] = None
    points: Optional[tuple] = None


def check_uniqueness(energy, w, options=None, restarts=10, seed=0,
                     tolerance=UNIQUENESS_TOLERANCE):
    """Restarts `NehariMap.maximize` from seeded random (s, v) and compares."""
    nehari = NehariMap(energy, options)
    reference = nehari.maximize(w)
    rng = np.random.default_rng(seed)
    results, distances = [], []
    for _ in range(restarts):
        s0 = reference.s * rng.uniform(0.2, 3.0)
        v0 = energy.sample_state(rng, amplitude=reference.s * rng.uniform(0.0, 1.0)).v
        result = nehari.maximize(w, warm_start=(s0, v0))
        results.append(result)
        distances.append(energy.norm(result.z - reference.z))
    max_distance = max(distances, default=0.0)
    report = UniquenessReport(
        agree=max_distance <= tolerance, max_distance=max_distance, results=results
    )
    if not report.agree:
        farthest = results[int(np.argmax(distances))]
        report.code = "NON_UNIQUE"
        report.points = (reference.z, farthest.z)
        logger.warning(
            "NON_UNIQUE: inner maximizers differ by {0:.3g}".format(max_distance)
        )
    return report


@dataclass
class LowerBoundProbe:
    min_norm: float
    norms: np.ndarray


def lower_bound_probe(energy, count=50, seed=0, options=None):
    """
    Minimum of ||m^(w)+|| over seeded random directions w; positive for
    admissible F. No specific lower bound is asserted.
    """
    nehari = NehariMap(energy, options)
    rng = np.random.default_rng(seed)
    norms = []
    for _ in range(count):
        w = energy.sample_state(rng).u
        result = nehari.maximize(w)
        norms.append(energy.norm_plus(result.z.u))
    norms = np.array(norms)
    logger.info("min ||m(w)+|| over {0} directions: {1:.6g}".format(
        count, float(norms.min())
    ))
    return LowerBoundProbe(min_norm=float(norms.min()), norms=norms)
