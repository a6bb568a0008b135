"""
Independent ground truth for the Nehari solver.

`ToyModel` is the finite-dimensional instance of the abstract split-space
framework with I(z) = (c/4)|z|^4, where m^ and Psi are known in closed form.
`NewtonMultistart` finds critical points of any `EnergyFunctional` by damped
Newton iteration on the full first-order system from seeded random starts,
without using the Nehari reduction.
"""
import logging
from collections import namedtuple
from dataclasses import dataclass, field
from typing import List

import numpy as np
import pandas as pd
from scipy import sparse
from scipy.sparse.linalg import spsolve
from tqdm import tqdm

from src.energy import EnergyFunctional, GridEnergy, StatePair
from src.errors import OracleError

logger = logging.getLogger("nehari")

ToyMhat = namedtuple("ToyMhat", ["s", "v", "value"])


class ToyModel(EnergyFunctional):
    """
    Phi(a, b) = 1/2 |a|^2 - 1/2 |b|^2 - (c/4)(|a|^2 + |b|^2)^2 on
    R^n_plus x R^n_minus with Euclidean norms.

    Parameters
    ----------
    n_plus, n_minus : int
        Dimensions of X+ and X-.
    c : float
        Positive coupling constant.
    """

    def __init__(self, n_plus=1, n_minus=1, c=1.0):
        if n_plus < 1 or n_minus < 0:
            raise ValueError("toy model needs n_plus >= 1 and n_minus >= 0")
        if not c > 0:
            raise ValueError("toy model needs c > 0, got {0}".format(c))
        self.n_plus = int(n_plus)
        self.n_minus = int(n_minus)
        self.c = float(c)
        self._gram_plus = sparse.identity(self.n_plus, format="csr")
        self._gram_minus = sparse.identity(self.n_minus, format="csr")

    @property
    def size_plus(self):
        return self.n_plus

    @property
    def size_minus(self):
        return self.n_minus

    @property
    def gram_plus(self):
        return self._gram_plus

    @property
    def gram_minus(self):
        return self._gram_minus

    def riesz_plus(self, r):
        return np.array(r, dtype=float)

    def riesz_minus(self, r):
        return np.array(r, dtype=float)

    def _squared_norm(self, z):
        return float(z.u @ z.u + z.v @ z.v)

    def nonlinear(self, z):
        return 0.25 * self.c * self._squared_norm(z) ** 2

    def nonlinear_gradient(self, z):
        factor = self.c * self._squared_norm(z)
        return StatePair(factor * z.u, factor * z.v)

    def nonlinear_hessian(self, z):
        vector = z.as_vector()
        hessian = self.c * (
            self._squared_norm(z) * np.eye(len(vector)) + 2.0 * np.outer(vector, vector)
        )
        n = self.n_plus
        return (
            sparse.csr_matrix(hessian[:n, :n]),
            sparse.csr_matrix(hessian[:n, n:]),
            sparse.csr_matrix(hessian[n:, n:]),
        )

    def principal_direction(self):
        return np.ones(self.n_plus)

    def typical_amplitude(self):
        return 1.0 / np.sqrt(self.c)

    def sample_state(self, rng, amplitude=1.0):
        u = rng.normal(size=self.n_plus)
        v = rng.normal(size=self.n_minus)
        scale = amplitude / max(np.linalg.norm(np.concatenate([u, v])), 1e-12)
        return StatePair(scale * u, scale * v)


def toy_mhat(model, w_plus):
    """
    Closed-form m^(w) of the toy model: v = 0, s = c^(-1/2),
    value = 1 / (4c), for any direction w+.
    """
    w_plus = np.asarray(w_plus, dtype=float)
    if not np.linalg.norm(w_plus) > 0:
        raise ValueError("toy m^ needs a nonzero w+")
    return ToyMhat(
        s=1.0 / np.sqrt(model.c), v=np.zeros(model.n_minus), value=0.25 / model.c
    )


@dataclass
class CriticalPoint:
    z: StatePair
    energy: float
    residual: float


@dataclass
class CriticalPointSet:
    """
    Nontrivial critical points sorted by energy. `n_diverged` starts failed
    to converge; `n_trivial` converged to z = 0.
    """

    points: List[CriticalPoint] = field(default_factory=list)
    n_starts: int = 0
    n_diverged: int = 0
    n_trivial: int = 0

    @property
    def min_energy(self):
        if not self.points:
            return None
        return self.points[0].energy

    def to_frame(self, energy_functional=None):
        rows = []
        for index, point in enumerate(self.points):
            row = {"index": index, "energy": point.energy, "residual": point.residual}
            if energy_functional is not None:
                row["norm_u"] = energy_functional.norm_plus(point.z.u)
                row["norm_v"] = energy_functional.norm_minus(point.z.v)
            rows.append(row)
        return pd.DataFrame(rows)


class NewtonMultistart:
    """
    Damped Newton on the Euclidean first-order system of Phi.

    Each step is halved until the residual norm decreases (at most
    `max_halvings` times); starts that stall, blow up or run out of
    iterations are dropped and counted.

    Parameters
    ----------
    energy : src.energy.EnergyFunctional
    tol : float, optional
        Default is 1e-10. Max-norm of the residual at convergence.
    max_iter : int, optional
        Default is 100.
    max_halvings : int, optional
        Default is 30.
    dedup_tol : float, optional
        Default is 1e-6. Points closer than this in the X-norm are merged.
    trivial_tol : float, optional
        Default is 1e-8. Points with smaller X-norm count as z = 0.
    """

    def __init__(self, energy, tol=1e-10, max_iter=100, max_halvings=30,
                 dedup_tol=1e-6, trivial_tol=1e-8):
        self.energy = energy
        self.tol = tol
        self.max_iter = max_iter
        self.max_halvings = max_halvings
        self.dedup_tol = dedup_tol
        self.trivial_tol = trivial_tol

    def _residual(self, z):
        return self.energy.euclidean_gradient(z).as_vector()

    def _newton_step(self, z, residual):
        jacobian = self.energy.euclidean_hessian(z)
        step = None
        try:
            step = np.atleast_1d(spsolve(jacobian, -residual))
        except (RuntimeError, ValueError):
            step = None
        if step is None or not np.all(np.isfinite(step)):
            step = np.linalg.lstsq(jacobian.toarray(), -residual, rcond=None)[0]
        return step

    def solve_from(self, z):
        """Returns the converged `StatePair`, or None if the start failed."""
        size_plus = self.energy.size_plus
        blow_up = 1e8 * (1.0 + self.energy.typical_amplitude())
        residual = self._residual(z)
        for _ in range(self.max_iter):
            if np.max(np.abs(residual), initial=0.0) <= self.tol:
                return z
            step = self._newton_step(z, residual)
            current = np.linalg.norm(residual)
            damping = 1.0
            for _ in range(self.max_halvings + 1):
                trial = StatePair.from_vector(z.as_vector() + damping * step, size_plus)
                trial_residual = self._residual(trial)
                if np.linalg.norm(trial_residual) < current:
                    break
                damping *= 0.5
            else:
                return None
            z, residual = trial, trial_residual
            if not np.all(np.isfinite(residual)) or self.energy.norm(z) > blow_up:
                return None
        if np.max(np.abs(residual), initial=0.0) <= self.tol:
            return z
        return None

    def starts(self, count, seed):
        """
        Start 0 is the principal mode at the typical amplitude; the rest are
        seeded random states of random amplitude.
        """
        rng = np.random.default_rng(seed)
        amplitude = self.energy.typical_amplitude()
        principal = self.energy.principal_direction()
        principal = principal / np.max(np.abs(principal))
        yield StatePair(amplitude * principal, np.zeros(self.energy.size_minus))
        for _ in range(count - 1):
            yield self.energy.sample_state(rng, amplitude * rng.uniform(0.5, 3.0))

    def run(self, count, seed=0, progress=False):
        if count < 1:
            raise ValueError("newton_multistart needs count >= 1")
        result = CriticalPointSet(n_starts=count)
        for start in tqdm(self.starts(count, seed), total=count, disable=not progress):
            z = self.solve_from(start)
            if z is None:
                result.n_diverged += 1
                continue
            if self.energy.norm(z) < self.trivial_tol:
                result.n_trivial += 1
                continue
            if any(
                self.energy.norm(z - point.z) <= self.dedup_tol
                for point in result.points
            ):
                continue
            residual = float(np.max(np.abs(self._residual(z)), initial=0.0))
            result.points.append(CriticalPoint(z, self.energy.phi(z), residual))
        if result.n_diverged == count:
            raise OracleError("all {0} Newton starts diverged".format(count))
        result.points.sort(key=lambda point: point.energy)
        logger.info(
            "Newton multistart: {0} critical points from {1} starts "
            "({2} diverged, {3} trivial)".format(
                len(result.points), count, result.n_diverged, result.n_trivial
            )
        )
        return result


def newton_multistart(grid, spec, count, seed=0, tol=1e-10, progress=False):
    """Critical points of the discretized Phi, sorted by energy."""
    return NewtonMultistart(GridEnergy(grid, spec), tol=tol).run(
        count, seed=seed, progress=progress
    )
