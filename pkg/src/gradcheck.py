"""
Finite-difference checks of the analytic derivatives of Phi and Psi, and
the continuity probe of the inner maximizer.

Errors are reported relative to `1 + |analytic|`.
"""
import logging
from dataclasses import dataclass

import numpy as np

from src.nehari import NehariMap, ReducedFunctional

logger = logging.getLogger("nehari")

PHI_STEP = 1e-6
PSI_STEP = 1e-5
PHI_TOLERANCE = 1e-6
PSI_TOLERANCE = 1e-5


@dataclass
class GradCheck:
    name: str
    errors: np.ndarray
    tolerance: float

    @property
    def max_error(self):
        return float(np.max(self.errors, initial=0.0))

    @property
    def passed(self):
        return self.max_error <= self.tolerance

    def to_text(self):
        return "{0}: max relative error {1:.3e} over {2} directions ({3})".format(
            self.name, self.max_error, len(self.errors),
            "pass" if self.passed else "fail"
        )


def _relative_error(numeric, analytic):
    return abs(numeric - analytic) / (1.0 + abs(analytic))


def phi_gradcheck(energy, count=20, seed=0, step=PHI_STEP, tolerance=PHI_TOLERANCE):
    """Central differences of Phi along random w against <Phi'(z), w>."""
    rng = np.random.default_rng(seed)
    amplitude = energy.typical_amplitude()
    errors = []
    for _ in range(count):
        z = energy.sample_state(rng, amplitude)
        w = energy.sample_state(rng)
        numeric = (energy.phi(z + step * w) - energy.phi(z - step * w)) / (2.0 * step)
        errors.append(_relative_error(numeric, energy.phi_prime_apply(z, w)))
    return GradCheck("phi_prime_apply", np.array(errors), tolerance)


def tangent_direction(energy, w, rng):
    """A random unit vector of X+ orthogonal to w."""
    z = energy.sample_state(rng).u
    z = z - energy.inner_plus(z, w) * w
    return z / energy.norm_plus(z)


def psi_gradcheck(energy, w=None, count=20, seed=0, step=PSI_STEP,
                  tolerance=PSI_TOLERANCE, options=None):
    """
    (Psi(R(w + eps z)) - Psi(R(w - eps z))) / (2 eps) against <G_t, z>_X
    for random tangent directions z at w; R is the normalization retraction.
    """
    rng = np.random.default_rng(seed)
    reduced = ReducedFunctional(energy, options)
    if w is None:
        w = energy.principal_direction() + 0.1 * energy.sample_state(rng).u
    w = reduced.retract(np.asarray(w, dtype=float))
    gradient = reduced.gradient(w)
    errors = []
    for _ in range(count):
        z = tangent_direction(energy, w, rng)
        forward = reduced.value(reduced.retract(w + step * z))
        backward = reduced.value(reduced.retract(w - step * z))
        numeric = (forward - backward) / (2.0 * step)
        errors.append(_relative_error(numeric, energy.inner_plus(gradient, z)))
    return GradCheck("psi_gradient", np.array(errors), tolerance)


def continuity_probe(energy, w, direction=None, steps=8, scale=1e-5, seed=0,
                     options=None):
    """
    Distances ||m^(w + 2^-k d) - m^(w)||_X for k = 1..steps, where d is a
    random X+ perturbation of norm `scale`.
    """
    nehari = NehariMap(energy, options)
    w = np.asarray(w, dtype=float)
    if direction is None:
        direction = energy.sample_state(np.random.default_rng(seed)).u
    direction = scale * direction / energy.norm_plus(direction)
    base = nehari.maximize(w)
    distances = []
    for k in range(1, steps + 1):
        moved = nehari.maximize(w + 2.0 ** (-k) * direction)
        distances.append(energy.norm(moved.z - base.z))
    logger.debug("continuity probe distances: {0}".format(distances))
    return np.array(distances)
