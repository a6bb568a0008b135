"""
Admissible nonlinearities F(x, U), U = (u, v) in R^2, their gradients, and a
sampling checker for the structural conditions (F1)-(F8).

Only the power family F(x, U) = f(x) |U|^p ships built in. Other families
plug in by subclassing `NonlinearitySpec` and are gated by
`check_conditions`.
"""
import abc
import logging
import os
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from src.errors import ConfigError

logger = logging.getLogger("nehari")

# strict inequalities must hold by this relative margin
STRICT_MARGIN = 1e-12
# finite-radius spot checks of the limits in (F3) and (F4)
SMALL_RADIUS_THRESHOLD = 0.01
LARGE_RADIUS_THRESHOLD = 10.0
N_RADIUS_STEPS = 6
# rays are followed further, 2^10 per step, until the threshold is crossed
LIMIT_STRIDE = 10
MIN_LIMIT_RADIUS = 1e-100
MAX_LIMIT_RADIUS = 1e100

CONDITION_LABELS = ("F1", "F2", "F3", "F4", "F5", "F6", "F7", "F8")
PASS = "pass"
FAIL = "fail"
INCONCLUSIVE_FAIL = "inconclusive-fail"


def _points(x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1)
    return x


class Weight(abc.ABC):
    """Positive coefficient f(x) of the power family."""

    kind = None

    @abc.abstractmethod
    def __call__(self, x):
        """`x` has shape `(..., dim)`; returns shape `(...)`."""


@dataclass(frozen=True)
class ConstantWeight(Weight):
    c: float = 1.0
    kind = "constant"

    def __call__(self, x):
        x = _points(x)
        return np.full(x.shape[:-1], float(self.c))


@dataclass(frozen=True)
class AffineWeight(Weight):
    """f(x) = a + b x (+ c y in 2-D)."""

    coefficients: tuple = (1.0, 0.0)
    kind = "affine"

    def __call__(self, x):
        x = _points(x)
        coefficients = np.asarray(self.coefficients, dtype=float)
        slopes = np.zeros(x.shape[-1])
        n_slopes = min(len(coefficients) - 1, x.shape[-1])
        slopes[:n_slopes] = coefficients[1 : 1 + n_slopes]
        return coefficients[0] + x @ slopes


@dataclass(frozen=True, eq=False)
class TableWeight(Weight):
    """
    Nodal table of f on the interior nodes of a uniform grid; evaluated
    off-node by multilinear interpolation, clamped to the node hull.
    """

    values: np.ndarray
    dim: int = 1
    extent: float = 1.0
    kind = "table"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).ravel()
        n = int(round(len(values) ** (1.0 / self.dim)))
        if n ** self.dim != len(values):
            raise ConfigError(
                "table weight has {0} values, not a {1}-D square grid".format(
                    len(values), self.dim
                )
            )
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "_n", n)

    @property
    def n(self):
        return self._n

    def __call__(self, x):
        x = _points(x)
        if self.n == 1:
            return np.full(x.shape[:-1], self.values[0])
        h = self.extent / (self.n + 1)
        axis = h * np.arange(1, self.n + 1)
        clipped = np.clip(x, axis[0], axis[-1])
        if self.dim == 1:
            return np.interp(clipped[..., 0], axis, self.values)
        # values are stored x-fastest, i.e. indexed [y, x]
        interpolator = RegularGridInterpolator(
            (axis, axis), self.values.reshape(self.n, self.n)
        )
        return interpolator(clipped[..., ::-1])


def build_weight(kind, params, dim=1, extent=1.0):
    """Builds a `Weight` from the config keys `weight.kind` / `weight.params`."""
    if params is None:
        params = []
    if kind == "constant":
        if isinstance(params, (list, tuple)):
            params = params[0] if params else 1.0
        return ConstantWeight(float(params))
    if kind == "affine":
        params = [float(p) for p in np.atleast_1d(params)]
        if len(params) == 1:
            params.append(0.0)
        return AffineWeight(tuple(params))
    if kind == "table":
        if isinstance(params, str):
            if not os.path.isfile(params):
                raise ConfigError(
                    "weight table could not be opened as file: {0}".format(params)
                )
            params = np.loadtxt(params)
        return TableWeight(np.asarray(params, dtype=float), dim=dim, extent=extent)
    raise ConfigError("unknown weight kind: {0}".format(kind))


class NonlinearitySpec(abc.ABC):
    """
    Evaluation contract for F(x, U). All methods are vectorized over the
    leading axes: `x` has shape `(..., dim)`, `U` has shape `(..., 2)`.

    Attributes
    ----------
    family : str
        Family name used in configs and reports.
    growth_exponent : float
        The exponent p of the (F2) growth bound.
    """

    family = None

    @property
    @abc.abstractmethod
    def growth_exponent(self):
        pass

    @abc.abstractmethod
    def value(self, x, U):
        pass

    @abc.abstractmethod
    def gradient(self, x, U):
        pass

    def hessian(self, x, U):
        """Central differences of `gradient`; shape `(..., 2, 2)`."""
        U = np.asarray(U, dtype=float)
        step = 1e-6 * (1.0 + np.linalg.norm(U, axis=-1))[..., None]
        columns = []
        for k in range(2):
            shift = np.zeros_like(U)
            shift[..., k] = 1.0
            shift = shift * step
            columns.append(
                (self.gradient(x, U + shift) - self.gradient(x, U - shift))
                / (2 * step)
            )
        return np.stack(columns, axis=-1)

    def validate(self, points):
        """Raises `ConfigError` if the spec is not admissible at `points`."""


@dataclass(frozen=True)
class PowerNonlinearity(NonlinearitySpec):
    """
    F(x, U) = f(x) |U|^p with |U| the Euclidean norm in R^2.

    Construction does not validate, so that inadmissible members (p <= 2,
    negative f) can still be passed to `check_conditions`; call `validate`
    before solving.

    Parameters
    ----------
    p : float
        Exponent, admissible for p > 2.
    weight : Weight
        The coefficient f(x), admissible when positive.
    """

    p: float = 4.0
    weight: Weight = field(default_factory=ConstantWeight)
    family = "power"

    @property
    def growth_exponent(self):
        return self.p

    def value(self, x, U):
        U = np.asarray(U, dtype=float)
        radius = np.hypot(U[..., 0], U[..., 1])
        return self.weight(x) * radius ** self.p

    def gradient(self, x, U):
        U = np.asarray(U, dtype=float)
        radius = np.hypot(U[..., 0], U[..., 1])
        with np.errstate(divide="ignore", invalid="ignore"):
            factor = np.where(radius > 0, radius ** (self.p - 2), 0.0)
        return (self.p * self.weight(x) * factor)[..., None] * U

    def hessian(self, x, U):
        U = np.asarray(U, dtype=float)
        radius = np.hypot(U[..., 0], U[..., 1])
        with np.errstate(divide="ignore", invalid="ignore"):
            isotropic = np.where(radius > 0, radius ** (self.p - 2), 0.0)
            radial = np.where(radius > 0, (self.p - 2) * radius ** (self.p - 4), 0.0)
        scale = self.p * self.weight(x)
        outer = U[..., :, None] * U[..., None, :]
        eye = np.eye(2)
        return scale[..., None, None] * (
            isotropic[..., None, None] * eye + radial[..., None, None] * outer
        )

    def growth_bound(self, points):
        """The (F2) constant a = p * max f over `points`."""
        return self.p * float(np.max(self.weight(points)))

    def validate(self, points):
        if not np.isfinite(self.p) or self.p <= 2:
            raise ConfigError(
                "power exponent must satisfy p > 2, got {0}".format(self.p)
            )
        f = self.weight(points)
        if not np.all(np.isfinite(f)) or np.min(f) <= 0:
            raise ConfigError(
                "weight f must be positive at every node, min is {0}".format(
                    float(np.min(f))
                )
            )


def build_nonlinearity(family, p, weight_kind="constant", weight_params=None, dim=1,
                       extent=1.0):
    if family != "power":
        raise ConfigError("unknown nonlinearity family: {0}".format(family))
    weight = build_weight(weight_kind, weight_params, dim=dim, extent=extent)
    return PowerNonlinearity(p=float(p), weight=weight)


def eval_f(spec, x, U):
    """F(x, U) at a single point."""
    return float(spec.value(_points(x), np.asarray(U, dtype=float)))


def grad_f(spec, x, U):
    """(F_u, F_v)(x, U) at a single point."""
    return np.asarray(spec.gradient(_points(x), np.asarray(U, dtype=float)), dtype=float)


@dataclass
class SamplingConfig:
    count: int = 200
    radius_small: float = 1e-2
    radius_large: float = 10.0
    seed: int = 0

    def validate(self):
        if int(self.count) != self.count or self.count < 1:
            raise ConfigError("sampling count must be >= 1, got {0}".format(self.count))
        if not 0 < self.radius_small < self.radius_large:
            raise ConfigError(
                "sampling radii must satisfy 0 < radius_small < radius_large, "
                "got {0}, {1}".format(self.radius_small, self.radius_large)
            )


@dataclass
class ConditionResult:
    label: str
    status: str
    witness: Optional[Dict] = None

    @property
    def passed(self):
        return self.status == PASS


@dataclass
class ConditionReport:
    results: Dict[str, ConditionResult]

    @property
    def passed(self):
        return all(result.passed for result in self.results.values())

    def failed(self):
        return [label for label, result in self.results.items() if not result.passed]

    def __getitem__(self, label):
        return self.results[label]

    def to_text(self):
        lines = []
        for label, result in self.results.items():
            line = "{0}\t{1}".format(label, result.status)
            if result.witness:
                line += "\t" + " ".join(
                    "{0}={1}".format(key, _format_witness_value(value))
                    for key, value in result.witness.items()
                )
            lines.append(line)
        return "\n".join(lines)


def _format_witness_value(value):
    if np.ndim(value) == 0:
        return "{0:.6g}".format(float(value))
    return "(" + ",".join("{0:.6g}".format(v) for v in np.ravel(value)) + ")"


def _witness(x, i, **items):
    witness = {"x": np.array(x[i])}
    for key, value in items.items():
        witness[key] = np.array(value[i]) if np.ndim(value) > 0 else value
    return witness


def _result(label, ok, status_if_fail, x, **items):
    if ok.all():
        return ConditionResult(label, PASS)
    i = int(np.flatnonzero(~ok)[0])
    return ConditionResult(label, status_if_fail, _witness(x, i, **items))


def _dot(a, b):
    return np.sum(a * b, axis=-1)


def _polar(radius, theta):
    return radius[..., None] * np.stack([np.cos(theta), np.sin(theta)], axis=-1)


def _ray_ratios(spec, x, direction, radius, factor, crossed):
    """
    F / |U|^2 along the rays U = r * direction, r = radius * factor^k for
    k < N_RADIUS_STEPS, then continued by factor^LIMIT_STRIDE per step
    until `crossed` holds at every point or r leaves
    [MIN_LIMIT_RADIUS, MAX_LIMIT_RADIUS].

    Returns
    -------
    tuple(np.ndarray, float)
        Ratios of shape `(radii, count)` and the last radius evaluated.
    """
    radii = [radius * factor ** k for k in range(N_RADIUS_STEPS)]
    ratios = []
    with np.errstate(over="ignore", under="ignore", invalid="ignore"):
        for r in radii:
            ratios.append(spec.value(x, r * direction) / r ** 2)
        r = radii[-1]
        while not np.all(crossed(ratios[-1])):
            r *= factor ** LIMIT_STRIDE
            if not MIN_LIMIT_RADIUS <= r <= MAX_LIMIT_RADIUS:
                break
            ratios.append(spec.value(x, r * direction) / r ** 2)
    if r < MIN_LIMIT_RADIUS or r > MAX_LIMIT_RADIUS:
        r /= factor ** LIMIT_STRIDE
    return np.array(ratios), r


def check_conditions(spec, sample=None, grid=None):
    """
    Spot-checks (F1)-(F8) on a seeded random sample of (x, U, V).

    (F3) and (F4) are limits; they are sampled at radii `radius_small * 2^-k`
    and `radius_large * 2^k`, k = 0..5, and further along each ray until the
    threshold is crossed or the radius leaves [1e-100, 1e100]. A failure
    there is reported as "inconclusive-fail". Strict inequalities must hold
    by `STRICT_MARGIN` relative to the magnitudes involved.

    Parameters
    ----------
    spec : NonlinearitySpec
    sample : SamplingConfig or dict or None, optional
        Default is `SamplingConfig()`.
    grid : src.mesh.Grid or None, optional
        If given, x is drawn from the grid's interior nodes, otherwise
        uniformly from [0, 1].

    Returns
    -------
    ConditionReport
    """
    if sample is None:
        sample = SamplingConfig()
    elif isinstance(sample, dict):
        sample = SamplingConfig(**sample)
    sample.validate()

    rng = np.random.default_rng(sample.seed)
    count = int(sample.count)
    if grid is not None:
        x = grid.coordinates[rng.integers(0, grid.size, count)]
    else:
        x = rng.uniform(0.0, 1.0, (count, 1))
    log_small, log_large = np.log(sample.radius_small), np.log(sample.radius_large)
    theta = rng.uniform(0.0, 2 * np.pi, count)
    U = _polar(np.exp(rng.uniform(log_small, log_large, count)), theta)
    V = _polar(
        np.exp(rng.uniform(log_small, log_large, count)),
        rng.uniform(0.0, 2 * np.pi, count),
    )
    rotation = rng.uniform(0.1, 2 * np.pi - 0.1, count)
    radius_U = np.linalg.norm(U, axis=-1)
    radius_V = np.linalg.norm(V, axis=-1)
    U_rotated = _polar(radius_U, theta + rotation)
    p = spec.growth_exponent

    results = {}

    # (F1) F(x, 0) = 0
    F_zero = spec.value(x, np.zeros_like(U))
    results["F1"] = _result("F1", F_zero == 0, FAIL, x, U=np.zeros_like(U),
                            F=F_zero)

    F_U = spec.value(x, U)
    grad_U = spec.gradient(x, U)

    # (F2) |grad F| <= a (1 + |U|^(p-1)), ratio bounded and not growing
    # along rays
    ratio = np.linalg.norm(grad_U, axis=-1) / (1.0 + radius_U ** (p - 1))
    direction = U / radius_U[..., None]
    ray_ratios = []
    for k in (0, N_RADIUS_STEPS - 1):
        radius = sample.radius_large * 2.0 ** k
        grad_ray = spec.gradient(x, radius * direction)
        ray_ratios.append(np.linalg.norm(grad_ray, axis=-1) / (1.0 + radius ** (p - 1)))
    ok = np.isfinite(ratio) & np.isfinite(ray_ratios[1])
    ok &= ray_ratios[1] <= 2.0 * ray_ratios[0] + STRICT_MARGIN
    results["F2"] = _result("F2", ok, FAIL, x, U=U, ratio=ratio,
                            ray_ratio_far=ray_ratios[1])

    # (F3) F / |U|^2 small and decreasing as |U| -> 0
    small, radius = _ray_ratios(
        spec, x, direction, sample.radius_small, 0.5,
        lambda ratio: ratio < SMALL_RADIUS_THRESHOLD,
    )
    ok = small[-1] < SMALL_RADIUS_THRESHOLD
    ok &= np.all(np.diff(small, axis=0) <= STRICT_MARGIN * np.abs(small[:-1]), axis=0)
    results["F3"] = _result("F3", ok, INCONCLUSIVE_FAIL, x, U=direction * radius,
                            ratio=small[-1])

    # (F4) F / |U|^2 increasing past the threshold as |U| -> infinity
    large, radius = _ray_ratios(
        spec, x, direction, sample.radius_large, 2.0,
        lambda ratio: ratio > LARGE_RADIUS_THRESHOLD,
    )
    ok = np.all(np.diff(large, axis=0) > 0, axis=0)
    ok &= large[-1] > LARGE_RADIUS_THRESHOLD
    results["F4"] = _result("F4", ok, INCONCLUSIVE_FAIL, x, U=direction * radius,
                            ratio=large[-1])

    # (F5) F > 0 and U . grad F > 2F
    u_grad = _dot(U, grad_U)
    scale = np.maximum(np.abs(2 * F_U), np.abs(u_grad))
    ok = (F_U > 0) & (u_grad - 2 * F_U > STRICT_MARGIN * scale)
    results["F5"] = _result("F5", ok, FAIL, x, U=U, F=F_U, u_dot_gradF=u_grad,
                            two_F=2 * F_U)

    # (F6) (V . grad F(U)) (U . V) >= 0
    v_grad = _dot(V, grad_U)
    u_dot_v = _dot(U, V)
    bound = STRICT_MARGIN * np.linalg.norm(grad_U, axis=-1) * radius_U * radius_V ** 2
    ok = v_grad * u_dot_v >= -bound
    results["F6"] = _result("F6", ok, FAIL, x, U=U, V=V, v_dot_gradF=v_grad,
                            u_dot_v=u_dot_v)

    # (F7) |U| = |W|  =>  F(U) = F(W) and W . grad F(U) < U . grad F(U), W != U
    F_rotated = spec.value(x, U_rotated)
    w_grad = _dot(U_rotated, grad_U)
    same_value = np.abs(F_U - F_rotated) <= STRICT_MARGIN * np.maximum(
        np.abs(F_U), np.abs(F_rotated)
    ) + np.finfo(float).tiny
    strict = u_grad - w_grad > STRICT_MARGIN * np.abs(u_grad)
    ok = same_value & strict
    results["F7"] = _result("F7", ok, FAIL, x, U=U, V=U_rotated, F_U=F_U,
                            F_V=F_rotated, v_dot_gradF=w_grad, u_dot_gradF=u_grad)

    # (F8) |U| != |V| and U . V != 0  =>  V . grad F(U) != U . grad F(V)
    grad_V = spec.gradient(x, V)
    u_grad_v = _dot(U, grad_V)
    applicable = np.abs(radius_U - radius_V) > 1e-3 * np.maximum(radius_U, radius_V)
    applicable &= np.abs(u_dot_v) > 1e-3 * radius_U * radius_V
    differs = np.abs(v_grad - u_grad_v) > STRICT_MARGIN * (
        np.abs(v_grad) + np.abs(u_grad_v)
    )
    ok = ~applicable | differs
    results["F8"] = _result("F8", ok, FAIL, x, U=U, V=V, v_dot_gradF_U=v_grad,
                            u_dot_gradF_V=u_grad_v)

    report = ConditionReport(results)
    logger.debug("Condition check on {0} samples: {1}".format(
        count, ", ".join("{0}={1}".format(k, r.status) for k, r in results.items())
    ))
    return report
