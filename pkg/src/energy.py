"""
The strongly indefinite functional

    Phi(z) = 1/2 ||u||^2 - 1/2 ||v||^2 - I(z),   z = (u, v) in X = X+ (+) X-,

its derivative action and its Sobolev (X-inner-product) gradient.

`EnergyFunctional` is the contract the Nehari reduction and the solvers are
written against. `GridEnergy` implements it for the finite-difference
discretization with I(z) = int F(x, u, v) dx; the oracle's `ToyModel`
implements it in finite dimension.
"""
import abc
from dataclasses import dataclass

import numpy as np
from scipy import sparse


@dataclass(frozen=True, eq=False)
class StatePair:
    """
    A point z = (u, v) of X. `plus()` is z+ = (u, 0), `minus()` is
    z- = (0, v).
    """

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "u", np.asarray(self.u, dtype=float))
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float))

    @classmethod
    def zeros(cls, size_plus, size_minus=None):
        if size_minus is None:
            size_minus = size_plus
        return cls(np.zeros(size_plus), np.zeros(size_minus))

    @classmethod
    def from_vector(cls, vector, size_plus):
        vector = np.asarray(vector, dtype=float)
        return cls(vector[:size_plus].copy(), vector[size_plus:].copy())

    def as_vector(self):
        return np.concatenate([self.u, self.v])

    def plus(self):
        return StatePair(self.u, np.zeros_like(self.v))

    def minus(self):
        return StatePair(np.zeros_like(self.u), self.v)

    def __add__(self, other):
        return StatePair(self.u + other.u, self.v + other.v)

    def __sub__(self, other):
        return StatePair(self.u - other.u, self.v - other.v)

    def __mul__(self, scalar):
        return StatePair(scalar * self.u, scalar * self.v)

    __rmul__ = __mul__

    def __neg__(self):
        return StatePair(-self.u, -self.v)


class EnergyFunctional(abc.ABC):
    """
    Phi on a split Hilbert space, given through its Gram matrices and the
    nonlinear part I.

    Vectors are coefficient vectors; derivatives of I are returned as dual
    vectors r with <I'(z), w> = r.u . w.u + r.v . w.v.

    Attributes
    ----------
    size_plus, size_minus : int
        Dimensions of the coefficient vectors of X+ and X-.
    node_weight : float
        Quadrature weight per node; dividing a dual vector by it gives the
        pointwise (strong form) residual.
    """

    node_weight = 1.0

    @property
    @abc.abstractmethod
    def size_plus(self):
        pass

    @property
    @abc.abstractmethod
    def size_minus(self):
        pass

    @property
    @abc.abstractmethod
    def gram_plus(self):
        """Sparse Gram matrix of the X+ inner product."""

    @property
    @abc.abstractmethod
    def gram_minus(self):
        """Sparse Gram matrix of the X- inner product."""

    @abc.abstractmethod
    def riesz_plus(self, r):
        pass

    @abc.abstractmethod
    def riesz_minus(self, r):
        pass

    @abc.abstractmethod
    def nonlinear(self, z):
        """I(z)."""

    @abc.abstractmethod
    def nonlinear_gradient(self, z):
        """Dual vector of I'(z) as a `StatePair`."""

    @abc.abstractmethod
    def nonlinear_hessian(self, z):
        """Blocks `(uu, uv, vv)` of the Euclidean Hessian of I, sparse."""

    @abc.abstractmethod
    def principal_direction(self):
        """A positive, symmetric default direction in X+ (unnormalized)."""

    @abc.abstractmethod
    def sample_state(self, rng, amplitude=1.0):
        """A seeded random `StatePair`."""

    def typical_amplitude(self):
        """Scale of the nontrivial critical points, used to seed searches."""
        return 1.0

    def check_state(self, z):
        if z.u.shape != (self.size_plus,) or z.v.shape != (self.size_minus,):
            raise ValueError(
                "state has shapes {0}, {1}; expected ({2},), ({3},)".format(
                    z.u.shape, z.v.shape, self.size_plus, self.size_minus
                )
            )
        return z

    def inner_plus(self, a, b):
        return float(a @ (self.gram_plus @ b))

    def inner_minus(self, a, b):
        return float(a @ (self.gram_minus @ b))

    def norm_plus(self, a):
        return np.sqrt(max(self.inner_plus(a, a), 0.0))

    def norm_minus(self, a):
        return np.sqrt(max(self.inner_minus(a, a), 0.0))

    def inner(self, z, w):
        return self.inner_plus(z.u, w.u) + self.inner_minus(z.v, w.v)

    def norm(self, z):
        return np.sqrt(max(self.inner(z, z), 0.0))

    def phi(self, z):
        self.check_state(z)
        return (
            0.5 * self.inner_plus(z.u, z.u)
            - 0.5 * self.inner_minus(z.v, z.v)
            - self.nonlinear(z)
        )

    def phi_prime_apply(self, z, w):
        self.check_state(z)
        self.check_state(w)
        r = self.nonlinear_gradient(z)
        return (
            self.inner_plus(z.u, w.u)
            - self.inner_minus(z.v, w.v)
            - float(r.u @ w.u + r.v @ w.v)
        )

    def phi_gradient(self, z):
        """Riesz representative G of Phi'(z): <G, w>_X = <Phi'(z), w>."""
        self.check_state(z)
        r = self.nonlinear_gradient(z)
        return StatePair(z.u - self.riesz_plus(r.u), -z.v - self.riesz_minus(r.v))

    def euclidean_gradient(self, z):
        """Dual vector of Phi'(z); zero exactly at critical points."""
        r = self.nonlinear_gradient(z)
        return StatePair(
            self.gram_plus @ z.u - r.u, -(self.gram_minus @ z.v) - r.v
        )

    def euclidean_hessian(self, z):
        uu, uv, vv = self.nonlinear_hessian(z)
        return sparse.bmat(
            [
                [self.gram_plus - uu, -uv],
                [-uv.T, -self.gram_minus - vv],
            ],
            format="csc",
        )

    def pointwise_residual(self, z):
        """Strong-form residual of the Euler-Lagrange system, per node."""
        return self.euclidean_gradient(z) * (1.0 / self.node_weight)

    def nonlinear_derivative_ratio(self, z):
        """1/2 <I'(z), z> / I(z); (A1) requires it to exceed 1."""
        r = self.nonlinear_gradient(z)
        return 0.5 * float(r.u @ z.u + r.v @ z.v) / self.nonlinear(z)


class GridEnergy(EnergyFunctional):
    """
    Finite-difference discretization of Phi on a `Grid`, both components in
    H^1_0 with the `inner_product_x` inner product and
    I(z) = quadrature of F(x_i, u_i, v_i).

    Parameters
    ----------
    grid : src.mesh.Grid
    spec : src.nonlinearity.NonlinearitySpec
    """

    def __init__(self, grid, spec):
        self.grid = grid
        self.spec = spec
        self.node_weight = grid.cell_volume

    @property
    def size_plus(self):
        return self.grid.size

    @property
    def size_minus(self):
        return self.grid.size

    @property
    def gram_plus(self):
        return self.grid.stiffness

    @property
    def gram_minus(self):
        return self.grid.stiffness

    def riesz_plus(self, r):
        return self.grid.riesz(r)

    def riesz_minus(self, r):
        return self.grid.riesz(r)

    def nodal_pairs(self, z):
        return np.column_stack([z.u, z.v])

    def nonlinear(self, z):
        return self.grid.integrate(self.spec.value(self.grid.coordinates,
                                                   self.nodal_pairs(z)))

    def nonlinear_gradient(self, z):
        gradient = self.spec.gradient(self.grid.coordinates, self.nodal_pairs(z))
        return StatePair(
            self.node_weight * gradient[:, 0], self.node_weight * gradient[:, 1]
        )

    def nodal_gradient(self, z):
        """grad F(x_i, z_i) per node, shape `(size, 2)`."""
        return self.spec.gradient(self.grid.coordinates, self.nodal_pairs(z))

    def nonlinear_hessian(self, z):
        hessian = self.node_weight * self.spec.hessian(
            self.grid.coordinates, self.nodal_pairs(z)
        )
        return (
            sparse.diags(hessian[:, 0, 0], format="csr"),
            sparse.diags(hessian[:, 0, 1], format="csr"),
            sparse.diags(hessian[:, 1, 1], format="csr"),
        )

    def principal_direction(self):
        return self.grid.principal_mode()

    def typical_amplitude(self):
        # balance -Delta u ~ p f |u|^(p-2) u with the first eigenvalue
        p = self.spec.growth_exponent
        eigenvalue = self.grid.dim * (np.pi / self.grid.extent) ** 2
        f_mean = float(np.mean(np.abs(self.spec.value(
            self.grid.coordinates, np.tile([1.0, 0.0], (self.grid.size, 1))
        ))))
        if f_mean <= 0 or p <= 2:
            return 1.0
        return (eigenvalue / (p * f_mean)) ** (1.0 / (p - 2))

    def sample_state(self, rng, amplitude=1.0):
        modes = self.grid.modes(4)
        u = rng.normal(size=len(modes)) @ modes
        v = rng.normal(size=len(modes)) @ modes
        scale = amplitude / max(np.max(np.abs(u)), 1e-12)
        return StatePair(scale * u, scale * v)


def phi(grid, spec, z):
    """Phi(z) = 1/2 <u,u>_X - 1/2 <v,v>_X - quadrature of F."""
    return GridEnergy(grid, spec).phi(z)


def phi_prime_apply(grid, spec, z, w):
    """<Phi'(z), w>."""
    return GridEnergy(grid, spec).phi_prime_apply(z, w)


def phi_gradient(grid, spec, z):
    """Sobolev gradient of Phi at z."""
    return GridEnergy(grid, spec).phi_gradient(z)
