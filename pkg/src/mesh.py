"""
This module provides the `Grid` class: a uniform finite-difference
discretization of an interval or a square with homogeneous Dirichlet
boundary, together with the H^1_0-type inner product, the quadrature rule
and the Riesz (Sobolev-gradient) solve that the rest of the package is
built on.

Boundary nodes are never stored: a scalar field is a plain float vector over
the interior nodes, in lexicographic order with x running fastest.
"""
import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg
from scipy import sparse
from scipy.sparse.linalg import cg

logger = logging.getLogger("nehari")

CG_RTOL = 1e-12


def _lap1d(n):
    # unscaled 1-D Dirichlet stiffness tridiag(-1, 2, -1)
    v = np.ones(n)
    return sparse.diags([-v[1:], 2 * v, -v[1:]], [-1, 0, 1], format="csr")


@dataclass(frozen=True)
class Grid:
    """
    Uniform grid of interior nodes on [0, extent]^dim.

    Parameters
    ----------
    dim : int
        1 (interval) or 2 (square).
    n : int
        Number of interior nodes per axis.
    extent : float, optional
        Default is 1.0. Side length of the domain.

    Attributes
    ----------
    h : float
        Spacing `extent / (n + 1)`, identical on every axis.
    size : int
        Total number of interior nodes, `n ** dim`.
    """

    dim: int
    n: int
    extent: float = 1.0

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError("Grid dimension must be 1 or 2, got {0}".format(self.dim))
        if int(self.n) != self.n or self.n < 1:
            raise ValueError("Grid needs n >= 1 interior nodes, got {0}".format(self.n))
        if not self.extent > 0:
            raise ValueError("Grid extent must be positive, got {0}".format(self.extent))

    @property
    def h(self):
        return self.extent / (self.n + 1)

    @property
    def size(self):
        return self.n ** self.dim

    @property
    def cell_volume(self):
        return self.h ** self.dim

    @cached_property
    def axis(self):
        return self.h * np.arange(1, self.n + 1)

    @cached_property
    def coordinates(self):
        """Node coordinates, shape `(size, dim)`."""
        if self.dim == 1:
            return self.axis.reshape(-1, 1)
        xx, yy = np.meshgrid(self.axis, self.axis, indexing="xy")
        return np.column_stack([xx.ravel(), yy.ravel()])

    @cached_property
    def stiffness(self):
        """
        Matrix K of the discrete inner product sum over edges of
        h^(dim-2) * (difference of a) * (difference of b).
        """
        lap = _lap1d(self.n)
        if self.dim == 2:
            eye = sparse.identity(self.n, format="csr")
            lap = sparse.kron(eye, lap) + sparse.kron(lap, eye)
        return (self.h ** (self.dim - 2) * lap).tocsr()

    @cached_property
    def _banded_stiffness(self):
        ab = np.zeros((3, self.n))
        ab[0, 1:] = -1.0 / self.h
        ab[1, :] = 2.0 / self.h
        ab[2, :-1] = -1.0 / self.h
        return ab

    def check_field(self, values, name="field"):
        """Returns `values` as a float vector, raising on size mismatch."""
        values = np.asarray(values, dtype=float)
        if values.shape != (self.size,):
            raise ValueError(
                "{0} has shape {1}, grid expects ({2},)".format(
                    name, values.shape, self.size
                )
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("{0} contains non-finite values".format(name))
        return values

    def sample(self, func):
        """Evaluates `func(*coordinate_columns)` on the interior nodes."""
        return np.asarray(func(*self.coordinates.T), dtype=float) * np.ones(self.size)

    def inner(self, a, b):
        a = self.check_field(a, "a")
        b = self.check_field(b, "b")
        return float(a @ (self.stiffness @ b))

    def norm(self, a):
        return np.sqrt(max(self.inner(a, a), 0.0))

    def integrate(self, nodal):
        nodal = self.check_field(nodal, "nodal")
        return float(self.cell_volume * np.sum(nodal))

    def riesz(self, r):
        """Solves K g = r: direct tridiagonal solve in 1-D, CG in 2-D."""
        r = self.check_field(r, "r")
        if not np.any(r):
            return np.zeros(self.size)
        if self.dim == 1:
            return scipy.linalg.solve_banded((1, 1), self._banded_stiffness, r)
        solution, info = cg(
            self.stiffness, r, rtol=CG_RTOL, atol=0.0, maxiter=20 * self.size
        )
        if info != 0:
            logger.warning("CG stopped without reaching rtol (info={0})".format(info))
        return solution

    def laplacian(self, a):
        """Five-point (three-point in 1-D) stencil Laplacian with zero boundary."""
        a = self.check_field(a, "a")
        return -(self.stiffness @ a) / self.cell_volume

    def principal_mode(self):
        """Product of first Dirichlet eigenfunctions sin(pi x / L)."""
        mode = np.sin(np.pi * self.coordinates / self.extent)
        return np.prod(mode, axis=1)

    def modes(self, count):
        """
        The `count` lowest-frequency sine products, used to build smooth
        random fields.
        """
        wavenumbers = []
        limit = min(self.n, count)
        if self.dim == 1:
            wavenumbers = [(k,) for k in range(1, limit + 1)]
        else:
            pairs = [(i, j) for i in range(1, limit + 1) for j in range(1, limit + 1)]
            wavenumbers = sorted(pairs, key=lambda ij: (ij[0] ** 2 + ij[1] ** 2, ij))
            wavenumbers = wavenumbers[:limit]
        result = []
        for ks in wavenumbers:
            mode = np.ones(self.size)
            for axis, k in enumerate(ks):
                mode = mode * np.sin(k * np.pi * self.coordinates[:, axis] / self.extent)
            result.append(mode)
        return np.array(result)


def build_grid(dim, n, extent=1.0):
    """
    Builds a `Grid` with spacing `extent / (n + 1)`.

    Raises
    ------
    ValueError
        If `dim` is not 1 or 2, `n < 1` or `extent <= 0`.
    """
    return Grid(dim=int(dim), n=int(n), extent=float(extent))


def inner_product_x(grid, a, b):
    """Discrete H^1_0 inner product of two interior fields."""
    return grid.inner(a, b)


def quadrature(grid, nodal):
    """Midpoint-type rule `h^dim * sum(nodal)`; the boundary contributes 0."""
    return grid.integrate(nodal)


def sobolev_riesz(grid, r):
    """
    Riesz representative of the linear functional `w -> r . w` in the
    `inner_product_x` inner product.
    """
    return grid.riesz(r)
