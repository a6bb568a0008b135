import numpy as np
import pytest

from src.energy import GridEnergy, StatePair
from src.errors import InnerMaximizationError, SphereError
from src.gradcheck import continuity_probe, psi_gradcheck
from src.mesh import build_grid
from src.nehari import (
    InnerOptions,
    NehariMap,
    ReducedFunctional,
    check_uniqueness,
    inner_maximize,
    lower_bound_probe,
    m_inverse,
    psi,
    psi_gradient,
    psi_hat,
    retract,
)
from src.nonlinearity import PowerNonlinearity, build_nonlinearity
from src.oracle import ToyModel

CLOSE = 1e-10
TOY_CLOSE = 1e-8


class TestToyInnerMaximize:
    @pytest.mark.parametrize("c, s, value", [(1.0, 1.0, 0.25), (4.0, 0.5, 0.0625)])
    def test_closed_form(self, c, s, value):
        model = ToyModel(n_plus=1, n_minus=1, c=c)
        result = NehariMap(model).maximize(np.array([1.0]))
        assert abs(result.s - s) < TOY_CLOSE
        assert abs(result.phi_value - value) < TOY_CLOSE
        assert np.all(result.v == 0)
        assert result.converged

    def test_warm_start_away_from_maximizer(self):
        model = ToyModel(n_plus=2, n_minus=2, c=1.0)
        result = NehariMap(model).maximize(
            np.array([1.0, -2.0]), warm_start=(3.0, np.array([0.4, -0.2]))
        )
        assert abs(result.phi_value - 0.25) < TOY_CLOSE
        assert np.max(np.abs(result.v)) < 1e-8

    def test_reduced_functional_constant(self):
        model = ToyModel(n_plus=3, n_minus=1, c=1.0)
        reduced = ReducedFunctional(model)
        rng = np.random.default_rng(0)
        for _ in range(5):
            w = reduced.retract(rng.normal(size=3))
            assert abs(reduced.value(w) - 0.25) < TOY_CLOSE
            assert model.norm_plus(reduced.gradient(w)) < CLOSE


class TestInnerMaximize:
    def setup_method(self, test_method):
        self.grid = build_grid(1, 15)
        self.spec = PowerNonlinearity(p=4.0)
        self.energy = GridEnergy(self.grid, self.spec)
        self.w = StatePair(self.grid.principal_mode(), np.zeros(self.grid.size))

    def test_scaling_invariance(self):
        first = inner_maximize(self.grid, self.spec, self.w)
        second = inner_maximize(self.grid, self.spec, 2.0 * self.w)
        assert abs(first.s - second.s) < CLOSE
        assert self.energy.norm(first.z - second.z) < CLOSE
        assert abs(psi_hat(self.grid, self.spec, 0.5 * self.w) - first.phi_value) < CLOSE

    def test_on_manifold(self):
        result = inner_maximize(self.grid, self.spec, self.w)
        bound = 1e-9 * (1 + abs(result.phi_value))
        assert abs(self.energy.phi_prime_apply(result.z, result.z)) < bound
        assert result.phi_value > 0
        assert result.manifold_residual <= InnerOptions().tol_inner * (
            1 + abs(result.phi_value)
        )

    def test_w_in_xminus(self):
        w = StatePair(np.zeros(self.grid.size), np.ones(self.grid.size))
        with pytest.raises(InnerMaximizationError) as error:
            inner_maximize(self.grid, self.spec, w)
        assert error.value.code == "W_IN_XMINUS"

    def test_no_convergence_carries_partial_result(self):
        options = InnerOptions(tol_inner=1e-30, max_iter=2)
        with pytest.raises(InnerMaximizationError) as error:
            inner_maximize(self.grid, self.spec, self.w, options)
        assert error.value.code == "NO_CONVERGENCE"
        assert error.value.result is not None

    def test_global_maximum_on_half_space(self):
        grid = build_grid(1, 7)
        spec = build_nonlinearity("power", 3.0, "affine", [1.0, 0.5])
        energy = GridEnergy(grid, spec)
        rng = np.random.default_rng(11)
        for _ in range(10):
            w = energy.sample_state(rng).u
            result = inner_maximize(grid, spec, StatePair(w, np.zeros(grid.size)))
            e = result.direction
            radius = max(3 * energy.norm_minus(result.v), result.s)
            for _ in range(100):
                s = rng.uniform(0, 3 * result.s)
                v = energy.sample_state(rng, rng.uniform(0, radius)).v
                assert result.phi_value >= energy.phi(StatePair(s * e, v)) - 1e-10

    def test_high_mode_direction(self):
        # far out on the ray, s * dPhi/ds decides convergence
        grid = build_grid(1, 7)
        spec = build_nonlinearity("power", 3.0, "affine", [1.0, 0.5])
        w = StatePair(grid.modes(7)[6], np.zeros(grid.size))
        result = inner_maximize(grid, spec, w)
        assert result.converged
        assert result.s > 10
        assert result.manifold_residual <= InnerOptions().tol_inner * (
            1 + abs(result.phi_value)
        )

    def test_uniqueness(self):
        report = check_uniqueness(self.energy, self.w.u, restarts=10, seed=2)
        assert report.agree
        assert report.max_distance <= 1e-6
        assert report.code is None


class TestMInverse:
    def setup_method(self, test_method):
        self.grid = build_grid(1, 9)
        self.energy = GridEnergy(self.grid, PowerNonlinearity(p=4.0))

    def test_normalized_input(self):
        u = retract(self.energy, self.grid.principal_mode())
        z = StatePair(u, np.ones(self.grid.size))
        result = m_inverse(self.grid, z)
        assert np.allclose(result.u, u, atol=CLOSE)
        assert not np.any(result.v)

    def test_homogeneous(self):
        z = self.energy.sample_state(np.random.default_rng(1))
        assert np.allclose(m_inverse(self.grid, 3.0 * z).u, m_inverse(self.energy, z).u)

    def test_xminus(self):
        with pytest.raises(SphereError) as error:
            m_inverse(self.grid, StatePair(np.zeros(9), np.ones(9)))
        assert error.value.code == "Z_IN_XMINUS"

    def test_inverse_of_inner_maximizer(self):
        rng = np.random.default_rng(3)
        nehari = NehariMap(self.energy)
        for _ in range(20):
            w = retract(self.energy, self.energy.sample_state(rng).u)
            z = nehari.maximize(w).z
            assert np.max(np.abs(m_inverse(self.energy, z).u - w)) < 1e-8


class TestPsi:
    def setup_method(self, test_method):
        self.grid = build_grid(1, 9)
        self.spec = PowerNonlinearity(p=4.0)
        self.energy = GridEnergy(self.grid, self.spec)

    def test_positive(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            w = retract(self.energy, self.energy.sample_state(rng).u)
            assert psi(self.grid, self.spec, w) > 0

    def test_off_sphere(self):
        with pytest.raises(ValueError):
            psi(self.grid, self.spec, 2.0 * retract(self.energy, self.grid.principal_mode()))

    def test_gradient_is_tangent(self):
        w = retract(self.energy, self.grid.principal_mode() + 0.2 * self.grid.modes(2)[1])
        gradient = psi_gradient(self.grid, self.spec, StatePair(w, np.zeros(9)))
        assert abs(self.energy.inner_plus(gradient, w)) < CLOSE
        assert self.energy.norm_plus(gradient) > 0

    def test_gradient_independent_of_warm_start(self):
        w = retract(self.energy, self.grid.principal_mode() + 0.2 * self.grid.modes(3)[2])
        nearby = retract(self.energy, w + 1e-3 * self.grid.modes(2)[1])
        cold = ReducedFunctional(self.energy)
        warm = ReducedFunctional(self.energy)
        warm.gradient(nearby)
        difference = self.energy.norm_plus(cold.gradient(w) - warm.gradient(w))
        assert difference <= 1e-11 * (1 + self.energy.norm_plus(cold.gradient(w)))
        assert abs(cold.value(w) - warm.value(w)) <= 1e-12 * cold.value(w)

    def test_central_differences(self):
        check = psi_gradcheck(self.energy, count=20, seed=0)
        assert check.passed
        assert check.max_error <= 1e-5

    def test_lower_bound_probe(self):
        probe = lower_bound_probe(self.energy, count=10, seed=0)
        assert probe.min_norm > 0
        assert len(probe.norms) == 10


class TestContinuity:
    def test_distances_shrink(self):
        grid = build_grid(1, 9)
        energy = GridEnergy(grid, PowerNonlinearity(p=3.0))
        w = retract(energy, grid.principal_mode())
        distances = continuity_probe(energy, w, steps=8, seed=4)
        assert len(distances) == 8
        assert distances[-1] < 1e-6
        assert distances[-1] < distances[0]
