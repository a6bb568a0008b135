import numpy as np
import pytest

from src.energy import GridEnergy, StatePair
from src.errors import OracleError
from src.mesh import build_grid
from src.nonlinearity import PowerNonlinearity
from src.oracle import NewtonMultistart, ToyModel, newton_multistart, toy_mhat
from src.solver import residuals

CLOSE = 1e-10


class TestToyMhat:
    @pytest.mark.parametrize("c, s, value", [(1.0, 1.0, 0.25), (4.0, 0.5, 0.0625)])
    def test_closed_form(self, c, s, value):
        result = toy_mhat(ToyModel(n_plus=2, n_minus=3, c=c), [0.3, -1.0])
        assert abs(result.s - s) < CLOSE
        assert abs(result.value - value) < CLOSE
        assert np.all(result.v == 0)
        assert result.v.shape == (3,)

    def test_zero_direction(self):
        with pytest.raises(ValueError):
            toy_mhat(ToyModel(), [0.0])

    def test_invalid_model(self):
        with pytest.raises(ValueError):
            ToyModel(c=0.0)


class TestToyModel:
    def test_energy(self):
        model = ToyModel(n_plus=2, n_minus=1, c=1.0)
        z = StatePair(np.array([1.0, 0.0]), np.array([0.0]))
        assert abs(model.phi(z) - 0.25) < CLOSE
        assert np.max(np.abs(model.euclidean_gradient(z).as_vector())) < CLOSE

    def test_critical_points(self):
        model = ToyModel(n_plus=2, n_minus=1, c=1.0)
        points = NewtonMultistart(model).run(20, seed=0)
        assert points.points
        for point in points.points:
            assert abs(point.z.v[0]) < 1e-8
            assert abs(np.linalg.norm(point.z.u) - 1.0) < 1e-8
            assert abs(point.energy - 0.25) < 1e-8


class TestNewtonMultistart:
    def setup_method(self, test_method):
        self.grid = build_grid(1, 15)
        self.spec = PowerNonlinearity(p=4.0)

    def test_excludes_trivial(self):
        points = newton_multistart(self.grid, self.spec, count=10, seed=0)
        assert all(point.energy > 0 for point in points.points)
        assert points.n_starts == 10
        assert len(points.points) + points.n_diverged + points.n_trivial <= 10
        energies = [point.energy for point in points.points]
        assert energies == sorted(energies)

    def test_points_on_manifold(self):
        points = newton_multistart(self.grid, self.spec, count=10, seed=0)
        for point in points.points:
            assert point.energy > 0
            assert residuals(self.grid, self.spec, point.z).residual_manifold <= 1e-8

    def test_seed_independent_minimum(self):
        first = newton_multistart(self.grid, self.spec, count=10, seed=0)
        second = newton_multistart(self.grid, self.spec, count=10, seed=1)
        assert abs(first.min_energy - second.min_energy) < 1e-8

    def test_distinct_points(self):
        points = newton_multistart(self.grid, self.spec, count=10, seed=2)
        for i, a in enumerate(points.points):
            for b in points.points[i + 1 :]:
                assert self.grid.norm(a.z.u - b.z.u) > 1e-6 or self.grid.norm(
                    a.z.v - b.z.v
                ) > 1e-6

    def test_frame(self):
        points = newton_multistart(self.grid, self.spec, count=5, seed=0)
        frame = points.to_frame()
        assert list(frame.columns) == ["index", "energy", "residual"]
        assert len(frame) == len(points.points)

    def test_all_diverged(self):
        # a single iteration cannot reach the tolerance
        oracle = NewtonMultistart(
            GridEnergy(build_grid(1, 7), self.spec), tol=1e-30, max_iter=1
        )
        with pytest.raises(OracleError) as error:
            oracle.run(3, seed=0)
        assert error.value.code == "NO_SOLUTIONS"
