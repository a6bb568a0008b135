import numpy as np

from src.energy import GridEnergy
from src.gradcheck import GradCheck, phi_gradcheck, psi_gradcheck, tangent_direction
from src.mesh import build_grid
from src.nehari import retract
from src.nonlinearity import PowerNonlinearity, build_nonlinearity


class TestPhiGradcheck:
    def test_power_family(self):
        energy = GridEnergy(build_grid(1, 15), PowerNonlinearity(p=4.0))
        check = phi_gradcheck(energy, count=20, seed=0)
        assert check.passed
        assert len(check.errors) == 20

    def test_two_dimensional(self):
        grid = build_grid(2, 5)
        spec = build_nonlinearity("power", 3.0, "affine", [1.0, 0.2, 0.4], dim=2)
        assert phi_gradcheck(GridEnergy(grid, spec), count=10, seed=1).passed


class TestPsiGradcheck:
    def test_cubic(self):
        energy = GridEnergy(build_grid(1, 15), PowerNonlinearity(p=3.0))
        check = psi_gradcheck(energy, count=20, seed=2)
        assert check.max_error <= 1e-5

    def test_tangent_direction(self):
        energy = GridEnergy(build_grid(1, 9), PowerNonlinearity())
        w = retract(energy, energy.principal_direction())
        z = tangent_direction(energy, w, np.random.default_rng(0))
        assert abs(energy.inner_plus(z, w)) < 1e-12
        assert abs(energy.norm_plus(z) - 1.0) < 1e-12


class TestGradCheck:
    def test_failure_text(self):
        check = GradCheck("psi_gradient", np.array([1e-7, 1e-3]), 1e-5)
        assert not check.passed
        assert "fail" in check.to_text()
