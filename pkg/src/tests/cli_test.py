import json
import os

import numpy as np
import pandas as pd

from src.cli import (
    EXIT_CONDITIONS,
    EXIT_CONFIG,
    EXIT_NO_CONVERGENCE,
    EXIT_OK,
    run,
)
from src.energy import StatePair, phi
from src.mesh import build_grid
from src.nonlinearity import PowerNonlinearity

BASE_CONFIG = """
grid.dim = 1
grid.n = 15
nonlinearity.p = 4.0
solver.restarts = 2
"""


def _write_config(tmp_path, extra="", name="run.cfg"):
    path = tmp_path / name
    path.write_text(BASE_CONFIG + extra + "output.dir = {0}\n".format(tmp_path / "out"))
    return str(path)


class TestSolve:
    def test_outputs(self, tmp_path, capsys):
        config = _write_config(tmp_path)
        assert run(["--verbosity", "0", "solve", "--config", config]) == EXIT_OK
        out_dir = tmp_path / "out"
        for name in ("fields.csv", "summary.json", "outer_history.txt", "nehari.log"):
            assert os.path.isfile(out_dir / name)
        summary = json.loads((out_dir / "summary.json").read_text())
        assert summary["energy"] > 0
        assert summary["converged"] is True
        assert summary["grid.n"] == 15
        assert len(summary["multistart_energies"]) == 2
        assert "energy=" in capsys.readouterr().out

    def test_fields_round_trip(self, tmp_path):
        config = _write_config(tmp_path)
        run(["--verbosity", "0", "solve", "--config", config])
        frame = pd.read_csv(tmp_path / "out" / "fields.csv")
        assert list(frame.columns) == ["x", "u", "v"]
        summary = json.loads((tmp_path / "out" / "summary.json").read_text())
        z = StatePair(frame["u"].to_numpy(), frame["v"].to_numpy())
        energy = phi(build_grid(1, 15), PowerNonlinearity(p=4.0), z)
        assert abs(energy - summary["energy"]) <= 1e-12 * abs(summary["energy"])

    def test_deterministic_summary(self, tmp_path):
        config = _write_config(tmp_path)
        summaries = []
        for _ in range(2):
            run(["--verbosity", "0", "solve", "--config", config])
            summary = json.loads((tmp_path / "out" / "summary.json").read_text())
            summary.pop("timestamp")
            summaries.append(json.dumps(summary, sort_keys=True))
        assert summaries[0] == summaries[1]

    def test_out_override(self, tmp_path):
        config = _write_config(tmp_path)
        other = tmp_path / "other"
        assert run(["--verbosity", "0", "solve", "--config", config,
                    "--out", str(other)]) == EXIT_OK
        assert os.path.isfile(other / "summary.json")

    def test_history_file(self, tmp_path):
        config = _write_config(tmp_path)
        run(["--verbosity", "0", "solve", "--config", config])
        history = pd.read_csv(tmp_path / "out" / "outer_history.txt", sep="\t")
        assert list(history.columns) == [
            "restart", "iteration", "psi", "grad_norm", "alpha", "s", "step_kind"
        ]
        assert set(history["restart"]) == {0, 1}

    def test_quadratic_is_invalid(self, tmp_path, capsys):
        config = _write_config(tmp_path, "nonlinearity.p = 2\n")
        assert run(["--verbosity", "0", "solve", "--config", config]) == EXIT_CONFIG
        err = capsys.readouterr().err.strip().splitlines()
        assert err[-1].startswith("CONFIG_INVALID:")

    def test_unknown_key(self, tmp_path):
        config = _write_config(tmp_path, "solver.momentum = 0.9\n")
        assert run(["--verbosity", "0", "solve", "--config", config]) == EXIT_CONFIG

    def test_no_convergence(self, tmp_path, capsys):
        config = _write_config(
            tmp_path, "solver.max_outer = 1\nsolver.tol_outer = 1e-14\n"
            "solver.restarts = 1\n"
        )
        code = run(["--verbosity", "0", "solve", "--config", config])
        assert code == EXIT_NO_CONVERGENCE
        assert "NO_CONVERGENCE:" in capsys.readouterr().err
        summary = json.loads((tmp_path / "out" / "summary.json").read_text())
        assert summary["converged"] is False


class TestOtherCommands:
    def test_check_nonlinearity(self, tmp_path, capsys):
        config = _write_config(tmp_path)
        assert run(["check-nonlinearity", "--config", config]) == EXIT_OK
        out = capsys.readouterr().out
        assert "F1\tpass" in out and "F8\tpass" in out

    def test_check_nonlinearity_near_quadratic(self, tmp_path, capsys):
        config = _write_config(
            tmp_path, "nonlinearity.p = 2.3\nsolver.condition_sample.count = 50\n"
        )
        assert run(["check-nonlinearity", "--config", config, "--seed", "4"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "F3\tpass" in out and "F4\tpass" in out

    def test_check_nonlinearity_quadratic(self, tmp_path, capsys):
        config = _write_config(tmp_path, "nonlinearity.p = 2\n")
        assert run(["check-nonlinearity", "--config", config]) == EXIT_CONDITIONS
        captured = capsys.readouterr()
        assert "F5\tfail" in captured.out
        assert "CONDITIONS_FAILED:" in captured.err

    def test_gradcheck(self, tmp_path, capsys):
        config = _write_config(tmp_path)
        assert run(["--verbosity", "0", "gradcheck", "--config", config]) == EXIT_OK
        out = capsys.readouterr().out
        assert "phi_prime_apply" in out and "psi_gradient" in out

    def test_oracle(self, tmp_path, capsys):
        config = _write_config(tmp_path)
        assert run(["--verbosity", "0", "oracle", "--config", config,
                    "--count", "5"]) == EXIT_OK
        assert "critical points" in capsys.readouterr().out

    def test_toy(self, capsys):
        assert run(["--verbosity", "0", "toy", "--c", "4"]) == EXIT_OK
        out = capsys.readouterr().out
        energy = float(out.split("ground energy=")[1].split()[0])
        assert abs(energy - 0.0625) < 1e-8
        assert np.isclose(float(out.split("m^(w): s=")[1].split()[0]), 0.5)
