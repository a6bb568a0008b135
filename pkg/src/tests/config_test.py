import pytest

from src.config import Config, load_config, parse_config_text
from src.errors import ConfigError
from src.nonlinearity import AffineWeight

CONFIG_TEXT = """
# quartic on the unit interval
grid.dim = 1
grid.n = 7
nonlinearity.p = 3
nonlinearity.weight.kind = affine
nonlinearity.weight.params = [1.0, 0.5]   # f = 1 + x / 2
solver.tol_outer = 1e-9
solver.restarts = 2
solver.skip_condition_check = true
output.dir = out
"""


class TestParseConfig:
    def test_values(self):
        config = parse_config_text(CONFIG_TEXT)
        assert config.grid.n == 7
        assert config.nonlinearity.p == 3.0
        assert isinstance(config.nonlinearity.p, float)
        assert config.nonlinearity.weight_params == [1.0, 0.5]
        assert config.solver.tol_outer == 1e-9
        assert config.solver.skip_condition_check is True
        assert config.output_dir == "out"

    def test_defaults(self):
        config = parse_config_text("")
        assert config.grid.dim == 1
        assert config.grid.n == 15
        assert config.solver.restarts == 5
        assert config.solver.c1 == 1e-4
        assert config.output_dir == "nehari_outputs"

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            parse_config_text("grid.m = 3")

    def test_missing_separator(self):
        with pytest.raises(ConfigError):
            parse_config_text("grid.n 3")

    def test_mistyped_value(self):
        with pytest.raises(ConfigError):
            parse_config_text("grid.n = many")

    def test_builds_objects(self):
        config = parse_config_text(CONFIG_TEXT).validate()
        assert config.build_grid().size == 7
        assert isinstance(config.build_spec().weight, AffineWeight)
        options = config.solver_options()
        assert options.restarts == 2
        assert options.armijo.backtrack == 0.5

    def test_echo(self):
        echo = parse_config_text(CONFIG_TEXT).echo()
        assert echo["grid.n"] == 7
        assert echo["nonlinearity.weight.params"] == [1.0, 0.5]
        assert echo["output.dir"] == "out"

    def test_condition_sample(self):
        config = parse_config_text(
            "solver.condition_sample.count = 50\n"
            "solver.condition_sample.radius_small = 1e-4\n"
            "solver.condition_sample.seed = 9\n"
        ).validate()
        sample = config.solver_options().condition_sample
        assert sample.count == 50
        assert sample.radius_small == 1e-4
        assert sample.radius_large == 10.0
        assert sample.seed == 9
        assert config.echo()["solver.condition_sample.count"] == 50


class TestValidate:
    @pytest.mark.parametrize(
        "line",
        [
            "nonlinearity.p = 2",
            "grid.dim = 3",
            "grid.n = 0",
            "solver.tol_inner = 0",
            "solver.restarts = 0",
            "solver.armijo.c1 = 1.5",
            "solver.start = zero",
            "nonlinearity.weight.params = -1.0",
            "solver.condition_sample.radius_small = 100",
            "solver.condition_sample.count = 0",
        ],
    )
    def test_invalid(self, line):
        with pytest.raises(ConfigError) as error:
            parse_config_text(line).validate()
        assert error.value.code == "CONFIG_INVALID"

    def test_default_is_valid(self):
        Config().validate()


class TestLoadConfig:
    def test_plain(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text(CONFIG_TEXT)
        assert load_config(str(path)).grid.n == 7

    def test_yaml(self, tmp_path):
        path = tmp_path / "run.yml"
        path.write_text(
            "grid: {dim: 2, n: 5}\n"
            "nonlinearity: {p: 4.0, weight: {kind: constant, params: 2.0}}\n"
            "solver: {armijo: {c1: 1.0e-3}}\n"
        )
        config = load_config(str(path))
        assert config.grid.dim == 2
        assert config.nonlinearity.weight_params == 2.0
        assert config.solver.c1 == 1e-3

    def test_missing(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(str(tmp_path / "absent.cfg"))

    def test_shipped_configs(self):
        for path in (
            "solver_configs/power_1d.cfg",
            "solver_configs/power_1d_affine_p3.cfg",
            "solver_configs/power_2d.yml",
        ):
            load_config(path).validate()
