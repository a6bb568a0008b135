"""
Solver configuration files.

Plain configs hold one `key = value` pair per line with `#` comments; each
value is typed by `yaml.safe_load`, so `[1.0, 0.5]` reads as a list and
`1e-8` as a float. Files ending in `.yml` or `.yaml` are read as nested
YAML mappings and flattened to the same dotted keys.
"""
import os
from dataclasses import dataclass, field

import numpy as np
import yaml

from src.errors import ConfigError
from src.mesh import Grid
from src.nonlinearity import SamplingConfig, build_nonlinearity
from src.solver import ArmijoOptions, SolverOptions

FAMILIES = ("power",)
WEIGHT_KINDS = ("constant", "affine", "table")
START_MODES = ("eigen", "random")


@dataclass
class GridConfig:
    dim: int = 1
    n: int = 15
    extent: float = 1.0


@dataclass
class NonlinearityConfig:
    family: str = "power"
    p: float = 4.0
    weight_kind: str = "constant"
    weight_params: object = None


@dataclass
class SolverConfig:
    tol_outer: float = 1e-8
    tol_inner: float = 1e-10
    max_outer: int = 500
    max_iter_inner: int = 200
    restarts: int = 5
    seed: int = 0
    start: str = "eigen"
    c1: float = 1e-4
    backtrack: float = 0.5
    alpha0: float = 1.0
    skip_condition_check: bool = False
    condition_count: int = 200
    condition_radius_small: float = 1e-2
    condition_radius_large: float = 10.0
    condition_seed: int = 0


# dotted key -> (section attribute, field name, type)
_KEYS = {
    "grid.dim": ("grid", "dim", int),
    "grid.n": ("grid", "n", int),
    "grid.extent": ("grid", "extent", float),
    "nonlinearity.family": ("nonlinearity", "family", str),
    "nonlinearity.p": ("nonlinearity", "p", float),
    "nonlinearity.weight.kind": ("nonlinearity", "weight_kind", str),
    "nonlinearity.weight.params": ("nonlinearity", "weight_params", None),
    "solver.tol_outer": ("solver", "tol_outer", float),
    "solver.tol_inner": ("solver", "tol_inner", float),
    "solver.max_outer": ("solver", "max_outer", int),
    "solver.max_iter_inner": ("solver", "max_iter_inner", int),
    "solver.restarts": ("solver", "restarts", int),
    "solver.seed": ("solver", "seed", int),
    "solver.start": ("solver", "start", str),
    "solver.armijo.c1": ("solver", "c1", float),
    "solver.armijo.backtrack": ("solver", "backtrack", float),
    "solver.armijo.alpha0": ("solver", "alpha0", float),
    "solver.skip_condition_check": ("solver", "skip_condition_check", bool),
    "solver.condition_sample.count": ("solver", "condition_count", int),
    "solver.condition_sample.radius_small": ("solver", "condition_radius_small", float),
    "solver.condition_sample.radius_large": ("solver", "condition_radius_large", float),
    "solver.condition_sample.seed": ("solver", "condition_seed", int),
    "output.dir": (None, "output_dir", str),
}


@dataclass
class Config:
    grid: GridConfig = field(default_factory=GridConfig)
    nonlinearity: NonlinearityConfig = field(default_factory=NonlinearityConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    output_dir: str = "nehari_outputs"

    def set(self, key, value):
        if key not in _KEYS:
            raise ConfigError("unknown config key '{0}'".format(key))
        section, name, kind = _KEYS[key]
        target = self if section is None else getattr(self, section)
        setattr(target, name, _coerce(key, value, kind))

    def get(self, key):
        section, name, _ = _KEYS[key]
        target = self if section is None else getattr(self, section)
        return getattr(target, name)

    def echo(self):
        """Flat dotted-key mapping of every setting."""
        echoed = {}
        for key in _KEYS:
            value = self.get(key)
            if isinstance(value, np.ndarray):
                value = value.tolist()
            echoed[key] = value
        return echoed

    def build_grid(self):
        try:
            return Grid(self.grid.dim, self.grid.n, self.grid.extent)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def build_spec(self):
        try:
            return build_nonlinearity(
                self.nonlinearity.family,
                self.nonlinearity.p,
                self.nonlinearity.weight_kind,
                self.nonlinearity.weight_params,
                dim=self.grid.dim,
                extent=self.grid.extent,
            )
        except ConfigError:
            raise
        except (ValueError, OSError) as exc:
            raise ConfigError("bad nonlinearity: {0}".format(exc)) from exc

    def solver_options(self):
        solver = self.solver
        return SolverOptions(
            tol_outer=solver.tol_outer,
            max_outer=solver.max_outer,
            armijo=ArmijoOptions(
                c1=solver.c1, backtrack=solver.backtrack, alpha0=solver.alpha0
            ),
            restarts=solver.restarts,
            seed=solver.seed,
            tol_inner=solver.tol_inner,
            max_iter_inner=solver.max_iter_inner,
            start=solver.start,
            skip_condition_check=solver.skip_condition_check,
            condition_sample=self.condition_sample(),
        )

    def condition_sample(self):
        solver = self.solver
        return SamplingConfig(
            count=solver.condition_count,
            radius_small=solver.condition_radius_small,
            radius_large=solver.condition_radius_large,
            seed=solver.condition_seed,
        )

    def validate(self):
        """
        Raises
        ------
        ConfigError
            On the first violated constraint.
        """
        grid, nonlinearity, solver = self.grid, self.nonlinearity, self.solver
        checks = [
            (grid.dim in (1, 2), "grid.dim must be 1 or 2"),
            (grid.n >= 1, "grid.n must be >= 1"),
            (grid.extent > 0, "grid.extent must be positive"),
            (nonlinearity.family in FAMILIES,
             "nonlinearity.family must be one of {0}".format(FAMILIES)),
            (nonlinearity.weight_kind in WEIGHT_KINDS,
             "nonlinearity.weight.kind must be one of {0}".format(WEIGHT_KINDS)),
            (nonlinearity.p > 2, "nonlinearity.p must be > 2 (got {0})".format(
                nonlinearity.p)),
            (solver.tol_outer > 0 and solver.tol_inner > 0,
             "solver tolerances must be positive"),
            (solver.max_outer >= 1 and solver.max_iter_inner >= 1,
             "solver iteration limits must be >= 1"),
            (solver.restarts >= 1, "solver.restarts must be >= 1"),
            (solver.start in START_MODES,
             "solver.start must be one of {0}".format(START_MODES)),
            (0 < solver.c1 < 1, "solver.armijo.c1 must lie in (0, 1)"),
            (0 < solver.backtrack < 1, "solver.armijo.backtrack must lie in (0, 1)"),
            (solver.alpha0 > 0, "solver.armijo.alpha0 must be positive"),
        ]
        for ok, reason in checks:
            if not ok:
                raise ConfigError(reason)
        self.condition_sample().validate()
        # p > 2 and f > 0 at every node
        self.build_spec().validate(self.build_grid().coordinates)
        return self


def _coerce(key, value, kind):
    if kind is None:
        return value
    if kind is bool:
        if isinstance(value, bool):
            return value
        raise ConfigError("{0} must be true or false, got {1!r}".format(key, value))
    if kind is float and isinstance(value, str):
        # YAML 1.1 reads exponent-only floats such as 1e-8 as strings
        try:
            return float(value)
        except ValueError:
            pass
    if kind is int and isinstance(value, float) and value.is_integer():
        return int(value)
    if kind is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if isinstance(value, kind) and not isinstance(value, bool):
        return value
    raise ConfigError("{0} must be {1}, got {2!r}".format(key, kind.__name__, value))


def _flatten(mapping, prefix=""):
    flat = {}
    for key, value in mapping.items():
        dotted = "{0}{1}".format(prefix, key)
        if isinstance(value, dict) and dotted != "nonlinearity.weight.params":
            flat.update(_flatten(value, dotted + "."))
        else:
            flat[dotted] = value
    return flat


def parse_config_text(text):
    """Parses `key = value` lines into a `Config`."""
    config = Config()
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("line {0}: expected 'key = value'".format(number))
        key, raw = (part.strip() for part in line.split("=", 1))
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError as exc:
            raise ConfigError("line {0}: {1}".format(number, exc)) from exc
        config.set(key, value)
    return config


def load_config(path):
    """
    Reads a plain or YAML config file.

    Raises
    ------
    ConfigError
        If the file is missing or holds an unknown key or a mistyped value.
    """
    if not os.path.isfile(path):
        raise ConfigError("config file not found: {0}".format(path))
    with open(path, "r") as file_handle:
        text = file_handle.read()
    if not path.endswith((".yml", ".yaml")):
        return parse_config_text(text)
    try:
        loaded = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError("{0}: {1}".format(path, exc)) from exc
    if not isinstance(loaded, dict):
        raise ConfigError("{0}: expected a mapping".format(path))
    config = Config()
    for key, value in _flatten(loaded).items():
        config.set(key, value)
    return config
