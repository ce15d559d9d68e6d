"""Run configuration: model constants, geometry, grids, time control, initial data.

Config files are INI-style text read with :mod:`configparser`.  Sections are
``[model]``, ``[geometry]``, ``[grid]``, ``[time]``, ``[initial]`` and
``[output]``; every key is optional and unknown keys are rejected.  Keys keep
their case (``B``, ``H``, ``L`` are distinct from lower-case names).

Example::

    [model]
    d1 = 0.864
    B = 86.4

    [time]
    t_end = 20000
    snapshot_times = 2000, 4000, 8000, 12000, 16000, 20000
"""

from __future__ import annotations

import configparser
import dataclasses
import io
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable, Union

import numpy as np

Profile = Union[float, Callable]


class ConfigError(ValueError):
    """Raised when a configuration value violates its constraint."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class ConfigParseError(ConfigError):
    """Raised when a config file cannot be parsed at all."""


def _positive(key, value):
    if not value > 0:
        raise ConfigError(key, f"must be > 0, got {value!r}")


def _nonnegative(key, value):
    if not value >= 0:
        raise ConfigError(key, f"must be >= 0, got {value!r}")


def _finite(key, value):
    if not math.isfinite(value):
        raise ConfigError(key, f"must be finite, got {value!r}")


@dataclass(frozen=True)
class ModelParameters:
    """Physical and dimensionless constants of the two-scale model.

    Defaults are the reference parameter set; ``beta2``, ``beta3``, ``beta4``
    and ``k_a`` default to 1.  ``gamma_sw_coeff`` multiplies the sulfatation
    rate in the acid flux leaving the cell at the solid-water end.  When left
    as ``None`` it resolves to ``phi3 * k4`` so that each unit of acid consumed
    produces one unit of gypsum (see :attr:`gamma_sw`).
    """

    d1: float = 0.864
    d2: float = 0.00864
    d3: float = 0.00864
    beta2: float = 1.0
    beta3: float = 1.0
    beta4: float = 1.0
    B: float = 86.4
    H: float = 0.3
    phi2: float = 1.0
    phi3: float = 1.0
    phi4: float = 1.0
    k2: float = 1.48
    k3: float = 0.0084
    k4: float = 10.0
    beta_bar: float = 1.0
    p_order: float = 1.0
    q_order: float = 1.0
    k_a: float = 1.0
    u1_dirichlet: float = 0.011
    gamma_sw_coeff: float | None = None

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None:
                continue
            _finite(f.name, value)
        for key in ("d1", "d2", "d3", "beta2", "beta3", "beta4", "H", "beta_bar", "k_a"):
            _positive(key, getattr(self, key))
        for key in ("B", "phi2", "phi3", "phi4", "k2", "k3", "k4", "u1_dirichlet"):
            _nonnegative(key, getattr(self, key))
        for key in ("p_order", "q_order"):
            if not getattr(self, key) >= 1:
                raise ConfigError(key, f"must be >= 1, got {getattr(self, key)!r}")
        if self.gamma_sw_coeff is not None:
            _nonnegative("gamma_sw_coeff", self.gamma_sw_coeff)

    @property
    def gamma_sw(self) -> float:
        """Effective coefficient of the sulfatation rate in the acid outflux."""
        if self.gamma_sw_coeff is None:
            return self.phi3 * self.k4
        return self.gamma_sw_coeff


@dataclass(frozen=True)
class Geometry:
    L: float = 30.0
    ell: float = 1.0

    def __post_init__(self):
        _finite("L", self.L)
        _finite("ell", self.ell)
        _positive("L", self.L)
        _positive("ell", self.ell)


@dataclass(frozen=True)
class GridSpec:
    """Uniform node-centred grids, endpoints included."""

    nx: int = 301
    ny: int = 41

    def __post_init__(self):
        for key in ("nx", "ny"):
            value = getattr(self, key)
            if isinstance(value, bool) or int(value) != value:
                raise ConfigError(key, f"must be an integer, got {value!r}")
            if value < 3:
                raise ConfigError(key, f"must be >= 3, got {value!r}")
            object.__setattr__(self, key, int(value))


DEFAULT_SNAPSHOTS = (2000.0, 4000.0, 8000.0, 12000.0, 16000.0, 20000.0)


@dataclass(frozen=True)
class TimeSpec:
    t_end: float = 20000.0
    dt_init: float = 1e-4
    snapshot_times: tuple = DEFAULT_SNAPSHOTS
    rel_tol: float = 1e-6
    abs_tol: float = 1e-10
    newton_tol: float = 1e-3
    newton_max_iter: int = 10
    error_norm: str = "rms"

    def __post_init__(self):
        if self.error_norm not in ("rms", "max"):
            raise ConfigError("error_norm", f"must be 'rms' or 'max', got {self.error_norm!r}")
        object.__setattr__(self, "snapshot_times", tuple(float(t) for t in self.snapshot_times))
        for key in ("t_end", "dt_init", "rel_tol", "abs_tol", "newton_tol"):
            _finite(key, getattr(self, key))
        _nonnegative("t_end", self.t_end)
        _positive("dt_init", self.dt_init)
        if self.t_end > 0 and self.dt_init > self.t_end:
            raise ConfigError("dt_init", f"must not exceed t_end={self.t_end!r}")
        _positive("rel_tol", self.rel_tol)
        _positive("abs_tol", self.abs_tol)
        _positive("newton_tol", self.newton_tol)
        if int(self.newton_max_iter) != self.newton_max_iter or self.newton_max_iter < 1:
            raise ConfigError("newton_max_iter", f"must be a positive integer, got {self.newton_max_iter!r}")
        object.__setattr__(self, "newton_max_iter", int(self.newton_max_iter))
        ts = self.snapshot_times
        for t in ts:
            if not (math.isfinite(t) and t >= 0):
                raise ConfigError("snapshot_times", f"times must be finite and >= 0, got {t!r}")
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ConfigError("snapshot_times", "must be strictly increasing")


@dataclass(frozen=True)
class InitialConditions:
    """Initial data.  Each entry is a constant or a callable.

    ``u1_0(x)`` and ``u4_0(x)`` take macro coordinates; ``u2_0(x, y)`` and
    ``u3_0(x, y)`` receive broadcastable arrays of macro and micro
    coordinates.  Callables are checked when the initial state is built.
    """

    u1_0: Profile = 0.0
    u2_0: Profile = 0.0
    u3_0: Profile = 0.0
    u4_0: Profile = 0.0

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if callable(value):
                continue
            _finite(f.name, value)
            _nonnegative(f.name, value)


@dataclass(frozen=True)
class OutputSpec:
    """Post-processing and output options.

    ``epsilon`` defaults to ``0.01 * beta_bar`` when ``None``.  ``cell_positions``
    are fractions of ``L`` at which micro profiles are dumped.
    """

    epsilon: float | None = None
    kink_hi: float = 0.95
    kink_lo: float = 0.05
    cell_positions: tuple = (0.0, 0.25, 0.5, 0.75, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "cell_positions", tuple(float(c) for c in self.cell_positions))
        if self.epsilon is not None:
            _finite("epsilon", self.epsilon)
            _positive("epsilon", self.epsilon)
        if not 0 < self.kink_lo < self.kink_hi < 1:
            raise ConfigError("kink_lo", "need 0 < kink_lo < kink_hi < 1")
        for c in self.cell_positions:
            if not 0 <= c <= 1:
                raise ConfigError("cell_positions", f"fractions must lie in [0, 1], got {c!r}")


@dataclass(frozen=True)
class RunConfig:
    params: ModelParameters = field(default_factory=ModelParameters)
    geometry: Geometry = field(default_factory=Geometry)
    grid: GridSpec = field(default_factory=GridSpec)
    time: TimeSpec = field(default_factory=TimeSpec)
    initial: InitialConditions = field(default_factory=InitialConditions)
    output: OutputSpec = field(default_factory=OutputSpec)

    def __post_init__(self):
        p = self.params
        for key in ("u4_0",):
            value = getattr(self.initial, key)
            if not callable(value) and value > p.beta_bar:
                raise ConfigError(key, f"must not exceed beta_bar={p.beta_bar!r}")
        eps = self.output.epsilon
        if eps is not None and not eps < p.beta_bar:
            raise ConfigError("epsilon", f"must lie in (0, beta_bar={p.beta_bar!r})")

    @property
    def hx(self) -> float:
        return self.geometry.L / (self.grid.nx - 1)

    @property
    def hy(self) -> float:
        return self.geometry.ell / (self.grid.ny - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, self.geometry.L, self.grid.nx)

    @property
    def y(self) -> np.ndarray:
        return np.linspace(0.0, self.geometry.ell, self.grid.ny)

    @property
    def epsilon(self) -> float:
        if self.output.epsilon is None:
            return 0.01 * self.params.beta_bar
        return self.output.epsilon

    def replace(self, **sections) -> "RunConfig":
        """Return a copy with fields of individual sections overridden.

        ``cfg.replace(params={"B": 0.0}, grid={"nx": 21})``
        """
        updates = {}
        for name, changes in sections.items():
            current = getattr(self, name)
            updates[name] = dataclasses.replace(current, **changes)
        return dataclasses.replace(self, **updates)


def default_config() -> RunConfig:
    """Reference parameter set with zero initial data."""
    return RunConfig()


_SECTIONS = {
    "model": ModelParameters,
    "geometry": Geometry,
    "grid": GridSpec,
    "time": TimeSpec,
    "initial": InitialConditions,
    "output": OutputSpec,
}
_ATTR = {
    "model": "params",
    "geometry": "geometry",
    "grid": "grid",
    "time": "time",
    "initial": "initial",
    "output": "output",
}
_TUPLE_KEYS = {"snapshot_times", "cell_positions"}
_INT_KEYS = {"nx", "ny", "newton_max_iter"}


def _parse_value(section: str, key: str, raw: str):
    raw = raw.strip()
    if key in _TUPLE_KEYS:
        items = [s for s in raw.replace(",", " ").split() if s]
        try:
            return tuple(float(s) for s in items)
        except ValueError:
            raise ConfigError(f"{section}.{key}", f"expected a list of numbers, got {raw!r}") from None
    if key in _INT_KEYS:
        try:
            value = float(raw)
        except ValueError:
            raise ConfigError(f"{section}.{key}", f"expected an integer, got {raw!r}") from None
        if value != int(value):
            raise ConfigError(f"{section}.{key}", f"expected an integer, got {raw!r}")
        return int(value)
    if key == "error_norm":
        return raw
    if raw.lower() in ("", "none", "default") and key in ("gamma_sw_coeff", "epsilon"):
        return None
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{section}.{key}", f"expected a number, got {raw!r}") from None


def parse_config(text: str) -> RunConfig:
    """Parse config text; omitted keys take their defaults."""
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigParseError("<file>", f"malformed config: {exc}") from exc

    sections = {}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(section, "unknown section")
        known = {f.name for f in fields(_SECTIONS[section])}
        values = {}
        for key, raw in parser.items(section):
            if key not in known:
                raise ConfigError(f"{section}.{key}", "unknown key")
            values[key] = _parse_value(section, key, raw)
        try:
            sections[_ATTR[section]] = _SECTIONS[section](**values)
        except ConfigError as exc:
            raise ConfigError(f"{section}.{exc.key}", str(exc).split(": ", 1)[1]) from None
    return RunConfig(**sections)


def load_config(path) -> RunConfig:
    """Read and validate a config file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigParseError(str(path), f"cannot read config: {exc}") from exc
    return parse_config(text)


def _fmt(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(_fmt(v) for v in value)
    if value is None:
        return "none"
    if isinstance(value, str):
        return value
    if isinstance(value, int):
        return str(value)
    return repr(float(value))


def dump_config(cfg: RunConfig) -> str:
    """Serialize a config to text that :func:`parse_config` reads back identically."""
    out = io.StringIO()
    for section, attr in _ATTR.items():
        obj = getattr(cfg, attr)
        out.write(f"[{section}]\n")
        for f in fields(obj):
            value = getattr(obj, f.name)
            if callable(value):
                raise ConfigError(f"{section}.{f.name}", "callable profiles cannot be serialized")
            out.write(f"{f.name} = {_fmt(value)}\n")
        out.write("\n")
    return out.getvalue()


def config_as_dict(cfg: RunConfig) -> dict:
    """Nested plain-data view, used for the run manifest."""
    result = {}
    for section, attr in _ATTR.items():
        obj = getattr(cfg, attr)
        entry = {}
        for f in fields(obj):
            value = getattr(obj, f.name)
            if callable(value):
                value = getattr(value, "__name__", "callable")
            elif isinstance(value, tuple):
                value = list(value)
            entry[f.name] = value
        result[section] = entry
    result["model"]["gamma_sw_effective"] = cfg.params.gamma_sw
    return result
