"""Flat YAML run configuration with line-aware validation."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError
from .grids import SpaceGrid, TimeGrid
from .mfg_coupler import CouplingSpec, MFGProblem


@dataclass
class RunConfig:
    beta: float = 0.5
    T: float = 1.0
    N_t: int = 128
    N_x: int = 64
    dim: int = 1
    coupling: str = "linear"
    coupling_exponent: float = 2.0
    coupling_weight: float = 1.0
    m0: str = "cosine"
    m0_amplitude: float = 0.5
    m0_width: float = 0.1
    m0_center: float = 0.5
    u_T: str = "constant"
    u_T_value: float = 0.0
    u_T_amplitude: float = 0.0
    drift: str = "zero"
    drift_amplitude: float = 1.0
    particles: int = 100000
    record_every: int = 0
    export_particles: bool = False
    seed: int = 0
    damping: float = 0.5
    tol: float = 1e-6
    max_iter: int = 100
    samples: int = 20
    levels: int = 3
    out: str = "results"

    def to_dict(self) -> dict:
        return asdict(self)


_CHOICES = {
    "coupling": ("zero", "linear", "power"),
    "m0": ("uniform", "cosine", "gaussian"),
    "u_T": ("constant", "cosine"),
    "drift": ("zero", "sine"),
}


def _check_ranges(cfg: RunConfig):
    """Yield ``(field, message)`` for every violated range."""
    if not (0.0 < cfg.beta <= 1.0):
        yield "beta", f"must lie in (0, 1], got {cfg.beta}"
    if not (math.isfinite(cfg.T) and cfg.T > 0):
        yield "T", f"must be positive, got {cfg.T}"
    if cfg.N_t < 2:
        yield "N_t", f"must be >= 2, got {cfg.N_t}"
    if cfg.N_x < 8:
        yield "N_x", f"must be >= 8, got {cfg.N_x}"
    if cfg.dim not in (1, 2):
        yield "dim", f"must be 1 or 2, got {cfg.dim}"
    for key, options in _CHOICES.items():
        if getattr(cfg, key) not in options:
            yield key, f"must be one of {', '.join(options)}; got {getattr(cfg, key)!r}"
    if cfg.coupling == "power" and cfg.coupling_exponent < 1:
        yield "coupling_exponent", f"must be >= 1, got {cfg.coupling_exponent}"
    if cfg.coupling == "power" and cfg.coupling_weight <= 0:
        yield "coupling_weight", f"must be positive, got {cfg.coupling_weight}"
    if not (0.0 <= cfg.m0_amplitude < 1.0):
        yield "m0_amplitude", f"must lie in [0, 1) to keep m0 positive, got {cfg.m0_amplitude}"
    if not (cfg.m0_width > 0):
        yield "m0_width", f"must be positive, got {cfg.m0_width}"
    if cfg.particles < 1:
        yield "particles", f"must be positive, got {cfg.particles}"
    if cfg.record_every < 0:
        yield "record_every", f"must be >= 0, got {cfg.record_every}"
    if not (0.0 < cfg.damping <= 1.0):
        yield "damping", f"must lie in (0, 1], got {cfg.damping}"
    if not (cfg.tol > 0):
        yield "tol", f"must be positive, got {cfg.tol}"
    if cfg.max_iter < 1:
        yield "max_iter", f"must be positive, got {cfg.max_iter}"
    if cfg.samples < 1:
        yield "samples", f"must be positive, got {cfg.samples}"
    if not (2 <= cfg.levels <= 5):
        yield "levels", f"must lie in [2, 5], got {cfg.levels}"
    if cfg.seed < 0:
        yield "seed", f"must be nonnegative, got {cfg.seed}"


def _coerce(name: str, typ, raw, where: str):
    if typ is bool:
        if isinstance(raw, bool):
            return raw
        raise ConfigError(f"{where}: field '{name}' must be true or false, got {raw!r}")
    if typ is int:
        if isinstance(raw, bool) or not (isinstance(raw, int) or (isinstance(raw, float) and raw.is_integer())):
            raise ConfigError(f"{where}: field '{name}' must be an integer, got {raw!r}")
        return int(raw)
    if typ is float:
        if isinstance(raw, bool):
            raise ConfigError(f"{where}: field '{name}' must be a number, got {raw!r}")
        try:
            return float(raw)
        except (TypeError, ValueError):
            raise ConfigError(f"{where}: field '{name}' must be a number, got {raw!r}") from None
    if not isinstance(raw, str):
        raise ConfigError(f"{where}: field '{name}' must be a string, got {raw!r}")
    return raw


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = f" line {mark.line + 1}" if mark is not None else ""
        raise ConfigError(f"{source}{line}: invalid YAML: {getattr(exc, 'problem', exc)}") from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a mapping of field: value")
    lines = {}
    if node is not None:
        for key_node, _ in node.value:
            lines[key_node.value] = key_node.start_mark.line + 1
    types = {f.name: f.type for f in fields(RunConfig)}
    pytypes = {"float": float, "int": int, "str": str, "bool": bool}
    cfg = RunConfig()
    for key, raw in data.items():
        where = f"{source} line {lines.get(str(key), '?')}"
        if key not in types:
            raise ConfigError(f"{where}: unknown field '{key}'; valid fields: {', '.join(sorted(types))}")
        setattr(cfg, key, _coerce(key, pytypes[types[key]], raw, where))
    for key, msg in _check_ranges(cfg):
        where = f"{source} line {lines[key]}" if key in lines else source
        raise ConfigError(f"{where}: field '{key}' {msg}")
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(path))


def validate(cfg: RunConfig) -> RunConfig:
    for key, msg in _check_ranges(cfg):
        raise ConfigError(f"field '{key}' {msg}")
    return cfg


def grids(cfg: RunConfig, refine: int = 1) -> tuple[TimeGrid, SpaceGrid]:
    return TimeGrid(cfg.T, cfg.N_t * refine), SpaceGrid(cfg.N_x * refine, cfg.dim)


def initial_density(cfg: RunConfig, sgrid: SpaceGrid) -> np.ndarray:
    X = sgrid.mesh
    if cfg.m0 == "uniform":
        m = np.ones(sgrid.shape)
    elif cfg.m0 == "cosine":
        m = 1.0 + cfg.m0_amplitude * np.cos(2.0 * np.pi * X[0])
    else:
        r2 = np.zeros(sgrid.shape)
        for xa in X:
            d = np.abs(xa - cfg.m0_center)
            d = np.minimum(d, 1.0 - d)
            r2 += d**2
        m = np.exp(-r2 / (2.0 * cfg.m0_width**2))
    return m / sgrid.integrate(m)


def terminal_value(cfg: RunConfig, sgrid: SpaceGrid) -> np.ndarray:
    if cfg.u_T == "constant":
        return np.full(sgrid.shape, cfg.u_T_value)
    return cfg.u_T_value + cfg.u_T_amplitude * np.cos(2.0 * np.pi * sgrid.mesh[0])


def drift_field(cfg: RunConfig, sgrid: SpaceGrid) -> np.ndarray:
    v = np.zeros((sgrid.dim, *sgrid.shape))
    if cfg.drift == "sine":
        v[0] = -cfg.drift_amplitude * np.sin(2.0 * np.pi * sgrid.mesh[0])
    return v


def drift_function(cfg: RunConfig):
    if cfg.drift == "zero":
        return None
    amp = cfg.drift_amplitude

    def v(tau, y):
        out = np.zeros_like(y)
        out[:, 0] = -amp * np.sin(2.0 * np.pi * y[:, 0])
        return out

    return v


def coupling(cfg: RunConfig) -> CouplingSpec:
    if cfg.coupling == "power":
        return CouplingSpec("power", cfg.coupling_exponent, cfg.coupling_weight)
    return CouplingSpec(cfg.coupling)


def problem(cfg: RunConfig, refine: int = 1, beta: float | None = None) -> MFGProblem:
    tg, sg = grids(cfg, refine)
    return MFGProblem(cfg.beta if beta is None else beta, tg, sg, coupling(cfg),
                      initial_density(cfg, sg), terminal_value(cfg, sg))
