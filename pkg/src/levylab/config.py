"""Experiment configuration: a flat TOML table of typed keys.

Example::

    kind = "correlation"
    step_count = 16384
    dt = 6.103515625e-05
    paths = 100000
    seed = 7
    s = 0.25
    n_list = [1, 2, 4]

Parsing collects every problem before failing; each message starts with the
offending key.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field, fields

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .levy import SignConvention
from .paths import Grid, IncrementModel

__all__ = ["KINDS", "ConfigError", "ExperimentConfig", "parse_config", "emit_config", "load_config"]

KINDS = (
    "transform-check",
    "correlation",
    "mixing",
    "ergodic-average",
    "tightness",
    "coupling",
    "porosity",
    "membership",
    "crosscheck",
)

# kinds that read the iterates at time 1
_NEEDS_UNIT_TIME = {"correlation", "tightness", "coupling", "porosity", "crosscheck"}


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    step_count: int
    dt: float
    paths: int
    seed: int
    name: str = ""
    model: str = "gaussian"
    depth: int = 8
    sign_at_zero: str = "minus_one"
    s: float = 0.5
    t: float = 1.0
    t_list: tuple = (1.0,)
    C: float = 1.0
    L: float = 1.0
    q: float = 0.25
    N: int = 2
    eps: float = 0.03125
    x_grid: tuple = ()
    K_grid: tuple = ()
    eps_grid: tuple = ()
    n_list: tuple = (1,)
    threads: int = 1
    batch_size: int = 64
    memory_cap: int = 2**27
    refine: bool = False
    out: str = "results"

    @property
    def grid(self) -> Grid:
        return Grid(self.step_count, self.dt)

    @property
    def stem(self) -> str:
        return self.name or self.kind

    def replace(self, **kw) -> "ExperimentConfig":
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data.update(kw)
        return ExperimentConfig(**data)


_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}
_LISTS = {"t_list": float, "x_grid": float, "K_grid": float, "eps_grid": float, "n_list": int}
_REQUIRED = ("kind", "step_count", "dt", "paths", "seed")
# keys whose defaults take part in validation for each kind
_RELEVANT = {
    "transform-check": ("eps", "depth"),
    "correlation": ("s", "t", "n_list", "depth"),
    "mixing": ("t", "n_list", "depth"),
    "ergodic-average": ("t", "N", "depth"),
    "tightness": ("depth",),
    "coupling": ("C", "s", "n_list", "depth"),
    "porosity": ("C", "s", "depth"),
    "membership": ("C", "s", "L", "t_list", "depth"),
    "crosscheck": ("C", "s", "L", "N", "q", "depth"),
}


def _coerce(key, value, problems):
    kind = _TYPES[key]
    if key in _LISTS:
        if not isinstance(value, list):
            problems.append(f"{key}: expected an array")
            return None
        el = _LISTS[key]
        out = []
        for v in value:
            ok = isinstance(v, int) and not isinstance(v, bool) if el is int else (
                isinstance(v, (int, float)) and not isinstance(v, bool))
            if not ok:
                problems.append(f"{key}: expected an array of {el.__name__}, got element {v!r}")
                return None
            out.append(el(v))
        return tuple(out)
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            problems.append(f"{key}: expected an integer, got {value!r}")
            return None
        return value
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            problems.append(f"{key}: expected a number, got {value!r}")
            return None
        return float(value)
    if kind == "bool":
        if not isinstance(value, bool):
            problems.append(f"{key}: expected true or false, got {value!r}")
            return None
        return value
    if not isinstance(value, str):
        problems.append(f"{key}: expected a string, got {value!r}")
        return None
    return value


def _on_grid(grid, key, t, problems, lo=0.0):
    if not math.isfinite(t) or t < lo:
        problems.append(f"{key}: {t!r} is out of range")
        return
    q = t / grid.dt
    if abs(q - round(q)) > 1e-9 * max(1.0, abs(q)):
        problems.append(f"{key}: {t!r} is not on the grid (dt = {grid.dt!r})")
    elif round(q) > grid.step_count:
        problems.append(f"{key}: {t!r} lies beyond the horizon {grid.horizon!r}")


def _validate(cfg: dict, problems: list):
    kind = cfg.get("kind")
    if kind is not None and kind not in KINDS:
        problems.append(f"kind: unknown experiment {kind!r}; choose one of {', '.join(KINDS)}")
    sc, dt = cfg.get("step_count"), cfg.get("dt")
    grid = None
    if sc is not None and sc < 1:
        problems.append("step_count: must be at least 1")
    if dt is not None and not (math.isfinite(dt) and dt > 0):
        problems.append("dt: must be positive and finite")
    if sc is not None and dt is not None and sc >= 1 and math.isfinite(dt) and dt > 0:
        grid = Grid(sc, dt)
    if "paths" in cfg and cfg["paths"] < 1:
        problems.append("paths: must be at least 1")
    if kind == "tightness" and cfg.get("paths", 2) < 2:
        problems.append("paths: tightness tables need at least 2 paths")
    if "seed" in cfg and not 0 <= cfg["seed"] < 2**64:
        problems.append("seed: must fit in 64 unsigned bits")
    if "model" in cfg:
        try:
            IncrementModel(cfg["model"])
        except ValueError:
            problems.append(f"model: unknown increment model {cfg['model']!r}")
    if "sign_at_zero" in cfg:
        try:
            SignConvention.coerce(cfg["sign_at_zero"])
        except ValueError:
            problems.append(f"sign_at_zero: unknown convention {cfg['sign_at_zero']!r}")
    depth = cfg.get("depth", ExperimentConfig.depth)
    if depth < 0:
        problems.append("depth: must be nonnegative")
    for key in ("threads", "batch_size", "memory_cap"):
        if key in cfg and cfg[key] < 1:
            problems.append(f"{key}: must be at least 1")
    for key in ("C", "L", "eps"):
        if key in cfg and not (math.isfinite(cfg[key]) and cfg[key] > 0):
            problems.append(f"{key}: must be positive, got {cfg[key]!r}")
    if "q" in cfg and not 0 < cfg["q"] < 1:
        problems.append("q: must lie in (0, 1)")
    if "s" in cfg:
        if not 0 < cfg["s"] < 1:
            problems.append("s: must lie in (0, 1)")
        elif grid is not None:
            _on_grid(grid, "s", cfg["s"], problems)
    if grid is not None:
        if "t" in cfg:
            if cfg["t"] <= 0:
                problems.append("t: must be positive")
            else:
                _on_grid(grid, "t", cfg["t"], problems)
        for i, t in enumerate(cfg.get("t_list", ())):
            if t <= 0:
                problems.append(f"t_list: entry {i} must be positive")
            else:
                _on_grid(grid, "t_list", t, problems)
        if kind in _NEEDS_UNIT_TIME or kind == "transform-check":
            _on_grid(grid, "step_count", 1.0, problems)
        eg = cfg.get("eps_grid", ())
        for e in eg:
            if not e >= 4 * grid.dt:
                problems.append(f"eps_grid: {e!r} is below the resolution floor 4*dt")
            else:
                _on_grid(grid, "eps_grid", e, problems)
            if e > 0 and abs(math.log2(e) - round(math.log2(e))) > 1e-12:
                problems.append(f"eps_grid: {e!r} is not a power of two")
        if eg and 1.0 + max(eg) > grid.horizon + 1e-12:
            problems.append("eps_grid: the largest eps leaves the grid around t = 1")
        if "s" in cfg and "t" in cfg and kind == "correlation" and not cfg["s"] < cfg["t"]:
            problems.append("s: must be smaller than t")
    for key in ("x_grid",):
        if any(not (math.isfinite(x) and x > 0) for x in cfg.get(key, ())):
            problems.append(f"{key}: entries must be positive")
    if any(not (math.isfinite(k) and k >= 0) for k in cfg.get("K_grid", ())):
        problems.append("K_grid: entries must be nonnegative")
    for n in cfg.get("n_list", ()):
        if not 0 <= n <= depth:
            problems.append(f"n_list: level {n} outside [0, depth={depth}]")
    if "N" in cfg and not 2 <= cfg["N"] <= depth:
        problems.append(f"N: must lie in [2, depth={depth}]")
    if kind == "porosity" and not cfg.get("eps_grid"):
        problems.append("eps_grid: porosity needs at least one eps")
    if kind == "tightness" and not cfg.get("K_grid") and not cfg.get("x_grid"):
        problems.append("K_grid: tightness needs K_grid or x_grid")


def parse_config(text: str) -> ExperimentConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"syntax: {exc}"]) from None
    problems = []
    cfg = {}
    for key, value in raw.items():
        if key not in _TYPES:
            problems.append(f"{key}: unknown key")
            continue
        v = _coerce(key, value, problems)
        if v is not None:
            cfg[key] = v
    for key in _REQUIRED:
        if key not in raw:
            problems.append(f"{key}: missing required key")
    merged = dict(cfg)
    for key in _RELEVANT.get(cfg.get("kind"), ()):
        merged.setdefault(key, getattr(ExperimentConfig, key))
    _validate(merged, problems)
    if problems:
        raise ConfigError(problems)
    return ExperimentConfig(**cfg)


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'


def emit_config(cfg: ExperimentConfig) -> str:
    """Canonical text of ``cfg``: every key, in declaration order."""
    return "".join(f"{f.name} = {_fmt(getattr(cfg, f.name))}\n" for f in fields(cfg))
