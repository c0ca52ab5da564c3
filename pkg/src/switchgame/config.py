"""Run configuration: a game document plus grid, solver and simulation settings.

A config file is either a bare game document (top-level ``q``, ``discount_r``,
``coefficients``, ``costs``) or a run document::

    {"game": {...} | "relative/path.json",
     "grid": {"x_min": -5, "x_max": 5, "n": 2001},
     "solver": {"tol": 1e-9, "max_iter": 200, "tol_active": 1e-6},
     "simulation": {"x0": 1, "i0": 1, "j0": 1, "dt": 1e-3, "horizon": 60,
                    "paths": 10000, "seed": 0},
     "output": {"values": "v.csv", "regions": ..., "thresholds": ...,
                "paths": ..., "plot": ...}}

Unknown keys are rejected everywhere.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .model import ConfigurationError, GameSpec


@dataclass(frozen=True)
class GridParams:
    x_min: float = -5.0
    x_max: float = 5.0
    n: int = 2001


@dataclass(frozen=True)
class SolverParams:
    tol: float = 1e-9
    max_iter: int = 200
    tol_active: float = 1e-6


@dataclass(frozen=True)
class SimParams:
    x0: float = 1.0
    i0: int = 1
    j0: int = 1
    dt: float = 1e-3
    horizon: float = 60.0
    paths: int = 10_000
    seed: int = 0


@dataclass(frozen=True)
class OutputParams:
    values: str | None = None
    regions: str | None = None
    thresholds: str | None = None
    paths: str | None = None
    plot: str | None = None


@dataclass(frozen=True)
class RunConfig:
    game: GameSpec
    grid: GridParams = field(default_factory=GridParams)
    solver: SolverParams = field(default_factory=SolverParams)
    simulation: SimParams = field(default_factory=SimParams)
    output: OutputParams = field(default_factory=OutputParams)
    source: Path | None = None


class ConfigFileError(ConfigurationError):
    """A configuration error anchored to a file and line."""

    def __init__(self, path, line: int, msg: str):
        super().__init__(f"{path}:{line}: {msg}")
        self.path, self.line = path, line


def _line_of(text: str, key: str | None) -> int:
    if key:
        m = re.search(r'"' + re.escape(key) + r'"', text)
        if m:
            return text.count("\n", 0, m.start()) + 1
    return 1


def _section(cls, doc, name: str):
    if not isinstance(doc, dict):
        raise ConfigurationError(f"{name} must be an object", name)
    names = {f.name for f in fields(cls)}
    unknown = set(doc) - names
    if unknown:
        raise ConfigurationError(f"unknown keys in {name}: {sorted(unknown)}", sorted(unknown)[0])
    kwargs = {}
    for f in fields(cls):
        if f.name not in doc:
            continue
        v = doc[f.name]
        default = f.default
        try:
            if isinstance(default, bool):
                v = bool(v)
            elif isinstance(default, int):
                if isinstance(v, bool) or float(v) != int(v):
                    raise ValueError
                v = int(v)
            elif isinstance(default, float):
                v = float(v)
            elif v is not None:
                v = str(v)
        except (TypeError, ValueError):
            raise ConfigurationError(f"{name}.{f.name} has an invalid value {v!r}", f.name) from None
        kwargs[f.name] = v
    return cls(**kwargs)


def _check_ranges(cfg: RunConfig) -> None:
    g, s, m = cfg.grid, cfg.solver, cfg.simulation
    if not g.x_min < g.x_max:
        raise ConfigurationError("grid.x_min must be < grid.x_max", "x_min")
    if g.n < 3:
        raise ConfigurationError("grid.n must be >= 3", "n")
    if not s.tol > 0 or s.max_iter < 1 or not s.tol_active > 0:
        raise ConfigurationError("solver tol, tol_active must be > 0 and max_iter >= 1", "solver")
    if not m.dt > 0 or not m.horizon > 0 or m.paths < 1:
        raise ConfigurationError("simulation dt, horizon must be > 0 and paths >= 1", "simulation")
    q = cfg.game.q
    if not (1 <= m.i0 <= q and 1 <= m.j0 <= q):
        raise ConfigurationError(f"simulation.i0/j0 must lie in 1..{q}", "i0")
    if not 0 <= m.seed < 2 ** 64:
        raise ConfigurationError("simulation.seed must be a 64-bit unsigned integer", "seed")


def parse_run_config(doc: dict, base: Path | None = None) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigurationError("config must be a JSON object")
    if "game" not in doc:
        cfg = RunConfig(GameSpec.from_dict(doc))
    else:
        unknown = set(doc) - {"game", "grid", "solver", "simulation", "output"}
        if unknown:
            raise ConfigurationError(f"unknown keys in run config: {sorted(unknown)}", sorted(unknown)[0])
        game = doc["game"]
        if isinstance(game, str):
            gpath = (base or Path(".")) / game
            if not gpath.exists():
                raise ConfigurationError(f"game file {gpath} does not exist", "game")
            game = load_config(gpath).game
        else:
            game = GameSpec.from_dict(game)
        cfg = RunConfig(game,
                        _section(GridParams, doc.get("grid", {}), "grid"),
                        _section(SolverParams, doc.get("solver", {}), "solver"),
                        _section(SimParams, doc.get("simulation", {}), "simulation"),
                        _section(OutputParams, doc.get("output", {}), "output"))
    _check_ranges(cfg)
    return cfg


def load_config(path) -> RunConfig:
    """Load a config file; every error is reported as ``path:line: message``."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigFileError(path, 1, f"cannot read config: {exc.strerror}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigFileError(path, exc.lineno, f"invalid JSON: {exc.msg} (column {exc.colno})") from exc
    try:
        cfg = parse_run_config(doc, path.parent)
    except ConfigFileError:
        raise
    except ConfigurationError as exc:
        raise ConfigFileError(path, _line_of(text, exc.key), str(exc)) from exc
    return replace(cfg, source=path)


def with_overrides(cfg: RunConfig, **kw) -> RunConfig:
    """Apply non-``None`` CLI overrides, e.g. ``grid_n=401`` or ``sim_x0=0.5``."""
    sections = {"grid": cfg.grid, "solver": cfg.solver, "simulation": cfg.simulation}
    prefixes = {"grid_": "grid", "solver_": "solver", "sim_": "simulation"}
    for key, val in kw.items():
        if val is None:
            continue
        for prefix, sec in prefixes.items():
            if key.startswith(prefix):
                sections[sec] = replace(sections[sec], **{key[len(prefix):]: val})
                break
        else:
            raise KeyError(key)
    out = replace(cfg, **sections)
    _check_ranges(out)
    return out
