"""Game description for two-player zero-sum switching games on the real line.

A game has ``q`` regimes per player.  The state follows a diffusion whose
drift ``b^{ij}``, volatility ``sigma^{ij}`` and running reward ``f^{ij}``
depend on the pair of regimes currently held by player I (``i``, the
maximizer) and player II (``j``, the minimizer).  Player I pays ``C(i,k)`` to
switch from ``i`` to ``k``; player II pays ``chi(j,l)`` to switch from ``j``
to ``l`` (the payment enters the reward with a ``+`` sign).

Regime indices are 1-based in every public signature and in config files;
array axes are 0-based.
"""

from __future__ import annotations

import itertools
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import networkx as nx
import numpy as np

logger = logging.getLogger(__name__)

COEFFICIENT_KINDS = ("affine_drift", "geometric_brownian", "tabulated")


class ConfigurationError(ValueError):
    """Raised for malformed or inconsistent game descriptions.

    ``key`` names the offending config key when there is one, so callers can
    point at the line it appears on.
    """

    def __init__(self, msg: str, key: str | None = None):
        super().__init__(msg)
        self.key = key


@dataclass(frozen=True)
class Violation:
    condition: str
    detail: str
    indices: tuple = ()
    value: float = float("nan")

    def __str__(self) -> str:
        return f"[{self.condition}] {self.detail}"


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of a validator.  ``errors`` fail, ``warnings`` are informational."""

    errors: tuple[Violation, ...] = ()
    warnings: tuple[Violation, ...] = ()
    info: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not self.errors

    def merge(self, other: "ValidationReport") -> "ValidationReport":
        return ValidationReport(self.errors + other.errors,
                                self.warnings + other.warnings,
                                {**self.info, **other.info})

    def lines(self) -> list[str]:
        out = [f"ERROR {v}" for v in self.errors]
        out += [f"WARNING {v}" for v in self.warnings]
        return out


# ---------------------------------------------------------------------------
# Costs

@dataclass(frozen=True, eq=False)
class CostMatrices:
    """Switching costs ``C`` (player I) and ``chi`` (player II), zero diagonal."""

    C: np.ndarray
    chi: np.ndarray

    def __post_init__(self):
        C = np.array(self.C, dtype=float)
        chi = np.array(self.chi, dtype=float)
        for name, m in (("C", C), ("chi", chi)):
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise ConfigurationError(f"cost matrix {name} must be square, got shape {m.shape}")
            if not np.all(np.isfinite(m)):
                raise ConfigurationError(f"cost matrix {name} has non-finite entries")
        if C.shape != chi.shape:
            raise ConfigurationError(
                f"dimension mismatch between C {C.shape} and chi {chi.shape}")
        if C.shape[0] < 2:
            raise ConfigurationError("at least two regimes are required (q >= 2)")
        if np.any(np.diag(C) != 0) or np.any(np.diag(chi) != 0):
            raise ConfigurationError("cost matrices must have a zero diagonal")
        C.setflags(write=False)
        chi.setflags(write=False)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "chi", chi)

    @property
    def q(self) -> int:
        return self.C.shape[0]


def validate_costs(costs: CostMatrices) -> ValidationReport:
    """Check the triangular conditions and back-and-forth positivity for both players.

    Every violated instance is reported with its (1-based) indices.
    """
    errors = []
    q = costs.q
    for name, m, tri, loop in (("C", costs.C, "co1", "co3"), ("chi", costs.chi, "co2", "co4")):
        for i, j, k in itertools.product(range(q), repeat=3):
            if i == k or j in (i, k):
                continue
            if not m[i, k] < m[i, j] + m[j, k]:
                errors.append(Violation(
                    tri,
                    f"{name}({i+1},{k+1})={m[i, k]:g} is not < "
                    f"{name}({i+1},{j+1})+{name}({j+1},{k+1})={m[i, j] + m[j, k]:g}",
                    (i + 1, j + 1, k + 1), m[i, k] - m[i, j] - m[j, k]))
        for i, j in itertools.combinations(range(q), 2):
            s = m[i, j] + m[j, i]
            if not s > 0:
                errors.append(Violation(
                    loop, f"{name}({i+1},{j+1})+{name}({j+1},{i+1})={s:g} is not > 0",
                    (i + 1, j + 1), s))
    return ValidationReport(errors=tuple(errors))


def _pair_graph(q: int) -> nx.DiGraph:
    g = nx.DiGraph()
    pairs = list(itertools.product(range(1, q + 1), repeat=2))
    g.add_nodes_from(pairs)
    for (i, j), (k, l) in itertools.permutations(pairs, 2):
        if (i == k) != (j == l):
            g.add_edge((i, j), (k, l))
    return g


def loop_balance(costs: CostMatrices, cycle: Iterable[tuple[int, int]]) -> float:
    """``sum chi - sum C`` along a closed cycle of (1-based) regime pairs."""
    cycle = list(cycle)
    total = 0.0
    for (i, j), (k, l) in zip(cycle, cycle[1:] + cycle[:1]):
        total += costs.chi[j - 1, l - 1] - costs.C[i - 1, k - 1]
    return total


def _canonical(cycle: list) -> tuple:
    s = cycle.index(min(cycle))
    return tuple(cycle[s:] + cycle[:s])


def validate_no_free_loop(costs: CostMatrices, severity: str = "warn",
                          atol: float = 1e-12) -> ValidationReport:
    """Look for cycles of single-player switches whose cost balance is zero.

    Each witness is reported as the cycle (closed back to its first pair) and
    classified as a warning or an error according to ``severity``.
    """
    if severity not in ("warn", "error"):
        raise ConfigurationError(f"severity must be 'warn' or 'error', got {severity!r}")
    found = []
    for cycle in nx.simple_cycles(_pair_graph(costs.q)):
        cyc = _canonical(list(cycle))
        bal = loop_balance(costs, cyc)
        if abs(bal) <= atol:
            path = "->".join(f"({i},{j})" for i, j in cyc + cyc[:1])
            found.append(Violation("no-free-loop",
                                   f"zero-balance switching cycle {path}: sum chi - sum C = {bal:g}",
                                   cyc, bal))
    found.sort(key=lambda v: (len(v.indices), v.indices))
    if severity == "error":
        return ValidationReport(errors=tuple(found))
    return ValidationReport(warnings=tuple(found))


# ---------------------------------------------------------------------------
# Coefficients

def _affine(p) -> Callable[[np.ndarray], np.ndarray]:
    a0, a1 = (float(v) for v in p)
    return lambda x: a0 + a1 * np.asarray(x, dtype=float)


def _linear(c) -> Callable[[np.ndarray], np.ndarray]:
    c = float(c)
    return lambda x: c * np.asarray(x, dtype=float)


def _tabulated(xs, ys) -> Callable[[np.ndarray], np.ndarray]:
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.ndim != 1 or xs.shape != ys.shape or xs.size < 2 or np.any(np.diff(xs) <= 0):
        raise ConfigurationError("tabulated coefficients need >= 2 strictly increasing abscissae "
                                 "and matching ordinates")
    lo = (ys[1] - ys[0]) / (xs[1] - xs[0])
    hi = (ys[-1] - ys[-2]) / (xs[-1] - xs[-2])

    def fn(x):
        x = np.asarray(x, dtype=float)
        y = np.interp(x, xs, ys)
        # linear extrapolation keeps the linear-growth property
        y = np.where(x < xs[0], ys[0] + lo * (x - xs[0]), y)
        return np.where(x > xs[-1], ys[-1] + hi * (x - xs[-1]), y)
    return fn


@dataclass(frozen=True, eq=False)
class CoefficientModel:
    """Drift, volatility and running reward for every regime pair.

    ``drift[i][j]`` etc. are vectorized callables over 0-based pair indices.
    Use :meth:`from_dict` to build one from the config schema.
    """

    kind: str
    drift: tuple
    vol: tuple
    payoff: tuple
    params: dict = field(default_factory=dict)

    @property
    def q(self) -> int:
        return len(self.drift)

    def b(self, i: int, j: int, x) -> np.ndarray:
        return np.asarray(self.drift[i - 1][j - 1](x), dtype=float) * np.ones_like(x, dtype=float)

    def sigma(self, i: int, j: int, x) -> np.ndarray:
        return np.asarray(self.vol[i - 1][j - 1](x), dtype=float) * np.ones_like(x, dtype=float)

    def f(self, i: int, j: int, x) -> np.ndarray:
        return np.asarray(self.payoff[i - 1][j - 1](x), dtype=float) * np.ones_like(x, dtype=float)

    @classmethod
    def from_dict(cls, doc: dict, q: int) -> "CoefficientModel":
        doc = dict(doc)
        kind = doc.pop("kind", None)
        if kind not in COEFFICIENT_KINDS:
            raise ConfigurationError(f"coefficients.kind must be one of {COEFFICIENT_KINDS}, got {kind!r}",
                                     "kind")
        pairs = doc.pop("pairs", None)
        if not isinstance(pairs, dict):
            raise ConfigurationError("coefficients.pairs must be an object keyed by 'i,j'", "pairs")
        defaults = doc.pop("defaults", {})
        shared_x = doc.pop("x", None)
        if doc:
            raise ConfigurationError(f"unknown keys in coefficients: {sorted(doc)}", sorted(doc)[0])
        expected = {f"{i},{j}" for i in range(1, q + 1) for j in range(1, q + 1)}
        if set(pairs) != expected:
            missing, extra = expected - set(pairs), set(pairs) - expected
            raise ConfigurationError(
                f"coefficients.pairs must list every pair 'i,j' for i,j in 1..{q}; "
                f"missing {sorted(missing)}, unexpected {sorted(extra)}")
        allowed = {"drift", "vol", "payoff"}
        drift, vol, payoff = ([[None] * q for _ in range(q)] for _ in range(3))
        for key, entry in pairs.items():
            i, j = (int(s) - 1 for s in key.split(","))
            entry = {**defaults, **entry}
            unknown = set(entry) - allowed
            if unknown:
                raise ConfigurationError(f"unknown keys in coefficients.pairs[{key!r}]: {sorted(unknown)}",
                                         sorted(unknown)[0])
            if set(entry) != allowed:
                raise ConfigurationError(
                    f"coefficients.pairs[{key!r}] needs drift, vol and payoff", key)
            try:
                if kind == "geometric_brownian":
                    drift[i][j] = _linear(entry["drift"])
                    vol[i][j] = _linear(entry["vol"])
                    payoff[i][j] = _affine(entry["payoff"])
                elif kind == "affine_drift":
                    drift[i][j] = _affine(entry["drift"])
                    vol[i][j] = _affine(entry["vol"])
                    payoff[i][j] = _affine(entry["payoff"])
                else:
                    if shared_x is None:
                        raise ConfigurationError("tabulated coefficients need a shared 'x' table")
                    drift[i][j] = _tabulated(shared_x, entry["drift"])
                    vol[i][j] = _tabulated(shared_x, entry["vol"])
                    payoff[i][j] = _tabulated(shared_x, entry["payoff"])
            except (TypeError, ValueError) as exc:
                if isinstance(exc, ConfigurationError):
                    raise
                raise ConfigurationError(f"bad parameters in coefficients.pairs[{key!r}]: {exc}",
                                         key) from exc
        return cls(kind, tuple(map(tuple, drift)), tuple(map(tuple, vol)),
                   tuple(map(tuple, payoff)),
                   {"pairs": pairs, "defaults": defaults, "x": shared_x})

    def knots(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Exact piecewise-linear form ``(xs, b, sigma, f)``, values shaped ``(q, q, K)``.

        Every supported kind is piecewise linear with linear extrapolation, so
        the knot table reproduces the coefficients everywhere.
        """
        if self.kind == "tabulated":
            xs = np.asarray(self.params["x"], dtype=float)
        else:
            xs = np.array([0.0, 1.0])
        q = self.q
        tables = np.empty((3, q, q, xs.size))
        for i in range(1, q + 1):
            for j in range(1, q + 1):
                tables[0, i - 1, j - 1] = self.b(i, j, xs)
                tables[1, i - 1, j - 1] = self.sigma(i, j, xs)
                tables[2, i - 1, j - 1] = self.f(i, j, xs)
        return xs, tables[0], tables[1], tables[2]

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "pairs": self.params.get("pairs", {})}
        if self.params.get("defaults"):
            out["defaults"] = self.params["defaults"]
        if self.params.get("x") is not None:
            out["x"] = self.params["x"]
        return out


def coefficient_constants(model: CoefficientModel, x: np.ndarray) -> dict:
    """Grid-sampled Lipschitz and linear-growth constants of ``b``, ``sigma``, ``f``."""
    x = np.asarray(x, dtype=float)
    dx = np.diff(x)
    out = {}
    for name in ("b", "sigma", "f"):
        lip = growth = 0.0
        for i, j in itertools.product(range(1, model.q + 1), repeat=2):
            y = getattr(model, name)(i, j, x)
            if not np.all(np.isfinite(y)):
                raise ConfigurationError(f"{name}^{i}{j} is not finite on the grid")
            lip = max(lip, float(np.max(np.abs(np.diff(y)) / dx)))
            growth = max(growth, float(np.max(np.abs(y) / (1 + np.abs(x)))))
        out[name] = {"lipschitz": lip, "growth": growth}
    return out


def growth_rate(model: CoefficientModel, x: np.ndarray) -> float:
    """Conservative growth rate ``rho``: max over pairs of Lip(b) + Lip(sigma)^2."""
    x = np.asarray(x, dtype=float)
    dx = np.diff(x)
    rho = 0.0
    for i, j in itertools.product(range(1, model.q + 1), repeat=2):
        lb = np.max(np.abs(np.diff(model.b(i, j, x))) / dx)
        ls = np.max(np.abs(np.diff(model.sigma(i, j, x))) / dx)
        rho = max(rho, float(lb + ls ** 2))
    return rho


# ---------------------------------------------------------------------------
# Game

@dataclass(frozen=True, eq=False)
class GameSpec:
    q: int
    coefficients: CoefficientModel
    costs: CostMatrices
    r: float

    def __post_init__(self):
        if self.q < 2:
            raise ConfigurationError("at least two regimes are required (q >= 2)")
        if self.costs.q != self.q or self.coefficients.q != self.q:
            raise ConfigurationError(
                f"q={self.q} but costs are {self.costs.q}x{self.costs.q} and coefficients "
                f"cover {self.coefficients.q} regimes")
        if not (math.isfinite(self.r) and self.r > 0):
            raise ConfigurationError(f"discount rate must be positive, got {self.r}")

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return list(itertools.product(range(1, self.q + 1), repeat=2))

    @classmethod
    def from_dict(cls, doc: dict) -> "GameSpec":
        doc = dict(doc)
        unknown = set(doc) - {"q", "discount_r", "coefficients", "costs"}
        if unknown:
            raise ConfigurationError(f"unknown keys in game: {sorted(unknown)}", sorted(unknown)[0])
        for key in ("q", "discount_r", "coefficients", "costs"):
            if key not in doc:
                raise ConfigurationError(f"game is missing required key {key!r}")
        q = doc["q"]
        if not isinstance(q, int) or isinstance(q, bool):
            raise ConfigurationError(f"q must be an integer, got {q!r}", "q")
        costs = dict(doc["costs"])
        if set(costs) != {"C", "chi"}:
            extra = sorted(set(costs) - {"C", "chi"})
            raise ConfigurationError(f"costs must have exactly the keys C and chi, got {sorted(costs)}",
                                     extra[0] if extra else "costs")
        try:
            cm = CostMatrices(costs["C"], costs["chi"])
        except ConfigurationError as exc:
            raise ConfigurationError(str(exc), "costs") from exc
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"cost matrices must be numeric q x q arrays: {exc}",
                                     "costs") from exc
        try:
            r = float(doc["discount_r"])
        except (TypeError, ValueError) as exc:
            raise ConfigurationError("discount_r must be a number", "discount_r") from exc
        return cls(q, CoefficientModel.from_dict(doc["coefficients"], q), cm, r)

    def to_dict(self) -> dict:
        return {"q": self.q, "discount_r": self.r,
                "coefficients": self.coefficients.to_dict(),
                "costs": {"C": self.costs.C.tolist(), "chi": self.costs.chi.tolist()}}


def load_game(path: str | Path) -> GameSpec:
    with open(path) as fh:
        return GameSpec.from_dict(json.load(fh))


def validate_game(spec: GameSpec, x: np.ndarray, severity: str = "warn") -> ValidationReport:
    """Run every validator and estimate ``rho``; ``r <= rho`` only warns."""
    report = validate_costs(spec.costs).merge(validate_no_free_loop(spec.costs, severity))
    rho = growth_rate(spec.coefficients, x)
    consts = coefficient_constants(spec.coefficients, x)
    warnings = ()
    if spec.r <= rho:
        warnings = (Violation("discount", f"r={spec.r:g} does not exceed estimated growth rate rho={rho:g}",
                              value=rho),)
    return report.merge(ValidationReport(warnings=warnings, info={"rho": rho, "constants": consts}))


# ---------------------------------------------------------------------------
# Obstacles

def obstacle_M(V, node: int, i: int, j: int, costs: CostMatrices) -> tuple[float, int]:
    """Player I's switching obstacle ``max_{k != i} V^{kj} - C(i,k)`` and its argmax ``k``.

    ``V`` is a ``(q, q, n)`` array or anything with a ``values`` attribute
    holding one.  Ties go to the smallest ``k``.
    """
    vals = getattr(V, "values", V)
    q = vals.shape[0]
    if q < 2:
        raise ConfigurationError("obstacle undefined for a single regime")
    best, arg = -np.inf, 0
    for k in range(q):
        if k == i - 1:
            continue
        cand = vals[k, j - 1, node] - costs.C[i - 1, k]
        if cand > best:
            best, arg = cand, k + 1
    return float(best), arg


def obstacle_N(V, node: int, i: int, j: int, costs: CostMatrices) -> tuple[float, int]:
    """Player II's switching obstacle ``min_{l != j} V^{il} + chi(j,l)`` and its argmin ``l``."""
    vals = getattr(V, "values", V)
    q = vals.shape[0]
    if q < 2:
        raise ConfigurationError("obstacle undefined for a single regime")
    best, arg = np.inf, 0
    for l in range(q):
        if l == j - 1:
            continue
        cand = vals[i - 1, l, node] + costs.chi[j - 1, l]
        if cand < best:
            best, arg = cand, l + 1
    return float(best), arg


def obstacles(values: np.ndarray, costs: CostMatrices) -> tuple[np.ndarray, ...]:
    """Vectorized obstacles over all pairs and nodes.

    Returns ``(M, argM, N, argN)`` with shapes ``(q, q, n)``; the argument
    arrays hold 0-based regime indices (smallest index on ties).
    """
    q = values.shape[0]
    # cand_M[i, k, j, :] = V[k, j] - C[i, k]
    cand_M = values[None, :, :, :] - costs.C[:, :, None, None]
    idx = np.arange(q)
    cand_M[idx, idx] = -np.inf
    argM = np.argmax(cand_M, axis=1)
    M = np.take_along_axis(cand_M, argM[:, None], axis=1)[:, 0]
    # cand_N[i, j, l, :] = V[i, l] + chi[j, l]
    cand_N = values[:, None, :, :] + costs.chi[None, :, :, None]
    cand_N[:, idx, idx] = np.inf
    argN = np.argmin(cand_N, axis=2)
    N = np.take_along_axis(cand_N, argN[:, :, None], axis=2)[:, :, 0]
    return M, argM, N, argN
