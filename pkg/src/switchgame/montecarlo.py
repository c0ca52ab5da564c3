"""Monte Carlo evaluation of the game payoff under the feedback strategies.

Paths are simulated by Euler-Maruyama.  Normals for path ``p`` come from a
Philox counter-based stream keyed by ``(base_seed, p)``, so every path is
reproducible on its own and estimates do not depend on batching.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .model import GameSpec
from .solver import SolverError, ValueField
from .strategy import DEFAULT_TOL_ACTIVE, FeedbackPolicy

logger = logging.getLogger(__name__)

PLAYER_NAMES = {1: "I", 2: "II"}


class EstimationError(SolverError):
    pass


@dataclass(frozen=True)
class SimConfig:
    x0: float
    i0: int = 1
    j0: int = 1
    dt: float = 1e-3
    horizon: float = 60.0
    n_paths: int = 10_000
    base_seed: int = 0

    def __post_init__(self):
        if not self.dt > 0 or not self.horizon > 0:
            raise ValueError("dt and horizon must be positive")
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if not 0 <= self.base_seed < 2 ** 64:
            raise ValueError("base_seed must fit in 64 bits")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))


@dataclass(frozen=True)
class LedgerEntry:
    time: float
    player: str
    source: int
    target: int
    cost: float  # discounted, signed as it enters the payoff


@dataclass
class PathPayoff:
    discounted_running: float
    cost_ledger: list[LedgerEntry]
    total: float
    valid: bool = True
    n_switches: int = 0


@dataclass
class Estimate:
    mean: float
    std_error: float
    n_valid: int
    tail_bound: float
    totals: np.ndarray = field(repr=False)
    valid: np.ndarray = field(repr=False)
    n_invalid: int = 0

    def summary(self) -> str:
        return f"{self.mean:.17g},{self.std_error:.17g},{self.tail_bound:.17g},{self.n_valid}"


@numba.njit(cache=True)
def _pl(xs, ys, x):
    # piecewise linear with linear extrapolation
    K = xs.size
    if K == 2:
        return ys[0] + (ys[1] - ys[0]) * (x - xs[0]) / (xs[1] - xs[0])
    s = np.searchsorted(xs, x)
    if s < 1:
        s = 1
    elif s > K - 1:
        s = K - 1
    x0, x1 = xs[s - 1], xs[s]
    return ys[s - 1] + (ys[s] - ys[s - 1]) * (x - x0) / (x1 - x0)


@numba.njit(cache=True)
def _path(x, a, b, Z, dt, r, xs, B, S, F, kind, target, x_min, h, C, chi,
          record, led_t, led_p, led_from, led_to, led_c):
    n_nodes = kind.shape[2]
    w = (1.0 - math.exp(-r * dt)) / r
    step_disc = math.exp(-r * dt)
    disc = 1.0
    sq = math.sqrt(dt)
    running = 0.0
    costs = 0.0
    n_led = 0
    cap = led_t.size
    for s in range(Z.size):
        t = s * dt
        node = int(round((x - x_min) / h))
        if node < 0:
            node = 0
        elif node > n_nodes - 1:
            node = n_nodes - 1
        kd = kind[a, b, node]
        if kd == 1:
            k = target[a, b, node] - 1
            c = -C[a, k] * disc
            if record and n_led < cap:
                led_t[n_led] = t
                led_p[n_led] = 1
                led_from[n_led] = a + 1
                led_to[n_led] = k + 1
                led_c[n_led] = c
            n_led += 1
            costs += c
            a = k
            kd = kind[a, b, node]
            if kd != 2:
                kd = 0
        if kd == 2:
            l = target[a, b, node] - 1
            c = chi[b, l] * disc
            if record and n_led < cap:
                led_t[n_led] = t
                led_p[n_led] = 2
                led_from[n_led] = b + 1
                led_to[n_led] = l + 1
                led_c[n_led] = c
            n_led += 1
            costs += c
            b = l
        running += disc * w * _pl(xs, F[a, b], x)
        x = x + _pl(xs, B[a, b], x) * dt + _pl(xs, S[a, b], x) * sq * Z[s]
        disc *= step_disc
        if not math.isfinite(x):
            return running, costs, n_led, False
    return running, costs, n_led, True


@numba.njit(cache=True)
def _batch(x0, a0, b0, Z, dt, r, xs, B, S, F, kind, target, x_min, h, C, chi, out, valid):
    empty_f = np.empty(0)
    empty_i = np.empty(0, dtype=np.int64)
    for p in range(Z.shape[0]):
        run, cst, _, ok = _path(x0, a0, b0, Z[p], dt, r, xs, B, S, F, kind, target, x_min, h,
                                C, chi, False, empty_f, empty_i, empty_i, empty_i, empty_f)
        out[p] = run + cst
        valid[p] = ok


def path_normals(base_seed: int, path_index: int, n_steps: int) -> np.ndarray:
    key = np.array([base_seed, path_index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key)).standard_normal(n_steps)


class _Engine:
    def __init__(self, spec: GameSpec, V: ValueField, cfg: SimConfig, tol_active: float):
        self.spec, self.V, self.cfg = spec, V, cfg
        policy = FeedbackPolicy(V, spec, tol_active).table
        self.kind = np.ascontiguousarray(policy.kind)
        self.target = np.ascontiguousarray(policy.target.astype(np.int64))
        self.xs, self.B, self.S, self.F = spec.coefficients.knots()
        grid = V.grid
        self.x_min, self.h = grid.x_min, grid.h
        for name, reg in (("i0", cfg.i0), ("j0", cfg.j0)):
            if not 1 <= reg <= spec.q:
                raise ValueError(f"{name}={reg} is not a regime in 1..{spec.q}")
        bmax = max(float(np.max(np.abs(spec.coefficients.b(i, j, grid.nodes)))) for i, j in spec.pairs)
        if bmax > 0 and cfg.dt > grid.h / bmax:
            logger.warning("dt=%g exceeds h/max|b|=%g", cfg.dt, grid.h / bmax)
        if not grid.contains(cfg.x0):
            logger.warning("x0=%g lies outside the grid; policy lookups will clamp", cfg.x0)

    def args(self):
        s = self.spec
        return (self.cfg.dt, s.r, self.xs, self.B, self.S, self.F, self.kind, self.target,
                self.x_min, self.h, s.costs.C, s.costs.chi)


def simulate_path(spec: GameSpec, V: ValueField, cfg: SimConfig, path_index: int,
                  tol_active: float = DEFAULT_TOL_ACTIVE, max_ledger: int = 100_000) -> PathPayoff:
    """Simulate one path and return its payoff with the full switching ledger."""
    eng = _Engine(spec, V, cfg, tol_active)
    Z = path_normals(cfg.base_seed, path_index, cfg.n_steps)
    led_t = np.empty(max_ledger)
    led_c = np.empty(max_ledger)
    led_p = np.empty(max_ledger, dtype=np.int64)
    led_from = np.empty(max_ledger, dtype=np.int64)
    led_to = np.empty(max_ledger, dtype=np.int64)
    run, cst, n_led, ok = _path(float(cfg.x0), cfg.i0 - 1, cfg.j0 - 1, Z, *eng.args(),
                                True, led_t, led_p, led_from, led_to, led_c)
    if n_led > max_ledger:
        logger.warning("ledger truncated to %d of %d entries", max_ledger, n_led)
    ledger = [LedgerEntry(float(led_t[m]), PLAYER_NAMES[int(led_p[m])], int(led_from[m]),
                          int(led_to[m]), float(led_c[m])) for m in range(min(n_led, max_ledger))]
    return PathPayoff(run, ledger, run + cst, bool(ok), int(n_led))


def tail_bound(spec: GameSpec, V: ValueField, cfg: SimConfig) -> float:
    """Bound on the payoff discarded by stopping at the horizon.

    ``exp(-rT) * K * E(1 + |X_T|)`` with ``K = max |V| / (1 + |x|)`` on the grid
    and ``E(1 + |X_T|) <= (1 + |x0| + |b(0)| T) exp(Lip(b) T)``.
    """
    x = V.grid.nodes
    K = float(np.max(np.abs(V.values) / (1 + np.abs(x))))
    lip = b0 = 0.0
    for i, j in spec.pairs:
        bx = spec.coefficients.b(i, j, x)
        lip = max(lip, float(np.max(np.abs(np.diff(bx)) / np.diff(x))))
        b0 = max(b0, float(abs(spec.coefficients.b(i, j, np.array([0.0]))[0])))
    T = cfg.horizon
    expo = (lip - spec.r) * T
    if expo > 700:
        return math.inf
    return K * (1 + abs(cfg.x0) + b0 * T) * math.exp(expo)


def estimate_value(spec: GameSpec, V: ValueField, cfg: SimConfig,
                   tol_active: float = DEFAULT_TOL_ACTIVE, batch: int = 64) -> Estimate:
    """Mean and standard error of the simulated payoff over ``cfg.n_paths`` paths."""
    eng = _Engine(spec, V, cfg, tol_active)
    bound = tail_bound(spec, V, cfg)
    v0 = abs(V(cfg.i0, cfg.j0, cfg.x0))
    if bound > 0.01 * v0:
        logger.warning("horizon tail bound %.3g exceeds 1%% of |V(x0)|=%.3g", bound, v0)
    n = cfg.n_paths
    totals = np.empty(n)
    valid = np.empty(n, dtype=np.bool_)
    steps = cfg.n_steps
    for start in range(0, n, batch):
        stop = min(n, start + batch)
        Z = np.empty((stop - start, steps))
        for p in range(start, stop):
            Z[p - start] = path_normals(cfg.base_seed, p, steps)
        _batch(float(cfg.x0), cfg.i0 - 1, cfg.j0 - 1, Z, *eng.args(),
               totals[start:stop], valid[start:stop])
    n_valid = int(valid.sum())
    n_invalid = n - n_valid
    if n_invalid > 0.01 * n:
        raise EstimationError(f"{n_invalid} of {n} paths blew up (more than 1%)")
    if n_invalid:
        logger.warning("%d invalid paths excluded", n_invalid)
    good = totals[valid]
    mean = float(np.sum(good) / n_valid)
    se = float(np.std(good, ddof=1) / math.sqrt(n_valid)) if n_valid > 1 else 0.0
    return Estimate(mean, se, n_valid, bound, totals, valid, n_invalid)
