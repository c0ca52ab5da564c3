"""Switching regions, thresholds and feedback strategies read off a solved field."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .grid import Grid
from .model import GameSpec, obstacles
from .solver import CONTINUE, SWITCH_I, SWITCH_II, PolicyTable, SolverError, ValueField, _Discrete

logger = logging.getLogger(__name__)

DEFAULT_TOL_ACTIVE = 1e-6

CONTINUATION, PLAYER_I, PLAYER_II, BOTH = 0, 1, 2, 3
REGION_NAMES = {CONTINUATION: "C", PLAYER_I: "I1", PLAYER_II: "I2", BOTH: "I3"}


class RegionError(SolverError):
    pass


@dataclass(frozen=True, eq=False)
class RegionMap:
    """Region label per (i, j, node) plus the obstacle argmax/argmin (1-based)."""

    labels: np.ndarray
    target_I: np.ndarray
    target_II: np.ndarray
    grid: Grid

    def policy(self) -> PolicyTable:
        """Feedback actions: player I wins ties (both obstacles active)."""
        lab = self.labels
        kind = np.where((lab == PLAYER_I) | (lab == BOTH), SWITCH_I,
                        np.where(lab == PLAYER_II, SWITCH_II, CONTINUE)).astype(np.int8)
        target = np.where(kind == SWITCH_I, self.target_I,
                          np.where(kind == SWITCH_II, self.target_II, 0)).astype(np.int16)
        return PolicyTable(kind, target)


def classify_regions(V: ValueField, spec: GameSpec, grid: Grid | None = None,
                     tol_active: float = DEFAULT_TOL_ACTIVE) -> RegionMap:
    """Label every node by which switching obstacles are active within ``tol_active``.

    Raises :class:`RegionError` if a continuation node violates
    ``|rV - LV - f| <= tol_active``.
    """
    grid = grid or V.grid
    vals = V.values
    M, argM, N, argN = obstacles(vals, spec.costs)
    m_on = vals - M <= tol_active
    n_on = N - vals <= tol_active
    labels = np.where(m_on & n_on, BOTH,
                      np.where(m_on, PLAYER_I, np.where(n_on, PLAYER_II, CONTINUATION))).astype(np.int8)
    res = np.abs(_Discrete(spec, grid).pde_residual(vals))
    cont = labels == CONTINUATION
    if np.any(cont) and res[cont].max() > tol_active:
        i, j, k = np.argwhere(cont & (res == res[cont].max()))[0]
        raise RegionError(f"continuation node {k} of pair ({i+1},{j+1}) has PDE residual "
                          f"{res[i, j, k]:.3e} > {tol_active:g}")
    return RegionMap(labels, argM + 1, argN + 1, grid)


@dataclass(frozen=True)
class SwitchSet:
    source: tuple[int, int]
    target: tuple[int, int]
    intervals: tuple[tuple[float, float], ...]

    @property
    def empty(self) -> bool:
        return not self.intervals

    def label(self) -> str:
        return f"I_{self.source[0]}{self.source[1]}->{self.target[0]}{self.target[1]}"


def _runs(mask: np.ndarray, x: np.ndarray) -> tuple[tuple[float, float], ...]:
    if not mask.any():
        return ()
    d = np.diff(mask.astype(np.int8), prepend=0, append=0)
    starts = np.flatnonzero(d == 1)
    stops = np.flatnonzero(d == -1) - 1
    return tuple((float(x[a]), float(x[b])) for a, b in zip(starts, stops))


def _cascade_targets(policy: PolicyTable) -> np.ndarray:
    """Pair reached at the same instant by following the feedback actions.

    Returns a ``(q, q, n, 2)`` array of 0-based regime pairs.  A chain stops
    at the first Continue or when it would revisit a pair.
    """
    q, _, n = policy.kind.shape
    out = np.empty((q, q, n, 2), dtype=np.int64)
    for i0 in range(q):
        for j0 in range(q):
            i = np.full(n, i0)
            j = np.full(n, j0)
            visited = np.zeros((n, q, q), dtype=bool)
            nodes = np.arange(n)
            for _ in range(q * q):
                visited[nodes, i, j] = True
                kind = policy.kind[i, j, nodes]
                tgt = policy.target[i, j, nodes] - 1
                ni = np.where(kind == SWITCH_I, tgt, i)
                nj = np.where(kind == SWITCH_II, tgt, j)
                move = (kind != CONTINUE) & ~visited[nodes, ni, nj]
                if not move.any():
                    break
                i = np.where(move, ni, i)
                j = np.where(move, nj, j)
            out[i0, j0, :, 0] = i
            out[i0, j0, :, 1] = j
    return out


def extract_switch_sets(V: ValueField, spec: GameSpec, grid: Grid | None = None,
                        tol_active: float = DEFAULT_TOL_ACTIVE,
                        mode: str = "terminal") -> list[SwitchSet]:
    """Maximal node intervals of each switching set, endpoints at grid resolution.

    ``mode="direct"``: for every pair of regime pairs differing in one
    coordinate, the nodes where ``V^{ij} = V^{kl} - C(i,k) + chi(j,l)``
    within ``tol_active`` (zero cost for the unchanged coordinate).

    ``mode="terminal"``: the nodes where starting in ``(i,j)`` the feedback
    strategies end, at the same instant, in ``(k,l)`` after applying every
    triggered switch (player I first).  This is how a threshold table lists
    a move such as ``12 -> 21`` made of two switches.
    """
    grid = grid or V.grid
    x = grid.nodes
    vals = V.values
    C, chi = spec.costs.C, spec.costs.chi
    out = []
    if mode == "direct":
        for (i, j) in spec.pairs:
            for (k, l) in spec.pairs:
                if (i == k) == (j == l):
                    continue
                rhs = vals[k - 1, l - 1] - C[i - 1, k - 1] + chi[j - 1, l - 1]
                mask = np.abs(vals[i - 1, j - 1] - rhs) <= tol_active
                out.append(SwitchSet((i, j), (k, l), _runs(mask, x)))
    elif mode == "terminal":
        ends = _cascade_targets(classify_regions(V, spec, grid, tol_active).policy())
        for (i, j) in spec.pairs:
            for (k, l) in spec.pairs:
                if (i, j) == (k, l):
                    continue
                e = ends[i - 1, j - 1]
                mask = (e[:, 0] == k - 1) & (e[:, 1] == l - 1)
                out.append(SwitchSet((i, j), (k, l), _runs(mask, x)))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return out


def format_switch_sets(sets: list[SwitchSet], grid: Grid, include_empty: bool = False) -> str:
    """Aligned text table; intervals touching the truncation boundary print as unbounded."""
    rows = []
    for s in sets:
        if s.empty and not include_empty:
            continue
        parts = []
        for a, b in s.intervals:
            lo = "(-inf" if np.isclose(a, grid.x_min) else f"[{a:.3f}"
            hi = "+inf)" if np.isclose(b, grid.x_max) else f"{b:.3f}]"
            parts.append(f"{lo}, {hi}")
        rows.append((s.label(), " U ".join(parts) or "empty"))
    width = max((len(r[0]) for r in rows), default=0)
    return "\n".join(f"{a:<{width}}  {b}" for a, b in rows)


@dataclass(frozen=True)
class Action:
    kind: int
    target: int = 0

    def __str__(self) -> str:
        if self.kind == SWITCH_I:
            return f"SwitchI({self.target})"
        if self.kind == SWITCH_II:
            return f"SwitchII({self.target})"
        return "Continue"


class FeedbackPolicy:
    """State-feedback realization of the optimal switching strategies.

    Actions are read at the nearest grid node; states outside the grid are
    clamped with a warning.
    """

    def __init__(self, V: ValueField, spec: GameSpec, tol_active: float = DEFAULT_TOL_ACTIVE):
        self.V, self.spec, self.grid = V, spec, V.grid
        self.regions = classify_regions(V, spec, V.grid, tol_active)
        self.table = self.regions.policy()

    def lookup(self, x: float, i: int, j: int) -> Action:
        if not self.grid.contains(x):
            logger.warning("state %g outside [%g, %g]; clamping", x, self.grid.x_min, self.grid.x_max)
        k = self.grid.nearest(x)
        return Action(*self.table.action(i, j, k))


def policy_lookup(V: ValueField, spec: GameSpec, grid: Grid | None, x: float, i: int, j: int,
                  tol_active: float = DEFAULT_TOL_ACTIVE) -> Action:
    """Action of the feedback strategies in state ``x`` with regimes ``(i, j)``."""
    return FeedbackPolicy(V, spec, tol_active).lookup(x, i, j)
