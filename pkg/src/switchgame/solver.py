"""Discrete Isaacs system with bilateral switching obstacles.

The discrete problem reads, at every node and regime pair,

    V = max( min( c(V), N[V] ), M[V] )

where ``c(V)`` is the value obtained by solving the continuation row
``(r - L) V = f`` for the node alone.  :func:`howard_solve` solves it by
policy iteration with a joint sparse solve over all ``q*q`` pairs;
:func:`value_iteration_oracle` is an independent Gauss-Seidel fixed point used
for cross-checks.
"""

from __future__ import annotations

import hashlib
import logging
import time
from dataclasses import dataclass

import numba
import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import Grid, assemble_generator, payoff_table
from .model import GameSpec, obstacles

logger = logging.getLogger(__name__)

CONTINUE, SWITCH_I, SWITCH_II = 0, 1, 2

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 200
DEFAULT_MAX_SWEEPS = 200_000


class SolverError(RuntimeError):
    pass


class ConvergenceError(SolverError):
    def __init__(self, msg, residuals=()):
        super().__init__(msg)
        self.residuals = list(residuals)


class SingularPolicyError(SolverError):
    pass


@dataclass(frozen=True, eq=False)
class ValueField:
    values: np.ndarray  # (q, q, n)
    grid: Grid

    @property
    def q(self) -> int:
        return self.values.shape[0]

    def pair(self, i: int, j: int) -> np.ndarray:
        return self.values[i - 1, j - 1]

    def __call__(self, i: int, j: int, x: float) -> float:
        """Linear interpolation of ``V^{ij}`` at ``x`` (clamped to the grid)."""
        return float(np.interp(x, self.grid.nodes, self.pair(i, j)))


@dataclass(frozen=True, eq=False)
class PolicyTable:
    """Action per (i, j, node): ``kind`` in {CONTINUE, SWITCH_I, SWITCH_II}, 1-based ``target``."""

    kind: np.ndarray
    target: np.ndarray

    def digest(self) -> str:
        h = hashlib.sha1(self.kind.tobytes())
        h.update(self.target.tobytes())
        return h.hexdigest()

    def action(self, i: int, j: int, node: int) -> tuple[int, int]:
        return int(self.kind[i - 1, j - 1, node]), int(self.target[i - 1, j - 1, node])


@dataclass
class SolveReport:
    iterations: int
    residual_hjbi1: float
    residual_hjbi2: float
    converged: bool
    wall_time: float
    method: str = "howard"
    update_norms: tuple = ()

    def summary(self) -> str:
        return (f"method={self.method} iterations={self.iterations} converged={self.converged} "
                f"residual_HJBI1={self.residual_hjbi1:.3e} residual_HJBI2={self.residual_hjbi2:.3e} "
                f"wall_time={self.wall_time:.3f}s")


class _Discrete:
    """Per-solve arrays: continuation rows and payoffs stacked as (q, q, n)."""

    def __init__(self, spec: GameSpec, grid: Grid):
        q, n = spec.q, grid.n
        self.spec, self.grid = spec, grid
        self.sub = np.empty((q, q, n))
        self.sup = np.empty((q, q, n))
        for i, j in spec.pairs:
            g = assemble_generator(spec, grid, i, j)
            self.sub[i - 1, j - 1] = g.sub
            self.sup[i - 1, j - 1] = g.sup
        self.f = payoff_table(spec, grid)
        self.r = spec.r
        self.D = spec.r + self.sub + self.sup

    def relax(self, V: np.ndarray) -> np.ndarray:
        """Continuation value of each row with its neighbours frozen."""
        acc = self.f.copy()
        acc[..., 1:] += self.sub[..., 1:] * V[..., :-1]
        acc[..., :-1] += self.sup[..., :-1] * V[..., 1:]
        return acc / self.D

    def pde_residual(self, V: np.ndarray) -> np.ndarray:
        """``r V - L V - f`` row by row."""
        # difference form keeps rounding at the scale of V, not of D * V
        out = self.r * V - self.f
        out[..., 1:] -= self.sub[..., 1:] * (V[..., :-1] - V[..., 1:])
        out[..., :-1] -= self.sup[..., :-1] * (V[..., 1:] - V[..., :-1])
        return out


def _greedy(disc: _Discrete, V: np.ndarray, prev: PolicyTable | None) -> PolicyTable:
    return _greedy_counted(disc, V, prev)[0]


def _greedy_counted(disc: _Discrete, V: np.ndarray, prev: PolicyTable | None):
    """Greedy policy and the number of switches demoted to break cycles."""
    c = disc.relax(V)
    M, argM, N, argN = obstacles(V, disc.spec.costs)
    inner = np.minimum(c, N)
    kind = np.where(M > inner, SWITCH_I, np.where(N < c, SWITCH_II, CONTINUE)).astype(np.int8)
    target = np.where(kind == SWITCH_I, argM + 1, np.where(kind == SWITCH_II, argN + 1, 0))
    if prev is not None:
        # keep the previous action wherever it still attains the optimum
        best = np.maximum(inner, M)
        pv = np.where(prev.kind == CONTINUE, c, np.where(prev.kind == SWITCH_I, M, N))
        same_target = ((prev.kind == CONTINUE)
                       | ((prev.kind == SWITCH_I) & (prev.target == argM + 1))
                       | ((prev.kind == SWITCH_II) & (prev.target == argN + 1)))
        keep = same_target & (np.abs(pv - best) <= 1e-13 * (1.0 + np.abs(best)))
        kind = np.where(keep, prev.kind, kind)
        target = np.where(keep, prev.target, target)
    policy = PolicyTable(kind, target.astype(np.int16))
    demoted = _break_cycles(policy, c, M, N, argN)
    return policy, demoted


def _break_cycles(policy: PolicyTable, c, M, N, argN) -> int:
    """Demote switch cycles picked at iterates far from the solution.

    In each cycle the member losing least by giving up its switch takes its
    next best action (player I falls back to ``min(c, N)``, player II to
    continuing).  At a solution the loss is zero, so fixed points are kept.
    Returns the number of demotions that cost a strictly positive amount.
    """
    demoted = 0
    switching = np.flatnonzero((policy.kind != CONTINUE).sum(axis=(0, 1)) >= 2)
    for node in switching:
        node = int(node)
        while (cyc := _switch_cycle(policy, node)) is not None:
            best = None
            for i, j in cyc:
                a, b = i - 1, j - 1
                if policy.kind[a, b, node] == SWITCH_I:
                    loss = M[a, b, node] - min(c[a, b, node], N[a, b, node])
                else:
                    loss = c[a, b, node] - N[a, b, node]
                if best is None or loss < best[0]:
                    best = (loss, a, b)
            loss, a, b = best
            if loss > 1e-12 * (1.0 + abs(c[a, b, node])):
                demoted += 1
            if policy.kind[a, b, node] == SWITCH_I and N[a, b, node] < c[a, b, node]:
                policy.kind[a, b, node] = SWITCH_II
                policy.target[a, b, node] = argN[a, b, node] + 1
            else:
                policy.kind[a, b, node] = CONTINUE
                policy.target[a, b, node] = 0
    return demoted


def _switch_cycle(policy: PolicyTable, node: int) -> list | None:
    q = policy.kind.shape[0]
    for i0 in range(q):
        for j0 in range(q):
            seen = []
            i, j = i0, j0
            while policy.kind[i, j, node] != CONTINUE:
                if (i, j) in seen:
                    cyc = seen[seen.index((i, j)):]
                    return [(a + 1, b + 1) for a, b in cyc]
                seen.append((i, j))
                t = policy.target[i, j, node] - 1
                if policy.kind[i, j, node] == SWITCH_I:
                    i = t
                else:
                    j = t
    return None


def _check_policy(policy: PolicyTable) -> None:
    switching = np.flatnonzero((policy.kind != CONTINUE).sum(axis=(0, 1)) >= 2)
    for node in switching:
        cyc = _switch_cycle(policy, int(node))
        if cyc is not None:
            path = "->".join(f"({i},{j})" for i, j in cyc + cyc[:1])
            raise SingularPolicyError(
                f"switching cycle {path} at node {int(node)} makes the policy system singular")


def evaluate_policy(disc: _Discrete, policy: PolicyTable) -> np.ndarray:
    """Solve the linear system induced by a fixed action table."""
    _check_policy(policy)
    q, n = disc.spec.q, disc.grid.n
    C, chi = disc.spec.costs.C, disc.spec.costs.chi
    idx = np.arange(q * q * n).reshape(q, q, n)
    kind = policy.kind
    tgt = policy.target.astype(np.int64) - 1
    ii, jj, kk = np.indices((q, q, n))

    cont = kind == CONTINUE
    rows = [idx[cont]]
    cols = [idx[cont]]
    vals = [disc.D[cont]]
    m = cont.copy()
    m[..., 0] = False
    rows.append(idx[m]); cols.append(idx[m] - 1); vals.append(-disc.sub[m])
    m = cont.copy()
    m[..., -1] = False
    rows.append(idx[m]); cols.append(idx[m] + 1); vals.append(-disc.sup[m])
    rhs = np.where(cont, disc.f, 0.0)

    sw1 = kind == SWITCH_I
    k1 = tgt[sw1]
    rows += [idx[sw1], idx[sw1]]
    cols += [idx[sw1], idx[k1, jj[sw1], kk[sw1]]]
    vals += [np.ones(k1.size), -np.ones(k1.size)]
    rhs[sw1] = -C[ii[sw1], k1]

    sw2 = kind == SWITCH_II
    l2 = tgt[sw2]
    rows += [idx[sw2], idx[sw2]]
    cols += [idx[sw2], idx[ii[sw2], l2, kk[sw2]]]
    vals += [np.ones(l2.size), -np.ones(l2.size)]
    rhs[sw2] = chi[jj[sw2], l2]

    A = sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(q * q * n,) * 2)
    sol = spla.spsolve(A, rhs.ravel())
    if not np.all(np.isfinite(sol)):
        raise SingularPolicyError("policy system produced non-finite values")
    return sol.reshape(q, q, n)


def _fixed_point_map(disc: _Discrete, V: np.ndarray) -> np.ndarray:
    M, _, N, _ = obstacles(V, disc.spec.costs)
    return np.maximum(np.minimum(disc.relax(V), N), M)


def _howard(disc: _Discrete, V: np.ndarray, tol: float, max_iter: int):
    """Simultaneous policy iteration; returns ``None`` on a policy cycle or stall."""
    policy = None
    seen: set[str] = set()
    norms = []
    for it in range(1, max_iter + 1):
        new_policy, demoted = _greedy_counted(disc, V, policy)
        digest = new_policy.digest()
        stable = policy is not None and digest == policy.digest()
        if not stable and digest in seen:
            logger.info("policy cycle at iteration %d", it)
            return None, it, norms
        seen.add(digest)
        V_new = evaluate_policy(disc, new_policy)
        delta = float(np.max(np.abs(V_new - V)))
        norms.append(delta)
        V, policy = V_new, new_policy
        logger.debug("howard iteration %d: update %.3e", it, delta)
        if stable and delta < tol:
            if demoted:
                # stable only because a cycle was demoted: not a fixed point
                logger.info("stalled policy at iteration %d", it)
                return None, it, norms
            return V, it, norms
    return None, max_iter, norms


def _smooth(disc: _Discrete, V: np.ndarray, tol: float, max_sweeps: int) -> np.ndarray:
    """Gauss-Seidel sweeps on a copy of ``V`` until the sweep change is below ``tol``."""
    V = np.array(V, dtype=float, copy=True)
    history = np.zeros(max_sweeps)
    _gauss_seidel(V, disc.f, disc.sub, disc.sup, disc.D, disc.spec.costs.C,
                  disc.spec.costs.chi, tol, max_sweeps, history)
    return V


WARM_START_MIN_NODES = 201
SMOOTH_TOL = 1e-2


def howard_solve(spec: GameSpec, grid: Grid, tol: float = DEFAULT_TOL,
                 max_iter: int = DEFAULT_MAX_ITER, init: np.ndarray | None = None,
                 warm_start: bool = True) -> tuple[ValueField, PolicyTable, SolveReport]:
    """Policy iteration for the discrete Isaacs system.

    Each step re-selects, node by node, the action that attains
    ``max(min(c, N), M)`` at the current iterate, then solves the induced
    linear system jointly over all pairs.  Stops once the policy is stable and
    the sup-norm update drops below ``tol``.  Far from the solution the
    simultaneous update of both players can cycle.  When a policy repeats, or
    a stable policy is not a fixed point, the start is first smoothed by
    Gauss-Seidel sweeps (relative change ``SMOOTH_TOL``, then 100 times
    smaller on each further failure) and the iteration restarts.

    The iterate starts from ``init`` if given, else from ``V = f / r``.  On
    grids finer than ``WARM_START_MIN_NODES`` with ``warm_start`` set, the
    problem is first solved on a grid with half the nodes and the result is
    interpolated; free boundaries move about one node per Howard step, so
    this keeps the iteration count independent of ``n``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    t0 = time.perf_counter()
    disc = _Discrete(spec, grid)
    iterations = 0
    if init is not None:
        V = np.array(init, dtype=float).reshape(disc.f.shape)
    elif warm_start and grid.n > WARM_START_MIN_NODES:
        coarse = Grid(grid.x_min, grid.x_max, (grid.n + 1) // 2)
        Vc, _, rc = howard_solve(spec, coarse, tol, max_iter, warm_start=True)
        iterations += rc.iterations
        V = np.empty_like(disc.f)
        for i in range(spec.q):
            for j in range(spec.q):
                V[i, j] = np.interp(grid.nodes, coarse.nodes, Vc.values[i, j])
    else:
        V = disc.f / spec.r
    V_h, it, norms = _howard(disc, V, tol, max_iter)
    method = "howard"
    smooth_tol = SMOOTH_TOL * (1.0 + float(np.max(np.abs(V))))
    while V_h is None:
        if smooth_tol < tol:
            raise ConvergenceError(f"policy iteration failed after smoothing to {tol:g} "
                                   f"(last update {norms[-1]:.3e})", norms)
        logger.info("policy iteration cycled or stalled; restarting from Gauss-Seidel "
                       "iterate with sweep change < %.1e", smooth_tol)
        V = _smooth(disc, V, smooth_tol, DEFAULT_MAX_SWEEPS)
        V_h, it2, norms2 = _howard(disc, V, tol, max_iter)
        it, norms, method = it + it2, norms + norms2, "howard-smoothed"
        smooth_tol /= 100
    V = V_h
    field = ValueField(V, grid)
    policy = _greedy(disc, V, None)
    report = SolveReport(iterations + it, isaacs_residual(field, spec, grid, "HJBI1"),
                         isaacs_residual(field, spec, grid, "HJBI2"), True,
                         time.perf_counter() - t0, method,
                         tuple(norms))
    return field, policy, report


@numba.njit(cache=True)
def _gauss_seidel(V, f, sub, sup, D, C, chi, tol, max_sweeps, history):
    q, _, n = V.shape
    for sweep in range(max_sweeps):
        change = 0.0
        forward = sweep % 2 == 0
        for kk in range(n):
            k = kk if forward else n - 1 - kk
            for i in range(q):
                for j in range(q):
                    acc = f[i, j, k]
                    if k > 0:
                        acc += sub[i, j, k] * V[i, j, k - 1]
                    if k < n - 1:
                        acc += sup[i, j, k] * V[i, j, k + 1]
                    c = acc / D[i, j, k]
                    Nv = np.inf
                    for l in range(q):
                        if l != j:
                            Nv = min(Nv, V[i, l, k] + chi[j, l])
                    Mv = -np.inf
                    for m in range(q):
                        if m != i:
                            Mv = max(Mv, V[m, j, k] - C[i, m])
                    new = max(min(c, Nv), Mv)
                    d = abs(new - V[i, j, k])
                    if d > change:
                        change = d
                    V[i, j, k] = new
        history[sweep] = change
        if change < tol:
            return sweep + 1
    return -1


def value_iteration_oracle(spec: GameSpec, grid: Grid, tol: float = 1e-12,
                           max_sweeps: int = DEFAULT_MAX_SWEEPS) -> ValueField:
    """Gauss-Seidel value iteration on the same discrete system.

    Each update solves one continuation row with the neighbours held fixed,
    then clips by the obstacles.  Sweep direction alternates.
    """
    disc = _Discrete(spec, grid)
    V = disc.f / spec.r
    history = np.zeros(max_sweeps)
    sweeps = _gauss_seidel(V, disc.f, disc.sub, disc.sup, disc.D, spec.costs.C, spec.costs.chi,
                           tol, max_sweeps, history)
    if sweeps < 0:
        raise ConvergenceError(f"value iteration did not reach tol={tol:g} in {max_sweeps} sweeps "
                               f"(last change {history[-1]:.3e})", history[::max(1, max_sweeps // 100)])
    logger.debug("value iteration converged in %d sweeps", sweeps)
    return ValueField(V, grid)


def isaacs_residual(V: ValueField, spec: GameSpec, grid: Grid, ordering: str = "HJBI1") -> float:
    """Sup-norm residual of the Isaacs system in either ordering.

    ``HJBI1``: ``max{ min[rV - LV - f, V - M], V - N }``;
    ``HJBI2``: ``min{ max[rV - LV - f, V - N], V - M }``.
    """
    disc = _Discrete(spec, grid)
    vals = V.values
    A = disc.pde_residual(vals)
    M, _, N, _ = obstacles(vals, spec.costs)
    if ordering == "HJBI1":
        res = np.maximum(np.minimum(A, vals - M), vals - N)
    elif ordering == "HJBI2":
        res = np.minimum(np.maximum(A, vals - N), vals - M)
    else:
        raise ValueError(f"unknown ordering {ordering!r}")
    return float(np.max(np.abs(res)))


def check_sandwich(V: ValueField, spec: GameSpec, grid: Grid | None = None) -> float:
    """Largest violation of ``M[V] <= V <= N[V]`` (0 when the sandwich holds)."""
    vals = V.values
    M, _, N, _ = obstacles(vals, spec.costs)
    return float(max(np.max(M - vals), np.max(vals - N), 0.0))
