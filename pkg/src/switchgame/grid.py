"""Truncated uniform grid and monotone upwind discretization of the generator.

For each regime pair the generator ``b V' + 0.5 sigma^2 V''`` is replaced by a
tridiagonal operator ``L`` with non-negative off-diagonals and zero row sums,
so ``rI - L`` is an M-matrix for every ``r > 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .model import ConfigurationError, GameSpec


class AssemblyError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class Grid:
    x_min: float
    x_max: float
    n: int

    def __post_init__(self):
        if not (math.isfinite(self.x_min) and math.isfinite(self.x_max)):
            raise ConfigurationError("grid bounds must be finite")
        if not self.x_min < self.x_max:
            raise ConfigurationError(f"need x_min < x_max, got {self.x_min} >= {self.x_max}")
        if int(self.n) != self.n or self.n < 3:
            raise ConfigurationError(f"grid needs at least 3 nodes, got n={self.n}")
        object.__setattr__(self, "n", int(self.n))

    @property
    def h(self) -> float:
        return (self.x_max - self.x_min) / (self.n - 1)

    @property
    def nodes(self) -> np.ndarray:
        return self.x_min + self.h * np.arange(self.n)

    def nearest(self, x: float) -> int:
        k = int(round((x - self.x_min) / self.h))
        return min(max(k, 0), self.n - 1)

    def contains(self, x: float) -> bool:
        return self.x_min <= x <= self.x_max


def build_grid(x_min: float, x_max: float, n: int) -> Grid:
    return Grid(float(x_min), float(x_max), n)


@dataclass(frozen=True, eq=False)
class DiscreteGenerator:
    """Tridiagonal rows ``(sub, diag, sup)``; ``sub[0]`` and ``sup[-1]`` are always 0."""

    sub: np.ndarray
    diag: np.ndarray
    sup: np.ndarray

    def apply(self, v: np.ndarray) -> np.ndarray:
        # difference form: constants map to exactly zero
        out = np.zeros_like(v, dtype=float)
        out[1:] += self.sub[1:] * (v[:-1] - v[1:])
        out[:-1] += self.sup[:-1] * (v[1:] - v[:-1])
        return out

    def matrix(self) -> sp.csr_matrix:
        n = self.diag.size
        return sp.diags([self.sub[1:], self.diag, self.sup[:-1]], [-1, 0, 1],
                        shape=(n, n), format="csr")


def upwind_weights(b: np.ndarray, sigma: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Off-diagonal weights for drift ``b`` and volatility ``sigma`` sampled on the nodes.

    Boundary rows keep only drift that points into the domain (a first-order
    one-sided difference); outward drift and diffusion are dropped there.
    """
    a = 0.5 * sigma ** 2
    sub = a / h ** 2 + np.maximum(-b, 0.0) / h
    sup = a / h ** 2 + np.maximum(b, 0.0) / h
    sub[0] = 0.0
    sup[0] = max(b[0], 0.0) / h
    sup[-1] = 0.0
    sub[-1] = max(-b[-1], 0.0) / h
    return sub, sup


def assemble_generator(spec: GameSpec, grid: Grid, i: int, j: int) -> DiscreteGenerator:
    x = grid.nodes
    b = spec.coefficients.b(i, j, x)
    s = spec.coefficients.sigma(i, j, x)
    for name, arr in (("drift", b), ("volatility", s)):
        bad = np.flatnonzero(~np.isfinite(arr))
        if bad.size:
            k = int(bad[0])
            raise AssemblyError(f"{name} of pair ({i},{j}) is not finite at node {k} (x={x[k]:g})")
    sub, sup = upwind_weights(b, s, grid.h)
    return DiscreteGenerator(sub, -(sub + sup), sup)


def assemble_all(spec: GameSpec, grid: Grid) -> dict[tuple[int, int], DiscreteGenerator]:
    return {(i, j): assemble_generator(spec, grid, i, j) for i, j in spec.pairs}


def payoff_table(spec: GameSpec, grid: Grid) -> np.ndarray:
    """Running rewards on the grid as a ``(q, q, n)`` array."""
    x = grid.nodes
    f = np.empty((spec.q, spec.q, grid.n))
    for i, j in spec.pairs:
        f[i - 1, j - 1] = spec.coefficients.f(i, j, x)
    if not np.all(np.isfinite(f)):
        raise AssemblyError("running reward is not finite on the grid")
    return f
