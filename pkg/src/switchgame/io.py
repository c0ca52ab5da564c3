"""CSV export and import."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .grid import Grid
from .solver import ValueField
from .strategy import REGION_NAMES, RegionMap, SwitchSet

FMT = "{:.17g}"


def value_columns(q: int) -> list[str]:
    return ["x"] + [f"V{i}{j}" for i in range(1, q + 1) for j in range(1, q + 1)]


def write_value_csv(path, V: ValueField) -> None:
    q = V.q
    x = V.grid.nodes
    flat = V.values.reshape(q * q, -1)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(value_columns(q))
        for k in range(x.size):
            w.writerow([FMT.format(x[k])] + [FMT.format(v) for v in flat[:, k]])


def read_value_csv(path) -> ValueField:
    """Inverse of :func:`write_value_csv`; the grid is rebuilt from the first/last ``x``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], np.array(rows[1:], dtype=float)
    q = int(round(np.sqrt(len(header) - 1)))
    if header != value_columns(q):
        raise ValueError(f"{path}: unexpected header {header}")
    grid = Grid(float(body[0, 0]), float(body[-1, 0]), body.shape[0])
    values = body[:, 1:].T.reshape(q, q, -1).copy()
    return ValueField(values, grid)


def write_regions_csv(path, regions: RegionMap) -> None:
    x = regions.grid.nodes
    q = regions.labels.shape[0]
    policy = regions.policy()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "pair", "label", "target"])
        for k in range(x.size):
            for i in range(q):
                for j in range(q):
                    kind, tgt = policy.kind[i, j, k], policy.target[i, j, k]
                    if kind == 1:
                        target = f"{tgt}{j + 1}"
                    elif kind == 2:
                        target = f"{i + 1}{tgt}"
                    else:
                        target = ""
                    w.writerow([FMT.format(x[k]), f"{i + 1}{j + 1}",
                                REGION_NAMES[int(regions.labels[i, j, k])], target])


def write_switch_sets_csv(path, sets: list[SwitchSet], grid: Grid) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["source", "target", "lower", "upper", "lower_unbounded", "upper_unbounded"])
        for s in sets:
            for a, b in s.intervals:
                w.writerow([f"{s.source[0]}{s.source[1]}", f"{s.target[0]}{s.target[1]}",
                            FMT.format(a), FMT.format(b),
                            int(np.isclose(a, grid.x_min)), int(np.isclose(b, grid.x_max))])


def write_paths_csv(path, totals: np.ndarray, valid: np.ndarray | None = None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path", "total", "valid"])
        for p, t in enumerate(totals):
            ok = True if valid is None else bool(valid[p])
            w.writerow([p, FMT.format(t), int(ok)])


def ensure_parent(path) -> Path:
    p = Path(path)
    if p.parent and not p.parent.exists():
        p.parent.mkdir(parents=True)
    return p
