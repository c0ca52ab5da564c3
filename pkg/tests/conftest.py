import json
from pathlib import Path

import numpy as np
import pytest

from switchgame import GameSpec, build_grid, howard_solve

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"
SCENARIOS = ("a", "b", "c", "d")


def scenario_path(name: str) -> Path:
    return CONFIGS / f"scenario_{name}.json"


def scenario(name: str) -> GameSpec:
    return GameSpec.from_dict(json.loads(scenario_path(name).read_text()))


def game_doc(payoff, C, chi, drift=0.0, vol=0.0, r=0.15):
    """Affine-coefficient game document.

    ``payoff``, ``drift`` and ``vol`` are per-pair ``[a0, a1]`` tables of shape
    (q, q, 2), or scalars broadcast to constants.
    """
    C = np.asarray(C, dtype=float)
    q = C.shape[0]

    def table(v):
        v = np.asarray(v, dtype=float)
        if v.ndim == 0:
            v = np.stack([np.full((q, q), float(v)), np.zeros((q, q))], axis=-1)
        elif v.ndim == 2:
            v = np.stack([v, np.zeros((q, q))], axis=-1)
        return v

    P, B, S = table(payoff), table(drift), table(vol)
    pairs = {f"{i + 1},{j + 1}": {"drift": B[i, j].tolist(), "vol": S[i, j].tolist(),
                                  "payoff": P[i, j].tolist()}
             for i in range(q) for j in range(q)}
    return {"q": q, "discount_r": r,
            "coefficients": {"kind": "affine_drift", "pairs": pairs},
            "costs": {"C": C.tolist(), "chi": np.asarray(chi, dtype=float).tolist()}}


def make_game(*args, **kw) -> GameSpec:
    return GameSpec.from_dict(game_doc(*args, **kw))


def prohibitive_game(r=0.15) -> GameSpec:
    big = [[0, 100], [100, 0]]
    return make_game([[5, 1], [-1, -4]], big, big, r=r)


def random_game(rng: np.random.Generator, q: int) -> GameSpec:
    """Random coarse instance satisfying the triangular and loop conditions."""
    def costs():
        m = rng.uniform(1.0, 1.9, (q, q))
        np.fill_diagonal(m, 0.0)
        return m

    payoff = rng.uniform(-3, 3, (q, q, 2))
    drift = np.stack([rng.uniform(-0.2, 0.2, (q, q)), rng.uniform(-0.1, 0.1, (q, q))], axis=-1)
    vol = np.stack([rng.uniform(0.1, 0.5, (q, q)), np.zeros((q, q))], axis=-1)
    return make_game(payoff, costs(), costs(), drift, vol, r=rng.uniform(0.2, 0.5))


@pytest.fixture(scope="session")
def solved_a():
    spec = scenario("a")
    grid = build_grid(-5, 5, 2001)
    V, policy, report = howard_solve(spec, grid, tol=1e-9)
    return spec, grid, V, policy, report


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            if rep.when != "call":
                continue
            for key, msg in rep.user_properties:
                if key == "acceptance":
                    lines.append((rep.nodeid.split("::")[-1], msg))
    if lines:
        terminalreporter.section("acceptance criteria")
        for name, msg in sorted(lines):
            terminalreporter.write_line(f"{name}: {msg}")
