import math

import numpy as np
import pytest

from switchgame.grid import build_grid
from switchgame.montecarlo import (EstimationError, SimConfig, estimate_value, path_normals,
                                   simulate_path, tail_bound)
from switchgame.solver import howard_solve

from conftest import make_game, scenario

BIG = [[0, 100], [100, 0]]


@pytest.fixture(scope="module")
def deterministic():
    spec = make_game(1.5, BIG, BIG)
    grid = build_grid(-2, 2, 41)
    V, _, _ = howard_solve(spec, grid)
    return spec, V


@pytest.fixture(scope="module")
def coarse_a():
    spec = scenario("a")
    V, _, _ = howard_solve(spec, build_grid(-5, 5, 401))
    return spec, V


@pytest.fixture(scope="module")
def one_player_negative_cost():
    # player II frozen by prohibitive chi; C(1,2) < 0 makes switching pay
    payoff = np.array([[[0, 1], [0, 1]], [[0.5, -1], [0.5, -1]]], dtype=float)
    spec = make_game(payoff, [[0, -0.3], [0.8, 0]], [[0, 1e3], [1e3, 0]],
                     drift=0.0, vol=0.6, r=0.2)
    V, _, _ = howard_solve(spec, build_grid(-4, 4, 161))
    return spec, V


def test_deterministic_path_closed_form(deterministic):
    spec, V = deterministic
    p = simulate_path(spec, V, SimConfig(x0=0.3, horizon=60.0, n_paths=1), 0)
    expect = 1.5 / 0.15 * (1 - math.exp(-9.0))
    assert expect == pytest.approx(9.99876590, abs=1e-8)
    assert p.total == pytest.approx(expect, abs=1e-9)
    assert p.cost_ledger == [] and p.valid


def test_deterministic_estimate_zero_error(deterministic):
    spec, V = deterministic
    est = estimate_value(spec, V, SimConfig(x0=0.3, n_paths=8))
    assert est.mean == pytest.approx(10 * (1 - math.exp(-9.0)), abs=1e-9)
    assert est.std_error == 0.0 and est.n_valid == 8


def test_prohibitive_constant_stochastic(deterministic):
    # noise moves X but the reward is constant, so every path is the same integral
    spec = make_game([[5, 1], [-1, -4]], BIG, BIG, drift=0.1, vol=0.5)
    V, _, _ = howard_solve(spec, build_grid(-5, 5, 201))
    est = estimate_value(spec, V, SimConfig(x0=0.0, i0=2, j0=1, dt=1e-2, n_paths=50))
    target = -1 / 0.15 * (1 - math.exp(-9.0))
    assert abs(est.mean - target) <= 3 * est.std_error + 1e-9


def test_immediate_switch_ledger(solved_a):
    spec, grid, V, _, _ = solved_a
    p = simulate_path(spec, V, SimConfig(x0=-1.0, dt=1e-2, horizon=5.0), 0)
    first = p.cost_ledger[0]
    assert (first.time, first.player, first.source, first.target) == (0.0, "I", 1, 2)
    assert first.cost == -2.0


def test_path_determinism(coarse_a):
    spec, V = coarse_a
    cfg = SimConfig(x0=0.1, dt=1e-2, horizon=20.0, base_seed=12345)
    a = simulate_path(spec, V, cfg, 7)
    b = simulate_path(spec, V, cfg, 7)
    c = simulate_path(spec, V, cfg, 8)
    assert a == b
    assert a.total != c.total


def test_normals_keyed_by_seed_and_index():
    assert np.array_equal(path_normals(3, 5, 10), path_normals(3, 5, 10))
    assert not np.array_equal(path_normals(3, 5, 10), path_normals(3, 6, 10))
    assert not np.array_equal(path_normals(3, 5, 10), path_normals(4, 5, 10))


def test_batch_and_single_path_agree(coarse_a):
    spec, V = coarse_a
    cfg = SimConfig(x0=0.2, dt=1e-2, horizon=20.0, n_paths=40, base_seed=9)
    e1 = estimate_value(spec, V, cfg, batch=1)
    e2 = estimate_value(spec, V, cfg, batch=64)
    assert np.array_equal(e1.totals, e2.totals) and e1.mean == e2.mean
    for p in (0, 17, 39):
        assert simulate_path(spec, V, cfg, p).total == e1.totals[p]


def test_ledger_consistency(coarse_a):
    spec, V = coarse_a
    r = spec.r
    C, chi = spec.costs.C, spec.costs.chi
    switched = 0
    for idx in range(20):
        # GBM keeps its sign: start inside the continuation band on either side
        cfg = SimConfig(x0=0.05 if idx % 2 else -0.05, dt=1e-2, horizon=30.0, base_seed=2)
        p = simulate_path(spec, V, cfg, idx)
        state = {"I": cfg.i0, "II": cfg.j0}
        last_time = {"I": -1.0, "II": -1.0}
        cost_sum = 0.0
        for e in p.cost_ledger:
            assert e.source != e.target
            assert e.source == state[e.player]
            assert e.time > last_time[e.player]  # at most one switch per player per step
            state[e.player], last_time[e.player] = e.target, e.time
            raw = -C[e.source - 1, e.target - 1] if e.player == "I" else chi[e.source - 1, e.target - 1]
            assert e.cost == pytest.approx(math.exp(-r * e.time) * raw, rel=1e-12)
            cost_sum += e.cost
        switched += len(p.cost_ledger)
        assert p.total == pytest.approx(p.discounted_running + cost_sum, rel=1e-12, abs=1e-12)
    assert switched > 0


def test_cost_sum_bound_player_ii_frozen(one_player_negative_cost):
    spec, V = one_player_negative_cost
    cfg = SimConfig(x0=0.0, dt=1e-2, horizon=30.0)
    bound = max(-spec.costs.C[0, k] for k in range(spec.q))  # k = i0 gives 0
    total_switches = 0
    for idx in range(30):
        p = simulate_path(spec, V, cfg, idx)
        assert all(e.player == "I" for e in p.cost_ledger)
        assert sum(e.cost for e in p.cost_ledger) <= bound + 1e-12
        total_switches += len(p.cost_ledger)
    assert total_switches > 30


def test_doubling_horizon_within_tail(coarse_a):
    spec, V = coarse_a
    base = dict(x0=1.0, dt=1e-2, n_paths=200, base_seed=4)
    short = SimConfig(horizon=30.0, **base)
    e1 = estimate_value(spec, V, short)
    e2 = estimate_value(spec, V, SimConfig(horizon=60.0, **base))
    assert abs(e2.mean - e1.mean) <= tail_bound(spec, V, short) + 3 * e2.std_error


def test_summary_format(deterministic):
    spec, V = deterministic
    est = estimate_value(spec, V, SimConfig(x0=0.0, n_paths=2, horizon=1.0))
    fields = est.summary().split(",")
    assert len(fields) == 4 and fields[-1] == "2"


def test_blow_up_raises():
    spec = make_game(1.0, BIG, BIG, drift=[[[0, 400]] * 2] * 2)
    V, _, _ = howard_solve(spec, build_grid(-2, 2, 41))
    with pytest.raises(EstimationError):
        estimate_value(spec, V, SimConfig(x0=1.0, dt=1e-2, horizon=60.0, n_paths=10))


@pytest.mark.parametrize("bad", [dict(dt=0.0), dict(horizon=-1.0), dict(n_paths=0),
                                 dict(base_seed=-1), dict(base_seed=2 ** 64)])
def test_sim_config_rejects(bad):
    with pytest.raises(ValueError):
        SimConfig(x0=0.0, **bad)
