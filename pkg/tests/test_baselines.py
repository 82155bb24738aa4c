import itertools

import numpy as np
import pytest

from storagedqn import battery_env as env
from storagedqn.battery_env import Action, BatteryConfig
from storagedqn.baselines import (
    DPConfig,
    brute_force_enumerate,
    do_nothing,
    dp_optimal,
    enumerate_costs,
    mpc_policy,
    value_table,
)
from storagedqn.scenarios import Scenario

TOY = BatteryConfig(capacity_kwh=10, max_charge_kw=5, max_discharge_kw=5, eta_c=1, eta_d=1, slot_hours=1)
DEFAULT = BatteryConfig()


def prices_only(prices, slot=1.0):
    n = len(prices)
    return Scenario(np.zeros(n), np.zeros(n), prices, slot)


def random_instance(rng, max_horizon=8):
    cfg = BatteryConfig(
        capacity_kwh=rng.uniform(5, 300),
        max_charge_kw=rng.uniform(0, 100),
        max_discharge_kw=rng.uniform(0, 100),
        eta_c=rng.uniform(0.5, 1),
        eta_d=rng.uniform(0.5, 1),
        slot_hours=float(rng.choice([5 / 60, 0.25, 1.0])),
    )
    h = int(rng.integers(1, max_horizon + 1))
    sc = Scenario(rng.uniform(0, 50, h), rng.uniform(0, 50, h), rng.uniform(0, 1, h), cfg.slot_hours)
    return cfg, sc, float(rng.uniform(0, cfg.capacity_kwh))


def lattice_instance(rng, max_horizon=10):
    # eta = 1 and integer rates on an integer soc grid: interpolation is exact
    cfg = BatteryConfig(10, int(rng.integers(1, 4)), int(rng.integers(1, 4)), 1, 1, 1)
    h = int(rng.integers(2, max_horizon + 1))
    sc = Scenario(rng.uniform(0, 5, h), rng.uniform(0, 5, h), rng.uniform(0, 1, h), 1.0)
    return cfg, sc, float(rng.integers(0, 11))


def test_two_slot_arbitrage():
    sc = prices_only([0.1, 0.5])
    plan = dp_optimal(TOY, sc, DPConfig(), initial_soc=0.0)
    assert plan.cost == pytest.approx(-2.0, abs=1e-12)
    assert plan.actions == (Action.CHARGE, Action.DISCHARGE)
    np.testing.assert_allclose(plan.soc_kwh, [0, 5, 0])
    assert brute_force_enumerate(TOY, sc, 0.0) == (pytest.approx(-2.0), (Action.CHARGE, Action.DISCHARGE))


def test_two_slot_enumeration_table():
    costs = enumerate_costs(TOY, prices_only([0.1, 0.5]), 0.0)
    assert len(costs) == 9
    assert min(costs.values()) == pytest.approx(-2.0)
    assert costs[(Action.CHARGE, Action.CHARGE)] == pytest.approx(3.0)


def test_zero_prices_prefer_idle():
    sc = Scenario(np.full(6, 4.0), np.zeros(6), np.zeros(6), 1.0)
    plan = dp_optimal(TOY, sc, initial_soc=5.0)
    assert plan.cost == 0.0
    assert plan.actions == (Action.IDLE,) * 6
    assert mpc_policy(TOY, sc, tau_slots=1, initial_soc=5.0).actions == (Action.IDLE,) * 6


def test_mpc_one_slot_lookahead_misses_arbitrage():
    plan = mpc_policy(TOY, prices_only([0.1, 0.5]), DPConfig(), tau_slots=1, initial_soc=0.0)
    assert plan.cost == 0.0
    assert plan.actions == (Action.IDLE, Action.IDLE)


def test_mpc_full_horizon_equals_dp():
    rng = np.random.default_rng(4)
    for _ in range(10):
        cfg, sc, e0 = random_instance(rng, 12)
        dp = dp_optimal(cfg, sc, DPConfig(), e0)
        mpc = mpc_policy(cfg, sc, DPConfig(), sc.horizon, e0)
        assert mpc.levels == dp.levels
        assert abs(mpc.cost - dp.cost) <= 1e-9


def test_dp_matches_brute_force():
    rng = np.random.default_rng(5)
    for _ in range(40):
        cfg, sc, e0 = random_instance(rng)
        best, seq = brute_force_enumerate(cfg, sc, e0)
        assert dp_optimal(cfg, sc, DPConfig(), e0).cost == pytest.approx(best, abs=1e-6)
        assert env.rollout_cost(cfg, sc, env.sequence_policy(seq), e0) == pytest.approx(best, abs=1e-9)


def test_brute_force_matches_direct_enumeration():
    rng = np.random.default_rng(6)
    for _ in range(5):
        cfg, sc, e0 = random_instance(rng, 5)
        direct = enumerate_costs(cfg, sc, e0)
        best, seq = brute_force_enumerate(cfg, sc, e0)
        assert best == pytest.approx(min(direct.values()), abs=1e-9)
        assert direct[seq] == pytest.approx(best, abs=1e-9)


def test_brute_force_single_slot():
    sc = prices_only([0.3])
    best, seq = brute_force_enumerate(TOY, sc, 0.0)
    assert best == 0.0 and seq == (Action.IDLE,)


def test_brute_force_horizon_limit():
    with pytest.raises(ValueError):
        brute_force_enumerate(TOY, prices_only(np.ones(13)), 0.0)


def test_increasing_prices_discharge_only_at_the_end():
    rng = np.random.default_rng(7)
    for h in range(2, 9):
        prices = np.sort(rng.uniform(0.05, 1.0, h))
        sc = prices_only(prices)
        plan = dp_optimal(TOY, sc, DPConfig(), 0.0)
        best, _ = brute_force_enumerate(TOY, sc, 0.0)
        assert plan.cost == pytest.approx(best, abs=1e-9)
        acts = plan.actions
        if Action.DISCHARGE in acts:
            first = acts.index(Action.DISCHARGE)
            assert all(a != Action.CHARGE for a in acts[first:])


def test_lower_bound_against_mpc_and_random_policies():
    rng = np.random.default_rng(8)
    for _ in range(20):
        cfg, sc, e0 = lattice_instance(rng)
        dp = dp_optimal(cfg, sc, DPConfig(11), e0)
        for tau in (1, 2, 3):
            if tau <= sc.horizon:
                assert dp.cost <= mpc_policy(cfg, sc, DPConfig(11), tau, e0).cost + 1e-9
        for _ in range(5):
            seq = [Action(int(a)) for a in rng.integers(0, 3, sc.horizon)]
            assert dp.cost <= env.rollout_cost(cfg, sc, env.sequence_policy(seq), e0) + 1e-9


def test_mpc_short_lookahead_never_beats_full_lookahead_on_lattice():
    rng = np.random.default_rng(9)
    for _ in range(30):
        cfg, sc, e0 = lattice_instance(rng)
        full = mpc_policy(cfg, sc, DPConfig(11), sc.horizon, e0).cost
        assert mpc_policy(cfg, sc, DPConfig(11), 1, e0).cost >= full - 1e-9


def test_mpc_is_not_monotone_in_lookahead():
    # a longer window can do worse: receding-horizon control has no monotonicity guarantee
    cfg = BatteryConfig(10, 2, 2, 1, 1, 1)
    sc = prices_only([0.64, 0.83, 0.64, 0.67, 0.85])
    c3 = mpc_policy(cfg, sc, DPConfig(11), 3, 5.0).cost
    c4 = mpc_policy(cfg, sc, DPConfig(11), 4, 5.0).cost
    assert c3 == pytest.approx(-3.94) and c4 == pytest.approx(-3.85)
    assert dp_optimal(cfg, sc, DPConfig(11), 5.0).cost == pytest.approx(-3.94)


def test_more_action_levels_never_hurt_on_lattice():
    rng = np.random.default_rng(10)
    for _ in range(20):
        cfg = BatteryConfig(12, 4, 4, 1, 1, 1)
        h = int(rng.integers(2, 9))
        sc = Scenario(np.zeros(h), np.zeros(h), rng.uniform(0, 1, h), 1.0)
        e0 = float(rng.choice([0, 4, 8, 12]))
        three = dp_optimal(cfg, sc, DPConfig(13, 3), e0)
        five = dp_optimal(cfg, sc, DPConfig(13, 5), e0)
        assert five.cost <= three.cost + 1e-9


def test_five_levels_use_half_rates():
    cfg = BatteryConfig(4, 4, 4, 1, 1, 1)
    # a half-rate charge is the only way to end exactly full before the single high price
    plan = dp_optimal(cfg, prices_only([0.1, 0.1, 1.0]), DPConfig(9, 5), 0.0)
    assert plan.cost == pytest.approx(0.1 * 4 - 1.0 * 4)
    with pytest.raises(ValueError):
        plan.actions
    assert set(plan.levels) <= {-2, -1, 0, 1, 2}


def test_grid_refinement_converges():
    rng = np.random.default_rng(11)
    sc = Scenario(rng.uniform(0, 50, 96), rng.uniform(0, 30, 96), rng.uniform(0.02, 0.2, 96), DEFAULT.slot_hours)
    costs = [dp_optimal(DEFAULT, sc, DPConfig(n), 100.0).cost for n in (11, 101, 1001, 2001, 4001)]
    assert abs(costs[-1] - costs[-2]) <= abs(costs[0] - costs[-1])
    assert costs[-1] <= costs[0] + 1e-9


def test_value_table_terminal_slice_and_start_value():
    sc = prices_only([0.1, 0.5])
    table = value_table(TOY, sc, DPConfig(11))
    assert np.all(table.values[-1] == 0)
    assert table.values[0][0] == pytest.approx(-2.0)  # grid point soc = 0
    assert table.policy.shape == (2, 11)


def test_trajectories_stay_feasible():
    rng = np.random.default_rng(12)
    for _ in range(10):
        cfg, sc, e0 = random_instance(rng, 24)
        for plan in (dp_optimal(cfg, sc, DPConfig(201), e0), mpc_policy(cfg, sc, DPConfig(201), min(3, sc.horizon), e0)):
            assert np.all(plan.soc_kwh >= 0) and np.all(plan.soc_kwh <= cfg.capacity_kwh)
            assert plan.soc_kwh.size == sc.horizon + 1


def test_do_nothing():
    assert do_nothing(Scenario(np.ones(4), np.ones(4), np.full(4, 0.3))) == 0.0
    sc = Scenario(np.full(12, 12.0), np.zeros(12), np.full(12, 0.1), 5 / 60)
    assert do_nothing(sc) == pytest.approx(1.2, rel=1e-12)
    assert do_nothing(sc) == pytest.approx(env.rollout_cost(DEFAULT, sc, env.idle_policy, 50.0), rel=1e-12)


@pytest.mark.parametrize("kwargs", [dict(soc_grid_points=1), dict(action_levels=4), dict(action_levels=1), dict(gamma=0)])
def test_dp_config_validation(kwargs):
    with pytest.raises(ValueError):
        DPConfig(**kwargs)


def test_mpc_rejects_bad_tau():
    with pytest.raises(ValueError):
        mpc_policy(TOY, prices_only([0.1, 0.2]), tau_slots=3)
    with pytest.raises(ValueError):
        mpc_policy(TOY, prices_only([0.1, 0.2]), tau_slots=0)


def test_discounted_dp_objective():
    # with gamma < 1 the late sale is worth less, but the reported cost stays undiscounted
    sc = prices_only([0.1, 0.5])
    plan = dp_optimal(TOY, sc, DPConfig(11, 3, 0.1), 0.0)
    assert plan.actions == (Action.IDLE, Action.IDLE)
    plan = dp_optimal(TOY, sc, DPConfig(11, 3, 0.5), 0.0)
    assert plan.actions == (Action.CHARGE, Action.DISCHARGE)
    assert plan.cost == pytest.approx(-2.0)


def test_enumeration_helper_covers_all_sequences():
    costs = enumerate_costs(TOY, prices_only([0.2, 0.1, 0.4]), 5.0)
    assert set(costs) == set(itertools.product(list(Action), repeat=3))
