"""Full-information baselines: grid DP, receding-horizon MPC, do-nothing, brute force.

Battery power at level ``k`` of ``m = (action_levels - 1) // 2`` is
``k/m * clip_charge`` for ``k > 0`` and ``k/m * clip_discharge`` for ``k < 0``,
so every level is feasible. With three levels these are the Charge / Idle /
Discharge actions of the environment.

Costs are payments (negated rewards). The DP backward pass stores the
cost-to-go on a uniform soc grid and interpolates linearly between grid points;
the forward pass simulates the true (off-grid) soc exactly and reports the
exact undiscounted cost of the extracted schedule.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import battery_env as env
from .battery_env import Action, BatteryConfig
from .scenarios import Scenario

#: Cost differences below this are treated as ties.
TIE_TOL = 1e-12
BRUTE_FORCE_MAX_HORIZON = 12


@dataclass(frozen=True)
class DPConfig:
    soc_grid_points: int = 2001
    action_levels: int = 3
    gamma: float = 1.0

    def __post_init__(self) -> None:
        if self.soc_grid_points < 2:
            raise ValueError(f"soc_grid_points must be >= 2, got {self.soc_grid_points}")
        if self.action_levels < 3 or self.action_levels % 2 == 0:
            raise ValueError(
                f"action_levels must be odd and >= 3, got {self.action_levels}"
            )
        if not 0 < self.gamma <= 1:
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma}")


@dataclass(frozen=True)
class ValueTable:
    """``values[t, i]``: optimal cost-to-go from slot ``t`` at grid point ``i``.

    ``values[horizon]`` is the zero terminal slice; ``policy[t, i]`` is the
    signed level index chosen at grid point ``i``.
    """

    grid: np.ndarray
    values: np.ndarray
    policy: np.ndarray


@dataclass(frozen=True)
class Plan:
    """Schedule produced by a baseline. ``levels`` are signed ints in ``[-m, m]``."""

    cost: float
    levels: tuple[int, ...]
    b_kw: np.ndarray
    soc_kwh: np.ndarray
    action_levels: int = 3

    @property
    def actions(self) -> tuple[Action, ...]:
        if self.action_levels != 3:
            raise ValueError("actions are only defined for three action levels")
        return tuple(level_to_action(k) for k in self.levels)


def level_to_action(level: int) -> Action:
    return Action.CHARGE if level > 0 else Action.DISCHARGE if level < 0 else Action.IDLE


def action_to_level(action: Action) -> int:
    return {Action.CHARGE: 1, Action.IDLE: 0, Action.DISCHARGE: -1}[Action(action)]


def _preference(m: int) -> list[int]:
    # tie-break order: idle, charge levels, discharge levels
    return [0] + list(range(1, m + 1)) + list(range(-1, -m - 1, -1))


def level_power(cfg: BatteryConfig, soc, level: int, m: int):
    """Grid-side power (kW) of signed level ``level`` out of ``m``; broadcasts over soc."""
    if level > 0:
        return (level / m) * env.clip_charge(cfg, soc)
    if level < 0:
        return (level / m) * env.clip_discharge(cfg, soc)
    return np.zeros_like(np.asarray(soc, dtype=float))


def _check(cfg: BatteryConfig, scenario: Scenario) -> None:
    if not np.isclose(scenario.slot_hours, cfg.slot_hours, rtol=1e-12, atol=0):
        raise ValueError("scenario slot length does not match the battery config")


def value_table(
    cfg: BatteryConfig, scenario: Scenario, dp: DPConfig = DPConfig()
) -> ValueTable:
    """Backward induction with zero terminal value."""
    _check(cfg, scenario)
    m = (dp.action_levels - 1) // 2
    prefs = _preference(m)
    grid = np.linspace(0.0, cfg.capacity_kwh, dp.soc_grid_points)
    horizon = scenario.horizon
    net = scenario.net_demand_kw
    price = scenario.price_per_kwh
    # dynamics do not depend on t: precompute successor soc and power per level
    powers = [level_power(cfg, grid, k, m) for k in prefs]
    successors = [env.soc_update(cfg, grid, b) for b in powers]
    values = np.zeros((horizon + 1, grid.size))
    policy = np.zeros((horizon, grid.size), dtype=np.int64)
    for t in range(horizon - 1, -1, -1):
        v_next = values[t + 1]
        q = np.stack(
            [
                price[t] * (b + net[t]) * cfg.slot_hours
                + dp.gamma * np.interp(e2, grid, v_next)
                for b, e2 in zip(powers, successors)
            ]
        )
        best = _first_min(q)
        values[t] = q[best, np.arange(grid.size)]
        policy[t] = np.asarray(prefs)[best]
    return ValueTable(grid, values, policy)


def _first_min(q: np.ndarray) -> np.ndarray:
    """Row index of the first entry within TIE_TOL of the column minimum."""
    lo = q.min(axis=0)
    return np.argmax(q <= lo + TIE_TOL, axis=0)


def _extract(
    cfg: BatteryConfig,
    scenario: Scenario,
    table: ValueTable,
    dp: DPConfig,
    initial_soc: float,
    t0: int = 0,
    n_steps: int | None = None,
) -> tuple[list[int], list[float], list[float]]:
    m = (dp.action_levels - 1) // 2
    prefs = _preference(m)
    net = scenario.net_demand_kw
    price = scenario.price_per_kwh
    soc = float(initial_soc)
    levels, powers, socs = [], [], [soc]
    stop = scenario.horizon if n_steps is None else t0 + n_steps
    for t in range(t0, stop):
        v_next = table.values[t + 1 - t0]
        best_q, best_k, best_b, best_e = np.inf, 0, 0.0, soc
        for k in prefs:
            b = float(level_power(cfg, soc, k, m))
            e2 = float(env.soc_update(cfg, soc, b))
            q = price[t] * (b + net[t]) * cfg.slot_hours + dp.gamma * float(
                np.interp(e2, table.grid, v_next)
            )
            if q < best_q - TIE_TOL:
                best_q, best_k, best_b, best_e = q, k, b, e2
        levels.append(best_k)
        powers.append(best_b)
        socs.append(best_e)
        soc = best_e
    return levels, powers, socs


def schedule_cost(cfg: BatteryConfig, scenario: Scenario, b_kw) -> float:
    """Undiscounted payment of a realized power schedule."""
    rewards = env.reward(
        scenario.price_per_kwh, scenario.net_demand_kw, np.asarray(b_kw, dtype=float), cfg.slot_hours
    )
    return float(-np.sum(rewards)) + 0.0


def dp_optimal(
    cfg: BatteryConfig,
    scenario: Scenario,
    dp: DPConfig = DPConfig(),
    initial_soc: float | None = None,
) -> Plan:
    """Perfect-foresight schedule by backward induction over the soc grid."""
    if initial_soc is None:
        initial_soc = cfg.capacity_kwh / 2
    env._check_soc(cfg, initial_soc)
    table = value_table(cfg, scenario, dp)
    levels, powers, socs = _extract(cfg, scenario, table, dp, initial_soc)
    b = np.array(powers)
    return Plan(schedule_cost(cfg, scenario, b), tuple(levels), b, np.array(socs), dp.action_levels)


def mpc_policy(
    cfg: BatteryConfig,
    scenario: Scenario,
    dp: DPConfig = DPConfig(),
    tau_slots: int = 12,
    initial_soc: float | None = None,
) -> Plan:
    """Receding horizon: solve ``[t, min(t + tau, H))``, apply the first decision, repeat."""
    horizon = scenario.horizon
    if not 1 <= tau_slots <= horizon:
        raise ValueError(f"tau_slots must lie in [1, {horizon}], got {tau_slots}")
    if initial_soc is None:
        initial_soc = cfg.capacity_kwh / 2
    env._check_soc(cfg, initial_soc)
    soc = float(initial_soc)
    levels, powers, socs = [], [], [soc]
    for t in range(horizon):
        window = scenario.window(t, min(tau_slots, horizon - t))
        table = value_table(cfg, window, dp)
        k, b, e2 = _extract(cfg, window, table, dp, soc, n_steps=1)
        levels.append(k[0])
        powers.append(b[0])
        socs.append(e2[1])
        soc = e2[1]
    b_arr = np.array(powers)
    return Plan(
        schedule_cost(cfg, scenario, b_arr), tuple(levels), b_arr, np.array(socs), dp.action_levels
    )


def do_nothing(scenario: Scenario) -> float:
    """Cost of never using the battery: ``sum_t p_t * net_t * delta``."""
    return float(
        np.sum(scenario.price_per_kwh * scenario.net_demand_kw) * scenario.slot_hours
    )


def brute_force_enumerate(
    cfg: BatteryConfig, scenario: Scenario, initial_soc: float
) -> tuple[float, tuple[Action, ...]]:
    """Exhaustive search over all ``3**H`` Charge/Idle/Discharge sequences.

    Expands every sequence breadth-first through the environment's clipping and
    SoC update, so it shares no code with the DP beyond the battery physics.
    """
    horizon = scenario.horizon
    if horizon > BRUTE_FORCE_MAX_HORIZON:
        raise ValueError(
            f"horizon {horizon} too large for enumeration (max {BRUTE_FORCE_MAX_HORIZON})"
        )
    _check(cfg, scenario)
    env._check_soc(cfg, initial_soc)
    order = (Action.IDLE, Action.CHARGE, Action.DISCHARGE)
    net = scenario.net_demand_kw
    price = scenario.price_per_kwh
    soc = np.array([float(initial_soc)])
    cost = np.array([0.0])
    for t in range(horizon):
        new_soc, new_cost = [], []
        for a in order:
            if a == Action.CHARGE:
                b = env.clip_charge(cfg, soc)
            elif a == Action.DISCHARGE:
                b = -env.clip_discharge(cfg, soc)
            else:
                b = np.zeros_like(soc)
            new_soc.append(env.soc_update(cfg, soc, b))
            new_cost.append(cost - env.reward(price[t], net[t], b, cfg.slot_hours))
        # flat index = parent * 3 + digit: the first action is most significant
        soc = np.stack(new_soc, axis=1).ravel()
        cost = np.stack(new_cost, axis=1).ravel()
    best = int(np.argmin(cost))
    best_cost = float(cost[best])
    digits = []
    for _ in range(horizon):
        best, d = divmod(best, 3)
        digits.append(order[d])
    return best_cost, tuple(reversed(digits))


def enumerate_costs(cfg: BatteryConfig, scenario: Scenario, initial_soc: float):
    """Cost of every action sequence, by direct rollout (slow reference for tests)."""
    out = {}
    for seq in itertools.product(list(Action), repeat=scenario.horizon):
        out[seq] = env.rollout_cost(cfg, scenario, env.sequence_policy(seq), initial_soc)
    return out
