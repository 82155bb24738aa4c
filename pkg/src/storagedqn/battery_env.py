"""Deterministic battery environment.

All of ``b`` (grid-side battery power), load and PV are powers in kW. Energy
is in kWh and the slot length ``slot_hours`` is in hours, so a payment for one
slot is ``price * (b + net_demand) * slot_hours``.

The scalar helpers (``clip_charge``, ``clip_discharge``, ``soc_update``,
``reward``) broadcast over numpy arrays so the baselines share the exact same
feasibility rules as the single-step environment.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .scenarios import Scenario

#: Absolute slack (kWh) tolerated on the SoC update before clamping.
SOC_TOL = 1e-9


class Action(enum.IntEnum):
    CHARGE = 0
    IDLE = 1
    DISCHARGE = 2


@dataclass(frozen=True)
class BatteryConfig:
    """Physical battery parameters.

    Defaults are the experimental settings: 200 kWh, 50 kW both ways,
    efficiencies of 0.9 and 5-minute slots.
    """

    capacity_kwh: float = 200.0
    max_charge_kw: float = 50.0
    max_discharge_kw: float = 50.0
    eta_c: float = 0.9
    eta_d: float = 0.9
    slot_hours: float = 5.0 / 60.0

    def __post_init__(self) -> None:
        if not self.capacity_kwh > 0:
            raise ValueError(f"capacity_kwh must be > 0, got {self.capacity_kwh}")
        if self.max_charge_kw < 0 or self.max_discharge_kw < 0:
            raise ValueError(
                "max_charge_kw and max_discharge_kw must be >= 0, got "
                f"{self.max_charge_kw}, {self.max_discharge_kw}"
            )
        for name in ("eta_c", "eta_d"):
            value = getattr(self, name)
            if not 0 < value <= 1:
                raise ValueError(f"{name} must lie in (0, 1], got {value}")
        if not self.slot_hours > 0:
            raise ValueError(f"slot_hours must be > 0, got {self.slot_hours}")


@dataclass(frozen=True)
class EnvState:
    """Observation ``[net demand, price, state of charge]``."""

    net_demand_kw: float
    price_per_kwh: float
    soc_kwh: float

    def as_array(self) -> np.ndarray:
        return np.array([self.net_demand_kw, self.price_per_kwh, self.soc_kwh])


@dataclass(frozen=True)
class StepOutcome:
    next_state: EnvState
    reward: float
    realized_b_kw: float

    @property
    def b_plus(self) -> float:
        return max(0.0, self.realized_b_kw)

    @property
    def b_minus(self) -> float:
        return -min(0.0, self.realized_b_kw)


def _check_soc(cfg: BatteryConfig, soc_kwh) -> None:
    soc = np.asarray(soc_kwh)
    if np.any(~np.isfinite(soc)) or np.any(soc < 0) or np.any(soc > cfg.capacity_kwh):
        raise ValueError(
            f"state of charge must lie in [0, {cfg.capacity_kwh}] kWh, got {soc_kwh}"
        )


def clip_charge(cfg: BatteryConfig, soc_kwh):
    """Largest feasible charging power (kW) for one slot starting at ``soc_kwh``."""
    _check_soc(cfg, soc_kwh)
    headroom = (cfg.capacity_kwh - soc_kwh) / (cfg.slot_hours * cfg.eta_c)
    return np.maximum(0.0, np.minimum(cfg.max_charge_kw, headroom))


def clip_discharge(cfg: BatteryConfig, soc_kwh):
    """Largest feasible discharging power (kW, positive) for one slot."""
    _check_soc(cfg, soc_kwh)
    available = soc_kwh * cfg.eta_d / cfg.slot_hours
    return np.minimum(cfg.max_discharge_kw, np.maximum(0.0, available))


def soc_update(cfg: BatteryConfig, soc_kwh, b_kw):
    """State of charge after applying grid-side power ``b_kw`` for one slot.

    Raises ``ValueError`` if ``b_kw`` exceeds the rate limits or would leave
    the SoC outside ``[0, E]`` by more than :data:`SOC_TOL`.
    """
    b_plus = np.maximum(0.0, b_kw)
    b_minus = -np.minimum(0.0, b_kw)
    if np.any(b_plus > cfg.max_charge_kw + SOC_TOL) or np.any(
        b_minus > cfg.max_discharge_kw + SOC_TOL
    ):
        raise ValueError(f"battery power {b_kw} kW exceeds the rate limits")
    nxt = (
        soc_kwh
        + cfg.slot_hours * cfg.eta_c * b_plus
        - cfg.slot_hours * b_minus / cfg.eta_d
    )
    if np.any(nxt < -SOC_TOL) or np.any(nxt > cfg.capacity_kwh + SOC_TOL):
        raise ValueError(
            f"battery power {b_kw} kW from soc {soc_kwh} kWh leaves [0, E]: {nxt}"
        )
    return np.clip(nxt, 0.0, cfg.capacity_kwh)


def reward(price_per_kwh, net_demand_kw, b_kw, slot_hours: float):
    """Utility of one slot: the negated payment to the grid."""
    return -price_per_kwh * (b_kw + net_demand_kw) * slot_hours


def realized_power(cfg: BatteryConfig, soc_kwh: float, action: Action) -> float:
    if action == Action.CHARGE:
        return float(clip_charge(cfg, soc_kwh))
    if action == Action.DISCHARGE:
        return -float(clip_discharge(cfg, soc_kwh))
    if action == Action.IDLE:
        _check_soc(cfg, soc_kwh)
        return 0.0
    raise ValueError(f"unknown action {action!r}")


def step(
    cfg: BatteryConfig,
    state: EnvState,
    action: Action,
    next_exogenous: tuple[float, float],
) -> StepOutcome:
    """Apply ``action`` for one slot.

    The reward uses the current slot's price and net demand; ``next_exogenous``
    is ``(net_demand_kw, price_per_kwh)`` of the following slot.
    """
    b = realized_power(cfg, state.soc_kwh, Action(action))
    soc = float(soc_update(cfg, state.soc_kwh, b))
    u = float(reward(state.price_per_kwh, state.net_demand_kw, b, cfg.slot_hours))
    net_next, price_next = next_exogenous
    return StepOutcome(EnvState(float(net_next), float(price_next), soc), u, b)


Policy = Callable[[EnvState], Action]


@dataclass(frozen=True)
class Rollout:
    """A simulated trajectory. ``soc_kwh`` has ``horizon + 1`` entries."""

    cost: float
    actions: tuple[Action, ...]
    b_kw: np.ndarray
    rewards: np.ndarray
    soc_kwh: np.ndarray


def rollout(
    cfg: BatteryConfig, scenario: Scenario, policy: Policy, initial_soc: float
) -> Rollout:
    """Run ``policy`` over the whole scenario.

    The cost is the undiscounted sum of payments, i.e. the negated reward sum.
    """
    if not math.isclose(scenario.slot_hours, cfg.slot_hours, rel_tol=1e-12):
        raise ValueError(
            f"scenario slot length {scenario.slot_hours} h does not match the "
            f"battery config ({cfg.slot_hours} h)"
        )
    _check_soc(cfg, initial_soc)
    net = scenario.net_demand_kw
    price = scenario.price_per_kwh
    horizon = scenario.horizon
    state = EnvState(float(net[0]), float(price[0]), float(initial_soc))
    actions: list[Action] = []
    b = np.empty(horizon)
    rewards = np.empty(horizon)
    soc = np.empty(horizon + 1)
    soc[0] = initial_soc
    for t in range(horizon):
        a = Action(policy(state))
        nxt = min(t + 1, horizon - 1)
        out = step(cfg, state, a, (net[nxt], price[nxt]))
        actions.append(a)
        b[t] = out.realized_b_kw
        rewards[t] = out.reward
        soc[t + 1] = out.next_state.soc_kwh
        state = out.next_state
    return Rollout(float(-rewards.sum()) + 0.0, tuple(actions), b, rewards, soc)


def rollout_cost(
    cfg: BatteryConfig, scenario: Scenario, policy: Policy, initial_soc: float
) -> float:
    return rollout(cfg, scenario, policy, initial_soc).cost


def sequence_policy(actions: Sequence[Action]) -> Policy:
    """Open-loop policy replaying a fixed action sequence."""
    it = iter(actions)
    return lambda _state: next(it)


def idle_policy(_state: EnvState) -> Action:
    return Action.IDLE
