"""Discrete-Markov electricity price generator.

A hidden chain over ``n`` price levels holds its state for ``hold_slots``
slots, then transitions according to a row-stochastic matrix. Each slot emits
``mean[state] + N(0, noise_std[state]**2)`` floored at zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class PriceChain:
    """Markov price model.

    ``noise_std`` may be a scalar (shared by all states) or one value per
    state; it is stored per state.
    """

    means: np.ndarray
    transition: np.ndarray
    noise_std: np.ndarray | float = 0.0
    hold_slots: int = 3

    def __post_init__(self) -> None:
        means = np.array(self.means, dtype=float)
        trans = np.array(self.transition, dtype=float)
        n = means.size
        if means.ndim != 1 or n < 1:
            raise ValueError("means must be a non-empty vector")
        if trans.shape != (n, n):
            raise ValueError(f"transition must be {n}x{n}, got shape {trans.shape}")
        if np.any(~np.isfinite(trans)) or np.any(trans < 0):
            raise ValueError("transition entries must be finite and >= 0")
        row_err = np.abs(trans.sum(axis=1) - 1.0)
        if np.any(row_err > 1e-12):
            raise ValueError(
                f"transition rows must sum to 1 (worst row off by {row_err.max():.3g})"
            )
        if np.any(~np.isfinite(means)) or np.any(means < 0):
            raise ValueError("state means must be finite and >= 0")
        noise = np.broadcast_to(np.asarray(self.noise_std, dtype=float), (n,)).copy()
        if np.any(~np.isfinite(noise)) or np.any(noise < 0):
            raise ValueError("noise_std must be finite and >= 0")
        if int(self.hold_slots) != self.hold_slots or self.hold_slots < 1:
            raise ValueError(f"hold_slots must be an integer >= 1, got {self.hold_slots}")
        for arr in (means, trans, noise):
            arr.setflags(write=False)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "transition", trans)
        object.__setattr__(self, "noise_std", noise)
        object.__setattr__(self, "hold_slots", int(self.hold_slots))

    @property
    def n_states(self) -> int:
        return self.means.size


def default_chain() -> PriceChain:
    """Nine levels evenly spaced over 0.02-0.20 $/kWh, 15-minute hold at 5-minute slots.

    Transition per hold period: stay 0.6, move one level 0.15 each way, two
    levels 0.05 each way. Mass that would leave the range stays put, so the
    matrix is symmetric and the stationary distribution is uniform. Emission
    noise is 5% of each level's mean.
    """
    n = 9
    means = np.linspace(0.02, 0.20, n)
    band = {0: 0.6, 1: 0.15, 2: 0.05}
    trans = np.zeros((n, n))
    for i in range(n):
        for off, p in band.items():
            for j in {i - off, i + off}:
                if 0 <= j < n:
                    trans[i, j] += p
        trans[i, i] += 1.0 - trans[i].sum()
    return PriceChain(means, trans, noise_std=0.05 * means, hold_slots=3)


def stationary_distribution(chain: PriceChain) -> np.ndarray:
    """Solve ``pi P = pi`` with ``sum(pi) = 1`` by least squares."""
    n = chain.n_states
    a = np.vstack([chain.transition.T - np.eye(n), np.ones(n)])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(a, b, rcond=None)
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def sample_path(
    chain: PriceChain,
    horizon_slots: int,
    seed: int,
    initial_state: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Hidden states and emitted prices over ``horizon_slots`` slots.

    The initial state is drawn from the stationary distribution unless given.
    The state is redrawn only at slot indices divisible by ``hold_slots``.
    """
    if horizon_slots < 1:
        raise ValueError(f"horizon_slots must be >= 1, got {horizon_slots}")
    rng = np.random.default_rng(seed)
    n_blocks = -(-horizon_slots // chain.hold_slots)
    cum = np.cumsum(chain.transition, axis=1)
    u = rng.random(n_blocks)
    if initial_state is None:
        state = int(np.searchsorted(np.cumsum(stationary_distribution(chain)), u[0], side="right"))
    else:
        state = int(initial_state)
    block_states = np.empty(n_blocks, dtype=np.int64)
    block_states[0] = min(state, chain.n_states - 1)
    for k in range(1, n_blocks):
        prev = block_states[k - 1]
        block_states[k] = min(
            int(np.searchsorted(cum[prev], u[k], side="right")), chain.n_states - 1
        )
    states = np.repeat(block_states, chain.hold_slots)[:horizon_slots]
    noise = rng.standard_normal(horizon_slots) * chain.noise_std[states]
    prices = np.maximum(chain.means[states] + noise, 0.0)
    return states, prices


def sample_sequence(chain: PriceChain, horizon_slots: int, seed: int) -> np.ndarray:
    return sample_path(chain, horizon_slots, seed)[1]
