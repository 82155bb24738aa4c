"""Deep Q-learning with experience replay for the battery environment.

Targets are bootstrapped from the network being trained (there is no
separate target network) and every transition bootstraps: the storage
problem is a continuing task.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import battery_env as env
from .battery_env import Action, BatteryConfig, EnvState
from .qnet import Normalizer, QNetwork, init_random
from .scenarios import Scenario

logger = logging.getLogger(__name__)

N_ACTIONS = len(Action)


@dataclass(frozen=True)
class Transition:
    state: EnvState
    action: Action
    reward: float
    next_state: EnvState


@dataclass(frozen=True)
class Hyperparams:
    gamma: float = 0.99
    epsilon0: float = 1.0
    kappa: float = 0.95
    batch_size: int = 32
    learning_rate: float = 1e-3
    total_steps: int = 200_000
    replay_capacity: int = 100_000
    epsilon_min: float = 0.01

    def __post_init__(self) -> None:
        if not 0 < self.gamma < 1:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not 0 < self.kappa < 1:
            raise ValueError(f"kappa must lie in (0, 1), got {self.kappa}")
        # epsilon0 = 1 (pure exploration at the start) is allowed
        if not 0 < self.epsilon0 <= 1:
            raise ValueError(f"epsilon0 must lie in (0, 1], got {self.epsilon0}")
        if not 0 <= self.epsilon_min <= self.epsilon0:
            raise ValueError(
                f"epsilon_min must lie in [0, epsilon0], got {self.epsilon_min}"
            )
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.total_steps < 0:
            raise ValueError(f"total_steps must be >= 0, got {self.total_steps}")
        if self.replay_capacity < 1:
            raise ValueError(f"replay_capacity must be >= 1, got {self.replay_capacity}")


class ReplayMemory:
    """Fixed-capacity ring buffer of transitions stored as flat arrays."""

    def __init__(self, capacity: int, state_dim: int = 3):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = int(capacity)
        self.states = np.zeros((self.capacity, state_dim))
        self.actions = np.zeros(self.capacity, dtype=np.int64)
        self.rewards = np.zeros(self.capacity)
        self.next_states = np.zeros((self.capacity, state_dim))
        self._cursor = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def push(self, state, action: int, reward: float, next_state) -> None:
        i = self._cursor
        self.states[i] = state
        self.actions[i] = int(action)
        self.rewards[i] = reward
        self.next_states[i] = next_state
        self._cursor = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def add(self, transition: Transition) -> None:
        self.push(
            transition.state.as_array(),
            transition.action,
            transition.reward,
            transition.next_state.as_array(),
        )

    def _slot(self, k: int) -> int:
        # k-th oldest stored item
        start = self._cursor if self._size == self.capacity else 0
        return (start + k) % self.capacity

    def __getitem__(self, k: int) -> Transition:
        if not -self._size <= k < self._size:
            raise IndexError(k)
        i = self._slot(k % self._size)
        s, s2 = self.states[i], self.next_states[i]
        return Transition(
            EnvState(*map(float, s)),
            Action(int(self.actions[i])),
            float(self.rewards[i]),
            EnvState(*map(float, s2)),
        )

    def sample_indices(self, batch_size: int, rng: np.random.Generator) -> np.ndarray:
        """Uniform sample without replacement; clamps to the stored size."""
        if self._size == 0:
            raise ValueError("cannot sample from an empty replay memory")
        k = min(batch_size, self._size)
        return rng.choice(self._size, size=k, replace=False)


def select_action(
    net: QNetwork, state_normalized, epsilon: float, rng: np.random.Generator
) -> Action:
    """Epsilon-greedy choice; greedy ties go to the lowest action index."""
    if not 0 <= epsilon <= 1:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    if epsilon > 0 and rng.random() < epsilon:
        return Action(int(rng.integers(N_ACTIONS)))
    return Action(int(np.argmax(net.forward(state_normalized))))


def _normalized(normalizer: Normalizer | None, x) -> np.ndarray:
    return np.asarray(x, dtype=float) if normalizer is None else normalizer(x)


def td_target(
    net: QNetwork,
    transition: Transition,
    gamma: float,
    normalizer: Normalizer | None = None,
) -> float:
    """``r + gamma * max_a Q(s', a)`` evaluated with the current network."""
    if not 0 < gamma < 1:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    q_next = net.forward(_normalized(normalizer, transition.next_state.as_array()))
    if not np.all(np.isfinite(q_next)):
        raise FloatingPointError(f"non-finite Q-values {q_next}")
    return float(transition.reward + gamma * q_next.max())


def train_step(
    net: QNetwork,
    memory: ReplayMemory,
    hyper: Hyperparams,
    rng: np.random.Generator,
    normalizer: Normalizer | None = None,
) -> float:
    """One minibatch SGD update in place; returns the mean ``0.5 * residual**2``."""
    idx = memory.sample_indices(hyper.batch_size, rng)
    states = _normalized(normalizer, memory.states[idx])
    next_states = _normalized(normalizer, memory.next_states[idx])
    q_next = net.forward(next_states)
    if not np.all(np.isfinite(q_next)):
        raise FloatingPointError("non-finite Q-values while building targets")
    targets = memory.rewards[idx] + hyper.gamma * q_next.max(axis=1)
    grads, loss = net.batch_gradient(states, memory.actions[idx], targets)
    net.sgd_step(grads, hyper.learning_rate)
    return loss


def epsilon_after(hyper: Hyperparams, decays: int) -> float:
    return max(hyper.epsilon_min, hyper.epsilon0 * hyper.kappa**decays)


@dataclass
class TrainingLog:
    step: list[int] = field(default_factory=list)
    episode: list[int] = field(default_factory=list)
    epsilon: list[float] = field(default_factory=list)
    reward: list[float] = field(default_factory=list)
    loss: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.step)

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("step,episode,epsilon,reward,loss\n")
            for row in zip(self.step, self.episode, self.epsilon, self.reward, self.loss):
                fh.write("%d,%d,%r,%r,%r\n" % row)

    def episode_rewards(self) -> dict[int, float]:
        out: dict[int, float] = {}
        for ep, r in zip(self.episode, self.reward):
            out[ep] = out.get(ep, 0.0) + r
        return out


@dataclass
class TrainResult:
    net: QNetwork
    normalizer: Normalizer
    log: TrainingLog
    final_epsilon: float
    episodes: int


def _seeds(seed: int) -> list[np.random.SeedSequence]:
    # child 0 initializes the network, child 1 drives exploration and sampling
    return np.random.SeedSequence(seed).spawn(2)


def initial_network(seed: int, layer_sizes: Sequence[int] = (3, 128, 32, 3)) -> QNetwork:
    """The network :func:`train` starts from for ``seed``."""
    return init_random(int(_seeds(seed)[0].generate_state(1)[0]), layer_sizes)


def train(
    cfg: BatteryConfig,
    scenarios: Sequence[Scenario],
    hyper: Hyperparams,
    seed: int,
    normalizer: Normalizer | None = None,
    layer_sizes: Sequence[int] = (3, 128, 32, 3),
) -> TrainResult:
    """Run ``hyper.total_steps`` environment transitions with online learning.

    Episodes are full passes over one scenario, visited in a seeded shuffled
    order that is redrawn after every cycle. Each episode starts from a soc
    drawn uniformly in ``[0, E]`` and epsilon decays by ``kappa`` after it.
    A scenario of horizon ``H`` yields ``H - 1`` transitions.
    """
    if not scenarios:
        raise ValueError("need at least one training scenario")
    if all(s.horizon < 2 for s in scenarios):
        raise ValueError("training scenarios need at least two slots")
    for s in scenarios:
        if not np.isclose(s.slot_hours, cfg.slot_hours, rtol=1e-12, atol=0):
            raise ValueError("scenario slot length does not match the battery config")
    net = initial_network(seed, layer_sizes)
    rng = np.random.default_rng(_seeds(seed)[1])
    if normalizer is None:
        normalizer = Normalizer.from_scenarios(scenarios, cfg.capacity_kwh)
    memory = ReplayMemory(hyper.replay_capacity)
    log = TrainingLog()

    eps = hyper.epsilon0
    step_count = 0
    episode = 0
    order: list[int] = []
    while step_count < hyper.total_steps:
        if not order:
            order = rng.permutation(len(scenarios)).tolist()
        scen = scenarios[order.pop(0)]
        if scen.horizon < 2:
            continue
        net_d = scen.net_demand_kw
        price = scen.price_per_kwh
        soc = float(rng.uniform(0.0, cfg.capacity_kwh))
        state = EnvState(float(net_d[0]), float(price[0]), soc)
        s_vec = state.as_array()
        for t in range(scen.horizon - 1):
            if step_count >= hyper.total_steps:
                break
            a = select_action(net, normalizer(s_vec), eps, rng)
            out = env.step(cfg, state, a, (net_d[t + 1], price[t + 1]))
            s2_vec = out.next_state.as_array()
            memory.push(s_vec, a, out.reward, s2_vec)
            loss = train_step(net, memory, hyper, rng, normalizer)
            log.step.append(step_count)
            log.episode.append(episode)
            log.epsilon.append(eps)
            log.reward.append(out.reward)
            log.loss.append(loss)
            step_count += 1
            state, s_vec = out.next_state, s2_vec
        episode += 1
        eps = max(hyper.epsilon_min, eps * hyper.kappa)
        logger.debug("episode %d done at step %d, epsilon=%.4f", episode, step_count, eps)
    return TrainResult(net, normalizer, log, eps, episode)


def greedy_policy(net: QNetwork, normalizer: Normalizer | None = None):
    """Deterministic ``argmax_a Q(s, a)`` policy over raw :class:`EnvState` inputs."""

    def policy(state: EnvState) -> Action:
        q = net.forward(_normalized(normalizer, state.as_array()))
        return Action(int(np.argmax(q)))

    return policy
