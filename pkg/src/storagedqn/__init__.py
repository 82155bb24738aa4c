"""Battery storage control: environment, deep Q-learning agent, price model and baselines."""

from .agent import Hyperparams, ReplayMemory, greedy_policy, initial_network, train
from .baselines import DPConfig, brute_force_enumerate, do_nothing, dp_optimal, mpc_policy
from .battery_env import Action, BatteryConfig, EnvState, rollout, rollout_cost, step
from .pricing import PriceChain, default_chain, sample_sequence
from .qnet import Normalizer, QNetwork, init_random, load_checkpoint, save_checkpoint
from .scenarios import Scenario, load_scenario_csv, synthetic_scenarios, write_scenario_csv

__all__ = [
    "Action",
    "BatteryConfig",
    "DPConfig",
    "EnvState",
    "Hyperparams",
    "Normalizer",
    "PriceChain",
    "QNetwork",
    "ReplayMemory",
    "Scenario",
    "brute_force_enumerate",
    "default_chain",
    "do_nothing",
    "dp_optimal",
    "greedy_policy",
    "init_random",
    "initial_network",
    "load_checkpoint",
    "load_scenario_csv",
    "mpc_policy",
    "rollout",
    "rollout_cost",
    "sample_sequence",
    "save_checkpoint",
    "step",
    "synthetic_scenarios",
    "train",
    "write_scenario_csv",
]
