"""Command-line runner: ``generate``, ``train``, ``eval`` and ``baseline``.

Configuration is a flat ``key = value`` text file (``#`` starts a comment).
Values are resolved with the precedence CLI flag > config file > default, and
every command writes a ``config.txt`` snapshot of the resolved values into the
output directory. Outputs are pure functions of the configuration and inputs.

Layout of an output directory::

    config.txt              resolved configuration
    scenarios/              scenario_000.csv ... (generate)
    checkpoint.qnet         trained network (train)
    train_log.csv           one row per environment step (train)
    results.json            per-window records (eval); baseline.json for baseline
    results_summary.csv     per-policy average cost; baseline_summary.csv for baseline
    trajectories/           soc_sXXX_wYYY.csv per window
    prices/                 price_sXXX_wYYY.csv per window
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import battery_env as env
from .agent import Hyperparams, greedy_policy, train
from .baselines import DPConfig, Plan, do_nothing, dp_optimal, level_to_action, mpc_policy
from .battery_env import BatteryConfig
from .pricing import PriceChain, default_chain
from .qnet import load_checkpoint, save_checkpoint
from .scenarios import Scenario, load_scenario_csv, split_train_test, synthetic_scenarios, write_scenario_csv

POLICIES = ("optimal", "mpc", "dqn", "do_nothing")

# key -> (type, default). ``None`` means "derived at run time".
DEFAULTS: dict[str, tuple[type, object]] = {
    "seed": (int, None),
    "out_dir": (str, "run"),
    "data_dir": (str, None),
    "checkpoint": (str, None),
    "n_scenarios": (int, 25),
    "horizon_slots": (int, 5184),
    "n_test": (int, 2),
    "eval_window_slots": (int, 576),
    "tau_slots": (int, 12),
    "workers": (int, 1),
    "capacity_kwh": (float, 200.0),
    "max_charge_kw": (float, 50.0),
    "max_discharge_kw": (float, 50.0),
    "eta_c": (float, 0.9),
    "eta_d": (float, 0.9),
    "slot_minutes": (float, 5.0),
    "price_means": (str, None),
    "price_transition": (str, None),
    "price_noise_std": (str, None),
    "price_hold_slots": (int, 3),
    "gamma": (float, 0.99),
    "epsilon0": (float, 1.0),
    "kappa": (float, 0.95),
    "epsilon_min": (float, 0.01),
    "batch_size": (int, 32),
    "learning_rate": (float, 1e-3),
    "total_steps": (int, 200_000),
    "replay_capacity": (int, 100_000),
    "soc_grid_points": (int, 2001),
    "action_levels": (int, 3),
}


class ConfigError(ValueError):
    pass


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        out[key] = value
    return out


def resolve(file_values: dict[str, str], overrides: dict[str, object]) -> dict[str, object]:
    """Merge defaults, file values and CLI overrides, converting types."""
    resolved: dict[str, object] = {}
    for key, (kind, default) in DEFAULTS.items():
        if overrides.get(key) is not None:
            value = overrides[key]
        elif key in file_values:
            value = file_values[key]
        else:
            value = default
        if value is not None:
            try:
                value = kind(value)
            except ValueError:
                raise ConfigError(f"key {key!r}: cannot parse {value!r} as {kind.__name__}") from None
        resolved[key] = value
    if resolved["seed"] is None:
        raise ConfigError("a seed is required (--seed or 'seed = ...' in the config file)")
    if resolved["seed"] < 0:
        raise ConfigError("seed must be non-negative")
    out_dir = Path(resolved["out_dir"])
    resolved["data_dir"] = resolved["data_dir"] or str(out_dir / "scenarios")
    resolved["checkpoint"] = resolved["checkpoint"] or str(out_dir / "checkpoint.qnet")
    return resolved


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.replace(",", " ").split()]


@dataclass(frozen=True)
class RunConfig:
    battery: BatteryConfig
    chain: PriceChain
    hyper: Hyperparams
    dp: DPConfig
    seed: int
    out_dir: Path
    data_dir: Path
    checkpoint: Path
    n_scenarios: int
    horizon_slots: int
    n_test: int
    eval_window_slots: int
    tau_slots: int
    workers: int
    values: dict

    @classmethod
    def from_values(cls, v: dict) -> "RunConfig":
        battery = BatteryConfig(
            v["capacity_kwh"], v["max_charge_kw"], v["max_discharge_kw"], v["eta_c"], v["eta_d"], v["slot_minutes"] / 60.0
        )
        if v["price_means"] is None:
            base = default_chain()
            chain = PriceChain(base.means, base.transition, base.noise_std, v["price_hold_slots"])
            if v["price_noise_std"] is not None:
                chain = PriceChain(base.means, base.transition, _floats(v["price_noise_std"]), v["price_hold_slots"])
        else:
            if v["price_transition"] is None:
                raise ConfigError("price_means requires price_transition (rows separated by ';')")
            rows = [_floats(r) for r in v["price_transition"].split(";") if r.strip()]
            noise = _floats(v["price_noise_std"]) if v["price_noise_std"] else 0.0
            chain = PriceChain(_floats(v["price_means"]), rows, noise, v["price_hold_slots"])
        hyper = Hyperparams(
            **{f.name: v[f.name] for f in fields(Hyperparams)},
        )
        dp = DPConfig(v["soc_grid_points"], v["action_levels"])
        for key in ("n_scenarios", "horizon_slots", "eval_window_slots", "tau_slots", "workers"):
            if v[key] < 1:
                raise ConfigError(f"{key} must be >= 1, got {v[key]}")
        if v["n_test"] < 0:
            raise ConfigError(f"n_test must be >= 0, got {v['n_test']}")
        return cls(
            battery, chain, hyper, dp, v["seed"], Path(v["out_dir"]), Path(v["data_dir"]),
            Path(v["checkpoint"]), v["n_scenarios"], v["horizon_slots"], v["n_test"],
            v["eval_window_slots"], v["tau_slots"], v["workers"], dict(v),
        )

    def snapshot_text(self) -> str:
        return "".join(f"{k} = {self.values[k]}\n" for k in sorted(self.values) if self.values[k] is not None)


def write_snapshot(cfg: RunConfig) -> None:
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    (cfg.out_dir / "config.txt").write_text(cfg.snapshot_text(), encoding="utf-8")


def scenario_paths(data_dir: Path) -> list[Path]:
    paths = sorted(data_dir.glob("scenario_*.csv"))
    if not paths:
        raise FileNotFoundError(f"no scenario_*.csv files in {data_dir}")
    return paths


def load_split(cfg: RunConfig) -> tuple[list[tuple[int, Scenario]], list[tuple[int, Scenario]]]:
    """Load all scenarios and split them into (train, test) lists of ``(id, scenario)``."""
    indexed = [(i, load_scenario_csv(p, cfg.battery.slot_hours)) for i, p in enumerate(scenario_paths(cfg.data_dir))]
    if cfg.n_test >= len(indexed):
        raise ConfigError(f"n_test={cfg.n_test} leaves no training scenarios out of {len(indexed)}")
    return split_train_test(indexed, cfg.n_test, cfg.seed)


def cmd_generate(cfg: RunConfig) -> list[Path]:
    scenarios = synthetic_scenarios(cfg.n_scenarios, cfg.horizon_slots, cfg.battery.slot_hours, cfg.chain, cfg.seed)
    cfg.data_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, sc in enumerate(scenarios):
        path = cfg.data_dir / f"scenario_{i:03d}.csv"
        write_scenario_csv(path, sc)
        paths.append(path)
    write_snapshot(cfg)
    print(f"wrote {len(paths)} scenarios of {cfg.horizon_slots} slots to {cfg.data_dir}")
    return paths


def cmd_train(cfg: RunConfig):
    train_set, _ = load_split(cfg)
    result = train(cfg.battery, [sc for _, sc in train_set], cfg.hyper, cfg.seed)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    cfg.checkpoint.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(cfg.checkpoint, result.net, result.normalizer)
    result.log.write_csv(cfg.out_dir / "train_log.csv")
    write_snapshot(cfg)
    rewards = list(result.log.episode_rewards().values())
    mean_reward = float(np.mean(rewards)) if rewards else 0.0
    print(f"final_epsilon={result.final_epsilon!r} mean_episode_reward={mean_reward!r} episodes={result.episodes}")
    return result


def _plan_actions(plan: Plan) -> list:
    if plan.action_levels == 3:
        return [level_to_action(k).name for k in plan.levels]
    return [int(k) for k in plan.levels]


def evaluate_window(job) -> dict[str, dict]:
    """Costs and trajectories of every policy on one window; runs in a worker."""
    battery, dp, tau, window, net, normalizer = job
    e0 = battery.capacity_kwh / 2
    out: dict[str, dict] = {}
    opt = dp_optimal(battery, window, dp, e0)
    out["optimal"] = dict(cost=opt.cost, actions=_plan_actions(opt), soc=opt.soc_kwh)
    mpc = mpc_policy(battery, window, dp, min(tau, window.horizon), e0)
    out["mpc"] = dict(cost=mpc.cost, actions=_plan_actions(mpc), soc=mpc.soc_kwh)
    if net is not None:
        roll = env.rollout(battery, window, greedy_policy(net, normalizer), e0)
        out["dqn"] = dict(cost=roll.cost, actions=[a.name for a in roll.actions], soc=roll.soc_kwh)
    out["do_nothing"] = dict(
        cost=do_nothing(window), actions=["IDLE"] * window.horizon, soc=np.full(window.horizon + 1, e0)
    )
    return out


def _run_jobs(jobs, workers: int):
    if workers == 1:
        return [evaluate_window(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(evaluate_window, jobs))


def _csv_float(x: float) -> str:
    return repr(float(x))


def run_evaluation(cfg: RunConfig, with_dqn: bool, prefix: str) -> dict:
    _, test_set = load_split(cfg)
    if not test_set:
        raise ConfigError("n_test = 0: no held-out scenarios to evaluate")
    net = normalizer = None
    if with_dqn:
        if not cfg.checkpoint.is_file():
            raise FileNotFoundError(f"checkpoint not found: {cfg.checkpoint}")
        net, normalizer = load_checkpoint(cfg.checkpoint)
    windows = []
    for sid, sc in test_set:
        pieces = sc.windows(cfg.eval_window_slots)
        if not pieces:
            raise ConfigError(f"scenario {sid} has {sc.horizon} slots, shorter than one window")
        windows.extend((sid, wid, w) for wid, w in enumerate(pieces))
    jobs = [(cfg.battery, cfg.dp, cfg.tau_slots, w, net, normalizer) for _, _, w in windows]
    outcomes = _run_jobs(jobs, cfg.workers)

    policies = [p for p in POLICIES if p != "dqn" or with_dqn]
    records = []
    traj_dir, price_dir = cfg.out_dir / "trajectories", cfg.out_dir / "prices"
    traj_dir.mkdir(parents=True, exist_ok=True)
    price_dir.mkdir(parents=True, exist_ok=True)
    for (sid, wid, window), outcome in zip(windows, outcomes):
        for p in policies:
            o = outcome[p]
            records.append(
                dict(policy=p, scenario_id=sid, window_id=wid, cost=o["cost"], actions=o["actions"],
                     soc_trajectory=[float(x) for x in o["soc"]])
            )
        rows = ["slot," + ",".join(policies)]
        for t in range(window.horizon + 1):
            rows.append(f"{t}," + ",".join(_csv_float(outcome[p]["soc"][t]) for p in policies))
        (traj_dir / f"soc_s{sid:03d}_w{wid:03d}.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
        prices = ["slot,price_per_kwh"] + [f"{t},{_csv_float(x)}" for t, x in enumerate(window.price_per_kwh)]
        (price_dir / f"price_s{sid:03d}_w{wid:03d}.csv").write_text("\n".join(prices) + "\n", encoding="utf-8")

    summary = {p: float(np.mean([r["cost"] for r in records if r["policy"] == p])) for p in policies}
    doc = dict(
        initial_soc_kwh=cfg.battery.capacity_kwh / 2,
        tau_slots=cfg.tau_slots,
        eval_window_slots=cfg.eval_window_slots,
        n_windows=len(windows),
        summary=summary,
        records=records,
    )
    (cfg.out_dir / f"{prefix}.json").write_text(json.dumps(doc) + "\n", encoding="utf-8")
    lines = ["policy,mean_cost,n_windows"] + [f"{p},{_csv_float(summary[p])},{len(windows)}" for p in policies]
    (cfg.out_dir / f"{prefix}_summary.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    write_snapshot(cfg)
    print(f"{'policy':<12}{'mean cost':>14}")
    for p in policies:
        print(f"{p:<12}{summary[p]:>14.4f}")
    return doc


def cmd_eval(cfg: RunConfig) -> dict:
    return run_evaluation(cfg, with_dqn=True, prefix="results")


def cmd_baseline(cfg: RunConfig) -> dict:
    return run_evaluation(cfg, with_dqn=False, prefix="baseline")


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "eval": cmd_eval, "baseline": cmd_baseline}


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # keep failures on one line
        self.exit(2, f"error: usage: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="storagedqn", description="Battery storage control with deep Q-learning.")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", type=Path, help="flat key = value configuration file")
    parser.add_argument("--seed", type=int, help="random seed (required here or in the config)")
    parser.add_argument("--tau", type=int, dest="tau_slots", help="MPC lookahead in slots")
    parser.add_argument("--out", dest="out_dir", help="output directory")
    return parser


def load_run_config(args: argparse.Namespace) -> RunConfig:
    file_values = {}
    if args.config is not None:
        file_values = parse_config_text(args.config.read_text(encoding="utf-8"), str(args.config))
    overrides = dict(seed=args.seed, tau_slots=args.tau_slots, out_dir=args.out_dir)
    return RunConfig.from_values(resolve(file_values, overrides))


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_run_config(args)
        COMMANDS[args.command](cfg)
    except (OSError, ValueError, FloatingPointError) as exc:
        msg = " ".join(str(exc).split())
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
