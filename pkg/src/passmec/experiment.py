"""Config files, training/evaluation runs, sweeps and CSV metrics.

The JSON config has three sections, ``env``, ``ppo`` and ``experiment``; see
:func:`default_config`. Powers are given in dBm there and converted to watts
once, in :func:`env_config_from_dict`.
"""
from __future__ import annotations

import copy
import csv
import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .channel import SystemGeometry, dbm_to_watts
from .codec import ActionLayout, DiscretizationSchedule
from .env import VARIANTS, EnvConfig, PassMecEnv
from .ppo import CheckpointError, PPOAgent, PPOHyper, load_checkpoint, save_checkpoint, train
from .queueing import ComputeProfile

log = logging.getLogger(__name__)

SWEEP_AXES = ("none", "ues", "power")
METRIC_COLUMNS = ("variant", "seed", "episode", "sweep_value", "mean_reward", "mean_latency",
                  "qos_fraction", "mean_q_local", "mean_q_bs")
SUMMARY_COLUMNS = ("sweep_axis", "sweep_value", "variant", "n_seeds", "latency_mean", "latency_std",
                   "qos_mean", "reward_mean")
EVAL_SEED_OFFSET = 100_000


class ConfigError(ValueError):
    pass


def default_config() -> dict:
    """Every constant the simulator uses, including the ones chosen here rather than
    taken from the system description (rho, omega, B_total, t_qos, PPO knobs...)."""
    return {
        "env": {
            "d_x": 10.0, "d_y": 10.0, "H": 3.0, "N": 3, "M": 4, "L": 3, "K": 5,
            "delta_l": None, "waveguide_y": None, "feed_x": 0.0,
            "f_c": 28e9, "n_e": 1.4, "c": 3e8,
            "f_k": 1e9, "f_b": 2e9, "rho": 100.0, "slot_seconds": 2.0,
            "B_total": 10e6, "p_max_dbm": 20.0, "sigma2_dbm": -90.0,
            "task_bits": 2e7, "task_bits_spread": 0.0,
            "t_qos": 2.0, "r_qos": 1.0, "phi": 1.0, "omega": 0.1, "t_cap": 10.0,
            "steps_per_episode": 30, "mobility": "iid", "walk_step": 0.5,
            "interference": "waveguide", "load_aware": True,
        },
        "ppo": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(PPOHyper()).items()},
        "experiment": {
            "episodes": 2000,
            "eval_episodes": 100,
            "seeds": [0, 1, 2],
            "variants": list(VARIANTS),
            "sweep": "none",
            "ues": [5, 6, 7, 8, 9],
            "power_dbm": [10.0, 15.0, 20.0, 25.0],
            "out": "runs",
        },
    }


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if k not in out:
            raise ConfigError(f"unknown config key {path + k!r}")
        if isinstance(out[k], dict) and isinstance(v, dict):
            out[k] = _merge(out[k], v, path + k + ".")
        else:
            out[k] = v
    return out


def load_config(path=None, overrides: Optional[dict] = None) -> dict:
    cfg = default_config()
    if path is not None:
        path = Path(path)
        try:
            user = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        cfg = _merge(cfg, user)
    if overrides:
        cfg = _merge(cfg, overrides)
    return cfg


_GEOMETRY_KEYS = {f.name for f in fields(SystemGeometry)}
_PROFILE_KEYS = {f.name for f in fields(ComputeProfile)}


def env_config_from_dict(env: dict, variant: str = "pass-movable", seed: int = 0) -> EnvConfig:
    env = dict(env)
    try:
        geometry = SystemGeometry(**{k: env.pop(k) for k in list(env) if k in _GEOMETRY_KEYS})
        profile = ComputeProfile(**{k: env.pop(k) for k in list(env) if k in _PROFILE_KEYS})
        p_max = float(dbm_to_watts(env.pop("p_max_dbm")))
        sigma2 = float(dbm_to_watts(env.pop("sigma2_dbm")))
        return EnvConfig(geometry=geometry, profile=profile, P_max=p_max, sigma2=sigma2,
                         variant=variant, rng_seed=seed, **env)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid env config: {e}") from e


def hyper_from_dict(d: dict) -> PPOHyper:
    try:
        return PPOHyper(**d)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid ppo config: {e}") from e


@dataclass
class ExperimentSpec:
    env: dict
    hyper: PPOHyper
    episodes: int = 2000
    eval_episodes: int = 100
    seeds: list = field(default_factory=lambda: [0, 1, 2])
    variants: list = field(default_factory=lambda: list(VARIANTS))
    sweep: str = "none"
    sweep_values: list = field(default_factory=list)
    out: Path = Path("runs")

    def __post_init__(self):
        self.out = Path(self.out)
        if not self.seeds:
            raise ConfigError("seeds list is empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError(f"seeds must be distinct, got {self.seeds}")
        if not self.variants or any(v not in VARIANTS for v in self.variants):
            raise ConfigError(f"variants must be a non-empty subset of {VARIANTS}")
        if self.sweep not in SWEEP_AXES:
            raise ConfigError(f"sweep must be one of {SWEEP_AXES}")
        if self.sweep != "none" and not self.sweep_values:
            raise ConfigError(f"sweep over {self.sweep} needs a non-empty value list")
        if self.episodes < 1 or self.eval_episodes < 1:
            raise ConfigError("episodes and eval_episodes must be >= 1")

    @classmethod
    def from_config(cls, cfg: dict, **overrides) -> "ExperimentSpec":
        ex = dict(cfg["experiment"])
        ex.update({k: v for k, v in overrides.items() if v is not None})
        sweep = ex.get("sweep", "none")
        values = {"ues": ex["ues"], "power": ex["power_dbm"]}.get(sweep, [])
        return cls(env=cfg["env"], hyper=hyper_from_dict(cfg["ppo"]), episodes=int(ex["episodes"]),
                   eval_episodes=int(ex["eval_episodes"]), seeds=list(ex["seeds"]),
                   variants=list(ex["variants"]), sweep=sweep, sweep_values=list(values), out=ex["out"])

    def env_dict_at(self, sweep_value=None) -> dict:
        env = dict(self.env)
        if self.sweep == "ues" and sweep_value is not None:
            env["K"] = int(sweep_value)
        elif self.sweep == "power" and sweep_value is not None:
            env["p_max_dbm"] = float(sweep_value)
        return env

    def points(self) -> list:
        return self.sweep_values if self.sweep != "none" else [None]


@dataclass
class MetricsRow:
    variant: str
    seed: int
    episode: int
    sweep_value: Optional[float]
    mean_reward: float
    mean_latency: float
    qos_fraction: float
    mean_q_local: float
    mean_q_bs: float

    def as_csv(self) -> list:
        return [self.variant, self.seed, self.episode, "" if self.sweep_value is None else self.sweep_value,
                self.mean_reward, self.mean_latency, self.qos_fraction, self.mean_q_local, self.mean_q_bs]

    @classmethod
    def from_csv(cls, rec: dict) -> "MetricsRow":
        sv = rec["sweep_value"]
        return cls(variant=rec["variant"], seed=int(rec["seed"]), episode=int(rec["episode"]),
                   sweep_value=None if sv == "" else float(sv),
                   **{k: float(rec[k]) for k in METRIC_COLUMNS[4:]})


def episode_metrics(t_cap: float):
    """Builds the per-episode aggregator fed to :func:`passmec.ppo.train`."""
    def agg(infos: list) -> dict:
        lat = np.concatenate([np.minimum(i["latency"].t_total, t_cap) for i in infos])
        return {
            "mean_latency": float(lat.mean()),
            "qos_fraction": float(np.mean(np.concatenate([i["qos_met"] for i in infos]))),
            "mean_q_local": float(np.mean([i["q_local"].mean() for i in infos])),
            "mean_q_bs": float(np.mean([i["q_bs"] for i in infos])),
        }
    return agg


def write_metrics_csv(path, rows) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as f:
            w = csv.writer(f)
            w.writerow(METRIC_COLUMNS)
            for r in rows:
                w.writerow(r.as_csv())
    except OSError as e:
        raise OSError(f"failed writing metrics to {path}: {e}") from e
    return path


def read_metrics_csv(path) -> list:
    with Path(path).open(newline="", encoding="utf-8") as f:
        return [MetricsRow.from_csv(rec) for rec in csv.DictReader(f)]


def run_name(variant: str, seed: int, sweep: str = "none", value=None) -> str:
    tag = f"{variant}_seed{seed}"
    return tag if sweep == "none" or value is None else f"{sweep}{value:g}_{tag}"


def train_one(env_dict: dict, hyper: PPOHyper, variant: str, seed: int, episodes: int,
              sweep_value=None):
    """Train one agent from scratch. Returns (agent, env, metrics rows, TrainLog)."""
    config = env_config_from_dict(env_dict, variant=variant, seed=seed)
    schedule = DiscretizationSchedule(eps_train=hyper.eps_train)
    env = PassMecEnv(config, schedule=schedule)
    agent = PPOAgent(env.obs_dim, env.act_dim, hyper, seed=seed)
    tlog = train(env, agent, episodes, metrics=episode_metrics(config.t_cap))
    rows = [MetricsRow(variant=variant, seed=seed, episode=r["episode"], sweep_value=sweep_value,
                       mean_reward=r["mean_reward"], mean_latency=r["mean_latency"],
                       qos_fraction=r["qos_fraction"], mean_q_local=r["mean_q_local"],
                       mean_q_bs=r["mean_q_bs"]) for r in tlog.episodes]
    return agent, env, rows, tlog


def checkpoint_layout(env: PassMecEnv) -> dict:
    return dict(ActionLayout.for_geometry(env.geometry).tag(), variant=env.config.variant)


def run_training(spec: ExperimentSpec) -> list:
    """Train every (sweep value, variant, seed); returns the written CSV paths."""
    written = []
    for value in spec.points():
        env_dict = spec.env_dict_at(value)
        for variant in spec.variants:
            for seed in spec.seeds:
                name = run_name(variant, seed, spec.sweep, value)
                agent, env, rows, _ = train_one(env_dict, spec.hyper, variant, seed, spec.episodes, value)
                written.append(write_metrics_csv(spec.out / f"train_{name}.csv", rows))
                save_checkpoint(spec.out / f"ckpt_{name}.json", agent, checkpoint_layout(env),
                                asdict(env.schedule))
                log.info("trained %s: last-episode reward %.3f", name, rows[-1].mean_reward)
    return written


def check_layout(layout: dict, env: PassMecEnv) -> None:
    expected = checkpoint_layout(env)
    for key in ("layout", "K", "N", "M", "L", "dim", "variant"):
        if layout.get(key) != expected[key]:
            raise CheckpointError(
                f"checkpoint layout mismatch on {key}: checkpoint has {layout.get(key)!r}, "
                f"config has {expected[key]!r}")
    if layout.get("obs_dim") != env.obs_dim:
        raise CheckpointError(f"checkpoint obs_dim {layout.get('obs_dim')} != config obs_dim {env.obs_dim}")


def evaluate_agent(agent: PPOAgent, config: EnvConfig, episodes: int, seed: int,
                   schedule: Optional[DiscretizationSchedule] = None) -> dict:
    """Roll out the policy mean (no sampling) and aggregate latency/QoS metrics."""
    if episodes < 1:
        raise ConfigError("episodes must be >= 1")
    env = PassMecEnv(config.replace(rng_seed=seed), schedule=schedule)
    agg = episode_metrics(config.t_cap)
    rewards, infos = [], []
    for _ in range(episodes):
        obs, done = env.reset(), False
        while not done:
            obs, r, done, info = env.step(agent.act_deterministic(obs))
            rewards.append(r)
            infos.append(info)
    out = agg(infos)
    out["mean_reward"] = float(np.mean(rewards))
    out["steps"] = len(rewards)
    return out


def evaluate(checkpoint, env_dict: dict, variant: Optional[str], episodes: int, seed: int = 0) -> dict:
    """Evaluate a saved agent; ``variant=None`` takes the one recorded in the checkpoint."""
    if episodes < 1:
        raise ConfigError("episodes must be >= 1")
    agent, layout, sched = load_checkpoint(checkpoint)
    variant = variant or layout.get("variant", "pass-movable")
    config = env_config_from_dict(env_dict, variant=variant, seed=seed)
    schedule = DiscretizationSchedule(**sched) if sched else DiscretizationSchedule(
        eps_train=agent.hyper.eps_train, current_episode=agent.hyper.eps_train)
    check_layout(layout, PassMecEnv(config, schedule=schedule))
    res = evaluate_agent(agent, config, episodes, EVAL_SEED_OFFSET + seed, schedule)
    res["variant"] = variant
    return res


def run_sweep(spec: ExperimentSpec) -> Path:
    """Train and evaluate every point; write per-run and seed-aggregated CSVs."""
    per_run, summary = [], []
    for value in spec.points():
        env_dict = spec.env_dict_at(value)
        for variant in spec.variants:
            lats, qos, rew = [], [], []
            for seed in spec.seeds:
                name = run_name(variant, seed, spec.sweep, value)
                agent, env, rows, _ = train_one(env_dict, spec.hyper, variant, seed, spec.episodes, value)
                write_metrics_csv(spec.out / f"train_{name}.csv", rows)
                save_checkpoint(spec.out / f"ckpt_{name}.json", agent, checkpoint_layout(env),
                                asdict(env.schedule))
                res = evaluate_agent(agent, env.config, spec.eval_episodes, EVAL_SEED_OFFSET + seed,
                                     env.schedule)
                per_run.append([spec.sweep, "" if value is None else value, variant, seed,
                                res["mean_latency"], res["qos_fraction"], res["mean_reward"]])
                lats.append(res["mean_latency"])
                qos.append(res["qos_fraction"])
                rew.append(res["mean_reward"])
            summary.append([spec.sweep, "" if value is None else value, variant, len(spec.seeds),
                            float(np.mean(lats)), float(np.std(lats)), float(np.mean(qos)),
                            float(np.mean(rew))])
    spec.out.mkdir(parents=True, exist_ok=True)
    _write_rows(spec.out / "eval_runs.csv",
                ("sweep_axis", "sweep_value", "variant", "seed", "mean_latency", "qos_fraction",
                 "mean_reward"), per_run)
    return _write_rows(spec.out / "summary.csv", SUMMARY_COLUMNS, summary)


EVAL_COLUMNS = ("variant", "seed", "episodes", "steps", "mean_reward", "mean_latency", "qos_fraction",
                "mean_q_local", "mean_q_bs")


def write_eval_csv(path, variant: str, seed: int, res: dict, episodes: int) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    row = [variant, seed, episodes] + [res[k] for k in EVAL_COLUMNS[3:]]
    return _write_rows(path, EVAL_COLUMNS, [row])


def _write_rows(path: Path, header, rows) -> Path:
    try:
        with path.open("w", newline="", encoding="utf-8") as f:
            w = csv.writer(f)
            w.writerow(header)
            w.writerows(rows)
    except OSError as e:
        raise OSError(f"failed writing {path}: {e}") from e
    return path


def read_summary(path) -> list:
    with Path(path).open(newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))
