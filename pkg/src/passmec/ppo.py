"""Clipped-surrogate policy optimisation with a Gaussian actor and a V(s) critic.

Everything runs on numpy; networks and gradients come from :mod:`passmec.nn`.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .nn import Adam, DenseNet, clip_by_global_norm

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "passmec-checkpoint"
CHECKPOINT_VERSION = 1
_LOG_2PI = math.log(2 * math.pi)


class CheckpointError(ValueError):
    pass


@dataclass
class PPOHyper:
    lr: float = 1e-3
    gamma: float = 0.99
    # 1.0: with 0.95 the critic's weak grip on the shared BS-queue cost biased advantages toward offloading
    gae_lambda: float = 1.0
    clip_eps: float = 0.2
    epochs: int = 10
    minibatch: int = 128
    batch_size: int = 512
    value_coef: float = 0.5
    entropy_coef: float = 0.0
    max_grad_norm: float = 0.5
    hidden: tuple = (64, 128, 64)
    init_log_std: float = -0.5
    log_std_min: float = -5.0
    log_std_max: float = 1.0
    eps_train: int = 400
    # multiplies env rewards before they reach the critic; reported rewards stay raw
    reward_scale: float = 0.02

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if not (0 < self.gamma <= 1 and 0 < self.gae_lambda <= 1):
            raise ValueError("gamma and gae_lambda must lie in (0, 1]")
        if self.clip_eps <= 0 or self.reward_scale <= 0:
            raise ValueError("clip_eps and reward_scale must be positive")
        if self.batch_size < 1 or self.minibatch < 1 or self.epochs < 1:
            raise ValueError("batch_size, minibatch and epochs must be >= 1")


class GaussianPolicy:
    """Diagonal Gaussian with a tanh-bounded mean net and state-independent log-std."""

    def __init__(self, obs_dim: int, act_dim: int, hyper: PPOHyper, rng: np.random.Generator):
        self.net = DenseNet([obs_dim, *hyper.hidden, act_dim], hidden="tanh", output="tanh",
                            rng=rng, out_scale=0.01)
        self.log_std = np.full(act_dim, float(hyper.init_log_std))
        self.log_std_bounds = (hyper.log_std_min, hyper.log_std_max)

    @property
    def params(self) -> list:
        return self.net.params + [self.log_std]

    def clamp(self) -> None:
        np.clip(self.log_std, *self.log_std_bounds, out=self.log_std)

    def mean(self, obs) -> np.ndarray:
        return self.net.forward(obs)

    def sample(self, obs, rng: np.random.Generator):
        """Returns (unclipped sample, its log-density, mean)."""
        mu = self.mean(obs)
        a = mu + np.exp(self.log_std) * rng.standard_normal(mu.shape)
        return a, gaussian_log_prob(a, mu, self.log_std), mu

    def entropy(self) -> float:
        return float(np.sum(self.log_std + 0.5 * (_LOG_2PI + 1.0)))


def gaussian_log_prob(a, mu, log_std) -> np.ndarray:
    z = (np.asarray(a) - mu) * np.exp(-log_std)
    return np.sum(-0.5 * z * z - log_std - 0.5 * _LOG_2PI, axis=-1)


class RolloutBuffer:
    """On-policy store, cleared after each update."""

    def __init__(self, capacity: int, obs_dim: int, act_dim: int):
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim))
        self.act = np.zeros((capacity, act_dim))
        self.logp = np.zeros(capacity)
        self.rew = np.zeros(capacity)
        self.val = np.zeros(capacity)
        self.done = np.zeros(capacity)
        self.size = 0

    def __len__(self) -> int:
        return self.size

    @property
    def full(self) -> bool:
        return self.size >= self.capacity

    def add(self, obs, act, logp, rew, val, done) -> None:
        if self.full:
            raise IndexError("rollout buffer is full")
        i = self.size
        self.obs[i], self.act[i] = obs, act
        self.logp[i], self.rew[i], self.val[i], self.done[i] = logp, rew, val, float(done)
        self.size += 1

    def clear(self) -> None:
        self.size = 0


def gae(rewards, values, dones, last_value: float, gamma: float, lam: float, normalize: bool = True):
    """Generalised advantage estimates and value targets.

    ``dones[t]`` marks that the episode ended after step t, so neither the
    bootstrap value nor later advantages flow back across it.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=float)
    T = len(rewards)
    adv = np.zeros(T)
    next_v, next_a = float(last_value), 0.0
    for t in reversed(range(T)):
        live = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_v * live - values[t]
        next_a = delta + gamma * lam * live * next_a
        adv[t] = next_a
        next_v = values[t]
    returns = adv + values
    if normalize and T > 1:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    return adv, returns


def clipped_surrogate(ratio, adv, clip_eps: float):
    """Per-sample min(ratio*A, clip(ratio)*A) and the mask where d/dratio is nonzero."""
    ratio, adv = np.asarray(ratio, dtype=float), np.asarray(adv, dtype=float)
    s1 = ratio * adv
    s2 = np.clip(ratio, 1 - clip_eps, 1 + clip_eps) * adv
    surr = np.minimum(s1, s2)
    inside = (ratio >= 1 - clip_eps) & (ratio <= 1 + clip_eps)
    grad_mask = (s1 <= s2) | inside
    return surr, grad_mask


def make_value_net(obs_dim: int, hyper: PPOHyper, rng: np.random.Generator) -> DenseNet:
    return DenseNet([obs_dim, *hyper.hidden, 1], hidden="relu", output="linear", rng=rng)


class PPOAgent:
    def __init__(self, obs_dim: int, act_dim: int, hyper: PPOHyper, seed: int = 0):
        self.hyper = hyper
        self.obs_dim, self.act_dim = obs_dim, act_dim
        init_rng = np.random.default_rng([seed, 0])
        self.rng = np.random.default_rng([seed, 1])
        self.policy = GaussianPolicy(obs_dim, act_dim, hyper, init_rng)
        self.value = make_value_net(obs_dim, hyper, init_rng)
        self.pi_opt = Adam(self.policy.params, lr=hyper.lr)
        self.v_opt = Adam(self.value.params, lr=hyper.lr)
        self.buffer = RolloutBuffer(hyper.batch_size, obs_dim, act_dim)

    def act(self, obs):
        """Sampled action for the environment (clipped) plus what the buffer needs."""
        a, logp, _ = self.policy.sample(obs, self.rng)
        v = float(self.value.forward(obs)[0])
        return np.clip(a, -1.0, 1.0), a, float(logp), v

    def act_deterministic(self, obs) -> np.ndarray:
        return self.policy.mean(obs)

    def value_of(self, obs) -> float:
        return float(self.value.forward(obs)[0])

    def update(self, last_value: float) -> dict:
        return ppo_update(self.buffer, self.policy, self.value, self.hyper,
                          self.pi_opt, self.v_opt, self.rng, last_value)


def ppo_update(buffer: RolloutBuffer, policy: GaussianPolicy, value_net: DenseNet, hyper: PPOHyper,
               pi_opt: Adam, v_opt: Adam, rng: np.random.Generator, last_value: float = 0.0) -> dict:
    n = len(buffer)
    obs, act, logp_old = buffer.obs[:n], buffer.act[:n], buffer.logp[:n]
    adv, ret = gae(buffer.rew[:n], buffer.val[:n], buffer.done[:n], last_value,
                   hyper.gamma, hyper.gae_lambda)
    stats = {"policy_loss": [], "value_loss": [], "entropy": [], "clip_frac": [],
             "pi_grad_norm": [], "v_grad_norm": [], "aborted": False}
    mb = min(hyper.minibatch, n)
    for _ in range(hyper.epochs):
        order = rng.permutation(n)
        for start in range(0, n, mb):
            idx = order[start:start + mb]
            B = len(idx)
            o, a, lp_old, A, R = obs[idx], act[idx], logp_old[idx], adv[idx], ret[idx]

            mu = policy.net.forward(o)
            std = np.exp(policy.log_std)
            z = (a - mu) / std
            lp = np.sum(-0.5 * z * z - policy.log_std - 0.5 * _LOG_2PI, axis=1)
            ratio = np.exp(lp - lp_old)
            surr, mask = clipped_surrogate(ratio, A, hyper.clip_eps)
            pi_loss = -float(surr.mean())
            ent = policy.entropy()

            v = value_net.forward(o)[:, 0]
            v_loss = float(np.mean((v - R) ** 2))

            total = pi_loss + hyper.value_coef * v_loss - hyper.entropy_coef * ent
            if not np.isfinite(total):
                log.warning("non-finite PPO loss (policy %r, value %r); update aborted", pi_loss, v_loss)
                stats["aborted"] = True
                buffer.clear()
                return _summarise(stats)

            g_lp = -(ratio * A * mask) / B  # dLoss/dlogp
            g_mu = g_lp[:, None] * z / std
            g_logstd = np.sum(g_lp[:, None] * (z * z - 1.0), axis=0) - hyper.entropy_coef
            pi_grads = policy.net.backward(g_mu) + [g_logstd]
            pi_grads, pi_norm = clip_by_global_norm(pi_grads, hyper.max_grad_norm)
            pi_opt.step(policy.params, pi_grads)
            policy.clamp()

            g_v = (hyper.value_coef * 2.0 * (v - R) / B)[:, None]
            v_grads, v_norm = clip_by_global_norm(value_net.backward(g_v), hyper.max_grad_norm)
            v_opt.step(value_net.params, v_grads)

            stats["policy_loss"].append(pi_loss)
            stats["value_loss"].append(v_loss)
            stats["entropy"].append(ent)
            stats["clip_frac"].append(float(np.mean(~( (ratio >= 1 - hyper.clip_eps) & (ratio <= 1 + hyper.clip_eps)))))
            stats["pi_grad_norm"].append(pi_norm)
            stats["v_grad_norm"].append(v_norm)
    buffer.clear()
    return _summarise(stats)


def _summarise(stats: dict) -> dict:
    out = {"aborted": stats["aborted"]}
    for k, v in stats.items():
        if k != "aborted":
            out[k] = float(np.mean(v)) if v else float("nan")
    return out


@dataclass
class TrainLog:
    episodes: list = field(default_factory=list)  # one dict per episode
    updates: list = field(default_factory=list)  # one dict per PPO update


def train(env, agent: PPOAgent, episodes: int, metrics: Optional[Callable[[list], dict]] = None,
          on_episode: Optional[Callable[[int, dict], None]] = None) -> TrainLog:
    """Run ``episodes`` episodes, updating whenever the rollout buffer fills.

    If ``env`` has a ``schedule`` attribute its ``current_episode`` follows the
    episode counter so the association intervals anneal.
    """
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    tlog = TrainLog()
    for ep in range(episodes):
        if hasattr(env, "schedule"):
            env.schedule.current_episode = ep
        obs = env.reset()
        rewards, infos = [], []
        done = False
        while not done:
            a_env, a_raw, logp, v = agent.act(obs)
            next_obs, r, done, info = env.step(a_env)
            agent.buffer.add(obs, a_raw, logp, r * agent.hyper.reward_scale, v, done)
            rewards.append(r)
            infos.append(info)
            obs = next_obs
            if agent.buffer.full:
                last_v = 0.0 if done else agent.value_of(obs)
                stats = agent.update(last_v)
                stats["episode"] = ep
                tlog.updates.append(stats)
        row = {"episode": ep, "mean_reward": float(np.mean(rewards)), "steps": len(rewards)}
        if metrics is not None:
            row.update(metrics(infos))
        tlog.episodes.append(row)
        if on_episode is not None:
            on_episode(ep, row)
    return tlog


class ContinuousBandit:
    """Stateless one-step task with reward -(a - target)^2 on the first action dim."""

    def __init__(self, target: float = 0.3, obs_dim: int = 1, act_dim: int = 1):
        self.target = target
        self.obs_dim, self.act_dim = obs_dim, act_dim

    def reset(self, seed=None):
        return np.ones(self.obs_dim)

    def step(self, action):
        r = -float((np.asarray(action)[0] - self.target) ** 2)
        return np.ones(self.obs_dim), r, True, {}


# -- checkpoints -----------------------------------------------------------

def _net_dict(net: DenseNet) -> dict:
    return {"sizes": net.sizes, "hidden": net.hidden, "output": net.output,
            "W": [w.tolist() for w in net.W], "b": [b.tolist() for b in net.b]}


def _net_from(d: dict) -> DenseNet:
    net = DenseNet(d["sizes"], hidden=d["hidden"], output=d["output"])
    params = []
    for w, b in zip(d["W"], d["b"]):
        params += [w, b]
    net.set_params(params)
    return net


def save_checkpoint(path, agent: PPOAgent, layout: dict, schedule: Optional[dict] = None) -> Path:
    path = Path(path)
    blob = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "layout": dict(layout, obs_dim=agent.obs_dim, act_dim=agent.act_dim),
        "hyper": asdict(agent.hyper),
        "schedule": schedule,
        "policy": dict(_net_dict(agent.policy.net), log_std=agent.policy.log_std.tolist()),
        "value": _net_dict(agent.value),
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(blob))
    return path


def load_checkpoint(path):
    """Returns (agent, layout, schedule). Optimiser state is not restored."""
    path = Path(path)
    try:
        blob = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    if blob.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not a {CHECKPOINT_FORMAT} file")
    if blob.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: checkpoint version {blob.get('version')} unsupported "
                              f"(expected {CHECKPOINT_VERSION})")
    layout = blob["layout"]
    hyper = PPOHyper(**blob["hyper"])
    agent = PPOAgent(layout["obs_dim"], layout["act_dim"], hyper)
    agent.policy.net = _net_from(blob["policy"])
    agent.policy.log_std = np.array(blob["policy"]["log_std"], dtype=float)
    agent.value = _net_from(blob["value"])
    agent.pi_opt = Adam(agent.policy.params, lr=hyper.lr)
    agent.v_opt = Adam(agent.value.params, lr=hyper.lr)
    return agent, layout, blob.get("schedule")
