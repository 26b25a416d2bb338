"""Episodic PASS-MEC environment with movable PAs, fixed PAs and a MIMO baseline."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import channel as ch
from . import queueing as qu
from .codec import (ActionLayout, DecodedAction, DiscretizationSchedule, check_pa_capacity,
                    decode_action)

VARIANTS = ("pass-movable", "pass-fixed", "mimo")


@dataclass(frozen=True)
class EnvConfig:
    geometry: ch.SystemGeometry = field(default_factory=ch.SystemGeometry)
    profile: qu.ComputeProfile = field(default_factory=qu.ComputeProfile)
    B_total: float = 10e6
    P_max: float = 0.1  # W (20 dBm)
    sigma2: float = 1e-12  # W per PA (-90 dBm)
    task_bits: float = 2e7
    # > 0 draws L_k uniformly from task_bits * [1 - spread, 1 + spread]
    task_bits_spread: float = 0.0
    t_qos: float = 2.0
    r_qos: float = 1.0
    phi: float = 1.0
    omega: float = 0.1  # s/m
    t_cap: float = 10.0
    steps_per_episode: int = 30
    variant: str = "pass-movable"
    mobility: str = "iid"  # or "random_walk"
    walk_step: float = 0.5  # m, std of the random-walk increment
    interference: str = "waveguide"
    load_aware: bool = True
    rng_seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.mobility not in ("iid", "random_walk"):
            raise ValueError(f"unknown mobility model {self.mobility!r}")
        if self.interference not in ("waveguide", "all"):
            raise ValueError(f"unknown interference model {self.interference!r}")
        for name in ("B_total", "P_max", "sigma2", "task_bits", "t_qos", "t_cap"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.omega < 0 or self.phi < 0 or not 0 <= self.task_bits_spread < 1:
            raise ValueError("omega, phi must be >= 0 and task_bits_spread in [0, 1)")
        if self.steps_per_episode < 1:
            raise ValueError("steps_per_episode must be >= 1")
        check_pa_capacity(self.geometry)

    def replace(self, **changes) -> "EnvConfig":
        return dataclasses.replace(self, **changes)


def reward(latencies, config: EnvConfig) -> float:
    """QoS bonus per UE within ``t_qos`` minus the capped latency penalty over all UEs."""
    t = np.asarray(latencies, dtype=float)
    bonus = config.r_qos * np.count_nonzero(t <= config.t_qos)
    return float(bonus - config.phi * np.minimum(t, config.t_cap).sum())


class PassMecEnv:
    """One simulated deployment; not thread-safe, own one per worker.

    Slot loop: decode the action, move PAs, recompute channels at the new PA
    positions, evaluate per-UE latency against slot-start queues, then advance
    the queues and redraw UE positions for the next slot.
    """

    def __init__(self, config: EnvConfig, schedule: Optional[DiscretizationSchedule] = None):
        self.config = config
        self.geometry = config.geometry
        self.layout = ActionLayout.for_geometry(self.geometry)
        self.schedule = schedule if schedule is not None else DiscretizationSchedule()
        self.rng = np.random.default_rng(config.rng_seed)
        self.tau = 1
        self.queues = qu.QueueState.empty(self.geometry.K)
        self.ue: Optional[ch.UEPlacement] = None
        self.task = np.full(self.geometry.K, config.task_bits)
        self.pa_prev = self.initial_pa_layout()
        self.channels: Optional[ch.ChannelSet] = None

    @property
    def act_dim(self) -> int:
        return self.layout.dim

    @property
    def obs_dim(self) -> int:
        g = self.geometry
        n_guides = 1 if self.config.variant == "mimo" else g.N
        pa_count = g.M if self.config.variant == "mimo" else g.N * g.M
        return (g.K + 1 + g.K + pa_count + 2 * g.K * g.L
                + 2 * g.K * n_guides * g.M * g.L + 2 * n_guides * g.M + g.K + 1 + 1)

    def initial_pa_layout(self) -> np.ndarray:
        if self.config.variant == "mimo":
            return ch.mimo_array_x(self.geometry)[None, :]
        return self.geometry.even_pa_layout()

    # -- randomness ------------------------------------------------------
    def _draw_centroids(self) -> np.ndarray:
        g = self.geometry
        if self.config.mobility == "random_walk" and self.ue is not None:
            prev = self.ue.centroids[:, :2]
            step = self.rng.normal(0.0, self.config.walk_step, size=prev.shape)
            xy = prev + step
            xy[:, 0] = np.clip(xy[:, 0], 0.0, g.d_x)
            xy[:, 1] = np.clip(xy[:, 1], -g.d_y / 2, g.d_y / 2)
            return xy
        x = self.rng.uniform(0.0, g.d_x, size=g.K)
        y = self.rng.uniform(-g.d_y / 2, g.d_y / 2, size=g.K)
        return np.column_stack([x, y])

    def _draw_tasks(self) -> np.ndarray:
        c = self.config
        if c.task_bits_spread == 0:
            return np.full(self.geometry.K, c.task_bits)
        lo, hi = c.task_bits * (1 - c.task_bits_spread), c.task_bits * (1 + c.task_bits_spread)
        return self.rng.uniform(lo, hi, size=self.geometry.K)

    def _channels(self, pa_x) -> ch.ChannelSet:
        if self.config.variant == "mimo":
            return ch.mimo_geometry_channels(self.geometry, self.ue, self.config.sigma2)
        return ch.compute_channels(self.geometry, self.ue, pa_x, self.config.sigma2)

    # -- gym-style API ---------------------------------------------------
    def reset(self, seed: Optional[int] = None) -> np.ndarray:
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        self.tau = 1
        self.queues = qu.QueueState.empty(self.geometry.K)
        self.ue = None
        self.ue = ch.ue_antenna_positions(self.geometry, self._draw_centroids())
        self.task = self._draw_tasks()
        self.pa_prev = self.initial_pa_layout()
        self.channels = self._channels(self.pa_prev)
        return self.observation()

    def decode(self, raw_action) -> DecodedAction:
        c = self.config
        raw = np.asarray(raw_action, dtype=float)
        if raw.shape != (self.act_dim,):
            raise ValueError(f"action must have shape ({self.act_dim},), got {raw.shape}")
        a = decode_action(raw, self.geometry, c.P_max, self.schedule, load_aware=c.load_aware)
        if c.variant == "pass-fixed":
            a.pa_x = self.geometry.even_pa_layout()
        elif c.variant == "mimo":
            a.pa_x = self.pa_prev.copy()
            a.assoc = np.zeros(self.geometry.K, dtype=int)
        return a

    def step(self, raw_action):
        if self.ue is None:
            raise RuntimeError("call reset() before step()")
        c, g = self.config, self.geometry
        a = self.decode(raw_action)
        move = 0.0 if c.variant != "pass-movable" else qu.movement_delay(self.pa_prev, a.pa_x, c.omega)
        slot_channels = self._channels(a.pa_x)
        interference = "all" if c.variant == "mimo" else c.interference
        gamma = ch.sinr_all(slot_channels, a.assoc, a.beams, interference)
        rates = ch.rate(gamma, g.K, c.B_total)
        lat = qu.latency_breakdown(self.queues, self.task, a.beta, rates, move, c.profile)
        r = reward(lat.t_total, c)

        info = {
            "tau": self.tau,
            "latency": lat,
            "sinr": gamma,
            "rate": rates,
            "assoc": a.assoc,
            "beta": a.beta,
            "pa_x": a.pa_x,
            "move_delay": move,
            "q_local": self.queues.q_local.copy(),
            "q_bs": self.queues.q_bs,
            "qos_met": lat.t_total <= c.t_qos,
        }

        self.queues = qu.step_queues(self.queues, self.task, a.beta, c.profile)
        self.pa_prev = a.pa_x
        done = self.tau >= c.steps_per_episode
        self.tau += 1
        self.ue = ch.ue_antenna_positions(g, self._draw_centroids())
        self.task = self._draw_tasks()
        self.channels = self._channels(self.pa_prev)
        return self.observation(), r, done, info

    def observation(self) -> np.ndarray:
        """Flat state vector, in order: local queues, BS queue, task sizes, PA x,
        UE antenna (x, y), Re/Im of every H entry, Re/Im of every h entry,
        per-UE and BS CPU speeds, elapsed fraction of the episode. All entries
        are scaled to O(1)."""
        c, g, p = self.config, self.geometry, self.config.profile
        ant = self.ue.antenna_positions
        h_scale = g.sqrt_eta / g.H
        H, h = self.channels.H, self.channels.h
        parts = [
            self.queues.q_local / p.local_service_bits,
            [self.queues.q_bs / p.bs_service_bits],
            self.task / c.task_bits,
            self.pa_prev.ravel() / g.d_x,
            (ant[:, :, 0] / g.d_x).ravel(),
            (ant[:, :, 1] / (g.d_y / 2)).ravel(),
            (H.real / h_scale).ravel(),
            (H.imag / h_scale).ravel(),
            h.real.ravel(),
            h.imag.ravel(),
            np.full(g.K, p.f_k / p.f_b),
            [1.0],
            # finite horizon: without it the critic reads queue growth as "episode nearly over"
            [(self.tau - 1) / c.steps_per_episode],
        ]
        return np.concatenate([np.asarray(x, dtype=float).ravel() for x in parts])
