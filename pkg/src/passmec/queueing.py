"""Slot-level FIFO queues at the UEs and the BS, and the latency model."""
from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

# stands in for "cannot be delivered" (offload attempted at zero rate)
INFINITE_LATENCY = float("inf")


@dataclass(frozen=True)
class ComputeProfile:
    f_k: float = 1e9  # cycles/s at each UE
    f_b: float = 2e9  # cycles/s at the BS
    rho: float = 100.0  # cycles per bit
    slot_seconds: float = 2.0

    def __post_init__(self):
        for f in fields(self):
            if not getattr(self, f.name) > 0:
                raise ValueError(f"{f.name} must be strictly positive")

    @property
    def local_service_bits(self) -> float:
        """Bits a UE clears from its queue per slot."""
        return self.f_k * self.slot_seconds / self.rho

    @property
    def bs_service_bits(self) -> float:
        return self.f_b * self.slot_seconds / self.rho


@dataclass
class QueueState:
    q_local: np.ndarray
    q_bs: float = 0.0

    @classmethod
    def empty(cls, K: int) -> "QueueState":
        return cls(np.zeros(K), 0.0)

    def copy(self) -> "QueueState":
        return QueueState(self.q_local.copy(), self.q_bs)


@dataclass
class LatencyBreakdown:
    """Per-UE latency components in seconds; every field has shape (K,)."""

    t_local_queue: np.ndarray
    t_local_compute: np.ndarray
    t_off_tx: np.ndarray
    t_off_queue: np.ndarray
    t_off_compute: np.ndarray
    t_move: np.ndarray
    t_total: np.ndarray

    def rows(self) -> list:
        names = [f.name for f in fields(self)]
        cols = [getattr(self, n) for n in names]
        return [dict(ue=k, **{n: float(c[k]) for n, c in zip(names, cols)}) for k in range(len(self.t_total))]


def step_local_queue(prev: QueueState | None, local_bits, profile: ComputeProfile) -> np.ndarray:
    """Local queue lengths for the next slot; ``prev=None`` marks the first slot."""
    if prev is None:
        return np.zeros(np.size(local_bits))
    return np.maximum(prev.q_local + np.asarray(local_bits, dtype=float) - profile.local_service_bits, 0.0)


def step_bs_queue(prev: QueueState | None, offloaded_bits_total: float, profile: ComputeProfile) -> float:
    if prev is None:
        return 0.0
    return max(prev.q_bs + float(offloaded_bits_total) - profile.bs_service_bits, 0.0)


def step_queues(prev: QueueState, task_bits, beta, profile: ComputeProfile) -> QueueState:
    task_bits = np.asarray(task_bits, dtype=float)
    beta = np.asarray(beta, dtype=float)
    return QueueState(
        step_local_queue(prev, (1 - beta) * task_bits, profile),
        step_bs_queue(prev, float(np.sum(beta * task_bits)), profile),
    )


def local_latency(queue_bits, task_bits, beta, profile: ComputeProfile):
    """Returns (queueing, computing) delay of the locally kept share."""
    t_queue = np.asarray(queue_bits, dtype=float) * profile.rho / profile.f_k
    t_compute = (1 - np.asarray(beta, dtype=float)) * np.asarray(task_bits, dtype=float) * profile.rho / profile.f_k
    return t_queue, t_compute


def offload_latency(bs_queue_bits, task_bits, beta, rate_bits_per_s, move_delay, profile: ComputeProfile):
    """Returns (transmission, BS queueing, BS computing) delay of the offloaded share.

    A UE that offloads nothing has no offload path, so all three terms are 0
    for it. Offloading at zero rate yields ``INFINITE_LATENCY`` transmission.
    """
    beta = np.asarray(beta, dtype=float)
    bits = beta * np.asarray(task_bits, dtype=float)
    rate = np.asarray(rate_bits_per_s, dtype=float)
    bits, rate = np.broadcast_arrays(bits, rate)
    active = bits > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        airtime = np.where(rate > 0, bits / np.where(rate > 0, rate, 1.0), INFINITE_LATENCY)
    t_tx = np.where(active, airtime + move_delay, 0.0)
    t_queue = np.where(active, float(bs_queue_bits) * profile.rho / profile.f_b, 0.0)
    t_compute = bits * profile.rho / profile.f_b
    return t_tx, t_queue, t_compute


def movement_delay(prev_pa_x, next_pa_x, omega: float) -> float:
    """Repositioning delay: the slowest PA sets the pace for the whole slot."""
    disp = np.abs(np.asarray(next_pa_x, dtype=float) - np.asarray(prev_pa_x, dtype=float))
    return float(omega * disp.max()) if disp.size else 0.0


def total_latency(breakdown: LatencyBreakdown) -> np.ndarray:
    local = breakdown.t_local_queue + breakdown.t_local_compute
    off = breakdown.t_off_tx + breakdown.t_off_queue + breakdown.t_off_compute
    return np.maximum(local, off)


def latency_breakdown(queues: QueueState, task_bits, beta, rates, move_delay: float, profile: ComputeProfile) -> LatencyBreakdown:
    task_bits = np.asarray(task_bits, dtype=float)
    K = task_bits.shape[0]
    lq, lc = local_latency(queues.q_local, task_bits, beta, profile)
    otx, oq, oc = offload_latency(queues.q_bs, task_bits, beta, rates, move_delay, profile)
    b = LatencyBreakdown(
        t_local_queue=np.broadcast_to(lq, (K,)).astype(float),
        t_local_compute=np.broadcast_to(lc, (K,)).astype(float),
        t_off_tx=otx,
        t_off_queue=oq,
        t_off_compute=np.broadcast_to(oc, (K,)).astype(float),
        t_move=np.full(K, float(move_delay)),
        t_total=np.zeros(K),
    )
    b.t_total = total_latency(b)
    return b
