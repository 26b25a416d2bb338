"""Raw policy output <-> feasible decision variables.

The flat action vector is laid out as ``beams | pa_x | assoc | beta``:

* beams: ``2*L*K`` reals, UE-major, each antenna as an interleaved (re, im) pair
* pa_x: ``N*M`` reals, waveguide-major
* assoc: ``K`` scalars decoded against per-waveguide interval lengths
* beta: ``K`` offloading ratios

Every entry is expected in ``[-1, 1]``; anything outside is clipped first.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import SystemGeometry

LAYOUT_TAG = "beams|pa_x|assoc|beta/v1"


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class ActionLayout:
    K: int
    N: int
    M: int
    L: int

    @classmethod
    def for_geometry(cls, g: SystemGeometry) -> "ActionLayout":
        return cls(g.K, g.N, g.M, g.L)

    @property
    def beams(self) -> slice:
        return slice(0, 2 * self.L * self.K)

    @property
    def pa_x(self) -> slice:
        s = self.beams.stop
        return slice(s, s + self.N * self.M)

    @property
    def assoc(self) -> slice:
        s = self.pa_x.stop
        return slice(s, s + self.K)

    @property
    def beta(self) -> slice:
        s = self.assoc.stop
        return slice(s, s + self.K)

    @property
    def dim(self) -> int:
        return self.beta.stop

    def tag(self) -> dict:
        return {"layout": LAYOUT_TAG, "K": self.K, "N": self.N, "M": self.M, "L": self.L, "dim": self.dim}


@dataclass
class DiscretizationSchedule:
    """Annealing state of the load-aware association intervals.

    ``current_episode >= eps_train`` switches to the plain equal split.
    """

    eps_train: int = 400
    current_episode: int = 0
    varpi_min: float = -1.0
    varpi_max: float = 1.0

    def __post_init__(self):
        if self.eps_train < 1:
            raise ConfigurationError("eps_train must be >= 1")
        if not self.varpi_min < self.varpi_max:
            raise ConfigurationError("varpi_min must be < varpi_max")

    @property
    def width(self) -> float:
        return self.varpi_max - self.varpi_min

    @property
    def load_balancing_active(self) -> bool:
        return self.current_episode < self.eps_train


@dataclass
class DecodedAction:
    beams: np.ndarray  # (K, L) complex
    pa_x: np.ndarray  # (N, M)
    assoc: np.ndarray  # (K,) int
    beta: np.ndarray  # (K,)


def conventional_segments(N: int, schedule: DiscretizationSchedule) -> np.ndarray:
    if N < 1:
        raise ConfigurationError("N must be >= 1")
    return np.full(N, schedule.width / N)


def lb_segments(loads, K: int, N: int, schedule: DiscretizationSchedule) -> np.ndarray:
    """Load-aware interval lengths, blended toward the equal split as training proceeds.

    Early on, waveguide n gets a share proportional to its spare capacity
    ``K - loads[n]``; the blend weight on the equal split grows linearly with
    the episode index and reaches 1 at ``eps_train``.
    """
    if not schedule.load_balancing_active or N == 1:
        return conventional_segments(N, schedule)
    loads = np.asarray(loads, dtype=float)
    spare = K - loads
    a = schedule.current_episode / schedule.eps_train
    return (1 - a) * schedule.width * spare / spare.sum() + a * schedule.width / N


def segment_index(value: float, segments, vmin: float) -> int:
    """Left-closed interval lookup; the last non-empty interval is closed on the right."""
    bounds = np.cumsum(segments)
    offset = value - vmin
    n = int(np.searchsorted(bounds, offset, side="right"))
    if n >= len(segments):
        nonzero = np.flatnonzero(np.asarray(segments) > 0)
        n = int(nonzero[-1]) if nonzero.size else len(segments) - 1
    return n


def decode_association(varpi, schedule: DiscretizationSchedule, K: int, N: int, loads=None,
                       load_aware: bool = True) -> np.ndarray:
    """Map association scalars to waveguide indices, one UE at a time.

    Each decoded UE increments the running load before the next one is decoded.
    """
    varpi = np.clip(np.asarray(varpi, dtype=float), schedule.varpi_min, schedule.varpi_max)
    counts = np.zeros(N) if loads is None else np.array(loads, dtype=float)
    out = np.empty(len(varpi), dtype=int)
    for k, v in enumerate(varpi):
        seg = lb_segments(counts, K, N, schedule) if load_aware else conventional_segments(N, schedule)
        n = segment_index(v, seg, schedule.varpi_min)
        out[k] = n
        counts[n] += 1
    return out


def decode_beams(raw, K: int, L: int, P_max: float) -> np.ndarray:
    raw = np.clip(np.asarray(raw, dtype=float), -1.0, 1.0).reshape(K, L, 2)
    u = raw[..., 0] + 1j * raw[..., 1]
    norm = np.linalg.norm(u, axis=1, keepdims=True)
    return np.sqrt(P_max) * u / np.maximum(1.0, norm)


def check_pa_capacity(geometry: SystemGeometry) -> None:
    if geometry.M * geometry.delta_l > geometry.d_x:
        raise ConfigurationError(
            f"{geometry.M} PAs at spacing {geometry.delta_l} do not fit in d_x = {geometry.d_x}")


def project_pa_row(x, d_x: float, gap: float) -> np.ndarray:
    x = np.sort(np.clip(x, 0.0, d_x))
    for m in range(1, len(x)):
        x[m] = max(x[m], x[m - 1] + gap)
    if x[-1] > d_x:
        x[-1] = d_x
        for m in range(len(x) - 2, -1, -1):
            x[m] = min(x[m], x[m + 1] - gap)
    return x


def decode_pa_positions(raw, geometry: SystemGeometry) -> np.ndarray:
    check_pa_capacity(geometry)
    raw = np.clip(np.asarray(raw, dtype=float), -1.0, 1.0).reshape(geometry.N, geometry.M)
    x = (raw + 1.0) / 2.0 * geometry.d_x
    return np.stack([project_pa_row(row, geometry.d_x, geometry.delta_l) for row in x])


def encode_pa_positions(pa_x, geometry: SystemGeometry) -> np.ndarray:
    """Inverse of the affine part of :func:`decode_pa_positions`."""
    return (2.0 * np.asarray(pa_x, dtype=float) / geometry.d_x - 1.0).ravel()


def decode_beta(raw) -> np.ndarray:
    return np.clip((np.asarray(raw, dtype=float) + 1.0) / 2.0, 0.0, 1.0)


def decode_action(raw, geometry: SystemGeometry, P_max: float, schedule: DiscretizationSchedule,
                  load_aware: bool = True) -> DecodedAction:
    layout = ActionLayout.for_geometry(geometry)
    raw = np.asarray(raw, dtype=float)
    if raw.shape != (layout.dim,):
        raise ValueError(f"action must have shape ({layout.dim},), got {raw.shape}")
    return DecodedAction(
        beams=decode_beams(raw[layout.beams], geometry.K, geometry.L, P_max),
        pa_x=decode_pa_positions(raw[layout.pa_x], geometry),
        assoc=decode_association(raw[layout.assoc], schedule, geometry.K, geometry.N, load_aware=load_aware),
        beta=decode_beta(raw[layout.beta]),
    )
