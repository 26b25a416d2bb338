"""LoS physical layer: UE arrays, PA placement, channels, SINR and rate.

All powers are linear watts. Positions are metres in a frame where UEs sit
on the z = 0 plane, x runs along the waveguides from the feed at ``feed_x``
and y spans ``[-d_y/2, d_y/2]``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

SPEED_OF_LIGHT = 3e8


class GeometryError(ValueError):
    """Raised for positions or shapes inconsistent with the deployment."""


@dataclass(frozen=True)
class SystemGeometry:
    d_x: float = 10.0
    d_y: float = 10.0
    H: float = 3.0
    N: int = 3
    M: int = 4
    L: int = 3
    K: int = 5
    # None -> half a free-space wavelength
    delta_l: Optional[float] = None
    # None -> waveguides spread evenly across y
    waveguide_y: Optional[Sequence[float]] = None
    feed_x: float = 0.0
    f_c: float = 28e9
    n_e: float = 1.4
    c: float = SPEED_OF_LIGHT

    def __post_init__(self):
        if self.d_x <= 0 or self.d_y <= 0 or self.H <= 0:
            raise GeometryError("region sizes and waveguide height must be positive")
        if min(self.N, self.M, self.L, self.K) < 1:
            raise GeometryError("N, M, L and K must all be >= 1")
        if self.f_c <= 0 or self.n_e <= 0 or self.c <= 0:
            raise GeometryError("f_c, n_e and c must be positive")
        if self.delta_l is None:
            object.__setattr__(self, "delta_l", self.wavelength / 2)
        if self.waveguide_y is None:
            ys = [-self.d_y / 2 + (n + 0.5) * self.d_y / self.N for n in range(self.N)]
        else:
            ys = [float(y) for y in self.waveguide_y]
        if len(ys) != self.N:
            raise GeometryError(f"expected {self.N} waveguide y-coordinates, got {len(ys)}")
        if any(abs(y) > self.d_y / 2 for y in ys):
            raise GeometryError("waveguide y-coordinates must lie in [-d_y/2, d_y/2]")
        object.__setattr__(self, "waveguide_y", tuple(ys))

    @property
    def wavelength(self) -> float:
        return self.c / self.f_c

    @property
    def guided_wavelength(self) -> float:
        return self.wavelength / self.n_e

    @property
    def sqrt_eta(self) -> float:
        return self.c / (4 * np.pi * self.f_c)

    def antenna_offsets(self) -> np.ndarray:
        """ULA offsets along y, symmetric about the centroid."""
        l = np.arange(1, self.L + 1)
        return (l - (self.L + 1) / 2) * self.delta_l

    def even_pa_layout(self) -> np.ndarray:
        """PAs centred in M equal cells of each waveguide, shape (N, M)."""
        x = (2 * np.arange(self.M) + 1) * self.d_x / (2 * self.M)
        return np.tile(x, (self.N, 1))


@dataclass(frozen=True)
class UEPlacement:
    centroids: np.ndarray  # (K, 3)
    antenna_positions: np.ndarray  # (K, L, 3)


@dataclass(frozen=True)
class ChannelSet:
    """Per-slot channels. ``H[k, n]`` is the (M, L) PA-to-UE matrix of UE k on
    waveguide n; ``h[n]`` the in-waveguide phase response of waveguide n."""

    H: np.ndarray  # (K, N, M, L) complex
    h: np.ndarray  # (N, M) complex
    noise_power_per_pa: float

    @property
    def M(self) -> int:
        return self.h.shape[1]


def ue_antenna_positions(geometry: SystemGeometry, centroids) -> UEPlacement:
    c = np.asarray(centroids, dtype=float)
    if c.ndim != 2 or c.shape[0] != geometry.K or c.shape[1] not in (2, 3):
        raise GeometryError(f"centroids must have shape ({geometry.K}, 2|3), got {c.shape}")
    x, y = c[:, 0], c[:, 1]
    if np.any(x < 0) or np.any(x > geometry.d_x) or np.any(np.abs(y) > geometry.d_y / 2):
        raise GeometryError("UE centroid outside the service region")
    if c.shape[1] == 3 and np.any(c[:, 2] != 0):
        raise GeometryError("UEs must sit on the z = 0 plane")
    cent = np.column_stack([x, y, np.zeros(geometry.K)])
    ant = np.repeat(cent[:, None, :], geometry.L, axis=1)
    ant[:, :, 1] += geometry.antenna_offsets()[None, :]
    return UEPlacement(centroids=cent, antenna_positions=ant)


def pa_positions_3d(geometry: SystemGeometry, pa_x) -> np.ndarray:
    """Lift (N, M) x-coordinates to (N, M, 3) points on the waveguides."""
    pa_x = np.asarray(pa_x, dtype=float)
    pos = np.empty(pa_x.shape + (3,))
    pos[..., 0] = pa_x
    pos[..., 1] = np.asarray(geometry.waveguide_y)[:, None]
    pos[..., 2] = geometry.H
    return pos


def pa_placement_violations(geometry: SystemGeometry, pa_x, tol: float = 1e-9) -> list:
    """Return a list of human-readable constraint violations (empty if feasible)."""
    pa_x = np.asarray(pa_x, dtype=float)
    problems = []
    if pa_x.shape != (geometry.N, geometry.M):
        return [f"shape {pa_x.shape} != {(geometry.N, geometry.M)}"]
    if np.any(pa_x < -tol) or np.any(pa_x > geometry.d_x + tol):
        problems.append("PA outside [0, d_x]")
    gaps = np.diff(pa_x, axis=1)
    if gaps.size and np.any(gaps < geometry.delta_l - tol):
        problems.append(f"PA gap {gaps.min():.6g} < delta_l {geometry.delta_l:.6g}")
    return problems


def _distances(ant: np.ndarray, pa_pos: np.ndarray) -> np.ndarray:
    # ant (K, L, 3), pa_pos (N, M, 3) -> (K, N, M, L)
    diff = pa_pos[None, :, :, None, :] - ant[:, None, None, :, :]
    return np.sqrt(np.sum(diff**2, axis=-1))


def channel_from_distance(geometry: SystemGeometry, d) -> np.ndarray:
    d = np.asarray(d, dtype=float)
    return geometry.sqrt_eta * np.exp(-2j * np.pi * d / geometry.wavelength) / d


def channel_matrix(geometry: SystemGeometry, ue: UEPlacement, pa_x, k: int, n: int) -> np.ndarray:
    """(M, L) channel between the PAs of waveguide ``n`` and the antennas of UE ``k``."""
    pa_pos = pa_positions_3d(geometry, pa_x)[n]  # (M, 3)
    ant = ue.antenna_positions[k]  # (L, 3)
    d = np.sqrt(np.sum((pa_pos[:, None, :] - ant[None, :, :]) ** 2, axis=-1))
    return channel_from_distance(geometry, d)


def channel_tensor(geometry: SystemGeometry, ue: UEPlacement, pa_x) -> np.ndarray:
    """All channels at once, shape (K, N, M, L)."""
    d = _distances(ue.antenna_positions, pa_positions_3d(geometry, pa_x))
    return channel_from_distance(geometry, d)


def waveguide_phase_vector(geometry: SystemGeometry, pa_x, n: int) -> np.ndarray:
    return waveguide_phases(geometry, pa_x)[n]


def waveguide_phases(geometry: SystemGeometry, pa_x) -> np.ndarray:
    """(N, M) phase responses from each feed point to its PAs."""
    in_guide = np.abs(np.asarray(pa_x, dtype=float) - geometry.feed_x)
    return np.exp(-2j * np.pi * in_guide / geometry.guided_wavelength)


def compute_channels(geometry: SystemGeometry, ue: UEPlacement, pa_x, noise_power: float) -> ChannelSet:
    return ChannelSet(
        H=channel_tensor(geometry, ue, pa_x),
        h=waveguide_phases(geometry, pa_x),
        noise_power_per_pa=float(noise_power),
    )


def effective_gain(h_n, H_kn, w) -> complex:
    """Scalar channel h_n^H H_kn w seen at the feed after pinching and transmit beamforming."""
    h_n, H_kn, w = np.asarray(h_n), np.asarray(H_kn), np.asarray(w)
    if H_kn.ndim != 2 or h_n.shape != (H_kn.shape[0],) or w.shape != (H_kn.shape[1],):
        raise GeometryError(f"shape mismatch: h {h_n.shape}, H {H_kn.shape}, w {w.shape}")
    return complex(np.conj(h_n) @ H_kn @ w)


def gain_matrix(channels: ChannelSet, beams) -> np.ndarray:
    """G[j, n] = h_n^H H_{j,n} w_j for every UE j and waveguide n."""
    beams = np.asarray(beams)
    return np.einsum("nm,jnml,jl->jn", np.conj(channels.h), channels.H, beams)


def sinr_all(channels: ChannelSet, assoc, beams, interference: str = "waveguide") -> np.ndarray:
    """SINR of every UE decoded on its own waveguide.

    ``interference="waveguide"`` counts only co-associated UEs (WDMA); ``"all"``
    counts every other UE's leakage into UE k's waveguide.
    """
    assoc = np.asarray(assoc, dtype=int)
    power = np.abs(gain_matrix(channels, beams)) ** 2  # (K, N)
    K = power.shape[0]
    on_own = power[np.arange(K), assoc]
    # received[j, k]: power of UE j on UE k's waveguide
    received = power[:, assoc]
    if interference == "waveguide":
        received = received * (assoc[:, None] == assoc[None, :])
    elif interference != "all":
        raise ValueError(f"unknown interference model {interference!r}")
    interf = received.sum(axis=0) - on_own
    noise = channels.M * channels.noise_power_per_pa
    return on_own / (np.maximum(interf, 0.0) + noise)


def sinr(channels: ChannelSet, assoc, beams, k: int, interference: str = "waveguide") -> float:
    return float(sinr_all(channels, assoc, beams, interference)[k])


def rate(sinr_value, K: int, B_total: float):
    """Achievable rate in bits/s with the band split evenly over K UEs."""
    return (B_total / K) * np.log2(1.0 + np.asarray(sinr_value, dtype=float))


def mimo_geometry_channels(geometry: SystemGeometry, ue: UEPlacement, noise_power: float) -> ChannelSet:
    """Baseline receiver: one M-element ULA along x at (d_x/2, 0, H), spacing lambda/2.

    Returned as a single-"waveguide" ChannelSet with all-ones combining so the
    same SINR code applies with every UE interfering.
    """
    pos = np.zeros((1, geometry.M, 3))
    pos[0, :, 0] = mimo_array_x(geometry)
    pos[0, :, 2] = geometry.H
    d = _distances(ue.antenna_positions, pos)
    return ChannelSet(
        H=channel_from_distance(geometry, d),
        h=np.ones((1, geometry.M), dtype=complex),
        noise_power_per_pa=float(noise_power),
    )


def mimo_array_x(geometry: SystemGeometry) -> np.ndarray:
    spacing = geometry.wavelength / 2
    return geometry.d_x / 2 + (np.arange(geometry.M) - (geometry.M - 1) / 2) * spacing


def dbm_to_watts(dbm):
    return 10 ** ((np.asarray(dbm, dtype=float) - 30) / 10)
