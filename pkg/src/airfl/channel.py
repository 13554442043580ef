"""Network geometry, random channel realizations and RIS-combined channels.

Array conventions used across the package::

    direct          (N, Nr)       device k -> BS
    device_to_ris   (N, L, M)     device k -> element m of RIS l
    ris_to_bs       (L, Nr, M)    element m of RIS l -> BS antenna r

Reflection coefficients are stored flat, RIS-major: ``v[l * M + m]``.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from .config import SystemConfig

BS_POSITION = (0.0, 0.0, 25.0)


def rng_stream(seed, name, realization=0):
    """Counter-based generator for one named stream of one realization.

    Streams are independent across ``name`` and ``realization`` so that
    different schemes drawing the same link class see identical values.
    """
    key = (zlib.crc32(name.encode()), int(realization))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=key)))


def complex_normal(rng, shape):
    """Circularly-symmetric CN(0, 1) samples."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


@dataclass(frozen=True)
class Topology:
    device_positions: np.ndarray  # (N, 3)
    ris_positions: np.ndarray     # (L, 3)
    bs_position: np.ndarray       # (3,)


def ring_ris_positions(num_ris, radius=50.0, height=20.0):
    ell = np.arange(1, num_ris + 1)
    ang = 2.0 * np.pi * ell / max(num_ris, 1)
    return np.column_stack([radius * np.cos(ang), radius * np.sin(ang),
                            np.full(num_ris, float(height))]).reshape(num_ris, 3)


def generate_topology(config: SystemConfig, realization=0, ris_positions=None):
    """Devices uniform on the ground square centred under the BS; RIS on a ring around the BS."""
    rng = rng_stream(config.seed, "topology", realization)
    half = config.area_side_m / 2.0
    xy = rng.uniform(-half, half, size=(config.num_devices, 2))
    devices = np.column_stack([xy, np.zeros(config.num_devices)])
    if ris_positions is None:
        ris = ring_ris_positions(config.num_ris, config.ris_radius_m, config.ris_height_m)
    else:
        ris = np.asarray(ris_positions, dtype=float).reshape(-1, 3)
        if len(ris) != config.num_ris:
            raise ValueError(f"{len(ris)} RIS positions given for num_ris={config.num_ris}")
    bs = np.array([0.0, 0.0, config.bs_height_m])
    return Topology(devices, ris, bs)


def path_loss(distance_m, exponent, config=None, ref_db=None):
    """Linear power gain ``10**(ref/10) * d**-exponent`` (reference at 1 m)."""
    if ref_db is None:
        ref_db = config.pathloss_ref_db if config is not None else -30.0
    d = np.asarray(distance_m, dtype=float)
    if np.any(~(d > 0)):
        raise ValueError("path_loss: distance must be > 0")
    out = 10.0 ** (ref_db / 10.0) * d ** (-float(exponent))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ChannelSet:
    direct: np.ndarray         # (N, Nr)
    device_to_ris: np.ndarray  # (N, L, M)
    ris_to_bs: np.ndarray      # (L, Nr, M)

    def __post_init__(self):
        n, nr = self.direct.shape
        if self.device_to_ris.ndim != 3 or self.device_to_ris.shape[0] != n:
            raise ValueError("device_to_ris must have shape (N, L, M)")
        _, L, M = self.device_to_ris.shape
        if self.ris_to_bs.shape != (L, nr, M):
            raise ValueError(f"ris_to_bs must have shape {(L, nr, M)}, got {self.ris_to_bs.shape}")
        for arr in (self.direct, self.device_to_ris, self.ris_to_bs):
            if not np.all(np.isfinite(arr)):
                raise ValueError("channel coefficients must be finite")

    @property
    def num_devices(self):
        return self.direct.shape[0]

    @property
    def bs_antennas(self):
        return self.direct.shape[1]

    @property
    def num_ris(self):
        return self.device_to_ris.shape[1]

    @property
    def elements_per_ris(self):
        return self.device_to_ris.shape[2]

    @property
    def num_elements(self):
        return self.num_ris * self.elements_per_ris

    def cascade(self):
        """(N, Nr, L*M) tensor ``C`` with ``hbar_k = h_k + C_k @ v``."""
        n, nr = self.direct.shape
        c = self.ris_to_bs[None, :, :, :] * self.device_to_ris[:, :, None, :]
        return c.transpose(0, 2, 1, 3).reshape(n, nr, self.num_elements)

    def subset(self, devices):
        idx = np.asarray(devices, dtype=int)
        return ChannelSet(self.direct[idx], self.device_to_ris[idx], self.ris_to_bs)

    def scaled(self, factor):
        """Every end-to-end channel multiplied by ``factor`` (> 0)."""
        return ChannelSet(self.direct * factor, self.device_to_ris * np.sqrt(factor),
                          self.ris_to_bs * np.sqrt(factor))


def sample_channels(topology: Topology, config: SystemConfig, realization=0, tag="ris"):
    """Rayleigh fading times the square root of distance path loss on every link.

    ``tag`` names the RIS-link streams, so deployments with different RIS
    layouts still share the same direct channels for a given seed.
    """
    nr = config.bs_antennas
    dev = topology.device_positions
    ris = topology.ris_positions
    L = len(ris)
    M = config.elements_per_ris
    d_direct = np.linalg.norm(dev - topology.bs_position, axis=1)
    d_dr = np.linalg.norm(dev[:, None, :] - ris[None, :, :], axis=2)
    d_rb = np.linalg.norm(ris - topology.bs_position, axis=1)
    for d in (d_direct, d_dr, d_rb):
        if d.size and np.min(d) <= 0:
            raise ValueError("degenerate geometry: zero link distance")

    pl_direct = path_loss(d_direct, config.alpha_direct, config)
    h = complex_normal(rng_stream(config.seed, "direct", realization), (len(dev), nr))
    h *= np.sqrt(pl_direct)[:, None]

    g = complex_normal(rng_stream(config.seed, f"{tag}/device_to_ris", realization), (len(dev), L, M))
    gb = complex_normal(rng_stream(config.seed, f"{tag}/ris_to_bs", realization), (L, nr, M))
    if L:
        g *= np.sqrt(path_loss(d_dr, config.alpha_ris, config))[:, :, None]
        gb *= np.sqrt(path_loss(d_rb, config.alpha_ris, config))[:, None, None]
    return ChannelSet(h, g, gb)


@dataclass(frozen=True)
class PhaseConfig:
    v: np.ndarray

    @property
    def theta(self):
        return np.mod(np.angle(self.v), 2.0 * np.pi)

    @classmethod
    def from_theta(cls, theta):
        return cls(np.exp(1j * np.asarray(theta, dtype=float)))

    @classmethod
    def random(cls, size, rng):
        return cls.from_theta(rng.uniform(0.0, 2.0 * np.pi, size))


def combined_channel(channels: ChannelSet, phases):
    """Effective channels ``hbar`` of shape (N, Nr): direct plus reflected paths."""
    v = phases.v if isinstance(phases, PhaseConfig) else np.asarray(phases)
    L, M = channels.num_ris, channels.elements_per_ris
    if v.shape != (L * M,):
        raise ValueError(f"expected {L * M} reflection coefficients, got shape {v.shape}")
    if L == 0:
        return channels.direct.copy()
    vl = v.reshape(L, M)
    return channels.direct + np.einsum("lrm,lm,klm->kr", channels.ris_to_bs, vl,
                                       channels.device_to_ris)


def draw_scenario(config: SystemConfig, realization=0):
    """Topology and channels with the default RIS ring layout."""
    topo = generate_topology(config, realization)
    return topo, sample_channels(topo, config, realization)
