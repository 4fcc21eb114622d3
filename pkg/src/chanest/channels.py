"""Synthetic clustered-ray MIMO channels, pilots, and the SNR convention.

Two presets emulate a sparse line-of-sight regime (one dominant ray plus a
few weak clusters, Rician K-factor) and a scattered non-line-of-sight
regime (many clusters, wider per-cluster angle spread).  Channels are
normalized so that E[||H||_F^2] = n_r * n_t over realizations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import MeasurementOp, fft2_unitary

SUBRAYS_PER_CLUSTER = 8


@dataclass(frozen=True)
class ArrayConfig:
    """Uniform linear arrays at both ends; spacing in wavelengths."""

    n_r: int = 16
    n_t: int = 64
    spacing: float = 0.5

    def __post_init__(self):
        if self.n_r < 1 or self.n_t < 1:
            raise ValueError("antenna counts must be >= 1")
        if self.spacing <= 0:
            raise ValueError("spacing must be > 0")


@dataclass(frozen=True)
class ClusterProfile:
    """Cluster layout: counts, optional Rician K-factor, spread, gain decay."""

    n_clusters: int
    los_k_factor_db: float | None
    angle_spread_deg: float
    gain_decay_db: float

    def __post_init__(self):
        if self.n_clusters < 1:
            raise ValueError("n_clusters must be >= 1")
        if self.angle_spread_deg < 0:
            raise ValueError("angle_spread_deg must be >= 0")


# Stand-ins for the sparse LOS-like and scattered NLOS-like regimes.
LOS_PRESET = ClusterProfile(
    n_clusters=5, los_k_factor_db=13.0, angle_spread_deg=2.0, gain_decay_db=3.0
)
NLOS_PRESET = ClusterProfile(
    n_clusters=12, los_k_factor_db=None, angle_spread_deg=5.0, gain_decay_db=1.5
)

PRESETS = {"los": LOS_PRESET, "nlos": NLOS_PRESET}


@dataclass(frozen=True)
class PilotConfig:
    """Undersampling ratio alpha fixes n_p = round(alpha * n_t)."""

    alpha: float
    n_t: int
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.alpha:
            raise ValueError("alpha must be > 0")
        if self.n_p < 1 or (self.alpha <= 1.0 and self.n_p > self.n_t):
            raise ValueError(f"invalid pilot count {self.n_p} for n_t={self.n_t}")

    @property
    def n_p(self) -> int:
        return int(round(self.alpha * self.n_t))


@dataclass(frozen=True)
class NoiseSpec:
    """Per-complex-entry measurement noise level and the SNR it realizes."""

    sigma_n: float
    snr_db: float

    def __post_init__(self):
        if self.sigma_n < 0:
            raise ValueError("sigma_n must be >= 0")


def steering_vector(n: int, spacing: float, theta: float) -> np.ndarray:
    """ULA response a_k = exp(j 2 pi spacing k sin(theta)), k = 0..n-1."""
    if n < 1:
        raise ValueError("n must be >= 1")
    k = np.arange(n)
    return np.exp(2j * np.pi * spacing * k * np.sin(theta))


def _cluster_powers(profile: ClusterProfile) -> tuple[float, np.ndarray]:
    """Split unit total power between the LOS ray and decaying clusters."""
    if profile.los_k_factor_db is not None:
        k_lin = 10.0 ** (profile.los_k_factor_db / 10.0)
        p_los = k_lin / (k_lin + 1.0)
        p_scatter = 1.0 / (k_lin + 1.0)
        n_sc = profile.n_clusters - 1
    else:
        p_los = 0.0
        p_scatter = 1.0
        n_sc = profile.n_clusters
    if n_sc == 0:
        return p_los, np.zeros(0)
    decay = 10.0 ** (-profile.gain_decay_db * np.arange(n_sc) / 10.0)
    return p_los, p_scatter * decay / decay.sum()


def gen_channel(array: ArrayConfig, profile: ClusterProfile, rng: np.random.Generator) -> np.ndarray:
    """One channel realization H = sum_rays g a_r(theta_r) a_t(theta_t)^H.

    Ray powers sum to one, so E[||H||_F^2] = n_r * n_t exactly (steering
    entries have unit modulus and ray phases are independent).
    """
    p_los, p_clusters = _cluster_powers(profile)
    spread = np.deg2rad(profile.angle_spread_deg)
    H = np.zeros((array.n_r, array.n_t), dtype=np.complex128)

    def add_ray(amp: complex, th_r: float, th_t: float):
        a_r = steering_vector(array.n_r, array.spacing, th_r)
        a_t = steering_vector(array.n_t, array.spacing, th_t)
        nonlocal H
        H += amp * np.outer(a_r, a_t.conj())

    if p_los > 0.0:
        th_r, th_t = rng.uniform(-np.pi / 2, np.pi / 2, size=2)
        phase = rng.uniform(0.0, 2 * np.pi)
        add_ray(np.sqrt(p_los) * np.exp(1j * phase), th_r, th_t)
    for p_c in p_clusters:
        c_r, c_t = rng.uniform(-np.pi / 2, np.pi / 2, size=2)
        amp = np.sqrt(p_c / SUBRAYS_PER_CLUSTER)
        for _ in range(SUBRAYS_PER_CLUSTER):
            d_r, d_t = rng.standard_normal(2) * spread
            phase = rng.uniform(0.0, 2 * np.pi)
            add_ray(amp * np.exp(1j * phase), c_r + d_r, c_t + d_t)
    return H


def gen_channels(array: ArrayConfig, profile: ClusterProfile, count: int, seed: int) -> np.ndarray:
    """Stack of `count` channels; realization i is a pure function of (seed, i)."""
    out = np.empty((count, array.n_r, array.n_t), dtype=np.complex128)
    for i in range(count):
        out[i] = gen_channel(array, profile, np.random.default_rng([seed, i]))
    return out


_QPSK_POINTS = np.array([1 + 1j, -1 + 1j, -1 - 1j, 1 - 1j]) / np.sqrt(2.0)


def gen_pilots(cfg: PilotConfig) -> np.ndarray:
    """n_t x n_p matrix of unit-power QPSK symbols, deterministic per seed."""
    rng = np.random.default_rng(cfg.seed)
    quadrant = rng.integers(0, 4, size=(cfg.n_t, cfg.n_p))
    return _QPSK_POINTS[quadrant]


def sigma_for_snr(snr_db: float, op: MeasurementOp, h_power: float) -> NoiseSpec:
    """Noise level realizing SNR = E||Ah||^2 / E||n||^2.

    With unit-modulus pilots E||Ah||^2 = n_p * E||h||^2, which reduces the
    level to sigma_n^2 = h_power / (n_r * snr).
    """
    if h_power <= 0:
        raise ValueError("h_power must be > 0")
    snr_lin = 10.0 ** (snr_db / 10.0)
    sigma_sq = h_power * op.n_p / (op.n_p * op.n_r * snr_lin)
    return NoiseSpec(sigma_n=float(np.sqrt(sigma_sq)), snr_db=snr_db)


def dft_domain_entropy(H: np.ndarray) -> float:
    """Shannon entropy of the normalized 2D-DFT power map (sparsity proxy)."""
    p = np.abs(fft2_unitary(H)) ** 2
    p = p / p.sum()
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())
