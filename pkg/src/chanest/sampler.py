"""Annealed Langevin posterior sampling for the pilot measurement model.

Update at schedule level l (step size eta_l = eps * (sigma_l/sigma_L)^2):

    h <- h + eta_l * score(h, l) + eta_l * w_l * A^H (y - A h)
           + sqrt(2 beta eta_l) * zeta,   zeta ~ CN(0, I)

where w_l = 1 in "unweighted" mode (the update as printed in the source
derivation) and w_l = 1/(sigma_n^2 + sigma_l^2) in "noise-normalized"
mode, which makes each level target the exact smoothed posterior and is
what the Gaussian-oracle verification uses.  Chains start at CN(0, I) and
the final iterate is the estimate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channels import NoiseSpec
from .linalg import MeasurementOp, meas_adjoint, meas_forward
from .score import GaussianPrior, NoiseSchedule
from .tuner import nmse

LIKELIHOOD_MODES = ("unweighted", "noise-normalized")


@dataclass(frozen=True)
class LangevinConfig:
    """Sampler settings: schedule, per-level step count, noise scale."""

    schedule: NoiseSchedule
    steps_per_level: int = 3
    beta: float = 0.01
    eps: float = 2e-5
    likelihood_weight_mode: str = "unweighted"
    stop_at: int | None = None
    snapshot_stride: int = 0

    def __post_init__(self):
        if self.steps_per_level < 1:
            raise ValueError("steps_per_level must be >= 1")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must be in [0, 1]")
        if self.eps < 0:
            raise ValueError("eps must be >= 0")
        if self.likelihood_weight_mode not in LIKELIHOOD_MODES:
            raise ValueError(f"unknown likelihood weight mode {self.likelihood_weight_mode!r}")
        if self.stop_at is not None and not 1 <= self.stop_at <= self.n_steps:
            raise ValueError(f"stop_at must be in [1, {self.n_steps}]")

    @property
    def n_steps(self) -> int:
        return self.schedule.n_levels * self.steps_per_level


def step_size(cfg: LangevinConfig, level: int) -> float:
    """eta_l = eps * (sigma_l / sigma_L)^2; equals eps at the last level."""
    s = cfg.schedule
    return cfg.eps * (s.sigma(level) / s.sigma(s.n_levels - 1)) ** 2


@dataclass
class SamplerTrace:
    """Checkpointed residual norms and (optionally) NMSE per chain.

    Checkpoints fall on level boundaries (every steps_per_level steps);
    ``steps`` holds the 1-based count of completed steps at each
    checkpoint.  Arrays have shape (n_checkpoints, n_chains).
    """

    steps: np.ndarray
    residual_norms: np.ndarray
    nmse: np.ndarray | None = None
    snapshots: list = field(default_factory=list)

    def nmse_at(self, step: int) -> np.ndarray:
        """NMSE row at a recorded checkpoint step."""
        if self.nmse is None:
            raise ValueError("trace was recorded without ground truth")
        idx = np.searchsorted(self.steps, step)
        if idx >= len(self.steps) or self.steps[idx] != step:
            raise KeyError(f"step {step} is not a recorded checkpoint")
        return self.nmse[idx]


class SamplerDivergenceError(RuntimeError):
    """Chain left the admissible region; carries the failing step and trace."""

    def __init__(self, step: int, trace: SamplerTrace):
        super().__init__(f"sampler diverged at step {step}")
        self.step = step
        self.trace = trace


def langevin_estimate(y: np.ndarray, op: MeasurementOp, model, noise: NoiseSpec,
                      cfg: LangevinConfig, rng: np.random.Generator,
                      h_true: np.ndarray | None = None):
    """Run annealed Langevin chains; returns (h_hat, trace).

    y may be a single measurement vector or a (batch, m) stack of
    independent measurements; chains are vectorized across the batch.
    """
    y = np.asarray(y, dtype=np.complex128)
    squeeze = y.ndim == 1
    if squeeze:
        y = y[None, :]
        if h_true is not None:
            h_true = np.asarray(h_true, dtype=np.complex128)[None, :]
    if y.shape[-1] != op.dim_out:
        raise ValueError(f"measurement length {y.shape[-1]} != {op.dim_out}")
    B = y.shape[0]
    d = op.dim_in
    sched = cfg.schedule
    norm_guard = 1e3 * np.sqrt(d)
    n_steps = cfg.n_steps if cfg.stop_at is None else cfg.stop_at

    h = (rng.standard_normal((B, d)) + 1j * rng.standard_normal((B, d))) / np.sqrt(2)

    ckpt_steps: list[int] = []
    ckpt_resid: list[np.ndarray] = []
    ckpt_nmse: list[np.ndarray] = []
    snapshots: list = []

    def record(step_count: int):
        ckpt_steps.append(step_count)
        resid = y - meas_forward(op, h)
        ckpt_resid.append(np.linalg.norm(resid, axis=-1))
        if h_true is not None:
            ckpt_nmse.append(nmse(h_true, h))
        if cfg.snapshot_stride and (len(ckpt_steps) - 1) % cfg.snapshot_stride == 0:
            snapshots.append((step_count, h.copy()))

    def build_trace() -> SamplerTrace:
        return SamplerTrace(
            steps=np.asarray(ckpt_steps, dtype=np.int64),
            residual_norms=np.asarray(ckpt_resid),
            nmse=np.asarray(ckpt_nmse) if h_true is not None else None,
            snapshots=snapshots,
        )

    step_count = 0
    done = False
    for level in range(sched.n_levels):
        eta = step_size(cfg, level)
        if cfg.likelihood_weight_mode == "noise-normalized":
            weight = 1.0 / (noise.sigma_n**2 + sched.sigma(level) ** 2)
        else:
            weight = 1.0
        noise_scale = np.sqrt(2.0 * cfg.beta * eta)
        for _ in range(cfg.steps_per_level):
            grad_prior = model.score(h, level)
            grad_lik = meas_adjoint(op, y - meas_forward(op, h))
            zeta = (rng.standard_normal((B, d)) + 1j * rng.standard_normal((B, d))) / np.sqrt(2)
            h = h + eta * grad_prior + eta * weight * grad_lik + noise_scale * zeta
            step_count += 1
            bad = ~np.isfinite(h).all() or bool(np.any(np.linalg.norm(h, axis=-1) > norm_guard))
            if bad:
                raise SamplerDivergenceError(step_count, build_trace())
            if step_count % cfg.steps_per_level == 0 or step_count == n_steps:
                record(step_count)
            if step_count >= n_steps:
                done = True
                break
        if done:
            break

    trace = build_trace()
    return (h[0] if squeeze else h), trace


def gaussian_posterior_oracle(prior: GaussianPrior, op: MeasurementOp,
                              noise: NoiseSpec, y: np.ndarray):
    """Closed-form conjugate-Gaussian posterior mean and variance diagonal.

    h_hat = mu + Sigma A^H (A Sigma A^H + sigma_n^2 I)^{-1} (y - A mu);
    materializes A, so intended for verification-scale problems only.
    """
    from .linalg import meas_materialize

    y = np.asarray(y, dtype=np.complex128)
    A = meas_materialize(op)
    Sigma = prior.materialize_cov()
    G = A @ Sigma @ A.conj().T + noise.sigma_n**2 * np.eye(op.dim_out)
    if noise.sigma_n == 0 and np.linalg.matrix_rank(G) < G.shape[0]:
        raise np.linalg.LinAlgError("singular posterior system at sigma_n = 0")
    resid = y - A @ prior.mean
    h_hat = prior.mean + Sigma @ A.conj().T @ np.linalg.solve(G, resid)
    post_cov = Sigma - Sigma @ A.conj().T @ np.linalg.solve(G, A @ Sigma)
    return h_hat, np.real(np.diag(post_cov))
