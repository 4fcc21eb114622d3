"""Compressed-sensing baseline: l1 regularization in the 2D-DFT domain.

Solves  min_u ||y - A F^H u||_2^2 + lambda ||u||_1  by (optionally
accelerated) proximal gradient, where F is the unitary 2D DFT of the
channel matrix, then maps back h = F^H u.  The gradient of the quadratic
term is 2 (AF^H)^H (AF^H u - y), so the fixed step is 1/(2 L) with L the
power-method estimate of ||A||^2 (F is unitary and drops out of L).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channels import sigma_for_snr
from .linalg import (MeasurementOp, awgn, fft2_unitary, ifft2_unitary,
                     meas_adjoint, meas_forward, op_norm_sq, unvec, vec)
from .tuner import nmse, selection_objective


class LassoDivergenceError(RuntimeError):
    """Objective became non-finite."""


@dataclass(frozen=True)
class LassoConfig:
    lam: float = 0.1
    max_iters: int = 300
    tol: float = 1e-7
    accelerated: bool = True

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.tol <= 0:
            raise ValueError("tol must be > 0")


def soft_threshold(u: np.ndarray, tau: float) -> np.ndarray:
    """Complex magnitude shrinkage: phase kept, modulus reduced by tau."""
    if tau < 0:
        raise ValueError("tau must be >= 0")
    mag = np.abs(u)
    scale = np.maximum(0.0, 1.0 - tau / np.maximum(mag, 1e-300))
    return u * scale


def _to_dft(h: np.ndarray, n_r: int, n_t: int) -> np.ndarray:
    return vec(fft2_unitary(unvec(h, n_r, n_t)))


def _from_dft(u: np.ndarray, n_r: int, n_t: int) -> np.ndarray:
    return vec(ifft2_unitary(unvec(u, n_r, n_t)))


def lasso_estimate(y: np.ndarray, op: MeasurementOp, cfg: LassoConfig,
                   lipschitz: float | None = None):
    """Estimate channels from measurements; batched over leading axis.

    Returns (h_hat, objective_trace); the trace has one row per iterate
    (including the start) and one column per chain.
    """
    y = np.asarray(y, dtype=np.complex128)
    squeeze = y.ndim == 1
    if squeeze:
        y = y[None, :]
    n_r, n_t = op.n_r, op.n_t
    L = lipschitz if lipschitz is not None else op_norm_sq(op)
    step = 1.0 / (2.0 * L)

    def grad(u):
        resid = meas_forward(op, _from_dft(u, n_r, n_t)) - y
        return 2.0 * _to_dft(meas_adjoint(op, resid), n_r, n_t)

    def objective(u):
        resid = y - meas_forward(op, _from_dft(u, n_r, n_t))
        return np.sum(np.abs(resid) ** 2, axis=-1) + cfg.lam * np.sum(np.abs(u), axis=-1)

    u = np.zeros((y.shape[0], op.dim_in), dtype=np.complex128)
    v = u.copy()
    t = 1.0
    trace = [objective(u)]
    for _ in range(cfg.max_iters):
        u_next = soft_threshold(v - step * grad(v), step * cfg.lam)
        if cfg.accelerated:
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            v = u_next + ((t - 1.0) / t_next) * (u_next - u)
            t = t_next
        else:
            v = u_next
        u = u_next
        obj = objective(u)
        if not np.all(np.isfinite(obj)):
            raise LassoDivergenceError("objective is non-finite")
        trace.append(obj)
        prev = trace[-2]
        rel = np.abs(prev - obj) / np.maximum(np.abs(prev), 1e-30)
        if np.max(rel) < cfg.tol:
            break
    h_hat = _from_dft(u, n_r, n_t)
    trace = np.asarray(trace)
    return (h_hat[0], trace[:, 0]) if squeeze else (h_hat, trace)


def tune_lambda(channels: np.ndarray, op: MeasurementOp, snrs_db, mode: str,
                seed: int = 0, h_power: float | None = None,
                lam_range: tuple[float, float] = (1e-3, 10.0),
                n_evals: int = 24, max_iters: int = 200):
    """Golden-section search on log-lambda under the shared criterion.

    Known mode returns {snr_db: lambda} minimizing per-SNR error; blind
    mode returns a single lambda maximizing the average log inverse error
    across the SNR list.
    """
    channels = np.asarray(channels, dtype=np.complex128)
    h = vec(channels) if channels.ndim == 3 else channels
    if h.shape[0] == 0:
        raise ValueError("validation set must be non-empty")
    if h_power is None:
        h_power = float(h.shape[1])
    L = op_norm_sq(op)
    snrs_db = [float(s) for s in snrs_db]

    ys, rhos = [], []
    for si, snr in enumerate(snrs_db):
        spec = sigma_for_snr(snr, op, h_power)
        rhos.append(spec.sigma_n**2)
        ys.append(meas_forward(op, h) + awgn((h.shape[0], op.dim_out), spec.sigma_n,
                                             np.random.default_rng([seed, si])))

    def mean_error(lam: float, si: int) -> float:
        cfg = LassoConfig(lam=lam, max_iters=max_iters)
        h_hat, _ = lasso_estimate(ys[si], op, cfg, lipschitz=L)
        return float(np.mean(nmse(h, h_hat)))

    def golden(score_fn):
        """Maximize score_fn over log-lambda by golden-section."""
        lo, hi = np.log(lam_range[0]), np.log(lam_range[1])
        phi = (np.sqrt(5.0) - 1.0) / 2.0
        a, b = lo, hi
        c = b - phi * (b - a)
        d = a + phi * (b - a)
        fc, fd = score_fn(np.exp(c)), score_fn(np.exp(d))
        for _ in range(n_evals - 2):
            if fc > fd:
                b, d, fd = d, c, fc
                c = b - phi * (b - a)
                fc = score_fn(np.exp(c))
            else:
                a, c, fc = c, d, fd
                d = a + phi * (b - a)
                fd = score_fn(np.exp(d))
        return float(np.exp((a + b) / 2.0))

    if mode == "known":
        out = {}
        for si, snr in enumerate(snrs_db):
            out[snr] = golden(lambda lam, si=si: selection_objective([rhos[si]], [mean_error(lam, si)]))
        return out
    if mode == "blind":
        def blind_score(lam):
            errs = [mean_error(lam, si) for si in range(len(snrs_db))]
            return selection_objective(rhos, errs)
        return golden(blind_score)
    raise ValueError(f"mode must be 'blind' or 'known', got {mode!r}")
