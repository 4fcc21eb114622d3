"""Coded end-to-end chain: LDPC -> QPSK streams -> precoding -> channel ->
boosted-pilot channel estimation -> LMMSE equalization -> soft bits -> decode.

The estimator is a plug-in callable (y, op, noise_spec) -> h_hat; "ideal"
bypasses estimation with the true channel.  Measurement SNR seen by the
estimator is the data SNR plus the pilot boost, exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channels import (ArrayConfig, ClusterProfile, NoiseSpec, PilotConfig,
                       gen_channel, gen_pilots, sigma_for_snr)
from .linalg import MeasurementOp, awgn, meas_forward, unvec, vec
from .ldpc import LdpcCode, default_code, ldpc_decode, ldpc_encode

_INV_SQRT2 = 1.0 / np.sqrt(2.0)


def qpsk_map(bits: np.ndarray) -> np.ndarray:
    """Gray map pairs of bits to unit-power QPSK: (0,0) -> (1+1j)/sqrt(2)."""
    b = np.asarray(bits)
    if b.shape[-1] % 2:
        raise ValueError("bit count must be even")
    b = b.reshape(*b.shape[:-1], -1, 2)
    return ((1.0 - 2.0 * b[..., 0]) + 1j * (1.0 - 2.0 * b[..., 1])) * _INV_SQRT2


def qpsk_llr(symbols: np.ndarray, noise_var) -> np.ndarray:
    """Exact per-bit LLRs (positive = bit 0) for effective noise power nu."""
    s = np.asarray(symbols, dtype=np.complex128)
    nu = np.asarray(noise_var, dtype=np.float64)
    if np.any(nu <= 0):
        raise ValueError("noise variance must be > 0")
    scale = 2.0 * np.sqrt(2.0) / nu
    llr = np.stack([scale * s.real, scale * s.imag], axis=-1)
    return llr.reshape(*s.shape[:-1], -1)


def lmmse_equalize(Y: np.ndarray, H_eff: np.ndarray, noise_var: float):
    """Unbiased LMMSE symbol estimates and per-stream effective noise power.

    Y: (n_r, n_uses); H_eff: (n_r, n_streams).  The raw LMMSE output is
    divided by its bias coefficient so QPSK LLR scaling stays consistent;
    the per-stream noise power is (1 - g_k)/g_k with g_k the bias diagonal.
    """
    H = np.asarray(H_eff, dtype=np.complex128)
    n_streams = H.shape[1]
    gram = H.conj().T @ H + noise_var * np.eye(n_streams)
    try:
        W = np.linalg.solve(gram, H.conj().T)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("equalizer system is singular") from exc
    s_raw = W @ Y
    bias = np.real(np.diag(W @ H))
    bias = np.clip(bias, 1e-12, 1.0 - 1e-12)
    s_unbiased = s_raw / bias[:, None]
    stream_noise = (1.0 - bias) / bias
    return s_unbiased, stream_noise


@dataclass(frozen=True)
class LinkConfig:
    """End-to-end simulation settings."""

    n_streams: int = 4
    pilot_boost_db: float = 20.0
    snr_sweep_db: tuple = (-10.0, -8.0, -6.0, -4.0, -2.0, 0.0, 2.0, 4.0)
    alpha: float = 1.0
    codewords_per_snr: int = 100
    codewords_per_trial: int = 4
    decoder_max_iter: int = 50
    pilot_seed: int = 7

    def __post_init__(self):
        if self.n_streams < 1:
            raise ValueError("n_streams must be >= 1")
        if self.codewords_per_trial < 1 or self.codewords_per_snr < 1:
            raise ValueError("codeword counts must be >= 1")


@dataclass
class LinkResult:
    """Per-SNR coded error rates and bookkeeping counts."""

    snrs_db: np.ndarray
    ber: np.ndarray
    cwer: np.ndarray
    bit_counts: np.ndarray
    bit_errors: np.ndarray
    codeword_counts: np.ndarray
    erasures: np.ndarray

    def as_rows(self):
        for i, snr in enumerate(self.snrs_db):
            yield float(snr), float(self.ber[i]), float(self.cwer[i]), int(self.erasures[i])


def run_e2e(link: LinkConfig, array: ArrayConfig, profile: ClusterProfile,
            estimator, rng: np.random.Generator, code: LdpcCode | None = None) -> LinkResult:
    """Simulate the coded chain over the SNR sweep.

    estimator: callable (y, op, noise_spec) -> h_hat, or the string
    "ideal" for perfect channel knowledge.  A trial draws one channel and
    one precoder and carries ``codewords_per_trial`` codewords; estimator
    failures erase the trial's LLRs (counted, never hidden).
    """
    code = code or default_code()
    n_r, n_t = array.n_r, array.n_t
    pilot_cfg = PilotConfig(alpha=link.alpha, n_t=n_t, seed=link.pilot_seed)
    op = MeasurementOp(pilots=gen_pilots(pilot_cfg), n_r=n_r)
    h_power = float(n_r * n_t)
    syms_per_cw = code.n // 2
    if syms_per_cw % link.n_streams:
        raise ValueError("codeword symbols must split evenly across streams")
    uses_per_cw = syms_per_cw // link.n_streams
    n_trials = int(np.ceil(link.codewords_per_snr / link.codewords_per_trial))

    snrs = np.asarray(link.snr_sweep_db, dtype=np.float64)
    bit_errors = np.zeros(len(snrs), dtype=np.int64)
    bit_counts = np.zeros(len(snrs), dtype=np.int64)
    cw_errors = np.zeros(len(snrs), dtype=np.int64)
    cw_counts = np.zeros(len(snrs), dtype=np.int64)
    erasures = np.zeros(len(snrs), dtype=np.int64)

    for si, snr_db in enumerate(snrs):
        data_noise_var = link.n_streams / 10.0 ** (snr_db / 10.0)
        meas_spec = sigma_for_snr(snr_db + link.pilot_boost_db, op, h_power)
        for _ in range(n_trials):
            H = gen_channel(array, profile, rng)
            F = rng.standard_normal((n_t, link.n_streams)) + 1j * rng.standard_normal((n_t, link.n_streams))
            F /= np.linalg.norm(F, axis=0, keepdims=True)

            y_pilot = meas_forward(op, vec(H)) + awgn(op.dim_out, meas_spec.sigma_n, rng)
            if estimator == "ideal":
                H_hat = H
            else:
                try:
                    h_hat = estimator(y_pilot, op, meas_spec)
                    H_hat = unvec(np.asarray(h_hat, dtype=np.complex128), n_r, n_t)
                except Exception:
                    H_hat = None
            H_eff_true = H @ F

            for _ in range(link.codewords_per_trial):
                info = rng.integers(0, 2, size=code.k).astype(np.uint8)
                cw = ldpc_encode(info, code)
                syms = qpsk_map(cw).reshape(link.n_streams, uses_per_cw)
                noise = awgn((n_r, uses_per_cw), np.sqrt(data_noise_var), rng)
                Y = H_eff_true @ syms + noise
                if H_hat is None:
                    llrs = np.zeros(code.n)
                    erasures[si] += 1
                else:
                    s_hat, stream_noise = lmmse_equalize(Y, H_hat @ F, data_noise_var)
                    llrs = qpsk_llr(s_hat, stream_noise[:, None]).reshape(-1)
                bits_hat, _ = ldpc_decode(llrs, code, max_iter=link.decoder_max_iter)
                errs = int(np.sum(bits_hat[: code.k] != info))
                bit_errors[si] += errs
                bit_counts[si] += code.k
                cw_errors[si] += errs > 0
                cw_counts[si] += 1

    return LinkResult(
        snrs_db=snrs,
        ber=bit_errors / np.maximum(bit_counts, 1),
        cwer=cw_errors / np.maximum(cw_counts, 1),
        bit_counts=bit_counts,
        bit_errors=bit_errors,
        codeword_counts=cw_counts,
        erasures=erasures,
    )
