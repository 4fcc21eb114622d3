"""NMSE metric and hyper-parameter selection for the Langevin estimator.

The selection criterion is the average log ratio of validation noise
power to achieved error, maximized jointly over the stopping step and the
injected-noise factor beta.  One sampler run per (beta, SNR, channel)
provides the error at every stopping checkpoint through its trace, so the
step search costs nothing extra.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channels import NoiseSpec, sigma_for_snr
from .linalg import MeasurementOp, awgn, meas_forward, vec


def nmse(h_true: np.ndarray, h_hat: np.ndarray):
    """||h_true - h_hat||^2 / ||h_true||^2 along the last axis."""
    h_true = np.asarray(h_true)
    h_hat = np.asarray(h_hat)
    if h_true.shape[-1] != h_hat.shape[-1]:
        raise ValueError("shape mismatch between truth and estimate")
    denom = np.sum(np.abs(h_true) ** 2, axis=-1)
    if np.any(denom == 0):
        raise ValueError("ground truth must be nonzero")
    err = np.sum(np.abs(h_true - h_hat) ** 2, axis=-1)
    out = err / denom
    return float(out) if out.ndim == 0 else out


def nmse_db(value) -> float:
    return 10.0 * np.log10(value)


def selection_objective(noise_powers, errors) -> float:
    """(1/K) sum_i [log rho_i - log n_i]: log-scale average inverse error."""
    rho = np.asarray(noise_powers, dtype=np.float64)
    n = np.asarray(errors, dtype=np.float64)
    if rho.shape != n.shape:
        raise ValueError("noise_powers and errors must have equal length")
    if np.any(rho <= 0) or np.any(n <= 0):
        raise ValueError("noise powers and errors must be > 0")
    return float(np.mean(np.log(rho) - np.log(n)))


@dataclass(frozen=True)
class TuneGrid:
    """Search space: beta values, stopping checkpoints, validation SNRs."""

    betas: tuple = (1.0, 0.1, 0.01, 0.001)
    step_checkpoints: tuple = ()
    snrs_db: tuple = (-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)

    def __post_init__(self):
        if len(self.betas) == 0 or len(self.snrs_db) == 0:
            raise ValueError("betas and snrs_db must be non-empty")
        ck = tuple(int(c) for c in self.step_checkpoints)
        if ck and any(b <= a for a, b in zip(ck, ck[1:])):
            raise ValueError("step_checkpoints must be ascending")
        object.__setattr__(self, "step_checkpoints", ck)
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        object.__setattr__(self, "snrs_db", tuple(float(s) for s in self.snrs_db))


@dataclass
class TuneResult:
    """Selected (n_steps, beta) pairs plus the full objective table.

    ``table`` has shape (n_snrs, n_betas, n_checkpoints) holding mean
    validation NMSE; +inf marks divergent cells.  Known-SNR mode stores
    one pair per SNR; blind mode a single pair; "both" stores both.
    """

    mode: str
    grid: TuneGrid
    table: np.ndarray
    blind_pair: tuple[int, float] | None = None
    known_pairs: dict[float, tuple[int, float]] = field(default_factory=dict)

    def pair_for(self, snr_db: float | None = None,
                 mode: str | None = None) -> tuple[int, float]:
        """(n_steps, beta) to use at an operating SNR (nearest known key)."""
        mode = mode or self.mode
        if mode == "blind":
            if self.blind_pair is None:
                raise ValueError("no blind pair stored in this tune result")
            return self.blind_pair
        if snr_db is None:
            raise ValueError("known-snr mode needs an operating SNR")
        if not self.known_pairs:
            raise ValueError("no known-SNR pairs stored in this tune result")
        keys = np.array(sorted(self.known_pairs))
        key = float(keys[np.argmin(np.abs(keys - snr_db))])
        return self.known_pairs[key]


def _argmax_pair(objective_nb: np.ndarray, grid: TuneGrid) -> tuple[int, float]:
    """Best (n_steps, beta); ties go to smaller N, then larger beta."""
    best = None
    best_val = -np.inf
    for ci, n_step in enumerate(grid.step_checkpoints):
        for bi, beta in enumerate(grid.betas):
            val = objective_nb[bi, ci]
            better = val > best_val
            tie = val == best_val and best is not None and (
                n_step < best[0] or (n_step == best[0] and beta > best[1])
            )
            if better or tie:
                best_val = val
                best = (int(n_step), float(beta))
    if best is None or not np.isfinite(best_val):
        raise RuntimeError("tuning objective has no finite cell")
    return best


def select_pairs(table: np.ndarray, grid: TuneGrid, rhos: np.ndarray, mode: str) -> TuneResult:
    """Turn an error table into selected pairs under the stated criterion."""
    if mode not in ("blind", "known", "both"):
        raise ValueError(f"mode must be 'blind', 'known' or 'both', got {mode!r}")
    with np.errstate(divide="ignore"):
        log_n = np.log(table)
    result = TuneResult(mode=mode, grid=grid, table=table)
    if mode in ("blind", "both"):
        objective = np.mean(np.log(rhos)[:, None, None] - log_n, axis=0)
        result.blind_pair = _argmax_pair(objective, grid)
    if mode in ("known", "both"):
        for si, snr in enumerate(grid.snrs_db):
            objective = np.log(rhos[si]) - log_n[si]
            result.known_pairs[float(snr)] = _argmax_pair(objective, grid)
    return result


def tune_table(channels: np.ndarray, op: MeasurementOp, grid: TuneGrid,
               sampler_cfg, model, seed: int = 0, h_power: float | None = None,
               data_scale: float = 1.0, normalize_op: bool = False):
    """Mean validation NMSE for every (SNR, beta, checkpoint) cell.

    Channels and measurement noise are fixed per (channel, SNR) across
    beta cells, so cell comparisons are paired.  Divergent chains
    contribute +inf from the failing step onward.  With ``normalize_op``
    the sampler sees the spectrally-normalized system (measurements,
    operator, noise level all divided by ||A||; channels by data_scale),
    matching the deployment-time estimator; NMSE and the noise powers rho
    are reported on the physical problem either way.
    """
    from .sampler import SamplerDivergenceError, langevin_estimate
    from .linalg import op_norm_sq
    from dataclasses import replace

    channels = np.asarray(channels, dtype=np.complex128)
    h = vec(channels) if channels.ndim == 3 else channels
    n_ch, d = h.shape
    if n_ch == 0:
        raise ValueError("validation set must be non-empty")
    if h_power is None:
        h_power = float(d)
    checkpoints = grid.step_checkpoints or tuple(
        range(sampler_cfg.steps_per_level, sampler_cfg.n_steps + 1, sampler_cfg.steps_per_level)
    )
    grid = TuneGrid(betas=grid.betas, step_checkpoints=checkpoints, snrs_db=grid.snrs_db)

    root = float(np.sqrt(op_norm_sq(op))) if normalize_op else 1.0
    op_run = MeasurementOp(np.asarray(op.pilots) / root, op.n_r) if normalize_op else op
    divide = data_scale * root
    h_run = h / data_scale

    table = np.full((len(grid.snrs_db), len(grid.betas), len(checkpoints)), np.inf)
    rhos = np.empty(len(grid.snrs_db))
    ck = np.asarray(checkpoints)
    for si, snr in enumerate(grid.snrs_db):
        spec = sigma_for_snr(snr, op, h_power)
        rhos[si] = spec.sigma_n**2
        y = meas_forward(op, h) + awgn((n_ch, op.dim_out), spec.sigma_n,
                                       np.random.default_rng([seed, si]))
        y_run = y / divide
        spec_run = NoiseSpec(sigma_n=spec.sigma_n / divide, snr_db=snr)
        for bi, beta in enumerate(grid.betas):
            cfg = replace(sampler_cfg, beta=beta, stop_at=None)
            rng = np.random.default_rng([seed, si, bi])
            try:
                _, trace = langevin_estimate(y_run, op_run, model, spec_run, cfg, rng,
                                             h_true=h_run)
            except SamplerDivergenceError as exc:
                trace = exc.trace
            if trace.nmse is not None and len(trace.steps):
                mean_nmse = trace.nmse.mean(axis=1)
                idx = np.searchsorted(trace.steps, ck)
                valid = (idx < len(trace.steps))
                sel = np.where(valid, np.minimum(idx, len(trace.steps) - 1), 0)
                cell = np.where(valid & (trace.steps[sel] == ck), mean_nmse[sel], np.inf)
                table[si, bi] = cell
    return table, rhos, grid


def tune(channels: np.ndarray, op: MeasurementOp, grid: TuneGrid, sampler_cfg,
         model, mode: str, seed: int = 0, h_power: float | None = None,
         data_scale: float = 1.0, normalize_op: bool = False) -> TuneResult:
    """Run the validation sweep and select pairs for one mode."""
    table, rhos, grid = tune_table(channels, op, grid, sampler_cfg, model,
                                   seed=seed, h_power=h_power,
                                   data_scale=data_scale, normalize_op=normalize_op)
    return select_pairs(table, grid, rhos, mode)
