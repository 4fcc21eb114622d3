"""Plug-in channel estimators with a common (y, op, noise) -> h_hat contract.

The Langevin estimator runs on a preconditioned copy of the problem: the
operator is divided by its spectral norm and measurements by that norm
times the model's training data scale, so one step-size default covers
every pilot geometry and SNR.  Both transformations are undone on the way
out; blind-mode inference never touches sigma_n.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import replace
from pathlib import Path

import numpy as np

from .channels import NoiseSpec
from .io import Checkpoint
from .lasso import LassoConfig, lasso_estimate
from .linalg import MeasurementOp, op_norm_sq
from .sampler import LangevinConfig, langevin_estimate
from .tuner import TuneResult

DEFAULT_EPS = 2e-5


def normalize_problem(y, op: MeasurementOp, noise: NoiseSpec, data_scale: float):
    """Rescale (y, A, sigma_n) to a unit-spectral-norm, unit-data-scale system."""
    root = float(np.sqrt(op_norm_sq(op)))
    op_n = MeasurementOp(np.asarray(op.pilots) / root, op.n_r)
    y_n = np.asarray(y) / (data_scale * root)
    noise_n = NoiseSpec(sigma_n=noise.sigma_n / (data_scale * root), snr_db=noise.snr_db)
    return y_n, op_n, noise_n


def make_langevin_estimator(ckpt: Checkpoint, tune: TuneResult | None = None,
                            mode: str | None = None,
                            n_steps: int | None = None, beta: float = 0.01,
                            eps: float = DEFAULT_EPS, steps_per_level: int = 3,
                            likelihood_weight_mode: str = "unweighted",
                            seed: int = 0):
    """Estimator callable backed by the trained score model.

    If a tune result is given, (n_steps, beta) come from it: the blind
    pair, or the nearest known-SNR pair using noise.snr_db.  RNG streams
    are derived from (seed, call index) so repeated runs reproduce.
    """
    counter = itertools.count()

    def estimate(y, op, noise):
        y_n, op_n, noise_n = normalize_problem(y, op, noise, ckpt.data_scale)
        steps, b = n_steps, beta
        if tune is not None:
            m = mode or tune.mode
            steps, b = tune.pair_for(noise.snr_db if m == "known" else None, mode=m)
        cfg = LangevinConfig(schedule=ckpt.net.schedule, steps_per_level=steps_per_level,
                             beta=b, eps=eps, stop_at=steps,
                             likelihood_weight_mode=likelihood_weight_mode)
        rng = np.random.default_rng([seed, next(counter)])
        h_n, _ = langevin_estimate(y_n, op_n, ckpt.net, noise_n, cfg, rng)
        return h_n * ckpt.data_scale

    return estimate


def save_lambda_table(path, table) -> None:
    """Persist tuned lasso weights: a scalar (blind) or {snr_db: lam}."""
    if isinstance(table, dict):
        doc = {"mode": "known", "lambdas": {str(k): float(v) for k, v in table.items()}}
    else:
        doc = {"mode": "blind", "lambda": float(table)}
    Path(path).write_text(json.dumps(doc, sort_keys=True))


def load_lambda_table(path):
    doc = json.loads(Path(path).read_text())
    if doc["mode"] == "known":
        return {float(k): v for k, v in doc["lambdas"].items()}
    return float(doc["lambda"])


def make_lasso_estimator(lam, max_iters: int = 300):
    """Estimator callable for the l1 baseline; lam may be per-SNR dict."""

    def estimate(y, op, noise):
        value = lam
        if isinstance(lam, dict):
            keys = np.array(sorted(lam))
            value = lam[float(keys[np.argmin(np.abs(keys - noise.snr_db))])]
        cfg = LassoConfig(lam=float(value), max_iters=max_iters)
        h_hat, _ = lasso_estimate(y, op, cfg)
        return h_hat

    return estimate
