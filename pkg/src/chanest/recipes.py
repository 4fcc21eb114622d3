"""Experiment orchestration shared by the CLI subcommands.

Each recipe reads artifacts (datasets, checkpoints, tune results), runs
the requested estimators over channels drawn per-seed, and writes the CSV
plus a manifest carrying the config hash, seeds and input artifacts.  The
robustness recipe additionally asserts the protocol: hyper-parameters and
weights must come from artifacts trained/tuned on the line-of-sight
preset while evaluation channels come from the scattered preset.
"""

from __future__ import annotations

import concurrent.futures
from pathlib import Path

import numpy as np

from .channels import (PRESETS, ArrayConfig, PilotConfig, gen_channel,
                       gen_pilots, sigma_for_snr)
from .config import RunConfig, n_threads
from .estimators import (load_lambda_table, make_langevin_estimator,
                         make_lasso_estimator)
from .io import (Checkpoint, ExperimentRecord, load_checkpoint,
                 load_tune_result, write_manifest, write_records)
from .linalg import MeasurementOp, awgn, meas_forward, vec
from .linklevel import LinkConfig, run_e2e
from .tuner import nmse

FULL_SCALE_LEVELS = 2311   # 3 steps/level -> 6933-step budget
DESK_SCALE_LEVELS = 500


def _require_file(path, role: str) -> Path:
    if path is None:
        raise FileNotFoundError(f"{role} artifact is not set in the config")
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"{role} artifact missing: expected file at {p}")
    return p


def build_estimators(cfg: RunConfig):
    """Estimator callables for every method named in the config."""
    out = {}
    inputs = {}
    for method in cfg.methods:
        if method == "proposed":
            ckpt_path = _require_file(cfg.checkpoint, "checkpoint")
            tune_path = _require_file(cfg.tune_result, "tune_result")
            ckpt = load_checkpoint(ckpt_path)
            tune, tune_meta = load_tune_result(tune_path)
            if tune.mode not in (cfg.mode, "both"):
                raise ValueError(
                    f"tune result mode {tune.mode!r} does not cover run mode {cfg.mode!r}")
            out[method] = make_langevin_estimator(ckpt, tune=tune, mode=cfg.mode,
                                                  seed=cfg.pilot_seed)
            inputs["checkpoint"] = str(ckpt_path)
            inputs["tune_result"] = str(tune_path)
            inputs["tune_meta"] = tune_meta
        elif method == "lasso":
            lam_path = _require_file(cfg.lambda_table, "lambda_table")
            out[method] = make_lasso_estimator(load_lambda_table(lam_path))
            inputs["lambda_table"] = str(lam_path)
        elif method == "ideal":
            out[method] = "ideal"
    return out, inputs


def _estimate_one(estimator, h, op, spec, seed):
    y = meas_forward(op, h) + awgn(op.dim_out, spec.sigma_n,
                                   np.random.default_rng([seed, int(round(spec.snr_db * 1000))]))
    h_hat = estimator(y, op, spec)
    return float(nmse(h, np.asarray(h_hat)))


def run_sweep(cfg: RunConfig, eval_preset: str | None = None):
    """methods x SNRs x seeds NMSE grid; returns (records, inputs)."""
    preset = PRESETS[eval_preset or cfg.preset]
    estimators, inputs = build_estimators(cfg)
    op = MeasurementOp(gen_pilots(PilotConfig(alpha=cfg.alpha, n_t=cfg.array.n_t,
                                              seed=cfg.pilot_seed)), n_r=cfg.array.n_r)
    h_power = float(cfg.array.n_r * cfg.array.n_t)
    jobs = []
    for method in cfg.methods:
        if method == "ideal":
            continue
        for snr in cfg.snrs_db:
            spec = sigma_for_snr(snr, op, h_power)
            for seed in cfg.seeds:
                jobs.append((method, snr, spec, seed))

    def run_job(job):
        method, snr, spec, seed = job
        h = vec(gen_channel(cfg.array, preset, np.random.default_rng([seed, 0])))
        try:
            value = _estimate_one(estimators[method], h, op, spec, seed)
        except Exception:
            value = float("inf")
        return ExperimentRecord(method=method, alpha=cfg.alpha,
                                spacing=cfg.array.spacing, snr_db=snr,
                                seed=seed, metric="nmse", value=value)

    workers = n_threads()
    if workers > 1:
        with concurrent.futures.ThreadPoolExecutor(workers) as pool:
            records = list(pool.map(run_job, jobs))
    else:
        records = [run_job(j) for j in jobs]
    return records, inputs


def run_link_level(cfg: RunConfig, eval_preset: str | None = None):
    """Coded end-to-end chain for each method; returns (records, inputs)."""
    preset = PRESETS[eval_preset or cfg.preset]
    estimators, inputs = build_estimators(cfg)
    e2e = cfg.e2e
    link = LinkConfig(
        n_streams=int(e2e.get("n_streams", 4)),
        pilot_boost_db=float(e2e.get("pilot_boost_db", 20.0)),
        snr_sweep_db=tuple(float(s) for s in e2e.get("snrs_db", LinkConfig.snr_sweep_db)),
        alpha=cfg.alpha,
        codewords_per_snr=int(e2e.get("codewords_per_snr", 100)),
        codewords_per_trial=int(e2e.get("codewords_per_trial", 4)),
        pilot_seed=cfg.pilot_seed,
    )
    records = []
    for method in cfg.methods:
        result = run_e2e(link, cfg.array, preset, estimators[method],
                         np.random.default_rng([cfg.seeds[0], hash(method) % 2**31]))
        for snr, ber, cwer, erasures in result.as_rows():
            for metric, value in (("coded_ber", ber), ("codeword_error_rate", cwer),
                                  ("erasures", float(erasures))):
                records.append(ExperimentRecord(
                    method=method, alpha=cfg.alpha, spacing=cfg.array.spacing,
                    snr_db=snr, seed=cfg.seeds[0], metric=metric, value=value))
    return records, inputs


def run_recipe(cfg: RunConfig) -> dict:
    """Dispatch on config kind, write CSV + manifest, return manifest dict."""
    out_dir = cfg.resolved_output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{cfg.experiment}.csv"

    if cfg.kind == "sweep":
        records, inputs = run_sweep(cfg)
    elif cfg.kind == "e2e":
        records, inputs = run_link_level(cfg)
    elif cfg.kind == "robustness":
        records, inputs = run_robustness(cfg)
    else:
        raise ValueError(f"unknown recipe kind {cfg.kind!r}")

    write_records(csv_path, records)
    manifest = write_manifest(out_dir / f"{cfg.experiment}.manifest.json",
                              config=cfg.to_dict(), outputs=[csv_path.name],
                              inputs=inputs, seeds=cfg.seeds)
    return manifest


def run_robustness(cfg: RunConfig):
    """Out-of-distribution protocol: LOS-trained artifacts, NLOS channels.

    Runs the sweep in both blind and known modes on the scattered preset;
    never re-tunes on evaluation channels (asserted on the tune artifact's
    recorded metadata).
    """
    from dataclasses import replace

    _, tune_meta = load_tune_result(_require_file(cfg.tune_result, "tune_result"))
    ckpt = load_checkpoint(_require_file(cfg.checkpoint, "checkpoint"))
    trained_on = ckpt.meta.get("preset")
    if trained_on == "nlos":
        raise ValueError("robustness protocol violated: checkpoint was trained on the evaluation preset")

    records = []
    inputs = {}
    for mode in ("blind", "known"):
        sub = replace(cfg, mode=mode)
        recs, inputs = run_sweep(sub, eval_preset="nlos")
        for r in recs:
            records.append(ExperimentRecord(
                method=f"{r.method}-{mode}", alpha=r.alpha, spacing=r.spacing,
                snr_db=r.snr_db, seed=r.seed, metric=r.metric, value=r.value))
    inputs["evaluation_preset"] = "nlos"
    inputs["tuning_preset"] = ckpt.meta.get("preset", "los")
    return records, inputs
