"""Run configuration: YAML schema, validation, environment overrides.

Schema (all keys except ``experiment`` and ``output_dir`` have defaults):

    experiment: figure2            # free-form run name
    kind: sweep                    # sweep | robustness | e2e
    preset: los                    # los | nlos
    array: {n_r: 16, n_t: 64, spacing: 0.5}
    alpha: 0.4
    snrs_db: [0, 5, 10, 15]
    methods: [proposed, lasso]
    mode: blind                    # blind | known
    seeds: [0, 1, 2]               # one estimation trial per seed
    pilot_seed: 11
    output_dir: runs/figure2
    checkpoint: path/to/model.ckpt       # required by proposed
    tune_result: path/to/tune.json       # required by proposed
    lambda_table: path/to/lassolam.json  # required by lasso
    full_scale: false              # raise budgets to the full-size recipe
    e2e:                           # only for kind: e2e
      snrs_db: [-10, -8, ...]
      codewords_per_snr: 100
      pilot_boost_db: 20.0

Environment overrides: CHANEST_OUTPUT_ROOT prefixes relative output
directories; CHANEST_THREADS caps worker threads.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .channels import PRESETS, ArrayConfig


class ConfigError(ValueError):
    """Invalid run configuration; message names the offending field."""


VALID_METHODS = ("proposed", "lasso", "ideal")
VALID_MODES = ("blind", "known")
VALID_KINDS = ("sweep", "robustness", "e2e")


@dataclass
class RunConfig:
    experiment: str
    output_dir: str
    kind: str = "sweep"
    preset: str = "los"
    array: ArrayConfig = field(default_factory=ArrayConfig)
    alpha: float = 0.4
    snrs_db: tuple = (0.0, 5.0, 10.0, 15.0)
    methods: tuple = ("proposed", "lasso")
    mode: str = "blind"
    seeds: tuple = (0,)
    pilot_seed: int = 11
    checkpoint: str | None = None
    tune_result: str | None = None
    lambda_table: str | None = None
    full_scale: bool = False
    e2e: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "output_dir": self.output_dir,
            "kind": self.kind,
            "preset": self.preset,
            "array": {"n_r": self.array.n_r, "n_t": self.array.n_t,
                      "spacing": self.array.spacing},
            "alpha": self.alpha,
            "snrs_db": list(self.snrs_db),
            "methods": list(self.methods),
            "mode": self.mode,
            "seeds": list(self.seeds),
            "pilot_seed": self.pilot_seed,
            "checkpoint": self.checkpoint,
            "tune_result": self.tune_result,
            "lambda_table": self.lambda_table,
            "full_scale": self.full_scale,
            "e2e": self.e2e,
        }

    @property
    def resolved_output_dir(self) -> Path:
        root = os.environ.get("CHANEST_OUTPUT_ROOT", "")
        p = Path(self.output_dir)
        if root and not p.is_absolute():
            p = Path(root) / p
        return p


def n_threads() -> int:
    try:
        return max(1, int(os.environ.get("CHANEST_THREADS", "1")))
    except ValueError:
        return 1


def _require(doc: dict, key: str):
    if key not in doc:
        raise ConfigError(f"{key}: required field is missing")
    return doc[key]


def parse_config(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config: top level must be a mapping")
    known = {"experiment", "output_dir", "kind", "preset", "array", "alpha",
             "snrs_db", "methods", "mode", "seeds", "pilot_seed", "checkpoint",
             "tune_result", "lambda_table", "full_scale", "e2e"}
    for key in doc:
        if key not in known:
            raise ConfigError(f"{key}: unknown field")
    experiment = str(_require(doc, "experiment"))
    output_dir = str(_require(doc, "output_dir"))
    kind = doc.get("kind", "sweep")
    if kind not in VALID_KINDS:
        raise ConfigError(f"kind: must be one of {VALID_KINDS}, got {kind!r}")
    preset = doc.get("preset", "los")
    if preset not in PRESETS:
        raise ConfigError(f"preset: must be one of {sorted(PRESETS)}, got {preset!r}")
    arr = doc.get("array", {})
    if not isinstance(arr, dict):
        raise ConfigError("array: must be a mapping")
    try:
        array = ArrayConfig(n_r=int(arr.get("n_r", 16)), n_t=int(arr.get("n_t", 64)),
                            spacing=float(arr.get("spacing", 0.5)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"array: {exc}") from exc
    alpha = float(doc.get("alpha", 0.4))
    if not 0 < alpha:
        raise ConfigError(f"alpha: must be > 0, got {alpha}")
    snrs = doc.get("snrs_db", [0.0, 5.0, 10.0, 15.0])
    if not isinstance(snrs, (list, tuple)) or not snrs:
        raise ConfigError("snrs_db: must be a non-empty list")
    methods = tuple(doc.get("methods", ["proposed", "lasso"]))
    for m in methods:
        if m not in VALID_METHODS:
            raise ConfigError(f"methods: unknown method {m!r}")
    mode = doc.get("mode", "blind")
    if mode not in VALID_MODES:
        raise ConfigError(f"mode: must be one of {VALID_MODES}, got {mode!r}")
    seeds = doc.get("seeds", [0])
    if not isinstance(seeds, (list, tuple)) or not seeds:
        raise ConfigError("seeds: must be a non-empty list")
    e2e = doc.get("e2e", {})
    if not isinstance(e2e, dict):
        raise ConfigError("e2e: must be a mapping")
    return RunConfig(
        experiment=experiment, output_dir=output_dir, kind=kind, preset=preset,
        array=array, alpha=alpha, snrs_db=tuple(float(s) for s in snrs),
        methods=methods, mode=mode, seeds=tuple(int(s) for s in seeds),
        pilot_seed=int(doc.get("pilot_seed", 11)),
        checkpoint=doc.get("checkpoint"), tune_result=doc.get("tune_result"),
        lambda_table=doc.get("lambda_table"),
        full_scale=bool(doc.get("full_scale", False)), e2e=e2e,
    )


def load_config(path) -> RunConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config: file not found: {p}")
    with open(p) as f:
        doc = yaml.safe_load(f)
    return parse_config(doc)
