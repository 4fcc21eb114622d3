"""File formats: datasets, model checkpoints, tune results, CSV records.

Datasets and checkpoints are little-endian binary with magic + version;
payload tensors are single precision.  Results are CSV with the fixed
header ``method,alpha,spacing,snr_db,seed,metric,value``; every run also
writes a JSON manifest naming the config hash that produced each output.
"""

from __future__ import annotations

import csv
import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .score import DenoiserNet, make_schedule

DATASET_MAGIC = b"CHES"
CHECKPOINT_MAGIC = b"CHCK"
FORMAT_VERSION = 1
CSV_HEADER = ["method", "alpha", "spacing", "snr_db", "seed", "metric", "value"]

MODEL_IDS = {"los": 0, "nlos": 1, "gaussian": 2, "custom": 3}
MODEL_NAMES = {v: k for k, v in MODEL_IDS.items()}


class FormatError(ValueError):
    """File does not match the declared binary format."""


# ---------------------------------------------------------------------------
# dataset container
# ---------------------------------------------------------------------------

_DS_HEADER = struct.Struct("<4sIIIIfI")


def write_dataset(path, channels: np.ndarray, spacing: float, model_id) -> None:
    """Write (count, n_r, n_t) channels as f32 (re, im) pairs, row-major."""
    channels = np.asarray(channels)
    if channels.ndim != 3:
        raise ValueError("channels must be (count, n_r, n_t)")
    count, n_r, n_t = channels.shape
    if isinstance(model_id, str):
        model_id = MODEL_IDS[model_id]
    payload = np.empty((count, n_r, n_t, 2), dtype="<f4")
    payload[..., 0] = channels.real
    payload[..., 1] = channels.imag
    with open(path, "wb") as f:
        f.write(_DS_HEADER.pack(DATASET_MAGIC, FORMAT_VERSION, count, n_r, n_t,
                                float(spacing), int(model_id)))
        f.write(payload.tobytes())


def read_dataset(path):
    """Read a dataset; returns (channels complex64, meta dict)."""
    raw = Path(path).read_bytes()
    if len(raw) < _DS_HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, count, n_r, n_t, spacing, model_id = _DS_HEADER.unpack_from(raw)
    if magic != DATASET_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    expect = _DS_HEADER.size + count * n_r * n_t * 8
    if len(raw) != expect:
        raise FormatError(f"{path}: payload length {len(raw)} != expected {expect}")
    flat = np.frombuffer(raw, dtype="<f4", offset=_DS_HEADER.size)
    pairs = flat.reshape(count, n_r, n_t, 2)
    channels = (pairs[..., 0] + 1j * pairs[..., 1]).astype(np.complex64)
    meta = {"count": count, "n_r": n_r, "n_t": n_t, "spacing": float(spacing),
            "model_id": int(model_id),
            "model": MODEL_NAMES.get(int(model_id), "unknown")}
    return channels, meta


# ---------------------------------------------------------------------------
# model checkpoint
# ---------------------------------------------------------------------------


@dataclass
class Checkpoint:
    """Trained denoiser plus the data scale it was trained at."""

    net: DenoiserNet
    data_scale: float
    spacing: float
    meta: dict


def save_checkpoint(path, net: DenoiserNet, data_scale: float, spacing: float,
                    extra: dict | None = None) -> None:
    s = net.schedule.sigmas
    header = {
        "version": FORMAT_VERSION,
        "n_r": net.n_r,
        "n_t": net.n_t,
        "hidden": net.HIDDEN,
        "sigma_max": float(s[0]),
        "sigma_min": float(s[-1]),
        "n_levels": int(len(s)),
        "data_scale": float(data_scale),
        "spacing": float(spacing),
        "params": {k: list(v.shape) for k, v in sorted(net.params.items())},
        "extra": extra or {},
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<II", FORMAT_VERSION, len(blob)))
        f.write(blob)
        for k in sorted(net.params):
            f.write(net.params[k].astype("<f4").tobytes())


def load_checkpoint(path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}")
    version, hlen = struct.unpack_from("<II", raw, 4)
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    header = json.loads(raw[12 : 12 + hlen].decode())
    offset = 12 + hlen
    params = {}
    for k, shape in sorted(header["params"].items()):
        n = int(np.prod(shape))
        arr = np.frombuffer(raw, dtype="<f4", count=n, offset=offset)
        params[k] = arr.reshape(shape).astype(np.float64)
        offset += 4 * n
    if offset != len(raw):
        raise FormatError(f"{path}: trailing bytes after weights")
    schedule = make_schedule(header["sigma_max"], header["sigma_min"], header["n_levels"])
    net = DenoiserNet(header["n_r"], header["n_t"], schedule, params=params)
    return Checkpoint(net=net, data_scale=header["data_scale"],
                      spacing=header["spacing"], meta=header.get("extra", {}))


# ---------------------------------------------------------------------------
# tune results
# ---------------------------------------------------------------------------


def save_tune_result(path, result, alpha: float, spacing: float) -> None:
    from .tuner import TuneResult  # local import to avoid cycles

    assert isinstance(result, TuneResult)
    doc = {
        "version": FORMAT_VERSION,
        "mode": result.mode,
        "alpha": alpha,
        "spacing": spacing,
        "betas": list(result.grid.betas),
        "step_checkpoints": list(result.grid.step_checkpoints),
        "snrs_db": list(result.grid.snrs_db),
        "table": result.table.tolist(),
        "blind_pair": list(result.blind_pair) if result.blind_pair else None,
        "known_pairs": {str(k): list(v) for k, v in result.known_pairs.items()},
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True))


def load_tune_result(path):
    from .tuner import TuneGrid, TuneResult

    doc = json.loads(Path(path).read_text())
    grid = TuneGrid(betas=tuple(doc["betas"]),
                    step_checkpoints=tuple(doc["step_checkpoints"]),
                    snrs_db=tuple(doc["snrs_db"]))
    result = TuneResult(mode=doc["mode"], grid=grid,
                        table=np.asarray(doc["table"], dtype=np.float64))
    if doc["blind_pair"]:
        result.blind_pair = (int(doc["blind_pair"][0]), float(doc["blind_pair"][1]))
    result.known_pairs = {float(k): (int(v[0]), float(v[1]))
                          for k, v in doc["known_pairs"].items()}
    return result, {"alpha": doc["alpha"], "spacing": doc["spacing"]}


# ---------------------------------------------------------------------------
# experiment records
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentRecord:
    method: str
    alpha: float
    spacing: float
    snr_db: float
    seed: int
    metric: str
    value: float


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def write_records(path, records) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(CSV_HEADER)
        for r in records:
            w.writerow([r.method, _fmt(r.alpha), _fmt(r.spacing), _fmt(r.snr_db),
                        str(r.seed), r.metric, _fmt(r.value)])


def read_records(path) -> list[ExperimentRecord]:
    out = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if header != CSV_HEADER:
            raise FormatError(f"{path}: unexpected CSV header {header}")
        for row in reader:
            out.append(ExperimentRecord(
                method=row[0], alpha=float(row[1]), spacing=float(row[2]),
                snr_db=float(row[3]), seed=int(row[4]), metric=row[5],
                value=float(row[6])))
    return out


# ---------------------------------------------------------------------------
# manifests
# ---------------------------------------------------------------------------


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def write_manifest(path, config: dict, outputs: list[str],
                   inputs: dict | None = None, seeds=None) -> dict:
    from . import __version__

    doc = {
        "config": config,
        "config_hash": config_hash(config),
        "inputs": inputs or {},
        "outputs": sorted(outputs),
        "package_version": __version__,
        "seeds": list(seeds) if seeds is not None else [],
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True))
    return doc


def read_manifest(path) -> dict:
    return json.loads(Path(path).read_text())
