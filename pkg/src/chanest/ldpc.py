"""Rate-1/2 quasi-cyclic LDPC code with a normalized min-sum decoder.

The parity-check matrix is expanded from a shipped base matrix of
circulant shifts (lifting size 27, n = 648, k = 324).  Encoding is
systematic in the first k positions via a precomputed GF(2) solve of the
parity block, so H c = 0 holds by construction for every codeword.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

import numpy as np

_DATA_FILE = "ldpc_648_324_z27.txt"


def _gf2_inv(M: np.ndarray) -> np.ndarray:
    """Invert a square binary matrix over GF(2); raises if singular."""
    n = M.shape[0]
    a = M.astype(np.uint8).copy()
    inv = np.eye(n, dtype=np.uint8)
    for col in range(n):
        pivot = np.nonzero(a[col:, col])[0]
        if len(pivot) == 0:
            raise np.linalg.LinAlgError("matrix is singular over GF(2)")
        p = pivot[0] + col
        if p != col:
            a[[col, p]] = a[[p, col]]
            inv[[col, p]] = inv[[p, col]]
        rows = np.nonzero(a[:, col])[0]
        rows = rows[rows != col]
        a[rows] ^= a[col]
        inv[rows] ^= inv[col]
    return inv


@dataclass(frozen=True)
class LdpcCode:
    """Expanded parity-check matrix plus the systematic encoding map."""

    H: np.ndarray          # (n - k, n) uint8
    encode_map: np.ndarray  # (n - k, k) uint8: parity = encode_map @ info mod 2
    z: int

    @property
    def n(self) -> int:
        return self.H.shape[1]

    @property
    def k(self) -> int:
        return self.n - self.H.shape[0]

    @property
    def rate(self) -> float:
        return self.k / self.n


def _expand_base(base: np.ndarray, z: int) -> np.ndarray:
    rows, cols = base.shape
    H = np.zeros((rows * z, cols * z), dtype=np.uint8)
    eye = np.eye(z, dtype=np.uint8)
    for r in range(rows):
        for c in range(cols):
            s = base[r, c]
            if s >= 0:
                H[r * z:(r + 1) * z, c * z:(c + 1) * z] = np.roll(eye, -int(s) % z, axis=1)
    return H


def load_code(name: str = _DATA_FILE) -> LdpcCode:
    """Load and expand the shipped base matrix; precompute the encoder."""
    text = resources.files("chanest.data").joinpath(name).read_text()
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    z = int(lines[0])
    base = np.array([[int(v) for v in ln.split()] for ln in lines[1:]], dtype=np.int64)
    H = _expand_base(base, z)
    m, n = H.shape
    k = n - m
    parity_block = H[:, k:]
    info_block = H[:, :k]
    encode_map = (_gf2_inv(parity_block) @ info_block) % 2
    return LdpcCode(H=H, encode_map=encode_map.astype(np.uint8), z=z)


_CACHE: dict[str, LdpcCode] = {}


def default_code() -> LdpcCode:
    if _DATA_FILE not in _CACHE:
        _CACHE[_DATA_FILE] = load_code()
    return _CACHE[_DATA_FILE]


def ldpc_encode(info_bits: np.ndarray, code: LdpcCode) -> np.ndarray:
    """Systematic codeword [info | parity] satisfying H c = 0."""
    u = np.asarray(info_bits, dtype=np.uint8)
    if u.shape[-1] != code.k:
        raise ValueError(f"info length {u.shape[-1]} != k={code.k}")
    parity = (u @ code.encode_map.T) % 2
    return np.concatenate([u, parity], axis=-1)


def _check_edges(code: LdpcCode):
    """Padded (check, edge-slot) -> variable index arrays for the decoder."""
    rows, cols = np.nonzero(code.H)
    deg = np.bincount(rows, minlength=code.H.shape[0])
    max_deg = deg.max()
    idx = np.zeros((code.H.shape[0], max_deg), dtype=np.int64)
    mask = np.zeros((code.H.shape[0], max_deg), dtype=bool)
    fill = np.zeros(code.H.shape[0], dtype=np.int64)
    for r, c in zip(rows, cols):
        idx[r, fill[r]] = c
        mask[r, fill[r]] = True
        fill[r] += 1
    return idx, mask


_EDGE_CACHE: dict[int, tuple] = {}


def ldpc_decode(llrs: np.ndarray, code: LdpcCode, max_iter: int = 50,
                norm_factor: float = 0.8):
    """Normalized min-sum decoding; positive LLR means bit 0.

    llrs may be (n,) or (batch, n).  Returns (bits, converged) where
    ``converged`` flags parity satisfaction (early stop).
    """
    llrs = np.asarray(llrs, dtype=np.float64)
    squeeze = llrs.ndim == 1
    if squeeze:
        llrs = llrs[None, :]
    if llrs.shape[-1] != code.n:
        raise ValueError(f"llr length {llrs.shape[-1]} != n={code.n}")
    key = id(code.H)
    if key not in _EDGE_CACHE:
        _EDGE_CACHE[key] = _check_edges(code)
    idx, mask = _EDGE_CACHE[key]
    B = llrs.shape[0]
    m, max_deg = idx.shape

    c2v = np.zeros((B, m, max_deg))
    total = llrs.copy()
    bits = (total < 0).astype(np.uint8)
    converged = np.zeros(B, dtype=bool)

    def parity_ok(b):
        return ~np.any((b @ code.H.T) % 2, axis=-1)

    converged |= parity_ok(bits)
    for _ in range(max_iter):
        if converged.all():
            break
        active = ~converged
        # variable -> check messages
        v2c = total[:, idx] - c2v
        v2c[:, ~mask] = 0.0
        # check -> variable: sign product times normalized second-minimum rule
        sign = np.where(v2c < 0, -1.0, 1.0)
        sign[:, ~mask] = 1.0
        sign_prod = sign.prod(axis=2, keepdims=True)
        mag = np.abs(v2c)
        mag[:, ~mask] = np.inf
        order = np.argsort(mag, axis=2)
        min1 = np.take_along_axis(mag, order[:, :, :1], axis=2)
        min2 = np.take_along_axis(mag, order[:, :, 1:2], axis=2)
        is_min1 = np.arange(max_deg)[None, None, :] == order[:, :, :1]
        other_min = np.where(is_min1, min2, min1)
        new_c2v = norm_factor * sign_prod * sign * other_min
        new_c2v[:, ~mask] = 0.0
        c2v[active] = new_c2v[active]
        # totals and hard decision
        ext = np.zeros_like(total)
        np.add.at(ext, (slice(None), idx.ravel()), c2v.reshape(B, -1))
        total = llrs + ext
        bits = (total < 0).astype(np.uint8)
        converged |= parity_ok(bits)
    if squeeze:
        return bits[0], bool(converged[0])
    return bits, converged
