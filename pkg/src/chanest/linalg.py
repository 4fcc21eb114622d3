"""Complex matrix kernels and the pilot measurement operator.

The channel matrix H (n_r x n_t) is flattened column-major, so that
vec(H @ P) = (P^T kron I_{n_r}) vec(H).  All operator applications are
matrix-free; the explicit Kronecker matrix exists only as a small-size
test oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ShapeError(ValueError):
    """Operand shape does not match the operator."""


class SizeGuardError(ValueError):
    """Refused to materialize an operator above the size guard."""


MATERIALIZE_LIMIT = 4096


def vec(H: np.ndarray) -> np.ndarray:
    """Column-major flattening of a matrix (batch dims lead)."""
    H = np.asarray(H)
    if H.ndim < 2:
        raise ShapeError(f"expected a matrix, got ndim={H.ndim}")
    return np.swapaxes(H, -1, -2).reshape(*H.shape[:-2], H.shape[-1] * H.shape[-2])


def unvec(h: np.ndarray, n_r: int, n_t: int) -> np.ndarray:
    """Inverse of :func:`vec`: reshape a flat vector to n_r x n_t."""
    h = np.asarray(h)
    if h.shape[-1] != n_r * n_t:
        raise ShapeError(f"vector length {h.shape[-1]} != {n_r}*{n_t}")
    return np.swapaxes(h.reshape(*h.shape[:-1], n_t, n_r), -1, -2)


@dataclass(frozen=True)
class MeasurementOp:
    """Pilot measurement operator y = vec(H P) for pilots P (n_t x n_p).

    Equivalent to the consolidated matrix P^T kron I_{n_r} acting on
    vec(H).  Immutable; safe to share across worker threads.
    """

    pilots: np.ndarray
    n_r: int

    def __post_init__(self):
        P = np.asarray(self.pilots, dtype=np.complex128)
        if P.ndim != 2:
            raise ShapeError(f"pilots must be a matrix, got ndim={P.ndim}")
        if not np.all(np.isfinite(P)):
            raise ValueError("pilots contain non-finite entries")
        if self.n_r < 1:
            raise ValueError("n_r must be >= 1")
        P = P.copy()
        P.setflags(write=False)
        object.__setattr__(self, "pilots", P)

    @property
    def n_t(self) -> int:
        return self.pilots.shape[0]

    @property
    def n_p(self) -> int:
        return self.pilots.shape[1]

    @property
    def dim_in(self) -> int:
        return self.n_t * self.n_r

    @property
    def dim_out(self) -> int:
        return self.n_p * self.n_r

    def forward(self, h: np.ndarray) -> np.ndarray:
        return meas_forward(self, h)

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        return meas_adjoint(self, y)


def meas_forward(op: MeasurementOp, h: np.ndarray) -> np.ndarray:
    """Apply y = vec(H P) to a flattened channel (leading batch dims ok)."""
    h = np.asarray(h, dtype=np.complex128)
    if h.shape[-1] != op.dim_in:
        raise ShapeError(f"channel vector length {h.shape[-1]} != {op.dim_in}")
    H = unvec(h, op.n_r, op.n_t)
    return vec(H @ op.pilots)


def meas_adjoint(op: MeasurementOp, y: np.ndarray) -> np.ndarray:
    """Apply the adjoint A^H y = vec(Y P^H) (leading batch dims ok)."""
    y = np.asarray(y, dtype=np.complex128)
    if y.shape[-1] != op.dim_out:
        raise ShapeError(f"measurement vector length {y.shape[-1]} != {op.dim_out}")
    Y = unvec(y, op.n_r, op.n_p)
    return vec(Y @ op.pilots.conj().T)


def meas_materialize(op: MeasurementOp) -> np.ndarray:
    """Explicit (n_p n_r) x (n_t n_r) matrix; test oracle for small sizes."""
    if op.dim_in > MATERIALIZE_LIMIT:
        raise SizeGuardError(
            f"refusing to materialize operator with input dim {op.dim_in} > {MATERIALIZE_LIMIT}"
        )
    return np.kron(op.pilots.T, np.eye(op.n_r, dtype=np.complex128))


def fft2_unitary(M: np.ndarray) -> np.ndarray:
    """Unitary 2D DFT over the trailing two axes."""
    return np.fft.fft2(np.asarray(M, dtype=np.complex128), axes=(-2, -1), norm="ortho")


def ifft2_unitary(M: np.ndarray) -> np.ndarray:
    """Inverse of :func:`fft2_unitary`."""
    return np.fft.ifft2(np.asarray(M, dtype=np.complex128), axes=(-2, -1), norm="ortho")


def awgn(shape, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Circularly-symmetric complex Gaussian noise, per-entry variance sigma^2."""
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    z = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return z * (sigma / np.sqrt(2.0))


def op_norm_sq(op: MeasurementOp, n_iter: int = 50, seed: int = 0) -> float:
    """Largest eigenvalue of A^H A by power iteration (>= n_p, spec of A's columns)."""
    rng = np.random.default_rng(seed)
    x = awgn(op.dim_in, 1.0, rng)
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(n_iter):
        z = meas_adjoint(op, meas_forward(op, x))
        lam = float(np.real(np.vdot(x, z)))
        nz = np.linalg.norm(z)
        if nz == 0.0:
            return 0.0
        x = z / nz
    return lam
