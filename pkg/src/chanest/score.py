"""Score models: analytic priors, a small trainable denoiser, DSM training.

The "score" of a complex vector follows the conjugate-Wirtinger convention
grad = 0.5 * (d/dRe + j d/dIm) log p, which makes the Gaussian score
-(Sigma + sigma^2 I)^{-1} (h - mu) and the denoising regression target
-(added noise)/sigma^2, free of factor-2 bookkeeping.

The trainable model is a 3-layer 3x3 convolutional network over the
real/imag channel pair with an identity skip.  It is unconditional in the
noise level; the raw output regresses the unit-variance noise direction
and is rescaled by 1/sigma at evaluation time.  Forward and backward
passes are hand-written numpy so gradients are exact and finite-difference
checkable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import unvec, vec


@dataclass(frozen=True)
class NoiseSchedule:
    """Strictly decreasing geometric noise levels sigma_1 > ... > sigma_L."""

    sigmas: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.sigmas, dtype=np.float64)
        if s.ndim != 1 or len(s) < 2:
            raise ValueError("schedule needs at least two levels")
        if not np.all(s > 0) or not np.all(np.diff(s) < 0):
            raise ValueError("sigmas must be positive and strictly decreasing")
        ratios = s[1:] / s[:-1]
        if np.max(np.abs(ratios - ratios[0])) > 1e-12:
            raise ValueError("sigmas must form a geometric sequence")
        s = s.copy()
        s.setflags(write=False)
        object.__setattr__(self, "sigmas", s)

    @property
    def n_levels(self) -> int:
        return len(self.sigmas)

    def sigma(self, level: int) -> float:
        if not 0 <= level < self.n_levels:
            raise IndexError(f"level {level} out of range [0, {self.n_levels})")
        return float(self.sigmas[level])


def make_schedule(sigma_max: float, sigma_min: float, n_levels: int) -> NoiseSchedule:
    """Geometric schedule from sigma_max down to sigma_min."""
    if not sigma_max > sigma_min > 0:
        raise ValueError(f"need sigma_max > sigma_min > 0, got {sigma_max}, {sigma_min}")
    if n_levels < 2:
        raise ValueError("n_levels must be >= 2")
    return NoiseSchedule(np.geomspace(sigma_max, sigma_min, n_levels))


def sigma_max_from_data(samples: np.ndarray, subset: int = 500, seed: int = 0) -> float:
    """Largest pairwise Euclidean distance over a subset of training vectors."""
    x = np.asarray(samples)
    x = x.reshape(x.shape[0], -1)
    if x.shape[0] > subset:
        idx = np.random.default_rng(seed).choice(x.shape[0], size=subset, replace=False)
        x = x[idx]
    sq = np.sum(np.abs(x) ** 2, axis=1)
    gram = np.real(x @ x.conj().T)
    d2 = sq[:, None] + sq[None, :] - 2.0 * gram
    return float(np.sqrt(max(d2.max(), 0.0)))


def dsm_target(z: np.ndarray, sigma: float) -> np.ndarray:
    """Closed-form score target -z/sigma^2 for added noise z of std sigma.

    The sigma-scaled regression target fed to the network is
    sigma * (-z/sigma^2) = -z/sigma, i.e. the unit-variance noise direction.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    return -np.asarray(z) / sigma**2


# ---------------------------------------------------------------------------
# analytic priors (verification oracles)
# ---------------------------------------------------------------------------


class GaussianPrior:
    """Circular complex Gaussian CN(mu, Sigma) with exact perturbed scores.

    cov may be a scalar (Sigma = c I), a length-d vector (diagonal), or a
    full Hermitian PSD matrix.
    """

    def __init__(self, mean: np.ndarray, cov, schedule: NoiseSchedule | None = None):
        self.mean = np.asarray(mean, dtype=np.complex128)
        self.dim = self.mean.shape[0]
        self.schedule = schedule
        cov = np.asarray(cov, dtype=np.complex128)
        if cov.ndim == 0:
            if float(np.real(cov)) < 0:
                raise ValueError("scalar covariance must be >= 0")
            self._eigvals = np.full(self.dim, float(np.real(cov)))
            self._eigvecs = None
        elif cov.ndim == 1:
            if np.any(np.real(cov) < 0):
                raise ValueError("diagonal covariance must be >= 0")
            self._eigvals = np.real(cov).astype(np.float64)
            self._eigvecs = None
        else:
            if not np.allclose(cov, cov.conj().T):
                raise ValueError("covariance must be Hermitian")
            w, v = np.linalg.eigh(cov)
            if np.any(w < -1e-10 * max(w.max(), 1.0)):
                raise ValueError("covariance must be PSD")
            self._eigvals = np.clip(w, 0.0, None)
            self._eigvecs = v

    @property
    def cov_eigvals(self) -> np.ndarray:
        return self._eigvals

    def _to_eig(self, x):
        return x if self._eigvecs is None else x @ self._eigvecs.conj()

    def _from_eig(self, x):
        return x if self._eigvecs is None else x @ self._eigvecs.T

    def score_at_sigma(self, h_tilde: np.ndarray, sigma: float) -> np.ndarray:
        """Exact -(Sigma + sigma^2 I)^{-1} (h - mu) at perturbation level sigma."""
        d = np.asarray(h_tilde, dtype=np.complex128) - self.mean
        u = self._to_eig(d)
        u = -u / (self._eigvals + sigma**2)
        return self._from_eig(u)

    def score(self, h_tilde: np.ndarray, level: int) -> np.ndarray:
        return self.score_at_sigma(h_tilde, self.schedule.sigma(level))

    def log_density(self, h: np.ndarray, sigma: float = 0.0) -> float:
        """Exact log density of the sigma-perturbed prior at a single point."""
        lam = self._eigvals + sigma**2
        u = self._to_eig(np.asarray(h, dtype=np.complex128) - self.mean)
        return float(-np.sum(np.abs(u) ** 2 / lam) - np.sum(np.log(np.pi * lam)))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        z = (rng.standard_normal((n, self.dim)) + 1j * rng.standard_normal((n, self.dim))) / np.sqrt(2)
        x = z * np.sqrt(self._eigvals)
        return self.mean + self._from_eig(x)

    def materialize_cov(self) -> np.ndarray:
        if self._eigvecs is None:
            return np.diag(self._eigvals).astype(np.complex128)
        return (self._eigvecs * self._eigvals) @ self._eigvecs.conj().T


class GaussianMixturePrior:
    """Mixture of isotropic complex Gaussians; analytic perturbed score."""

    def __init__(self, weights, means, variances, schedule: NoiseSchedule | None = None):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.means = np.asarray(means, dtype=np.complex128)
        self.variances = np.asarray(variances, dtype=np.float64)
        if not np.isclose(self.weights.sum(), 1.0):
            raise ValueError("mixture weights must sum to 1")
        if np.any(self.variances <= 0):
            raise ValueError("component variances must be > 0")
        self.dim = self.means.shape[1]
        self.schedule = schedule

    def _log_terms(self, h: np.ndarray, sigma: float) -> np.ndarray:
        lam = self.variances + sigma**2
        d2 = np.sum(np.abs(h[None, :] - self.means) ** 2, axis=1)
        return np.log(self.weights) - d2 / lam - self.dim * np.log(np.pi * lam)

    def log_density(self, h: np.ndarray, sigma: float = 0.0) -> float:
        t = self._log_terms(np.asarray(h, dtype=np.complex128), sigma)
        m = t.max()
        return float(m + np.log(np.exp(t - m).sum()))

    def score_at_sigma(self, h_tilde: np.ndarray, sigma: float) -> np.ndarray:
        h = np.asarray(h_tilde, dtype=np.complex128)
        lam = self.variances + sigma**2
        t = self._log_terms(h, sigma)
        r = np.exp(t - t.max())
        r /= r.sum()
        comp = -(h[None, :] - self.means) / lam[:, None]
        return np.sum(r[:, None] * comp, axis=0)

    def score(self, h_tilde: np.ndarray, level: int) -> np.ndarray:
        return self.score_at_sigma(h_tilde, self.schedule.sigma(level))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        comp = rng.choice(len(self.weights), size=n, p=self.weights)
        z = (rng.standard_normal((n, self.dim)) + 1j * rng.standard_normal((n, self.dim))) / np.sqrt(2)
        return self.means[comp] + z * np.sqrt(self.variances[comp])[:, None]


class ZeroScore:
    """Degenerate score model returning zeros; used by sampler diagnostics."""

    def __init__(self, schedule: NoiseSchedule):
        self.schedule = schedule

    def score(self, h_tilde: np.ndarray, level: int) -> np.ndarray:
        self.schedule.sigma(level)
        return np.zeros_like(np.asarray(h_tilde, dtype=np.complex128))


# ---------------------------------------------------------------------------
# trainable denoiser
# ---------------------------------------------------------------------------


def complex_to_channels(h: np.ndarray, n_r: int, n_t: int) -> np.ndarray:
    """(..., d) complex -> (..., n_r, n_t, 2) real channel pair."""
    H = unvec(np.asarray(h, dtype=np.complex128), n_r, n_t)
    return np.stack([H.real, H.imag], axis=-1)


def channels_to_complex(x: np.ndarray) -> np.ndarray:
    """Inverse of :func:`complex_to_channels`."""
    return vec(x[..., 0] + 1j * x[..., 1])


def _pad(x: np.ndarray) -> np.ndarray:
    B, H, W, C = x.shape
    out = np.zeros((B, H + 2, W + 2, C), dtype=x.dtype)
    out[:, 1:-1, 1:-1, :] = x
    return out


def _im2col(x: np.ndarray) -> np.ndarray:
    """(B,H,W,C) -> (B*H*W, 9C) patch matrix; one fat GEMM beats 9 thin ones."""
    B, H, W, C = x.shape
    win = np.lib.stride_tricks.sliding_window_view(_pad(x), (3, 3), axis=(1, 2))
    return np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3)).reshape(B * H * W, 9 * C)


def _conv3x3(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Same-padding 3x3 convolution; x (B,H,W,Ci), w (3,3,Ci,Co)."""
    B, H, W, Ci = x.shape
    out = _im2col(x) @ w.reshape(9 * Ci, -1)
    out += b
    return out.reshape(B, H, W, -1)


def _conv3x3_backward(x: np.ndarray, w: np.ndarray, dout: np.ndarray):
    """Gradients of :func:`_conv3x3` w.r.t. (x, w, b)."""
    B, H, W, Ci = x.shape
    Co = w.shape[-1]
    do = dout.reshape(B * H * W, Co)
    dw = (_im2col(x).T @ do).reshape(3, 3, Ci, Co)
    db = do.sum(axis=0)
    dcols = (do @ w.reshape(9 * Ci, Co).T).reshape(B, H, W, 3, 3, Ci)
    dxp = np.zeros((B, H + 2, W + 2, Ci), dtype=x.dtype)
    for di in range(3):
        for dj in range(3):
            dxp[:, di : di + H, dj : dj + W, :] += dcols[:, :, :, di, dj, :]
    return dxp[:, 1:-1, 1:-1, :], dw, db


def _forward(x: np.ndarray, params: dict, want_cache: bool = False):
    """Conv stack with identity skip; dtype follows x."""
    a1 = _conv3x3(x, params["w1"], params["b1"])
    z1 = np.maximum(a1, 0.0)
    a2 = _conv3x3(z1, params["w2"], params["b2"])
    z2 = np.maximum(a2, 0.0)
    out = _conv3x3(z2, params["w3"], params["b3"]) + x
    if want_cache:
        return out, (x, a1, z1, a2, z2)
    return out


class DenoiserNet:
    """3-layer 3x3 conv residual denoiser over the (real, imag) grid.

    raw(x) = conv3(relu(conv2(relu(conv1(x))))) + x regresses the negated
    unit noise direction; score(h, level) = raw / sigma_level.
    """

    HIDDEN = 32

    def __init__(self, n_r: int, n_t: int, schedule: NoiseSchedule,
                 rng: np.random.Generator | None = None,
                 params: dict[str, np.ndarray] | None = None):
        self.n_r = n_r
        self.n_t = n_t
        self.schedule = schedule
        if params is not None:
            self.params = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
        else:
            rng = rng if rng is not None else np.random.default_rng(0)
            h = self.HIDDEN
            # Zero-init output conv: the net starts as the identity skip,
            # which keeps the first optimization steps well-scaled.
            self.params = {
                "w1": rng.standard_normal((3, 3, 2, h)) * np.sqrt(2.0 / (9 * 2)),
                "b1": np.zeros(h),
                "w2": rng.standard_normal((3, 3, h, h)) * np.sqrt(2.0 / (9 * h)),
                "b2": np.zeros(h),
                "w3": np.zeros((3, 3, h, 2)),
                "b3": np.zeros(2),
            }

    @property
    def n_params(self) -> int:
        return sum(v.size for v in self.params.values())

    def raw(self, x: np.ndarray, want_cache: bool = False):
        """Network output before the 1/sigma rescaling; x (B,H,W,2)."""
        return _forward(x, self.params, want_cache=want_cache)

    def _backward(self, cache, dout: np.ndarray) -> dict[str, np.ndarray]:
        x, a1, z1, a2, z2 = cache
        p = self.params
        dz2, dw3, db3 = _conv3x3_backward(z2, p["w3"], dout)
        da2 = dz2 * (a2 > 0)
        dz1, dw2, db2 = _conv3x3_backward(z1, p["w2"], da2)
        da1 = dz1 * (a1 > 0)
        _, dw1, db1 = _conv3x3_backward(x, p["w1"], da1)
        return {"w1": dw1, "b1": db1, "w2": dw2, "b2": db2, "w3": dw3, "b3": db3}

    def loss_and_grads(self, h_batch: np.ndarray, sigmas: np.ndarray, z_batch: np.ndarray):
        """Mean over the batch of ||raw(h + sigma z) + z||^2 and its exact gradient.

        z_batch holds unit-variance complex noise; the added noise is
        sigma * z, so the sigma-scaled regression target is -z.
        """
        B = h_batch.shape[0]
        h_noisy = h_batch + sigmas[:, None] * z_batch
        x = complex_to_channels(h_noisy, self.n_r, self.n_t)
        target = -complex_to_channels(z_batch, self.n_r, self.n_t)
        out, cache = self.raw(x, want_cache=True)
        resid = out - target
        loss = float(np.sum(resid**2) / B)
        grads = self._backward(cache, 2.0 * resid / B)
        return loss, grads

    def score(self, h_tilde: np.ndarray, level: int) -> np.ndarray:
        """Raw output divided by sigma_level (noise conditioning by rescaling)."""
        sigma = self.schedule.sigma(level)
        h = np.asarray(h_tilde, dtype=np.complex128)
        squeeze = h.ndim == 1
        if squeeze:
            h = h[None, :]
        x = complex_to_channels(h, self.n_r, self.n_t)
        out = channels_to_complex(self.raw(x)) / sigma
        return out[0] if squeeze else out


def dsm_loss(net: DenoiserNet, h: np.ndarray, sigma_level: int, rng: np.random.Generator):
    """Single-sample denoising loss at one schedule level, with gradients."""
    sigma = net.schedule.sigma(sigma_level)
    d = net.n_r * net.n_t
    z = (rng.standard_normal(d) + 1j * rng.standard_normal(d)) / np.sqrt(2)
    return net.loss_and_grads(np.asarray(h)[None, :], np.array([sigma]), z[None, :])


@dataclass
class TrainConfig:
    """Plain SGD-with-momentum settings for denoiser training."""

    batch_size: int = 32
    lr: float = 2e-5
    momentum: float = 0.9
    decay_frac: float = 0.7
    decay_factor: float = 0.1


def train_score(dataset: np.ndarray, schedule: NoiseSchedule, epochs: int,
                opt: TrainConfig | None = None,
                rng: np.random.Generator | None = None) -> tuple[DenoiserNet, np.ndarray]:
    """Train the denoiser by noise-level-randomized score matching.

    dataset: (n, n_r, n_t) complex channel realizations.  Each sample in a
    mini-batch gets an independently drawn schedule level.  Returns the
    trained net and the per-step loss trace.
    """
    data = np.asarray(dataset, dtype=np.complex128)
    if data.ndim != 3 or data.shape[0] == 0:
        raise ValueError("dataset must be a non-empty (n, n_r, n_t) stack")
    if schedule.n_levels < 2:
        raise ValueError("schedule must have at least two levels")
    opt = opt or TrainConfig()
    rng = rng if rng is not None else np.random.default_rng(0)
    n, n_r, n_t = data.shape
    flat = vec(data)
    net = DenoiserNet(n_r, n_t, schedule, rng=rng)
    velocity = {k: np.zeros_like(v) for k, v in net.params.items()}
    steps_per_epoch = max(1, n // opt.batch_size)
    total_steps = epochs * steps_per_epoch
    decay_at = int(opt.decay_frac * total_steps)
    losses = np.empty(total_steps)
    step = 0
    for _ in range(epochs):
        order = rng.permutation(n)
        for b in range(steps_per_epoch):
            idx = order[b * opt.batch_size : (b + 1) * opt.batch_size]
            batch = flat[idx]
            levels = rng.integers(0, schedule.n_levels, size=len(idx))
            sigmas = schedule.sigmas[levels]
            z = (rng.standard_normal(batch.shape) + 1j * rng.standard_normal(batch.shape)) / np.sqrt(2)
            loss, grads = net.loss_and_grads(batch, sigmas, z)
            lr = opt.lr * (opt.decay_factor if step >= decay_at else 1.0)
            for k in net.params:
                velocity[k] = opt.momentum * velocity[k] - lr * grads[k]
                net.params[k] += velocity[k]
            losses[step] = loss
            step += 1
    return net, losses


def score_eval(model, h_tilde: np.ndarray, level: int) -> np.ndarray:
    """Evaluate any score model at a schedule level, with shape checks."""
    out = model.score(h_tilde, level)
    if np.asarray(out).shape != np.asarray(h_tilde).shape:
        raise ValueError("score model changed the input shape")
    return out
