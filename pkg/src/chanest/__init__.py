"""MIMO channel estimation via annealed Langevin posterior sampling.

Library layout:

* ``linalg``     -- complex kernels, pilot measurement operator, unitary 2D DFT
* ``channels``   -- clustered-ray channel generators, pilots, SNR conventions
* ``score``      -- noise schedules, analytic priors, trainable denoiser, DSM training
* ``sampler``    -- annealed Langevin estimator and Gaussian posterior oracle
* ``tuner``      -- NMSE metric and (steps, beta) selection criterion
* ``lasso``      -- l1-regularized baseline in the 2D-DFT domain
* ``ldpc``       -- rate-1/2 quasi-cyclic code, min-sum decoder
* ``linklevel``  -- coded QPSK/LMMSE end-to-end simulation
* ``estimators`` -- ready-to-plug estimator callables for the link chain
* ``cli``        -- experiment driver (gen-data/train/tune/estimate/sweep/e2e/plot)
"""

__version__ = "0.1.0"

from .linalg import MeasurementOp, awgn, fft2_unitary, ifft2_unitary
from .channels import ArrayConfig, ClusterProfile, PilotConfig, NoiseSpec
from .tuner import nmse

__all__ = [
    "MeasurementOp",
    "awgn",
    "fft2_unitary",
    "ifft2_unitary",
    "ArrayConfig",
    "ClusterProfile",
    "PilotConfig",
    "NoiseSpec",
    "nmse",
    "__version__",
]
