"""Gaussian processes whose samples solve linear constant-coefficient PDEs.

The main entry points are re-exported here; the submodules hold the rest.
"""

__version__ = "0.1.0"

from .kernels import KernelHandle, gp_regress
from .linalg import NotPositiveDefinite
from .sepgp import (Dataset, SpectralParams, init_params, make_mc_epgp, nlml, nlml_and_grad,
                    posterior, sample_prior)
from .systems import SYSTEM_NAMES, eval_features, get_system
from .training import Schedule, TrainConfig, train

__all__ = [
    "Dataset",
    "KernelHandle",
    "NotPositiveDefinite",
    "SYSTEM_NAMES",
    "Schedule",
    "SpectralParams",
    "TrainConfig",
    "eval_features",
    "get_system",
    "gp_regress",
    "init_params",
    "make_mc_epgp",
    "nlml",
    "nlml_and_grad",
    "posterior",
    "sample_prior",
    "train",
]
