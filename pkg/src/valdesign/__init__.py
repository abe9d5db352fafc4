"""Validation designs for GP models built by kernel herding under conditional kernels."""

from .closed_form import SeparableMuCache, build_mu_cache
from .gp import GpModel, fit_theta_loo, ise_hat, ise_reference
from .herding import HerdingConfig, HerdingTrace, herd, run
from .kernels import (ConditionalKernel, IsotropicMatern32, ProductMatern32, ValidationKernel,
                      matern32)
from .measures import (DiscreteMeasure, DiscreteMu, UniformMu, energy, mmd_squared,
                       optimal_weights_free, optimal_weights_sum1, potential)
from .testbed import random_polynomial, sobol_points

__version__ = "0.1.0"

__all__ = [
    "ConditionalKernel", "DiscreteMeasure", "DiscreteMu", "GpModel", "HerdingConfig",
    "HerdingTrace", "IsotropicMatern32", "ProductMatern32", "SeparableMuCache", "UniformMu",
    "ValidationKernel", "build_mu_cache", "energy", "fit_theta_loo", "herd", "ise_hat",
    "ise_reference", "matern32", "mmd_squared", "optimal_weights_free", "optimal_weights_sum1",
    "potential", "random_polynomial", "run", "sobol_points",
]
