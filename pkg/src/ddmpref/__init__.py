"""Population-average preference estimation from choices and response times.

Labelers are modeled as drift-diffusion decision makers sharing a common
boundary.  The package provides the closed-form series kernels, boundary
estimators based on the empirical Laplace transform, unbiased and plug-in
drift estimators, a cached inverse-CDF simulator, a CSV data pipeline and
an experiment harness with a command-line interface.
"""

from ._backend import BACKEND

__all__ = ["BACKEND"]
__version__ = "0.1.0"
