"""soefrac: time-fractional differential equation solver via sum-of-exponentials kernels.

The fractional convolution kernel t^(alpha-1)/Gamma(alpha) is compressed into
a short sum of decaying exponentials plus a Dirac term by rationally
approximating its Laplace spectrum (AAA algorithm), which turns the fractional
Cauchy problem into a small system of local ODE modes.  Implicit Euler,
theta and modified Crank-Nicolson steppers integrate that system with
provable order; sample problems (scalar, 1D heat, 2D Cahn-Hilliard) and a
direct Volterra reference solver round out the toolkit.
"""

__version__ = "0.1.0"

from .raprox import aaa_fit
from .specfun import MLParams, gamma_fn, mittag_leffler

__all__ = [
    "MLParams",
    "aaa_fit",
    "gamma_fn",
    "mittag_leffler",
    "__version__",
]
