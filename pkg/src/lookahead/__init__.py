"""Critical thresholds, characteristic dynamics and shock detection for
look-ahead nonlocal traffic flow rho_t + (f(rho) exp(-rhobar))_x = 0."""

__version__ = "0.1.0"

from .errors import NumericalError, PreconditionError  # noqa: E402
from .flux import FluxModel, make_family_j, make_lwr, parse_flux  # noqa: E402
from .kernel import KernelSpec, parse_kernel  # noqa: E402

__all__ = [
    "__version__",
    "FluxModel",
    "KernelSpec",
    "NumericalError",
    "PreconditionError",
    "make_family_j",
    "make_lwr",
    "parse_flux",
    "parse_kernel",
]
