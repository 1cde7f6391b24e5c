"""Numerical study of the dissipative KP-Burgers equation.

Modules
-------
spectral     periodic grids, fields and Fourier multipliers
kernels      the kernels K*, K, S and whole-plane profile evaluation
evolution    linear semigroup, ETDRK4 time stepping and run diagnostics
asymptotics  decay fits, expansion checks, profile comparison, certificates
checks       numbered acceptance checks shared by the CLI and the tests
cli          the ``kpb`` command
"""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    ConfigError,
    DivergenceError,
    InsufficientSamples,
    KPBError,
    MissingInput,
    NonPositiveValue,
    QuadratureError,
    UndefinedMargin,
    ZeroModeViolation,
)
from .spectral import Field, SpectralGrid, make_grid  # noqa: F401
