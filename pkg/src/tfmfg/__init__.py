"""Time-fractional mean field games on the periodic torus.

Subpackages by concern:

* ``frac_calc``: discrete fractional derivatives/integrals and Mittag-Leffler.
* ``subdiffusion_mc``: Monte Carlo of subordinated diffusions.
* ``fp_solver`` / ``hjb_solver``: forward and backward PDE solvers.
* ``mfg_coupler``: Picard iteration for the coupled system.
* ``variational``: dual functionals, duality gap and optimality probes.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConfigError,
    ContractError,
    DomainError,
    HorizonError,
    NumericalError,
    ShapeError,
    SimulationError,
    TfmfgError,
)
from .grids import SpaceGrid, TimeGrid  # noqa: E402

__all__ = [
    "ConfigError",
    "ContractError",
    "DomainError",
    "HorizonError",
    "NumericalError",
    "ShapeError",
    "SimulationError",
    "SpaceGrid",
    "TfmfgError",
    "TimeGrid",
    "__version__",
]
