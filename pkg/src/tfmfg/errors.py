"""Exception hierarchy shared by all solver modules."""


class TfmfgError(Exception):
    """Base class for every error raised by this package."""


class DomainError(TfmfgError, ValueError):
    """A parameter lies outside the range an operator supports."""


class ShapeError(TfmfgError, ValueError):
    """Array shapes disagree with the grids they are attached to."""


class ConfigError(TfmfgError, ValueError):
    """Invalid run configuration or solver setting."""


class ContractError(TfmfgError, ValueError):
    """A caller-side precondition was violated (e.g. negative density)."""


class NumericalError(TfmfgError, RuntimeError):
    """A solver failed (singular solve, non-convergence, NaN).

    ``step`` carries the time index at which the failure happened, when known.
    """

    def __init__(self, message, step=None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step


class SimulationError(TfmfgError, RuntimeError):
    """Monte Carlo failure tied to a particle and an (external) time."""

    def __init__(self, message, particle=None, time=None):
        detail = []
        if particle is not None:
            detail.append(f"particle {particle}")
        if time is not None:
            detail.append(f"t={time:.6g}")
        super().__init__(message + (f" [{', '.join(detail)}]" if detail else ""))
        self.particle = particle
        self.time = time


class HorizonError(TfmfgError, RuntimeError):
    """Internal-time horizon does not cover the sampled inverse-subordinator values."""
