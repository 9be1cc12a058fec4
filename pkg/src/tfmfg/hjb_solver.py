"""Backward time-fractional HJB solver with Hamiltonian ``H(p) = |p|^2 / 2``.

In reversed time ``s = T - t`` the value ``U(s) = u(T - s)`` solves the Caputo
problem

    d^beta_s U - Delta U + |grad U|^2 / 2 = I^{1-beta}_s g,   U(0) = u_T,

with ``g(s) = f(x, m(T - s))``.  Each step uses the L1 Caputo weights, treats
diffusion implicitly (one sparse factorization of ``c0 I - Delta_h`` per solve)
and resolves the Hamiltonian by a lagged-gradient fixed point.  ``beta = 1`` is
backward Euler for ``-d_t u - Delta u + |grad u|^2 / 2 = g``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ContractError, NumericalError, ShapeError
from .frac_calc import check_beta, frac_integral_forward, l1_weights
from .grids import SpaceGrid, TimeGrid, gradient, laplacian_matrix, sq_norm

__all__ = [
    "ValueField",
    "SourceField",
    "solve_fractional_hjb",
    "classical_hjb_solve",
    "gradient",
]


@dataclass(frozen=True)
class ValueField:
    """Value function ``values[n, ...]`` at forward time node ``n``."""

    values: np.ndarray
    tgrid: TimeGrid
    sgrid: SpaceGrid
    beta: float
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.values.shape != (len(self.tgrid), *self.sgrid.shape):
            raise ShapeError(f"value shape {self.values.shape} does not match the grids")


@dataclass(frozen=True)
class SourceField:
    """Running cost ``g[n, ...] = f(x, m(t_n, x))`` on forward time nodes."""

    values: np.ndarray
    tgrid: TimeGrid
    sgrid: SpaceGrid

    def __post_init__(self):
        if self.values.shape != (len(self.tgrid), *self.sgrid.shape):
            raise ShapeError(f"source shape {self.values.shape} does not match the grids")
        if not np.all(np.isfinite(self.values)):
            raise ContractError("source contains non-finite values")

    @classmethod
    def zeros(cls, tgrid: TimeGrid, sgrid: SpaceGrid) -> "SourceField":
        return cls(np.zeros((len(tgrid), *sgrid.shape)), tgrid, sgrid)


def _as_source(source, tgrid, sgrid) -> np.ndarray:
    if source is None:
        return np.zeros((len(tgrid), *sgrid.shape))
    if isinstance(source, SourceField):
        return source.values
    return SourceField(np.asarray(source, dtype=float), tgrid, sgrid).values


def solve_fractional_hjb(u_T, source, beta, tgrid: TimeGrid, sgrid: SpaceGrid,
                         tol: float = 1e-10, max_sweeps: int = 50) -> ValueField:
    """Solve backward from ``u(T) = u_T``; ``source`` may be ``None`` (zero cost).

    The inner fixed point stops when successive iterates differ by at most
    ``tol`` in the sup norm.
    """
    beta = check_beta(beta)
    u_T = sgrid.check_scalar(u_T, "u_T", leading=0)
    if not np.all(np.isfinite(u_T)):
        raise ContractError("u_T contains non-finite values")
    g_rev = _as_source(source, tgrid, sgrid)[::-1].reshape(len(tgrid), -1)
    N, dt = tgrid.n_steps, tgrid.dt
    if beta == 1.0:
        rhs_source = g_rev
        c0, a = 1.0 / dt, None
    else:
        rhs_source = frac_integral_forward(g_rev, 1.0 - beta, tgrid)
        c0 = 1.0 / (math.gamma(2.0 - beta) * dt**beta)
        a = l1_weights(beta, N).weights
    lu = spla.splu((c0 * sp.identity(sgrid.size, format="csc") - laplacian_matrix(sgrid)).tocsc())

    U = np.empty((N + 1, sgrid.size))
    U[0] = u_T.ravel()
    du = np.empty((N, sgrid.size))
    sweeps = np.zeros(N, dtype=int)
    for K in range(1, N + 1):
        base = c0 * U[K - 1] + rhs_source[K]
        if a is not None and K > 1:
            base -= c0 * (a[1:K] @ du[K - 2 :: -1])
        u = U[K - 1]
        for sweep in range(1, max_sweeps + 1):
            ham = 0.5 * sq_norm(gradient(u.reshape(sgrid.shape), sgrid), sgrid).ravel()
            new = lu.solve(base - ham)
            if not np.all(np.isfinite(new)):
                raise NumericalError("non-finite value function", step=N - K)
            change = float(np.max(np.abs(new - u)))
            u = new
            if change <= tol:
                break
        else:
            raise NumericalError(
                f"Hamiltonian fixed point did not reach {tol:g} in {max_sweeps} sweeps", step=N - K
            )
        sweeps[K - 1] = sweep
        U[K] = u
        du[K - 1] = U[K] - U[K - 1]

    values = U[::-1].reshape(N + 1, *sgrid.shape).copy()
    values[-1] = u_T  # terminal slice is the data itself, bitwise
    return ValueField(values, tgrid, sgrid, beta, {"max_sweeps": int(sweeps.max()), "mean_sweeps": float(sweeps.mean())})


def classical_hjb_solve(u_T, source, tgrid: TimeGrid, sgrid: SpaceGrid,
                        tol: float = 1e-10, max_sweeps: int = 50) -> ValueField:
    """Backward Euler for ``-d_t u - Delta u + |grad u|^2 / 2 = g``."""
    return solve_fractional_hjb(u_T, source, 1.0, tgrid, sgrid, tol=tol, max_sweeps=max_sweeps)
