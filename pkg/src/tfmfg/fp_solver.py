"""Time-fractional Fokker-Planck solver on the periodic torus.

The density obeys ``d_t m = Delta(D^{1-beta} m) - div(v D^{1-beta} m)``, the law
of the subordinated process ``X_t = Y_{E_t}`` driven by ``dY = v dtau + sqrt(2) dB``.

Time stepping integrates the equation over each cell ``(t_{n-1}, t_n]``.  The
memory term is the product-integration cell average

    M^n = dt^{beta-1} / Gamma(1+beta) * sum_{k<n} d_k m^{n-k},

so with ``c = dt^beta / Gamma(1+beta)`` and ``L_n g = Delta_h g - div_h(v^{n-1} g)``
each step solves ``(I - c L_n) m^n = m^{n-1} + c L_n h^n`` where ``h^n`` holds the
history.  ``L_n`` has zero column sums, so mass is conserved to round-off.  At
``beta = 1`` the history vanishes and the step is backward Euler.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ContractError, HorizonError, NumericalError, ShapeError
from .frac_calc import cell_rl_deriv_backward, cell_rl_deriv_forward, check_beta, pi_weights, rl_deriv_forward
from .grids import SpaceGrid, TimeGrid, as_vector_field, cell_peclet, laplacian_matrix, transport_matrix

TOL_POS = 1e-10


@dataclass(frozen=True)
class DensityField:
    """Density ``values[n, ...]`` at time node ``n`` over the space grid."""

    values: np.ndarray
    tgrid: TimeGrid
    sgrid: SpaceGrid
    beta: float
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.values.shape != (len(self.tgrid), *self.sgrid.shape):
            raise ShapeError(f"density shape {self.values.shape} does not match the grids")

    @property
    def mass(self) -> np.ndarray:
        return self.sgrid.integrate(self.values)

    @property
    def minimum(self) -> float:
        return float(self.values.min())


@dataclass(frozen=True)
class MemoryField:
    """Discrete ``D^{1-beta} m`` sampled at ``times``.

    The default cell scheme stores one value per cell ``(t_{n-1}, t_n]``
    labelled by its right end, so ``times = t_1..t_N``.
    """

    values: np.ndarray
    times: np.ndarray
    scheme: str

    @property
    def minimum(self) -> float:
        return float(self.values.min())


class DriftSeries:
    """Uniform access to a drift given as a slice, a time series, or ``None``."""

    def __init__(self, v, tgrid: TimeGrid, sgrid: SpaceGrid):
        self.sgrid = sgrid
        if v is None:
            self.field = np.zeros((1, sgrid.dim, *sgrid.shape))
            self.stationary = True
            return
        v = np.asarray(v, dtype=float)
        time_shape = (len(tgrid), sgrid.dim, *sgrid.shape)
        if v.shape == time_shape:
            self.field = v
        elif sgrid.dim == 1 and v.shape == (len(tgrid), *sgrid.shape):
            self.field = v[:, None]
        else:
            self.field = as_vector_field(v, sgrid)[None]
        self.stationary = self.field.shape[0] == 1
        if not np.all(np.isfinite(self.field)):
            raise ContractError("drift contains non-finite values")

    def __getitem__(self, n: int) -> np.ndarray:
        return self.field[0 if self.stationary else n]

    def full(self, tgrid: TimeGrid) -> np.ndarray:
        return np.broadcast_to(self.field, (len(tgrid), *self.field.shape[1:]))


def _check_m0(m0, sgrid: SpaceGrid) -> np.ndarray:
    m0 = sgrid.check_scalar(m0, "m0", leading=0)
    if not np.all(np.isfinite(m0)) or np.any(m0 < 0):
        raise ContractError("m0 must be finite and nonnegative")
    mass = float(sgrid.integrate(m0))
    if abs(mass - 1.0) > 1e-8:
        raise ContractError(f"m0 must have unit mass, got {mass:.12g}")
    return m0


def _march(m0, drift: DriftSeries, c: float, d, tgrid, sgrid, flux) -> np.ndarray:
    N, size = tgrid.n_steps, sgrid.size
    m = np.empty((N + 1, size))
    m[0] = m0.ravel()
    eye = sp.identity(size, format="csc")
    lap = laplacian_matrix(sgrid)
    L = lu = None
    for n in range(1, N + 1):
        if lu is None or not drift.stationary:
            L = (lap - transport_matrix(drift[n - 1], sgrid, flux)).tocsc()
            try:
                lu = spla.splu((eye - c * L).tocsc())
            except RuntimeError as exc:
                raise NumericalError(f"implicit step matrix is singular: {exc}", step=n) from exc
        rhs = m[n - 1]
        if d is not None and n > 1:
            h = d[1:n] @ m[n - 1 : 0 : -1]
            rhs = rhs + c * (L @ h)
        m[n] = lu.solve(rhs)
        if not np.all(np.isfinite(m[n])):
            raise NumericalError("non-finite density", step=n)
    return m.reshape(N + 1, *sgrid.shape)


def _warn_peclet(drift: DriftSeries, sgrid: SpaceGrid) -> float:
    pe = cell_peclet(drift.field, sgrid)
    if pe > 2.0:
        warnings.warn(f"drift cell Peclet number {pe:.3g} exceeds 2; upwind faces engaged", stacklevel=3)
    return pe


def _finish(m, tgrid, sgrid, beta, drift, pe, flux) -> DensityField:
    field_ = DensityField(m, tgrid, sgrid, beta)
    mem = memory_field(field_, beta)
    field_.diagnostics.update(
        mass_error=float(np.max(np.abs(field_.mass - 1.0))),
        min_density=field_.minimum,
        min_memory=mem.minimum,
        peclet=pe,
        flux=flux,
        stationary_drift=drift.stationary,
    )
    return field_


def solve_fractional_fp(m0, v, beta, tgrid: TimeGrid, sgrid: SpaceGrid, flux: str = "hybrid") -> DensityField:
    """March the fractional Fokker-Planck equation from ``m0``.

    ``v`` is ``None``, one drift slice (time independent) or a series over all
    time nodes; step ``n`` uses the drift at node ``n - 1``.
    """
    beta = check_beta(beta)
    m0 = _check_m0(m0, sgrid)
    drift = DriftSeries(v, tgrid, sgrid)
    pe = _warn_peclet(drift, sgrid)
    if beta == 1.0:
        m = _march(m0, drift, tgrid.dt, None, tgrid, sgrid, flux)
    else:
        c = tgrid.dt**beta / math.gamma(1.0 + beta)
        d = pi_weights(1.0 - beta, tgrid.n_steps - 1).weights
        m = _march(m0, drift, c, d, tgrid, sgrid, flux)
    return _finish(m, tgrid, sgrid, beta, drift, pe, flux)


def solve_classical_fp(m0, v, tgrid: TimeGrid, sgrid: SpaceGrid, flux: str = "hybrid") -> DensityField:
    """Backward-Euler solve of ``d_tau rho = Delta rho - div(v rho)``."""
    m0 = _check_m0(m0, sgrid)
    drift = DriftSeries(v, tgrid, sgrid)
    pe = _warn_peclet(drift, sgrid)
    m = _march(m0, drift, tgrid.dt, None, tgrid, sgrid, flux)
    return _finish(m, tgrid, sgrid, 1.0, drift, pe, flux)


def memory_field(m: DensityField, beta, scheme: str = "cell") -> MemoryField:
    """``D^{1-beta} m`` per spatial node.

    ``"cell"`` gives the cell averages that the solver itself uses;
    ``"gl"`` gives Grunwald-Letnikov node values.
    """
    beta = check_beta(beta)
    if scheme == "cell":
        vals = cell_rl_deriv_forward(m.values, 1.0 - beta, m.tgrid)
        return MemoryField(vals, m.tgrid.nodes[1:], scheme)
    if scheme == "gl":
        vals = rl_deriv_forward(m.values, 1.0 - beta, m.tgrid)
        return MemoryField(vals, m.tgrid.nodes, scheme)
    raise ValueError(f"unknown memory scheme {scheme!r}")


@dataclass(frozen=True)
class TestFunction:
    """Smooth space-time test function with analytic derivatives.

    Each callable takes ``(t, mesh)`` with ``mesh`` the tuple of node
    coordinates; ``grad`` returns the stacked components.
    """

    phi: Callable
    dphi_dt: Callable
    grad: Callable
    lap: Callable
    label: str = ""

    __test__ = False  # not a pytest class


def cosine_test_functions(T: float, kmax: int = 3, dim: int = 1) -> list[TestFunction]:
    """``cos(2 pi k x_1) (1 - t/T)^2`` for ``k = 0..kmax``."""
    out = []
    for k in range(kmax + 1):
        w = 2.0 * math.pi * k

        def phi(t, X, w=w):
            return np.cos(w * X[0]) * (1.0 - t / T) ** 2

        def dphi_dt(t, X, w=w):
            return -2.0 / T * np.cos(w * X[0]) * (1.0 - t / T)

        def grad(t, X, w=w):
            g = np.zeros((dim, *X[0].shape))
            g[0] = -w * np.sin(w * X[0]) * (1.0 - t / T) ** 2
            return g

        def lap(t, X, w=w):
            return -(w**2) * np.cos(w * X[0]) * (1.0 - t / T) ** 2

        out.append(TestFunction(phi, dphi_dt, grad, lap, label=f"cos{k}"))
    return out


def weak_residual(m: DensityField, v, beta, testfns: Sequence[TestFunction]) -> float:
    """Largest weak-form defect over ``testfns``.

    For each test function the defect is

        <phi(0), m^0> + sum_n [ <phi^n - phi^{n-1}, m^n> + dt <B psi, m>_n ],

    with ``psi^n = Delta phi + v . grad phi`` at ``t_{n-1}``, ``B`` the backward
    cell derivative of order ``1 - beta`` and spatial sums weighted by the cell
    volume.  Time differences of ``phi`` use the analytic derivative at cell
    midpoints.
    """
    beta = check_beta(beta)
    tg, sg = m.tgrid, m.sgrid
    drift = DriftSeries(v, tg, sg)
    t = tg.nodes
    X = sg.mesh
    worst = 0.0
    for tf in testfns:
        end = np.max(np.abs(tf.phi(tg.T, X)))
        if end > 1e-12:
            raise ContractError(f"test function {tf.label!r} does not vanish at T (max {end:.3g})")
        psi = np.stack([
            tf.lap(t[n], X) + np.sum(drift[n] * tf.grad(t[n], X), axis=0) for n in range(tg.n_steps)
        ])
        back = cell_rl_deriv_backward(psi, 1.0 - beta, tg)
        mid = 0.5 * (t[1:] + t[:-1])
        dphi = np.stack([tf.dphi_dt(s, X) for s in mid]) * tg.dt
        total = np.sum(tf.phi(0.0, X) * m.values[0]) + np.sum((dphi + tg.dt * back) * m.values[1:])
        worst = max(worst, abs(float(total) * sg.cell_volume))
    return worst


def subordination_density(rho: DensityField, internal_samples, min_coverage: float = 0.99,
                          return_coverage: bool = False):
    """Average ``rho(E, .)`` over inverse-subordinator samples ``E``.

    ``rho`` is a classical density on an internal-time grid; values between
    internal nodes are linearly interpolated.  Samples beyond the internal
    horizon are clipped to it and counted against the coverage fraction.
    """
    E = np.asarray(internal_samples, dtype=float).ravel()
    if E.size == 0 or np.any(E < 0) or not np.all(np.isfinite(E)):
        raise ContractError("internal-time samples must be finite and nonnegative")
    tau = rho.tgrid
    coverage = float(np.mean(E <= tau.T))
    if coverage < min_coverage:
        raise HorizonError(
            f"internal horizon {tau.T:g} covers only {coverage:.2%} of the samples; extend it"
        )
    pos = np.minimum(E, tau.T) / tau.dt
    snapped = np.abs(pos - np.rint(pos)) < 1e-9
    pos = np.where(snapped, np.rint(pos), pos)
    k = np.minimum(np.floor(pos).astype(np.int64), tau.n_steps - 1)
    frac = pos - k
    weights = np.bincount(k, 1.0 - frac, minlength=len(tau)) + np.bincount(k + 1, frac, minlength=len(tau) + 1)[: len(tau)]
    out = np.tensordot(weights / E.size, rho.values, axes=1)
    return (out, coverage) if return_coverage else out
