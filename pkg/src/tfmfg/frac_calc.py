"""Discrete fractional calculus on uniform time grids.

Three convolution families are provided:

* Grunwald-Letnikov (GL) node operators for Riemann-Liouville derivatives and
  integrals.  Backward operators are exact matrix transposes of the forward
  ones, so the discrete integration-by-parts identity holds to round-off.
* The L1 scheme for the Caputo derivative (order ``2 - beta``).
* Product-integration (PI) cell operators: the Riemann-Liouville derivative
  ``D^{1-beta} = d/dt I^{beta}`` of the piecewise-constant interpolant, averaged
  over each cell ``(t_{n-1}, t_n]``.  These drive the Fokker-Planck solver: they
  integrate the ``t^{beta-1}`` layer at ``t = 0`` exactly and collapse to the
  identity at ``beta = 1``.

All operators act along axis 0 (time); trailing axes are carried along.
``order = 0`` (equivalently ``beta = 1``) takes a separate exact classical
code path; no fractional weights are formed there.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .errors import DomainError, ShapeError
from .grids import TimeGrid


class Scheme(enum.Enum):
    GrunwaldLetnikov = "GL"
    L1 = "L1"
    ProductIntegration = "PI"


@dataclass(frozen=True)
class QuadratureWeights:
    """Convolution weights of a discrete fractional operator.

    The operator at node (or cell) ``n`` is ``dt_scale * sum_k weights[k] * f[n - k]``.
    """

    order: float
    scheme: Scheme
    weights: np.ndarray
    dt_scale: float = 1.0

    def __len__(self):
        return len(self.weights)

    def toeplitz(self, n: int | None = None) -> np.ndarray:
        """Lower-triangular Toeplitz matrix of the scaled weights."""
        n = len(self.weights) if n is None else n
        if n > len(self.weights):
            raise ShapeError(f"need {n} weights, only {len(self.weights)} available")
        k = np.subtract.outer(np.arange(n), np.arange(n))
        mat = np.where(k >= 0, self.weights[np.clip(k, 0, None)], 0.0)
        return self.dt_scale * mat


def check_beta(beta, allow_one: bool = True, name: str = "beta") -> float:
    beta = float(beta)
    upper_ok = beta <= 1.0 if allow_one else beta < 1.0
    if not (beta > 0.0 and upper_ok):
        bound = "(0, 1]" if allow_one else "(0, 1)"
        raise DomainError(f"{name} must lie in {bound}, got {beta!r}")
    return beta


def _check_order(order) -> float:
    order = float(order)
    if not (0.0 <= order < 1.0):
        raise DomainError(f"derivative order must lie in [0, 1), got {order!r}")
    return order


def _check_samples(samples, grid: TimeGrid, length: int | None = None) -> np.ndarray:
    samples = np.asarray(samples, dtype=float)
    expected = len(grid) if length is None else length
    if samples.ndim == 0 or samples.shape[0] != expected:
        raise ShapeError(
            f"samples have leading length {samples.shape[:1]}, grid needs {expected}"
        )
    return samples


def _gl_recursion(alpha: float, count: int) -> np.ndarray:
    w = np.empty(count + 1)
    w[0] = 1.0
    k = np.arange(1, count + 1)
    w[1:] = np.cumprod(1.0 - (alpha + 1.0) / k)
    return w


def gl_weights(order, count: int) -> QuadratureWeights:
    """Grunwald-Letnikov weights ``w_0..w_count`` of ``(1 - z)^order``."""
    order = float(order)
    if not (0.0 < order < 1.0):
        raise DomainError(f"GL order must lie in (0, 1), got {order!r}")
    if int(count) != count or count < 1:
        raise DomainError(f"count must be a positive integer, got {count!r}")
    return QuadratureWeights(order, Scheme.GrunwaldLetnikov, _gl_recursion(order, int(count)))


def l1_weights(beta, count: int) -> QuadratureWeights:
    """L1 Caputo weights ``a_k = (k+1)^{1-beta} - k^{1-beta}``, ``k = 0..count``."""
    beta = check_beta(beta, allow_one=False)
    k = np.arange(count + 1, dtype=float)
    a = (k + 1.0) ** (1.0 - beta) - k ** (1.0 - beta)
    return QuadratureWeights(beta, Scheme.L1, a)


def pi_weights(order, count: int, dt: float = 1.0) -> QuadratureWeights:
    """Cell-averaged RL derivative weights of order ``order = 1 - beta``.

    With ``b_k = (k+1)^beta - k^beta`` the weights are ``d_0 = 1``,
    ``d_k = b_k - b_{k-1}`` (negative for ``k >= 1``); the scale is
    ``dt^{beta-1} / Gamma(1 + beta)``.
    """
    order = _check_order(order)
    beta = 1.0 - order
    k = np.arange(count + 1, dtype=float)
    b = (k + 1.0) ** beta - k**beta
    d = np.empty_like(b)
    d[0] = b[0]
    d[1:] = np.diff(b)
    return QuadratureWeights(order, Scheme.ProductIntegration, d, dt ** (beta - 1.0) / math.gamma(1.0 + beta))


def _apply_lower(mat: np.ndarray, samples: np.ndarray, transpose: bool = False) -> np.ndarray:
    flat = samples.reshape(samples.shape[0], -1)
    out = (mat.T if transpose else mat) @ flat
    return out.reshape(samples.shape)


def rl_deriv_matrix(order, grid: TimeGrid) -> np.ndarray:
    """Matrix of the forward GL Riemann-Liouville derivative on the grid nodes."""
    order = _check_order(order)
    if order == 0.0:
        return np.eye(len(grid))
    w = gl_weights(order, grid.n_steps)
    return w.toeplitz() * grid.dt**-order


def rl_deriv_forward(samples, order, grid: TimeGrid) -> np.ndarray:
    """GL approximation of ``D^{order}_{(0,t]}`` at every node.

    Node ``n``: ``dt^{-order} * sum_{k=0}^{n} w_k * samples[n-k]``.
    """
    samples = _check_samples(samples, grid)
    if _check_order(order) == 0.0:
        return samples.copy()
    return _apply_lower(rl_deriv_matrix(order, grid), samples)


def rl_deriv_backward(samples, order, grid: TimeGrid) -> np.ndarray:
    """GL approximation of ``D^{order}_{[t,T)}``: the transpose of the forward matrix."""
    samples = _check_samples(samples, grid)
    if _check_order(order) == 0.0:
        return samples.copy()
    return _apply_lower(rl_deriv_matrix(order, grid), samples, transpose=True)


def frac_integral_forward(samples, beta, grid: TimeGrid) -> np.ndarray:
    """``I^beta_{(0,t]}`` by GL with order ``-beta`` (positive weights).

    ``beta = 1`` is the cumulative trapezoidal integral from 0.
    """
    samples = _check_samples(samples, grid)
    beta = check_beta(beta)
    if beta == 1.0:
        out = np.zeros_like(samples)
        out[1:] = np.cumsum(0.5 * grid.dt * (samples[1:] + samples[:-1]), axis=0)
        return out
    w = QuadratureWeights(-beta, Scheme.GrunwaldLetnikov, _gl_recursion(-beta, grid.n_steps), grid.dt**beta)
    return _apply_lower(w.toeplitz(), samples)


def frac_integral_backward(samples, beta, grid: TimeGrid) -> np.ndarray:
    """``I^beta_{[t,T)}``: time reflection of the forward integral."""
    samples = _check_samples(samples, grid)
    return frac_integral_forward(samples[::-1], beta, grid)[::-1].copy()


def caputo_deriv_forward(samples, beta, grid: TimeGrid) -> np.ndarray:
    """L1 approximation of the Caputo derivative ``d^beta_{(0,t]}``.

    Node ``n``: ``sum_{k<n} a_k (f[n-k] - f[n-k-1]) / (Gamma(2-beta) dt^beta)``;
    node 0 is 0.  ``beta = 1`` returns backward differences (forward at node 0).
    """
    samples = _check_samples(samples, grid)
    beta = check_beta(beta)
    diffs = np.diff(samples, axis=0)
    out = np.zeros_like(samples)
    if beta == 1.0:
        out[1:] = diffs / grid.dt
        out[0] = diffs[0] / grid.dt
        return out
    a = l1_weights(beta, grid.n_steps - 1)
    mat = QuadratureWeights(beta, Scheme.L1, a.weights, 1.0 / (math.gamma(2.0 - beta) * grid.dt**beta))
    out[1:] = _apply_lower(mat.toeplitz(), diffs)
    return out


def cell_rl_deriv_matrix(order, grid: TimeGrid) -> np.ndarray:
    """``N x N`` matrix of the PI cell derivative acting on node values ``1..N``."""
    order = _check_order(order)
    if order == 0.0:
        return np.eye(grid.n_steps)
    return pi_weights(order, grid.n_steps - 1, grid.dt).toeplitz()


def cell_rl_deriv_forward(samples, order, grid: TimeGrid) -> np.ndarray:
    """Cell averages of ``D^{order}_{(0,t]}`` over ``(t_{n-1}, t_n]``, ``n = 1..N``.

    ``samples`` are node values (length ``N + 1``); the interpolant is constant
    on each cell with the right-end value, so ``samples[0]`` does not enter.
    """
    samples = _check_samples(samples, grid)
    if _check_order(order) == 0.0:
        return samples[1:].copy()
    return _apply_lower(cell_rl_deriv_matrix(order, grid), samples[1:])


def cell_rl_deriv_backward(cell_values, order, grid: TimeGrid) -> np.ndarray:
    """Transpose of :func:`cell_rl_deriv_forward` on cell arrays (length ``N``)."""
    cell_values = _check_samples(cell_values, grid, length=grid.n_steps)
    if _check_order(order) == 0.0:
        return cell_values.copy()
    return _apply_lower(cell_rl_deriv_matrix(order, grid), cell_values, transpose=True)


_SERIES_RADIUS = 1.0


def _ml_series(beta: float, x: float) -> float:
    total, k = 0.0, 0
    while True:
        term = (-x) ** k * special.rgamma(beta * k + 1.0)
        total += term
        if k > 3 and abs(term) < 1e-17 * max(abs(total), 1e-300):
            return total
        k += 1


def _ml_integral(beta: float, x: float) -> float:
    # E_beta(-x) = sin(beta pi)/(beta pi) int_0^inf x exp(-t^{1/beta}) / (t^2 + 2 cos(beta pi) x t + x^2) dt
    s, c = math.sin(beta * math.pi), math.cos(beta * math.pi)

    def integrand(t):
        return x * math.exp(-(t ** (1.0 / beta))) / (t * t + 2.0 * c * x * t + x * x)

    total = 0.0
    for lo, hi in ((0.0, 1.0), (1.0, 2.0), (2.0, np.inf)):
        part, _ = integrate.quad(integrand, lo, hi, epsabs=0.0, epsrel=1e-13, limit=200)
        total += part
    return s / (beta * math.pi) * total


def mittag_leffler(beta, z):
    """One-parameter Mittag-Leffler function ``E_beta(z)`` for ``z <= 0``.

    Power series for ``|z| <= 1``; beyond that the completely monotone integral
    representation, evaluated by adaptive quadrature.  Accepts scalars or arrays.
    """
    beta = check_beta(beta)
    z_arr = np.asarray(z, dtype=float)
    if np.any(~np.isfinite(z_arr)) or np.any(z_arr > 0):
        raise DomainError("mittag_leffler supports finite z <= 0 only")

    def one(zz):
        x = -float(zz)
        if x == 0.0:
            return 1.0
        if beta == 1.0:
            return math.exp(-x)
        if x <= _SERIES_RADIUS:
            return _ml_series(beta, x)
        return _ml_integral(beta, x)

    if z_arr.ndim == 0:
        return one(z_arr)
    return np.vectorize(one, otypes=[float])(z_arr)
