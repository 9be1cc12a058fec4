"""Uniform time grids, the periodic space grid, and the finite-difference
operators shared by the Fokker-Planck and HJB solvers.

Space nodes sit at ``x_j = j * dx`` on the unit torus; the histogram cell of
node ``j`` is ``[x_j - dx/2, x_j + dx/2)`` (wrapped).  Scalar fields on one
time slice have shape ``grid.shape``; vector fields carry the component axis
first, ``(d, *grid.shape)``.  Fields over time prepend a time axis.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, ShapeError


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_n = n * T / n_steps`` on ``[0, T]``."""

    T: float
    n_steps: int

    def __post_init__(self):
        if not (np.isfinite(self.T) and self.T > 0):
            raise ConfigError(f"time horizon T must be positive, got {self.T!r}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 2:
            raise ConfigError(f"n_steps must be an integer >= 2, got {self.n_steps!r}")
        object.__setattr__(self, "n_steps", int(self.n_steps))

    @property
    def dt(self) -> float:
        return self.T / self.n_steps

    @cached_property
    def nodes(self) -> np.ndarray:
        t = np.arange(self.n_steps + 1) * self.dt
        t[-1] = self.T
        return t

    def __len__(self):
        return self.n_steps + 1

    def refine(self, factor: int = 2) -> "TimeGrid":
        return TimeGrid(self.T, self.n_steps * factor)


@dataclass(frozen=True)
class SpaceGrid:
    """Periodic grid with ``n_cells`` nodes per axis on the unit torus."""

    n_cells: int
    dim: int = 1

    def __post_init__(self):
        if int(self.n_cells) != self.n_cells or self.n_cells < 8:
            raise ConfigError(f"n_cells must be an integer >= 8, got {self.n_cells!r}")
        if self.dim not in (1, 2):
            raise ConfigError(f"dim must be 1 or 2, got {self.dim!r}")
        object.__setattr__(self, "n_cells", int(self.n_cells))

    @property
    def dx(self) -> float:
        return 1.0 / self.n_cells

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_cells,) * self.dim

    @property
    def size(self) -> int:
        return self.n_cells**self.dim

    @property
    def cell_volume(self) -> float:
        return self.dx**self.dim

    @cached_property
    def axis(self) -> np.ndarray:
        return np.arange(self.n_cells) * self.dx

    @cached_property
    def mesh(self) -> tuple[np.ndarray, ...]:
        """Node coordinates, one array of shape ``self.shape`` per axis."""
        return tuple(np.meshgrid(*([self.axis] * self.dim), indexing="ij"))

    def integrate(self, f: np.ndarray) -> np.ndarray:
        """Riemann sum over the trailing spatial axes."""
        axes = tuple(range(-self.dim, 0))
        return np.sum(f, axis=axes) * self.cell_volume

    def check_scalar(self, f, name="field", leading: int | None = None) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape[f.ndim - self.dim :] != self.shape or (
            leading is not None and f.ndim != leading + self.dim
        ):
            raise ShapeError(f"{name} has shape {f.shape}, expected (..., {self.shape})")
        return f

    def refine(self, factor: int = 2) -> "SpaceGrid":
        return SpaceGrid(self.n_cells * factor, self.dim)


def _spatial_axes(grid: SpaceGrid):
    return range(-grid.dim, 0)


def laplacian(f: np.ndarray, grid: SpaceGrid) -> np.ndarray:
    """Second-order periodic Laplacian over the trailing spatial axes."""
    out = -2.0 * grid.dim * f
    for ax in _spatial_axes(grid):
        out = out + np.roll(f, 1, axis=ax) + np.roll(f, -1, axis=ax)
    return out / grid.dx**2


def gradient(f: np.ndarray, grid: SpaceGrid) -> np.ndarray:
    """Centered periodic gradient.

    The component axis is inserted just before the spatial axes, so a slice of
    shape ``grid.shape`` yields ``(d, *grid.shape)``.
    """
    comps = [
        (np.roll(f, -1, axis=ax) - np.roll(f, 1, axis=ax)) / (2.0 * grid.dx)
        for ax in _spatial_axes(grid)
    ]
    return np.stack(comps, axis=f.ndim - grid.dim)


def divergence(q: np.ndarray, grid: SpaceGrid) -> np.ndarray:
    """Centered divergence, the negative adjoint of :func:`gradient`."""
    comp_axis = q.ndim - grid.dim - 1
    out = np.zeros(np.delete(q.shape, comp_axis))
    for i, ax in enumerate(_spatial_axes(grid)):
        qi = np.take(q, i, axis=comp_axis)
        out += (np.roll(qi, -1, axis=ax) - np.roll(qi, 1, axis=ax)) / (2.0 * grid.dx)
    return out


def sq_norm(q: np.ndarray, grid: SpaceGrid) -> np.ndarray:
    """Pointwise ``|q|^2`` of a vector field."""
    return np.sum(q**2, axis=q.ndim - grid.dim - 1)


def as_vector_field(v, grid: SpaceGrid, name="drift") -> np.ndarray:
    """Coerce a slice to shape ``(d, *grid.shape)``; 1D fields may omit the component axis."""
    v = np.asarray(v, dtype=float)
    if v.shape == grid.shape and grid.dim == 1:
        v = v[None]
    if v.shape != (grid.dim, *grid.shape):
        raise ShapeError(f"{name} has shape {v.shape}, expected {(grid.dim, *grid.shape)}")
    return v


def _neighbour_index(grid: SpaceGrid):
    """Flat node indices and, per axis, the flat index of the +1 neighbour."""
    idx = np.arange(grid.size).reshape(grid.shape)
    plus = [np.roll(idx, -1, axis=ax).ravel() for ax in range(grid.dim)]
    return idx.ravel(), plus


def laplacian_matrix(grid: SpaceGrid) -> sp.csc_matrix:
    idx, plus = _neighbour_index(grid)
    h2 = grid.dx**2
    rows = [idx]
    cols = [idx]
    data = [np.full(grid.size, -2.0 * grid.dim / h2)]
    for p in plus:
        rows += [idx, p]
        cols += [p, idx]
        data += [np.full(grid.size, 1.0 / h2)] * 2
    return sp.csc_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(grid.size, grid.size),
    )


def cell_peclet(v: np.ndarray, grid: SpaceGrid) -> float:
    """Largest cell Peclet number ``|v| dx`` (unit diffusivity)."""
    return float(np.max(np.abs(v)) * grid.dx) if np.size(v) else 0.0


def transport_matrix(v: np.ndarray, grid: SpaceGrid, flux: str = "hybrid") -> sp.csc_matrix:
    """Sparse matrix ``A`` with ``A g = div_h(v g)`` in conservative flux form.

    ``flux`` selects the face flux: ``"centered"`` averages the nodal products
    ``v g`` (exact negative adjoint of :func:`gradient`), ``"upwind"`` uses the
    donor cell, ``"hybrid"`` is centered on faces whose cell Peclet number is
    at most 2 and upwind elsewhere.  Columns sum to zero in every case, which
    is what makes the discrete mass exactly invariant.
    """
    if flux not in ("centered", "upwind", "hybrid"):
        raise ConfigError(f"unknown flux {flux!r}")
    v = as_vector_field(v, grid)
    idx, plus = _neighbour_index(grid)
    rows, cols, data = [], [], []
    for a, p in enumerate(plus):
        va = v[a].ravel()
        vr = va[p]
        vf = 0.5 * (va + vr)
        c_left, c_right = 0.5 * va, 0.5 * vr
        if flux != "centered":
            up_left, up_right = np.maximum(vf, 0.0), np.minimum(vf, 0.0)
            if flux == "upwind":
                c_left, c_right = up_left, up_right
            else:
                steep = np.maximum(np.abs(va), np.abs(vr)) * grid.dx > 2.0
                c_left = np.where(steep, up_left, c_left)
                c_right = np.where(steep, up_right, c_right)
        # face between node j and its +1 neighbour feeds row j (+) and row p (-)
        rows += [idx, idx, p, p]
        cols += [idx, p, idx, p]
        data += [c_left, c_right, -c_left, -c_right]
    return sp.csc_matrix(
        (np.concatenate(data) / grid.dx, (np.concatenate(rows), np.concatenate(cols))),
        shape=(grid.size, grid.size),
    )
