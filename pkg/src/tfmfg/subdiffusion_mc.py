"""Monte Carlo for subordinated diffusions ``X_t = Y_{E_t}`` on the torus.

``D`` is a one-sided beta-stable subordinator with ``E[exp(-k D_tau)] =
exp(-tau k^beta)``, ``E_t = inf{tau : D_tau > t}`` its inverse, and ``Y`` solves
``dY = v dtau + sqrt(2) dB`` on the internal clock.

Reproducibility: particles are processed in fixed blocks of ``BLOCK_SIZE``;
block ``b`` draws from ``SeedSequence(seed, spawn_key=(b,))``.  Output is
therefore bitwise independent of the number of worker threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError, DomainError, SimulationError
from .frac_calc import check_beta
from .grids import SpaceGrid, TimeGrid

BLOCK_SIZE = 2048
_CHUNK = 256

Drift = Callable[[float, np.ndarray], np.ndarray]
InitSampler = Callable[[np.random.Generator, int], np.ndarray]


def block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(block,))))


def wrap(x: np.ndarray) -> np.ndarray:
    """Map coordinates into ``[0, 1)``; ``np.mod`` alone can return 1.0 for tiny negatives."""
    y = np.mod(x, 1.0)
    y[y >= 1.0] = 0.0
    return y


def standard_stable(beta: float, rng: np.random.Generator, size=None) -> np.ndarray:
    """Standard one-sided stable variates ``S`` with ``E[exp(-k S)] = exp(-k^beta)``.

    Kanter's form of the Chambers-Mallows-Stuck transform of a uniform angle and
    an exponential variate.
    """
    u = math.pi * (1.0 - rng.random(size))  # (0, pi]
    w = rng.standard_exponential(size)
    a = np.sin(beta * u) / np.sin(u) ** (1.0 / beta)
    b = (np.sin((1.0 - beta) * u) / w) ** ((1.0 - beta) / beta)
    return a * b


def sample_stable_increment(beta, dt_internal, rng: np.random.Generator, size=None):
    """Draw ``D_{tau + dt} - D_tau = dt^{1/beta} S``; ``beta = 1`` returns ``dt``."""
    beta = check_beta(beta)
    if not (np.isfinite(dt_internal) and dt_internal > 0):
        raise DomainError(f"internal step must be positive, got {dt_internal!r}")
    if beta == 1.0:
        return float(dt_internal) if size is None else np.full(size, float(dt_internal))
    return dt_internal ** (1.0 / beta) * standard_stable(beta, rng, size)


def default_internal_step(beta: float, grid: TimeGrid) -> float:
    """``0.1 dt^beta``: a tenth of the typical inverse-clock advance per external step."""
    return 0.1 * grid.dt**beta


def _resolve_step(beta: float, grid: TimeGrid, delta) -> float:
    delta = default_internal_step(beta, grid) if delta is None else float(delta)
    if not (np.isfinite(delta) and delta > 0):
        raise ConfigError(f"internal step delta must be positive, got {delta!r}")
    if beta == 1.0:
        # align the internal clock with the external nodes so that E_t = t exactly
        delta = grid.dt / max(1, round(grid.dt / delta))
    return delta


@dataclass(frozen=True)
class InversePath:
    """Inverse-subordinator values ``E`` at the external nodes of ``grid``."""

    grid: TimeGrid
    internal: np.ndarray

    def __post_init__(self):
        if self.internal.shape != (len(self.grid),):
            raise ValueError("internal times must have one value per node")


@dataclass(frozen=True)
class _Crossings:
    internal: np.ndarray  # (n, N+1) values of E at the nodes
    index: np.ndarray  # (n, N+1) internal index c with D_{c-1} <= t < D_c
    frac: np.ndarray  # (n, N+1) position of E inside [tau_{c-1}, tau_c]
    n_internal: int


def _subordinator_crossings(beta, grid: TimeGrid, n: int, delta: float, rng) -> _Crossings:
    t = grid.nodes
    if beta == 1.0:
        k = round(grid.dt / delta)
        index = np.broadcast_to(np.arange(len(grid)) * k, (n, len(grid))).copy()
        # c points one past the node so the left endpoint carries the full weight
        return _Crossings(np.broadcast_to(t, (n, len(t))).copy(), index + 1,
                          np.zeros((n, len(t))), int(index.max()) + 1)
    chunks = [np.zeros((n, 1))]
    last = np.zeros(n)
    while np.any(last <= grid.T):
        inc = sample_stable_increment(beta, delta, rng, size=(n, _CHUNK))
        path = last[:, None] + np.cumsum(inc, axis=1)
        chunks.append(path)
        last = path[:, -1]
    D = np.concatenate(chunks, axis=1)
    index = np.empty((n, len(t)), dtype=np.int64)
    for i in range(n):
        index[i] = np.searchsorted(D[i], t, side="right")
    lo = np.take_along_axis(D, index - 1, axis=1)
    hi = np.take_along_axis(D, index, axis=1)
    with np.errstate(invalid="ignore"):
        frac = np.where(np.isfinite(hi), (t - lo) / (hi - lo), 0.0)
    internal = delta * (index - 1 + frac)
    return _Crossings(internal, index, frac, int(index.max()))


def sample_inverse_path(beta, grid: TimeGrid, rng: np.random.Generator, delta=None) -> InversePath:
    """One inverse-subordinator path at the external nodes."""
    beta = check_beta(beta)
    delta = _resolve_step(beta, grid, delta)
    cr = _subordinator_crossings(beta, grid, 1, delta, rng)
    return InversePath(grid, cr.internal[0])


def _run_blocks(fn, n_total: int, threads: int):
    blocks = [(b, min(BLOCK_SIZE, n_total - b * BLOCK_SIZE)) for b in range(-(-n_total // BLOCK_SIZE))]
    if threads <= 1 or len(blocks) == 1:
        return [fn(b, n) for b, n in blocks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda bn: fn(*bn), blocks))


def sample_inverse_paths(beta, grid: TimeGrid, n_paths: int, seed: int, delta=None, threads: int = 1) -> np.ndarray:
    """Array ``(n_paths, N+1)`` of inverse-subordinator values at the nodes."""
    beta = check_beta(beta)
    if n_paths < 1:
        raise ConfigError("n_paths must be positive")
    delta = _resolve_step(beta, grid, delta)
    parts = _run_blocks(
        lambda b, n: _subordinator_crossings(beta, grid, n, delta, block_rng(seed, b)).internal,
        n_paths, threads,
    )
    return np.concatenate(parts, axis=0)


def point_mass(x0) -> InitSampler:
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))

    def sample(rng, n):
        return np.broadcast_to(x0, (n, x0.size)).copy()

    return sample


def density_sampler(m0: np.ndarray, grid: SpaceGrid) -> InitSampler:
    """Sample the piecewise-constant density with value ``m0[j]`` on the cell of node ``j``."""
    m0 = grid.check_scalar(m0, "m0", leading=0)
    if np.any(m0 < 0):
        raise DomainError("initial density must be nonnegative")
    p = m0.ravel() / m0.sum()

    def sample(rng, n):
        cells = rng.choice(grid.size, size=n, p=p)
        centres = np.stack(np.unravel_index(cells, grid.shape), axis=1) * grid.dx
        return centres + (rng.random((n, grid.dim)) - 0.5) * grid.dx

    return sample


@dataclass(frozen=True)
class ParticleEnsemble:
    """Walker positions at recorded external nodes.

    ``positions[k, i]`` is particle ``i`` at node ``recorded[k]``, wrapped into
    ``[0, 1)^d``; ``displacements`` holds the unwrapped ``X_t - X_0``.
    """

    grid: TimeGrid
    beta: float
    seed: int
    recorded: np.ndarray
    positions: np.ndarray
    displacements: np.ndarray
    internal_times: np.ndarray
    block_size: int = BLOCK_SIZE
    meta: dict = field(default_factory=dict)

    @property
    def count(self) -> int:
        return self.positions.shape[1]

    @property
    def dim(self) -> int:
        return self.positions.shape[2]

    def lineage(self, particle: int) -> tuple[int, int, int]:
        """``(master seed, block spawn key, offset in block)`` of a particle's stream."""
        return self.seed, particle // self.block_size, particle % self.block_size

    def slot(self, time_index: int) -> int:
        hits = np.flatnonzero(self.recorded == time_index)
        if hits.size == 0:
            raise KeyError(f"time index {time_index} was not recorded")
        return int(hits[0])


def _evolve_block(beta, grid, delta, drift, init, record, b, n, seed):
    rng = block_rng(seed, b)
    x0 = np.asarray(init(rng, n), dtype=float).reshape(n, -1)
    d = x0.shape[1]
    cr = _subordinator_crossings(beta, grid, n, delta, rng)
    idx = cr.index[:, record]
    frac = cr.frac[:, record]
    K = int(idx.max())
    path = np.empty((K + 1, n, d))  # unwrapped displacement on the internal grid
    path[0] = 0.0
    sq = math.sqrt(2.0 * delta)
    for k in range(K):
        if drift is None:
            vel = 0.0
        else:
            vel = np.asarray(drift(k * delta, wrap(x0 + path[k])), dtype=float).reshape(n, d)
            bad = ~np.all(np.isfinite(vel), axis=1)
            if bad.any():
                i = int(np.flatnonzero(bad)[0])
                raise SimulationError("non-finite drift", particle=b * BLOCK_SIZE + i, time=k * delta)
        path[k + 1] = path[k] + vel * delta + sq * rng.standard_normal((n, d))
    rows = np.arange(n)
    lo = path[idx.T - 1, rows]
    hi = path[np.minimum(idx.T, K), rows]
    f = frac.T[..., None]
    # Brownian-bridge fill between internal nodes keeps the variance exact
    out = lo + f * (hi - lo) + np.sqrt(2.0 * delta * f * (1.0 - f)) * rng.standard_normal(lo.shape)
    return x0, out, cr.internal[:, record]


def simulate_time_changed_sde(
    drift: Drift | None,
    beta,
    init: InitSampler,
    n_particles: int,
    grid: TimeGrid,
    seed: int = 0,
    delta=None,
    record=None,
    threads: int = 1,
) -> ParticleEnsemble:
    """Simulate ``X_t = Y_{E_t}`` for ``n_particles`` walkers.

    ``drift(tau, y)`` receives the internal time and wrapped positions of shape
    ``(n, d)``; ``None`` means zero drift.  ``record`` selects external node
    indices to keep (default: all).  Euler-Maruyama runs on the subordinator's
    internal grid of step ``delta``.
    """
    beta = check_beta(beta)
    if n_particles < 1:
        raise ConfigError("n_particles must be positive")
    delta = _resolve_step(beta, grid, delta)
    record = np.arange(len(grid)) if record is None else np.atleast_1d(np.asarray(record, dtype=int))
    if record.min() < 0 or record.max() > grid.n_steps:
        raise ConfigError("record indices outside the time grid")
    parts = _run_blocks(
        lambda b, n: _evolve_block(beta, grid, delta, drift, init, record, b, n, seed),
        n_particles, threads,
    )
    x0 = np.concatenate([p[0] for p in parts], axis=0)
    disp = np.concatenate([p[1] for p in parts], axis=1)
    internal = np.concatenate([p[2] for p in parts], axis=0).T
    return ParticleEnsemble(
        grid=grid, beta=beta, seed=int(seed), recorded=record,
        positions=wrap(x0[None] + disp), displacements=disp,
        internal_times=internal, meta={"delta": delta},
    )


def empirical_density(ensemble: ParticleEnsemble, time_index: int, grid: SpaceGrid) -> np.ndarray:
    """Histogram over the node cells, normalized to unit mass."""
    pos = ensemble.positions[ensemble.slot(time_index)]
    if pos.shape[1] != grid.dim:
        raise DomainError(f"ensemble is {pos.shape[1]}-dimensional, grid is {grid.dim}-dimensional")
    cells = np.floor(pos / grid.dx + 0.5).astype(np.int64) % grid.n_cells
    flat = np.ravel_multi_index(tuple(cells.T), grid.shape)
    counts = np.bincount(flat, minlength=grid.size).reshape(grid.shape)
    return counts / (len(pos) * grid.cell_volume)
