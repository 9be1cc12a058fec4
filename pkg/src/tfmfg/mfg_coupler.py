"""Damped Picard iteration for the time-fractional MFG system.

One sweep: ``g = f(x, m_k)``, solve the HJB backward, set ``v = -grad u``,
solve the Fokker-Planck equation forward, then relax
``m_{k+1} = (1 - theta) m_k + theta m_FP``.  The stopping metric is the sup
over time of the spatial L1 distance between successive iterates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractError
from .fp_solver import TOL_POS, DensityField, MemoryField, memory_field, solve_fractional_fp
from .frac_calc import check_beta
from .grids import SpaceGrid, TimeGrid, gradient
from .hjb_solver import SourceField, ValueField, solve_fractional_hjb

KINDS = ("power", "linear", "zero")


@dataclass(frozen=True)
class CouplingSpec:
    """Local coupling ``f(x, m)``.

    ``power``: ``a(x) m^p`` with ``p >= 1`` and ``a >= a_min > 0``;
    ``linear``: ``m``; ``zero``: ``0``.  ``weight`` is a scalar or an array
    over the space grid.
    """

    kind: str = "linear"
    exponent: float = 1.0
    weight: float | np.ndarray = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"coupling kind must be one of {KINDS}, got {self.kind!r}")
        if self.kind == "power":
            if not self.exponent >= 1.0:
                raise ConfigError(f"power coupling needs exponent >= 1, got {self.exponent!r}")
            if not np.all(np.asarray(self.weight) > 0):
                raise ConfigError("power coupling needs a strictly positive weight a(x)")

    def weight_on(self, sgrid: SpaceGrid) -> np.ndarray:
        if self.kind != "power":
            return np.ones(sgrid.shape)
        return np.broadcast_to(np.asarray(self.weight, dtype=float), sgrid.shape)

    def __call__(self, m: np.ndarray, a: np.ndarray | float = 1.0) -> np.ndarray:
        """Pointwise ``f`` for ``m >= 0``; ``a`` is the weight broadcast against ``m``."""
        m = np.asarray(m, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(m)
        if self.kind == "linear":
            return m.copy()
        return a * m**self.exponent

    def is_monotone(self, sgrid: SpaceGrid, m_max: float = 10.0, samples: int = 201) -> bool:
        """Sampled check that ``f(x, 0) = 0`` and ``m -> f(x, m)`` is nondecreasing."""
        ms = np.linspace(0.0, m_max, samples).reshape(-1, *([1] * sgrid.dim))
        vals = self(ms * np.ones(sgrid.shape), self.weight_on(sgrid))
        return bool(np.all(vals[0] == 0.0) and np.all(np.diff(vals, axis=0) >= 0.0))


@dataclass(frozen=True)
class MFGProblem:
    beta: float
    tgrid: TimeGrid
    sgrid: SpaceGrid
    coupling: CouplingSpec
    m0: np.ndarray
    u_T: np.ndarray

    def __post_init__(self):
        check_beta(self.beta)
        m0 = self.sgrid.check_scalar(self.m0, "m0", leading=0)
        u_T = self.sgrid.check_scalar(self.u_T, "u_T", leading=0)
        if not np.all(m0 > 0):
            raise ContractError("m0 must be strictly positive")
        mass = float(self.sgrid.integrate(m0))
        if abs(mass - 1.0) > 1e-8:
            raise ContractError(f"m0 must have unit mass, got {mass:.12g}")
        if not np.all(np.isfinite(u_T)):
            raise ContractError("u_T must be finite")
        object.__setattr__(self, "m0", m0)
        object.__setattr__(self, "u_T", u_T)


@dataclass(frozen=True)
class MFGSolution:
    """Equilibrium candidate.

    ``v`` is the feedback ``-grad u`` on time nodes; ``w[n-1] = v[n-1] M^n`` on
    cells ``n = 1..N`` with ``M`` the cell memory of ``m``.
    """

    u: ValueField
    m: DensityField
    v: np.ndarray
    w: np.ndarray
    memory: MemoryField
    residual_history: np.ndarray
    converged: bool
    iterations: int
    invariants: list = field(default_factory=list)
    cross_residuals: dict = field(default_factory=dict)


def coupling_eval(spec: CouplingSpec, m: DensityField, tol_pos: float = TOL_POS) -> SourceField:
    """``f(x_j, m[n, j])`` on every node; negative densities beyond ``tol_pos`` are rejected."""
    vals = m.values
    if vals.min() < -tol_pos:
        node = tuple(int(i) for i in np.unravel_index(int(np.argmin(vals)), vals.shape))
        raise ContractError(f"negative density {vals[node]:.3g} at node (time, space) = {node}")
    return SourceField(spec(np.maximum(vals, 0.0), spec.weight_on(m.sgrid)), m.tgrid, m.sgrid)


def extract_control(u: ValueField, m: DensityField, beta) -> tuple[np.ndarray, np.ndarray]:
    """Feedback ``v = -grad u`` on nodes and flux ``w^n = v^{n-1} M^n`` on cells."""
    v = -gradient(u.values, u.sgrid)
    mem = memory_field(m, beta)
    w = v[:-1] * mem.values[:, None]
    return v, w


def sup_l1(a: np.ndarray, b: np.ndarray, sgrid: SpaceGrid) -> float:
    return float(np.max(sgrid.integrate(np.abs(a - b))))


def _invariants(m: DensityField, iteration: int, beta) -> dict:
    mem = memory_field(m, beta)
    mass_err = float(np.max(np.abs(m.mass - 1.0)))
    return {
        "iteration": iteration,
        "mass_error": mass_err,
        "min_density": m.minimum,
        "min_memory": mem.minimum,
        "passed": bool(mass_err <= 1e-10 and m.minimum >= -TOL_POS and mem.minimum >= -TOL_POS),
    }


def best_response(problem: MFGProblem, m: DensityField, flux: str = "hybrid"):
    """HJB against ``m``, then the density transported by the resulting feedback."""
    g = coupling_eval(problem.coupling, m)
    u = solve_fractional_hjb(problem.u_T, g, problem.beta, problem.tgrid, problem.sgrid)
    v = -gradient(u.values, problem.sgrid)
    m_new = solve_fractional_fp(problem.m0, v, problem.beta, problem.tgrid, problem.sgrid, flux=flux)
    return u, m_new


def initial_density(problem: MFGProblem, init: str) -> DensityField:
    n = len(problem.tgrid)
    if init == "m0":
        vals = np.broadcast_to(problem.m0, (n, *problem.sgrid.shape)).copy()
    elif init == "uniform":
        vals = np.ones((n, *problem.sgrid.shape))
    else:
        raise ConfigError(f"unknown initialization {init!r}; use 'm0' or 'uniform'")
    return DensityField(vals, problem.tgrid, problem.sgrid, problem.beta)


def picard_solve(problem: MFGProblem, damping: float = 0.5, tol: float = 1e-6, max_iter: int = 100,
                 init: str = "m0", flux: str = "hybrid") -> MFGSolution:
    """Damped fixed-point iteration; never raises on non-convergence.

    The returned pair is the iterate with the smallest residual.  ``u`` is
    recomputed against the returned density so that the HJB half of the
    system holds for the returned pair.
    """
    if not (0.0 < damping <= 1.0):
        raise ConfigError(f"damping must lie in (0, 1], got {damping!r}")
    if max_iter < 1:
        raise ConfigError("max_iter must be positive")
    tg, sg, beta = problem.tgrid, problem.sgrid, problem.beta
    m_k = initial_density(problem, init)
    history = []
    invariants = []
    best = (math.inf, m_k)
    converged = False
    for k in range(1, max_iter + 1):
        _, m_half = best_response(problem, m_k, flux)
        vals = (1.0 - damping) * m_k.values + damping * m_half.values
        m_next = DensityField(vals, tg, sg, beta)
        res = sup_l1(m_next.values, m_k.values, sg)
        history.append(res)
        invariants.append(_invariants(m_next, k, beta))
        if res < best[0]:
            best = (res, m_next)
        m_k = m_next
        if res < tol:
            converged = True
            break
    m_final = best[1]
    g = coupling_eval(problem.coupling, m_final)
    u = solve_fractional_hjb(problem.u_T, g, beta, tg, sg)
    v, w = extract_control(u, m_final, beta)
    m_check = solve_fractional_fp(problem.m0, v, beta, tg, sg, flux=flux)
    cross = {
        "fp_defect_sup_l1": sup_l1(m_check.values, m_final.values, sg),
        "tol": tol,
    }
    m_final.diagnostics.update(_invariants(m_final, len(history), beta))
    return MFGSolution(
        u=u, m=m_final, v=v, w=w, memory=memory_field(m_final, beta),
        residual_history=np.asarray(history), converged=converged,
        iterations=len(history), invariants=invariants, cross_residuals=cross,
    )
