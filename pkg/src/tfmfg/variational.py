"""Dual functionals of the time-fractional MFG and their diagnostics.

Discretization (cells ``n = 1..N``, spatial sums weighted by the cell volume):

    alpha^n = -(u^n - u^{n-1}) / dt + (B G)^n,  G^n = -Delta_h u^{n-1} + |grad u^{n-1}|^2 / 2
    A(u)    = dt sum_n F*(alpha^n) - <m_0, u^0>
    B(m, w) = dt sum_n [ |w^n|^2 / (2 M^n) + F(m^n) ] + <u_T, m^N>

``B`` is the backward cell derivative of order ``1 - beta`` (transpose of the
forward cell operator that defines ``M``), so for any pair satisfying the
discrete continuity equation ``m^n - m^{n-1} = dt (Delta_h M^n - div_h w^n)``
summation by parts is exact and ``A(u) + B(m, w)`` is a sum of pointwise
Fenchel-Young slacks.  Weak duality therefore holds without discretization
slack, and at an equilibrium the gap measures only how far the HJB solver's
Caputo discretization is from ``alpha = f(m)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import optimize

from .errors import ContractError
from .fp_solver import TOL_POS, DensityField, memory_field
from .frac_calc import cell_rl_deriv_backward
from .grids import SpaceGrid, TimeGrid, divergence, gradient, laplacian, sq_norm
from .hjb_solver import ValueField
from .io import jsonable
from .mfg_coupler import CouplingSpec, MFGProblem, MFGSolution

EPS_DM = 1e-12
EPS_W = 1e-10


@dataclass(frozen=True)
class CouplingPrimitive:
    """``F(x, m) = int_0^m f(x, s) ds`` for ``m >= 0`` and its conjugate."""

    coupling: CouplingSpec

    def F(self, m, a=1.0):
        m = np.asarray(m, dtype=float)
        c = self.coupling
        if c.kind == "zero":
            out = np.zeros_like(m)
        elif c.kind == "linear":
            out = 0.5 * m**2
        else:
            p = c.exponent
            out = a * np.abs(m) ** (p + 1.0) / (p + 1.0)
        return np.where(m < 0, np.inf, out)

    def F_star(self, alpha, a=1.0):
        return F_star(self.coupling, alpha, a)


def F_star(coupling: CouplingSpec, alpha, a=1.0):
    """``sup_{m >= 0} (alpha m - F(x, m))`` in closed form."""
    alpha = np.asarray(alpha, dtype=float)
    if not np.all(np.isfinite(alpha)):
        raise ContractError("alpha must be finite")
    pos = np.maximum(alpha, 0.0)
    if coupling.kind == "zero":
        return np.where(alpha > 0, np.inf, 0.0)
    if coupling.kind == "linear":
        return 0.5 * pos**2
    p = coupling.exponent
    m_star = (pos / a) ** (1.0 / p)
    return pos * m_star * p / (p + 1.0)


def F_star_bisect(f, F, alpha: float, m_hi: float = 1.0, tol: float = 1e-12) -> float:
    """Conjugate of a primitive ``F`` with increasing derivative ``f``, ``f(0) = 0``.

    The maximizer solves ``f(m) = alpha``; it is bracketed by doubling and
    located by Brent's method.  An unbounded bracket is a contract violation.
    """
    if alpha <= 0.0:
        return 0.0
    hi = m_hi
    for _ in range(200):
        if f(hi) >= alpha:
            break
        hi *= 2.0
    else:
        raise ContractError(f"f never reaches alpha = {alpha:g}; conjugate is unbounded")
    m_star = optimize.brentq(lambda s: f(s) - alpha, 0.0, hi, xtol=tol, rtol=4 * np.finfo(float).eps)
    return alpha * m_star - F(m_star)


def H_star(w, dm, eps_dm: float = EPS_DM, eps_w: float = EPS_W):
    """Kinetic density ``dm H*(-w/dm)`` for ``H(p) = |p|^2 / 2``.

    ``w`` carries the component axis first; returns ``|w|^2 / (2 dm)`` where
    ``dm > eps_dm``, 0 where both ``dm`` and ``|w|`` are negligible, and
    ``inf`` otherwise.
    """
    w = np.asarray(w, dtype=float)
    dm = np.asarray(dm, dtype=float)
    if w.ndim == dm.ndim:
        w = w[None]
    w2 = np.sum(w**2, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        kin = np.where(dm > eps_dm, 0.5 * w2 / np.where(dm > eps_dm, dm, 1.0), 0.0)
    degenerate = (dm <= eps_dm) & (np.sqrt(w2) > eps_w)
    out = np.where(degenerate, np.inf, kin)
    return out if out.ndim else float(out)


@dataclass
class FunctionalReport:
    value_A: float = math.nan
    value_B: float = math.nan
    kinetic: float = math.nan
    coupling: float = math.nan
    terminal: float = math.nan
    gap: float = math.nan
    gap_ratio: float = math.nan
    infeasible_nodes: list = field(default_factory=list)
    thresholds: dict = field(default_factory=lambda: {"eps_dm": EPS_DM, "eps_w": EPS_W, "tol_pos": TOL_POS})
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(jsonable(asdict(self)), indent=2, sort_keys=True)


def _values(u, problem: MFGProblem) -> np.ndarray:
    vals = u.values if isinstance(u, ValueField) else np.asarray(u, dtype=float)
    shape = (len(problem.tgrid), *problem.sgrid.shape)
    if vals.shape != shape:
        raise ContractError(f"u has shape {vals.shape}, expected {shape}")
    return vals


def hjb_operator(u, problem: MFGProblem) -> np.ndarray:
    """``alpha^n`` on cells ``n = 1..N``; equals ``f(m)`` for an exact discrete equilibrium."""
    u = _values(u, problem)
    tg, sg = problem.tgrid, problem.sgrid
    left = u[:-1]
    G = -laplacian(left, sg) + 0.5 * sq_norm(gradient(left, sg), sg)
    return -(u[1:] - u[:-1]) / tg.dt + cell_rl_deriv_backward(G, 1.0 - problem.beta, tg)


def functional_A(u, problem: MFGProblem, tol_terminal: float = 1e-12) -> float:
    u = _values(u, problem)
    if np.max(np.abs(u[-1] - problem.u_T)) > tol_terminal:
        raise ContractError("u(T) must equal the terminal datum u_T")
    sg, tg = problem.sgrid, problem.tgrid
    alpha = hjb_operator(u, problem)
    fstar = F_star(problem.coupling, alpha, problem.coupling.weight_on(sg))
    return float(tg.dt * sg.cell_volume * np.sum(fstar) - sg.cell_volume * np.sum(problem.m0 * u[0]))


def functional_B(m, w, problem: MFGProblem, eps_dm: float = EPS_DM, eps_w: float = EPS_W) -> FunctionalReport:
    """Itemized ``B``; infeasible inputs give ``value_B = inf`` and the offending nodes."""
    vals = m.values if isinstance(m, DensityField) else np.asarray(m, dtype=float)
    tg, sg = problem.tgrid, problem.sgrid
    density = m if isinstance(m, DensityField) else DensityField(vals, tg, sg, problem.beta)
    w = np.asarray(w, dtype=float)
    if w.shape != (tg.n_steps, sg.dim, *sg.shape):
        raise ContractError(f"w has shape {w.shape}, expected {(tg.n_steps, sg.dim, *sg.shape)}")
    report = FunctionalReport(thresholds={"eps_dm": eps_dm, "eps_w": eps_w, "tol_pos": TOL_POS})
    dm = memory_field(density, problem.beta).values
    bad = (vals[1:] < -TOL_POS) | (dm < -TOL_POS)
    kin = H_star(np.moveaxis(w, 1, 0), dm, eps_dm, eps_w)
    bad |= ~np.isfinite(kin)
    if vals[0].min() < -TOL_POS:
        bad[0] |= vals[0] < -TOL_POS
    if bad.any():
        report.value_B = math.inf
        report.infeasible_nodes = [tuple(int(i) for i in idx) for idx in np.argwhere(bad)[:50]]
        return report
    vol = sg.cell_volume
    report.kinetic = float(tg.dt * vol * np.sum(kin))
    report.coupling = float(tg.dt * vol * np.sum(CouplingPrimitive(problem.coupling).F(np.maximum(vals[1:], 0.0), problem.coupling.weight_on(sg))))
    report.terminal = float(vol * np.sum(problem.u_T * vals[-1]))
    report.value_B = report.kinetic + report.coupling + report.terminal
    return report


def duality_gap(solution: MFGSolution, problem: MFGProblem) -> FunctionalReport:
    report = functional_B(solution.m, solution.w, problem)
    report.value_A = functional_A(solution.u, problem)
    report.gap = report.value_A + report.value_B
    report.gap_ratio = abs(report.gap) / (1.0 + abs(report.value_B))
    report.extra["continuity_defect"] = continuity_defect(solution.m, solution.w, problem)
    return report


def continuity_defect(m, w, problem: MFGProblem) -> float:
    """Sup norm of ``(m^n - m^{n-1}) / dt - Delta_h M^n + div_h w^n``."""
    vals = m.values if isinstance(m, DensityField) else np.asarray(m, dtype=float)
    density = m if isinstance(m, DensityField) else DensityField(vals, problem.tgrid, problem.sgrid, problem.beta)
    dm = memory_field(density, problem.beta).values
    sg = problem.sgrid
    res = np.diff(vals, axis=0) / problem.tgrid.dt - laplacian(dm, sg) + divergence(np.asarray(w), sg)
    return float(np.max(np.abs(res)))


def random_smooth_field(tgrid: TimeGrid, sgrid: SpaceGrid, rng: np.random.Generator, kmax: int = 3,
                        scale: float = 1.0) -> np.ndarray:
    """Random low-frequency trigonometric field vanishing at ``t = T``."""
    X = sgrid.mesh
    s = tgrid.nodes / tgrid.T
    out = np.zeros((len(tgrid), *sgrid.shape))
    for _ in range(2 * kmax + 1):
        k = rng.integers(-kmax, kmax + 1, size=sgrid.dim)
        phase = rng.uniform(0.0, 2.0 * math.pi)
        amp = rng.normal() / (1.0 + np.abs(k).sum())
        spatial = np.cos(2.0 * math.pi * sum(ki * xi for ki, xi in zip(k, X)) + phase)
        profile = (1.0 - s) * (1.0 + rng.uniform(-0.5, 0.5) * s)
        out += amp * profile[(slice(None),) + (None,) * sgrid.dim] * spatial
    return scale * out


def weak_duality_probe(solution: MFGSolution, problem: MFGProblem, n_draws: int = 20, seed: int = 0,
                       scale: float = 0.1) -> dict:
    """``A(u) + B(m, w)`` at the equilibrium ``(m, w)`` for random smooth admissible ``u``.

    Draws are ``u = u_eq + phi`` with ``phi`` random, low-frequency and zero at ``T``.
    """
    rng = np.random.default_rng(seed)
    B = functional_B(solution.m, solution.w, problem).value_B
    values = []
    for _ in range(n_draws):
        u = solution.u.values + random_smooth_field(problem.tgrid, problem.sgrid, rng, scale=scale)
        values.append(functional_A(u, problem) + B)
    return {"values": values, "min": float(np.min(values)), "value_B": B}


def _solve_flux(rhs: np.ndarray, sgrid: SpaceGrid) -> np.ndarray:
    """``w`` with ``div_h w = rhs`` as a centered gradient, via the FFT symbol.

    Requires ``rhs`` free of the constant and Nyquist modes.
    """
    axes = tuple(range(-sgrid.dim, 0))
    k = [2.0 * math.pi * np.fft.fftfreq(sgrid.n_cells, d=1.0 / sgrid.n_cells)] * sgrid.dim
    K = np.meshgrid(*k, indexing="ij")
    sym = [np.sin(ka * sgrid.dx) / sgrid.dx for ka in K]
    denom = -sum(s**2 for s in sym)
    safe = np.abs(denom) > 1e-9
    hat = np.fft.fftn(rhs, axes=axes)
    zeta = np.real(np.fft.ifftn(np.where(safe, hat / np.where(safe, denom, 1.0), 0.0), axes=axes))
    return gradient(zeta, sgrid)


@dataclass
class PerturbationReport:
    hs: list
    margins_A: list
    min_margin_A: float
    margins_grow: bool
    margins_B: list
    min_margin_B: float
    tol: float

    def to_json(self) -> str:
        return json.dumps(jsonable(asdict(self)), indent=2, sort_keys=True)


def perturbation_verification(solution: MFGSolution, problem: MFGProblem, n_samples: int = 20,
                              hs=(0.01, 0.05, -0.01, -0.05), seed: int = 0, tol: float = 1e-4) -> PerturbationReport:
    """Probe optimality of ``u`` for ``A`` and of ``(m, w)`` for ``B``.

    ``A`` probes: ``A(u + h phi) - A(u)`` with ``phi`` random low-frequency and
    ``phi(T) = 0``.  ``B`` probes: ``B(m + h mu, w + h omega) - B(m, w)`` with
    ``mu`` random low-frequency, ``mu(0) = 0``, zero mean, and ``omega``
    solving the linearized continuity equation so the pair stays feasible.
    ``margins_grow`` checks that for every sample and sign the margin at the
    larger ``|h|`` exceeds the one at the smaller.
    """
    rng = np.random.default_rng(seed)
    tg, sg, beta = problem.tgrid, problem.sgrid, problem.beta
    u = solution.u.values
    A0 = functional_A(u, problem)
    B0 = functional_B(solution.m, solution.w, problem).value_B
    margins_A, margins_B = [], []
    for _ in range(n_samples):
        phi = random_smooth_field(tg, sg, rng)
        margins_A.append([functional_A(u + h * phi, problem) - A0 for h in hs])
        mu = random_smooth_field(tg, sg, rng)[::-1].copy()  # vanishes at t = 0
        mu -= sg.integrate(mu).reshape(-1, *([1] * sg.dim))
        dmu = memory_field(DensityField(mu, tg, sg, beta), beta).values
        omega = _solve_flux(laplacian(dmu, sg) - np.diff(mu, axis=0) / tg.dt, sg)
        row = []
        for h in hs:
            rep = functional_B(solution.m.values + h * mu, solution.w + h * omega, problem)
            row.append(rep.value_B - B0)
        margins_B.append(row)
    mA = np.asarray(margins_A)
    absh = np.abs(np.asarray(hs))
    grow = True
    for sign in (1.0, -1.0):
        cols = [i for i, h in enumerate(hs) if np.sign(h) == sign]
        cols.sort(key=lambda i: absh[i])
        for a, b in zip(cols, cols[1:]):
            grow &= bool(np.all(mA[:, b] > mA[:, a]))
    return PerturbationReport(
        hs=list(hs), margins_A=mA.tolist(), min_margin_A=float(mA.min()), margins_grow=grow,
        margins_B=margins_B, min_margin_B=float(np.min(margins_B)), tol=tol,
    )
