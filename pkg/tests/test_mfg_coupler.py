import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tfmfg.errors import ConfigError, ContractError
from tfmfg.fp_solver import DensityField
from tfmfg.grids import SpaceGrid, TimeGrid
from tfmfg.mfg_coupler import (
    CouplingSpec,
    MFGProblem,
    best_response,
    coupling_eval,
    extract_control,
    initial_density,
    picard_solve,
    sup_l1,
)

from conftest import desk_problem


def small_problem(coupling=CouplingSpec("linear"), beta=0.5, n_x=32, n_t=32, u_T=None):
    sg, tg = SpaceGrid(n_x), TimeGrid(1.0, n_t)
    m0 = 1 + 0.5 * np.cos(2 * np.pi * sg.axis)
    u_T = np.zeros(n_x) if u_T is None else u_T
    return MFGProblem(beta, tg, sg, coupling, m0, u_T)


class TestCouplingSpec:
    @pytest.mark.parametrize("spec", [CouplingSpec("linear"), CouplingSpec("zero"),
                                      CouplingSpec("power", 2.0, 0.5), CouplingSpec("power", 1.0, 3.0)])
    def test_monotone(self, spec):
        assert spec.is_monotone(SpaceGrid(8))

    def test_power_values(self):
        spec = CouplingSpec("power", 3.0, 2.0)
        np.testing.assert_allclose(spec(np.array([0.0, 1.0, 2.0]), 2.0), [0.0, 2.0, 16.0])

    def test_spatial_weight(self):
        sg = SpaceGrid(8)
        a = 1 + 0.5 * np.cos(2 * np.pi * sg.axis)
        spec = CouplingSpec("power", 2.0, a)
        np.testing.assert_allclose(spec(np.ones(8), spec.weight_on(sg)), a)

    @pytest.mark.parametrize("kwargs", [dict(kind="cubic"), dict(kind="power", exponent=0.5),
                                        dict(kind="power", exponent=2.0, weight=0.0)])
    def test_rejects(self, kwargs):
        with pytest.raises(ConfigError):
            CouplingSpec(**kwargs)


class TestProblem:
    def test_rejects_nonpositive_m0(self):
        sg = SpaceGrid(8)
        m0 = np.ones(8)
        m0[0], m0[1] = 0.0, 2.0
        with pytest.raises(ContractError):
            MFGProblem(0.5, TimeGrid(1.0, 4), sg, CouplingSpec(), m0, np.zeros(8))

    def test_rejects_mass(self):
        sg = SpaceGrid(8)
        with pytest.raises(ContractError):
            MFGProblem(0.5, TimeGrid(1.0, 4), sg, CouplingSpec(), 2 * np.ones(8), np.zeros(8))

    def test_coupling_eval_names_node(self):
        p = small_problem()
        vals = np.ones((33, 32))
        vals[5, 7] = -1e-3
        with pytest.raises(ContractError, match=r"\(5, 7\)"):
            coupling_eval(p.coupling, DensityField(vals, p.tgrid, p.sgrid, 0.5))

    def test_coupling_eval_clips_roundoff(self):
        p = small_problem()
        vals = np.ones((33, 32))
        vals[0, 0] = -1e-12
        assert coupling_eval(p.coupling, DensityField(vals, p.tgrid, p.sgrid, 0.5)).values[0, 0] == 0.0

    def test_unknown_init(self):
        with pytest.raises(ConfigError):
            initial_density(small_problem(), "random")


class TestPicard:
    def test_uniform_equilibrium_is_exact(self):
        # uniform m0 and flat u_T: u depends on t only, so m stays uniform
        sg, tg = SpaceGrid(16), TimeGrid(1.0, 16)
        p = MFGProblem(0.6, tg, sg, CouplingSpec("linear"), np.ones(16), np.full(16, 0.3))
        sol = picard_solve(p, tol=1e-12)
        assert sol.converged and sol.iterations == 1
        assert np.max(np.abs(sol.m.values - 1)) < 1e-13
        assert np.max(np.abs(sol.v)) < 1e-12

    def test_zero_coupling_one_step(self):
        sol = picard_solve(small_problem(CouplingSpec("zero"), u_T=0.3 * np.cos(2 * np.pi * SpaceGrid(32).axis)),
                           damping=1.0, tol=1e-12)
        assert sol.converged
        assert sol.iterations == 2
        assert sol.residual_history[-1] == 0.0

    def test_fixed_point_defect(self):
        p = small_problem()
        sol = picard_solve(p, tol=1e-9, max_iter=200)
        assert sol.converged
        assert sol.cross_residuals["fp_defect_sup_l1"] < 1e-7
        _, m_again = best_response(p, sol.m)
        assert sup_l1(m_again.values, sol.m.values, p.sgrid) < 1e-7

    def test_initializations_agree(self):
        p = small_problem()
        a = picard_solve(p, tol=1e-10, init="m0", max_iter=200)
        b = picard_solve(p, tol=1e-10, init="uniform", max_iter=200)
        assert sup_l1(a.m.values, b.m.values, p.sgrid) < 1e-8

    def test_reflection_symmetry(self):
        p = small_problem(u_T=0.2 * np.cos(2 * np.pi * SpaceGrid(32).axis))
        m = picard_solve(p, tol=1e-8).m.values
        reflected = np.roll(m[:, ::-1], 1, axis=1)
        assert np.max(np.abs(m - reflected)) < 1e-10

    def test_non_convergence_reported(self):
        sol = picard_solve(small_problem(), max_iter=2, tol=1e-14)
        assert not sol.converged
        assert sol.iterations == 2
        assert len(sol.residual_history) == 2

    def test_invariants_every_iterate(self):
        sol = picard_solve(small_problem(CouplingSpec("power", 2.0, 1.0), beta=0.3), tol=1e-8)
        assert sol.invariants and all(i["passed"] for i in sol.invariants)
        assert [i["iteration"] for i in sol.invariants] == list(range(1, sol.iterations + 1))

    def test_control_shapes(self):
        p = small_problem()
        sol = picard_solve(p, tol=1e-6)
        assert sol.v.shape == (33, 1, 32)
        assert sol.w.shape == (32, 1, 32)
        v, w = extract_control(sol.u, sol.m, p.beta)
        assert np.array_equal(v, sol.v) and np.array_equal(w, sol.w)

    @pytest.mark.parametrize("damping", [0.0, 1.5])
    def test_rejects_damping(self, damping):
        with pytest.raises(ConfigError):
            picard_solve(small_problem(), damping=damping)

    def test_desk_problem_helper(self):
        p = desk_problem(32, 16)
        assert p.beta == 0.5 and p.sgrid.n_cells == 32


@settings(max_examples=8, deadline=None)
@given(st.floats(0.2, 1.0), st.floats(0.3, 1.0))
def test_residuals_monotone_for_linear_coupling(beta, damping):
    sol = picard_solve(small_problem(beta=beta, n_x=16, n_t=16), damping=damping, tol=1e-8, max_iter=300)
    assert sol.converged
    assert all(i["passed"] for i in sol.invariants)
