import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import erfcx

from tfmfg.errors import DomainError, ShapeError
from tfmfg.frac_calc import (
    Scheme,
    caputo_deriv_forward,
    cell_rl_deriv_backward,
    cell_rl_deriv_forward,
    frac_integral_backward,
    frac_integral_forward,
    gl_weights,
    l1_weights,
    mittag_leffler,
    pi_weights,
    rl_deriv_backward,
    rl_deriv_forward,
    rl_deriv_matrix,
)
from tfmfg.grids import TimeGrid


def binomial_weight(alpha, k):
    """(-1)^k binom(alpha, k) in high precision, independent of the recursion."""
    return float((-1) ** k * mpmath.binomial(alpha, k))


class TestGLWeights:
    def test_worked_example(self):
        w = gl_weights(0.5, 3)
        np.testing.assert_allclose(w.weights, [1.0, -0.5, -0.125, -0.0625], rtol=0, atol=1e-15)
        assert w.scheme is Scheme.GrunwaldLetnikov

    @pytest.mark.parametrize("order", [0.1, 0.37, 0.5, 0.9])
    def test_against_binomials(self, order):
        w = gl_weights(order, 30).weights
        expected = [binomial_weight(order, k) for k in range(31)]
        np.testing.assert_allclose(w, expected, rtol=1e-12)

    @pytest.mark.parametrize("order", [0.2, 0.5, 0.8])
    def test_signs_and_partial_sums(self, order):
        w = gl_weights(order, 1000).weights
        assert w[0] == 1.0
        assert np.all(w[1:] < 0)
        partial = np.cumsum(w)
        assert np.all(partial > 0)
        assert np.all(np.diff(partial) < 0)

    def test_partial_sum_small(self):
        total = gl_weights(0.5, 1000).weights.sum()
        assert 0 < total < 0.02
        assert total == pytest.approx(sum(binomial_weight(0.5, k) for k in range(1001)), rel=1e-10)

    @pytest.mark.parametrize("order", [0.0, 1.0, -0.2, 1.5])
    def test_rejects_order(self, order):
        with pytest.raises(DomainError):
            gl_weights(order, 3)

    def test_rejects_count(self):
        with pytest.raises(DomainError):
            gl_weights(0.5, 0)


class TestRLDerivative:
    @pytest.mark.parametrize("beta", [0.3, 0.5, 0.7])
    def test_constant_gives_power_law(self, beta):
        g = TimeGrid(1.0, 512)
        t = g.nodes
        d = rl_deriv_forward(np.ones_like(t), 1 - beta, g)
        sel = t >= 0.1
        exact = t[sel] ** (beta - 1) / math.gamma(beta)
        assert np.max(np.abs(d[sel] - exact) / exact) < 0.02

    def test_first_order_convergence(self):
        errs = []
        for n in (64, 128, 256, 512):
            g = TimeGrid(1.0, n)
            errs.append(abs(rl_deriv_forward(np.ones(n + 1), 0.5, g)[-1] - 1 / math.gamma(0.5)))
        rates = np.log2(np.array(errs[:-1]) / errs[1:])
        assert np.all(np.abs(rates - 1.0) < 0.15)

    def test_power_rule_linear(self):
        g = TimeGrid(1.0, 1024)
        d = rl_deriv_forward(g.nodes, 0.5, g)
        assert d[-1] == pytest.approx(2 / math.sqrt(math.pi), abs=2e-3)

    def test_power_rule_against_quadrature(self):
        # D^a t = d/dt int_0^t (t-s)^{-a} s ds / Gamma(1-a), evaluated by mpmath
        a, t = 0.5, 1.0
        f = lambda tt: mpmath.quad(lambda s: (tt - s) ** (-a) * s, [0, tt]) / mpmath.gamma(1 - a)
        assert float(mpmath.diff(f, t)) == pytest.approx(2 / math.sqrt(math.pi), rel=1e-8)

    def test_order_zero_is_identity(self):
        g = TimeGrid(1.0, 16)
        f = np.random.default_rng(0).normal(size=(17, 3))
        assert np.array_equal(rl_deriv_forward(f, 0.0, g), f)
        assert np.array_equal(rl_deriv_backward(f, 0.0, g), f)

    def test_backward_of_constant(self):
        T = 50.0
        g = TimeGrid(T, 5000)
        d = rl_deriv_backward(np.ones(5001), 0.5, g)
        n = np.argmin(np.abs(g.nodes - (T - 1.0)))
        assert d[n] == pytest.approx(1 / math.gamma(0.5), abs=1e-2)

    def test_reflection_symmetry(self):
        g = TimeGrid(1.0, 64)
        f = np.random.default_rng(1).normal(size=65)
        np.testing.assert_allclose(rl_deriv_forward(f[::-1], 0.4, g)[::-1], rl_deriv_backward(f, 0.4, g), atol=1e-12)

    def test_matrix_transpose_exact(self):
        g = TimeGrid(1.0, 32)
        fwd = rl_deriv_matrix(0.3, g)
        eye = np.eye(33)
        bwd = rl_deriv_backward(eye, 0.3, g)
        assert np.array_equal(bwd, fwd.T)

    def test_shape_error(self):
        with pytest.raises(ShapeError):
            rl_deriv_forward(np.ones(10), 0.5, TimeGrid(1.0, 16))


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, 0.95), st.integers(0, 2**31 - 1))
def test_adjoint_pairing(order, seed):
    g = TimeGrid(1.0, 64)
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=65), rng.normal(size=65)
    lhs = np.dot(rl_deriv_forward(x, order, g), y)
    rhs = np.dot(x, rl_deriv_backward(y, order, g))
    scale = np.abs(y) @ np.abs(rl_deriv_matrix(order, g)) @ np.abs(x)
    assert abs(lhs - rhs) <= 1e-14 * scale


class TestFractionalIntegral:
    def test_beta_one_is_running_integral(self):
        g = TimeGrid(1.0, 10)
        np.testing.assert_allclose(frac_integral_forward(np.ones(11), 1.0, g), g.nodes, atol=1e-15)

    def test_constant(self):
        g = TimeGrid(1.0, 1024)
        out = frac_integral_forward(np.ones(1025), 0.5, g)
        assert out[-1] == pytest.approx(1 / math.gamma(1.5), abs=2e-3)

    def test_backward_is_reflection(self):
        g = TimeGrid(1.0, 32)
        f = np.random.default_rng(2).normal(size=33)
        np.testing.assert_allclose(frac_integral_backward(f, 0.6, g), frac_integral_forward(f[::-1], 0.6, g)[::-1])

    def test_left_inverse(self):
        g = TimeGrid(1.0, 512)
        t = g.nodes
        f = np.sin(3 * t) + t**2
        back = rl_deriv_forward(frac_integral_forward(f, 0.4, g), 0.4, g)
        assert np.max(np.abs(back - f)) < 1e-10

    @pytest.mark.parametrize("beta", [0.3, 0.7])
    def test_boundedness(self, beta):
        # discrete constant: the GL integral of 1 at T, which is the operator's inf-norm
        g = TimeGrid(2.0, 128)
        f = np.random.default_rng(3).normal(size=129)
        bound = frac_integral_forward(np.ones(129), beta, g)[-1]
        assert np.max(np.abs(frac_integral_forward(f, beta, g))) <= bound * np.max(np.abs(f)) + 1e-12
        assert bound == pytest.approx(2.0**beta / (beta * math.gamma(beta)), rel=0.05)


class TestCaputo:
    def test_constant_is_zero(self):
        g = TimeGrid(1.0, 32)
        assert np.all(caputo_deriv_forward(np.full(33, 4.2), 0.5, g) == 0)

    def test_t_squared(self):
        g = TimeGrid(1.0, 512)
        assert caputo_deriv_forward(g.nodes**2, 0.5, g)[-1] == pytest.approx(2 / math.gamma(2.5), abs=1e-3)

    @pytest.mark.parametrize("beta", [0.3, 0.5, 0.7])
    def test_order(self, beta):
        errs = []
        for n in (32, 64, 128, 256):
            g = TimeGrid(1.0, n)
            errs.append(abs(caputo_deriv_forward(g.nodes**2, beta, g)[-1] - 2 / math.gamma(3 - beta)))
        rates = np.log2(np.array(errs[:-1]) / errs[1:])
        assert np.all(np.abs(rates - (2 - beta)) <= 0.2)

    def test_weights_positive(self):
        a = l1_weights(0.4, 100).weights
        assert np.all(a > 0) and a[0] == 1.0

    def test_beta_one_difference(self):
        g = TimeGrid(1.0, 8)
        f = g.nodes**2
        np.testing.assert_allclose(caputo_deriv_forward(f, 1.0, g)[1:], np.diff(f) / g.dt)


class TestCellDerivative:
    @pytest.mark.parametrize("beta", [0.3, 0.5, 0.8])
    def test_constant_is_exact_cell_average(self, beta):
        g = TimeGrid(1.0, 32)
        t = g.nodes
        got = cell_rl_deriv_forward(np.ones(33), 1 - beta, g)
        exact = (t[1:] ** beta - t[:-1] ** beta) / (g.dt * math.gamma(1 + beta))
        np.testing.assert_allclose(got, exact, rtol=1e-12)

    def test_weights(self):
        d = pi_weights(0.5, 10).weights
        assert d[0] == 1.0 and np.all(d[1:] < 0)

    def test_transpose(self):
        g = TimeGrid(1.0, 16)
        rng = np.random.default_rng(4)
        x, y = rng.normal(size=17), rng.normal(size=16)
        lhs = np.dot(cell_rl_deriv_forward(x, 0.6, g), y)
        rhs = np.dot(x[1:], cell_rl_deriv_backward(y, 0.6, g))
        assert lhs == pytest.approx(rhs, abs=1e-12)

    def test_order_zero(self):
        g = TimeGrid(1.0, 8)
        f = np.arange(9.0)
        assert np.array_equal(cell_rl_deriv_forward(f, 0.0, g), f[1:])


class TestMittagLeffler:
    def test_exponential(self):
        assert mittag_leffler(1.0, -1.0) == pytest.approx(math.exp(-1), rel=1e-15)

    @pytest.mark.parametrize("beta", [0.2, 0.5, 1.0])
    def test_zero(self, beta):
        assert mittag_leffler(beta, 0.0) == 1.0

    @pytest.mark.parametrize("x", [0.1, 0.5, 1.0, 1.5, 3.0, 10.0, 100.0, 1e4])
    def test_half_against_erfcx(self, x):
        assert mittag_leffler(0.5, -x) == pytest.approx(erfcx(x), rel=1e-10)

    def test_worked_example(self):
        assert mittag_leffler(0.5, -1.0) == pytest.approx(0.427584, abs=1e-6)

    @pytest.mark.parametrize("beta", [0.3, 0.6, 0.9])
    @pytest.mark.parametrize("x", [0.5, 2.0, 5.0, 12.0])
    def test_against_high_precision_series(self, beta, x):
        with mpmath.workdps(60):
            ref = mpmath.nsum(lambda k: (-x) ** k / mpmath.gamma(beta * k + 1), [0, mpmath.inf])
        assert mittag_leffler(beta, -x) == pytest.approx(float(ref), rel=1e-8)

    @pytest.mark.parametrize("beta", [0.02, 0.05])
    def test_small_order(self, beta):
        with mpmath.workdps(120):
            ref = mpmath.nsum(lambda k: (-mpmath.mpf(3)) ** k / mpmath.gamma(beta * k + 1), [0, mpmath.inf])
        assert mittag_leffler(beta, -3.0) == pytest.approx(float(ref), rel=1e-10)

    @pytest.mark.parametrize("beta", [0.3, 0.7])
    def test_asymptotic(self, beta):
        x = 1e6
        series = sum(-((-x) ** -k) / math.gamma(1 - beta * k) for k in (1, 2, 3))
        assert mittag_leffler(beta, -x) == pytest.approx(series, rel=1e-8)

    def test_vectorized(self):
        out = mittag_leffler(0.5, np.array([0.0, -1.0]))
        np.testing.assert_allclose(out, [1.0, erfcx(1.0)], rtol=1e-12)

    def test_positive_argument_rejected(self):
        with pytest.raises(DomainError):
            mittag_leffler(0.5, 0.1)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.1, 0.95), st.floats(0.0, 50.0), st.floats(0.0, 50.0))
    def test_completely_monotone(self, beta, a, b):
        lo, hi = sorted((a, b))
        assert mittag_leffler(beta, -hi) <= mittag_leffler(beta, -lo) + 1e-12
        assert 0.0 < mittag_leffler(beta, -hi) <= 1.0
