import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tfmfg.errors import ConfigError, ShapeError
from tfmfg.grids import (
    SpaceGrid,
    TimeGrid,
    as_vector_field,
    divergence,
    gradient,
    laplacian,
    laplacian_matrix,
    transport_matrix,
)


class TestTimeGrid:
    def test_nodes(self):
        g = TimeGrid(2.0, 4)
        np.testing.assert_allclose(g.nodes, [0, 0.5, 1.0, 1.5, 2.0])
        assert g.nodes[-1] == 2.0
        assert len(g) == 5

    @pytest.mark.parametrize("T, n", [(0.0, 4), (-1.0, 4), (1.0, 1), (1.0, 2.5)])
    def test_rejects(self, T, n):
        with pytest.raises(ConfigError):
            TimeGrid(T, n)

    def test_refine(self):
        assert TimeGrid(1.0, 8).refine().n_steps == 16


class TestSpaceGrid:
    def test_basic(self):
        g = SpaceGrid(16)
        assert g.dx == 1 / 16
        assert g.shape == (16,)
        assert g.integrate(np.ones(16)) == pytest.approx(1.0)

    def test_two_dimensional(self):
        g = SpaceGrid(8, dim=2)
        assert g.shape == (8, 8)
        assert g.integrate(np.ones((8, 8))) == pytest.approx(1.0)

    @pytest.mark.parametrize("n, d", [(4, 1), (16, 3)])
    def test_rejects(self, n, d):
        with pytest.raises(ConfigError):
            SpaceGrid(n, d)

    def test_check_scalar_shape(self):
        with pytest.raises(ShapeError):
            SpaceGrid(8).check_scalar(np.zeros(9))


class TestOperators:
    def test_gradient_of_constant(self):
        g = SpaceGrid(32)
        assert np.all(gradient(np.full(32, 3.0), g) == 0)

    def test_gradient_of_sine(self):
        g = SpaceGrid(64)
        x = g.axis
        grad = gradient(np.sin(2 * np.pi * x), g)[0]
        exact = 2 * np.pi * np.cos(2 * np.pi * x)
        # central difference symbol sin(k dx)/dx
        np.testing.assert_allclose(grad, np.sin(2 * np.pi * g.dx) / g.dx * np.cos(2 * np.pi * x), atol=1e-12)
        assert np.max(np.abs(grad - exact)) < (2 * np.pi) ** 3 * g.dx**2

    def test_laplacian_matches_matrix(self):
        g = SpaceGrid(8, dim=2)
        f = np.random.default_rng(0).normal(size=g.shape)
        np.testing.assert_allclose(laplacian_matrix(g) @ f.ravel(), laplacian(f, g).ravel(), atol=1e-10)

    def test_divergence_negative_adjoint(self):
        g = SpaceGrid(16)
        rng = np.random.default_rng(1)
        f, q = rng.normal(size=16), rng.normal(size=(1, 16))
        assert np.sum(gradient(f, g) * q) == pytest.approx(-np.sum(f * divergence(q, g)), abs=1e-10)

    @pytest.mark.parametrize("flux", ["centered", "upwind", "hybrid"])
    def test_transport_columns_sum_to_zero(self, flux):
        g = SpaceGrid(16)
        v = np.random.default_rng(2).normal(scale=50, size=16)
        A = transport_matrix(v, g, flux)
        np.testing.assert_allclose(np.asarray(A.sum(axis=0)).ravel(), 0, atol=1e-9)

    def test_centered_transport_is_divergence(self):
        g = SpaceGrid(16)
        rng = np.random.default_rng(3)
        v, f = rng.normal(size=16), rng.normal(size=16)
        np.testing.assert_allclose(transport_matrix(v, g, "centered") @ f, divergence((v * f)[None], g), atol=1e-10)

    def test_vector_field_shape(self):
        with pytest.raises(ShapeError):
            as_vector_field(np.zeros((2, 8)), SpaceGrid(8))

    def test_unknown_flux(self):
        with pytest.raises(ConfigError):
            transport_matrix(np.zeros(8), SpaceGrid(8), "donor")


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, 16, elements=st.floats(-10, 10)))
def test_gradient_antisymmetric(u):
    g = SpaceGrid(16)
    assert np.array_equal(gradient(-u, g), -gradient(u, g))
