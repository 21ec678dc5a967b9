import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kgtrig.spectral import (
    HermitianSymmetryError,
    SpectralField,
    SymbolTable,
    TorusGrid,
    apply_symbol,
    gradient_squared,
    project,
    sobolev_norm,
    to_physical,
    to_spectral,
)


def _random_field(grid, rng):
    return to_spectral(grid, rng.standard_normal(grid.shape))


class TestTorusGrid:
    @pytest.mark.parametrize("n", [0, 3, 6, 100, 2])
    def test_rejects_bad_n(self, n):
        with pytest.raises(ValueError):
            TorusGrid(1, n)

    def test_rejects_bad_dimension(self):
        with pytest.raises(ValueError):
            TorusGrid(4, 8)

    def test_nodes_and_modes(self):
        g = TorusGrid(1, 8)
        assert g.length == pytest.approx(2 * math.pi)
        np.testing.assert_allclose(g.nodes[0], -math.pi + 2 * math.pi * np.arange(8) / 8)
        np.testing.assert_array_equal(g.mode_indices_1d, [0, 1, 2, 3, -4, -3, -2, -1])

    def test_wavenumbers_scale_with_length(self):
        g = TorusGrid(1, 8, 0.0, 1.0)
        np.testing.assert_allclose(g.wavenumbers_1d[:4], 2 * math.pi * np.arange(4))

    def test_equality_and_hash(self):
        assert TorusGrid(2, 16) == TorusGrid(2, 16)
        assert hash(TorusGrid(2, 16)) == hash(TorusGrid(2, 16))
        assert TorusGrid(2, 16) != TorusGrid(2, 32)


class TestTransforms:
    @pytest.mark.parametrize("d,n", [(1, 64), (2, 16), (3, 8)])
    def test_round_trip(self, d, n, rng):
        g = TorusGrid(d, n)
        x = rng.standard_normal(g.shape)
        np.testing.assert_allclose(to_physical(to_spectral(g, x)), x, atol=1e-14)

    def test_zero_mode_is_mean(self, rng):
        g = TorusGrid(2, 16)
        x = rng.standard_normal(g.shape)
        assert to_spectral(g, x).coeffs[0, 0].real == pytest.approx(x.mean(), abs=1e-15)

    def test_cosine_coefficients(self):
        g = TorusGrid(1, 32)
        c = to_spectral(g, np.cos(g.nodes[0])).coeffs
        assert c[1] == pytest.approx(0.5, abs=1e-15)
        assert c[-1] == pytest.approx(0.5, abs=1e-15)
        c[1] = c[-1] = 0
        assert np.abs(c).max() < 1e-15

    def test_coefficients_independent_of_interval_shift(self):
        # absolute-coordinate coefficients: the same function gives the same c on a shifted box
        g1 = TorusGrid(1, 32, -math.pi, math.pi)
        g2 = TorusGrid(1, 32, 0.0, 2 * math.pi)
        c1 = to_spectral(g1, np.sin(3 * g1.nodes[0])).coeffs
        c2 = to_spectral(g2, np.sin(3 * g2.nodes[0])).coeffs
        np.testing.assert_allclose(c1, c2, atol=1e-15)

    def test_hermitian_violation_raises(self):
        g = TorusGrid(1, 16)
        c = np.zeros(16, dtype=complex)
        c[2] = 1.0
        with pytest.raises(HermitianSymmetryError):
            to_physical(SpectralField(g, c))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            to_spectral(TorusGrid(1, 16), np.zeros(8))
        with pytest.raises(ValueError):
            SpectralField(TorusGrid(1, 16), np.zeros(8))


class TestNorms:
    def test_cosine_l2(self):
        g = TorusGrid(1, 64)
        f = to_spectral(g, np.cos(g.nodes[0]))
        assert sobolev_norm(f, 0.0) == pytest.approx(math.sqrt(math.pi), rel=1e-14)
        assert sobolev_norm(f, 1.0) == pytest.approx(math.sqrt(2 * math.pi), rel=1e-14)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**31), st.sampled_from([1, 2]))
    def test_parseval(self, seed, d):
        g = TorusGrid(d, 16)
        x = np.random.default_rng(seed).standard_normal(g.shape)
        direct = math.sqrt(g.cell_volume * float(np.sum(x * x)))
        assert sobolev_norm(to_spectral(g, x), 0.0) == pytest.approx(direct, rel=1e-13)

    def test_monotone_in_nu(self, rng):
        f = _random_field(TorusGrid(1, 64), rng)
        vals = [sobolev_norm(f, nu) for nu in (0.0, 0.5, 1.0, 2.0)]
        assert vals == sorted(vals)

    def test_negative_nu(self, rng):
        with pytest.raises(ValueError):
            sobolev_norm(_random_field(TorusGrid(1, 16), rng), -1.0)


class TestOperators:
    def test_gradient_squared_of_sine(self):
        g = TorusGrid(2, 32)
        x, y = g.nodes
        f = to_spectral(g, np.sin(x) * np.cos(2 * y))
        expect = (np.cos(x) * np.cos(2 * y)) ** 2 + (2 * np.sin(x) * np.sin(2 * y)) ** 2
        np.testing.assert_allclose(gradient_squared(f), expect, atol=1e-12)

    def test_apply_symbol(self, rng):
        g = TorusGrid(1, 32)
        f = _random_field(g, rng)
        lap = apply_symbol(f, -g.k_squared)
        np.testing.assert_allclose(lap.coeffs, -g.k_squared * f.coeffs)
        with pytest.raises(ValueError):
            apply_symbol(f, np.ones(8))

    def test_arithmetic(self, rng):
        g = TorusGrid(1, 16)
        a, b = _random_field(g, rng), _random_field(g, rng)
        np.testing.assert_allclose((a + b - b).coeffs, a.coeffs, atol=1e-15)
        np.testing.assert_allclose((2.0 * a).coeffs, 2.0 * a.coeffs)
        with pytest.raises(ValueError):
            a + SpectralField.zeros(TorusGrid(1, 32))


class TestProjection:
    def test_up_then_down_is_identity_off_nyquist(self, rng):
        coarse, fine = TorusGrid(1, 32), TorusGrid(1, 128)
        f = _random_field(coarse, rng)
        f.coeffs[coarse.nyquist_mask] = 0
        back = project(project(f, fine), coarse)
        np.testing.assert_array_equal(back.coeffs, f.coeffs)

    def test_restriction_drops_high_modes(self):
        fine, coarse = TorusGrid(1, 64), TorusGrid(1, 16)
        x = fine.nodes[0]
        f = to_spectral(fine, np.cos(x) + np.cos(20 * x))
        p = project(f, coarse)
        np.testing.assert_allclose(to_physical(p), np.cos(coarse.nodes[0]), atol=1e-14)

    def test_different_torus(self):
        with pytest.raises(ValueError):
            project(SpectralField.zeros(TorusGrid(1, 16)), TorusGrid(1, 16, 0.0, 1.0))


class TestSymbolTable:
    def test_omega(self):
        s = SymbolTable(TorusGrid(1, 8), 1.0)
        np.testing.assert_allclose(s.omega[:4], np.sqrt(1.0 + np.arange(4) ** 2))
        assert s.omega_max == pytest.approx(math.sqrt(17.0))

    def test_negative_rho(self):
        with pytest.raises(ValueError):
            SymbolTable(TorusGrid(1, 8), -1.0)
