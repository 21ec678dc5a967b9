import math

import numpy as np
import pytest

from kgtrig.harness import error_metric, fit_order
from kgtrig.integrators import (
    METHODS,
    BlowUpError,
    MissingAntiderivativeError,
    State,
    Stepper,
    energy,
    etdrk3_step,
    evolve,
    exact_linear_flow,
    get_stepper,
    lri3_step,
    rk4_stability_limit,
    rk4ref_evolve,
    strang2_step,
)
from kgtrig.problems import Nonlinearity, Problem, catalogue, rough_data, smooth_data
from kgtrig.spectral import SpectralField, TorusGrid, to_spectral

EXPONENTIAL = [m for m in METHODS if m != "rk4"]


def _state(grid, theta=2.0, seed=1):
    data = rough_data(theta, seed, grid)
    return State(0.0, data.u0, data.v0)


def _assert_same(a: State, b: State, atol=0.0):
    np.testing.assert_allclose(a.u.coeffs, b.u.coeffs, rtol=0, atol=atol)
    np.testing.assert_allclose(a.v.coeffs, b.v.coeffs, rtol=0, atol=atol)


class TestLinearExactness:
    @pytest.mark.parametrize("method", EXPONENTIAL)
    @pytest.mark.parametrize("d,n", [(1, 64), (2, 16)])
    def test_zero_nonlinearity(self, method, d, n):
        grid = TorusGrid(d, n)
        problem = Problem(grid, catalogue("zero"), rho=1.0)
        s0 = _state(grid)
        out = evolve(s0, 1.0, method, 2.0**-3, problem).final
        assert error_metric(out, exact_linear_flow(s0, 1.0, 1.0)) < 1e-12

    def test_exact_flow_period(self):
        # with rho = 0 the k = 1 mode of cos(x) returns after t = 2 pi
        grid = TorusGrid(1, 16)
        s0 = State(0.0, smooth_data(grid).u0, SpectralField.zeros(grid))
        back = exact_linear_flow(s0, 2 * math.pi, 0.0)
        np.testing.assert_allclose(back.u.coeffs, s0.u.coeffs, atol=1e-14)


class TestFixedPointsAndSymmetry:
    @pytest.mark.parametrize("method", METHODS)
    def test_zero_is_fixed_for_sine(self, method):
        grid = TorusGrid(1, 32)
        problem = Problem(grid, catalogue("sine"), rho=0.0)
        z = SpectralField.zeros(grid)
        out = evolve(State(0.0, z, z), 1.0, method, 0.125, problem).final
        assert np.abs(out.u.coeffs).max() == 0.0
        assert np.abs(out.v.coeffs).max() == 0.0

    def test_strang_time_reversible(self):
        grid = TorusGrid(1, 64)
        problem = Problem(grid, catalogue("sine"), rho=0.5)
        s0 = _state(grid)
        fwd = strang2_step(s0, 0.1, problem)
        back = strang2_step(fwd, -0.1, problem)
        _assert_same(State(0.0, back.u, back.v), s0, atol=1e-14)

    def test_negative_step_rejected_for_others(self):
        problem = Problem(TorusGrid(1, 16), catalogue("sine"))
        with pytest.raises(ValueError):
            Stepper("lri3", -0.1, problem)

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            Stepper("euler", 0.1, Problem(TorusGrid(1, 16), catalogue("sine")))

    @pytest.mark.parametrize("method", METHODS)
    def test_output_stays_real(self, method):
        grid = TorusGrid(1, 64)
        problem = Problem(grid, catalogue("sine"), rho=1.0)
        out = evolve(_state(grid), 0.5, method, 0.0625, problem).final
        assert out.u.hermitian_defect() < 1e-12
        assert out.v.hermitian_defect() < 1e-12


class TestEvolve:
    def test_composition_bitwise(self, sine64, rough_state64):
        h = 2.0**-5
        whole = evolve(rough_state64, 1.0, "lri3", h, sine64).final
        half = evolve(rough_state64, 0.5, "lri3", h, sine64).final
        joined = evolve(half, 1.0, "lri3", h, sine64).final
        np.testing.assert_array_equal(whole.u.coeffs, joined.u.coeffs)
        np.testing.assert_array_equal(whole.v.coeffs, joined.v.coeffs)
        assert joined.t == whole.t == 1.0

    def test_zero_steps(self, sine64, rough_state64):
        traj = evolve(rough_state64, 0.0, "lri3", 0.1, sine64)
        assert traj.final is rough_state64
        assert traj.times == [0.0, 0.0]

    def test_sampling_times_are_exact(self, sine64, rough_state64):
        h = 0.1
        traj = evolve(rough_state64, 1.0, "lri3", h, sine64, sample_every=3, diagnostics=["energy", "h1_norm_u"])
        assert traj.times == [0.0, 3 * h, 6 * h, 9 * h, 10 * h]
        assert len(traj.diagnostics["energy"]) == len(traj.states)

    def test_span_must_be_multiple_of_h(self, sine64, rough_state64):
        with pytest.raises(ValueError):
            evolve(rough_state64, 1.0, "lri3", 0.3, sine64)

    def test_unknown_diagnostic(self, sine64, rough_state64):
        with pytest.raises(ValueError):
            evolve(rough_state64, 1.0, "lri3", 0.5, sine64, diagnostics=["entropy"])

    def test_single_step_helpers_agree(self, sine64, rough_state64):
        a = lri3_step(rough_state64, 0.05, sine64)
        b = get_stepper("lri3", 0.05, sine64).step(rough_state64)
        _assert_same(a, b)
        assert a.t == 0.05

    def test_stepper_cache(self, sine64):
        assert get_stepper("lri3", 0.1, sine64) is get_stepper("lri3", 0.1, sine64)
        assert get_stepper("lri3", 0.1, sine64) is not get_stepper("lri3", 0.05, sine64)

    def test_grid_mismatch(self, sine64):
        other = _state(TorusGrid(1, 32))
        with pytest.raises(ValueError):
            lri3_step(other, 0.1, sine64)


class TestBlowUp:
    def test_cubic_blowup_reported(self):
        grid = TorusGrid(1, 16)
        problem = Problem(grid, catalogue("cubic", lam=1.0))
        u = to_spectral(grid, 50.0 * np.ones(grid.shape))
        with pytest.raises(BlowUpError) as info:
            evolve(State(0.0, u, SpectralField.zeros(grid)), 10.0, "strang2", 0.5, problem)
        assert info.value.method == "strang2"
        assert info.value.step >= 1
        assert len(info.value.history) <= 16

    def test_rk4ref_stability_guard(self, sine64, rough_state64):
        limit = rk4_stability_limit(sine64)
        assert limit == pytest.approx(2 * math.sqrt(2) / 32)
        with pytest.raises(ValueError, match="stab"):
            rk4ref_evolve(rough_state64, 1.0, 0.125, sine64)


class TestEnergy:
    def test_linear_energy_conserved(self):
        grid = TorusGrid(1, 64)
        problem = Problem(grid, catalogue("zero"), rho=1.0)
        s0 = _state(grid)
        e0 = energy(s0, problem)
        e1 = energy(evolve(s0, 1.0, "lri3", 0.25, problem).final, problem)
        assert e1 == pytest.approx(e0, rel=1e-13)

    def test_cosine_value(self):
        # u = cos x, v = 0, rho = 0, f = sin: E = pi/2 - int (1 - cos(cos x)) dx
        grid = TorusGrid(1, 64)
        problem = Problem(grid, catalogue("sine"))
        s0 = State(0.0, smooth_data(grid).u0, SpectralField.zeros(grid))
        x = np.linspace(-np.pi, np.pi, 200001)
        integral = np.trapezoid(1 - np.cos(np.cos(x)), x)
        assert energy(s0, problem) == pytest.approx(np.pi / 2 - integral, rel=1e-10)

    def test_missing_antiderivative(self, rough_state64):
        nl = Nonlinearity("custom", np.sin, np.cos, lambda u: -np.sin(u))
        problem = Problem(TorusGrid(1, 64), nl)
        with pytest.raises(MissingAntiderivativeError):
            energy(rough_state64, problem)


class TestConvergence:
    @pytest.mark.parametrize("method,order", [("lri3", 3), ("etdrk3", 3), ("gautschi2", 2), ("strang2", 2)])
    def test_order_on_smooth_data(self, method, order):
        grid = TorusGrid(1, 32)
        problem = Problem(grid, catalogue("sine"), rho=1.0)
        s0 = State(0.0, smooth_data(grid).u0, SpectralField.zeros(grid))
        ref = rk4ref_evolve(s0, 1.0, 2.0**-12, problem)
        pts = [(k, error_metric(evolve(s0, 1.0, method, 2.0**-k, problem).final, ref)) for k in range(3, 8)]
        assert fit_order(pts).slope == pytest.approx(order, abs=0.15)

    def test_rk4_order(self):
        grid = TorusGrid(1, 16)
        problem = Problem(grid, catalogue("sine"), rho=1.0)
        s0 = State(0.0, smooth_data(grid).u0, SpectralField.zeros(grid))
        ref = rk4ref_evolve(s0, 1.0, 2.0**-11, problem)
        pts = [(k, error_metric(evolve(s0, 1.0, "rk4", 2.0**-k, problem).final, ref)) for k in range(3, 7)]
        assert fit_order(pts).slope == pytest.approx(4, abs=0.2)

    def test_lri3_in_2d(self):
        grid = TorusGrid(2, 16)
        problem = Problem(grid, catalogue("sine"), rho=0.0)
        s0 = _state(grid, theta=3.0)
        ref = rk4ref_evolve(s0, 0.5, 2.0**-12, problem)
        pts = [(k, error_metric(evolve(s0, 0.5, "lri3", 2.0**-k, problem).final, ref)) for k in range(3, 7)]
        assert fit_order(pts).slope == pytest.approx(3, abs=0.2)

    def test_dealiased_matches_plain_for_band_limited(self):
        # f(u) = lam u^3 on a two-mode field has no aliasing on a fine enough grid
        grid = TorusGrid(1, 64)
        s0 = State(0.0, smooth_data(grid).u0, SpectralField.zeros(grid))
        plain = Problem(grid, catalogue("cubic", 0.1), dealias=False)
        padded = Problem(grid, catalogue("cubic", 0.1), dealias=True)
        a = evolve(s0, 0.5, "lri3", 0.05, plain).final
        b = evolve(s0, 0.5, "lri3", 0.05, padded).final
        assert error_metric(a, b) < 1e-8

    def test_etdrk3_step_matches_evolve(self, sine64, rough_state64):
        a = etdrk3_step(rough_state64, 0.1, sine64)
        b = evolve(rough_state64, 0.1, "etdrk3", 0.1, sine64).final
        _assert_same(a, b)
