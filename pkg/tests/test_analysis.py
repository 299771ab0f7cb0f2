import math

import numpy as np
import pytest
from scipy.integrate import quad

from randfeat.analysis import (
    Divergent,
    NonPositiveError,
    NotAdmissible,
    QuadratureGrid,
    RidgeletProfile,
    ToleranceNotReached,
    activation_fourier_transform,
    admissibility_constant,
    admissibility_lower_bound,
    barron_constant_cauchy_r2,
    barron_constant_trig,
    barron_readout_model,
    barron_ridgelet_bound_1d,
    cutoff_transform,
    fit_rate,
    fourier_transform_1d,
    inverse_fourier_transform_1d,
    product_weight_base_constant,
    product_weight_constant,
    ridgelet_reconstruct_1d,
    ridgelet_transform_1d,
)
from randfeat.sampling import CustomDensity, Gaussian, StudentT

SQRT2PI = math.sqrt(2 * math.pi)


def gauss(u):
    return np.exp(-np.asarray(u) ** 2 / 2)


def gauss_hat(t):
    return SQRT2PI * np.exp(-np.asarray(t) ** 2 / 2)


class TestQuadrature:
    def test_polynomial_exact(self):
        g = QuadratureGrid(-1, 2, 3, 4)
        assert g.integrate(lambda x: x**5) == pytest.approx((64 - 1) / 6, rel=1e-14)

    def test_breakpoints_split_panels(self):
        g = QuadratureGrid(-1, 1, 2, 4, breakpoints=(0.3,))
        assert 0.3 in g.edges()
        assert g.integrate(lambda x: (x > 0.3) * 1.0) == pytest.approx(0.7, abs=1e-14)

    def test_tolerance_not_reached(self):
        g = QuadratureGrid(0, 1, 1, 2, max_doublings=2, tol=1e-15)
        with pytest.raises(ToleranceNotReached):
            g.integrate(lambda x: np.abs(np.sin(300 * x)))

    def test_invalid(self):
        with pytest.raises(ValueError):
            QuadratureGrid(1, 0)


class TestFourier:
    def test_gaussian_at_zero(self):
        assert abs(fourier_transform_1d(gauss, 0.0) - SQRT2PI) < 1e-8

    @pytest.mark.parametrize("xi", [0.5, 1.0, 3.0, 7.0])
    def test_gaussian(self, xi):
        assert abs(fourier_transform_1d(gauss, xi) - gauss_hat(xi)) < 1e-8

    def test_indicator(self):
        R = 1.0
        g = QuadratureGrid(-2, 2, 8, breakpoints=(-R, R))
        val = fourier_transform_1d(lambda u: (np.abs(u) <= R) * 1.0, 1.0, g)
        assert abs(val - 2 * math.sin(1.0)) < 1e-10

    def test_odd_function_is_imaginary(self):
        val = fourier_transform_1d(lambda u: u * np.exp(-u * u), 1.3)
        assert abs(val.real) < 1e-10
        assert abs(val.imag) > 0.1

    @pytest.mark.parametrize("u", [-1.5, 0.0, 0.7, 2.0])
    def test_inversion(self, u):
        f = lambda x: np.exp(-x * x) * np.cos(x)  # noqa: E731
        fhat = lambda xi: np.array([fourier_transform_1d(f, v) for v in np.atleast_1d(xi)])  # noqa: E731
        g = QuadratureGrid(-12, 12, 12, 16, tol=1e-8)
        assert abs(inverse_fourier_transform_1d(fhat, u, g) - f(u)) < 1e-6


class TestBarron:
    def test_gaussian_cauchy_closed_form(self):
        val = barron_constant_trig(gauss_hat, StudentT(1), r=2, k=0)
        assert val == pytest.approx(math.sqrt(3 * math.pi**2.5), abs=1e-4)
        assert val == pytest.approx(7.244, abs=5e-4)

    def test_r1_ignores_density(self):
        a = barron_constant_trig(gauss_hat, StudentT(1), r=1)
        b = barron_constant_trig(gauss_hat, Gaussian(1, 3.0), r=1)
        assert a == b
        assert a == pytest.approx(2 * math.pi, rel=1e-12)

    def test_derivative_order_increases_constant(self):
        k0 = barron_constant_trig(gauss_hat, StudentT(1), 2, 0)
        k1 = barron_constant_trig(gauss_hat, StudentT(1), 2, 1)
        assert k1 > k0

    @pytest.mark.parametrize("k", [0, 1, 2])
    def test_substituted_density_form(self, k):
        a = barron_constant_trig(gauss_hat, StudentT(1), 2, k)
        b = barron_constant_cauchy_r2(gauss_hat, k)
        assert abs(a - b) <= 1e-8 * a

    def test_two_dimensional(self):
        # radial oracle: (2 pi)^2 e^{-r^2} / p(r) with p = (1 / 2 pi) (1 + r^2)^{-3/2}
        fh = lambda t: 2 * math.pi * np.exp(-np.sum(t * t, axis=-1) / 2)  # noqa: E731
        radial, _ = quad(lambda r: 4 * math.pi**2 * math.exp(-r * r) * 2 * math.pi
                         * (1 + r * r) ** 1.5 * 2 * math.pi * r, 0, np.inf)
        got = barron_constant_trig(fh, StudentT(2), 2, 0, m=2, grid=QuadratureGrid(-10, 10, 8, 16))
        assert got == pytest.approx(math.sqrt(radial), rel=1e-8)

    def test_divergent(self):
        slow = lambda t: 1.0 / (1 + np.abs(t))  # noqa: E731
        with pytest.raises(Divergent):
            barron_constant_trig(slow, StudentT(1), 2, 0)

    def test_readout_model_is_unbiased_on_average(self):
        x = np.linspace(-2, 2, 9)[:, None]
        vals = np.mean([barron_readout_model(gauss_hat, 4000, s)(x)[:, 0] for s in range(20)], 0)
        np.testing.assert_allclose(vals, gauss(x[:, 0]), atol=0.02)


@pytest.fixture(scope="module")
def profile():
    return RidgeletProfile()


class TestRidgelet:
    def test_bump_support(self, profile):
        xi = np.array([-1.0, 0.0, 0.999, 1.0, 1.5, 2.0, 2.5])
        vals = profile.psi_hat(xi)
        assert np.all(vals[[0, 1, 2, 3, 5, 6]] == 0)
        assert vals[4] == pytest.approx(math.exp(-1))

    @pytest.mark.parametrize("j", [0, 1, 2])
    def test_vanishing_moments(self, profile, j):
        assert abs(profile.moment(j)) < 1e-6

    def test_table_matches_direct(self, profile):
        x = np.array([-3.21, 0.0, 1.234, 17.5])
        np.testing.assert_allclose(profile.psi_interp(x), profile.psi(x), atol=1e-5)

    def test_zero_function_and_zero_weight(self, profile):
        assert ridgelet_transform_1d(profile, lambda u: 0 * u, 1.3, 0.2) == 0
        assert ridgelet_transform_1d(profile, gauss, 0.0, 0.2) == 0

    @pytest.mark.parametrize("a,b", [(1.0, 0.0), (-0.7, 0.5), (2.0, -1.0)])
    def test_transform_against_frequency_side(self, profile, a, b):
        # int psi(a u - b) f(u) du = (1/2pi) int psi^(w) e^{-i w b} f^(-a w) dw
        g = QuadratureGrid(profile.zeta1, profile.zeta2, 8, 32)
        oracle = abs(a) * g.integrate(lambda w: profile.psi_hat(w) * np.exp(-1j * w * b)
                                      * gauss_hat(-a * w)) / (2 * math.pi)
        got = ridgelet_transform_1d(profile, gauss, a, b, QuadratureGrid(-12, 12, 24))
        assert abs(got - oracle) < 1e-9

    def test_coarse_reconstruction(self, profile):
        u = np.array([-1.0, 0.0, 1.0])
        rec = ridgelet_reconstruct_1d(profile, gauss, "tanh", u, A=3.0, B=20.0)
        np.testing.assert_allclose(rec.real, gauss(u), rtol=0.06)
        assert np.max(np.abs(rec.imag)) < 1e-10


class TestActivationTransforms:
    @pytest.mark.parametrize("kind", ["tanh", "sigmoid", "softplus", "relu"])
    @pytest.mark.parametrize("xi", [0.8, 1.5])
    def test_closed_form_against_cutoff_extrapolation(self, kind, xi):
        want = activation_fourier_transform(kind)(xi)
        got = cutoff_transform(kind, xi, widths=(24.0, 32.0, 48.0, 64.0))
        assert abs(got - want) < 1e-5 * max(1.0, abs(want))

    def test_undefined_at_zero(self):
        with pytest.raises(ValueError):
            activation_fourier_transform("tanh")(0.0)


class TestAdmissibility:
    def test_nonzero_and_converged(self):
        p = RidgeletProfile()
        c = admissibility_constant(p, "tanh", 1)
        fine = admissibility_constant(p, "tanh", 1, nodes=48, panels=16)
        assert abs(c) > 0
        assert abs(c - fine) < 1e-6 * abs(c)

    def test_constant_phase_means_no_cancellation(self):
        c = admissibility_constant(RidgeletProfile(), "tanh", 2)
        assert abs(c.real) < 1e-15 and c.imag < 0

    def test_lower_bound(self):
        _, table = admissibility_lower_bound(RidgeletProfile(), "tanh", (1, 2, 3))
        assert all(holds for _, _, holds in table.values())

    def test_not_admissible(self):
        with pytest.raises(NotAdmissible):
            admissibility_constant(RidgeletProfile(), "tanh", 1, tol=1e3)


class TestProductWeight:
    def test_gamma_zero_is_one(self):
        assert product_weight_base_constant(Gaussian(1), 0.0, 2.0) == 1.0
        assert product_weight_base_constant(Gaussian(1, 2.0), 0.0, 3.0) == 1.0

    def test_gaussian_gamma_one(self):
        want = math.sqrt(2 + 2 * math.sqrt(2 / math.pi))
        assert product_weight_base_constant(Gaussian(1), 1.0, 2.0) == pytest.approx(want, rel=1e-12)
        assert want == pytest.approx(1.89625, abs=1e-5)

    def test_dimension_scaling(self):
        b1 = product_weight_constant(Gaussian(1), 1.0, 2.0, 1)
        b4 = product_weight_constant(Gaussian(1), 1.0, 2.0, 4)
        assert b4 / b1 == pytest.approx(4**1.5, rel=1e-14)

    def test_unnormalised_weight(self):
        with pytest.raises(ValueError):
            product_weight_base_constant(CustomDensity(1, lambda s: 2 * gauss(s)), 1.0, 2.0)

    def test_divergent(self):
        with pytest.raises(Divergent):
            product_weight_base_constant(StudentT(1), 1.0, 2.0)


class TestFitRate:
    def test_inverse_square_root(self):
        pts = [(N, 3.0 / math.sqrt(N)) for N in (10, 40, 160, 640)]
        slope, intercept, r2 = fit_rate(pts)
        assert slope == pytest.approx(-0.5, abs=1e-12)
        assert intercept == pytest.approx(math.log(3.0), abs=1e-12)
        assert r2 == pytest.approx(1.0)

    def test_constant(self):
        slope, _, _ = fit_rate([(1, 2.0), (2, 2.0), (4, 2.0)])
        assert slope == pytest.approx(0.0, abs=1e-14)

    def test_errors(self):
        with pytest.raises(NonPositiveError):
            fit_rate([(1, 1.0), (2, 0.0), (3, 1.0)])
        with pytest.raises(ValueError):
            fit_rate([(1, 1.0), (2, 0.5)])


class TestRidgeletBound:
    derivs = [gauss_hat, lambda t: -t * gauss_hat(t), lambda t: (t * t - 1) * gauss_hat(t)]

    def test_finite_and_monotone_in_k(self):
        b0 = barron_ridgelet_bound_1d(self.derivs, "tanh", 2.0, 0, n_zeta=8)
        b1 = barron_ridgelet_bound_1d(self.derivs, "tanh", 2.0, 1, n_zeta=8)
        assert 0 < b0 < b1 < np.inf

    def test_needs_enough_derivatives(self):
        with pytest.raises(ValueError):
            barron_ridgelet_bound_1d(self.derivs, "softplus")
