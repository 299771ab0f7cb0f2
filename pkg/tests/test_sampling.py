import math

import numpy as np
import pytest
from hypothesis import given, settings
from scipy.integrate import trapezoid
from hypothesis import strategies as st

from randfeat.sampling import (
    DATA_STREAM,
    INIT_STREAM,
    CustomDensity,
    Gaussian,
    SeededStream,
    StudentT,
    StudentTPair,
    distribution_from_dict,
    pdf,
    sample_student_t,
)

from oracles import ks_statistic


class TestStreams:
    def test_same_key_same_draws(self):
        a = SeededStream(7, INIT_STREAM).normal(10)
        b = SeededStream(7, INIT_STREAM).normal(10)
        np.testing.assert_array_equal(a, b)

    def test_streams_are_distinct(self):
        a = SeededStream(7, INIT_STREAM).normal(10)
        b = SeededStream(7, DATA_STREAM).normal(10)
        c = SeededStream(8, INIT_STREAM).normal(10)
        assert not np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_child(self):
        s = SeededStream(3, 1)
        np.testing.assert_array_equal(s.child(5).uniform(4), SeededStream(3, 5).uniform(4))

    def test_seed_range(self):
        with pytest.raises(ValueError):
            SeededStream(-1)
        SeededStream(2**64 - 1)


class TestDensities:
    def test_t1_is_cauchy(self):
        x = np.linspace(-5, 5, 11)
        np.testing.assert_allclose(StudentT(1).pdf(x), 1 / (math.pi * (1 + x * x)), rtol=1e-14)

    def test_t2_normalising_constant(self):
        # Gamma(3/2) / pi^{3/2} = 1 / (2 pi)
        assert StudentT(2).pdf(np.zeros(2)) == pytest.approx(1 / (2 * math.pi), rel=1e-14)

    def test_t2_integrates_to_one(self):
        # radial integral of (1/2pi) (1 + r^2)^{-3/2} 2 pi r dr
        r = np.linspace(0, 2000, 2_000_001)
        vals = StudentT(2).pdf(np.stack([r, np.zeros_like(r)], axis=1)) * 2 * math.pi * r
        assert trapezoid(vals, r) == pytest.approx(1.0, abs=1e-3)

    def test_pair_density_factorises(self):
        x = np.array([0.3, -0.2, 1.5])
        want = StudentT(2).pdf(x[:2]) * StudentT(1).pdf(x[2:])
        assert StudentTPair(2).pdf(x) == pytest.approx(want)

    def test_gaussian(self):
        assert Gaussian(1).pdf(0.0) == pytest.approx(1 / math.sqrt(2 * math.pi))
        assert Gaussian(3, 2.0).pdf(np.zeros(3)) == pytest.approx((8 * math.pi) ** -1.5)

    def test_custom_density_has_no_sampler(self):
        d = CustomDensity(1, lambda x: np.exp(-np.abs(x)) / 2)
        assert pdf(d, 0.0) == pytest.approx(0.5)
        with pytest.raises(NotImplementedError):
            d.sample(SeededStream(0), 3)

    @pytest.mark.parametrize("dist", [StudentT(3), StudentTPair(2), Gaussian(2, 0.5)])
    def test_dict_round_trip(self, dist):
        assert distribution_from_dict(dist.to_dict()) == dist


class TestSamplers:
    def test_shapes(self):
        s = SeededStream(1)
        assert StudentT(3).sample(s, 7).shape == (7, 3)
        assert StudentTPair(3).sample(s, 7).shape == (7, 4)

    def test_t1_ks(self):
        x = StudentT(1).sample(SeededStream(11, INIT_STREAM), 200_000)
        assert ks_statistic(x, StudentT(1).pdf) < 0.005

    def test_marginals_of_t3_are_cauchy(self):
        # each coordinate of Z / |G| is a ratio of independent normals
        x = StudentT(3).sample(SeededStream(5), 200_000)
        for l in range(3):
            assert ks_statistic(x[:, l], StudentT(1).pdf) < 0.005

    def test_gaussian_ks(self):
        x = Gaussian(1).sample(SeededStream(2), 200_000)
        assert ks_statistic(x, Gaussian(1).pdf) < 0.005

    @settings(max_examples=20, deadline=None)
    @given(st.integers(1, 5), st.integers(1, 50), st.integers(0, 2**32))
    def test_deterministic(self, m, n, seed):
        a = sample_student_t(m, SeededStream(seed, 1), n)
        b = sample_student_t(m, SeededStream(seed, 1), n)
        np.testing.assert_array_equal(a, b)
        assert np.all(np.isfinite(a))

    def test_invalid(self):
        with pytest.raises(ValueError):
            sample_student_t(0, SeededStream(0), 3)
