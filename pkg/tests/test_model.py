import json
import math

import numpy as np
import pytest
from scipy.integrate import quad
from hypothesis import given, settings
from hypothesis import strategies as st

from randfeat.features import Activation, DerivativeOrderExceeded, FourierFamily, NeuronFamily, TrigFamily
from randfeat.lsq import operation_budget
from randfeat.model import (
    FeatureTarget,
    FunctionTarget,
    GaussianTarget,
    InvalidTarget,
    ModelFormatError,
    RandomFeatureModel,
    SobolevFitSpec,
    StackedTarget,
    ZeroTarget,
    empirical_l2_error,
    empirical_sobolev_mse,
    evaluate,
    load_model,
    model_from_dict,
    model_to_dict,
    save_model,
    train_random_feature_model,
    train_random_nn,
    training_points,
    truncate,
    weighted_sobolev_error,
)
from randfeat.sampling import Gaussian, SeededStream

from conftest import central_difference


def tanh_target(scale):
    rho = Activation("tanh")
    return FunctionTarget(1, {(j,): (lambda x, j=j: scale**j * rho.derivative(j, scale * x[:, 0]))
                              for j in range(4)})


class TestTargets:
    def test_gaussian_derivatives_match_finite_differences(self, rng):
        f = GaussianTarget(2)
        u = rng.standard_normal((100, 2))
        for alpha, lower, l in [((1, 0), (0, 0), 0), ((1, 1), (1, 0), 1), ((0, 2), (0, 1), 1)]:
            fd = central_difference(lambda x: f(x, lower), u, l, 1e-5)
            np.testing.assert_allclose(f(u, alpha), fd, rtol=1e-6, atol=1e-9)

    def test_missing_derivative(self):
        with pytest.raises(InvalidTarget):
            FunctionTarget(1, {(0,): lambda x: x[:, 0]})(np.zeros((2, 1)), (1,))

    def test_sum_and_stack(self):
        f = GaussianTarget(1) + ZeroTarget(1)
        x = np.array([[0.5]])
        assert f(x)[0, 0] == pytest.approx(math.exp(-0.125))
        assert StackedTarget([f, f]).d == 2


class TestSpec:
    def test_kappa(self):
        assert SobolevFitSpec(1, 2).kappa() == 1.0
        assert SobolevFitSpec(3, 2, "order_scaled").kappa() == pytest.approx(9.0)

    def test_weight_is_normalised(self):
        # radial integral of the default Gaussian weight in 2-d
        pdf = SobolevFitSpec(2).weight.pdf
        val, _ = quad(lambda r: pdf(np.array([r, 0.0])) * 2 * math.pi * r, 0, np.inf)
        assert val == pytest.approx(1.0, abs=1e-10)

    def test_round_trip(self):
        s = SobolevFitSpec(2, 1, "order_scaled", Gaussian(2, 0.5), 3.0)
        t = SobolevFitSpec.from_dict(s.to_dict())
        assert t.c == s.c and t.weight == s.weight and t.L == 3.0

    def test_bad_truncation(self):
        with pytest.raises(ValueError):
            SobolevFitSpec(1, L=0.0)


class TestTraining:
    def test_zero_target(self):
        spec = SobolevFitSpec(1, 1)
        model = train_random_feature_model(TrigFamily(1), 8, ZeroTarget(1), 50, spec, seed=1)
        assert np.all(model.readout == 0)
        assert empirical_sobolev_mse(model, ZeroTarget(1), training_points(model, spec), spec) == 0

    @pytest.mark.parametrize("family,l", [(TrigFamily(1), 0), (TrigFamily(2), 1),
                                          (FourierFamily(1), 0)], ids=repr)
    def test_exact_representability(self, family, l):
        theta = np.full((1, family.m), 0.8)
        target = FeatureTarget(family, theta, l)
        spec = SobolevFitSpec(family.m, 0)
        # at m = 1 much beyond five features the Gram matrix is numerically singular
        model = train_random_feature_model(family, 5, target, 200, spec, seed=4,
                                           forced_params=theta)
        assert empirical_sobolev_mse(model, target, training_points(model, spec), spec) <= 1e-16

    def test_forced_tanh_with_derivative(self):
        spec = SobolevFitSpec(1, 1)
        target = tanh_target(2.0)
        model = train_random_nn(12, target, 300, spec, "tanh", seed=2, forced_params=[[2.0, 0.0]])
        assert empirical_sobolev_mse(model, target, training_points(model, spec), spec) <= 1e-16

    def test_equal_outputs_give_equal_rows(self):
        spec = SobolevFitSpec(1, 1)
        g = GaussianTarget(1)
        model = train_random_nn(20, StackedTarget([g, g]), 400, spec, "tanh", seed=3)
        np.testing.assert_allclose(model.readout[0], model.readout[1], atol=1e-12, rtol=0)

    def test_heat_configuration_smoke(self):
        from randfeat.benchmarks import HeatProblem, HeatTarget

        spec = SobolevFitSpec(5, 0)
        model = train_random_nn(400, HeatTarget(HeatProblem(5)), 20_000, spec, "tanh", seed=0)
        assert np.all(np.isfinite(model.readout))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            train_random_feature_model(TrigFamily(2), 4, GaussianTarget(1), 10, SobolevFitSpec(1))

    def test_order_beyond_activation(self):
        with pytest.raises(DerivativeOrderExceeded):
            train_random_nn(4, GaussianTarget(1), 10, SobolevFitSpec(1, 1), "relu")

    def test_ledger_matches_budget(self):
        J, N, m, k = 40, 6, 2, 1
        model = train_random_feature_model(TrigFamily(m), N, GaussianTarget(m), J,
                                           SobolevFitSpec(m, k), seed=0)
        assert model.ledger.dominant == operation_budget(J, N, m, k, 1, 2)
        assert model.metadata["wall_seconds"] > 0

    def test_algorithm2_ledger(self):
        J, N, m, k, d = 30, 5, 1, 2, 3
        g = GaussianTarget(1)
        model = train_random_nn(N, StackedTarget([g] * d), J, SobolevFitSpec(m, k), seed=0)
        rows = J * 3
        want = N + J + 2 * rows * N + 2 * rows * d + rows * N * N / 2 + N**3 / 6
        assert float(model.ledger.dominant) == pytest.approx(want)


class TestInvariants:
    @pytest.fixture
    def fitted(self):
        spec = SobolevFitSpec(1, 1)
        f = GaussianTarget(1)
        model = train_random_feature_model(TrigFamily(1), 16, f, 500, spec, seed=9)
        return model, f, spec

    def test_optimality(self, fitted):
        model, f, spec = fitted
        pts = training_points(model, spec)
        base = empirical_sobolev_mse(model, f, pts, spec)
        rng = np.random.default_rng(0)
        for _ in range(20):
            other = model.with_readout(model.readout + 1e-3 * rng.standard_normal(model.readout.shape))
            assert empirical_sobolev_mse(other, f, pts, spec) >= base - 1e-10

    def test_determinism(self, fitted):
        model, f, spec = fitted
        again = train_random_feature_model(TrigFamily(1), 16, f, 500, spec, seed=9)
        assert again.readout.tobytes() == model.readout.tobytes()
        assert again.params.tobytes() == model.params.tobytes()

    def test_linearity(self):
        spec = SobolevFitSpec(1, 1)
        f1, f2 = GaussianTarget(1), tanh_target(1.5)
        fit = lambda f: train_random_feature_model(TrigFamily(1), 5, f, 300, spec, seed=5).readout  # noqa: E731
        both, y1, y2 = fit(f1 + f2), fit(f1), fit(f2)
        assert np.max(np.abs(both - (y1 + y2))) <= 1e-9 * max(1.0, np.max(np.abs(both)))

    def test_params_frozen(self, fitted):
        model = fitted[0]
        with pytest.raises(ValueError):
            model.params[0, 0] = 1.0


class TestEvaluate:
    def test_zero_readout(self, rng):
        model = RandomFeatureModel(TrigFamily(2), rng.standard_normal((5, 2)), np.zeros((2, 5)))
        assert np.all(evaluate(model, rng.standard_normal((4, 2)), (1, 1)) == 0)

    def test_single_feature(self):
        model = RandomFeatureModel(TrigFamily(1), [[1.0]], [[1.0], [0.0]])
        assert evaluate(model, [[0.0]])[0, 0] == 1.0

    def test_sum_form(self, rng):
        fam = TrigFamily(2)
        theta, y = rng.standard_normal((4, 2)), rng.standard_normal((2, 4))
        u = rng.standard_normal(2)
        want = sum(y[0, n] * math.cos(theta[n] @ u) + y[1, n] * math.sin(theta[n] @ u)
                   for n in range(4))
        assert evaluate(RandomFeatureModel(fam, theta, y), u[None])[0, 0] == pytest.approx(want)

    @pytest.mark.parametrize("family", [TrigFamily(3), FourierFamily(2),
                                        NeuronFamily(2, Activation("tanh"), 2)], ids=repr)
    def test_finite_differences(self, family, rng):
        params = rng.standard_normal((6, family.param_dim))
        model = RandomFeatureModel(family, params, rng.standard_normal((family.e, 6)))
        u = rng.standard_normal((100, family.m))
        for l in range(family.m):
            alpha = tuple(int(i == l) for i in range(family.m))
            fd = central_difference(lambda x: evaluate(model, x), u, l, 1e-5)
            np.testing.assert_allclose(evaluate(model, u, alpha), fd, rtol=1e-5, atol=1e-7)

    def test_order_exceeded(self):
        model = RandomFeatureModel(NeuronFamily(1, Activation("tanh")), [[1.0, 0.0]], [[1.0]])
        with pytest.raises(DerivativeOrderExceeded):
            evaluate(model, [[0.0]], (4,))


class TestTruncate:
    def test_example(self):
        np.testing.assert_array_equal(truncate(np.array([2.0, -3.0, 0.5]), 1.0), [1, -1, 0.5])

    def test_large_level(self):
        z = np.array([0.1, -0.2])
        np.testing.assert_array_equal(truncate(z, 5.0), z)

    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=8), st.floats(1e-3, 1e3))
    def test_idempotent(self, z, L):
        z = np.array(z)
        once = truncate(z, L)
        np.testing.assert_array_equal(truncate(once, L), once)
        assert np.all(np.abs(once) <= L)

    def test_invalid(self):
        with pytest.raises(ValueError):
            truncate(np.zeros(2), -1.0)


class TestErrors:
    def test_self_is_zero(self, rng):
        model = RandomFeatureModel(TrigFamily(1), rng.standard_normal((3, 1)),
                                   rng.standard_normal((2, 3)))
        same = FunctionTarget(1, {(j,): (lambda x, j=j: evaluate(model, x, (j,))) for j in range(3)})
        spec = SobolevFitSpec(1, 2)
        assert weighted_sobolev_error(model, same, spec, 1000, SeededStream(0, 3)) == 0.0
        assert empirical_l2_error(model, same, rng.standard_normal((5, 1))) == 0.0

    def test_single_point_gap(self):
        model = RandomFeatureModel(TrigFamily(1), [[1.0]], np.zeros((2, 1)))
        const = FunctionTarget(1, {(0,): lambda x: np.full(len(x), 2.0)})
        assert weighted_sobolev_error(model, const, SobolevFitSpec(1), points=[[0.3]]) == 2.0
        three = FunctionTarget(1, {(0,): lambda x: np.full(len(x), 3.0)})
        assert empirical_l2_error(model, three, [[0.0]]) == 3.0

    def test_l2_matches_sobolev_k0(self, rng):
        model = RandomFeatureModel(TrigFamily(1), rng.standard_normal((4, 1)),
                                   rng.standard_normal((2, 4)))
        pts = rng.standard_normal((50, 1))
        f = GaussianTarget(1)
        assert empirical_l2_error(model, f, pts) == pytest.approx(
            weighted_sobolev_error(model, f, SobolevFitSpec(1), points=pts), rel=1e-14)

    def test_truncation_applies(self):
        model = RandomFeatureModel(TrigFamily(1), [[0.0]], [[5.0], [0.0]])
        zero = ZeroTarget(1)
        assert weighted_sobolev_error(model, zero, SobolevFitSpec(1, L=1.0), points=[[0.0]]) == 1.0
        assert weighted_sobolev_error(model, zero, SobolevFitSpec(1), points=[[0.0]]) == 5.0

    def test_monte_carlo_stability(self):
        spec = SobolevFitSpec(1, 1)
        f = GaussianTarget(1)
        model = train_random_feature_model(TrigFamily(1), 8, f, 200, spec, seed=1)
        a, sa = weighted_sobolev_error(model, f, spec, 100_000, SeededStream(101, 3), return_stderr=True)
        b, sb = weighted_sobolev_error(model, f, spec, 100_000, SeededStream(202, 3), return_stderr=True)
        assert abs(a - b) < 3 * math.hypot(sa, sb)

    def test_empty_samples(self):
        model = RandomFeatureModel(TrigFamily(1), [[1.0]], np.zeros((2, 1)))
        with pytest.raises(ValueError):
            empirical_l2_error(model, ZeroTarget(1), np.zeros((0, 1)))


class TestSerialization:
    @pytest.mark.parametrize("family", [TrigFamily(2), FourierFamily(1),
                                        NeuronFamily(1, Activation("sigmoid"), 2)], ids=repr)
    def test_bit_exact_round_trip(self, family, tmp_path):
        m = family.m
        target = GaussianTarget(m) if family.d == 1 else StackedTarget([GaussianTarget(m)] * 2)
        if isinstance(family, NeuronFamily):
            model = train_random_nn(7, target, 60, SobolevFitSpec(m, 1), "sigmoid", seed=8)
        else:
            model = train_random_feature_model(family, 7, target, 60, SobolevFitSpec(m, 1), seed=8)
        save_model(model, tmp_path / "m.json")
        back = load_model(tmp_path / "m.json")
        assert back.params.tobytes() == model.params.tobytes()
        assert back.readout.tobytes() == model.readout.tobytes()
        assert back.family == model.family and back.k == model.k
        assert back.ledger == model.ledger
        assert back.metadata["seed"] == 8

    def test_rejects_bad_records(self, tmp_path):
        good = model_to_dict(RandomFeatureModel(TrigFamily(1), [[1.0]], np.zeros((2, 1))))
        for broken in [dict(good, version=99), dict(good, format="x"), dict(good, N=3),
                       {k: v for k, v in good.items() if k != "params"}]:
            with pytest.raises(ModelFormatError):
                model_from_dict(broken)
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        with pytest.raises(ModelFormatError):
            load_model(p)
        p.write_text(json.dumps([1, 2]))
        with pytest.raises(ModelFormatError):
            load_model(p)
