"""Random feature models trained by least squares in weighted Sobolev norms."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.polynomial import hermite_e

from .features import (
    Activation,
    FeatureFamily,
    NeuronFamily,
    enumerate_multi_indices,
    family_from_dict,
)
from .lsq import (
    OperationCount,
    assemble_design_matrix,
    derivative_weights,
    factor_gram,
    solve_normal_equations,
    target_vector,
)
from .sampling import (
    DATA_STREAM,
    INIT_STREAM,
    Gaussian,
    InitDistribution,
    SeededStream,
    StudentT,
    StudentTPair,
    distribution_from_dict,
)

FORMAT_NAME = "randfeat-model"
FORMAT_VERSION = 1


class InvalidTarget(ValueError):
    """The target cannot supply a requested derivative."""


class ModelFormatError(ValueError):
    pass


# --- targets ------------------------------------------------------------------------


class Target:
    """A function ``f: R^m -> R^d`` that also yields its partial derivatives.

    Calling ``target(points, alpha)`` returns ``d^alpha f`` at ``points`` with
    shape ``(M, d)``.
    """

    m: int = 1
    d: int = 1

    def __call__(self, points, alpha=None) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        alpha = (0,) * self.m if alpha is None else tuple(alpha)
        if len(alpha) != self.m:
            raise ValueError(f"multi-index {alpha} does not match dimension {self.m}")
        return self.derivative(points, alpha)

    def derivative(self, points, alpha) -> np.ndarray:
        raise NotImplementedError

    def __add__(self, other):
        return SumTarget(self, other)


class GaussianTarget(Target):
    """``exp(-|u|^2 / 2)``; derivatives are probabilists' Hermite polynomials."""

    def __init__(self, m: int = 1):
        self.m = m

    def derivative(self, points, alpha):
        out = np.exp(-0.5 * np.sum(points**2, axis=1))
        for l, a in enumerate(alpha):
            if a:
                coef = np.zeros(a + 1)
                coef[a] = 1.0
                out = out * (-1) ** a * hermite_e.hermeval(points[:, l], coef)
        return out[:, None]


class ZeroTarget(Target):
    def __init__(self, m: int = 1, d: int = 1):
        self.m, self.d = m, d

    def derivative(self, points, alpha):
        return np.zeros((points.shape[0], self.d))


class FunctionTarget(Target):
    """Target from explicit callables, keyed by multi-index."""

    def __init__(self, m: int, derivatives: dict, d: int = 1):
        self.m, self.d = m, d
        self.funcs = {tuple(k): v for k, v in derivatives.items()}

    def derivative(self, points, alpha):
        if alpha not in self.funcs:
            raise InvalidTarget(f"no derivative {alpha} supplied")
        return np.asarray(self.funcs[alpha](points), dtype=float).reshape(points.shape[0], self.d)


class FeatureTarget(Target):
    """A single feature ``g_l(theta*)`` (real or complex) used as a target."""

    def __init__(self, family: FeatureFamily, theta, l: int = 0, coef: float = 1.0):
        self.family = family
        self.m, self.d = family.m, family.d
        self.theta = np.atleast_2d(np.asarray(theta, dtype=float))
        self.l, self.coef = l, coef

    def derivative(self, points, alpha):
        t = self.family.tensor(self.theta, points, alpha)
        return self.coef * t[:, :, self.l, 0]


class SumTarget(Target):
    def __init__(self, a: Target, b: Target):
        if (a.m, a.d) != (b.m, b.d):
            raise ValueError("summands must share dimensions")
        self.a, self.b = a, b
        self.m, self.d = a.m, a.d

    def derivative(self, points, alpha):
        return self.a(points, alpha) + self.b(points, alpha)


class StackedTarget(Target):
    """Scalar targets stacked into an ``R^d``-valued one."""

    def __init__(self, parts):
        self.parts = list(parts)
        self.m = self.parts[0].m
        self.d = sum(p.d for p in self.parts)

    def derivative(self, points, alpha):
        return np.hstack([p(points, alpha) for p in self.parts])


# --- fit specification ---------------------------------------------------------------


@dataclass
class SobolevFitSpec:
    """Derivative order, weights ``c_alpha``, sampling weight and truncation level."""

    m: int
    k: int = 0
    c: dict | str = "uniform"
    weight: InitDistribution | None = None
    L: float | None = None

    def __post_init__(self):
        self.c = derivative_weights(self.m, self.k, self.c)
        if self.weight is None:
            self.weight = Gaussian(self.m)
        if self.L is not None and self.L <= 0:
            raise ValueError("truncation level must be positive")

    @property
    def alphas(self):
        return enumerate_multi_indices(self.m, self.k)

    def kappa(self) -> float:
        vals = list(self.c.values())
        return max(vals) / min(vals)

    def to_dict(self):
        return {
            "m": self.m,
            "k": self.k,
            "c": [[list(a), v] for a, v in self.c.items()],
            "weight": self.weight.to_dict(),
            "L": self.L,
        }

    @classmethod
    def from_dict(cls, data):
        c = {tuple(a): v for a, v in data["c"]}
        return cls(data["m"], data["k"], c, distribution_from_dict(data["weight"]), data["L"])


# --- the model ---------------------------------------------------------------------


@dataclass
class RandomFeatureModel:
    """Frozen random parameters with a trained linear readout.

    ``readout[l, n]`` multiplies feature ``g_l(theta_n)``; for neuron families
    ``l`` doubles as the output index.
    """

    family: FeatureFamily
    params: np.ndarray
    readout: np.ndarray
    k: int = 0
    metadata: dict = field(default_factory=dict)
    ledger: OperationCount = field(default_factory=OperationCount)

    def __post_init__(self):
        self.params = np.atleast_2d(np.asarray(self.params, dtype=float))
        self.params.setflags(write=False)
        self.readout = np.atleast_2d(np.asarray(self.readout))

    @property
    def N(self) -> int:
        return self.params.shape[0]

    @property
    def m(self) -> int:
        return self.family.m

    def __call__(self, u, alpha=None):
        return evaluate(self, u, alpha)

    def with_readout(self, readout) -> "RandomFeatureModel":
        return RandomFeatureModel(self.family, self.params, readout, self.k,
                                  dict(self.metadata), self.ledger)


def evaluate(model: RandomFeatureModel, u, alpha=None) -> np.ndarray:
    """``d^alpha G(u)`` with shape ``(M, d)`` (complex for Fourier features)."""
    points = np.atleast_2d(np.asarray(u, dtype=float))
    if points.shape[1] != model.m and model.m == 1:
        points = points.reshape(-1, 1)
    alpha = (0,) * model.m if alpha is None else tuple(alpha)
    t = model.family.tensor(model.params, points, alpha)
    out = np.einsum("jden,en->jd", t, model.readout)
    return out


def truncate(z, L: float) -> np.ndarray:
    if L <= 0:
        raise ValueError("L must be positive")
    return np.clip(z, -L, L)


def default_init(family: FeatureFamily) -> InitDistribution:
    if isinstance(family, NeuronFamily):
        return StudentTPair(family.m)
    return StudentT(family.m)


def _draw(family, N, J, spec, seed, init, data, forced_params, ledger):
    init = default_init(family) if init is None else init
    if init.dim != family.param_dim:
        raise ValueError("initial distribution does not match the parameter space")
    params = init.sample(SeededStream(seed, INIT_STREAM), N)
    ledger.add("sample_params", N)
    if forced_params is not None:
        forced = np.atleast_2d(np.asarray(forced_params, dtype=float))
        params[: forced.shape[0]] = forced
    if data is None:
        data = spec.weight.sample(SeededStream(seed, DATA_STREAM), J)
        ledger.add("sample_data", J)
    else:
        data = np.atleast_2d(np.asarray(data, dtype=float))
        if data.shape[1] != family.m:
            data = data.reshape(-1, family.m)
    return params, data


def train_random_feature_model(
    family: FeatureFamily,
    N: int,
    target: Target,
    J: int,
    spec: SobolevFitSpec,
    seed: int = 0,
    init: InitDistribution | None = None,
    data=None,
    forced_params=None,
) -> RandomFeatureModel:
    """Least-squares random feature model (general feature set).

    Parameters come from ``init`` on stream ``(seed, INIT_STREAM)`` and training
    points from ``spec.weight`` on ``(seed, DATA_STREAM)`` unless ``data`` is
    given. ``forced_params`` overwrite the first sampled parameters.
    """
    if N < 1 or J < 1:
        raise ValueError("N and J must be positive")
    if target.m != family.m or target.d != family.d:
        raise ValueError("target and feature family dimensions differ")
    family.check_order(spec.k)
    start = time.perf_counter()
    ledger = OperationCount()
    params, points = _draw(family, N, J, spec, seed, init, data, forced_params, ledger)
    G = assemble_design_matrix(family, params, points, spec.k, spec.c, ledger=ledger)
    Z = target_vector(target, points, G.alphas, spec.c, family.d)
    ledger.add("target", 2 * Z.shape[0])
    y = solve_normal_equations(G, Z)
    readout = y.reshape(family.e, N)
    meta = {"seed": seed, "J": points.shape[0], "spec": spec.to_dict(), "algorithm": "features",
            "wall_seconds": time.perf_counter() - start}
    return RandomFeatureModel(family, params, readout, spec.k, meta, ledger)


def train_random_nn(
    N: int,
    target: Target,
    J: int,
    spec: SobolevFitSpec,
    activation: Activation | str = "tanh",
    seed: int = 0,
    init: InitDistribution | None = None,
    data=None,
    forced_params=None,
) -> RandomFeatureModel:
    """Random neural network: one shared design matrix, one solve per output."""
    if isinstance(activation, str):
        activation = Activation(activation)
    family = NeuronFamily(target.m, activation, target.d)
    family.check_order(spec.k)
    start = time.perf_counter()
    ledger = OperationCount()
    params, points = _draw(family, N, J, spec, seed, init, data, forced_params, ledger)
    G = assemble_design_matrix(family, params, points, spec.k, spec.c, shared=True, ledger=ledger)
    fac = factor_gram(G.matrix, ledger)
    readout = np.empty((target.d, N))
    rows, cols = G.matrix.shape
    for i in range(target.d):
        Zi = np.stack([spec.c[a] * target(points, a)[:, i] for a in G.alphas], axis=1).reshape(-1)
        ledger.add("target", 2 * Zi.shape[0])
        readout[i] = fac.solve(G.matrix.T @ Zi)
        ledger.add("normal_rhs_and_substitution", 2 * rows * cols + 2 * cols * cols, remainder=True)
    meta = {"seed": seed, "J": points.shape[0], "spec": spec.to_dict(), "algorithm": "neural",
            "wall_seconds": time.perf_counter() - start}
    return RandomFeatureModel(family, params, readout, spec.k, meta, ledger)


# --- errors -------------------------------------------------------------------------


def _pointwise_sobolev_sq(model, target, points, alphas, L=None, c=None):
    total = np.zeros(points.shape[0])
    for a in alphas:
        pred = evaluate(model, points, a)
        if L is not None and not np.iscomplexobj(pred):
            pred = truncate(pred, L)
        diff = target(points, a) - pred
        w = 1.0 if c is None else c[a] ** 2
        total += w * np.sum(np.abs(diff) ** 2, axis=1)
    return total


def weighted_sobolev_error(model, target, spec: SobolevFitSpec, M: int | None = None,
                           stream: SeededStream | None = None, points=None,
                           return_stderr: bool = False):
    """Monte Carlo estimate of the weighted Sobolev error (square-rooted).

    Uses ``points`` if given, otherwise ``M`` fresh draws from ``spec.weight``.
    Truncation ``T_L`` is applied to the model's derivatives when ``spec.L``
    is set. With ``return_stderr`` the delta-method standard error is returned
    as well.
    """
    if points is None:
        if M is None or stream is None:
            raise ValueError("need either points or (M, stream)")
        points = spec.weight.sample(stream, M)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[1] != model.m:
        points = points.reshape(-1, model.m)
    s = _pointwise_sobolev_sq(model, target, points, spec.alphas, spec.L)
    est = float(np.sqrt(np.mean(s)))
    if not return_stderr:
        return est
    se_mean = float(np.std(s, ddof=1) / np.sqrt(len(s))) if len(s) > 1 else float("inf")
    se = se_mean / (2 * est) if est > 0 else 0.0
    return est, se


def empirical_l2_error(model, target, samples) -> float:
    """``sqrt(mean_j |f(V_j) - G(V_j)|^2)`` over the given samples."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.shape[1] != model.m:
        samples = samples.reshape(-1, model.m)
    if samples.shape[0] == 0:
        raise ValueError("samples must be non-empty")
    diff = target(samples) - evaluate(model, samples)
    return float(np.sqrt(np.mean(np.sum(np.abs(diff) ** 2, axis=1))))


def empirical_sobolev_mse(model, target, points, spec: SobolevFitSpec) -> float:
    """The training objective: ``(1/J) sum_j sum_alpha c_alpha^2 |d^a f - d^a G|^2``."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    s = _pointwise_sobolev_sq(model, target, points, spec.alphas, None, spec.c)
    return float(np.mean(s))


def training_points(model: RandomFeatureModel, spec: SobolevFitSpec) -> np.ndarray:
    """Regenerate the training points of a model trained on sampled data."""
    return spec.weight.sample(SeededStream(model.metadata["seed"], DATA_STREAM),
                              model.metadata["J"])


# --- serialization ------------------------------------------------------------------


def _hex(arr):
    return [float(x).hex() for x in np.asarray(arr, dtype=float).ravel()]


def _unhex(vals, shape):
    return np.array([float.fromhex(v) for v in vals], dtype=float).reshape(shape)


def model_to_dict(model: RandomFeatureModel) -> dict:
    ro = np.asarray(model.readout)
    rec = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "family": model.family.to_dict(),
        "m": model.m,
        "k": model.k,
        "N": model.N,
        "params_shape": list(model.params.shape),
        "params": _hex(model.params),
        "readout_shape": list(ro.shape),
        "readout_real": _hex(ro.real),
        "readout_imag": _hex(ro.imag) if np.iscomplexobj(ro) else None,
        "seed": model.metadata.get("seed"),
        "spec": model.metadata.get("spec"),
        "metadata": {k: v for k, v in model.metadata.items() if k not in ("seed", "spec")},
        "ledger": model.ledger.to_dict(),
    }
    return rec


def model_from_dict(rec: dict) -> RandomFeatureModel:
    try:
        if rec.get("format") != FORMAT_NAME:
            raise ModelFormatError(f"not a {FORMAT_NAME} record")
        if rec.get("version") != FORMAT_VERSION:
            raise ModelFormatError(f"unsupported version {rec.get('version')}")
        family = family_from_dict(rec["family"])
        params = _unhex(rec["params"], rec["params_shape"])
        readout = _unhex(rec["readout_real"], rec["readout_shape"])
        if rec.get("readout_imag") is not None:
            readout = readout + 1j * _unhex(rec["readout_imag"], rec["readout_shape"])
        if params.shape[0] != rec["N"]:
            raise ModelFormatError("params do not match N")
        meta = dict(rec.get("metadata") or {})
        meta["seed"] = rec.get("seed")
        meta["spec"] = rec.get("spec")
        ledger = OperationCount.from_dict(rec["ledger"])
    except ModelFormatError:
        raise
    except (KeyError, TypeError, ValueError) as err:
        raise ModelFormatError(f"malformed model record: {err}") from None
    return RandomFeatureModel(family, params, readout, rec["k"], meta, ledger)


def save_model(model: RandomFeatureModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1))


def load_model(path) -> RandomFeatureModel:
    try:
        rec = json.loads(Path(path).read_text())
    except (json.JSONDecodeError, UnicodeDecodeError) as err:
        raise ModelFormatError(f"cannot parse {path}: {err}") from None
    if not isinstance(rec, dict):
        raise ModelFormatError("model file must hold a JSON object")
    return model_from_dict(rec)
