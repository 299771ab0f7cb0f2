"""Feature families and multi-index bookkeeping.

Every family can be evaluated together with its partial derivatives
``d^alpha / du^alpha`` in the input variable ``u``. Derivatives are closed
form: trigonometric and Fourier features differentiate into powers of the
frequency, neurons into derivatives of the activation times powers of the
weight vector.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb
from typing import Sequence

import numpy as np

MultiIndex = tuple[int, ...]


class DerivativeOrderExceeded(ValueError):
    """Raised when a derivative of higher order than supported is requested."""


def order(alpha: Sequence[int]) -> int:
    return int(sum(alpha))


def enumerate_multi_indices(m: int, k: int) -> list[MultiIndex]:
    """All ``alpha`` in N_0^m with ``|alpha| <= k`` in graded lexicographic order.

    Indices are grouped by total order 0, 1, ..., k; inside one order they are
    sorted lexicographically in decreasing order of the leading entries, so for
    ``m = 2, k = 2`` the result is ``(0,0), (1,0), (0,1), (2,0), (1,1), (0,2)``.
    """
    if m < 1 or k < 0:
        raise ValueError(f"need m >= 1 and k >= 0, got m={m}, k={k}")
    out: list[MultiIndex] = []
    for total in range(k + 1):
        out.extend(_compositions(total, m))
    return out


def _compositions(total: int, parts: int) -> list[MultiIndex]:
    if parts == 1:
        return [(total,)]
    out = []
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            out.append((first,) + rest)
    return out


def count_multi_indices(m: int, k: int) -> int:
    """Exact size of ``{alpha : |alpha| <= k}``, i.e. ``C(m+k, k)``."""
    return comb(m + k, k)


def count_multi_indices_geometric(m: int, k: int) -> int:
    """``sum_{j<=k} m^j``, the upper bound used for complexity statements."""
    return sum(m**j for j in range(k + 1))


def monomial(theta: np.ndarray, alpha: Sequence[int]) -> np.ndarray:
    """``theta^alpha`` along the last axis of ``theta``."""
    theta = np.asarray(theta)
    out = np.ones(theta.shape[:-1], dtype=theta.dtype)
    for l, a in enumerate(alpha):
        if a:
            out = out * theta[..., l] ** a
    return out


# --- activations -------------------------------------------------------------

_ACTIVATION_LIMITS = {"tanh": 3, "sigmoid": 3, "softplus": 3, "relu": 0}
_ACTIVATION_GROWTH = {"tanh": 0.0, "sigmoid": 0.0, "softplus": 1.0, "relu": 1.0}


def _sigmoid(s):
    # split by sign to avoid overflow in exp
    s = np.asarray(s, dtype=float)
    out = np.empty_like(s)
    pos = s >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-s[pos]))
    e = np.exp(s[~pos])
    out[~pos] = e / (1.0 + e)
    return out


@dataclass(frozen=True)
class Activation:
    """Scalar activation with closed-form derivatives.

    ``growth`` is the polynomial growth exponent gamma such that every
    derivative is bounded by ``C (1 + |s|)^gamma``.
    """

    kind: str
    max_derivative_order: int | None = None
    growth: float | None = None

    def __post_init__(self):
        if self.kind not in _ACTIVATION_LIMITS:
            raise ValueError(f"unknown activation {self.kind!r}")
        limit = _ACTIVATION_LIMITS[self.kind]
        k = limit if self.max_derivative_order is None else self.max_derivative_order
        if k < 0 or k > limit:
            raise DerivativeOrderExceeded(
                f"{self.kind} supports derivatives up to order {limit}, asked for {k}"
            )
        object.__setattr__(self, "max_derivative_order", k)
        if self.growth is None:
            object.__setattr__(self, "growth", _ACTIVATION_GROWTH[self.kind])

    def __call__(self, s):
        return self.derivative(0, s)

    def derivative(self, j: int, s) -> np.ndarray:
        if j < 0 or j > self.max_derivative_order:
            raise DerivativeOrderExceeded(
                f"{self.kind}: derivative order {j} exceeds {self.max_derivative_order}"
            )
        s = np.asarray(s, dtype=float)
        if self.kind == "tanh":
            t = np.tanh(s)
            if j == 0:
                return t
            q = 1.0 - t * t
            return (q, -2.0 * t * q, -2.0 * q * (1.0 - 3.0 * t * t))[j - 1]
        if self.kind == "relu":
            return np.maximum(s, 0.0)
        sig = _sigmoid(s)
        if self.kind == "softplus":
            if j == 0:
                # log(1 + e^s) = max(s, 0) + log1p(e^{-|s|})
                return np.maximum(s, 0.0) + np.log1p(np.exp(-np.abs(s)))
            j -= 1
        if j == 0:
            return sig
        q = sig * (1.0 - sig)
        if j == 1:
            return q
        if j == 2:
            return q * (1.0 - 2.0 * sig)
        return q * (1.0 - 6.0 * sig + 6.0 * sig * sig)


# --- scalar reference evaluations ---------------------------------------------

def _trig_derivative(h: str, j: int, s):
    # derivatives of cos cycle cos, -sin, -cos, sin; sin sits at phase 3
    shift = j + (3 if h == "sin" else 0)
    phase = shift % 4
    if phase == 0:
        return np.cos(s)
    if phase == 1:
        return -np.sin(s)
    if phase == 2:
        return -np.cos(s)
    return np.sin(s)


def trig_feature_eval(h: str, theta, u, alpha: Sequence[int]) -> float:
    """``d^alpha h(theta . u) = h^(|alpha|)(theta . u) * theta^alpha``."""
    if h not in ("cos", "sin"):
        raise ValueError(f"h must be 'cos' or 'sin', got {h!r}")
    theta = np.asarray(theta, dtype=float)
    u = np.asarray(u, dtype=float)
    s = float(theta @ u)
    return float(_trig_derivative(h, order(alpha), s) * monomial(theta, alpha))


def fourier_feature_eval(theta, u, alpha: Sequence[int]) -> complex:
    theta = np.asarray(theta, dtype=float)
    u = np.asarray(u, dtype=float)
    return complex(monomial(1j * theta, alpha) * np.exp(1j * float(theta @ u)))


def neuron_feature_eval(rho: Activation, a, b: float, u, alpha: Sequence[int]) -> float:
    a = np.asarray(a, dtype=float)
    u = np.asarray(u, dtype=float)
    s = float(a @ u) - b
    return float(rho.derivative(order(alpha), s) * monomial(a, alpha))


# --- vectorised families -------------------------------------------------------

class FeatureFamily:
    """A finite set of feature maps ``g_1, ..., g_e : Theta -> (R^m -> K^d)``.

    ``params`` is always an array of shape ``(N, param_dim)``. The workhorse is
    :meth:`tensor`, which returns ``d^alpha g_{l,i}(theta_n)(V_j)`` with shape
    ``(J, d, e, N)``.
    """

    tag: str = ""
    e: int = 1
    d: int = 1
    is_complex: bool = False
    max_order: int = 10**9

    def __init__(self, m: int):
        if m < 1:
            raise ValueError("input dimension must be >= 1")
        self.m = m

    @property
    def param_dim(self) -> int:
        return self.m

    def check_order(self, k: int):
        if k > self.max_order:
            raise DerivativeOrderExceeded(
                f"{self.tag} supports derivatives up to order {self.max_order}, need {k}"
            )

    def tensor(self, params, points, alpha) -> np.ndarray:
        raise NotImplementedError

    def eval(self, theta, u, alpha, l: int = 0, i: int = 0):
        """Scalar ``d^alpha g_{l,i}(theta)(u)`` for a single parameter and point."""
        t = self.tensor(np.atleast_2d(theta), np.atleast_2d(u), tuple(alpha))
        return t[0, i, l, 0]

    def to_dict(self) -> dict:
        return {"tag": self.tag, "m": self.m}

    def __eq__(self, other):
        return type(self) is type(other) and self.to_dict() == other.to_dict()

    def __repr__(self):
        return f"{type(self).__name__}({self.to_dict()})"


class TrigFamily(FeatureFamily):
    """``{cos(theta . u), sin(theta . u)}``; feature index ``l = 0`` is cos."""

    tag = "trig"
    e = 2

    def tensor(self, params, points, alpha):
        params = np.asarray(params, dtype=float)
        points = np.asarray(points, dtype=float)
        s = points @ params.T
        j = order(alpha)
        coef = monomial(params, alpha)
        out = np.empty((points.shape[0], 1, 2, params.shape[0]))
        out[:, 0, 0, :] = _trig_derivative("cos", j, s) * coef
        out[:, 0, 1, :] = _trig_derivative("sin", j, s) * coef
        return out


class FourierFamily(FeatureFamily):
    """Single complex feature ``exp(i theta . u)``."""

    tag = "fourier"
    is_complex = True

    def tensor(self, params, points, alpha):
        params = np.asarray(params, dtype=float)
        points = np.asarray(points, dtype=float)
        coef = monomial(1j * params, alpha)
        val = np.exp(1j * (points @ params.T)) * coef
        return val[:, None, None, :]


class NeuronFamily(FeatureFamily):
    """``{e_i rho(a . u - b) : i = 1..d}`` with parameters ``(a, b)`` stacked as ``[a, b]``."""

    tag = "neuron"

    def __init__(self, m: int, activation: Activation, d: int = 1):
        super().__init__(m)
        self.activation = activation
        self.d = d
        self.e = d
        self.max_order = activation.max_derivative_order

    @property
    def param_dim(self) -> int:
        return self.m + 1

    def scalar_tensor(self, params, points, alpha) -> np.ndarray:
        """``rho^(|alpha|)(a_n . V_j - b_n) a_n^alpha`` with shape ``(J, N)``."""
        params = np.asarray(params, dtype=float)
        points = np.asarray(points, dtype=float)
        j = order(alpha)
        if j > self.max_order:
            raise DerivativeOrderExceeded(
                f"activation {self.activation.kind} supports order {self.max_order}, got {j}"
            )
        a, b = params[:, : self.m], params[:, self.m]
        s = points @ a.T - b
        return self.activation.derivative(j, s) * monomial(a, alpha)

    def tensor(self, params, points, alpha):
        base = self.scalar_tensor(params, points, alpha)
        out = np.zeros((base.shape[0], self.d, self.d, base.shape[1]))
        for i in range(self.d):
            out[:, i, i, :] = base
        return out

    def to_dict(self):
        return {
            "tag": self.tag,
            "m": self.m,
            "d": self.d,
            "activation": self.activation.kind,
            "max_derivative_order": self.activation.max_derivative_order,
        }


def family_from_dict(data: dict) -> FeatureFamily:
    tag = data["tag"]
    if tag == "trig":
        return TrigFamily(data["m"])
    if tag == "fourier":
        return FourierFamily(data["m"])
    if tag == "neuron":
        act = Activation(data["activation"], data.get("max_derivative_order"))
        return NeuronFamily(data["m"], act, data.get("d", 1))
    raise ValueError(f"unknown feature family tag {tag!r}")
