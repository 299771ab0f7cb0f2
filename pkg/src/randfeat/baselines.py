"""Fully trained (deterministic) trigonometric models and shallow tanh networks.

Both variants are trained on the plain empirical mean squared error with Adam
and closed-form gradients.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from .sampling import INIT_STREAM, SHUFFLE_STREAM, SeededStream, sample_student_t

VARIANTS = ("trig", "tanh_nn")


@dataclass
class Adam:
    lr: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    first: dict = field(default_factory=dict)
    second: dict = field(default_factory=dict)

    def update(self, params: dict, grads: dict) -> None:
        """One bias-corrected Adam step, in place."""
        self.step_count += 1
        t = self.step_count
        for name, g in grads.items():
            if name not in self.first:
                self.first[name] = np.zeros_like(params[name])
                self.second[name] = np.zeros_like(params[name])
            m1 = self.first[name]
            m2 = self.second[name]
            m1 *= self.beta1
            m1 += (1 - self.beta1) * g
            m2 *= self.beta2
            m2 += (1 - self.beta2) * g * g
            mhat = m1 / (1 - self.beta1**t)
            vhat = m2 / (1 - self.beta2**t)
            params[name] -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


class DeterministicModel:
    """Trainable inner and outer parameters.

    ``trig``: ``G(u) = sum_n y_cos[n] cos(theta_n . u) + y_sin[n] sin(theta_n . u)``.
    ``tanh_nn``: ``G(u) = sum_n y[:, n] tanh(a_n . u - b_n)``.
    """

    def __init__(self, variant: str, params: dict, m: int, N: int, d: int = 1):
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}")
        self.variant, self.m, self.N, self.d = variant, m, N, d
        self.params = {k: np.array(v, dtype=float) for k, v in params.items()}
        expected = N * m + 2 * N if variant == "trig" else N * (m + 1) + N * d
        assert self.parameter_count() == expected, "parameter count mismatch"
        self.optimizer = Adam()

    @classmethod
    def initial(cls, variant: str, m: int, N: int, seed: int = 0, d: int = 1):
        """Inner parameters from the random models' distributions, readout zero."""
        stream = SeededStream(seed, INIT_STREAM)
        if variant == "trig":
            params = {"theta": sample_student_t(m, stream, N), "readout": np.zeros((2, N))}
        elif variant == "tanh_nn":
            a = sample_student_t(m, stream, N)
            b = sample_student_t(1, stream, N)[:, 0]
            params = {"a": a, "b": b, "readout": np.zeros((d, N))}
        else:
            raise ValueError(f"unknown variant {variant!r}")
        return cls(variant, params, m, N, d)

    def parameter_count(self) -> int:
        return sum(v.size for v in self.params.values())

    def copy(self) -> "DeterministicModel":
        out = DeterministicModel(self.variant, self.params, self.m, self.N, self.d)
        return out

    def predict(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.variant == "trig":
            s = x @ self.params["theta"].T
            y = self.params["readout"]
            return (np.cos(s) @ y[0] + np.sin(s) @ y[1])[:, None]
        s = x @ self.params["a"].T - self.params["b"]
        return np.tanh(s) @ self.params["readout"].T

    def loss_and_grad(self, x, f) -> tuple[float, dict]:
        """Mean squared error over the batch and its exact gradient."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        f = np.asarray(f, dtype=float).reshape(x.shape[0], -1)
        B = x.shape[0]
        if self.variant == "trig":
            theta, y = self.params["theta"], self.params["readout"]
            s = x @ theta.T
            C, S = np.cos(s), np.sin(s)
            r = C @ y[0] + S @ y[1] - f[:, 0]
            g = 2.0 * r / B
            dy = np.stack([C.T @ g, S.T @ g])
            ds = (-S * y[0] + C * y[1]) * g[:, None]
            grads = {"theta": ds.T @ x, "readout": dy}
            return float(np.mean(r * r)), grads
        a, b, y = self.params["a"], self.params["b"], self.params["readout"]
        T = np.tanh(x @ a.T - b)
        r = T @ y.T - f
        g = 2.0 * r / B
        dT = g @ y
        ds = dT * (1.0 - T * T)
        grads = {"a": ds.T @ x, "b": -ds.sum(axis=0), "readout": g.T @ T}
        return float(np.mean(np.sum(r * r, axis=1))), grads


def adam_step(model: DeterministicModel, x, f, lr: float = 1e-5, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> DeterministicModel:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[0] == 0:
        raise ValueError("minibatch must be non-empty")
    opt = model.optimizer
    opt.lr, opt.beta1, opt.beta2, opt.eps = lr, beta1, beta2, eps
    _, grads = model.loss_and_grad(x, f)
    opt.update(model.params, grads)
    return model


def rms_error(model: DeterministicModel, x, f) -> float:
    f = np.asarray(f, dtype=float).reshape(np.atleast_2d(x).shape[0], -1)
    return float(np.sqrt(np.mean(np.sum((model.predict(x) - f) ** 2, axis=1))))


@dataclass
class TraceRow:
    epoch: int
    train_error: float
    test_error: float
    seconds: float


def train_deterministic(variant: str, N: int, x_train, f_train, x_test=None, f_test=None,
                        epochs: int = 300, lr: float = 1e-5, batch: int = 500, seed: int = 0,
                        beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
                        model: DeterministicModel | None = None, frozen=()):
    """Shuffled minibatch Adam; returns the model and a per-epoch loss trace.

    Row 0 of the trace holds the initial errors. Parameters named in ``frozen``
    are left untouched.
    """
    if epochs < 0 or batch < 1:
        raise ValueError("need epochs >= 0 and batch >= 1")
    x_train = np.atleast_2d(np.asarray(x_train, dtype=float))
    f_train = np.asarray(f_train, dtype=float).reshape(x_train.shape[0], -1)
    m = x_train.shape[1]
    if model is None:
        model = DeterministicModel.initial(variant, m, N, seed, f_train.shape[1])
    has_test = x_test is not None and f_test is not None
    shuffle = SeededStream(seed, SHUFFLE_STREAM)
    start = time.perf_counter()

    def row(epoch):
        test = rms_error(model, x_test, f_test) if has_test else float("nan")
        return TraceRow(epoch, rms_error(model, x_train, f_train), test,
                        time.perf_counter() - start)

    trace = [row(0)]
    n = x_train.shape[0]
    opt = model.optimizer
    opt.lr, opt.beta1, opt.beta2, opt.eps = lr, beta1, beta2, eps
    for epoch in range(1, epochs + 1):
        perm = shuffle.permutation(n)
        for lo in range(0, n, batch):
            idx = perm[lo : lo + batch]
            _, grads = model.loss_and_grad(x_train[idx], f_train[idx])
            for name in frozen:
                grads.pop(name, None)
            opt.update(model.params, grads)
        trace.append(row(epoch))
    return model, trace


def write_trace_csv(trace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_error", "test_error", "seconds"])
        for r in trace:
            w.writerow([r.epoch, repr(r.train_error), repr(r.test_error), f"{r.seconds:.6f}"])
