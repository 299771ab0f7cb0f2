"""Seeded random sources for feature parameters and training data.

Streams are counter-based (Philox) and keyed by ``(root_seed, stream_id)``, so
the parameter draws never share state with the data draws.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import gammaln

# conventional stream ids
INIT_STREAM = 1
DATA_STREAM = 2
TEST_STREAM = 3
SHUFFLE_STREAM = 4


@dataclass
class SeededStream:
    root_seed: int
    stream_id: int = 0
    _gen: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if not 0 <= self.root_seed < 2**64:
            raise ValueError("root_seed must be an unsigned 64-bit integer")
        ss = np.random.SeedSequence(self.root_seed, spawn_key=(self.stream_id,))
        self._gen = np.random.Generator(np.random.Philox(ss))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def child(self, stream_id: int) -> "SeededStream":
        """A fresh stream with the same root seed and a different id."""
        return SeededStream(self.root_seed, stream_id)

    def normal(self, size) -> np.ndarray:
        return self._gen.standard_normal(size)

    def uniform(self, size) -> np.ndarray:
        return self._gen.random(size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)


# --- distributions -----------------------------------------------------------


class InitDistribution:
    """Probability density on R^dim, optionally with a sampler."""

    dim: int

    def pdf(self, x) -> np.ndarray:
        raise NotImplementedError

    def sample(self, stream: SeededStream, n: int) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} has no sampler")

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class StudentT(InitDistribution):
    """Multivariate t with one degree of freedom (multivariate Cauchy) on R^m."""

    m: int

    @property
    def dim(self):
        return self.m

    def pdf(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape[-1] != self.m:
            if self.m == 1:
                x = x[..., None]
            else:
                raise ValueError(f"expected points of dimension {self.m}")
        r2 = np.sum(x * x, axis=-1)
        h = (self.m + 1) / 2
        return np.exp(gammaln(h) - h * np.log(np.pi) - h * np.log1p(r2))

    def sample(self, stream, n):
        return sample_student_t(self.m, stream, n)

    def to_dict(self):
        return {"kind": "student_t", "m": self.m}


@dataclass(frozen=True)
class StudentTPair(InitDistribution):
    """Product ``t_m (x) t_1`` on R^m x R, used for neuron weights and biases."""

    m: int

    @property
    def dim(self):
        return self.m + 1

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return StudentT(self.m).pdf(x[..., : self.m]) * StudentT(1).pdf(x[..., self.m :])

    def sample(self, stream, n):
        a = sample_student_t(self.m, stream, n)
        b = sample_student_t(1, stream, n)
        return np.hstack([a, b])

    def to_dict(self):
        return {"kind": "student_t_pair", "m": self.m}


@dataclass(frozen=True)
class Gaussian(InitDistribution):
    m: int
    sigma: float = 1.0

    @property
    def dim(self):
        return self.m

    def pdf(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape[-1] != self.m:
            if self.m == 1:
                x = x[..., None]
            else:
                raise ValueError(f"expected points of dimension {self.m}")
        r2 = np.sum(x * x, axis=-1) / self.sigma**2
        return np.exp(-0.5 * r2) / (2 * np.pi * self.sigma**2) ** (self.m / 2)

    def sample(self, stream, n):
        return self.sigma * sample_gaussian_weight(self.m, stream, n)

    def to_dict(self):
        return {"kind": "gaussian", "m": self.m, "sigma": self.sigma}


@dataclass(frozen=True)
class CustomDensity(InitDistribution):
    """Density given by a handle; used only in quadrature, never sampled."""

    m: int
    density: Callable[[np.ndarray], np.ndarray]

    @property
    def dim(self):
        return self.m

    def pdf(self, x):
        return np.asarray(self.density(np.asarray(x, dtype=float)), dtype=float)

    def to_dict(self):
        return {"kind": "custom_density", "m": self.m}


def distribution_from_dict(data: dict) -> InitDistribution:
    kind = data["kind"]
    if kind == "student_t":
        return StudentT(data["m"])
    if kind == "student_t_pair":
        return StudentTPair(data["m"])
    if kind == "gaussian":
        return Gaussian(data["m"], data.get("sigma", 1.0))
    raise ValueError(f"cannot rebuild distribution of kind {kind!r}")


def pdf(dist: InitDistribution, x) -> np.ndarray:
    return dist.pdf(x)


def sample_student_t(m: int, stream: SeededStream, n: int) -> np.ndarray:
    """``n`` draws of ``Z / |G|`` with ``Z ~ N(0, I_m)`` and independent ``G ~ N(0, 1)``."""
    if m < 1 or n < 1:
        raise ValueError("need m >= 1 and n >= 1")
    z = stream.normal((n, m))
    g = stream.normal((n, 1))
    return z / np.abs(g)


def sample_gaussian_weight(m: int, stream: SeededStream, n: int) -> np.ndarray:
    if m < 1 or n < 1:
        raise ValueError("need m >= 1 and n >= 1")
    return stream.normal((n, m))
