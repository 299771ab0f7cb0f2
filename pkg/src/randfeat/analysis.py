"""Quadrature for transforms and constants: Fourier transforms, Barron-type
constants, the ridgelet transform and its reconstruction at m = 1, the
admissibility constant, product-weight constants and rate fits.

Fourier transforms use the angular, non-unitary convention
``f^(xi) = int exp(-i xi u) f(u) du`` with inverse
``f(u) = (1 / 2 pi) int f^(xi) exp(i xi u) dxi``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

from .features import Activation, TrigFamily
from .model import RandomFeatureModel
from .sampling import INIT_STREAM, InitDistribution, SeededStream, StudentT


class ToleranceNotReached(RuntimeError):
    pass


class Divergent(RuntimeError):
    pass


class NotAdmissible(ValueError):
    pass


class NonPositiveError(ValueError):
    pass


@lru_cache(maxsize=None)
def _gauss_legendre(n: int):
    return np.polynomial.legendre.leggauss(n)


@dataclass
class QuadratureGrid:
    """Composite Gauss-Legendre rule on ``[lo, hi]``.

    Panels are equal-width, except that every breakpoint inside the interval
    starts a new panel. :meth:`integrate` doubles the panel count until two
    successive values agree to ``tol`` (relative to ``max(1, |value|)``).
    """

    lo: float = -40.0
    hi: float = 40.0
    panels: int = 16
    nodes: int = 32
    breakpoints: tuple = ()
    tol: float = 1e-10
    max_doublings: int = 6
    last_error: float = field(default=float("nan"), compare=False)

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ValueError("need lo < hi")
        if self.panels < 1 or self.nodes < 1:
            raise ValueError("need at least one panel and one node")

    def edges(self, panels: int | None = None) -> np.ndarray:
        panels = self.panels if panels is None else panels
        e = np.linspace(self.lo, self.hi, panels + 1)
        inner = [b for b in self.breakpoints if self.lo < b < self.hi]
        return np.unique(np.concatenate([e, inner]))

    def nodes_weights(self, panels: int | None = None):
        x, w = _gauss_legendre(self.nodes)
        e = self.edges(panels)
        half = np.diff(e)[:, None] / 2
        mid = (e[1:] + e[:-1])[:, None] / 2
        return (half * x + mid).ravel(), (half * w).ravel()

    def integrate(self, func: Callable) -> complex | float:
        """Integrate a vectorised ``func`` with the node-doubling gate."""
        x, w = self.nodes_weights()
        prev = np.sum(w * func(x))
        panels = self.panels
        for _ in range(self.max_doublings):
            panels *= 2
            x, w = self.nodes_weights(panels)
            cur = np.sum(w * func(x))
            err = abs(cur - prev)
            if err <= self.tol * max(1.0, abs(cur)):
                self.last_error = float(err)
                return cur
            prev = cur
        raise ToleranceNotReached(
            f"no convergence on [{self.lo}, {self.hi}] after {self.max_doublings} "
            f"doublings (last change {err:.3e})"
        )

    def with_domain(self, lo: float, hi: float) -> "QuadratureGrid":
        return QuadratureGrid(lo, hi, self.panels, self.nodes, self.breakpoints, self.tol,
                              self.max_doublings)


# --- Fourier transforms ---------------------------------------------------------------


def _oscillation_grid(grid: QuadratureGrid | None, xi: float) -> QuadratureGrid:
    grid = QuadratureGrid() if grid is None else grid
    # keep a few panels per period so the first estimate is already resolved
    need = int(math.ceil(abs(xi) * (grid.hi - grid.lo) / math.pi))
    if need > grid.panels:
        grid = QuadratureGrid(grid.lo, grid.hi, need, grid.nodes, grid.breakpoints,
                              grid.tol, grid.max_doublings)
    return grid


def fourier_transform_1d(f: Callable, xi: float, grid: QuadratureGrid | None = None) -> complex:
    """``int exp(-i xi u) f(u) du`` over the grid's domain."""
    grid = _oscillation_grid(grid, xi)
    return complex(grid.integrate(lambda u: np.exp(-1j * xi * u) * f(u)))


def inverse_fourier_transform_1d(fhat: Callable, u: float,
                                 grid: QuadratureGrid | None = None) -> complex:
    grid = _oscillation_grid(grid, u)
    return complex(grid.integrate(lambda xi: np.exp(1j * xi * u) * fhat(xi))) / (2 * math.pi)


# --- Barron constants -------------------------------------------------------------------


def _density(p) -> Callable:
    return p.pdf if isinstance(p, InitDistribution) else p


def barron_constant_trig(fhat: Callable, p_theta, r: float = 2.0, k: int = 0, m: int = 1,
                         grid: QuadratureGrid | None = None) -> float:
    """``(int |f^|^r (1 + |t|^2)^{k r / 2} / p^{r - 1} dt)^{1/r}`` for ``m`` in {1, 2}.

    ``fhat`` takes points of shape ``(n,)`` for m = 1 and ``(n, 2)`` for m = 2.
    The value is also computed on the doubled domain; if it moves by more than
    the tolerance the integral is declared divergent.
    """
    if r < 1:
        raise ValueError("r must be >= 1")
    grid = QuadratureGrid() if grid is None else grid
    pdf = _density(p_theta)

    def integrand(t):
        t = np.asarray(t, dtype=float)
        sq = t * t if t.ndim == 1 else np.sum(t * t, axis=-1)
        val = np.abs(fhat(t)) ** r * (1 + sq) ** (k * r / 2)
        if r != 1:
            val = val / pdf(t) ** (r - 1)
        return val

    def total(g):
        if m == 1:
            return g.integrate(integrand)
        if m == 2:
            return _integrate_2d(integrand, g)
        raise ValueError("only m = 1 and m = 2 are supported")

    base = total(grid)
    wide = total(grid.with_domain(2 * grid.lo, 2 * grid.hi))
    if not np.isfinite(wide) or abs(wide - base) > 1e-8 * max(1.0, abs(wide)):
        raise Divergent(f"integral keeps growing with the domain ({base:.6e} -> {wide:.6e})")
    return float(wide) ** (1 / r)


def barron_constant_cauchy_r2(fhat: Callable, k: int = 0,
                              grid: QuadratureGrid | None = None) -> float:
    """m = 1, r = 2, Cauchy density substituted: ``(pi int |f^|^2 (1 + t^2)^{k+1})^{1/2}``."""
    grid = QuadratureGrid() if grid is None else grid
    val = grid.integrate(lambda t: np.abs(fhat(t)) ** 2 * (1 + t * t) ** (k + 1))
    return float(math.sqrt(math.pi * val))


def _integrate_2d(func, grid: QuadratureGrid, max_doublings: int = 4):
    prev = None
    panels = grid.panels
    for _ in range(max_doublings + 1):
        x, w = grid.nodes_weights(panels)
        X, Y = np.meshgrid(x, x, indexing="ij")
        pts = np.stack([X.ravel(), Y.ravel()], axis=1)
        cur = float(np.sum(np.outer(w, w).ravel() * func(pts)))
        if prev is not None and abs(cur - prev) <= grid.tol * max(1.0, abs(cur)):
            return cur
        prev = cur
        panels *= 2
    raise ToleranceNotReached("2-d quadrature did not converge")


def barron_readout_model(fhat: Callable, N: int, seed: int = 0) -> RandomFeatureModel:
    """Monte Carlo trig model of a real 1-d target from its Fourier transform.

    With ``theta_n ~ t_1`` the readouts ``f^(theta_n) / (2 pi p(theta_n) N)``
    split into cosine and sine parts give an unbiased estimator of the target.
    """
    dist = StudentT(1)
    theta = dist.sample(SeededStream(seed, INIT_STREAM), N)
    t = theta[:, 0]
    y = fhat(t) / (2 * math.pi * dist.pdf(t) * N)
    readout = np.stack([np.real(y), -np.imag(y)])
    return RandomFeatureModel(TrigFamily(1), theta, readout, 0, {"seed": seed, "algorithm": "barron"})


# --- ridgelets -------------------------------------------------------------------------


@dataclass
class RidgeletProfile:
    """Smooth bump ``psi^`` supported on ``[zeta1, zeta2]`` and its inverse transform ``psi``.

    ``psi`` is computed by Gauss-Legendre quadrature over the support. For bulk
    evaluation a table with step ``h`` on ``[-halfwidth, halfwidth]`` is built
    on first use and interpolated linearly; outside the table ``psi`` is taken
    as zero (its magnitude there is below 1e-8).
    """

    zeta1: float = 1.0
    zeta2: float = 2.0
    h: float = 0.005
    halfwidth: float = 400.0
    _table: tuple | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if not 0 < self.zeta1 < self.zeta2:
            raise ValueError("need 0 < zeta1 < zeta2")

    def psi_hat(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        tau = (2 * xi - (self.zeta1 + self.zeta2)) / (self.zeta2 - self.zeta1)
        out = np.zeros_like(xi)
        inside = np.abs(tau) < 1
        out[inside] = np.exp(-1.0 / (1.0 - tau[inside] ** 2))
        return out

    def _support_rule(self, panels: int = 8, nodes: int = 32):
        return QuadratureGrid(self.zeta1, self.zeta2, panels, nodes).nodes_weights()

    def psi(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        om, w = self._support_rule()
        vals = np.exp(1j * np.multiply.outer(x, om)) @ (w * self.psi_hat(om))
        return vals / (2 * math.pi)

    def table(self):
        if self._table is None:
            xs = np.arange(-self.halfwidth, self.halfwidth + self.h / 2, self.h)
            vals = np.concatenate([self.psi(c) for c in np.array_split(xs, 64)])
            self._table = (xs, vals)
        return self._table

    def psi_interp(self, x) -> np.ndarray:
        xs, vals = self.table()
        return (np.interp(x, xs, vals.real, left=0.0, right=0.0)
                + 1j * np.interp(x, xs, vals.imag, left=0.0, right=0.0))

    def moment(self, j: int, window: float = 20.0) -> complex:
        """``int u^j psi(u) exp(-(u/window)^2) du``.

        ``psi`` decays slower than any Gaussian, so a hard cutoff leaks; the
        Gaussian window converges to the plain moment as ``window`` grows.
        """
        lim = 8 * window
        grid = QuadratureGrid(-lim, lim, int(lim), 32, tol=1e-9)
        return complex(grid.integrate(lambda u: u**j * self.psi(u) * np.exp(-(u / window) ** 2)))


def ridgelet_transform_1d(profile: RidgeletProfile, f: Callable, a: float, b: float,
                          grid: QuadratureGrid | None = None) -> complex:
    """``|a| int psi(a u - b) f(u) du``."""
    if a == 0:
        return 0j
    grid = _oscillation_grid(grid, 2 * profile.zeta2 * a)
    val = grid.integrate(lambda u: profile.psi(a * u - b) * f(u))
    return complex(abs(a) * val)


# closed forms of the activations' Fourier transforms away from the origin
_ACTIVATION_TRANSFORMS = {
    "tanh": lambda xi: -1j * np.pi / np.sinh(np.pi * xi / 2),
    "sigmoid": lambda xi: -1j * np.pi / np.sinh(np.pi * xi),
    "softplus": lambda xi: -np.pi / (xi * np.sinh(np.pi * xi)) + 0j,
    "relu": lambda xi: -1.0 / xi**2 + 0j,
}


def activation_fourier_transform(activation: Activation | str) -> Callable:
    """Handle for the activation's distributional Fourier transform on ``R \\ {0}``."""
    kind = activation if isinstance(activation, str) else activation.kind
    if kind not in _ACTIVATION_TRANSFORMS:
        raise ValueError(f"no transform for activation {kind!r}")
    fn = _ACTIVATION_TRANSFORMS[kind]

    def handle(xi):
        xi = np.asarray(xi, dtype=float)
        if np.any(xi == 0):
            raise ValueError("transform is only defined away from 0")
        return fn(xi)

    return handle


def cutoff_transform(activation: Activation | str, xi: float,
                     widths=(16.0, 24.0, 32.0)) -> complex:
    """Transform of ``rho`` through a Gaussian cutoff, extrapolated in the width.

    Computes ``F[rho(s) exp(-(s/W)^2)](xi)`` for each ``W`` and removes the
    leading ``1/W^2`` error terms by polynomial extrapolation to ``1/W^2 = 0``.
    """
    rho = Activation(activation) if isinstance(activation, str) else activation
    vals = []
    for W in widths:
        lim = 7.0 * W
        g = QuadratureGrid(-lim, lim, int(4 * lim), 32, breakpoints=(0.0,), tol=1e-11)
        vals.append(fourier_transform_1d(lambda s: rho(s) * np.exp(-(s / W) ** 2), xi, g))
    x = 1.0 / np.asarray(widths) ** 2
    vals = np.asarray(vals)
    coef_re = np.polyfit(x, vals.real, len(widths) - 1)
    coef_im = np.polyfit(x, vals.imag, len(widths) - 1)
    return complex(coef_re[-1], coef_im[-1])


def admissibility_constant(profile: RidgeletProfile, activation: Activation | str, m: int = 1,
                           nodes: int = 32, panels: int = 8, tol: float = 1e-12) -> complex:
    """``(2 pi)^{m-1} int conj(psi^(xi)) F[rho](xi) / |xi|^m dxi``.

    Integrated over the support of ``psi^``; accepted once two resolutions agree
    to 1e-10 relative.
    """
    fT = activation_fourier_transform(activation)
    grid = QuadratureGrid(profile.zeta1, profile.zeta2, panels, nodes, tol=1e-10)
    val = grid.integrate(lambda xi: np.conj(profile.psi_hat(xi)) * fT(xi) / np.abs(xi) ** m)
    C = (2 * math.pi) ** (m - 1) * complex(val)
    if abs(C) <= tol:
        raise NotAdmissible(f"|C| = {abs(C):.3e} is below {tol:.1e}")
    return C


def admissibility_lower_bound(profile: RidgeletProfile, activation, ms=(1, 2, 3)):
    """Fit ``C`` from ``|C_1| = C (2 pi / zeta2)`` and test ``|C_m| >= C (2 pi / zeta2)^m``.

    Returns ``(C, {m: (|C_m|, bound, holds)})``.
    """
    q = 2 * math.pi / profile.zeta2
    c = abs(admissibility_constant(profile, activation, 1)) / q
    out = {}
    for m in ms:
        val = abs(admissibility_constant(profile, activation, m))
        bound = c * q**m
        out[m] = (val, bound, val >= bound * (1 - 1e-12))
    return c, out


def ridgelet_reconstruct_1d(profile: RidgeletProfile, f: Callable, activation, u,
                            A: float = 5.0, B: float = 40.0, v_range: float = 10.0,
                            nodes: int = 16) -> np.ndarray:
    """Reconstruct ``f(u)`` from its ridgelet coefficients against ``rho``.

    Evaluates ``(1/C_1) int int T(a, b) rho(a u - b) / |a| db da`` on
    ``[-A, A] x [-B, B]``, where ``T`` is the ridgelet transform taken with the
    conjugate profile; the ``1/|a|`` weight cancels the ``|a|`` inside ``T``.
    ``f`` must be negligible outside ``[-v_range, v_range]``.
    """
    rho = Activation(activation) if isinstance(activation, str) else activation
    u = np.atleast_1d(np.asarray(u, dtype=float))
    C1 = admissibility_constant(profile, rho, 1)
    v, wv = QuadratureGrid(-v_range, v_range, int(2 * v_range), nodes).nodes_weights()
    a, wa = QuadratureGrid(-A, A, int(4 * A), nodes).nodes_weights()
    b, wb = QuadratureGrid(-B, B, int(2 * B), nodes).nodes_weights()
    fv = wv * f(v)
    total = np.zeros(u.shape, dtype=complex)
    for ai, wai in zip(a, wa):
        T = np.conj(profile.psi_interp(ai * v[None, :] - b[:, None])) @ fv
        act = rho(ai * u[:, None] - b[None, :])
        total += wai * (act @ (wb * T))
    return total / C1


# --- weight constants and rates ---------------------------------------------------------


def product_weight_base_constant(w0, gamma: float, p: float,
                                 grid: QuadratureGrid | None = None) -> float:
    """``(int (1 + |s|)^{gamma p} w0(s) ds)^{1/p}`` for a normalised 1-d weight ``w0``."""
    if p < 1:
        raise ValueError("p must be >= 1")
    pdf = _density(w0)
    grid = QuadratureGrid(breakpoints=(0.0,)) if grid is None else grid

    def moments(g):
        mass = g.integrate(lambda s: pdf(s))
        weighted = g.integrate(lambda s: (1 + np.abs(s)) ** (gamma * p) * pdf(s))
        return float(mass), float(weighted)

    mass, val = moments(grid)
    _, wide = moments(grid.with_domain(2 * grid.lo, 2 * grid.hi))
    if not np.isfinite(wide) or abs(wide - val) > 1e-6 * max(1.0, abs(wide)):
        raise Divergent("weighted moment keeps growing with the domain")
    if abs(mass - 1) > 1e-8:
        raise ValueError(f"weight integrates to {mass:.10f}, expected 1")
    # dividing by the computed mass makes gamma = 0 exactly 1
    return (val / mass) ** (1 / p)


def product_weight_constant(w0, gamma: float, p: float, m: int,
                            grid: QuadratureGrid | None = None) -> float:
    """Bound ``C_base * m^{gamma + 1/p}`` for the product weight on ``R^m``."""
    if m < 1:
        raise ValueError("m must be >= 1")
    return product_weight_base_constant(w0, gamma, p, grid) * m ** (gamma + 1 / p)


def fit_rate(errors) -> tuple[float, float, float]:
    """OLS fit of ``ln error = intercept + slope ln N``; returns ``(slope, intercept, R^2)``."""
    pts = np.asarray(list(errors), dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 3:
        raise ValueError("need at least three (N, error) pairs")
    if np.any(pts <= 0):
        raise NonPositiveError("N and errors must be positive")
    x, y = np.log(pts[:, 0]), np.log(pts[:, 1])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (intercept + slope * x)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), float(r2)


def barron_ridgelet_bound_1d(fhat_derivatives, activation: Activation | str, r: float = 2.0,
                             k: int = 0, profile: RidgeletProfile | None = None,
                             n_zeta: int = 64, grid: QuadratureGrid | None = None) -> float:
    """Ridgelet-based Barron bound at m = 1, without its non-explicit leading constant.

    ``fhat_derivatives[beta]`` is ``d^beta f^`` for ``beta = 0 .. ceil(gamma) + 2``
    where ``gamma`` is the activation's growth exponent. The density of the
    weights is the Cauchy density, and the supremum over ``zeta`` in the
    profile's support is taken on ``n_zeta`` points.
    """
    rho = Activation(activation) if isinstance(activation, str) else activation
    profile = RidgeletProfile() if profile is None else profile
    grid = QuadratureGrid() if grid is None else grid
    gc = int(math.ceil(rho.growth))
    need = gc + 2
    if len(fhat_derivatives) < need + 1:
        raise ValueError(f"need derivatives of f^ up to order {need}")
    theta_a = StudentT(1).pdf
    expo = (2 * gc + k + 3) * r / 2
    best = 0.0
    for zeta in np.linspace(profile.zeta1, profile.zeta2, n_zeta):
        total = 0.0
        for beta in range(need + 1):
            fb = fhat_derivatives[beta]

            def integrand(xi, fb=fb, zeta=zeta):
                s = xi / zeta
                return np.abs(fb(xi)) ** r * (1 + s * s) ** expo / theta_a(s) ** (r - 1)

            total += float(grid.integrate(integrand)) ** (1 / r)
        best = max(best, total)
    return best / profile.zeta1 ** (1 / r)
