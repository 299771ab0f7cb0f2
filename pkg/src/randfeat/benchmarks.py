"""Heat-equation benchmark: exact solutions, experiment grid and dimension scaling."""

from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.polynomial import hermite_e
from scipy.special import gammainc
from scipy.stats import poisson

from .analysis import fit_rate
from .baselines import train_deterministic, write_trace_csv
from .features import TrigFamily
from .model import (
    InvalidTarget,
    SobolevFitSpec,
    Target,
    empirical_l2_error,
    train_random_feature_model,
    train_random_nn,
    weighted_sobolev_error,
)
from .sampling import DATA_STREAM, TEST_STREAM, Gaussian, SeededStream

CSV_COLUMNS = ["class", "m", "N", "J", "seed", "train_err", "test_err", "wall_seconds", "op_units"]
TIMING_COLUMNS = ("wall_seconds",)
MODEL_CLASSES = ("RTF", "RN_tanh", "det_trig", "det_tanh")


class SeriesNotConverged(ArithmeticError):
    pass


class BudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class HeatProblem:
    """``df/dt = lam * Laplacian f`` on ``R^m`` from a ball indicator or a Gaussian bump.

    ``R`` defaults to ``4 m^0.4``. With ``initial="gaussian"`` the initial
    condition is ``exp(-|u|^2 / (2 R^2))``.
    """

    m: int
    lam: float = 4.0
    t: float = 1.0
    R: float | None = None
    initial: str = "ball"

    def __post_init__(self):
        if self.m < 1 or self.lam <= 0 or self.t <= 0:
            raise ValueError("need m >= 1, lam > 0 and t > 0")
        if self.R is None:
            object.__setattr__(self, "R", 4.0 * self.m**0.4)
        if self.initial not in ("ball", "gaussian"):
            raise ValueError(f"unknown initial condition {self.initial!r}")

    @property
    def sigma(self) -> float:
        """Standard deviation of the heat kernel, ``sqrt(2 lam t)``."""
        return math.sqrt(2 * self.lam * self.t)

    @property
    def cod_condition(self) -> bool:
        """Whether ``R^2 <= sqrt(lam t) / (sqrt(2) e) * (m + 2)``."""
        return self.R**2 <= math.sqrt(self.lam * self.t) / (math.sqrt(2) * math.e) * (self.m + 2)


def _check_points(problem, u):
    u = np.atleast_2d(np.asarray(u, dtype=float))
    if u.shape[1] != problem.m:
        if problem.m == 1:
            u = u.reshape(-1, 1)
        else:
            raise ValueError(f"expected points of dimension {problem.m}")
    return u


def noncentral_chi2_cdf(x: float, df: int, nc, tail_mass: float = 1e-12,
                        max_terms: int = 10**6, widen: float = 1.0) -> np.ndarray:
    """``P(chi'^2_df(nc) <= x)`` as a Poisson mixture of central chi-square CDFs.

    The Poisson index is cut on both sides where the neglected Poisson mass is
    below ``tail_mass``, which bounds the truncation error by ``2 tail_mass``.
    ``widen`` stretches the kept index window about its centre, for checking
    that longer series do not change the result.
    """
    nc = np.atleast_1d(np.asarray(nc, dtype=float))
    mu = nc / 2
    lo = poisson.ppf(tail_mass, mu)
    hi = poisson.isf(tail_mass, mu)
    lo = np.where(np.isfinite(lo), lo, 0)
    if not np.all(np.isfinite(hi)) or np.max(hi - lo) * widen > max_terms:
        raise SeriesNotConverged("Poisson mixture needs too many terms")
    if widen != 1.0:
        mid, half = (lo + hi) / 2, widen * (hi - lo + 1) / 2
        lo, hi = np.maximum(np.floor(mid - half), 0), np.ceil(mid + half)
    lo, hi = lo.astype(np.int64), hi.astype(np.int64)
    out = np.empty_like(mu)
    # group the work into chunks so the (points x terms) table stays small
    for start in range(0, mu.size, 4096):
        sl = slice(start, start + 4096)
        j0, j1 = int(lo[sl].min()), int(hi[sl].max())
        j = np.arange(j0, j1 + 1)
        w = poisson.pmf(j[None, :], mu[sl, None])
        inside = (j[None, :] >= lo[sl, None]) & (j[None, :] <= hi[sl, None])
        cdf = gammainc(df / 2 + j, x / 2)
        out[sl] = np.sum(np.where(inside, w, 0.0) * cdf[None, :], axis=1)
    if not np.all(np.isfinite(out)):
        raise SeriesNotConverged("non-finite series value")
    return np.clip(out, 0.0, 1.0)


def heat_solution(problem: HeatProblem, u, tail_mass: float = 1e-12,
                  widen: float = 1.0) -> np.ndarray:
    """``f(t, u)`` at points ``u`` of shape ``(M, m)``."""
    u = _check_points(problem, u)
    s2 = problem.sigma**2
    r2 = np.sum(u * u, axis=1)
    if problem.initial == "gaussian":
        v = problem.R**2 + s2
        return (problem.R**2 / v) ** (problem.m / 2) * np.exp(-r2 / (2 * v))
    return noncentral_chi2_cdf(problem.R**2 / s2, problem.m, r2 / s2, tail_mass, widen=widen)


def heat_solution_mc(problem: HeatProblem, u, n: int, stream: SeededStream,
                     chunk: int = 200_000):
    """Monte Carlo ``P(|u + sigma Z| <= R)`` per point; returns ``(mean, stderr)``."""
    u = _check_points(problem, u)
    means, ses = [], []
    for point in u:
        hits = 0
        left = n
        while left:
            b = min(chunk, left)
            z = point + problem.sigma * stream.normal((b, problem.m))
            if problem.initial == "gaussian":
                hits += np.sum(np.exp(-np.sum(z * z, axis=1) / (2 * problem.R**2)))
            else:
                hits += np.count_nonzero(np.sum(z * z, axis=1) <= problem.R**2)
            left -= b
        p = hits / n
        means.append(p)
        ses.append(math.sqrt(max(p * (1 - p), 0.0) / n))
    return np.array(means), np.array(ses)


class HeatTarget(Target):
    """The heat solution as a training target.

    The ball problem supplies values only; the Gaussian problem supplies every
    derivative through Hermite polynomials.
    """

    def __init__(self, problem: HeatProblem):
        self.problem = problem
        self.m, self.d = problem.m, 1

    def derivative(self, points, alpha):
        base = heat_solution(self.problem, points)
        if not any(alpha):
            return base[:, None]
        if self.problem.initial != "gaussian":
            raise InvalidTarget("ball initial condition provides values only")
        s = math.sqrt(self.problem.R**2 + self.problem.sigma**2)
        out = base
        for l, a in enumerate(alpha):
            if a:
                coef = np.zeros(a + 1)
                coef[a] = 1.0
                out = out * (-1 / s) ** a * hermite_e.hermeval(points[:, l] / s, coef)
        return out[:, None]


# --- experiment grid ----------------------------------------------------------------


@dataclass
class HeatExperimentConfig:
    classes: tuple = MODEL_CLASSES
    ms: tuple = (1, 5)
    Ns: tuple = (10, 50, 200)
    J: int = 20_000
    seeds: tuple = (0,)
    train_fraction: float = 0.8
    epochs: int = 300
    lr: float = 1e-5
    batch: int = 500
    lam: float = 4.0
    t: float = 1.0
    k: int = 0
    c_rule: str = "uniform"
    L: float | None = None
    threads: int = 1
    slice_points: int = 101
    slice_range: float = 10.0
    write_traces: bool = False


@dataclass
class ExperimentReport:
    rows: list = field(default_factory=list)
    slices: dict = field(default_factory=dict)
    traces: dict = field(default_factory=dict)
    summary: str = ""

    def csv_text(self, columns=CSV_COLUMNS) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for r in self.rows:
            w.writerow([_fmt(r[c]) for c in columns])
        return buf.getvalue()

    def median(self, cls: str, m: int, N: int, key: str = "test_err") -> float:
        vals = [r[key] for r in self.rows if (r["class"], r["m"], r["N"]) == (cls, m, N)]
        if not vals:
            raise KeyError((cls, m, N))
        return float(np.median(vals))

    def write(self, out_dir, gnuplot: bool = True) -> list:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = [out / "results.csv", out / "summary.txt"]
        paths[0].write_text(self.csv_text())
        paths[1].write_text(self.summary)
        for m, (header, table) in sorted(self.slices.items()):
            p = out / f"slice_m{m}.csv"
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(header)
            for row in table:
                w.writerow([_fmt(v) for v in row])
            p.write_text(buf.getvalue())
            paths.append(p)
            if gnuplot:
                g = out / f"slice_m{m}.gp"
                g.write_text(_gnuplot_script(p.name, header))
                paths.append(g)
        for name, trace in sorted(self.traces.items()):
            p = out / f"trace_{name}.csv"
            write_trace_csv(trace, p)
            paths.append(p)
        return paths


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _gnuplot_script(csv_name: str, header) -> str:
    lines = ["set datafile separator ','", "set key outside", "set xlabel 'u1'",
             f"plot '{csv_name}' using 1:2 with lines title 'truth'"]
    for i, name in enumerate(header[2:], start=3):
        lines[-1] += f", '' using 1:{i} with lines title '{name}'"
    return "\n".join(lines) + "\n"


def _heat_data(problem: HeatProblem, J: int, seed: int, train_fraction: float):
    x = Gaussian(problem.m).sample(SeededStream(seed, DATA_STREAM), J)
    f = heat_solution(problem, x)
    n_train = int(round(train_fraction * J))
    return x[:n_train], f[:n_train], x[n_train:], f[n_train:]


def _run_cell(cfg: HeatExperimentConfig, cls: str, m: int, N: int, seed: int, data):
    problem = HeatProblem(m, cfg.lam, cfg.t)
    target = HeatTarget(problem)
    x_tr, f_tr, x_te, f_te = data
    start = time.perf_counter()
    trace = None
    if cls in ("RTF", "RN_tanh"):
        spec = SobolevFitSpec(m, cfg.k, cfg.c_rule, Gaussian(m), cfg.L)
        if cls == "RTF":
            model = train_random_feature_model(TrigFamily(m), N, target, len(x_tr), spec,
                                               seed=seed, data=x_tr)
        else:
            model = train_random_nn(N, target, len(x_tr), spec, "tanh", seed=seed, data=x_tr)
        wall = time.perf_counter() - start
        train_err = empirical_l2_error(model, target, x_tr)
        test_err = empirical_l2_error(model, target, x_te)
        ops = model.ledger.total
        predict = lambda u: model(u)[:, 0].real  # noqa: E731
    elif cls in ("det_trig", "det_tanh"):
        variant = "trig" if cls == "det_trig" else "tanh_nn"
        model, trace = train_deterministic(variant, N, x_tr, f_tr, x_te, f_te, cfg.epochs,
                                           cfg.lr, cfg.batch, seed)
        wall = time.perf_counter() - start
        train_err, test_err = trace[-1].train_error, trace[-1].test_error
        # forward plus backward pass per sample and epoch
        ops = 6 * cfg.epochs * len(x_tr) * model.parameter_count()
        predict = lambda u: model.predict(u)[:, 0]  # noqa: E731
    else:
        raise ValueError(f"unknown model class {cls!r}")
    row = {"class": cls, "m": m, "N": N, "J": cfg.J, "seed": seed, "train_err": float(train_err),
           "test_err": float(test_err), "wall_seconds": wall, "op_units": int(math.ceil(ops))}
    return row, predict, trace


def run_heat_experiment(cfg: HeatExperimentConfig) -> ExperimentReport:
    """Train every (class, m, N, seed) cell on the heat benchmark.

    Data come from stream ``(seed, DATA_STREAM)``, shared by all classes and
    feature counts; the first ``train_fraction`` of the samples train, the rest
    test. Cells run on a thread pool; rows keep grid order.
    """
    for cls in cfg.classes:
        if cls not in MODEL_CLASSES:
            raise ValueError(f"unknown model class {cls!r}")
    data = {(m, s): _heat_data(HeatProblem(m, cfg.lam, cfg.t), cfg.J, s, cfg.train_fraction)
            for m in cfg.ms for s in cfg.seeds}
    cells = [(cls, m, N, s) for m in cfg.ms for cls in cfg.classes for N in cfg.Ns
             for s in cfg.seeds]
    with ThreadPoolExecutor(max_workers=max(1, cfg.threads)) as pool:
        results = list(pool.map(lambda c: _run_cell(cfg, *c, data[(c[1], c[3])]), cells))
    report = ExperimentReport(rows=[r[0] for r in results])
    for (cls, m, N, s), (_, _, trace) in zip(cells, results):
        if trace is not None and cfg.write_traces:
            report.traces[f"{cls}_m{m}_N{N}_s{s}"] = trace
    if cfg.slice_points > 0:
        for m in cfg.ms:
            u1 = np.linspace(-cfg.slice_range, cfg.slice_range, cfg.slice_points)
            pts = np.full((u1.size, m), 0.5)
            pts[:, 0] = u1
            header = ["u1", "truth"]
            cols = [u1, heat_solution(HeatProblem(m, cfg.lam, cfg.t), pts)]
            for (cls, mm, N, s), (_, predict, _) in zip(cells, results):
                if mm == m and s == cfg.seeds[0]:
                    header.append(f"{cls}_N{N}")
                    cols.append(np.asarray(predict(pts), dtype=float))
            report.slices[m] = (header, [list(map(float, r)) for r in zip(*cols)])
    report.summary = summarize(report, cfg)
    return report


def summarize(report: ExperimentReport, cfg: HeatExperimentConfig) -> str:
    lines = [f"heat benchmark: lam={cfg.lam}, t={cfg.t}, J={cfg.J}, seeds={list(cfg.seeds)}", ""]
    lines.append(f"{'class':<10}{'m':>4}{'N':>6}{'median test':>16}{'median train':>16}"
                 f"{'median secs':>14}")
    for m in cfg.ms:
        for cls in cfg.classes:
            for N in cfg.Ns:
                lines.append(f"{cls:<10}{m:>4}{N:>6}"
                             f"{report.median(cls, m, N):>16.4e}"
                             f"{report.median(cls, m, N, 'train_err'):>16.4e}"
                             f"{report.median(cls, m, N, 'wall_seconds'):>14.3f}")
    for m in cfg.ms:
        p = HeatProblem(m, cfg.lam, cfg.t)
        lines.append(f"m={m}: R={p.R:.4f}, scaling condition holds: {p.cod_condition}")
    return "\n".join(lines) + "\n"


# --- dimension scaling ------------------------------------------------------------------


@dataclass
class CodResult:
    rows: list
    slope: float | None
    condition: dict


def _median_test_error(problem, N, J, seeds, test_size):
    target = HeatTarget(problem)
    spec = SobolevFitSpec(problem.m, 0, "uniform", Gaussian(problem.m))
    errs = []
    for s in seeds:
        model = train_random_feature_model(TrigFamily(problem.m), N, target, J, spec, seed=s)
        x = Gaussian(problem.m).sample(SeededStream(s, TEST_STREAM), test_size)
        errs.append(empirical_l2_error(model, target, x))
    return float(np.median(errs))


def required_features(problem: HeatProblem, eps: float, J: int = 20_000, seeds=(0, 1, 2),
                      N0: int = 4, cap: int = 4096, test_size: int = 5000) -> int:
    """Smallest ``N`` (doubling, then bisection) with median test error ``<= eps``."""
    cache = {}

    def ok(N):
        if N not in cache:
            cache[N] = _median_test_error(problem, N, J, seeds, test_size)
        return cache[N] <= eps

    if ok(N0):
        return N0
    hi = N0
    while not ok(hi):
        if hi >= cap:
            raise BudgetExceeded(f"m={problem.m}: error {cache[hi]:.3e} > {eps} at N={hi}")
        hi = min(2 * hi, cap)
    lo = hi // 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def cod_scaling_check(dimensions, eps: float, lam: float = 4.0, t: float = 1.0,
                      **kwargs) -> CodResult:
    """``N`` needed for median test error ``eps`` per dimension, with a log-log fit in ``m``."""
    rows, cond = [], {}
    for m in dimensions:
        p = HeatProblem(m, lam, t)
        cond[m] = p.cod_condition
        rows.append((m, required_features(p, eps, **kwargs)))
    slope = None
    if len(rows) >= 3:
        slope = fit_rate(rows)[0]
    elif len(rows) == 2:
        (m0, n0), (m1, n1) = rows
        slope = math.log(n1 / n0) / math.log(m1 / m0)
    return CodResult(rows, slope, cond)


# --- convergence in N and J ---------------------------------------------------------------


def median_test_errors(family, target, Ns, Js, seeds, k: int = 0, test_points: int = 10_000,
                       init=None) -> dict:
    """Median (over seeds) Monte Carlo test error for every ``(N, J)`` pair.

    Training uses streams of each seed; the test points come from
    ``(seed, TEST_STREAM)`` and are never used for training.
    """
    spec = SobolevFitSpec(family.m, k, "uniform", Gaussian(family.m))
    out = {}
    for N in Ns:
        for J in Js:
            errs = []
            for s in seeds:
                model = train_random_feature_model(family, N, target, J, spec, seed=s, init=init)
                errs.append(weighted_sobolev_error(model, target, spec, test_points,
                                                   SeededStream(s, TEST_STREAM)))
            out[(N, J)] = float(np.median(errs))
    return out


def count_inversions(values) -> int:
    """Number of consecutive increases in a sequence that should be non-increasing."""
    return int(sum(b > a for a, b in zip(values, values[1:])))
