"""Command line runner: ``randfeat run --config FILE`` and ``randfeat inspect MODEL``."""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import io
import json
import logging
import math
import os
import platform
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .analysis import (
    RidgeletProfile,
    admissibility_lower_bound,
    barron_constant_trig,
    fit_rate,
    product_weight_base_constant,
    ridgelet_reconstruct_1d,
)
from .benchmarks import (
    MODEL_CLASSES,
    HeatExperimentConfig,
    HeatProblem,
    HeatTarget,
    cod_scaling_check,
    run_heat_experiment,
)
from .features import FourierFamily, TrigFamily
from .model import (
    GaussianTarget,
    ModelFormatError,
    SobolevFitSpec,
    load_model,
    save_model,
    train_random_feature_model,
    train_random_nn,
    training_points,
    weighted_sobolev_error,
)
from .sampling import TEST_STREAM, Gaussian, SeededStream, StudentT, StudentTPair

MANIFEST_SCHEMA = 1
KINDS = ("fit", "rate", "heat", "cod", "generalization", "constants")
FIT_CLASSES = ("RTF", "RFF", "RN_tanh", "RN_sigmoid", "RN_softplus")


class ConfigError(ValueError):
    pass


def _ints(text):
    return tuple(int(v) for v in text.replace(",", " ").split())


def _strs(text):
    return tuple(v for v in text.replace(",", " ").split())


def _opt_float(text):
    return None if text.strip().lower() in ("", "none") else float(text)


def _bool(text):
    low = text.strip().lower()
    if low in ("1", "yes", "true", "on"):
        return True
    if low in ("0", "no", "false", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _choice(*options):
    def parse(text):
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return text
    return parse


# section -> key -> (parser, default text)
SCHEMA = {
    "experiment": {
        "kind": (_choice(*KINDS), "fit"),
        "seeds": (_ints, "0"),
        "out": (str, "randfeat-out"),
        "threads": (int, "1"),
    },
    "model": {
        "class": (_choice(*FIT_CLASSES), "RTF"),
        "classes": (_strs, ",".join(MODEL_CLASSES)),
        "m": (int, "1"),
        "k": (int, "0"),
        "N": (_ints, "32,64,128"),
        "J": (_ints, "10000"),
        "init": (_choice("student_t", "gaussian"), "student_t"),
        "save_models": (_bool, "yes"),
    },
    "spec": {
        "c_rule": (_choice("uniform", "order_scaled"), "uniform"),
        "L": (_opt_float, "none"),
        "weight_sigma": (float, "1.0"),
        "test_points": (int, "10000"),
    },
    "target": {
        "name": (_choice("gaussian", "heat", "heat_gaussian"), "gaussian"),
    },
    "heat": {
        "dimensions": (_ints, "1,5"),
        "lam": (float, "4.0"),
        "t": (float, "1.0"),
        "train_fraction": (float, "0.8"),
        "epochs": (int, "300"),
        "lr": (float, "1e-5"),
        "batch": (int, "500"),
        "slice_points": (int, "101"),
        "traces": (_bool, "no"),
    },
    "cod": {
        "dimensions": (_ints, "1,2,4,8"),
        "eps": (float, "0.01"),
        "cap": (int, "4096"),
        "J": (int, "20000"),
    },
    "constants": {
        "zeta1": (float, "1.0"),
        "zeta2": (float, "2.0"),
        "ridgelet": (_bool, "no"),
    },
}


@dataclass
class ExperimentConfig:
    values: dict
    text: str

    def __getitem__(self, key):
        return self.values[key]

    def canonical(self) -> str:
        return json.dumps({k: _jsonable(v) for k, v in sorted(self.values.items())},
                          sort_keys=True)

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()


def _jsonable(v):
    return list(v) if isinstance(v, tuple) else v


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate; every problem is reported with its ``section.key`` path."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as err:
        raise ConfigError(f"cannot parse config: {err}") from None
    problems = []
    for section in cp.sections():
        if section not in SCHEMA:
            problems.append(f"{section}: unknown section")
            continue
        for key in cp[section]:
            if key not in SCHEMA[section]:
                problems.append(f"{section}.{key}: unknown key")
    values = {}
    for section, keys in SCHEMA.items():
        for key, (parse, default) in keys.items():
            raw = cp.get(section, key, fallback=default) if cp.has_section(section) else default
            try:
                values[f"{section}.{key}"] = parse(raw)
            except ValueError as err:
                problems.append(f"{section}.{key}: {err}")
    if not problems:
        problems.extend(_semantic_checks(values))
    if problems:
        raise ConfigError("; ".join(problems))
    return ExperimentConfig(values, text)


def _semantic_checks(v):
    out = []
    if v["model.m"] < 1:
        out.append("model.m: must be >= 1")
    if v["model.k"] < 0:
        out.append("model.k: must be >= 0")
    if not v["model.N"] or min(v["model.N"]) < 1:
        out.append("model.N: need positive feature counts")
    if not v["model.J"] or min(v["model.J"]) < 1:
        out.append("model.J: need positive sample counts")
    if not v["experiment.seeds"] or min(v["experiment.seeds"]) < 0:
        out.append("experiment.seeds: need non-negative seeds")
    for c in v["model.classes"]:
        if c not in MODEL_CLASSES:
            out.append(f"model.classes: unknown class {c!r}")
    if v["spec.L"] is not None and v["spec.L"] <= 0:
        out.append("spec.L: must be positive")
    if v["target.name"] == "heat" and v["model.k"] > 0:
        out.append("target.name: the heat target supplies no derivatives, use k = 0")
    if not 0 < v["heat.train_fraction"] < 1:
        out.append("heat.train_fraction: must lie in (0, 1)")
    return out


# --- experiment kinds -----------------------------------------------------------------


def _write_csv(path: Path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(x) if isinstance(x, float) else x for x in r])
    path.write_text(buf.getvalue())


def _fit_target(cfg):
    m = cfg["model.m"]
    name = cfg["target.name"]
    if name == "gaussian":
        return GaussianTarget(m)
    lam, t = cfg["heat.lam"], cfg["heat.t"]
    return HeatTarget(HeatProblem(m, lam, t, initial="ball" if name == "heat" else "gaussian"))


def _fit_grid(cfg, out: Path):
    """Train every (N, J, seed) cell for the single configured model class."""
    m, k, cls = cfg["model.m"], cfg["model.k"], cfg["model.class"]
    spec = SobolevFitSpec(m, k, cfg["spec.c_rule"], Gaussian(m, cfg["spec.weight_sigma"]),
                          cfg["spec.L"])
    target = _fit_target(cfg)
    rows = []
    models_dir = out / "models"
    for N in cfg["model.N"]:
        for J in cfg["model.J"]:
            for seed in cfg["experiment.seeds"]:
                if cls.startswith("RN_"):
                    init = StudentTPair(m) if cfg["model.init"] == "student_t" else Gaussian(m + 1)
                    model = train_random_nn(N, target, J, spec, cls[3:], seed=seed, init=init)
                else:
                    family = TrigFamily(m) if cls == "RTF" else FourierFamily(m)
                    init = StudentT(m) if cfg["model.init"] == "student_t" else Gaussian(m)
                    model = train_random_feature_model(family, N, target, J, spec, seed=seed,
                                                       init=init)
                train_err = weighted_sobolev_error(model, target, spec,
                                                   points=training_points(model, spec))
                test_err = weighted_sobolev_error(model, target, spec, cfg["spec.test_points"],
                                                  SeededStream(seed, TEST_STREAM))
                rows.append([cls, m, N, J, seed, train_err, test_err,
                             model.metadata["wall_seconds"], int(math.ceil(model.ledger.total))])
                if cfg["model.save_models"]:
                    models_dir.mkdir(parents=True, exist_ok=True)
                    save_model(model, models_dir / f"{cls}_N{N}_J{J}_s{seed}.json")
    header = ["class", "m", "N", "J", "seed", "train_err", "test_err", "wall_seconds", "op_units"]
    _write_csv(out / "results.csv", header, rows)
    return rows


def _median_table(rows, by):
    groups = {}
    for r in rows:
        groups.setdefault(by(r), []).append(r[6])
    return {key: float(np.median(v)) for key, v in sorted(groups.items())}


def run_fit(cfg, out: Path):
    rows = _fit_grid(cfg, out)
    med = _median_table(rows, lambda r: (r[2], r[3]))
    lines = [f"{cfg['model.class']} on {cfg['target.name']} target, m={cfg['model.m']}, "
             f"k={cfg['model.k']}", f"{'N':>6}{'J':>8}{'median test':>16}"]
    lines += [f"{N:>6}{J:>8}{e:>16.4e}" for (N, J), e in med.items()]
    if cfg["experiment.kind"] == "rate":
        for J in cfg["model.J"]:
            pts = [(N, e) for (N, JJ), e in med.items() if JJ == J]
            if len(pts) >= 3:
                slope, intercept, r2 = fit_rate(pts)
                lines.append(f"J={J}: log-log slope {slope:.4f} (intercept {intercept:.4f}, "
                             f"R^2 {r2:.4f})")
    return "\n".join(lines) + "\n"


def run_heat(cfg, out: Path):
    hc = HeatExperimentConfig(
        classes=cfg["model.classes"], ms=cfg["heat.dimensions"], Ns=cfg["model.N"],
        J=cfg["model.J"][0], seeds=cfg["experiment.seeds"],
        train_fraction=cfg["heat.train_fraction"], epochs=cfg["heat.epochs"],
        lr=cfg["heat.lr"], batch=cfg["heat.batch"], lam=cfg["heat.lam"], t=cfg["heat.t"],
        c_rule=cfg["spec.c_rule"], L=cfg["spec.L"], threads=cfg["experiment.threads"],
        slice_points=cfg["heat.slice_points"], write_traces=cfg["heat.traces"])
    report = run_heat_experiment(hc)
    report.write(out)
    return report.summary


def run_cod(cfg, out: Path):
    res = cod_scaling_check(cfg["cod.dimensions"], cfg["cod.eps"], cfg["heat.lam"], cfg["heat.t"],
                            J=cfg["cod.J"], seeds=cfg["experiment.seeds"], cap=cfg["cod.cap"])
    _write_csv(out / "results.csv", ["m", "N_needed", "condition_holds"],
               [[m, n, res.condition[m]] for m, n in res.rows])
    lines = [f"features needed for median test error <= {cfg['cod.eps']}"]
    lines += [f"m={m}: N={n} (scaling condition holds: {res.condition[m]})" for m, n in res.rows]
    if res.slope is not None:
        lines.append(f"log-log slope of N_needed in m: {res.slope:.4f}")
    return "\n".join(lines) + "\n"


def run_constants(cfg, out: Path):
    gauss_hat = lambda t: math.sqrt(2 * math.pi) * np.exp(-np.asarray(t) ** 2 / 2)  # noqa: E731
    rows = [
        ["barron_gaussian_cauchy_r2_k0", barron_constant_trig(gauss_hat, StudentT(1), 2, 0)],
        ["barron_gaussian_cauchy_r2_k1", barron_constant_trig(gauss_hat, StudentT(1), 2, 1)],
        ["product_weight_gaussian_gamma0_p2", product_weight_base_constant(Gaussian(1), 0, 2)],
        ["product_weight_gaussian_gamma1_p2", product_weight_base_constant(Gaussian(1), 1, 2)],
    ]
    profile = RidgeletProfile(cfg["constants.zeta1"], cfg["constants.zeta2"])
    c, table = admissibility_lower_bound(profile, "tanh")
    rows.append(["admissibility_fit_constant_tanh", c])
    for m, (val, bound, holds) in table.items():
        rows.append([f"admissibility_abs_tanh_m{m}", val])
        rows.append([f"admissibility_lower_bound_tanh_m{m}", bound])
    if cfg["constants.ridgelet"]:
        u = np.array([-1.0, 0.0, 1.0])
        rec = ridgelet_reconstruct_1d(profile, lambda v: np.exp(-v * v / 2), "tanh", u)
        for ui, r in zip(u, rec):
            rows.append([f"ridgelet_reconstruction_u{ui:+.0f}", float(r.real)])
    rows = [[name, float(v)] for name, v in rows]
    _write_csv(out / "results.csv", ["name", "value"], rows)
    return "\n".join(f"{name} = {v:.10g}" for name, v in rows) + "\n"


RUNNERS = {"fit": run_fit, "rate": run_fit, "generalization": run_fit, "heat": run_heat,
           "cod": run_cod, "constants": run_constants}


def run(config_path, seed=None, out=None, threads=None) -> int:
    try:
        text = Path(config_path).read_text()
        cfg = parse_config(text)
    except OSError as err:
        print(f"error: cannot read config: {err}", file=sys.stderr)
        return 2
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    if seed is not None:
        if not 0 <= seed < 2**64:
            print("config error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
            return 2
        cfg.values["experiment.seeds"] = (seed,)
    if threads is None:
        env = os.environ.get("RANDFEAT_THREADS")
        if env:
            try:
                threads = int(env)
            except ValueError:
                print(f"config error: RANDFEAT_THREADS={env!r} is not an integer", file=sys.stderr)
                return 2
    if threads is not None:
        cfg.values["experiment.threads"] = threads
    if cfg["experiment.threads"] < 1:
        print("config error: experiment.threads: must be >= 1", file=sys.stderr)
        return 2
    out_dir = Path(out if out is not None else cfg["experiment.out"])
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        summary = RUNNERS[cfg["experiment.kind"]](cfg, out_dir)
        (out_dir / "summary.txt").write_text(summary)
        manifest = {
            "schema_version": MANIFEST_SCHEMA,
            "config_sha256": cfg.digest(),
            "config": json.loads(cfg.canonical()),
            "config_text": cfg.text,
            "seeds": list(cfg["experiment.seeds"]),
            "versions": {"randfeat": __version__, "numpy": np.__version__,
                         "scipy": scipy.__version__, "python": platform.python_version()},
        }
        (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))
    except Exception as err:  # runtime failures map to exit code 1
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return 1
    sys.stdout.write(summary)
    return 0


def inspect(path) -> int:
    try:
        model = load_model(path)
    except (OSError, ModelFormatError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    ledger = model.ledger
    print(f"family: {model.family.tag}")
    print(f"m: {model.m}")
    print(f"k: {model.k}")
    print(f"N: {model.N}")
    print(f"readout ℓ² norm = {float(np.linalg.norm(model.readout)):.12g}")
    print(f"seed: {model.metadata.get('seed')}")
    print(f"ledger: dominant = {ledger.dominant}, remainder = {ledger.remainder}, "
          f"jitter = {ledger.jitter:.3e}")
    for stage, units in ledger.stages.items():
        print(f"  {stage}: {units}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="randfeat", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment from a config file")
    r.add_argument("--config", required=True)
    r.add_argument("--seed", type=int, help="override the configured seed list")
    r.add_argument("--out", help="output directory (overrides experiment.out)")
    r.add_argument("--threads", type=int, help="worker threads (fallback: RANDFEAT_THREADS)")
    i = sub.add_parser("inspect", help="describe a saved model")
    i.add_argument("model")
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return run(args.config, args.seed, args.out, args.threads)
    return inspect(args.model)


if __name__ == "__main__":
    sys.exit(main())
