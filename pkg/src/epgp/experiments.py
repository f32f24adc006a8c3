"""Named reproduction pipelines: truth, sampling, fitting, prediction on the
full truth grid and RMSE, repeated over seeds.

Each experiment has a flat default configuration that ``--set key=value``
overrides (dotted keys reach into nested dictionaries). Runs write into
``<out>/<experiment>/``:

``results.csv``
    One :class:`~epgp.io.ResultRow` per run.
``summary.csv``
    RMSE mean and standard deviation per (flavor, features, datapoints).
``manifest.json``
    Resolved configuration, version and seeds.
``checkpoints/``, ``predictions/``, ``traces/``
    Per-run model, full-grid prediction and training trace.

Plus experiment-specific plot data (curves and heat-map frames as CSV).
"""

from __future__ import annotations

import copy
import logging
import math
import time
from pathlib import Path

import numpy as np

from . import io, kernels, sepgp, systems, training, truth
from .io import ResultRow

log = logging.getLogger(__name__)

FLAVORS = ("sepgp_complex", "sepgp_imag", "epgp_mc", "epgp_ls", "closed_form", "se_baseline")


class ConfigError(ValueError):
    pass


_WAVE_LRS = {"spectral": 0.1, "sigma": 1e-3, "noise": 1e-3, "scale": 1e-2}

DEFAULTS = {
    "heat1d_init": {
        "system": "heat1d",
        "counts": [2, 4, 8, 16, 32, 64],
        "seeds": [0, 1, 2],
        "flavors": ["epgp_mc", "closed_form"],
        "mc_features": 2000,
        "base_scale": 1.0,
        "noise": 1e-6,
        "epochs": 0,
    },
    "heat1d_scatter": {
        "system": "heat1d",
        "counts": [0, 8, 16, 32, 64],
        "seeds": [0, 1, 2],
        "flavors": ["epgp_mc", "closed_form", "se_baseline"],
        "mc_features": 2000,
        "base_scale": 1.0,
        "noise": 1e-4,
        "epochs": 300,
        "lrs": {"spectral": 0.0, "sigma": 0.0, "noise": 0.05, "scale": 0.05},
        "noise_grid": [1e-8, 1.0, 30],
    },
    "heat2d_smile": {
        "system": "heat2d",
        "grid_side": 101,
        "sigma2": [2.0, 20.0],
        "times": [0.0, 0.015, 0.03, 0.045, 0.06],
        "noise": 1e-2,
        "seeds": [0],
    },
    "wave2d_extrapolate": {
        "system": "wave2d",
        "flavors": ["sepgp_imag"],
        "features": [16],
        "train_times": [0.0, 0.05, 0.1],
        "seeds": [0, 1, 2],
        "epochs": 3000,
        "init_scale": 1.0,
        "noise": 1e-4,
        "lrs": {"spectral": 0.1, "sigma": 0.1, "noise": 0.01, "scale": 0.01},
        "schedule": {"kind": "constant"},
        "N_terms": 99,
    },
    "wave2d_table": {
        "system": "wave2d",
        "flavors": ["sepgp_complex", "sepgp_imag", "epgp_mc", "epgp_ls"],
        "features": [128],
        "mc_features": [1000],
        "datapoints": [2048],
        "seeds": [0, 1, 2],
        "epochs": 3000,
        "init_scale": math.sqrt(2.0),
        "noise": 1e-4,
        "lrs": dict(_WAVE_LRS),
        "schedule": {"kind": "cosine_warm_restart", "T0": 500},
    },
    "maxwell_table": {
        "system": "maxwell",
        "flavors": ["sepgp_imag"],
        "cells": [[48, 1000], [96, 100]],
        "seeds": [0, 1, 2, 3, 4],
        "epochs": 4000,
        "init_scale": 1.0,
        "noise": 0.1,
        "lrs": {"spectral": 0.01, "sigma": 0.01, "noise": 0.01, "scale": 0.01},
        "schedule": {"kind": "constant"},
        "observe": "all",
    },
    "laplace_demo": {
        "system": "laplace2d",
        "flavors": ["sepgp_complex"],
        "features": [16],
        "datapoints": [50],
        "seeds": list(range(10)),
        "epochs": 3000,
        "init_scale": 1.0 / math.sqrt(2.0),
        "noise": 1e-5,
        "lrs": {"spectral": 1e-2, "sigma": 1e-2, "noise": 1e-2, "scale": 1e-2},
        "schedule": {"kind": "step", "period": 3000, "gamma": 0.1},
        "grid_side": 64,
    },
}

#: Larger budgets restored by ``--full``.
FULL = {
    "heat1d_init": {"mc_features": 10000},
    "heat1d_scatter": {"mc_features": 10000},
    "wave2d_extrapolate": {"epochs": 10000},
    "maxwell_table": {"epochs": 10000},
}

EXPERIMENTS = tuple(DEFAULTS)


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def set_key(cfg: dict, dotted: str, value):
    """Assign ``value`` at a dotted key; the key must already exist."""
    parts = dotted.split(".")
    node = cfg
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            raise ConfigError(f"unknown configuration key {dotted!r}")
        node = node[p]
    if parts[-1] not in node:
        raise ConfigError(f"unknown configuration key {dotted!r}")
    node[parts[-1]] = value


def resolve_config(name, overrides=None, full=False) -> dict:
    """Defaults of experiment ``name`` with the ``--full`` and user
    overrides applied in that order."""
    if name not in DEFAULTS:
        raise ConfigError(f"unknown experiment {name!r}; choose from {', '.join(EXPERIMENTS)}")
    cfg = copy.deepcopy(DEFAULTS[name])
    if full:
        for k, v in FULL.get(name, {}).items():
            set_key(cfg, k, v)
    for k, v in (overrides or {}).items():
        set_key(cfg, k, v)
    _validate(name, cfg)
    cfg["experiment"] = name
    return cfg


def _validate(name, cfg):
    try:
        systems.get_system(cfg["system"])
    except systems.UnknownSystem:
        raise ConfigError(f"unknown system {cfg['system']!r}") from None
    seeds = cfg.get("seeds")
    if not seeds or not all(isinstance(s, int) for s in seeds):
        raise ConfigError("seeds must be a non-empty list of integers")
    for f in cfg.get("flavors", []):
        if f not in FLAVORS:
            raise ConfigError(f"unknown flavor {f!r}")
    if cfg.get("epochs", 0) < 0:
        raise ConfigError("epochs must be nonnegative")
    if "schedule" in cfg:
        try:
            training.Schedule(**cfg["schedule"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad schedule: {exc}") from None


def _schedule(cfg):
    return training.Schedule(**cfg.get("schedule", {"kind": "constant"}))


# ---------------------------------------------------------------------------
# shared pieces
# ---------------------------------------------------------------------------


def build_model(spec, flavor, features, seed, cfg) -> sepgp.SpectralParams:
    """Initial parameters of an S-EPGP or MC-EPGP flavor with ``features``
    spectral points in total."""
    m = len(spec.slots)
    if features < m or features % m:
        raise ConfigError(f"{spec.name} needs a multiple of {m} features, got {features}")
    per = features // m
    log_noise = math.log(cfg["noise"])
    if flavor in ("sepgp_complex", "sepgp_imag"):
        return sepgp.init_params(spec, per, seed, scale=cfg.get("init_scale", 1.0),
                                 complex_points=flavor == "sepgp_complex", log_noise=log_noise,
                                 log_sigma=-math.log(features))
    if flavor in ("epgp_mc", "epgp_ls"):
        kind = "vanilla" if flavor == "epgp_mc" else "length_scale"
        scale = cfg.get("base_scale", cfg.get("init_scale", 1.0))
        return sepgp.make_mc_epgp(spec, per, scale, seed, kind, log_noise=log_noise)
    raise ConfigError(f"flavor {flavor!r} has no spectral parameters")


def _train(spec, theta, data, cfg, seed):
    if cfg.get("epochs", 0) == 0:
        return theta, []
    lrs = cfg.get("lrs", {g: 1e-2 for g in training.GROUPS})
    tc = training.TrainConfig(epochs=cfg["epochs"], lrs=lrs, schedule=_schedule(cfg), seed=seed)
    return training.train(spec, theta, data, tc)


def rmse(pred, true) -> float:
    return float(np.sqrt(np.mean((np.asarray(pred) - np.asarray(true)) ** 2)))


class _Run:
    """Output bookkeeping for one experiment invocation."""

    def __init__(self, cfg, out):
        self.cfg = cfg
        self.dir = Path(out) / cfg["experiment"]
        self.dir.mkdir(parents=True, exist_ok=True)
        self.rows = []

    def tag(self, flavor, features, datapoints, seed):
        return f"{flavor}_f{features}_n{datapoints}_s{seed}"

    def record(self, flavor, features, datapoints, seed, err, nlml_final, epochs, t0):
        row = ResultRow(self.cfg["experiment"], self.cfg["system"], flavor, int(features),
                        int(datapoints), int(seed), float(err), float(nlml_final), int(epochs),
                        round(time.perf_counter() - t0, 3))
        self.rows.append(row)
        log.info("%s %s f=%d n=%d seed=%d rmse=%.4g", row.experiment, flavor, features,
                 datapoints, seed, err)
        return row

    def save_model(self, tag, flavor, theta, data, trace, seed, nlml_final):
        io.write_checkpoint(self.dir / "checkpoints" / f"{tag}.json", self.cfg["system"], flavor,
                            theta, data, seed=seed, epoch=len(trace), nlml=nlml_final)
        if trace:
            io.write_trace(self.dir / "traces" / f"{tag}.csv", trace)

    def save_prediction(self, tag, pts, mean):
        io.write_prediction(self.dir / "predictions" / f"{tag}.csv", pts, mean)

    def finish(self):
        io.write_results(self.dir / "results.csv", self.rows)
        _write_summary(self.dir / "summary.csv", self.rows)
        io.write_manifest(self.dir / "manifest.json", self.cfg, self.cfg["seeds"])
        return sorted(self.rows, key=lambda r: (r.features, r.datapoints, r.flavor, r.seed))


def _write_summary(path, rows):
    groups = {}
    for r in rows:
        groups.setdefault((r.flavor, r.features, r.datapoints), []).append(r.rmse)
    out = []
    for (flavor, f, n), v in sorted(groups.items()):
        v = np.array(v)
        out.append([flavor, str(f), str(n), io.fmt(v.mean()), io.fmt(v.std()), str(len(v))])
    io._write_rows(path, ["flavor", "features", "datapoints", "rmse_mean", "rmse_std", "runs"], out)


def _fit_predict(run, spec, flavor, features, data, seed, pts, true, cfg):
    """Train an S-EPGP/MC flavor, predict on ``pts`` and record the row.

    ``datapoints`` counts sampled points; vector systems contribute one
    observation per observed component at each.
    """
    t0 = time.perf_counter()
    theta = build_model(spec, flavor, features, seed, cfg)
    theta, trace = _train(spec, theta, data, cfg, seed)
    pr = sepgp.posterior(spec, theta, data, pts)
    err = rmse(pr.mean, true)
    tag = run.tag(flavor, features, len(data.X), seed)
    run.save_model(tag, flavor, theta, data, trace, seed, pr.nlml_at_fit)
    run.save_prediction(tag, pts, pr.mean)
    row = run.record(flavor, features, len(data.X), seed, err, pr.nlml_at_fit, len(trace), t0)
    return row, pr.mean


def _kernel_predict(run, kernel, flavor, data, seed, pts, true, noise):
    t0 = time.perf_counter()
    if len(data) == 0:
        mean, value = np.zeros((len(pts), 1)), 0.0
    else:
        res = kernels.gp_regress(kernel, data.X, data.value, noise, pts, want_cov="none")
        mean, value = res.mean, res.nlml_at_fit
    run.save_prediction(run.tag(flavor, 0, len(data), seed), pts, mean)
    return run.record(flavor, 0, len(data), seed, rmse(mean, true), value, 0, t0)


def tuned_noise(kernel, data, lo, hi, count):
    """Noise variance minimizing the exact-GP NLML over a log-spaced grid."""
    best = None
    for s in np.geomspace(lo, hi, int(count)):
        value = kernels.gp_regress(kernel, data.X, data.value, s, data.X[:1]).nlml_at_fit
        if best is None or value < best[0]:
            best = (value, float(s))
    return best[1]


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------


def _heat1d(cfg, out, where):
    spec = systems.get_system("heat1d")
    T = truth.heat1d_exact()
    pts, true = T.points(), T.flat_values()
    run = _Run(cfg, out)
    curve = []
    for count in cfg["counts"]:
        for seed in cfg["seeds"]:
            data = truth.sample_dataset(T, count, seed, where=where)
            for flavor in cfg["flavors"]:
                if flavor == "closed_form" or flavor == "se_baseline":
                    kernel = kernels.KernelHandle("heat1d") if flavor == "closed_form" else kernels.se(2)
                    noise = cfg["noise"]
                    if "noise_grid" in cfg and len(data):
                        noise = tuned_noise(kernel, data, *cfg["noise_grid"])
                    row = _kernel_predict(run, kernel, flavor, data, seed, pts, true, noise)
                elif count == 0:
                    t0 = time.perf_counter()
                    run.save_prediction(run.tag(flavor, cfg["mc_features"], 0, seed), pts,
                                        np.zeros_like(true))
                    row = run.record(flavor, cfg["mc_features"], 0, seed, rmse(0.0, true), 0.0, 0, t0)
                else:
                    row, _ = _fit_predict(run, spec, flavor, cfg["mc_features"], data, seed,
                                          pts, true, cfg)
                curve.append(row)
    _write_curve(run.dir / "curve_rmse.csv", curve)
    return run.finish()


def _write_curve(path, rows):
    rows = sorted(rows, key=lambda r: (r.flavor, r.datapoints, r.seed))
    io._write_rows(path, ["flavor", "datapoints", "seed", "rmse"],
                   ([r.flavor, str(r.datapoints), str(r.seed), io.fmt(r.rmse)] for r in rows))


def run_heat1d_init(cfg, out):
    """Training points at ``t = 0`` only; the posterior mean is the
    prediction (no training by default)."""
    return _heat1d(cfg, out, where=[0.0])


def run_heat1d_scatter(cfg, out):
    """Training points uniform over the whole space-time grid."""
    return _heat1d(cfg, out, where="all")


def run_heat2d_smile(cfg, out):
    """Exact ``heat2d_scaled`` posterior from the smiley initial data, as
    heat-map frames per scale parameter and time."""
    run = _Run(cfg, out)
    side = cfg["grid_side"]
    data = truth.heat2d_smile(side)
    values = data.value.reshape(side, side)
    axis = np.linspace(-5.0, 5.0, side)
    X, Y = np.meshgrid(axis, axis, indexing="ij")
    for s2 in cfg["sigma2"]:
        t0 = time.perf_counter()
        frames, value = kernels.heat2d_grid_posterior(values, axis, s2, cfg["noise"],
                                                      cfg["times"])
        for t, fr in zip(cfg["times"], frames):
            pts = np.stack([X.ravel(), Y.ravel(), np.full(X.size, t)], axis=-1)
            run.save_prediction(f"frame_sigma2_{s2:g}_t_{t:g}", pts, fr.reshape(-1, 1))
        fit = rmse(frames[0], values)
        run.record(f"closed_form_sigma2_{s2:g}", 0, len(data), cfg["seeds"][0], fit, value, 0, t0)
    return run.finish()


def run_wave2d_extrapolate(cfg, out):
    """Learn from the first time slices of the series solution and predict
    the whole unit cube."""
    spec = systems.get_system("wave2d")
    T = truth.wave2d_series(N_terms=cfg["N_terms"])
    pts, true = T.points(), T.flat_values()
    run = _Run(cfg, out)
    times = T.axes[-1]
    by_time = []
    for features in cfg["features"]:
        for seed in cfg["seeds"]:
            data = truth.sample_dataset(T, _slice_count(T, cfg["train_times"]), seed,
                                        where=cfg["train_times"])
            for flavor in cfg["flavors"]:
                _, mean = _fit_predict(run, spec, flavor, features, data, seed, pts, true, cfg)
                sq = ((mean - true) ** 2).reshape(-1, len(times))
                err_t = np.sqrt(np.mean(sq, axis=0))
                by_time += [[flavor, str(features), str(seed), io.fmt(t), io.fmt(e)]
                            for t, e in zip(times, err_t)]
    io._write_rows(run.dir / "rmse_by_time.csv", ["flavor", "features", "seed", "t", "rmse"], by_time)
    return run.finish()


def _slice_count(T, times):
    t = T.axes[-1]
    hits = sum(int(np.any(np.abs(t - s) <= 1e-12)) for s in times)
    return hits * int(np.prod(T.shape[:-1]))


def run_wave2d_table(cfg, out):
    """Model-flavor comparison on the finite-difference wave solution."""
    spec = systems.get_system("wave2d")
    T = truth.wave2d_fd()
    pts, true = T.points(), T.flat_values()
    run = _Run(cfg, out)
    for n in cfg["datapoints"]:
        for seed in cfg["seeds"]:
            data = truth.sample_dataset(T, n, seed)
            for flavor in cfg["flavors"]:
                counts = cfg["mc_features"] if flavor.startswith("epgp") else cfg["features"]
                local = dict(cfg)
                if flavor.startswith("epgp"):
                    local["base_scale"] = cfg["init_scale"]
                for features in counts:
                    _fit_predict(run, spec, flavor, features, data, seed, pts, true, local)
    return run.finish()


def run_maxwell_table(cfg, out):
    """S-EPGP on a superposition of plane waves, per (features, points)
    cell. ``observe = "E"`` trains on the electric field only."""
    spec = systems.get_system("maxwell")
    T = truth.maxwell_planewaves()
    pts, true = T.points(), T.flat_values()
    comps = {"all": None, "E": [0, 1, 2]}[cfg["observe"]]
    run = _Run(cfg, out)
    for features, n in cfg["cells"]:
        for seed in cfg["seeds"]:
            data = truth.sample_dataset(T, n, seed, components=comps)
            for flavor in cfg["flavors"]:
                _fit_predict(run, spec, flavor, features, data, seed, pts, true, cfg)
    return run.finish()


def run_laplace_demo(cfg, out):
    """S-EPGP on the SOR solution of the Laplace equation on [0, 2 pi]^2."""
    spec = systems.get_system("laplace2d")
    T = truth.laplace2d_fd(cfg["grid_side"])
    pts, true = T.points(), T.flat_values()
    run = _Run(cfg, out)
    for n in cfg["datapoints"]:
        for seed in cfg["seeds"]:
            data = truth.sample_dataset(T, n, seed)
            for flavor in cfg["flavors"]:
                for features in cfg["features"]:
                    _fit_predict(run, spec, flavor, features, data, seed, pts, true, cfg)
    return run.finish()


RUNNERS = {
    "heat1d_init": run_heat1d_init,
    "heat1d_scatter": run_heat1d_scatter,
    "heat2d_smile": run_heat2d_smile,
    "wave2d_extrapolate": run_wave2d_extrapolate,
    "wave2d_table": run_wave2d_table,
    "maxwell_table": run_maxwell_table,
    "laplace_demo": run_laplace_demo,
}


class ExperimentError(RuntimeError):
    pass


def run_experiment(name, overrides=None, out="runs", full=False):
    """Resolve the configuration, run every seed and write all artifacts.

    Returns the result rows. Errors from the numerical layers are re-raised
    with the experiment name attached (their type is kept).
    """
    cfg = resolve_config(name, overrides, full)
    try:
        return RUNNERS[name](cfg, out)
    except (ConfigError, OSError):
        raise
    except Exception as exc:
        try:
            wrapped = type(exc)(f"experiment {name}: {exc}")
        except TypeError:
            wrapped = ExperimentError(f"experiment {name}: {type(exc).__name__}: {exc}")
        raise wrapped from exc
