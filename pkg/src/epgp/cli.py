"""``epgp`` command line: ``experiment``, ``fit``, ``predict``, ``sample`` and
``check``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O
error.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import checks, experiments, io, linalg, sepgp, systems, training, truth

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

FIT_DEFAULTS = {
    "features": 16,
    "epochs": 1000,
    "noise": 1e-4,
    "init_scale": 1.0,
    "base_scale": 1.0,
    "lrs": {g: 1e-2 for g in training.GROUPS},
    "schedule": {"kind": "constant"},
}

TRUTHS = {
    "heat1d_exact": ("heat1d", truth.heat1d_exact),
    "wave2d_series": ("wave2d", truth.wave2d_series),
    "wave2d_fd": ("wave2d", truth.wave2d_fd),
    "maxwell_planewaves": ("maxwell", truth.maxwell_planewaves),
    "laplace2d_fd": ("laplace2d", truth.laplace2d_fd),
}


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _flatten(d, prefix=""):
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def _overrides(args):
    """``--config`` file entries, then ``--set`` pairs, as dotted keys."""
    out = {}
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise experiments.ConfigError(f"{args.config}: invalid JSON ({exc})") from None
        if not isinstance(loaded, dict):
            raise experiments.ConfigError(f"{args.config}: expected a JSON object")
        out.update(_flatten(loaded))
    for item in args.set or []:
        if "=" not in item:
            raise experiments.ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = _parse_value(v)
    return out


def _parse_grid(text):
    """``lo:hi:count`` per axis, comma separated."""
    try:
        axes = [tuple(float(v) for v in part.split(":")) for part in text.split(",")]
        grid = [(lo, hi, int(k)) for lo, hi, k in axes]
    except ValueError:
        raise experiments.ConfigError(f"bad grid {text!r}; expected lo:hi:count,...") from None
    if any(k < 1 for _, _, k in grid):
        raise experiments.ConfigError("grid counts must be positive")
    mesh = np.meshgrid(*[np.linspace(lo, hi, k) for lo, hi, k in grid], indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def _system(name):
    try:
        return systems.get_system(name)
    except systems.UnknownSystem:
        raise experiments.ConfigError(
            f"unknown system {name!r}; choose from {', '.join(systems.SYSTEM_NAMES)}") from None


# ---------------------------------------------------------------------------
# verbs
# ---------------------------------------------------------------------------


def cmd_experiment(args):
    overrides = _overrides(args)
    if args.seed is not None:
        overrides["seeds"] = [args.seed]
    rows = experiments.run_experiment(args.name, overrides, out=args.out, full=args.full)
    for r in rows:
        print(f"{r.flavor:>16} features={r.features:<5d} points={r.datapoints:<6d} "
              f"seed={r.seed:<3d} rmse={r.rmse:.4g}")
    print(f"wrote {Path(args.out) / args.name}")


def cmd_fit(args):
    spec = _system(args.system)
    cfg = copy.deepcopy(FIT_DEFAULTS)
    for k, v in _overrides(args).items():
        experiments.set_key(cfg, k, v)
    seed = 0 if args.seed is None else args.seed
    data = io.read_dataset(args.data, n=spec.n)
    theta = experiments.build_model(spec, args.flavor, int(cfg["features"]), seed, cfg)
    tc = training.TrainConfig(epochs=int(cfg["epochs"]), lrs=cfg["lrs"],
                              schedule=training.Schedule(**cfg["schedule"]), seed=seed)
    theta, trace = training.train(spec, theta, data, tc)
    value = sepgp.nlml(spec, theta, data)
    out = Path(args.out)
    io.write_checkpoint(out, spec.name, args.flavor, theta, data, seed=seed, epoch=len(trace),
                        nlml=value)
    if trace:
        io.write_trace(out.with_suffix(".trace.csv"), trace)
    print(f"final nlml {value:.10g}")
    print(f"wrote {out}")


def cmd_predict(args):
    payload, theta, data = io.read_checkpoint(args.checkpoint)
    spec = _system(payload["system"])
    if data is None:
        raise experiments.ConfigError("checkpoint has no training data")
    if (args.points is None) == (args.grid is None):
        raise experiments.ConfigError("give exactly one of --points and --grid")
    Xq = io.read_points(args.points) if args.points else _parse_grid(args.grid)
    if Xq.shape[1] != spec.n:
        raise experiments.ConfigError(f"{spec.name} needs {spec.n} coordinates per point")
    pr = sepgp.posterior(spec, theta, data, Xq, want_cov=args.cov)
    io.write_prediction(args.out, Xq, pr.mean, pr.cov if args.cov == "diag" else None)
    print(f"wrote {args.out}")


def cmd_sample(args):
    seed = 0 if args.seed is None else args.seed
    if args.source == "truth":
        if args.truth not in TRUTHS:
            raise experiments.ConfigError(f"unknown truth {args.truth!r}; choose from {sorted(TRUTHS)}")
        field = TRUTHS[args.truth][1]()
        where = "all" if args.where is None else [float(v) for v in args.where.split(",")]
        count = args.count if args.count is not None else int(np.prod(field.shape))
        data = truth.sample_dataset(field, count, seed, where=where)
        io.write_dataset(args.out, data)
    else:
        spec = _system(args.system)
        if args.grid is None:
            raise experiments.ConfigError("sampling the prior needs --grid")
        Xq = _parse_grid(args.grid)
        cfg = copy.deepcopy(FIT_DEFAULTS)
        for k, v in _overrides(args).items():
            experiments.set_key(cfg, k, v)
        theta = experiments.build_model(spec, args.flavor, int(cfg["features"]), seed, cfg)
        values = sepgp.sample_prior(spec, theta, Xq, seed)
        io.write_prediction(args.out, Xq, values)
    print(f"wrote {args.out}")


def _checkpoint_report(what, path, seed):
    payload, theta, data = io.read_checkpoint(path)
    spec = _system(payload["system"])
    rep = checks.Report(what, str(path))
    if data is None:
        raise experiments.ConfigError("checkpoint has no training data")
    if what == "gradcheck":
        errs = checks.gradient_errors(spec, theta, data)
        rep.entries.append(checks.Entry("max_rel_error", float(errs.max(initial=0.0)), 1e-5))
    elif what == "oracle":
        Xq = data.X[: min(5, len(data.X))]
        for label, v in zip(("nlml", "mean", "cov"), checks.oracle_errors(spec, theta, data, Xq)):
            rep.entries.append(checks.Entry(label, v, 1e-8))
    elif what == "psd":
        Phi = systems.eval_features(spec, theta.points(), data.X, theta.slot, domain=theta.domain())
        K = Phi.conj().T @ (np.exp(theta.log_sigma)[:, None] * Phi)
        rep.entries.append(checks._jitter_entry("gram", K))
    else:
        lo, hi = data.X.min(axis=0), data.X.max(axis=0)
        rng = np.random.default_rng(seed)
        probes = lo + (hi - lo) * rng.uniform(0.25, 0.75, (4, spec.n))

        def mean(P):
            return sepgp.posterior(spec, theta, data, P).mean

        h0 = 0.05 * float(np.max(hi - lo)) or 0.1
        _, order = checks.refinement_order(spec, mean, probes, h0=h0)
        rep.entries.append(checks.Entry("posterior_mean.order", order, 1.8, "min"))
    return rep


def cmd_check(args):
    seed = 0 if args.seed is None else args.seed
    if args.scope.endswith(".json") and Path(args.scope).exists():
        rep = _checkpoint_report(args.what, args.scope, seed)
    else:
        if args.scope not in ("all", "sepgp", "kernels") and args.scope not in systems.SYSTEM_NAMES:
            _system(args.scope)
        rep = checks.run_check(args.what, args.scope, seed=seed)
    text = json.dumps(rep.to_dict(), indent=1, allow_nan=False)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _common(p):
    p.add_argument("--seed", type=int, default=None, help="random seed")
    p.add_argument("--out", default=None, help="output path")
    p.add_argument("--config", default=None, help="JSON file of configuration overrides")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override one configuration value (JSON-parsed); repeatable")


def build_parser():
    parser = argparse.ArgumentParser(prog="epgp", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("experiment", help="run a named reproduction")
    p.add_argument("name", choices=experiments.EXPERIMENTS)
    p.add_argument("--full", action="store_true", help="larger training budgets")
    _common(p)
    p.set_defaults(func=cmd_experiment, out_default="runs")

    p = sub.add_parser("fit", help="train a model on a dataset CSV")
    p.add_argument("--system", required=True)
    p.add_argument("--data", required=True, help="CSV with x1..xn,component,value")
    p.add_argument("--flavor", default="sepgp_imag",
                   choices=["sepgp_complex", "sepgp_imag", "epgp_mc", "epgp_ls"])
    _common(p)
    p.set_defaults(func=cmd_fit, out_default="model.json")

    p = sub.add_parser("predict", help="posterior mean (and variance) from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--points", default=None, help="CSV whose leading columns are x1..xn")
    p.add_argument("--grid", default=None, help="lo:hi:count per axis, comma separated (write --grid=-1:1:5,... when lo is negative)")
    p.add_argument("--cov", choices=["none", "diag"], default="none")
    _common(p)
    p.set_defaults(func=cmd_predict, out_default="prediction.csv")

    p = sub.add_parser("sample", help="draw a prior sample or a dataset from a truth field")
    p.add_argument("source", choices=["prior", "truth"])
    p.add_argument("--system", default=None)
    p.add_argument("--flavor", default="epgp_mc",
                   choices=["sepgp_complex", "sepgp_imag", "epgp_mc", "epgp_ls"])
    p.add_argument("--grid", default=None, help="lo:hi:count per axis, comma separated (write --grid=-1:1:5,... when lo is negative)")
    p.add_argument("--truth", default=None, choices=sorted(TRUTHS))
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--where", default=None, help="comma separated values of the last axis")
    _common(p)
    p.set_defaults(func=cmd_sample, out_default="sample.csv")

    p = sub.add_parser("check", help="run a validation suite and print a JSON report")
    p.add_argument("what", choices=sorted(checks.SUITES))
    p.add_argument("scope", help="system name, 'all', 'sepgp', 'kernels' or a checkpoint file")
    _common(p)
    p.set_defaults(func=cmd_check, out_default=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.out is None:
        args.out = args.out_default
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (io.ParseError, io.ChecksumMismatch, OSError) as exc:
        print(f"epgp: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (linalg.NotPositiveDefinite, training.NonFiniteGradient, systems.NonFiniteFeature,
            truth.NonConvergence, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"epgp: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (experiments.ConfigError, ValueError, KeyError, TypeError) as exc:
        print(f"epgp: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
