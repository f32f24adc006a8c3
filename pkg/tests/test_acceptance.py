"""Acceptance criteria 1-8. Each test records a PASS/FAIL line that is
printed in the terminal summary, then asserts it.

The quantitative reproductions run the default experiment budgets, so
this module takes tens of minutes on one core.
"""

import csv
import time

import numpy as np
import pytest

from epgp import checks, systems
from epgp.experiments import run_experiment

from .test_experiments import SMALL, _strip_timing


def _by(rows, **match):
    return [r for r in rows if all(getattr(r, k) == v for k, v in match.items())]


def test_criterion_1_laplace(tmp_path, acceptance):
    t0 = time.perf_counter()
    rows = run_experiment("laplace_demo", out=tmp_path)
    wall = time.perf_counter() - t0
    errs = np.array([r.rmse for r in rows])
    good = int(np.sum(errs < 5e-3))
    ok = len(errs) == 10 and good >= 8 and errs.min() < 1e-3 and wall < 120
    detail = (f"{good}/10 seeds with RMSE < 5e-3, best {errs.min():.3g}, "
              f"median {np.median(errs):.3g}, {wall:.0f} s total")
    assert acceptance(1, "Laplace reproduction", ok, detail), detail


def test_criterion_2_maxwell(tmp_path, acceptance):
    rows = run_experiment("maxwell_table", out=tmp_path)
    a = _by(rows, features=48, datapoints=1000)
    b = _by(rows, features=96, datapoints=100)
    ma, mb = np.mean([r.rmse for r in a]), np.mean([r.rmse for r in b])
    wa, wb = sum(r.wall_seconds for r in a), sum(r.wall_seconds for r in b)
    ok = (len(a) == len(b) == 5 and ma < 0.1 and 1e-3 <= mb <= 0.05
          and wa < 600 and wb < 600)
    detail = (f"(48, 1000) mean RMSE {ma:.3g} in {wa:.0f} s; "
              f"(96, 100) mean RMSE {mb:.3g} in {wb:.0f} s")
    assert acceptance(2, "Maxwell reproduction", ok, detail), detail


def test_criterion_3_wave(tmp_path, acceptance):
    rows = run_experiment("wave2d_table", {"flavors": ["sepgp_complex"]}, out=tmp_path)
    errs = [r.rmse for r in rows]
    walls = [r.wall_seconds for r in rows]
    ok = len(rows) == 3 and max(errs) < 0.05 and max(walls) < 120
    detail = (f"RMSE per seed {', '.join(f'{e:.3g}' for e in errs)}; "
              f"slowest run {max(walls):.0f} s")
    assert acceptance(3, "Wave reproduction", ok, detail), detail


def test_criterion_4_heat(tmp_path, acceptance):
    rows = run_experiment("heat1d_scatter", {"counts": [32], "flavors": ["epgp_mc", "se_baseline"]},
                          out=tmp_path)
    mc = np.array([r.rmse for r in sorted(_by(rows, flavor="epgp_mc"), key=lambda r: r.seed)])
    se = np.array([r.rmse for r in sorted(_by(rows, flavor="se_baseline"), key=lambda r: r.seed)])
    ratio = mc / se
    ok = len(mc) == len(se) == 3 and np.all(ratio <= 0.2)
    detail = (f"MC RMSE {mc.mean():.3g} vs SE {se.mean():.3g}; "
              f"worst per-seed ratio {ratio.max():.3g} (need <= 0.2)")
    assert acceptance(4, "Heat comparison", ok, detail), detail


def test_criterion_5_exactness(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    worst = 0.0
    for name in systems.SYSTEM_NAMES:
        spec = systems.get_system(name)
        for complex_points in (False, True):
            Z = 1j * rng.standard_normal((10 * len(spec.slots), spec.d))
            if complex_points:
                Z = Z + rng.standard_normal(Z.shape)
            X = rng.uniform(-1, 1, (20, spec.n))
            dom = "full-complex" if complex_points else None
            worst = max(worst, systems.analytic_residual(spec, Z, X, domain=dom, relative=True))
    rep = checks.check_residual("sepgp")
    orders = [e.value for e in rep.entries if "posterior_mean" in e.name]
    wall = time.perf_counter() - t0
    ok = worst <= 1e-9 and rep.passed and len(orders) >= 5 and wall < 60
    detail = (f"max relative analytic residual {worst:.2g}; smallest posterior-mean order "
              f"{min(orders):.3g} over {len(orders)} systems; {wall:.0f} s")
    assert acceptance(5, "Exactness suite", ok, detail), detail


def test_criterion_6_oracles(acceptance):
    t0 = time.perf_counter()
    rep = checks.check_oracle("all")
    wall = time.perf_counter() - t0
    dense = max(e.value for e in rep.entries if not e.name.startswith(("kernel", "mc_epgp")))
    quad = max(e.value for e in rep.entries if e.name.endswith("quadrature"))
    z = next(e.value for e in rep.entries if e.name.startswith("mc_epgp"))
    ok = rep.passed and wall < 120
    detail = (f"dense oracle {dense:.2g} (< 1e-8); quadrature {quad:.2g} (< 1e-7); "
              f"MC kernel max z-score {z:.2f} (< 3); {wall:.0f} s")
    assert acceptance(6, "Oracle suite", ok, detail), detail


def test_criterion_7_gradients(acceptance):
    t0 = time.perf_counter()
    rep = checks.check_gradcheck("all")
    wall = time.perf_counter() - t0
    worst = max(e.value for e in rep.entries)
    ok = rep.passed and len(rep.entries) == 5 * len(systems.SYSTEM_NAMES) and wall < 60
    detail = f"max relative error {worst:.2g} over {len(rep.entries)} instances; {wall:.0f} s"
    assert acceptance(7, "Gradient suite", ok, detail), detail


def test_criterion_8_determinism(tmp_path, acceptance):
    mismatched = []
    files = 0
    for name, cfg in SMALL.items():
        for k in ("a", "b"):
            run_experiment(name, cfg, out=tmp_path / k)
        a, b = tmp_path / "a" / name, tmp_path / "b" / name
        if _strip_timing(a / "results.csv") != _strip_timing(b / "results.csv"):
            mismatched.append(f"{name}/results.csv")
        for f in sorted(a.rglob("*")):
            if not f.is_file() or f.name == "results.csv" or "traces" in f.parts:
                continue
            files += 1
            if f.read_bytes() != (b / f.relative_to(a)).read_bytes():
                mismatched.append(str(f.relative_to(tmp_path / "a")))
    ok = not mismatched
    detail = (f"{len(SMALL)} experiments, {files} files compared byte for byte"
              + (f"; differing: {', '.join(mismatched)}" if mismatched else ""))
    assert acceptance(8, "Determinism", ok, detail), detail
