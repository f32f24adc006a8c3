import json

import numpy as np
import pytest

from epgp import io, sepgp, systems, truth
from epgp.cli import EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC, EXIT_OK, main
from epgp.sepgp import Dataset


@pytest.fixture
def heat_data(tmp_path):
    path = tmp_path / "heat.csv"
    T = truth.heat1d_exact(((-2.0, 2.0, 9), (0.0, 1.0, 5)))
    io.write_dataset(path, truth.sample_dataset(T, 12, 0))
    return path


def test_fit_zero_epochs_is_initialization(tmp_path, heat_data, capsys):
    ck = tmp_path / "m.json"
    rc = main(["fit", "--system", "heat1d", "--data", str(heat_data), "--out", str(ck),
               "--set", "epochs=0", "--set", "features=6", "--seed", "4"])
    assert rc == EXIT_OK
    assert "final nlml" in capsys.readouterr().out
    payload, theta, data = io.read_checkpoint(ck)
    init = sepgp.init_params(systems.get_system("heat1d"), 6, 4, log_noise=np.log(1e-4),
                             log_sigma=-np.log(6))
    np.testing.assert_array_equal(theta.Zim, init.Zim)
    assert theta.log_noise == init.log_noise and payload["epoch"] == 0
    assert not (tmp_path / "m.trace.csv").exists()


def test_fit_predict_interpolates(tmp_path, heat_data):
    ck, pred = tmp_path / "m.json", tmp_path / "p.csv"
    assert main(["fit", "--system", "heat1d", "--data", str(heat_data), "--out", str(ck),
                 "--set", "epochs=5", "--set", "features=40", "--set", "noise=1e-12"]) == EXIT_OK
    assert (tmp_path / "m.trace.csv").exists()
    assert main(["predict", "--checkpoint", str(ck), "--points", str(heat_data), "--out", str(pred),
                 "--cov", "diag"]) == EXIT_OK
    data = io.read_dataset(heat_data)
    rows = np.loadtxt(pred, delimiter=",", skiprows=1)
    np.testing.assert_array_equal(rows[:, :2], data.X)
    np.testing.assert_allclose(rows[:, 2], data.value, rtol=1e-5, atol=1e-5)
    assert np.all(rows[:, 3] >= -1e-10)


def test_predict_matches_fit_time_diagnostics(tmp_path, heat_data):
    ck, pred = tmp_path / "m.json", tmp_path / "p.csv"
    main(["fit", "--system", "heat1d", "--data", str(heat_data), "--out", str(ck),
          "--set", "epochs=3", "--set", "features=6"])
    payload, theta, data = io.read_checkpoint(ck)
    spec = systems.get_system("heat1d")
    assert sepgp.nlml(spec, theta, data) == pytest.approx(payload["nlml"], abs=1e-10)
    main(["predict", "--checkpoint", str(ck), "--grid=-2:2:9,0:1:5", "--out", str(pred)])
    rows = np.loadtxt(pred, delimiter=",", skiprows=1)
    direct = sepgp.posterior(spec, theta, data, rows[:, :2]).mean[:, 0]
    np.testing.assert_allclose(rows[:, 2], direct, atol=1e-10)


def test_maxwell_e_only_predicts_six_components(tmp_path):
    data_path, ck, pred = tmp_path / "e.csv", tmp_path / "m.json", tmp_path / "p.csv"
    T = truth.maxwell_planewaves(((-1, 1, 3), (-1, 1, 3), (-1, 1, 3), (0, 1, 3)))
    io.write_dataset(data_path, truth.sample_dataset(T, 10, 0, components=[0, 1, 2]))
    assert main(["fit", "--system", "maxwell", "--data", str(data_path), "--out", str(ck),
                 "--set", "epochs=2", "--set", "features=12"]) == EXIT_OK
    assert main(["predict", "--checkpoint", str(ck), "--grid", "0:1:2,0:1:2,0:1:2,0:1:2",
                 "--cov", "diag", "--out", str(pred)]) == EXIT_OK
    header = pred.read_text().splitlines()[0].split(",")
    assert header[4:10] == [f"mean{j}" for j in range(1, 7)]
    assert header[10:] == [f"var{j}" for j in range(1, 7)]


def test_sample_truth_and_prior(tmp_path):
    out = tmp_path / "s.csv"
    assert main(["sample", "truth", "--truth", "heat1d_exact", "--count", "7", "--where", "0",
                 "--out", str(out)]) == EXIT_OK
    data = io.read_dataset(out, n=2)
    assert len(data) == 7 and np.all(data.X[:, 1] == 0)
    prior = tmp_path / "prior.csv"
    assert main(["sample", "prior", "--system", "heat2d", "--grid=-1:1:5,-1:1:5,0:1:3",
                 "--set", "features=20", "--out", str(prior), "--seed", "2"]) == EXIT_OK
    assert len(prior.read_text().splitlines()) == 76


@pytest.mark.parametrize("what", ["residual", "gradcheck", "psd", "oracle"])
def test_check_prints_json(what, tmp_path, capsys):
    out = tmp_path / "r.json"
    assert main(["check", what, "laplace2d", "--out", str(out)]) == EXIT_OK
    rep = json.loads(capsys.readouterr().out)
    assert rep["passed"] and rep["checks"]
    assert json.loads(out.read_text()) == rep


def test_check_on_checkpoint(tmp_path, heat_data, capsys):
    ck = tmp_path / "m.json"
    main(["fit", "--system", "heat1d", "--data", str(heat_data), "--out", str(ck),
          "--set", "epochs=0", "--set", "features=6"])
    capsys.readouterr()
    for what in ("residual", "gradcheck", "psd", "oracle"):
        assert main(["check", what, str(ck)]) == EXIT_OK
        assert json.loads(capsys.readouterr().out)["passed"]


def test_experiment_verb(tmp_path, capsys):
    rc = main(["experiment", "laplace_demo", "--seed", "0", "--out", str(tmp_path),
               "--set", "epochs=5", "--set", "grid_side=16"])
    assert rc == EXIT_OK
    assert "rmse=" in capsys.readouterr().out
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"epochs": 0, "lrs": {"noise": 0.5}, "grid_side": 16}))
    assert main(["experiment", "laplace_demo", "--seed", "1", "--out", str(tmp_path),
                 "--config", str(cfg)]) == EXIT_OK
    manifest = json.loads((tmp_path / "laplace_demo" / "manifest.json").read_text())
    assert manifest["config"]["lrs"]["noise"] == 0.5 and manifest["seeds"] == [1]


def test_exit_codes(tmp_path, heat_data):
    bad = tmp_path / "bad.csv"
    bad.write_text("x1,x2,component,value\n0,0,0,oops\n")
    assert main(["fit", "--system", "heat1d", "--data", str(bad), "--out", str(tmp_path / "m.json")]) == EXIT_IO
    assert main(["fit", "--system", "heat1d", "--data", str(tmp_path / "missing.csv")]) == EXIT_IO
    assert main(["fit", "--system", "plasma", "--data", str(heat_data)]) == EXIT_CONFIG
    assert main(["fit", "--system", "heat1d", "--data", str(heat_data), "--set", "momentum=1"]) == EXIT_CONFIG
    assert main(["experiment", "laplace_demo", "--set", "seeds=[]"]) == EXIT_CONFIG
    ck = tmp_path / "m.json"
    main(["fit", "--system", "heat1d", "--data", str(heat_data), "--out", str(ck), "--set", "epochs=0"])
    text = ck.read_text().replace('"epoch": 0', '"epoch": 1')
    ck.write_text(text)
    assert main(["predict", "--checkpoint", str(ck), "--grid", "0:1:2,0:1:2"]) == EXIT_IO
    with pytest.raises(SystemExit) as exc:
        main(["experiment", "nonexistent"])
    assert exc.value.code == 2


def test_numerical_failure_exit_code(tmp_path, monkeypatch, heat_data):
    from epgp import linalg, training

    def boom(*a, **k):
        raise linalg.NotPositiveDefinite("epoch 0: not positive definite")

    monkeypatch.setattr(training, "train", boom)
    assert main(["fit", "--system", "heat1d", "--data", str(heat_data),
                 "--out", str(tmp_path / "m.json")]) == EXIT_NUMERIC
