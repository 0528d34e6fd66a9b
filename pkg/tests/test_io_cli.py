import json

import numpy as np
import pytest

from cbfvol import cli
from cbfvol.io import RcovFormatError, read_json, read_rcov, write_json, write_ratio_csv, write_rcov


def test_rcov_roundtrip_is_exact(tmp_path, sim_series):
    path = tmp_path / "y.rcov"
    write_rcov(path, sim_series[:50])
    back = read_rcov(path)
    assert np.array_equal(back, sim_series[:50])
    header = path.read_text().splitlines()[0]
    assert header == "#rcov v1 n=3 T=50"


def test_rcov_format_errors(tmp_path):
    p = tmp_path / "bad.rcov"
    p.write_text("#rcov v1 n=2 T=2\n1 0 1\n")
    with pytest.raises(RcovFormatError, match="T=2"):
        read_rcov(p)
    p.write_text("#rcov v1 n=2 T=1\n1 0\n")
    with pytest.raises(RcovFormatError):
        read_rcov(p)
    p.write_text("rcov n=2\n")
    with pytest.raises(RcovFormatError):
        read_rcov(p)
    p.write_text("#rcov v1 n=2 T=1\n1 2 1\n")  # indefinite
    with pytest.raises(ValueError):
        read_rcov(p)


def test_ridge_repairs_singular_input(tmp_path):
    p = tmp_path / "sing.rcov"
    p.write_text("#rcov v1 n=2 T=1\n1 1 1\n")
    with pytest.raises(ValueError):
        read_rcov(p)
    Y = read_rcov(p, ridge=1e-6)
    assert np.linalg.eigvalsh(Y[0])[0] > 0


def test_json_and_csv(tmp_path):
    p = tmp_path / "r.json"
    doc = write_json(p, {"x": np.array([1.0, np.nan, np.inf]), "k": np.int64(3)})
    assert doc["schema"] == "cbfvol-report/1"
    back = read_json(p)
    assert back["x"] == [1.0, None, "inf"] and back["k"] == 3
    (tmp_path / "other.json").write_text(json.dumps({"a": 1}))
    with pytest.raises(ValueError):
        read_json(tmp_path / "other.json")
    c = tmp_path / "ratios.csv"
    write_ratio_csv(c, [4.0, 2.0, 1.0], [2.0, 2.0])
    assert c.read_text().splitlines() == ["i,eigenvalue,ratio", "1,4.0,2.0", "2,2.0,2.0", "3,1.0,"]


def test_cli_pipeline(tmp_path, capsys):
    y = str(tmp_path / "y.rcov")
    assert cli.main(["simulate", "--seed", "4", "--T", "400", "--out", y]) == 0
    assert read_rcov(y).shape == (400, 3, 3)
    # same seed, same file
    y2 = str(tmp_path / "y2.rcov")
    cli.main(["simulate", "--seed", "4", "--T", "400", "--out", y2])
    assert open(y).read() == open(y2).read()

    fit_json = str(tmp_path / "fit.json")
    assert cli.main(["fit", y, "--out", fit_json]) == 0
    doc = read_json(fit_json)
    assert doc["converged"] and len(doc["parameters"]) == 14

    diag_json = str(tmp_path / "diag.json")
    assert cli.main(["diagnose", y, fit_json, "--lags", "2", "4", "--out", diag_json]) == 0
    rows = read_json(diag_json)["rows"]
    assert [r["l"] for r in rows] == [2, 4] and all(0 <= r["p"] <= 1 for r in rows)

    out_dir = str(tmp_path / "fac")
    assert cli.main(["factor", y, "--out", out_dir]) == 0
    assert (tmp_path / "fac" / "ratios.csv").exists()


def test_cli_vt_fit_and_diagnose(tmp_path):
    y = str(tmp_path / "y.rcov")
    cli.main(["simulate", "--seed", "5", "--T", "400", "--out", y])
    ini = tmp_path / "vt.ini"
    ini.write_text("[model]\nvt = true\nstructure = diagonal\n[diagnose]\nlags = 2\n")
    fit_json = str(tmp_path / "fit.json")
    assert cli.main(["fit", y, "--config", str(ini), "--out", fit_json]) == 0
    assert read_json(fit_json)["vt"] is True
    d = str(tmp_path / "d.json")
    assert cli.main(["diagnose", y, fit_json, "--config", str(ini), "--out", d]) == 0
    assert read_json(d)["test"] == "Pi_v"


def test_cli_forecast(tmp_path):
    y = str(tmp_path / "y.rcov")
    cli.main(["simulate", "--seed", "6", "--T", "340", "--out", y])
    ini = tmp_path / "fc.ini"
    ini.write_text("[rolling]\nwindow = 300\nhorizons = 1 5\nrefit_every = 40\nreference = cbf\n"
                   "[model.cbf]\nkind = cbf\nhar = false\n[model.mean]\nkind = mean\n")
    out = str(tmp_path / "fc.json")
    assert cli.main(["forecast", y, "--config", str(ini), "--out", out]) == 0
    doc = read_json(out)
    assert {r["model"] for r in doc["summary"]} == {"cbf", "mean"}
    assert len(doc["dm"]["frobenius"]) == 2


def test_cli_exit_codes(tmp_path, capsys):
    assert cli.main(["fit", str(tmp_path / "missing.rcov")]) == cli.EXIT_IO
    bad = tmp_path / "bad.ini"
    bad.write_text("[model]\nfamily = matrix_f\nspeed = fast\n")
    y = str(tmp_path / "y.rcov")
    cli.main(["simulate", "--T", "200", "--out", y])
    assert cli.main(["fit", y, "--config", str(bad)]) == cli.EXIT_VALIDATION
    bad.write_text("[weird]\nx = 1\n")
    assert cli.main(["fit", y, "--config", str(bad)]) == cli.EXIT_VALIDATION
    assert cli.main(["fit", y, "--ridge", "-1"]) == cli.EXIT_VALIDATION
    # a non-stationary spec file is accepted with a warning, a zero series is numerically degenerate
    z = tmp_path / "z.rcov"
    z.write_text("#rcov v1 n=2 T=3\n" + "1.0 0.0 1.0\n" * 3)
    assert cli.main(["factor", str(z)]) == cli.EXIT_NUMERIC
    err = capsys.readouterr().err.strip().splitlines()[-1]
    assert json.loads(err)["kind"] == "numerical"


def test_cli_replicate_small(tmp_path, capsys):
    ini = tmp_path / "rep.ini"
    ini.write_text("[replicate]\nT = 300\nlams = 0.0\nlags = 2\n")
    out = str(tmp_path / "t2.json")
    assert cli.main(["replicate", "portmanteau", "--reps", "2", "--config", str(ini), "--out", out]) == 0
    doc = read_json(out)
    assert doc["results"][0]["reps"] == 2
