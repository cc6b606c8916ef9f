import json

import numpy as np
import pandas as pd
import pytest

from degpd.cli import main, parse_candidate, transform_frame
from degpd.errors import UsageError


@pytest.fixture
def sample_csv(tmp_path):
    path = tmp_path / "data.csv"
    assert main(["simulate", "--family", "degpd1", "--kappa", "1", "--sigma", "1", "--xi", "0.2",
                 "-n", "2000", "--seed", "7", "-o", str(path)]) == 0
    return path


def test_simulate_smoke(sample_csv):
    y = pd.read_csv(sample_csv)["y"].to_numpy()
    assert y.size == 2000
    assert np.issubdtype(y.dtype, np.integer) and y.min() >= 0
    assert np.isfinite(y.mean())


def test_simulate_is_seeded(tmp_path, sample_csv):
    again = tmp_path / "again.csv"
    main(["simulate", "--family", "degpd1", "--kappa", "1", "--sigma", "1", "--xi", "0.2",
          "-n", "2000", "--seed", "7", "-o", str(again)])
    assert again.read_bytes() == sample_csv.read_bytes()


def test_simulate_rejects_ordering(capsys):
    code = main(["simulate", "--family", "degpd4", "--p", "0.5", "--kappa1", "5", "--kappa2", "2",
                 "--sigma", "1", "--xi", "0.2", "-n", "10", "--seed", "1"])
    assert code == 2
    assert "kappa2" in capsys.readouterr().err


def test_entropy_seed_is_printed(tmp_path, capsys):
    out = tmp_path / "s.csv"
    assert main(["simulate", "--family", "poisson", "--lambda", "2", "-n", "5", "-o", str(out)]) == 0
    err = capsys.readouterr().err
    assert err.startswith("seed: ")
    seed = int(err.split()[1])
    again = tmp_path / "s2.csv"
    main(["simulate", "--family", "poisson", "--lambda", "2", "-n", "5", "--seed", str(seed), "-o", str(again)])
    assert again.read_bytes() == out.read_bytes()


def test_fit_and_diagnose_round_trip(tmp_path, sample_csv):
    report_path = tmp_path / "fit.json"
    assert main(["fit", str(sample_csv), "--family", "degpd1", "-o", str(report_path)]) == 0
    report = json.loads(report_path.read_text())
    assert report["schema_version"] == 1 and report["kind"] == "iid"
    est = report["fit"]["estimates"]
    se = report["fit"]["std_errors"]
    for k, v in dict(kappa=1, sigma=1, xi=0.2).items():
        assert abs(est[k] - v) < 4 * se[k]

    dirs = [tmp_path / "d1", tmp_path / "d2"]
    for d in dirs:
        assert main(["diagnose", str(sample_csv), "--fit", str(report_path), "--out-dir", str(d),
                     "--seed", "3", "--chi-square"]) == 0
    for name in ("residuals.csv", "qq.csv", "diagnostics.json"):
        assert (dirs[0] / name).read_bytes() == (dirs[1] / name).read_bytes()
    summary = json.loads((dirs[0] / "diagnostics.json").read_text())
    assert summary["residuals"]["ks_pvalue"] > 0.01
    assert summary["chi_square"]["pvalue"] > 0.01
    qq = pd.read_csv(dirs[0] / "qq.csv")
    assert list(qq.columns) == ["index", "theoretical", "empirical"] and len(qq) == 2000


def test_poisson_diagnose_rejects(tmp_path, sample_csv):
    report_path = tmp_path / "pois.json"
    main(["fit", str(sample_csv), "--family", "poisson", "-o", str(report_path)])
    assert main(["diagnose", str(sample_csv), "--fit", str(report_path), "--out-dir", str(tmp_path / "d"),
                 "--seed", "1"]) == 0
    summary = json.loads((tmp_path / "d" / "diagnostics.json").read_text())
    assert summary["residuals"]["ks_pvalue"] < 0.01


def test_fit_missing_response_column(sample_csv, capsys):
    assert main(["fit", str(sample_csv), "--family", "degpd1", "--response", "count"]) == 2
    assert "'count'" in capsys.readouterr().err


def test_fit_unreadable_file_and_bad_formula(tmp_path, sample_csv):
    assert main(["fit", str(tmp_path / "nope.csv"), "--family", "degpd1"]) == 2
    assert main(["fit", str(sample_csv), "--family", "degpd1", "--formula", "sigma ~ s(x"]) == 2
    with pytest.raises(SystemExit):
        main(["fit", str(sample_csv), "--family", "degpd9"])


def test_gam_fit_via_cli(tmp_path):
    rng = np.random.default_rng(0)
    n = 800
    x = rng.uniform(size=n)
    from degpd.distributions import ModelSpec

    spec = ModelSpec("degpd1")
    y = np.array([spec.build(dict(kappa=2, sigma=float(np.exp(np.sin(2 * np.pi * xi))), xi=0.2)).sample(1, i)[0]
                  for i, xi in enumerate(x)])
    data = tmp_path / "cov.csv"
    pd.DataFrame({"y": y, "x": x}).to_csv(data, index=False)
    out = tmp_path / "gam.json"
    assert main(["fit", str(data), "--family", "degpd1", "--formula", "sigma ~ s(x, k=8)", "-o", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["kind"] == "gam"
    assert report["fit"]["edf"]["total"] > 3
    assert any(row["term"] == "s(x)" for row in report["term_tests"])
    d = tmp_path / "diag"
    assert main(["diagnose", str(data), "--fit", str(out), "--out-dir", str(d), "--seed", "2", "--chi-square"]) == 0
    summary = json.loads((d / "diagnostics.json").read_text())
    assert "unavailable" in summary["chi_square"]


def test_compare_ranking(tmp_path, sample_csv, capsys):
    out = tmp_path / "cmp.json"
    assert main(["compare", str(sample_csv), "--candidate", "poisson", "--candidate", "degpd1", "-o", str(out)]) == 0
    ranking = json.loads(out.read_text())["ranking"]
    assert ranking[0]["family"] == "degpd1"
    assert main(["compare", str(sample_csv), "--candidate", "degpd1", "--candidate", "degpd1", "-o", str(out)]) == 0
    a, b = json.loads(out.read_text())["ranking"]
    assert a["aic"] == pytest.approx(b["aic"], abs=1e-6)
    assert main(["compare", str(sample_csv), "--candidate", "degpd1"]) == 2


def test_parse_candidate():
    assert parse_candidate("degpd1") == ("degpd1", [])
    assert parse_candidate("degpd2:sigma ~ s(x); xi ~ s(w)") == ("degpd2", ["sigma ~ s(x)", "xi ~ s(w)"])
    with pytest.raises(UsageError):
        parse_candidate("gpd")


def test_transform_examples(tmp_path):
    df = pd.DataFrame({"a": [1, 2, 3, 4], "b": [1, 5, 2, 9]})
    assert transform_frame(df, ["a"], "sum", 3)["a"].tolist() == [6, 9]
    assert transform_frame(df, ["a"], "sum", 1)["a"].tolist() == [1, 2, 3, 4]
    med = transform_frame(pd.DataFrame({"x": [1, 5, 2, 9, 4]}), ["x"], "median", 3, lagged=True)
    assert med.loc[3, "x"] == 2
    with pytest.raises(UsageError):
        transform_frame(df, ["a"], "sum", 5)
    src = tmp_path / "t.csv"
    df.to_csv(src, index=False)
    out = tmp_path / "o.csv"
    assert main(["transform", str(src), "--columns", "a,b", "--mode", "sum", "--window", "3", "-o", str(out)]) == 0
    assert pd.read_csv(out)["b"].tolist() == [8, 16]
    assert main(["transform", str(src), "--columns", "a", "--window", "9"]) == 2


def test_study_from_toml(tmp_path, capsys):
    cfg = tmp_path / "row.toml"
    cfg.write_text('family = "degpd1"\nn = 200\nn_replicates = 4\nseed = 5\n[truth]\nkappa = 1.0\nsigma = 1.0\nxi = 0.2\n')
    out = tmp_path / "out"
    assert main(["study", str(cfg), "--out-dir", str(out)]) == 0
    printed = json.loads(capsys.readouterr().out)
    assert printed["n_success"] == 4
    assert (out / "row_estimates.csv").exists()
    saved = json.loads((out / "row_summary.json").read_text())
    assert saved["rmse"] == printed["rmse"]
    bad = tmp_path / "bad.toml"
    bad.write_text('family = "degpd1"\nn = 10\n[truth]\nkappa = 1.0\nsigma = 1.0\nxi = 0.2\n')
    assert main(["study", str(bad)]) == 2
