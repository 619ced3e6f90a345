import json

import numpy as np
import pandas as pd
import pytest

from bayesurv import io
from bayesurv.cli import main
from bayesurv.core import CensorKind
from support import fixture_path

QUICK = ["--chains", "2", "--burnin", "100", "--iter", "200", "--thin", "2"]


def _write(path, text):
    path.write_text(text)
    return path


def test_larynx_first_row_and_design():
    data = io.load_dataset(fixture_path("larynx.csv"), {
        "time": "time", "status": "delta", "covariates": ["stage", "age"],
        "factors": {"stage": {"reference": 1}}, "standardize": ["age"], "intercept": True})
    assert len(data) == 90
    first = data.observations[0]
    assert first.kind is CensorKind.EXACT and first.t == 0.6
    assert data.design.column_names == ("(Intercept)", "stage2", "stage3", "stage4", "age")
    age = data.X[:, 4]
    assert abs(age.mean()) < 1e-12 and age.std(ddof=1) == pytest.approx(1.0)


def test_kidney_groups():
    data = io.load_dataset(fixture_path("kidney.csv"), {
        "time": "time", "status": "status", "group": "id", "covariates": ["sex"],
        "factors": {"sex": {"reference": 1}}})
    assert data.extras["n_groups"] == 38
    assert np.all(np.bincount(data.extras["group"]) == 2)
    assert data.design.column_names == ("(Intercept)", "sex2")


def test_heart2_illness_death_layout():
    data = io.load_dataset(fixture_path("heart2.csv"), {
        "illness_death": {"t1": "times1", "sojourn": "times2", "delta": "delta", "status": "status"},
        "covariates": ["age", "year", "surgery"], "intercept": False})
    ev = data.extras["events"]
    assert len(data) == 103
    assert ev[:, 0].sum() == 69 and ev[:, 2].sum() == 45 and ev[:, 1].sum() == 30


def test_read_errors(tmp_path):
    with pytest.raises(ValueError, match="empty"):
        io.read_csv(_write(tmp_path / "e.csv", ""))
    bad = _write(tmp_path / "b.csv", "time,status,x\n1.0,1,a\n2.0,0,3\n")
    with pytest.raises(ValueError, match="non-numeric"):
        io.load_dataset(bad, {"time": "time", "status": "status", "covariates": ["x"]})
    neg = _write(tmp_path / "n.csv", "time,status\n-1.0,1\n2.0,0\n")
    with pytest.raises(ValueError, match="negative"):
        io.load_dataset(neg, {"time": "time", "status": "status"})
    miss = _write(tmp_path / "m.csv", "time,status\n1.0,1\n")
    with pytest.raises(ValueError, match="wt"):
        io.load_dataset(miss, {"time": "time", "status": "status", "covariates": ["wt"]})


def test_interval_bounds_binding(tmp_path):
    f = _write(tmp_path / "i.csv", "lo,hi\n1.0,2.0\n0,3.0\n4.0,\n")
    data = io.load_dataset(f, {"lower": "lo", "upper": "hi", "intercept": False})
    assert [o.kind for o in data.observations] == [CensorKind.INTERVAL, CensorKind.LEFT, CensorKind.RIGHT]


def test_covariate_vector_by_name():
    names = ("(Intercept)", "stage2", "stage3", "stage4", "age")
    np.testing.assert_array_equal(io.covariate_vector({"stage3": 1}, names), [1, 0, 1, 0, 0])
    with pytest.raises(ValueError):
        io.covariate_vector({"stage9": 1}, names)


def _small_config(tmp_path, family="aft"):
    cfg = json.loads(fixture_path("larynx_aft.json").read_text())
    cfg["data"] = str(fixture_path("larynx.csv"))
    cfg["chains"] = {"seed": 7}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


def test_fit_round_trip_and_determinism(tmp_path, capsys):
    cfg = _small_config(tmp_path)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["fit", "--config", str(cfg), "--out-dir", str(a), *QUICK]) == 0
    assert main(["fit", "--config", str(cfg), "--out-dir", str(b), *QUICK]) == 0
    sa = (a / "samples.csv").read_bytes()
    assert sa == (b / "samples.csv").read_bytes()
    meta, samples = io.read_run(a)
    frame = io.samples_to_frame(samples)
    again = io.samples_from_frame(frame, samples.param_names)
    np.testing.assert_array_equal(again.draws, samples.draws)
    summary = pd.read_csv(a / "summary.csv", index_col=0, float_precision="round_trip")
    assert set(summary.index) >= {"alpha", "beta[1]"}
    derived = pd.read_csv(a / "derived.csv")
    assert derived.loc[0, "name"] == "RM_stage3_vs_stage4"
    assert meta["family"] == "aft"
    out = capsys.readouterr().out
    assert "alpha" in out


def test_seed_override_changes_draws(tmp_path):
    cfg = _small_config(tmp_path)
    main(["fit", "--config", str(cfg), "--out-dir", str(tmp_path / "a"), *QUICK])
    main(["fit", "--config", str(cfg), "--out-dir", str(tmp_path / "c"), *QUICK, "--seed", "8"])
    assert (tmp_path / "a" / "samples.csv").read_bytes() != (tmp_path / "c" / "samples.csv").read_bytes()


def test_summarize_diagnose_derive(tmp_path, capsys):
    cfg = _small_config(tmp_path)
    run = tmp_path / "run"
    main(["fit", "--config", str(cfg), "--out-dir", str(run), *QUICK])
    assert main(["summarize", str(run), "--out-dir", str(tmp_path / "s")]) == 0
    s1 = pd.read_csv(run / "summary.csv", index_col=0, float_precision="round_trip")
    s2 = pd.read_csv(tmp_path / "s" / "summary.csv", index_col=0, float_precision="round_trip")
    pd.testing.assert_frame_equal(s1, s2)
    assert main(["diagnose", str(run)]) == 0
    assert main(["diagnose", str(run), "--strict", "--psrf-max", "1.0"]) == 3
    req = _write(tmp_path / "req.json", json.dumps(
        {"quantity": "relative_median", "name": "rm", "x1": {"stage2": 1}, "x2": {}}))
    assert main(["derive", str(run), "--request", str(req), "--out-dir", str(tmp_path / "d")]) == 0
    assert pd.read_csv(tmp_path / "d" / "derived.csv").loc[0, "name"] == "rm"
    wrong = _write(tmp_path / "w.json", json.dumps({"quantity": "hazard_ratio", "x1": {}, "x2": {}}))
    assert main(["derive", str(run), "--request", str(wrong)]) == 2
    assert "needs a ph fit" in capsys.readouterr().err


def test_unknown_family_is_a_clean_error(tmp_path, capsys):
    cfg = json.loads(_small_config(tmp_path).read_text())
    cfg["family"] = "lognormal"
    path = _write(tmp_path / "bad.json", json.dumps(cfg))
    assert main(["fit", "--config", str(path), "--out-dir", str(tmp_path / "x")]) == 2
    assert "lognormal" in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert main(["fit", "--config", str(tmp_path / "nope.json")]) == 2


@pytest.mark.parametrize("family", ["aft", "ph", "cure", "competing_risks", "illness_death",
                                    "frailty", "joint"])
def test_simulate_then_fit(tmp_path, family):
    out = tmp_path / family
    assert main(["simulate", "--family", family, "--n", "60", "--seed", "3", "--out-dir", str(out)]) == 0
    truth = json.loads((out / "truth.json").read_text())
    assert truth
    assert main(["fit", "--config", str(out / "config.json"), "--out-dir", str(out / "fit"),
                 "--chains", "2", "--burnin", "20", "--iter", "20", "--thin", "1"]) == 0
    meta, samples = io.read_run(out / "fit")
    assert meta["family"] == family
    assert samples.n_chains == 2
