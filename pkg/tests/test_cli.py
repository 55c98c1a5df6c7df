"""Command line surface: exit codes, JSON output, shim equivalence."""

import json
import os

import numpy as np
import pytest

from nliv import __version__
from nliv.cli import main
from nliv.core import load_stage_one, load_summary
from nliv.inference import CombineConfig, combined_test, confidence_interval, \
    BootstrapConfig
from nliv.inference import test_statistic as zero_effect_test
from nliv.stage2 import Stage2Config, fit_2sir


def _run(capsys, *argv):
    code = main(list(argv))
    cap = capsys.readouterr()
    return code, cap.out, cap.err


@pytest.fixture
def simdir(tmp_path, capsys):
    out = str(tmp_path / "sim")
    code, stdout, _ = _run(capsys, "simulate", "--example", "1",
                           "--beta", "0.3", "--n", "400", "--p", "4",
                           "--seed", "11", "--out", out)
    assert code == 0
    rec = json.loads(stdout)
    assert rec["n1"] == 200 and rec["n2"] == 200 and rec["p"] == 4
    return out


def test_version(capsys):
    with pytest.raises(SystemExit) as ex:
        main(["--version"])
    assert ex.value.code == 0
    assert __version__ in capsys.readouterr().out


def test_simulate_writes_loadable_files(simdir):
    d1 = load_stage_one(os.path.join(simdir, "d1.csv"))
    d2 = load_summary(os.path.join(simdir, "d2.json"))
    assert d1.n1 == 200 and d2.n2 == 200 and d1.p == d2.p == 4
    truth = json.loads(open(os.path.join(simdir, "truth.json")).read())
    assert "phi0_fn" not in truth
    for key in ("theta0", "beta0", "beta0_sir", "support0", "phi0",
                "y_scale"):
        assert key in truth


def test_fit_matches_library(simdir, capsys):
    code, stdout, _ = _run(capsys, "fit", "--d1",
                           os.path.join(simdir, "d1.csv"),
                           "--d2", os.path.join(simdir, "d2.json"),
                           "--slices", "5")
    assert code == 0
    rec = json.loads(stdout)
    d1 = load_stage_one(os.path.join(simdir, "d1.csv"))
    d2 = load_summary(os.path.join(simdir, "d2.json"))
    fit = fit_2sir(d1, d2, n_slices=5, config=Stage2Config())
    assert rec["beta_hat"] == fit.beta_hat
    assert rec["beta_report"] == fit.beta_report
    assert rec["sigma_e_hat"] == fit.sigma_e_hat
    assert np.array_equal(rec["theta_hat"], fit.theta_hat)
    assert np.array_equal(rec["theta_unit"], fit.theta_unit)
    assert rec["invalid_set"] == list(fit.invalid_set)
    assert rec["n_slices"] == 5


def test_single_test_matches_library(simdir, capsys):
    code, stdout, _ = _run(capsys, "test", "--d1",
                           os.path.join(simdir, "d1.csv"),
                           "--d2", os.path.join(simdir, "d2.json"),
                           "--slices", "5")
    assert code == 0
    rec = json.loads(stdout)
    d1 = load_stage_one(os.path.join(simdir, "d1.csv"))
    d2 = load_summary(os.path.join(simdir, "d2.json"))
    res = zero_effect_test(d1, d2, n_slices=5)
    assert rec["statistic"] == res.statistic
    assert rec["p_value"] == res.p_value
    assert rec["method"] == "2SIR" and rec["n_slices"] == 5


def test_combined_test_matches_library(simdir, capsys):
    code, stdout, _ = _run(capsys, "test", "--d1",
                           os.path.join(simdir, "d1.csv"),
                           "--d2", os.path.join(simdir, "d2.json"),
                           "--combine", "--slices", "2,3,5")
    assert code == 0
    rec = json.loads(stdout)
    d1 = load_stage_one(os.path.join(simdir, "d1.csv"))
    d2 = load_summary(os.path.join(simdir, "d2.json"))
    res = combined_test(d1, d2,
                        combine=CombineConfig(slice_counts=(2, 3, 5)))
    assert rec["p_value"] == res.p_value
    assert rec["method"] == "Comb-2SIR"
    assert rec["n_slices"] is None


def test_ci_deterministic_and_brackets(simdir, capsys):
    argv = ("ci", "--d1", os.path.join(simdir, "d1.csv"),
            "--d2", os.path.join(simdir, "d2.json"),
            "--slices", "5", "--boot", "200", "--seed", "7")
    code1, out1, _ = _run(capsys, *argv)
    code2, out2, _ = _run(capsys, *argv)
    assert code1 == code2 == 0
    assert out1 == out2
    rec = json.loads(out1)
    assert 0.0 <= rec["lower"] <= rec["upper"]
    assert rec["level"] == 0.95
    assert rec["monte_carlo_size"] == 200
    d1 = load_stage_one(os.path.join(simdir, "d1.csv"))
    d2 = load_summary(os.path.join(simdir, "d2.json"))
    res = confidence_interval(d1, d2, n_slices=5,
                              boot=BootstrapConfig(n_draws=200, seed=7))
    assert rec["lower"] == res.lower and rec["upper"] == res.upper


def test_transform_stdout_csv(simdir, capsys):
    code, stdout, _ = _run(capsys, "transform", "--d1",
                           os.path.join(simdir, "d1.csv"),
                           "--d2", os.path.join(simdir, "d2.json"),
                           "--slices", "5", "--knn", "30", "--grid", "10")
    assert code == 0
    lines = stdout.strip().split("\n")
    assert lines[0] == "x,phi_hat"
    assert len(lines) == 11
    xs = [float(l.split(",")[0]) for l in lines[1:]]
    assert xs == sorted(xs)


def test_transform_out_file(simdir, tmp_path, capsys):
    dest = str(tmp_path / "phi.csv")
    code, stdout, _ = _run(capsys, "transform", "--d1",
                           os.path.join(simdir, "d1.csv"),
                           "--d2", os.path.join(simdir, "d2.json"),
                           "--slices", "5", "--knn", "30",
                           "--grid", "10", "--out", dest)
    assert code == 0
    rec = json.loads(stdout)
    assert rec["out"] == dest and np.isfinite(rec["rho_hat"])
    body = open(dest).read().strip().split("\n")
    assert body[0] == "x,phi_hat" and len(body) == 11


def test_bench_smoke(tmp_path, capsys):
    out = str(tmp_path / "bench")
    code, stdout, _ = _run(capsys, "bench", "--example", "1",
                           "--beta", "0.0,0.5", "--n", "240", "--p", "4",
                           "--reps", "50", "--no-ci",
                           "--methods", "2SIR,2SLS", "--out", out)
    assert code == 0
    rec = json.loads(stdout)
    assert os.path.exists(rec["results"]) and os.path.exists(rec["curves"])
    curves = open(rec["curves"]).read().strip().split("\n")
    assert curves[0] == "transform,beta,method,power"
    assert len(curves) == 1 + 2 * 2  # two betas, two methods


def test_missing_file_exit_2(tmp_path, capsys):
    code, _, err = _run(capsys, "fit", "--d1", str(tmp_path / "nope.csv"),
                        "--d2", str(tmp_path / "nope.json"),
                        "--slices", "5")
    assert code == 2
    rec = json.loads(err)
    assert "error" in rec and "message" in rec


def test_usage_error_exit_1(simdir, capsys):
    with pytest.raises(SystemExit) as ex:
        main(["test", "--d1", os.path.join(simdir, "d1.csv"),
              "--d2", os.path.join(simdir, "d2.json"),
              "--slices", "2,3,5"])  # list without --combine
    assert ex.value.code == 1
    assert "usage" in capsys.readouterr().err


def test_bad_design_exit_2(tmp_path, capsys):
    code, _, err = _run(capsys, "simulate", "--example", "2", "--nu", "1.0",
                        "--seed", "1", "--out", str(tmp_path / "x"))
    assert code == 2
    assert json.loads(err)["error"] == "ConfigError"


def test_unknown_example_usage_error(tmp_path, capsys):
    with pytest.raises(SystemExit) as ex:
        main(["simulate", "--example", "9", "--out", str(tmp_path / "x")])
    assert ex.value.code == 1


def test_simulate_study_design(tmp_path, capsys):
    out = str(tmp_path / "study")
    code, stdout, _ = _run(capsys, "simulate", "--study",
                           "--transform", "log", "--beta", "1.0",
                           "--n", "400", "--p", "4", "--seed", "3",
                           "--out", out)
    assert code == 0
    truth = json.loads(open(os.path.join(out, "truth.json")).read())
    assert truth["phi0"] == "log"
    th = np.asarray(truth["theta0"], dtype=float)
    assert np.allclose(th, 0.5)  # p^-1/2 at p=4
