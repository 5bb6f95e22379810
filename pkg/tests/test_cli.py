from __future__ import annotations

import json

import numpy as np
import pytest
from click.testing import CliRunner

from dispconvex.cli import main
from dispconvex.profile import Grid, Profile, logistic_profile, write_profile_csv
from dispconvex.verify import random_s_dprime_0


def run(*args, env=None):
    res = CliRunner().invoke(main, [str(a) for a in args], env=env)
    record = json.loads(res.stdout.strip().splitlines()[-1])
    assert record["exit_code"] == res.exit_code
    return res, record


def test_record_fields():
    _, rec = run("threshold", "--l", 3, "--r", 6)
    assert set(rec) >= {"command", "params", "outputs", "exit_code", "wall_time_ms", "tool_version"}
    assert rec["command"] == "threshold"
    assert rec["params"] == {"l": 3, "r": 6, "out_prefix": None}


def test_threshold_36():
    res, rec = run("threshold", "--l", 3, "--r", 6)
    assert res.exit_code == 0
    assert abs(rec["outputs"]["epsilon_map"] - 0.4881) < 5e-4


def test_threshold_cycle_code():
    res, rec = run("threshold", "--l", 2, "--r", 4)
    assert res.exit_code == 2
    assert "cycle" in rec["error"]


def test_threshold_residuals_and_file(tmp_path):
    res, rec = run("threshold", "--l", 5, "--r", 10, "--out-prefix", tmp_path / "t")
    assert res.exit_code == 0
    assert abs(rec["outputs"]["potential_residual"]) < 1e-10
    assert abs(rec["outputs"]["derivative_residual"]) < 1e-10
    saved = json.loads((tmp_path / "t_threshold.json").read_text())
    assert saved["epsilon_map"] == rec["outputs"]["epsilon_map"]


def test_de_run_continuum(tmp_path):
    res, rec = run("de-run", "--l", 3, "--r", 6, "--out-prefix", tmp_path / "run")
    assert res.exit_code == 0
    assert rec["outputs"]["converged"] is True
    assert rec["outputs"]["sup_residual"] < 1e-8
    for suffix in ("_profile.csv", "_summary.json", "_trace.csv"):
        assert (tmp_path / f"run{suffix}").exists()


def test_de_run_discrete():
    res, rec = run("de-run", "--l", 3, "--r", 6, "--mode", "discrete", "--epsilon", 0.45,
                   "--max-iters", 100000, "--tol", 1e-12)
    assert res.exit_code == 0
    assert rec["outputs"]["interior_max"] < 1e-6


def test_de_run_forced_nonconvergence():
    res, _ = run("de-run", "--l", 3, "--r", 6, "--max-iters", 1)
    assert res.exit_code == 3


@pytest.fixture
def profile_files(tmp_path):
    g = Grid.default()
    pm = json.loads(CliRunner().invoke(main, ["threshold", "--l", "3", "--r", "6"]).stdout)["outputs"]["p_map"]
    rng = np.random.default_rng(0)
    paths = {}
    for name in ("a", "b"):
        paths[name] = tmp_path / f"{name}.csv"
        write_profile_csv(random_s_dprime_0(rng, g, pm), paths[name])
    dip = logistic_profile(g, pm, width=0.6).values.copy()
    dip[1200:1300] *= 0.5
    paths["bad"] = tmp_path / "bad.csv"
    write_profile_csv(Profile(g, dip, 0.0, pm), paths["bad"])
    return paths


def test_convexity_pair(profile_files, tmp_path):
    res, rec = run("convexity", profile_files["a"], profile_files["b"], "--l", 3, "--r", 6,
                   "--out-prefix", tmp_path / "c")
    assert res.exit_code == 0
    assert rec["outputs"]["single_linearity_defect"] < 1e-5
    assert (tmp_path / "c_convexity.csv").read_text().startswith("lambda,w_single,w_int,w_total\n")


def test_convexity_identical(profile_files):
    res, rec = run("convexity", profile_files["a"], profile_files["a"], "--l", 3, "--r", 6)
    assert res.exit_code == 0
    w = rec["outputs"]["w_total"]
    assert max(w) - min(w) <= max(rec["outputs"]["noise_floor"], 1e-12)


def test_convexity_non_monotone(profile_files):
    res, _ = run("convexity", profile_files["a"], profile_files["bad"], "--l", 3, "--r", 6)
    assert res.exit_code == 2


def test_kernel_point_l2():
    res, rec = run("kernel", "--l", 2, "--point", 1.0)
    out = rec["outputs"]
    assert res.exit_code == 0
    assert out["oracle"] == pytest.approx(-0.5, abs=1e-6)
    assert out["closed"] == -0.5
    assert abs(out["delta_closed"]) < 1e-6


def test_kernel_scan_l3(tmp_path):
    res, rec = run("kernel", "--l", 3, "--scan", 20, "--out-prefix", tmp_path / "k")
    assert res.exit_code == 0
    assert rec["outputs"]["min_eigenvalue_unit_sector"] >= -1e-4
    assert (tmp_path / "k_scan.csv").exists()


def test_kernel_sector_order():
    res, _ = run("kernel", "--l", 3, "--point", 0.9, 0.2)
    assert res.exit_code == 2


def test_kernel_hessian():
    res, rec = run("kernel", "--l", 3, "--hessian", "--hessian-mode", "analytic_l3", 0.0, 0.0)
    assert res.exit_code == 0
    assert rec["outputs"]["eigenvalues"] == pytest.approx([0.5, 1.5])


def test_kernel_needs_one_mode():
    res, _ = run("kernel", "--l", 3)
    assert res.exit_code == 2


def test_verify_lemmas_deterministic(tmp_path):
    res1, rec = run("verify", "--suite", "lemmas", "--seed", 42, "--out-prefix", tmp_path / "v1")
    res2, _ = run("verify", "--suite", "lemmas", "--seed", 42, "--out-prefix", tmp_path / "v2",
                  env={"DISPCONVEX_THREADS": "3"})
    assert res1.exit_code == 0 and res2.exit_code == 0
    assert rec["outputs"]["failing"] == []
    assert all(p["passed"] for p in rec["outputs"]["properties"])
    for suffix in ("_verify.json", "_verify.txt"):
        assert (tmp_path / f"v1{suffix}").read_bytes() == (tmp_path / f"v2{suffix}").read_bytes()


def test_threads_do_not_change_results(tmp_path):
    _, one = run("kernel", "--l", 3, "--scan", 8, "--threads", 1)
    _, four = run("kernel", "--l", 3, "--scan", 8, "--threads", 4)
    assert one["outputs"] == four["outputs"]
