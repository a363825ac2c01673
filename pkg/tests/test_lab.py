"""Experiment layer and CLI: model construction, plans, CSV output, commands."""

import json
import math
import subprocess
import sys

import pytest

from asianvol.asymptotics import atm_level
from asianvol.cli import main as cli_main
from asianvol.lab import (
    ExperimentPlan,
    _cell_seed,
    build_model,
    estimate_atm_iv,
    estimate_skew_fd,
    fd_slope,
    load_plan,
    run_experiment,
    write_csv,
)
from asianvol.mc import McConfig
from asianvol.models import ConstantVol, FractionalBergomi, MarketSetup, Sabr


# ---------------------------------------------------------------------------
# model construction from the external parameter surface
# ---------------------------------------------------------------------------


def test_build_model_families():
    assert build_model("const", {"sigma0": 0.3}) == ConstantVol(sigma=0.3)
    assert build_model("sabr", {"sigma0": 0.3, "alpha": 0.7}) == Sabr(0.3, 0.7)
    assert build_model(
        "fbergomi", {"sigma0": 0.3, "vov": 0.5, "hurst": 0.4}
    ) == FractionalBergomi(0.3, 0.5, 0.4)
    lv = build_model("localvol-cev", {"cev_nu": 0.3, "cev_beta": 0.5})
    assert lv.sigma_fn(100.0) == pytest.approx(0.03, rel=1e-12)


def test_build_model_accepts_hyphenated_cev_keys():
    lv = build_model("localvol-cev", {"cev-nu": 0.2, "cev-beta": 1.0})
    assert lv.sigma_fn(50.0) == pytest.approx(0.2, rel=1e-15)


def test_build_model_errors():
    with pytest.raises(ValueError, match="requires parameter 'sigma0'"):
        build_model("const", {})
    with pytest.raises(ValueError, match="requires parameter 'vov'"):
        build_model("fbergomi", {"sigma0": 0.3, "hurst": 0.4})
    with pytest.raises(ValueError, match="family must be one of"):
        build_model("heston", {"sigma0": 0.3})


# ---------------------------------------------------------------------------
# estimation wrappers
# ---------------------------------------------------------------------------


def test_estimate_atm_iv_requires_atm_market():
    mkt = MarketSetup(s0=100.0, strike=95.0, maturity=1 / 252)
    cfg = McConfig(n_paths=100, steps=5, seed=0)
    with pytest.raises(ValueError, match="requires strike = s0"):
        estimate_atm_iv(ConstantVol(sigma=0.3), mkt, cfg)


def test_estimate_atm_iv_constant_vol():
    mkt = MarketSetup(s0=100.0, strike=100.0, maturity=1 / 252)
    cfg = McConfig(n_paths=20_000, steps=100, seed=3, estimator="cv_antithetic")
    point = estimate_atm_iv(ConstantVol(sigma=0.3), mkt, cfg)
    assert point.iv_stderr > 0
    # discrete-average bias at 100 steps is ~0.25%; allow it plus noise
    target = atm_level(0.3)
    assert abs(point.iv - target) < 5 * point.iv_stderr + 0.005 * target
    assert point.log_strike == math.log(100.0)


def test_fd_slope_is_a_central_difference():
    assert fd_slope(1.2, 1.0, 0.1) == pytest.approx(1.0, rel=1e-15)


def test_estimate_skew_fd_constant_vol():
    mkt = MarketSetup(s0=100.0, strike=100.0, maturity=1 / 252)
    cfg = McConfig(n_paths=30_000, steps=200, seed=11, estimator="cv_antithetic")
    est = estimate_skew_fd(ConstantVol(sigma=0.3), mkt, cfg)
    theory = 0.3 * math.sqrt(3.0) / 30.0
    assert abs(est.slope - theory) < 4 * est.stderr + 0.05 * theory
    assert est.lower.iv < est.upper.iv  # positive skew orders the two wings
    with pytest.raises(ValueError):
        estimate_skew_fd(ConstantVol(sigma=0.3), mkt, cfg, dk=0.0)


# ---------------------------------------------------------------------------
# plans and CSV output
# ---------------------------------------------------------------------------


def test_load_plan_toml_defaults(tmp_path):
    p = tmp_path / "plan.toml"
    p.write_text(
        'kind = "level_sweep"\nout = "x.csv"\n\n'
        '[model]\nfamily = "const"\n\n[grid]\nsigma0 = [0.2, 0.4]\n'
    )
    plan = load_plan(str(p))
    assert plan.kind == "level_sweep"
    assert plan.mc == McConfig(n_paths=100_000, steps=100, seed=0)
    assert plan.grid["sigma0"] == [0.2, 0.4]


def test_load_plan_json(tmp_path):
    p = tmp_path / "plan.json"
    p.write_text(
        json.dumps(
            {
                "kind": "fbm_check",
                "out": "y.csv",
                "mc": {"seed": 9},
                "grid": {"steps": 4, "hurst": [0.5]},
            }
        )
    )
    plan = load_plan(str(p))
    assert plan.kind == "fbm_check"
    assert plan.mc.seed == 9


def test_plan_rejects_unknown_kind():
    with pytest.raises(ValueError, match="kind must be one of"):
        ExperimentPlan(
            kind="smile_surface",
            model={},
            market={},
            mc=McConfig(n_paths=100, steps=5, seed=0),
            out="z.csv",
        )


def test_committed_plans_parse_and_build():
    # parse every committed plan AND construct its model, so a family or
    # parameter typo in a plan file fails here instead of mid-run
    for name in (
        "plans/level_constant.toml",
        "plans/skew_sabr.toml",
        "plans/skew_bergomi_h04.toml",
        "plans/proxy_sabr_table.toml",
    ):
        plan = load_plan(name)
        assert plan.out
        params = dict(plan.model)
        family = params.pop("family")
        if plan.kind == "proxy_error_table":
            assert family in ("sabr", "fbergomi")
        else:
            params["sigma0"] = float(plan.grid["sigma0"][0])
            build_model(family, params)


def test_write_csv_formats_and_validates(tmp_path):
    out = tmp_path / "t.csv"
    write_csv(str(out), ("a", "b"), [(1.0 / 3.0, "x")])
    assert out.read_text() == "a,b\n0.3333333333,x\n"
    with pytest.raises(OSError, match="output directory"):
        write_csv(str(tmp_path / "missing" / "t.csv"), ("a",), [(1,)])


def test_cell_seed_is_deterministic_and_namespaced():
    assert _cell_seed(7, 1, 0) == _cell_seed(7, 1, 0)
    assert _cell_seed(7, 1, 0) != _cell_seed(7, 2, 0)
    assert _cell_seed(7, 1, 0) != _cell_seed(7, 1, 1)
    assert _cell_seed(7, 1, 0) != _cell_seed(8, 1, 0)


def _tiny_level_plan(out):
    return ExperimentPlan(
        kind="level_sweep",
        model={"family": "const"},
        market={"s0": 100.0, "maturity": 1 / 252},
        mc=McConfig(n_paths=4000, steps=25, seed=5, estimator="cv_antithetic"),
        out=str(out),
        grid={"sigma0": [0.2, 0.4]},
    )


def test_level_sweep_output(tmp_path):
    out = tmp_path / "level.csv"
    run_experiment(_tiny_level_plan(out))
    lines = out.read_text().splitlines()
    assert lines[0] == "sigma0,iv,iv_stderr,theory_level"
    assert len(lines) == 3
    row = lines[1].split(",")
    assert float(row[0]) == 0.2
    # theory column is the exact closed form, printed at 10 significant digits
    assert row[3] == format(atm_level(0.2), ".10g")
    assert abs(float(row[1]) - atm_level(0.2)) < 0.02 * atm_level(0.2)


def test_experiment_reruns_are_byte_identical(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run_experiment(_tiny_level_plan(a))
    run_experiment(_tiny_level_plan(b))
    assert a.read_bytes() == b.read_bytes()


def test_skew_sweep_rough_model_adds_scaled_columns(tmp_path):
    out = tmp_path / "skew.csv"
    plan = ExperimentPlan(
        kind="skew_sweep",
        model={"family": "fbergomi", "vov": 0.5, "hurst": 0.4},
        market={"s0": 100.0, "maturity": 0.001, "rho": -0.3},
        mc=McConfig(n_paths=6000, steps=25, seed=2, estimator="antithetic"),
        out=str(out),
        grid={"sigma0": [0.3]},
    )
    run_experiment(plan)
    lines = out.read_text().splitlines()
    assert lines[0] == (
        "sigma0,skew,skew_stderr,theory_skew,scaled_skew,theory_scaled_skew"
    )
    assert len(lines) == 2


def test_fbm_check_zscores_are_sane(tmp_path):
    out = tmp_path / "fbm.csv"
    plan = ExperimentPlan(
        kind="fbm_check",
        model={},
        market={"maturity": 1.0},
        mc=McConfig(n_paths=2, steps=1, seed=3),
        out=str(out),
        grid={"steps": 4, "hurst": [0.4], "n_samples": 20_000},
    )
    run_experiment(plan)
    lines = out.read_text().splitlines()
    assert lines[0] == "hurst,row,col,analytic_cov,sample_cov,stderr,z_score"
    zs = [abs(float(line.split(",")[-1])) for line in lines[1:]]
    assert len(zs) == 8 * 9 // 2  # upper triangle incl. diagonal of 8x8
    assert max(zs) < 5.0


def test_proxy_error_table_small(tmp_path):
    out = tmp_path / "proxy.csv"
    plan = ExperimentPlan(
        kind="proxy_error_table",
        model={"family": "sabr"},
        market={"s0": 100.0},
        mc=McConfig(n_paths=4000, steps=25, seed=4, estimator="antithetic"),
        out=str(out),
        grid={"n_samples": 3, "maturities": [0.1], "strikes": [100.0, 110.0]},
    )
    run_experiment(plan)
    lines = out.read_text().splitlines()
    assert len(lines) == 3
    atm = lines[1].split(",")
    assert float(atm[0]) == 0.1 and float(atm[1]) == 100.0
    assert math.isfinite(float(atm[2]))
    assert int(atm[6]) == 3  # all three parameter draws valid


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------


def test_cli_price_and_asymptotics_in_process(capsys, tmp_path):
    out = tmp_path / "price.csv"
    rc = cli_main(
        [
            "price", "--model", "const", "--sigma0", "0.3", "--maturity",
            str(1 / 252), "--paths", "4000", "--steps", "25", "--seed", "1",
            "--estimator", "cv_antithetic", "--out", str(out),
        ]
    )
    text = capsys.readouterr().out
    assert rc == 0
    assert "mean " in text and "stderr " in text
    header = out.read_text().splitlines()[0]
    assert header.startswith("model,s0,strike,maturity,rho,mean,stderr")

    rc = cli_main(
        ["asymptotics", "--model", "sabr", "--sigma0", "0.5", "--alpha",
         "0.5", "--rho", "-0.3", "--general", "--maturity", "0.01"]
    )
    text = capsys.readouterr().out
    assert rc == 0
    assert "level 0.2886751346" in text
    assert "skew -0.02309401077" in text
    assert "general_finite_skew" in text and "general_limit_skew" in text


def test_cli_iv_and_skew_in_process(capsys):
    rc = cli_main(
        ["iv", "--model", "const", "--sigma0", "0.3", "--maturity",
         str(1 / 252), "--paths", "4000", "--steps", "25", "--seed", "2",
         "--estimator", "cv_antithetic"]
    )
    assert rc == 0
    assert "iv 0." in capsys.readouterr().out

    rc = cli_main(
        ["skew", "--model", "const", "--sigma0", "0.3", "--maturity",
         str(1 / 252), "--paths", "6000", "--steps", "50", "--seed", "3",
         "--estimator", "cv_antithetic", "--dk", "0.001"]
    )
    text = capsys.readouterr().out
    assert rc == 0
    assert "skew 0." in text and "iv_lower" in text and "iv_upper" in text


def test_cli_error_paths_return_one(capsys):
    # estimator/model mismatch surfaces as a one-line error, exit code 1
    rc = cli_main(
        ["price", "--model", "sabr", "--estimator", "control_variate",
         "--paths", "100", "--steps", "5"]
    )
    captured = capsys.readouterr()
    assert rc == 1
    assert captured.err.startswith("error: control_variate requires ConstantVol")

    rc = cli_main(["fbm-check", "--steps", "2000", "--out", "/tmp/never.csv"])
    captured = capsys.readouterr()
    assert rc == 1
    assert "error:" in captured.err


def test_cli_config_file_sets_defaults(capsys, tmp_path):
    cfgfile = tmp_path / "defaults.toml"
    cfgfile.write_text('model = "const"\nsigma0 = 0.4\n')
    rc = cli_main(["--config", str(cfgfile), "asymptotics"])
    text = capsys.readouterr().out
    assert rc == 0
    assert "level 0.2309401077" in text  # 0.4/sqrt(3)
    # explicit flags beat config entries
    rc = cli_main(["--config", str(cfgfile), "asymptotics", "--sigma0", "0.3"])
    text = capsys.readouterr().out
    assert rc == 0
    assert "level 0.1732050808" in text
    rc = cli_main(["--config", str(tmp_path / "absent.toml"), "asymptotics"])
    captured = capsys.readouterr()
    assert rc == 1
    assert "error:" in captured.err


def test_cli_experiment_subprocess(tmp_path):
    # end-to-end through a real interpreter: plan file in, CSV out
    plan = tmp_path / "plan.toml"
    out = tmp_path / "level.csv"
    plan.write_text(
        'kind = "level_sweep"\nout = "OVERRIDDEN"\n\n'
        '[model]\nfamily = "const"\n\n'
        '[market]\ns0 = 100.0\nmaturity = 0.003968253968253968\n\n'
        '[mc]\nn_paths = 4000\nsteps = 25\nseed = 5\nestimator = "cv_antithetic"\n\n'
        '[grid]\nsigma0 = [0.2, 0.4]\n'
    )
    proc = subprocess.run(
        [sys.executable, "-m", "asianvol.cli", "experiment", str(plan),
         "--out", str(out)],
        capture_output=True,
        text=True,
        timeout=120,
    )
    assert proc.returncode == 0, proc.stderr
    assert f"wrote {out}" in proc.stdout
    assert out.read_text().splitlines()[0] == "sigma0,iv,iv_stderr,theory_level"


def test_cli_missing_plan_subprocess():
    proc = subprocess.run(
        [sys.executable, "-m", "asianvol.cli", "experiment", "/no/such/plan.toml"],
        capture_output=True,
        text=True,
        timeout=60,
    )
    assert proc.returncode == 1
    assert "error:" in proc.stderr
