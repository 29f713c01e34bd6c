import json
import math

import numpy as np
import pytest

from rbsim import experiment_engine, validation_suite
from rbsim.analytic import markov_exact_curve
from rbsim.config_store import Method, config_from_dict
from rbsim.errors import ConfigError
from rbsim.experiment_engine import first_gate_agreement, run_experiment
from rbsim.result_store import body_without_timestamp, load_run, read_curve_csv, read_table_csv, write_curve_csv
from rbsim.validation_suite import CheckResult

MARKOV = {
    "experiment": "curve",
    "noise": {"kind": "white", "gamma": 0.01},
    "lengths": [1, 2, 5, 10, 50],
    "method": "markov",
}


def _run(data, tmp_path, **kwargs):
    kwargs.setdefault("record", False)
    return run_experiment(config_from_dict(data), out_dir=tmp_path, **kwargs)


def _sidecar(path):
    return json.loads(path.read_text(encoding="utf-8"))


def test_markov_curve(tmp_path):
    result = _run(MARKOV, tmp_path)
    assert result.success
    assert result.exit_code == 0
    assert result.experiment == "curve"
    curve = read_curve_csv(tmp_path / "curve.csv")
    want = markov_exact_curve(0.01, MARKOV["lengths"]).p0
    np.testing.assert_allclose(curve.p0, want, atol=1e-12, rtol=0)
    side = _sidecar(tmp_path / "curve.json")
    assert side["method"] == "markov_exact"
    assert side["config_digest"] == result.config_digest
    assert side["noise"]["kind"] == "white"


def test_rerun_gives_identical_bodies(tmp_path):
    _run(MARKOV, tmp_path / "a")
    _run(MARKOV, tmp_path / "b")
    assert body_without_timestamp(tmp_path / "a" / "curve.csv") == body_without_timestamp(tmp_path / "b" / "curve.csv")


def test_auto_selects_coarse_for_slow_noise(tmp_path):
    data = {
        "experiment": "curve",
        "noise": {"kind": "ou", "tau_c": 1000.0, "gamma0": 0.0025},
        "lengths": [1, 10, 100],
        "fit": {"enabled": True},
    }
    result = _run(data, tmp_path)
    assert result.success
    side = _sidecar(tmp_path / "curve.json")
    assert side["selection"]["method"] == "coarse"
    assert side["method"] == "coarse"
    assert "f_coefficients" in side
    # three points cannot be fitted; the failure is reported, not raised
    assert "tail_fit_error" in side["fit"]
    assert side["fit"]["initial_rate_error"]


def test_auto_selects_plme_for_weak_noise(tmp_path):
    data = {"experiment": "curve", "noise": {"kind": "ou", "sigma": 0.05, "tau_c": 0.1}, "lengths": [1, 2, 3]}
    result = _run(data, tmp_path)
    assert result.success
    side = _sidecar(tmp_path / "curve.json")
    assert side["method"] == "plme2"
    assert side["decay_exponent"] == pytest.approx(4 * side["eps"])


def test_zero_noise_curve(tmp_path):
    data = {"experiment": "curve", "noise": {"kind": "ou", "sigma": 0.0, "tau_c": 1.0}, "lengths": [1, 5], "method": "plme"}
    assert _run(data, tmp_path).success
    np.testing.assert_array_equal(read_curve_csv(tmp_path / "curve.csv").p0, 1.0)


def test_method_noise_mismatch_is_a_config_error(tmp_path):
    data = {**MARKOV, "noise": {"kind": "ou", "sigma": 0.1, "tau_c": 1.0}}
    result = _run(data, tmp_path)
    assert not result.success
    assert result.exit_code == 2
    assert result.error_kind == "config"
    assert "white" in result.error_message


def test_quasistatic_method(tmp_path):
    data = {"experiment": "curve", "noise": {"kind": "quasistatic", "sigma": 0.1}, "lengths": [1, 4], "method": "quasistatic",
            "implementation": "instant"}
    assert _run(data, tmp_path).success
    p0 = read_curve_csv(tmp_path / "curve.csv").p0
    assert p0[0] == pytest.approx(0.5 + 0.5 / np.sqrt(1 + (8 / 3) * 0.01), abs=1e-8)


def test_fcoef(tmp_path):
    result = _run({"experiment": "fcoef"}, tmp_path)
    assert result.success
    rows = {r["implementation"]: r for r in read_table_csv(tmp_path / "fcoef.csv")}
    assert set(rows) == {"zsx", "u3", "instant"}
    assert float(rows["instant"]["F_curr"]) == pytest.approx(1.0, abs=1e-8)
    assert (tmp_path / "f_grid_zsx.csv").exists()
    assert not (tmp_path / "gamma_bar.csv").exists()


def test_fcoef_with_noise_writes_rate_profile(tmp_path):
    data = {"experiment": "fcoef", "noise": {"kind": "white", "gamma": 0.03}}
    assert _run(data, tmp_path).success
    rows = read_table_csv(tmp_path / "gamma_bar.csv")
    assert len(rows) == 61
    assert float(rows[30]["gamma_bar"]) == pytest.approx(0.01)


def test_fit_experiment(tmp_path):
    curve_path = write_curve_csv(markov_exact_curve(0.03, np.arange(1, 201)), tmp_path / "input.csv")
    data = {"experiment": "fit", "input_curve": str(curve_path), "fit": {"window": [1, 200]}}
    result = _run(data, tmp_path / "out")
    assert result.success
    assert result.summary["tail_fit"]["gamma"] == pytest.approx(0.04, rel=1e-6)
    assert result.summary["initial_rate"] == pytest.approx(0.04)
    assert len(read_table_csv(tmp_path / "out" / "loglog_slope.csv")) == 200


def test_fit_experiment_missing_input(tmp_path):
    result = _run({"experiment": "fit", "input_curve": str(tmp_path / "nope.csv")}, tmp_path)
    assert not result.success
    assert result.exit_code == 2


def test_compare(tmp_path):
    data = {
        "experiment": "compare",
        "noise": {"kind": "ou", "sigma": 0.05, "tau_c": 0.5},
        "lengths": [1, 2, 3, 5, 8],
        "compare_methods": ["plme", "coarse"],
    }
    result = _run(data, tmp_path)
    assert result.success
    assert result.summary["coarse"]["max_abs_diff"] < 0.05
    header = read_table_csv(tmp_path / "compare.csv")[0].keys()
    assert {"m", "p0_plme", "p0_coarse", "diff_coarse"} <= set(header)
    assert _sidecar(tmp_path / "compare.json")["reference"] == "plme"


def test_compare_needs_two_methods(tmp_path):
    data = {"experiment": "compare", "noise": {"kind": "white", "gamma": 0.01}, "compare_methods": ["plme", "plme"]}
    with pytest.raises(ConfigError, match="two distinct"):
        config_from_dict(data)
    config = config_from_dict({**data, "compare_methods": ["plme", "coarse"]})
    result = run_experiment(config.model_copy(update={"compare_methods": [Method.PLME]}), out_dir=tmp_path, record=False)
    assert not result.success
    assert result.exit_code == 2
    assert result.error_kind == "config"


def test_validate_pass_and_fail(tmp_path, monkeypatch):
    monkeypatch.setattr(validation_suite, "CHECKS", {"ok": lambda: CheckResult("ok", True, "fine")})
    result = _run({"experiment": "validate"}, tmp_path / "pass")
    assert result.success
    assert result.summary["failed"] == []

    monkeypatch.setattr(
        validation_suite,
        "CHECKS",
        {"ok": lambda: CheckResult("ok", True, "fine"), "bad": lambda: CheckResult("bad", False, "broken")},
    )
    result = _run({"experiment": "validate"}, tmp_path / "fail")
    assert not result.success
    assert result.exit_code == 4
    assert result.summary["failed"] == ["bad"]
    rows = read_table_csv(tmp_path / "fail" / "validation.csv")
    assert [r["status"] for r in rows] == ["PASS", "FAIL"]


def test_figure1_instant_gates_sit_at_the_white_limit(tmp_path):
    data = {
        "experiment": "figure1",
        "figure1": {"implementations": ["instant"], "n_points": 3, "tau_c_min": 0.1, "tau_c_max": 1.0},
    }
    result = _run(data, tmp_path)
    assert result.success
    assert result.summary["eps_over_ref_at_tau_c_10"]["instant"] == pytest.approx(1.0, rel=1e-5)
    assert result.summary["impl_ratio_at_tau_c_10"] == pytest.approx(1.0)
    rows = read_table_csv(tmp_path / "figure1.csv")
    assert len(rows) == 3
    for row in rows:
        assert float(row["eps_over_ref"]) == pytest.approx(1.0, rel=1e-5)


def test_figure1_bad_range(tmp_path):
    data = {"experiment": "figure1", "figure1": {"tau_c_min": 2.0, "tau_c_max": 1.0}}
    with pytest.raises(ConfigError, match="tau_c_min < tau_c_max"):
        config_from_dict(data)
    config = config_from_dict({"experiment": "figure1"})
    bad = config.model_copy(update={"figure1": config.figure1.model_copy(update={"tau_c_min": 2.0, "tau_c_max": 1.0})})
    result = run_experiment(bad, out_dir=tmp_path, record=False)
    assert result.exit_code == 2
    assert result.error_kind == "config"


def test_bad_lengths_rejected_at_load():
    with pytest.raises(ConfigError, match="strictly increasing"):
        config_from_dict({**MARKOV, "lengths": [5, 2]})
    with pytest.raises(ConfigError, match="geomspace"):
        config_from_dict({"experiment": "figure2", "figure2": {"lengths": {"geomspace": [10, 5, 3]}}})


def test_figure2_small(tmp_path):
    data = {
        "experiment": "figure2",
        "figure2": {"tau_c_values": [30.0, 100.0], "lengths": {"geomspace": [1, 800, 80]}},
    }
    result = _run(data, tmp_path)
    assert result.success
    assert len(result.summary["gamma_inf"]) == 2
    rates = read_table_csv(tmp_path / "figure2_rates.csv")
    assert [float(r["tau_c_over_tg"]) for r in rates] == [30.0, 100.0]
    for r in rates:
        assert float(r["gamma_0"]) > 0.0
        assert float(r["window_lo"]) == math.ceil(3 * float(r["tau_c_over_tg"]))
    assert result.summary["gamma_inf_decreasing"]
    diagnostics = result.summary["per_tau_c"]
    assert [d["early_window"] for d in diagnostics] == [[30, 90], [100, 300]]
    for d in diagnostics:
        assert -1.0 < d["early_slope"] < 0.0
        assert d["early_slope_drift"] >= 0.0
        assert d["early_slope_ok"] == (d["early_slope_drift"] <= 0.1)
        assert 0.0 <= d["rms_residual"] < 1e-2
        assert d["tail_rms_ok"] == (d["rms_residual"] <= 1e-4)
    for d, w in zip(diagnostics, result.summary["early_slope"]):
        assert d["early_slope"] == w
    if not all(d["early_slope_ok"] for d in diagnostics):
        assert any("log-log slope" in w for w in result.warnings)


def test_figure2_slope_window_is_validated():
    with pytest.raises(ConfigError, match="slope_window"):
        config_from_dict({"experiment": "figure2", "figure2": {"slope_window": [3.0, 1.0]}})


def test_sm_validation_tiny(tmp_path):
    data = {
        "experiment": "sm_validation",
        "implementation": "instant",
        "lengths": [1, 2],
        "mc": {"n_sequences": 4, "n_noise_per_sequence": 2, "substeps_per_gate": 8, "n_realizations": 8},
        "sm_validation": {"tau_c_values": [1.0], "omega_l_values": []},
    }
    result = _run(data, tmp_path)
    assert result.success
    panels = result.summary["panels"]
    assert panels[0]["panel"] == "zero_noise"
    assert panels[0]["within_3_stderr"]
    assert {p["reference"] for p in panels[1:]} == {"plme", "coarse"}
    comparison = result.summary["first_gate_comparison"]
    assert {"perfect", "pulsed", "agreement", "rate_difference", "combined_stderr"} <= set(comparison)
    assert (tmp_path / "sm_convergence.csv").exists()


def test_run_is_recorded(tmp_path):
    result = _run(MARKOV, tmp_path, record=True)
    assert result.run_id
    record = load_run(tmp_path, result.run_id)
    assert record.experiment == "curve"
    assert record.success
    assert record.config_digest == result.config_digest


def test_failed_run_is_recorded(tmp_path):
    data = {**MARKOV, "noise": {"kind": "ou", "sigma": 0.1, "tau_c": 1.0}}
    result = _run(data, tmp_path, record=True)
    record = load_run(tmp_path, result.run_id)
    assert not record.success
    assert "white" in record.error_message


def test_one_over_f_small(tmp_path):
    data = {
        "experiment": "one_over_f",
        "lengths": [1, 2],
        "mc": {"n_realizations": 8},
        "one_over_f": {"omega_l_values": [1.0]},
    }
    result = _run(data, tmp_path)
    assert result.success
    assert set(result.summary) == {"1"}
    rows = read_table_csv(tmp_path / "one_over_f.csv")
    assert {r["method"] for r in rows} == {"plme2", "coarse", "sequence_averaged"}
    assert len(rows) == 6


def test_first_gate_agreement():
    perfect = {"tail_fit": {"gamma": 0.0100, "gamma_stderr": 3e-4}}
    close = {"tail_fit": {"gamma": 0.0105, "gamma_stderr": 4e-4}}
    far = {"tail_fit": {"gamma": 0.0130, "gamma_stderr": 4e-4}}
    ok = first_gate_agreement(perfect, close)
    assert ok["agreement"]
    assert ok["rate_difference"] == pytest.approx(5e-4)
    assert ok["combined_stderr"] == pytest.approx(5e-4)
    assert not first_gate_agreement(perfect, far)["agreement"]
    assert first_gate_agreement(perfect, close, k=0.5)["agreement"] is False
    failed = first_gate_agreement(perfect, {"tail_fit_error": "degenerate"})
    assert failed["agreement"] is False
    assert failed["rate_difference"] is None


@pytest.mark.parametrize("pulsed_gamma, agree", [(0.0101, True), (0.02, False)])
def test_sm_validation_reports_first_gate_disagreement(tmp_path, monkeypatch, pulsed_gamma, agree):
    fits = iter([
        {"tail_fit": {"gamma": 0.01, "gamma_stderr": 1e-4}},
        {"tail_fit": {"gamma": pulsed_gamma, "gamma_stderr": 1e-4}},
    ])
    monkeypatch.setattr(experiment_engine, "fit_summary", lambda curve, ctx, window=None: next(fits))
    data = {
        "experiment": "sm_validation",
        "implementation": "instant",
        "lengths": [1, 2],
        "mc": {"n_sequences": 4, "n_noise_per_sequence": 2, "substeps_per_gate": 8},
        "sm_validation": {"tau_c_values": [0.5], "omega_l_values": [], "zero_noise_panel": False},
    }
    result = _run(data, tmp_path)
    assert result.success
    assert result.summary["first_gate_comparison"]["agreement"] is agree
    flagged = [w for w in result.warnings if "first gate disagree" in w]
    assert bool(flagged) is not agree


def test_one_over_f_warns_when_both_regimes_are_violated(tmp_path):
    data = {
        "experiment": "one_over_f",
        "lengths": [1, 2],
        "mc": {"n_realizations": 8},
        "thresholds": {"coarse": 1e-12, "weak": 1e-12},
        "one_over_f": {"omega_l_values": [1e-4, 1.0]},
    }
    result = _run(data, tmp_path)
    assert result.success
    assert len(result.warnings) == 2
    for key, sel in result.summary.items():
        assert sel["warning"]
        smaller = "plme2" if sel["weak_metric"] <= sel["coarse_metric"] else "coarse"
        assert sel["selected"] == smaller
        assert any(f"omega_l={key}" in w for w in result.warnings)


def test_one_over_f_inside_a_regime_has_no_warning(tmp_path):
    data = {
        "experiment": "one_over_f",
        "lengths": [1, 2],
        "mc": {"n_realizations": 8},
        "thresholds": {"coarse": 1e6, "weak": 1e6},
        "one_over_f": {"omega_l_values": [1.0]},
    }
    result = _run(data, tmp_path)
    assert result.summary["1"] == {**result.summary["1"], "selected": "plme2", "warning": False}
    assert result.warnings == []
