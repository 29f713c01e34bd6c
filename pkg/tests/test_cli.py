import json

import pytest

from rbsim import validation_suite
from rbsim.cli import build_parser, main
from rbsim.config_store import Settings, save_settings
from rbsim.validation_suite import CheckResult

MARKOV = {
    "experiment": "curve",
    "noise": {"kind": "white", "gamma": 0.01},
    "lengths": [1, 2, 3],
    "method": "markov",
}


def _write_config(tmp_path, data, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data), encoding="utf-8")
    return str(path)


def test_curve_writes_files(tmp_path, capsys):
    out = tmp_path / "out"
    main(["curve", "--config", _write_config(tmp_path, MARKOV), "--out", str(out), "-q"])
    printed = capsys.readouterr().out.split()
    assert str(out / "curve.csv") in printed
    assert (out / "curve.json").exists()
    assert list((out / "runs").glob("*.json"))


def test_no_record(tmp_path):
    out = tmp_path / "out"
    main(["curve", "--config", _write_config(tmp_path, MARKOV), "--out", str(out), "--no-record", "-q"])
    assert not (out / "runs").exists()


def test_seed_override(tmp_path):
    out = tmp_path / "out"
    main(["curve", "--config", _write_config(tmp_path, MARKOV), "--out", str(out), "--seed", "42", "-q"])
    side = json.loads((out / "curve.json").read_text(encoding="utf-8"))
    assert side["config"]["seed"] == 42


def test_negative_seed_is_a_config_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["curve", "--config", _write_config(tmp_path, MARKOV), "--seed", "-1", "-q"])
    assert exc.value.code == 2


def test_bad_config_exits_2(tmp_path, capsys):
    path = _write_config(tmp_path, {"experiment": "curve", "noise": {"kind": "ou", "sigma": -1.0, "tau_c": 1.0}})
    with pytest.raises(SystemExit) as exc:
        main(["curve", "--config", path, "--out", str(tmp_path / "out")])
    assert exc.value.code == 2
    assert "配置错误" in capsys.readouterr().err


def test_missing_config_file_exits_2(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["curve", "--config", str(tmp_path / "absent.json")])
    assert exc.value.code == 2


def test_method_noise_mismatch_exits_2(tmp_path):
    data = {**MARKOV, "noise": {"kind": "ou", "sigma": 0.1, "tau_c": 1.0}}
    with pytest.raises(SystemExit) as exc:
        main(["curve", "--config", _write_config(tmp_path, data), "--out", str(tmp_path / "out"), "-q"])
    assert exc.value.code == 2


def test_subcommand_overrides_config_experiment(tmp_path):
    out = tmp_path / "out"
    main(["fcoef", "--config", _write_config(tmp_path, MARKOV), "--out", str(out), "--no-record", "-q"])
    assert (out / "fcoef.csv").exists()
    assert (out / "gamma_bar.csv").exists()


def test_validate_prints_table(tmp_path, monkeypatch, capsys):
    monkeypatch.setattr(
        validation_suite,
        "CHECKS",
        {"good": lambda: CheckResult("good", True, "fine"), "bad": lambda: CheckResult("bad", False, "broken")},
    )
    with pytest.raises(SystemExit) as exc:
        main(["validate", "--out", str(tmp_path / "out"), "-q"])
    assert exc.value.code == 4
    out = capsys.readouterr().out
    assert "PASS  good" in out
    assert "FAIL  bad" in out


def test_bad_worker_env_exits_2(tmp_path, monkeypatch):
    monkeypatch.setenv("RBSIM_WORKERS", "abc")
    with pytest.raises(SystemExit) as exc:
        main(["curve", "--config", _write_config(tmp_path, MARKOV), "--out", str(tmp_path / "out")])
    assert exc.value.code == 2


def test_zero_workers_exits_2(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["curve", "--config", _write_config(tmp_path, MARKOV), "--workers", "0"])
    assert exc.value.code == 2


def test_subcommand_is_required():
    with pytest.raises(SystemExit) as exc:
        build_parser().parse_args([])
    assert exc.value.code == 2


def test_settings_output_dir(tmp_path, monkeypatch):
    target = tmp_path / "from-settings"
    save_settings(Settings(output_dir=str(target)))
    monkeypatch.chdir(tmp_path)
    main(["curve", "--config", _write_config(tmp_path, MARKOV), "--no-record", "-q"])
    assert (target / "curve.csv").exists()


def test_config_output_path_beats_settings(tmp_path, monkeypatch):
    save_settings(Settings(output_dir=str(tmp_path / "from-settings")))
    explicit = tmp_path / "explicit"
    monkeypatch.chdir(tmp_path)
    data = {**MARKOV, "output_path": str(explicit)}
    main(["curve", "--config", _write_config(tmp_path, data), "--no-record", "-q"])
    assert (explicit / "curve.csv").exists()
    assert not (tmp_path / "from-settings").exists()
