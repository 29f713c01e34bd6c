import json
import math

import numpy as np
import pytest

from rbsim.config_store import (
    Experiment,
    LengthGeomspace,
    LengthRange,
    Method,
    Settings,
    config_digest,
    config_from_dict,
    load_config,
    load_settings,
    resolve_lengths,
    resolve_workers,
    save_settings,
)
from rbsim.errors import ConfigError
from rbsim.gate_impl import GateKind
from rbsim.noise import NoiseKind, phase_variance

CURVE = {"experiment": "curve", "noise": {"kind": "ou", "sigma": 0.05, "tau_c": 0.5}}


def test_defaults():
    config = config_from_dict(CURVE)
    assert config.experiment is Experiment.CURVE
    assert config.implementation is GateKind.ZSX
    assert config.method is Method.AUTO
    assert config.mc.n_sequences == 2000
    assert config.seed == 0
    np.testing.assert_array_equal(config.resolved_lengths(), np.arange(1, 101))
    model = config.noise_model()
    assert model.kind is NoiseKind.OU
    assert model.tau_c == 0.5


@pytest.mark.parametrize(
    "data",
    [
        {**CURVE, "unknown_key": 1},
        {"experiment": "curve"},
        {"experiment": "compare"},
        {"experiment": "fit"},
        {"experiment": "curve", "noise": {"kind": "ou", "sigma": 0.1}},
        {"experiment": "curve", "noise": {"kind": "ou", "sigma": -0.1, "tau_c": 1.0}},
        {"experiment": "curve", "noise": {"kind": "pink"}},
        {"experiment": "curve", "noise": {"kind": "one_over_f", "lam": 0.1, "omega_l": 5.0, "omega_h": 1.0}},
        {**CURVE, "mc": {"substeps_per_gate": 4}},
        {**CURVE, "seed": -1},
        {**CURVE, "method": "exact"},
    ],
)
def test_schema_errors(data):
    with pytest.raises(ConfigError):
        config_from_dict(data)


def test_fit_needs_input_curve():
    config = config_from_dict({"experiment": "fit", "input_curve": "curve.csv"})
    assert config.input_curve == "curve.csv"


def test_gamma0_calibration():
    config = config_from_dict({"experiment": "curve", "noise": {"kind": "ou", "tau_c": 2.0, "gamma0": 0.001}})
    assert phase_variance(config.noise_model()) == pytest.approx(0.001, rel=1e-10)
    qs = config_from_dict({"experiment": "curve", "noise": {"kind": "quasistatic", "gamma0": 0.001}})
    assert qs.noise_model().sigma == pytest.approx(math.sqrt(0.002))


def test_length_specs():
    np.testing.assert_array_equal(resolve_lengths([1, 4, 9]), [1, 4, 9])
    np.testing.assert_array_equal(resolve_lengths(LengthRange(start=2, stop=10, step=4)), [2, 6, 10])
    geo = resolve_lengths(LengthGeomspace(geomspace=(1, 1000, 30)))
    assert geo[0] == 1
    assert geo[-1] == 1000
    assert np.all(np.diff(geo) > 0)
    for bad in ([3, 1], [0, 1], []):
        with pytest.raises(ConfigError):
            resolve_lengths(bad)
    with pytest.raises(ConfigError):
        resolve_lengths(LengthGeomspace(geomspace=(10, 5, 3)))


def test_length_spec_parsing():
    config = config_from_dict({**CURVE, "lengths": {"geomspace": [1, 100, 10]}})
    assert isinstance(config.lengths, LengthGeomspace)
    config = config_from_dict({**CURVE, "lengths": {"start": 5, "stop": 8}})
    np.testing.assert_array_equal(config.resolved_lengths(), [5, 6, 7, 8])


def test_digest():
    a = config_from_dict(CURVE)
    b = config_from_dict({**CURVE, "output_path": "elsewhere"})
    c = config_from_dict({**CURVE, "seed": 1})
    assert config_digest(a) == config_digest(b)
    assert config_digest(a) != config_digest(c)
    assert len(config_digest(a)) == 64


def test_load_config(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps(CURVE), encoding="utf-8")
    assert load_config(path).noise.sigma == 0.05

    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    broken = tmp_path / "broken.json"
    broken.write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(broken)
    listed = tmp_path / "list.json"
    listed.write_text("[1, 2]", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(listed)


def test_shipped_configs_validate():
    from pathlib import Path

    configs = sorted((Path(__file__).resolve().parent.parent / "configs").glob("*.json"))
    assert configs
    for path in configs:
        load_config(path).resolved_lengths()


def test_settings_round_trip(isolated_home):
    assert load_settings() == Settings()
    save_settings(Settings(workers=3, output_dir="results"))
    assert load_settings() == Settings(workers=3, output_dir="results")
    assert (isolated_home / ".config" / "rbsim" / "settings.json").exists()


def test_corrupt_settings_fall_back_to_defaults(isolated_home):
    path = isolated_home / ".config" / "rbsim" / "settings.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("{oops", encoding="utf-8")
    assert load_settings() == Settings()


def test_resolve_workers(monkeypatch):
    assert resolve_workers() == 1
    assert resolve_workers(settings=Settings(workers=3)) == 3
    monkeypatch.setenv("RBSIM_WORKERS", "4")
    assert resolve_workers(settings=Settings(workers=3)) == 4
    assert resolve_workers(2) == 2
    monkeypatch.setenv("RBSIM_WORKERS", "abc")
    with pytest.raises(ConfigError):
        resolve_workers()
    with pytest.raises(ConfigError):
        resolve_workers(0)
