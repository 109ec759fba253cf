import json

import pytest

from slext.config import NumericsConfig, get_config, load_numerics_config, resolve, set_config
from slext.errors import ConfigError


def test_defaults():
    cfg = NumericsConfig()
    assert cfg.ode_method == "DOP853"
    assert cfg.ode_rtol == 1e-10
    assert cfg.negative_scan_depth == 400.0
    assert cfg.show_progress is False


def test_config_is_frozen_and_hashable():
    cfg = NumericsConfig()
    with pytest.raises(Exception):
        cfg.ode_rtol = 1e-3
    assert hash(cfg) == hash(NumericsConfig())


def test_threads_from_environment(monkeypatch):
    monkeypatch.setenv("SLEXT_NUM_THREADS", "3")
    assert NumericsConfig().num_threads == 3
    monkeypatch.setenv("SLEXT_NUM_THREADS", "lots")
    assert NumericsConfig().num_threads == 1


def test_overrides_win_over_file(tmp_path):
    path = tmp_path / "numerics.json"
    path.write_text(json.dumps({"numerics": {"ode_rtol": 1e-8, "probe_count": 16}}), encoding="utf-8")
    cfg = load_numerics_config(path, probe_count=32, quad_limit=None)
    assert cfg.ode_rtol == 1e-8
    assert cfg.probe_count == 32
    assert cfg.quad_limit == 200


@pytest.mark.parametrize("override", [{"ode_rtol": -1.0}, {"ode_method": "Euler"}, {"probe_count": 0},
                                      {"no_such_field": 1}])
def test_invalid_values_raise_config_error(override):
    with pytest.raises(ConfigError):
        load_numerics_config(None, **override)


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError):
        load_numerics_config(tmp_path / "absent.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_numerics_config(bad)


def test_with_tol_drives_quadrature():
    cfg = NumericsConfig().with_tol(1e-6)
    assert cfg.ode_rtol == 1e-6
    assert cfg.quad_rel_tol == pytest.approx(1e-7)
    assert cfg.residual_tol == pytest.approx(1e-4)


def test_active_config():
    assert get_config() == NumericsConfig()
    custom = NumericsConfig(probe_count=8)
    set_config(custom)
    assert resolve(None) is custom
    assert resolve(NumericsConfig()) is not custom
    with pytest.raises(ConfigError):
        set_config({"probe_count": 8})
