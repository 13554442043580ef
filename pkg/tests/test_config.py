import pytest
import yaml

from airfl.config import (ConfigError, DEFAULT_CONFIG, SystemConfig, config_from_dict, dbm_to_watt,
                          dump_config, validate_config)


def test_defaults():
    c = DEFAULT_CONFIG
    assert (c.num_devices, c.num_ris, c.elements_per_ris, c.bs_antennas) == (6, 3, 60, 1)
    assert (c.max_power_dbm, c.noise_power_dbm, c.gamma, c.epsilon0) == (23.0, -80.0, 0.2, 0.01)
    assert c.max_power == pytest.approx(0.19952623149688797, rel=1e-15)
    assert c.noise_power == pytest.approx(1e-11, rel=1e-12)
    assert c.rho == pytest.approx(0.01 * c.max_power / 1e-11)


def test_dbm_conversion():
    assert dbm_to_watt(30.0) == 1.0
    assert dbm_to_watt(0.0) == pytest.approx(1e-3)


def test_roundtrip(tmp_path):
    cfg = SystemConfig(num_devices=4, elements_per_ris=10, seed=3)
    path = tmp_path / "c.yaml"
    dump_config(cfg, path)
    assert validate_config(path) == cfg


def test_flat_keys_and_integer_floats():
    cfg = config_from_dict({"num_devices": 5.0, "gamma": 0.5})
    assert cfg.num_devices == 5 and isinstance(cfg.num_devices, int)


def test_all_errors_listed():
    with pytest.raises(ConfigError) as exc:
        config_from_dict({"objective": {"gamma": -1}, "network": {"elements_per_ris": 0},
                          "bogus": 1})
    msg = str(exc.value)
    assert len(exc.value.errors) == 3
    assert "gamma" in msg and "> 0" in msg
    assert "elements_per_ris" in msg and "bogus" in msg


def test_missing_file_names_path(tmp_path):
    p = tmp_path / "missing.yaml"
    with pytest.raises(ConfigError, match="missing.yaml"):
        validate_config(p)


def test_bad_yaml(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("network: [unclosed\n")
    with pytest.raises(ConfigError, match="YAML"):
        validate_config(p)


def test_unknown_nested_key(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text(yaml.safe_dump({"radio": {"max_power_dbm": 20, "num_devices": 3}}))
    with pytest.raises(ConfigError, match="radio.num_devices"):
        validate_config(p)


def test_direct_construction_validates():
    with pytest.raises(ConfigError):
        SystemConfig(num_devices=0)
    with pytest.raises(ConfigError):
        SystemConfig(gamma=True)
