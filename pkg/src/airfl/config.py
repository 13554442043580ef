"""Scenario configuration and config-file loading."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml


class ConfigError(ValueError):
    """Raised with every invariant violation found in a configuration."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


def dbm_to_watt(dbm):
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class SystemConfig:
    num_devices: int = 6
    num_ris: int = 3
    elements_per_ris: int = 60
    bs_antennas: int = 1
    max_power_dbm: float = 23.0
    noise_power_dbm: float = -80.0
    gamma: float = 0.2
    epsilon0: float = 0.01
    area_side_m: float = 100.0
    ris_height_m: float = 20.0
    bs_height_m: float = 25.0
    ris_radius_m: float = 50.0
    pathloss_ref_db: float = -30.0
    alpha_direct: float = 3.5
    alpha_ris: float = 2.2
    seed: int = 0

    def __post_init__(self):
        errors = self.check()
        if errors:
            raise ConfigError(errors)

    def check(self):
        """Return the list of violated invariants (empty when valid)."""
        errors = []

        def integer(name, lo):
            val = getattr(self, name)
            if isinstance(val, bool) or not isinstance(val, int):
                errors.append(f"{name}: must be an integer, got {val!r}")
            elif val < lo:
                errors.append(f"{name}: must be >= {lo}, got {val}")

        def positive(name):
            val = getattr(self, name)
            if not _is_real(val):
                errors.append(f"{name}: must be a real number, got {val!r}")
            elif not val > 0:
                errors.append(f"{name}: must be > 0, got {val}")

        def real(name):
            val = getattr(self, name)
            if not _is_real(val):
                errors.append(f"{name}: must be a real number, got {val!r}")

        integer("num_devices", 1)
        integer("num_ris", 0)
        integer("elements_per_ris", 1)
        integer("bs_antennas", 1)
        integer("seed", 0)
        for name in ("gamma", "epsilon0", "area_side_m", "ris_height_m",
                     "bs_height_m", "ris_radius_m"):
            positive(name)
        for name in ("max_power_dbm", "noise_power_dbm", "pathloss_ref_db",
                     "alpha_direct", "alpha_ris"):
            real(name)
        for name in ("max_power_dbm", "noise_power_dbm"):
            val = getattr(self, name)
            if _is_real(val) and not 0.0 < dbm_to_watt(val) < float("inf"):
                errors.append(f"{name}: does not convert to a positive finite power")
        return errors

    @property
    def max_power(self):
        """P0 in watts."""
        return dbm_to_watt(self.max_power_dbm)

    @property
    def noise_power(self):
        """sigma^2 in watts."""
        return dbm_to_watt(self.noise_power_dbm)

    @property
    def rho(self):
        return self.epsilon0 * self.max_power / self.noise_power

    @property
    def num_elements(self):
        return self.num_ris * self.elements_per_ris

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_nested(self):
        return {section: {key: getattr(self, key) for key in keys}
                for section, keys in _SECTIONS.items()} | {"seed": self.seed}


def _is_real(val):
    return isinstance(val, (int, float)) and not isinstance(val, bool) and val == val


_SECTIONS = {
    "network": ("num_devices", "num_ris", "elements_per_ris", "bs_antennas"),
    "radio": ("max_power_dbm", "noise_power_dbm", "pathloss_ref_db",
              "alpha_direct", "alpha_ris"),
    "geometry": ("area_side_m", "ris_height_m", "bs_height_m", "ris_radius_m"),
    "objective": ("gamma", "epsilon0"),
}
_KNOWN = {key: section for section, keys in _SECTIONS.items() for key in keys}


def config_from_dict(data):
    """Build a SystemConfig from a nested (or flat) mapping.

    All problems (unknown keys, wrong types, violated invariants) are
    collected and raised together as a single ConfigError.
    """
    if not isinstance(data, dict):
        raise ConfigError([f"top level: expected a mapping, got {type(data).__name__}"])
    flat, errors = {}, []
    for key, value in data.items():
        if key in _SECTIONS:
            if not isinstance(value, dict):
                errors.append(f"{key}: expected a mapping")
                continue
            for sub, subval in value.items():
                if _KNOWN.get(sub) != key:
                    errors.append(f"{key}.{sub}: unknown key")
                else:
                    flat[sub] = subval
        elif key == "seed" or key in _KNOWN:
            flat[key] = value
        else:
            errors.append(f"{key}: unknown key")
    for key in ("seed", "num_devices", "num_ris", "elements_per_ris", "bs_antennas"):
        # yaml may give 6.0 for integers written as floats
        if isinstance(flat.get(key), float) and flat[key].is_integer():
            flat[key] = int(flat[key])
    try:
        cfg = SystemConfig.__new__(SystemConfig)
        defaults = {f.name: f.default for f in dataclasses.fields(SystemConfig)}
        for name, default in defaults.items():
            object.__setattr__(cfg, name, flat.get(name, default))
        errors.extend(cfg.check())
    except Exception as exc:  # pragma: no cover - defensive
        errors.append(str(exc))
    if errors:
        raise ConfigError(errors)
    return SystemConfig(**{name: getattr(cfg, name) for name in defaults})


def validate_config(path):
    """Parse and validate a YAML config file, raising ConfigError on any problem."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError([f"config file not found: {path}"])
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError([f"{path}: YAML parse error: {exc}"]) from exc
    if data is None:
        data = {}
    return config_from_dict(data)


def dump_config(config, path):
    Path(path).write_text(yaml.safe_dump(config.to_nested(), sort_keys=False))


DEFAULT_CONFIG = SystemConfig()
