"""TOML configuration: scenario, trainer hyperparameters, network shape and run settings."""

from __future__ import annotations

import dataclasses
import math
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .mappo import MappoHyper
from .masac import MasacHyper
from .scenario import ScenarioConfig


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending key path."""


@dataclass(frozen=True)
class NetworkConfig:
    hidden_width: int = 200
    hidden_layers: int = 2
    # half-width of the uniform draw for the Car actor's initial mean biases
    car_mean_spread: float = 1.5

    def __post_init__(self):
        if self.hidden_width < 1 or self.hidden_layers < 1:
            raise ValueError("hidden_width and hidden_layers must be >= 1")
        if self.car_mean_spread < 0:
            raise ValueError("car_mean_spread must be >= 0")

    @property
    def hidden(self) -> list[int]:
        return [self.hidden_width] * self.hidden_layers


@dataclass(frozen=True)
class TrainingConfig:
    episodes: int = 3000
    seed: int = 0
    eval_interval: int = 500
    eval_episodes: int = 5
    discount: float = 0.99
    slot_snr_columns: bool = False

    def __post_init__(self):
        if self.episodes < 0:
            raise ValueError("episodes must be >= 0")
        if self.eval_interval < 1 or self.eval_episodes < 1:
            raise ValueError("eval_interval and eval_episodes must be >= 1")
        if not 0.0 < self.discount <= 1.0:
            raise ValueError("discount must lie in (0, 1]")


@dataclass(frozen=True)
class HyperParams:
    masac: MasacHyper = field(default_factory=MasacHyper)
    mappo: MappoHyper = field(default_factory=MappoHyper)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)

    def __post_init__(self):
        # one discount for both trainers
        d = self.training.discount
        if self.masac.discount != d:
            object.__setattr__(self, "masac", dataclasses.replace(self.masac, discount=d))
        if self.mappo.discount != d:
            object.__setattr__(self, "mappo", dataclasses.replace(self.mappo, discount=d))

    @property
    def discount(self) -> float:
        return self.training.discount

    def with_seed(self, seed: int) -> "HyperParams":
        return dataclasses.replace(self, training=dataclasses.replace(self.training, seed=int(seed)))

    def with_episodes(self, episodes: int) -> "HyperParams":
        return dataclasses.replace(self, training=dataclasses.replace(self.training, episodes=int(episodes)))


_UNIT_RE = re.compile(r"^\s*([-+]?\d+(?:\.\d*)?(?:[eE][-+]?\d+)?)\s*(dBm|dB|mW|W)?\s*$")

_POWER_KEYS = {"tx_power", "sensing_noise_power", "comm_noise_power"}
_RATIO_KEYS = {"snr_floor_rsu", "snr_floor_user", "mf_gain"}


def parse_quantity(value, key: str, kind: str) -> float:
    """Numbers pass through; strings like "30dBm", "10dB", "1W" convert to mW or linear."""
    if isinstance(value, bool):
        raise ConfigError(f"{key}: expected a number, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"{key}: expected a number or unit string, got {value!r}")
    m = _UNIT_RE.match(value)
    if not m:
        raise ConfigError(f"{key}: cannot parse {value!r}")
    x, unit = float(m.group(1)), m.group(2)
    if kind == "power":
        if unit == "dBm":
            return 10.0 ** (x / 10.0)
        if unit == "W":
            return 1000.0 * x
        if unit in (None, "mW"):
            return x
    elif kind == "ratio":
        if unit == "dB":
            return 10.0 ** (x / 10.0)
        if unit is None:
            return x
    raise ConfigError(f"{key}: unit {unit!r} not valid here")


def _square_side(value, key: str) -> int:
    n = int(value)
    side = math.isqrt(n)
    if n < 1 or side * side != n or n != value:
        raise ConfigError(f"{key}: must be a positive perfect square, got {value!r}")
    return side


def _tuple_of(value, key: str, depth: int = 1):
    if not isinstance(value, (list, tuple)):
        raise ConfigError(f"{key}: expected a list")
    if depth == 1:
        return tuple(float(v) for v in value)
    return tuple(_tuple_of(v, key, depth - 1) for v in value)


def scenario_from_dict(raw: dict, prefix: str = "scenario") -> ScenarioConfig:
    names = {f.name for f in dataclasses.fields(ScenarioConfig)}
    shortcuts = {"m", "n_tx", "n_rx", "speed", "noise_power"}
    kwargs = {}
    for key, value in raw.items():
        path = f"{prefix}.{key}"
        if key not in names and key not in shortcuts:
            raise ConfigError(f"{path}: unknown key")
        if key == "m":
            kwargs["m_side"] = _square_side(value, path)
        elif key in ("n_tx", "n_rx"):
            side = _square_side(value, path)
            kwargs[f"{key}_y"] = side
            kwargs[f"{key}_z"] = side
        elif key == "noise_power":
            p = parse_quantity(value, path, "power")
            kwargs["sensing_noise_power"] = p
            kwargs["comm_noise_power"] = p
        elif key in _POWER_KEYS:
            kwargs[key] = parse_quantity(value, path, "power")
        elif key in _RATIO_KEYS:
            kwargs[key] = parse_quantity(value, path, "ratio")
        elif key in ("rsu_position", "start_position", "user_offset", "speed_profile"):
            kwargs[key] = _tuple_of(value, path)
        elif key == "waypoints":
            kwargs[key] = _tuple_of(value, path, depth=2)
        else:
            kwargs[key] = value
    n_slots = int(kwargs.get("n_slots", ScenarioConfig.n_slots))
    if "speed" in kwargs:
        if "speed_profile" in kwargs:
            raise ConfigError(f"{prefix}.speed: give either speed or speed_profile")
        kwargs["speed_profile"] = (float(kwargs.pop("speed")),) * n_slots
    elif "speed_profile" not in kwargs and n_slots != ScenarioConfig.n_slots:
        kwargs["speed_profile"] = (ScenarioConfig.speed_profile[0],) * n_slots
    return _build(ScenarioConfig, kwargs, prefix)


def _build(cls, kwargs: dict, prefix: str):
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        msg = str(exc)
        for key in kwargs:
            if msg.startswith(key) or f" {key} " in msg:
                raise ConfigError(f"{prefix}.{key}: {msg}") from exc
        raise ConfigError(f"{prefix}: {msg}") from exc


def _section(cls, raw: dict, prefix: str):
    names = {f.name for f in dataclasses.fields(cls)}
    for key in raw:
        if key not in names:
            raise ConfigError(f"{prefix}.{key}: unknown key")
    return _build(cls, dict(raw), prefix)


_SECTIONS = ("scenario", "masac", "mappo", "network", "training")


def config_from_dict(raw: dict) -> tuple[ScenarioConfig, HyperParams]:
    for key in raw:
        if key not in _SECTIONS:
            raise ConfigError(f"{key}: unknown section")
        if not isinstance(raw[key], dict):
            raise ConfigError(f"{key}: expected a table")
    scenario = scenario_from_dict(raw.get("scenario", {}))
    training = _section(TrainingConfig, raw.get("training", {}), "training")
    masac = _section(MasacHyper, raw.get("masac", {}), "masac")
    mappo = _section(MappoHyper, raw.get("mappo", {}), "mappo")
    network = _section(NetworkConfig, raw.get("network", {}), "network")
    for name, sec in (("masac", raw.get("masac", {})), ("mappo", raw.get("mappo", {}))):
        if "discount" in sec and sec["discount"] != training.discount:
            raise ConfigError(f"{name}.discount: set the discount under [training]")
    return scenario, HyperParams(masac=masac, mappo=mappo, network=network, training=training)


def load_config(path: str | Path | None) -> tuple[ScenarioConfig, HyperParams]:
    """Parse and validate a TOML file; ``None`` or an empty file gives the defaults."""
    if path is None:
        return config_from_dict({})
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(raw)
