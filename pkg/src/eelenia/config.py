"""Run configuration: TOML loading, env interpolation, key=value overrides."""
from __future__ import annotations

import copy
import json
import os
import re

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass
from pathlib import Path

from .genome import GenomeLayout
from .simulator import SimulatorConfig
from .goals import DEFAULT_SEED_GOALS

MODES = ("ee", "ns", "random_ga", "random_params")

DEFAULT_SCRIPT = [
    "a teal honeycomb of breathing cells",
    "a crimson wave folding into itself",
    "three pale moons drifting through violet haze",
    "a braided ring of green and amber light",
    "a scatter of silver seeds sprouting tendrils",
]

DEFAULTS: dict = {
    "run": {
        "mode": "ee",
        "iterations": 10000,
        "seed_iterations": 1000,
        "expedition_period": 50,
        "alpha": 4.0,
        "k_neighbors": 10,
        "sigma_mut": 0.05,
        "rng_seed": 0,
        "checkpoint_every": 500,
    },
    "cmaes": {
        "steps": 350,
        "population": 16,
        "sigma_init": 0.1,
        "snapshots": [0, 100, 200, 350],
    },
    "simulator": {
        "height": 128,
        "width": 128,
        "channels": 3,
        "steps": 500,
        "dt": 0.2,
        "kernel_radius": 13.0,
        "flow_exponent": 2.0,
        "critical_mass": 2.0,
        "saturation": 2.0,
        "init_seed": 0,
        "init_patch": -1,  # -1: scale 40/128 with height
    },
    "genome": {
        "kernels": 18,
        "rings": 3,
        "evolve_channel_routing": False,
    },
    "embedding": {
        "backend": "toy",  # toy | service
        "dim": 64,
        "seed": 0,
        "url": "",
        "model": "",
        "cache": True,
    },
    "goals": {
        "generator": "scripted",  # scripted | vlm
        "script": DEFAULT_SCRIPT,
        "context_size": 25,
        "seed_goals": DEFAULT_SEED_GOALS,
    },
}

_ENV_PATTERN = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")


class ConfigError(ValueError):
    pass


def _interpolate_env(value):
    if isinstance(value, str):
        return _ENV_PATTERN.sub(lambda m: os.environ.get(m.group(1), ""), value)
    if isinstance(value, list):
        return [_interpolate_env(v) for v in value]
    if isinstance(value, dict):
        return {k: _interpolate_env(v) for k, v in value.items()}
    return value


def _merge(base: dict, overlay: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in overlay.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key: {where}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{where} must be a table")
            out[key] = _merge(base[key], value, where)
        else:
            out[key] = value
    return out


def _coerce(raw: str, like, where: str):
    if isinstance(like, bool):
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"{where}: expected a boolean, got {raw!r}")
    if isinstance(like, int):
        return int(raw)
    if isinstance(like, float):
        return float(raw)
    if isinstance(like, list):
        value = json.loads(raw)
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a JSON list, got {raw!r}")
        return value
    return raw


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    """Apply `key=value` overrides; bare keys address the [run] section."""
    out = copy.deepcopy(data)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        key = key.strip()
        parts = key.split(".") if "." in key else ["run", key]
        if len(parts) != 2 or parts[0] not in out or parts[1] not in out[parts[0]]:
            raise ConfigError(f"unknown config key: {key}")
        section, field = parts
        out[section][field] = _coerce(raw.strip(), DEFAULTS[section][field], key)
    return out


@dataclass(frozen=True)
class RunConfig:
    """Typed view over the merged configuration dictionary."""

    data: dict

    @classmethod
    def from_file(cls, path: str | Path | None, overrides: list[str] | None = None) -> "RunConfig":
        overlay = {}
        if path is not None:
            with open(path, "rb") as fh:
                overlay = tomllib.load(fh)
        data = _merge(DEFAULTS, _interpolate_env(overlay))
        if overrides:
            data = apply_overrides(data, overrides)
        cfg = cls(data=data)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        run = self.data["run"]
        if run["mode"] not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {run['mode']!r}")
        if run["seed_iterations"] >= run["iterations"]:
            raise ConfigError("seed_iterations must be < iterations")
        if run["expedition_period"] < 1:
            raise ConfigError("expedition_period must be >= 1")
        if run["alpha"] < 0:
            raise ConfigError("alpha must be >= 0")
        if self.data["embedding"]["backend"] not in ("toy", "service"):
            raise ConfigError("embedding.backend must be toy or service")
        if self.data["goals"]["generator"] not in ("scripted", "vlm"):
            raise ConfigError("goals.generator must be scripted or vlm")

    # -- typed accessors -------------------------------------------------------

    @property
    def run(self) -> dict:
        return self.data["run"]

    @property
    def mode(self) -> str:
        return self.data["run"]["mode"]

    def with_mode(self, mode: str) -> "RunConfig":
        data = copy.deepcopy(self.data)
        data["run"]["mode"] = mode
        cfg = RunConfig(data=data)
        cfg.validate()
        return cfg

    @property
    def layout(self) -> GenomeLayout:
        g = self.data["genome"]
        return GenomeLayout(
            kernel_count=g["kernels"],
            rings_per_kernel=g["rings"],
            channels=self.data["simulator"]["channels"],
            evolve_channel_routing=g["evolve_channel_routing"],
        )

    @property
    def sim(self) -> SimulatorConfig:
        s = self.data["simulator"]
        return SimulatorConfig(
            height=s["height"],
            width=s["width"],
            channels=s["channels"],
            steps=s["steps"],
            dt=s["dt"],
            kernel_radius=s["kernel_radius"],
            flow_exponent=s["flow_exponent"],
            critical_mass=s["critical_mass"],
            saturation=s["saturation"],
            init_patch=None if s["init_patch"] < 0 else s["init_patch"],
        )

    def manifest_echo(self) -> dict:
        """Effective configuration for manifest.json; holds no secrets."""
        return copy.deepcopy(self.data)
