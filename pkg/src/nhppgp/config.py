"""Run configuration: strict sectioned INI files plus command-line overrides."""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional

from .model import IntensityFunction, ModelParams
from .policy.types import CostParams, PolicyParams
from .reliability import TruncationConfig

__all__ = ["ConfigError", "RunConfig", "SCHEMA", "load_config", "parse_config_text"]


class ConfigError(ValueError):
    pass


def _int(v: str) -> int:
    return int(v)


def _opt_int(v: str) -> Optional[int]:
    return None if v.strip().lower() in ("", "none") else int(v)


def _floats(v: str):
    return tuple(float(x) for x in v.replace(",", " ").split())


# section -> key -> parser
SCHEMA: Dict[str, Dict[str, object]] = {
    "model": {"rate": float, "rates": _floats, "breakpoints": _floats, "alpha": float, "beta": float,
              "c": float, "n_cap": _opt_int},
    "policy": {"T": float, "T_r": float, "M": float, "L": float, "k": float},
    "costs": {"C_i": float, "C_p": float, "C_c": float, "C_d": float},
    "truncation": {"n_max": _int, "eps_tail": float, "quad_nodes": _int, "simplex_mc_samples": _int,
                   "qmc_seed": _int},
    "mc": {"reps": _int, "chain_length": _int, "burn_in": _int, "downtime_substeps": _int,
           "reps_per_state": _int, "n_chains": _int, "n_cycles": _int},
    "run": {"seed": _int, "output": str},
}

MC_DEFAULTS = {"reps": 100_000, "chain_length": 10_000, "burn_in": 100, "downtime_substeps": 64,
               "reps_per_state": 200, "n_chains": 16, "n_cycles": 20_000}


@dataclass
class RunConfig:
    values: Dict[str, Dict[str, object]] = field(default_factory=dict)
    source: Optional[str] = None

    def get(self, section: str, key: str, default=None):
        return self.values.get(section, {}).get(key, default)

    def has(self, section: str) -> bool:
        return bool(self.values.get(section))

    def _need(self, section: str, key: str):
        v = self.get(section, key)
        if v is None:
            raise ConfigError(f"missing required key [{section}] {key}")
        return v

    # component views

    def model(self) -> ModelParams:
        rate, rates = self.get("model", "rate"), self.get("model", "rates")
        if rate is not None and rates is not None:
            raise ConfigError("give either [model] rate or rates/breakpoints, not both")
        try:
            if rates is not None:
                inten = IntensityFunction.piecewise(rates, self.get("model", "breakpoints", ()))
            else:
                inten = IntensityFunction.constant(self._need("model", "rate"))
            return ModelParams(inten, self._need("model", "alpha"), self._need("model", "beta"),
                               self._need("model", "c"), self.get("model", "n_cap"))
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"[model] {exc}") from exc

    def policy(self) -> PolicyParams:
        try:
            return PolicyParams(*(self._need("policy", k) for k in ("T", "T_r", "M", "L", "k")))
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"[policy] {exc}") from exc

    def costs(self) -> CostParams:
        try:
            return CostParams(*(self._need("costs", k) for k in ("C_i", "C_p", "C_c", "C_d")))
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"[costs] {exc}") from exc

    def truncation(self) -> TruncationConfig:
        kw = dict(self.values.get("truncation", {}))
        if "qmc_seed" in kw:
            kw["seed"] = kw.pop("qmc_seed")
        try:
            return TruncationConfig(**kw)
        except ValueError as exc:
            raise ConfigError(f"[truncation] {exc}") from exc

    def mc(self, key: str) -> int:
        v = self.get("mc", key, MC_DEFAULTS[key])
        if v < 0:
            raise ConfigError(f"[mc] {key} must be nonnegative")
        return v

    def seed(self) -> int:
        s = self.get("run", "seed")
        if s is None:
            env = os.environ.get("SEED")
            if env is None:
                return 0
            try:
                s = int(env)
            except ValueError as exc:
                raise ConfigError(f"SEED environment variable is not an integer: {env!r}") from exc
        if not 0 <= s < 2 ** 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        return s

    def output(self) -> Path:
        return Path(self.get("run", "output", "out"))

    def override(self, section: str, key: str, raw: str):
        self.values.setdefault(section, {})[key] = _parse_value(section, key, raw)


def _parse_value(section: str, key: str, raw: str):
    if section not in SCHEMA:
        raise ConfigError(f"unknown section [{section}]")
    if key not in SCHEMA[section]:
        raise ConfigError(f"unknown key [{section}] {key}")
    try:
        return SCHEMA[section][key](raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for [{section}] {key}: {raw!r}") from exc


def parse_config_text(text: str, source: Optional[str] = None) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keys are case sensitive (T vs t)
    try:
        cp.read_string(text, source=source or "<config>")
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    cfg = RunConfig(source=source)
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in cp.items(section):
            cfg.override(section, key, raw)
    return cfg


def load_config(path) -> RunConfig:
    """Read and parse a config file; ``OSError`` propagates for I/O problems."""
    return parse_config_text(Path(path).read_text(), str(path))
