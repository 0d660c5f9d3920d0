"""Strict parsing of the experiment configuration files.

Configurations are flat INI-style text: one section per concern, scalar
values only, so runs are diffable and archivable.  Parsing is strict in
both directions: unknown sections or keys are rejected, and required keys
must be present with well-formed values.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

KINDS = ("density", "moments", "response", "cubic_response",
         "null_calibration", "reduction_build")
MODELS = ("full", "stochastic_limit", "deterministic_limit", "finite_size")
OBSERVABLES = ("mean_zero_quadratic", "square")
ESCAPES = ("error", "clamp")


class ConfigError(ValueError):
    """Malformed, unknown, or missing configuration content."""


def _parse_bool(s: str) -> bool:
    if s.lower() in ("true", "yes", "1"):
        return True
    if s.lower() in ("false", "no", "0"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_choice(options):
    def parse(s: str) -> str:
        if s not in options:
            raise ValueError(f"must be one of {options}, got {s!r}")
        return s
    return parse


def _parse_int_list(s: str) -> tuple[int, ...]:
    return tuple(int(part.strip()) for part in s.split(",") if part.strip())


_SCHEMA: dict[str, dict] = {
    "experiment": {
        "kind": _parse_choice(KINDS),
        "seed": int,
        "out_dir": str,
        "table_cache": str,
        "threads": int,
    },
    "system": {
        "base_param": float,
        "coupling_gain": float,
        "gamma": float,
        "observable": _parse_choice(OBSERVABLES),
        "n_units": int,
    },
    "law": {
        "center": float,
        "half_width": float,
    },
    "simulation": {
        "model": _parse_choice(MODELS),
        "epsilon": float,
        "n_steps": int,
        "burn_in": int,
        "bins": int,
        "escape": _parse_choice(ESCAPES),
        "macro_init": float,
        "save_trajectory": _parse_bool,
        "save_params": _parse_bool,
    },
    "response": {
        "model": _parse_choice(MODELS),
        "eps_min": float,
        "eps_max": float,
        "eps_count": int,
        "realizations": int,
        "order": int,
        "n_steps": int,
        "burn_in": int,
        "sigma_length": int,
        "escape": _parse_choice(ESCAPES),
        "gk_cap": int,
        "gk_lag_cutoff": int,
    },
    "moments": {
        "m_values": _parse_int_list,
        "ensemble": int,
        "fixed_time": int,
        "macro_init": float,
        "micro_burn_in": int,
        "limit_ensemble": int,
    },
    "reduction": {
        "grid_min": float,
        "grid_max": float,
        "grid_points": int,
        "n_lags": int,
        "mc_inits": int,
        "mc_steps": int,
        "mc_burn_in": int,
        "m_max": int,
        "spectral_grid": int,
    },
    "calibration": {
        "trials": int,
        "eps_min": float,
        "eps_max": float,
        "eps_count": int,
        "sigma_min": float,
        "sigma_max": float,
        "n_steps": int,
        "order": int,
        "alpha_level": float,
    },
}

_DEFAULTS: dict[str, dict] = {
    "experiment": {"threads": 1, "table_cache": None},
    "law": {"center": 3.85, "half_width": 0.05},
    "simulation": {"model": "full", "epsilon": 0.0, "burn_in": 10_000,
                   "bins": 1000, "escape": "error", "macro_init": None,
                   "save_trajectory": False, "save_params": False},
    "response": {"model": "full", "eps_min": 0.0, "eps_max": 0.06,
                 "eps_count": 9, "realizations": 200, "order": None,
                 "burn_in": 10_000, "sigma_length": 40_000_000,
                 "escape": "error", "gk_cap": 200, "gk_lag_cutoff": None},
    "moments": {"ensemble": 5000, "fixed_time": 6, "macro_init": 0.5,
                "micro_burn_in": 5000, "limit_ensemble": 200_000},
    "reduction": {"grid_min": 3.7, "grid_max": 4.0, "grid_points": 30_001,
                  "n_lags": 256, "mc_inits": 10, "mc_steps": 399_168,
                  "mc_burn_in": 10_000, "m_max": 256, "spectral_grid": 4096},
    "calibration": {"eps_min": 0.0, "eps_max": 0.06, "eps_count": 9,
                    "sigma_min": 0.5, "sigma_max": 1.5, "n_steps": 200_000,
                    "order": 1, "alpha_level": 0.05},
}


@dataclass
class ExperimentConfig:
    """Parsed configuration: kind, seed, and per-section value maps."""

    kind: str
    seed: int
    out_dir: str
    table_cache: str | None
    threads: int
    sections: dict = field(default_factory=dict)
    echo: dict = field(default_factory=dict)

    def section(self, name: str) -> dict:
        merged = dict(_DEFAULTS.get(name, {}))
        merged.update(self.sections.get(name, {}))
        return merged

    def require(self, name: str, *keys):
        got = self.section(name)
        missing = [k for k in keys if got.get(k) is None]
        if missing:
            raise ConfigError(
                f"section [{name}] is missing required keys: {', '.join(missing)}")
        return got


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc

    sections: dict[str, dict] = {}
    echo: dict[str, dict] = {}
    for sec in parser.sections():
        if sec not in _SCHEMA:
            raise ConfigError(f"unknown section [{sec}]")
        sections[sec] = {}
        echo[sec] = {}
        for key, raw in parser.items(sec):
            if key not in _SCHEMA[sec]:
                raise ConfigError(f"unknown key {key!r} in section [{sec}]")
            try:
                sections[sec][key] = _SCHEMA[sec][key](raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for [{sec}] {key}: {exc}") from exc
            echo[sec][key] = raw

    exp = sections.get("experiment", {})
    for required in ("kind", "seed", "out_dir"):
        if required not in exp:
            raise ConfigError(f"section [experiment] must define {required!r}")
    return ExperimentConfig(kind=exp["kind"], seed=exp["seed"],
                            out_dir=exp["out_dir"],
                            table_cache=exp.get("table_cache"),
                            threads=exp.get("threads", 1),
                            sections=sections, echo=echo)
