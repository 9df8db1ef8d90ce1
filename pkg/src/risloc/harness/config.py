"""Experiment configuration files.

The format is YAML with sections mirroring the simulation parameter table.
Values not given in a file fall back to the desk-scale defaults; ``full=True``
starts from the full-scale table instead.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from ..channel import ScenarioConfig
from ..estimator import EstimatorConfig
from ..geometry import RisGeometry

FULL_SCALE = {
    "wavelength_m": 0.01,
    "ris": {
        "rows": 64,
        "cols": 64,
        "spacing_m": 0.005,
        "position": [0.0, 0.0, 0.0],
        "rotation": [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    },
    "bs_position": [5.0, 5.0, 0.0],
    "waveform": {
        "subcarriers": 3000,
        "subcarrier_spacing_hz": 120e3,
        "transmissions": 256,
        "transmit_power_dbm": 20.0,
    },
    "noise": {"psd_dbm_per_hz": -174.0, "noise_figure_db": 8.0},
    "estimator": {"ifft_size": 4096, "ifft2_rows": 256, "ifft2_cols": 256, "cancellation_passes": 3,
                  "gate_excess_delay": True},
    "trajectory": {"height_m": -10.0},
    "sweep": {
        "distance": {"min": 1.0, "max": 35.0, "points": 30, "spacing": "log"},
        "ris_sizes": [16, 32, 64],
        "ris_size_distances": [20.0, 30.0, 40.0, 50.0],
        "ris_size_draws": 20,
    },
    "trials": 1000,
    "seed": 0,
}

DESK_OVERRIDES = {
    "ris": {"rows": 16, "cols": 16},
    "waveform": {"subcarriers": 300, "transmissions": 64},
    "sweep": {"distance": {"points": 8}},
    "trials": 100,
}


class ConfigError(ValueError):
    pass


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key not in out:
            raise ConfigError(f"unknown configuration key {path + key!r}")
        if isinstance(out[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{path + key!r} must be a mapping")
            out[key] = _merge(out[key], value, f"{path}{key}.")
        else:
            out[key] = value
    return out


def dbm_to_watt(dbm: float) -> float:
    return 10 ** (dbm / 10) * 1e-3


@dataclass
class ExperimentConfig:
    """Parsed experiment settings; ``raw`` keeps the merged nested mapping."""

    raw: dict

    @classmethod
    def default(cls, full: bool = False) -> "ExperimentConfig":
        raw = FULL_SCALE if full else _merge(FULL_SCALE, DESK_OVERRIDES)
        return cls(copy.deepcopy(raw))

    @classmethod
    def load(cls, path=None, full: bool = False) -> "ExperimentConfig":
        base = cls.default(full).raw
        if path is None:
            return cls(base)
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"malformed config file {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"config file {path} must contain a mapping")
        cfg = cls(_merge(base, data))
        cfg.validate()
        return cfg

    def dump(self) -> str:
        return yaml.safe_dump(self.raw, sort_keys=False)

    def validate(self):
        try:
            self.scenario(self.ue_position(1.0))
            self.estimator()
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"invalid configuration: {exc}") from exc

    @property
    def n_subcarriers(self) -> int:
        return int(self.raw["waveform"]["subcarriers"])

    @property
    def pilot_energy(self) -> float:
        """Per-subcarrier pilot energy; the transmit power is shared across subcarriers."""
        return dbm_to_watt(float(self.raw["waveform"]["transmit_power_dbm"])) / self.n_subcarriers

    @property
    def noise_variance(self) -> float:
        noise = self.raw["noise"]
        df = float(self.raw["waveform"]["subcarrier_spacing_hz"])
        return dbm_to_watt(float(noise["psd_dbm_per_hz"]) + float(noise["noise_figure_db"])) * df

    def ris(self, size: int | None = None) -> RisGeometry:
        r = self.raw["ris"]
        rows = int(size if size is not None else r["rows"])
        cols = int(size if size is not None else r["cols"])
        return RisGeometry(rows, cols, float(r["spacing_m"]), np.array(r["rotation"], dtype=float),
                           np.array(r["position"], dtype=float))

    def ue_position(self, r: float) -> np.ndarray:
        """Point at distance parameter ``r`` on the evaluation trajectory."""
        h = float(self.raw["trajectory"]["height_m"])
        return np.array([-r / np.sqrt(2), r / np.sqrt(2), h])

    def scenario(self, ue_position, clock_bias: float = 0.0, gain_phase_b: float = 0.0,
                 gain_phase_r: float = 0.0, ris_size: int | None = None,
                 noise_variance: float | None = None) -> ScenarioConfig:
        w = self.raw["waveform"]
        return ScenarioConfig(
            n_subcarriers=self.n_subcarriers,
            n_symbols=int(w["transmissions"]),
            subcarrier_spacing=float(w["subcarrier_spacing_hz"]),
            pilot_energy=self.pilot_energy,
            noise_variance=self.noise_variance if noise_variance is None else noise_variance,
            wavelength=float(self.raw["wavelength_m"]),
            bs_position=np.array(self.raw["bs_position"], dtype=float),
            ue_position=np.asarray(ue_position, dtype=float),
            clock_bias=clock_bias,
            ris=self.ris(ris_size),
            gain_phase_b=gain_phase_b,
            gain_phase_r=gain_phase_r,
        )

    def estimator(self) -> EstimatorConfig:
        e = self.raw["estimator"]
        return EstimatorConfig(
            n_fft_delay=int(e["ifft_size"]),
            n_fft_rows=int(e["ifft2_rows"]),
            n_fft_cols=int(e["ifft2_cols"]),
            cancellation_passes=int(e["cancellation_passes"]),
            gate_excess_delay=bool(e["gate_excess_delay"]),
        )

    def distance_points(self) -> list[float]:
        s = self.raw["sweep"]["distance"]
        lo, hi, n = float(s["min"]), float(s["max"]), int(s["points"])
        if s["spacing"] == "log":
            pts = np.geomspace(lo, hi, n)
        elif s["spacing"] == "linear":
            pts = np.linspace(lo, hi, n)
        else:
            raise ConfigError(f"unknown sweep spacing {s['spacing']!r}")
        return [float(p) for p in pts]
