"""Scenario configuration: JSON schema, loading and conversion to model objects.

Physical quantities carry their SI unit in the key name.  Frequencies given
as ``*_hz`` are cycle frequencies and are converted to rad/s internally.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import jsonschema

from .amplifier import AmplifierParams, PumpMap, pump_to_gain
from .calibration import TRANSFERS, PlantConfig
from .dynamics import ExcitationConfig, NoiseModel
from .errors import ConfigError, PulseforgeError
from .sequencer import BurstConfig, Interval, TtlWindow
from .waveform import TimeGrid, WindowSpec

SCHEMA_VERSION = 1

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
_count = {"type": "integer", "minimum": 1}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


_interval = _obj({"start_s": _num, "end_s": _num}, ["start_s", "end_s"])

SCHEMA: dict = _obj({
    "version": {"const": SCHEMA_VERSION},
    "amplifier": _obj({
        "g0": {"type": "number", "minimum": 1},
        "pump_w": _nonneg,
        "pump_alpha_per_w": _nonneg,
        "g_floor": {"type": "number", "minimum": 1},
        "e_sat_j": _pos,
    }, ["e_sat_j"]),
    "plant": _obj({
        "seed_power_w": _pos,
        "drive_peak": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "aom_transfer": {"enum": sorted(TRANSFERS)},
        "noise_rel_std": _nonneg,
    }),
    "preshape": _obj({
        "target": _obj({"start_s": _num, "width_s": _pos, "level_w": _pos},
                       ["start_s", "width_s", "level_w"]),
        "window": _interval,
        "tol": _nonneg,
        "max_iter": _count,
        "level_tol": _nonneg,
        "method": {"enum": ["simplex-ls", "nelder-mead"]},
        "dump_iterations": {"type": "boolean"},
    }, ["window"]),
    "dynamics": _obj({
        "omega_ref_hz": _pos,
        "p420_ref_w": _pos,
        "p1013_ref_w": _pos,
        "p420_w": _nonneg,
        "p1013_w": _nonneg,
        "delta_int_hz": _num,
        "delta_two_hz": _num,
        "rel_std_420": _nonneg,
        "rel_std_1013": _nonneg,
        "temperature_k": _nonneg,
        "shots": _count,
        "scan": _obj({"start_s": _nonneg, "stop_s": _nonneg, "points": {"type": "integer", "minimum": 6}},
                     ["start_s", "stop_s", "points"]),
        "detuning_offset_hz": _num,
        "envelope": {"enum": ["exponential", "gaussian"]},
        "weighted_fit": {"type": "boolean"},
    }, ["omega_ref_hz", "scan"]),
    "sequence": _obj({
        "rep_rate_hz": _pos,
        "pulse_width_s": _pos,
        "n_pulses": _count,
        "t_start_s": _num,
        "ttl": _interval,
        "flat_window": _interval,
        "blue_width_s": _nonneg,
    }, ["rep_rate_hz", "pulse_width_s", "n_pulses", "ttl", "flat_window", "blue_width_s"]),
    "io": _obj({
        "grid": _obj({"t0_s": _num, "t1_s": _num, "points": {"type": "integer", "minimum": 2}},
                     ["t0_s", "t1_s", "points"]),
        "input_csv": {"type": "string"},
        "target_csv": {"type": "string"},
        "out_dir": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
    }),
}, ["version"])


@dataclass(frozen=True)
class Scenario:
    """A validated config document plus the hash of its raw bytes."""
    doc: dict
    sha256: str
    path: Path | None = None

    def section(self, name: str) -> dict:
        if name not in self.doc:
            raise ConfigError(f"config has no '{name}' section")
        return self.doc[name]

    def resolve(self, rel: str) -> Path:
        p = Path(rel)
        if not p.is_absolute() and self.path is not None:
            p = self.path.parent / p
        return p

    @property
    def seed(self) -> int:
        return int(self.doc.get("io", {}).get("seed", 0))


def parse_config(raw: bytes, path: Path | None = None) -> Scenario:
    try:
        doc = json.loads(raw)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from None
    return Scenario(doc, hashlib.sha256(raw).hexdigest(), path)


def load_config(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(raw, path)


def _wrap(fn):
    # model constructors raise ParameterError and friends; at load time those
    # are configuration mistakes
    def inner(*a, **k):
        try:
            return fn(*a, **k)
        except ConfigError:
            raise
        except PulseforgeError as exc:
            raise ConfigError(str(exc)) from None
    inner.__doc__ = fn.__doc__
    inner.__name__ = fn.__name__
    return inner


@_wrap
def amplifier_params(sc: Scenario) -> AmplifierParams:
    a = sc.section("amplifier")
    if "g0" in a:
        if "pump_w" in a:
            raise ConfigError("amplifier: give either g0 or pump_w, not both")
        g0 = a["g0"]
    elif "pump_w" in a:
        if "pump_alpha_per_w" not in a:
            raise ConfigError("amplifier: pump_w needs pump_alpha_per_w")
        g0 = pump_to_gain(a["pump_w"], PumpMap(a["pump_alpha_per_w"], a.get("g_floor", 1.0)))
    else:
        raise ConfigError("amplifier: one of g0 or pump_w is required")
    return AmplifierParams(g0, a["e_sat_j"])


@_wrap
def grid_spec(sc: Scenario) -> TimeGrid:
    g = sc.section("io").get("grid")
    if g is None:
        raise ConfigError("io.grid is required to synthesize a target")
    return TimeGrid.spanning(g["t0_s"], g["t1_s"], g["points"])


@_wrap
def window_spec(d: dict) -> WindowSpec:
    return WindowSpec(d["start_s"], d["end_s"])


@_wrap
def plant_config(sc: Scenario, amp: AmplifierParams, seed_power_w: float, seed: int) -> PlantConfig:
    p = sc.doc.get("plant", {})
    return PlantConfig(amp, seed_power_w, TRANSFERS[p.get("aom_transfer", "sin2")],
                       p.get("noise_rel_std", 0.0), seed)


@_wrap
def excitation_config(sc: Scenario) -> ExcitationConfig:
    d = sc.section("dynamics")
    two_pi = 2 * math.pi
    return ExcitationConfig(
        omega_ref=two_pi * d["omega_ref_hz"],
        p420_ref=d.get("p420_ref_w", 1.0), p1013_ref=d.get("p1013_ref_w", 1.0),
        delta_int=two_pi * d.get("delta_int_hz", 1.69e9),
        delta_two=two_pi * d.get("delta_two_hz", 0.0),
        p420=d.get("p420_w"), p1013=d.get("p1013_w"))


@_wrap
def noise_model(sc: Scenario, seed: int) -> NoiseModel:
    d = sc.section("dynamics")
    return NoiseModel(rel_std_420=d.get("rel_std_420", 0.0), rel_std_1013=d.get("rel_std_1013", 0.0),
                      temperature=d.get("temperature_k", 0.0), shots=d.get("shots", 1), seed=seed)


@_wrap
def scan_values(sc: Scenario):
    import numpy as np
    s = sc.section("dynamics")["scan"]
    if s["stop_s"] <= s["start_s"]:
        raise ConfigError("dynamics.scan needs stop_s > start_s")
    return np.linspace(s["start_s"], s["stop_s"], s["points"])


@_wrap
def sequence_inputs(sc: Scenario) -> tuple[BurstConfig, TtlWindow, WindowSpec, float]:
    s = sc.section("sequence")
    burst = BurstConfig(s["rep_rate_hz"], s["pulse_width_s"], s["n_pulses"], s.get("t_start_s", 0.0))
    ttl = TtlWindow(s["ttl"]["start_s"], s["ttl"]["end_s"])
    return burst, ttl, window_spec(s["flat_window"]), s["blue_width_s"]


__all__ = ["SCHEMA", "SCHEMA_VERSION", "Scenario", "parse_config", "load_config",
           "amplifier_params", "grid_spec", "window_spec", "plant_config", "excitation_config",
           "noise_model", "scan_values", "sequence_inputs", "Interval"]
