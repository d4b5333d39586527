"""Frantz-Nodvik gain saturation: forward model, energy relation and inverse.

Power is used throughout instead of intensity, so the saturation energy
``e_sat`` already includes the transverse mode area (``E_sat = J_sat * A``).
Each pulse is assumed to see the full small-signal gain ``g0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InversionError, ParameterError
from .waveform import Waveform, cumulative_energy, total_energy


@dataclass(frozen=True)
class AmplifierParams:
    g0: float
    e_sat: float

    def __post_init__(self):
        if not (math.isfinite(self.g0) and self.g0 >= 1.0):
            raise ParameterError(f"small-signal gain must be >= 1, got {self.g0!r}")
        if not (math.isfinite(self.e_sat) and self.e_sat > 0):
            raise ParameterError(f"saturation energy must be positive, got {self.e_sat!r}")


@dataclass(frozen=True)
class GainMediumMicro:
    """Microscopic gain-medium description.

    ``column_inversion`` is the inversion density integrated along the fiber
    (m^-2); ``sigma`` the stimulated-emission cross-section (m^2).
    """
    sigma: float
    column_inversion: float
    photon_energy: float

    def __post_init__(self):
        for name in ("sigma", "column_inversion", "photon_energy"):
            v = getattr(self, name)
            # column_inversion may be zero for the transparent medium
            if not math.isfinite(v) or v < 0 or (v == 0 and name != "column_inversion"):
                raise ParameterError(f"{name} must be positive and finite, got {v!r}")


@dataclass(frozen=True)
class PumpMap:
    """Phenomenological pump law ``g0 = g_floor * exp(alpha * pump_w)``."""
    alpha: float
    g_floor: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and self.alpha >= 0):
            raise ParameterError(f"alpha must be >= 0, got {self.alpha!r}")
        if not (math.isfinite(self.g_floor) and self.g_floor >= 1):
            raise ParameterError(f"g_floor must be >= 1, got {self.g_floor!r}")


def micro_to_reduced(m: GainMediumMicro, mode_area: float) -> AmplifierParams:
    """Small-signal gain ``exp(sigma * column_inversion)`` and ``E_sat = h nu A / (2 sigma)``."""
    if not mode_area > 0:
        raise ParameterError(f"mode area must be positive, got {mode_area!r}")
    g0 = math.exp(m.sigma * m.column_inversion)
    e_sat = m.photon_energy / (2.0 * m.sigma) * mode_area
    return AmplifierParams(g0, e_sat)


def reduced_to_micro(p: AmplifierParams, photon_energy: float, mode_area: float) -> GainMediumMicro:
    if not mode_area > 0:
        raise ParameterError(f"mode area must be positive, got {mode_area!r}")
    sigma = photon_energy * mode_area / (2.0 * p.e_sat)
    return GainMediumMicro(sigma, math.log(p.g0) / sigma, photon_energy)


def pump_to_gain(pump_w: float, pmap: PumpMap) -> float:
    if pump_w < 0:
        raise ParameterError(f"pump power must be >= 0, got {pump_w!r}")
    return pmap.g_floor * math.exp(pmap.alpha * pump_w)


def saturated_gain(e_in: np.ndarray, g0: float, e_sat: float) -> np.ndarray:
    """Instantaneous gain after cumulative input energy ``e_in`` has passed.

    No parameter validation: the fitting code evaluates ``g0 < 1`` too.
    """
    return 1.0 / (1.0 - (1.0 - 1.0 / g0) * np.exp(-e_in / e_sat))


def forward_amplify(inp: Waveform, p: AmplifierParams) -> Waveform:
    """Amplified output power for input power ``inp``."""
    inp.require_nonnegative("amplifier input")
    if p.g0 == 1.0:
        return inp
    e_in = cumulative_energy(inp).samples
    return inp.with_samples(inp.samples * saturated_gain(e_in, p.g0, p.e_sat))


def output_energy_from(e_in: float, p: AmplifierParams) -> float:
    if p.g0 == 1.0:
        return float(e_in)
    x = e_in / p.e_sat
    # e_sat * ln(1 + g0 (e^x - 1)), written to stay finite for large x
    if x > 30:
        return p.e_sat * (x + math.log(p.g0 + (1.0 - p.g0) * math.exp(-x)))
    return p.e_sat * math.log1p(p.g0 * math.expm1(x))


def output_energy(inp: Waveform, p: AmplifierParams) -> float:
    """Closed-form output pulse energy for the input's total energy."""
    inp.require_nonnegative("amplifier input")
    return output_energy_from(total_energy(inp), p)


def inverse_preshape(target: Waveform, p: AmplifierParams) -> Waveform:
    """Input power that the amplifier turns into ``target``.

    ``P_in = P_t / (1 + (g0 - 1) exp(-E_t / e_sat))`` with ``E_t`` the
    cumulative target energy.
    """
    target.require_nonnegative("target")
    if p.g0 == 1.0:
        return target
    e_t = cumulative_energy(target).samples
    denom = 1.0 - (1.0 - p.g0) * np.exp(-e_t / p.e_sat)
    if np.any(denom <= 0):
        k = int(np.flatnonzero(denom <= 0)[0])
        raise InversionError(f"non-positive denominator at sample {k}")
    return target.with_samples(target.samples / denom)


def edge_ratio(out: Waveform, inp: Waveform) -> float:
    """Leading over trailing instantaneous gain across the nonzero part of ``inp``."""
    on = np.flatnonzero(inp.samples > 0)
    if on.size == 0:
        raise ParameterError("input has no nonzero samples")
    a, b = on[0], on[-1]
    return float((out.samples[a] / inp.samples[a]) / (out.samples[b] / inp.samples[b]))
