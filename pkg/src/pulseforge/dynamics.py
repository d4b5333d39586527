"""Effective two-level model of two-photon Rydberg excitation.

The intermediate state is far detuned, so the ground state ``|0>`` and the
Rydberg state ``|r>`` are coupled by a single effective Rabi frequency that
scales as the square root of each beam's power.  Shot-to-shot noise enters as
per-shot power scale factors and a thermal Doppler detuning, both held fixed
during a shot.

Hamiltonian convention (hbar = 1, rotating frame)::

    H = 1/2 [[ delta,  omega],
             [ omega, -delta]]

so a resonant pulse of area ``omega * t = pi`` fully transfers ``|0> -> |r>``.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import constants

from .errors import ParameterError

RB87_MASS_KG = 86.909180527 * constants.atomic_mass
BLUE_WAVELENGTH_M = 420e-9
IR_WAVELENGTH_M = 1013e-9


def counterpropagating_k_eff(lambda_a: float = BLUE_WAVELENGTH_M,
                             lambda_b: float = IR_WAVELENGTH_M) -> float:
    """Effective two-photon wavevector (rad/m) for counter-propagating beams."""
    return 2.0 * math.pi * abs(1.0 / lambda_a - 1.0 / lambda_b)


@dataclass(frozen=True)
class ExcitationConfig:
    """Two-photon drive.  ``omega_ref`` (rad/s) is reached at the reference powers.

    ``p420``/``p1013`` are the operating powers; they default to the
    reference powers.
    """
    omega_ref: float
    p420_ref: float = 1.0
    p1013_ref: float = 1.0
    delta_int: float = 2 * math.pi * 1.69e9
    delta_two: float = 0.0
    p420: float | None = None
    p1013: float | None = None

    def __post_init__(self):
        if not self.omega_ref > 0:
            raise ParameterError("omega_ref must be positive")
        if self.delta_int == 0:
            raise ParameterError("intermediate detuning must be nonzero")
        if not (self.p420_ref > 0 and self.p1013_ref > 0):
            raise ParameterError("reference powers must be positive")
        for name in ("p420", "p1013"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ParameterError(f"{name} must be >= 0")

    @property
    def omega(self) -> float:
        """Nominal Rabi frequency at the operating powers."""
        return effective_rabi(self.p420_ref if self.p420 is None else self.p420,
                              self.p1013_ref if self.p1013 is None else self.p1013, self)


@dataclass(frozen=True)
class NoiseModel:
    rel_std_420: float = 0.0
    rel_std_1013: float = 0.0
    temperature: float = 0.0
    k_eff: float = counterpropagating_k_eff()
    atom_mass: float = RB87_MASS_KG
    shots: int = 1
    seed: int = 0

    def __post_init__(self):
        for name in ("rel_std_420", "rel_std_1013", "temperature", "k_eff", "atom_mass"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be >= 0")
        if self.shots < 1:
            raise ParameterError("shots must be >= 1")

    @property
    def doppler_sigma(self) -> float:
        return doppler_sigma(self.temperature, self.k_eff, self.atom_mass)


@dataclass(frozen=True)
class TraceResult:
    x: np.ndarray
    p0: np.ndarray
    stderr: np.ndarray


def effective_rabi(p420: float, p1013: float, cfg: ExcitationConfig) -> float:
    if p420 < 0 or p1013 < 0:
        raise ParameterError("powers must be >= 0")
    return cfg.omega_ref * math.sqrt(p420 / cfg.p420_ref) * math.sqrt(p1013 / cfg.p1013_ref)


def doppler_sigma(temperature: float, k_eff: float, mass: float = RB87_MASS_KG) -> float:
    """Standard deviation (rad/s) of the thermal two-photon Doppler shift."""
    if temperature < 0 or k_eff < 0 or mass <= 0:
        raise ParameterError("temperature and k_eff must be >= 0, mass > 0")
    return k_eff * math.sqrt(constants.k * temperature / mass)


def ground_state(n: int | None = None) -> np.ndarray:
    """``|0>`` as shape ``(2,)``, or ``(n, 2)`` for a batch of shots."""
    psi = np.zeros((2,) if n is None else (n, 2), complex)
    psi[..., 0] = 1.0
    return psi


def propagate(state, omega, delta, duration) -> np.ndarray:
    """Evolve ``(c0, cr)`` under constant ``omega`` and ``delta`` for ``duration``.

    All arguments broadcast; ``state`` has a trailing axis of length 2.
    """
    state = np.asarray(state, complex)
    omega, delta, duration = np.broadcast_arrays(*(np.asarray(a, float) for a in (omega, delta, duration)))
    if np.any(duration < 0):
        raise ParameterError("duration must be >= 0")
    w = np.hypot(omega, delta)
    half = 0.5 * w * duration
    c = np.cos(half)
    # sin(half)/w, finite as w -> 0
    s_over_w = np.where(w > 0, np.sin(half) / np.where(w > 0, w, 1.0), 0.5 * duration)
    a, b = state[..., 0], state[..., 1]
    new0 = (c - 1j * delta * s_over_w) * a - 1j * omega * s_over_w * b
    new1 = -1j * omega * s_over_w * a + (c + 1j * delta * s_over_w) * b
    return np.stack([new0, new1], axis=-1)


def rabi_formula(omega, delta, t):
    """Ground-state population for a drive starting in ``|0>``."""
    w2 = np.asarray(omega) ** 2 + np.asarray(delta) ** 2
    w = np.sqrt(w2)
    pr = np.where(w2 > 0, np.asarray(omega) ** 2 / np.where(w2 > 0, w2, 1.0), 0.0) \
        * np.sin(0.5 * w * t) ** 2
    return 1.0 - pr


def _shot_parameters(rng: np.random.Generator, cfg: ExcitationConfig, noise: NoiseModel):
    # draw order is part of the reproducibility contract: 420, 1013, velocity
    n = noise.shots
    f420 = np.maximum(1.0 + noise.rel_std_420 * rng.standard_normal(n), 0.0)
    f1013 = np.maximum(1.0 + noise.rel_std_1013 * rng.standard_normal(n), 0.0)
    omega = cfg.omega * np.sqrt(f420 * f1013)
    delta = cfg.delta_two + noise.doppler_sigma * rng.standard_normal(n)
    return omega, delta


def _point_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


def _summarize(p0: np.ndarray) -> tuple[float, float]:
    n = p0.size
    mean = float(np.mean(p0))
    err = float(np.std(p0, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return min(max(mean, 0.0), 1.0), err


def _run_points(xs, fn, threads: int) -> TraceResult:
    xs = np.asarray(xs, float)
    if np.any(xs < 0):
        raise ParameterError("scan values must be >= 0")
    idx = range(xs.size)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            out = list(ex.map(lambda i: fn(i, xs[i]), idx))
    else:
        out = [fn(i, xs[i]) for i in idx]
    p0 = np.array([o[0] for o in out])
    err = np.array([o[1] for o in out])
    return TraceResult(xs, p0, err)


def monte_carlo_rabi(durations: Sequence[float], cfg: ExcitationConfig, noise: NoiseModel,
                     threads: int = 1) -> TraceResult:
    """Mean ground-state population after a square pulse of each duration.

    Every scan point draws ``noise.shots`` independent shots from its own
    random stream keyed by ``(noise.seed, point index)``, so the result does
    not depend on ``threads``.
    """
    def point(i, t):
        omega, delta = _shot_parameters(_point_rng(noise.seed, i), cfg, noise)
        psi = propagate(ground_state(noise.shots), omega, delta, t)
        return _summarize(np.abs(psi[:, 0]) ** 2)

    return _run_points(durations, point, threads)


def monte_carlo_ramsey(gaps: Sequence[float], cfg: ExcitationConfig, noise: NoiseModel,
                       detuning_offset: float = 0.0, instantaneous_pulses: bool = False,
                       threads: int = 1) -> TraceResult:
    """pi/2 - gap - pi/2 sequence.

    The pulse length is ``pi / (2 * cfg.omega)`` from the nominal Rabi
    frequency; each shot's actual Rabi frequency and detuning come from
    ``noise``.  During the gap the drive is off and the state precesses at
    ``delta_two + doppler + detuning_offset``.  The second pulse has the
    opposite phase, so with no dephasing the atom returns to ``|0>`` and the
    fringe is ``(1 + cos(delta * gap)) / 2``.  ``instantaneous_pulses``
    replaces both pulses by ideal resonant pi/2 rotations, which makes the
    mean fringe analytic.
    """
    t_half = math.pi / (2.0 * cfg.omega)

    def point(i, gap):
        omega, delta = _shot_parameters(_point_rng(noise.seed, i), cfg, noise)
        delta = delta + detuning_offset
        psi = ground_state(noise.shots)
        if instantaneous_pulses:
            psi = propagate(psi, cfg.omega, 0.0, t_half)
        else:
            psi = propagate(psi, omega, delta, t_half)
        psi = propagate(psi, 0.0, delta, gap)
        if instantaneous_pulses:
            psi = propagate(psi, -cfg.omega, 0.0, t_half)
        else:
            psi = propagate(psi, -omega, delta, t_half)
        return _summarize(np.abs(psi[:, 0]) ** 2)

    return _run_points(gaps, point, threads)


def ramsey_fringe(t, sigma_delta: float, offset: float):
    """Mean fringe for ideal pulses and Gaussian detuning noise."""
    t = np.asarray(t, float)
    return 0.5 * (1.0 + np.exp(-0.5 * (sigma_delta * t) ** 2) * np.cos(offset * t))


def gaussian_dephasing_time(sigma_delta: float) -> float:
    """1/e time of the Ramsey envelope ``exp(-sigma^2 t^2 / 2)``."""
    return math.inf if sigma_delta == 0 else math.sqrt(2.0) / sigma_delta
