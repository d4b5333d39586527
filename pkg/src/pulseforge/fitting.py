"""Damped-sinusoid fits for Rabi and Ramsey traces.

Model::

    y(x) = offset + amplitude * env(x) * cos(frequency * x + phase)

with ``env = exp(-x / tau)`` (exponential) or ``exp(-(x / tau)**2)``
(gaussian).  ``frequency`` is angular (rad per unit of ``x``).  The starting
frequency comes from the peak of the zero-padded spectrum.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import curve_fit

from .errors import FitDegenerateError, ParameterError

ENVELOPES = ("exponential", "gaussian")


@dataclass(frozen=True)
class DampedFit:
    frequency: float
    decay_1e: float
    contrast: float
    offset: float
    phase: float
    envelope_kind: str
    stderr: dict = field(default_factory=dict)
    residual_rms: float = math.nan
    condition: float = math.nan

    def to_dict(self) -> dict:
        return {
            "frequency_rad_s": self.frequency,
            "frequency_hz": self.frequency / (2 * math.pi),
            "decay_1e_s": self.decay_1e if math.isfinite(self.decay_1e) else None,
            "contrast": self.contrast,
            "offset": self.offset,
            "phase_rad": self.phase,
            "envelope_kind": self.envelope_kind,
            "stderr": {k: (v if math.isfinite(v) else None) for k, v in self.stderr.items()},
            "residual_rms": self.residual_rms,
            "covariance_condition": self.condition if math.isfinite(self.condition) else None,
        }


def _model(kind):
    # decay is parametrized by a rate so the undamped limit stays finite
    if kind == "exponential":
        def f(x, c, a, w, phi, rate):
            return c + a * np.exp(-rate * x) * np.cos(w * x + phi)
    else:
        def f(x, c, a, w, phi, rate):
            return c + a * np.exp(-(rate * x) ** 2) * np.cos(w * x + phi)
    return f


def spectral_guess(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    """(angular frequency, amplitude, phase) of the strongest non-DC component."""
    n = x.size
    dx = (x[-1] - x[0]) / (n - 1)
    # uniform resampling guards against slightly irregular scan points
    xu = x[0] + dx * np.arange(n)
    yu = np.interp(xu, x, y) - np.mean(y)
    pad = 16 * int(2 ** math.ceil(math.log2(n)))
    spec = np.fft.rfft(yu * np.hanning(n), pad)
    freqs = np.fft.rfftfreq(pad, dx)
    mag = np.abs(spec)
    k = int(np.argmax(mag))
    # a peak inside the first bin of the unpadded spectrum is indistinguishable from DC
    if mag[k] <= 1e-12 * max(1.0, float(np.max(np.abs(y)))) or freqs[k] < 1.0 / (n * dx):
        raise FitDegenerateError("trace has no oscillating component")
    w = 2 * math.pi * freqs[k]
    amp = math.sqrt(2.0) * float(np.std(yu))
    phase = float(np.angle(np.sum(yu * np.exp(-1j * w * (xu - x[0]))))) - w * x[0]
    return w, amp, phase


def fit_damped_sinusoid(x, y, envelope_kind: str = "exponential", sigma=None) -> DampedFit:
    """Least-squares fit of a damped cosine to ``y(x)``."""
    if envelope_kind not in ENVELOPES:
        raise ParameterError(f"envelope_kind must be one of {ENVELOPES}")
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if x.size < 6:
        raise FitDegenerateError("need at least 6 points")
    if np.ptp(y) == 0:
        raise FitDegenerateError("trace is constant")
    w0, a0, phi0 = spectral_guess(x, y)
    span = x[-1] - x[0]
    f = _model(envelope_kind)
    p0 = [float(np.mean(y)), a0, w0, phi0, 1.0 / span]
    lower = [-np.inf, 0.0, 0.0, -np.inf, 0.0]
    upper = [np.inf, np.inf, np.inf, np.inf, np.inf]
    if sigma is not None:
        sigma = np.asarray(sigma, float)
        # zero error bars (e.g. noiseless points) would get infinite weight
        floor = max(float(np.median(sigma[sigma > 0])) if np.any(sigma > 0) else 1.0, 1e-12)
        sigma = np.maximum(sigma, 1e-3 * floor)
    try:
        popt, pcov = curve_fit(f, x, y, p0=p0, bounds=(lower, upper), sigma=sigma,
                               absolute_sigma=sigma is not None, max_nfev=20000,
                               x_scale=[1.0, 1.0, w0, 1.0, 1.0 / span])
    except (RuntimeError, ValueError) as exc:
        raise FitDegenerateError(f"fit did not converge: {exc}") from None
    c, a, w, phi, rate = popt
    if a == 0 or w == 0:
        raise FitDegenerateError("fitted oscillation amplitude vanished")
    err = np.sqrt(np.clip(np.diag(pcov), 0, None)) if np.all(np.isfinite(pcov)) \
        else np.full(5, np.nan)
    tau = math.inf if rate <= 0 else 1.0 / rate
    tau_err = err[4] / rate ** 2 if rate > 0 else math.inf
    resid = y - f(x, *popt)
    with np.errstate(all="ignore"):
        cond = float(np.linalg.cond(pcov)) if np.all(np.isfinite(pcov)) else math.inf
    return DampedFit(
        frequency=float(w), decay_1e=tau, contrast=float(2 * a), offset=float(c),
        phase=float((phi + math.pi) % (2 * math.pi) - math.pi), envelope_kind=envelope_kind,
        stderr={"frequency": float(err[2]), "decay_1e": float(tau_err),
                "contrast": float(2 * err[1]), "offset": float(err[0]), "phase": float(err[3])},
        residual_rms=float(np.sqrt(np.mean(resid ** 2))), condition=cond)


def fit_trace(trace, envelope_kind: str = "exponential", weighted: bool = False) -> DampedFit:
    return fit_damped_sinusoid(trace.x, trace.p0, envelope_kind,
                               sigma=trace.stderr if weighted else None)
