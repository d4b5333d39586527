"""Uniformly sampled power traces and the operations every other module builds on.

A :class:`Waveform` pairs a :class:`TimeGrid` with a read-only array of
power samples in watts.  Cumulative energy uses the trapezoidal rule so the
forward/inverse amplifier pair stays consistent to second order in ``dt``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from os import PathLike

import numpy as np

from .errors import GridError, ParseError, WaveformError, WindowError

CSV_HEADER = ("time_s", "power_w")
UNIFORMITY_RTOL = 1e-9


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    dt: float
    n: int

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise GridError(f"dt must be positive and finite, got {self.dt!r}")
        if not math.isfinite(self.t0):
            raise GridError(f"t0 must be finite, got {self.t0!r}")
        if int(self.n) != self.n or self.n < 2:
            raise GridError(f"grid needs at least 2 samples, got n={self.n!r}")
        object.__setattr__(self, "n", int(self.n))

    @classmethod
    def spanning(cls, t0: float, t1: float, n: int) -> TimeGrid:
        """Grid of ``n`` samples with the first at ``t0`` and the last at ``t1``."""
        return cls(t0, (t1 - t0) / (n - 1), n)

    @property
    def times(self) -> np.ndarray:
        # t0 + k*dt per sample, never a running sum
        return self.t0 + np.arange(self.n) * self.dt

    @property
    def t_end(self) -> float:
        return self.t0 + (self.n - 1) * self.dt

    def same_as(self, other: TimeGrid) -> bool:
        return self.n == other.n and self.t0 == other.t0 and self.dt == other.dt


@dataclass(frozen=True)
class WindowSpec:
    start: float
    end: float

    def __post_init__(self):
        if not self.start < self.end:
            raise WindowError(f"window start {self.start} must precede end {self.end}")

    @property
    def width(self) -> float:
        return self.end - self.start

    @property
    def center(self) -> float:
        return 0.5 * (self.start + self.end)

    def mask(self, grid: TimeGrid) -> np.ndarray:
        # small slack so window edges that land on a sample are included
        # despite t0 + k*dt rounding
        eps = 1e-9 * grid.dt
        t = grid.times
        if self.start < grid.t0 - eps or self.end > grid.t_end + eps:
            raise WindowError(
                f"window [{self.start}, {self.end}] outside grid span [{grid.t0}, {grid.t_end}]")
        m = (t >= self.start - eps) & (t <= self.end + eps)
        if not m.any():
            raise WindowError(f"window [{self.start}, {self.end}] contains no samples")
        return m


@dataclass(frozen=True)
class Waveform:
    grid: TimeGrid
    samples: np.ndarray

    def __post_init__(self):
        s = np.array(self.samples, dtype=float)
        if s.ndim != 1 or s.size != self.grid.n:
            raise WaveformError(f"expected {self.grid.n} samples, got shape {s.shape}")
        if not np.all(np.isfinite(s)):
            bad = int(np.flatnonzero(~np.isfinite(s))[0])
            raise WaveformError(f"non-finite sample at index {bad}")
        s.flags.writeable = False
        object.__setattr__(self, "samples", s)

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    @property
    def is_nonnegative(self) -> bool:
        return bool(np.all(self.samples >= 0))

    def require_nonnegative(self, what: str = "waveform") -> None:
        if not self.is_nonnegative:
            k = int(np.flatnonzero(self.samples < 0)[0])
            raise WaveformError(f"{what} has negative power {self.samples[k]} at index {k}")

    def with_samples(self, samples) -> Waveform:
        return Waveform(self.grid, samples)

    def scaled(self, factor: float) -> Waveform:
        return Waveform(self.grid, self.samples * factor)

    @classmethod
    def from_function(cls, grid: TimeGrid, func) -> Waveform:
        return cls(grid, func(grid.times))

    @classmethod
    def square(cls, grid: TimeGrid, start: float, width: float, level: float) -> Waveform:
        """Rectangular pulse on ``[start, start + width)``."""
        t = grid.times
        eps = 1e-9 * grid.dt
        on = (t >= start - eps) & (t < start + width - eps)
        return cls(grid, np.where(on, float(level), 0.0))


def cumulative_energy(w: Waveform) -> Waveform:
    """Running trapezoidal integral of ``w``, in joules, with ``E[0] = 0``."""
    s = w.samples
    out = np.empty_like(s)
    out[0] = 0.0
    np.cumsum(0.5 * w.grid.dt * (s[1:] + s[:-1]), out=out[1:])
    return Waveform(w.grid, out)


def total_energy(w: Waveform) -> float:
    return float(cumulative_energy(w).samples[-1])


def window_mean(w: Waveform, win: WindowSpec) -> float:
    return float(np.mean(w.samples[win.mask(w.grid)]))


def rms_deviation(a: Waveform, b: Waveform, win: WindowSpec, normalize: bool = True) -> float:
    """Windowed RMS of ``a - b`` relative to the window mean of ``b``.

    With ``normalize`` each trace is first divided by its own window mean, so
    only the shape inside the window is compared.
    """
    if not a.grid.same_as(b.grid):
        raise GridError("rms_deviation needs both waveforms on the same grid")
    m = win.mask(a.grid)
    xa = a.samples[m]
    xb = b.samples[m]
    if normalize:
        ma, mb = xa.mean(), xb.mean()
        if ma == 0 or mb == 0:
            raise WaveformError("cannot normalize a waveform with zero window mean")
        xa = xa / ma
        xb = xb / mb
    ref = xb.mean()
    if ref == 0:
        raise WaveformError("reference waveform has zero mean inside the window")
    return float(np.sqrt(np.mean((xa - xb) ** 2)) / abs(ref))


def resample(w: Waveform, grid: TimeGrid) -> Waveform:
    """Linear interpolation onto ``grid``; zero outside the source span."""
    src = w.grid
    if grid.t_end < src.t0 or grid.t0 > src.t_end:
        raise GridError("target grid does not overlap the source span")
    if grid.same_as(src):
        return w
    # fractional source index avoids accumulating time rounding
    pos = (grid.times - src.t0) / src.dt
    out = np.zeros(grid.n)
    tol = 1e-9
    inside = (pos >= -tol) & (pos <= src.n - 1 + tol)
    p = np.clip(pos[inside], 0.0, src.n - 1)
    k = np.minimum(np.floor(p).astype(int), src.n - 2)
    frac = p - k
    # snap coincident samples so they are returned exactly
    near = np.abs(frac - np.round(frac)) < tol
    frac = np.where(near, np.round(frac), frac)
    s = w.samples
    out[inside] = np.where(frac == 0.0, s[k], np.where(frac == 1.0, s[k + 1],
                                                        (1.0 - frac) * s[k] + frac * s[k + 1]))
    return Waveform(grid, out)


def write_csv(path: str | PathLike, w: Waveform, header: bool = True) -> None:
    buf = io.StringIO()
    if header:
        buf.write(",".join(CSV_HEADER) + "\n")
    for t, p in zip(w.times, w.samples):
        buf.write(f"{float(t)!r},{float(p)!r}\n")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def read_csv(path: str | PathLike) -> Waveform:
    """Read a two-column ``time_s,power_w`` file written by :func:`write_csv`.

    The header line is optional.  Time steps must be uniform to within
    ``UNIFORMITY_RTOL`` of the mean step.
    """
    times: list[float] = []
    powers: list[float] = []
    rows: list[int] = []
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, rec in enumerate(csv.reader(fh), start=1):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != 2:
                raise ParseError(f"expected 2 columns, found {len(rec)}", lineno)
            if lineno == 1 and [c.strip() for c in rec] == list(CSV_HEADER):
                continue
            try:
                t, p = float(rec[0]), float(rec[1])
            except ValueError:
                raise ParseError(f"non-numeric cell in {rec!r}", lineno) from None
            if not (math.isfinite(t) and math.isfinite(p)):
                raise ParseError("non-finite value", lineno)
            times.append(t)
            powers.append(p)
            rows.append(lineno)
    if len(times) < 2:
        raise ParseError(f"need at least 2 samples, found {len(times)}")
    t = np.asarray(times)
    n = t.size
    dt = (t[-1] - t[0]) / (n - 1)
    if not dt > 0:
        raise ParseError("time column must be increasing")
    # compare each stamp with the ideal uniform grid
    dev = np.abs(t - (t[0] + np.arange(n) * dt)) / dt
    steps = np.diff(t)
    step_dev = np.abs(steps - dt) / dt
    if step_dev.max() > UNIFORMITY_RTOL or dev.max() > UNIFORMITY_RTOL:
        k = int(np.argmax(step_dev)) + 1
        raise ParseError(
            f"non-uniform time step: {steps[k - 1]!r} vs mean {dt!r} "
            f"(relative deviation {step_dev[k - 1]:.3g} > {UNIFORMITY_RTOL:g})", rows[k])
    return Waveform(TimeGrid(float(t[0]), float(dt), n), np.asarray(powers))
