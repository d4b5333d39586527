"""Burst-mode pulse trains, TTL single-pulse selection and blue-pulse centering.

Intervals are half-open ``[start, start + width)``.  Centering uses exact
rational arithmetic on the float inputs, so both margins are equal.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .errors import ConfigError, SelectionError, TimingError
from .waveform import WindowSpec


@dataclass(frozen=True)
class Interval:
    start: float
    width: float

    def __post_init__(self):
        if self.width < 0:
            raise ConfigError(f"interval width must be >= 0, got {self.width!r}")

    @property
    def end(self) -> float:
        return self.start + self.width

    def within(self, lo: float, hi: float) -> bool:
        return lo <= self.start and self.end <= hi

    def to_list(self) -> list[float]:
        return [self.start, self.width]


@dataclass(frozen=True)
class BurstConfig:
    rep_rate: float
    pulse_width: float
    n_pulses: int
    t_start: float = 0.0

    def __post_init__(self):
        if not self.rep_rate > 0:
            raise ConfigError("rep_rate must be positive")
        if not self.pulse_width > 0:
            raise ConfigError("pulse_width must be positive")
        if self.pulse_width >= 1.0 / self.rep_rate:
            raise ConfigError(
                f"pulse_width {self.pulse_width!r} s does not fit in the period {1.0 / self.rep_rate!r} s")
        if self.n_pulses < 1:
            raise ConfigError("n_pulses must be >= 1")

    @property
    def period(self) -> float:
        return 1.0 / self.rep_rate


@dataclass(frozen=True)
class TtlWindow:
    high_start: float
    high_end: float

    def __post_init__(self):
        if not self.high_start < self.high_end:
            raise ConfigError("TTL window needs high_start < high_end")


def generate_burst(cfg: BurstConfig) -> list[Interval]:
    # k / rep_rate rather than an accumulated sum keeps the spacing exact
    return [Interval(cfg.t_start + k / cfg.rep_rate, cfg.pulse_width) for k in range(cfg.n_pulses)]


def select_single_pulse(burst, ttl: TtlWindow) -> Interval:
    """The unique pulse lying entirely inside the TTL-high window."""
    hits = [p for p in burst if p.within(ttl.high_start, ttl.high_end)]
    if len(hits) != 1:
        what = "no pulse inside TTL window" if not hits else "TTL window selects several pulses"
        raise SelectionError(what, len(hits))
    return hits[0]


@dataclass(frozen=True)
class SequencePlan:
    ir_pulse: Interval
    blue_pulse: Interval
    overlap: tuple[float, float]
    flat_window: WindowSpec
    margin_left: float
    margin_right: float
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {
            "ir_pulse": {"start_s": self.ir_pulse.start, "width_s": self.ir_pulse.width},
            "blue_pulse": {"start_s": self.blue_pulse.start, "width_s": self.blue_pulse.width},
            "overlap": {"start_s": self.overlap[0], "end_s": self.overlap[1]},
            "flat_window": {"start_s": self.flat_window.start, "end_s": self.flat_window.end},
            "margin_left_s": self.margin_left,
            "margin_right_s": self.margin_right,
            "warnings": ["zero-width blue pulse"] if self.degenerate else [],
        }


def center_blue_pulse(ir: Interval, ir_flat: WindowSpec, blue_width: float) -> SequencePlan:
    """Place a blue pulse of ``blue_width`` at the midpoint of ``ir_flat``."""
    if blue_width < 0:
        raise TimingError("blue pulse width is negative", -blue_width)
    if ir_flat.start < ir.start or ir_flat.end > ir.end:
        raise TimingError("flat window is not inside the IR pulse",
                          max(ir.start - ir_flat.start, ir_flat.end - ir.end))
    lo, hi, w = Fraction(ir_flat.start), Fraction(ir_flat.end), Fraction(blue_width)
    if w > hi - lo:
        raise TimingError("blue pulse longer than the flat window", float(w - (hi - lo)))
    margin = (hi - lo - w) / 2
    start = lo + margin
    blue = Interval(float(start), float(blue_width))
    return SequencePlan(
        ir_pulse=ir, blue_pulse=blue, overlap=(float(start), float(start + w)),
        flat_window=ir_flat, margin_left=float(margin), margin_right=float(hi - (start + w)),
        degenerate=blue_width == 0)
