from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pulseforge.errors import ConfigError, SelectionError, TimingError
from pulseforge.sequencer import (BurstConfig, Interval, TtlWindow, center_blue_pulse,
                                  generate_burst, select_single_pulse)
from pulseforge.waveform import WindowSpec


def test_burst_basics():
    one = generate_burst(BurstConfig(2e3, 10e-6, 1, 3e-6))
    assert one == [Interval(3e-6, 10e-6)]
    b = generate_burst(BurstConfig(2e3, 10e-6, 6))
    assert [round(q.start - p.start, 15) for p, q in zip(b, b[1:])] == [500e-6] * 5
    with pytest.raises(ConfigError):
        BurstConfig(2e3, 500e-6, 3)
    with pytest.raises(ConfigError):
        BurstConfig(0.0, 1e-6, 3)
    with pytest.raises(ConfigError):
        BurstConfig(2e3, 1e-6, 0)
    with pytest.raises(ConfigError):
        TtlWindow(1.0, 1.0)


@settings(max_examples=60, deadline=None)
@given(st.floats(1e2, 1e6), st.floats(0.01, 0.99), st.integers(1, 50), st.floats(-1, 1))
def test_burst_sorted_and_disjoint(rate, duty, n, t0):
    b = generate_burst(BurstConfig(rate, duty / rate, n, t0))
    assert len(b) == n
    assert all(p.end <= q.start for p, q in zip(b, b[1:]))


def test_select_pulse_two():
    b = generate_burst(BurstConfig(2e3, 10e-6, 5))
    # one period centered on pulse 2 (0-based index 2)
    centre = b[2].start + 5e-6
    ttl = TtlWindow(centre - 250e-6, centre + 250e-6)
    assert select_single_pulse(b, ttl) == b[2]
    with pytest.raises(SelectionError) as ei:
        select_single_pulse(b, TtlWindow(0.0, 1000e-6 + 10e-6))
    assert ei.value.count == 3
    with pytest.raises(SelectionError) as ei:
        select_single_pulse(b, TtlWindow(b[1].start, b[2].start + 10e-6))
    assert ei.value.count == 2 and "2 pulses" in str(ei.value)
    with pytest.raises(SelectionError) as ei:
        select_single_pulse(b, TtlWindow(b[1].end + 1e-6, b[2].start - 1e-6))
    assert ei.value.count == 0


def test_selection_ignores_pulses_outside_ttl():
    b = generate_burst(BurstConfig(2e3, 10e-6, 5))
    ttl = TtlWindow(b[2].start - 100e-6, b[2].end + 100e-6)
    extra = b + [Interval(b[-1].start + k * 500e-6, 10e-6) for k in range(1, 4)]
    assert select_single_pulse(extra, ttl) == select_single_pulse(b, ttl)


def test_center_examples():
    ir = Interval(0.4e-6, 1e-6)
    plan = center_blue_pulse(ir, WindowSpec(0.6e-6, 1.3e-6), 0.3e-6)
    assert plan.blue_pulse.start == pytest.approx(0.8e-6, abs=1e-18)
    assert plan.blue_pulse.end == pytest.approx(1.1e-6, abs=1e-18)
    assert plan.margin_left == plan.margin_right == pytest.approx(0.2e-6, abs=1e-18)
    assert plan.overlap == (plan.blue_pulse.start, plan.blue_pulse.start + 0.3e-6)
    flat = WindowSpec(0.6e-6, 1.3e-6)
    full = center_blue_pulse(ir, flat, flat.width)
    assert full.margin_left == full.margin_right == 0.0
    assert full.overlap == pytest.approx((0.6e-6, 1.3e-6), abs=1e-18)
    zero = center_blue_pulse(ir, WindowSpec(0.6e-6, 1.3e-6), 0.0)
    assert zero.degenerate and zero.to_dict()["warnings"]
    assert zero.blue_pulse.start == pytest.approx(0.95e-6, abs=1e-18)


def test_center_errors():
    ir = Interval(0.4e-6, 1e-6)
    with pytest.raises(TimingError) as ei:
        center_blue_pulse(ir, WindowSpec(0.6e-6, 1.3e-6), 0.8e-6)
    assert ei.value.deficit == pytest.approx(0.1e-6)
    with pytest.raises(TimingError):
        center_blue_pulse(ir, WindowSpec(0.3e-6, 1.3e-6), 0.1e-6)


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 1e-3), st.floats(1e-9, 1e-4), st.floats(0, 1))
def test_margins_exactly_equal(start, width, frac):
    flat = WindowSpec(start, start + width)
    blue = min(flat.width * frac, flat.width)
    plan = center_blue_pulse(Interval(start, width * 1.5), flat, blue)
    lo, hi = Fraction(flat.start), Fraction(flat.end)
    w = Fraction(blue)
    blue_start = lo + (hi - lo - w) / 2
    # margins are equal in exact arithmetic, and so are their float images
    assert (blue_start - lo) == (hi - (blue_start + w))
    assert plan.margin_left == plan.margin_right
