"""Amplifier parameter fitting and closed-loop drive pre-shaping.

The drive family is a linear rise followed by a saturating exponential rise,
expressed in normalized RF drive units (0..1).  A simulated plant maps drive
to optical seed power through an AOM transfer curve, amplifies it with the
Frantz-Nodvik model and adds multiplicative detector noise.  The parameter
fit uses Nelder-Mead; the closed loop uses a secant least-squares search
that spends one plant measurement per iteration.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import least_squares, minimize

from .amplifier import AmplifierParams, forward_amplify, inverse_preshape, saturated_gain
from .dfo import StopSearch, simplex_least_squares
from .errors import DataError, ParameterError, PlantError
from .waveform import TimeGrid, Waveform, WindowSpec, cumulative_energy, rms_deviation


@dataclass(frozen=True)
class PreshapeParams:
    """Drive levels are in normalized drive units, times in seconds."""
    p_start: float
    t_knee: float
    p_knee: float
    tau_exp: float
    p_end: float

    def violations(self, width: float) -> list[str]:
        out = []
        if not 0 <= self.p_start <= self.p_knee <= self.p_end:
            out.append("levels must satisfy 0 <= p_start <= p_knee <= p_end")
        if not 0 < self.t_knee < width:
            out.append(f"t_knee must lie in (0, {width})")
        if not self.tau_exp > 0:
            out.append("tau_exp must be positive")
        vals = (self.p_start, self.t_knee, self.p_knee, self.tau_exp, self.p_end)
        if not all(math.isfinite(v) for v in vals):
            out.append("all parameters must be finite")
        return out

    def validate(self, width: float) -> None:
        bad = self.violations(width)
        if bad:
            raise ParameterError("; ".join(bad))

    def as_vector(self) -> np.ndarray:
        return np.array([self.p_start, self.t_knee, self.p_knee, self.tau_exp, self.p_end])

    @classmethod
    def flat(cls, level: float, width: float) -> PreshapeParams:
        return cls(level, 0.5 * width, level, 0.1 * width, level)


def eval_preshape(params: PreshapeParams, grid: TimeGrid, width: float,
                  start: float | None = None) -> Waveform:
    """Evaluate the drive family on ``grid`` for a pulse on ``[start, start + width)``."""
    start = grid.t0 if start is None else start
    params.validate(width)
    if start < grid.t0 - 1e-9 * grid.dt or start + width > grid.t_end + grid.dt * (1 + 1e-9):
        raise ParameterError("pulse does not fit inside the grid")
    t = grid.times - start
    eps = 1e-9 * grid.dt
    f = np.clip(t / params.t_knee, 0.0, 1.0)
    # the knee value is exact, not p_start + (p_knee - p_start) after rounding
    lin = np.where(f >= 1.0, params.p_knee, params.p_start + (params.p_knee - params.p_start) * f)
    rise = params.p_end - (params.p_end - params.p_knee) * np.exp(
        -np.maximum(t - params.t_knee, 0.0) / params.tau_exp)
    y = np.where(t <= params.t_knee, lin, rise)
    y = np.where((t >= -eps) & (t < width - eps), y, 0.0)
    return Waveform(grid, y)


def pulse_support(w: Waveform) -> tuple[float, float]:
    """(start, width) of the nonzero part of ``w``."""
    on = np.flatnonzero(w.samples > 0)
    if on.size == 0:
        raise DataError("waveform has no nonzero samples")
    return w.grid.t0 + on[0] * w.grid.dt, (on[-1] - on[0] + 1) * w.grid.dt


def project_preshape(drive: Waveform, width: float | None = None,
                     start: float | None = None) -> PreshapeParams:
    """Least-squares projection of an arbitrary drive onto the parameter family."""
    if start is None or width is None:
        s0, w0 = pulse_support(drive)
        start = s0 if start is None else start
        width = w0 if width is None else width
    grid = drive.grid
    t = grid.times - start
    on = (t >= -1e-9 * grid.dt) & (t < width - 1e-9 * grid.dt)
    y = drive.samples[on]
    scale = float(np.max(y)) if np.max(y) > 0 else 1.0

    # unconstrained coordinates: ordered levels via nonnegative increments
    def unpack(z):
        a, b, c, tk, ltau = z
        return PreshapeParams(a * scale, tk * width, (a + b) * scale,
                              math.exp(ltau) * width, (a + b + c) * scale)

    def resid(z):
        return eval_preshape(unpack(z), grid, width, start).samples[on] / scale - y / scale

    z0 = [y[0] / scale, 0.5 * (y[-1] - y[0]) / scale, 0.5 * (y[-1] - y[0]) / scale,
          0.3, math.log(0.3)]
    z0 = np.clip(z0, [0, 0, 0, 0.01, -9], [np.inf, np.inf, np.inf, 0.99, 0.0])
    sol = least_squares(resid, z0, bounds=([0, 0, 0, 0.01, -9], [np.inf, np.inf, np.inf, 0.99, 0.0]))
    return unpack(sol.x)


# -- parameter fitting -------------------------------------------------------

@dataclass(frozen=True)
class FitResult:
    params: AmplifierParams
    residual_rms: float
    iterations: int
    converged: bool


def _pair_residual(inp: np.ndarray, out: np.ndarray, e_in: np.ndarray, g0: float, e_sat: float):
    model = inp * saturated_gain(e_in, g0, e_sat)
    return math.sqrt(float(np.mean((model - out) ** 2))) / float(np.mean(out))


def fit_amplifier_params(pairs: Sequence[tuple[Waveform, Waveform]], init: AmplifierParams,
                         max_iter: int = 500, xtol: float = 1e-8) -> FitResult:
    """Fit ``(g0, e_sat)`` to measured input/output pairs.

    Minimizes the summed relative RMS between the modelled and measured
    outputs, searching in ``(log g0, log e_sat)``.
    """
    if len(pairs) == 0:
        raise DataError("need at least one input/output pair")
    prepared = []
    for k, (inp, out) in enumerate(pairs):
        if not inp.grid.same_as(out.grid):
            raise DataError(f"pair {k}: input and output grids differ")
        inp.require_nonnegative(f"pair {k} input")
        e_in = cumulative_energy(inp).samples
        if e_in[-1] <= 0:
            raise DataError(f"pair {k}: input carries no energy")
        if np.mean(out.samples) <= 0:
            raise DataError(f"pair {k}: output carries no energy")
        prepared.append((inp.samples, out.samples, e_in))

    def objective(z):
        g0, e_sat = math.exp(z[0]), math.exp(z[1])
        return sum(_pair_residual(i, o, e, g0, e_sat) for i, o, e in prepared)

    z0 = np.array([math.log(init.g0), math.log(init.e_sat)])
    simplex = np.vstack([z0, z0 + [0.1, 0.0], z0 + [0.0, 0.1]])
    res = minimize(objective, z0, method="Nelder-Mead",
                   options=dict(initial_simplex=simplex, maxiter=max_iter, maxfev=50 * max_iter,
                                xatol=xtol, fatol=0.0))
    # fatol=0 never triggers on its own; fall back to the simplex-size test
    sim = res.final_simplex[0]
    size = float(np.max(np.abs(sim - sim[0])))
    converged = size < xtol
    # an absorbing (g0 < 1) optimum can only arise from noise; clamp to transparent
    g0 = max(1.0, math.exp(res.x[0]))
    return FitResult(AmplifierParams(g0, math.exp(res.x[1])), float(res.fun), int(res.nit), converged)


# -- simulated plant ---------------------------------------------------------

def sin2_transfer(x):
    return np.sin(0.5 * np.pi * np.asarray(x)) ** 2


def identity_transfer(x):
    return np.asarray(x, dtype=float)


TRANSFERS = {"sin2": sin2_transfer, "identity": identity_transfer}


def tabulated_transfer(levels, fractions) -> Callable:
    levels = np.asarray(levels, float)
    fractions = np.asarray(fractions, float)
    if levels[0] != 0 or fractions[0] != 0 or np.any(np.diff(levels) <= 0) \
            or np.any(np.diff(fractions) < 0):
        raise ParameterError("tabulated transfer must start at (0, 0) and be monotone")
    return lambda x: np.interp(x, levels, fractions)


@dataclass(frozen=True)
class PlantConfig:
    amp: AmplifierParams
    seed_power_w: float
    aom_transfer: Callable = sin2_transfer
    noise_rel_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.noise_rel_std < 0:
            raise ParameterError("noise_rel_std must be >= 0")
        if not self.seed_power_w > 0:
            raise ParameterError("seed_power_w must be positive")
        probe = np.asarray(self.aom_transfer(np.linspace(0.0, 1.0, 101)))
        if probe[0] != 0 or np.any(np.diff(probe) < -1e-15):
            raise ParameterError("AOM transfer must be monotone with transfer(0) = 0")


@dataclass(frozen=True)
class PlantResult:
    output: Waveform
    clipped: bool


def simulate_plant(drive: Waveform, cfg: PlantConfig, shot: int = 0) -> PlantResult:
    """One measured output for ``drive``; noise depends only on ``(cfg.seed, shot)``."""
    d = drive.samples
    clipped = bool(np.any(d < 0) or np.any(d > 1))
    if clipped:
        d = np.clip(d, 0.0, 1.0)
    seed_light = Waveform(drive.grid, cfg.seed_power_w * np.asarray(cfg.aom_transfer(d)))
    out = forward_amplify(seed_light, cfg.amp).samples
    if cfg.noise_rel_std > 0:
        rng = np.random.default_rng([cfg.seed, shot])
        out = out * (1.0 + cfg.noise_rel_std * rng.standard_normal(out.size))
        out = np.maximum(out, 0.0)
    return PlantResult(Waveform(drive.grid, out), clipped)


class SimulatedPlant:
    """Drive -> measured output evaluator with a fresh noise draw per call."""

    def __init__(self, cfg: PlantConfig):
        self.cfg = cfg
        self.calls = 0
        self.clipped_calls = 0

    def __call__(self, drive: Waveform) -> Waveform:
        res = simulate_plant(drive, self.cfg, shot=self.calls)
        self.calls += 1
        self.clipped_calls += res.clipped
        return res.output


def analytic_drive(target: Waveform, cfg: PlantConfig) -> Waveform:
    """Inverse-model drive that ignores the AOM transfer (treats it as identity)."""
    return inverse_preshape(target, cfg.amp).scaled(1.0 / cfg.seed_power_w)


# -- closed loop -------------------------------------------------------------

@dataclass(frozen=True)
class LoopRecord:
    """One plant measurement.  ``best_rms`` is the best level-feasible RMS so far."""
    iteration: int
    params: PreshapeParams
    rms: float
    level_error: float
    best_rms: float


@dataclass
class LoopReport:
    method: str = "simplex-ls"
    records: list[LoopRecord] = field(default_factory=list)
    best_params: PreshapeParams | None = None
    best_rms: float = math.inf
    best_level_error: float = math.nan
    reached_tol: bool = False

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def initial_rms(self) -> float:
        return self.records[0].rms if self.records else math.nan

    def to_dict(self) -> dict:
        def pdict(p):
            return None if p is None else {
                "p_start": p.p_start, "t_knee_s": p.t_knee, "p_knee": p.p_knee,
                "tau_exp_s": p.tau_exp, "p_end": p.p_end}
        return {
            "method": self.method,
            "iterations": self.iterations,
            "reached_tol": self.reached_tol,
            "initial_rms": self.initial_rms,
            "best_rms": self.best_rms,
            "best_level_error": self.best_level_error,
            "best_params": pdict(self.best_params),
            "records": [{"iteration": r.iteration, "rms": r.rms, "level_error": r.level_error,
                         "best_rms": r.best_rms, "params": pdict(r.params)}
                        for r in self.records],
        }


# search coordinates: (log p_end, log p_knee/p_end, log p_start/p_knee,
# t_knee/width, log tau/width); the box keeps the level ordering
_MIN_RATIO = 1e-6
_LOWER = np.array([-np.inf, math.log(_MIN_RATIO), math.log(_MIN_RATIO), 0.01, -12.0])
_UPPER = np.array([np.inf, 0.0, 0.0, 0.99, 6.0])


def _encode(p: PreshapeParams, width: float) -> np.ndarray:
    if not p.p_end > 0:
        raise ParameterError("closed loop needs p_end > 0")
    knee = max(p.p_knee, _MIN_RATIO * p.p_end)
    return np.array([math.log(p.p_end), math.log(knee / p.p_end),
                     math.log(max(p.p_start, _MIN_RATIO * knee) / knee),
                     p.t_knee / width, math.log(p.tau_exp / width)])


def _decode(x, width: float) -> PreshapeParams:
    x = np.clip(x, _LOWER, _UPPER)
    p_end = math.exp(x[0])
    p_knee = p_end * math.exp(x[1])
    return PreshapeParams(p_knee * math.exp(x[2]), x[3] * width, p_knee,
                          math.exp(x[4]) * width, p_end)


def closed_loop_preshape(target: Waveform, plant: Callable[[Waveform], Waveform],
                         init: PreshapeParams, win: WindowSpec, tol: float, max_iter: int,
                         level_tol: float | None = 0.05, method: str = "simplex-ls",
                         radius: float = 0.2, on_evaluation: Callable | None = None
                         ) -> tuple[PreshapeParams, LoopReport]:
    """Tune the drive parameters until the plant output matches ``target``.

    Every iteration is one plant measurement; iteration 1 measures ``init``.
    The shape metric is the window-mean-normalized RMS deviation inside
    ``win``.  When ``level_tol`` is set, the output window mean must also lie
    within that relative band around the target's, otherwise shrinking the
    drive until the amplifier stops saturating would trivially flatten the
    output.  The loop stops at the first measurement meeting both criteria or
    after ``max_iter`` measurements.

    ``method`` is ``"simplex-ls"`` (secant least squares over a simplex of
    measured points, see :mod:`pulseforge.dfo`) or ``"nelder-mead"``.
    ``on_evaluation(iteration, drive, output, rms)`` is called after each
    measurement.
    """
    if not tol >= 0:
        raise ParameterError("tol must be >= 0")
    if max_iter < 1:
        raise ParameterError("max_iter must be >= 1")
    if method not in ("simplex-ls", "nelder-mead"):
        raise ParameterError(f"unknown method {method!r}")
    target.require_nonnegative("target")
    start, width = pulse_support(target)
    init.validate(width)
    grid = target.grid
    mask = win.mask(grid)
    t_in = target.samples[mask]
    t_mean = float(t_in.mean())
    if t_mean <= 0:
        raise DataError("target is zero inside the comparison window")
    report = LoopReport(method=method)

    def measure(x) -> np.ndarray:
        it = report.iterations + 1
        p = _decode(x, width)
        drive = eval_preshape(p, grid, width, start)
        try:
            out = plant(drive)
            o_in = out.samples[mask]
            o_mean = float(o_in.mean())
            rms = rms_deviation(out, target, win, normalize=True)
        except Exception as exc:
            raise PlantError(str(exc), it) from exc
        level = o_mean / t_mean - 1.0
        feasible = level_tol is None or abs(level) <= level_tol
        if feasible and rms < report.best_rms:
            report.best_rms, report.best_params, report.best_level_error = rms, p, level
        report.records.append(LoopRecord(it, p, rms, level, report.best_rms))
        if on_evaluation is not None:
            on_evaluation(it, drive, out, rms)
        if feasible and rms <= tol:
            report.reached_tol = True
            raise StopSearch
        shape = (o_in / o_mean - t_in / t_mean) / math.sqrt(t_in.size)
        return shape if level_tol is None else np.append(shape, level)

    x0 = _encode(init, width)
    if method == "simplex-ls":
        simplex_least_squares(measure, x0, radius, max_iter, _LOWER, _UPPER)
    else:
        def objective(x):
            r = measure(x)
            val = float(np.linalg.norm(r[:-1] if level_tol is not None else r))
            if level_tol is not None:
                val += max(0.0, abs(r[-1]) - level_tol)
            return val

        def bounded(x):
            if np.any(x < _LOWER) or np.any(x > _UPPER):
                return 10.0 + float(np.sum(np.maximum(_LOWER - x, 0) + np.maximum(x - _UPPER, 0)))
            if report.iterations >= max_iter:
                raise StopSearch
            return objective(x)

        steps = np.where(x0 + radius <= _UPPER, radius, -radius)
        simplex = np.vstack([x0] + [x0 + np.eye(5)[i] * steps[i] for i in range(5)])
        try:
            minimize(bounded, x0, method="Nelder-Mead",
                     options=dict(initial_simplex=simplex, maxiter=10 * max_iter,
                                  maxfev=10 * max_iter, xatol=1e-10, fatol=1e-12))
        except StopSearch:
            pass
    if report.best_params is None:
        # nothing met the level band; fall back to the lowest shape error
        rec = min(report.records, key=lambda r: r.rms)
        report.best_params, report.best_rms, report.best_level_error = rec.params, rec.rms, rec.level_error
    return report.best_params, report
