"""Derivative-free least squares over a simplex of measured points.

The solver keeps ``n + 1`` evaluated points, interpolates the Jacobian of
the residual vector from their differences and takes trust-region
Gauss-Newton steps.  Each step costs exactly one residual evaluation, plus an
occasional geometry-repair evaluation when the simplex degenerates.  It is
meant for cheap-to-describe but expensive-to-measure residuals such as a
closed pre-shaping loop, where every evaluation is one measurement.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


class StopSearch(Exception):
    """Raised by a residual callback to end the search early."""


@dataclass
class SimplexLSResult:
    x: np.ndarray
    residual: np.ndarray
    cost: float
    evaluations: int
    radius: float
    stopped_early: bool


def _tr_step(J: np.ndarray, r: np.ndarray, radius: float) -> np.ndarray:
    """Minimize ``|r + J s|`` subject to ``|s| <= radius`` (Levenberg-Marquardt form)."""
    U, sig, Vt = np.linalg.svd(J, full_matrices=False)
    g = U.T @ r

    def step(lam):
        return -Vt.T @ (sig * g / (sig ** 2 + lam))

    keep = sig > sig[0] * 1e-10 if sig.size and sig[0] > 0 else np.zeros_like(sig, bool)
    if keep.any():
        s = -Vt.T[:, keep] @ (g[keep] / sig[keep])
        if np.linalg.norm(s) <= radius:
            return s
    # |s(lam)| decreases in lam: bracket, then bisect on log(lam)
    hi = max(float(np.max(sig * np.abs(g))) / radius, 1e-300)
    while np.linalg.norm(step(hi)) > radius:
        hi *= 4.0
    lo = hi * 1e-14
    for _ in range(80):
        mid = np.sqrt(lo * hi)
        if np.linalg.norm(step(mid)) > radius:
            lo = mid
        else:
            hi = mid
        if hi <= lo * (1 + 1e-9):
            break
    return step(hi)


def simplex_least_squares(residual: Callable[[np.ndarray], np.ndarray], x0, radius: float,
                          max_evals: int, lower=None, upper=None, min_radius: float = 1e-8,
                          max_radius: float | None = None) -> SimplexLSResult:
    """Minimize ``sum(residual(x)**2)`` without derivatives.

    ``radius`` is the initial trust-region radius and simplex edge length.
    Iterates are clipped to the box ``[lower, upper]``.  The callback may
    raise :class:`StopSearch` to finish with the best point seen so far.
    """
    x0 = np.asarray(x0, float)
    n = x0.size
    lower = np.full(n, -np.inf) if lower is None else np.asarray(lower, float)
    upper = np.full(n, np.inf) if upper is None else np.asarray(upper, float)
    max_radius = 1e3 * radius if max_radius is None else max_radius
    pts: list[np.ndarray] = []
    res: list[np.ndarray] = []
    evals = 0
    best = (np.inf, x0, None)

    def evaluate(x):
        nonlocal evals, best
        if evals >= max_evals:
            raise StopSearch
        evals += 1
        r = np.asarray(residual(x), float)
        c = float(r @ r)
        if c < best[0]:
            best = (c, x.copy(), r)
        return r

    def finish(stopped):
        c, x, r = best
        return SimplexLSResult(x, r, c, evals, radius, stopped)

    try:
        x0 = np.clip(x0, lower, upper)
        pts.append(x0)
        res.append(evaluate(x0))
        for i in range(n):
            d = np.zeros(n)
            # step inward when the upper bound is too close
            d[i] = radius if x0[i] + radius <= upper[i] else -radius
            p = np.clip(x0 + d, lower, upper)
            pts.append(p)
            res.append(evaluate(p))

        while radius > min_radius:
            costs = [float(r @ r) for r in res]
            k = int(np.argmin(costs))
            xk, rk = pts[k], res[k]
            others = [i for i in range(n + 1) if i != k]
            D = np.array([pts[i] - xk for i in others])
            R = np.array([res[i] - rk for i in others])
            J = np.linalg.lstsq(D, R, rcond=None)[0].T

            s = _tr_step(J, rk, radius)
            x_new = np.clip(xk + s, lower, upper)
            s = x_new - xk
            if np.linalg.norm(s) < 1e-14:
                radius *= 0.5
                continue
            pred = costs[k] - float(np.sum((rk + J @ s) ** 2))
            r_new = evaluate(x_new)
            actual = costs[k] - float(r_new @ r_new)
            rho = actual / pred if pred > 0 else -1.0

            # replace the point farthest from the new centre
            centre = x_new if actual > 0 else xk
            dist = [np.linalg.norm(pts[i] - centre) if i != k or actual > 0 else -1.0
                    for i in range(n + 1)]
            far = int(np.argmax(dist))
            if actual > 0 or dist[far] > np.linalg.norm(x_new - xk):
                pts[far], res[far] = x_new, r_new

            if rho < 0.1:
                radius *= 0.5
            elif rho > 0.7 and np.linalg.norm(s) >= 0.9 * radius:
                radius = min(2.0 * radius, max_radius)

            # geometry repair: if the simplex has collapsed onto a subspace,
            # probe along the missing direction
            costs = [float(r @ r) for r in res]
            k = int(np.argmin(costs))
            D = np.array([pts[i] - pts[k] for i in range(n + 1) if i != k])
            sv = np.linalg.svd(D, compute_uv=False)
            if sv[-1] < 1e-3 * max(sv[0], 1e-300) or sv[0] > 20 * radius:
                _, _, Vt = np.linalg.svd(D)
                u = Vt[-1]
                dist = [np.linalg.norm(pts[i] - pts[k]) if i != k else -1.0 for i in range(n + 1)]
                far = int(np.argmax(dist))
                p = np.clip(pts[k] + radius * u, lower, upper)
                if np.linalg.norm(p - pts[k]) < 0.5 * radius:
                    p = np.clip(pts[k] - radius * u, lower, upper)
                pts[far], res[far] = p, evaluate(p)
    except StopSearch:
        return finish(True)
    return finish(False)
