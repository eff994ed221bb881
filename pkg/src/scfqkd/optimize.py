"""Derivative-free maximization of the key rate over (p0, mu).

The search runs in transformed coordinates, logit(p0) and log(mu). A dense
grid finds the basin, then bounded one-dimensional Brent searches alternate
between the two coordinates until the rate stops improving.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import expit, logit

from .core import ChannelConfig, validate_config, ProtocolConfig
from .pipeline import MODES, rate_surface

__all__ = [
    "OptimizationProblem",
    "OptimizationResult",
    "optimize_key_rate",
    "secure_distance",
]

# Lowest mu searched when nu = 0; the rate vanishes as mu -> 0 anyway.
MU_FLOOR = 1e-10


@dataclass(frozen=True)
class OptimizationProblem:
    nu: float
    mode: str = "original"
    p0_bounds: tuple[float, float] = (1e-6, 1.0 - 1e-6)
    mu_max: float = 1.0
    grid: tuple[int, int] = (40, 40)
    rtol: float = 1e-4
    max_sweeps: int = 50

    @property
    def mu_bounds(self) -> tuple[float, float]:
        return (max(self.nu, MU_FLOOR), self.mu_max)


@dataclass(frozen=True)
class OptimizationResult:
    p0: float
    mu: float
    R: float
    grid_best: float
    no_key: bool
    mu_at_upper_bound: bool
    evaluations: int


def _check_problem(problem: OptimizationProblem):
    lo, hi = problem.p0_bounds
    mu_lo, mu_hi = problem.mu_bounds
    if not (0.0 < lo < hi < 1.0):
        raise ValueError(f"empty or invalid p0 range {problem.p0_bounds}")
    if not (problem.nu >= 0.0 and mu_lo < mu_hi):
        raise ValueError(f"empty mu range [{mu_lo}, {mu_hi}] for nu={problem.nu}")
    if problem.mode not in MODES:
        raise ValueError(f"unknown mode {problem.mode!r}")
    if min(problem.grid) < 2:
        raise ValueError("grid needs at least 2 points per axis")


def optimize_key_rate(
    problem: OptimizationProblem,
    channel: ChannelConfig,
    objective: Callable | None = None,
) -> OptimizationResult:
    """Best (p0, mu) for a fixed weak-source bound and channel.

    ``objective(p0, mu)`` may replace the key-rate pipeline; it must accept
    broadcastable arrays and return rates of the same shape.
    """
    _check_problem(problem)
    if objective is None:
        validate_config(ProtocolConfig.symmetric(problem.nu, problem.mu_max, 0.5), channel)

        def objective(p0, mu):
            return rate_surface(problem.nu, p0, mu, channel, problem.mode)

    t_lo, t_hi = (float(logit(b)) for b in problem.p0_bounds)
    m_lo, m_hi = (math.log(b) for b in problem.mu_bounds)
    n_p, n_m = problem.grid

    def f(t, m):
        p0 = np.clip(expit(t), *problem.p0_bounds)
        mu = np.clip(np.exp(m), *problem.mu_bounds)
        return np.asarray(objective(p0, mu), dtype=float)

    ts = np.linspace(t_lo, t_hi, n_p)
    ms = np.linspace(m_lo, m_hi, n_m)
    T, M = np.meshgrid(ts, ms, indexing="ij")
    grid_vals = f(T, M)
    evals = grid_vals.size
    i, j = np.unravel_index(np.argmax(grid_vals), grid_vals.shape)
    best_t, best_m, best = float(ts[i]), float(ms[j]), float(grid_vals[i, j])
    grid_best = best

    if best > 0:
        step_t = ts[1] - ts[0]
        step_m = ms[1] - ms[0]
        for _ in range(problem.max_sweeps):
            before = best
            for axis in (0, 1):
                if axis == 0:
                    lo, hi = max(t_lo, best_t - step_t), min(t_hi, best_t + step_t)
                    res = minimize_scalar(lambda t: -float(f(t, best_m)), bounds=(lo, hi), method="bounded",
                                          options={"xatol": 1e-6 * step_t})
                else:
                    lo, hi = max(m_lo, best_m - step_m), min(m_hi, best_m + step_m)
                    res = minimize_scalar(lambda m: -float(f(best_t, m)), bounds=(lo, hi), method="bounded",
                                          options={"xatol": 1e-6 * step_m})
                evals += res.nfev
                if -res.fun > best:
                    best = -res.fun
                    if axis == 0:
                        best_t = float(res.x)
                    else:
                        best_m = float(res.x)
            if best - before <= problem.rtol * best:
                break

    p0 = float(np.clip(expit(best_t), *problem.p0_bounds))
    mu = float(np.clip(math.exp(best_m), *problem.mu_bounds))
    at_edge = best > 0 and math.isclose(best_m, m_hi, rel_tol=0, abs_tol=1e-3)
    return OptimizationResult(
        p0=p0,
        mu=mu,
        R=float(best),
        grid_best=grid_best,
        no_key=not best > 0,
        mu_at_upper_bound=at_edge,
        evaluations=evals,
    )


def secure_distance(
    problem: OptimizationProblem,
    channel: ChannelConfig,
    d_max: float = 600.0,
    coarse_step: float = 10.0,
    tol: float = 0.1,
) -> float:
    """Largest distance (km) with a positive optimized key rate.

    Scans outward in ``coarse_step`` increments, then bisects the last
    positive/zero bracket down to ``tol``. Returns 0 when no distance works.
    """

    def positive(d):
        return optimize_key_rate(problem, channel.replace(distance_km=d)).R > 0

    if not positive(0.0):
        return 0.0
    lo = 0.0
    hi = None
    d = coarse_step
    while d <= d_max:
        if positive(d):
            lo = d
        else:
            hi = d
            break
        d += coarse_step
    if hi is None:
        return lo
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if positive(mid):
            lo = mid
        else:
            hi = mid
    return lo
