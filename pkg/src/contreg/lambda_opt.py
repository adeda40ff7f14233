"""Optimal fixed regularization strength for a task horizon ``T``."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .coeffs import ProblemParams, make_coefficients
from .errors import InvalidParam, NonFiniteObjective
from .theory import IIDTeachers, _iid_from_coeffs

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
GRID_POINTS = 64
LAMBDA_FLOOR = 1e-6


@dataclass(frozen=True)
class LambdaStar:
    """Search result.  ``status`` is ``"interior"``, ``"zero-limit"`` or ``"unbounded"``."""

    value: float
    loss_at_value: float
    bracket: tuple[float, float]
    evaluations: int
    status: str = "interior"

    @property
    def finite(self) -> bool:
        return self.status == "interior"


@dataclass(frozen=True)
class LambdaBounds:
    center: float
    lower: float
    upper: float
    epsilon: float
    valid: bool


def golden_section(f: Callable[[float], float], lo: float, hi: float,
                   stop: Callable[[float, float], bool], max_iter: int = 500):
    """Golden-section minimization of ``f`` on ``[lo, hi]``.

    Iterates until ``stop(lo, hi)`` holds.  Returns ``(x, f(x), lo, hi, calls)``
    with ``x`` the best interior probe.
    """
    c = hi - INV_PHI * (hi - lo)
    d = lo + INV_PHI * (hi - lo)
    fc, fd = f(c), f(d)
    calls = 2
    for _ in range(max_iter):
        if stop(lo, hi):
            break
        if fc <= fd:
            hi, d, fd = d, c, fc
            c = hi - INV_PHI * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + INV_PHI * (hi - lo)
            fd = f(d)
        calls += 1
    if fc <= fd:
        return c, fc, lo, hi, calls
    return d, fd, lo, hi, calls


def _objective(params: ProblemParams, stats: IIDTeachers, T: int):
    def f(lam: float) -> float:
        cs = make_coefficients(lam, params.v_x, params.alpha)
        return _iid_from_coeffs(cs, params.v_x, params.v_z, stats.w_star_norm2,
                                stats.trace_sigma, T)
    return f


def default_lambda_cap(params: ProblemParams, stats: IIDTeachers, T: int) -> float:
    try:
        bounds = lambda_star_bounds(params.v_x, params.alpha, params.v_z,
                                    stats.trace_sigma, stats.w_star_norm2, T, 0.5)
    except InvalidParam:
        return 1e6
    return 100.0 * bounds.center if bounds.valid else 1e6


def lambda_star_search(params: ProblemParams, stats: IIDTeachers, T: int,
                       tol_rel: float = 1e-6,
                       lambda_cap: Optional[float] = None) -> LambdaStar:
    """Minimize the i.i.d. closed form over ``lam`` for horizon ``T``.

    A 64-point log grid on ``[1e-6, lambda_cap]`` locates the basin; ties go to
    the smaller ``lam``.  Golden-section search in ``log(lam)`` then refines
    inside the neighbouring grid cells until the bracket width is at most
    ``tol_rel * lam``.
    """
    if int(T) != T or T <= 1:
        raise InvalidParam(f"T must be an integer > 1, got {T}")
    if not 1e-8 < tol_rel < 1e-1:
        raise InvalidParam(f"tol_rel must lie in (1e-8, 1e-1), got {tol_rel}")
    T = int(T)
    if lambda_cap is None:
        lambda_cap = default_lambda_cap(params, stats, T)
    if not (math.isfinite(lambda_cap) and lambda_cap > LAMBDA_FLOOR):
        raise InvalidParam(f"lambda_cap must exceed {LAMBDA_FLOOR}, got {lambda_cap}")
    f = _objective(params, stats, T)

    grid = np.logspace(math.log10(LAMBDA_FLOOR), math.log10(lambda_cap), GRID_POINTS)
    vals = np.array([f(float(x)) for x in grid])
    if not np.all(np.isfinite(vals)):
        bad = grid[~np.isfinite(vals)][0]
        raise NonFiniteObjective(f"closed form is not finite at lambda={bad}")
    k = int(np.argmin(vals))
    if k == 0:
        return LambdaStar(0.0, float(vals[0]), (0.0, float(grid[1])), GRID_POINTS, "zero-limit")
    if k == GRID_POINTS - 1:
        return LambdaStar(math.inf, float(vals[-1]), (float(grid[-2]), math.inf),
                          GRID_POINTS, "unbounded")

    def stop(lo, hi):
        x_lo, x_hi = math.exp(lo), math.exp(hi)
        return x_hi - x_lo <= tol_rel * x_lo

    x, fx, lo, hi, calls = golden_section(lambda u: f(math.exp(u)),
                                          math.log(grid[k - 1]), math.log(grid[k + 1]), stop)
    value = math.exp(x)
    if fx > vals[k]:  # keep the grid point if refinement wandered off a flat basin
        value, fx = float(grid[k]), float(vals[k])
    return LambdaStar(value, float(fx), (math.exp(lo), math.exp(hi)),
                      GRID_POINTS + calls, "interior")


def lambda_star_bounds(v_x: float, alpha: float, v_z: float, trace_sigma: float,
                       w_star_norm2: float, T: int, epsilon: float = 0.5) -> LambdaBounds:
    """Two-sided bound ``(1 +- eps) * 2 v_x alpha T / ln(signal/noise)``.

    ``signal/noise = 4 alpha T ||w*||^2 v_x / (v_z + v_x tr(Sigma)(1 + alpha))``.
    The bound is flagged valid only when that ratio exceeds ``e``.
    """
    if not w_star_norm2 > 0:
        raise InvalidParam("bounds require a non-zero mean teacher")
    noise = v_z + v_x * trace_sigma * (1.0 + alpha)
    if not noise > 0:
        raise InvalidParam("bounds require label noise or teacher variance")
    if not 0 < epsilon < 1:
        raise InvalidParam(f"epsilon must lie in (0, 1), got {epsilon}")
    if v_x <= 0 or not 0 < alpha <= 1 or T < 1:
        raise InvalidParam("invalid v_x, alpha or T")
    ratio = 4.0 * alpha * T * w_star_norm2 * v_x / noise
    if ratio <= 1.0:
        nan = math.nan
        return LambdaBounds(nan, nan, nan, epsilon, False)
    center = 2.0 * v_x * alpha * T / math.log(ratio)
    return LambdaBounds(center, (1.0 - epsilon) * center, (1.0 + epsilon) * center,
                        epsilon, ratio > math.e)


def advise_scale(lambda_hat: float, T_small: int, T_target: int, mode: str = "linear") -> float:
    """Transfer a strength tuned at ``T_small`` to ``T_target``.

    ``linear`` multiplies by ``T_target / T_small``; ``t_over_lnt`` by the ratio of
    ``T / ln T``.
    """
    if not (math.isfinite(lambda_hat) and lambda_hat > 0):
        raise InvalidParam(f"lambda_hat must be > 0, got {lambda_hat}")
    if not 1 < T_small <= T_target:
        raise InvalidParam(f"need 1 < T_small <= T_target, got {T_small}, {T_target}")
    if mode == "linear":
        return lambda_hat * T_target / T_small
    if mode == "t_over_lnt":
        return lambda_hat * (T_target / math.log(T_target)) / (T_small / math.log(T_small))
    raise InvalidParam(f"unknown mode {mode!r}")
