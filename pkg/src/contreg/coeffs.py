"""Deterministic-equivalent scalars for ridge-regularized continual regression.

Every closed-form loss in the package is a function of three scalars
``a``, ``b`` and ``c`` that depend only on the regularization strength, the
feature variance and the aspect ratio ``alpha = n / d``.  ``b`` is the limit of
the expected ridge resolvent ``E[P]`` with ``P = lam*d (X^T X + lam*d I)^-1``,
``a`` is the limit of ``E[P^2]`` and ``c`` drives the label-noise pickup.

Quantities that approach zero (``1 - a``, ``1 - b``, ``b - a``, ``c``) are
evaluated through rationalized expressions so that they keep full relative
precision for very large ``lam``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .errors import DegenerateRegime, InvalidParam


@dataclass(frozen=True)
class ProblemParams:
    """Scalar regime consumed by the closed forms and the simulator.

    ``n`` and ``d`` are only needed by the simulator.  ``alpha > 1`` is accepted
    so that overparameterization-violating simulations can be described, but
    :func:`make_coefficients` refuses it.
    """

    alpha: float
    v_x: float = 1.0
    v_z: float = 0.0
    lam: float = 0.0
    T: int = 1
    n: Optional[int] = None
    d: Optional[int] = None

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and self.alpha > 0):
            raise InvalidParam(f"alpha must be > 0, got {self.alpha}")
        if not (math.isfinite(self.v_x) and self.v_x > 0):
            raise InvalidParam(f"v_x must be > 0, got {self.v_x}")
        if not (math.isfinite(self.v_z) and self.v_z >= 0):
            raise InvalidParam(f"v_z must be >= 0, got {self.v_z}")
        if not (math.isfinite(self.lam) and self.lam >= 0):
            raise InvalidParam(f"lambda must be >= 0, got {self.lam}")
        if int(self.T) != self.T or self.T < 1:
            raise InvalidParam(f"T must be an integer >= 1, got {self.T}")
        object.__setattr__(self, "T", int(self.T))
        if (self.n is None) != (self.d is None):
            raise InvalidParam("n and d must be given together")
        if self.n is not None:
            if self.n < 1 or self.d < 1:
                raise InvalidParam(f"n and d must be positive, got n={self.n}, d={self.d}")
            if abs(self.n / self.d - self.alpha) > 1.0 / self.d:
                raise InvalidParam(
                    f"alpha={self.alpha} inconsistent with n/d={self.n}/{self.d}")

    @classmethod
    def from_shape(cls, n: int, d: int, **kw) -> "ProblemParams":
        return cls(alpha=n / d, n=n, d=d, **kw)

    @property
    def outside_theory(self) -> bool:
        """True when the regime is not covered by the closed forms (alpha > 1)."""
        return self.alpha > 1.0

    def replace(self, **changes) -> "ProblemParams":
        from dataclasses import replace

        return replace(self, **changes)


@dataclass(frozen=True)
class CoefficientSet:
    tilde_lambda: float
    d_disc: float
    n_num: float
    a: float
    b: float
    c: float
    one_minus_a: float
    one_minus_b: float


def _check(lam, v_x, alpha):
    for name, val in (("lambda", lam), ("v_x", v_x), ("alpha", alpha)):
        if not math.isfinite(val):
            raise InvalidParam(f"{name} must be finite, got {val}")
    if v_x <= 0:
        raise InvalidParam(f"v_x must be > 0, got {v_x}")
    if not 0 < alpha <= 1:
        raise InvalidParam(f"alpha must lie in (0, 1], got {alpha}")
    if lam < 0:
        raise InvalidParam(f"lambda must be >= 0, got {lam}")
    if lam == 0 and alpha == 1:
        raise DegenerateRegime("lambda = 0 with alpha = 1: the discriminant D vanishes")


def _disc(lt, alpha):
    # sum of non-negative terms: no cancellation at any lt
    return math.sqrt((1.0 - alpha) ** 2 + lt * (2.0 * (1.0 + alpha) + lt))


def make_coefficients(lam: float, v_x: float, alpha: float) -> CoefficientSet:
    """Return the scalars ``(lam~, D, N, a, b, c)`` for one regime.

    >>> cs = make_coefficients(1.0, 1.0, 0.5)
    >>> round(cs.a, 6), round(cs.b, 6), round(cs.c, 6)
    (0.674438, 0.780776, 0.106339)
    """
    _check(lam, v_x, alpha)
    lt = lam / v_x
    D = _disc(lt, alpha)
    N = (1.0 + alpha) * lt + (1.0 - alpha) ** 2
    s = 1.0 + alpha + lt
    a = 0.5 * (1.0 - alpha + N / D)
    b = 0.5 * (1.0 - alpha - lt + D)
    one_minus_b = 2.0 * alpha / (s + D)
    one_minus_a = 2.0 * alpha * (2.0 * lt * (1.0 + alpha) + (1.0 - alpha) ** 2) / (
        D * ((1.0 + alpha) * D + N))
    c = 2.0 * alpha / (v_x * D * (s + D))
    if lt > 1.0:
        # the complements are exact here; a, b are then best recovered from them
        a = 1.0 - one_minus_a
        b = 1.0 - one_minus_b
    return CoefficientSet(lt, D, N, a, b, c, one_minus_a, one_minus_b)


def coefficient_derivatives(lam: float, v_x: float, alpha: float) -> tuple[float, float]:
    """Analytic ``(da/dlam, db/dlam)``; both are strictly positive for ``lam > 0``."""
    if not (math.isfinite(lam) and lam > 0):
        raise InvalidParam(f"derivatives require lambda > 0, got {lam}")
    _check(lam, v_x, alpha)
    lt = lam / v_x
    D = _disc(lt, alpha)
    da = 2.0 * lt * alpha / (D ** 3 * v_x)
    db = 2.0 * alpha / (v_x * D * (lt + alpha + 1.0 + D))
    return da, db


def zero_lambda_limits(alpha: float, v_x: float) -> tuple[float, float, float]:
    """Limits of ``(a, b, c)`` as ``lam -> 0+``; requires ``alpha < 1``."""
    if not (math.isfinite(v_x) and v_x > 0):
        raise InvalidParam(f"v_x must be > 0, got {v_x}")
    if alpha == 1:
        raise DegenerateRegime("c diverges as lambda -> 0 when alpha = 1")
    if not 0 <= alpha < 1:
        raise InvalidParam(f"alpha must lie in (0, 1), got {alpha}")
    return 1.0 - alpha, 1.0 - alpha, alpha / (v_x * (1.0 - alpha))


def noise_ratio(cs: CoefficientSet, v_x: float) -> float:
    """``c / (1 - a)`` in the cancellation-free form ``1 / (v_x (lam~ + D))``."""
    return 1.0 / (v_x * (cs.tilde_lambda + cs.d_disc))
