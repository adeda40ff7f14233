"""Closed-form expected generalization loss of L2-regularized continual regression.

The learner solves, for each task ``t``,

    w_t = argmin_w ||X_t w - y_t||^2 + lam * d * ||w - w_{t-1}||^2

and the loss after ``T`` tasks is the average squared distance of ``w_T`` to
all teachers seen so far.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from . import _kernels
from .coeffs import ProblemParams, make_coefficients, noise_ratio
from .errors import DimensionMismatch, InvalidParam


@dataclass(frozen=True)
class SingleTeacher:
    """One fixed teacher shared by every task."""

    w_star: np.ndarray

    @property
    def dim(self) -> int:
        return int(np.shape(self.w_star)[0])


@dataclass(frozen=True)
class TeacherSequence:
    """An explicit ordered list of teachers plus the initial iterate."""

    w_0: np.ndarray
    w_stars: np.ndarray

    def __post_init__(self):
        w0 = np.asarray(self.w_0, dtype=float)
        ws = np.atleast_2d(np.asarray(self.w_stars, dtype=float))
        if w0.ndim != 1 or ws.shape[1] != w0.shape[0]:
            raise DimensionMismatch(
                f"w_0 has shape {w0.shape} but teachers have shape {ws.shape}")
        object.__setattr__(self, "w_0", w0)
        object.__setattr__(self, "w_stars", ws)

    @property
    def T(self) -> int:
        return self.w_stars.shape[0]


@dataclass(frozen=True)
class IIDTeachers:
    """Teachers drawn i.i.d. with mean ``w*`` and covariance ``Sigma``.

    Only ``||w*||^2`` and ``tr(Sigma)`` enter the closed forms.  ``mean`` and
    ``sigma_spec`` are optional concrete choices used by the simulator.
    """

    w_star_norm2: float
    trace_sigma: float
    sigma_spec: Optional[np.ndarray] = None
    mean: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        if not (self.w_star_norm2 >= 0 and math.isfinite(self.w_star_norm2)):
            raise InvalidParam(f"||w*||^2 must be >= 0, got {self.w_star_norm2}")
        if not (self.trace_sigma >= 0 and math.isfinite(self.trace_sigma)):
            raise InvalidParam(f"tr(Sigma) must be >= 0, got {self.trace_sigma}")
        if self.sigma_spec is not None:
            S = np.asarray(self.sigma_spec, dtype=float)
            if S.ndim != 2 or S.shape[0] != S.shape[1] or not np.allclose(S, S.T):
                raise InvalidParam("sigma_spec must be a symmetric square matrix")
            if np.linalg.eigvalsh(S).min() < -1e-10 * max(1.0, np.abs(S).max()):
                raise InvalidParam("sigma_spec must be positive semidefinite")
            tr = float(np.trace(S))
            if abs(tr - self.trace_sigma) > 1e-8 * max(abs(tr), abs(self.trace_sigma), 1e-300):
                raise InvalidParam(
                    f"trace of sigma_spec ({tr}) differs from trace_sigma ({self.trace_sigma})")
        if self.mean is not None:
            m = np.asarray(self.mean, dtype=float)
            if abs(float(m @ m) - self.w_star_norm2) > 1e-8 * max(self.w_star_norm2, 1e-300):
                raise InvalidParam("||mean||^2 differs from w_star_norm2")


TeacherModel = Union[SingleTeacher, TeacherSequence, IIDTeachers]


@dataclass(frozen=True)
class TheoryResult:
    total: float
    label_noise_term: float
    teacher_variability_term: float
    interaction_term: float
    temporal_correlation_term: float


def _powers(x: float, T: int) -> np.ndarray:
    out = np.empty(T + 1)
    out[0] = 1.0
    np.cumprod(np.full(T, x), out=out[1:])
    return out


def _noise_term(cs, v_z, v_x, T, pow_aT):
    # v_z c (1 - a^T) / (1 - a)
    return float(v_z * noise_ratio(cs, v_x) * (1.0 - pow_aT))


def general_loss(params: ProblemParams, teachers, w_0=None) -> TheoryResult:
    """Expected loss for an arbitrary deterministic teacher sequence.

    ``teachers`` is a :class:`TeacherSequence` or a ``(T, d)`` array, in which
    case ``w_0`` (default zero) gives the initial iterate.
    """
    if isinstance(teachers, TeacherSequence):
        seq = teachers if w_0 is None else TeacherSequence(w_0, teachers.w_stars)
    else:
        W = np.atleast_2d(np.asarray(teachers, dtype=float))
        seq = TeacherSequence(np.zeros(W.shape[1]) if w_0 is None else w_0, W)
    T = seq.T
    if T != params.T:
        raise DimensionMismatch(f"{T} teachers given but params.T = {params.T}")
    cs = make_coefficients(params.lam, params.v_x, params.alpha)
    pa = _powers(cs.a, T)
    pb = _powers(cs.b, T)

    W = seq.w_stars
    ext = np.vstack([seq.w_0[None, :], W])
    deltas = ext[:-1] - ext[1:]  # row i-1 holds w*_{i-1} - w*_i
    last = W[-1]

    noise = _noise_term(cs, params.v_z, params.v_x, T, pa[T])
    variability = float(np.mean(np.sum((last - W) ** 2, axis=1)))
    drift = pb[T - np.arange(1, T + 1) + 1] @ deltas
    interaction = 2.0 * float((last - W.mean(axis=0)) @ drift)
    gram = deltas @ deltas.T
    correlation = _kernels.corr_double_sum(gram, pa, pb)
    total = float(noise + variability + interaction + correlation)
    return TheoryResult(total, noise, variability, interaction, correlation)


def iid_loss(params: ProblemParams, stats: IIDTeachers) -> float:
    """Expected loss under i.i.d. teachers with zero initialization, ``T > 1``.

    The teacher-variance bracket is
    ``(1-b)/(1-a) + (b^T - 1)/T + a^T (2b - a - 1) / (2(1-a))``, which is the
    teacher average of :func:`general_loss`.
    """
    T = params.T
    if T <= 1:
        raise InvalidParam(f"i.i.d. closed form requires T > 1, got T={T}")
    cs = make_coefficients(params.lam, params.v_x, params.alpha)
    return _iid_from_coeffs(cs, params.v_x, params.v_z, stats.w_star_norm2,
                            stats.trace_sigma, T)


def _iid_from_coeffs(cs, v_x, v_z, norm2, tr, T):
    aT = cs.a ** T
    bT = cs.b ** T
    noise = v_z * noise_ratio(cs, v_x) * (1.0 - aT)
    scale = aT * norm2
    if tr == 0:
        return noise + scale
    # 2b - a - 1 = (1 - a) - 2(1 - b)
    tail = aT * (1.0 - 2.0 * cs.one_minus_b / cs.one_minus_a) / 2.0
    bracket = cs.one_minus_b / cs.one_minus_a + (bT - 1.0) / T + tail
    return noise + scale + 2.0 * tr * bracket


def single_teacher_loss(params: ProblemParams, dist0_sq: float) -> float:
    """``a^T ||w_0 - w*||^2 + (v_z / v_x) (1 - a^T) / (lam~ + D)``."""
    if dist0_sq < 0:
        raise InvalidParam(f"squared distance must be >= 0, got {dist0_sq}")
    cs = make_coefficients(params.lam, params.v_x, params.alpha)
    aT = cs.a ** params.T
    return aT * dist0_sq + params.v_z * noise_ratio(cs, params.v_x) * (1.0 - aT)


def infinite_horizon_loss(params: ProblemParams, stats: IIDTeachers) -> float:
    """``lim_{T -> inf}`` of :func:`iid_loss`: ``2 tr(S)(1-b)/(1-a) + v_z c/(1-a)``."""
    cs = make_coefficients(params.lam, params.v_x, params.alpha)
    return (2.0 * stats.trace_sigma * cs.one_minus_b / cs.one_minus_a
            + params.v_z * noise_ratio(cs, params.v_x))


def noreg_loss(teachers, w_0, alpha: float, v_z: float, T: int, v_x: float = 1.0) -> float:
    """Unregularized (``lam -> 0+``) loss for explicit teachers, ``w_0 = 0``.

    ``(1-alpha)^T/T sum_i ||w_i||^2 + 1/T sum_i (1-alpha)^(T-i) alpha
    sum_k ||w_k - w_i||^2 + v_z (1 - (1-alpha)^T) / (v_x (1-alpha))``
    """
    if not 0 < alpha < 1:
        raise InvalidParam(f"unregularized limit requires alpha in (0, 1), got {alpha}")
    if isinstance(teachers, TeacherSequence):
        W = teachers.w_stars
        w_0 = teachers.w_0 if w_0 is None else w_0
    else:
        W = np.atleast_2d(np.asarray(teachers, dtype=float))
    if w_0 is not None and np.any(np.asarray(w_0) != 0):
        raise InvalidParam("unregularized closed form assumes w_0 = 0")
    if W.shape[0] != T:
        raise DimensionMismatch(f"{W.shape[0]} teachers given but T = {T}")
    q = 1.0 - alpha
    pq = _powers(q, T)
    gram = W @ W.T
    scale = pq[T] / T * float(np.trace(gram))
    pairs = alpha / T * _kernels.noreg_pair_sum(gram, pq)
    return scale + pairs + v_z * (1.0 - pq[T]) / (v_x * q)


def loss_curve(params: ProblemParams, stats: IIDTeachers,
               T_list: Sequence[int]) -> list[tuple[int, float]]:
    """:func:`iid_loss` evaluated at each horizon in ``T_list`` (``params.T`` ignored)."""
    cs = make_coefficients(params.lam, params.v_x, params.alpha)
    out = []
    for T in T_list:
        if int(T) != T or T <= 1:
            raise InvalidParam(f"i.i.d. closed form requires T > 1, got T={T}")
        out.append((int(T), _iid_from_coeffs(cs, params.v_x, params.v_z,
                                             stats.w_star_norm2, stats.trace_sigma, int(T))))
    return out


def monotonicity_threshold(params: ProblemParams, stats: IIDTeachers,
                           T_max: int) -> Optional[int]:
    """Smallest ``T'`` such that the loss increases at every step ``T -> T+1``
    for ``T' <= T <= T_max``; ``None`` if the loss is not increasing at ``T_max``.
    """
    if params.lam <= 0:
        raise InvalidParam("monotonicity threshold requires lambda > 0")
    if stats.trace_sigma <= 0:
        raise InvalidParam("the increasing regime requires tr(Sigma) > 0")
    if T_max < 3:
        raise InvalidParam(f"T_max must be >= 3, got {T_max}")
    Ts = np.arange(2, T_max + 2)
    cs = make_coefficients(params.lam, params.v_x, params.alpha)
    vals = np.array([_iid_from_coeffs(cs, params.v_x, params.v_z, stats.w_star_norm2,
                                      stats.trace_sigma, int(T)) for T in Ts])
    up = np.diff(vals) > 0  # up[k]: loss(Ts[k] + 1) > loss(Ts[k])
    if not up[-1]:
        return None
    down = np.flatnonzero(~up)
    start = 0 if down.size == 0 else down[-1] + 1
    return int(Ts[start])


def trivial_loss(stats: TeacherModel) -> float:
    """Loss of the zero predictor: ``||w*||^2 + tr(Sigma)``."""
    if isinstance(stats, IIDTeachers):
        return stats.w_star_norm2 + stats.trace_sigma
    if isinstance(stats, SingleTeacher):
        w = np.asarray(stats.w_star, dtype=float)
        return float(w @ w)
    return float(np.mean(np.sum(stats.w_stars ** 2, axis=1)))


def expected_loss(params: ProblemParams, teacher: TeacherModel, w_0=None) -> float:
    """Dispatch to the closed form matching the teacher model.

    For i.i.d. teachers at ``T = 1`` the loss reduces to the single-teacher form
    with ``||w_0 - w_1*||^2`` averaged to ``||w*||^2 + tr(Sigma)``.
    """
    if isinstance(teacher, SingleTeacher):
        w = np.asarray(teacher.w_star, dtype=float)
        w0 = np.zeros_like(w) if w_0 is None else np.asarray(w_0, dtype=float)
        return single_teacher_loss(params, float((w0 - w) @ (w0 - w)))
    if isinstance(teacher, IIDTeachers):
        if w_0 is not None and np.any(np.asarray(w_0) != 0):
            raise InvalidParam("i.i.d. closed form assumes w_0 = 0")
        if params.T == 1:
            return single_teacher_loss(params, teacher.w_star_norm2 + teacher.trace_sigma)
        return iid_loss(params, teacher)
    return general_loss(params, teacher, w_0).total
