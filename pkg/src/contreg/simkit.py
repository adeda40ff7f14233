"""Seeded Monte Carlo simulator of ridge-regularized continual regression.

Random streams are keyed hierarchically by ``(master_seed, replicate, task)``
and split into independent ``features``, ``noise`` and ``teacher`` streams, so
replicates can run in any order or in parallel without changing a single bit
of the output.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg

from .coeffs import ProblemParams
from .errors import DimensionMismatch, InvalidParam, SingularSystem
from .theory import IIDTeachers, SingleTeacher, TeacherModel, TeacherSequence

FEATURE_DISTS = ("gaussian", "uniform", "rademacher")


@dataclass(frozen=True)
class TaskStreams:
    features: np.random.Generator
    noise: np.random.Generator
    teacher: np.random.Generator


def task_streams(master_seed: int, replicate: int, task: int) -> TaskStreams:
    ss = np.random.SeedSequence(entropy=int(master_seed) & (2**64 - 1),
                                spawn_key=(int(replicate), int(task)))
    f, z, t = ss.spawn(3)
    return TaskStreams(np.random.default_rng(f), np.random.default_rng(z),
                       np.random.default_rng(t))


@dataclass
class Task:
    features: np.ndarray
    labels: np.ndarray
    teacher: np.ndarray


@dataclass
class SimConfig:
    """Everything needed to run replicated simulations.

    ``feature_cov`` makes the raw features anisotropic (rows ~ Sigma_f^{1/2});
    ``whiten`` is a covariance the learner whitens against before training.
    Teachers always act on the features the learner sees.
    """

    params: ProblemParams
    teacher: TeacherModel
    feature_dist: str = "gaussian"
    w0: Optional[np.ndarray] = None
    replicates: int = 1
    master_seed: int = 0
    whiten: Optional[np.ndarray] = None
    feature_cov: Optional[np.ndarray] = None
    record_curve: bool = False

    def __post_init__(self):
        p = self.params
        if p.n is None or p.d is None:
            raise InvalidParam("simulation requires explicit n and d")
        if self.feature_dist not in FEATURE_DISTS:
            raise InvalidParam(f"feature_dist must be one of {FEATURE_DISTS}")
        if int(self.replicates) != self.replicates or self.replicates < 1:
            raise InvalidParam(f"replicates must be a positive integer, got {self.replicates}")
        if self.w0 is not None and np.shape(self.w0) != (p.d,):
            raise DimensionMismatch(f"w0 must have shape ({p.d},)")
        for name in ("whiten", "feature_cov"):
            m = getattr(self, name)
            if m is not None and np.shape(m) != (p.d, p.d):
                raise DimensionMismatch(f"{name} must be {p.d}x{p.d}")
        t = self.teacher
        if isinstance(t, SingleTeacher) and t.dim != p.d:
            raise DimensionMismatch("teacher dimension differs from d")
        if isinstance(t, TeacherSequence):
            if t.w_stars.shape != (p.T, p.d):
                raise DimensionMismatch(f"teacher sequence must be {p.T}x{p.d}")
        if isinstance(t, IIDTeachers):
            if t.sigma_spec is not None and np.shape(t.sigma_spec) != (p.d, p.d):
                raise DimensionMismatch("sigma_spec must be d x d")
            if t.mean is not None and np.shape(t.mean) != (p.d,):
                raise DimensionMismatch("teacher mean must have shape (d,)")


@dataclass
class SimReport:
    mean_gen_loss: float
    std_error: Optional[float]
    replicates: int
    seed: int
    per_t_curve: Optional[list] = None
    outside_theory: bool = False
    samples: np.ndarray = field(default=None, repr=False)


def _spd_power(S: np.ndarray, p: float) -> np.ndarray:
    vals, vecs = np.linalg.eigh(np.asarray(S, dtype=float))
    if vals.min() <= 0:
        raise InvalidParam("covariance must be positive definite")
    return (vecs * vals ** p) @ vecs.T


def default_mean(norm2: float, d: int) -> np.ndarray:
    """Deterministic mean teacher with squared norm ``norm2``: a flat vector."""
    return np.full(d, math.sqrt(norm2 / d))


def sample_features(rng: np.random.Generator, n: int, d: int, v_x: float,
                    dist: str = "gaussian") -> np.ndarray:
    if dist == "gaussian":
        return rng.standard_normal((n, d)) * math.sqrt(v_x)
    if dist == "uniform":
        h = math.sqrt(3.0 * v_x)
        return rng.uniform(-h, h, size=(n, d))
    if dist == "rademacher":
        return (2.0 * rng.integers(0, 2, size=(n, d)) - 1.0) * math.sqrt(v_x)
    raise InvalidParam(f"unknown feature distribution {dist!r}")


def sample_task(stream: TaskStreams, params: ProblemParams, teacher_draw: np.ndarray,
                feature_dist: str = "gaussian", feature_map: Optional[np.ndarray] = None
                ) -> Task:
    """Draw ``X`` (n x d) and ``y = X w* + z``.

    ``feature_map`` (d x d) is applied on the right of the raw features; the
    simulator uses it to build anisotropic-then-whitened designs.
    """
    n, d = params.n, params.d
    w = np.asarray(teacher_draw, dtype=float)
    if w.shape != (d,):
        raise DimensionMismatch(f"teacher must have shape ({d},), got {w.shape}")
    X = sample_features(stream.features, n, d, params.v_x, feature_dist)
    if feature_map is not None:
        X = X @ feature_map
    y = X @ w
    if params.v_z > 0:
        y = y + stream.noise.standard_normal(n) * math.sqrt(params.v_z)
    return Task(X, y, w)


def ridge_update(w_prev: np.ndarray, task: Task, lam: float, d: Optional[int] = None,
                 form: str = "auto") -> np.ndarray:
    """One step of ``argmin ||X w - y||^2 + lam d ||w - w_prev||^2``.

    ``form`` selects ``"primal"`` (d x d Cholesky), ``"dual"`` (n x n Cholesky on
    the residual) or ``"auto"`` (the smaller system).  ``lam = 0`` returns the
    minimum-norm correction ``w_prev + X^+ (y - X w_prev)``.
    """
    X, y = task.features, task.labels
    n, dd = X.shape
    d = dd if d is None else d
    if lam < 0:
        raise InvalidParam(f"lambda must be >= 0, got {lam}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y)) and np.all(np.isfinite(w_prev))):
        raise SingularSystem("non-finite inputs to ridge update")
    resid = y - X @ w_prev
    if lam == 0:
        step, *_ = np.linalg.lstsq(X, resid, rcond=None)
        return w_prev + step
    mu = lam * d
    if form == "auto":
        form = "dual" if n < dd else "primal"
    if form == "dual":
        K = X @ X.T
        K[np.diag_indices_from(K)] += mu
        return w_prev + X.T @ linalg.cho_solve(linalg.cho_factor(K, lower=True), resid)
    if form == "primal":
        A = X.T @ X
        A[np.diag_indices_from(A)] += mu
        return linalg.cho_solve(linalg.cho_factor(A, lower=True), X.T @ y + mu * w_prev)
    raise InvalidParam(f"unknown form {form!r}")


def empirical_gen_loss(w_T: np.ndarray, teachers) -> float:
    """Average squared distance from ``w_T`` to every teacher."""
    W = np.atleast_2d(np.asarray(teachers, dtype=float))
    if W.size == 0:
        raise InvalidParam("teacher list is empty")
    if W.shape[1] != np.shape(w_T)[0]:
        raise DimensionMismatch("teacher and iterate dimensions differ")
    return float(np.mean(np.sum((W - w_T) ** 2, axis=1)))


def empirical_test_mse(w: np.ndarray, fresh_task: Task) -> float:
    """``||X w - y||^2`` on a task not used for training."""
    if fresh_task.features.shape[1] != np.shape(w)[0]:
        raise DimensionMismatch("task and iterate dimensions differ")
    r = fresh_task.features @ w - fresh_task.labels
    return float(r @ r)


def _draw_teacher(config: SimConfig, streams: TaskStreams, t: int, chol) -> np.ndarray:
    tm, d = config.teacher, config.params.d
    if isinstance(tm, SingleTeacher):
        return np.asarray(tm.w_star, dtype=float)
    if isinstance(tm, TeacherSequence):
        return tm.w_stars[t]
    mean = default_mean(tm.w_star_norm2, d) if tm.mean is None else np.asarray(tm.mean, float)
    g = streams.teacher.standard_normal(d)
    if chol is None:
        return mean + g * math.sqrt(tm.trace_sigma / d)
    return mean + chol @ g


def _teacher_factor(config: SimConfig):
    tm = config.teacher
    if isinstance(tm, IIDTeachers) and tm.sigma_spec is not None:
        vals, vecs = np.linalg.eigh(np.asarray(tm.sigma_spec, dtype=float))
        return vecs * np.sqrt(np.clip(vals, 0.0, None))
    return None


def _feature_map(config: SimConfig):
    M = None
    if config.feature_cov is not None:
        M = _spd_power(config.feature_cov, 0.5)
    if config.whiten is not None:
        W = _spd_power(config.whiten, -0.5)
        M = W if M is None else M @ W
    return M


def run_sequence(config: SimConfig, replicate_index: int, record: bool = False):
    """Run the sequential ridge recursion for one replicate.

    Returns ``(w_T, teachers, curve)`` where ``curve[t-1]`` is the empirical
    loss ``G_t`` after task ``t`` when ``record`` is true, else ``None``.
    """
    p = config.params
    w = np.zeros(p.d) if config.w0 is None else np.array(config.w0, dtype=float)
    chol = _teacher_factor(config)
    fmap = _feature_map(config)
    teachers = np.empty((p.T, p.d))
    curve = [] if record else None
    for t in range(p.T):
        s = task_streams(config.master_seed, replicate_index, t)
        teachers[t] = _draw_teacher(config, s, t, chol)
        task = sample_task(s, p, teachers[t], config.feature_dist, fmap)
        w = ridge_update(w, task, p.lam, p.d)
        if record:
            curve.append(empirical_gen_loss(w, teachers[: t + 1]))
    return w, teachers, curve


def _one(config: SimConfig, r: int):
    w, teachers, curve = run_sequence(config, r, record=config.record_curve)
    return empirical_gen_loss(w, teachers), curve


def monte_carlo(config: SimConfig, workers: int = 1) -> SimReport:
    """Replicate :func:`run_sequence` and aggregate ``G_T``.

    Replicates are reduced in index order, so the report does not depend on
    ``workers``.
    """
    R = int(config.replicates)
    if workers > 1 and R > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(lambda r: _one(config, r), range(R)))
    else:
        results = [_one(config, r) for r in range(R)]
    g = np.array([res[0] for res in results])
    mean = float(np.mean(g))
    se = float(np.std(g, ddof=1) / math.sqrt(R)) if R > 1 else None
    curve = None
    if config.record_curve:
        C = np.array([res[1] for res in results])
        curve = [(t + 1, float(v)) for t, v in enumerate(C.mean(axis=0))]
    return SimReport(mean, se, R, int(config.master_seed), curve,
                     config.params.outside_theory, g)
