import math
import os
import subprocess
import sys

import numpy as np
import pytest

from contreg import (DimensionMismatch, IIDTeachers, InvalidParam, ProblemParams, SingleTeacher,
                     TeacherSequence, expected_loss, general_loss, iid_loss,
                     infinite_horizon_loss, loss_curve, make_coefficients,
                     monotonicity_threshold, noreg_loss, single_teacher_loss)
from contreg import _kernels
from contreg.theory import trivial_loss

from oracles import general_loss_bruteforce


def _params(**kw):
    base = dict(alpha=0.5, v_x=1.0, v_z=0.0, lam=1.0, T=2)
    base.update(kw)
    return ProblemParams(**base)


def test_iid_two_tasks_noiseless_equals_a_squared():
    cs = make_coefficients(1.0, 1.0, 0.5)
    val = iid_loss(_params(), IIDTeachers(1.0, 0.0))
    assert val == pytest.approx(cs.a ** 2, rel=1e-14)
    assert val == pytest.approx(0.454865730730320, rel=1e-12)


@pytest.mark.parametrize("T", [1, 2, 7, 25])
@pytest.mark.parametrize("lam", [1e-3, 0.5, 3.0])
def test_general_matches_bruteforce(T, lam):
    rng = np.random.default_rng(T)
    W = rng.standard_normal((T, 6))
    w0 = rng.standard_normal(6)
    p = _params(T=T, lam=lam, v_z=0.7, v_x=1.3, alpha=0.35)
    cs = make_coefficients(lam, 1.3, 0.35)
    res = general_loss(p, W, w0)
    ref = general_loss_bruteforce(cs.a, cs.b, cs.c, 1.3, 0.7, W, w0)
    assert res.total == pytest.approx(ref, rel=1e-11)
    parts = (res.label_noise_term + res.teacher_variability_term + res.interaction_term
             + res.temporal_correlation_term)
    assert parts == pytest.approx(res.total, rel=1e-14)


@pytest.mark.parametrize("T", [1, 3, 40])
@pytest.mark.parametrize("lam", [1e-6, 0.2, 8.0])
def test_general_equals_single_for_constant_teachers(T, lam):
    rng = np.random.default_rng(0)
    w = rng.standard_normal(10)
    w0 = rng.standard_normal(10)
    p = _params(T=T, lam=lam, v_z=0.4)
    g = general_loss(p, np.tile(w, (T, 1)), w0).total
    s = single_teacher_loss(p, float((w - w0) @ (w - w0)))
    assert g == pytest.approx(s, rel=1e-10)


@pytest.mark.parametrize("T", [2, 5, 30])
def test_general_at_tiny_lambda_equals_noreg(T):
    rng = np.random.default_rng(T)
    W = rng.standard_normal((T, 8))
    p = _params(T=T, lam=1e-9, v_z=0.5, alpha=0.3)
    g = general_loss(p, W).total
    nr = noreg_loss(W, None, 0.3, 0.5, T)
    assert g == pytest.approx(nr, rel=1e-4)


def test_noreg_rejects_nonzero_start_and_alpha_one():
    W = np.ones((2, 3))
    with pytest.raises(InvalidParam):
        noreg_loss(W, np.ones(3), 0.5, 0.0, 2)
    with pytest.raises(InvalidParam):
        noreg_loss(W, None, 1.0, 0.0, 2)
    with pytest.raises(DimensionMismatch):
        noreg_loss(W, None, 0.5, 0.0, 3)


def test_noreg_single_teacher_decays_geometrically():
    w = np.array([1.0, 0.0])
    for T in (1, 4, 9):
        assert noreg_loss(np.tile(w, (T, 1)), None, 0.25, 0.0, T) == pytest.approx(0.75 ** T)


def test_single_teacher_noiseless_is_a_to_the_T():
    cs = make_coefficients(2.0, 1.0, 0.4)
    for T in (1, 5, 20):
        assert single_teacher_loss(_params(T=T, lam=2.0, alpha=0.4), 3.0) == pytest.approx(
            3.0 * cs.a ** T, rel=1e-13)


def test_single_teacher_noise_limit():
    # T -> inf with lam -> 0: v_z / (v_x (1 - alpha))
    val = single_teacher_loss(_params(T=2000, lam=1e-12, v_z=1.0), 1.0)
    assert val == pytest.approx(2.0, rel=1e-6)


@pytest.mark.parametrize("T", [2, 5, 10])
def test_iid_is_teacher_average_of_general(T):
    d, draws = 60, 4000
    stats = IIDTeachers(1.0, 0.5)
    p = _params(T=T, lam=0.7, v_z=0.3)
    rng = np.random.default_rng(100 + T)
    mean = np.full(d, math.sqrt(1.0 / d))
    vals = np.empty(draws)
    for k in range(draws):
        W = mean + rng.standard_normal((T, d)) * math.sqrt(0.5 / d)
        vals[k] = general_loss(p, W).total
    se = vals.std(ddof=1) / math.sqrt(draws)
    target = iid_loss(p, stats)
    assert abs(vals.mean() - target) <= 3 * se + 1e-12


def test_iid_limits():
    stats = IIDTeachers(0.7, 0.4)
    # huge lambda freezes w at zero: loss of the zero predictor
    assert iid_loss(_params(T=6, lam=1e9), stats) == pytest.approx(trivial_loss(stats), rel=1e-6)
    # T = 1 goes through the single-teacher form
    cs = make_coefficients(1.0, 1.0, 0.5)
    assert expected_loss(_params(T=1), stats) == pytest.approx(cs.a * 1.1, rel=1e-14)
    with pytest.raises(InvalidParam):
        iid_loss(_params(T=1), stats)


def test_infinite_horizon_value():
    val = infinite_horizon_loss(_params(v_z=1.0), IIDTeachers(1.0, 0.0))
    assert val == pytest.approx(1.0 / (1.0 + math.sqrt(4.25)), rel=1e-14)
    assert val == pytest.approx(0.3266316, abs=1e-7)


def test_iid_converges_to_infinite_horizon():
    # with teacher variance the gap closes like -2 tr(Sigma) / T
    stats = IIDTeachers(1.0, 0.3)
    p = _params(v_z=0.8, lam=2.0)
    lim = infinite_horizon_loss(p, stats)
    for T in (1000, 10000, 100000):
        assert T * (iid_loss(p.replace(T=T), stats) - lim) == pytest.approx(-0.6, rel=1e-2)


def test_gap_shrinks_by_a_without_teacher_variance():
    stats = IIDTeachers(1.0, 0.0)
    p = _params(v_z=0.8, lam=2.0)
    cs = make_coefficients(2.0, 1.0, 0.5)
    lim = infinite_horizon_loss(p, stats)
    g = [iid_loss(p.replace(T=T), stats) - lim for T in range(2, 12)]
    for g0, g1 in zip(g, g[1:]):
        assert g1 == pytest.approx(cs.a * g0, rel=1e-9)


def test_infinite_horizon_decreasing_in_lambda():
    stats = IIDTeachers(1.0, 0.2)
    vals = [infinite_horizon_loss(_params(lam=lam, v_z=1.0), stats)
            for lam in np.logspace(-3, 3, 30)]
    assert all(np.diff(vals) < 0)


def test_monotonicity_threshold():
    stats = IIDTeachers(1.0, 0.1)
    p = _params(v_z=1.0, lam=1.0)
    Tp = monotonicity_threshold(p, stats, 500)
    assert Tp == 15
    curve = [v for _, v in loss_curve(p, stats, range(Tp, 501))]
    assert all(np.diff(curve) > 0)
    assert iid_loss(p.replace(T=Tp - 1), stats) >= iid_loss(p.replace(T=Tp), stats)
    # huge lambda: still decreasing over a short window
    assert monotonicity_threshold(p.replace(lam=1e6), stats, 10) is None
    with pytest.raises(InvalidParam):
        monotonicity_threshold(p, IIDTeachers(1.0, 0.0), 100)


def test_loss_curve_matches_pointwise():
    stats = IIDTeachers(0.5, 0.25)
    p = _params(v_z=0.2, lam=0.4)
    for T, v in loss_curve(p, stats, [2, 9, 33]):
        assert v == iid_loss(p.replace(T=T), stats)


def test_expected_loss_dispatch():
    w = np.array([1.0, 2.0])
    p = _params(T=3, v_z=0.1)
    assert expected_loss(p, SingleTeacher(w)) == single_teacher_loss(p, 5.0)
    seq = TeacherSequence(np.zeros(2), np.tile(w, (3, 1)))
    assert expected_loss(p, seq) == pytest.approx(single_teacher_loss(p, 5.0), rel=1e-12)


def test_input_validation():
    with pytest.raises(DimensionMismatch):
        general_loss(_params(T=3), np.ones((2, 4)))
    with pytest.raises(DimensionMismatch):
        TeacherSequence(np.zeros(3), np.ones((2, 4)))
    with pytest.raises(InvalidParam):
        IIDTeachers(-1.0, 0.0)
    with pytest.raises(InvalidParam):
        IIDTeachers(1.0, 1.0, sigma_spec=np.eye(3))
    with pytest.raises(InvalidParam):
        single_teacher_loss(_params(), -1.0)


@pytest.mark.parametrize("T", [1, 2, 17, 200])
def test_kernel_paths_agree(T):
    rng = np.random.default_rng(T)
    W = rng.standard_normal((T, 5))
    G = W @ W.T
    pa = 0.7 ** np.arange(T + 1)
    pb = 0.9 ** np.arange(T + 1)
    ref = _kernels.corr_double_sum_numpy(G, pa, pb)
    loop = sum(pa[T - max(i, j) + 1] * pb[abs(i - j)] * G[i - 1, j - 1]
               for i in range(1, T + 1) for j in range(1, T + 1)) if T <= 17 else ref
    assert ref == pytest.approx(loop, rel=1e-12)
    if _kernels.HAS_NUMBA:
        assert _kernels.corr_double_sum_numba(G, pa, pb) == pytest.approx(ref, rel=1e-12)
        assert _kernels.noreg_pair_sum_numba(G, pb) == pytest.approx(
            _kernels.noreg_pair_sum_numpy(G, pb), rel=1e-12)


def test_env_flag_selects_numpy_path():
    code = ("from contreg import _kernels, general_loss, ProblemParams\n"
            "import numpy as np\n"
            "W = np.random.default_rng(1).standard_normal((30, 4))\n"
            "p = ProblemParams(alpha=0.5, lam=0.3, T=30, v_z=0.2)\n"
            "print(_kernels.USE_NUMBA, repr(general_loss(p, W).total))")
    env = dict(os.environ, CONTREG_DISABLE_NUMBA="1")
    off = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                         text=True, check=True).stdout.split()
    env.pop("CONTREG_DISABLE_NUMBA")
    on = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                        text=True, check=True).stdout.split()
    assert off[0] == "False"
    assert on[0] == str(_kernels.HAS_NUMBA)
    assert float(off[1]) == pytest.approx(float(on[1]), rel=1e-12)
