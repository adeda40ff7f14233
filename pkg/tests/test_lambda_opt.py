import math

import numpy as np
import pytest

from contreg import (IIDTeachers, InvalidParam, ProblemParams, advise_scale, iid_loss,
                     lambda_star_bounds, lambda_star_search)
from contreg.lambda_opt import golden_section

CANON = ProblemParams(alpha=0.5, v_x=1.0, v_z=1.0)
CANON_STATS = IIDTeachers(1.0, 0.0)


def _dense_argmin(params, stats, T, lo, hi, points=20001):
    grid = np.logspace(math.log10(lo), math.log10(hi), points)
    vals = np.array([iid_loss(params.replace(lam=float(x), T=T), stats) for x in grid])
    k = int(np.argmin(vals))
    return grid[k], vals[k], grid[1] / grid[0]


@pytest.mark.parametrize("T,stats,vz", [(100, IIDTeachers(1.0, 0.0), 1.0),
                                        (30, IIDTeachers(1.0, 0.2), 0.5),
                                        (500, IIDTeachers(2.0, 0.05), 3.0),
                                        (10, IIDTeachers(0.0, 1.0), 0.0),
                                        (10000, IIDTeachers(1.0, 0.0), 1.0)])
def test_search_matches_dense_grid(T, stats, vz):
    p = CANON.replace(v_z=vz)
    res = lambda_star_search(p, stats, T)
    assert res.status == "interior"
    x, fx, step = _dense_argmin(p, stats, T, 1e-4, 1e4)
    assert res.loss_at_value <= fx * (1 + 1e-12)
    assert res.value == pytest.approx(x, rel=step - 1)
    lo, hi = res.bracket
    assert lo <= res.value <= hi and hi - lo <= 1e-6 * lo * 1.0001
    for edge in (lo, hi):
        assert res.loss_at_value <= iid_loss(p.replace(lam=edge, T=T), stats)


@pytest.mark.parametrize("T,expected", [(100, 17.618), (1000, 130.139), (10000, 1008.24)])
def test_canonical_optimum(T, expected):
    res = lambda_star_search(CANON, CANON_STATS, T)
    assert res.value == pytest.approx(expected, rel=1e-4)
    b = lambda_star_bounds(1.0, 0.5, 1.0, 0.0, 1.0, T)
    assert b.valid and b.lower < res.value < b.upper


def test_optimum_grows_with_T():
    vals = [lambda_star_search(CANON, CANON_STATS, T).value for T in (100, 1000, 10000, 100000)]
    assert all(np.diff(vals) > 0)
    ratios = np.array(vals[1:]) / np.array(vals[:-1])
    assert np.all((ratios > 7) & (ratios < 10))


def test_noiseless_single_teacher_is_zero_limit():
    res = lambda_star_search(CANON.replace(v_z=0.0), CANON_STATS, 50)
    assert res.status == "zero-limit" and res.value == 0.0 and not res.finite


def test_no_signal_is_unbounded():
    res = lambda_star_search(CANON, IIDTeachers(0.0, 0.0), 50)
    assert res.status == "unbounded" and math.isinf(res.value)


def test_pure_teacher_variance_has_finite_optimum():
    vals = [lambda_star_search(CANON.replace(v_z=0.0), IIDTeachers(0.0, 1.0), T).value
            for T in (10, 100, 1000)]
    assert all(np.isfinite(vals)) and all(np.diff(vals) > 0)


def test_search_validation():
    with pytest.raises(InvalidParam):
        lambda_star_search(CANON, CANON_STATS, 1)
    with pytest.raises(InvalidParam):
        lambda_star_search(CANON, CANON_STATS, 10, tol_rel=0.5)
    with pytest.raises(InvalidParam):
        lambda_star_search(CANON, CANON_STATS, 10, lambda_cap=1e-9)


def test_bounds_formula():
    b = lambda_star_bounds(1.0, 0.5, 1.0, 0.0, 1.0, 1000, epsilon=0.25)
    center = 1000.0 / math.log(2000.0)
    assert b.center == pytest.approx(center, rel=1e-14)
    assert (b.lower, b.upper) == pytest.approx((0.75 * center, 1.25 * center), rel=1e-14)


def test_bounds_canonical_example():
    b = lambda_star_bounds(1.0, 0.5, 1.0, 0.0, 1.0, 10000, epsilon=0.5)
    assert b.center == pytest.approx(1009.8, abs=0.1)
    assert (b.lower, b.upper) == pytest.approx((504.9, 1514.7), abs=0.1)
    for T in (1000, 10000, 100000):
        r = lambda_star_bounds(1.0, 0.5, 1.0, 0.0, 1.0, 2 * T).center / \
            lambda_star_bounds(1.0, 0.5, 1.0, 0.0, 1.0, T).center
        assert 1.8 < r < 2


def test_bounds_degenerate_cases():
    small = lambda_star_bounds(1.0, 0.5, 100.0, 0.0, 1.0, 2)
    assert not small.valid and math.isnan(small.center)
    between = lambda_star_bounds(1.0, 0.5, 1.0, 0.0, 1.0, 1)
    assert not between.valid and math.isfinite(between.center)
    with pytest.raises(InvalidParam):
        lambda_star_bounds(1.0, 0.5, 1.0, 0.0, 0.0, 100)
    with pytest.raises(InvalidParam):
        lambda_star_bounds(1.0, 0.5, 0.0, 0.0, 1.0, 100)
    with pytest.raises(InvalidParam):
        lambda_star_bounds(1.0, 0.5, 1.0, 0.0, 1.0, 100, epsilon=1.0)


def test_golden_section_on_parabola():
    calls = []

    def f(x):
        calls.append(x)
        return (x - 1.234) ** 2

    x, fx, lo, hi, n = golden_section(f, -10.0, 10.0, lambda a, b: b - a < 1e-9)
    assert x == pytest.approx(1.234, abs=1e-8)
    assert lo <= x <= hi and hi - lo < 1e-9
    assert n == len(calls)


def test_advise():
    assert advise_scale(0.3, 10, 1000) == pytest.approx(30.0)
    assert advise_scale(0.3, 10, 10) == pytest.approx(0.3)
    assert advise_scale(1.0, 10, 100, mode="t_over_lnt") == pytest.approx(5.0)
    assert advise_scale(0.3, 10, 10, mode="t_over_lnt") == pytest.approx(0.3)
    v = advise_scale(1.0, 10, 1000, mode="t_over_lnt")
    assert v == pytest.approx(100.0 * math.log(10) / math.log(1000))
    for bad in [(0.0, 10, 100), (1.0, 1, 100), (1.0, 100, 10)]:
        with pytest.raises(InvalidParam):
            advise_scale(*bad)
    with pytest.raises(InvalidParam):
        advise_scale(1.0, 10, 100, mode="log")
