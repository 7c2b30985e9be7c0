import math

import pytest
from hypothesis import given, settings, strategies as st

from dseprot.chi2 import chi_squared_cdf, chi_squared_confidence, chi_squared_sf, regularized_gamma
from oracles import chi2_cdf_quad


def test_k2_closed_form_dense_grid():
    worst = 0.0
    for j in range(2001):
        x = 100.0 * j / 2000
        worst = max(worst, abs(chi_squared_cdf(2, x) - (1.0 - math.exp(-x / 2))))
    assert worst <= 1e-10


@pytest.mark.parametrize("k", range(1, 51))
def test_against_quadrature(k):
    for x in (0.05, 0.5, k / 2, k - 0.7, k + 0.3, 1.5 * k + 2, 3.0 * k + 10):
        assert chi_squared_cdf(k, x) == pytest.approx(chi2_cdf_quad(k, x), abs=1e-8)


def test_frozen_quantile():
    # 95th percentile of chi2(14)
    assert chi_squared_cdf(14, 23.685) == pytest.approx(0.9500028753, abs=1e-9)


def test_endpoints():
    assert chi_squared_cdf(7, 0.0) == 0.0
    assert chi_squared_sf(7, 0.0) == 1.0
    assert chi_squared_cdf(3, 1e4) == 1.0
    assert chi_squared_confidence(0.0, 10) == 1.0
    assert chi_squared_confidence(1e6, 10) == 0.0


def test_sf_keeps_tail_precision():
    # 1 - cdf would underflow to 0 here
    q = chi_squared_sf(2, 200.0)
    assert q == pytest.approx(math.exp(-100.0), rel=1e-10)


def test_regularized_gamma_sums_to_one():
    for a in (0.5, 1.0, 3.5, 25.0):
        for x in (0.1, a, 4 * a):
            p, q = regularized_gamma(a, x)
            assert p + q == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("k,x", [(0, 1.0), (-2, 1.0), (2.5, 1.0), (3, -0.1)])
def test_rejects_bad_input(k, x):
    with pytest.raises(ValueError):
        chi_squared_cdf(k, x)


def test_confidence_rejects_negative_J():
    with pytest.raises(ValueError):
        chi_squared_confidence(-1.0, 4)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 60), st.floats(0, 300), st.floats(0, 300))
def test_cdf_monotone_and_bounded(k, x1, x2):
    lo, hi = sorted((x1, x2))
    f_lo, f_hi = chi_squared_cdf(k, lo), chi_squared_cdf(k, hi)
    assert 0.0 <= f_lo <= f_hi <= 1.0


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 60), st.floats(0, 300), st.floats(0, 300))
def test_confidence_decreases_with_J(dof, j1, j2):
    lo, hi = sorted((j1, j2))
    assert chi_squared_confidence(lo, dof) >= chi_squared_confidence(hi, dof)
