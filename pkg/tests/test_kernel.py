import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from siapprox.dfilter import prefilter
from siapprox.kernel import (
    PiecewisePolyKernel,
    autocorrelation_sequence,
    bspline,
    bspline_spectrum,
    centered,
    eval_deriv,
    hermite_kernel,
    polynomial_reproduction_residual,
    spectrum,
    strang_fix_order,
    tensor_product,
)

from oracles import bspline_by_convolution


def test_order_one_is_unit_indicator():
    b0 = bspline(1)
    x = np.array([-0.5, 0.0, 0.3, 0.999, 1.0, 1.5])
    np.testing.assert_array_equal(b0(x), [0, 1, 1, 1, 0, 0])


def test_cubic_integer_samples_match_convolution_oracle():
    b = bspline(4)
    got = b(np.arange(5.0))
    oracle = [bspline_by_convolution(4, k) for k in range(5)]
    np.testing.assert_allclose(got, [0, 1 / 6, 4 / 6, 1 / 6, 0], atol=1e-15)
    np.testing.assert_allclose(got, oracle, atol=1e-12)


def test_hat_peak():
    assert bspline(2)(1.0) == pytest.approx(1.0, abs=1e-15)
    assert bspline_by_convolution(2, 1.0) == pytest.approx(1.0, abs=1e-14)


def test_zero_order_rejected():
    with pytest.raises(ValueError):
        bspline(0)


def test_recursion_matches_numerical_convolution():
    rng = np.random.default_rng(1)
    for L in range(2, 6):
        x = rng.uniform(-0.5, L + 0.5, 100)
        got = bspline(L)(x)
        oracle = np.array([bspline_by_convolution(L, xi) for xi in x])
        assert np.max(np.abs(got - oracle)) <= 1e-12


@pytest.mark.parametrize("L", range(1, 9))
def test_positivity_and_support(L):
    b = bspline(L)
    inside = np.linspace(0, L, 801)[1:-1]
    assert np.all(b(inside) > 0)
    outside = np.concatenate([np.linspace(-3, 0, 50, endpoint=False)[1:], np.linspace(L, L + 3, 50)])
    assert np.all(b(outside) == 0)


@pytest.mark.parametrize("L", range(1, 9))
def test_unit_integral(L):
    assert bspline(L).integral() == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("L", range(2, 9))
def test_derivative_continuity_across_knots(L):
    axis = bspline(L).axes[0]
    for i in range(1, L):
        left = np.polynomial.Polynomial(axis.coeffs[i - 1])
        right = np.polynomial.Polynomial(axis.coeffs[i])
        for r in range(L - 1):  # continuous up to order degree - 1
            assert abs(left.deriv(r)(1.0) - right.deriv(r)(0.0)) <= 1e-10


def test_exact_rationals_known_cubic_piece():
    exact = bspline(4).axes[0].exact
    assert exact[0] == (Fraction(0), Fraction(0), Fraction(0), Fraction(1, 6))
    assert exact[1] == (Fraction(1, 6), Fraction(1, 2), Fraction(1, 2), Fraction(-1, 2))


def test_tensor_product_single_factor_is_identity():
    b = bspline(4)
    assert tensor_product([b]) is b


def test_tensor_product_value():
    k = tensor_product([bspline(4), bspline(4)])
    assert k(np.array([2.0, 2.0])) == pytest.approx((4 / 6) ** 2, abs=1e-15)
    oracle = bspline_by_convolution(4, 2.0) ** 2
    assert k(np.array([2.0, 2.0])) == pytest.approx(oracle, abs=1e-12)


def test_tensor_product_integral():
    assert tensor_product([bspline(2), bspline(2)]).integral() == pytest.approx(1.0)


def test_tensor_product_empty_rejected():
    with pytest.raises(ValueError):
        tensor_product([])


def test_derivative_at_cubic_peak_is_zero():
    b = bspline(4)
    step = 1e-6
    fd = (b(2 + step) - b(2 - step)) / (2 * step)
    assert eval_deriv(b, 1, 2.0) == pytest.approx(0.0, abs=1e-15)
    assert abs(fd) < 1e-9


def test_hat_slope():
    assert eval_deriv(bspline(2), 1, 0.5) == pytest.approx(1.0)


def test_quadratic_second_derivative_pieces():
    b = bspline(3)
    np.testing.assert_allclose(eval_deriv(b, 2, np.array([0.5, 1.5, 2.5])), [1, -2, 1])


def test_derivative_beyond_degree_rejected():
    with pytest.raises(ValueError):
        eval_deriv(bspline(2), 2, 0.5)


def test_right_continuity_at_knots():
    b = bspline(2)
    assert eval_deriv(b, 1, 1.0) == -1.0  # value from the interval to the right
    assert eval_deriv(b, 1, 0.0) == 1.0


def test_spectrum_at_zero_is_integral():
    for L in (1, 3, 4):
        assert spectrum(bspline(L), 0.0) == pytest.approx(bspline(L).integral())


def test_spectrum_matches_closed_form():
    w = np.linspace(-20, 20, 41)
    for L in (1, 2, 4):
        got = np.array([spectrum(bspline(L), wi) for wi in w])
        np.testing.assert_allclose(got, bspline_spectrum(L, w), atol=1e-12)


def test_dense_sampling_dft_matches_spectrum_to_second_order():
    b = bspline(4)
    w = np.linspace(-np.pi, np.pi, 9)
    errs = []
    for delta in (1 / 16, 1 / 32):
        x = np.arange(0, 4 + delta / 2, delta)
        riemann = np.array([delta * np.sum(b(x) * np.exp(-1j * wi * x)) for wi in w])
        errs.append(np.max(np.abs(riemann - bspline_spectrum(4, w))))
    assert errs[1] < errs[0] / 3.5  # O(delta^2)


def test_autocorrelation_of_hat():
    a = autocorrelation_sequence(bspline(2))
    assert a[0] == pytest.approx(2 / 3, abs=1e-15)
    assert a[1] == pytest.approx(1 / 6, abs=1e-15)
    assert a[-1] == pytest.approx(1 / 6, abs=1e-15)
    assert a[2] == 0 and a[-2] == 0


def test_autocorrelation_of_hat_quadrature_oracle():
    from scipy import integrate

    hat = lambda x: max(0.0, 1 - abs(x - 1))
    for k in (0, 1):
        ref, _ = integrate.quad(lambda x: hat(x) * hat(x - k), -1, 4, points=[0, 1, 2, 3], epsabs=1e-14)
        assert autocorrelation_sequence(bspline(2))[k] == pytest.approx(ref, abs=1e-13)


def test_autocorrelation_of_indicator():
    a = autocorrelation_sequence(bspline(1), radius=3)
    assert a[0] == pytest.approx(1.0)
    assert all(a[k] == 0 for k in (-3, -2, -1, 1, 2, 3))


def test_cubic_riesz_lower_bound():
    a = autocorrelation_sequence(bspline(4))
    w = 2 * np.pi * np.arange(1024) / 1024
    assert np.min(a.symbol(w).real) > 0


def test_autocorrelation_symbol_matches_periodized_spectrum():
    a = autocorrelation_sequence(bspline(4))
    w = np.linspace(-np.pi, np.pi, 33)
    ks = np.arange(-64, 65)
    folded = np.array([np.sum(np.abs(bspline_spectrum(4, wi + 2 * np.pi * ks)) ** 2) for wi in w])
    np.testing.assert_allclose(a.symbol(w).real, folded, atol=1e-8)


def test_strang_fix_cubic():
    assert strang_fix_order(bspline(4), 6, 1e-10) == 4


def test_strang_fix_indicator():
    assert strang_fix_order(bspline(1), 6, 1e-10) == 1


def test_strang_fix_truncated_gaussian():
    g = lambda x: np.exp(-x * x / 2)
    dg = lambda x: -x * np.exp(-x * x / 2)
    k = hermite_kernel(g, dg, np.linspace(-6, 6, 97))
    assert abs(spectrum(k, 2 * math.pi)) > 1e-10
    assert strang_fix_order(k, 6, 1e-10) == 0


def test_strang_fix_tensor():
    assert strang_fix_order(tensor_product([bspline(2), bspline(2)]), 4, 1e-10, k_max=3) == 2


@settings(max_examples=20, deadline=None)
@given(st.floats(-14, -2))
def test_strang_fix_monotone_in_tolerance(log_tol):
    k = bspline(3)
    loose = strang_fix_order(k, 5, 10**log_tol)
    tight = strang_fix_order(k, 5, 10 ** (log_tol - 2))
    assert tight <= loose


def test_reproduction_constant():
    k = centered(bspline(4))
    grid = np.linspace(-5, 5, 201)
    r = polynomial_reproduction_residual(k, prefilter(k), (0,), grid, truncation=40)
    assert r.residual <= 1e-8 and r.truncation == 40


def test_reproduction_cubic_monomial():
    k = centered(bspline(4))
    r = polynomial_reproduction_residual(k, prefilter(k), (3,), np.linspace(-5, 5, 201), truncation=40)
    assert r.residual <= 1e-6


def test_reproduction_indicator_exact():
    k = bspline(1)
    r = polynomial_reproduction_residual(k, prefilter(k), (0,), np.linspace(-5, 5, 203), truncation=40)
    assert r.residual == 0.0


def test_json_roundtrip_with_rationals():
    k = tensor_product([bspline(3), bspline(4)])
    back = PiecewisePolyKernel.from_json(k.to_json(exact=True))
    x = np.random.default_rng(0).uniform(-1, 5, size=(50, 2))
    np.testing.assert_array_equal(back(x), k(x))
    assert back.axes[1].exact == k.axes[1].exact


def test_centered_support_symmetric():
    for L in (2, 3, 4):
        (a, b), = centered(bspline(L)).support
        assert a == -b == -L / 2


@settings(max_examples=50, deadline=None)
@given(st.integers(-50 * 2**20, 50 * 2**20), st.integers(1, 6))
def test_partition_of_unity(n, L):
    x = n / 2**20  # dyadic, so x - k is exact
    b = bspline(L)
    ks = np.arange(math.floor(x) - L - 1, math.floor(x) + 2)
    assert np.sum(b(x - ks)) == pytest.approx(1.0, abs=1e-12)
