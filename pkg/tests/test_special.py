import math

import numpy as np
import pytest
from scipy import integrate, special

from evload.errors import DomainError
from evload.special import SERIES_CUTOFF, bessel_i0, bessel_i0e, bessel_i1e, q_function


def q_by_quadrature(x):
    return integrate.quad(lambda u: math.exp(-u * u / 2) / math.sqrt(2 * math.pi), x, np.inf,
                          epsabs=1e-14, epsrel=1e-13)[0]


def i0_series(x, terms=80):
    return math.fsum(
        math.exp(2 * k * math.log(x / 2) - 2 * math.lgamma(k + 1)) for k in range(terms)
    )


def test_q_known_values():
    assert q_function(0.0) == 0.5
    assert q_function(-1.7) + q_function(1.7) == pytest.approx(1.0, abs=1e-15)
    assert q_function(1.0) == pytest.approx(0.15865525393145707, abs=1e-15)


@pytest.mark.parametrize("x", np.linspace(-8, 8, 33))
def test_q_matches_defining_integral(x):
    assert abs(q_function(x) - q_by_quadrature(x)) <= 1e-12


def test_q_vectorized():
    xs = np.array([-1.0, 0.0, 1.0])
    np.testing.assert_allclose(q_function(xs), [q_function(x) for x in xs], rtol=0, atol=0)


def test_i0_small_values():
    assert bessel_i0(0.0) == 1.0
    assert bessel_i0(1.0) == pytest.approx(1.2660658777520082, rel=1e-14)
    assert bessel_i0(1.0) == pytest.approx(i0_series(1.0), rel=1e-14)
    assert bessel_i0(2.0) > bessel_i0(1.0)


@pytest.mark.parametrize("x", [0.01, 0.5, 3.0, 7.5, 12.0, 14.99, 15.0, 15.01, 20.0, 35.0])
def test_i0_against_series_oracle(x):
    assert bessel_i0(x) == pytest.approx(i0_series(x, 200), rel=1e-10)


def test_scaled_bessels_against_scipy_across_cutoff():
    x = np.concatenate([np.linspace(0, 60, 6001), [SERIES_CUTOFF - 1e-9, SERIES_CUTOFF, 300.0, 1e4]])
    np.testing.assert_allclose(bessel_i0e(x), special.i0e(x), rtol=1e-10)
    np.testing.assert_allclose(bessel_i1e(x[1:]), special.i1e(x[1:]), rtol=1e-10)


def test_i0_large_argument_does_not_overflow_scaled():
    assert np.isfinite(bessel_i0e(5000.0))
    assert bessel_i0e(5000.0) == pytest.approx(1 / math.sqrt(2 * math.pi * 5000), rel=1e-4)


def test_i0_negative_rejected():
    with pytest.raises(DomainError):
        bessel_i0(-0.1)
