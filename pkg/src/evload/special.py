"""Gaussian tail function and modified Bessel functions of the first kind.

The Bessel routines use the ascending power series below ``x = 15`` and the
large-argument asymptotic expansion above it. The ``*e`` variants return the
exponentially scaled value ``I_n(x) * exp(-x)``, which stays finite for any
argument and is what the Rician density needs.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import special as _sp

from .errors import DomainError

SERIES_CUTOFF = 15.0
_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def q_function(x):
    """Upper tail of the standard normal, ``Q(x) = P(Z > x)``.

    Evaluated as ``erfc(x / sqrt(2)) / 2``, which keeps full relative
    accuracy deep into the upper tail.
    """
    if np.ndim(x) == 0:
        return 0.5 * math.erfc(float(x) / _SQRT2)
    return 0.5 * _sp.erfc(np.asarray(x, dtype=float) / _SQRT2)


def normal_pdf(x):
    """Standard normal density."""
    x = np.asarray(x, dtype=float)
    out = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return float(out) if out.ndim == 0 else out


def normal_cdf(x):
    """``1 - Q(x)``, computed from the lower tail to avoid cancellation."""
    if np.ndim(x) == 0:
        return 0.5 * math.erfc(-float(x) / _SQRT2)
    return 0.5 * _sp.erfc(-np.asarray(x, dtype=float) / _SQRT2)


def _series_scaled(order: int, x: np.ndarray) -> np.ndarray:
    # sum_k (x/2)^(2k+n) / (k! (k+n)!), then times exp(-x)
    half = 0.5 * x
    q = half * half
    term = half**order / math.factorial(order)
    acc = term.copy()
    for k in range(1, 200):
        term = term * q / (k * (k + order))
        acc += term
        if np.all(term <= 1e-17 * acc):
            break
    return acc * np.exp(-x)


def _asymptotic_scaled(order: int, x: np.ndarray) -> np.ndarray:
    # I_n(x) e^-x ~ (2 pi x)^-1/2 * sum_k prod_j ((2j-1)^2 - 4n^2) / (8 j x)
    mu = 4.0 * order * order
    term = np.ones_like(x)
    acc = np.ones_like(x)
    active = np.ones(x.shape, dtype=bool)
    for k in range(1, 60):
        nxt = term * ((2 * k - 1) ** 2 - mu) / (8.0 * k * x)
        # stop each lane once the divergent tail starts to grow
        active &= np.abs(nxt) < np.abs(term)
        if not active.any():
            break
        term = np.where(active, nxt, term)
        acc = acc + np.where(active, nxt, 0.0)
        active &= np.abs(nxt) > 1e-17 * np.abs(acc)
    return acc / np.sqrt(2.0 * math.pi * x)


def _bessel_scaled(order: int, x) -> np.ndarray | float:
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise DomainError("Bessel I_n implemented for x >= 0 only")
    flat = np.atleast_1d(arr).astype(float)
    out = np.empty_like(flat)
    small = flat < SERIES_CUTOFF
    if small.any():
        out[small] = _series_scaled(order, flat[small])
    if (~small).any():
        out[~small] = _asymptotic_scaled(order, flat[~small])
    if arr.ndim == 0:
        return float(out[0])
    return out.reshape(arr.shape)


def bessel_i0e(x):
    """Exponentially scaled ``I0(x) * exp(-x)`` for ``x >= 0``."""
    return _bessel_scaled(0, x)


def bessel_i1e(x):
    """Exponentially scaled ``I1(x) * exp(-x)`` for ``x >= 0``."""
    return _bessel_scaled(1, x)


def bessel_i0(x):
    """Modified Bessel function of the first kind, order zero.

    Raises :class:`DomainError` for negative input. Overflows to ``inf``
    only where ``exp(x)`` itself does (``x > ~709``).
    """
    arr = np.asarray(x, dtype=float)
    with np.errstate(over="ignore"):
        out = np.asarray(bessel_i0e(arr)) * np.exp(arr)
    return float(out) if out.ndim == 0 else out
