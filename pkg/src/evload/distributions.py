"""Arrival, charging-time and departure laws.

Five families are supported: :class:`Gaussian`, :class:`Uniform`,
:class:`Exponential`, :class:`TruncatedGaussian` (a Gaussian conditioned on
``x >= 0``; ``mu``/``sigma`` are the parent's parameters) and
:class:`Rician`. All are frozen dataclasses with vectorized ``pdf``/``cdf``,
``sample``, ``quantile`` and analytic ``moments``.

Random streams are plain :class:`numpy.random.Generator` objects; use
:func:`stream` to derive reproducible substreams from a master seed.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, fields
from typing import ClassVar, Union

import numpy as np
from scipy import optimize
from scipy.special import ndtri

from .errors import ConfigError, InfeasibleError, NumericalError, SamplingError
from .special import bessel_i0e, bessel_i1e, normal_cdf, normal_pdf, q_function

MAX_REJECTION_ATTEMPTS = 10**6
MIN_ACCEPTANCE_RATE = 1e-4

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(12)


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for the substream ``(seed, *key)``.

    The same ``(seed, key)`` always yields the same sequence, regardless of
    which other substreams were created before it.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def _out(x: np.ndarray):
    return float(x) if np.ndim(x) == 0 else x


class Distribution(ABC):
    family: ClassVar[str]

    @abstractmethod
    def pdf(self, x): ...

    @abstractmethod
    def cdf(self, x): ...

    @abstractmethod
    def sample(self, rng: np.random.Generator, size=None): ...

    @abstractmethod
    def moments(self) -> tuple[float, float]: ...

    @abstractmethod
    def quantile(self, p: float) -> float: ...

    @property
    def support(self) -> tuple[float, float]:
        return (0.0, math.inf)

    @property
    def mean(self) -> float:
        return self.moments()[0]

    @property
    def variance(self) -> float:
        return self.moments()[1]

    def params(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


@dataclass(frozen=True)
class Gaussian(Distribution):
    mu: float
    sigma: float
    family: ClassVar[str] = "gaussian"

    def __post_init__(self):
        _require(math.isfinite(self.mu), f"gaussian mu must be finite, got {self.mu}")
        _require(self.sigma > 0 and math.isfinite(self.sigma), f"gaussian sigma must be > 0, got {self.sigma}")

    @property
    def support(self):
        return (-math.inf, math.inf)

    def pdf(self, x):
        z = (np.asarray(x, dtype=float) - self.mu) / self.sigma
        return _out(normal_pdf(z) / self.sigma)

    def cdf(self, x):
        z = (np.asarray(x, dtype=float) - self.mu) / self.sigma
        return _out(1.0 - np.asarray(q_function(z)))

    def sample(self, rng, size=None):
        return rng.normal(self.mu, self.sigma, size)

    def moments(self):
        return (self.mu, self.sigma**2)

    def quantile(self, p):
        return float(self.mu + self.sigma * ndtri(p))


@dataclass(frozen=True)
class Uniform(Distribution):
    """Uniform on ``[c, d)`` with ``0 <= c < d``."""

    c: float
    d: float
    family: ClassVar[str] = "uniform"

    def __post_init__(self):
        _require(
            0 <= self.c < self.d and math.isfinite(self.d),
            f"uniform needs 0 <= c < d, got c={self.c}, d={self.d}",
        )

    @property
    def support(self):
        return (self.c, self.d)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return _out(np.where((x >= self.c) & (x < self.d), 1.0 / (self.d - self.c), 0.0))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return _out(np.clip((x - self.c) / (self.d - self.c), 0.0, 1.0))

    def sample(self, rng, size=None):
        return rng.uniform(self.c, self.d, size)

    def moments(self):
        return ((self.c + self.d) / 2.0, (self.d - self.c) ** 2 / 12.0)

    def quantile(self, p):
        return self.c + p * (self.d - self.c)


@dataclass(frozen=True)
class Exponential(Distribution):
    lam: float
    family: ClassVar[str] = "exponential"

    def __post_init__(self):
        _require(self.lam > 0 and math.isfinite(self.lam), f"exponential lambda must be > 0, got {self.lam}")

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(over="ignore"):
            return _out(np.where(x >= 0, self.lam * np.exp(-self.lam * np.maximum(x, 0.0)), 0.0))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return _out(np.where(x > 0, -np.expm1(-self.lam * np.maximum(x, 0.0)), 0.0))

    def sample(self, rng, size=None):
        return rng.exponential(1.0 / self.lam, size)

    def moments(self):
        return (1.0 / self.lam, 1.0 / self.lam**2)

    def quantile(self, p):
        return float(-math.log1p(-p) / self.lam)


def _rejection_sample(draw, accept, rng, size):
    """Accept-reject with the package-wide attempt budget.

    ``draw(rng, n)`` proposes ``n`` values, ``accept(values)`` masks them.
    """
    n = 1 if size is None else int(np.prod(size))
    out = np.empty(n)
    filled = 0
    attempts = 0
    batch = max(n, 16)
    while filled < n:
        proposal = draw(rng, batch)
        ok = proposal[accept(proposal)]
        attempts += batch
        take = min(len(ok), n - filled)
        out[filled:filled + take] = ok[:take]
        filled += take
        rate = filled / attempts
        if attempts >= MAX_REJECTION_ATTEMPTS and (
            rate < MIN_ACCEPTANCE_RATE or attempts >= MAX_REJECTION_ATTEMPTS * n
        ):
            raise SamplingError(
                f"accept-reject gave up after {attempts} attempts (acceptance {rate:.2e})"
            )
        if filled < n:
            batch = int(min(MAX_REJECTION_ATTEMPTS, max(16, 1.2 * (n - filled) / max(rate, 1e-3))))
    return float(out[0]) if size is None else out.reshape(size)


@dataclass(frozen=True)
class TruncatedGaussian(Distribution):
    """Gaussian ``N(mu, sigma^2)`` restricted to ``[0, inf)`` and renormalized."""

    mu: float
    sigma: float
    family: ClassVar[str] = "truncated_gaussian"

    def __post_init__(self):
        _require(math.isfinite(self.mu), f"truncated_gaussian mu must be finite, got {self.mu}")
        _require(self.sigma > 0 and math.isfinite(self.sigma), f"truncated_gaussian sigma must be > 0, got {self.sigma}")
        _require(q_function(-self.mu / self.sigma) > 1e-300, "truncated_gaussian has no mass on [0, inf)")

    @property
    def _mass(self) -> float:
        return q_function(-self.mu / self.sigma)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        dens = normal_pdf((x - self.mu) / self.sigma) / (self.sigma * self._mass)
        return _out(np.where(x >= 0, dens, 0.0))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        alpha = -self.mu / self.sigma
        # difference of upper tails is accurate on both sides of the mean
        upper = (q_function(alpha) - np.asarray(q_function((x - self.mu) / self.sigma))) / self._mass
        return _out(np.where(x > 0, np.clip(upper, 0.0, 1.0), 0.0))

    def sample(self, rng, size=None):
        return _rejection_sample(
            lambda r, n: r.normal(self.mu, self.sigma, n), lambda v: v >= 0, rng, size
        )

    def moments(self):
        alpha = -self.mu / self.sigma
        lam = normal_pdf(alpha) / self._mass
        mean = self.mu + self.sigma * lam
        var = self.sigma**2 * (1.0 + alpha * lam - lam * lam)
        return (float(mean), float(var))

    def quantile(self, p):
        alpha = -self.mu / self.sigma
        lo = normal_cdf(alpha)
        return float(max(0.0, self.mu + self.sigma * ndtri(lo + p * (1.0 - lo))))


@dataclass(frozen=True)
class Rician(Distribution):
    """Rice law with noncentrality ``nu`` and scale ``sigma``.

    Density ``x / s^2 * exp(-(x^2 + nu^2) / (2 s^2)) * I0(x nu / s^2)`` for
    ``x >= 0``, evaluated through the scaled Bessel function so that large
    ``x * nu / s^2`` never overflows. The cdf is integrated numerically.
    """

    nu: float
    sigma: float
    family: ClassVar[str] = "rician"

    def __post_init__(self):
        _require(self.nu >= 0 and math.isfinite(self.nu), f"rician nu must be >= 0, got {self.nu}")
        _require(self.sigma > 0 and math.isfinite(self.sigma), f"rician sigma must be > 0, got {self.sigma}")

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        xp = np.maximum(x, 0.0)
        s2 = self.sigma**2
        dens = xp / s2 * np.exp(-((xp - self.nu) ** 2) / (2 * s2)) * bessel_i0e(xp * self.nu / s2)
        return _out(np.where(x >= 0, dens, 0.0))

    @property
    def _upper(self) -> float:
        # beyond this point the survival function is below 1e-300
        return self.nu + 40.0 * self.sigma

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        flat = np.clip(np.atleast_1d(x).ravel(), 0.0, self._upper)
        # composite Gauss-Legendre on panels no wider than sigma/4, with every
        # query point a panel boundary, then a running sum
        panel = self.sigma / 4.0
        top = float(flat.max()) if flat.size else 0.0
        breaks = np.union1d(np.append(np.arange(0.0, top, panel), top), flat)
        breaks = np.union1d(breaks, [0.0])
        a, b = breaks[:-1], breaks[1:]
        half = 0.5 * (b - a)
        pts = (0.5 * (a + b))[:, None] + half[:, None] * _GL_NODES
        pieces = (self.pdf(pts) * _GL_WEIGHTS).sum(axis=1) * half
        cum = np.concatenate([[0.0], np.cumsum(pieces)])
        res = np.minimum(cum[np.searchsorted(breaks, flat)], 1.0)
        res = np.where(np.atleast_1d(x).ravel() <= 0, 0.0, res)
        return _out(res.reshape(np.shape(x)) if np.ndim(x) else res[0])

    def sample(self, rng, size=None):
        z1 = rng.standard_normal(size)
        z2 = rng.standard_normal(size)
        return np.hypot(self.nu + self.sigma * z1, self.sigma * z2)

    def moments(self):
        u = self.nu**2 / (2 * self.sigma**2)
        # Laguerre L_{1/2}(-u) with the exp(-u/2) factor folded into the scaled Bessels
        lag = (1.0 + u) * bessel_i0e(u / 2) + u * bessel_i1e(u / 2)
        mean = self.sigma * math.sqrt(math.pi / 2) * lag
        var = 2 * self.sigma**2 + self.nu**2 - mean**2
        return (float(mean), float(var))

    def quantile(self, p):
        if p <= 0:
            return 0.0
        return float(optimize.brentq(lambda v: self.cdf(v) - p, 0.0, self._upper, xtol=1e-12))


DistributionSpec = Union[Gaussian, Uniform, Exponential, TruncatedGaussian, Rician]

FAMILIES: dict[str, type[Distribution]] = {
    cls.family: cls for cls in (Gaussian, Uniform, Exponential, TruncatedGaussian, Rician)
}


def family_of(name: str | type[Distribution]) -> type[Distribution]:
    if isinstance(name, type):
        return name
    key = name.strip().lower().replace("-", "_")
    aliases = {"normal": "gaussian", "truncated_normal": "truncated_gaussian", "rice": "rician"}
    key = aliases.get(key, key)
    if key not in FAMILIES:
        raise ConfigError(f"unknown distribution family {name!r}; choose from {sorted(FAMILIES)}")
    return FAMILIES[key]


# -- module-level convenience mirrors of the methods --------------------------

def pdf(spec: Distribution, x):
    return spec.pdf(x)


def cdf(spec: Distribution, x):
    return spec.cdf(x)


def sample(spec: Distribution, rng: np.random.Generator, size=None):
    return spec.sample(rng, size)


def moments(spec: Distribution) -> tuple[float, float]:
    return spec.moments()


# -- moment matching ---------------------------------------------------------

RAYLEIGH_MEAN_TO_STD = math.sqrt(math.pi / 2) / math.sqrt(2 - math.pi / 2)


def _solve_two_param(build, x0, target_mean, target_var):
    """Nelder-Mead on squared relative residuals, then a root polish."""

    def residuals(p):
        try:
            m, v = build(p).moments()
        except (ConfigError, FloatingPointError, ValueError):
            return np.array([1e6, 1e6])
        return np.array([m / target_mean - 1.0, v / target_var - 1.0])

    nm = optimize.minimize(
        lambda p: float(np.sum(residuals(p) ** 2)),
        x0,
        method="Nelder-Mead",
        options={"maxiter": 500, "xatol": 1e-10, "fatol": 1e-20},
    )
    best = nm.x
    polish = optimize.root(residuals, best, method="hybr", options={"xtol": 1e-14})
    if np.max(np.abs(residuals(polish.x))) < np.max(np.abs(residuals(best))):
        best = polish.x
    err = float(np.max(np.abs(residuals(best))))
    if err > 1e-8:
        raise NumericalError(
            f"moment matching stalled at relative error {err:.2e} "
            f"(target mean={target_mean}, variance={target_var})"
        )
    return build(best)


def match_moments(family, target_mean: float, target_variance: float | None = None) -> Distribution:
    """Parameters of ``family`` whose mean and variance equal the targets.

    Exponential has one parameter, so only the mean is matched there (the
    variance of the result is ``target_mean**2``). Raises
    :class:`InfeasibleError` when the family cannot reach the target.
    """
    cls = family_of(family)
    if not target_mean > 0:
        raise InfeasibleError(f"target mean must be > 0, got {target_mean}")
    if cls is Exponential:
        return Exponential(1.0 / target_mean)
    if target_variance is None or not target_variance > 0:
        raise InfeasibleError(f"target variance must be > 0, got {target_variance}")
    m, v = float(target_mean), float(target_variance)
    sd = math.sqrt(v)
    if cls is Gaussian:
        return Gaussian(m, sd)
    if cls is Uniform:
        half = math.sqrt(3.0 * v)
        if m - half < -1e-12 * m:
            raise InfeasibleError(
                f"uniform with mean {m} and variance {v} would need c = {m - half:.4g} < 0"
            )
        return Uniform(max(0.0, m - half), m + half)
    if cls is TruncatedGaussian:
        if sd >= m:
            # coefficient of variation of a Gaussian truncated at 0 is always < 1
            raise InfeasibleError(
                f"truncated_gaussian cannot reach std/mean = {sd / m:.4g} (must be < 1)"
            )
        return _solve_two_param(
            lambda p: TruncatedGaussian(float(p[0]), math.exp(p[1])), [m, math.log(sd)], m, v
        )
    if cls is Rician:
        if m / sd < RAYLEIGH_MEAN_TO_STD:
            raise InfeasibleError(
                f"rician needs mean/std >= {RAYLEIGH_MEAN_TO_STD:.4f}, got {m / sd:.4f}"
            )
        nu0 = math.sqrt(max(m * m - v, 0.0))
        return _solve_two_param(
            lambda p: Rician(float(abs(p[0])), math.exp(p[1])), [nu0, math.log(sd)], m, v
        )
    raise ConfigError(f"moment matching not available for {cls.family}")
