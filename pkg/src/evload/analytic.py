"""Expected uncoordinated charging demand of a single EV.

With arrival time ``t0`` and charging duration ``T`` independent, a vehicle
that charges at constant power ``a`` from plug-in draws, on average,

    E[x(t)] = a * (F_t0(t) - integral_0^inf F_t0(t - u) f_T(u) du)
            = a * P(t - T <= t0 <= t).

That expression is evaluated on a linear time axis wide enough to hold
essentially all of the process, then folded onto the daily horizon.
Profile values are point evaluations at slot midpoints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .core import DemandProfile, TimeGrid
from .distributions import Distribution, Gaussian, Uniform
from .errors import ConfigError, DomainError, GridMismatchError, NumericalError
from .special import normal_pdf, q_function

# arrival quantile 1e-9 is mu -/+ 6 sigma for a Gaussian
ARRIVAL_TAIL = 1e-9
# charging-time tail left off the extended axis / the inner integral
AXIS_TAIL = 1e-6
INTEGRAL_TAIL = 1e-10
QUAD_EPSABS = 1e-10


@dataclass(frozen=True)
class ChargerModel:
    """Constant-power charger with random arrival and charging duration."""

    power_kw: float
    arrival: Distribution
    charging_time: Distribution

    def __post_init__(self):
        if not (self.power_kw > 0 and math.isfinite(self.power_kw)):
            raise ConfigError(f"fleet.power_kw must be > 0, got {self.power_kw}")
        if self.charging_time.support[0] < 0:
            raise ConfigError(
                f"charging time needs nonnegative support, got {self.charging_time.family}"
            )

    def energy_kwh(self, duration: float) -> float:
        return self.power_kw * duration


@dataclass(frozen=True, eq=False)
class ExtendedProfile:
    """Profile on a linear time axis of slots ``[start + j*dt, start + (j+1)*dt)``.

    ``start`` is an integer number of slots from time zero.
    """

    start_hours: float
    resolution_hours: float
    values: np.ndarray

    @property
    def first_slot(self) -> int:
        return int(round(self.start_hours / self.resolution_hours))

    @property
    def midpoints(self) -> np.ndarray:
        return (self.first_slot + np.arange(len(self.values)) + 0.5) * self.resolution_hours

    @property
    def energy(self) -> float:
        return float(np.sum(self.values) * self.resolution_hours)


def _integration_range(dist: Distribution) -> tuple[float, float]:
    lo, hi = dist.support
    if math.isinf(hi):
        hi = dist.quantile(1.0 - INTEGRAL_TAIL)
    return max(lo, 0.0), hi


def _delayed_arrival_mass(model: ChargerModel, t: np.ndarray) -> np.ndarray:
    """``integral F_t0(t - u) f_T(u) du`` for every entry of ``t``."""
    lo, hi = _integration_range(model.charging_time)
    arrival, ct = model.arrival, model.charging_time

    def integrand(u):
        return np.asarray(arrival.cdf(t - u)) * ct.pdf(u)

    res, err = integrate.quad_vec(
        integrand, lo, hi, epsabs=QUAD_EPSABS, epsrel=1e-12, norm="max", limit=2000
    )
    if not err <= 100 * QUAD_EPSABS:
        raise NumericalError(
            f"quadrature over charging time [{lo:.4g}, {hi:.4g}] reached error {err:.2e}"
        )
    return res


def expected_value(model: ChargerModel, t) -> np.ndarray:
    """``E[x(t)]`` on the unwrapped time axis (vectorized over ``t``)."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    occ = np.asarray(model.arrival.cdf(t)) - _delayed_arrival_mass(model, t)
    return model.power_kw * np.clip(occ, 0.0, 1.0)


def extended_axis(model: ChargerModel, resolution_hours: float) -> tuple[int, int]:
    """First slot index and slot count covering the process on a linear axis."""
    lo = model.arrival.quantile(ARRIVAL_TAIL)
    hi = model.arrival.quantile(1.0 - ARRIVAL_TAIL) + model.charging_time.quantile(1.0 - AXIS_TAIL)
    k0 = math.floor(lo / resolution_hours)
    k1 = math.ceil(hi / resolution_hours)
    return k0, max(k1 - k0, 1)


def expected_profile_extended(model: ChargerModel, grid: TimeGrid) -> ExtendedProfile:
    dt = grid.resolution_hours
    k0, n = extended_axis(model, dt)
    t = (k0 + np.arange(n) + 0.5) * dt
    return ExtendedProfile(k0 * dt, dt, expected_value(model, t))


def wrap_mod24(extended: ExtendedProfile, grid: TimeGrid) -> DemandProfile:
    """Fold a linear-axis profile onto the (circular) horizon of ``grid``.

    Values at times congruent modulo the horizon are summed, so total energy
    is preserved exactly.
    """
    dt = grid.resolution_hours
    if abs(extended.resolution_hours - dt) > 1e-12 * dt:
        raise GridMismatchError(
            f"extended resolution {extended.resolution_hours} h != grid resolution {dt} h"
        )
    k = extended.start_hours / dt
    if abs(k - round(k)) > 1e-9:
        raise GridMismatchError(f"extended axis start {extended.start_hours} h is not slot-aligned")
    idx = (round(k) + np.arange(len(extended.values))) % grid.slot_count
    folded = np.bincount(idx, weights=extended.values, minlength=grid.slot_count)
    return DemandProfile(grid, folded)


def expected_profile(model: ChargerModel, grid: TimeGrid) -> DemandProfile:
    """Expected daily demand profile of one uncoordinated EV."""
    return wrap_mod24(expected_profile_extended(model, grid), grid)


# -- closed form for Gaussian arrival, uniform charging time ------------------

def uniform_closed_form(t, a: float, mu: float, sigma: float, c: float, d: float) -> np.ndarray:
    """Unwrapped ``E[x(t)]`` for ``t0 ~ N(mu, sigma^2)``, ``T ~ U[c, d)``."""
    if not 0 <= c < d:
        raise DomainError(f"need 0 <= c < d, got c={c}, d={d}")
    if not sigma > 0:
        raise DomainError(f"need sigma > 0, got {sigma}")
    t = np.asarray(t, dtype=float)
    z = (t - mu) / sigma
    cp = (t - c - mu) / sigma
    dp = (t - d - mu) / sigma
    bracket = cp * q_function(cp) - dp * q_function(dp) + normal_pdf(dp) - normal_pdf(cp) + dp - cp
    return a * (1.0 - q_function(z) + sigma / (d - c) * bracket)


def expected_profile_uniform_closed_form(
    a: float, mu: float, sigma: float, c: float, d: float, grid: TimeGrid
) -> DemandProfile:
    """Closed-form counterpart of :func:`expected_profile`, wrapped onto ``grid``."""
    h = grid.horizon_hours
    # the process lives in [mu - 12 sigma, mu + 12 sigma + d]
    m_lo = math.floor((mu - 12 * sigma) / h)
    m_hi = math.ceil((mu + 12 * sigma + d) / h)
    t = grid.midpoints
    vals = np.zeros(grid.slot_count)
    for m in range(m_lo, m_hi + 1):
        vals += uniform_closed_form(t + m * h, a, mu, sigma, c, d)
    return DemandProfile(grid, vals)


def model_for(a: float, mu: float, sigma: float, c: float, d: float) -> ChargerModel:
    return ChargerModel(a, Gaussian(mu, sigma), Uniform(c, d))


# -- time of the expected peak -----------------------------------------------

@dataclass(frozen=True)
class PeakTime:
    t_max: float
    value_kw: float
    residual: float
    tolerance: float
    degenerate: bool

    @property
    def satisfied(self) -> bool:
        return bool(not self.degenerate and abs(self.residual) <= self.tolerance)


def stationarity_residual(model: ChargerModel, t: float) -> float:
    """``f_t0(t) - (f_t0 * f_T)(t)``: the slope of the expected occupancy at ``t``."""
    lo, hi = _integration_range(model.charging_time)
    conv, _ = integrate.quad(
        lambda u: model.arrival.pdf(t - u) * model.charging_time.pdf(u),
        lo, hi, epsabs=1e-13, epsrel=1e-12, limit=500,
    )
    return float(model.arrival.pdf(t)) - conv


def peak_time(model: ChargerModel, grid: TimeGrid) -> PeakTime:
    """Time of maximum expected demand on the unwrapped axis.

    Grid argmax (earliest on ties) refined by a parabola through the three
    surrounding samples; the stationarity condition is then checked at the
    refined time. The tolerance is the residual a location error of half a
    slot would produce given the local curvature.
    """
    ext = expected_profile_extended(model, grid)
    y = ext.values / model.power_kw
    t = ext.midpoints
    dt = ext.resolution_hours
    i = int(np.argmax(y))
    top = np.flatnonzero(y >= y[i] - 1e-9)
    if i == 0 or i == len(y) - 1 or top[-1] - top[0] > 2:
        return PeakTime(float(t[i]), float(ext.values[i]), math.nan, 0.0, True)
    ym, y0, yp = y[i - 1], y[i], y[i + 1]
    curv = ym - 2 * y0 + yp
    shift = 0.5 * (ym - yp) / curv if curv < 0 else 0.0
    t_max = float(t[i] + shift * dt)
    curvature = abs(curv) / dt**2
    tol = float(max(curvature * dt / 2, 1e-9))
    res = stationarity_residual(model, t_max)
    return PeakTime(t_max, float(ext.values[i]), res, tol, False)


def check_energy(model: ChargerModel, grid: TimeGrid) -> tuple[float, float]:
    """(unwrapped energy, a * E[T]); handy for sanity checks."""
    ext = expected_profile_extended(model, grid)
    return ext.energy, model.power_kw * model.charging_time.mean

