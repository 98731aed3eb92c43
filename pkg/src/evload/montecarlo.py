"""Sampling of charging sessions and empirical demand profiles.

Substreams are keyed so results never depend on evaluation order:

* ``(seed, 0, user_index)``: the DR fleet session of one user;
* ``(seed, 1, chunk_index)``: a fixed-size chunk of the empirical
  expected-profile samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .analytic import ChargerModel
from .core import DemandProfile, TimeGrid
from .distributions import Distribution, stream
from .errors import ConfigError, InfeasibleError, SamplingError

DAY_HOURS = 24.0
SESSION_STREAM = 0
EMPIRICAL_STREAM = 1
EMPIRICAL_CHUNK = 10_000
MAX_SESSION_ATTEMPTS = 10**6
_BATCH = 64


@dataclass(frozen=True)
class EvSession:
    """One vehicle's stay: plugged in over ``[arrival, departure]``.

    ``departure`` is measured on the same axis as ``arrival`` and may exceed
    24 h when the stay crosses midnight.
    """

    arrival: float
    duration: float
    departure: float
    energy_kwh: float
    p_max_kw: float

    def __post_init__(self):
        if not self.duration > 0:
            raise InfeasibleError(f"session duration must be > 0, got {self.duration}")
        if not self.p_max_kw > 0:
            raise InfeasibleError(f"p_max must be > 0, got {self.p_max_kw}")
        if self.departure < self.arrival + self.duration - 1e-9:
            raise InfeasibleError(
                f"departure {self.departure:.4f} h precedes arrival + duration "
                f"{self.arrival + self.duration:.4f} h"
            )
        if self.energy_kwh > self.p_max_kw * self.window_hours * (1 + 1e-12) + 1e-12:
            raise InfeasibleError(
                f"{self.energy_kwh:.4f} kWh cannot be delivered at {self.p_max_kw} kW "
                f"within {self.window_hours:.4f} h"
            )

    @property
    def window_hours(self) -> float:
        return self.departure - self.arrival

    @classmethod
    def from_model(cls, model: ChargerModel, arrival, duration, departure, p_max_kw=None):
        p_max = model.power_kw if p_max_kw is None else p_max_kw
        return cls(float(arrival), float(duration), float(departure),
                   model.energy_kwh(float(duration)), float(p_max))


@dataclass(frozen=True)
class FleetSpec:
    n_users: int
    charger: ChargerModel
    departure: Distribution
    seed: int = 0
    p_max_kw: float | None = field(default=None)

    def __post_init__(self):
        if not (isinstance(self.n_users, (int, np.integer)) and self.n_users >= 1):
            raise ConfigError(f"fleet.n_users must be a positive integer, got {self.n_users}")
        if self.p_max_kw is not None and self.p_max_kw < self.charger.power_kw:
            raise ConfigError(
                f"fleet.p_max_kw={self.p_max_kw} is below the charger power {self.charger.power_kw}"
            )

    @property
    def p_max(self) -> float:
        return self.charger.power_kw if self.p_max_kw is None else float(self.p_max_kw)


def next_departure(arrival: float, departure_clock: float) -> float:
    """Map a departure clock time to the first occurrence not before ``arrival``."""
    if departure_clock >= arrival:
        return departure_clock
    return departure_clock + DAY_HOURS * math.ceil((arrival - departure_clock) / DAY_HOURS)


def sample_session(
    fleet: FleetSpec, user_index: int, rng: np.random.Generator | None = None
) -> EvSession:
    """Draw ``(arrival, duration, departure)`` until the stay can hold the charge."""
    if rng is None:
        rng = stream(fleet.seed, SESSION_STREAM, user_index)
    model = fleet.charger
    attempts = 0
    while attempts < MAX_SESSION_ATTEMPTS:
        t0 = np.asarray(model.arrival.sample(rng, _BATCH))
        dur = np.asarray(model.charging_time.sample(rng, _BATCH))
        dep = np.asarray(fleet.departure.sample(rng, _BATCH))
        behind = dep < t0
        dep = np.where(behind, dep + DAY_HOURS * np.ceil((t0 - dep) / DAY_HOURS), dep)
        ok = np.flatnonzero((dur > 0) & (dep >= t0 + dur))
        attempts += _BATCH
        if ok.size:
            j = ok[0]
            return EvSession.from_model(model, t0[j], dur[j], dep[j], fleet.p_max)
    raise SamplingError(
        f"no feasible session for user {user_index} in {attempts} attempts; "
        "check the arrival/charging/departure distributions"
    )


def sample_fleet(fleet: FleetSpec) -> list[EvSession]:
    return [sample_session(fleet, n) for n in range(fleet.n_users)]


def realize_demand(session: EvSession, power_kw: float, grid: TimeGrid) -> DemandProfile:
    """Constant ``power_kw`` over ``[arrival, arrival + duration)``, wrapped onto ``grid``.

    Slots that are only partly covered receive the time-weighted share.
    """
    occ = grid.occupancy(session.arrival, session.duration)
    return DemandProfile(grid, power_kw * occ / grid.resolution_hours)


def realize_many(arrivals, durations, power_kw: float, grid: TimeGrid) -> np.ndarray:
    """Rows of :func:`realize_demand` values for many ``(arrival, duration)`` pairs."""
    return power_kw * grid.occupancy(arrivals, durations) / grid.resolution_hours


def empirical_expected_profile(
    fleet: FleetSpec, n_samples: int, grid: TimeGrid
) -> tuple[DemandProfile, np.ndarray]:
    """Mean of ``n_samples`` realizations and its per-slot standard error.

    Draws arrival and duration only (no departure rejection), so the result
    estimates the same quantity as :func:`evload.analytic.expected_profile`.
    The standard error is NaN when ``n_samples == 1``.
    """
    if n_samples < 1:
        raise ConfigError(f"montecarlo.samples must be >= 1, got {n_samples}")
    model = fleet.charger
    k = grid.slot_count
    mean = np.zeros(k)
    m2 = np.zeros(k)
    count = 0
    for chunk, lo in enumerate(range(0, n_samples, EMPIRICAL_CHUNK)):
        m = min(EMPIRICAL_CHUNK, n_samples - lo)
        rng = stream(fleet.seed, EMPIRICAL_STREAM, chunk)
        t0 = model.arrival.sample(rng, m)
        dur = model.charging_time.sample(rng, m)
        rows = realize_many(t0, dur, model.power_kw, grid)
        c_mean = rows.mean(axis=0)
        c_m2 = ((rows - c_mean) ** 2).sum(axis=0)
        # pairwise merge of running mean / sum of squared deviations
        delta = c_mean - mean
        total = count + m
        mean = mean + delta * (m / total)
        m2 = m2 + c_m2 + delta**2 * (count * m / total)
        count = total
    if count > 1:
        stderr = np.sqrt(m2 / (count - 1) / count)
    else:
        stderr = np.full(k, np.nan)
    return DemandProfile(grid, mean), stderr
