"""Autonomous demand response by iterated best responses.

Each user picks the EV schedule ``l`` with the smallest inner product
``<l, others>``, where ``others`` is the user's own inflexible load plus the
total load of every other user. The feasible set is the charging window of
the session: energy ``sum(l) * dt == E``, ``0 <= l <= cap`` (or
``-cap <= l <= cap`` with V2G), zero outside the window. ``cap`` is
``p_max`` scaled by how much of each slot the window covers.

The aggregator loop sweeps users in a fixed order (Gauss-Seidel by default),
each answering the latest aggregate, until a sweep leaves the aggregate
essentially unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import DemandProfile, TimeGrid, energy, par, total
from .errors import ConfigError, GridMismatchError, InfeasibleError
from .montecarlo import EvSession, realize_demand

ENERGY_TOL = 1e-9
_MOVE_EPS = 1e-15


@dataclass(frozen=True)
class DrConfig:
    v2g_enabled: bool = False
    max_iterations: int = 50
    convergence_eps_kw: float | None = None
    update_order: tuple[int, ...] | None = None
    scheme: str = "gauss_seidel"

    def __post_init__(self):
        if not self.max_iterations >= 1:
            raise ConfigError(f"dr.max_iterations must be >= 1, got {self.max_iterations}")
        if self.convergence_eps_kw is not None and not self.convergence_eps_kw > 0:
            raise ConfigError(f"dr.convergence_eps_kw must be > 0, got {self.convergence_eps_kw}")
        if self.scheme not in ("gauss_seidel", "jacobi"):
            raise ConfigError(f"dr.scheme must be gauss_seidel or jacobi, got {self.scheme!r}")


@dataclass(frozen=True)
class SweepRecord:
    iteration: int
    max_change_kw: float
    peak_kw: float
    par: float
    ev_energy_kwh: float
    updates: int


@dataclass(frozen=True, eq=False)
class DrOutcome:
    schedules: list[DemandProfile]
    aggregate: DemandProfile
    iterations_used: int
    converged: bool
    par_before: float
    par_after: float
    peak_before_kw: float
    peak_after_kw: float
    trace: list[SweepRecord] = field(default_factory=list)

    def summary(self) -> dict[str, object]:
        return {
            "iterations": self.iterations_used,
            "converged": self.converged,
            "par_before": self.par_before,
            "par_after": self.par_after,
            "peak_before_kw": self.peak_before_kw,
            "peak_after_kw": self.peak_after_kw,
        }


def window_caps(session: EvSession, grid: TimeGrid) -> np.ndarray:
    """Per-slot power limit (kW): ``p_max`` times the covered fraction of the slot."""
    if session.window_hours > grid.horizon_hours + 1e-9:
        raise InfeasibleError(
            f"charging window of {session.window_hours:.3f} h exceeds the "
            f"{grid.horizon_hours} h horizon"
        )
    occ = grid.occupancy(session.arrival, session.window_hours)
    return session.p_max_kw * occ / grid.resolution_hours


def _chronological_rank(session: EvSession, grid: TimeGrid) -> np.ndarray:
    # slot end measured from the arrival instant, modulo the horizon
    h = grid.horizon_hours
    ends = grid.edges[1:]
    rel = np.mod(ends - np.mod(session.arrival, h), h)
    return np.where(rel <= 0, h, rel)


def uncoordinated_schedule(session: EvSession, power_kw: float, grid: TimeGrid) -> DemandProfile:
    """Charge at ``power_kw`` from plug-in until the energy need is met."""
    return realize_demand(session, power_kw, grid)


def objective(schedule: DemandProfile | np.ndarray, others_load: DemandProfile | np.ndarray) -> float:
    s = schedule.values if isinstance(schedule, DemandProfile) else schedule
    o = others_load.values if isinstance(others_load, DemandProfile) else others_load
    return float(np.dot(s, o))


def _greedy(cost, caps, rank, need_kwh, dt, v2g):
    window = np.flatnonzero(caps > 0)
    if need_kwh > caps.sum() * dt * (1 + 1e-12) + 1e-12:
        raise InfeasibleError(
            f"{need_kwh:.6g} kWh does not fit in the window capacity {caps.sum() * dt:.6g} kWh"
        )
    order = window[np.lexsort((rank[window], cost[window]))]
    sched = np.zeros_like(cost)
    remaining = need_kwh
    for k in order:
        if remaining <= 0:
            break
        take = min(caps[k] * dt, remaining)
        sched[k] = take / dt
        remaining -= take
    if not v2g:
        return sched
    # exchange charge in cheap slots against discharge in expensive ones
    i, j = 0, len(order) - 1
    while i < j:
        lo, hi = order[i], order[j]
        if not cost[lo] < cost[hi]:
            break
        up = caps[lo] - sched[lo]
        if up <= _MOVE_EPS:
            i += 1
            continue
        down = sched[hi] + caps[hi]
        if down <= _MOVE_EPS:
            j -= 1
            continue
        move = min(up, down)
        sched[lo] += move
        sched[hi] -= move
    return sched


def best_response(
    session: EvSession, others_load: DemandProfile, v2g: bool, grid: TimeGrid
) -> DemandProfile:
    """Feasible schedule minimizing ``<schedule, others_load>`` exactly.

    Ties between equally loaded slots go to the slot that comes first after
    plug-in.
    """
    if others_load.grid != grid:
        raise GridMismatchError("others_load is on a different grid")
    caps = window_caps(session, grid)
    rank = _chronological_rank(session, grid)
    sched = _greedy(
        np.asarray(others_load.values, dtype=float), caps, rank,
        session.energy_kwh, grid.resolution_hours, v2g,
    )
    return DemandProfile(grid, sched)


def feasibility_violations(
    schedule: DemandProfile, session: EvSession, grid: TimeGrid, v2g: bool,
    energy_tol: float = ENERGY_TOL,
) -> list[str]:
    """Empty list when ``schedule`` meets the energy, box and window constraints."""
    caps = window_caps(session, grid)
    v = schedule.values
    out = []
    delivered = energy(schedule)
    if abs(delivered - session.energy_kwh) > energy_tol:
        out.append(f"energy {delivered:.12g} != {session.energy_kwh:.12g} kWh")
    lower = -caps if v2g else np.zeros_like(caps)
    slack = 1e-12 * max(1.0, session.p_max_kw)
    if np.any(v > caps + slack):
        out.append(f"exceeds power cap in slots {np.flatnonzero(v > caps + slack).tolist()}")
    if np.any(v < lower - slack):
        out.append(f"below lower bound in slots {np.flatnonzero(v < lower - slack).tolist()}")
    outside = (caps == 0) & (v != 0)
    if np.any(outside):
        out.append(f"nonzero outside window in slots {np.flatnonzero(outside).tolist()}")
    return out


def run_dr(
    sessions: Sequence[EvSession],
    base_loads: Sequence[DemandProfile],
    charger_power: float,
    cfg: DrConfig,
    grid: TimeGrid,
) -> DrOutcome:
    """Iterate best responses from the uncoordinated start until the aggregate settles."""
    n = len(sessions)
    if n != len(base_loads):
        raise ConfigError(f"{n} sessions but {len(base_loads)} base loads")
    if n == 0:
        raise ConfigError("run_dr needs at least one user")
    order = list(range(n)) if cfg.update_order is None else list(cfg.update_order)
    if sorted(order) != list(range(n)):
        raise ConfigError("dr.update_order must be a permutation of the user indices")

    base_total = total(base_loads, grid).values
    caps = [window_caps(s, grid) for s in sessions]
    ranks = [_chronological_rank(s, grid) for s in sessions]
    ev = [uncoordinated_schedule(s, charger_power, grid).values.copy() for s in sessions]
    for s, c, e in zip(sessions, caps, ev):
        if np.any(e > c + 1e-12 * max(1.0, s.p_max_kw)):
            raise InfeasibleError("uncoordinated charging exceeds the session power cap")

    agg = base_total + np.sum(ev, axis=0)
    before = DemandProfile(grid, agg)
    eps = cfg.convergence_eps_kw or 1e-3 * float(np.mean(agg))
    dt = grid.resolution_hours

    def respond(k, load):
        others = load - ev[k]
        new = _greedy(others, caps[k], ranks[k], sessions[k].energy_kwh, dt, cfg.v2g_enabled)
        old_obj = float(np.dot(ev[k], others))
        new_obj = float(np.dot(new, others))
        # keep the current schedule unless strictly better; stops tie flip-flops
        if new_obj < old_obj - 1e-12 * (1.0 + abs(old_obj)):
            return new
        return None

    trace: list[SweepRecord] = []
    converged = False
    it = 0
    for it in range(1, cfg.max_iterations + 1):
        prev = agg.copy()
        updates = 0
        if cfg.scheme == "gauss_seidel":
            for k in order:
                new = respond(k, agg)
                if new is not None:
                    agg = agg - ev[k] + new
                    ev[k] = new
                    updates += 1
        else:
            proposals = [respond(k, prev) for k in order]
            for k, new in zip(order, proposals):
                if new is not None:
                    ev[k] = new
                    updates += 1
        agg = base_total + np.sum(ev, axis=0)
        change = float(np.max(np.abs(agg - prev)))
        cur = DemandProfile(grid, agg)
        trace.append(SweepRecord(it, change, cur.peak, par(cur),
                                 float(np.sum(ev) * dt), updates))
        if change < eps:
            converged = True
            break

    schedules = [DemandProfile(grid, e) for e in ev]
    aggregate = DemandProfile(grid, base_total + np.sum(ev, axis=0))
    return DrOutcome(
        schedules=schedules,
        aggregate=aggregate,
        iterations_used=it,
        converged=converged,
        par_before=par(before),
        par_after=par(aggregate),
        peak_before_kw=before.peak,
        peak_after_kw=aggregate.peak,
        trace=trace,
    )


def valley_capacity(baseline: DemandProfile, sessions: Sequence[EvSession], grid: TimeGrid) -> float:
    """Energy (kWh) that fits under the baseline peak within the union of charging windows."""
    covered = np.zeros(grid.slot_count, dtype=bool)
    for s in sessions:
        covered |= grid.occupancy(s.arrival, min(s.window_hours, grid.horizon_hours)) > 0
    gap = np.maximum(0.0, baseline.peak - baseline.values)
    return float(np.sum(gap[covered]) * grid.resolution_hours)
