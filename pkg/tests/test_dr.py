import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from evload.core import DemandProfile, TimeGrid, par
from evload.dr import (
    DrConfig, best_response, feasibility_violations, objective, run_dr,
    uncoordinated_schedule, valley_capacity, window_caps,
)
from evload.errors import ConfigError, GridMismatchError, InfeasibleError
from evload.montecarlo import EvSession

G3 = TimeGrid(3, 1)


def lp_vertex_oracle(cost, lo, hi, need):
    """Minimum of cost @ l with sum(l) == need, lo <= l <= hi, by vertex enumeration.

    An optimal vertex has at most one coordinate strictly inside its bounds.
    """
    n = len(cost)
    best = np.inf
    for free in range(n):
        others = [k for k in range(n) if k != free]
        for pick in itertools.product((0, 1), repeat=n - 1):
            l = np.zeros(n)
            for k, p in zip(others, pick):
                l[k] = hi[k] if p else lo[k]
            l[free] = need - l.sum()
            if lo[free] - 1e-12 <= l[free] <= hi[free] + 1e-12:
                best = min(best, float(cost @ l))
    return best


def test_example_greedy_fill():
    s = EvSession(0.0, 2.0, 3.0, 2.0, 1.0)
    r = best_response(s, DemandProfile(G3, [5.0, 1.0, 3.0]), False, G3)
    np.testing.assert_array_equal(r.values, [0, 1, 1])


def test_example_v2g_exchange():
    s = EvSession(0.0, 1.0, 3.0, 0.0, 1.0)
    load = DemandProfile(G3, [5.0, 1.0, 3.0])
    r = best_response(s, load, True, G3)
    np.testing.assert_array_equal(r.values, [-1, 1, 0])
    assert objective(r, load) == -4.0


def test_flat_load_fills_earliest_after_plug_in(hourly):
    s = EvSession(20.0, 2.0, 28.0, 2.0, 1.0)
    r = best_response(s, DemandProfile.constant(hourly, 1.0), False, hourly)
    np.testing.assert_array_equal(np.flatnonzero(r.values), [20, 21])
    # across midnight: the slot after plug-in wins over slot 0
    s = EvSession(23.0, 2.0, 27.0, 2.0, 1.0)
    r = best_response(s, DemandProfile.constant(hourly, 1.0), False, hourly)
    np.testing.assert_array_equal(np.flatnonzero(r.values), [0, 23])


@settings(max_examples=80, deadline=None)
@given(
    st.lists(st.integers(0, 20), min_size=6, max_size=6),
    st.integers(0, 5), st.integers(1, 6), st.floats(0.1, 1.0), st.booleans(),
)
def test_best_response_matches_lp_oracle(costs, start, width, fill, v2g):
    grid = TimeGrid(6, 1)
    width = min(width, 6)
    need = fill * width * 2.0
    s = EvSession(float(start), width * fill, float(start + width), need, 2.0)
    load = DemandProfile(grid, np.array(costs, float))
    r = best_response(s, load, v2g, grid)
    caps = window_caps(s, grid)
    assert feasibility_violations(r, s, grid, v2g) == []
    lo = -caps if v2g else np.zeros_like(caps)
    assert objective(r, load) == pytest.approx(
        lp_vertex_oracle(load.values, lo, caps, need), abs=1e-9)


def test_fractional_window_caps(hourly):
    s = EvSession(10.5, 1.0, 12.25, 1.5, 1.0)
    caps = window_caps(s, hourly)
    np.testing.assert_allclose(caps[[10, 11, 12]], [0.5, 1.0, 0.25])
    assert caps.sum() == pytest.approx(1.75)


def test_window_longer_than_horizon(hourly):
    with pytest.raises(InfeasibleError):
        window_caps(EvSession(0.0, 1.0, 30.0, 1.0, 1.0), hourly)


def test_best_response_rejects_other_grid(hourly):
    s = EvSession(0.0, 1.0, 3.0, 1.0, 1.0)
    with pytest.raises(GridMismatchError):
        best_response(s, DemandProfile.zeros(hourly), False, G3)


# -- run_dr --------------------------------------------------------------------

def base_loads(grid, n, seed=0):
    rng = np.random.default_rng(seed)
    shape = 0.5 + 2.0 * np.exp(-0.5 * ((grid.midpoints - 19.5) / 2.0) ** 2)
    return [DemandProfile(grid, shape * rng.uniform(0.9, 1.1)) for _ in range(n)]


def sessions(n, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        t0 = rng.uniform(16, 21)
        dur = rng.uniform(1, 5)
        out.append(EvSession(t0, dur, t0 + rng.uniform(dur + 1, 13), 3.0 * dur, 3.0))
    return out


def test_single_user_equals_best_response(hourly):
    s = sessions(1)
    b = base_loads(hourly, 1)
    out = run_dr(s, b, 3.0, DrConfig(), hourly)
    assert out.converged
    np.testing.assert_allclose(out.schedules[0].values, best_response(s[0], b[0], False, hourly).values)


def test_disjoint_windows_decouple(hourly):
    s = [EvSession(1.0, 2.0, 6.0, 6.0, 3.0), EvSession(12.0, 1.0, 15.0, 3.0, 3.0)]
    b = base_loads(hourly, 2)
    out = run_dr(s, b, 3.0, DrConfig(), hourly)
    assert out.converged and out.iterations_used <= 2
    for k in range(2):
        own = b[0] + b[1]
        np.testing.assert_allclose(out.schedules[k].values,
                                   best_response(s[k], own, False, hourly).values)


def brute_force_deviation(session, others, grid):
    """Best objective over schedules using whole p_max steps in the window."""
    caps = window_caps(session, grid)
    slots = np.flatnonzero(caps > 0)
    steps = int(round(session.energy_kwh / (session.p_max_kw * grid.resolution_hours)))
    best = np.inf
    for chosen in itertools.combinations(slots, steps):
        if np.all(caps[list(chosen)] >= session.p_max_kw - 1e-12):
            l = np.zeros(grid.slot_count)
            l[list(chosen)] = session.p_max_kw
            best = min(best, float(l @ others))
    return best


def test_three_user_equilibrium_has_no_profitable_deviation(hourly):
    s = [EvSession(18.0, 2.0, 26.0, 6.0, 3.0),
         EvSession(19.0, 3.0, 27.0, 9.0, 3.0),
         EvSession(20.0, 1.0, 30.0, 3.0, 3.0)]
    b = base_loads(hourly, 3)
    out = run_dr(s, b, 3.0, DrConfig(max_iterations=100), hourly)
    assert out.converged
    for k in range(3):
        others = out.aggregate.values - out.schedules[k].values
        mine = objective(out.schedules[k], others)
        assert mine <= brute_force_deviation(s[k], others, hourly) + 1e-9


@pytest.mark.parametrize("v2g", [False, True])
@pytest.mark.parametrize("scheme", ["gauss_seidel", "jacobi"])
def test_feasible_and_energy_conserving(hourly, v2g, scheme):
    s = sessions(30, seed=4)
    b = base_loads(hourly, 30, seed=4)
    out = run_dr(s, b, 3.0, DrConfig(v2g_enabled=v2g, scheme=scheme), hourly)
    for sched, sess in zip(out.schedules, s):
        assert feasibility_violations(sched, sess, hourly, v2g) == []
    want = sum(x.energy_kwh for x in s)
    for rec in out.trace:
        assert rec.ev_energy_kwh == pytest.approx(want, rel=1e-9)


def potential(agg):
    return float(agg.values @ agg.values)


def test_gauss_seidel_potential_never_increases(hourly):
    s = sessions(25, seed=2)
    b = base_loads(hourly, 25, seed=2)
    values = [potential(run_dr(s, b, 3.0, DrConfig(max_iterations=k), hourly).aggregate)
              for k in range(1, 8)]
    assert all(y <= x + 1e-9 for x, y in zip(values, values[1:]))


def test_dr_lowers_par_and_v2g_lowers_peak(hourly):
    s = sessions(40, seed=1)
    b = base_loads(hourly, 40, seed=1)
    plain = run_dr(s, b, 3.0, DrConfig(), hourly)
    v2g = run_dr(s, b, 3.0, DrConfig(v2g_enabled=True), hourly)
    assert plain.par_after <= plain.par_before
    assert v2g.peak_after_kw < plain.peak_after_kw
    assert plain.par_before == pytest.approx(
        par(sum((uncoordinated_schedule(x, 3.0, hourly) for x in s), start=sum(b[1:], start=b[0]))))


def test_update_order_and_config_validation(hourly):
    s = sessions(3)
    b = base_loads(hourly, 3)
    out = run_dr(s, b, 3.0, DrConfig(update_order=(2, 0, 1)), hourly)
    assert out.converged
    with pytest.raises(ConfigError):
        run_dr(s, b, 3.0, DrConfig(update_order=(0, 0, 1)), hourly)
    with pytest.raises(ConfigError):
        run_dr(s, b[:2], 3.0, DrConfig(), hourly)
    with pytest.raises(ConfigError):
        DrConfig(scheme="sor")
    with pytest.raises(ConfigError):
        DrConfig(max_iterations=0)


def test_iteration_cap_is_reported(hourly):
    s = sessions(30, seed=4)
    b = base_loads(hourly, 30, seed=4)
    out = run_dr(s, b, 3.0, DrConfig(max_iterations=1, convergence_eps_kw=1e-12), hourly)
    assert out.iterations_used == 1 and not out.converged


def test_valley_capacity(hourly):
    base = DemandProfile(hourly, np.r_[np.ones(12), 3 * np.ones(12)])
    s = [EvSession(0.0, 1.0, 6.0, 1.0, 1.0)]
    assert valley_capacity(base, s, hourly) == pytest.approx(12.0)
