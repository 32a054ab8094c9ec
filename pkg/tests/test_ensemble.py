import dataclasses

import numpy as np
import pytest
from scipy import special

from arrivaltime.ensemble import (
    ArrivalCurves,
    IntegratorAbort,
    RunConfig,
    exact_mean_arrival,
    mean_arrival_time,
    run_ensemble,
    sample_initial,
    truncated_limit_mean,
)
from arrivaltime.fields import Bohmian
from arrivaltime.trajectories import IntegratorSettings
from arrivaltime.wavepacket import PacketParams, q_limit


def test_sample_moments(params):
    n = 100_000
    s = sample_initial(params, n, seed=1)
    assert abs(s.x.mean() + params.x1) < 4 * (params.a / np.sqrt(2)) / np.sqrt(n)
    assert s.y.var() == pytest.approx(params.b**2 / 2, rel=0.05)
    assert s.z.var() == pytest.approx(params.c**2 / 2, rel=0.05)
    assert np.all(s.t == 0)


def test_sample_fraction_in_plus():
    p = PacketParams(a=1.0, x1=1.0)
    n = 100_000
    s = sample_initial(p, n, seed=3)
    q0 = 0.5 * special.erfc(1.0)
    assert abs(np.mean(s.x >= 0) - q0) < 4 * np.sqrt(q0 * (1 - q0) / n)


def test_sample_reproducible(params):
    a = sample_initial(params, 10, seed=42)
    b = sample_initial(params, 10, seed=42)
    np.testing.assert_array_equal(a.x, b.x)
    with pytest.raises(ValueError):
        sample_initial(params, 0, seed=42)


def test_single_trajectory_deterministic(params):
    cfg = RunConfig(params, Bohmian(), n=1, seed=77, settings=IntegratorSettings(), n_points=11)
    a = run_ensemble(cfg, keep_records=True)
    b = run_ensemble(cfg, keep_records=True)
    assert a.records[0] == b.records[0]
    np.testing.assert_array_equal(a.p_emp, b.p_emp)


def test_point_mass_mean():
    t0 = 3.25
    curves = ArrivalCurves(
        t_grid=np.linspace(0, 10, 11), q_exact=np.zeros(11), q_emp=np.zeros(11),
        p_emp=(np.linspace(0, 10, 11) >= t0) * 0.7, se_q=np.zeros(11), se_p=np.zeros(11), n=10,
        arrival_times=np.full(7, t0), p_inf_emp=0.7, t_bar_emp=t0, t_bar_se=0.0, t_bar_exact=np.nan,
        never_arrive_emp=0.3, never_arrive_exact=np.nan, censoring_bound=0.0,
    )
    assert mean_arrival_time(curves)[0] == t0
    with pytest.raises(ValueError):
        mean_arrival_time(dataclasses.replace(curves, arrival_times=np.array([])))


def test_ballistic_limit_mean():
    p = PacketParams(k=10.0, x1=5.0)
    assert exact_mean_arrival(p, 8 * p.x1 / p.k) == pytest.approx(p.x1 / p.k, rel=0.1)


def test_truncated_mean_grows_with_horizon(params):
    # the tail of P_inf - Q decays like 1/t, so the literal integral keeps growing
    vals = [truncated_limit_mean(params, T) for T in (20.0, 200.0, 2000.0)]
    assert vals[0] < vals[1] < vals[2]
    assert exact_mean_arrival(params, 20.0) < vals[0]


def test_abort_on_failures(params):
    bad = IntegratorSettings(rel_tol=1e-300, abs_tol=1e-300, t_max=1.0)
    with pytest.raises(IntegratorAbort):
        run_ensemble(RunConfig(params, Bohmian(), n=3, seed=1, settings=bad, n_points=5))


def test_run_config_validation(params):
    with pytest.raises(ValueError):
        RunConfig(params, n=0)
    with pytest.raises(ValueError):
        RunConfig(params, n_points=1)


def check_invariants(c):
    assert np.all(np.diff(c.p_emp) >= 0)
    assert np.all(c.p_emp >= c.q_emp)
    assert np.all(c.p_emp >= np.maximum.accumulate(c.q_emp))
    for arr in (c.p_emp, c.q_emp, c.q_exact):
        assert np.all((arr >= 0) & (arr <= 1))


def test_invariants_bohmian(bohmian_run):
    check_invariants(bohmian_run)
    assert bohmian_run.n_leaving_events == 0
    assert bohmian_run.n_failed == 0


def test_invariants_large_lambda(large_lambda_run):
    check_invariants(large_lambda_run)


def test_bohmian_arrival_equals_occupancy(bohmian_run):
    # with no returns the first-arrival CDF and the occupancy coincide per trajectory
    np.testing.assert_array_equal(bohmian_run.p_emp, bohmian_run.q_emp)


def test_gap_bounded_below_by_returned(large_lambda_run):
    c = large_lambda_run
    if c.n_leaving_events == 0:
        pytest.skip("no returns observed at this ensemble size")
    assert np.max(c.p_emp - c.q_emp) >= 1.0 / c.n


def test_censoring_bound(params, bohmian_run):
    assert bohmian_run.never_arrive_exact == pytest.approx(1 - q_limit(params))
    assert bohmian_run.censoring_bound > 0
