import numpy as np
import pytest

from arrivaltime.fields import (
    Bohmian,
    BohmLike,
    bohmian_velocity,
    continuity_residual,
    current,
    delta_v,
    divergence_check,
    phase_gradient_fd,
    plane_bohmian_vx,
    plane_delta_vx,
    velocity,
)
from arrivaltime.verify import random_points
from arrivaltime.wavepacket import PacketParams, SpacePoint, density


@pytest.fixture
def pts(params):
    return random_points(params, 100, seed=7)


def test_on_axis_transverse_velocity_vanishes(params, rng):
    x, t = rng.normal(-3, 3, 50), rng.uniform(0, 20, 50)
    v = bohmian_velocity(params, SpacePoint(x, np.zeros(50), np.zeros(50), t))
    assert np.all(v.vy == 0) and np.all(v.vz == 0)


def test_initial_velocity_is_k(params, rng):
    x, y, z = rng.normal(0, 3, (3, 50))
    p = SpacePoint(x, y, z, np.zeros(50))
    v = bohmian_velocity(params, p)
    np.testing.assert_array_equal(v.vx, params.k)
    np.testing.assert_array_equal(v.vy, 0.0)
    fd = phase_gradient_fd(params, p)
    np.testing.assert_allclose(fd.vx, params.k, rtol=1e-8)


def test_plane_velocity_positive_example(params):
    assert bohmian_velocity(params, SpacePoint(0.0, 1.0, 1.0, 2.0)).vx > 0


def test_velocity_matches_phase_gradient(params, pts):
    v = np.stack(bohmian_velocity(params, pts))
    fd = np.stack(phase_gradient_fd(params, pts))
    rel = np.linalg.norm(v - fd, axis=0) / np.linalg.norm(v, axis=0)
    assert rel.max() < 1e-6


def test_velocity_matches_phase_gradient_non_unit_width():
    # the x-velocity formula with a != 1 is where simplified forms go wrong
    p = PacketParams(a=1.7, b=0.8, c=0.4, k=1.3, x1=3.0)
    pts = random_points(p, 100, seed=3)
    v = np.stack(bohmian_velocity(p, pts))
    fd = np.stack(phase_gradient_fd(p, pts))
    assert (np.linalg.norm(v - fd, axis=0) / np.linalg.norm(v, axis=0)).max() < 1e-6


def test_delta_v_zero_lambda(params, pts):
    dv = delta_v(params, pts, 0.0)
    for comp in dv:
        np.testing.assert_array_equal(comp, 0.0)


def test_delta_v_isotropic_plane_component_vanishes(rng):
    p = PacketParams(b=0.7, c=0.7)
    y, z, t = rng.normal(size=20), rng.normal(size=20), rng.uniform(0, 5, 20)
    dv = delta_v(p, SpacePoint(np.zeros(20), y, z, t), 3.0)
    np.testing.assert_allclose(dv.vx, 0.0, atol=1e-16)


def test_plane_formula_matches_cross_product(params):
    dv = delta_v(params, SpacePoint(0.0, 0.5, 0.5, 1.0), 1.0).vx
    be4, ga4 = params.b**4 + 1.0, params.c**4 + 1.0
    rho = density(params, SpacePoint(0.0, 0.5, 0.5, 1.0))
    by_hand = 2 * rho * (params.c**2 - params.b**2) * 0.25 * 1.0 / (be4 * ga4)
    assert float(dv) == pytest.approx(float(by_hand), rel=1e-10)
    assert float(plane_delta_vx(params, 0.5, 0.5, 1.0, 1.0)) == pytest.approx(float(dv), rel=1e-10)


def test_plane_sign_opposes_yz_when_c_below_b(params, rng):
    y, z, t = rng.normal(size=200), rng.normal(size=200), rng.uniform(0.1, 10, 200)
    dvx = delta_v(params, SpacePoint(np.zeros(200), y, z, t), 1.0).vx
    assert np.all(np.sign(dvx) == -np.sign(y * z))


def test_velocity_kinds(params, pts):
    vb = bohmian_velocity(params, pts)
    for a, b in zip(velocity(params, pts, Bohmian()), vb):
        np.testing.assert_array_equal(a, b)
    np.testing.assert_allclose(np.stack(delta_v(params, pts, 2e-3)), 2 * np.stack(delta_v(params, pts, 1e-3)), rtol=1e-14)
    # BohmLike converges to Bohmian linearly as lambda -> 0
    gaps = [np.max(np.abs(np.stack(velocity(params, pts, BohmLike(lam))) - np.stack(vb))) for lam in (1e-2, 1e-3, 1e-4)]
    assert gaps[0] / gaps[1] == pytest.approx(10, rel=1e-3)
    assert gaps[1] / gaps[2] == pytest.approx(10, rel=1e-3)


def test_large_lambda_reverses_plane_velocity(params, threshold):
    from arrivaltime.analysis import max_abs_delta_vx

    lam = 2 * threshold.lambda_crit
    ext = max_abs_delta_vx(params, threshold.t_worst, lam)
    y, z = ext.location
    assert y * z > 0
    assert velocity(params, SpacePoint(0.0, y, z, threshold.t_worst), BohmLike(lam)).vx < 0


def test_bohmlike_rejects_non_positive():
    with pytest.raises(ValueError):
        BohmLike(0.0)
    with pytest.raises(ValueError):
        BohmLike(-1.0)


def test_customary_current_positive_on_plane(params):
    axis = np.linspace(-8, 8, 81)
    Y, Z = np.meshgrid(axis, axis)
    for t in np.linspace(0, 20, 41):
        j = current(params, SpacePoint(np.zeros_like(Y), Y, Z, np.full_like(Y, t)), Bohmian()).vx
        assert np.all(j[density(params, SpacePoint(0 * Y, Y, Z, t + 0 * Y)) > 0] > 0)
    assert np.all(plane_bohmian_vx(params, np.linspace(0, 1e3, 1001)) > 0)


def test_currents_equal_without_perturbation(params, pts):
    jc = current(params, pts, Bohmian())
    jl = current(params, pts, BohmLike(1e-300))
    for a, b in zip(jc, jl):
        np.testing.assert_allclose(a, b, rtol=1e-15)


@pytest.mark.parametrize("kind", [Bohmian(), BohmLike(1.0), BohmLike(1315.0)], ids=["J_c", "J_l-1", "J_l-crit"])
def test_continuity(params, pts, kind):
    res, scale = continuity_residual(params, pts, kind)
    assert np.max(np.abs(res) / scale) < 1e-6


def test_continuity_at_initial_time(params, rng):
    n = 30
    p = SpacePoint(rng.normal(-5, 1, n), rng.normal(0, 1, n), rng.normal(0, 0.5, n), np.zeros(n))
    res, scale = continuity_residual(params, p, BohmLike(10.0))
    assert np.max(np.abs(res) / scale) < 1e-6


def test_divergence_free_perturbation(params, pts):
    res, scale = divergence_check(params, pts, 1.0)
    assert np.max(np.abs(res) / scale) < 1e-6


def test_divergence_zero_lambda_exact(params, pts):
    res, _ = divergence_check(params, pts, 0.0)
    np.testing.assert_array_equal(res, 0.0)


def test_divergence_on_axis(params, rng):
    n = 20
    p = SpacePoint(rng.normal(-3, 2, n), np.zeros(n), np.zeros(n), rng.uniform(0.5, 10, n))
    res, scale = divergence_check(params, p, 1.0)
    assert np.max(np.abs(res) / scale) < 1e-6
