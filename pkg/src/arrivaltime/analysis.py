"""Extremal analysis of the perturbed x-velocity on the arrival plane x = 0."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .fields import BohmLike, SpacePoint, plane_bohmian_vx, velocity
from .wavepacket import PI_32, PacketParams, moduli4


@dataclass(frozen=True)
class PlaneExtremum:
    t: float
    max_abs_dvx: float
    location: tuple[float, float]
    vbx_at_plane: float


@dataclass(frozen=True)
class LambdaThreshold:
    lambda_crit: float
    t_worst: float
    bracket: tuple[float, float]
    t_grid: np.ndarray
    ratio: np.ndarray


@dataclass(frozen=True)
class GridSpec:
    """Scan grid on the plane and in time. ``half_width=None`` picks a default from t_max."""

    n_plane: int = 201
    half_width: float | None = None
    n_times: int = 2001
    t_max: float | None = None

    def resolve(self, params: PacketParams) -> "GridSpec":
        t_max = self.t_max if self.t_max is not None else 4 * params.x1 / params.k
        half = self.half_width
        if half is None:
            _, be4, ga4 = moduli4(params, t_max)
            half = 5 * max(np.sqrt(be4), np.sqrt(ga4)) ** 0.5
        return GridSpec(self.n_plane, float(half), self.n_times, float(t_max))


def _require_anisotropic(params: PacketParams):
    if params.b == params.c:
        raise ValueError("b == c: delta_v vanishes on the plane and the threshold is undefined")


def extremal_points(params: PacketParams, t: float):
    """The four plane points where |delta_vx| peaks at time ``t``."""
    _, be4, ga4 = moduli4(params, t)
    ys = np.sqrt(be4) / (np.sqrt(2) * params.b)
    zs = np.sqrt(ga4) / (np.sqrt(2) * params.c)
    return [(sy * ys, sz * zs) for sy in (1, -1) for sz in (1, -1)]


def max_abs_delta_vx_value(params: PacketParams, t, lam: float = 1.0):
    """Closed-form peak of |delta_vx| over the plane; vectorised over ``t``."""
    a, b, c = params.a, params.b, params.c
    al4, be4, ga4 = moduli4(params, t)
    t = np.asarray(t, dtype=float)
    return (
        lam * a * abs(b * b - c * c) * t
        / (PI_32 * np.e * np.sqrt(al4) * be4 * ga4)
        * np.exp(-a * a * (params.x1 - params.k * t) ** 2 / al4)
    )


def max_abs_delta_vx(params: PacketParams, t: float, lam: float) -> PlaneExtremum:
    if t < 0:
        raise ValueError("time must be non-negative")
    if lam <= 0:
        raise ValueError("lambda must be positive")
    _require_anisotropic(params)
    # sign(c^2 - b^2) * YZ must be negative at the peak of the inward push
    pts = extremal_points(params, t)
    sign = np.sign(params.c**2 - params.b**2)
    loc = next(p for p in pts if sign * p[0] * p[1] < 0)
    return PlaneExtremum(
        t=float(t),
        max_abs_dvx=float(max_abs_delta_vx_value(params, t, lam)),
        location=(float(loc[0]), float(loc[1])),
        vbx_at_plane=float(plane_bohmian_vx(params, t)),
    )


def threshold_ratio(params: PacketParams, t):
    """Bohmian plane velocity over |delta_vx|_max per unit lambda (infinite at t = 0)."""
    with np.errstate(divide="ignore"):
        return plane_bohmian_vx(params, t) / max_abs_delta_vx_value(params, t, 1.0)


def lambda_critical(params: PacketParams, t_max: float | None = None, grid: GridSpec | None = None) -> LambdaThreshold:
    """Smallest lambda for which the Bohm-like x-velocity turns negative on the plane.

    The Bohmian plane velocity depends on t only, so the threshold is the
    minimum over t of :func:`threshold_ratio`: a dense scan followed by a
    bounded Brent refinement around the best scan point.
    """
    _require_anisotropic(params)
    grid = (grid or GridSpec()).resolve(params)
    if t_max is None:
        t_max = grid.t_max
    ts = np.linspace(0.0, t_max, grid.n_times)[1:]
    ratio = threshold_ratio(params, ts)
    if not np.any(np.isfinite(ratio)) or np.any(ratio <= 0):
        raise RuntimeError("threshold scan found no finite positive minimum")
    i = int(np.argmin(ratio))
    lo = ts[max(i - 1, 0)]
    hi = ts[min(i + 1, len(ts) - 1)]
    res = optimize.minimize_scalar(
        lambda s: float(threshold_ratio(params, s)), bounds=(lo, hi), method="bounded",
        options={"xatol": 1e-12 * max(1.0, hi)},
    )
    t_worst, lam_crit = float(res.x), float(res.fun)
    if ratio[i] < lam_crit:
        t_worst, lam_crit = float(ts[i]), float(ratio[i])
    # the ratio is smooth at its minimum, so a 1e-9 relative bracket is safe
    bracket = (lam_crit * (1 - 1e-9), lam_crit * (1 + 1e-9))
    return LambdaThreshold(lam_crit, t_worst, bracket, ts, ratio)


def plane_grid(grid: GridSpec, params: PacketParams, t: float | None = None):
    """Uniform (Y, Z) grid plus the closed-form extremal points at ``t``."""
    g = grid.resolve(params)
    axis = np.linspace(-g.half_width, g.half_width, g.n_plane)
    Y, Z = np.meshgrid(axis, axis, indexing="ij")
    Y, Z = Y.ravel(), Z.ravel()
    if t is not None:
        extra = np.array(extremal_points(params, t))
        Y = np.concatenate([Y, extra[:, 0]])
        Z = np.concatenate([Z, extra[:, 1]])
    return Y, Z


def plane_vx(params: PacketParams, lam: float, t: float, Y, Z):
    kind = BohmLike(lam) if lam > 0 else None
    p = SpacePoint(np.zeros_like(Y), Y, Z, np.full_like(Y, t))
    if kind is None:
        return plane_bohmian_vx(params, p.t)
    return velocity(params, p, kind).vx


def negative_region(params: PacketParams, lam: float, t: float, grid: GridSpec | None = None):
    """Plane points (Y, Z) of the scan grid where the Bohm-like x-velocity is negative."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    if t < 0:
        raise ValueError("time must be non-negative")
    grid = grid or GridSpec()
    Y, Z = plane_grid(grid, params, t)
    vx = plane_vx(params, lam, t, Y, Z)
    mask = vx < 0
    return list(zip(Y[mask].tolist(), Z[mask].tolist()))


def scan_min_plane_vx(params: PacketParams, lam: float, times, grid: GridSpec | None = None) -> float:
    """Minimum Bohm-like x-velocity over the plane grid at each of ``times``."""
    grid = grid or GridSpec()
    return min(float(np.min(plane_vx(params, lam, float(t), *plane_grid(grid, params, float(t))))) for t in times)
