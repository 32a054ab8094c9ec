"""Guidance velocity fields, probability currents and finite-difference checks."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Union

import numpy as np

from .wavepacket import PacketParams, SpacePoint, density, density_gradient, moduli4, psi

FD_EPS = np.finfo(float).eps ** (1.0 / 3.0)


class Velocity3(NamedTuple):
    vx: np.ndarray
    vy: np.ndarray
    vz: np.ndarray

    def norm(self):
        return np.sqrt(np.square(self.vx) + np.square(self.vy) + np.square(self.vz))


@dataclass(frozen=True)
class Bohmian:
    name = "bohmian"

    @property
    def lam(self) -> float:
        return 0.0


@dataclass(frozen=True)
class BohmLike:
    lam: float
    name = "bohm-like"

    def __post_init__(self):
        if not (np.isfinite(self.lam) and self.lam > 0):
            raise ValueError("BohmLike requires lambda > 0; use Bohmian for lambda = 0")


FieldKind = Union[Bohmian, BohmLike]


def bohmian_velocity(params: PacketParams, p: SpacePoint) -> Velocity3:
    """Gradient of the phase of psi.

    Differentiating the closed-form amplitude gives
    ``vx = k + (x + x1 - k t) t / |alpha|^4``, i.e. ``(k a^4 + (x + x1) t) / |alpha|^4``.
    The often-quoted ``(k + (x + x1) t) / |alpha|^4`` only coincides with this
    when a = 1.
    """
    t = np.asarray(p.t, dtype=float)
    al4, be4, ga4 = moduli4(params, t)
    u = p.x + params.x1 - params.k * t
    vx = params.k + u * t / al4
    vy = np.asarray(p.y) * t / be4
    vz = np.asarray(p.z) * t / ga4
    return Velocity3(vx, vy, vz)


def delta_v(params: PacketParams, p: SpacePoint, lam: float) -> Velocity3:
    """``lam * grad(density) x v_bohm``; divergence-free once weighted by the density."""
    gx, gy, gz = density_gradient(params, p)
    vx, vy, vz = bohmian_velocity(params, p)
    return Velocity3(
        lam * (gy * vz - gz * vy),
        lam * (gz * vx - gx * vz),
        lam * (gx * vy - gy * vx),
    )


def velocity(params: PacketParams, p: SpacePoint, kind: FieldKind) -> Velocity3:
    vb = bohmian_velocity(params, p)
    if isinstance(kind, Bohmian):
        return vb
    dv = delta_v(params, p, kind.lam)
    return Velocity3(vb.vx + dv.vx, vb.vy + dv.vy, vb.vz + dv.vz)


def current(params: PacketParams, p: SpacePoint, kind: FieldKind) -> Velocity3:
    """Probability current ``density * velocity``: J_c for Bohmian, J_l for BohmLike."""
    rho = density(params, p)
    v = velocity(params, p, kind)
    return Velocity3(rho * v.vx, rho * v.vy, rho * v.vz)


def plane_delta_vx(params: PacketParams, y, z, t, lam: float):
    """x-component of ``delta_v`` on x = 0, written out in its reduced closed form."""
    _, be4, ga4 = moduli4(params, t)
    rho = density(params, SpacePoint(0.0 * np.asarray(y), y, z, t))
    return 2 * lam * rho * (params.c**2 - params.b**2) * y * z * t / (be4 * ga4)


def plane_bohmian_vx(params: PacketParams, t):
    """Bohmian x-velocity on x = 0; independent of y and z, positive for t >= 0."""
    t = np.asarray(t, dtype=float)
    al4 = params.a**4 + t * t
    return (params.k * params.a**4 + params.x1 * t) / al4


# ---------------------------------------------------------------------------
# finite-difference oracles


def fd_steps(params: PacketParams):
    """Central-difference steps for (x, y, z, t)."""
    return FD_EPS * params.a, FD_EPS * params.b, FD_EPS * params.c, FD_EPS


def _shift(p: SpacePoint, axis: int, h: float) -> SpacePoint:
    coords = [p.x, p.y, p.z, p.t]
    coords[axis] = coords[axis] + h
    return SpacePoint(*coords)


def phase_gradient_fd(params: PacketParams, p: SpacePoint) -> Velocity3:
    """Finite-difference gradient of arg(psi), immune to 2*pi branch jumps."""
    out = []
    for axis, h in enumerate(fd_steps(params)[:3]):
        ratio = psi(params, _shift(p, axis, h)) / psi(params, _shift(p, axis, -h))
        out.append(np.angle(ratio) / (2 * h))
    return Velocity3(*out)


def fd_divergence(params: PacketParams, field: Callable[[SpacePoint], Velocity3], p: SpacePoint):
    """Central-difference divergence of ``field`` at ``p``.

    Returns ``(div, scale)`` where ``scale`` is the sum of the magnitudes of
    the three partial derivatives, the natural yardstick for the residual.
    """
    div = 0.0
    scale = 0.0
    for axis, h in enumerate(fd_steps(params)[:3]):
        fp = field(_shift(p, axis, h))[axis]
        fm = field(_shift(p, axis, -h))[axis]
        d = (fp - fm) / (2 * h)
        div = div + d
        scale = scale + np.abs(d)
    return div, scale


def fd_density_dt(params: PacketParams, p: SpacePoint):
    """Time derivative of the density; one-sided second order when t is too close to 0."""
    h = fd_steps(params)[3]
    t = np.asarray(p.t, dtype=float)
    if np.all(t >= h):
        return (density(params, _shift(p, 3, h)) - density(params, _shift(p, 3, -h))) / (2 * h)
    f0 = density(params, p)
    f1 = density(params, _shift(p, 3, h))
    f2 = density(params, _shift(p, 3, 2 * h))
    return (-3 * f0 + 4 * f1 - f2) / (2 * h)


def continuity_residual(params: PacketParams, p: SpacePoint, kind: FieldKind):
    """Residual of ``div J + d(density)/dt`` and its local scale."""
    div, scale = fd_divergence(params, lambda q: current(params, q, kind), p)
    drho = fd_density_dt(params, p)
    return div + drho, scale + np.abs(drho)


def divergence_check(params: PacketParams, p: SpacePoint, lam: float):
    """Finite-difference ``div(density * delta_v)``, which should vanish identically.

    Returns ``(residual, scale)`` where ``scale`` is the summed magnitude of the
    partial derivatives of the Bohmian current J_c at ``p``.
    """
    def weighted(q):
        rho = density(params, q)
        dv = delta_v(params, q, lam)
        return Velocity3(rho * dv.vx, rho * dv.vy, rho * dv.vz)

    residual, _ = fd_divergence(params, weighted, p)
    _, scale = fd_divergence(params, lambda q: current(params, q, Bohmian()), p)
    return residual, scale
