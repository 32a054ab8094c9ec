"""Free Gaussian wave packet in three dimensions (hbar = m = 1).

The packet starts centred at ``(-x1, 0, 0)`` with mean wavenumber ``k`` along x
and spreads freely. Every quantity here is closed form; the functions accept
scalars or numpy arrays and broadcast over them.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, special

PI_32 = np.pi ** 1.5


@dataclass(frozen=True)
class PacketParams:
    a: float = 1.0
    b: float = 1.0
    c: float = 0.5
    k: float = 2.0
    x1: float = 5.0

    def __post_init__(self):
        for name in ("a", "b", "c", "k", "x1"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ValueError(f"packet parameter {name} must be positive and finite, got {value!r}")

    def center(self, t):
        """x-coordinate of the packet centre at time ``t``."""
        return -self.x1 + self.k * t


@dataclass(frozen=True)
class SpacePoint:
    """Position and time. Fields may be numpy arrays of matching shape."""

    x: float
    y: float
    z: float
    t: float = 0.0

    def __post_init__(self):
        if np.any(np.asarray(self.t) < 0):
            raise ValueError("time must be non-negative")


@dataclass(frozen=True)
class ComplexWidths:
    """Squared complex widths ``a**2 + i t`` etc. and their moduli at time ``t``."""

    alpha2: complex
    beta2: complex
    gamma2: complex

    @classmethod
    def at(cls, params: PacketParams, t) -> "ComplexWidths":
        t = np.asarray(t, dtype=float)
        return cls(params.a**2 + 1j * t, params.b**2 + 1j * t, params.c**2 + 1j * t)

    @property
    def mod_alpha2(self):
        return np.abs(self.alpha2)

    @property
    def mod_beta2(self):
        return np.abs(self.beta2)

    @property
    def mod_gamma2(self):
        return np.abs(self.gamma2)

    @property
    def mod_alpha4(self):
        return self.alpha2.real**2 + self.alpha2.imag**2

    @property
    def mod_beta4(self):
        return self.beta2.real**2 + self.beta2.imag**2

    @property
    def mod_gamma4(self):
        return self.gamma2.real**2 + self.gamma2.imag**2


def moduli4(params: PacketParams, t):
    """Return ``(|alpha|^4, |beta|^4, |gamma|^4)`` as real arrays."""
    t2 = np.square(t)
    return params.a**4 + t2, params.b**4 + t2, params.c**4 + t2


def psi(params: PacketParams, p: SpacePoint):
    """Complex amplitude of the evolved packet."""
    a, b, c, k, x1 = params.a, params.b, params.c, params.k, params.x1
    t = np.asarray(p.t, dtype=float)
    w = ComplexWidths.at(params, t)
    u = p.x + x1 - k * t
    norm = (a * a * b * b * c * c / np.pi**3) ** 0.25
    widths = np.sqrt(w.alpha2) * np.sqrt(w.beta2) * np.sqrt(w.gamma2)
    exponent = (
        1j * (k * p.x - 0.5 * k * k * t)
        - u**2 / (2 * w.alpha2)
        - np.square(p.y) / (2 * w.beta2)
        - np.square(p.z) / (2 * w.gamma2)
    )
    return norm * np.exp(exponent) / widths


def density(params: PacketParams, p: SpacePoint):
    """Probability density |psi|^2 from its real closed form."""
    a, b, c = params.a, params.b, params.c
    al4, be4, ga4 = moduli4(params, p.t)
    u = p.x + params.x1 - params.k * np.asarray(p.t)
    pref = a * b * c / (PI_32 * np.sqrt(al4 * be4 * ga4))
    return pref * np.exp(-(a * a) * u**2 / al4 - (b * b) * np.square(p.y) / be4 - (c * c) * np.square(p.z) / ga4)


def density_gradient(params: PacketParams, p: SpacePoint):
    """Analytic spatial gradient of the density, returned as ``(gx, gy, gz)``."""
    al4, be4, ga4 = moduli4(params, p.t)
    rho = density(params, p)
    u = p.x + params.x1 - params.k * np.asarray(p.t)
    gx = -2 * params.a**2 * u / al4 * rho
    gy = -2 * params.b**2 * np.asarray(p.y) / be4 * rho
    gz = -2 * params.c**2 * np.asarray(p.z) / ga4 * rho
    return gx, gy, gz


def eta(params: PacketParams, t):
    t = np.asarray(t, dtype=float)
    return params.a * (params.x1 - params.k * t) / np.sqrt(params.a**4 + t * t)


def q_exact(params: PacketParams, t, erfc: Callable = special.erfc):
    """Probability of finding the particle in x >= 0 at time ``t``.

    ``erfc`` is injectable so the verification suite can check that a
    corrupted error function is caught.
    """
    if np.any(np.asarray(t) < 0):
        raise ValueError("time must be non-negative")
    return 0.5 * erfc(eta(params, t))


def q_limit(params: PacketParams, erfc: Callable = special.erfc) -> float:
    """Long-time limit of the occupancy, strictly below one."""
    return float(0.5 * erfc(-params.a * params.k))


class QuadratureError(RuntimeError):
    pass


def q_quadrature(params: PacketParams, t: float, tol: float = 1e-9) -> float:
    """Occupancy of x >= 0 by direct quadrature of the density.

    The y and z factors integrate to one, leaving a 1D integral over x of the
    x-marginal. This deliberately avoids erfc so it can act as an oracle for
    :func:`q_exact`.
    """
    if t < 0:
        raise ValueError("time must be non-negative")
    a = params.a
    al4 = a**4 + t * t
    center = params.center(t)
    # x-marginal is Gaussian with variance |alpha|^4 / (2 a^2)
    sigma = np.sqrt(al4 / (2 * a * a))

    def marginal(s):
        return np.exp(-0.5 * s * s) / np.sqrt(2 * np.pi)

    # substitute x = center + sigma*s; x >= 0  <=>  s >= -center/sigma
    lower = -center / sigma
    if lower > 40:
        return 0.0
    if lower >= 0:
        value, err = integrate.quad(marginal, lower, np.inf, epsabs=1e-15, epsrel=1e-13, limit=200)
    else:
        # split at the mode so quad resolves the peak
        left, err_l = integrate.quad(marginal, lower, 0.0, epsabs=1e-15, epsrel=1e-13, limit=200)
        right, err_r = integrate.quad(marginal, 0.0, np.inf, epsabs=1e-15, epsrel=1e-13, limit=200)
        value, err = left + right, err_l + err_r
    if err > tol:
        raise QuadratureError(f"quadrature error estimate {err:.3e} exceeds {tol:.1e} at t={t}")
    return float(value)


def total_probability(params: PacketParams, t: float, nodes: int = 40) -> float:
    """Integral of |psi|^2 over all space by a tensor Gauss-Hermite rule.

    Evaluates the complex amplitude, not the density closed form, and uses
    nodes scaled to the packet widths at time ``t``.
    """
    s, w = np.polynomial.hermite.hermgauss(nodes)
    al4, be4, ga4 = moduli4(params, t)
    sx = np.sqrt(al4) / params.a
    sy = np.sqrt(be4) / params.b
    sz = np.sqrt(ga4) / params.c
    X, Y, Z = np.meshgrid(params.center(t) + sx * s, sy * s, sz * s, indexing="ij")
    W = w[:, None, None] * w[None, :, None] * w[None, None, :]
    amp2 = np.abs(psi(params, SpacePoint(X, Y, Z, np.full(X.shape, float(t))))) ** 2
    # undo the Hermite weight exp(-s^2) built into w
    S2 = s[:, None, None] ** 2 + s[None, :, None] ** 2 + s[None, None, :] ** 2
    return float(np.sum(W * amp2 * np.exp(S2)) * sx * sy * sz)
