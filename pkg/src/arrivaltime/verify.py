"""Oracle suite: every closed form checked against an independent numerical route."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np
from scipy import optimize, special

from . import analysis
from .fields import (
    Bohmian,
    BohmLike,
    continuity_residual,
    delta_v,
    divergence_check,
    fd_steps,
    phase_gradient_fd,
    plane_bohmian_vx,
    velocity,
)
from .trajectories import guidance_rhs
from .wavepacket import (
    PacketParams,
    SpacePoint,
    density,
    density_gradient,
    moduli4,
    psi,
    q_exact,
    q_quadrature,
    total_probability,
)

Q_TIMES = (0.0, 0.5, 1.0, 2.0, 2.5, 5.0, 10.0, 20.0)
EXTREMUM_TIMES = (0.1, 0.5, 1.0, 2.0, 5.0, 10.0)


@dataclass
class CheckResult:
    name: str
    residual: float
    tolerance: float
    passed: bool
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name}: residual={self.residual:.3e} tol={self.tolerance:.1e} {self.detail}".rstrip()

    def to_dict(self) -> dict:
        return asdict(self)


def _check(name, residual, tol, detail="") -> CheckResult:
    residual = float(residual)
    return CheckResult(name, residual, tol, bool(np.isfinite(residual) and residual <= tol), detail)


def random_points(params: PacketParams, n: int, seed: int, t_range=(0.0, 10.0)) -> SpacePoint:
    """Points spread over the bulk of the packet at random times."""
    rng = np.random.default_rng(seed)
    t = rng.uniform(*t_range, n)
    al4, be4, ga4 = moduli4(params, t)
    x = params.center(t) + 1.5 * np.sqrt(al4 / 2) / params.a * rng.standard_normal(n)
    y = 1.5 * np.sqrt(be4 / 2) / params.b * rng.standard_normal(n)
    z = 1.5 * np.sqrt(ga4 / 2) / params.c * rng.standard_normal(n)
    return SpacePoint(x, y, z, t)


def _vec_rel(a, b):
    a = np.stack(a)
    b = np.stack(b)
    return np.linalg.norm(a - b, axis=0) / np.linalg.norm(b, axis=0)


def check_q_exact(params: PacketParams, erfc: Callable = special.erfc) -> list[CheckResult]:
    diffs = [abs(float(q_exact(params, t, erfc=erfc)) - q_quadrature(params, t)) for t in Q_TIMES]
    limit = 0.5 * special.erfc(-params.a * params.k)
    return [
        _check("q_exact_vs_quadrature", max(diffs), 1e-9, f"t in {list(Q_TIMES)}"),
        _check("q_long_time_limit", abs(float(q_exact(params, 1e6, erfc=erfc)) - limit), 1e-6, "t = 1e6"),
    ]


def check_normalization(params: PacketParams) -> CheckResult:
    dev = max(abs(total_probability(params, t) - 1.0) for t in (0.0, 3.0, 10.0))
    return _check("normalization", dev, 1e-9, "t in [0, 3, 10]")


def check_density(params: PacketParams, pts: SpacePoint) -> list[CheckResult]:
    rho = density(params, pts)
    amp2 = np.abs(psi(params, pts)) ** 2
    rel = np.max(np.abs(rho - amp2) / amp2)

    g = np.stack(density_gradient(params, pts))
    fd = []
    for axis, h in enumerate(fd_steps(params)[:3]):
        shift = np.zeros((4,) + np.shape(pts.x))
        shift[axis] = h
        plus = SpacePoint(pts.x + shift[0], pts.y + shift[1], pts.z + shift[2], pts.t)
        minus = SpacePoint(pts.x - shift[0], pts.y - shift[1], pts.z - shift[2], pts.t)
        fd.append((density(params, plus) - density(params, minus)) / (2 * h))
    fd = np.stack(fd)
    grad_rel = np.max(np.linalg.norm(g - fd, axis=0) / np.linalg.norm(g, axis=0))
    return [
        _check("density_vs_psi", rel, 1e-12),
        _check("density_gradient_fd", grad_rel, 1e-7),
    ]


def check_velocity(params: PacketParams, pts: SpacePoint) -> CheckResult:
    rel = _vec_rel(phase_gradient_fd(params, pts), velocity(params, pts, Bohmian()))
    return _check("bohmian_velocity_vs_phase_fd", np.max(rel), 1e-6)


def check_continuity(params: PacketParams, pts: SpacePoint, lam: float) -> list[CheckResult]:
    out = []
    for name, kind in (("continuity_J_c", Bohmian()), ("continuity_J_l", BohmLike(lam))):
        res, scale = continuity_residual(params, pts, kind)
        out.append(_check(name, np.max(np.abs(res) / scale), 1e-6, f"lambda={lam:.6g}" if lam and kind.lam else ""))
    res, scale = divergence_check(params, pts, lam)
    out.append(_check("divergence_free_delta_v", np.max(np.abs(res) / scale), 1e-6, f"lambda={lam:.6g}"))
    return out


def check_kernel(params: PacketParams, pts: SpacePoint, lam: float) -> CheckResult:
    """The compiled integrator field must agree with the reference numpy field."""
    prm = np.array([params.a, params.b, params.c, params.k, params.x1, lam])
    ref = velocity(params, pts, BohmLike(lam))
    got = np.array([guidance_rhs(prm, t, x, y, z) for x, y, z, t in zip(pts.x, pts.y, pts.z, pts.t)]).T
    return _check("integrator_field_vs_reference", np.max(_vec_rel(tuple(got), ref)), 1e-12, f"lambda={lam:.6g}")


def numerical_plane_max(params: PacketParams, t: float, lam: float = 1.0, n: int = 201) -> float:
    """Maximise |delta_vx| on x = 0 by brute-force grid then Nelder-Mead refinement.

    Goes through the full cross-product ``delta_v``, not the reduced plane formula.
    """
    _, be4, ga4 = moduli4(params, t)
    half = 4 * max(np.sqrt(be4) / params.b, np.sqrt(ga4) / params.c)
    axis = np.linspace(-half, half, n)
    Y, Z = np.meshgrid(axis, axis, indexing="ij")

    def f(Y, Z):
        return np.abs(delta_v(params, SpacePoint(np.zeros_like(Y), Y, Z, np.full_like(Y, t)), lam).vx)

    vals = f(Y, Z)
    i = np.unravel_index(np.argmax(vals), vals.shape)
    res = optimize.minimize(
        lambda v: -float(f(np.array(v[0]), np.array(v[1]))),
        x0=[Y[i], Z[i]], method="Nelder-Mead",
        options={"xatol": 1e-10 * half, "fatol": 1e-16, "maxiter": 4000},
    )
    return max(-res.fun, float(vals[i]))


def check_plane_extremum(params: PacketParams) -> CheckResult:
    rel = []
    for t in EXTREMUM_TIMES:
        closed = analysis.max_abs_delta_vx(params, t, 1.0).max_abs_dvx
        rel.append(abs(closed - numerical_plane_max(params, t)) / closed)
    return _check("max_abs_delta_vx_vs_2d_max", max(rel), 1e-6, f"t in {list(EXTREMUM_TIMES)}")


def check_plane_positivity(params: PacketParams) -> CheckResult:
    axis = np.linspace(-10, 10, 101)
    Y, Z = np.meshgrid(axis, axis, indexing="ij")
    vmin = np.inf
    for t in np.arange(0.0, 20.0 + 1e-9, 0.5):
        p = SpacePoint(np.zeros_like(Y), Y, Z, np.full_like(Y, t))
        vmin = min(vmin, float(np.min(velocity(params, p, Bohmian()).vx)))
    # residual > 0 fails: the check passes when the minimum is strictly positive
    return CheckResult("bohmian_plane_positivity", -vmin, 0.0, vmin > 0, f"min v_bx = {vmin:.6g}")


def run_checks(params: PacketParams, n_points: int = 100, seed: int = 2024,
               erfc: Callable = special.erfc, lam: float | None = None) -> list[CheckResult]:
    """Run the full oracle suite; ``erfc`` may be swapped to test sensitivity."""
    anisotropic = params.b != params.c
    if lam is None:
        lam = analysis.lambda_critical(params).lambda_crit if anisotropic else 1.0
    pts = random_points(params, n_points, seed)
    results = check_q_exact(params, erfc)
    results.append(check_normalization(params))
    results += check_density(params, pts)
    results.append(check_velocity(params, pts))
    results += check_continuity(params, pts, lam)
    results.append(check_kernel(params, pts, lam))
    if anisotropic:
        results.append(check_plane_extremum(params))
    results.append(check_plane_positivity(params))
    vb0 = float(plane_bohmian_vx(params, 0.0))
    results.append(_check("plane_vbx_at_t0_equals_k", abs(vb0 - params.k) / params.k, 1e-15))
    return results
