"""Guidance-equation trajectories and their crossings of the plane x = 0.

Integration uses the DOP853 pair (8th order, embedded 5th/3rd order error
estimate) with its 7th-order continuous extension; crossings are located by
bisection on that interpolant. The stepper is a compiled scalar loop, one
trajectory at a time, so a trajectory's result never depends on which batch
or worker it ran in.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numba
import numpy as np
from scipy.integrate._ivp import dop853_coefficients as _dop

from .fields import BohmLike, FieldKind
from .wavepacket import PacketParams, SpacePoint

MAX_EVENTS = 256

# DOP853 tableau (Hairer, Norsett & Wanner); scipy ships the same coefficients.
_N_STAGES = _dop.N_STAGES
_A = np.ascontiguousarray(_dop.A, dtype=float)
_B = np.ascontiguousarray(_dop.B, dtype=float)
_C = np.ascontiguousarray(_dop.C, dtype=float)
_E3 = np.ascontiguousarray(_dop.E3, dtype=float)
_E5 = np.ascontiguousarray(_dop.E5, dtype=float)
_D = np.ascontiguousarray(_dop.D, dtype=float)

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0


class StepFailure(RuntimeError):
    """The step-size controller could not meet tolerance above the minimum step."""


class Direction(enum.Enum):
    ENTERING = "entering"
    LEAVING = "leaving"


class Side(enum.Enum):
    PLUS = "S+"
    MINUS = "S-"


@dataclass(frozen=True)
class IntegratorSettings:
    rel_tol: float = 1e-9
    abs_tol: float = 1e-10
    t_max: float = 20.0
    max_step: float = 0.0625
    event_tol: float = 1e-10

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol", "t_max", "max_step", "event_tol"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"integrator setting {name} must be positive, got {value!r}")

    @classmethod
    def for_packet(cls, params: PacketParams, **overrides) -> "IntegratorSettings":
        """Defaults scaled to the packet: horizon 8 x1/k, step cap min(b^2, c^2)/4."""
        values = dict(t_max=8 * params.x1 / params.k, max_step=min(params.b**2, params.c**2) / 4)
        values.update(overrides)
        return cls(**values)


@dataclass(frozen=True)
class CrossingEvent:
    t_cross: float
    y: float
    z: float
    direction: Direction


@dataclass
class IntegratorStats:
    n_steps: int = 0
    n_rejected: int = 0
    max_error: float = 0.0


@dataclass
class TrajectoryRecord:
    r0: SpacePoint
    events: list = field(default_factory=list)
    r_final: Optional[SpacePoint] = None
    stats: IntegratorStats = field(default_factory=IntegratorStats)
    checkpoint_t: Optional[np.ndarray] = None
    checkpoint_x: Optional[np.ndarray] = None
    failed: bool = False
    t_max: float = 0.0

    @property
    def n_leaving(self) -> int:
        return sum(ev.direction is Direction.LEAVING for ev in self.events)


def occupancy_at(record: TrajectoryRecord, t: float) -> Side:
    """Side of the plane at time ``t`` from the starting side and the event list."""
    inside = record.r0.x >= 0
    for ev in record.events:
        if ev.t_cross > t:
            break
        inside = ev.direction is Direction.ENTERING
    return Side.PLUS if inside else Side.MINUS


def first_arrival(record: TrajectoryRecord) -> Optional[float]:
    """First entry time into x >= 0.

    Trajectories that start in x >= 0 arrive at t = 0 by convention. ``None``
    means no arrival before the horizon ``record.t_max``; it is censored,
    not a proof that the particle never arrives.
    """
    if record.r0.x >= 0:
        return 0.0
    for ev in record.events:
        if ev.direction is Direction.ENTERING:
            return ev.t_cross
    return None


# ---------------------------------------------------------------------------
# compiled kernel


@numba.njit(cache=True)
def guidance_rhs(prm, t, x, y, z):
    """Scalar velocity field; ``prm = (a, b, c, k, x1, lam)``. Mirrors fields.velocity."""
    a, b, c, k, x1, lam = prm[0], prm[1], prm[2], prm[3], prm[4], prm[5]
    t2 = t * t
    al4 = a**4 + t2
    be4 = b**4 + t2
    ga4 = c**4 + t2
    u = x + x1 - k * t
    vx = k + u * t / al4
    vy = y * t / be4
    vz = z * t / ga4
    if lam == 0.0:
        return vx, vy, vz
    rho = a * b * c / (math.pi**1.5 * math.sqrt(al4 * be4 * ga4)) * math.exp(
        -a * a * u * u / al4 - b * b * y * y / be4 - c * c * z * z / ga4)
    gx = -2.0 * a * a * u / al4 * rho
    gy = -2.0 * b * b * y / be4 * rho
    gz = -2.0 * c * c * z / ga4 * rho
    return (vx + lam * (gy * vz - gz * vy),
            vy + lam * (gz * vx - gx * vz),
            vz + lam * (gx * vy - gy * vx))


@numba.njit(cache=True)
def _dense_eval(y_old, F, x, comp):
    acc = 0.0
    for j in range(7):
        acc += F[6 - j, comp]
        if j % 2 == 0:
            acc *= x
        else:
            acc *= 1.0 - x
    return y_old[comp] + acc


@numba.njit(cache=True)
def _kernel(prm, r0, t0, t1, rel_tol, abs_tol, max_step, event_tol, checkpoints, A, B, C, E3, E5, D):
    n = r0.shape[0]
    m = checkpoints.shape[0]
    ev_t = np.zeros((n, MAX_EVENTS))
    ev_y = np.zeros((n, MAX_EVENTS))
    ev_z = np.zeros((n, MAX_EVENTS))
    ev_in = np.zeros((n, MAX_EVENTS), dtype=np.bool_)
    n_ev = np.zeros(n, dtype=np.int64)
    final = np.zeros((n, 4))
    steps = np.zeros(n, dtype=np.int64)
    rejected = np.zeros(n, dtype=np.int64)
    max_err = np.zeros(n)
    failed = np.zeros(n, dtype=np.bool_)
    ck_x = np.full((n, m), np.nan)

    direction = 1.0 if t1 >= t0 else -1.0
    eps = np.finfo(np.float64).eps
    K = np.zeros((16, 3))
    F = np.zeros((7, 3))
    y0 = np.zeros(3)
    ys = np.zeros(3)
    yn = np.zeros(3)

    for i in range(n):
        t = t0
        for d in range(3):
            y0[d] = r0[i, d]
        ck = 0
        while ck < m and checkpoints[ck] <= t0:
            ck_x[i, ck] = y0[0]
            ck += 1
        f = guidance_rhs(prm, t, y0[0], y0[1], y0[2])
        for d in range(3):
            K[0, d] = f[d]

        # Hairer-Wanner starting step
        d0 = 0.0
        d1 = 0.0
        for d in range(3):
            sc = abs_tol + rel_tol * abs(y0[d])
            d0 += (y0[d] / sc) ** 2
            d1 += (K[0, d] / sc) ** 2
        d0 = math.sqrt(d0 / 3.0)
        d1 = math.sqrt(d1 / 3.0)
        h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
        if not math.isfinite(h0):
            h0 = 1e-6
        h0 = min(h0, max_step)
        if t1 != t0:
            h0 = min(h0, abs(t1 - t0))
        f1 = guidance_rhs(prm, t + direction * h0, y0[0] + direction * h0 * K[0, 0],
                          y0[1] + direction * h0 * K[0, 1], y0[2] + direction * h0 * K[0, 2])
        d2 = 0.0
        for d in range(3):
            sc = abs_tol + rel_tol * abs(y0[d])
            d2 += ((f1[d] - K[0, d]) / sc) ** 2
        d2 = math.sqrt(d2 / 3.0) / h0
        dm = max(d1, d2)
        h1 = max(1e-6, h0 * 1e-3) if dm <= 1e-15 else (0.01 / dm) ** 0.125
        h = min(100.0 * h0, h1, max_step)
        if not (h > 0.0):
            h = h0

        done = t == t1
        while not done:
            remaining = abs(t1 - t)
            hh = min(h, max_step, remaining)
            last = hh >= remaining
            hs = direction * hh
            for s in range(1, _N_STAGES):
                for d in range(3):
                    acc = 0.0
                    for j in range(s):
                        acc += A[s, j] * K[j, d]
                    ys[d] = y0[d] + hs * acc
                f = guidance_rhs(prm, t + C[s] * hs, ys[0], ys[1], ys[2])
                for d in range(3):
                    K[s, d] = f[d]
            for d in range(3):
                acc = 0.0
                for j in range(_N_STAGES):
                    acc += B[j] * K[j, d]
                yn[d] = y0[d] + hs * acc
            t_new = t1 if last else t + hs
            f = guidance_rhs(prm, t_new, yn[0], yn[1], yn[2])
            for d in range(3):
                K[_N_STAGES, d] = f[d]

            e5 = 0.0
            e3 = 0.0
            for d in range(3):
                sc = abs_tol + rel_tol * max(abs(y0[d]), abs(yn[d]))
                a5 = 0.0
                a3 = 0.0
                for j in range(_N_STAGES + 1):
                    a5 += E5[j] * K[j, d]
                    a3 += E3[j] * K[j, d]
                e5 += (a5 / sc) ** 2
                e3 += (a3 / sc) ** 2
            if e5 == 0.0 and e3 == 0.0:
                err = 0.0
            else:
                err = hh * e5 / math.sqrt((e5 + 0.01 * e3) * 3.0)
            if not math.isfinite(err):
                err = math.inf

            if err <= 1.0:
                side_old = y0[0] >= 0.0
                side_new = yn[0] >= 0.0
                crossing = side_old != side_new
                sample = ck < m and direction * (checkpoints[ck] - t_new) <= 0.0
                if crossing or sample:
                    # 7th-order continuous extension, needs three extra stages
                    for s in range(_N_STAGES + 1, 16):
                        for d in range(3):
                            acc = 0.0
                            for j in range(s):
                                acc += A[s, j] * K[j, d]
                            ys[d] = y0[d] + hs * acc
                        f = guidance_rhs(prm, t + C[s] * hs, ys[0], ys[1], ys[2])
                        for d in range(3):
                            K[s, d] = f[d]
                    for d in range(3):
                        dy = yn[d] - y0[d]
                        F[0, d] = dy
                        F[1, d] = hs * K[0, d] - dy
                        F[2, d] = 2.0 * dy - hs * (K[_N_STAGES, d] + K[0, d])
                        for r in range(4):
                            acc = 0.0
                            for j in range(16):
                                acc += D[r, j] * K[j, d]
                            F[3 + r, d] = hs * acc
                if crossing:
                    lo = 0.0
                    hi = 1.0
                    while (hi - lo) * hh > event_tol:
                        mid = 0.5 * (lo + hi)
                        if (_dense_eval(y0, F, mid, 0) >= 0.0) == side_old:
                            lo = mid
                        else:
                            hi = mid
                    tc = t + hi * hs
                    k_ev = n_ev[i]
                    if k_ev > 0 and abs(tc - ev_t[i, k_ev - 1]) <= event_tol:
                        # grazing chatter: the pair of crossings cancels
                        n_ev[i] = k_ev - 1
                    elif k_ev >= MAX_EVENTS:
                        failed[i] = True
                        break
                    else:
                        ev_t[i, k_ev] = tc
                        ev_y[i, k_ev] = _dense_eval(y0, F, hi, 1)
                        ev_z[i, k_ev] = _dense_eval(y0, F, hi, 2)
                        ev_in[i, k_ev] = not side_old
                        n_ev[i] = k_ev + 1
                while ck < m and direction * (checkpoints[ck] - t_new) <= 0.0:
                    theta = min(max((checkpoints[ck] - t) / hs, 0.0), 1.0)
                    ck_x[i, ck] = _dense_eval(y0, F, theta, 0)
                    ck += 1
                t = t_new
                for d in range(3):
                    y0[d] = yn[d]
                    K[0, d] = K[_N_STAGES, d]
                steps[i] += 1
                if err > max_err[i]:
                    max_err[i] = err
                fac = MAX_FACTOR if err == 0.0 else min(MAX_FACTOR, SAFETY * err ** -0.125)
                h = hh * fac
                done = last
            else:
                rejected[i] += 1
                fac = MIN_FACTOR if err == math.inf else min(1.0, max(MIN_FACTOR, SAFETY * err ** -0.125))
                h = hh * fac
                # written so that a NaN step also counts as underflow
                if not (h >= 16.0 * eps * max(abs(t), 1.0)):
                    failed[i] = True
                    done = True
        final[i, 0] = y0[0]
        final[i, 1] = y0[1]
        final[i, 2] = y0[2]
        final[i, 3] = t
    return ev_t, ev_y, ev_z, ev_in, n_ev, final, steps, rejected, max_err, failed, ck_x


def _packed(params: PacketParams, kind: FieldKind) -> np.ndarray:
    lam = kind.lam if isinstance(kind, BohmLike) else 0.0
    return np.array([params.a, params.b, params.c, params.k, params.x1, lam])


def integrate_batch(params: PacketParams, kind: FieldKind, r0, settings: IntegratorSettings,
                    checkpoints=None) -> list[TrajectoryRecord]:
    """Integrate trajectories from the (n, 3) array of starting points ``r0`` at t = 0."""
    r0 = np.ascontiguousarray(np.atleast_2d(np.asarray(r0, dtype=float)))
    ck = np.zeros(0) if checkpoints is None else np.sort(np.asarray(checkpoints, dtype=float))
    out = _kernel(_packed(params, kind), r0, 0.0, settings.t_max, settings.rel_tol, settings.abs_tol,
                  settings.max_step, settings.event_tol, ck, _A, _B, _C, _E3, _E5, _D)
    ev_t, ev_y, ev_z, ev_in, n_ev, final, steps, rejected, max_err, failed, ck_x = out
    records = []
    for i in range(r0.shape[0]):
        events = [
            CrossingEvent(float(ev_t[i, j]), float(ev_y[i, j]), float(ev_z[i, j]),
                          Direction.ENTERING if ev_in[i, j] else Direction.LEAVING)
            for j in range(n_ev[i])
        ]
        rec = TrajectoryRecord(
            r0=SpacePoint(float(r0[i, 0]), float(r0[i, 1]), float(r0[i, 2]), 0.0),
            events=events,
            r_final=SpacePoint(float(final[i, 0]), float(final[i, 1]), float(final[i, 2]), float(final[i, 3])),
            stats=IntegratorStats(int(steps[i]), int(rejected[i]), float(max_err[i])),
            failed=bool(failed[i]),
            t_max=settings.t_max,
        )
        if checkpoints is not None:
            rec.checkpoint_t = ck
            rec.checkpoint_x = ck_x[i].copy()
        records.append(rec)
    return records


def integrate(params: PacketParams, kind: FieldKind, r0: SpacePoint, settings: IntegratorSettings,
              checkpoints=None) -> TrajectoryRecord:
    """Integrate one trajectory; raises :class:`StepFailure` if the controller gives up."""
    if r0.t != 0:
        raise ValueError("trajectories start at t = 0")
    rec = integrate_batch(params, kind, [[r0.x, r0.y, r0.z]], settings, checkpoints)[0]
    if rec.failed:
        raise StepFailure(f"step size underflow from r0={r0}")
    return rec


def propagate(params: PacketParams, kind: FieldKind, r, t0: float, t1: float, settings: IntegratorSettings):
    """Move positions ``r`` (n, 3) from time ``t0`` to ``t1`` (either direction)."""
    if min(t0, t1) < 0:
        raise ValueError("time must be non-negative")
    r = np.ascontiguousarray(np.atleast_2d(np.asarray(r, dtype=float)))
    out = _kernel(_packed(params, kind), r, float(t0), float(t1), settings.rel_tol, settings.abs_tol,
                  settings.max_step, settings.event_tol, np.zeros(0), _A, _B, _C, _E3, _E5, _D)
    final, failed = out[5], out[9]
    if np.any(failed):
        raise StepFailure("step size underflow during propagation")
    return final[:, :3].copy()
