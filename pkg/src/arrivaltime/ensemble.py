"""Monte Carlo ensembles of trajectories and the arrival statistics they imply."""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate

from .fields import Bohmian, FieldKind
from .trajectories import Direction, IntegratorSettings, TrajectoryRecord, first_arrival, integrate_batch
from .wavepacket import PacketParams, SpacePoint, q_exact, q_limit

log = logging.getLogger(__name__)

# fixed so that the split of work never depends on the worker count
CHUNK_SIZE = 1024
MAX_FAILURE_FRACTION = 1e-3


class IntegratorAbort(RuntimeError):
    """Too many trajectories failed to integrate for the run to be trusted."""


@dataclass(frozen=True)
class RunConfig:
    params: PacketParams = field(default_factory=PacketParams)
    kind: FieldKind = field(default_factory=Bohmian)
    n: int = 20000
    seed: int = 12345
    settings: IntegratorSettings = field(default_factory=IntegratorSettings)
    n_points: int = 201

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("ensemble size must be at least 1")
        if self.n_points < 2:
            raise ValueError("time grid needs at least two points")

    @property
    def t_grid(self) -> np.ndarray:
        return np.linspace(0.0, self.settings.t_max, self.n_points)


@dataclass
class ArrivalCurves:
    t_grid: np.ndarray
    q_exact: np.ndarray
    q_emp: np.ndarray
    p_emp: np.ndarray
    se_q: np.ndarray
    se_p: np.ndarray
    n: int
    arrival_times: np.ndarray
    p_inf_emp: float
    t_bar_emp: float
    t_bar_se: float
    t_bar_exact: float
    never_arrive_emp: float
    never_arrive_exact: float
    censoring_bound: float
    n_leaving_events: int = 0
    n_returning: int = 0
    n_started_in_plus: int = 0
    n_failed: int = 0
    records: Optional[list] = None


def sample_initial(params: PacketParams, n: int, seed: int) -> SpacePoint:
    """Draw ``n`` starting positions from the t = 0 density (PCG64 stream from ``seed``)."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    draws = rng.standard_normal((n, 3))
    # density ~ exp(-(x + x1)^2 / a^2): standard deviation a / sqrt(2)
    return SpacePoint(
        -params.x1 + params.a / np.sqrt(2) * draws[:, 0],
        params.b / np.sqrt(2) * draws[:, 1],
        params.c / np.sqrt(2) * draws[:, 2],
        np.zeros(n),
    )


def exact_mean_arrival(params: PacketParams, t_max: float) -> float:
    """Mean arrival time of the Bohmian ensemble given arrival by ``t_max``.

    Uses P = Q, so ``(1/Q(t_max)) * integral_0^t_max [Q(t_max) - Q(t)] dt``.
    The unconditioned mean is infinite here because P_inf - Q(t) decays
    only like 1/t.
    """
    q_end = float(q_exact(params, t_max))
    val, _ = integrate.quad(lambda t: q_end - float(q_exact(params, t)), 0.0, t_max,
                            epsabs=1e-13, epsrel=1e-12, limit=400,
                            points=[min(params.x1 / params.k, t_max)])
    return val / q_end


def truncated_limit_mean(params: PacketParams, t_max: float) -> float:
    """``integral_0^t_max [P_inf - Q(t)] dt / P_inf`` with the true limit P_inf.

    Grows like log(t_max); reported next to the conditioned mean as the
    horizon-truncation diagnostic.
    """
    p_inf = q_limit(params)
    val, _ = integrate.quad(lambda t: p_inf - float(q_exact(params, t)), 0.0, t_max,
                            epsabs=1e-13, epsrel=1e-12, limit=400,
                            points=[min(params.x1 / params.k, t_max)])
    return val / p_inf


def _side_matrix(records: list, r0x: np.ndarray, t_grid: np.ndarray) -> np.ndarray:
    inside = np.repeat((r0x >= 0)[:, None], len(t_grid), axis=1)
    for i, rec in enumerate(records):
        for ev in rec.events:
            inside[i, t_grid >= ev.t_cross] = ev.direction is Direction.ENTERING
    return inside


def _run_chunk(args):
    params, kind, r0, settings, t_grid, keep = args
    records = integrate_batch(params, kind, r0, settings)
    arrivals = np.array([np.inf if (ta := first_arrival(r)) is None else ta for r in records])
    inside = _side_matrix(records, r0[:, 0], t_grid)
    leaving = np.array([r.n_leaving for r in records], dtype=np.int64)
    failed = np.array([r.failed for r in records])
    return arrivals, inside, leaving, failed, (records if keep else None)


def binomial_se(p: np.ndarray, n: int) -> np.ndarray:
    return np.sqrt(np.clip(p * (1 - p), 0.0, None) / n)


def run_ensemble(config: RunConfig, workers: int = 1, keep_records: bool = False) -> ArrivalCurves:
    """Sample, integrate and reduce an ensemble into arrival curves.

    Work is cut into fixed chunks of trajectories in index order and merged
    in that order, so the output is independent of ``workers``.
    """
    params, settings = config.params, config.settings
    start = sample_initial(params, config.n, config.seed)
    r0 = np.column_stack([start.x, start.y, start.z])
    t_grid = config.t_grid
    jobs = [
        (params, config.kind, r0[i:i + CHUNK_SIZE], settings, t_grid, keep_records)
        for i in range(0, config.n, CHUNK_SIZE)
    ]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_chunk, jobs))
    else:
        parts = [_run_chunk(job) for job in jobs]

    arrivals = np.concatenate([p[0] for p in parts])
    inside = np.concatenate([p[1] for p in parts])
    leaving = np.concatenate([p[2] for p in parts])
    failed = np.concatenate([p[3] for p in parts])
    records = [r for p in parts for r in p[4]] if keep_records else None

    n_failed = int(failed.sum())
    if n_failed > MAX_FAILURE_FRACTION * config.n:
        raise IntegratorAbort(f"{n_failed} of {config.n} trajectories failed to integrate")
    if n_failed:
        log.warning("excluding %d failed trajectories", n_failed)
    ok = ~failed
    arrivals, inside, leaving = arrivals[ok], inside[ok], leaving[ok]
    n = int(ok.sum())

    q_emp = inside.mean(axis=0)
    p_emp = (arrivals[:, None] <= t_grid[None, :]).mean(axis=0)
    arrived = arrivals[np.isfinite(arrivals)]
    p_inf = arrived.size / n
    if arrived.size:
        t_bar = float(arrived.mean())
        t_bar_se = float(arrived.std(ddof=1) / np.sqrt(arrived.size)) if arrived.size > 1 else np.nan
    else:
        t_bar, t_bar_se = np.nan, np.nan
    q_end = float(q_exact(params, settings.t_max))
    limit = q_limit(params)
    return ArrivalCurves(
        t_grid=t_grid,
        q_exact=q_exact(params, t_grid),
        q_emp=q_emp,
        p_emp=p_emp,
        se_q=binomial_se(q_emp, n),
        se_p=binomial_se(p_emp, n),
        n=n,
        arrival_times=arrived,
        p_inf_emp=p_inf,
        t_bar_emp=t_bar,
        t_bar_se=t_bar_se,
        t_bar_exact=exact_mean_arrival(params, settings.t_max),
        never_arrive_emp=1 - p_inf,
        never_arrive_exact=1 - limit,
        censoring_bound=limit - q_end,
        n_leaving_events=int(leaving.sum()),
        n_returning=int(np.count_nonzero(leaving)),
        n_started_in_plus=int(np.count_nonzero(r0[ok, 0] >= 0)),
        n_failed=n_failed,
        records=records,
    )


def mean_arrival_time(curves: ArrivalCurves) -> tuple[float, float]:
    """``(empirical mean over arrivers, exact horizon-conditioned mean)``."""
    if curves.arrival_times.size == 0:
        raise ValueError("no trajectory arrived; the mean arrival time is undefined")
    return float(np.mean(curves.arrival_times)), curves.t_bar_exact


def event_rows(records: list[TrajectoryRecord]):
    """Flatten crossing events into (trajectory_id, t_cross, y, z, direction) rows."""
    for i, rec in enumerate(records):
        for ev in rec.events:
            yield i, ev.t_cross, ev.y, ev.z, ev.direction.value
