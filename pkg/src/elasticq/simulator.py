"""Discrete-event simulation of the scaling system.

Two engines share one statistics contract. When every distribution is
exponential the aggregate state (active instances, jobs) is itself the
Markov chain, so a flat jump loop with derived setup counts is exact and
fast; it is compiled with numba because validation protocols run tens of
billions of jumps. Any other distribution mix runs on a conventional
event-calendar engine with per-job service completions and cancellable
setup timers.

Waiting times are collected per accepted job at the instant it enters
service (FCFS order); blocked jobs never enter the statistics. Mean
response time is derived from the occupancy integral and the accepted
count, which is the same flow identity the analytical route uses.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numba
import numpy as np
from scipy import stats as _stats

from .model import (
    ParamsMismatchError,
    PerformanceMetrics,
    SystemParams,
    ValidationError,
)
from .solver import SolveReport

FAMILIES = (
    "exponential",
    "deterministic",
    "erlang",
    "uniform",
    "truncated-normal",
    "pareto",
)


@dataclass(frozen=True)
class DistributionSpec:
    """A positive-duration distribution given by family, mean, and shape.

    Shape meaning per family: erlang phase count, pareto tail exponent,
    uniform relative half-width (support mean*(1 -/+ shape)), and the
    pre-truncation standard deviation for truncated-normal. Exponential and
    deterministic take no shape.
    """

    family: str
    mean: float
    shape: Optional[float] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValidationError(
                f"unknown distribution family {self.family!r}, expected one of {FAMILIES}"
            )
        if not self.mean > 0:
            raise ValidationError(f"distribution mean must be > 0, got {self.mean}")
        f, s = self.family, self.shape
        if f in ("exponential", "deterministic"):
            if s is not None:
                raise ValidationError(f"{f} takes no shape parameter")
        elif f == "erlang":
            if s is None or s != int(s) or s < 1:
                raise ValidationError(f"erlang shape must be an integer >= 1, got {s}")
        elif f == "pareto":
            if s is None or not s > 1:
                raise ValidationError(f"pareto shape must be > 1 so the mean exists, got {s}")
        elif f == "uniform":
            if s is None:
                object.__setattr__(self, "shape", 1.0)
            elif not 0 < s <= 1:
                raise ValidationError(f"uniform relative half-width must be in (0, 1], got {s}")
        elif f == "truncated-normal":
            if s is None:
                object.__setattr__(self, "shape", self.mean / 2)
            elif not s > 0:
                raise ValidationError(f"truncated-normal sigma must be > 0, got {s}")

    @property
    def is_exponential(self) -> bool:
        return self.family == "exponential"

    @classmethod
    def parse(cls, text: str, mean: float) -> "DistributionSpec":
        """Parse the CLI form ``family`` or ``family:shape``."""
        name, _, arg = text.partition(":")
        shape = float(arg) if arg else None
        return cls(family=name, mean=mean, shape=shape)

    def spec_string(self) -> str:
        return self.family if self.shape is None else f"{self.family}:{self.shape:g}"

    def sampler(self, rng: np.random.Generator):
        mean = self.mean
        if self.family == "exponential":
            return lambda: rng.exponential(mean)
        if self.family == "deterministic":
            return lambda: mean
        if self.family == "erlang":
            m = int(self.shape)
            scale = mean / m
            return lambda: rng.gamma(m, scale)
        if self.family == "uniform":
            lo = mean * (1.0 - self.shape)
            hi = mean * (1.0 + self.shape)
            return lambda: rng.uniform(lo, hi)
        if self.family == "pareto":
            a = self.shape
            xm = mean * (a - 1.0) / a
            inv = -1.0 / a
            return lambda: xm * (1.0 - rng.random()) ** inv

        def truncated_normal():
            while True:
                x = rng.normal(mean, self.shape)
                if x >= 0.0:
                    return x

        return truncated_normal


@dataclass(frozen=True)
class SimConfig:
    """Replication protocol: horizon, warmup, replication count, seeding.

    Distribution slots left as None default to exponential with the mean
    implied by the model rates at simulation time.
    """

    horizon: float = 3e5
    warmup: Optional[float] = None
    replications: int = 10
    seed: int = 0
    interarrival: Optional[DistributionSpec] = None
    service: Optional[DistributionSpec] = None
    setup: Optional[DistributionSpec] = None

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValidationError(f"horizon must be > 0, got {self.horizon}")
        if self.warmup is None:
            object.__setattr__(self, "warmup", 0.1 * self.horizon)
        if not 0 <= self.warmup < self.horizon:
            raise ValidationError(
                f"warmup must satisfy 0 <= warmup < horizon, got {self.warmup}"
            )
        for name in ("replications", "seed"):
            v = getattr(self, name)
            if isinstance(v, float):
                if not v.is_integer():
                    raise ValidationError(f"{name} must be an integer, got {v}")
                object.__setattr__(self, name, int(v))
        if self.replications < 2:
            raise ValidationError(
                f"replications must be >= 2 for confidence intervals, got {self.replications}"
            )
        if self.seed < 0:
            raise ValidationError(f"seed must be a nonnegative integer, got {self.seed}")

    def resolved(self, params: SystemParams):
        """Distribution triple with means pinned to the model rates."""
        out = []
        for slot, rate, name in (
            (self.interarrival, params.lam, "interarrival"),
            (self.service, params.mu, "service"),
            (self.setup, params.alpha, "setup"),
        ):
            mean = 1.0 / rate
            if slot is None:
                out.append(DistributionSpec("exponential", mean))
            else:
                if abs(slot.mean - mean) > 1e-9 * mean:
                    raise ParamsMismatchError(
                        f"{name} mean {slot.mean} does not match 1/rate = {mean} from params"
                    )
                out.append(slot)
        return tuple(out)


@dataclass(frozen=True)
class ReplicationStats:
    """Raw tallies of one replication over the measured window."""

    area_jobs: float          # integral of jobs in system
    area_instances: float     # integral of dynamic instances active or in setup
    measured: float           # integrated time, horizon - warmup
    accepted: int
    blocked: int
    waits_sum: float
    waits_started: int        # accepted jobs whose service began in-window

    @property
    def L(self) -> float:
        return self.area_jobs / self.measured

    @property
    def S(self) -> float:
        return self.area_instances / self.measured

    @property
    def Pb(self) -> float:
        total = self.accepted + self.blocked
        return self.blocked / total if total else 0.0

    @property
    def Wq(self) -> float:
        return self.waits_sum / self.waits_started if self.waits_started else 0.0

    @property
    def W(self) -> float:
        return self.area_jobs / self.accepted if self.accepted else 0.0

    def metric(self, name: str) -> float:
        return getattr(self, name)


def _jump_replication_py(rng, lam, mu, alpha, n0, k, K, horizon, warmup, ring):
    """One replication of the all-exponential jump chain.

    State is (active dynamic instances i, jobs j); the in-setup count is the
    derived value min(max(j - n_i, 0), N - n_i), which every event preserves.
    The ring holds arrival stamps of waiting jobs in FCFS order.
    """
    N = n0 + k
    t = 0.0
    i = 0
    j = 0
    area_j = 0.0
    area_s = 0.0
    measured = 0.0
    accepted = 0
    blocked = 0
    waits_sum = 0.0
    waits_n = 0
    head = 0
    tail = 0
    rsize = ring.shape[0]
    while True:
        ni = n0 + i
        busy = j if j < ni else ni
        s = j - ni
        if s < 0:
            s = 0
        cap = N - ni
        if s > cap:
            s = cap
        rate = lam + busy * mu + s * alpha
        tn = t + rng.standard_exponential() / rate
        lo = t if t > warmup else warmup
        hi = tn if tn < horizon else horizon
        if hi > lo:
            seg = hi - lo
            area_j += j * seg
            area_s += (i + s) * seg
            measured += seg
        if tn >= horizon:
            break
        t = tn
        u = rng.random() * rate
        if u < lam:
            if j == K:
                if t >= warmup:
                    blocked += 1
            else:
                if t >= warmup:
                    accepted += 1
                if j < ni:
                    if t >= warmup:
                        waits_n += 1  # a free server, zero wait
                else:
                    ring[tail % rsize] = t
                    tail += 1
                j += 1
        elif u < lam + busy * mu:
            had_queue = j > ni
            j -= 1
            if i > 0 and j < ni:
                i -= 1  # the freed instance switches off at once
            elif had_queue:
                ta = ring[head % rsize]
                head += 1
                if ta >= warmup:
                    waits_sum += t - ta
                    waits_n += 1
        else:
            i += 1  # setup done; the new server takes the head waiter
            ta = ring[head % rsize]
            head += 1
            if ta >= warmup:
                waits_sum += t - ta
                waits_n += 1
    return area_j, area_s, measured, accepted, blocked, waits_sum, waits_n


_jump_replication = numba.njit(cache=True)(_jump_replication_py)

_DEPART, _SETUP_DONE, _ARRIVE = 0, 1, 2


def _event_replication(params, resolved, horizon, warmup, seedseq):
    """One replication on the event calendar, any distribution mix.

    Simultaneous events process as departure, then setup completion, then
    arrival, tie-broken by scheduling order. Setup timers cancel newest
    first when the required count drops.
    """
    ia_spec, sv_spec, su_spec = resolved
    gens = [np.random.Generator(np.random.Philox(c)) for c in seedseq.spawn(3)]
    next_ia = ia_spec.sampler(gens[0])
    next_sv = sv_spec.sampler(gens[1])
    next_su = su_spec.sampler(gens[2])
    n0, k, K, N = params.n0, params.k, params.K, params.N

    heap = []
    seq = 0

    def push(time, prio, token=0):
        nonlocal seq
        heapq.heappush(heap, (time, prio, seq, token))
        seq += 1

    t = 0.0
    busy = 0
    i_active = 0
    queue = deque()
    setups = []          # live setup tokens, newest last
    cancelled = set()
    next_token = 0
    area_j = 0.0
    area_s = 0.0
    measured = 0.0
    accepted = blocked = 0
    waits_sum = 0.0
    waits_n = 0

    def advance(to):
        nonlocal area_j, area_s, measured
        lo = max(t, warmup)
        hi = min(to, horizon)
        if hi > lo:
            seg = hi - lo
            area_j += (busy + len(queue)) * seg
            area_s += (i_active + len(setups)) * seg
            measured += seg

    def start_service(arrival_time):
        nonlocal busy, waits_sum, waits_n
        busy += 1
        if arrival_time >= warmup:
            waits_sum += t - arrival_time
            waits_n += 1
        push(t + next_sv(), _DEPART)

    def reconcile_setups():
        j = busy + len(queue)
        ni = n0 + i_active
        target = min(max(j - ni, 0), N - ni)
        nonlocal next_token
        while len(setups) < target:
            setups.append(next_token)
            push(t + next_su(), _SETUP_DONE, next_token)
            next_token += 1
        while len(setups) > target:
            cancelled.add(setups.pop())

    push(next_ia(), _ARRIVE)
    while heap:
        te, prio, _, token = heapq.heappop(heap)
        if te >= horizon:
            break
        advance(te)
        t = te
        if prio == _ARRIVE:
            nxt = t + next_ia()
            if nxt < horizon:
                push(nxt, _ARRIVE)
            j = busy + len(queue)
            if j == K:
                if t >= warmup:
                    blocked += 1
            else:
                if t >= warmup:
                    accepted += 1
                if busy < n0 + i_active:
                    start_service(t)
                else:
                    queue.append(t)
                reconcile_setups()
        elif prio == _DEPART:
            busy -= 1
            if queue:
                start_service(queue.popleft())
            elif i_active > 0 and busy < n0 + i_active:
                i_active -= 1
            reconcile_setups()
        else:
            if token in cancelled:
                cancelled.discard(token)
                continue
            setups.remove(token)
            i_active += 1
            assert queue, "setup completed with no waiting job"
            start_service(queue.popleft())
            reconcile_setups()
        j = busy + len(queue)
        assert 0 <= i_active <= k and j <= K
        assert busy == min(j, n0 + i_active)
        ni = n0 + i_active
        assert len(setups) == min(max(j - ni, 0), N - ni)
    advance(horizon)
    return ReplicationStats(
        area_jobs=area_j,
        area_instances=area_s,
        measured=measured,
        accepted=accepted,
        blocked=blocked,
        waits_sum=waits_sum,
        waits_started=waits_n,
    )


def _replication_seed(config: SimConfig, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=config.seed, spawn_key=(index,))


def simulate_once(
    params: SystemParams,
    config: SimConfig,
    replication_index: int,
    engine: str = "auto",
) -> ReplicationStats:
    """Run one replication on its deterministic substream."""
    resolved = config.resolved(params)
    if engine == "auto":
        engine = "jump" if all(d.is_exponential for d in resolved) else "event"
    seedseq = _replication_seed(config, replication_index)
    if engine == "jump":
        if not all(d.is_exponential for d in resolved):
            raise ValidationError("jump engine requires exponential distributions")
        rng = np.random.Generator(np.random.Philox(seedseq))
        ring = np.empty(params.K + 2, dtype=np.float64)
        out = _jump_replication(
            rng,
            params.lam,
            params.mu,
            params.alpha,
            params.n0,
            params.k,
            params.K,
            config.horizon,
            config.warmup,
            ring,
        )
        return ReplicationStats(
            area_jobs=out[0],
            area_instances=out[1],
            measured=out[2],
            accepted=int(out[3]),
            blocked=int(out[4]),
            waits_sum=out[5],
            waits_started=int(out[6]),
        )
    if engine != "event":
        raise ValidationError(f"unknown engine {engine!r}")
    return _event_replication(params, resolved, config.horizon, config.warmup, seedseq)


def _run_indexed(args):
    params, config, engine, index = args
    return index, simulate_once(params, config, index, engine)


@dataclass(frozen=True)
class MetricEstimate:
    mean: float
    half_width: float

    @property
    def low(self) -> float:
        return self.mean - self.half_width

    @property
    def high(self) -> float:
        return self.mean + self.half_width


@dataclass(frozen=True)
class SimulationResult:
    """Replication-mean estimates with 95 percent Student-t half-widths."""

    params: SystemParams
    config: SimConfig
    Wq: MetricEstimate
    S: MetricEstimate
    Pb: MetricEstimate
    L: MetricEstimate
    W: MetricEstimate
    accepted_jobs: int
    blocked_jobs: int
    replications: tuple

    METRIC_NAMES = ("Wq", "S", "Pb", "L", "W")

    def estimate(self, name: str) -> MetricEstimate:
        if name not in self.METRIC_NAMES:
            raise ValidationError(f"unknown metric {name!r}")
        return getattr(self, name)

    def per_replication(self, name: str) -> tuple:
        return tuple(rep.metric(name) for rep in self.replications)

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "config": {
                "horizon": self.config.horizon,
                "warmup": self.config.warmup,
                "replications": self.config.replications,
                "seed": self.config.seed,
            },
            "estimates": {
                name: {
                    "mean": self.estimate(name).mean,
                    "half_width": self.estimate(name).half_width,
                }
                for name in self.METRIC_NAMES
            },
            "accepted_jobs": self.accepted_jobs,
            "blocked_jobs": self.blocked_jobs,
        }


def _estimate(values) -> MetricEstimate:
    n = len(values)
    mean = sum(values) / n
    var = sum((v - mean) ** 2 for v in values) / (n - 1)
    hw = float(_stats.t.ppf(0.975, n - 1)) * math.sqrt(var / n)
    return MetricEstimate(mean=mean, half_width=hw)


def simulate(
    params: SystemParams,
    config: SimConfig,
    *,
    engine: str = "auto",
    workers: int = 1,
) -> SimulationResult:
    """Run all replications and aggregate, deterministically in index order."""
    config.resolved(params)  # validate up front
    indices = range(config.replications)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            pairs = list(pool.map(_run_indexed, [(params, config, engine, r) for r in indices]))
        reps = tuple(stats for _, stats in sorted(pairs))
    else:
        reps = tuple(simulate_once(params, config, r, engine) for r in indices)
    return SimulationResult(
        params=params,
        config=config,
        Wq=_estimate([r.Wq for r in reps]),
        S=_estimate([r.S for r in reps]),
        Pb=_estimate([r.Pb for r in reps]),
        L=_estimate([r.L for r in reps]),
        W=_estimate([r.W for r in reps]),
        accepted_jobs=sum(r.accepted for r in reps),
        blocked_jobs=sum(r.blocked for r in reps),
        replications=reps,
    )


@dataclass(frozen=True)
class MetricComparison:
    metric: str
    analytical: float
    simulated: float
    half_width: float
    covered: bool
    abs_gap: float
    rel_gap: float


@dataclass(frozen=True)
class ComparisonReport:
    params: SystemParams
    rows: tuple

    @property
    def all_covered(self) -> bool:
        return all(row.covered for row in self.rows)

    def row(self, metric: str) -> MetricComparison:
        for r in self.rows:
            if r.metric == metric:
                return r
        raise ValidationError(f"no comparison row for {metric!r}")

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "rows": [
                {
                    "metric": r.metric,
                    "analytical": r.analytical,
                    "simulated": r.simulated,
                    "half_width": r.half_width,
                    "covered": r.covered,
                    "abs_gap": r.abs_gap,
                    "rel_gap": r.rel_gap,
                }
                for r in self.rows
            ],
            "all_covered": self.all_covered,
        }


def compare(report: SolveReport, sim: SimulationResult, *, atol: float = 1e-9) -> ComparisonReport:
    """Per-metric coverage of analytical values by the simulation CIs.

    ``atol`` absorbs degenerate zero-width intervals at vanishing load,
    where both routes agree on an effectively zero value.
    """
    if report.params != sim.params:
        raise ParamsMismatchError(
            f"solver params {report.params.to_dict()} differ from "
            f"simulation params {sim.params.to_dict()}"
        )
    metrics: PerformanceMetrics = report.metrics
    rows = []
    for name in SimulationResult.METRIC_NAMES:
        analytical = metrics.value(name)
        est = sim.estimate(name)
        gap = est.mean - analytical
        covered = abs(gap) <= est.half_width + atol
        rel = abs(gap) / abs(analytical) if analytical != 0.0 else (0.0 if gap == 0.0 else math.inf)
        rows.append(
            MetricComparison(
                metric=name,
                analytical=analytical,
                simulated=est.mean,
                half_width=est.half_width,
                covered=covered,
                abs_gap=gap,
                rel_gap=rel,
            )
        )
    return ComparisonReport(params=report.params, rows=tuple(rows))
