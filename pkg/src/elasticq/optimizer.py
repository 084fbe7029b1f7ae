"""Choosing the dynamic-instance count against a cost target.

Two selection rules are provided. The threshold rule walks k upward and
stops at the first k where the normalized instance cost per unit of
normalized queueing delay reaches the operator's weight ratio. The
exhaustive rule evaluates the weighted cost at every feasible k and returns
the minimizer. Both share one lazily-filled table of solved metrics, so
repeated selections on the same base configuration reuse every solve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional

from .model import PerformanceMetrics, SystemParams, ValidationError
from .solver import solve


@dataclass(frozen=True)
class CostSpec:
    """Weights, normalizers, and the delay bound for k selection.

    Threshold mode needs (delta, s_bar, wq_bar); exhaustive mode needs
    (w1, w2, wq_limit). ``delta`` may be supplied directly or derived as
    w2/w1; if both are given they must agree.
    """

    w1: Optional[float] = None
    w2: Optional[float] = None
    delta: Optional[float] = None
    s_bar: Optional[float] = None
    wq_bar: Optional[float] = None
    wq_limit: Optional[float] = None

    def __post_init__(self):
        for name in ("w1", "w2"):
            v = getattr(self, name)
            if v is not None and (not isinstance(v, (int, float)) or v < 0):
                raise ValidationError(f"{name} must be >= 0, got {v!r}")
        for name in ("s_bar", "wq_bar", "wq_limit"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValidationError(f"{name} must be > 0, got {v!r}")
        if self.delta is not None and self.delta < 0:
            raise ValidationError(f"delta must be >= 0, got {self.delta!r}")
        if self.delta is not None and self.w1 is not None and self.w2 is not None:
            derived = self._ratio(self.w2, self.w1)
            if not _close(self.delta, derived):
                raise ValidationError(
                    f"delta={self.delta} inconsistent with w2/w1={derived}"
                )

    @staticmethod
    def _ratio(w2: float, w1: float) -> float:
        if w1 > 0:
            return w2 / w1
        return math.inf if w2 > 0 else 0.0

    @property
    def effective_delta(self) -> float:
        if self.delta is not None:
            return self.delta
        if self.w1 is None or self.w2 is None:
            raise ValidationError("delta not given and weights incomplete")
        if self.w1 == 0 and self.w2 == 0:
            raise ValidationError("delta cannot be derived from w1 = w2 = 0")
        return self._ratio(self.w2, self.w1)


def _close(x: float, y: float) -> bool:
    if math.isinf(x) or math.isinf(y):
        return x == y
    return abs(x - y) <= 1e-12 * max(1.0, abs(x), abs(y))


def cost(metrics: PerformanceMetrics, spec: CostSpec) -> float:
    """Weighted cost w1*Wq + w2*S."""
    if spec.w1 is None or spec.w2 is None:
        raise ValidationError("cost requires both w1 and w2")
    return spec.w1 * metrics.Wq + spec.w2 * metrics.S


def linear_cost(metrics: PerformanceMetrics, weights: Mapping[str, float]) -> float:
    """Generalized linear cost over any subset of {L, W, Wq, Pb, S}."""
    return sum(w * metrics.value(name) for name, w in weights.items())


@dataclass(frozen=True)
class ScanRow:
    k: int
    Wq: float
    S: float
    cost: Optional[float]


@dataclass(frozen=True)
class OptimizationResult:
    k_op: int
    cost: Optional[float]
    metrics_at_k: PerformanceMetrics
    feasible: bool
    scan: tuple


class KScan:
    """Lazily solved per-k metrics table for one base configuration.

    The base params' own k is irrelevant; each evaluation replaces it. The
    largest admissible k keeps every server usable within capacity K.
    """

    def __init__(self, base: SystemParams, k_max: Optional[int] = None):
        hard_max = base.K - base.n0
        if k_max is None:
            k_max = hard_max
        if not 0 <= k_max <= hard_max:
            raise ValidationError(f"k_max must be within 0..{hard_max}, got {k_max}")
        self.base = base
        self.k_max = k_max
        self._cache: dict[int, PerformanceMetrics] = {}

    def metrics(self, k: int) -> PerformanceMetrics:
        if k not in self._cache:
            self._cache[k] = solve(self.base.with_k(k)).metrics
        return self._cache[k]

    def select_k_threshold(self, spec: CostSpec) -> int:
        """First k whose normalized cost-to-delay ratio reaches delta.

        A zero delay makes extra instances pointless, so the ratio is taken
        as infinite and the walk stops at the current k. If every k keeps
        the ratio below delta the walk exhausts at the largest k.
        """
        if spec.s_bar is None or spec.wq_bar is None:
            raise ValidationError("threshold selection requires s_bar and wq_bar")
        delta = spec.effective_delta
        k = 0
        while k <= self.k_max:
            m = self.metrics(k)
            s_norm = m.S / spec.s_bar
            wq_norm = m.Wq / spec.wq_bar
            ratio = math.inf if wq_norm == 0.0 else s_norm / wq_norm
            if ratio < delta:
                k += 1
            else:
                return k
        return self.k_max

    def argmin_k(self, spec: CostSpec) -> OptimizationResult:
        """Exhaustive minimizer of the weighted cost under the delay bound.

        Among k with Wq(k) < wq_limit, returns the lowest-cost k (smallest k
        on ties). With no feasible k the result is flagged infeasible and
        falls back to the k with the smallest delay.
        """
        if spec.w1 is None or spec.w2 is None or spec.wq_limit is None:
            raise ValidationError("exhaustive selection requires w1, w2, wq_limit")
        rows = []
        best_k = None
        best_cost = math.inf
        min_wq_k = 0
        min_wq = math.inf
        for k in range(self.k_max + 1):
            m = self.metrics(k)
            c = cost(m, spec)
            rows.append(ScanRow(k=k, Wq=m.Wq, S=m.S, cost=c))
            if m.Wq < min_wq:
                min_wq = m.Wq
                min_wq_k = k
            if m.Wq < spec.wq_limit and c < best_cost:
                best_cost = c
                best_k = k
        feasible = best_k is not None
        k_op = best_k if feasible else min_wq_k
        return OptimizationResult(
            k_op=k_op,
            cost=cost(self.metrics(k_op), spec),
            metrics_at_k=self.metrics(k_op),
            feasible=feasible,
            scan=tuple(rows),
        )

    def threshold_result(self, spec: CostSpec) -> OptimizationResult:
        """Threshold selection packaged with the scan rows walked so far."""
        k_op = self.select_k_threshold(spec)
        have_weights = spec.w1 is not None and spec.w2 is not None
        rows = tuple(
            ScanRow(
                k=k,
                Wq=self._cache[k].Wq,
                S=self._cache[k].S,
                cost=cost(self._cache[k], spec) if have_weights else None,
            )
            for k in sorted(self._cache)
        )
        m = self.metrics(k_op)
        feasible = m.Wq < spec.wq_limit if spec.wq_limit is not None else True
        return OptimizationResult(
            k_op=k_op,
            cost=cost(m, spec) if have_weights else None,
            metrics_at_k=m,
            feasible=feasible,
            scan=rows,
        )


def select_k_threshold(base: SystemParams, spec: CostSpec, k_max: Optional[int] = None) -> int:
    return KScan(base, k_max=k_max).select_k_threshold(spec)


def argmin_k(base: SystemParams, spec: CostSpec, k_max: Optional[int] = None) -> OptimizationResult:
    return KScan(base, k_max=k_max).argmin_k(spec)
