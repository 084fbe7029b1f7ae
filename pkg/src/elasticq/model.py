"""Model configuration, state space, and probability containers.

The system is a finite-capacity FCFS queue served by a block of ``n0``
always-on servers plus up to ``k`` dynamic instances that are powered on
(after an exponential setup delay, rate ``alpha``) whenever the job count
crosses a per-instance threshold, and powered off instantly when it drops
back below. A state is a pair ``(i, j)``: ``i`` active dynamic instances,
``j`` jobs in the system.
"""

from __future__ import annotations

import numbers
from bisect import bisect_right
from dataclasses import dataclass, field, replace

import numpy as np


class ValidationError(ValueError):
    """A parameter or configuration violates a stated constraint."""


class StateDomainError(ValidationError):
    """A (level, jobs) pair is outside the chain's state space."""


class NumericalFaultError(ArithmeticError):
    """The solver produced a value its own invariants forbid."""


class OracleSizeError(ValidationError):
    """The dense oracle was asked to solve a chain above its size guard."""


class ParamsMismatchError(ValidationError):
    """Two results that must share a configuration do not."""


PARAM_JSON_KEYS = ("lambda", "mu", "alpha", "n0", "k", "K")


def _as_int(name: str, value) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise ValidationError(f"{name} must be an integer, got {value!r}")
    return int(value)


def _as_rate(name: str, value) -> float:
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise ValidationError(f"{name} must be a real number, got {value!r}")
    value = float(value)
    if not value > 0.0 or value != value or value == float("inf"):
        raise ValidationError(f"{name} must be finite and > 0, got {value}")
    return value


@dataclass(frozen=True)
class SystemParams:
    """Full model configuration.

    lam    arrival rate (jobs/s)
    mu     per-server service rate (jobs/s)
    alpha  per-instance setup completion rate (1/s)
    n0     always-on server count
    k      dynamic instance count
    K      system capacity (max jobs in system)
    """

    lam: float
    mu: float
    alpha: float
    n0: int
    k: int
    K: int

    def __post_init__(self):
        object.__setattr__(self, "lam", _as_rate("lambda", self.lam))
        object.__setattr__(self, "mu", _as_rate("mu", self.mu))
        object.__setattr__(self, "alpha", _as_rate("alpha", self.alpha))
        object.__setattr__(self, "n0", _as_int("n0", self.n0))
        object.__setattr__(self, "k", _as_int("k", self.k))
        object.__setattr__(self, "K", _as_int("K", self.K))
        if self.n0 < 1:
            raise ValidationError(f"n0 must be >= 1, got {self.n0}")
        if self.k < 0:
            raise ValidationError(f"k must be >= 0, got {self.k}")
        if self.K < self.N:
            raise ValidationError(
                f"K must be >= n0 + k = {self.N} (capacity below server count), got K={self.K}"
            )

    @property
    def N(self) -> int:
        """Total server count with every dynamic instance active."""
        return self.n0 + self.k

    def n_level(self, i: int) -> int:
        """Server count n_i = n0 + i with i dynamic instances active."""
        if not 0 <= i <= self.k:
            raise StateDomainError(f"level {i} outside 0..{self.k}")
        return self.n0 + i

    def power_up_threshold(self, i: int) -> int:
        """Job count at which the i-th instance (1-based) begins setup."""
        if not 1 <= i <= self.k:
            raise StateDomainError(f"instance index {i} outside 1..{self.k}")
        return self.n0 + i

    def power_down_threshold(self, i: int) -> int:
        """Job count at which the i-th instance (1-based) switches off."""
        if not 1 <= i <= self.k:
            raise StateDomainError(f"instance index {i} outside 1..{self.k}")
        return self.n0 + i - 1

    def with_k(self, k: int) -> "SystemParams":
        return replace(self, k=k)

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "mu": self.mu,
            "alpha": self.alpha,
            "n0": self.n0,
            "k": self.k,
            "K": self.K,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SystemParams":
        unknown = set(data) - set(PARAM_JSON_KEYS)
        if unknown:
            raise ValidationError(f"unknown parameter fields: {sorted(unknown)}")
        missing = set(PARAM_JSON_KEYS) - set(data)
        if missing:
            raise ValidationError(f"missing parameter fields: {sorted(missing)}")
        return cls(
            lam=data["lambda"],
            mu=data["mu"],
            alpha=data["alpha"],
            n0=_coerce_integral("n0", data["n0"]),
            k=_coerce_integral("k", data["k"]),
            K=_coerce_integral("K", data["K"]),
        )


def _coerce_integral(name: str, value):
    # JSON may carry 110.0 for an integer field; accept only exact integers.
    if isinstance(value, float):
        if not value.is_integer():
            raise ValidationError(f"{name} must be an integer, got {value!r}")
        return int(value)
    return value


@dataclass(frozen=True)
class StateSpace:
    """Enumeration of states (i, j) with a flat, per-level-contiguous layout.

    Level 0 holds j = 0..K; level i >= 1 holds j = n_i..K. ``level_offsets[i]``
    is the flat index of state (i, n_i), so for every level the flat index of
    (i, j) is ``level_offsets[i] + (j - n_i)``.
    """

    params: SystemParams
    level_offsets: tuple = field(init=False)
    total_states: int = field(init=False)

    def __post_init__(self):
        p = self.params
        offsets = [p.n0]
        start = p.K + 1
        for i in range(1, p.k + 1):
            offsets.append(start)
            start += p.K - p.n_level(i) + 1
        object.__setattr__(self, "level_offsets", tuple(offsets))
        object.__setattr__(self, "total_states", start)

    def level_floor(self, i: int) -> int:
        """Smallest job count with a state at level i."""
        return 0 if i == 0 else self.params.n_level(i)

    def is_state(self, i: int, j: int) -> bool:
        return 0 <= i <= self.params.k and self.level_floor(i) <= j <= self.params.K

    def encode(self, i: int, j: int) -> int:
        if not self.is_state(i, j):
            raise StateDomainError(f"({i}, {j}) is not a state of this chain")
        return self.level_offsets[i] + (j - self.params.n_level(i))

    def decode(self, index: int) -> tuple:
        if not 0 <= index < self.total_states:
            raise StateDomainError(f"flat index {index} outside 0..{self.total_states - 1}")
        starts = self._level_starts
        i = bisect_right(starts, index) - 1
        return i, index - self.level_offsets[i] + self.params.n_level(i)

    @property
    def _level_starts(self) -> tuple:
        # Flat index of each level's first state; level 0 starts at (0, 0).
        return (0,) + self.level_offsets[1:]

    def setup_count(self, i: int, j: int) -> int:
        """Instances in setup at state (i, j): min(max(j - n_i, 0), N - n_i)."""
        if not self.is_state(i, j):
            raise StateDomainError(f"({i}, {j}) is not a state of this chain")
        ni = self.params.n_level(i)
        return min(max(j - ni, 0), self.params.N - ni)

    def states(self):
        """Yield (i, j) in flat-index order."""
        p = self.params
        for j in range(p.K + 1):
            yield 0, j
        for i in range(1, p.k + 1):
            for j in range(p.n_level(i), p.K + 1):
                yield i, j


def build_state_space(params: SystemParams) -> StateSpace:
    return StateSpace(params)


def setup_count(state_space: StateSpace, i: int, j: int) -> int:
    return state_space.setup_count(i, j)


@dataclass(frozen=True)
class StationaryDistribution:
    """Normalized stationary probabilities over a StateSpace, flat layout."""

    state_space: StateSpace
    pi: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.pi, dtype=float)
        if arr.shape != (self.state_space.total_states,):
            raise ValidationError(
                f"pi must have {self.state_space.total_states} entries, got shape {arr.shape}"
            )
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "pi", arr)

    def prob(self, i: int, j: int) -> float:
        return float(self.pi[self.state_space.encode(i, j)])

    def level(self, i: int) -> np.ndarray:
        """Probabilities of level i, indexed from its lowest job count."""
        space = self.state_space
        lo = space.encode(i, space.level_floor(i))
        hi = space.encode(i, space.params.K)
        return self.pi[lo : hi + 1]

    def total(self) -> float:
        return float(self.pi.sum())


@dataclass(frozen=True)
class PerformanceMetrics:
    """Stationary performance figures for one solved configuration."""

    L: float   # mean jobs in system
    W: float   # mean response time of accepted jobs, equals Wq + 1/mu
    Wq: float  # mean queueing delay of accepted jobs
    Pb: float  # blocking probability
    S: float   # mean dynamic instances active or in setup

    def to_dict(self) -> dict:
        return {"L": self.L, "W": self.W, "Wq": self.Wq, "Pb": self.Pb, "S": self.S}

    METRIC_NAMES = ("L", "W", "Wq", "Pb", "S")

    def value(self, name: str) -> float:
        if name not in self.METRIC_NAMES:
            raise ValidationError(f"unknown metric {name!r}")
        return getattr(self, name)
