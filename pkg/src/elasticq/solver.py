"""Exact stationary analysis of the scaling chain.

Two independent routes are provided. The fast route exploits the chain's
level structure: within one level the balance equations couple only three
neighboring states, so a backward sweep produces coefficients (a, b) with
``pi[i][j] = a[j] + b[j] * pi[i][j-1]`` and a forward sweep then fills the
level in one pass; levels are chained through a cut-flow identity that gives
each level's entry mass. Total work is proportional to the number of states.

The slow route (`dense_oracle`) ignores that structure entirely: it builds
the full generator from the raw transition rules and eliminates it directly.
Elimination follows the Grassmann-Taksar-Heyman scheme, which recomputes
pivots as sums of current off-diagonal rates and therefore never subtracts;
every stationary probability comes out with small componentwise relative
error, even entries far below the largest one. That is what makes the oracle
usable as a per-state reference for the fast route.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (
    NumericalFaultError,
    OracleSizeError,
    PerformanceMetrics,
    StateSpace,
    StationaryDistribution,
    SystemParams,
    build_state_space,
)

# Unnormalized masses are rescaled by RESCALE_FACTOR whenever they exceed
# RESCALE_THRESHOLD; normalization at the end absorbs the factor.
RESCALE_THRESHOLD = 1e250
RESCALE_FACTOR = 1e-250

_BOUND_SLACK = 1e-12

DENSE_ORACLE_MAX_STATES = 20_000


@dataclass(frozen=True)
class RecursionCoefficients:
    """Per-level recursion coefficients, indexed directly by job count j.

    Entries outside the level's recursion range are zero. Level 0 has a == 0
    everywhere and b defined for j = 1..K; level i >= 1 has a, b defined for
    j = n_i+1..K.
    """

    level: int
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        for name in ("a", "b"):
            arr = np.asarray(getattr(self, name), dtype=float).copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)


@dataclass(frozen=True)
class SolveReport:
    """Result of one exact solve."""

    distribution: StationaryDistribution
    metrics: PerformanceMetrics
    rescale_events: int
    max_balance_residual: float
    op_count: int

    @property
    def params(self) -> SystemParams:
        return self.distribution.state_space.params


def _fault(msg: str) -> NumericalFaultError:
    return NumericalFaultError(f"numerical fault in recursion: {msg}")


def _level0_lists(p: SystemParams):
    """Coefficients b and unnormalized masses for level 0, pi[0][0] = 1."""
    lam, mu, alpha, n0, N, K = p.lam, p.mu, p.alpha, p.n0, p.N, p.K
    b = [0.0] * (K + 1)
    ops = 0
    for j in range(1, n0 + 1):
        b[j] = lam / (j * mu)
        ops += 2
    if K > n0:
        if N == n0:
            # no dynamic block: above n0 the backward map holds the exact
            # constant lam/(n0 mu); iterating it would only accumulate drift
            # (the fixed point repels when lam exceeds the service capacity)
            ratio = lam / (n0 * mu)
            for j in range(n0 + 1, K + 1):
                b[j] = ratio
                ops += 1
        else:
            b[K] = lam / (n0 * mu + (N - n0) * alpha)
            ops += 4
            n0mu = n0 * mu
            base = lam + n0mu
            for j in range(K - 1, n0, -1):
                den = base + min(j - n0, N - n0) * alpha - n0mu * b[j + 1]
                if not den > 0.0:
                    raise _fault(f"level 0 denominator {den} at j={j}")
                b[j] = lam / den
                ops += 6
    pi = [0.0] * (K + 1)
    pi[0] = 1.0
    for j in range(1, K + 1):
        if not b[j] > 0.0:
            raise _fault(f"level 0 coefficient b[{j}] = {b[j]}")
        pi[j] = b[j] * pi[j - 1]
        ops += 1
    return b, pi, ops


def _boundary(p: SystemParams, i: int, pi_prev):
    """Entry mass of level i+1 from the cut between levels <= i and > i.

    Every upward crossing is a setup completion out of level i; every
    downward crossing is the service that idles the (i+1)-th instance.
    """
    lam, mu, alpha, N, K = p.lam, p.mu, p.alpha, p.N, p.K
    ni = p.n_level(i)
    acc = 0.0
    ops = 0
    for j in range(ni + 1, K + 1):
        acc += min(j - ni, N - ni) * pi_prev[j]
        ops += 3
    return acc * alpha / ((ni + 1) * mu), ops + 3


def _level_lists(p: SystemParams, i: int, pi_prev, entry_mass: float):
    """Backward coefficient sweep plus forward fill for level i >= 1.

    The same expressions cover interior levels and the top level: at i = k
    the in-level setup term vanishes (every instance is active) and the
    feeding level has exactly one instance left to finish setup.
    """
    lam, mu, alpha, N, K = p.lam, p.mu, p.alpha, p.N, p.K
    ni = p.n_level(i)
    nprev = ni - 1
    a = [0.0] * (K + 1)
    b = [0.0] * (K + 1)
    pi = [0.0] * (K + 1)
    pi[ni] = entry_mass
    ops = 0
    if K > ni:
        nimu = ni * mu
        if ni == N:
            # top level: nothing is left to set up, so the backward map's
            # denominator is exactly nimu and b is the exact constant
            # lam/(nimu); direct evaluation avoids the repelling drift the
            # iteration suffers when lam exceeds the full-farm capacity
            ratio = lam / nimu
            feed = (N - nprev) * alpha
            a[K] = feed * pi_prev[K] / nimu
            b[K] = ratio
            ops += 4
            for j in range(K - 1, ni, -1):
                a[j] = a[j + 1] + feed * pi_prev[j] / nimu
                b[j] = ratio
                ops += 3
        else:
            den = (N - ni) * alpha + nimu
            a[K] = (N - nprev) * alpha * pi_prev[K] / den
            b[K] = lam / den
            ops += 7
            base = lam + nimu
            cap_in = N - nprev
            cap_out = N - ni
            for j in range(K - 1, ni, -1):
                den = base + min(cap_out, j - ni) * alpha - nimu * b[j + 1]
                if not den > 0.0:
                    raise _fault(f"level {i} denominator {den} at j={j}")
                a[j] = (nimu * a[j + 1] + min(cap_in, j - nprev) * alpha * pi_prev[j]) / den
                b[j] = lam / den
                ops += 11
        cap_out = N - ni
        for j in range(ni + 1, K + 1):
            bj = b[j]
            bound = lam / (nimu + min(cap_out, j - ni) * alpha)
            if not bj > 0.0 or bj > bound * (1.0 + _BOUND_SLACK):
                raise _fault(f"level {i} coefficient b[{j}] = {bj} exceeds bound {bound}")
            if a[j] < 0.0:
                raise _fault(f"level {i} coefficient a[{j}] = {a[j]} negative")
            ops += 3
        for j in range(ni + 1, K + 1):
            pi[j] = a[j] + b[j] * pi[j - 1]
            ops += 2
    return a, b, pi, ops


def solve_level0(params: SystemParams):
    """Level-0 coefficients and unnormalized masses (pi[0][0] seeded to 1)."""
    b, pi, _ = _level0_lists(params)
    coeffs = RecursionCoefficients(level=0, a=np.zeros(params.K + 1), b=np.array(b))
    return coeffs, np.array(pi)


def boundary_mass(params: SystemParams, i: int, pi_level) -> float:
    """Unnormalized mass of state (i+1, n_{i+1}) given level i's masses.

    ``pi_level`` is indexed directly by job count j.
    """
    if not 0 <= i < params.k:
        raise NumericalFaultError(f"no level above i={i} for k={params.k}")
    value, _ = _boundary(params, i, np.asarray(pi_level, dtype=float))
    return value


def solve_level(params: SystemParams, i: int, pi_prev, entry_mass: float):
    """Coefficients and unnormalized masses for level i >= 1."""
    if not 1 <= i <= params.k:
        raise NumericalFaultError(f"level {i} outside 1..{params.k}")
    a, b, pi, _ = _level_lists(params, i, np.asarray(pi_prev, dtype=float), entry_mass)
    return RecursionCoefficients(level=i, a=np.array(a), b=np.array(b)), np.array(pi)


def solve(params: SystemParams) -> SolveReport:
    """Stationary distribution and metrics by the level recursion.

    Work (tracked in ``op_count``) is proportional to the state count.
    """
    space = build_state_space(params)
    ops = 0
    _, pi0, c = _level0_lists(params)
    ops += c
    levels = [pi0]
    rescale_events = 0
    running_max = max(pi0)
    for i in range(1, params.k + 1):
        entry, c = _boundary(params, i - 1, levels[i - 1])
        ops += c
        _, _, pi_i, c = _level_lists(params, i, levels[i - 1], entry)
        ops += c
        levels.append(pi_i)
        running_max = max(running_max, max(pi_i))
        if running_max > RESCALE_THRESHOLD:
            for level in levels:
                for j in range(len(level)):
                    level[j] *= RESCALE_FACTOR
            running_max *= RESCALE_FACTOR
            rescale_events += 1
            ops += sum(len(level) for level in levels)

    flat = np.empty(space.total_states)
    flat[: params.K + 1] = levels[0]
    for i in range(1, params.k + 1):
        lo = space.level_offsets[i]
        flat[lo : lo + params.K - params.n_level(i) + 1] = levels[i][params.n_level(i) :]
    total = flat.sum()
    if not np.isfinite(total) or total <= 0.0:
        raise _fault(f"unnormalized total mass {total}")
    flat /= total
    ops += 2 * space.total_states

    dist = StationaryDistribution(state_space=space, pi=flat)
    mets = compute_metrics(dist)
    ops += 5 * space.total_states
    residual = max_balance_residual(dist)
    ops += 10 * space.total_states
    return SolveReport(
        distribution=dist,
        metrics=mets,
        rescale_events=rescale_events,
        max_balance_residual=residual,
        op_count=ops,
    )


def compute_metrics(distribution: StationaryDistribution) -> PerformanceMetrics:
    """Evaluate L, W, Wq, Pb, S on a normalized distribution."""
    space = distribution.state_space
    p = space.params
    L = 0.0
    S = 0.0
    Pb = 0.0
    for i in range(p.k + 1):
        pi_i = distribution.level(i)
        lo = space.level_floor(i)
        j = np.arange(lo, p.K + 1)
        ni = p.n_level(i)
        in_setup = np.minimum(np.maximum(j - ni, 0), p.N - ni)
        L += float(pi_i @ j)
        S += float(pi_i @ ((ni - p.n0) + in_setup))
        Pb += float(pi_i[-1])
    if Pb >= 1.0:
        raise NumericalFaultError("blocking probability reached 1, response time undefined")
    W_little = L / (p.lam * (1.0 - Pb))
    inv_mu = 1.0 / p.mu
    Wq = W_little - inv_mu
    if Wq < 0.0:
        if Wq < -1e-9 * W_little:
            raise NumericalFaultError(f"queueing delay {Wq} significantly negative")
        Wq = 0.0
    # W is stored as Wq + 1/mu so the identity holds exactly in float.
    return PerformanceMetrics(L=L, W=Wq + inv_mu, Wq=Wq, Pb=Pb, S=S)


def max_balance_residual(distribution: StationaryDistribution) -> float:
    """Worst per-state |inflow - outflow| scaled by the state's outflow rate."""
    space = distribution.state_space
    p = space.params
    lam, mu, alpha = p.lam, p.mu, p.alpha
    worst = 0.0
    for i in range(p.k + 1):
        pi_i = distribution.level(i)
        lo = space.level_floor(i)
        ni = p.n_level(i)
        j = np.arange(lo, p.K + 1)
        in_setup = np.minimum(np.maximum(j - ni, 0), p.N - ni)
        srv = np.minimum(j, p.n0) * mu if i == 0 else np.full(j.shape, ni * mu)
        out_rate = np.where(j < p.K, lam, 0.0) + srv + in_setup * alpha
        inflow = np.zeros_like(pi_i)
        inflow[1:] += lam * pi_i[:-1]
        inflow[:-1] += srv[1:] * pi_i[1:]
        if i >= 1:
            prev = distribution.level(i - 1)
            prev_lo = space.level_floor(i - 1)
            seg = prev[lo - prev_lo :]
            feed = np.minimum(j - (ni - 1), p.N - (ni - 1))
            inflow += feed * alpha * seg
        if i < p.k:
            nxt = space.params.n_level(i + 1)
            down = nxt * mu * distribution.prob(i + 1, nxt)
            inflow[ni - lo] += down
        worst = max(worst, float(np.max(np.abs(inflow - pi_i * out_rate) / out_rate)))
    return worst


def _build_generator(space: StateSpace) -> np.ndarray:
    """Dense generator from the raw transition rules.

    Arrivals move right within a level; services move left, dropping one
    level when the count falls below the level's floor; setup completions
    move up one level at the same job count, one rate unit per instance
    currently in setup.
    """
    p = space.params
    n = space.total_states
    Q = np.zeros((n, n))
    for i, j in space.states():
        s = space.encode(i, j)
        if j < p.K:
            Q[s, space.encode(i, j + 1)] += p.lam
        if j >= 1:
            srv = min(j, p.n0) * p.mu if i == 0 else p.n_level(i) * p.mu
            if i >= 1 and j - 1 < p.n_level(i):
                Q[s, space.encode(i - 1, j - 1)] += srv
            else:
                Q[s, space.encode(i, j - 1)] += srv
        c = space.setup_count(i, j)
        if c > 0:
            Q[s, space.encode(i + 1, j)] += c * p.alpha
    np.fill_diagonal(Q, Q.diagonal() - Q.sum(axis=1))
    return Q


def _gth_eliminate(Q: np.ndarray, block: int = 128) -> np.ndarray:
    """Stationary vector by subtraction-free elimination.

    States are censored from the last index down; each pivot is the sum of
    the current rates into the surviving set, so no cancellation occurs and
    the result is componentwise accurate. Updates to the leading submatrix
    are deferred per block and applied as one nonnegative-increment matrix
    product, which keeps the cost at dense-elimination speed.
    """
    A = np.array(Q, dtype=float)
    n = A.shape[0]
    if n == 1:
        return np.ones(1)
    hi = n
    while hi > 1:
        lo = max(hi - block, 0)
        nb = hi - lo
        if lo:
            C = np.empty((lo, nb))
            R = np.empty((nb, lo))
        # state 0 is never eliminated; it anchors the back-substitution
        for m in range(hi - 1, max(lo, 1) - 1, -1):
            s = A[m, :m].sum()
            if not s > 0.0:
                raise NumericalFaultError(
                    f"dense oracle pivot {s} at state {m}; chain not irreducible?"
                )
            A[:m, m] /= s
            if m > lo:
                A[lo:m, lo:m] += np.outer(A[lo:m, m], A[m, lo:m])
                if lo:
                    A[:lo, lo:m] += np.outer(A[:lo, m], A[m, lo:m])
                    A[lo:m, :lo] += np.outer(A[lo:m, m], A[m, :lo])
            if lo:
                C[:, m - lo] = A[:lo, m]
                R[m - lo, :] = A[m, :lo]
        if lo:
            A[:lo, :lo] += C @ R
        hi = lo
    pi = np.zeros(n)
    pi[0] = 1.0
    for m in range(1, n):
        pi[m] = pi[:m] @ A[:m, m]
    return pi / pi.sum()


def dense_oracle(
    params: SystemParams, *, max_states: int = DENSE_ORACLE_MAX_STATES
) -> StationaryDistribution:
    """Reference stationary distribution from the full generator.

    Guarded to ``max_states`` states; this route is cubic and exists to
    validate the recursion, not to replace it.
    """
    space = build_state_space(params)
    if space.total_states > max_states:
        raise OracleSizeError(
            f"dense oracle limited to {max_states} states, got {space.total_states}"
        )
    pi = _gth_eliminate(_build_generator(space))
    return StationaryDistribution(state_space=space, pi=pi)
