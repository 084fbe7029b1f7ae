import math

import numpy as np
import pytest

from elasticq import (
    DistributionSpec,
    ParamsMismatchError,
    SimConfig,
    SystemParams,
    ValidationError,
    compare,
    simulate,
    simulate_once,
    solve,
)
from oracles import mmck_metrics

SMALL = SystemParams(lam=1.5, mu=1.0, alpha=0.25, n0=2, k=2, K=7)


def test_distribution_families_and_parse():
    d = DistributionSpec.parse("erlang:5", mean=0.5)
    assert (d.family, d.mean, d.shape) == ("erlang", 0.5, 5.0)
    assert DistributionSpec.parse("exponential", 2.0).is_exponential
    assert DistributionSpec.parse("uniform", 1.0).shape == 1.0
    assert DistributionSpec.parse("truncated-normal:0.4", 1.0).shape == 0.4
    assert d.spec_string() == "erlang:5"


@pytest.mark.parametrize(
    "text,mean",
    [
        ("gamma", 1.0),              # unknown family
        ("exponential", -1.0),       # nonpositive mean
        ("pareto:1", 1.0),           # mean would not exist
        ("pareto", 1.0),             # shape required
        ("erlang:2.5", 1.0),         # fractional phase count
        ("erlang", 1.0),             # shape required
        ("uniform:1.5", 1.0),        # support would go negative
        ("truncated-normal:0", 1.0), # degenerate sigma
        ("exponential:2", 1.0),      # takes no shape
    ],
)
def test_distribution_validation(text, mean):
    with pytest.raises(ValidationError):
        DistributionSpec.parse(text, mean)


def test_sampler_statistics():
    rng = np.random.default_rng(3)
    n = 40_000
    for text, mean in [
        ("exponential", 2.0),
        ("deterministic", 2.0),
        ("erlang:4", 2.0),
        ("uniform:0.5", 2.0),
        ("pareto:2.5", 2.0),
    ]:
        spec = DistributionSpec.parse(text, mean)
        sample = spec.sampler(rng)
        xs = np.array([sample() for _ in range(n)])
        assert np.all(xs >= 0)
        assert xs.mean() == pytest.approx(mean, rel=0.1)
    # truncation keeps draws nonnegative even when sigma dwarfs the mean
    spec = DistributionSpec.parse("truncated-normal:5.0", 0.5)
    sample = spec.sampler(rng)
    xs = np.array([sample() for _ in range(4_000)])
    assert np.all(xs >= 0)


def test_sim_config_validation():
    assert SimConfig(horizon=100.0).warmup == pytest.approx(10.0)
    with pytest.raises(ValidationError, match="horizon"):
        SimConfig(horizon=0.0)
    with pytest.raises(ValidationError, match="warmup"):
        SimConfig(horizon=10.0, warmup=10.0)
    with pytest.raises(ValidationError, match="replications"):
        SimConfig(horizon=10.0, replications=1)
    with pytest.raises(ValidationError, match="seed"):
        SimConfig(horizon=10.0, seed=-1)


def test_config_distribution_mean_must_match_rates():
    cfg = SimConfig(horizon=100.0, service=DistributionSpec("exponential", 0.9))
    with pytest.raises(ParamsMismatchError, match="service"):
        simulate(SMALL, cfg)


def test_same_seed_is_bit_identical():
    cfg = SimConfig(horizon=5e3, replications=3, seed=9)
    assert simulate(SMALL, cfg) == simulate(SMALL, cfg)
    cfg_g = SimConfig(
        horizon=2e3, replications=2, seed=9, service=DistributionSpec("erlang", 1.0, 3)
    )
    assert simulate(SMALL, cfg_g) == simulate(SMALL, cfg_g)


def test_different_seeds_differ():
    a = simulate(SMALL, SimConfig(horizon=5e3, replications=2, seed=1))
    b = simulate(SMALL, SimConfig(horizon=5e3, replications=2, seed=2))
    assert a != b


def test_simulate_once_matches_full_run():
    cfg = SimConfig(horizon=5e3, replications=3, seed=4)
    result = simulate(SMALL, cfg)
    for r in range(3):
        assert simulate_once(SMALL, cfg, r) == result.replications[r]


def test_jit_and_python_jump_engines_agree_exactly():
    from elasticq.simulator import _jump_replication_py, _replication_seed

    cfg = SimConfig(horizon=2e3, replications=2, seed=21)
    rep = simulate_once(SMALL, cfg, 0)
    rng = np.random.Generator(np.random.Philox(_replication_seed(cfg, 0)))
    ring = np.empty(SMALL.K + 2)
    out = _jump_replication_py(
        rng, SMALL.lam, SMALL.mu, SMALL.alpha, SMALL.n0, SMALL.k, SMALL.K,
        cfg.horizon, cfg.warmup, ring,
    )
    assert out == (
        rep.area_jobs, rep.area_instances, rep.measured,
        rep.accepted, rep.blocked, rep.waits_sum, rep.waits_started,
    )


def test_engines_agree_statistically():
    cfg = SimConfig(horizon=3e4, replications=8, seed=5)
    jump = simulate(SMALL, cfg, engine="jump")
    event = simulate(SMALL, cfg, engine="event")
    ana = solve(SMALL).metrics
    for name in ("Wq", "S", "L"):
        for result in (jump, event):
            est = result.estimate(name)
            assert abs(est.mean - ana.value(name)) <= est.half_width + 1e-9


def test_empty_system_limit():
    p = SystemParams(lam=0.001, mu=1.0, alpha=0.005, n0=110, k=60, K=250)
    cfg = SimConfig(horizon=1e6, replications=2, seed=3)
    result = simulate(p, cfg)
    assert result.Wq.mean < 1e-3
    assert result.S.mean < 1e-3


def test_blocking_matches_closed_form_without_dynamic_block():
    p = SystemParams(lam=4.0, mu=1.0, alpha=1.0, n0=5, k=0, K=20)
    cfg = SimConfig(horizon=5e4, replications=30, seed=17)
    result = simulate(p, cfg)
    ref = mmck_metrics(4.0, 1.0, 5, 20)["Pb"]
    assert abs(result.Pb.mean - ref) <= result.Pb.half_width + 1e-9


def test_replication_protocol_covers_solver():
    cfg = SimConfig(horizon=3e5, replications=30, seed=42)
    result = simulate(SMALL, cfg)
    report = solve(SMALL)
    comparison = compare(report, result)
    assert comparison.row("Wq").covered
    assert comparison.row("S").covered


def test_conservation_and_identities():
    cfg = SimConfig(horizon=1e4, replications=3, seed=8)
    result = simulate(SMALL, cfg)
    for rep in result.replications:
        assert rep.measured == pytest.approx(cfg.horizon - cfg.warmup, rel=1e-9)
        assert rep.Pb == rep.blocked / (rep.accepted + rep.blocked)
        assert rep.L == rep.area_jobs / rep.measured
        assert rep.waits_started <= rep.accepted
    assert result.accepted_jobs == sum(r.accepted for r in result.replications)
    assert result.blocked_jobs == sum(r.blocked for r in result.replications)


def test_general_engine_all_families_smoke():
    for service in ("deterministic", "erlang:3", "uniform:0.8", "truncated-normal:0.5", "pareto:2.2"):
        cfg = SimConfig(
            horizon=2e3,
            replications=2,
            seed=6,
            service=DistributionSpec.parse(service, 1.0 / SMALL.mu),
        )
        result = simulate(SMALL, cfg)
        for name in result.METRIC_NAMES:
            assert math.isfinite(result.estimate(name).mean)
        assert result.S.mean <= SMALL.k


def test_general_engine_nonexponential_arrivals_and_setup():
    cfg = SimConfig(
        horizon=2e3,
        replications=2,
        seed=6,
        interarrival=DistributionSpec.parse("erlang:2", 1.0 / SMALL.lam),
        setup=DistributionSpec.parse("deterministic", 1.0 / SMALL.alpha),
    )
    result = simulate(SMALL, cfg)
    assert math.isfinite(result.Wq.mean)


def test_simultaneous_events_with_lattice_times():
    # deterministic arrivals and service produce exactly coincident events
    p = SystemParams(lam=2.0, mu=1.0, alpha=0.5, n0=1, k=2, K=5)
    cfg = SimConfig(
        horizon=500.0,
        replications=2,
        seed=1,
        interarrival=DistributionSpec.parse("deterministic", 0.5),
        service=DistributionSpec.parse("deterministic", 1.0),
    )
    result = simulate(p, cfg)
    assert math.isfinite(result.Wq.mean)
    assert result.Pb.mean <= 1.0


def test_compare_rejects_mismatched_params():
    perturbed = SystemParams(lam=1.6, mu=1.0, alpha=0.25, n0=2, k=2, K=7)
    cfg = SimConfig(horizon=2e3, replications=2, seed=2)
    sim_result = simulate(SMALL, cfg)
    with pytest.raises(ParamsMismatchError):
        compare(solve(perturbed), sim_result)


def test_compare_zero_load_gap():
    p = SystemParams(lam=0.001, mu=1.0, alpha=0.005, n0=110, k=60, K=250)
    cfg = SimConfig(horizon=1e5, replications=2, seed=3)
    comparison = compare(solve(p), simulate(p, cfg))
    wq_row = comparison.row("Wq")
    assert abs(wq_row.abs_gap) < 1e-3
    assert wq_row.covered  # absolute tolerance absorbs the degenerate interval


def test_workers_do_not_change_results():
    cfg = SimConfig(horizon=3e3, replications=4, seed=12)
    serial = simulate(SMALL, cfg)
    parallel = simulate(SMALL, cfg, workers=2)
    assert serial == parallel


def test_jump_engine_rejects_general_distributions():
    cfg = SimConfig(horizon=1e3, replications=2, service=DistributionSpec("erlang", 1.0, 2))
    with pytest.raises(ValidationError, match="jump engine"):
        simulate(SMALL, cfg, engine="jump")
