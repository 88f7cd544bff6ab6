import math

import numpy as np
import pytest

import oracles
from pinning import annealed as ann
from pinning.gaussenv import CorrelationSpec, sample_environment, sample_environments
from pinning.quenched import (FreeEnergyEstimate, GridError, ModelParams, PartitionFloor,
                              RewardFloor, contact_fraction, critical_point_scan,
                              free_energy_on_envs, gap_cost_rate, quenched_free_energy,
                              quenched_partition, strategy_lower_bound)
from pinning.renewal import build_law, free_energy_from_law, homogeneous_partition_dp

SP = CorrelationSpec.shifted_power


@pytest.fixture(scope="module")
def law15():
    return build_law(1.5)


@pytest.fixture(scope="module")
def law05():
    return build_law(0.5)


def test_zero_disorder_matches_homogeneous(law15):
    env = sample_environment(SP(2.0), 500, seed=1).values
    got = quenched_partition(law15, ModelParams(0.0, 0.3), env).logz
    ref = homogeneous_partition_dp(law15, 0.3, 500).logz
    assert np.max(np.abs(got - ref)) <= 1e-12 * max(1.0, np.max(np.abs(ref)))


def test_single_site(law15):
    tr = quenched_partition(law15, ModelParams(0.8, -0.2), np.array([1.3]))
    assert tr.logz[1] == pytest.approx(math.log(law15.mass[1]) - 0.2 + 0.8 * 1.3, abs=1e-14)


def test_matches_enumeration():
    law = build_law(0.7, n_max=32)
    rng = np.random.default_rng(3)
    for N in (1, 2, 5, 9, 12):
        env = rng.standard_normal(N)
        p = ModelParams(1.1, -0.4)
        got = quenched_partition(law, p, env).logz[N]
        assert got == pytest.approx(oracles.quenched_log_z(law.mass, p.h + p.beta * env), abs=1e-11)


def test_trace_carries_environment_context(law15):
    env = sample_environment(SP(2.0), 64, seed=4, stream=2)
    tr = quenched_partition(law15, ModelParams(1.0, 0.0), env)
    assert tr.context["seed"] == 4 and tr.context["stream"] == 2
    assert tr.context["spec"]["a"] == 2.0


def test_zero_disorder_free_energy_close_to_limit(law05):
    est = quenched_free_energy(law05, ModelParams(0.0, 1.0), SP(2.0), 1024, 8, seed=0)
    assert est.std_err == 0 and est.mode == "homogeneous"
    assert abs(est.value - free_energy_from_law(law05, 1.0)) <= 2 / 1024


def test_too_few_replicas(law15):
    with pytest.raises(ValueError, match="at least 8 replicas"):
        quenched_free_energy(law15, ModelParams(1.0, 0.0), SP(2.0), 64, 4, seed=0)


def test_estimate_validation():
    with pytest.raises(ValueError):
        FreeEnergyEstimate(0.1, -1.0, 10, 8, "quenched")
    with pytest.raises(ValueError):
        FreeEnergyEstimate(0.1, 0.2, 10, 1, "homogeneous")
    with pytest.raises(ValueError):
        ModelParams(-0.1, 0.0)


def test_jensen_against_exact_annealed(law15):
    # truncated correlations make the finite-N annealed partition function exact
    spec = CorrelationSpec.truncated(2.0, 10)
    N = 256
    for h in (-1.0, -0.3, 0.2):
        p = ModelParams(0.8, h)
        q = quenched_free_energy(law15, p, spec, N, 32, seed=2)
        cfg = ann.AnnealedConfig(law15, spec, p, m=10)
        fa = ann.annealed_transfer(cfg, N).logz[N] / N
        assert q.value <= fa + 3 * q.std_err


def test_deep_delocalized_regime(law15):
    # a = 2, beta = 1: one unit below the annealed critical point
    cp = ann.annealed_critical_point(ann.AnnealedConfig(law15, SP(2.0), ModelParams(1.0, 0.0), m=12))
    h = cp.bracket[0] - 1.0
    vals = []
    for N in (512, 1024, 2048):
        est = quenched_free_energy(law15, ModelParams(1.0, h), SP(2.0), N, 16, seed=0)
        assert est.value <= 3 * est.std_err
        vals.append(est.value)
    # the finite-size deficit shrinks towards the zero limit
    assert abs(vals[0]) >= abs(vals[1]) >= abs(vals[2])


def test_monotone_and_convex_in_h(law15):
    envs = sample_environments(SP(2.0), 256, 5, range(8))
    hs = np.linspace(-1.0, 1.0, 9)
    vals = np.array([free_energy_on_envs(law15, ModelParams(1.0, h), envs).value for h in hs])
    # identical environments: the replica mean itself is monotone and convex
    assert np.all(np.diff(vals) >= -1e-12)
    assert np.all(np.diff(vals, 2) >= -1e-12)


def test_contact_fraction_extremes(law05):
    env = sample_environment(SP(2.0), 1024, seed=0)
    assert contact_fraction(law05, ModelParams(0.0, 20.0), env) >= 0.99
    assert contact_fraction(law05, ModelParams(0.0, -20.0), env) <= 0.05


def test_contact_fraction_matches_enumeration():
    law = build_law(1.2, n_max=32)
    rng = np.random.default_rng(8)
    for N in (3, 7, 12):
        env = rng.standard_normal(N)
        p = ModelParams(0.6, 0.1)
        ref = oracles.quenched_mean_contacts(law.mass, p.h + p.beta * env)
        assert contact_fraction(law, p, env) == pytest.approx(ref, abs=1e-6)


def test_threads_do_not_change_results(law15):
    a = quenched_free_energy(law15, ModelParams(1.0, 0.1), SP(2.0), 256, 24, seed=3, threads=1)
    b = quenched_free_energy(law15, ModelParams(1.0, 0.1), SP(2.0), 256, 24, seed=3, threads=4)
    assert a.value == b.value and a.std_err == b.std_err


def test_scan_without_disorder_brackets_zero(law15):
    res = critical_point_scan(law15, 0.0, SP(2.0), 2048, 8, np.arange(-0.5, 0.51, 0.1))
    assert res.bracket[0] < 0 <= res.bracket[1] + 1e-12


def test_scan_iid_below_annealed(law15):
    grid = np.round(np.arange(-1.0, 0.51, 0.1), 10)
    res = critical_point_scan(law15, 0.5, CorrelationSpec.iid(), 1024, 16, grid, seed=1)
    for h, est in zip(res.h_grid, res.estimates):
        fa = free_energy_from_law(law15, h + 0.125)
        assert est.value <= fa + 3 * est.std_err


def test_scan_grid_errors(law15):
    with pytest.raises(GridError, match="h_c outside grid"):
        critical_point_scan(law15, 1.0, SP(2.0), 256, 8, [1.0, 1.5, 2.0])
    with pytest.raises(GridError, match="h_c outside grid"):
        critical_point_scan(law15, 1.0, SP(2.0), 256, 8, [-6.0, -5.0])
    with pytest.raises(ValueError):
        critical_point_scan(law15, 1.0, SP(2.0), 256, 8, [0.0, -1.0])
    with pytest.raises(ValueError, match="threshold"):
        critical_point_scan(law15, 1.0, SP(2.0), 256, 8, [0.0, 1.0], threshold=2.0)


def test_strategy_all_good_is_block_average(law15):
    p = ModelParams(1.0, 0.2)
    b = strategy_lower_bound(law15, p, SP(2.0), 16, 64, rule=PartitionFloor(-math.inf), seed=0)
    envs = sample_environments(SP(2.0), 17, 0, range(64))
    lz = np.array([quenched_partition(law15, p, e[1:]).logz[16] for e in envs])
    assert b.log_p == 0.0
    assert b.rate == pytest.approx(lz.mean() / 16, rel=1e-12)


def test_strategy_bound_below_direct_estimate(law05):
    p = ModelParams(1.0, 0.0)
    direct = quenched_free_energy(law05, p, SP(0.5), 1024, 16, seed=0)
    b = strategy_lower_bound(law05, p, SP(0.5), 16, 2000, rule=RewardFloor(), seed=0)
    assert b.status == "ok"
    assert b.value <= direct.value + 3 * direct.std_err


def test_strategy_refusals(law15):
    with pytest.raises(ValueError):
        strategy_lower_bound(law15, ModelParams(1.0, -1.0), SP(0.5), 1, 100)
    with pytest.raises(ValueError):
        strategy_lower_bound(law15, ModelParams(0.0, -1.0), SP(0.5), 8, 100)


def test_gap_cost_decreasing_in_p(law15):
    costs = [gap_cost_rate(law15, 32, math.log(p)) for p in (1e-6, 1e-3, 0.1, 0.5, 0.9)]
    assert all(c1 >= c2 for c1, c2 in zip(costs, costs[1:]))
    assert gap_cost_rate(law15, 32, 0.0) == 0.0
    with pytest.raises(ValueError):
        gap_cost_rate(law15, 32, -1.0, entropy="other")
