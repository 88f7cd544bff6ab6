import math

import numpy as np
import pytest
from scipy.linalg import cholesky

import oracles
from pinning import annealed as ann
from pinning.gaussenv import CorrelationSpec
from pinning.quenched import ModelParams
from pinning.renewal import (build_law, free_energy_from_law, homogeneous_partition_dp,
                             pinned_logz)

SP = CorrelationSpec.shifted_power
IID = CorrelationSpec.iid()


@pytest.fixture(scope="module")
def law15():
    return build_law(1.5)


@pytest.fixture(scope="module")
def law05():
    return build_law(0.5)


def cfg(law, spec, beta, h, m=12):
    return ann.AnnealedConfig(law, spec, ModelParams(beta, h), m=m)


def test_hamiltonian_examples(law15):
    c = cfg(law15, SP(2.0), 0.7, -0.3, m=None)
    assert ann.annealed_hamiltonian(c, [9], N=9) == pytest.approx(0.245 - 0.3)
    rho = SP(2.0).rho(5)
    assert ann.annealed_hamiltonian(c, [5, 9], N=9) == pytest.approx(
        2 * (0.245 - 0.3) + 0.49 * rho[4])
    with pytest.raises(ValueError, match="pinned endpoint"):
        ann.annealed_hamiltonian(c, [3, 5], N=9)


def test_brute_force_matches_enumeration():
    law = build_law(0.8, n_max=32)
    for N, a, beta, h in [(1, 2.0, 0.5, 0.1), (6, 0.5, 1.0, -0.7), (11, 3.0, 0.3, 0.2)]:
        c = cfg(law, SP(a), beta, h, m=None)
        ref = oracles.annealed_log_z(law.mass, SP(a).rho(N + 1), beta, h, N)
        assert ann.annealed_brute_force(c, N) == pytest.approx(ref, abs=1e-11)


def test_brute_force_refuses_large_n(law15):
    with pytest.raises(ValueError, match="too large"):
        ann.annealed_brute_force(cfg(law15, SP(2.0), 0.5, 0.0, m=None), 21)


def test_zero_disorder_is_homogeneous(law15):
    c = cfg(law15, SP(2.0), 0.0, 0.4, m=None)
    ref = homogeneous_partition_dp(law15, 0.4, 14).logz
    assert np.allclose(ann.annealed_log_partition(c, 14), ref, atol=1e-12, rtol=0)


def test_iid_is_shifted_homogeneous(law15):
    c = cfg(law15, IID, 0.9, -0.6, m=None)
    ref = homogeneous_partition_dp(law15, -0.6 + 0.405, 12).logz[12]
    assert ann.annealed_brute_force(c, 12) == pytest.approx(ref, abs=1e-12)


def test_monte_carlo_average_of_quenched(law15):
    # independent draw of correlated Gaussians; quenched partition functions in bulk
    N, a, beta, h = 12, 2.0, 0.7, -0.3
    cov = np.array([[(1.0 + abs(i - j)) ** -a if i != j else 1.0 for j in range(N)]
                    for i in range(N)])
    L = cholesky(cov, lower=True)
    rng = np.random.default_rng(12345)
    kernel = law15.kernel(N)
    vals = []
    for _ in range(10):
        omega = rng.standard_normal((100_000, N)) @ L.T
        vals.append(np.exp(pinned_logz(kernel, h + beta * omega)[:, -1]))
    z = np.concatenate(vals)
    mean, se = z.mean(), z.std(ddof=1) / math.sqrt(z.size)
    exact = math.exp(ann.annealed_brute_force(cfg(law15, SP(a), beta, h, m=None), N))
    assert abs(mean - exact) <= 3 * se


def test_transfer_matches_brute_force_full_memory(law05):
    for N in (1, 5, 10, 16):
        c = cfg(law05, SP(1.2), 0.8, -0.2, m=max(N - 1, 0))
        got = ann.annealed_transfer(c, N).logz[N]
        assert got == pytest.approx(ann.annealed_brute_force(c.at(m=None), N), abs=1e-10)


def test_transfer_truncation_monotone_in_memory(law15):
    # nonnegative correlations: more memory, more interaction
    vals = [ann.annealed_transfer(cfg(law15, SP(2.0), 0.6, -0.2, m=m), 60).logz[60]
            for m in (0, 2, 4, 8)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_memory_overflow(law15):
    with pytest.raises(ValueError, match="overflow"):
        cfg(law15, SP(2.0), 0.5, 0.0, m=21)


def test_slope_examples(law05):
    F = ann.annealed_free_energy(cfg(law05, SP(2.0), 0.0, 1.0), 4096, 2048)
    assert F.mode == "annealed" and F.std_err == 0
    assert F.value == pytest.approx(free_energy_from_law(law05, 1.0), abs=1e-3)
    beta = 0.6
    F = ann.annealed_free_energy(cfg(law05, IID, beta, -beta ** 2 / 2 + 0.2, m=0), 4096, 2048)
    assert F.value == pytest.approx(free_energy_from_law(law05, 0.2), abs=1e-3)
    F = ann.annealed_free_energy(cfg(law05, SP(2.0), 0.5, -3.0), 2048, 1024)
    assert F.value <= 1e-6
    with pytest.raises(ValueError):
        ann.annealed_free_energy(cfg(law05, SP(2.0), 0.5, 0.0), 100, 60)


def test_limit_matches_slope(law15):
    c = cfg(law15, SP(3.0), 0.4, 0.1, m=8)
    lim = ann.annealed_free_energy_limit(c)
    slope = ann.annealed_free_energy(c, 4096, 2048).value
    assert lim == pytest.approx(slope, abs=2e-3)
    assert ann.annealed_free_energy_limit(c.at(h=-2.0)) == 0.0


def test_limit_convex_nondecreasing_in_h(law15):
    hs = np.linspace(-0.3, 0.5, 9)
    c = cfg(law15, SP(3.0), 0.4, 0.0, m=6)
    F = np.array([ann.annealed_free_energy_limit(c.at(h=h)) for h in hs])
    assert np.all(np.diff(F) >= -1e-10)
    assert np.all(np.diff(F, 2) >= -1e-9)


def test_untruncated_refusals(law15):
    with pytest.raises(ann.Refused, match="infinite for a<1"):
        ann.annealed_free_energy(cfg(law15, SP(0.5), 0.5, 0.0, m=None), 100, 10)
    with pytest.raises(ann.Refused):
        ann.annealed_critical_point(cfg(law15, SP(2.0), 0.5, 0.0, m=None))


def test_critical_point_examples(law15):
    cp = ann.annealed_critical_point(cfg(law15, SP(3.0), 0.0, 0.0), tol=1e-10)
    assert abs(cp.value) <= 1e-9
    cp = ann.annealed_critical_point(cfg(law15, IID, 0.5, 0.0, m=0), tol=1e-10)
    assert cp.value == pytest.approx(-0.125, abs=1e-10 + 1e-3)
    assert cp.bracket[0] <= cp.value <= cp.bracket[1]


def test_critical_point_bracket_error(law15):
    with pytest.raises(ValueError, match="bracket not found"):
        ann.annealed_critical_point(cfg(law15, IID, 5.0, 0.0, m=0))


def test_quasi_renewal_examples(law15):
    rep = ann.quasi_renewal_check(cfg(law15, SP(3.0), 0.0, 0.0, m=12), [16, 32])
    exact = [v for k, v in rep.margins.items() if k != "supermultiplicative"]
    assert rep.passed and all(abs(v) <= 1e-9 for v in exact)
    rep = ann.quasi_renewal_check(cfg(law15, SP(3.0), 0.5, -0.1, m=12), [16, 32, 64])
    assert rep.passed and min(rep.margins.values()) >= 0
    rep = ann.quasi_renewal_check(cfg(law15, SP(3.0), 0.5, -0.1, m=None), [8, 12])
    assert rep.passed
    rep = ann.quasi_renewal_check(cfg(law15, SP(1.5), 0.5, -0.1), [16])
    assert rep.status == "refused"
    assert "correlation tail not summable against k" in rep.notes


def test_cross_pair_energy(law15):
    c = cfg(law15, SP(3.0), 0.8, 0.0, m=None)
    s = [2, 3, 7, 10]
    assert c.params.beta ** 2 * SP(3.0).rho(2)[1] == pytest.approx(
        ann.annealed_hamiltonian(c, [2, 3]) - 2 * c.c)
    for cut in (2, 3, 7):
        left = [x for x in s if x <= cut]
        right = [x for x in s if x > cut]
        split = ann.annealed_hamiltonian(c, left) + ann.annealed_hamiltonian(c, right)
        assert ann.annealed_hamiltonian(c, s) == pytest.approx(
            split + ann.cross_pair_energy(c, s, cut))
    S1 = c.params.beta ** 2 * SP(3.0).sum_k_abs().value
    rng = np.random.default_rng(0)
    for _ in range(50):
        sub = sorted(set(rng.integers(1, 40, size=12).tolist()))
        cut = int(rng.integers(1, 40))
        assert ann.cross_pair_energy(c, sub, cut) <= S1 + 1e-12


def test_laplace_ratio_zero_disorder(law15):
    rep = ann.laplace_ratio_check(cfg(law15, SP(3.0), 0.0, 0.0), [1e-3, 1e-2, 1e-1])
    assert rep.passed
    assert all(abs(r - 1) <= 1e-6 for r in rep.margins["ratios"])


def test_laplace_ratio_band(law05):
    rep = ann.laplace_ratio_check(cfg(law05, SP(3.0), 0.3, 0.0), np.logspace(-3, -1, 5))
    assert rep.passed


def test_critical_partition_and_proximity(law15):
    c = cfg(law15, SP(3.0), 0.3, 0.0)
    assert ann.critical_partition_bounded(c).passed
    assert ann.renewal_measure_proximity(c, [128, 256, 512, 1024, 2048]).passed
    rep = ann.renewal_measure_proximity(c.at(beta=0.0), [128, 512])
    assert rep.passed and max(abs(r - 1) for r in rep.margins["ratios"]) <= 1e-6


def test_proximity_needs_finite_mean(law05):
    rep = ann.renewal_measure_proximity(cfg(law05, SP(3.0), 0.3, 0.0), [128])
    assert rep.status == "refused"


def test_critical_growth_witness(law15):
    rep = ann.critical_growth_witness(cfg(law15, SP(3.0), 0.4, 0.0), 512)
    assert rep.passed


def test_series_matches_iid(law15):
    c = cfg(law15, IID, 0.5, 0.0, m=0)
    assert ann.critical_point_series(c) == pytest.approx(-0.125)


@pytest.mark.slow
def test_exponent_fit_zero_disorder_control(law05):
    fit = ann.annealed_exponent_fit(cfg(law05, SP(3.0), 0.0, 0.0), [2.0 ** -k for k in range(3, 8)])
    assert fit.exponent == pytest.approx(2.0, rel=0.05)
    assert not fit.flags


def test_exponent_fit_resolution(law15):
    with pytest.raises(ValueError, match="grid below resolution"):
        ann.annealed_exponent_fit(cfg(law15, SP(3.0), 0.2, 0.0, m=4), [2.0, 4.0])
