import math

import numpy as np
import pytest

import oracles
from pinning.renewal import (SlowVar, build_law, free_energy_from_law, homogeneous_free_energy,
                             homogeneous_inverse, homogeneous_partition_dp, laplace_renewal,
                             pinned_logz, renewal_laplace_exact, renewal_mass,
                             renewal_sum_asymptote, unit_step_law)


@pytest.fixture(scope="module")
def law05():
    return build_law(0.5)


@pytest.fixture(scope="module")
def law15():
    return build_law(1.5)


def test_first_gap_mass_matches_zeta():
    law = build_law(0.5, n_max=1_000_000)
    assert law.mass[1] == pytest.approx(oracles.first_gap_mass(0.5), rel=1e-12)
    assert law.mass[1] == pytest.approx(0.382793, abs=5e-7)


@pytest.mark.parametrize("alpha,gamma", [(0.5, 0.0), (1.5, 0.0), (0.3, 2.0), (2.0, -1.0)])
def test_normalization(alpha, gamma):
    law = build_law(alpha, SlowVar(gamma))
    assert abs(math.fsum(law.mass) + law.tail_bound - 1.0) <= 1e-12
    assert np.all(law.mass[1:] > 0)


@pytest.mark.parametrize("alpha", [0.5, 1.5])
def test_tail_ratio_tends_to_normalization(alpha):
    law = build_law(alpha)
    n = np.array([law.n_max // 2, law.n_max])
    r = law.mass[n] * n ** (1 + alpha) / law.slow_var(n)
    assert abs(r[0] / r[1] - 1) < 0.01
    assert r[1] == pytest.approx(law.normalization, rel=1e-12)


def test_alpha_zero_not_normalizable():
    with pytest.raises(ValueError, match="law not normalizable"):
        build_law(0.0)


def test_small_horizon_warns_without_error():
    law = build_law(0.3, n_max=16)
    assert law.warnings and "tail mass" in law.warnings[0]


def test_renewal_mass_small_cases(law05):
    u = renewal_mass(law05, 8).u
    K = law05.mass
    assert u[0] == 1.0
    assert u[1] == pytest.approx(K[1], rel=1e-14)
    assert u[2] == pytest.approx(K[2] + K[1] ** 2, rel=1e-14)


def test_renewal_recursion_residual(law05):
    N = 1024
    u = renewal_mass(law05, N).u
    K = law05.mass
    res = max(abs(u[n] - math.fsum(K[1:n + 1] * u[n - 1::-1][:n])) / u[n] for n in range(1, N + 1))
    assert res < 1e-14
    assert np.all((u > 0) & (u <= 1))


def test_renewal_mass_horizon():
    with pytest.raises(ValueError):
        renewal_mass(build_law(0.5, n_max=64), 65)


def test_mass_tends_to_inverse_mean(law15):
    N = 65536
    u = renewal_mass(law15, N).u
    assert abs(u[N] * law15.mean() - 1) < 0.01


def test_laplace_unit_steps():
    law = unit_step_law(200)
    m = renewal_mass(law, 200)
    for b in (0.1, 0.5, 2.0):
        v = laplace_renewal(m, b)
        assert abs(v.value - 1 / (1 - math.exp(-b))) <= v.error_bound + 1e-12


def test_laplace_identity(law05):
    m = renewal_mass(law05, 4096)
    v = laplace_renewal(m, 0.1)
    assert abs(v.value * law05.one_minus_laplace(0.1) - 1) <= 1e-6
    assert renewal_laplace_exact(law05, 0.1) * law05.one_minus_laplace(0.1) == pytest.approx(1.0)


def test_laplace_domain(law05):
    with pytest.raises(ValueError):
        laplace_renewal(renewal_mass(law05, 8), 0.0)


def test_laplace_tauberian_window(law05):
    lams = np.logspace(-4, -1, 13)
    scaled = np.array([renewal_laplace_exact(law05, x) * x ** 0.5 for x in lams])
    assert scaled.min() > 0.5 and scaled.max() < 2.0
    assert scaled.max() / scaled.min() < 1.5


def test_free_energy_zero_below_threshold(law05):
    assert homogeneous_free_energy(law05, -0.5) == 0.0
    assert homogeneous_free_energy(law05, 0.0) == 0.0


@pytest.mark.parametrize("alpha,h", [(0.5, 0.25), (0.5, 1.0), (1.5, 1.0), (0.75, 0.05), (2.5, 0.3)])
def test_free_energy_matches_polylog_root(alpha, h):
    assert free_energy_from_law(build_law(alpha), h) == pytest.approx(
        oracles.pure_free_energy(alpha, h), rel=1e-8)


def test_free_energy_exponent(law05):
    hs = np.array([2.0 ** -k for k in range(4, 10)])
    F = np.array([free_energy_from_law(law05, h) for h in hs])
    assert abs(np.polyfit(np.log(hs), np.log(F), 1)[0] - 2) <= 0.2


def test_inverse_round_trip(law05):
    for h in (0.01, 0.3, 2.0):
        assert homogeneous_inverse(law05, free_energy_from_law(law05, h, tol=1e-13)) == \
            pytest.approx(h, rel=1e-9)


def test_dp_matches_renewal_mass_at_zero_reward(law05):
    tr = homogeneous_partition_dp(law05, 0.0, 1000)
    np.testing.assert_allclose(tr.logz, np.log(renewal_mass(law05, 1000).u), atol=1e-12)


def test_dp_single_step(law05):
    assert homogeneous_partition_dp(law05, 0.7, 1).logz[1] == pytest.approx(
        math.log(law05.mass[1]) + 0.7, abs=1e-15)


def test_dp_rate_close_to_free_energy(law05):
    assert abs(homogeneous_partition_dp(law05, 1.0, 4096).rate() - free_energy_from_law(law05, 1.0)) < 5e-3


def test_pinned_logz_survives_large_rewards(law05):
    logz = pinned_logz(law05.kernel(3000), np.full(3000, 5.0))
    assert np.all(np.isfinite(logz))
    assert logz[-1] / 3000 == pytest.approx(free_energy_from_law(law05, 5.0), abs=1e-3)


def test_sum_asymptote(law15):
    N = 100_000
    law15b = build_law(1.5, n_max=N)
    s = renewal_sum_asymptote(renewal_mass(law15b, N), N)
    assert 0.95 <= s.ratio <= 1.05
    law05b = build_law(0.5, n_max=N)
    s = renewal_sum_asymptote(renewal_mass(law05b, N), N)
    assert 0.8 <= s.ratio <= 1.2
    assert renewal_sum_asymptote(renewal_mass(law05b, 4), 0).total == 1.0


def test_sum_asymptote_rejects_alpha_one():
    law = build_law(1.0, n_max=64)
    with pytest.raises(ValueError, match="unsupported"):
        renewal_sum_asymptote(renewal_mass(law, 16), 16)
