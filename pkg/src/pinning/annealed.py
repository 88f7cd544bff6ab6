"""Annealed pinning model.

Averaging exp(sum (h + beta*omega_n) delta_n) over the Gaussian environment
gives a renewal model with one-body reward beta^2/2 + h per contact and a
pair reward beta^2 rho_{j-i} between contacts.  With correlations cut at lag
m the model has finite memory and is solved exactly by a transfer DP over
occupancy masks of the last m sites.  The infinite-volume free energy is
obtained from the regeneration structure: a contact preceded by a gap longer
than m interacts with nothing behind it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve
from scipy.special import logsumexp

from .gaussenv import CorrelationSpec, IID, SHIFTED_POWER
from .quenched import ANNEALED, FreeEnergyEstimate, ModelParams
from .renewal import (InterArrivalLaw, PartitionTrace,
                      homogeneous_inverse, renewal_mass)
from .report import CheckReport

MAX_MEMORY = 20
MAX_BRUTE_N = 20


class Refused(ValueError):
    """Precondition gate not met."""


@dataclass(frozen=True, eq=False)
class AnnealedConfig:
    law: InterArrivalLaw
    spec: CorrelationSpec
    params: ModelParams
    m: int | None = 12

    def __post_init__(self):
        if self.m is not None and not 0 <= self.m <= MAX_MEMORY:
            raise ValueError(f"state-space overflow: memory m must be in [0, {MAX_MEMORY}]")

    @property
    def transfer_mode(self) -> bool:
        return self.m is not None

    @property
    def effective_spec(self) -> CorrelationSpec:
        return self.spec if self.m is None else self.spec.truncate(self.m)

    @property
    def c(self) -> float:
        return 0.5 * self.params.beta ** 2 + self.params.h

    def lags(self, n: int) -> np.ndarray:
        """rho_1 .. rho_n of the effective correlation."""
        return self.effective_spec.rho(n + 1)[1:]

    def at(self, h: float | None = None, beta: float | None = None, m=...) -> "AnnealedConfig":
        params = ModelParams(self.params.beta if beta is None else beta,
                             self.params.h if h is None else h)
        return replace(self, params=params, m=self.m if m is ... else m)

    def describe(self) -> dict:
        return {"law": self.law.describe(), "spec": self.spec.describe(),
                "beta": self.params.beta, "h": self.params.h, "m": self.m}


def annealed_hamiltonian(config: AnnealedConfig, subset, N: int | None = None) -> float:
    """(beta^2/2 + h)|S| + beta^2 sum_{i<j in S} rho_{j-i} for a contact set S."""
    s = np.asarray(sorted(set(int(x) for x in subset)), dtype=int)
    if s.size == 0:
        raise ValueError("subset must be nonempty")
    if s[0] < 1:
        raise ValueError("contacts are positive sites")
    if N is not None and s[-1] != N:
        raise ValueError("pinned endpoint N must be the largest contact")
    rho = config.lags(int(s[-1]))
    diffs = (s[None, :] - s[:, None])[np.triu_indices(s.size, 1)]
    pair = float(rho[diffs - 1].sum()) if diffs.size else 0.0
    return config.c * s.size + config.params.beta ** 2 * pair


def _occupancies(N: int) -> np.ndarray:
    """All contact sets of {1..N} containing N, as a boolean matrix."""
    idx = np.arange(1 << (N - 1), dtype=np.int64)
    bits = ((idx[:, None] >> np.arange(N - 1)) & 1).astype(bool)
    return np.concatenate([bits, np.ones((idx.size, 1), dtype=bool)], axis=1)


def _gap_log_weight(occ: np.ndarray, log_k: np.ndarray) -> np.ndarray:
    """sum of log K over the gaps of each contact set (origin at 0)."""
    M, N = occ.shape
    last = np.zeros(M, dtype=np.int64)
    total = np.zeros(M)
    for j in range(1, N + 1):
        hit = occ[:, j - 1]
        total[hit] += log_k[j - last[hit]]
        last[hit] = j
    return total


def annealed_brute_force(config: AnnealedConfig, N: int) -> float:
    """log Z^a_N by summing over all 2^(N-1) contact sets."""
    if N > MAX_BRUTE_N:
        raise ValueError(f"N={N} too large for enumeration (max {MAX_BRUTE_N})")
    if N < 1:
        raise ValueError("N must be positive")
    occ = _occupancies(N)
    logw = _gap_log_weight(occ, config.law.log_mass)
    logw += config.c * occ.sum(axis=1)
    rho = config.lags(N)
    pair = np.zeros(occ.shape[0])
    for k in range(1, N):
        if rho[k - 1] != 0.0:
            pair += rho[k - 1] * (occ[:, :-k] & occ[:, k:]).sum(axis=1)
    logw += config.params.beta ** 2 * pair
    return float(logsumexp(logw))


# ---------------------------------------------------------------------------
# transfer DP


def _mask_energy(rho: np.ndarray, m: int, beta: float) -> np.ndarray:
    """exp(beta^2 sum_k rho_k bit_{k-1}(s)) for every mask s of width m."""
    s = np.arange(1 << m)
    bits = (s[:, None] >> np.arange(m)) & 1
    return np.exp(beta ** 2 * (bits @ rho[:m]))


def _shift_targets(m: int):
    """For gap g <= m: destination mask of each group of source masks."""
    out = {}
    for g in range(1, m + 1):
        low = np.arange(1 << (m - g))
        out[g] = (low << g) | (1 << (g - 1))
    return out


def _transfer(config: AnnealedConfig, N: int, forced=()) -> np.ndarray:
    """log Z^a_n for n = 0..N by the mask DP; paths are forced through every
    site in `forced` (history before a forced site is cleared once it is
    reached, so no later jump can skip it)."""
    if not config.transfer_mode:
        raise ValueError("transfer DP needs a finite memory m")
    m = config.m
    K = np.concatenate([[0.0], config.law.kernel(N)])
    Krev = K[::-1].copy()                       # Krev[N - g] = K(g)
    ec = math.exp(config.c)
    energy = _mask_energy(config.lags(max(m, 1)), m, config.params.beta)
    targets = _shift_targets(m)
    forced = set(int(x) for x in forced)
    S = 1 << m
    Z = np.zeros(N + 1)
    Z[0] = 1.0
    ring = [np.zeros(S) for _ in range(m + 1)]  # ring[n % (m+1)] holds W_n
    offset = 0.0
    logz = np.zeros(N + 1)
    for n in range(1, N + 1):
        W = np.zeros(S)
        # jumps from the origin or over more than m sites land on the empty mask
        far = Z[0] * K[n]
        if n - m - 1 >= 1:
            far += float(Z[1:n - m] @ Krev[N - n + 1:N - m])
        W[0] = far
        for g in range(1, min(m, n - 1) + 1):
            agg = ring[(n - g) % (m + 1)].reshape(1 << g, 1 << (m - g)).sum(axis=0)
            W[targets[g]] += K[g] * agg
        W *= ec * energy
        zn = float(W.sum())
        if n in forced:
            Z[:n] = 0.0
            for r in ring:
                r[:] = 0.0
        Z[n] = zn
        ring[n % (m + 1)] = W
        if zn > 1e150 or zn < 1e-150:
            Z[:n + 1] /= zn
            for r in ring:
                r /= zn
            offset += math.log(zn)
        logz[n] = math.log(Z[n]) + offset
    return logz


def annealed_transfer(config: AnnealedConfig, N: int) -> PartitionTrace:
    """Exact log Z^a_n, n = 0..N, for correlations cut at lag m."""
    return PartitionTrace(_transfer(config, N), {"mode": "annealed:transfer", **config.describe()})


def annealed_log_partition(config: AnnealedConfig, N: int) -> np.ndarray:
    """log Z^a_n for n = 0..N: transfer DP when truncated, enumeration otherwise."""
    if config.transfer_mode:
        return annealed_transfer(config, N).logz
    return np.array([0.0] + [annealed_brute_force(config, n) for n in range(1, N + 1)])


def _require_finite(config: AnnealedConfig):
    if config.transfer_mode:
        return
    if config.spec.family == SHIFTED_POWER and config.spec.a <= 1:
        raise Refused("annealed free energy infinite for a<1")
    raise Refused("infinite-volume annealed quantities need a finite memory m")


def annealed_free_energy(config: AnnealedConfig, N: int, burn: int) -> FreeEnergyEstimate:
    """Slope (log Z_N - log Z_burn) / (N - burn) of the transfer DP."""
    _require_finite(config)
    if N < 2 * burn or burn < 0:
        raise ValueError("need N >= 2*burn")
    logz = annealed_transfer(config, N).logz
    slope = (logz[N] - logz[burn]) / (N - burn)
    return FreeEnergyEstimate(float(slope), 0.0, N, 1, ANNEALED,
                              {"method": "slope", "burn": burn, **config.describe()})


# ---------------------------------------------------------------------------
# infinite volume via regeneration


@dataclass(eq=False)
class _Regeneration:
    """Generating functions of the short-gap chain started from the empty mask."""

    config: AnnealedConfig
    rows: np.ndarray = field(init=False)
    cols: np.ndarray = field(init=False)
    gaps: np.ndarray = field(init=False)
    base: np.ndarray = field(init=False)

    def __post_init__(self):
        cfg = self.config
        m = cfg.m
        energy = _mask_energy(cfg.lags(max(m, 1)), m, cfg.params.beta)
        targets = _shift_targets(m)
        rows, cols, gaps = [], [], []
        src = np.arange(1 << m)
        for g in range(1, m + 1):
            low = src & ((1 << (m - g)) - 1)
            rows.append(src)
            cols.append(targets[g][low])
            gaps.append(np.full(src.size, g))
        self.rows = np.concatenate(rows) if rows else np.zeros(0, int)
        self.cols = np.concatenate(cols) if cols else np.zeros(0, int)
        self.gaps = np.concatenate(gaps) if gaps else np.zeros(0, int)
        K = cfg.law.mass
        self.base = K[self.gaps] * math.exp(cfg.c) * energy[self.cols] if self.gaps.size else np.zeros(0)

    def chi(self, b: float) -> float:
        """sum_j e^{-bj} (weight of short-gap paths from a regeneration to j);
        +inf when the chain is supercritical."""
        m = self.config.m
        S = 1 << m
        if m == 0:
            return 1.0
        vals = self.base * np.exp(-b * self.gaps)
        M = sp.csr_matrix((vals, (self.rows, self.cols)), shape=(S, S))
        A = (sp.identity(S, format="csr") - M).tocsc()
        y = spsolve(A, np.ones(S))
        if not np.all(np.isfinite(y)) or np.any(y <= 0):
            return math.inf
        return float(y[0])

    def kappa(self, b: float) -> float:
        """e^c sum_{g <= m} e^{-bg} K(g)."""
        m = self.config.m
        g = np.arange(1, m + 1)
        return math.exp(self.config.c) * float(np.dot(np.exp(-b * g), self.config.law.mass[1:m + 1]))

    def far(self, b: float) -> float:
        """e^c sum_{g > m} e^{-bg} K(g)."""
        return math.exp(self.config.c) * self.config.law.laplace_beyond(b, self.config.m)

    def G(self, b: float) -> float:
        chi = self.chi(b)
        return math.inf if math.isinf(chi) else self.far(b) * chi


def annealed_free_energy_limit(config: AnnealedConfig, tol: float = 1e-12) -> float:
    """Infinite-volume annealed free energy of the truncated model: the b
    with G(b) = 1, where G is the Laplace transform of the law of the
    distance between successive regeneration contacts (0 when G(0) <= 1)."""
    _require_finite(config)
    reg = _Regeneration(config)
    if reg.G(0.0) <= 1.0:
        return 0.0
    lo, hi = 0.0, 1.0
    while reg.G(hi) > 1.0:
        lo, hi = hi, 2.0 * hi
    while hi - lo > tol * max(hi, 1e-300):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if reg.G(mid) > 1.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def annealed_laplace(config: AnnealedConfig, lam: float) -> float:
    """sum_{n>=0} e^{-lam n} Z^a_n (infinite when lam is below the free energy)."""
    _require_finite(config)
    reg = _Regeneration(config)
    chi_r = reg.chi(lam)
    if math.isinf(chi_r):
        return math.inf
    chi_0 = 1.0 + reg.kappa(lam) * chi_r
    far = reg.far(lam)
    psi_r = far * chi_r
    if psi_r >= 1.0:
        return math.inf
    return chi_0 + far * chi_0 * chi_r / (1.0 - psi_r)


@dataclass(frozen=True)
class CriticalPoint:
    value: float
    bracket: tuple

    def to_dict(self) -> dict:
        return {"value": self.value, "bracket": list(self.bracket)}


def annealed_critical_point(config: AnnealedConfig, tol: float = 1e-10) -> CriticalPoint:
    """h where the truncated annealed model localizes: G_h(0) = 1, bisected in [-10, 10]."""
    _require_finite(config)

    def localized(h):
        return _Regeneration(config.at(h=h)).G(0.0) > 1.0

    lo, hi = -10.0, 10.0
    if localized(lo) or not localized(hi):
        raise ValueError("critical point bracket not found in [-10, 10]")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if localized(mid):
            hi = mid
        else:
            lo = mid
    return CriticalPoint(0.5 * (lo + hi), (lo, hi))


def critical_point_series(config: AnnealedConfig, n_terms: int = 4096) -> float:
    """-(beta^2/2)(1 + 2 sum_n rho_n P(n in tau)), the small-beta prediction."""
    n = min(n_terms, config.law.n_max)
    if config.effective_spec.range < math.inf:
        n = min(n, int(config.effective_spec.range))
    n = max(n, 1)
    u = renewal_mass(config.law, n).u
    rho = config.lags(n)
    return -0.5 * config.params.beta ** 2 * (1.0 + 2.0 * float(np.dot(rho, u[1:n + 1])))


# ---------------------------------------------------------------------------
# structural checks


def _summable_against_k(spec: CorrelationSpec) -> bool:
    return math.isfinite(spec.sum_k_abs().value)


def _gate(config: AnnealedConfig, check_id: str):
    if not _summable_against_k(config.spec):
        return CheckReport.refused(check_id, config.describe(),
                                   "correlation tail not summable against k")
    return None


def quasi_renewal_check(config: AnnealedConfig, N_list, M_rule: str = "all") -> CheckReport:
    """Check the two-block bounds of the annealed partition function.

    With S1 = beta^2 sum k|rho_k| and S0 = beta^2 sum |rho_k|:
      Z_{k+n} >= e^{-S1} Z_k Z_n                     (super-multiplicativity)
      Z_N within e^{±(S1+S0)} of sum_{i<=M<j} Z_i K(j-i) e^c Z_{N-j}
      Z_N within e^{±S1 (r-1)} of prod Z_{i_k - i_{k-1}} for r blocks
    Margins are logarithmic slacks and must be nonnegative.
    """
    check_id = "quasi_renewal"
    refused = _gate(config, check_id)
    if refused is not None:
        return refused
    N_list = sorted(int(n) for n in N_list)
    Nmax = N_list[-1]
    logz = annealed_log_partition(config, Nmax)
    eff = config.effective_spec
    b2 = config.params.beta ** 2
    S1 = b2 * eff.sum_k_abs().value
    S0 = b2 * eff.sum_abs().value
    logK = config.law.log_mass
    c = config.c
    worst = {"supermultiplicative": math.inf, "sandwich_lower": math.inf,
             "sandwich_upper": math.inf, "multi_split_lower": math.inf,
             "multi_split_upper": math.inf}
    count = 0
    tiny = 1e-10
    for N in N_list:
        for k in range(1, N):
            worst["supermultiplicative"] = min(worst["supermultiplicative"],
                                               logz[N] - logz[k] - logz[N - k] + S1)
        Ms = range(0, N) if M_rule == "all" else [N // 2]
        for M in Ms:
            i = np.arange(0, M + 1)
            j = np.arange(M + 1, N + 1)
            terms = logz[i][:, None] + logK[j[None, :] - i[:, None]] + c + logz[N - j][None, :]
            base = float(logsumexp(terms))
            worst["sandwich_lower"] = min(worst["sandwich_lower"], logz[N] - (base - S1 - S0))
            worst["sandwich_upper"] = min(worst["sandwich_upper"], (base + S1 + S0) - logz[N])
            count += 1
        # split into r equal-ish blocks (the bounds concern paths pinned at the cuts,
        # so they are compared against the constrained sum computed by the DP)
        for r in (2, 3, 4):
            if N < r:
                continue
            cuts = np.linspace(0, N, r + 1).round().astype(int)
            lhs = _pinned_at(config, cuts)
            prod = float(sum(logz[b - a] for a, b in zip(cuts[:-1], cuts[1:])))
            worst["multi_split_lower"] = min(worst["multi_split_lower"], lhs - (prod - S1 * (r - 1)))
            worst["multi_split_upper"] = min(worst["multi_split_upper"], (prod + S1 * (r - 1)) - lhs)
    margins = {k: float(v) for k, v in worst.items()}
    ok = all(v >= -tiny for v in margins.values())
    bound_consts = {"S1": S1, "S0": S0, "C1": math.exp(S1 + S0)}
    return CheckReport(check_id, {**config.describe(), "N_list": N_list, "M_rule": M_rule,
                                  "splits_checked": count},
                       margins, {"min_margin": 0.0, "constants": bound_consts},
                       ok, "passed" if ok else "failed")


def _pinned_at(config: AnnealedConfig, cuts) -> float:
    """log E[prod_k delta_{cut_k} e^H] for the given cut points (cuts[0] = 0)."""
    N = int(cuts[-1])
    if config.transfer_mode:
        return float(_transfer(config, N, forced=cuts[1:-1])[N])
    occ = _occupancies(N)
    occ = occ[np.all(occ[:, [int(x) - 1 for x in cuts[1:]]], axis=1)]
    logw = _gap_log_weight(occ, config.law.log_mass) + config.c * occ.sum(axis=1)
    rho = config.lags(N)
    pair = np.zeros(occ.shape[0])
    for k in range(1, N):
        pair += rho[k - 1] * (occ[:, :-k] & occ[:, k:]).sum(axis=1)
    return float(logsumexp(logw + config.params.beta ** 2 * pair))


def cross_pair_energy(config: AnnealedConfig, subset, cut: int) -> float:
    """beta^2 sum of rho_{j-i} over contacts i <= cut < j: the interaction
    lost when the contact set is split into two blocks at `cut`."""
    s = np.asarray(sorted(set(int(x) for x in subset)), dtype=int)
    left, right = s[s <= cut], s[s > cut]
    if left.size == 0 or right.size == 0:
        return 0.0
    rho = config.lags(int(s[-1]))
    diffs = (right[None, :] - left[:, None]).ravel()
    return config.params.beta ** 2 * float(rho[diffs - 1].sum())


def _critical(config: AnnealedConfig) -> tuple[AnnealedConfig, CriticalPoint]:
    cp = annealed_critical_point(config)
    # lower bracket edge: still on the delocalized side
    return config.at(h=cp.bracket[0]), cp


def laplace_ratio_check(config: AnnealedConfig, lambda_grid, band: float = 5.0) -> CheckReport:
    """Ratio of sum_n e^{-lam n} Z^a_n (at the annealed critical point) to
    sum_n e^{-lam n} u_n = 1/(1 - K^(lam)); passes if it stays in [1/band, band]."""
    check_id = "laplace_ratio"
    refused = _gate(config, check_id)
    if refused is not None:
        return refused
    lams = np.asarray(sorted(float(x) for x in lambda_grid))
    if lams.size == 0 or lams[0] <= 0 or lams[-1] > 1:
        raise ValueError("lambda grid must lie in (0, 1]")
    crit, cp = _critical(config)
    ratios = np.array([annealed_laplace(crit, lam) * config.law.one_minus_laplace(lam)
                       for lam in lams])
    lo, hi = float(ratios.min()), float(ratios.max())
    ok = bool(lo >= 1.0 / band and hi <= band)
    return CheckReport(check_id, {**config.describe(), "h_critical": cp.value,
                                  "lambda_grid": lams.tolist()},
                       {"ratio_min": lo, "ratio_max": hi, "ratios": ratios.tolist(),
                        "lower_slack": lo - 1.0 / band, "upper_slack": band - hi},
                       {"low": 1.0 / band, "high": band}, ok, "passed" if ok else "failed")


def critical_partition_bounded(config: AnnealedConfig, n_range=(64, 2048),
                               band: float = 10.0) -> CheckReport:
    """max/min of Z^a_n over n in n_range at the annealed critical point;
    passes if the spread is at most `band`."""
    check_id = "critical_partition_bounded"
    refused = _gate(config, check_id)
    if refused is not None:
        return refused
    crit, cp = _critical(config)
    n0, n1 = int(n_range[0]), int(n_range[1])
    logz = annealed_transfer(crit, n1).logz[n0:n1 + 1]
    spread = float(np.exp(logz.max() - logz.min()))
    ok = spread <= band
    return CheckReport(check_id, {**config.describe(), "h_critical": cp.value,
                                  "n_range": [n0, n1]},
                       {"spread": spread, "z_min": float(np.exp(logz.min())),
                        "z_max": float(np.exp(logz.max())), "slack": band - spread},
                       {"max_spread": band}, ok, "passed" if ok else "failed")


def critical_growth_witness(config: AnnealedConfig, N: int) -> CheckReport:
    """At the annealed critical point e^{-S1} Z^a_n is super-multiplicative
    with zero growth rate, so Z^a_n <= e^{S1} <= C1 for every n."""
    check_id = "critical_growth"
    refused = _gate(config, check_id)
    if refused is not None:
        return refused
    crit, cp = _critical(config)
    eff = config.effective_spec
    b2 = config.params.beta ** 2
    log_c1 = b2 * (eff.sum_k_abs().value + eff.sum_abs().value)
    logz = annealed_log_partition(crit, N)[1:]
    margin = float(log_c1 - logz.max())
    ok = margin >= -1e-10
    return CheckReport(check_id, {**config.describe(), "h_critical": cp.value, "N": N},
                       {"log_c1_minus_max_logz": margin, "argmax_n": int(np.argmax(logz)) + 1},
                       {"min_margin": 0.0, "log_c1": log_c1}, ok, "passed" if ok else "failed")


@dataclass
class ExponentFit:
    exponent: float
    intercept: float
    h_critical: float
    u: list
    free_energy: list
    excluded: list
    sandwich_c: float
    truncation_error: list
    flags: list

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def annealed_exponent_fit(config: AnnealedConfig, u_grid, cap: float = 0.1) -> ExponentFit:
    """Slope of log F^a(h_c^a + u) against log u.

    Points with F^a > cap are excluded from the fit.  Also reports the
    smallest c with F(u/c) <= F^a(h_c^a + u) <= F(c u), F the pure free
    energy, and the per-site truncation error F^a(m) - F^a(m-2).
    """
    _require_finite(config)
    flags = []
    if not _summable_against_k(config.spec) or config.params.beta > 0.3:
        flags.append("outside the small-disorder, fast-decay hypotheses")
    cp = annealed_critical_point(config)
    us = np.asarray(sorted(float(u) for u in u_grid))
    if us.size == 0 or us[0] <= 0:
        raise ValueError("u grid must be positive")
    fa = np.array([annealed_free_energy_limit(config.at(h=cp.value + u)) for u in us])
    trunc = []
    if config.m >= 2:
        coarse = config.at(m=config.m - 2)
        hc2 = annealed_critical_point(coarse).value
        trunc = [abs(float(annealed_free_energy_limit(coarse.at(h=hc2 + u))) - f)
                 for u, f in zip(us, fa)]
        if max(trunc) >= 1e-4:
            flags.append("truncation not converged")
    keep = (fa > 1e-300) & (fa <= cap)
    excluded = us[~keep].tolist()
    if keep.sum() < 2:
        raise ValueError("grid below resolution")
    slope, intercept = np.polyfit(np.log(us[keep]), np.log(fa[keep]), 1)
    # F(h') = F^a  ->  need u/c <= h' <= c u
    hp = np.array([homogeneous_inverse(config.law, f) for f in fa[keep]])
    c = float(np.max(np.maximum(us[keep] / hp, hp / us[keep])))
    return ExponentFit(float(slope), float(intercept), cp.value, us.tolist(), fa.tolist(),
                       excluded, c, trunc, flags)


def renewal_measure_proximity(config: AnnealedConfig, N_list, band: float = 3.0) -> CheckReport:
    """Z^a_N / u_N at the annealed critical point (alpha > 1); passes if the
    ratio stays within [1/band, band]."""
    check_id = "renewal_proximity"
    refused = _gate(config, check_id)
    if refused is not None:
        return refused
    if config.law.alpha <= 1:
        return CheckReport.refused(check_id, config.describe(), "needs a finite mean gap (alpha > 1)")
    crit, cp = _critical(config)
    Ns = sorted(int(n) for n in N_list)
    logz = annealed_transfer(crit, Ns[-1]).logz
    u = renewal_mass(config.law, Ns[-1]).u
    ratios = np.array([math.exp(logz[n]) / u[n] for n in Ns])
    lo, hi = float(ratios.min()), float(ratios.max())
    ok = bool(lo >= 1.0 / band and hi <= band)
    return CheckReport(check_id, {**config.describe(), "h_critical": cp.value, "N_list": Ns},
                       {"ratio_min": lo, "ratio_max": hi, "ratios": ratios.tolist()},
                       {"low": 1.0 / band, "high": band}, ok, "passed" if ok else "failed")
