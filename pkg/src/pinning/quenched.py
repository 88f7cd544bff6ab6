"""Quenched pinning model: exact partition functions for a fixed environment,
Monte-Carlo free energies, contact density, critical-point scans and the
good-block lower bound."""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .gaussenv import CorrelationSpec, EnvSample, prob_all_above, sample_environments
from .renewal import (InterArrivalLaw, PartitionTrace, homogeneous_partition_dp,
                      pinned_logz)

QUENCHED = "quenched"
ANNEALED = "annealed"
HOMOGENEOUS = "homogeneous"

# replicas are processed in fixed-size chunks so results do not depend on the
# number of worker threads
CHUNK = 8


def default_threads() -> int:
    env = os.environ.get("PINNING_THREADS")
    if env:
        return max(1, int(env))
    return 1


@dataclass(frozen=True)
class ModelParams:
    beta: float = 0.0
    h: float = 0.0

    def __post_init__(self):
        if not self.beta >= 0:
            raise ValueError("beta must be nonnegative")

    def with_h(self, h: float) -> "ModelParams":
        return ModelParams(self.beta, float(h))


@dataclass(frozen=True)
class FreeEnergyEstimate:
    value: float
    std_err: float
    n_sites: int
    n_replicas: int
    mode: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.std_err >= 0:
            raise ValueError("std_err must be nonnegative")
        if self.mode == HOMOGENEOUS and self.std_err != 0:
            raise ValueError("homogeneous estimates carry no statistical error")

    def to_dict(self) -> dict:
        return {"value": self.value, "std_err": self.std_err, "n_sites": self.n_sites,
                "n_replicas": self.n_replicas, "mode": self.mode, "meta": self.meta}


def quenched_partition(law: InterArrivalLaw, params: ModelParams, env: EnvSample | np.ndarray) -> PartitionTrace:
    omega = env.values if isinstance(env, EnvSample) else np.asarray(env, dtype=float)
    N = len(omega)
    logz = pinned_logz(law.kernel(N), params.h + params.beta * omega)
    ctx = {"law": law.describe(), "beta": params.beta, "h": params.h}
    if isinstance(env, EnvSample):
        ctx.update(seed=env.seed, stream=env.stream, spec=env.spec.describe())
    return PartitionTrace(logz, ctx)


def _final_logz(kernel, rewards, threads: int) -> np.ndarray:
    chunks = [rewards[i:i + CHUNK] for i in range(0, len(rewards), CHUNK)]

    def run(block):
        return pinned_logz(kernel, block)[:, -1]

    if threads <= 1 or len(chunks) == 1:
        parts = [run(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(run, chunks))
    return np.concatenate(parts)


def _estimate(values: np.ndarray, N: int, mode: str, meta: dict) -> FreeEnergyEstimate:
    R = len(values)
    mean = float(np.mean(values))
    se = float(np.std(values, ddof=1) / math.sqrt(R)) if R > 1 else 0.0
    return FreeEnergyEstimate(mean, se, N, R, mode, meta)


def free_energy_on_envs(law: InterArrivalLaw, params: ModelParams, envs: np.ndarray,
                        threads: int = 1, meta: dict | None = None) -> FreeEnergyEstimate:
    """Replica mean of (1/N) log Z_N over the rows of `envs`."""
    envs = np.atleast_2d(envs)
    R, N = envs.shape
    meta = dict(meta or {})
    meta.setdefault("bias", "finite-N estimate lies below the limit on average")
    if params.beta == 0:
        tr = homogeneous_partition_dp(law, params.h, N)
        return FreeEnergyEstimate(tr.rate(), 0.0, N, R, HOMOGENEOUS, meta)
    rewards = params.h + params.beta * envs
    logz = _final_logz(law.kernel(N), rewards, threads)
    return _estimate(logz / N, N, QUENCHED, meta)


def quenched_free_energy(law: InterArrivalLaw, params: ModelParams, spec: CorrelationSpec,
                         N: int, replicas: int, seed: int, threads: int | None = None) -> FreeEnergyEstimate:
    """Mean of (1/N) log Z_N over `replicas` environments; replica i uses stream i."""
    if replicas < 8:
        raise ValueError("need at least 8 replicas")
    threads = default_threads() if threads is None else threads
    envs = sample_environments(spec, N, seed, range(replicas))
    meta = {"seed": int(seed), "spec": spec.describe()}
    return free_energy_on_envs(law, params, envs, threads, meta)


def contact_fraction(law: InterArrivalLaw, params: ModelParams, env, N: int | None = None,
                     eps: float = 1e-4) -> float:
    omega = env.values if isinstance(env, EnvSample) else np.asarray(env, dtype=float)
    if N is not None:
        omega = omega[:N]
    N = len(omega)
    base = params.beta * omega
    both = np.vstack([params.h + eps + base, params.h - eps + base])
    lz = pinned_logz(law.kernel(N), both)[:, -1]
    rho = (lz[0] - lz[1]) / (2.0 * eps * N)
    return float(min(1.0, max(0.0, rho)))


@dataclass(frozen=True)
class ScanResult:
    h_c: float
    bracket: tuple
    h_grid: tuple
    estimates: tuple
    localized: tuple

    def to_dict(self) -> dict:
        return {"h_c": self.h_c, "bracket": list(self.bracket), "h_grid": list(self.h_grid),
                "estimates": [e.to_dict() for e in self.estimates],
                "localized": list(self.localized)}


class GridError(ValueError):
    pass


def critical_point_scan(law: InterArrivalLaw, beta: float, spec: CorrelationSpec, N: int,
                        replicas: int, h_grid, threshold: float = 3.0, seed: int = 0,
                        threads: int | None = None) -> ScanResult:
    """First grid point from which every estimate is localized (exceeds
    threshold standard errors above zero); the previous grid point is the
    lower bracket.  All grid points share the same environments."""
    h_grid = [float(h) for h in h_grid]
    if any(b <= a for a, b in zip(h_grid, h_grid[1:])):
        raise ValueError("h_grid must be strictly increasing")
    if threshold < 3:
        raise ValueError("threshold must be at least 3 standard errors")
    threads = default_threads() if threads is None else threads
    envs = sample_environments(spec, N, seed, range(replicas))
    ests = [free_energy_on_envs(law, ModelParams(beta, h), envs, threads) for h in h_grid]
    loc = [e.value > threshold * e.std_err and e.value > 0 for e in ests]
    first = None
    for i in range(len(loc)):
        if all(loc[i:]):
            first = i
            break
    if first is None or first == 0:
        raise GridError("h_c outside grid")
    return ScanResult(h_grid[first], (h_grid[first - 1], h_grid[first]), tuple(h_grid),
                      tuple(ests), tuple(loc))


# ---------------------------------------------------------------------------
# good-block strategy


@dataclass(frozen=True)
class RewardFloor:
    """Block good when h + beta*omega_i >= |h| on all l+1 sites."""

    name: str = "reward_floor"


@dataclass(frozen=True)
class PartitionFloor:
    """Block good when (1/l) log Z_block >= (1 - eps) * f_target."""

    f_target: float
    eps: float = 0.1
    name: str = "partition_floor"


@dataclass(frozen=True)
class StrategyBound:
    """Lower bound on F written as p * rate; `log_value` is log(p * rate) when
    rate > 0 (p itself may be far below double range)."""

    rate: float
    log_p: float
    gain: float
    entropy: str
    rate_ci: tuple
    log_p_ci: tuple
    block_len: int
    status: str = "ok"
    meta: dict = field(default_factory=dict)

    @property
    def positive(self) -> bool:
        return self.rate > 0

    @property
    def log_value(self) -> float:
        return self.log_p + math.log(self.rate) if self.rate > 0 else -math.inf

    @property
    def value(self) -> float:
        if self.status != "ok":
            return -math.inf
        return math.exp(self.log_p) * self.rate

    @property
    def value_ci(self) -> tuple:
        lo = math.exp(self.log_p_ci[0]) * self.rate_ci[0] if self.rate_ci[0] > 0 else \
            math.exp(self.log_p_ci[1]) * self.rate_ci[0]
        hi = math.exp(self.log_p_ci[1]) * self.rate_ci[1] if self.rate_ci[1] > 0 else \
            math.exp(self.log_p_ci[0]) * self.rate_ci[1]
        return (lo, hi)

    @property
    def separated(self) -> bool:
        """Lower confidence edge of the bound is strictly positive."""
        return self.status == "ok" and self.rate_ci[0] > 0

    def to_dict(self) -> dict:
        return {"rate": self.rate, "log_p": self.log_p, "gain": self.gain,
                "entropy": self.entropy, "rate_ci": list(self.rate_ci),
                "log_p_ci": list(self.log_p_ci), "log_value": self.log_value,
                "block_len": self.block_len, "status": self.status, "meta": self.meta}


def gap_cost_rate(law: InterArrivalLaw, l: int, log_p: float, entropy: str = "jensen",
                  eps: float = 0.1) -> float:
    """Per-good-block cost of the jumps between good blocks, in units of the
    good-block frequency p.

    "jensen" is a finite-l bound: with J jumps of total length at most
    l*n*(1-p), concavity of log gives a cost of at most
    (j/l)[(1+alpha) log(l (1-p)/j) - log c] per block with j the optimal
    jump frequency (j <= p).  "asymptotic" is the large-l form
    (1+eps)(1+alpha)(1/l) log(1/p - 1).
    """
    p = math.exp(log_p)
    log_1mp = math.log1p(-p) if p < 1 else -math.inf
    if p >= 1:
        return 0.0
    if entropy == "asymptotic":
        return (1 + eps) * (1 + law.alpha) / l * (log_1mp - log_p)
    if entropy != "jensen":
        raise ValueError(f"unknown entropy form {entropy!r}")
    if law.slow_var.gamma < 0:
        raise ValueError("jensen gap cost needs a nondecreasing slowly varying factor")
    a1 = 1.0 + law.alpha
    log_c = math.log(law.normalization)
    log_jstar = math.log(l) + log_1mp - 1.0 - log_c / a1
    log_j = min(log_p, log_jstar)
    # (j/p)/l * [a1 * (log l + log(1-p) - log j) - log c]
    return math.exp(log_j - log_p) / l * (a1 * (math.log(l) + log_1mp - log_j) - log_c)


def block_size(h: float, beta: float, a: float, cbar: float) -> int:
    """Block length (cbar |h| / beta^2)^(1/(1-a)) for non-summable correlations."""
    if not 0 < a < 1:
        raise ValueError("block size recipe needs 0 < a < 1")
    return max(2, int(round((cbar * abs(h) / beta ** 2) ** (1.0 / (1.0 - a)))))


def strategy_lower_bound(law: InterArrivalLaw, params: ModelParams, spec: CorrelationSpec,
                         l: int, n_blocks: int, rule=RewardFloor(), seed: int = 0,
                         entropy: str = "jensen", threads: int | None = None) -> StrategyBound:
    """Lower bound on the quenched free energy from paths that only visit good
    blocks of length l.

    For RewardFloor the good-block probability is a Gaussian orthant
    probability estimated by importance sampling with `n_blocks` samples; for
    PartitionFloor `n_blocks` environments are drawn and the partition function
    of each block is computed directly.
    """
    if l < 2:
        raise ValueError("block length must be at least 2")
    beta, h = params.beta, params.h
    if isinstance(rule, RewardFloor):
        if beta == 0 and h < 0:
            raise ValueError("no good blocks without disorder at negative reward")
        A = (abs(h) - h) / beta if beta > 0 else 0.0
        est = prob_all_above(spec, l + 1, A, budget=n_blocks, seed=seed)
        log_p, log_p_ci = est.log_prob, est.ci
        gain = homogeneous_partition_dp(law, abs(h), l).logz[-1] / l
        gain_ci = (gain, gain)
        meta = {"rule": rule.name, "threshold": A, "prob_rel_err": est.rel_err}
    elif isinstance(rule, PartitionFloor):
        threads = default_threads() if threads is None else threads
        envs = sample_environments(spec, l + 1, seed, range(n_blocks))
        rewards = h + beta * envs
        logz = _final_logz(law.kernel(l), rewards[:, 1:], threads)
        # the entry site reward is paid when the block is reached by a jump
        score = (logz + np.minimum(0.0, rewards[:, 0])) / l
        good = logz / l >= (1.0 - rule.eps) * rule.f_target
        k = int(good.sum())
        meta = {"rule": rule.name, "f_target": rule.f_target, "eps": rule.eps, "good": k}
        if k == 0:
            return StrategyBound(-math.inf, -math.inf, math.nan, entropy, (-math.inf, -math.inf),
                                 (-math.inf, -math.inf), l, "no good blocks observed", meta)
        p = k / n_blocks
        log_p = math.log(p)
        ci = _wilson(k, n_blocks)
        log_p_ci = (math.log(ci[0]) if ci[0] > 0 else -math.inf, math.log(ci[1]))
        if k == n_blocks:
            score = logz / l
        gain = float(score[good].mean())
        gse = float(score[good].std(ddof=1) / math.sqrt(k)) if k > 1 else 0.0
        gain_ci = (gain - 1.96 * gse, gain + 1.96 * gse)
    else:
        raise ValueError("unknown good-block rule")
    if not math.isfinite(log_p):
        return StrategyBound(-math.inf, -math.inf, gain, entropy, (-math.inf, -math.inf),
                             (-math.inf, -math.inf), l, "no good blocks observed", meta)
    if math.exp(log_p) >= 1.0:
        rate = gain
        rate_ci = gain_ci
    else:
        rate = gain - gap_cost_rate(law, l, log_p, entropy)
        # the cost is decreasing in p, so the interval ends map monotonically
        lo = gain_ci[0] - gap_cost_rate(law, l, min(log_p_ci[0], 0.0), entropy) \
            if math.isfinite(log_p_ci[0]) else -math.inf
        hi = gain_ci[1] - gap_cost_rate(law, l, min(log_p_ci[1], 0.0), entropy)
        rate_ci = (lo, hi)
    return StrategyBound(rate, log_p, gain, entropy, rate_ci, log_p_ci, l, "ok", meta)


def _wilson(k: int, n: int, z: float = 1.96):
    p = k / n
    den = 1 + z * z / n
    c = (p + z * z / (2 * n)) / den
    w = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return max(0.0, c - w), min(1.0, c + w)
