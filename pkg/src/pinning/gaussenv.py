"""Stationary Gaussian environments with Toeplitz covariance rho_{|i-j|}."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple

import numpy as np
import scipy.linalg as sla
from scipy.special import log_ndtr, ndtri_exp

SHIFTED_POWER = "shifted_power"
IID = "iid"
TRUNCATED_POWER = "truncated_power"
FAMILIES = (SHIFTED_POWER, IID, TRUNCATED_POWER)

# explicit summation horizon for correlation series; the remainder is handled
# by an Euler-Maclaurin tail with a remainder bound
_SUM_HORIZON = 1 << 16


@dataclass(frozen=True)
class CorrelationSpec:
    """rho_k = (1+k)^-a (shifted_power), zero beyond lag m (truncated_power) or
    rho_k = 0 for k >= 1 (iid)."""

    a: float = 2.0
    family: str = SHIFTED_POWER
    m: int | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown correlation family {self.family!r}")
        if self.family != IID and not self.a > 0:
            raise ValueError("decay exponent a must be positive")
        if self.family == TRUNCATED_POWER and (self.m is None or self.m < 0):
            raise ValueError("truncated_power needs a lag cutoff m >= 0")

    @classmethod
    def shifted_power(cls, a: float) -> "CorrelationSpec":
        return cls(float(a), SHIFTED_POWER)

    @classmethod
    def iid(cls) -> "CorrelationSpec":
        return cls(1.0, IID)

    @classmethod
    def truncated(cls, a: float, m: int) -> "CorrelationSpec":
        return cls(float(a), TRUNCATED_POWER, int(m))

    @property
    def c0(self) -> float:
        return 1.0 if self.family == SHIFTED_POWER else 0.0

    @property
    def nonnegative(self) -> bool:
        return True

    @property
    def range(self) -> float:
        """Largest lag with nonzero correlation."""
        if self.family == IID:
            return 0
        if self.family == TRUNCATED_POWER:
            return self.m
        return math.inf

    def rho(self, n: int) -> np.ndarray:
        """rho_0 .. rho_{n-1}."""
        k = np.arange(n, dtype=float)
        if self.family == IID:
            r = np.zeros(n)
        else:
            r = (1.0 + k) ** (-self.a)
            if self.family == TRUNCATED_POWER:
                r[self.m + 1:] = 0.0
        if n:
            r[0] = 1.0
        return r

    def sum_abs(self) -> "CertifiedSum":
        """sum_{k>=1} |rho_k|."""
        return _moment_sum(self, 0)

    def sum_k_abs(self) -> "CertifiedSum":
        """sum_{k>=1} k |rho_k|."""
        return _moment_sum(self, 1)

    def truncate(self, m: int) -> "CorrelationSpec":
        if self.family == IID:
            return self
        return CorrelationSpec.truncated(self.a, m)

    def describe(self) -> dict:
        d = {"family": self.family, "a": self.a}
        if self.family == TRUNCATED_POWER:
            d["m"] = self.m
        return d


class CertifiedSum(NamedTuple):
    value: float
    error_bound: float


def _power_tail(q: float, K: int, coef: float):
    """Euler-Maclaurin pieces for sum_{k>K} coef*(1+k)^-q."""
    x = 1.0 + K
    integral = coef * x ** (1.0 - q) / (q - 1.0)
    g = coef * x ** (-q)
    g1 = -q * g / x
    g2 = q * (q + 1.0) * g / x ** 2
    est = integral - g / 2.0 - g1 / 12.0
    # remainder after the B2 term: 2 zeta(3)/(2 pi)^3 * int |g'''| = 0.0097 |g''(K)|
    return est, 0.0097 * abs(g2)


def _moment_sum(spec: CorrelationSpec, p: int) -> CertifiedSum:
    if spec.family == IID:
        return CertifiedSum(0.0, 0.0)
    if spec.family == TRUNCATED_POWER:
        k = np.arange(1, spec.m + 1, dtype=float)
        return CertifiedSum(math.fsum(k ** p * (1.0 + k) ** (-spec.a)), 0.0)
    if spec.a <= 1.0 + p:
        return CertifiedSum(math.inf, 0.0)
    K = _SUM_HORIZON
    k = np.arange(1, K + 1, dtype=float)
    head = math.fsum((k ** p * (1.0 + k) ** (-spec.a))[::-1])
    if p == 0:
        est, err = _power_tail(spec.a, K, 1.0)
    else:
        # k (1+k)^-a = (1+k)^(1-a) - (1+k)^-a
        e1, r1 = _power_tail(spec.a - 1.0, K, 1.0)
        e2, r2 = _power_tail(spec.a, K, 1.0)
        est, err = e1 - e2, r1 + r2
    return CertifiedSum(head + est, err)


def upsilon_infty(spec: CorrelationSpec) -> float:
    """1 + 2 sum_k rho_k."""
    s = spec.sum_abs()
    if not math.isfinite(s.value):
        raise ValueError("Υ_∞ infinite: correlations not summable")
    if s.error_bound > 1e-10:
        raise RuntimeError("could not certify the correlation sum")
    return 1.0 + 2.0 * s.value


def _symbol_on_grid(spec: CorrelationSpec, l_grid: int):
    """f(x) = 1 + 2 sum rho_k cos(k x) on an l_grid-point grid, and a bound
    on the lags beyond the explicit horizon."""
    if spec.family == SHIFTED_POWER and spec.a <= 1:
        raise ValueError("symbol not absolutely convergent")
    K = spec.m if spec.family == TRUNCATED_POWER else _SUM_HORIZON
    rho = spec.rho(K + 1)
    # fold lags modulo the grid so the FFT evaluates the sum exactly at grid points
    folded = np.zeros(l_grid)
    np.add.at(folded, np.arange(1, K + 1) % l_grid, rho[1:])
    f = 1.0 + 2.0 * np.real(np.fft.fft(folded))
    tail = 0.0
    if spec.family == SHIFTED_POWER:
        t, err = _power_tail(spec.a, K, 1.0)
        tail = 2.0 * (t + err)
    return f, tail


def szego_symbol_min(spec: CorrelationSpec, l_grid: int = 1 << 14) -> float:
    """Lower bound for min f over the grid, f the symbol of the correlation."""
    if spec.family == IID:
        return 1.0
    f, tail = _symbol_on_grid(spec, l_grid)
    return float(f.min() - tail)


def szego_symbol_max(spec: CorrelationSpec, l_grid: int = 1 << 14) -> float:
    if spec.family == IID:
        return 1.0
    f, tail = _symbol_on_grid(spec, l_grid)
    return float(f.max() + tail)


@dataclass(frozen=True, eq=False)
class ToeplitzCov:
    spec: CorrelationSpec
    l: int
    first_row: np.ndarray = field(repr=False)
    chol: np.ndarray = field(repr=False)

    def dense(self) -> np.ndarray:
        return sla.toeplitz(self.first_row)

    def matvec(self, v: np.ndarray) -> np.ndarray:
        return sla.matmul_toeplitz(self.first_row, v)

    def solve(self, v: np.ndarray) -> np.ndarray:
        return sla.cho_solve((self.chol, True), v)


@lru_cache(maxsize=16)
def toeplitz_cov(spec: CorrelationSpec, l: int) -> ToeplitzCov:
    if l < 1:
        raise ValueError("dimension must be positive")
    row = spec.rho(l)
    try:
        L = np.linalg.cholesky(sla.toeplitz(row))
    except np.linalg.LinAlgError:
        raise ValueError(f"spec not positive definite at dimension l={l}") from None
    row.setflags(write=False)
    L.setflags(write=False)
    return ToeplitzCov(spec, l, row, L)


def stream_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Generator for replica `stream` under master `seed`."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(stream)]))


@dataclass(frozen=True, eq=False)
class EnvSample:
    values: np.ndarray = field(repr=False)
    seed: int
    spec: CorrelationSpec
    stream: int = 0

    def __len__(self) -> int:
        return len(self.values)

    def to_bytes(self) -> bytes:
        return np.ascontiguousarray(self.values, dtype="<f8").tobytes()

    def save(self, path) -> None:
        path = str(path)
        if path.endswith(".csv"):
            np.savetxt(path, self.values, fmt="%.17g", header="omega", comments="")
        else:
            with open(path, "wb") as fh:
                fh.write(self.to_bytes())

    @staticmethod
    def load_values(path) -> np.ndarray:
        path = str(path)
        if path.endswith(".csv"):
            return np.loadtxt(path, skiprows=1, ndmin=1)
        return np.fromfile(path, dtype="<f8")


def sample_environment(spec: CorrelationSpec, l: int, seed: int, stream: int = 0) -> EnvSample:
    cov = toeplitz_cov(spec, l)
    g = stream_rng(seed, stream).standard_normal(l)
    return EnvSample(cov.chol @ g, int(seed), spec, int(stream))


def sample_environments(spec: CorrelationSpec, l: int, seed: int, streams) -> np.ndarray:
    """Rows are the environments for the given stream indices."""
    streams = list(streams)
    cov = toeplitz_cov(spec, l)
    G = np.empty((len(streams), l))
    for i, s in enumerate(streams):
        G[i] = stream_rng(seed, s).standard_normal(l)
    return G @ cov.chol.T


def inverse_quadratic_form(spec: CorrelationSpec, l: int) -> float:
    """<Υ_l^{-1} 1, 1> = |L^{-1} 1|^2."""
    cov = toeplitz_cov(spec, l)
    y = sla.solve_triangular(cov.chol, np.ones(l), lower=True)
    return float(y @ y)


def shift_entropy(spec: CorrelationSpec, l: int, shift_per_site: float) -> float:
    """Relative entropy of the Gaussian vector shifted by `shift_per_site` on every site."""
    if shift_per_site == 0:
        return 0.0
    return 0.5 * shift_per_site ** 2 * inverse_quadratic_form(spec, l)


class PerronPair(NamedTuple):
    mu: float
    U: np.ndarray
    iterations: int


def perron_eigen(spec: CorrelationSpec, l: int, tol: float = 1e-10,
                 max_iter: int = 200_000) -> PerronPair:
    """Dominant eigenpair of Υ_l by power iteration from the all-ones vector,
    scaled so that min U = 1."""
    if not spec.nonnegative:
        raise ValueError("Perron–Frobenius requires nonnegative matrix")
    row = spec.rho(l)
    v = np.ones(l)
    if l <= 2048:
        T = sla.toeplitz(row)
        mv = T.__matmul__
    else:
        def mv(x):
            return sla.matmul_toeplitz(row, x)
    for it in range(1, max_iter + 1):
        w = mv(v)
        mu = float(v @ w / (v @ v))
        if np.max(np.abs(w - mu * v)) / v.min() <= tol * mu:
            U = v / v.min()
            return PerronPair(mu, U, it)
        v = w / np.max(w)
    raise RuntimeError("power iteration did not converge")


class ProbEstimate(NamedTuple):
    log_prob: float
    ci: tuple
    rel_err: float
    method: str
    diagnostics: dict


def _tilt_setup(L: np.ndarray, A: float):
    D = np.diag(L).copy()
    Lt = L / D[:, None]
    np.fill_diagonal(Lt, 0.0)
    return Lt, A / D


def _tilt_residual(x, mu, Lt, lo):
    d = len(lo)
    lt = lo - mu - Lt @ x
    P = np.exp(-0.5 * lt ** 2 - log_ndtr(-lt)) / math.sqrt(2.0 * math.pi)
    g1 = (-mu + Lt.T @ P)[:d - 1]
    g2 = (mu - x + P)[:d - 1]
    return g1, g2, lt, P


def _minimax_tilt(Lt, lo, tol: float = 1e-10, max_iter: int = 60):
    """Saddle point of the exponential-tilting bound for P(L z >= A).

    Newton iteration on the stationarity equations in (x, mu); the mu block of
    the Jacobian is diagonal, so each step is one dense solve of size d-1 for
    the Schur complement.
    """
    d = len(lo)
    if d == 1:
        return np.zeros(1), True
    x = np.zeros(d)
    for k in range(d):
        x[k] = max(lo[k] - Lt[k, :k] @ x[:k], 0.0)
    x[d - 1] = 0.0
    mu = np.zeros(d)
    for _ in range(max_iter):
        g1, g2, lt, P = _tilt_residual(x, mu, Lt, lo)
        nrm = math.sqrt(g1 @ g1 + g2 @ g2)
        if nrm < tol * math.sqrt(d):
            return mu, True
        dP = -P ** 2 + lt * P
        DL = dP[:, None] * Lt
        xx = (Lt.T @ DL)[:d - 1, :d - 1]
        mx = DL[:d - 1, :d - 1] - np.eye(d - 1)
        dm = 1.0 + dP[:d - 1]
        S = xx - mx.T @ (mx / dm[:, None])
        dx = np.linalg.solve(S, -g1 + mx.T @ (g2 / dm))
        dmu = (-g2 - mx @ dx) / dm
        t = 1.0
        while True:
            xn, mun = x.copy(), mu.copy()
            xn[:d - 1] += t * dx
            mun[:d - 1] += t * dmu
            a, b, _, _ = _tilt_residual(xn, mun, Lt, lo)
            if math.sqrt(a @ a + b @ b) < (1.0 - 1e-4 * t) * nrm or t < 1e-8:
                break
            t *= 0.5
        x, mu = xn, mun
    return mu, False


def _tilted_log_weights(n, Lt, lo, mu, rng):
    d = len(lo)
    Z = np.zeros((d, n))
    logw = np.zeros(n)
    for k in range(d):
        tl = lo[k] - mu[k] - Lt[k, :k] @ Z[:k]
        lp = log_ndtr(-tl)
        z = -ndtri_exp(np.log(rng.random(n)) + lp)
        Z[k] = mu[k] + z
        logw += lp + 0.5 * mu[k] ** 2 - mu[k] * Z[k]
    return logw


def _logmeanexp(x) -> float:
    m = np.max(x)
    if not np.isfinite(m):
        return -math.inf
    return float(m + math.log(np.mean(np.exp(x - m))))


def _batch_ci(logw: np.ndarray, batches: int, z: float = 1.959963984540054):
    est = _logmeanexp(logw)
    if not np.isfinite(est):
        return est, (-math.inf, -math.inf), math.inf
    blocks = np.array_split(logw, batches)
    rel = np.exp(np.array([_logmeanexp(b) for b in blocks]) - est)
    se = float(np.std(rel, ddof=1) / math.sqrt(batches))
    lo = est + math.log(1.0 - z * se) if z * se < 1.0 else -math.inf
    hi = est + math.log1p(z * se)
    return est, (lo, hi), se


def prob_all_above(spec: CorrelationSpec, l: int, A: float, budget: int = 20_000,
                   seed: int = 0, method: str = "tilted", shift: float | None = None,
                   batches: int = 40) -> ProbEstimate:
    """log P(omega_i >= A for all i <= l) by importance sampling.

    method="tilted" samples sequentially from truncated normals under the
    minimax exponential tilt; method="perron_shift" shifts the whole vector by
    B*U with U the Perron eigenvector and reweights by the Gaussian likelihood
    ratio, B = 2 max(A, 2 sqrt(log l)) by default.
    """
    if budget < 1000:
        raise ValueError("degenerate budget: need at least 1000 samples")
    if batches < 30:
        raise ValueError("need at least 30 batches for the interval")
    if not spec.nonnegative:
        raise ValueError("nonnegative correlations required")
    cov = toeplitz_cov(spec, l)
    rng = stream_rng(seed, 0)
    if method == "tilted":
        Lt, lo = _tilt_setup(np.asarray(cov.chol), A)
        mu, ok = _minimax_tilt(Lt, lo)
        chunk = max(256, min(budget, (1 << 26) // (8 * l)))
        logw = np.concatenate([_tilted_log_weights(min(chunk, budget - i), Lt, lo, mu, rng)
                               for i in range(0, budget, chunk)])
        diag = {"solver_converged": ok}
    elif method == "perron_shift":
        U = perron_eigen(spec, l).U
        B = shift if shift is not None else 2.0 * max(A, 2.0 * math.sqrt(math.log(max(l, 2))))
        v = cov.solve(U)                    # Υ^{-1} U
        G = rng.standard_normal((budget, l)) @ cov.chol.T
        W = B * U + G
        inside = np.all(W >= A, axis=1)
        logw = np.where(inside, -B * (W @ v) + 0.5 * B * B * float(U @ v), -np.inf)
        diag = {"shift": B, "shifted_hit_rate": float(inside.mean())}
    else:
        raise ValueError(f"unknown method {method!r}")
    est, ci, se = _batch_ci(logw, batches)
    diag["budget"] = budget
    diag["batches"] = batches
    return ProbEstimate(est, ci, se, method, diag)


class MaxEstimate(NamedTuple):
    mean: float
    std_err: float


def expected_max(spec: CorrelationSpec, l: int, n_samples: int, seed: int) -> MaxEstimate:
    """Monte-Carlo E[max_i omega_i] over a block of length l."""
    cov = toeplitz_cov(spec, l)
    rng = stream_rng(seed, 0)
    out = []
    for start in range(0, n_samples, 4096):
        n = min(4096, n_samples - start)
        W = rng.standard_normal((n, l)) @ cov.chol.T
        out.append(W.max(axis=1))
    m = np.concatenate(out)
    return MaxEstimate(float(m.mean()), float(m.std(ddof=1) / math.sqrt(len(m))))
