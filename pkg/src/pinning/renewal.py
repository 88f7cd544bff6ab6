"""Renewal process with heavy-tailed gaps and the homogeneous pinning model.

The inter-arrival law is K(n) = c * phi(n) / n**(1 + alpha) with phi either
constant or a power of log(e + n).  Everything downstream (quenched and
annealed models) reuses the pinned recursion `pinned_logz` defined here.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import integrate

# internal horizon used when summing the normalization before the integral tail
_NORM_HORIZON = 1 << 16
_TAIL_WARN = 1e-9


@dataclass(frozen=True)
class SlowVar:
    """Slowly varying factor phi(n) = log(e + n)**gamma (gamma = 0 is constant)."""

    gamma: float = 0.0

    @property
    def is_constant(self) -> bool:
        return self.gamma == 0.0

    def __call__(self, x):
        if self.gamma == 0.0:
            return np.ones_like(np.asarray(x, dtype=float))
        return np.log(np.e + np.asarray(x, dtype=float)) ** self.gamma

    def log(self, x):
        if self.gamma == 0.0:
            return np.zeros_like(np.asarray(x, dtype=float))
        return self.gamma * np.log(np.log(np.e + np.asarray(x, dtype=float)))

    def describe(self) -> dict:
        if self.gamma == 0.0:
            return {"kind": "constant"}
        return {"kind": "log_power", "gamma": self.gamma}


CONSTANT = SlowVar()


def log_power(gamma: float) -> SlowVar:
    return SlowVar(float(gamma))


@dataclass(frozen=True, eq=False)
class InterArrivalLaw:
    """Normalized gap law.  `mass[n]` is K(n) for 1 <= n <= n_max; mass[0] = 0."""

    alpha: float
    slow_var: SlowVar
    mass: np.ndarray = field(repr=False)
    normalization: float
    n_max: int
    tail_bound: float
    warnings: tuple = ()

    def __post_init__(self):
        self.mass.setflags(write=False)

    @property
    def log_mass(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.mass)

    def kernel(self, N: int) -> np.ndarray:
        """K(1..N) as a length-N array."""
        if N > self.n_max:
            raise ValueError(f"N={N} beyond law horizon n_max={self.n_max}")
        return self.mass[1:N + 1]

    def _f(self, x):
        x = np.asarray(x, dtype=float)
        return self.slow_var(x) * x ** (-1.0 - self.alpha)

    def one_minus_laplace(self, b: float) -> float:
        """1 - sum_n exp(-b n) K(n), accurate for small b."""
        if b <= 0:
            return 0.0
        n = np.arange(1, self.n_max + 1, dtype=float)
        head = float(np.dot(self.mass[1:], -np.expm1(-b * n)))
        return head + self.normalization * _weighted_tail(
            self, lambda x: -np.expm1(-b * x), lambda x: b * np.exp(-b * x), split=40.0 / b)

    def laplace(self, b: float) -> float:
        return 1.0 - self.one_minus_laplace(b)

    def laplace_beyond(self, b: float, n0: int) -> float:
        """sum_{n > n0} exp(-b n) K(n)."""
        if n0 >= self.n_max:
            raise ValueError("n0 must be below the law horizon")
        n = np.arange(n0 + 1, self.n_max + 1, dtype=float)
        head = float(np.dot(self.mass[n0 + 1:], np.exp(-b * n)))
        if b == 0:
            return head + self.tail_bound
        rest = self.tail_bound - self.normalization * _weighted_tail(
            self, lambda x: -np.expm1(-b * x), lambda x: b * np.exp(-b * x), split=40.0 / b)
        return head + max(rest, 0.0)

    def mean(self) -> float:
        """E[tau_1]; infinite for alpha <= 1."""
        if self.alpha <= 1:
            return math.inf
        n = np.arange(1, self.n_max + 1, dtype=float)
        head = float(np.dot(self.mass[1:], n))
        return head + self.normalization * _weighted_tail(self, lambda x: x, lambda x: 1.0)

    def describe(self) -> dict:
        return {"alpha": self.alpha, "slow_var": self.slow_var.describe(), "n_max": self.n_max}


def _weighted_tail(law: InterArrivalLaw, w, dw, split=None) -> float:
    """sum_{n > n_max} f(n) w(n) for the unnormalized f, by explicit summation up
    to an internal horizon and a midpoint Euler-Maclaurin integral beyond."""
    M = max(law.n_max, _NORM_HORIZON)
    n = np.arange(law.n_max + 1, M + 1, dtype=float)
    s = float(np.sum(law._f(n) * w(n))) if n.size else 0.0
    return s + _integral_tail(law.alpha, law.slow_var, M, w, dw, split)


def _integral_tail(alpha, slow_var, M, w=None, dw=None, split=None) -> float:
    x0 = M + 0.5

    def f(x):
        return float(slow_var(x)) * x ** (-1.0 - alpha)

    def fp(x):
        base = -(1.0 + alpha) / x
        if not slow_var.is_constant:
            base += slow_var.gamma / ((np.e + x) * math.log(np.e + x))
        return f(x) * base

    if w is None:
        g = f
        gp = fp
    else:
        def g(x):
            return f(x) * float(w(x))

        def gp(x):
            return fp(x) * float(w(x)) + f(x) * float(dw(x))

    if w is None and slow_var.is_constant and alpha > 0:
        integral = x0 ** (-alpha) / alpha
    else:
        integral = _quad_to_inf(g, x0, split)
    return integral - gp(x0) / 24.0


def _quad_to_inf(g, x0: float, split: float | None) -> float:
    # substitute x = x0 * e^t; optionally split where the weight saturates
    def gt(t):
        if t > 700.0:
            return 0.0
        x = x0 * math.exp(t)
        return g(x) * x

    t_split = math.log(split / x0) if split and split > x0 else None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        if t_split is None:
            val, _ = integrate.quad(gt, 0.0, np.inf, limit=400, epsabs=0.0, epsrel=1e-12)
        else:
            a, _ = integrate.quad(gt, 0.0, t_split, limit=400, epsabs=0.0, epsrel=1e-12)
            c, _ = integrate.quad(gt, t_split, np.inf, limit=400, epsabs=0.0, epsrel=1e-12)
            val = a + c
    return val


def build_law(alpha: float, slow_var: SlowVar = CONSTANT, n_max: int = 1 << 16) -> InterArrivalLaw:
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    if n_max < 16:
        raise ValueError("n_max must be at least 16")
    if alpha == 0 and slow_var.gamma >= -1:
        raise ValueError("law not normalizable")
    M = max(n_max, _NORM_HORIZON)
    n = np.arange(1, M + 1, dtype=float)
    f = slow_var(n) * n ** (-1.0 - alpha)
    tail_int = _integral_tail(alpha, slow_var, M)
    # sum small terms first
    head = math.fsum(f[:n_max][::-1])
    beyond = math.fsum(f[n_max:][::-1]) + tail_int
    total = head + beyond
    c = 1.0 / total
    mass = np.zeros(n_max + 1)
    mass[1:] = f[:n_max] * c
    tail = beyond * c
    notes = []
    if tail > _TAIL_WARN:
        msg = f"tail mass beyond n_max={n_max} is {tail:.3e} (> {_TAIL_WARN:g})"
        notes.append(msg)
    return InterArrivalLaw(alpha=float(alpha), slow_var=slow_var, mass=mass,
                           normalization=c, n_max=int(n_max), tail_bound=tail,
                           warnings=tuple(notes))


def unit_step_law(n_max: int = 64) -> InterArrivalLaw:
    """Degenerate law K(1) = 1, handy for exact geometric checks."""
    mass = np.zeros(n_max + 1)
    mass[1] = 1.0
    return InterArrivalLaw(alpha=math.inf, slow_var=CONSTANT, mass=mass, normalization=1.0,
                           n_max=n_max, tail_bound=0.0)


@dataclass(frozen=True)
class PartitionTrace:
    logz: np.ndarray
    context: dict

    @property
    def N(self) -> int:
        return len(self.logz) - 1

    def rate(self) -> float:
        return float(self.logz[-1] / self.N)


def pinned_logz(kernel: np.ndarray, log_rewards: np.ndarray) -> np.ndarray:
    """log Z_n, n = 0..N, for Z_n = exp(r_n) * sum_k K(k) Z_{n-k}, Z_0 = 1.

    `kernel` holds K(1..N); `log_rewards` has shape (N,) or (R, N) with r_n in
    column n-1.  Values are kept in linear scale with a per-row log offset that
    is reset whenever the newest value drifts far from one; entries far in the
    past may underflow, which only drops terms that are negligible next to the
    recent ones.
    """
    r = np.atleast_2d(np.asarray(log_rewards, dtype=float))
    R, N = r.shape
    krev = np.ascontiguousarray(np.asarray(kernel, dtype=float)[:N][::-1])
    y = np.zeros((R, N + 1))
    y[:, 0] = 1.0
    offset = np.zeros(R)
    out = np.zeros((R, N + 1))
    er = np.exp(r)
    lo, hi = 1e-150, 1e150
    for n in range(1, N + 1):
        s = y[:, :n] @ krev[N - n:]
        yn = s * er[:, n - 1]
        y[:, n] = yn
        bad = (yn > hi) | (yn < lo)
        if bad.any():
            for i in np.flatnonzero(bad):
                v = yn[i]
                y[i, :n + 1] /= v
                offset[i] += math.log(v)
            out[:, n] = np.log(y[:, n]) + offset
        else:
            out[:, n] = np.log(yn) + offset
    if np.ndim(log_rewards) == 1:
        return out[0]
    return out


@dataclass(frozen=True, eq=False)
class RenewalMass:
    u: np.ndarray
    law: InterArrivalLaw

    @property
    def N(self) -> int:
        return len(self.u) - 1


def renewal_mass(law: InterArrivalLaw, N: int) -> RenewalMass:
    if N > law.n_max:
        raise ValueError(f"N={N} beyond law horizon n_max={law.n_max}")
    logz = pinned_logz(law.kernel(N), np.zeros(N))
    u = np.exp(logz)
    u[0] = 1.0
    return RenewalMass(u=u, law=law)


class LaplaceValue(NamedTuple):
    value: float
    error_bound: float


def laplace_renewal(mass: RenewalMass, b: float) -> LaplaceValue:
    """Truncated sum_{n<=N} exp(-b n) u[n] and a bound on the omitted part."""
    if not b > 0:
        raise ValueError("b must be positive")
    n = np.arange(mass.N + 1, dtype=float)
    value = float(np.dot(np.exp(-b * n), mass.u))
    err = math.exp(-b * (mass.N + 1)) / -math.expm1(-b)
    return LaplaceValue(value, err)


def renewal_laplace_exact(law: InterArrivalLaw, b: float) -> float:
    """sum_{n>=0} exp(-b n) P(n in tau) = 1 / (1 - Khat(b))."""
    if not b > 0:
        raise ValueError("b must be positive")
    return 1.0 / law.one_minus_laplace(b)


def free_energy_from_law(law: InterArrivalLaw, h: float, tol: float = 1e-10) -> float:
    """Homogeneous free energy: the b solving Khat(b) = exp(-h), 0 when h <= 0."""
    if h <= 0:
        return 0.0
    target = math.log(-math.expm1(-h))   # log(1 - e^{-h})

    def g(b):
        return math.log(law.one_minus_laplace(b)) - target

    lo, hi = 0.0, 1.0
    while g(hi) < 0:
        lo, hi = hi, 2.0 * hi
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if g(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def homogeneous_free_energy(mass: RenewalMass | InterArrivalLaw, h: float, tol: float = 1e-10) -> float:
    if not tol > 0:
        raise ValueError("tol must be positive")
    law = mass.law if isinstance(mass, RenewalMass) else mass
    return free_energy_from_law(law, h, tol)


def homogeneous_inverse(law: InterArrivalLaw, F: float) -> float:
    """The reward h >= 0 at which the homogeneous free energy equals F."""
    if F <= 0:
        return 0.0
    return -math.log1p(-law.one_minus_laplace(F))


def homogeneous_partition_dp(law: InterArrivalLaw, h: float, N: int) -> PartitionTrace:
    logz = pinned_logz(law.kernel(N), np.full(N, float(h)))
    return PartitionTrace(logz, {"law": law.describe(), "h": float(h), "mode": "homogeneous"})


class SumAsymptote(NamedTuple):
    total: float
    predicted: float

    @property
    def ratio(self) -> float:
        return self.total / self.predicted


def renewal_sum_asymptote(mass: RenewalMass, N: int) -> SumAsymptote:
    law = mass.law
    a = law.alpha
    if a in (0.0, 1.0) or a < 0:
        raise ValueError("unsupported exponent: alpha in {0, 1}")
    if N > mass.N:
        raise ValueError("N beyond computed renewal mass")
    total = math.fsum(mass.u[:N + 1])
    if N == 0:
        return SumAsymptote(total, 1.0)
    if a < 1:
        phi_N = law.normalization * float(law.slow_var(N))
        predicted = math.sin(math.pi * a) / math.pi / phi_N * N ** a
    else:
        predicted = N / law.mean()
    return SumAsymptote(total, predicted)
