"""Free energy of homogeneous weighted renewals.

A :class:`WeightedRenewalSpec` describes the partition function

    Z_N = sum over renewals tau with N in tau of  prod_j e^nu w(g_j) Q(g_j),

with ``Q`` a probability law on gap lengths ``g_j``.  Its free energy is the
largest ``F >= r`` (``r`` the growth rate of ``w``) solving

    Phi(F) = e^nu sum_n Q(n) w(n) e^{-F n} = 1,

or ``F = max(0, r)`` when ``Phi`` never reaches 1 there.

Weights are known explicitly up to some length and through a two-sided
exponential envelope beyond, so every evaluation of ``Phi`` is an interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import optimize

from . import disorder as dis_mod
from .errors import DomainError, IndeterminateError
from .kernels import SeriesValue, c_of_gamma, normalized, tilt_kernel
from .params import ModelParams

LOG2 = math.log(2.0)
PHI_BAND = 1e-12
"""Half-width (in log Phi) of the band around 1 treated as undecidable."""
N_WEIGHTS_DEFAULT = 4096
_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class FiniteKernel:
    """A gap law with finite support ``1..len(probs)``."""

    probs: tuple

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise DomainError("finite kernel must be a probability vector")

    @classmethod
    def dirac(cls, n=1):
        return cls(tuple([0.0] * (n - 1) + [1.0]))

    @property
    def log_table(self):
        with np.errstate(divide="ignore"):
            return np.log(np.asarray(self.probs, dtype=float))

    @property
    def n_exact(self):
        return len(self.probs)

    def log_q(self, n):
        n = np.asarray(n)
        table = self.log_table
        out = np.full(n.shape, -np.inf)
        inside = n <= len(table)
        out[inside] = table[n[inside] - 1]
        return out

    def tail(self, x=0.0, n0=None):
        return SeriesValue(0.0, 0.0)


# --------------------------------------------------------------------------
# gap weights


@dataclass(frozen=True)
class Envelope:
    """``lo0 + lo1 e^{rho n} <= w(n) <= hi0 + hi1 e^{rho n}`` beyond the explicit range."""

    lo0: float
    lo1: float
    hi0: float
    hi1: float
    rho: float

    @property
    def exact(self):
        return self.lo0 == self.hi0 and self.lo1 == self.hi1

    def log_hi(self, n):
        n = np.asarray(n, dtype=float)
        if not self.hi1:
            return np.full(n.shape, math.log(self.hi0))
        return np.logaddexp(math.log(self.hi0), math.log(self.hi1) + self.rho * n)


class UnitWeight:
    """``w == 1``."""

    envelope = Envelope(1.0, 0.0, 1.0, 0.0, 0.0)
    n_star = 0

    def explicit_limit(self, n0):
        return 0

    def log_values(self, n):
        return np.zeros(np.shape(n))

    @property
    def rate(self):
        return 0.0


@dataclass(frozen=True)
class AnnealedGapWeight:
    """``w(n) = (1 + e^{rho n}) / 2``, exactly."""

    rho: float
    n_star = 0

    @property
    def envelope(self):
        return Envelope(0.5, 0.5, 0.5, 0.5, self.rho)

    @property
    def rate(self):
        return max(0.0, self.rho)

    def explicit_limit(self, n0):
        return 0

    def log_values(self, n):
        return np.logaddexp(0.0, self.rho * np.asarray(n, dtype=float)) - LOG2


@lru_cache(maxsize=256)
def _cached_gap_logs(dis2, a, b, gamma, n):
    w = dis_mod.log_gap_weights(dis2, a, b, gamma, np.arange(1, n + 1))
    w.log_value.setflags(write=False)
    return w


@dataclass(frozen=True)
class FractionalGapWeight:
    """``w(n) = f_gamma(a, b; n)``.

    Explicit up to the length where ``e^{rho n}`` is negligible (``rho < 0``) or
    ``n_weights`` otherwise; beyond, ``2^-gamma <= w(n) <= 2^-gamma (1 + e^{rho n})``
    with ``rho = b gamma + log M(gamma a)``.
    """

    dis2: dis_mod.DisorderLaw
    a: float
    b: float
    gamma: float
    n_weights: int = N_WEIGHTS_DEFAULT
    n_star = 0

    @property
    def rho(self):
        return self.b * self.gamma + dis_mod.log_mgf(self.dis2, self.gamma * self.a)

    @property
    def envelope(self):
        c = 2.0 ** -self.gamma
        return Envelope(c, 0.0, c, c, self.rho)

    @property
    def rate(self):
        return max(0.0, self.rho)

    def explicit_limit(self, n0):
        rho = self.rho
        if rho < 0:
            return min(n0, self.n_weights, max(64, math.ceil(40.0 / -rho)))
        return min(n0, self.n_weights)

    def log_values(self, n):
        n = np.asarray(n)
        if n.size == 0:
            return np.zeros(0)
        table = _cached_gap_logs(self.dis2, self.a, self.b, self.gamma, int(n.max())).log_value
        return table[n - 1]

    def approximate_upto(self, n):
        return bool(_cached_gap_logs(self.dis2, self.a, self.b, self.gamma, n).approximate.any())


@dataclass(frozen=True)
class PerturbedWeight:
    """``inner`` multiplied by ``exp(boost[n-1])`` for ``n <= len(boost)``."""

    inner: object
    boost: tuple

    @property
    def envelope(self):
        return self.inner.envelope

    @property
    def rate(self):
        return self.inner.rate

    @property
    def n_star(self):
        return len(self.boost)

    def explicit_limit(self, n0):
        return min(n0, max(self.inner.explicit_limit(n0), len(self.boost)))

    def log_values(self, n):
        n = np.asarray(n)
        out = np.array(self.inner.log_values(n), dtype=float)
        b = np.asarray(self.boost, dtype=float)
        inside = n <= len(b)
        out[inside] += b[n[inside] - 1]
        return out


# --------------------------------------------------------------------------
# weighted renewal problem and solver


@dataclass(frozen=True)
class WeightedRenewalSpec:
    kernel: object
    nu: float
    weight: object = field(default_factory=UnitWeight)

    def __post_init__(self):
        if not math.isfinite(self.nu):
            raise DomainError(f"tilt must be finite, got {self.nu}")
        env = self.weight.envelope
        if min(env.lo0, env.lo1, env.hi0, env.hi1) < 0 or env.lo0 + env.lo1 <= 0:
            raise DomainError("weight envelope coefficients must be >= 0 with a positive floor")
        n0 = len(self.kernel.log_table)
        n1 = self.weight.explicit_limit(n0)
        lo = self.weight.n_star + 1
        if n1 >= lo:
            n = np.arange(lo, n1 + 1)
            excess = self.weight.log_values(n) - env.log_hi(n)
            if np.any(excess > 1e-9):
                bad = int(n[np.argmax(excess)])
                raise DomainError(f"weight exceeds its declared growth envelope at n={bad}")

    @property
    def rate(self):
        return self.weight.rate


@dataclass(frozen=True)
class FreeEnergyResult:
    value: float
    """Free energy; an upper bound when the weight envelope is not tight."""
    localized: bool
    phi_at_zero: tuple
    """Interval for ``Phi`` at ``max(0, r)``."""
    root_residual: float
    value_lower: float | None = None
    saturated: bool = False
    """``F`` equals the weight growth rate ``r > 0`` rather than a root."""
    decided: bool = True

    def __post_init__(self):
        if self.value_lower is None:
            object.__setattr__(self, "value_lower", self.value)


class _Phi:
    """Interval evaluation of ``log Phi(F)``."""

    def __init__(self, spec):
        self.spec = spec
        q = spec.kernel
        self.logq = np.asarray(q.log_table)
        n0 = len(self.logq)
        self.n0 = n0
        n1 = spec.weight.explicit_limit(n0)
        ns = np.arange(1, n0 + 1, dtype=float)
        self.n_head = ns[:n1]
        self.head = self.logq[:n1] + (spec.weight.log_values(np.arange(1, n1 + 1)) if n1 else 0.0)
        self.n_mid = ns[n1:]
        self.env = spec.weight.envelope

    def __call__(self, f):
        env = self.env
        with np.errstate(under="ignore"):
            head = float(np.sum(np.exp(self.head - f * self.n_head)))
            base = float(np.sum(np.exp(self.logq[len(self.n_head):] - f * self.n_mid)))
            tilted = 0.0
            if env.lo1 or env.hi1:
                tilted = float(np.sum(np.exp(self.logq[len(self.n_head):] + (env.rho - f) * self.n_mid)))
        t0 = self.spec.kernel.tail(f, self.n0)
        t1 = SeriesValue(0.0, 0.0)
        if env.lo1 or env.hi1:
            t1 = self.spec.kernel.tail(max(0.0, f - env.rho), self.n0)
        lo = head + env.lo0 * (base + t0.value - t0.error) + env.lo1 * (tilted + t1.value - t1.error)
        hi = head + env.hi0 * (base + t0.value + t0.error) + env.hi1 * (tilted + t1.value + t1.error)
        rounding = 8 * _EPS * math.log2(self.n0 + 1) * hi
        lo, hi = max(lo - rounding, 0.0), hi + rounding
        nu = self.spec.nu
        return (nu + math.log(lo) if lo > 0 else -math.inf), (nu + math.log(hi) if hi < math.inf else math.inf)


def phi_interval(spec, f):
    """Interval ``(Phi_lo, Phi_hi)`` enclosing ``Phi(f)``."""
    lo, hi = _Phi(spec)(f)
    return math.exp(lo), math.exp(hi)


def is_delocalized(spec):
    """True iff ``Phi(max(0,r)) <= 1`` is certified (up to ``PHI_BAND``); False iff ``> 1`` is.

    Raises IndeterminateError when the interval straddles 1.
    """
    phi = _Phi(spec)
    lo, hi = phi(spec.rate)
    if hi <= PHI_BAND:
        return True
    if lo > PHI_BAND:
        return False
    raise IndeterminateError("Phi straddles 1 at the left end of the root domain", (math.exp(lo), math.exp(hi)))


def _root(fn, f0):
    f_hi = max(f0, 0.0) + 1.0
    while fn(f_hi) > 0:
        f_hi = f0 + 2.0 * (f_hi - f0)
        if f_hi > 1e6:
            raise DomainError("free energy root not bracketed below 1e6")
    f_lo = f0
    if f0 == 0.0:
        # heavy tails put the root far below any absolute tolerance
        while f_hi > 1e-300 and fn(f_hi / 16.0) < 0:
            f_hi /= 16.0
        f_lo = f_hi / 16.0 if f_hi > 1e-300 else 0.0
    return optimize.brentq(fn, f_lo, f_hi, xtol=min(1e-14, 1e-13 * f_hi), rtol=4 * _EPS, maxiter=500)


def solve_free_energy(spec, strict=True):
    """Free energy of ``spec``.

    With ``strict`` an undecidable sign of ``Phi(max(0,r)) - 1`` raises
    IndeterminateError; otherwise the conservative (upper) value is returned
    with ``decided=False``.
    """
    phi = _Phi(spec)
    f0 = spec.rate
    lo0, hi0 = phi(f0)
    at_zero = (math.exp(lo0), math.exp(hi0) if hi0 < 700 else math.inf)
    if hi0 <= PHI_BAND:
        return FreeEnergyResult(f0, f0 > 0, at_zero, abs(math.expm1(hi0)), f0, saturated=f0 > 0)
    decided = lo0 > PHI_BAND
    if not decided and strict:
        raise IndeterminateError(
            "tail bounds too loose to decide whether Phi exceeds 1", at_zero
        )
    upper = _root(lambda f: phi(f)[1], f0)
    lower = _root(lambda f: phi(f)[0], f0) if lo0 > 0 else f0
    residual = abs(math.expm1(phi(upper)[1]))
    return FreeEnergyResult(upper, upper > 0, at_zero, residual, min(lower, upper), decided=decided)


def weighted_renewal_dp(log_step):
    """``log Z_n`` for ``n = 0..len(log_step)`` from ``Z_n = sum_j Z_j exp(log_step[n-j-1])``."""
    log_step = np.asarray(log_step, dtype=float)
    n = log_step.size
    lz = np.empty(n + 1)
    lz[0] = 0.0
    for m in range(1, n + 1):
        terms = lz[:m] + log_step[m - 1 :: -1]
        top = terms.max()
        if top == -np.inf:
            lz[m] = -np.inf
            continue
        lz[m] = top + math.log(np.sum(np.exp(terms - top)))
    return lz


def spec_log_steps(spec, n):
    ns = np.arange(1, n + 1)
    return spec.nu + spec.kernel.log_q(ns) + spec.weight.log_values(ns)


def check_against_dp(spec, n):
    """``(solver F, log Z_n / n)`` with ``Z_n`` from the exact O(n^2) recursion."""
    if n < 2:
        raise DomainError("DP size must be >= 2")
    lz = weighted_renewal_dp(spec_log_steps(spec, n))
    return solve_free_energy(spec, strict=False).value, float(lz[n] / n)


# --------------------------------------------------------------------------
# model specializations


def homogeneous_critical_point(law):
    """``-log c(1)``, the reward at which the homogeneous model localizes."""
    return -c_of_gamma(law, 1.0).log


def homogeneous_spec(law, h):
    return WeightedRenewalSpec(normalized(law), h + c_of_gamma(law, 1.0).log)


def homogeneous_free_energy(law, h, strict=True):
    return solve_free_energy(homogeneous_spec(law, h), strict)


def annealed_spec(law, dis, dis2, params):
    nu = params.h + dis_mod.log_mgf(dis, params.beta) + c_of_gamma(law, 1.0).log
    if params.lam == 0.0:
        weight = UnitWeight()
    else:
        rho = -2.0 * params.h_tilde * params.lam + dis_mod.log_mgf(dis2, -2.0 * params.lam)
        weight = AnnealedGapWeight(rho)
    return WeightedRenewalSpec(normalized(law), nu, weight)


def annealed_free_energy(law, dis, dis2, params: ModelParams, strict=True):
    """Free energy of the disorder-averaged partition function, an upper bound on the quenched one."""
    return solve_free_energy(annealed_spec(law, dis, dis2, params), strict)


def g_gamma_spec(law, dis2, gamma, nu, a, b, n_weights=N_WEIGHTS_DEFAULT):
    kernel = tilt_kernel(law, gamma)
    if a == 0.0 and b == 0.0:
        weight = UnitWeight()
    elif gamma == 1.0:
        weight = AnnealedGapWeight(b + dis_mod.log_mgf(dis2, a))
    else:
        weight = FractionalGapWeight(dis2, a, b, gamma, n_weights)
    return WeightedRenewalSpec(kernel, nu, weight)


def g_gamma(law, dis2, gamma, nu, a, b, strict=True, n_weights=N_WEIGHTS_DEFAULT):
    """Free energy of the ``K^gamma/c(gamma)`` renewal with tilt ``nu`` and gap weights ``f_gamma(a, b; .)``."""
    return solve_free_energy(g_gamma_spec(law, dis2, gamma, nu, a, b, n_weights), strict)
