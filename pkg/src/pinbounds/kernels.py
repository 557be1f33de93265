"""Inter-arrival laws of renewal processes and the fractional sums built on them.

A law is described by a power-law tail ``K(n) ~ A / n**(1 + alpha)``.  Every
family keeps an explicit table of ``log K(n)`` for ``n <= n_exact`` and a
smooth continuation for larger ``n`` that is used for tail integrals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from functools import cached_property, lru_cache

import mpmath
import numpy as np
from scipy import integrate

from .errors import DomainError, UnrepresentableKernelError

N_EXACT_DEFAULT = 100_000
SRW_AMPLITUDE = 1.0 / (2.0 * math.sqrt(math.pi))

# below this index SRW values come from exact rationals, above it from the series
_SERIES_START = 64
_MIN_N_EXACT = 1_000
_EPS = np.finfo(float).eps


class Family(str, Enum):
    SRW_RETURN = "srw_return"
    WETTING_HALF_SRW = "wetting_half_srw"
    POWER_LAW = "power_law"
    LOG_POWER_LAW = "log_power_law"


@dataclass(frozen=True)
class InterArrivalLaw:
    """Law of the gaps of a renewal, ``K(n) = L(n) / n**(1+alpha) * exp(-log_damping)``.

    ``LOG_POWER_LAW`` uses ``L(n) = amplitude / (1 + log n)**log_exponent``;
    it is the only family whose ``c(1/(1+alpha))`` can be finite.
    Use the classmethod constructors rather than the raw initializer.
    """

    family: Family
    alpha: float
    amplitude: float
    log_damping: float = 0.0
    n_exact: int = N_EXACT_DEFAULT
    log_exponent: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if not self.alpha > 0:
            raise DomainError(f"alpha must be positive, got {self.alpha}")
        if not self.amplitude > 0:
            raise DomainError(f"amplitude must be positive, got {self.amplitude}")
        if not self.log_damping >= 0:
            raise DomainError(f"log_damping must be >= 0, got {self.log_damping}")
        if self.n_exact < _MIN_N_EXACT:
            raise DomainError(f"n_exact must be at least {_MIN_N_EXACT}")
        if self.family in (Family.SRW_RETURN, Family.WETTING_HALF_SRW) and self.alpha != 0.5:
            raise DomainError("random-walk families have alpha = 1/2")
        if self.family is not Family.LOG_POWER_LAW and self.log_exponent != 0.0:
            raise DomainError("log_exponent only applies to log_power_law")

    @classmethod
    def srw_return(cls, n_exact=N_EXACT_DEFAULT, log_damping=0.0):
        """First return time (in units of two steps) of the simple random walk."""
        return cls(Family.SRW_RETURN, 0.5, SRW_AMPLITUDE, log_damping, n_exact)

    @classmethod
    def wetting_half_srw(cls, n_exact=N_EXACT_DEFAULT, log_damping=0.0):
        """Half the SRW return law: a transient renewal with total mass 1/2."""
        return cls(Family.WETTING_HALF_SRW, 0.5, SRW_AMPLITUDE / 2, log_damping, n_exact)

    @classmethod
    def power_law(cls, alpha, amplitude=None, mass=None, n_exact=N_EXACT_DEFAULT, log_damping=0.0):
        """``A / n**(1+alpha)``; give either the amplitude or the undamped total mass."""
        return cls._from_amplitude_or_mass(
            Family.POWER_LAW, alpha, amplitude, mass, n_exact, log_damping, 0.0
        )

    @classmethod
    def log_power_law(
        cls, alpha, log_exponent, amplitude=None, mass=None, n_exact=N_EXACT_DEFAULT, log_damping=0.0
    ):
        return cls._from_amplitude_or_mass(
            Family.LOG_POWER_LAW, alpha, amplitude, mass, n_exact, log_damping, log_exponent
        )

    @classmethod
    def _from_amplitude_or_mass(cls, family, alpha, amplitude, mass, n_exact, log_damping, log_exponent):
        if (amplitude is None) == (mass is None):
            raise DomainError("give exactly one of amplitude and mass")
        if amplitude is None:
            if not 0 < mass <= 1:
                raise DomainError(f"total mass must lie in (0, 1], got {mass}")
            unit = cls(family, alpha, 1.0, 0.0, n_exact, log_exponent)
            amplitude = mass / c_of_gamma(unit, 1.0).value
        law = cls(family, alpha, amplitude, log_damping, n_exact, log_exponent)
        c1 = c_of_gamma(law, 1.0)
        if c1.value - c1.error > 1.0 + 1e-12:
            raise DomainError(f"total mass {c1.value} exceeds 1")
        return law

    @property
    def is_random_walk(self):
        return self.family in (Family.SRW_RETURN, Family.WETTING_HALF_SRW)

    @property
    def gamma_min(self):
        """Left end ``1/(1+alpha)`` of the admissible fractional exponents."""
        return 1.0 / (1.0 + self.alpha)


@dataclass(frozen=True)
class SeriesValue:
    """A summed series with an absolute error bound; ``value`` may be ``inf``."""

    value: float
    error: float = 0.0

    @property
    def finite(self):
        return math.isfinite(self.value)

    @property
    def log(self):
        return math.log(self.value) if self.finite else math.inf


# --------------------------------------------------------------------------
# pointwise values


def _srw_log_ratio_series(t):
    """``log(Gamma(t+1/2) / Gamma(t+1)) + log(t)/2``, accurate to 1e-18 for t >= 64."""
    x = 1.0 / t
    x2 = x * x
    return x * (-1 / 8 + x2 * (1 / 192 + x2 * (-1 / 640 + x2 * (17 / 14336))))


@lru_cache(maxsize=None)
def _srw_exact_logs():
    # exact rationals are correctly rounded by int / int true division
    out = np.empty(_SERIES_START)
    out[0] = np.nan
    for n in range(1, _SERIES_START):
        out[n] = math.log(math.comb(2 * n, n) / ((2 * n - 1) * 4**n))
    return out


def _log_k_smooth(law, t, log_t=None):
    """Continuation of ``log K`` to real ``t >= _SERIES_START`` (no damping)."""
    t = np.asarray(t, dtype=float)
    log_t = np.log(t) if log_t is None else log_t
    base = math.log(law.amplitude) - (1.0 + law.alpha) * log_t
    if law.is_random_walk:
        return base + _srw_log_ratio_series(t) - np.log1p(-0.5 / t)
    if law.family is Family.LOG_POWER_LAW:
        return base - law.log_exponent * np.log1p(log_t)
    return base


def _log_k_array(law, n):
    n = np.asarray(n)
    if np.any(n < 1):
        raise DomainError("gap lengths must be >= 1")
    nf = n.astype(float)
    if law.is_random_walk:
        small = n < _SERIES_START
        out = _log_k_smooth(law, np.maximum(nf, _SERIES_START))
        if np.any(small):
            exact = _srw_exact_logs()[np.where(small, n, 1)]
            if law.family is Family.WETTING_HALF_SRW:
                exact = exact - math.log(2.0)
            out = np.where(small, exact, out)
    else:
        base = math.log(law.amplitude) - (1.0 + law.alpha) * np.log(nf)
        if law.family is Family.LOG_POWER_LAW:
            base = base - law.log_exponent * np.log1p(np.log(nf))
        out = base
    return out - law.log_damping


def log_k(law, n):
    """``log K(n)``; ``n`` may be an integer or an integer array."""
    if np.ndim(n) == 0:
        if int(n) != n or n < 1:
            raise DomainError(f"gap length must be an integer >= 1, got {n}")
        return float(_log_k_array(law, np.array([int(n)]))[0])
    return _log_k_array(law, np.asarray(n, dtype=np.int64))


def k_exact(law, n):
    """Exact rational ``K(n)`` of the random-walk families (undamped only)."""
    if not law.is_random_walk or law.log_damping != 0:
        raise DomainError("exact rationals exist only for undamped random-walk laws")
    value = Fraction(math.comb(2 * n, n), (2 * n - 1) * 4**n)
    return value / 2 if law.family is Family.WETTING_HALF_SRW else value


@lru_cache(maxsize=64)
def log_k_table(law):
    """Read-only array ``log K(1..n_exact)`` (index 0 holds n = 1)."""
    table = _log_k_array(law, np.arange(1, law.n_exact + 1))
    table.setflags(write=False)
    return table


# --------------------------------------------------------------------------
# tails beyond n_exact


def _power_terms(law, gamma):
    """Expansion ``K(t)**gamma = sum coef * t**(-p) + O(t**(-s-3))`` for power-like laws."""
    s = (1.0 + law.alpha) * gamma
    lead = math.exp(gamma * (math.log(law.amplitude) - law.log_damping))
    if law.is_random_walk:
        d1 = 3 * gamma / 8
        d2 = gamma / 8 + 9 * gamma * gamma / 128
        return [(lead, s), (lead * d1, s + 1), (lead * d2, s + 2)], lead
    return [(lead, s)], 0.0


def _power_integral(p, x, a):
    """``int_a^inf t**(-p) exp(-x t) dt``."""
    if x == 0.0:
        return a ** (1.0 - p) / (p - 1.0)
    return float(a ** (1.0 - p) * mpmath.expint(p, x * a))


def _quad_tail_integral(logf, a, x, log_weighted):
    """``int_a^inf f(t) dt`` through ``t = a e^u`` so heavy tails stay tractable.

    ``logf(log_t)`` returns ``(log|f|, sign)`` evaluated at ``t = exp(log_t)``.
    """
    log_a = math.log(a)

    def g(u):
        lf, sign = logf(log_a + u)
        return sign * math.exp(log_a + u + lf)

    if x > 0:
        u_max = math.log(max(60.0 / (x * a), 1.0)) + 1.0
        return integrate.quad(g, 0.0, u_max, epsabs=0.0, epsrel=1e-13, limit=400)
    return integrate.quad(g, 0.0, np.inf, epsabs=0.0, epsrel=1e-13, limit=400)


def _tail(law, gamma, x=0.0, n0=None, log_weighted=False):
    """``sum_{n > n0} K(n)**gamma * exp(-x n)`` (times ``log K(n)`` if requested).

    Uses the convexity bracket of the summand: the sum lies between
    ``int_{n0+1} f + f(n0+1)/2`` and ``int_{n0+1/2} f``; the midpoint is returned
    with half the bracket width plus integration error as the bound.
    """
    if x < 0:
        raise DomainError("tail exponent must be >= 0")
    n0 = law.n_exact if n0 is None else n0
    if n0 < _SERIES_START:
        raise DomainError(f"tails start at n0 >= {_SERIES_START}")
    s = (1.0 + law.alpha) * gamma

    def log_k_at(log_t):
        t = math.exp(min(log_t, 700.0))
        return float(_log_k_smooth(law, t, log_t)) - law.log_damping

    def logf(log_t):
        lk = log_k_at(log_t)
        lf = gamma * lk - x * math.exp(min(log_t, 700.0))
        if log_weighted:
            return lf + math.log(abs(lk)), -1.0 if lk < 0 else 1.0
        return lf, 1.0

    def f(t):
        lf, sign = logf(math.log(t))
        return sign * math.exp(lf)

    if x * n0 > 745.0:
        return SeriesValue(0.0, 0.0)
    if x == 0.0:
        if s < 1.0 - 1e-12:
            return SeriesValue(math.inf)
        log_rescued = law.family is Family.LOG_POWER_LAW and law.log_exponent * gamma > 1.0
        if s <= 1.0 + 1e-12 and not log_rescued:
            return SeriesValue(math.inf)

    def integral(a):
        if law.family is Family.LOG_POWER_LAW or log_weighted:
            return _quad_tail_integral(logf, a, x, log_weighted)
        terms, rem = _power_terms(law, gamma)
        val = sum(c * _power_integral(p, x, a) for c, p in terms)
        # remainder of the three-term expansion, |R(t)| <= rem * t**(-s-3)
        err = rem * a ** (-s - 2.0) / (s + 2.0) if rem else 0.0
        return val, err + 1e-15 * abs(val)

    upper, e1 = integral(n0 + 0.5)
    lower, e2 = integral(n0 + 1.0)
    lower += 0.5 * f(n0 + 1.0)
    value = 0.5 * (upper + lower)
    error = 0.5 * abs(upper - lower) + e1 + e2
    return SeriesValue(float(value), float(error))


# --------------------------------------------------------------------------
# fractional sums and derived kernels


def _check_gamma(gamma):
    if not 0.0 < gamma <= 1.0:
        raise DomainError(f"gamma must lie in (0, 1], got {gamma}")


@lru_cache(maxsize=4096)
def c_of_gamma(law, gamma):
    """``c(gamma) = sum_n K(n)**gamma`` as a :class:`SeriesValue` (``inf`` when divergent)."""
    _check_gamma(gamma)
    tail = _tail(law, gamma)
    if not tail.finite:
        return tail
    terms = np.exp(gamma * log_k_table(law))
    partial = float(np.sum(terms))
    rounding = 20 * _EPS * partial
    return SeriesValue(partial + tail.value, float(tail.error + rounding))


def dc_dgamma(law, gamma):
    """``c'(gamma) = sum_n K(n)**gamma log K(n)``."""
    _check_gamma(gamma)
    tail = _tail(law, gamma, log_weighted=True)
    if not tail.finite:
        return tail
    table = log_k_table(law)
    partial = float(np.sum(np.exp(gamma * table) * table))
    return SeriesValue(partial + tail.value, float(tail.error + 20 * _EPS * abs(partial)))


def kernel_entropy(law):
    """``-sum_n K(n) log K(n)``."""
    d = dc_dgamma(law, 1.0)
    return SeriesValue(-d.value, d.error)


@dataclass(frozen=True)
class TiltedKernel:
    """Probability law ``K(n)**gamma / c(gamma)``."""

    base: InterArrivalLaw
    gamma: float
    log_c_gamma: float
    effective_alpha: float

    @cached_property
    def log_table(self):
        table = self.gamma * log_k_table(self.base) - self.log_c_gamma
        table.setflags(write=False)
        return table

    @property
    def n_exact(self):
        return self.base.n_exact

    def log_q(self, n):
        return self.gamma * log_k(self.base, n) - self.log_c_gamma

    def tail(self, x=0.0, n0=None):
        """``sum_{n > n0} Q(n) exp(-x n)`` with error bound."""
        t = _tail(self.base, self.gamma, x, n0)
        scale = math.exp(-self.log_c_gamma)
        return SeriesValue(t.value * scale, t.error * scale)

    def tail_slope(self):
        """Tail exponent ``(1 + alpha) gamma`` of ``Q``."""
        return self.effective_alpha + 1.0


def tilt_kernel(law, gamma):
    c = c_of_gamma(law, gamma)
    if not c.finite:
        raise UnrepresentableKernelError(f"c({gamma}) diverges for {law.family.value}")
    return TiltedKernel(law, gamma, c.log, (1.0 + law.alpha) * gamma - 1.0)


def normalized(law):
    """The law conditioned on a finite gap, ``K / c(1)``."""
    return tilt_kernel(law, 1.0)


def dampen(law, h_neg):
    """Multiply every gap probability by ``exp(-h_neg)`` (a per-gap, not per-step, factor)."""
    if h_neg < 0:
        raise DomainError(f"damping magnitude must be >= 0, got {h_neg}")
    if h_neg == 0:
        return law
    return replace(law, log_damping=law.log_damping + h_neg)


@dataclass(frozen=True)
class RenewalMass:
    u: np.ndarray = field(repr=False)
    limit_ratio: float | None
    """``lim u(n)/K(n) = 1/(1-c(1))**2`` for transient laws, ``None`` otherwise."""


def renewal_mass(law, n_max):
    """Renewal function ``u(n) = P(n in tau)`` for ``0 <= n <= n_max``."""
    if n_max < 1:
        raise DomainError("n_max must be >= 1")
    k = np.exp(log_k(law, np.arange(1, n_max + 1)))
    u = np.zeros(n_max + 1)
    u[0] = 1.0
    for n in range(1, n_max + 1):
        u[n] = np.dot(k[:n], u[n - 1 :: -1])
    c1 = c_of_gamma(law, 1.0)
    ratio = None if c1.value >= 1.0 - 1e-9 else 1.0 / (1.0 - c1.value) ** 2
    return RenewalMass(u, ratio)
