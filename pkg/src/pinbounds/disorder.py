"""Disorder laws, their log moment generating functions and the copolymer gap weight.

The gap weight is

    f_gamma(a, b; k) = E[((1 + exp(a S_k + b k)) / 2) ** gamma],

with ``S_k`` the sum of ``k`` independent disorder variables.  It is evaluated
in log space throughout: the integrand power is ``exp(gamma (softplus(x) - log 2))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np
from scipy import optimize, special, stats

from .errors import DomainError, NumericalFailure

LOG2 = math.log(2.0)
K_EXACT_DEFAULT = 10_000


class DisorderFamily(str, Enum):
    GAUSSIAN_UNIT = "gaussian"
    BINARY_SYMMETRIC = "binary"
    BERNOULLI_INDICATOR = "bernoulli"


@dataclass(frozen=True)
class DisorderLaw:
    """One-dimensional disorder law with every exponential moment finite.

    The two centered families (unit Gaussian, +-1 coin) are the pinning and
    copolymer conventions; ``BERNOULLI_INDICATOR`` is the raw {0, 1} mark of
    the reduced wetting model and is not centered.
    """

    family: DisorderFamily
    p: float | None = None
    k_exact: int = K_EXACT_DEFAULT

    def __post_init__(self):
        object.__setattr__(self, "family", DisorderFamily(self.family))
        if self.family is DisorderFamily.BERNOULLI_INDICATOR:
            if self.p is None or not 0.0 < self.p < 1.0:
                raise DomainError(f"Bernoulli parameter must lie in (0, 1), got {self.p}")
        elif self.p is not None:
            raise DomainError("p only applies to the Bernoulli indicator")
        if self.k_exact < 1:
            raise DomainError("k_exact must be >= 1")

    @classmethod
    def gaussian(cls):
        return cls(DisorderFamily.GAUSSIAN_UNIT)

    @classmethod
    def binary(cls, k_exact=K_EXACT_DEFAULT):
        return cls(DisorderFamily.BINARY_SYMMETRIC, k_exact=k_exact)

    @classmethod
    def bernoulli(cls, p, k_exact=K_EXACT_DEFAULT):
        return cls(DisorderFamily.BERNOULLI_INDICATOR, p, k_exact)

    @property
    def centered(self):
        return self.family is not DisorderFamily.BERNOULLI_INDICATOR

    @property
    def mean(self):
        return 0.0 if self.centered else self.p

    @property
    def variance(self):
        return 1.0 if self.centered else self.p * (1.0 - self.p)


def log_mgf(law, u):
    """``log E exp(u omega)``; vectorized in ``u``."""
    u = np.asarray(u, dtype=float)
    if law.family is DisorderFamily.GAUSSIAN_UNIT:
        out = 0.5 * u * u
    elif law.family is DisorderFamily.BINARY_SYMMETRIC:
        au = np.abs(u)
        with np.errstate(over="ignore"):
            # cosh u - 1 = 2 sinh(u/2)^2 avoids cancellation near 0
            small = np.log1p(2.0 * np.sinh(0.5 * np.minimum(au, 1.0)) ** 2)
        out = np.where(au < 1.0, small, au + np.log1p(np.exp(-2.0 * au)) - LOG2)
    else:
        p = law.p
        # log(1 - p + p e^u) = logaddexp(log(1-p), log p + u)
        with np.errstate(over="ignore"):
            small = np.log1p(p * np.expm1(np.minimum(u, 1.0)))
        out = np.where(np.abs(u) < 1.0, small, np.logaddexp(math.log1p(-p), math.log(p) + u))
    return float(out) if out.ndim == 0 else out


def dlog_mgf(law, u):
    """Derivative of :func:`log_mgf`, the tilted mean ``M'(u)/M(u)``."""
    u = np.asarray(u, dtype=float)
    if law.family is DisorderFamily.GAUSSIAN_UNIT:
        out = u
    elif law.family is DisorderFamily.BINARY_SYMMETRIC:
        out = np.tanh(u)
    else:
        out = special.expit(u + math.log(law.p) - math.log1p(-law.p))
    return float(out) if out.ndim == 0 else out


def rate_function(law, q):
    """Legendre transform ``I(q) = sup_u (u q - log M(u))``, computed numerically."""
    lo, hi = _support(law)
    if q < lo or q > hi:
        return math.inf
    if q == law.mean:
        return 0.0
    if q in (lo, hi):
        # endpoint of a bounded support: I = -log P(omega = q)
        prob = 0.5 if law.family is DisorderFamily.BINARY_SYMMETRIC else (law.p if q == hi else 1 - law.p)
        return -math.log(prob)
    g = lambda u: dlog_mgf(law, u) - q
    step = 1.0
    while g(step) < 0:
        step *= 2.0
    while g(-step) > 0:
        step *= 2.0
    u = optimize.brentq(g, -step, step, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    return u * q - log_mgf(law, u)


def _support(law):
    if law.family is DisorderFamily.GAUSSIAN_UNIT:
        return -math.inf, math.inf
    if law.family is DisorderFamily.BINARY_SYMMETRIC:
        return -1.0, 1.0
    return 0.0, 1.0


def rng_stream(seed, stream_id):
    """Independent generator for ``(seed, stream_id)``; identical inputs give identical draws."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(stream_id,))))


def sample(law, rng, n):
    if n < 1:
        raise DomainError("sample count must be >= 1")
    if law.family is DisorderFamily.GAUSSIAN_UNIT:
        return rng.standard_normal(n)
    if law.family is DisorderFamily.BINARY_SYMMETRIC:
        return 2.0 * rng.integers(0, 2, size=n) - 1.0
    return (rng.random(n) < law.p).astype(float)


# --------------------------------------------------------------------------
# gap weights


@dataclass(frozen=True)
class GapWeightRequest:
    a: float
    b: float
    gamma: float
    k: int

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise DomainError(f"gamma must lie in (0, 1], got {self.gamma}")
        if int(self.k) != self.k or self.k < 1:
            raise DomainError(f"gap length must be an integer >= 1, got {self.k}")


@dataclass(frozen=True)
class GapWeight:
    log_value: float
    rel_error: float
    approximate: bool = False
    """True when a lattice sum was replaced by its Gaussian approximation."""

    @property
    def value(self):
        """``inf`` when the weight exceeds the float range; ``log_value`` stays exact."""
        return math.exp(self.log_value) if self.log_value < 709.0 else math.inf

    @property
    def error(self):
        return self.value * self.rel_error


@dataclass(frozen=True)
class GapWeights:
    """Vectorized gap weights: log values, relative error bounds, approximation flags."""

    log_value: np.ndarray
    rel_error: np.ndarray
    approximate: np.ndarray


def gap_weight(law, req):
    """``f_gamma(a, b; k)`` with an error bound."""
    w = log_gap_weights(law, req.a, req.b, req.gamma, np.array([req.k]))
    return GapWeight(float(w.log_value[0]), float(w.rel_error[0]), bool(w.approximate[0]))


def gap_weight_upper(law, req):
    """Closed-form bound ``2**(1-gamma) (1 + exp(k (b gamma + log M(gamma a)))) / 2``."""
    lv = log_gap_weight_upper(law, req)
    return math.exp(lv) if lv < 709.0 else math.inf


def log_gap_weight_upper(law, req):
    rate = req.b * req.gamma + log_mgf(law, req.gamma * req.a)
    return -req.gamma * LOG2 + float(np.logaddexp(0.0, req.k * rate))


def log_gap_weights(law, a, b, gamma, ks):
    """``log f_gamma(a, b; k)`` for every ``k`` in ``ks``."""
    if not 0.0 < gamma <= 1.0:
        raise DomainError(f"gamma must lie in (0, 1], got {gamma}")
    ks = np.asarray(ks, dtype=np.int64)
    if np.any(ks < 1):
        raise DomainError("gap lengths must be >= 1")
    kf = ks.astype(float)
    out = np.empty(ks.shape)
    err = np.zeros(ks.shape)
    approx = np.zeros(ks.shape, dtype=bool)
    if a == 0.0:
        out[:] = gamma * (np.logaddexp(0.0, b * kf) - LOG2)
        return GapWeights(out, err, approx)
    if law.family is DisorderFamily.GAUSSIAN_UNIT:
        out[:], err[:] = _gaussian_log_weights(gamma, b * kf, abs(a) * np.sqrt(kf))
        return GapWeights(out, err, approx)
    exact = ks <= law.k_exact
    for i in np.flatnonzero(exact):
        out[i] = _lattice_log_weight(law, a, b, gamma, int(ks[i]))
    err[exact] = 1e-13
    if np.any(~exact):
        kk = kf[~exact]
        mu = (a * law.mean + b) * kk
        sigma = abs(a) * math.sqrt(law.variance) * np.sqrt(kk)
        out[~exact], err[~exact] = _gaussian_log_weights(gamma, mu, sigma)
        approx[~exact] = True
    return GapWeights(out, err, approx)


def _lattice_log_weight(law, a, b, gamma, k):
    j = np.arange(k + 1)
    if law.family is DisorderFamily.BINARY_SYMMETRIC:
        logp = stats.binom.logpmf(j, k, 0.5)
        x = a * (2.0 * j - k) + b * k
    else:
        logp = stats.binom.logpmf(j, k, law.p)
        x = a * j + b * k
    return float(special.logsumexp(logp + gamma * (np.logaddexp(0.0, x) - LOG2)))


# composite Gauss-Legendre layout for the Gaussian case
_WINDOW_Z = 10.0  # half-width (in z) of each Gaussian bump window
_KINK_Y = 30.0  # half-width (in units of the softplus argument) of the kink window
_PANELS = 30
_ORDERS = (8, 12, 16, 24, 32, 48)
_REL_TOL = 1e-9
_CHUNK = 512


@lru_cache(maxsize=None)
def _legendre(q):
    x, w = np.polynomial.legendre.leggauss(q)
    return x, w


def _gaussian_log_weights(gamma, mu, sigma):
    """``log E[((1 + e^X)/2)^gamma]`` for ``X ~ N(mu, sigma**2)``, elementwise.

    Writing ``X = mu + sigma Z`` the integrand in ``z`` has up to two bumps, one at
    ``z = 0`` and one at ``z = gamma sigma`` (where the tilt ``e^{gamma X}`` takes
    over), joined through a bend of width ``1/sigma`` around ``z = -mu/sigma``.
    Each region gets its own Gauss-Legendre panels, and the node order is raised
    until two consecutive orders agree to ``_REL_TOL``.
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
    out = np.empty(mu.shape)
    err = np.empty(mu.shape)
    for start in range(0, mu.size, _CHUNK):
        sl = slice(start, start + _CHUNK)
        out[sl], err[sl] = _gaussian_chunk(gamma, mu[sl], sigma[sl])
    return out, err


def _gaussian_chunk(gamma, mu, sigma):
    z0 = -mu / sigma
    peak = gamma * sigma
    half = _KINK_Y / sigma
    lo = np.minimum(-_WINDOW_Z, peak - _WINDOW_Z)
    hi = np.maximum(_WINDOW_Z, peak + _WINDOW_Z)
    cuts = np.stack(
        [
            np.full_like(mu, -_WINDOW_Z),
            np.full_like(mu, _WINDOW_Z),
            peak - _WINDOW_Z,
            peak + _WINDOW_Z,
            z0 - half,
            z0 + half,
        ],
        axis=1,
    )
    cuts = np.sort(np.clip(cuts, lo[:, None], hi[:, None]), axis=1)
    # panel edges: each of the 5 segments split into _PANELS equal panels
    frac = np.linspace(0.0, 1.0, _PANELS + 1)
    left = cuts[:, :-1, None] + (cuts[:, 1:, None] - cuts[:, :-1, None]) * frac[None, None, :-1]
    width = (cuts[:, 1:] - cuts[:, :-1])[:, :, None] / _PANELS * np.ones_like(frac[None, None, :-1])
    left = left.reshape(mu.size, -1)
    width = width.reshape(mu.size, -1)

    def integrate_order(q, rows):
        x, w = _legendre(q)
        z = left[rows, :, None] + 0.5 * width[rows, :, None] * (x + 1.0)
        with np.errstate(divide="ignore"):
            logw = np.log(0.5 * width[rows, :, None] * w)
        y = sigma[rows, None, None] * z + mu[rows, None, None]
        terms = logw + gamma * (np.logaddexp(0.0, y) - LOG2) - 0.5 * z * z
        terms = terms.reshape(len(rows), -1)
        return special.logsumexp(terms, axis=1) - 0.5 * math.log(2.0 * math.pi)

    rows = np.arange(mu.size)
    prev = integrate_order(_ORDERS[0], rows)
    out = np.empty(mu.size)
    err = np.empty(mu.size)
    for q in _ORDERS[1:]:
        cur = integrate_order(q, rows)
        diff = np.abs(cur - prev)
        done = diff <= _REL_TOL
        out[rows[done]] = cur[done]
        err[rows[done]] = diff[done]
        rows, prev = rows[~done], cur[~done]
        if rows.size == 0:
            return out, err
    raise NumericalFailure(
        f"Gaussian gap weight did not converge for mu={mu[rows[0]]}, sigma={sigma[rows[0]]}"
    )
