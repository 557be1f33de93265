"""Quenched partition functions, Monte Carlo estimators and enumeration oracles.

The partition function of a frozen disorder realization is computed exactly
by the O(N^2) recursion over the last contact before ``N``:

    Z_N = sum_{j<N} Z_j K(N-j) e^{beta omega_N + h} (1 + e^{-2 lam (S_N - S_j)}) / 2,

with ``S_n`` the prefix sums of ``omega_tilde + h_tilde``.  All arithmetic is in
log space.  Sample ``i`` of a run with seed ``s`` draws its disorder from its own
stream ``(s, i)``, so estimates do not depend on batching or thread count.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import special, stats

from . import disorder as dis_mod
from .bounds import delta_gap
from .errors import DomainError, NumericalFailure, PreconditionError
from .homog import homogeneous_free_energy, weighted_renewal_dp
from .kernels import c_of_gamma, log_k
from .params import ModelParams

LOG2 = math.log(2.0)
BATCH = 16
HEAVY_TAIL_SHARE = 0.1
ROUNDING_SLACK = 1e-10
"""Relative float slack on exact identities such as E Z = B at gamma = 1."""


class Quantity(str, Enum):
    FREE_ENERGY_DENSITY = "free_energy_density"
    FRAC_MOMENT = "frac_moment"
    TAIL_PROB = "tail_prob"
    RATIO_TO_KERNEL = "ratio_to_kernel"


@dataclass(frozen=True)
class QuenchedSample:
    n: int
    log_z: float
    seed_info: tuple
    params: ModelParams


@dataclass(frozen=True)
class McEstimate:
    mean: float
    stderr: float
    n_samples: int
    n: int
    quantity: Quantity
    parameter: float | None = None
    """``gamma``, ``u`` or ``mu`` for the parametrized quantities."""
    log_scale: float = 0.0
    """Fractional moments are reported as multiples of ``exp(log_scale)``."""
    heavy_tail: bool = False


def _estimate(values, n, quantity, **kw):
    values = np.asarray(values, dtype=float)
    mean = math.fsum(values) / values.size
    stderr = float(np.std(values, ddof=1) / math.sqrt(values.size)) if values.size > 1 else math.inf
    return McEstimate(mean, stderr, values.size, n, quantity, **kw)


# --------------------------------------------------------------------------
# partition functions


def _log_gap(lam, ds):
    return np.logaddexp(0.0, -2.0 * lam * ds) - LOG2


def _dp(logk, site, s_tilde, lam):
    """Batched recursion.  ``site`` is ``(S, N)`` of ``beta omega + h``; ``s_tilde`` is ``(S, N+1)``."""
    n_batch, n = site.shape
    lz = np.empty((n_batch, n + 1))
    lz[:, 0] = 0.0
    for m in range(1, n + 1):
        terms = lz[:, :m] + logk[m - 1 :: -1]
        if lam:
            terms += _log_gap(lam, s_tilde[:, m : m + 1] - s_tilde[:, :m])
        top = terms.max(axis=1)
        lz[:, m] = top + np.log(np.exp(terms - top[:, None]).sum(axis=1)) + site[:, m - 1]
    return lz


def _inputs(params, omega, omega_tilde):
    omega = np.atleast_2d(np.asarray(omega, dtype=float))
    site = params.beta * omega + params.h
    if params.lam:
        ot = np.atleast_2d(np.asarray(omega_tilde, dtype=float))
        s = np.concatenate([np.zeros((ot.shape[0], 1)), np.cumsum(ot + params.h_tilde, axis=1)], axis=1)
    else:
        s = None
    return site, s


def quenched_log_z_prefix(law, params, omega, omega_tilde=None):
    """``log Z_n`` for ``n = 0..N`` (one row per realization when the inputs are 2-D)."""
    site, s = _inputs(params, omega, omega_tilde)
    n = site.shape[1]
    if n < 1:
        raise DomainError("disorder sequences must have length >= 1")
    logk = log_k(law, np.arange(1, n + 1))
    lz = _dp(logk, site, s, params.lam)
    return lz[0] if np.ndim(omega) == 1 else lz


def quenched_log_z(law, dis, dis2, params, omega, omega_tilde=None):
    """``log Z_{N, omega, omega_tilde}`` with ``N = len(omega)``."""
    return float(quenched_log_z_prefix(law, params, omega, omega_tilde)[-1])


def brute_force_log_z(law, params, omega, omega_tilde=None):
    """Direct sum over all ``2^(N-1)`` renewal configurations ending at ``N``."""
    omega = np.asarray(omega, dtype=float)
    n = omega.size
    if n > 20:
        raise DomainError("brute force is limited to N <= 20")
    s = None
    if params.lam:
        s = np.concatenate([[0.0], np.cumsum(np.asarray(omega_tilde, dtype=float) + params.h_tilde)])
    logk = log_k(law, np.arange(1, n + 1))
    logs = []
    for bits in itertools.product((0, 1), repeat=n - 1):
        points = [0] + [i + 1 for i, b in enumerate(bits) if b] + [n]
        w = 0.0
        for i, j in zip(points[:-1], points[1:]):
            w += logk[j - i - 1] + params.beta * omega[j - 1] + params.h
            if params.lam:
                w += float(np.logaddexp(0.0, -2.0 * params.lam * (s[j] - s[i]))) - LOG2
        logs.append(w)
    return float(special.logsumexp(logs))


def draw_disorder(dis, dis2, n, seed, stream_id):
    rng = dis_mod.rng_stream(seed, stream_id)
    omega = dis_mod.sample(dis, rng, n)
    omega_tilde = dis_mod.sample(dis2, rng, n) if dis2 is not None else np.zeros(n)
    return omega, omega_tilde


def log_z_lower_bound(law, params, omega):
    """``beta omega_N + h - log 2 + log K(N)``: the single jump from 0 to ``N``."""
    n = len(omega)
    return params.beta * float(omega[-1]) + params.h - LOG2 + float(log_k(law, n))


def quenched_sample(law, dis, dis2, params, n, seed, stream_id):
    omega, omega_tilde = draw_disorder(dis, dis2, n, seed, stream_id)
    lz = quenched_log_z(law, dis, dis2, params, omega, omega_tilde)
    if lz < log_z_lower_bound(law, params, omega):
        raise NumericalFailure("log Z fell below the one-jump lower bound")
    return QuenchedSample(n, lz, (seed, stream_id), params)


def sample_log_z(law, dis, dis2, params, n, n_samples, seed, threads=1, prefix=False):
    """``log Z_n`` for each disorder sample (or every prefix when ``prefix``)."""
    if n < 1 or n_samples < 1:
        raise DomainError("need n >= 1 and n_samples >= 1")
    logk = log_k(law, np.arange(1, n + 1))

    def run(start):
        ids = range(start, min(start + BATCH, n_samples))
        draws = [draw_disorder(dis, dis2, n, seed, i) for i in ids]
        omega = np.stack([d[0] for d in draws])
        ot = np.stack([d[1] for d in draws])
        site, s = _inputs(params, omega, ot)
        lz = _dp(logk, site, s, params.lam)
        return lz if prefix else lz[:, -1]

    starts = range(0, n_samples, BATCH)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(run, starts))
    else:
        parts = [run(s) for s in starts]
    return np.concatenate(parts, axis=0)


# --------------------------------------------------------------------------
# estimators


def free_energy_mc(law, dis, dis2, params, n, n_samples, seed, threads=1):
    """Mean and standard error of ``(1/n) log Z_n`` over independent disorder samples."""
    if n < 2 or n_samples < 2:
        raise DomainError("need n >= 2 and n_samples >= 2")
    lz = sample_log_z(law, dis, dis2, params, n, n_samples, seed, threads)
    return _estimate(lz / n, n, Quantity.FREE_ENERGY_DENSITY)


def finite_size_allowance(n):
    """Calibrated finite-size scale ``3 log n / n`` for free-energy comparisons."""
    return 3.0 * math.log(n) / n


def log_fractional_bound(law, dis, dis2, params, gamma, n):
    """``log B_n``: the exact finite-``n`` bound on ``E Z_n^gamma``.

    Sum over renewals of ``prod K^gamma``, with ``M(gamma beta) e^{h gamma}`` per
    contact and ``f_gamma(-2 lam, -2 lam h_tilde; gap)`` per gap.
    """
    if not 0.0 < gamma <= 1.0:
        raise DomainError("gamma must lie in (0, 1]")
    ns = np.arange(1, n + 1)
    steps = gamma * log_k(law, ns) + dis_mod.log_mgf(dis, gamma * params.beta) + params.h * gamma
    if params.lam:
        w = dis_mod.log_gap_weights(dis2, -2.0 * params.lam, -2.0 * params.lam * params.h_tilde, gamma, ns)
        steps = steps + w.log_value
    return float(weighted_renewal_dp(steps)[-1])


def frac_moment_mc(law, dis, dis2, params, gamma, n, n_samples, seed, threads=1, log_z=None):
    """Estimate of ``E Z_n^gamma / B_n`` (so the exact inequality reads ``mean <= 1``)."""
    log_b = log_fractional_bound(law, dis, dis2, params, gamma, n)
    if log_z is None:
        log_z = sample_log_z(law, dis, dis2, params, n, n_samples, seed, threads)
    y = np.exp(gamma * np.asarray(log_z) - log_b)
    heavy = bool(y.max() > HEAVY_TAIL_SHARE * y.sum())
    return _estimate(y, n, Quantity.FRAC_MOMENT, parameter=gamma, log_scale=log_b, heavy_tail=heavy)


def _strings(dis, n):
    if dis.family is dis_mod.DisorderFamily.BINARY_SYMMETRIC:
        vals, probs = (-1.0, 1.0), (0.5, 0.5)
    elif dis.family is dis_mod.DisorderFamily.BERNOULLI_INDICATOR:
        vals, probs = (0.0, 1.0), (1.0 - dis.p, dis.p)
    else:
        raise DomainError("exact enumeration needs a two-valued disorder law")
    combos = np.array(list(itertools.product((0, 1), repeat=n)))
    values = np.asarray(vals)[combos]
    logp = np.log(np.asarray(probs))[combos].sum(axis=1)
    return values, logp


def exact_log_frac_moment(law, dis, dis2, params, gamma, n):
    """``log E Z_n^gamma`` by enumerating every disorder string (two-valued laws, small ``n``)."""
    om, lp = _strings(dis, n)
    if params.lam:
        ot, lpt = _strings(dis2, n)
        om = np.repeat(om, len(ot), axis=0)
        lp = np.repeat(lp, len(ot))
        ot = np.tile(ot, (len(lp) // len(ot), 1))
        lp = lp + np.tile(lpt, len(lp) // len(lpt))
    else:
        ot = np.zeros_like(om)
    lz = quenched_log_z_prefix(law, params, om, ot)[:, -1]
    return float(special.logsumexp(lp + gamma * lz))


# --------------------------------------------------------------------------
# delocalized-phase size diagnostics


@dataclass(frozen=True)
class TailCheck:
    u: float
    fraction: float
    markov_bound: float
    lower_confidence: float
    ok: bool


@dataclass(frozen=True)
class DelocReport:
    delta: float
    log_middle: float
    """``log E_gamma[e^{-Delta I_N} 1_{N in tau}]`` under the tilted kernel, by DP."""
    log_b: float
    """The same quantity by the per-contact route; must agree with ``log_middle``."""
    frac_moment: McEstimate
    moment_ok: bool
    tails: list
    mu: float
    ratio_trend: list = field(default_factory=list)
    """``(N, median log(Z_N / K(N)^mu))`` pairs; a diagnostic, not a pass/fail check."""
    median_log_ratio_to_kernel: list = field(default_factory=list)


def log_middle_term(law, gamma, delta, n):
    """``log E_gamma[e^{-delta I_n} 1_{n in tau}]`` for the ``K^gamma/c(gamma)`` renewal."""
    ns = np.arange(1, n + 1)
    steps = gamma * log_k(law, ns) - c_of_gamma(law, gamma).log - delta
    return float(weighted_renewal_dp(steps)[-1])


def deloc_size_check(law, dis, params, gamma, n, n_samples, seed, sizes=None, threads=1, confidence=0.999):
    """Size of the partition function below the fractional-moment critical bound."""
    if params.lam:
        raise PreconditionError("size diagnostics are for the pinning model (lam = 0)")
    delta = delta_gap(law, dis, params.beta, params.h, gamma)
    if delta <= 0:
        raise PreconditionError(f"Delta = {delta} <= 0")
    sizes = sorted(set(sizes or [n]) | {n})
    n_top = sizes[-1]
    lz_all = sample_log_z(law, dis, None, params, n_top, n_samples, seed, threads, prefix=True)
    lz = lz_all[:, n]
    log_mid = log_middle_term(law, gamma, delta, n)
    log_b = log_fractional_bound(law, dis, None, params, gamma, n)
    fm = frac_moment_mc(law, dis, None, params, gamma, n, n_samples, seed, log_z=lz)
    moment_ok = fm.mean <= 1.0 + 3.0 * fm.stderr + ROUNDING_SLACK
    lkn = float(log_k(law, n))
    tails = []
    for u in (1.0, 10.0, 100.0):
        hits = int(np.sum(lz >= math.log(u) + lkn))
        bound = min(1.0, math.exp(log_mid - gamma * (math.log(u) + lkn)))
        lower = 0.0 if hits == 0 else float(stats.beta.ppf(1.0 - confidence, hits, n_samples - hits + 1))
        tails.append(TailCheck(u, hits / n_samples, bound, lower, lower <= bound))
    mu = 0.5 * (1.0 - 1.0 / (gamma * (1.0 + law.alpha)))
    trend = []
    plain = []
    for m in sizes:
        lkm = float(log_k(law, m))
        trend.append((m, float(np.median(lz_all[:, m] - mu * lkm))))
        plain.append((m, float(np.median(lz_all[:, m] - lkm))))
    return DelocReport(delta, log_mid, log_b, fm, moment_ok, tails, mu, trend, plain)


# --------------------------------------------------------------------------
# reduced wetting


def reduced_wetting_mc(law, p, beta, n, n_samples, seed, threads=1):
    """Free-energy estimate of the transient renewal rewarded by ``beta`` on Bernoulli(``p``) marks."""
    if c_of_gamma(law, 1.0).value >= 1.0 - 1e-12:
        raise PreconditionError("reduced wetting needs a transient renewal")
    if not 0.0 < p <= 1.0:
        raise DomainError("p must lie in (0, 1]")
    if p == 1.0:
        # every site is marked: the disorder is the constant 1
        lz = quenched_log_z_prefix(law, ModelParams(h=beta), np.zeros(n))[-1]
        return McEstimate(float(lz / n), 0.0, n_samples, n, Quantity.FREE_ENERGY_DENSITY)
    dis = dis_mod.DisorderLaw.bernoulli(p)
    return free_energy_mc(law, dis, None, ModelParams(beta=beta), n, n_samples, seed, threads)


def looks_localized(est):
    return est.mean > 3.0 * est.stderr + finite_size_allowance(est.n)


@dataclass(frozen=True)
class CriticalDensity:
    p_hat: float
    interval: tuple
    """``(largest p seen delocalized, smallest p seen localized)``."""
    slope: float
    """``-(1/beta) log p_hat``."""


def reduced_wetting_pc(law, beta, n, n_samples, seed, p_lo=None, p_hi=1.0, log_tol=0.01, threads=1):
    """Empirical critical density: bisection in ``log p`` on the one-sided localization criterion."""
    if p_lo is None:
        p_lo = math.exp(-1.5 * beta)
    est = lambda p: reduced_wetting_mc(law, p, beta, n, n_samples, seed, threads)
    if looks_localized(est(p_lo)):
        return CriticalDensity(p_lo, (0.0, p_lo), -math.log(p_lo) / beta)
    if not looks_localized(est(p_hi)):
        return CriticalDensity(p_hi, (p_hi, math.inf), -math.log(p_hi) / beta)
    lo, hi = math.log(p_lo), math.log(p_hi)
    while hi - lo > log_tol:
        mid = 0.5 * (lo + hi)
        if looks_localized(est(math.exp(mid))):
            hi = mid
        else:
            lo = mid
    p_hat = math.exp(0.5 * (lo + hi))
    return CriticalDensity(p_hat, (math.exp(lo), math.exp(hi)), -math.log(p_hat) / beta)


def homogeneous_reference(law, h):
    """Exact free energy of the ``beta = lam = 0`` model, for finite-size calibration."""
    return homogeneous_free_energy(law, h).value
