"""Critical-point and free-energy bounds for disordered pinning, wetting and copolymer models."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache

import numpy as np
from scipy import optimize

from . import disorder as dis_mod
from .errors import (
    DomainError,
    IndeterminateError,
    PreconditionError,
    UnrepresentableKernelError,
)
from .homog import (
    FreeEnergyResult,
    g_gamma,
    g_gamma_spec,
    is_delocalized,
    phi_interval,
    solve_free_energy,
)
from .kernels import c_of_gamma, dc_dgamma, log_k, renewal_mass
from .params import ModelParams

__all__ = [
    "BoundCertificate",
    "Kind",
    "ModelParams",
    "RareStretchParams",
    "annealed_hc",
    "copolymer_case_constants",
    "copolymer_gamma_bar",
    "copolymer_gamma_c",
    "copolymer_upper_bound",
    "delta_gap",
    "frac_moment_upper_bound",
    "improvement_condition",
    "monthus_line",
    "monthus_slope",
    "pinning_hat_hc",
    "rare_stretch_hc_upper",
    "rare_stretch_params",
    "reduced_wetting_threshold",
]

LOG2 = math.log(2.0)
EPS_C = 1e-6
GUARD_POINTS = 200


class Kind(str, Enum):
    FRAC_MOMENT_PINNING = "frac_moment_pinning"
    FRAC_MOMENT_COPOLYMER = "frac_moment_copolymer"
    RARE_STRETCH_UPPER = "rare_stretch_upper"
    REDUCED_WETTING_DELOC = "reduced_wetting_deloc"
    MONTHUS_EXACT = "monthus_exact"


class Mode(str, Enum):
    CLOSED_FORM = "closed_form"
    DIRECT_NUMERIC = "direct_numeric"


@dataclass(frozen=True)
class BoundCertificate:
    """A certified bound with the constants needed to replay its check.

    ``verified`` is only set after an independent numerical check, whose
    residual is stored in ``residual``.
    """

    kind: Kind
    gamma: float
    value: float
    witnesses: dict = field(default_factory=dict)
    verified: bool = False
    residual: float | None = None
    extension: bool = False
    """The formula is a generalization beyond the Gaussian case."""
    notes: str = ""

    def __post_init__(self):
        if self.verified and self.residual is None:
            raise DomainError("a verified certificate needs its check residual")


@dataclass(frozen=True)
class RareStretchParams:
    q: float
    ell: int
    rate: float


@dataclass(frozen=True)
class GammaCrossing:
    """Crossing point of a monotone criterion in ``gamma`` with an enclosing interval."""

    value: float
    interval: tuple
    at_endpoint: bool


@dataclass(frozen=True)
class ImprovementResult:
    improves: bool
    derivative: float
    error: float
    beta_star: float | None = None


def _gamma_floor(law):
    return 1.0 / (1.0 + law.alpha)


def _log_c(law, gamma):
    return c_of_gamma(law, gamma).log


# --------------------------------------------------------------------------
# pinning


def frac_moment_upper_bound(law, dis, dis2, params, gamma, strict=False):
    """``(1/gamma) G_gamma(log c(gamma) + h gamma + log M(beta gamma), -2 lam, -2 lam h_tilde)``."""
    if not _gamma_floor(law) - 1e-15 <= gamma <= 1.0:
        raise DomainError(f"gamma must lie in [1/(1+alpha), 1], got {gamma}")
    c = c_of_gamma(law, gamma)
    if not c.finite:
        raise UnrepresentableKernelError(f"c({gamma}) diverges")
    nu = c.log + params.h * gamma + dis_mod.log_mgf(dis, params.beta * gamma)
    g = g_gamma(law, dis2, gamma, nu, -2.0 * params.lam, -2.0 * params.lam * params.h_tilde, strict)
    return FreeEnergyResult(
        g.value / gamma,
        g.localized,
        g.phi_at_zero,
        g.root_residual,
        g.value_lower / gamma,
        g.saturated,
        g.decided,
    )


def annealed_hc(law, dis, beta):
    """``-log M(beta) - log c(1)``."""
    return -dis_mod.log_mgf(dis, beta) - _log_c(law, 1.0)


def _hat_objective(law, dis, beta, gamma):
    c = c_of_gamma(law, gamma)
    if not c.finite:
        return -math.inf
    return -(dis_mod.log_mgf(dis, gamma * beta) + c.log) / gamma


def pinning_hat_hc(law, dis, beta):
    """``sup_gamma -(1/gamma) log[M(gamma beta) c(gamma)]`` over ``[1/(1+alpha), 1]``.

    Returns ``(value, argmax)``.  A guard grid locates the best cell, which is
    then refined by bounded scalar minimization; unimodality is not assumed.
    """
    if beta < 0:
        raise DomainError("beta must be >= 0")
    g0 = _gamma_floor(law)
    grid = np.linspace(g0, 1.0, GUARD_POINTS + 1)
    vals = np.array([_hat_objective(law, dis, beta, g) for g in grid])
    if not np.any(np.isfinite(vals)):
        raise UnrepresentableKernelError("c(gamma) diverges on the whole interval")
    i = int(np.argmax(vals))
    best_g, best_v = float(grid[i]), float(vals[i])
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    if hi > lo:
        res = optimize.minimize_scalar(
            lambda g: -_hat_objective(law, dis, beta, g),
            bounds=(lo, hi),
            method="bounded",
            options={"xatol": 1e-12},
        )
        if np.isfinite(res.fun) and -res.fun > best_v:
            best_g, best_v = float(res.x), float(-res.fun)
    return best_v, best_g


def improvement_condition(law, dis, beta):
    """Sign of the ``gamma``-derivative of the fractional-moment critical bound at ``gamma = 1``.

    A negative derivative means some ``gamma < 1`` beats the annealed bound.
    For Gaussian disorder on a recurrent renewal the threshold
    ``beta_star = sqrt(-2 c'(1))`` is also returned.
    """
    c1 = c_of_gamma(law, 1.0)
    dc = dc_dgamma(law, 1.0)
    if not dc.finite:
        raise IndeterminateError("kernel entropy diverges", (-math.inf, math.inf))
    deriv = (
        dis_mod.log_mgf(dis, beta)
        + c1.log
        - beta * dis_mod.dlog_mgf(dis, beta)
        - dc.value / c1.value
    )
    err = dc.error / c1.value + c1.error / c1.value * (1.0 + abs(dc.value) / c1.value)
    beta_star = None
    if dis.family is dis_mod.DisorderFamily.GAUSSIAN_UNIT and abs(c1.value - 1.0) <= 1e-9:
        beta_star = math.sqrt(-2.0 * dc.value)
    return ImprovementResult(deriv < 0, deriv, err, beta_star)


def rare_stretch_params(law, dis, beta, ell=1):
    """Optimal threshold ``q`` of the rare-stretch strategy and its rate ``I(q)``."""
    if beta < 0:
        raise DomainError("beta must be >= 0")
    k = 1.0 + law.alpha
    if beta == 0:
        return RareStretchParams(0.0, ell, 0.0)
    lo, hi = dis_mod._support(dis)
    q_hi = hi if math.isfinite(hi) else 2.0 * dis_mod.dlog_mgf(dis, beta / k) + 1.0
    q_lo = max(lo, 0.0)
    obj = lambda q: -beta * q + k * dis_mod.rate_function(dis, q)
    res = optimize.minimize_scalar(obj, bounds=(q_lo, q_hi), method="bounded", options={"xatol": 1e-13})
    q = float(res.x)
    return RareStretchParams(q, ell, dis_mod.rate_function(dis, q))


def rare_stretch_hc_upper(law, dis, beta):
    """``inf_q [-beta q + (1+alpha) I(q)] - log K(1)``, minimized numerically."""
    rs = rare_stretch_params(law, dis, beta)
    return -beta * rs.q + (1.0 + law.alpha) * rs.rate - float(log_k(law, 1))


def rare_stretch_certificate(law, dis, beta):
    """Upper bound on the quenched critical point, with the closed form as a second route.

    For Gaussian disorder the closed form ``-beta^2/(2(1+alpha)) - log K(1)`` is
    the established statement; other laws use the Legendre-transform
    generalization and carry ``extension=True``.
    """
    numeric = rare_stretch_hc_upper(law, dis, beta)
    k = 1.0 + law.alpha
    closed = -k * dis_mod.log_mgf(dis, beta / k) - float(log_k(law, 1))
    residual = abs(numeric - closed)
    gaussian = dis.family is dis_mod.DisorderFamily.GAUSSIAN_UNIT
    return BoundCertificate(
        Kind.RARE_STRETCH_UPPER,
        1.0,
        numeric,
        {"closed_form": closed, "q": rare_stretch_params(law, dis, beta).q},
        verified=residual <= 1e-8,
        residual=residual,
        extension=not gaussian,
    )


def delta_gap(law, dis, beta, h, gamma):
    """``-log[M(beta gamma) c(gamma)] - h gamma``; positive below the fractional-moment critical bound."""
    return -dis_mod.log_mgf(dis, beta * gamma) - _log_c(law, gamma) - h * gamma


# --------------------------------------------------------------------------
# copolymer


def monthus_line(dis2, gamma, lam):
    """``log M(-2 lam gamma) / (2 lam gamma)``; 0 at ``lam = 0`` (its limit)."""
    if not 0.0 < gamma <= 1.0:
        raise DomainError("gamma must lie in (0, 1]")
    if lam < 0:
        raise DomainError("lambda must be >= 0")
    if lam == 0.0:
        return 0.0
    return dis_mod.log_mgf(dis2, -2.0 * lam * gamma) / (2.0 * lam * gamma)


def monthus_slope(dis2, gamma, lam=1e-6):
    """Slope at the origin, estimated as ``monthus_line(lam)/lam`` at a small ``lam``."""
    return monthus_line(dis2, gamma, lam) / lam


def _bisect_decreasing(fn, lo, hi, tol=1e-13):
    """Crossing of a decreasing ``fn`` from >0 to <=0 on ``[lo, hi]``; returns ``(lo, hi)``."""
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if fn(mid) > 0:
            lo = mid
        else:
            hi = mid
    return lo, hi


def _crossing(law, criterion, name):
    g0 = _gamma_floor(law)
    c0 = c_of_gamma(law, g0)
    if c0.finite and criterion(g0, c0.log) <= 0:
        return GammaCrossing(g0, (g0, g0), True)

    def fn(g):
        c = c_of_gamma(law, g)
        return math.inf if not c.finite else criterion(g, c.log)

    lo, hi = _bisect_decreasing(fn, g0, 1.0)
    # widen by the summation error of log c
    c = c_of_gamma(law, hi)
    slope = abs(fn(lo) - fn(hi)) / max(hi - lo, 1e-300) if math.isfinite(fn(lo)) else math.inf
    widen = (c.error / c.value) / slope if math.isfinite(slope) and slope > 0 else 0.0
    return GammaCrossing(0.5 * (lo + hi), (max(g0, lo - widen), min(1.0, hi + widen)), False)


def copolymer_gamma_c(law):
    """``inf{gamma : log c(gamma) < gamma log 2}``."""
    if _log_c(law, 1.0) >= LOG2:
        raise PreconditionError(f"log c(1) = {_log_c(law, 1.0)} >= log 2: no crossing below 1")
    return _crossing(law, lambda g, lc: lc - g * LOG2, "gamma_c")


def copolymer_gamma_bar(law):
    """``inf{gamma : log c(gamma) + (1 - gamma) log 2 <= 0}``; needs a transient renewal."""
    c1 = c_of_gamma(law, 1.0)
    if c1.value + c1.error >= 1.0:
        raise PreconditionError("gamma_bar needs a transient renewal (c(1) < 1)")
    return _crossing(law, lambda g, lc: lc + (1.0 - g) * LOG2, "gamma_bar")


def copolymer_case_constants(law, gamma):
    """``(delta, C)``: ``delta = (gamma log 2 - log c(gamma))/2`` and the smallest ``C``
    with ``(1 + e^{-2Ck})/2 <= e^{delta}/2`` for every ``k >= 1``."""
    c = c_of_gamma(law, gamma)
    if not c.finite:
        raise UnrepresentableKernelError(f"c({gamma}) diverges")
    delta = 0.5 * (gamma * LOG2 - c.log)
    if delta <= 0:
        raise DomainError(f"delta({gamma}) = {delta} <= 0: gamma is not above gamma_c")
    if delta >= LOG2:
        big_c = EPS_C
    else:
        # k = 1 binds; the relative margin keeps the inequality true in floating point
        big_c = max(EPS_C, -0.5 * math.log(math.expm1(delta)) * (1.0 + 1e-12) + 1e-15)
    k = np.arange(1, 101)
    if np.any(1.0 + np.exp(-2.0 * big_c * k) > math.exp(delta)):
        raise DomainError("constant C fails its defining inequality")
    return delta, big_c


def _certified_at(law, dis2, gamma, lam, h_tilde):
    """Check that ``G_gamma(log c, -2 lam, -2 lam h_tilde) = 0`` is certified; returns ``(ok, phi_hi)``."""
    spec = g_gamma_spec(law, dis2, gamma, _log_c(law, gamma), -2.0 * lam, -2.0 * lam * h_tilde)
    try:
        ok = is_delocalized(spec)
    except IndeterminateError:
        ok = False
    return ok, phi_interval(spec, spec.rate)[1]


def _closed_form_candidates(law, dis2, lam, gamma_grid):
    out = []
    for g in gamma_grid:
        try:
            delta, big_c = copolymer_case_constants(law, g)
        except (DomainError, UnrepresentableKernelError):
            continue
        out.append((monthus_line(dis2, g, lam) + big_c / (g * lam), g, delta, big_c))
    return out


def default_gamma_grid(law, n=8):
    lo = copolymer_gamma_c(law).interval[1]
    grid = list(np.linspace(lo, 1.0, n + 1)[1:])
    g0 = _gamma_floor(law)
    if lo <= g0 + 1e-15 and c_of_gamma(law, g0).finite:
        grid.insert(0, g0)
    return grid


def copolymer_upper_bound(law, dis2, lam, mode=Mode.CLOSED_FORM, gamma_grid=None):
    """Upper bound on the copolymer critical curve at ``lam``.

    ``CLOSED_FORM`` uses the relaxed gap bound and the constant ``C``; when
    ``log c(g0) + (1 - g0) log 2 <= 0`` at ``g0 = 1/(1+alpha)`` the bound is the
    Monthus line at ``g0`` itself, which is then exact.  ``DIRECT_NUMERIC``
    finds, for each ``gamma`` in the grid, the smallest ``h_tilde`` where the
    fractional-moment free energy is certified to vanish.
    """
    if lam <= 0:
        raise DomainError("lambda must be > 0")
    mode = Mode(mode)
    annealed_line = monthus_line(dis2, 1.0, lam)
    g0 = _gamma_floor(law)
    c0 = c_of_gamma(law, g0)
    tilt0 = c0.log + (1.0 - g0) * LOG2 if c0.finite else math.inf
    if tilt0 <= 0:
        value = monthus_line(dis2, g0, lam)
        ok, phi_hi = _certified_at(law, dis2, g0, lam, value)
        return BoundCertificate(
            Kind.MONTHUS_EXACT,
            g0,
            value,
            {"tilt": tilt0, "log_c": c0.log, "annealed_line": annealed_line, "phi_hi": phi_hi},
            verified=ok and tilt0 <= 0,
            residual=max(0.0, phi_hi - 1.0),
            notes="exact: equals the lower bound",
        )
    if gamma_grid is None:
        gamma_grid = default_gamma_grid(law)
    candidates = _closed_form_candidates(law, dis2, lam, gamma_grid)
    if not candidates:
        raise PreconditionError("no gamma in the grid lies above gamma_c")
    recurrent_or_less = _log_c(law, 1.0) <= 0.0
    if mode is Mode.CLOSED_FORM and recurrent_or_less and min(candidates)[0] >= annealed_line:
        return _annealed_certificate(annealed_line)
    if mode is Mode.CLOSED_FORM:
        value, g, delta, big_c = min(candidates)
        ok, phi_hi = _certified_at(law, dis2, g, lam, value)
        return BoundCertificate(
            Kind.FRAC_MOMENT_COPOLYMER,
            g,
            value,
            {"delta": delta, "C": big_c, "annealed_line": annealed_line, "phi_hi": phi_hi,
             "below_annealed": value <= annealed_line},
            verified=ok,
            residual=max(0.0, phi_hi - 1.0),
        )
    best = None
    for closed, g, delta, big_c in candidates:
        h_star = _direct_threshold(law, dis2, g, lam, closed)
        if h_star is not None and (best is None or h_star < best[0]):
            best = (h_star, g, delta, big_c)
    if best is None:
        value, g, delta, big_c = min(candidates)
        return BoundCertificate(
            Kind.FRAC_MOMENT_COPOLYMER, g, value, {"annealed_line": annealed_line},
            notes="direct thresholds indeterminate; closed form returned unverified",
        )
    value, g, delta, big_c = best
    if g == 1.0 and recurrent_or_less:
        return _annealed_certificate(annealed_line)
    ok, phi_hi = _certified_at(law, dis2, g, lam, value)
    return BoundCertificate(
        Kind.FRAC_MOMENT_COPOLYMER,
        g,
        value,
        {"delta": delta, "C": big_c, "annealed_line": annealed_line, "phi_hi": phi_hi,
         "below_annealed": value <= annealed_line},
        verified=ok,
        residual=max(0.0, phi_hi - 1.0),
    )


def _annealed_certificate(annealed_line):
    return BoundCertificate(
        Kind.FRAC_MOMENT_COPOLYMER,
        1.0,
        annealed_line,
        {"annealed_line": annealed_line, "below_annealed": True},
        verified=True,
        residual=0.0,
        notes="closed-form identity: gap weights equal 1 on the annealed line",
    )


def _direct_threshold(law, dis2, gamma, lam, upper):
    """Smallest ``h_tilde`` in ``[monthus(gamma), upper]`` with ``Phi_hi(0) <= 1``."""
    log_c = _log_c(law, gamma)
    lower = monthus_line(dis2, gamma, lam)
    if gamma == 1.0 and log_c <= 0.0:
        # gap weights are exactly 1 on the annealed line, leaving Phi(0) = c(1) <= 1
        return lower

    def log_phi_hi(ht):
        spec = g_gamma_spec(law, dis2, gamma, log_c, -2.0 * lam, -2.0 * lam * ht)
        return math.log(phi_interval(spec, spec.rate)[1])

    if log_phi_hi(upper) > 0:
        return None
    if log_phi_hi(lower) <= 0:
        return lower
    root = optimize.brentq(log_phi_hi, lower, upper, xtol=1e-12, rtol=1e-12)
    # step to the certified side of the root
    for nudge in (1e-12, 1e-10, 1e-8):
        ht = min(upper, root + nudge * (1.0 + abs(root)))
        if log_phi_hi(ht) <= 0:
            return ht
    return upper


def gamma_bar_certificates(law, dis2, lambdas):
    """Bounds ``h_tilde_c(lam) <= monthus_line(gamma_bar, lam)`` for a transient renewal."""
    gb = copolymer_gamma_bar(law)
    g = gb.interval[1]
    tilt = _log_c(law, g) + (1.0 - g) * LOG2
    out = []
    for lam in lambdas:
        out.append(
            BoundCertificate(
                Kind.FRAC_MOMENT_COPOLYMER,
                g,
                monthus_line(dis2, g, lam),
                {"gamma_bar": gb.value, "tilt": tilt},
                verified=tilt <= 0,
                residual=max(0.0, tilt),
                notes="closed-form identity: homogeneous tilt <= 0",
            )
        )
    return out


# --------------------------------------------------------------------------
# reduced wetting


@dataclass(frozen=True)
class ReducedWettingThreshold:
    p_star: float
    c_prime: float
    slope: float
    """``-(1/beta) log p_star``."""
    sup_ratio: float
    limit_ratio: float
    rising_at_horizon: bool


def reduced_wetting_threshold(law, gamma, big_c, beta, n_max=10_000):
    """Largest Bernoulli density ``p`` certified to leave the reduced wetting model delocalized.

    ``C' = C sup_n u(n)/K(n)`` over ``n <= n_max``, raised to the asymptotic
    ratio ``C/(1-c(1))^2`` when the finite-horizon supremum is still below it.
    """
    c1 = c_of_gamma(law, 1.0)
    if c1.value + c1.error >= 1.0:
        raise PreconditionError("reduced wetting needs a transient renewal (c(1) < 1)")
    if not _gamma_floor(law) < gamma < 1.0:
        raise DomainError("gamma must lie in (1/(1+alpha), 1)")
    c = c_of_gamma(law, gamma)
    if big_c <= 1.0 or gamma * math.log(big_c) <= c.log:
        raise PreconditionError(f"need C > 1 and C^gamma > c(gamma) = {c.value}")
    sup, rising, limit = _renewal_ratio(law, n_max)
    sup_used = max(sup, limit)
    c_prime = big_c * sup_used
    num = math.expm1(gamma * math.log(big_c) - c.log)
    log_den = gamma * (beta + math.log(c_prime))
    # log of (e^x - 1) without overflow
    log_expm1 = log_den + math.log1p(-math.exp(-log_den)) if log_den > 0 else math.log(math.expm1(log_den))
    log_p = math.log(num) - log_expm1
    return ReducedWettingThreshold(
        math.exp(log_p), c_prime, -log_p / beta if beta > 0 else math.nan, sup, limit, rising
    )


@lru_cache(maxsize=32)
def _renewal_ratio(law, n_max):
    """``(sup u(n)/K(n) over n <= n_max, still rising at n_max, asymptotic ratio)``."""
    rm = renewal_mass(law, n_max)
    ratio = rm.u[1:] / np.exp(log_k(law, np.arange(1, n_max + 1)))
    return float(ratio.max()), int(np.argmax(ratio)) >= n_max - 1, rm.limit_ratio


def best_reduced_wetting_slope(law, beta, gamma_grid, n_max=10_000):
    """Best certified ``-(1/beta) log p_star`` over ``gamma`` in the grid and over ``C``.

    Returns ``(slope, gamma, C, threshold)``.
    """
    best = None
    for g in gamma_grid:
        c = c_of_gamma(law, g)
        if not c.finite:
            continue
        lo = c.log / g

        def neg(log_c_big, g=g):
            return reduced_wetting_threshold(law, g, math.exp(log_c_big), beta, n_max).slope

        res = optimize.minimize_scalar(
            neg, bounds=(max(lo, 0.0) + 1e-6, max(lo, 0.0) + 60.0), method="bounded",
            options={"xatol": 1e-9},
        )
        thr = reduced_wetting_threshold(law, g, math.exp(res.x), beta, n_max)
        if best is None or thr.slope < best[0]:
            best = (thr.slope, g, math.exp(res.x), thr)
    if best is None:
        raise PreconditionError("c(gamma) diverges on the whole grid")
    return best


def reduced_wetting_certificate(law, gamma, big_c, beta, n_max=10_000):
    thr = reduced_wetting_threshold(law, gamma, big_c, beta, n_max)
    c = c_of_gamma(law, gamma)
    lhs = math.log(thr.p_star * math.exp(gamma * (beta + math.log(thr.c_prime))) + 1 - thr.p_star) + c.log - gamma * math.log(big_c)
    return BoundCertificate(
        Kind.REDUCED_WETTING_DELOC,
        gamma,
        thr.p_star,
        {"C": big_c, "C_prime": thr.c_prime, "slope": thr.slope, "sup_ratio": thr.sup_ratio,
         "rising_at_horizon": thr.rising_at_horizon},
        verified=lhs <= 1e-12,
        residual=abs(lhs),
    )
