"""Special functions for the reference and benchmark engines.

- standard normal CDF (scipy.special.ndtr)
- regularized incomplete gamma P(a, x) / Q(a, x): series below x = a + 1,
  Lentz continued fraction above
- non-central chi-square CDF, survival function and density as Poisson
  mixtures summed outward from the modal Poisson index

Every routine is pure and safe to call from several threads.
"""
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.special import gammaln, logsumexp, ndtr

from errors import DomainError, SeriesNonConvergence
from settings import env_float, env_int

_EPS = 1e-16
_TINY = 1e-300
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class SeriesControl:
    term_tol: float = 1e-14
    max_terms: int = 10000

    def __post_init__(self):
        if not self.term_tol > 0:
            raise DomainError('term_tol', 'must be > 0')
        if self.max_terms < 1:
            raise DomainError('max_terms', 'must be >= 1')

    @classmethod
    def from_env(cls) -> 'SeriesControl':
        return cls(
            term_tol=env_float('CEV_SERIES_TERM_TOL', 1e-14),
            max_terms=env_int('CEV_SERIES_MAX_TERMS', 10000),
        )


def std_normal_cdf(x: float) -> float:
    if math.isnan(x):
        raise DomainError('x', 'must not be NaN')
    return float(ndtr(x))


def _stirling_correction(a: float) -> float:
    """ln Gamma(a) - [(a - 1/2) ln a - a + ln sqrt(2 pi)]."""
    if a < 20.0:
        return float(gammaln(a)) - ((a - 0.5) * math.log(a) - a + _HALF_LOG_2PI)
    inv = 1.0 / a
    inv2 = inv * inv
    return inv * (1.0 / 12 - inv2 * (1.0 / 360 - inv2 * (1.0 / 1260 - inv2 * (1.0 / 1680 - inv2 / 1188))))


def _log_gamma_prefactor(a: float, x: float) -> float:
    """ln(x^a e^{-x} / Gamma(a)), without the a*ln(x) - x cancellation for large a."""
    if x == 0.0:
        return -math.inf
    if a < 20.0:
        return a * math.log(x) - x - float(gammaln(a))
    d = (x - a) / a
    # a ln x - x - ln Gamma(a) = -a (d - log1p(d)) + ln sqrt(a / 2pi) - correction
    return -a * (d - math.log1p(d)) + 0.5 * math.log(a) - _HALF_LOG_2PI - _stirling_correction(a)


def _iteration_cap(a: float) -> int:
    return int(100 + 20 * math.sqrt(a))


def _gamma_pq(a: float, x: float) -> Tuple[float, float]:
    """(P(a, x), Q(a, x)); the directly computed member keeps full relative accuracy."""
    if x == 0.0:
        return 0.0, 1.0
    if math.isinf(x):
        return 1.0, 0.0
    log_pref = _log_gamma_prefactor(a, x)
    cap = _iteration_cap(a)

    if x < a + 1.0:
        term = 1.0 / a
        total = term
        n = 0
        while abs(term) > abs(total) * _EPS:
            n += 1
            if n > cap:
                raise SeriesNonConvergence(abs(term), n)
            term *= x / (a + n)
            total += term
        p = math.exp(log_pref) * total
        p = min(p, 1.0)
        return p, 1.0 - p

    # modified Lentz for the continued fraction of Q
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    i = 0
    while True:
        i += 1
        if i > cap:
            raise SeriesNonConvergence(abs(delta - 1.0), i)
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) <= _EPS:
            break
    q = math.exp(log_pref) * h
    q = min(q, 1.0)
    return 1.0 - q, q


def _check_gamma_args(a: float, x: float) -> None:
    if not a > 0:
        raise DomainError('a', 'must be > 0')
    if not x >= 0:
        raise DomainError('x', 'must be >= 0')


def regularized_lower_gamma(a: float, x: float) -> float:
    _check_gamma_args(a, x)
    return _gamma_pq(a, x)[0]


def regularized_upper_gamma(a: float, x: float) -> float:
    _check_gamma_args(a, x)
    return _gamma_pq(a, x)[1]


def log_poisson_weight(j: int, mu: float) -> float:
    """ln(e^{-mu} mu^j / j!)."""
    if j < 0:
        raise DomainError('j', 'must be >= 0')
    if mu < 0:
        raise DomainError('mu', 'must be >= 0')
    if mu == 0:
        return 0.0 if j == 0 else -math.inf
    return _log_gamma_prefactor(j + 1.0, mu) - math.log(mu)


def _check_ncx2_args(x: float, k: float, lam: float) -> None:
    if not x >= 0:
        raise DomainError('x', 'must be >= 0')
    if not k > 0:
        raise DomainError('k', 'degrees of freedom must be > 0')
    if not (lam >= 0 and math.isfinite(lam)):
        raise DomainError('lambda', 'noncentrality must be finite and >= 0')


def _poisson_mixture(x: float, k: float, lam: float, ctl: SeriesControl, upper: bool) -> float:
    """Sum_j w_j * P(k/2 + j, x/2) (upper=False) or Sum_j w_j * Q(k/2 + j, x/2) (upper=True).

    Starts at J = floor(lam/2), walks upward then downward with the
    recurrences P(a+1) = P(a) - t_a, Q(a+1) = Q(a) + t_a,
    t_a = z^a e^{-z} / Gamma(a+1), and stops each direction once the
    geometric bound on the remaining Poisson mass times the largest
    remaining gamma factor drops below term_tol of the running sum.
    """
    mu = 0.5 * lam
    z = 0.5 * x
    a0 = 0.5 * k
    if mu == 0.0:
        p, q = _gamma_pq(a0, z)
        return q if upper else p

    big_j = int(math.floor(mu))
    a_mode = a0 + big_j
    p_mode, q_mode = _gamma_pq(a_mode, z)
    w_mode = math.exp(log_poisson_weight(big_j, mu))
    total = w_mode * (q_mode if upper else p_mode)
    terms = 1

    # upward: j = J+1, J+2, ...
    p, q, w = p_mode, q_mode, w_mode
    t = math.exp(_log_gamma_prefactor(a_mode, z) - math.log(a_mode))  # t_{a_J}
    j = big_j
    while True:
        p = max(p - t, 0.0)
        q = min(q + t, 1.0)
        w *= mu / (j + 1)
        j += 1
        t *= z / (a0 + j)
        total += w * (q if upper else p)
        terms += 1
        tail = w * mu / (j + 1) / (1.0 - mu / (j + 2))
        bound = tail if upper else p * tail
        if bound < ctl.term_tol * total or bound < _TINY:
            break
        if terms >= ctl.max_terms:
            raise SeriesNonConvergence(bound, terms)

    # downward: j = J-1, ..., 0
    p, q, w = p_mode, q_mode, w_mode
    j = big_j
    if j > 0:
        t = math.exp(_log_gamma_prefactor(a_mode - 1.0, z) - math.log(a_mode - 1.0))
    while j > 0:
        # t holds t_{a0 + j - 1}
        p = min(p + t, 1.0)
        q = max(q - t, 0.0)
        w *= j / mu
        j -= 1
        total += w * (q if upper else p)
        terms += 1
        if j == 0:
            break
        t *= (a0 + j) / z
        tail = w * j / mu / (1.0 - (j - 1) / mu)
        bound = q * tail if upper else tail
        if bound < ctl.term_tol * total or bound < _TINY:
            break
        if terms >= ctl.max_terms:
            raise SeriesNonConvergence(bound, terms)

    return min(max(total, 0.0), 1.0)


def noncentral_chi2_cdf(x: float, k: float, lam: float, ctl: SeriesControl = SeriesControl()) -> float:
    _check_ncx2_args(x, k, lam)
    if x == 0.0:
        return 0.0
    if math.isinf(x):
        return 1.0
    return _poisson_mixture(x, k, lam, ctl, upper=False)


def noncentral_chi2_sf(x: float, k: float, lam: float, ctl: SeriesControl = SeriesControl()) -> float:
    """1 - F(x; k, lam) summed directly over the upper tails."""
    _check_ncx2_args(x, k, lam)
    if x == 0.0:
        return 1.0
    if math.isinf(x):
        return 0.0
    return _poisson_mixture(x, k, lam, ctl, upper=True)


def noncentral_chi2_pdf(x: float, k: float, lam: float) -> float:
    """Poisson mixture of central chi-square densities, summed in log space."""
    _check_ncx2_args(x, k, lam)
    mu = 0.5 * lam
    if x == 0.0:
        if k < 2:
            return math.inf
        return 0.5 * math.exp(-mu) if k == 2 else 0.0
    if math.isinf(x):
        return 0.0
    z = 0.5 * x
    spread = 12.0 * math.sqrt(mu) + 30.0
    lo = max(0, int(math.floor(mu - spread)))
    hi = int(math.ceil(mu + spread))
    j = np.arange(lo, hi + 1, dtype=float)
    if mu == 0.0:
        log_w = np.where(j == 0, 0.0, -np.inf)
    else:
        log_w = j * math.log(mu) - mu - gammaln(j + 1.0)
    a = 0.5 * k + j
    log_density = (a - 1.0) * math.log(z) - z - gammaln(a) - math.log(2.0)
    return float(math.exp(logsumexp(log_w + log_density)))
