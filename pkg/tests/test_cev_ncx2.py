import math

import pytest
from scipy import stats

from errors import DomainError
from market import PricingRequest, bs_price, no_arbitrage_bounds
from specfun import SeriesControl
from cev_ncx2 import ncx2_params, price_call_ncx2


def req(spot=100.0, strike=110.0, rate=0.05, sigma=0.5, alpha=1.9, maturity=0.5, tau=None):
    return PricingRequest.build(spot=spot, strike=strike, rate=rate, sigma=sigma, alpha=alpha,
                                maturity=maturity, tau=tau)


def scipy_price(r):
    p = ncx2_params(r)
    sc = r.scenario
    return (sc.spot * stats.ncx2.sf(2 * p.y_arg, 2 + 2 / p.beta, 2 * p.x_arg)
            - r.strike * math.exp(-sc.rate * r.tau) * stats.ncx2.cdf(2 * p.x_arg, 2 / p.beta, 2 * p.y_arg))


@pytest.mark.parametrize('sigma,alpha,expected,tol', [
    (0.5, 1.9, 8.2636, 1e-3),
    (0.9, 1.9, 17.1870, 1e-3),
    (0.2, 1.0, 4.6567e-08, 4.6567e-10),
    (0.5, 1.0, 0.0275, 2.75e-05),
])
def test_published_six_month_grid(sigma, alpha, expected, tol):
    quote = price_call_ncx2(req(sigma=sigma, alpha=alpha))
    assert quote.price == pytest.approx(expected, abs=tol)


def test_params():
    p = ncx2_params(req(sigma=0.5, alpha=1.0))
    growth_m1 = math.expm1(0.05 * 0.5)
    assert p.beta == 1.0
    assert p.kappa == pytest.approx(2 * 0.05 / (0.25 * growth_m1), rel=1e-14)
    assert p.x_arg == pytest.approx(p.kappa * 100 * math.exp(0.025), rel=1e-14)
    assert p.y_arg == pytest.approx(p.kappa * 110, rel=1e-14)
    quote = price_call_ncx2(req(sigma=0.5, alpha=1.0))
    assert quote.diagnostics['kappa'] == p.kappa


@pytest.mark.parametrize('spot,strike,sigma,alpha,tau', [
    (100, 110, 0.2, 1.45, 0.5), (100, 90, 0.4, 1.0, 1.0), (80, 100, 0.3, 0.5, 2.0),
    (120, 100, 0.9, 1.9, 4.0), (100, 100, 0.25, 1.7, 0.25),
])
def test_against_scipy_distribution(spot, strike, sigma, alpha, tau):
    r = req(spot=spot, strike=strike, sigma=sigma, alpha=alpha, maturity=tau)
    assert price_call_ncx2(r).price == pytest.approx(scipy_price(r), rel=1e-8, abs=1e-12)


def test_within_bounds_and_monotone():
    for alpha in (0.5, 1.0, 1.5, 1.9):
        by_spot = []
        for spot in (70.0, 90.0, 110.0, 130.0):
            r = req(spot=spot, alpha=alpha, sigma=0.4)
            lower, upper = no_arbitrage_bounds(r)
            p = price_call_ncx2(r).price
            assert lower <= p <= upper
            by_spot.append(p)
        assert by_spot == sorted(by_spot)
        by_strike = [price_call_ncx2(req(strike=k, alpha=alpha, sigma=0.4)).price for k in (90.0, 110.0, 130.0)]
        assert by_strike == sorted(by_strike, reverse=True)


def test_degenerate_inputs():
    at_expiry = price_call_ncx2(req(spot=125.0, tau=0.0))
    assert at_expiry.price == 15.0
    assert at_expiry.diagnostics == {'intrinsic': True}
    flat = price_call_ncx2(req(spot=125.0, sigma=0.0))
    assert flat.price == pytest.approx(125.0 - 110.0 * math.exp(-0.025), rel=1e-14)


def test_rejects_gbm_and_zero_rate():
    with pytest.raises(DomainError):
        price_call_ncx2(req(alpha=2.0))
    with pytest.raises(DomainError):
        price_call_ncx2(req(rate=0.0))


@pytest.mark.slow
def test_approaches_black_scholes_near_alpha_two():
    r = req(sigma=0.2, alpha=2.0 - 1e-4)
    quote = price_call_ncx2(r, SeriesControl(term_tol=1e-14, max_terms=5_000_000))
    bs = bs_price(req(sigma=0.2, alpha=2.0)).price
    assert quote.price == pytest.approx(bs, rel=1e-3)
