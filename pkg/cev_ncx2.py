"""Exact CEV call price through the non-central chi-square distribution (Schroder form).

    k = 2r / (sigma^2 beta (e^{r beta tau} - 1)),  beta = 2 - alpha
    x = k S0^beta e^{r beta tau},  y = k E^beta
    C = S0 [1 - F(2y; 2 + 2/beta, 2x)] - E e^{-r tau} F(2x; 2/beta, 2y)

The first bracket is summed directly as a survival function so deep
out-of-the-money prices keep their relative accuracy.
"""
import math
from dataclasses import dataclass
from typing import Optional

from errors import DomainError
from market import (Engine, PriceQuote, PricingRequest, deterministic_value, intrinsic_value,
                    no_arbitrage_bounds, validate_request)
from specfun import SeriesControl, noncentral_chi2_cdf, noncentral_chi2_sf
from telemetry import logger


@dataclass(frozen=True)
class Ncx2Params:
    kappa: float
    x_arg: float
    y_arg: float
    beta: float


def ncx2_params(req: PricingRequest) -> Ncx2Params:
    sc = req.scenario
    beta = 2.0 - sc.alpha
    if not (beta > 0 and sc.rate > 0 and sc.sigma > 0 and req.tau > 0):
        raise DomainError('alpha', 'Schroder parameters need alpha < 2, rate > 0, sigma > 0 and tau > 0')
    growth_m1 = math.expm1(sc.rate * beta * req.tau)
    kappa = 2.0 * sc.rate / (sc.sigma ** 2 * beta * growth_m1)
    x_arg = kappa * sc.spot ** beta * (1.0 + growth_m1)
    y_arg = kappa * req.strike ** beta
    return Ncx2Params(kappa=kappa, x_arg=x_arg, y_arg=y_arg, beta=beta)


def price_call_ncx2(req: PricingRequest, ctl: Optional[SeriesControl] = None) -> PriceQuote:
    ctl = ctl or SeriesControl.from_env()
    validate_request(req, Engine.NCX2)
    sc = req.scenario
    if req.tau == 0:
        return PriceQuote(price=intrinsic_value(req), engine=Engine.NCX2, diagnostics={'intrinsic': True})
    if sc.sigma == 0:
        return PriceQuote(price=deterministic_value(req), engine=Engine.NCX2, diagnostics={'deterministic': True})

    p = ncx2_params(req)
    asset_leg = sc.spot * noncentral_chi2_sf(2.0 * p.y_arg, 2.0 + 2.0 / p.beta, 2.0 * p.x_arg, ctl)
    strike_leg = req.strike * math.exp(-sc.rate * req.tau) * noncentral_chi2_cdf(
        2.0 * p.x_arg, 2.0 / p.beta, 2.0 * p.y_arg, ctl)
    price = asset_leg - strike_leg

    lower, upper = no_arbitrage_bounds(req)
    diagnostics = {'kappa': p.kappa, 'x_arg': p.x_arg, 'y_arg': p.y_arg}
    if price < lower or price > upper:
        # rounding in the two legs can step a hair outside the bounds
        logger.debug("ncx2 price %.17g clipped to [%g, %g]", price, lower, upper)
        diagnostics['clipped'] = True
        price = min(max(price, lower), upper)
    return PriceQuote(price=price, engine=Engine.NCX2, diagnostics=diagnostics)
