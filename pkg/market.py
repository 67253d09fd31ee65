"""Domain types shared by every engine, request validation and the closed-form
Black-Scholes reference price.

All values are immutable and hold binary64 floats; prices are in currency
units, times in year fractions.
"""
import math
from dataclasses import dataclass, field, asdict
from enum import Enum
from typing import Any, Dict, Optional, Tuple

from errors import DomainError
from specfun import std_normal_cdf

# Every semiclassical closed form divides by (e^{r tau beta} - 1); beta = 2 - alpha is kept away from 0.
SEMICLASSICAL_BETA_MIN = 1e-3


class Engine(str, Enum):
    BS = 'bs'
    SEMICLASSICAL = 'semiclassical'
    NCX2 = 'ncx2'
    MC = 'mc'

    @classmethod
    def parse(cls, text: str) -> 'Engine':
        try:
            return cls((text or '').strip().lower())
        except ValueError:
            raise DomainError('engine', f'expected one of {[e.value for e in cls]}, got {text!r}')

    @property
    def is_cev_closed_form(self) -> bool:
        return self in (Engine.SEMICLASSICAL, Engine.NCX2)


class PayoffKind(str, Enum):
    EUROPEAN_CALL = 'european_call'


@dataclass(frozen=True)
class OptionContract:
    strike: float
    maturity: float
    kind: PayoffKind = PayoffKind.EUROPEAN_CALL


@dataclass(frozen=True)
class MarketScenario:
    spot: float
    rate: float
    sigma: float
    alpha: float


@dataclass(frozen=True)
class PricingRequest:
    scenario: MarketScenario
    contract: OptionContract
    tau: float

    @classmethod
    def build(cls, spot: float, strike: float, rate: float, sigma: float, alpha: float,
              maturity: float, tau: Optional[float] = None) -> 'PricingRequest':
        """Convenience constructor; tau defaults to the full maturity (t = 0)."""
        return cls(
            scenario=MarketScenario(spot=float(spot), rate=float(rate), sigma=float(sigma), alpha=float(alpha)),
            contract=OptionContract(strike=float(strike), maturity=float(maturity)),
            tau=float(maturity if tau is None else tau),
        )

    @property
    def spot(self) -> float:
        return self.scenario.spot

    @property
    def strike(self) -> float:
        return self.contract.strike


@dataclass(frozen=True)
class PriceQuote:
    price: float
    engine: Engine
    wall_time: int = 0  # nanoseconds
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    def as_row(self) -> Dict[str, Any]:
        row = asdict(self)
        row['engine'] = self.engine.value
        return row


def _require(ok: bool, field_name: str, constraint: str) -> None:
    if not ok:
        raise DomainError(field_name, constraint)


def validate_request(req: PricingRequest, engine: Engine) -> PricingRequest:
    """Return req unchanged when every invariant holds for the chosen engine."""
    sc, ct = req.scenario, req.contract
    for name, value in (('spot', sc.spot), ('rate', sc.rate), ('sigma', sc.sigma), ('alpha', sc.alpha),
                        ('strike', ct.strike), ('maturity', ct.maturity), ('tau', req.tau)):
        _require(math.isfinite(value), name, 'must be finite')
    _require(sc.spot > 0, 'spot', 'must be > 0')
    _require(ct.strike > 0, 'strike', 'must be > 0')
    _require(ct.maturity > 0, 'maturity', 'must be > 0')
    _require(req.tau >= 0, 'tau', 'must be >= 0')
    _require(req.tau <= ct.maturity * (1 + 1e-12), 'tau', 'must not exceed maturity')
    _require(sc.sigma >= 0, 'sigma', 'must be >= 0')
    _require(ct.kind == PayoffKind.EUROPEAN_CALL, 'kind', 'only European calls are supported')

    if engine.is_cev_closed_form:
        _require(0 <= sc.alpha < 2, 'alpha', 'must lie in [0, 2) for CEV engines')
        _require(sc.rate > 0, 'rate', f'must be > 0 for the {engine.value} engine')
    if engine == Engine.SEMICLASSICAL:
        _require(sc.alpha <= 2 - SEMICLASSICAL_BETA_MIN, 'alpha',
                 f'must be <= {2 - SEMICLASSICAL_BETA_MIN} for the semiclassical engine; use bs near alpha = 2')
    if engine in (Engine.MC, Engine.BS):
        _require(0 <= sc.alpha <= 2, 'alpha', 'must lie in [0, 2]')
    return req


def intrinsic_value(req: PricingRequest) -> float:
    return max(req.scenario.spot - req.contract.strike, 0.0)


def deterministic_value(req: PricingRequest) -> float:
    """sigma = 0: the asset grows at the risk-free rate, e^{-r tau} max(S0 e^{r tau} - E, 0)."""
    r, tau = req.scenario.rate, req.tau
    return max(req.scenario.spot - req.contract.strike * math.exp(-r * tau), 0.0)


def no_arbitrage_bounds(req: PricingRequest) -> Tuple[float, float]:
    lower = max(req.scenario.spot - req.contract.strike * math.exp(-req.scenario.rate * req.tau), 0.0)
    return lower, req.scenario.spot


def bs_value(spot: float, strike: float, rate: float, sigma: float, tau: float) -> float:
    if tau <= 0:
        return max(spot - strike, 0.0)
    if sigma <= 0:
        return max(spot - strike * math.exp(-rate * tau), 0.0)
    vol = sigma * math.sqrt(tau)
    d1 = (math.log(spot / strike) + tau * (rate + 0.5 * sigma * sigma)) / vol
    d2 = d1 - vol
    return spot * std_normal_cdf(d1) - strike * math.exp(-rate * tau) * std_normal_cdf(d2)


def bs_price(req: PricingRequest) -> PriceQuote:
    """Black-Scholes call price; alpha is ignored (GBM is the alpha = 2 member of the CEV family)."""
    validate_request(req, Engine.BS)
    diagnostics: Dict[str, Any] = {}
    if req.tau == 0:
        diagnostics['intrinsic'] = True
    elif req.scenario.sigma == 0:
        diagnostics['deterministic'] = True
    price = bs_value(req.scenario.spot, req.contract.strike, req.scenario.rate, req.scenario.sigma, req.tau)
    return PriceQuote(price=max(price, 0.0), engine=Engine.BS, diagnostics=diagnostics)
