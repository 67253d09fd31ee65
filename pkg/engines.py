"""Single dispatch point from (request, engine) to a timed PriceQuote."""
import time
from dataclasses import dataclass, field, replace
from typing import Optional

from cev_ncx2 import price_call_ncx2
from cev_semiclassical import SemiclassicalConfig, price_call_semiclassical
from market import Engine, PriceQuote, PricingRequest, bs_price
from mc_oracle import McConfig, price_call_mc
from specfun import SeriesControl
from telemetry import log_json, persist_metric


@dataclass(frozen=True)
class EngineSettings:
    semiclassical: SemiclassicalConfig = field(default_factory=SemiclassicalConfig)
    series: SeriesControl = field(default_factory=SeriesControl)
    mc: McConfig = field(default_factory=McConfig)

    @classmethod
    def from_env(cls) -> 'EngineSettings':
        return cls(semiclassical=SemiclassicalConfig.from_env(), series=SeriesControl.from_env(),
                   mc=McConfig.from_env())


def _dispatch(req: PricingRequest, engine: Engine, settings: EngineSettings) -> PriceQuote:
    if engine == Engine.BS:
        return bs_price(req)
    if engine == Engine.SEMICLASSICAL:
        return price_call_semiclassical(req, settings.semiclassical)
    if engine == Engine.NCX2:
        return price_call_ncx2(req, settings.series)
    return price_call_mc(req, settings.mc).as_price_quote()


def price(req: PricingRequest, engine: Engine, settings: Optional[EngineSettings] = None,
          record: bool = True) -> PriceQuote:
    """Price req with engine; wall_time is the elapsed perf_counter_ns of the engine call."""
    settings = settings or EngineSettings.from_env()
    start = time.perf_counter_ns()
    quote = _dispatch(req, engine, settings)
    elapsed = time.perf_counter_ns() - start
    quote = replace(quote, wall_time=elapsed)
    if record:
        sc = req.scenario
        fields = {'engine': engine.value, 'price': quote.price, 'time_ns': elapsed, 'sigma': sc.sigma,
                  'alpha': sc.alpha, 'tau': req.tau, 'spot': sc.spot, 'strike': req.strike, 'rate': sc.rate}
        log_json('quote_priced', **fields)
        persist_metric({'event': 'quote_priced', **fields})
    return quote
