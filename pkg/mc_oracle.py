"""Monte Carlo CEV oracle: full-truncation Euler with absorption at zero.

Paths are split into fixed-size batches. Batch i draws from its own Philox
stream seeded by SeedSequence(seed, spawn_key=(i,)), so the result does not
depend on how many workers run the batches. Batch statistics are merged in
batch order.
"""
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from errors import DomainError
from market import Engine, PriceQuote, PricingRequest, deterministic_value, intrinsic_value, validate_request
from settings import env_int
from telemetry import logger

SCHEMES = ('euler_full_truncation',)


@dataclass(frozen=True)
class McConfig:
    paths: int = 2_000_000
    steps: int = 512  # per year
    seed: int = 20240521
    scheme: str = 'euler_full_truncation'
    batch_size: int = 65536
    workers: int = 1

    def __post_init__(self):
        if self.paths < 1000:
            raise DomainError('paths', 'must be >= 1000')
        if self.steps < 16:
            raise DomainError('steps', 'must be >= 16 per year')
        if self.scheme not in SCHEMES:
            raise DomainError('scheme', f'expected one of {list(SCHEMES)}')
        if self.batch_size < 1:
            raise DomainError('batch_size', 'must be >= 1')
        if self.workers < 1:
            raise DomainError('workers', 'must be >= 1')
        if not 0 <= self.seed < 2 ** 64:
            raise DomainError('seed', 'must be a 64-bit unsigned integer')

    @classmethod
    def from_env(cls) -> 'McConfig':
        return cls(
            paths=env_int('CEV_MC_PATHS', 2_000_000),
            steps=env_int('CEV_MC_STEPS_PER_YEAR', 512),
            seed=env_int('CEV_MC_SEED', 20240521),
            batch_size=env_int('CEV_MC_BATCH_SIZE', 65536),
            workers=env_int('CEV_MC_WORKERS', 1),
        )


@dataclass(frozen=True)
class McQuote:
    price: float
    std_error: float
    absorbed_fraction: float
    paths: int
    steps: int
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    def as_price_quote(self) -> PriceQuote:
        diagnostics = dict(self.diagnostics)
        diagnostics.update({'std_error': self.std_error, 'absorbed_fraction': self.absorbed_fraction,
                            'paths': self.paths, 'steps': self.steps})
        return PriceQuote(price=self.price, engine=Engine.MC, diagnostics=diagnostics)


@dataclass(frozen=True)
class _BatchStats:
    count: int
    mean: float
    m2: float  # sum of squared deviations from the batch mean
    absorbed: int


def _batch_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(index,))))


def _simulate_batch(req: PricingRequest, cfg: McConfig, n_steps: int, index: int, size: int) -> _BatchStats:
    sc = req.scenario
    rng = _batch_rng(cfg.seed, index)
    dt = req.tau / n_steps
    sqrt_dt = math.sqrt(dt)
    half_alpha = 0.5 * sc.alpha
    s = np.full(size, sc.spot, dtype=np.float64)
    for _ in range(n_steps):
        z = rng.standard_normal(size)
        alive = s > 0.0
        vol = sc.sigma * np.power(np.maximum(s, 0.0), half_alpha)
        stepped = s + sc.rate * s * dt + vol * sqrt_dt * z
        # zero is absorbing
        s = np.where(alive, np.maximum(stepped, 0.0), 0.0)
    payoff = np.maximum(s - req.strike, 0.0)
    mean = float(np.sum(payoff)) / size
    m2 = float(np.sum((payoff - mean) ** 2))
    return _BatchStats(count=size, mean=mean, m2=m2, absorbed=int(np.count_nonzero(s == 0.0)))


def _merge(stats: List[_BatchStats]) -> Tuple[int, float, float, int]:
    count, mean, m2, absorbed = 0, 0.0, 0.0, 0
    for b in stats:
        total = count + b.count
        delta = b.mean - mean
        mean += delta * b.count / total
        m2 += b.m2 + delta * delta * count * b.count / total
        count = total
        absorbed += b.absorbed
    return count, mean, m2, absorbed


def price_call_mc(req: PricingRequest, cfg: Optional[McConfig] = None) -> McQuote:
    cfg = cfg or McConfig.from_env()
    validate_request(req, Engine.MC)
    sc = req.scenario
    if req.tau == 0:
        return McQuote(price=intrinsic_value(req), std_error=0.0, absorbed_fraction=0.0, paths=cfg.paths,
                       steps=0, diagnostics={'intrinsic': True})
    if sc.sigma == 0:
        return McQuote(price=deterministic_value(req), std_error=0.0, absorbed_fraction=0.0, paths=cfg.paths,
                       steps=0, diagnostics={'deterministic': True})

    n_steps = max(1, math.ceil(cfg.steps * req.tau))
    sizes = [min(cfg.batch_size, cfg.paths - start) for start in range(0, cfg.paths, cfg.batch_size)]

    def run(index: int) -> _BatchStats:
        return _simulate_batch(req, cfg, n_steps, index, sizes[index])

    if cfg.workers == 1:
        stats = [run(i) for i in range(len(sizes))]
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            stats = list(pool.map(run, range(len(sizes))))

    count, mean, m2, absorbed = _merge(stats)
    discount = math.exp(-sc.rate * req.tau)
    variance = m2 / (count - 1) if count > 1 else 0.0
    quote = McQuote(price=discount * mean, std_error=discount * math.sqrt(variance / count),
                    absorbed_fraction=absorbed / count, paths=count, steps=n_steps,
                    diagnostics={'batches': len(sizes), 'seed': cfg.seed})
    logger.debug("mc price %.8g +/- %.2g over %d paths", quote.price, quote.std_error, count)
    return quote
