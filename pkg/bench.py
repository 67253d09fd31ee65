"""Parameter sweeps, timing, error tables and the plot-ready error surface."""
import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from engines import EngineSettings, price
from errors import ConfigError, MissingColumn, PricingError
from market import Engine, PricingRequest
from settings import env_int
from telemetry import log_json, logger, persist_metric

CSV_HEADER = ('sigma', 'alpha', 'maturity', 'engine', 'price', 'abs_err', 'rel_err', 'time_ns', 'diagnostics')
SURFACE_HEADER = ('sigma', 'alpha', 'maturity', 'abs_err', 'rel_err')
REL_ERR_FLOOR = 1e-12

DEFAULT_SIGMAS = (0.2, 0.5, 0.9)
DEFAULT_ALPHAS = tuple(round(1.0 + 0.097 * i, 3) for i in range(11))  # 1.0 .. 1.97
DEFAULT_MATURITIES = (0.25, 0.5, 2.0, 4.0)


@dataclass(frozen=True)
class SweepConfig:
    sigmas: Tuple[float, ...] = DEFAULT_SIGMAS
    alphas: Tuple[float, ...] = DEFAULT_ALPHAS
    maturities: Tuple[float, ...] = DEFAULT_MATURITIES
    spot: float = 100.0
    strike: float = 110.0
    rate: float = 0.05
    engines: Tuple[Engine, ...] = (Engine.SEMICLASSICAL, Engine.NCX2)
    repetitions: int = 30
    warmup: int = 5

    def __post_init__(self):
        for name in ('sigmas', 'alphas', 'maturities', 'engines'):
            if not getattr(self, name):
                raise ConfigError(name, 'must be a non-empty list')
        if not self.repetitions > self.warmup >= 0:
            raise ConfigError('repetitions', 'need repetitions > warmup >= 0')

    @classmethod
    def from_dict(cls, doc: Dict[str, Any]) -> 'SweepConfig':
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ConfigError('config', f'unknown fields {sorted(unknown)}')
        kwargs: Dict[str, Any] = {
            'repetitions': env_int('BENCH_REPETITIONS', 30),
            'warmup': env_int('BENCH_WARMUP', 5),
        }
        try:
            for name in ('sigmas', 'alphas', 'maturities'):
                if name in doc:
                    kwargs[name] = tuple(float(v) for v in doc[name])
            for name in ('spot', 'strike', 'rate'):
                if name in doc:
                    kwargs[name] = float(doc[name])
            for name in ('repetitions', 'warmup'):
                if name in doc:
                    kwargs[name] = int(doc[name])
        except (TypeError, ValueError) as e:
            raise ConfigError('config', str(e))
        if 'engines' in doc:
            kwargs['engines'] = tuple(Engine.parse(e) for e in doc['engines'])
        return cls(**kwargs)

    def cells(self) -> List[Tuple[float, float, float]]:
        """(sigma, alpha, maturity) in sigma-major, then alpha, then maturity order."""
        return [(s, a, t) for s in self.sigmas for a in self.alphas for t in self.maturities]

    def request(self, sigma: float, alpha: float, maturity: float) -> PricingRequest:
        return PricingRequest.build(spot=self.spot, strike=self.strike, rate=self.rate, sigma=sigma,
                                    alpha=alpha, maturity=maturity)


def load_sweep_config(path: str) -> SweepConfig:
    with open(path, 'r', encoding='utf-8') as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError('config', f'{path}: {e}')
    if not isinstance(doc, dict):
        raise ConfigError('config', f'{path}: expected a JSON object')
    return SweepConfig.from_dict(doc)


@dataclass
class EngineResult:
    price: Optional[float] = None
    time_ns: Optional[int] = None
    time_mean_ns: Optional[int] = None
    retained_runs: int = 0
    diagnostics: Dict[str, Any] = field(default_factory=dict)
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None and self.price is not None


@dataclass
class BenchmarkRecord:
    sigma: float
    alpha: float
    maturity: float
    results: Dict[Engine, EngineResult] = field(default_factory=dict)

    def errors_against_benchmark(self, engine: Engine) -> Tuple[Optional[float], Optional[float]]:
        """(abs_err, rel_err) of engine against the ncx2 price; rel_err is None below the floor."""
        bench = self.results.get(Engine.NCX2)
        mine = self.results.get(engine)
        if engine == Engine.NCX2 or not (bench and mine and bench.ok and mine.ok):
            return None, None
        abs_err = abs(mine.price - bench.price)
        rel_err = abs_err / bench.price if bench.price > REL_ERR_FLOOR else None
        return abs_err, rel_err

    @property
    def abs_err(self) -> Optional[float]:
        return self.errors_against_benchmark(Engine.SEMICLASSICAL)[0]

    @property
    def rel_err(self) -> Optional[float]:
        return self.errors_against_benchmark(Engine.SEMICLASSICAL)[1]

    @property
    def failed(self) -> bool:
        return all(not r.ok for r in self.results.values())

    def rows(self) -> List[Dict[str, Any]]:
        out = []
        for engine, res in self.results.items():
            abs_err, rel_err = self.errors_against_benchmark(engine)
            diagnostics = dict(res.diagnostics)
            if res.error:
                diagnostics['error'] = res.error
            if abs_err is not None and rel_err is None:
                diagnostics['rel_err'] = 'undefined'
            out.append({
                'sigma': self.sigma,
                'alpha': self.alpha,
                'maturity': self.maturity,
                'engine': engine.value,
                'price': '' if res.price is None else repr(res.price),
                'abs_err': '' if abs_err is None else repr(abs_err),
                'rel_err': '' if rel_err is None else repr(rel_err),
                'time_ns': '' if res.time_ns is None else res.time_ns,
                'diagnostics': json.dumps(diagnostics, sort_keys=True, default=str),
            })
        return out


def timing_stats(times_ns: Sequence[int]) -> Tuple[int, int]:
    """(median, mean) in whole nanoseconds."""
    samples = np.asarray(times_ns, dtype=np.float64)
    return int(np.median(samples)), int(samples.mean())


def time_engine(req: PricingRequest, engine: Engine, settings: EngineSettings,
                repetitions: int, warmup: int) -> EngineResult:
    """Median wall time of the repetitions that follow the warmup runs."""
    times: List[int] = []
    quote = None
    for i in range(repetitions):
        quote = price(req, engine, settings, record=False)
        if i >= warmup:
            times.append(quote.wall_time)
    median, mean = timing_stats(times)
    if median > mean:
        logger.debug("%s timing skewed low: median %d ns above mean %d ns", engine.value, median, mean)
    return EngineResult(price=quote.price, time_ns=median, time_mean_ns=mean, retained_runs=len(times),
                        diagnostics=dict(quote.diagnostics))


def run_cell(config: SweepConfig, settings: EngineSettings, cell: Tuple[float, float, float]) -> BenchmarkRecord:
    sigma, alpha, maturity = cell
    record = BenchmarkRecord(sigma=sigma, alpha=alpha, maturity=maturity)
    req = config.request(sigma, alpha, maturity)
    for engine in config.engines:
        try:
            record.results[engine] = time_engine(req, engine, settings, config.repetitions, config.warmup)
        except PricingError as e:
            record.results[engine] = EngineResult(error=f'{type(e).__name__}: {e}')
            log_json('cell_failed', engine=engine.value, sigma=sigma, alpha=alpha, maturity=maturity,
                     error=str(e), error_type=type(e).__name__)
    return record


def _run_cell_args(args: Tuple[SweepConfig, EngineSettings, Tuple[float, float, float]]) -> BenchmarkRecord:
    return run_cell(*args)


def run_sweep(config: SweepConfig, settings: Optional[EngineSettings] = None, jobs: int = 1,
              on_cell: Optional[Callable[[int, BenchmarkRecord], None]] = None) -> List[BenchmarkRecord]:
    """Price every cell; records come back in config.cells() order whatever the completion order.

    With jobs > 1 each cell runs in its own worker process, one cell at a time
    per worker, so timing runs never share a core with another cell.
    """
    settings = settings or EngineSettings.from_env()
    cells = config.cells()
    records: List[Optional[BenchmarkRecord]] = [None] * len(cells)
    if jobs <= 1:
        for i, cell in enumerate(cells):
            records[i] = run_cell(config, settings, cell)
            if on_cell:
                on_cell(i, records[i])
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = {pool.submit(_run_cell_args, (config, settings, cell)): i for i, cell in enumerate(cells)}
            for future in as_completed(futures):
                i = futures[future]
                records[i] = future.result()
                if on_cell:
                    on_cell(i, records[i])
    done = [r for r in records if r is not None]
    failed = sum(1 for r in done if r.failed)
    log_json('sweep_finished', cells=len(done), failed=failed, jobs=jobs)
    persist_metric({'event': 'sweep_finished', 'cells': len(done), 'failed': failed})
    return done


def write_sweep_csv(records: Iterable[BenchmarkRecord], path: str) -> int:
    rows = 0
    with open(path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=CSV_HEADER, lineterminator='\n')
        writer.writeheader()
        for record in records:
            for row in record.rows():
                writer.writerow(row)
                rows += 1
    return rows


def summarize(records: Sequence[BenchmarkRecord]) -> Dict[str, Any]:
    """Max rel_err per maturity, ncx2 / semiclassical time ratio per cell, failed cells."""
    max_rel: Dict[str, Optional[float]] = {}
    ratios = []
    failed = []
    for r in records:
        key = repr(r.maturity)
        rel = r.rel_err
        if rel is not None:
            max_rel[key] = max(rel, max_rel.get(key) or 0.0)
        else:
            max_rel.setdefault(key, None)
        semi, bench = r.results.get(Engine.SEMICLASSICAL), r.results.get(Engine.NCX2)
        if semi and bench and semi.ok and bench.ok and semi.time_ns:
            ratios.append({'sigma': r.sigma, 'alpha': r.alpha, 'maturity': r.maturity,
                           'ncx2_over_semiclassical': bench.time_ns / semi.time_ns})
        for engine, res in r.results.items():
            if not res.ok:
                failed.append({'sigma': r.sigma, 'alpha': r.alpha, 'maturity': r.maturity,
                               'engine': engine.value, 'error': res.error})
    return {'cells': len(records), 'max_rel_err_by_maturity': max_rel, 'time_ratios': ratios,
            'failed': failed}


def summary_path(out_csv: str) -> str:
    return f'{out_csv}.summary.json'


def write_summary(summary: Dict[str, Any], out_csv: str) -> str:
    path = summary_path(out_csv)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(summary, f, indent=2, sort_keys=True)
    return path


def emit_error_surface(sweep_csv: str, out_csv: str, svg: Optional[str] = None) -> int:
    """Long-format (sigma, alpha, maturity, abs_err, rel_err) rows of the semiclassical engine."""
    import pandas as pd

    try:
        frame = pd.read_csv(sweep_csv)
    except pd.errors.EmptyDataError:
        raise MissingColumn('sigma')
    for column in ('sigma', 'alpha', 'maturity', 'engine', 'abs_err', 'rel_err'):
        if column not in frame.columns:
            raise MissingColumn(column)
    surface = frame.loc[frame['engine'] == Engine.SEMICLASSICAL.value, list(SURFACE_HEADER)]
    surface = surface.sort_values(['sigma', 'alpha', 'maturity'], kind='mergesort').reset_index(drop=True)
    surface.to_csv(out_csv, index=False, lineterminator='\n')
    if svg:
        _write_heatmap(surface, svg)
    logger.info("error surface: %d rows -> %s", len(surface), out_csv)
    return len(surface)


def _write_heatmap(surface, svg: str) -> None:
    import matplotlib
    matplotlib.use('Agg')
    import matplotlib.pyplot as plt

    maturities = sorted(surface['maturity'].unique()) or [math.nan]
    fig, axes = plt.subplots(1, len(maturities), figsize=(4.5 * len(maturities), 4), squeeze=False)
    for ax, maturity in zip(axes[0], maturities):
        part = surface[surface['maturity'] == maturity]
        if part.empty:
            ax.set_axis_off()
            continue
        grid = part.pivot_table(index='alpha', columns='sigma', values='rel_err', aggfunc='max')
        if grid.empty:
            ax.set_axis_off()
            continue
        image = ax.imshow(grid.values, origin='lower', aspect='auto', cmap='viridis')
        ax.set_xticks(range(len(grid.columns)))
        ax.set_xticklabels([f'{v:g}' for v in grid.columns], rotation=90)
        ax.set_yticks(range(len(grid.index)))
        ax.set_yticklabels([f'{v:g}' for v in grid.index])
        ax.set_xlabel('sigma')
        ax.set_ylabel('alpha')
        ax.set_title(f'relative error, T={maturity:g}')
        fig.colorbar(image, ax=ax)
    fig.tight_layout()
    fig.savefig(svg, format='svg')
    plt.close(fig)


PROFILE_COLUMNS = ('sigma', 'alpha', 'maturity', 'engine', 'price', 'time_ns')


def emit_alpha_profiles(sweep_csv: str, svg: str) -> int:
    """Price and median run time against alpha, one line per (engine, sigma), one column per maturity.

    Returns the number of plotted lines.
    """
    import pandas as pd

    try:
        frame = pd.read_csv(sweep_csv)
    except pd.errors.EmptyDataError:
        raise MissingColumn('sigma')
    for column in PROFILE_COLUMNS:
        if column not in frame.columns:
            raise MissingColumn(column)
    frame = frame.dropna(subset=['price', 'time_ns'])
    return _write_alpha_profiles(frame, svg)


def _write_alpha_profiles(frame, svg: str) -> int:
    import matplotlib
    matplotlib.use('Agg')
    import matplotlib.pyplot as plt

    maturities = sorted(frame['maturity'].unique()) or [math.nan]
    fig, axes = plt.subplots(2, len(maturities), figsize=(4.5 * len(maturities), 7), squeeze=False)
    lines = 0
    for col, maturity in enumerate(maturities):
        price_ax, time_ax = axes[0][col], axes[1][col]
        part = frame[frame['maturity'] == maturity]
        if part.empty:
            price_ax.set_axis_off()
            time_ax.set_axis_off()
            continue
        for (engine, sigma), series in part.groupby(['engine', 'sigma'], sort=True):
            series = series.sort_values('alpha', kind='mergesort')
            label = f'{engine}, sigma={sigma:g}'
            price_ax.plot(series['alpha'], series['price'], marker='o', label=label)
            time_ax.plot(series['alpha'], series['time_ns'] / 1e6, marker='o', label=label)
            lines += 1
        price_ax.set_title(f'price, T={maturity:g}')
        price_ax.set_ylabel('call price')
        time_ax.set_title(f'median run time, T={maturity:g}')
        time_ax.set_ylabel('ms')
        time_ax.set_yscale('log')
        for ax in (price_ax, time_ax):
            ax.set_xlabel('alpha')
            ax.legend(fontsize='small')
    fig.tight_layout()
    fig.savefig(svg, format='svg')
    plt.close(fig)
    logger.info("alpha profiles: %d lines -> %s", lines, svg)
    return lines


def default_out_path(config_path: str) -> str:
    base, _ = os.path.splitext(os.path.basename(config_path))
    return f'{base}.csv'


def with_repetitions(config: SweepConfig, repetitions: Optional[int], warmup: Optional[int]) -> SweepConfig:
    return replace(config,
                   repetitions=config.repetitions if repetitions is None else repetitions,
                   warmup=config.warmup if warmup is None else warmup)
