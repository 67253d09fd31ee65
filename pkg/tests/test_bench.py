import csv
import json
import os
from types import SimpleNamespace

import pytest

import bench
from bench import (CSV_HEADER, SURFACE_HEADER, BenchmarkRecord, EngineResult, SweepConfig, emit_alpha_profiles,
                   emit_error_surface, load_sweep_config, run_sweep, summarize, summary_path, time_engine,
                   timing_stats, write_summary, write_sweep_csv)
from cev_ncx2 import price_call_ncx2
from engines import EngineSettings
from errors import ConfigError, DomainError, MissingColumn
from market import Engine, PricingRequest
from mc_oracle import McConfig

GOLDEN = os.path.join(os.path.dirname(__file__), 'golden', 'sweep_header.csv')
CONFIGS = os.path.join(os.path.dirname(__file__), '..', 'configs')

TINY = SweepConfig(sigmas=(0.2, 0.5), alphas=(1.45, 1.9), maturities=(0.5,), repetitions=2, warmup=1)


@pytest.fixture(scope='module')
def tiny_records():
    return run_sweep(TINY, EngineSettings(), jobs=1)


def test_cells_are_sigma_major():
    cfg = SweepConfig(sigmas=(0.1, 0.2), alphas=(1.0, 1.5), maturities=(0.5, 1.0))
    cells = cfg.cells()
    assert cells[0] == (0.1, 1.0, 0.5)
    assert cells[1] == (0.1, 1.0, 1.0)
    assert cells[2] == (0.1, 1.5, 0.5)
    assert cells[-1] == (0.2, 1.5, 1.0)
    assert len(cells) == 8


def test_shipped_configs_load():
    table1 = load_sweep_config(os.path.join(CONFIGS, 'table1.json'))
    assert len(table1.cells()) == 9
    assert table1.engines == (Engine.SEMICLASSICAL, Engine.NCX2)
    grid = load_sweep_config(os.path.join(CONFIGS, 'maturities.json'))
    assert len(grid.cells()) == 400


def test_from_dict_rejects_unknown_fields_and_bad_counts():
    with pytest.raises(ConfigError):
        SweepConfig.from_dict({'sigmas': [0.2], 'volatility': 3})
    with pytest.raises(ConfigError):
        SweepConfig.from_dict({'repetitions': 2, 'warmup': 2})
    with pytest.raises(ConfigError):
        SweepConfig.from_dict({'alphas': []})
    with pytest.raises(DomainError):
        SweepConfig.from_dict({'engines': ['pde']})


def test_from_dict_reads_timing_defaults_from_env(monkeypatch):
    monkeypatch.setenv('BENCH_REPETITIONS', '4')
    monkeypatch.setenv('BENCH_WARMUP', '0')
    cfg = SweepConfig.from_dict({'sigmas': [0.2]})
    assert (cfg.repetitions, cfg.warmup) == (4, 0)
    assert SweepConfig.from_dict({'sigmas': [0.2], 'repetitions': 9}).repetitions == 9


def test_records_follow_cell_order(tiny_records):
    assert [(r.sigma, r.alpha, r.maturity) for r in tiny_records] == TINY.cells()
    assert not any(r.failed for r in tiny_records)


def test_cell_benchmark_matches_direct_pricing(tiny_records):
    record = tiny_records[-1]
    direct = price_call_ncx2(TINY.request(record.sigma, record.alpha, record.maturity))
    assert record.results[Engine.NCX2].price == direct.price
    semi = record.results[Engine.SEMICLASSICAL]
    assert record.abs_err == abs(semi.price - direct.price)
    assert record.rel_err == pytest.approx(record.abs_err / direct.price)
    assert semi.time_ns > 0


def test_parallel_sweep_matches_serial(tiny_records):
    parallel = run_sweep(TINY, EngineSettings(), jobs=2)
    assert [r.results[Engine.NCX2].price for r in parallel] == [r.results[Engine.NCX2].price for r in tiny_records]
    assert [(r.sigma, r.alpha) for r in parallel] == [(r.sigma, r.alpha) for r in tiny_records]


def test_csv_header_matches_golden(tiny_records, tmp_path):
    out = tmp_path / 'sweep.csv'
    rows = write_sweep_csv(tiny_records, str(out))
    assert rows == 2 * len(tiny_records)
    with open(GOLDEN, encoding='utf-8') as f:
        golden = f.readline()
    with open(out, encoding='utf-8') as f:
        assert f.readline() == golden
    with open(out, encoding='utf-8', newline='') as f:
        parsed = list(csv.DictReader(f))
    assert tuple(parsed[0]) == CSV_HEADER
    bench_rows = [row for row in parsed if row['engine'] == 'ncx2']
    assert all(row['abs_err'] == '' and row['rel_err'] == '' for row in bench_rows)
    assert float(parsed[0]['price']) == tiny_records[0].results[Engine.SEMICLASSICAL].price
    json.loads(parsed[0]['diagnostics'])


def test_rel_err_undefined_below_floor():
    record = BenchmarkRecord(sigma=0.2, alpha=1.0, maturity=0.25, results={
        Engine.SEMICLASSICAL: EngineResult(price=3e-14, time_ns=10),
        Engine.NCX2: EngineResult(price=1e-13, time_ns=20),
    })
    assert record.abs_err == pytest.approx(7e-14)
    assert record.rel_err is None
    row = record.rows()[0]
    assert row['rel_err'] == ''
    assert json.loads(row['diagnostics'])['rel_err'] == 'undefined'


def test_failed_engine_is_recorded_not_raised():
    cfg = SweepConfig(sigmas=(0.5,), alphas=(1.9995,), maturities=(0.5,), engines=(Engine.SEMICLASSICAL,),
                      repetitions=1, warmup=0)
    [record] = run_sweep(cfg, EngineSettings(), jobs=1)
    assert record.failed
    result = record.results[Engine.SEMICLASSICAL]
    assert result.price is None
    assert result.error.startswith('DomainError')
    row = record.rows()[0]
    assert row['price'] == ''
    assert 'DomainError' in json.loads(row['diagnostics'])['error']
    assert summarize([record])['failed'][0]['engine'] == 'semiclassical'


def test_summary(tiny_records, tmp_path):
    summary = summarize(tiny_records)
    assert summary['cells'] == 4
    assert set(summary['max_rel_err_by_maturity']) == {'0.5'}
    assert max(r.rel_err for r in tiny_records) == summary['max_rel_err_by_maturity']['0.5']
    assert len(summary['time_ratios']) == 4
    assert summary['failed'] == []
    out = str(tmp_path / 'sweep.csv')
    path = write_summary(summary, out)
    assert path == summary_path(out)
    with open(path, encoding='utf-8') as f:
        assert json.load(f)['cells'] == 4


def test_error_surface_and_svg(tiny_records, tmp_path):
    sweep = tmp_path / 'sweep.csv'
    write_sweep_csv(tiny_records, str(sweep))
    surface = tmp_path / 'surface.csv'
    svg = tmp_path / 'surface.svg'
    rows = emit_error_surface(str(sweep), str(surface), svg=str(svg))
    assert rows == len(tiny_records)
    with open(surface, encoding='utf-8', newline='') as f:
        parsed = list(csv.DictReader(f))
    assert tuple(parsed[0]) == SURFACE_HEADER
    assert [(float(r['sigma']), float(r['alpha'])) for r in parsed] == [(r.sigma, r.alpha) for r in tiny_records]
    assert '<svg' in svg.read_text(encoding='utf-8')


def test_error_surface_of_benchmark_only_sweep_is_empty(tmp_path):
    sweep = tmp_path / 'sweep.csv'
    record = BenchmarkRecord(sigma=0.2, alpha=1.0, maturity=0.5,
                             results={Engine.NCX2: EngineResult(price=1.0, time_ns=5)})
    write_sweep_csv([record], str(sweep))
    surface = tmp_path / 'surface.csv'
    assert emit_error_surface(str(sweep), str(surface)) == 0
    assert surface.read_text(encoding='utf-8') == ','.join(SURFACE_HEADER) + '\n'


def test_error_surface_missing_column(tmp_path):
    sweep = tmp_path / 'broken.csv'
    sweep.write_text('sigma,alpha,maturity,engine,price\n0.2,1.0,0.5,semiclassical,1.0\n', encoding='utf-8')
    with pytest.raises(MissingColumn) as exc:
        emit_error_surface(str(sweep), str(tmp_path / 'surface.csv'))
    assert exc.value.column == 'abs_err'


def scripted_clock(monkeypatch, wall_times):
    """Replace the dispatch call with one that reports the given wall times in order."""
    ticks = iter(wall_times)
    calls = []

    def fake_price(req, engine, settings, record=True):
        calls.append(record)
        return SimpleNamespace(price=1.25, wall_time=next(ticks), diagnostics={'stub': True})

    monkeypatch.setattr(bench, 'price', fake_price)
    return calls


def test_timing_discards_warmup_and_reports_the_median(monkeypatch):
    calls = scripted_clock(monkeypatch, [10 ** 9, 10 ** 9, 100, 120, 110, 400])
    req = PricingRequest.build(spot=100, strike=110, rate=0.05, sigma=0.5, alpha=1.9, maturity=0.5)
    result = time_engine(req, Engine.NCX2, EngineSettings(), repetitions=6, warmup=2)
    assert calls == [False] * 6
    assert result.retained_runs == 4
    assert result.time_ns == 115
    assert result.time_mean_ns == 182
    assert result.time_ns <= result.time_mean_ns
    assert result.price == 1.25
    assert result.diagnostics == {'stub': True}


def test_timing_without_warmup_keeps_every_run(monkeypatch):
    scripted_clock(monkeypatch, [300, 100, 200])
    req = PricingRequest.build(spot=100, strike=110, rate=0.05, sigma=0.5, alpha=1.9, maturity=0.5)
    result = time_engine(req, Engine.BS, EngineSettings(), repetitions=3, warmup=0)
    assert (result.time_ns, result.time_mean_ns, result.retained_runs) == (200, 200, 3)


@pytest.mark.parametrize('times,expected', [
    ([5], (5, 5)),
    ([1, 2, 3, 1000], (2, 251)),
    ([7, 7, 7, 7], (7, 7)),
])
def test_timing_stats(times, expected):
    assert timing_stats(times) == expected


def test_swept_timings_count_only_retained_runs(tiny_records):
    for record in tiny_records:
        for result in record.results.values():
            assert result.retained_runs == TINY.repetitions - TINY.warmup
            assert result.time_ns > 0 and result.time_mean_ns > 0


def test_repeated_sweeps_give_identical_price_columns(tmp_path):
    config = SweepConfig(sigmas=(0.2, 0.5), alphas=(1.45, 1.9), maturities=(0.5,),
                         engines=(Engine.SEMICLASSICAL, Engine.NCX2, Engine.MC), repetitions=1, warmup=0)
    settings = EngineSettings(mc=McConfig(paths=4000, steps=64, seed=11, batch_size=1024))
    columns = []
    for name in ('first.csv', 'second.csv'):
        out = tmp_path / name
        write_sweep_csv(run_sweep(config, settings, jobs=1), str(out))
        with open(out, encoding='utf-8', newline='') as f:
            columns.append([(row['engine'], row['price']) for row in csv.DictReader(f)])
    assert columns[0] == columns[1]
    assert {engine for engine, _ in columns[0]} == {'semiclassical', 'ncx2', 'mc'}
    assert all(price != '' for _, price in columns[0])


def test_alpha_profiles_plot_price_and_time(tiny_records, tmp_path):
    sweep = tmp_path / 'sweep.csv'
    write_sweep_csv(tiny_records, str(sweep))
    svg = tmp_path / 'profiles.svg'
    # two engines at two volatilities
    assert emit_alpha_profiles(str(sweep), str(svg)) == 4
    text = svg.read_text(encoding='utf-8')
    assert '<svg' in text


def test_alpha_profiles_need_timing_column(tmp_path):
    sweep = tmp_path / 'broken.csv'
    sweep.write_text('sigma,alpha,maturity,engine,price\n0.2,1.0,0.5,ncx2,1.0\n', encoding='utf-8')
    with pytest.raises(MissingColumn) as exc:
        emit_alpha_profiles(str(sweep), str(tmp_path / 'p.svg'))
    assert exc.value.column == 'time_ns'
