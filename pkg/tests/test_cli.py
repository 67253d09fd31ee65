import io
import json
import math
import os

import pytest

import cli
from bench import CSV_HEADER
from market import PricingRequest, bs_price


def run(argv):
    out, err = io.StringIO(), io.StringIO()
    code = cli.main(argv, out=out, err=err)
    return code, out.getvalue(), err.getvalue()


def test_bs_quote_with_zero_sigma_is_discounted_forward():
    code, out, err = run(['quote', '--engine', 'bs', '--spot', '150', '--strike', '110', '--rate', '0.05',
                          '--sigma', '0', '--maturity', '0.5', '--format', 'csv'])
    assert code == 0, err
    fields = out.strip().split(',', len(CSV_HEADER) - 1)
    assert fields[3] == 'bs'
    assert float(fields[4]) == pytest.approx(150 - 110 * math.exp(-0.025), rel=1e-14)


def test_quote_is_the_default_command():
    code, out, _ = run(['--engine', 'bs', '--spot', '100', '--strike', '100', '--rate', '0.05', '--sigma', '0.2',
                        '--maturity', '1'])
    assert code == 0
    assert out.startswith('engine=bs price=10.45058357')


def test_human_quote_reports_diagnostics():
    code, out, _ = run(['quote', '--engine', 'ncx2', '--spot', '100', '--strike', '110', '--rate', '0.05',
                        '--sigma', '0.5', '--alpha', '1.9', '--maturity', '0.5'])
    assert code == 0
    assert 'engine=ncx2' in out
    diagnostics = json.loads(out.split('diagnostics=', 1)[1])
    assert 'kappa' in diagnostics


def test_cev_engine_needs_alpha():
    code, _, err = run(['quote', '--engine', 'ncx2', '--spot', '100', '--strike', '110', '--rate', '0.05',
                        '--sigma', '0.5', '--maturity', '0.5'])
    assert code == 2
    assert err.startswith('DomainError: alpha')


def test_domain_error_exit_code():
    code, _, err = run(['quote', '--engine', 'ncx2', '--spot', '-5', '--strike', '110', '--rate', '0.05',
                        '--sigma', '0.5', '--alpha', '1.9', '--maturity', '0.5'])
    assert code == 2
    assert 'spot' in err


def test_unknown_engine_exit_code():
    code, _, err = run(['quote', '--engine', 'pde', '--spot', '100', '--strike', '110', '--rate', '0.05',
                        '--sigma', '0.5', '--alpha', '1.9', '--maturity', '0.5'])
    assert code == 2
    assert 'engine' in err


def test_numerical_error_exit_code(monkeypatch):
    monkeypatch.setenv('CEV_SERIES_MAX_TERMS', '1')
    code, _, err = run(['quote', '--engine', 'ncx2', '--spot', '100', '--strike', '110', '--rate', '0.05',
                        '--sigma', '0.5', '--alpha', '1.9', '--maturity', '0.5'])
    assert code == 3
    assert err.startswith('SeriesNonConvergence')


def test_mc_flags_reach_the_engine():
    code, out, _ = run(['quote', '--engine', 'mc', '--spot', '100', '--strike', '110', '--rate', '0.05',
                        '--sigma', '0.5', '--alpha', '1.9', '--maturity', '0.5', '--paths', '2000', '--seed', '5'])
    assert code == 0
    diagnostics = json.loads(out.split('diagnostics=', 1)[1])
    assert diagnostics['paths'] == 2000
    assert diagnostics['seed'] == 5


def test_sweep_and_surface(tmp_path):
    config = tmp_path / 'grid.json'
    config.write_text(json.dumps({'sigmas': [0.5], 'alphas': [1.9], 'maturities': [0.5]}), encoding='utf-8')
    out_csv = tmp_path / 'grid.csv'
    code, out, err = run(['--config', str(config), '--out', str(out_csv), '--reps', '2', '--warmup', '1',
                          '--jobs', '1'])
    assert code == 0, err
    assert os.path.exists(f'{out_csv}.summary.json')
    lines = out_csv.read_text(encoding='utf-8').splitlines()
    assert lines[0] == ','.join(CSV_HEADER)
    assert len(lines) == 3

    surface = tmp_path / 'surface.csv'
    code, out, _ = run(['surface', str(out_csv), '--out', str(surface)])
    assert code == 0
    assert out.startswith('wrote 1 rows')


def test_sweep_where_every_cell_fails(tmp_path):
    config = tmp_path / 'bad.json'
    config.write_text(json.dumps({'sigmas': [0.5], 'alphas': [1.9995], 'maturities': [0.5],
                                  'engines': ['semiclassical']}), encoding='utf-8')
    code, _, _ = run(['sweep', '--config', str(config), '--out', str(tmp_path / 'bad.csv'), '--reps', '1',
                      '--warmup', '0', '--jobs', '1'])
    assert code == 3


def test_bad_config_and_missing_files(tmp_path):
    config = tmp_path / 'broken.json'
    config.write_text('{"sigmas": [0.5], "colour": "red"}', encoding='utf-8')
    code, _, err = run(['sweep', '--config', str(config), '--out', str(tmp_path / 'x.csv')])
    assert code == 2
    assert err.startswith('ConfigError')
    code, _, _ = run(['sweep', '--config', str(tmp_path / 'absent.json')])
    assert code == 4
    code, _, _ = run(['surface', str(tmp_path / 'absent.csv'), '--out', str(tmp_path / 's.csv')])
    assert code == 4


def test_csv_quote_matches_library_price():
    code, out, _ = run(['quote', '--engine', 'bs', '--spot', '100', '--strike', '110', '--rate', '0.05',
                        '--sigma', '0.3', '--maturity', '0.5', '--format', 'csv'])
    assert code == 0
    expected = bs_price(PricingRequest.build(spot=100, strike=110, rate=0.05, sigma=0.3, alpha=2.0,
                                             maturity=0.5)).price
    assert float(out.split(',')[4]) == expected


def test_surface_writes_alpha_profiles(tmp_path):
    config = tmp_path / 'alphas.json'
    config.write_text(json.dumps({'sigmas': [0.5], 'alphas': [1.45, 1.9], 'maturities': [0.5]}), encoding='utf-8')
    out_csv = tmp_path / 'alphas.csv'
    code, _, err = run(['sweep', '--config', str(config), '--out', str(out_csv), '--reps', '2', '--warmup', '1',
                        '--jobs', '1'])
    assert code == 0, err
    profiles = tmp_path / 'profiles.svg'
    code, out, _ = run(['surface', str(out_csv), '--out', str(tmp_path / 'surface.csv'),
                        '--profiles', str(profiles)])
    assert code == 0
    assert 'wrote 2 alpha profiles' in out
    assert '<svg' in profiles.read_text(encoding='utf-8')
