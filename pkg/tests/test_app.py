import json
import math
import time

import pytest

from app import create_app, evict_finished_jobs
from engines import EngineSettings
from mc_oracle import McConfig
from specfun import SeriesControl


@pytest.fixture
def client():
    app = create_app(EngineSettings(mc=McConfig(paths=2000, steps=32, seed=1)))
    app.config['TESTING'] = True
    with app.test_client() as c:
        yield c


QUOTE = {'spot': 100, 'strike': 110, 'rate': 0.05, 'sigma': 0.5, 'alpha': 1.9, 'maturity': 0.5}


def wait_for(client, job_id, polls=100):
    for _ in range(polls):
        data = client.get(f'/job/{job_id}/status').get_json()
        if data['status'] in ('succeeded', 'failed'):
            return data
        time.sleep(0.1)
    pytest.fail('Job did not finish in time')


def test_health(client):
    rv = client.get('/health')
    assert rv.status_code == 200
    assert rv.get_json() == {'status': 'ok'}


def test_quote_get_and_post(client):
    rv = client.get('/quote', query_string={**QUOTE, 'engine': 'ncx2'})
    assert rv.status_code == 200
    body = rv.get_json()
    assert body['engine'] == 'ncx2'
    assert body['price'] == pytest.approx(8.2636, abs=1e-3)
    assert body['wall_time'] > 0

    rv = client.post('/quote', json={**QUOTE, 'engine': 'mc'})
    assert rv.status_code == 200
    assert rv.get_json()['diagnostics']['paths'] == 2000


def test_quote_bs_defaults_alpha(client):
    rv = client.get('/quote', query_string={'engine': 'bs', 'spot': 150, 'strike': 110, 'rate': 0.05,
                                            'sigma': 0, 'maturity': 0.5})
    assert rv.status_code == 200
    assert rv.get_json()['price'] == pytest.approx(150 - 110 * math.exp(-0.025), rel=1e-14)


@pytest.mark.parametrize('params,field', [
    ({**QUOTE, 'spot': -1}, 'spot'),
    ({**QUOTE, 'sigma': 'abc'}, 'sigma'),
    ({k: v for k, v in QUOTE.items() if k != 'strike'}, 'strike'),
    ({**QUOTE, 'engine': 'pde'}, 'engine'),
])
def test_quote_domain_errors(client, params, field):
    rv = client.get('/quote', query_string=params)
    assert rv.status_code == 400
    body = rv.get_json()
    assert body['error'] == 'DomainError'
    assert body['field'] == field


def test_quote_numerical_error():
    app = create_app(EngineSettings(series=SeriesControl(max_terms=1)))
    with app.test_client() as c:
        rv = c.post('/quote', json={**QUOTE, 'engine': 'ncx2'})
    assert rv.status_code == 422
    assert rv.get_json()['error'] == 'SeriesNonConvergence'


def test_quote_writes_metric(client, monkeypatch, tmp_path):
    metrics = tmp_path / 'metrics.log'
    monkeypatch.setenv('METRICS_FILE_PATH', str(metrics))
    client.get('/quote', query_string={**QUOTE, 'engine': 'ncx2'})
    [line] = metrics.read_text(encoding='utf-8').splitlines()
    record = json.loads(line)
    assert record['event'] == 'quote_priced'
    assert record['engine'] == 'ncx2'


def test_sweep_job_runs_to_completion(client):
    rv = client.post('/sweep', json={'sigmas': [0.5], 'alphas': [1.45, 1.9], 'maturities': [0.5],
                                     'repetitions': 2, 'warmup': 1})
    assert rv.status_code == 202
    job_id = rv.get_json()['job_id']

    data = wait_for(client, job_id)
    assert data['status'] == 'succeeded'
    assert data['cells_total'] == 2
    assert data['cells_completed'] == 2
    assert data['cells_failed'] == 0
    assert data['progress_percent'] == 100.0
    assert len(data['records']) == 4
    assert data['summary']['cells'] == 2

    stream = client.get(f'/job/{job_id}/stream')
    assert stream.mimetype == 'text/event-stream'
    text = stream.get_data(as_text=True)
    events = [block.split('\n')[0] for block in text.strip().split('\n\n')]
    assert events[0] == 'event: started'
    assert events.count('event: progress') == 2
    assert events[-1] == 'event: final'


def test_sweep_job_with_only_failing_cells(client):
    rv = client.post('/sweep', json={'sigmas': [0.5], 'alphas': [1.9995], 'maturities': [0.5],
                                     'engines': ['semiclassical'], 'repetitions': 1, 'warmup': 0})
    assert rv.status_code == 202
    data = wait_for(client, rv.get_json()['job_id'])
    assert data['status'] == 'failed'
    assert data['cells_failed'] == 1
    assert data['error'] == 'every cell failed'


def test_sweep_rejects_bad_config(client):
    rv = client.post('/sweep', json={'sigmas': [0.5], 'volatility': 1})
    assert rv.status_code == 400
    assert rv.get_json()['error'] == 'ConfigError'
    rv = client.post('/sweep', data='not json', content_type='text/plain')
    assert rv.status_code == 400


def test_unknown_job(client):
    assert client.get('/job/nope/status').status_code == 404
    text = client.get('/job/nope/stream').get_data(as_text=True)
    assert text.startswith('event: error')


SMALL_SWEEP = {'sigmas': [0.5], 'alphas': [1.9], 'maturities': [0.5], 'engines': ['ncx2'],
               'repetitions': 1, 'warmup': 0}


def test_finished_jobs_beyond_the_cap_are_evicted(client, monkeypatch):
    monkeypatch.setenv('JOB_MAX_FINISHED', '1')
    first = client.post('/sweep', json=SMALL_SWEEP).get_json()['job_id']
    wait_for(client, first)
    second = client.post('/sweep', json=SMALL_SWEEP).get_json()['job_id']
    wait_for(client, second)
    third = client.post('/sweep', json=SMALL_SWEEP).get_json()['job_id']
    assert client.get(f'/job/{first}/status').status_code == 404
    assert client.get(f'/job/{second}/status').status_code == 200
    assert wait_for(client, third)['status'] == 'succeeded'


def test_expired_jobs_are_evicted(client, monkeypatch):
    monkeypatch.setenv('JOB_TTL_SECS', '0')
    first = client.post('/sweep', json=SMALL_SWEEP).get_json()['job_id']
    data = wait_for(client, first)
    assert 'finished_monotonic' not in data
    assert 'queue' not in data
    client.post('/sweep', json=SMALL_SWEEP)
    assert client.get(f'/job/{first}/status').status_code == 404


def test_eviction_keeps_unfinished_jobs(monkeypatch):
    monkeypatch.setenv('JOB_MAX_FINISHED', '0')
    jobs = {
        'done': {'finished_monotonic': 5.0},
        'running': {'finished_monotonic': None},
        'pending': {},
    }
    assert evict_finished_jobs(jobs, now=6.0) == 1
    assert set(jobs) == {'running', 'pending'}


def test_eviction_drops_oldest_first(monkeypatch):
    monkeypatch.setenv('JOB_MAX_FINISHED', '2')
    jobs = {name: {'finished_monotonic': t} for name, t in (('a', 3.0), ('b', 1.0), ('c', 2.0))}
    assert evict_finished_jobs(jobs, now=4.0) == 1
    assert set(jobs) == {'a', 'c'}
