import base64
import json
import os
import threading
import time
from datetime import datetime
from queue import Full, Queue
from typing import Any, Dict, Optional

from flask import Flask, Response, jsonify, request, stream_with_context

from bench import SweepConfig, run_sweep, summarize
from engines import EngineSettings, price
from errors import DomainError, NumericalError
from market import Engine, PricingRequest
from settings import env_float, env_int
from telemetry import configure_telemetry, log_json, logger, persist_metric

QUOTE_FIELDS = ('spot', 'strike', 'rate', 'sigma', 'alpha', 'maturity')
PRIVATE_JOB_KEYS = ('queue', 'finished_monotonic')


def _read_quote_params() -> Dict[str, Any]:
    if request.method == 'POST':
        data = request.get_json(silent=True)
        if not isinstance(data, dict):
            raise DomainError('body', 'expected a JSON object')
        return data
    return request.args.to_dict()


def _build_request(params: Dict[str, Any]) -> PricingRequest:
    values: Dict[str, float] = {}
    for name in QUOTE_FIELDS:
        raw = params.get(name)
        if raw is None or raw == '':
            if name == 'alpha' and str(params.get('engine', '')).lower() == Engine.BS.value:
                raw = 2.0
            else:
                raise DomainError(name, 'is required')
        try:
            values[name] = float(raw)
        except (TypeError, ValueError):
            raise DomainError(name, f'expected a number, got {raw!r}')
    tau = params.get('tau')
    try:
        tau_value = None if tau in (None, '') else float(tau)
    except (TypeError, ValueError):
        raise DomainError('tau', f'expected a number, got {tau!r}')
    return PricingRequest.build(tau=tau_value, **values)


def evict_finished_jobs(jobs: Dict[str, Dict[str, Any]], now: float) -> int:
    """Drop finished jobs older than JOB_TTL_SECS, then the oldest beyond JOB_MAX_FINISHED.

    Caller holds the jobs lock. Running and pending jobs are never evicted.
    """
    ttl = env_float('JOB_TTL_SECS', 3600.0)
    keep = max(0, env_int('JOB_MAX_FINISHED', 100))
    finished = sorted((job['finished_monotonic'], job_id) for job_id, job in jobs.items()
                      if job.get('finished_monotonic') is not None)
    expired = [job_id for finished_at, job_id in finished if now - finished_at >= ttl]
    survivors = [job_id for _, job_id in finished if job_id not in expired]
    overflow = survivors[:max(0, len(survivors) - keep)]
    for job_id in expired + overflow:
        del jobs[job_id]
    return len(expired) + len(overflow)


def create_app(settings: Optional[EngineSettings] = None) -> Flask:
    configure_telemetry()
    app = Flask(__name__)

    def engine_settings() -> EngineSettings:
        return settings or EngineSettings.from_env()

    # In-memory store for background sweep jobs (per-process only)
    jobs: Dict[str, Dict[str, Any]] = {}
    jobs_lock = threading.Lock()

    def _create_job_id() -> str:
        return base64.urlsafe_b64encode(os.urandom(9)).decode('utf-8').rstrip('=')

    def _publish(job_id: str, event: Dict[str, Any]) -> None:
        with jobs_lock:
            job = jobs.get(job_id)
            q: Optional[Queue] = job.get('queue') if job else None
        if q is None:
            return
        try:
            q.put_nowait(event)
        except Full:
            logger.debug("SSE queue full for job %s; dropping %s", job_id, event.get('type'))

    @app.get('/health')
    def health():
        return {"status": "ok"}, 200

    @app.route('/quote', methods=['GET', 'POST'])
    def quote():
        try:
            params = _read_quote_params()
            engine = Engine.parse(str(params.get('engine', 'ncx2')))
            result = price(_build_request(params), engine, engine_settings())
        except DomainError as e:
            return jsonify({'error': type(e).__name__, 'field': e.field, 'message': str(e)}), 400
        except NumericalError as e:
            return jsonify({'error': type(e).__name__, 'message': str(e)}), 422
        return jsonify(result.as_row())

    @app.post('/sweep')
    def sweep():
        doc = request.get_json(silent=True)
        if not isinstance(doc, dict):
            return jsonify({'error': 'DomainError', 'message': 'expected a JSON object'}), 400
        try:
            config = SweepConfig.from_dict(doc)
        except DomainError as e:
            return jsonify({'error': type(e).__name__, 'field': e.field, 'message': str(e)}), 400

        job_id = _create_job_id()
        cells_total = len(config.cells())
        with jobs_lock:
            evicted = evict_finished_jobs(jobs, time.monotonic())
            jobs[job_id] = {
                'id': job_id,
                'status': 'pending',
                'created_utc': datetime.utcnow().isoformat() + 'Z',
                'cells_total': cells_total,
                'cells_completed': 0,
                'cells_failed': 0,
                'progress_percent': 0.0,
                'records': None,
                'summary': None,
                'error': None,
                'finished_monotonic': None,
                'queue': Queue(maxsize=1000),  # SSE event queue
            }
        if evicted:
            logger.debug("evicted %d finished sweep jobs", evicted)

        def on_cell(index: int, record) -> None:
            with jobs_lock:
                job = jobs[job_id]
                job['cells_completed'] += 1
                if record.failed:
                    job['cells_failed'] += 1
                job['progress_percent'] = round(100.0 * job['cells_completed'] / (cells_total or 1), 1)
                progress = job['progress_percent']
            if record.failed:
                _publish(job_id, {'type': 'cell_error', 'index': index, 'sigma': record.sigma,
                                  'alpha': record.alpha, 'maturity': record.maturity})
            _publish(job_id, {'type': 'progress', 'index': index, 'progress_percent': progress})

        def _run():
            with jobs_lock:
                jobs[job_id]['status'] = 'running'
            _publish(job_id, {'type': 'started', 'cells_total': cells_total})
            persist_metric({'event': 'job_started', 'job_id': job_id, 'cells': cells_total})
            start = time.time()
            error = None
            records = []
            try:
                records = run_sweep(config, engine_settings(), jobs=1, on_cell=on_cell)
            except Exception as e:  # the job thread must always publish a final event
                logger.exception("sweep job %s crashed", job_id)
                error = f'{type(e).__name__}: {e}'
            with jobs_lock:
                job = jobs[job_id]
                if error is None and records and all(r.failed for r in records):
                    error = 'every cell failed'
                job['status'] = 'failed' if error else 'succeeded'
                job['error'] = error
                job['records'] = [row for r in records for row in r.rows()]
                job['summary'] = summarize(records) if records else None
                job['finished_monotonic'] = time.monotonic()
                final = {'type': 'final', 'status': job['status'], 'error': error,
                         'progress_percent': job['progress_percent']}
            _publish(job_id, final)
            duration = round(time.time() - start, 3)
            log_json('job_finished', job_id=job_id, status=final['status'], duration_secs=duration)
            persist_metric({'event': 'job_finished', 'job_id': job_id, 'status': final['status'],
                            'duration_secs': duration})

        threading.Thread(target=_run, daemon=True).start()
        return jsonify({'job_id': job_id}), 202

    @app.get('/job/<job_id>/status')
    def job_status(job_id: str):
        with jobs_lock:
            job = jobs.get(job_id)
            if not job:
                return jsonify({'error': 'not_found'}), 404
            payload = {k: v for k, v in job.items() if k not in PRIVATE_JOB_KEYS}
        return jsonify(payload)

    @app.get('/job/<job_id>/stream')
    def job_stream(job_id: str):
        """Server-Sent Events stream for job progress."""
        def event_gen():
            with jobs_lock:
                job = jobs.get(job_id)
                q: Optional[Queue] = job.get('queue') if job else None
            if q is None:
                yield 'event: error\ndata: {"error":"not_found"}\n\n'
                return
            while True:
                try:
                    item = q.get(timeout=5)
                except Exception:
                    # heartbeat to keep connection alive
                    yield 'event: ping\ndata: {}\n\n'
                    continue
                yield f"event: {item.get('type', 'message')}\ndata: {json.dumps(item)}\n\n"
                if item.get('type') == 'final':
                    return
        return Response(stream_with_context(event_gen()), mimetype='text/event-stream')

    return app


app = create_app()


if __name__ == '__main__':
    app.run(host='0.0.0.0', port=int(os.getenv('PORT', '8000')))
