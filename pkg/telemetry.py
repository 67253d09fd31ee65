import json
import logging
import os
import threading
from typing import Any

from settings import env_path

# Basic logging setup (idempotent)
logger = logging.getLogger("cev_pricer")
if not logging.getLogger().handlers:
    logging.basicConfig(level=os.getenv('LOG_LEVEL', 'INFO'))

METRICS_FILE_LOCK = threading.Lock()
_telemetry_configured = False


def configure_telemetry() -> None:
    """Optional Application Insights / OpenTelemetry export."""
    global _telemetry_configured
    if _telemetry_configured:
        return
    _telemetry_configured = True
    connection_string = os.getenv('APPLICATIONINSIGHTS_CONNECTION_STRING')
    if not connection_string:
        return
    try:
        from azure.monitor.opentelemetry import configure_azure_monitor  # type: ignore
        configure_azure_monitor(connection_string=connection_string)
        logger.info("Application Insights telemetry configured")
    except Exception as e:
        logger.warning(f"Failed to configure Application Insights: {e}")


def persist_metric(record: dict) -> None:
    """Append a JSON line to the metrics file (best-effort, disabled when METRICS_FILE_PATH is unset)."""
    path = env_path('METRICS_FILE_PATH')
    if not path:
        return
    try:
        line = json.dumps(record, ensure_ascii=False, default=str)
        with METRICS_FILE_LOCK:
            with open(path, 'a', encoding='utf-8') as f:
                f.write(line + '\n')
    except Exception:
        logger.debug("Failed to persist metric", exc_info=True)


def log_json(event: str, **fields: Any) -> None:
    try:
        payload = {"event": event, **fields}
        logger.info(json.dumps(payload, default=str))
    except Exception:
        logger.debug("Failed to log json payload", exc_info=True)
