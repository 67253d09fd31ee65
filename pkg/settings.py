import os
from typing import Iterable, Optional

from errors import ConfigError

# Load .env for local development only
try:
    from dotenv import load_dotenv
    load_dotenv()
except Exception:
    pass

# Notes:
# - Values are read at call time so tests can monkeypatch the environment.
# - Every engine config type exposes a from_env() built on these helpers:
#   CEV_QUAD_*   quadrature tolerances
#   CEV_SERIES_* non-central chi-square series control
#   CEV_*_MODE   semiclassical switches (exponent, discount, action, van Vleck)
#   CEV_MC_*     Monte Carlo oracle
#   BENCH_*      sweep timing and worker pool


def env_float(name: str, default: float) -> float:
    raw = os.getenv(name)
    if raw is None or raw.strip() == '':
        return default
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(name, f'expected a number, got {raw!r}')


def env_int(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw.strip() == '':
        return default
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(name, f'expected an integer, got {raw!r}')


def env_choice(name: str, default: str, choices: Iterable[str]) -> str:
    value = (os.getenv(name) or default).strip().lower()
    allowed = [c.lower() for c in choices]
    if value not in allowed:
        raise ConfigError(name, f'expected one of {allowed}, got {value!r}')
    return value


def env_path(name: str) -> Optional[str]:
    raw = os.getenv(name, '').strip()
    return raw or None


def default_jobs() -> int:
    return max(1, env_int('BENCH_JOBS', os.cpu_count() or 1))
