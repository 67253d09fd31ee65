import sys, os
import pytest

ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), '..'))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False,
                     help='run long Monte Carlo and published-grid reproduction tests')


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: long-running test, enabled with --runslow')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip_slow = pytest.mark.skip(reason='needs --runslow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def no_metrics_file(monkeypatch):
    # keep test runs from appending to a developer's metrics file
    monkeypatch.delenv('METRICS_FILE_PATH', raising=False)
    yield
