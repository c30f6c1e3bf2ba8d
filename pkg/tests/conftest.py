import logging

import pytest

from src.params import SimParams


@pytest.fixture
def make_params():
    """Default SimParams plus overrides, sized for quick runs"""
    def _make(**overrides):
        mapping = {'K': 4, 'N': 4, 'g': 2, 'T0': 50, 'slots': 300, 'seed': 7}
        mapping.update(overrides)
        return SimParams.from_mapping(mapping)
    return _make


@pytest.fixture(autouse=True)
def _log_dir(tmp_path, monkeypatch):
    monkeypatch.setenv('V2V_LOG_DIR', str(tmp_path / 'logs'))
    yield
    # setup_logger caches handlers bound to this test's streams
    logger = logging.getLogger('v2v_aoi')
    for handler in list(logger.handlers):
        handler.close()
        logger.removeHandler(handler)
