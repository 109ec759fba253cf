import json

import pytest

from slext.config import NumericsConfig, set_config
from slext.problem import builtin_bessel, builtin_free, builtin_symmetric_bessel


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: spectral scans over several problems")


@pytest.fixture(autouse=True)
def default_config():
    set_config(None)
    yield
    set_config(None)


@pytest.fixture(scope="session")
def cfg():
    return NumericsConfig(num_threads=1)


@pytest.fixture(scope="session")
def free01(cfg):
    return builtin_free(0.0, 1.0, cfg)


@pytest.fixture(scope="session")
def free02(cfg):
    return builtin_free(0.0, 2.0, cfg)


@pytest.fixture(scope="session")
def bessel03(cfg):
    return builtin_bessel(0.3, 0.0, 1.0, cfg)


@pytest.fixture(scope="session")
def symmetric_bessel(cfg):
    cache = {}

    def make(gamma):
        if gamma not in cache:
            cache[gamma] = builtin_symmetric_bessel(gamma, 0.0, 2.0, cfg)
        return cache[gamma]

    return make


@pytest.fixture
def problem_file(tmp_path):
    def write(data):
        path = tmp_path / "problem.json"
        path.write_text(json.dumps(data), encoding="utf-8")
        return path

    return write
