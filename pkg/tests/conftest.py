import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from metaalloc import kernels  # noqa: E402
from metaalloc.config import DEFAULT_ROOMS, Config, GlobalParams  # noqa: E402

BACKENDS = kernels.backends()


@pytest.fixture(params=sorted(BACKENDS))
def backend(request):
    return BACKENDS[request.param]


@pytest.fixture(params=sorted(DEFAULT_ROOMS))
def room(request):
    return DEFAULT_ROOMS[request.param]


@pytest.fixture
def params():
    return GlobalParams()


def make_config(**env) -> Config:
    return Config().with_overrides({f"env.{k}": v for k, v in env.items()})


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.VERDICTS:
            terminalreporter.write_line(line)
