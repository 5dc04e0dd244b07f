import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from maskmix.trainer import TrainConfig, train, world_for  # noqa: E402
from maskmix.world import make_world  # noqa: E402

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def report():
    """Record one PASS/FAIL line per acceptance criterion."""

    def _report(name, ok, detail=""):
        ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}".rstrip())
        return ok

    return _report


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def toy_world():
    return make_world("toy", seed=7)


@pytest.fixture(scope="session")
def desk_config():
    return TrainConfig(desk_preset=True, log_every=100).resolved()


class Runs:
    """Lazily trained desk-preset variants, shared across the session."""

    def __init__(self, config):
        self.config = config
        self.world = world_for(config)
        self._cache = {}
        self.seconds = {}

    def get(self, name):
        if name not in self._cache:
            variants = {
                "main": self.config,
                "main_again": self.config,
                "global": replace(self.config, per_layer_network=False),
                "no_cycle": replace(self.config, cycle_enabled=False),
                "entangled": replace(self.config, entangle_seed=11),
            }
            start = time.perf_counter()
            self._cache[name] = train(variants[name], world=self.world)
            self.seconds[name] = time.perf_counter() - start
        return self._cache[name]


@pytest.fixture(scope="session")
def runs(desk_config):
    return Runs(desk_config)
