"""Shared fixtures: cached model simulations of the bundled regimes."""

from __future__ import annotations

import functools
import sys

import numpy as np
import pytest

from pllident.config import bundled_regime
from pllident.core import count_spikes_per_burst, simulate

DT = 1e-3
STRIDE = 10


@functools.lru_cache(maxsize=None)
def regime_run(name: str, duration: float = 30000.0, transient: float = 6000.0):
    """Clean simulation of a bundled regime, sampled every ``STRIDE*DT``.

    The result is cached for the session; callers must not mutate it.
    """
    dp = bundled_regime(name).params()
    n_steps = int(round((duration + transient) / DT))
    return dp, simulate(dp, dt=DT, n_steps=n_steps, transient=int(round(transient / DT)), stride=STRIDE)


@functools.lru_cache(maxsize=None)
def regime_run_bursts(name: str, min_bursts: int = 50):
    """Double the record length until it holds at least ``min_bursts`` bursts."""
    duration = 8000.0
    while True:
        dp, traj = regime_run(name, duration)
        n = len(count_spikes_per_burst(traj.y))
        if n >= min_bursts or duration > 2e5:
            return dp, traj, n
        duration *= 2


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "VERDICTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
