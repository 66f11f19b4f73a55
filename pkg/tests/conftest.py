import numpy as np
import pytest

from energon.core.registry import custom_config, registry_lookup
from energon.simulator import PowerModelParams, get_profile, synthesize_trace


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def a40():
    return get_profile("a40")


@pytest.fixture
def quiet_a40(a40):
    """Data-center profile with the measurement jitter switched off."""
    from dataclasses import replace

    return replace(a40, power=replace(a40.power, jitter_sd_w=0.0))


@pytest.fixture
def t5_small_trace():
    return synthesize_trace(registry_lookup("t5-small"), seed=7)


def anchor_params(**kw) -> PowerModelParams:
    return PowerModelParams(jitter_sd_w=0.0, **kw)


def reference_config():
    """1 encoder/decoder block, 8 heads, 512 dim."""
    return custom_config(1, 8)


_VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    """Record one acceptance line; the terminal summary repeats them all."""

    def record(criterion: str, ok: bool, detail: str) -> bool:
        line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        _VERDICTS.append(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
