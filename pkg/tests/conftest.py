import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cobotadapt.apomdp import ApomdpModel

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def toy_model(rng: np.random.Generator, n_states: int = 2, n_actions: int = 3, n_flags: int = 2, gamma: float = 0.9) -> ApomdpModel:
    """Small random model with dense T, rates in (0.05, 0.95) and rewards in [-1, 1]."""
    T = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    O = rng.uniform(0.05, 0.95, size=(n_states, n_actions, n_flags))
    R = rng.uniform(-1.0, 1.0, size=(n_states, n_actions))
    return ApomdpModel(
        states=tuple(f"s{i}" for i in range(n_states)),
        actions=tuple(f"a{i}" for i in range(n_actions)),
        T=T,
        O=O,
        R=R,
        gamma=gamma,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line per acceptance criterion, then assert."""

    def record(n: int, ok: bool, detail: str) -> None:
        line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE[n] = line
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[n])
