from __future__ import annotations

import pytest

from triplepoint import Perturbation, Polynomial2, build_normal_form
from triplepoint.darboux_core import DarbouxSystem
from triplepoint.polynomial import X
from triplepoint.tracing import set_trace_processors
from triplepoint.tracing.setup import GLOBAL_TRACE_PROVIDER

from .testing_processor import SPAN_PROCESSOR_TESTING


# This fixture will run once before any tests are executed
@pytest.fixture(scope="session", autouse=True)
def setup_span_processor():
    set_trace_processors([SPAN_PROCESSOR_TESTING])


# This fixture will run before each test
@pytest.fixture(autouse=True)
def clear_span_processor():
    SPAN_PROCESSOR_TESTING.force_flush()
    SPAN_PROCESSOR_TESTING.shutdown()
    SPAN_PROCESSOR_TESTING.clear()


# This fixture will run after all tests end
@pytest.fixture(autouse=True, scope="session")
def shutdown_trace_provider():
    yield
    GLOBAL_TRACE_PROVIDER.shutdown()


@pytest.fixture
def unit_system() -> DarbouxSystem:
    """Unit exponents at λ = 1: H = (1 − x)(x − y)(x + y), nest center (2/3, 0)."""
    return build_normal_form(1.0, 1.0, 1.0, lam=1.0)


@pytest.fixture
def x_dy(unit_system: DarbouxSystem) -> Perturbation:
    """η = M·x dy, whose integral over an oval is its area."""
    return Perturbation(R=Polynomial2.zero(), S=unit_system.integrating_factor * X)


CROSSING_SHIFT = 17 / 12


@pytest.fixture
def x_cubed_dy(unit_system: DarbouxSystem) -> Perturbation:
    """η = M·x³ dy; over an oval its integral is ∬ 3x² dA."""
    return Perturbation(R=Polynomial2.zero(), S=unit_system.integrating_factor * X * X * X)


@pytest.fixture
def crossing_eta(unit_system: DarbouxSystem) -> Perturbation:
    """η = M·(x³ − 17/12·x) dy, integrating to ∬ (3x² − 17/12) dA.

    3x² averages 4/3 over small ovals around the center (2/3, 0) and 3/2 over the polycycle
    triangle, so I(h) is negative near the center, positive near the polycycle and has a zero in
    between.
    """
    cubic = X * X * X - X * CROSSING_SHIFT
    return Perturbation(R=Polynomial2.zero(), S=unit_system.integrating_factor * cubic)
