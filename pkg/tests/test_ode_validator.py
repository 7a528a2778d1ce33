from __future__ import annotations

import math

import numpy as np
import pytest
from pytest_mock import MockerFixture

from triplepoint import (
    DarbouxSystem,
    Perturbation,
    displacement,
    displacement_sweep,
    energy_drift,
    find_center,
    integral_at,
    limit_cycle_match,
    load_scenario,
    vector_field,
)
from triplepoint.ode_validator import (
    DisplacementProfile,
    Section,
    flow_orientation,
    kappa_linearity,
    section_rotation_shift,
)
from triplepoint.settings import OdeSettings
from triplepoint.zero_counter import ZeroBracket, ZeroReport, zeros_with_bound


def test_unperturbed_field_circulates_counterclockwise(unit_system: DarbouxSystem) -> None:
    assert flow_orientation(unit_system) == 1
    # At (0.8, 0) the field is (∂H/∂y, −∂H/∂x) with ∂H/∂x = 2x(1 − x) − x² = −0.32
    assert vector_field(unit_system, None, 0.0, (0.8, 0.0)) == pytest.approx(
        (0.0, 0.32), abs=1e-12
    )
    cx, cy = find_center(unit_system).center
    for x, y in [(0.8, 0.0), (0.6, 0.1), (0.5, -0.1), (0.9, 0.5)]:
        vx, vy = vector_field(unit_system, None, 0.0, (x, y))
        assert (x - cx) * vy - (y - cy) * vx > 0


def test_perturbation_tilts_the_field(unit_system: DarbouxSystem, x_dy: Perturbation) -> None:
    p = (0.8, 0.1)
    base = np.array(vector_field(unit_system, None, 0.0, p))
    tilted = np.array(vector_field(unit_system, x_dy, 1e-3, p))
    # κη = κ M x dy only adds to the dy coefficient, which is the x-component of the field
    assert tilted[1] == pytest.approx(base[1], abs=1e-15)
    m = unit_system.integrating_factor.value(*p)
    assert tilted[0] - base[0] == pytest.approx(1e-3 * m * 0.8)


def test_section_through_the_start(unit_system: DarbouxSystem) -> None:
    nest = find_center(unit_system)
    section = Section.through_start(unit_system, nest)
    assert section.direction == (1.0, 0.0)
    point = section.point(0.1)
    assert point.location[0] == pytest.approx(0.86695, abs=1e-5)
    assert point.location[1] == pytest.approx(0.0, abs=1e-12)
    assert section.signed_distance((0.8, 0.1)) == pytest.approx(0.1)

    turned = Section.through_start(unit_system, nest, rotation=math.pi / 2)
    assert turned.direction == pytest.approx((0.0, 1.0))


def test_energy_is_conserved_without_perturbation(unit_system: DarbouxSystem) -> None:
    assert energy_drift(unit_system, 0.1) < 1e-8


def test_displacement_follows_the_integral(
    unit_system: DarbouxSystem, x_dy: Perturbation
) -> None:
    h, kappa = 0.1, 1e-6
    value, _ = integral_at(unit_system, x_dy, h)
    d = displacement(unit_system, x_dy, kappa, h)
    assert d < 0
    assert d / (kappa * h) == pytest.approx(-value, rel=1e-3)


def test_unperturbed_displacement_vanishes(unit_system: DarbouxSystem) -> None:
    assert abs(displacement(unit_system, None, 0.0, 0.05)) < 1e-10


def test_sign_changes() -> None:
    profile = DisplacementProfile(
        1.0, 1e-3, np.array([0.1, 0.08, 0.06, 0.04]), np.array([1.0, -1.0, -1.0, 2.0])
    )
    changes = profile.sign_changes()
    assert [c[:2] for c in changes] == [(0.04, 0.06), (0.08, 0.1)]
    assert changes[0][2] == pytest.approx(0.06 - 0.02 / 3)
    assert changes[1][2] == pytest.approx(0.09)

    metadata, header, rows = profile.export_table()
    assert header == ["h", "D", "kappa"]
    assert metadata == {"lambda": 1.0, "kappa": 1e-3}
    assert rows[0] == (0.1, 1.0, 1e-3)


@pytest.mark.parametrize(
    ("values", "expected"),
    [
        ([1.0, 0.0, 1.0], []),
        ([-1.0, 0.0, -2.0], []),
        ([0.0, 0.0, 0.0], []),
        ([1.0, 0.0, -1.0], [(0.06, 0.1, 0.08)]),
        ([1.0, 0.0, 0.0, -1.0, -1.0], [(0.04, 0.1, 0.07)]),
        ([0.0, 1.0, -1.0], [(0.06, 0.08, 0.07)]),
    ],
)
def test_exact_zeros_count_once(values: list[float], expected: list[tuple[float, ...]]) -> None:
    h = np.array([0.1, 0.08, 0.06, 0.04, 0.02][: len(values)])
    changes = DisplacementProfile(1.0, 1e-3, h, np.array(values)).sign_changes()
    assert len(changes) == len(expected)
    for got, want in zip(changes, expected):
        assert got == pytest.approx(want)


def zero_report(*estimates: float) -> ZeroReport:
    brackets = [ZeroBracket(e - 0.005, e + 0.005, e, True) for e in estimates]
    return ZeroReport(lam=1.0, zeros=brackets)


def test_limit_cycle_match() -> None:
    profile = DisplacementProfile(
        1.0, 1e-3, np.array([0.1, 0.08, 0.06, 0.04]), np.array([1.0, -1.0, -1.0, 2.0])
    )
    report = limit_cycle_match(profile, zero_report(0.05, 0.091))
    assert report.perfect
    assert [p.zero for p in report.pairs] == [0.05, 0.091]
    assert report.max_distance == 0.0
    assert report.max_estimate_distance == pytest.approx(0.06 - 0.02 / 3 - 0.05)

    partial = limit_cycle_match(profile, zero_report(0.091))
    assert not partial.perfect
    assert partial.unmatched_changes == [pytest.approx(0.06 - 0.02 / 3)]

    metadata, header, rows = partial.export_table()
    assert header == ["zero", "change", "distance", "estimate_distance"]
    assert metadata["unmatched_zeros"] == ""
    assert len(rows) == 1


def test_zeros_without_a_sign_change_stay_unmatched() -> None:
    profile = DisplacementProfile(1.0, 1e-3, np.array([0.1, 0.05]), np.array([-1.0, -2.0]))
    report = limit_cycle_match(profile, zero_report(0.2))
    assert report.unmatched_zeros == [0.2]
    assert report.pairs == []


@pytest.mark.parametrize("threads", [0, 2])
def test_displacement_sweep(
    unit_system: DarbouxSystem, x_dy: Perturbation, mocker: MockerFixture, threads: int
) -> None:
    fake = mocker.patch(
        "triplepoint.ode_validator.displacement",
        side_effect=lambda sys, eta, kappa, h, *args: -kappa * h,
    )
    profiles = displacement_sweep(
        unit_system, x_dy, [1e-3, 2e-3], [0.1, 0.05, 0.005], threads=threads
    )
    # 0.005 is below 5% of n(1) = 4/27
    assert fake.call_count == 4
    assert [p.kappa for p in profiles] == [1e-3, 2e-3]
    for profile in profiles:
        np.testing.assert_array_equal(profile.h_grid, [0.1, 0.05])
        np.testing.assert_allclose(profile.values, -profile.kappa * profile.h_grid)
        assert profile.excluded == [0.005]


@pytest.mark.slow
def test_second_order_remainder_is_small(unit_system: DarbouxSystem, x_dy: Perturbation) -> None:
    h, kappa = 0.1, 1e-4
    value, _ = integral_at(unit_system, x_dy, h)
    constant = kappa_linearity(unit_system, x_dy, kappa, h)
    assert math.isfinite(constant)
    assert kappa**2 * constant < 1e-2 * kappa * h * value


@pytest.mark.slow
def test_rotating_the_section_without_sign_changes(
    unit_system: DarbouxSystem, x_dy: Perturbation
) -> None:
    assert section_rotation_shift(unit_system, x_dy, 1e-4, [0.12, 0.08, 0.04]) == 0.0


def assert_sign_changes_track_zeros(
    sys: DarbouxSystem, eta: Perturbation, zeros: ZeroReport, kappas: list[float]
) -> int:
    """Check each zero of I above 1% of n(λ) against D(κ, λ, ·) on a local grid around it.

    The sign change must lie within 1e-2·n(λ) of the zero, and must not move away from it as κ
    is halved. Returns the number of zeros checked.
    """
    nest = find_center(sys)
    n = nest.h_max
    settings = OdeSettings().resolve({"exclude_fraction": 1e-4})
    checked = [z.estimate for z in zeros.zeros if z.estimate > 1e-2 * n]
    for zero in checked:
        width = 0.1 * min(zero, n - zero)
        grid = list(zero + np.linspace(width, -width, 9))
        nearby = zero_report(*(z for z in checked if abs(z - zero) <= width))
        profiles = displacement_sweep(sys, eta, kappas, grid, settings, threads=4, nest=nest)
        distances = []
        for profile in profiles:
            match = limit_cycle_match(profile, nearby)
            assert match.perfect, (zero, profile.kappa)
            assert match.max_estimate_distance < 1e-2 * n
            distances.append(match.max_estimate_distance)
        assert all(b <= a + 1e-6 * n for a, b in zip(distances, distances[1:])), distances
    return len(checked)


@pytest.mark.slow
def test_displacement_follows_a_constructed_zero(
    unit_system: DarbouxSystem, crossing_eta: Perturbation
) -> None:
    fractions = list(np.geomspace(0.95, 1e-3, 200))
    _, report = zeros_with_bound(unit_system, crossing_eta, fractions, with_bound=False)
    kappas = [1e-3, 5e-4, 2.5e-4]
    assert assert_sign_changes_track_zeros(unit_system, crossing_eta, report, kappas) >= 1


@pytest.mark.slow
def test_golden_displacement_follows_the_zeros() -> None:
    config = load_scenario("golden_scenario")
    settings = config.settings()
    sys, eta = config.build_system(), config.build_perturbation()
    _, report = zeros_with_bound(
        sys,
        eta,
        config.grids.fractions(),
        settings["trace"],
        settings["quadrature"],
        settings["zeros"],
        with_bound=False,
    )
    assert_sign_changes_track_zeros(sys, eta, report, config.perturbation.kappas)
