from __future__ import annotations

import math

import numpy as np
import pytest

from triplepoint import (
    Contour,
    DarbouxSystem,
    IntegralSeries,
    LambdaModel,
    Perturbation,
    PsiExpansion,
    argument_principle_count,
    delta_arg,
    load_scenario,
    scan_zeros,
    uniformity_study,
)
from triplepoint.exceptions import (
    NoisySeriesError,
    OnContourZeroError,
    ScenarioError,
    UntrustedBoundError,
)
from triplepoint.zero_counter import (
    UniformityRow,
    UniformityTable,
    window_contour,
    zeros_with_bound,
)

H_GRID = np.linspace(0.14, 0.001, 50)
LINEAR = PsiExpansion({(1.0, 0): 1.0, (0.0, 0): -0.5})


def linear_series(errors: np.ndarray | float = 1e-12) -> IntegralSeries:
    values = H_GRID - 0.05
    return IntegralSeries(1.0, H_GRID, values, np.broadcast_to(errors, values.shape))


def test_scan_finds_and_refines_a_simple_zero() -> None:
    report = scan_zeros(linear_series(), evaluator=lambda h: h - 0.05)
    assert report.count == 1
    zero = report.zeros[0]
    assert zero.refined
    assert zero.width <= 1e-10 * 0.14
    assert zero.estimate == pytest.approx(0.05, abs=1e-12)
    assert report.method_flags == {"scan"}
    assert report.indeterminate == []
    assert report.h_window == (0.001, 0.14)


def test_scan_without_an_evaluator_keeps_grid_brackets() -> None:
    report = scan_zeros(linear_series())
    zero = report.zeros[0]
    assert not zero.refined
    assert zero.h_low < 0.05 < zero.h_high
    assert zero.width == pytest.approx(0.139 / 49)
    # Linear interpolation is exact on a linear series
    assert zero.estimate == pytest.approx(0.05, abs=1e-12)

    metadata, header, rows = report.export_table()
    assert header == ["h", "h_low", "h_high", "width"]
    assert metadata["count"] == 1
    assert metadata["flags"] == "scan"
    assert len(rows) == 1


def test_indeterminate_levels_are_reported_not_counted() -> None:
    values = H_GRID - 0.05
    errors = np.where(np.abs(values) < 1e-3, 1e-2, 1e-12)
    report = scan_zeros(linear_series(errors))
    assert report.count == 1
    assert len(report.indeterminate) == 1
    assert {"indeterminate", "through_indeterminate"} <= report.method_flags
    assert report.zeros[0].h_low < report.indeterminate[0] < report.zeros[0].h_high


def test_noisy_series_is_rejected() -> None:
    errors = np.full(len(H_GRID), 1e-12)
    errors[:10] = 1.0
    with pytest.raises(NoisySeriesError):
        scan_zeros(linear_series(errors))


def test_vanishing_series_counts_nothing() -> None:
    series = IntegralSeries(1.0, H_GRID, np.zeros(50), np.full(50, 1e-12))
    report = scan_zeros(series)
    assert report.count == 0
    assert "identically_zero" in report.method_flags
    assert len(report.indeterminate) == 50


def test_empty_series_scans_to_nothing() -> None:
    report = scan_zeros(IntegralSeries(1.0, [], [], []))
    assert report.count == 0
    assert report.h_window is None


def test_delta_arg() -> None:
    theta = np.linspace(0.0, 2 * math.pi, 100)
    circle = np.exp(1j * theta)
    assert delta_arg(circle) == pytest.approx(2 * math.pi)
    assert delta_arg(circle[::-1]) == pytest.approx(-2 * math.pi)
    assert delta_arg([1.0]) == 0.0
    with pytest.raises(OnContourZeroError):
        delta_arg([1.0, 0.0, 1j])


@pytest.mark.parametrize("factor", [3.0, -2.0, 1e-6])
def test_delta_arg_is_invariant_under_real_scaling(factor: float) -> None:
    theta = np.linspace(0.0, 3 * math.pi, 200)
    values = (2.0 + np.cos(theta)) * np.exp(1j * theta)
    assert delta_arg(factor * values) == pytest.approx(delta_arg(values), rel=1e-12)


def test_contour_validation() -> None:
    with pytest.raises(ScenarioError):
        Contour(0.5, 0.1)
    with pytest.raises(ScenarioError):
        Contour(0.0, 1.0)
    with pytest.raises(ScenarioError):
        Contour(0.1, 1.0, alpha=0.0)
    with pytest.raises(ScenarioError):
        Contour(0.1, 1.0, samples_per_arc=1)


def test_constant_has_no_zeros_in_the_sector() -> None:
    bound = argument_principle_count(PsiExpansion.constant(2.0), Contour(0.01, 1.0))
    assert bound.bound == pytest.approx(0.0, abs=1e-12)
    assert set(bound.increments) == {"C_R", "C_plus", "C_r", "C_minus"}


def test_square_root_winds_on_the_arcs_only() -> None:
    bound = argument_principle_count(PsiExpansion.monomial(0.5), Contour(0.01, 1.0))
    assert bound.increments["C_R"] == pytest.approx(math.pi)
    assert bound.increments["C_r"] == pytest.approx(-math.pi)
    assert bound.increments["C_plus"] == pytest.approx(0.0, abs=1e-12)
    assert bound.increments["C_minus"] == pytest.approx(0.0, abs=1e-12)
    assert bound.bound == pytest.approx(0.0, abs=1e-12)
    assert bound.total == pytest.approx(0.0, abs=1e-12)


def test_linear_model_has_one_zero() -> None:
    bound = argument_principle_count(LINEAR, Contour(0.1, 1.0))
    assert bound.bound == pytest.approx(1.0, abs=1e-9)


def test_zero_on_the_contour() -> None:
    with pytest.raises(OnContourZeroError):
        argument_principle_count(LINEAR, Contour(0.5, 1.0))


def test_untrusted_models() -> None:
    fitted = PsiExpansion(LINEAR.terms, t_range=(1.0, 10.0))
    with pytest.raises(UntrustedBoundError):
        argument_principle_count(fitted, Contour(0.1, 1.0))
    poor = PsiExpansion(LINEAR.terms, residual=1e-2)
    with pytest.raises(UntrustedBoundError):
        argument_principle_count(poor, Contour(0.1, 1.0))

    contour = window_contour(fitted)
    assert 1.0 < contour.r1 < contour.R1 < 10.0
    assert argument_principle_count(fitted, contour).bound == pytest.approx(0.0, abs=1e-9)


def test_lambda_models_on_the_contour() -> None:
    model = LambdaModel(J1=PsiExpansion.constant(1.0), J2=PsiExpansion.constant(0.5))
    bound = argument_principle_count(model, Contour(0.1, 1.0), lam=0.1)
    assert bound.bound == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ScenarioError):
        argument_principle_count(model, Contour(0.1, 1.0))

    sampled = LambdaModel(J1=np.array([1.0]), J2=np.array([0.0]))
    with pytest.raises(UntrustedBoundError):
        argument_principle_count(sampled, Contour(0.1, 1.0), lam=0.1)


def test_uniformity_table() -> None:
    table = UniformityTable([UniformityRow(1.0, 1, 1.0), UniformityRow(0.5, 1, None)], [0.5])
    assert table.counts == [1, 1]
    assert table.uniform
    metadata, header, rows = table.export_table()
    assert header == ["lambda", "count", "bound", "flags"]
    assert rows[1] == (0.5, 1, "", "")
    assert metadata["fractions"] == "0.5"

    broken = UniformityTable([UniformityRow(1.0, 1, None), UniformityRow(0.5, None, None)], [])
    assert not broken.uniform
    assert not UniformityTable([], []).uniform


def test_the_area_integral_has_no_zeros(unit_system: DarbouxSystem, x_dy: Perturbation) -> None:
    series, report = zeros_with_bound(
        unit_system, x_dy, [0.9, 0.7, 0.5, 0.3, 0.1], with_bound=False
    )
    assert len(series) == 5
    assert np.all(series.values > 0)
    assert report.count == 0
    assert report.arg_bound is None


def test_uniformity_study_records_failing_rows(
    unit_system: DarbouxSystem, x_dy: Perturbation
) -> None:
    table = uniformity_study(
        unit_system, x_dy, [1.0, 0.5, 0.0], [0.8, 0.4, 0.1], with_bound=False, threads=2
    )
    assert [row.lam for row in table.rows] == [1.0, 0.5, 0.0]
    assert table.counts == [0, 0, None]
    assert not table.uniform
    failed = table.rows[2]
    assert failed.flags == {"failed"}
    assert failed.error is not None and failed.error.startswith("DomainError")


@pytest.mark.slow
def test_model_bound_for_the_area_integral(
    unit_system: DarbouxSystem, x_dy: Perturbation
) -> None:
    fractions = list(np.geomspace(0.9, 1e-3, 40))
    _, report = zeros_with_bound(unit_system, x_dy, fractions)
    assert report.count == 0
    assert "model" in report.method_flags or "bound_unavailable" in report.method_flags
    if report.arg_bound is not None:
        assert report.arg_bound >= -1e-6


@pytest.mark.slow
def test_a_constructed_sign_change_is_counted(
    unit_system: DarbouxSystem,
    x_dy: Perturbation,
    x_cubed_dy: Perturbation,
    crossing_eta: Perturbation,
) -> None:
    fractions = list(np.geomspace(0.95, 1e-3, 200))
    area, _ = zeros_with_bound(unit_system, x_dy, fractions, with_bound=False)
    moment, _ = zeros_with_bound(unit_system, x_cubed_dy, fractions, with_bound=False)
    series, report = zeros_with_bound(unit_system, crossing_eta, fractions, with_bound=False)

    np.testing.assert_allclose(
        series.values, moment.values - 17 / 12 * area.values, rtol=1e-8, atol=1e-12
    )
    assert series.values[0] < 0 < series.values[-1]
    assert report.count >= 1
    n = 4 / 27
    assert all(0 < zero.estimate < n for zero in report.zeros)


@pytest.mark.slow
def test_golden_zero_counts_do_not_depend_on_lambda() -> None:
    config = load_scenario("golden_scenario")
    settings = config.settings()
    table = uniformity_study(
        config.build_system(),
        config.build_perturbation(),
        config.study.uniformity_lambdas,
        config.grids.fractions(),
        settings["trace"],
        settings["quadrature"],
        settings["zeros"],
        with_bound=False,
        threads=4,
    )
    assert [row.lam for row in table.rows] == [0.1, 0.01, 0.001, 0.0001]
    assert all(row.error is None for row in table.rows)
    assert table.uniform, table.counts
