from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import Any, Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray

from ._parallel import ordered_map
from .asymptotics import (
    LambdaModel,
    PsiExpansion,
    candidate_exponents,
    fit_psi_expansion,
)
from .darboux_core import DarbouxSystem, Perturbation
from .exceptions import (
    NoisySeriesError,
    OnContourZeroError,
    ScenarioError,
    TriplePointError,
    UntrustedBoundError,
)
from .integrator import IntegralSeries, integral_at, integral_series, pullback_weight, relative_grid
from .logger import logger
from .oval_tracer import find_center
from .settings import (
    ContourSettings,
    FitSettings,
    QuadratureSettings,
    TraceSettings,
    ZeroSettings,
)
from .tracing import series_point_span, stage_span

DEFAULT_ZERO_SETTINGS = ZeroSettings()
DEFAULT_CONTOUR_SETTINGS = ContourSettings()

ZERO_TOLERANCE = 1e-13
"""Samples below this fraction of the largest |value| count as zeros on the path."""

Evaluator = Callable[[float], float]
ContourPieceName = Literal["C_R", "C_plus", "C_r", "C_minus"]


@dataclass(frozen=True)
class ZeroBracket:
    """A sign change of I(λ, ·) between two levels."""

    h_low: float
    h_high: float
    estimate: float
    """Linear interpolation of the root inside the bracket."""

    refined: bool
    """True if the bracket was bisected on fresh integral values."""

    @property
    def width(self) -> float:
        return self.h_high - self.h_low


@dataclass
class ZeroReport:
    """Zeros of I(λ, ·) found on one series, with the model bound when it was computed."""

    lam: float
    zeros: list[ZeroBracket] = field(default_factory=list)
    indeterminate: list[float] = field(default_factory=list)
    """Levels where |I| is inside the quadrature error band."""

    arg_bound: float | None = None
    method_flags: set[str] = field(default_factory=set)
    h_window: tuple[float, float] | None = None

    @property
    def count(self) -> int:
        return len(self.zeros)

    def export_table(self) -> tuple[dict[str, Any], list[str], list[tuple[float, ...]]]:
        metadata: dict[str, Any] = {
            "lambda": self.lam,
            "count": self.count,
            "flags": " ".join(sorted(self.method_flags)),
        }
        if self.arg_bound is not None:
            metadata["arg_bound"] = self.arg_bound
        if self.h_window is not None:
            metadata["h_window"] = f"{self.h_window[0]:.17g} {self.h_window[1]:.17g}"
        rows = [(z.estimate, z.h_low, z.h_high, z.width) for z in self.zeros]
        return metadata, ["h", "h_low", "h_high", "width"], rows


def _bisect(
    evaluator: Evaluator, low: float, high: float, f_low: float, f_high: float, width: float
) -> tuple[float, float, float, float]:
    while high - low > width:
        mid = 0.5 * (low + high)
        if mid <= low or mid >= high:
            break
        f_mid = evaluator(mid)
        if f_mid == 0:
            return mid, mid, 0.0, 0.0
        if (f_mid > 0) == (f_low > 0):
            low, f_low = mid, f_mid
        else:
            high, f_high = mid, f_mid
    return low, high, f_low, f_high


def scan_zeros(
    series: IntegralSeries,
    evaluator: Evaluator | None = None,
    settings: ZeroSettings | None = None,
) -> ZeroReport:
    """Bracket the sign changes of a series and refine them.

    Levels where |I| ≤ band·error are indeterminate: they are reported, never counted. Brackets
    are bisected with `evaluator` (a fresh I(λ, h)) down to `bracket_rel`·n(λ); without one they
    stay grid-wide.

    Raises:
        NoisySeriesError: if more than `max_indeterminate_fraction` of the grid is indeterminate
            (and not all of it).
    """
    settings = settings or DEFAULT_ZERO_SETTINGS
    report = ZeroReport(lam=series.lam)
    if len(series) == 0:
        return report
    h = np.asarray(series.h_grid)
    values = np.asarray(series.values)
    band = settings.error_band_factor * np.asarray(series.errors)
    determinate = np.abs(values) > band
    report.h_window = (float(h.min()), float(h.max()))
    report.method_flags.add("scan")

    with stage_span("scan_zeros", {"lambda": series.lam, "points": len(series)}) as span:
        report.indeterminate = [float(v) for v in h[~determinate]]
        if not determinate.any():
            report.method_flags.add("identically_zero")
            logger.info(
                f"Series at λ={series.lam} vanishes within its error band; no zeros counted"
            )
            span.span_data.result["count"] = 0
            return report
        fraction = 1.0 - determinate.mean()
        if fraction > settings.max_indeterminate_fraction:
            raise NoisySeriesError(
                f"{fraction:.1%} of the series at λ={series.lam} is inside the error band"
            )
        if report.indeterminate:
            report.method_flags.add("indeterminate")
            logger.warning(
                f"{len(report.indeterminate)} levels at λ={series.lam} are indeterminate"
            )

        width = settings.bracket_rel * (series.h_max or float(h.max()))
        indices = np.flatnonzero(determinate)
        for i, j in zip(indices[:-1], indices[1:]):
            if (values[i] > 0) == (values[j] > 0):
                continue
            # The grid decreases, so h[j] < h[i].
            low, high, f_low, f_high = float(h[j]), float(h[i]), float(values[j]), float(values[i])
            refined = evaluator is not None
            if evaluator is not None:
                low, high, f_low, f_high = _bisect(evaluator, low, high, f_low, f_high, width)
            if j - i > 1:
                report.method_flags.add("through_indeterminate")
            estimate = low if f_low == f_high else low - f_low * (high - low) / (f_high - f_low)
            report.zeros.append(ZeroBracket(low, high, estimate, refined))
        report.zeros.sort(key=lambda z: z.estimate)
        span.span_data.result["count"] = report.count
    return report


def delta_arg(values: ArrayLike) -> float:
    """Total change of argument along consecutive samples (principal-branch steps).

    Raises:
        OnContourZeroError: if a sample is (numerically) zero.
    """
    v = np.asarray(values, dtype=complex)
    if len(v) < 2:
        return 0.0
    magnitude = np.abs(v)
    if magnitude.min() <= ZERO_TOLERANCE * magnitude.max():
        raise OnContourZeroError(
            "The function vanishes on the path; perturb the contour radii"
        )
    return math.fsum(np.angle(v[1:] * np.conj(v[:-1])))


@dataclass(frozen=True)
class Contour:
    """The boundary of the slit sector {r1 ≤ |t| ≤ R1, |arg t| ≤ απ}."""

    r1: float
    R1: float
    alpha: float = 1.0
    samples_per_arc: int = 64

    def __post_init__(self) -> None:
        if not 0 < self.r1 < self.R1:
            raise ScenarioError(f"Contour radii must satisfy 0 < r1 < R1, got {self.r1}, {self.R1}")
        if self.alpha <= 0:
            raise ScenarioError(f"Sector angle multiplier must be positive, got {self.alpha}")
        if self.samples_per_arc < 2:
            raise ScenarioError("A contour piece needs at least two samples")

    @classmethod
    def from_settings(cls, settings: ContourSettings) -> Contour:
        return cls(settings.r1, settings.R1, settings.alpha, settings.samples_per_arc)

    def pieces(self) -> list[tuple[ContourPieceName, Callable[[NDArray[Any]], tuple[Any, Any]]]]:
        """Parametrizations s ∈ [0, 1] → (r, θ) of the four pieces, in positive orientation."""
        big_angle = self.alpha * math.pi
        log_r1, log_R1 = math.log(self.r1), math.log(self.R1)

        def outer(s: NDArray[Any]) -> tuple[Any, Any]:
            return np.full_like(s, self.R1), big_angle * (2 * s - 1)

        def upper(s: NDArray[Any]) -> tuple[Any, Any]:
            return np.exp(log_R1 + (log_r1 - log_R1) * s), np.full_like(s, big_angle)

        def inner(s: NDArray[Any]) -> tuple[Any, Any]:
            return np.full_like(s, self.r1), big_angle * (1 - 2 * s)

        def lower(s: NDArray[Any]) -> tuple[Any, Any]:
            return np.exp(log_r1 + (log_R1 - log_r1) * s), np.full_like(s, -big_angle)

        return [("C_R", outer), ("C_plus", upper), ("C_r", inner), ("C_minus", lower)]


@dataclass(frozen=True)
class ContourPiece:
    name: ContourPieceName
    r: NDArray[np.float64]
    theta: NDArray[np.float64]
    values: NDArray[np.complex128]
    increment: float


PolarFunction = Callable[[NDArray[np.float64], NDArray[np.float64]], NDArray[np.complex128]]


def _steps(values: NDArray[np.complex128]) -> NDArray[np.float64]:
    return np.abs(np.angle(values[1:] * np.conj(values[:-1])))


def sector_contour_path(
    f: PolarFunction,
    contour: Contour,
    settings: ContourSettings | None = None,
) -> list[ContourPiece]:
    """Sample `f(r, θ)` along the four contour pieces, bisecting parameter intervals until no two
    consecutive values differ in argument by `max_arg_step` or more.

    Raises:
        OnContourZeroError: if refinement does not converge (a zero on or near the path).
    """
    settings = settings or DEFAULT_CONTOUR_SETTINGS
    pieces: list[ContourPiece] = []
    for name, path in contour.pieces():
        s = np.linspace(0.0, 1.0, contour.samples_per_arc)
        r, theta = path(s)
        values = np.asarray(f(r, theta), dtype=complex)
        for _ in range(settings.max_refinements):
            coarse = np.flatnonzero(_steps(values) >= settings.max_arg_step)
            if len(coarse) == 0:
                break
            mids = 0.5 * (s[coarse] + s[coarse + 1])
            r_mid, theta_mid = path(mids)
            s = np.insert(s, coarse + 1, mids)
            values = np.insert(values, coarse + 1, np.asarray(f(r_mid, theta_mid), dtype=complex))
        else:
            if (_steps(values) >= settings.max_arg_step).any():
                raise OnContourZeroError(
                    f"Argument along {name} did not resolve after {settings.max_refinements} "
                    "refinements; perturb the contour radii"
                )
        r, theta = path(s)
        pieces.append(ContourPiece(name, r, theta, values, delta_arg(values)))
        logger.debug(f"Contour piece {name}: {len(s)} samples, Δarg = {pieces[-1].increment:.6g}")
    return pieces


@dataclass(frozen=True)
class ArgumentBound:
    bound: float
    """(1/2π)·Δarg over the closed contour."""

    increments: dict[str, float]
    contour: Contour

    @property
    def total(self) -> float:
        return math.fsum(self.increments.values())


def _polar_model(model: PsiExpansion | LambdaModel, lam: float | None) -> PolarFunction:
    if isinstance(model, PsiExpansion):
        return model.evaluate_polar
    if lam is None:
        raise ScenarioError("Evaluating a λ-model on the contour needs λ")
    log_lambda = math.log(lam)
    parts = [model.J1, model.J2]
    if not all(isinstance(p, PsiExpansion) for p in parts):
        raise UntrustedBoundError(
            "Sampled λ-model components cannot be evaluated off the real axis"
        )
    j1, j2 = parts[0], parts[1]
    assert isinstance(j1, PsiExpansion) and isinstance(j2, PsiExpansion)

    def f(r: NDArray[np.float64], theta: NDArray[np.float64]) -> NDArray[np.complex128]:
        values = j1.evaluate_polar(r, theta) + log_lambda * j2.evaluate_polar(r, theta)
        return model.scale * values

    return f


def _check_trust(model: PsiExpansion | LambdaModel, contour: Contour, fit: FitSettings) -> None:
    expansions = [model] if isinstance(model, PsiExpansion) else [model.J1, model.J2]
    for expansion in expansions:
        if not isinstance(expansion, PsiExpansion):
            continue
        if expansion.residual > fit.psi_residual:
            raise UntrustedBoundError(
                f"Model residual {expansion.residual:.3e} exceeds {fit.psi_residual:.1e}"
            )
        if expansion.t_range is not None:
            low, high = expansion.t_range
            if contour.r1 < low * (1 - 1e-9) or contour.R1 > high * (1 + 1e-9):
                raise UntrustedBoundError(
                    f"Contour radii [{contour.r1:.6g}, {contour.R1:.6g}] leave the fitted window "
                    f"[{low:.6g}, {high:.6g}]"
                )


def argument_principle_count(
    model: PsiExpansion | LambdaModel,
    contour: Contour,
    settings: ContourSettings | None = None,
    fit_settings: FitSettings | None = None,
    lam: float | None = None,
) -> ArgumentBound:
    """Bound the number of zeros of the model in the slit sector by its winding along the
    sector boundary.

    Raises:
        UntrustedBoundError: if the model was fitted poorly or the contour leaves its window.
        OnContourZeroError: if the model vanishes on the contour.
    """
    _check_trust(model, contour, fit_settings or FitSettings())
    with stage_span(
        "argument_principle", {"r1": contour.r1, "R1": contour.R1, "alpha": contour.alpha}
    ) as span:
        pieces = sector_contour_path(_polar_model(model, lam), contour, settings)
        increments = {piece.name: piece.increment for piece in pieces}
        bound = math.fsum(increments.values()) / (2 * math.pi)
        span.span_data.result.update({"bound": bound, **increments})
    return ArgumentBound(bound, increments, contour)


def window_contour(expansion: PsiExpansion, settings: ContourSettings | None = None) -> Contour:
    """A contour just inside the t-window the expansion was fitted on."""
    settings = settings or DEFAULT_CONTOUR_SETTINGS
    if expansion.t_range is None:
        return Contour.from_settings(settings)
    low, high = expansion.t_range
    return Contour(low * (1 + 1e-6), high * (1 - 1e-6), settings.alpha, settings.samples_per_arc)


@dataclass
class UniformityRow:
    lam: float
    count: int | None
    bound: float | None
    flags: set[str] = field(default_factory=set)
    error: str | None = None
    report: ZeroReport | None = None

    def csv_row(self) -> tuple[Any, ...]:
        count = "" if self.count is None else self.count
        bound = "" if self.bound is None else self.bound
        return (self.lam, count, bound, " ".join(sorted(self.flags)))


@dataclass
class UniformityTable:
    rows: list[UniformityRow]
    fractions: list[float]

    @property
    def counts(self) -> list[int | None]:
        return [row.count for row in self.rows]

    @property
    def uniform(self) -> bool:
        """True if every row succeeded with the same count."""
        counts = self.counts
        return bool(counts) and None not in counts and len(set(counts)) == 1

    def export_table(self) -> tuple[dict[str, Any], list[str], list[tuple[Any, ...]]]:
        metadata = {"fractions": " ".join(f"{v:.17g}" for v in self.fractions)}
        return metadata, ["lambda", "count", "bound", "flags"], [r.csv_row() for r in self.rows]


def zeros_with_bound(
    sys: DarbouxSystem,
    eta: Perturbation,
    fractions: Sequence[float],
    trace_settings: TraceSettings | None = None,
    quadrature: QuadratureSettings | None = None,
    zero_settings: ZeroSettings | None = None,
    fit_settings: FitSettings | None = None,
    contour_settings: ContourSettings | None = None,
    threads: int = 0,
    with_bound: bool = True,
) -> tuple[IntegralSeries, ZeroReport]:
    """Compute the series on the relative grid, scan it, and bound it with a fitted model.

    A failing model fit does not fail the scan; the report is flagged `bound_unavailable`.
    """
    nest = find_center(sys, trace_settings)
    grid = relative_grid(nest, fractions)
    series = integral_series(sys, eta, grid, trace_settings, quadrature, threads, nest)

    def evaluator(h: float) -> float:
        return integral_at(sys, eta, h, trace_settings, quadrature, nest)[0]

    report = scan_zeros(series, evaluator, zero_settings)
    if not with_bound or "identically_zero" in report.method_flags:
        return series, report

    fit_settings = fit_settings or FitSettings()
    try:
        q = pullback_weight(sys, eta)
        candidates = candidate_exponents(
            [f.exponent for f in sys.factors],
            sys.a,
            fit_settings.combination_depth,
            fit_settings.exponent_window,
        )
        expansion = fit_psi_expansion(series, candidates, sys.a, q, fit_settings)
        bound = argument_principle_count(
            expansion, window_contour(expansion, contour_settings), contour_settings, fit_settings
        )
    except TriplePointError as e:
        report.method_flags.add("bound_unavailable")
        logger.warning(f"No model bound at λ={sys.lam}: {e.message}")
        return series, report

    report.arg_bound = bound.bound
    report.method_flags.add("model")
    if bound.bound < report.count - 1e-6:
        report.method_flags.add("bound_below_scan")
        logger.warning(
            f"Model bound {bound.bound:.6g} is below the scan count {report.count} at λ={sys.lam}"
        )
    return series, report


def uniformity_study(
    sys: DarbouxSystem,
    eta: Perturbation,
    lambda_list: Sequence[float],
    fractions: Sequence[float],
    trace_settings: TraceSettings | None = None,
    quadrature: QuadratureSettings | None = None,
    zero_settings: ZeroSettings | None = None,
    fit_settings: FitSettings | None = None,
    contour_settings: ContourSettings | None = None,
    threads: int = 0,
    with_bound: bool = True,
) -> UniformityTable:
    """Zero counts of I(λ, ·) on a fixed relative grid h/n(λ) for every λ.

    Rows run concurrently when `threads > 0` and come back in λ order. A failing λ is recorded
    in its row and the study continues.
    """
    lambdas = [float(v) for v in lambda_list]
    if len(lambdas) > 2:
        ratios = np.array(lambdas[1:]) / np.array(lambdas[:-1])
        if not np.allclose(ratios, ratios[0], rtol=1e-6):
            logger.warning("The λ-list of the uniformity study is not geometric")

    def row(indexed: tuple[int, float]) -> UniformityRow:
        index, lam = indexed
        with series_point_span("uniformity", index, lam):
            try:
                _, report = zeros_with_bound(
                    sys.with_lambda(lam),
                    eta,
                    fractions,
                    trace_settings,
                    quadrature,
                    zero_settings,
                    fit_settings,
                    contour_settings,
                    threads=0,
                    with_bound=with_bound,
                )
            except TriplePointError as e:
                logger.warning(f"Uniformity row λ={lam} failed: {type(e).__name__}: {e.message}")
                return UniformityRow(
                    lam, None, None, {"failed"}, error=f"{type(e).__name__}: {e.message}"
                )
            flags = set(report.method_flags)
            if "identically_zero" in flags:
                flags.add("degenerate")
            return UniformityRow(lam, report.count, report.arg_bound, flags, report=report)

    with stage_span("uniformity_study", {"lambdas": lambdas}) as span:
        rows = ordered_map(row, list(enumerate(lambdas)), threads)
        table = UniformityTable(rows, list(fractions))
        span.span_data.result.update({"counts": table.counts, "uniform": table.uniform})
    logger.info(f"Uniformity counts: {table.counts}")
    return table
