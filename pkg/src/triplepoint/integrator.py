from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any

import numpy as np
from numpy.typing import NDArray
from scipy.optimize import brentq
from scipy.special import roots_legendre

from ._parallel import indexed_map
from .darboux_core import DarbouxSystem, Perturbation
from .exceptions import OracleFailureError, PrecisionLossError, RangeError
from .logger import logger
from .oval_tracer import NestRange, Oval, find_center, trace_oval
from .settings import QuadratureSettings, TraceSettings
from .tracing import series_point_span, stage_span

DEFAULT_QUADRATURE_SETTINGS = QuadratureSettings()

ROUNDOFF_FLOOR = 64 * float(np.finfo(float).eps)
"""Reported errors never fall below this fraction of ∮|η/M| ds, the rounding level of the sum."""


@lru_cache(maxsize=16)
def _gauss(order: int) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    nodes, weights = roots_legendre(order)
    return np.asarray(nodes), np.asarray(weights)


@dataclass(frozen=True, eq=False)
class IntegralSeries:
    """Values of I(λ, h) on a strictly decreasing grid of levels."""

    lam: float
    h_grid: NDArray[np.float64]
    values: NDArray[np.float64]
    errors: NDArray[np.float64]
    h_max: float | None = None
    """n(λ) of the nest the grid lives in, when known."""

    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name in ("h_grid", "values", "errors"):
            array = np.array(getattr(self, name), dtype=float, copy=True).reshape(-1)
            array.flags.writeable = False
            object.__setattr__(self, name, array)
        if not (len(self.h_grid) == len(self.values) == len(self.errors)):
            raise ValueError("Series grid, values and errors must have equal length")
        if len(self.h_grid) > 1 and not np.all(np.diff(self.h_grid) < 0):
            raise ValueError("Series levels must be strictly decreasing")

    def __len__(self) -> int:
        return len(self.h_grid)

    @property
    def normalized(self) -> NDArray[np.float64]:
        """h·I(λ, h), the leading term of the displacement per unit κ."""
        return self.h_grid * self.values

    def rescaled(self, a: float, q: float) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """The series as J(λ, t) = λ^{-q} I(λ, λᵃ/t) on the increasing grid t = λᵃ/h."""
        t = self.lam**a / self.h_grid
        return t, self.values * self.lam ** (-q)

    def export_table(self) -> tuple[dict[str, Any], list[str], list[tuple[float, ...]]]:
        metadata: dict[str, Any] = {"lambda": self.lam}
        if self.h_max is not None:
            metadata["h_max"] = self.h_max
        metadata.update(self.metadata)
        rows = [
            (float(h), float(v), float(e))
            for h, v, e in zip(self.h_grid, self.values, self.errors)
        ]
        return metadata, ["h", "I", "err"], rows


def _line_integrand(
    eta: Perturbation, m: Any, oval: Oval, s: NDArray[np.float64]
) -> NDArray[np.float64]:
    xy = oval.spline(s)
    dxy = oval.spline(s, 1)
    x, y = xy[..., 0], xy[..., 1]
    r, q = eta.R(x, y), eta.S(x, y)
    return (r * dxy[..., 0] + q * dxy[..., 1]) / m(x, y)


def pseudo_abelian(
    sys: DarbouxSystem,
    eta: Perturbation,
    oval: Oval,
    settings: QuadratureSettings | None = None,
) -> tuple[float, float]:
    """The pseudo-Abelian integral ∮ η/M_λ along a traced oval, with its error estimate.

    The oval is re-parametrized by a periodic arc-length cubic; every spline segment is integrated
    with two Gauss–Legendre rules and bisected while they disagree. The error is the sum of the
    final rule differences plus a rounding floor, so an integral that vanishes identically is
    never reported as significant.

    Raises:
        PrecisionLossError: if the tolerance is not met after `max_depth` bisections.
    """
    settings = settings or DEFAULT_QUADRATURE_SETTINGS
    m = sys.integrating_factor
    hi_nodes, hi_weights = _gauss(settings.high_order)
    lo_nodes, lo_weights = _gauss(settings.low_order)

    knots = oval.arc_parameter
    length = float(knots[-1])
    a, b = knots[:-1], knots[1:]

    def rules(a: NDArray[np.float64], b: NDArray[np.float64]) -> tuple[NDArray[Any], ...]:
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        hi_values = _line_integrand(eta, m, oval, mid[:, None] + half[:, None] * hi_nodes)
        lo_values = _line_integrand(eta, m, oval, mid[:, None] + half[:, None] * lo_nodes)
        return (
            half * (hi_values @ hi_weights),
            half * (lo_values @ lo_weights),
            half * (np.abs(hi_values) @ hi_weights),
        )

    with stage_span("pseudo_abelian", {"lambda": sys.lam, "h": oval.h}) as span:
        high, low, magnitude = rules(a, b)
        scale = float(magnitude.sum())
        accepted = 0.0
        accepted_terms: list[float] = []
        accepted_error = 0.0
        depth = 0
        while True:
            estimate = accepted + float(high.sum())
            tolerance = max(settings.rtol * abs(estimate), settings.atol_rel * scale)
            local = np.abs(high - low)
            budget = tolerance * (b - a) / length
            done = local <= budget
            accepted_terms.extend(high[done].tolist())
            accepted = math.fsum(accepted_terms)
            accepted_error += float(local[done].sum())
            if done.all():
                break
            depth += 1
            if depth > settings.max_depth:
                achieved = accepted_error + float(local[~done].sum())
                raise PrecisionLossError(
                    f"Line quadrature reached {achieved:.3e} against a tolerance of "
                    f"{tolerance:.3e} at h={oval.h}",
                    achieved,
                )
            a, b = a[~done], b[~done]
            mid = 0.5 * (a + b)
            a, b = np.concatenate([a, mid]), np.concatenate([mid, b])
            high, low, _ = rules(a, b)

        value = math.fsum(accepted_terms)
        accepted_error += ROUNDOFF_FLOOR * scale
        span.span_data.result.update({"value": value, "error": accepted_error, "depth": depth})
    return value, accepted_error


def _curl_integrand(eta: Perturbation, m: Any) -> Any:
    (mx, my) = m.grad
    (rx, ry) = eta.R.grad
    (sx, sy) = eta.S.grad

    def curl(x: NDArray[np.float64], y: NDArray[np.float64]) -> NDArray[np.float64]:
        mv = m(x, y)
        r, s = eta.R(x, y), eta.S(x, y)
        numerator = (sx(x, y) * mv - s * mx(x, y)) - (ry(x, y) * mv - r * my(x, y))
        return numerator / (mv * mv)

    return curl


class _Region:
    """The superlevel region {H ≥ h} inside the nest, seen through vertical chords."""

    def __init__(self, sys: DarbouxSystem, h: float, nest: NestRange):
        self.sys = sys
        self.log_level = math.log(h)
        self.nest = nest

    def excess(self, x: float, y: float) -> float:
        value = float(self.sys.log_h_array(x, y))
        return max(value, self.log_level - 1e3) - self.log_level

    def inside(self, x: float, y: float) -> bool:
        return self.excess(x, y) > 0.0

    def radius(self, direction: float) -> float:
        cx, cy = self.nest.center
        dx, dy = math.cos(direction), math.sin(direction)
        r_out = self.nest.scale
        while self.inside(cx + r_out * dx, cy + r_out * dy):
            r_out *= 2
        return brentq(lambda r: self.excess(cx + r * dx, cy + r * dy), 0.0, r_out, xtol=1e-15)

    def bounding_box(self) -> tuple[float, float, float, float]:
        cx, cy = self.nest.center
        xs, ys = [cx], [cy]
        for k in range(32):
            theta = 2 * math.pi * k / 32
            r = self.radius(theta)
            xs.append(cx + r * math.cos(theta))
            ys.append(cy + r * math.sin(theta))
        pad = 0.25 * max(max(xs) - min(xs), max(ys) - min(ys))
        return min(xs) - pad, max(xs) + pad, min(ys) - pad, max(ys) + pad

    def root(self, x: float, y_in: float, y_out: float) -> float:
        lo, hi = min(y_in, y_out), max(y_in, y_out)
        return brentq(lambda y: self.excess(x, y), lo, hi, xtol=1e-15)

    def edge_crossings(self, y: float, x0: float, x1: float, probes: int = 17) -> list[float]:
        xs = np.linspace(x0, x1, probes)
        flags = [self.inside(float(x), y) for x in xs]
        crossings = []
        for k in range(probes - 1):
            if flags[k] != flags[k + 1]:
                lo, hi = float(xs[k]), float(xs[k + 1])
                crossings.append(brentq(lambda x: self.excess(x, y), lo, hi, xtol=1e-15))
        return crossings

    def chord(self, x: float, y0: float, y1: float) -> tuple[float, float] | None:
        """The part of the vertical segment {x} × [y0, y1] inside the region (convexity assumed)."""
        in0, in1 = self.inside(x, y0), self.inside(x, y1)
        if in0 and in1:
            return y0, y1
        if in0:
            return y0, self.root(x, y0, y1)
        if in1:
            return self.root(x, y1, y0), y1
        probes = np.linspace(y0, y1, 17)[1:-1]
        values = [self.excess(x, float(y)) for y in probes]
        best = int(np.argmax(values))
        if values[best] <= 0.0:
            return None
        y_mid = float(probes[best])
        return self.root(x, y_mid, y0), self.root(x, y_mid, y1)


def stokes_oracle(
    sys: DarbouxSystem,
    eta: Perturbation,
    h: float,
    settings: QuadratureSettings | None = None,
    nest: NestRange | None = None,
) -> float:
    """Independent value of I(λ, h) by the Stokes theorem: the integral of ∂x(S/M) − ∂y(R/M) over
    the region {H ≥ h}, by recursive quadtree subdivision.

    Cells crossed by the boundary are split in x where the level curve crosses their horizontal
    edges, so the clipped vertical chords are smooth on every piece.

    Raises:
        RangeError: if h is outside (0, n(λ)).
        OracleFailureError: if the cell rules do not agree within `oracle_max_depth` levels.
    """
    settings = settings or DEFAULT_QUADRATURE_SETTINGS
    nest = nest or find_center(sys)
    if not 0.0 < h < nest.h_max:
        raise RangeError(f"Level h={h} is outside the nest range (0, {nest.h_max})")

    curl = _curl_integrand(eta, sys.integrating_factor)
    region = _Region(sys, h, nest)
    y_nodes, y_weights = _gauss(settings.oracle_order)
    x_hi = _gauss(settings.oracle_order)
    x_lo = _gauss(max(settings.oracle_order // 2, 2))

    def column(x: float, y0: float, y1: float) -> tuple[float, float]:
        chord = region.chord(x, y0, y1)
        if chord is None:
            return 0.0, 0.0
        lo, hi = chord
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        values = curl(np.full(len(y_nodes), x), mid + half * y_nodes)
        return half * float(values @ y_weights), half * float(np.abs(values) @ y_weights)

    def cell(x0: float, x1: float, y0: float, y1: float) -> tuple[float, float, float]:
        """(high-order value, low-order value, magnitude) of the cell ∩ region integral."""
        breaks = sorted(
            {x0, x1, *region.edge_crossings(y0, x0, x1), *region.edge_crossings(y1, x0, x1)}
        )
        totals = [0.0, 0.0, 0.0]
        for xa, xb in zip(breaks[:-1], breaks[1:]):
            if xb - xa <= 0.0:
                continue
            mid, half = 0.5 * (xa + xb), 0.5 * (xb - xa)
            for k, (nodes, weights) in enumerate((x_hi, x_lo)):
                for node, weight in zip(nodes, weights):
                    value, magnitude = column(mid + half * node, y0, y1)
                    totals[k] += half * weight * value
                    if k == 0:
                        totals[2] += half * weight * magnitude
        return totals[0], totals[1], totals[2]

    with stage_span("stokes_oracle", {"lambda": sys.lam, "h": h}) as span:
        bx0, bx1, by0, by1 = region.bounding_box()
        base = 8
        xs = np.linspace(bx0, bx1, base + 1)
        ys = np.linspace(by0, by1, base + 1)
        pending = [
            (float(xs[i]), float(xs[i + 1]), float(ys[j]), float(ys[j + 1]), 0)
            for i in range(base)
            for j in range(base)
        ]
        box_area = (bx1 - bx0) * (by1 - by0)
        evaluated = [cell(*c[:4]) for c in pending]
        magnitude = sum(e[2] for e in evaluated)
        tolerance = settings.oracle_rtol * max(magnitude, 1e-300)

        accepted: list[float] = []
        error = 0.0
        cells = 0
        while pending:
            next_pending = []
            next_evaluated = []
            for (x0, x1, y0, y1, depth), (high, low, _) in zip(pending, evaluated):
                cells += 1
                local = abs(high - low)
                budget = tolerance * (x1 - x0) * (y1 - y0) / box_area
                if local <= budget:
                    accepted.append(high)
                    error += local
                    continue
                if depth >= settings.oracle_max_depth:
                    accepted.append(high)
                    error += local
                    continue
                xm, ym = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
                for child in (
                    (x0, xm, y0, ym),
                    (xm, x1, y0, ym),
                    (x0, xm, ym, y1),
                    (xm, x1, ym, y1),
                ):
                    next_pending.append((*child, depth + 1))
                    next_evaluated.append(cell(*child))
            pending, evaluated = next_pending, next_evaluated

        value = math.fsum(accepted)
        if error > 10 * tolerance:
            raise OracleFailureError(
                f"Stokes quadrature reached {error:.3e} against {tolerance:.3e} at h={h}"
            )
        span.span_data.result.update({"value": value, "error": error, "cells": cells})
    logger.debug(f"Stokes oracle at h={h}: {value} ({cells} cells, error {error:.2e})")
    return value


def integral_at(
    sys: DarbouxSystem,
    eta: Perturbation,
    h: float,
    trace_settings: TraceSettings | None = None,
    settings: QuadratureSettings | None = None,
    nest: NestRange | None = None,
) -> tuple[float, float]:
    """Trace γ(λ, h) afresh and integrate η/M_λ along it."""
    oval = trace_oval(sys, h, trace_settings, nest)
    return pseudo_abelian(sys, eta, oval, settings)


def integral_series(
    sys: DarbouxSystem,
    eta: Perturbation,
    h_grid: Sequence[float],
    trace_settings: TraceSettings | None = None,
    settings: QuadratureSettings | None = None,
    threads: int = 0,
    nest: NestRange | None = None,
) -> IntegralSeries:
    """I(λ, h) on every level of a strictly decreasing grid, each on a freshly traced oval.

    Points are computed concurrently when `threads > 0`; the result does not depend on it.

    Raises:
        SeriesPointError: wrapping the first failing point's error, with its grid index.
    """
    grid = [float(h) for h in h_grid]
    if not grid:
        return IntegralSeries(sys.lam, np.empty(0), np.empty(0), np.empty(0))
    if any(b >= a for a, b in zip(grid, grid[1:])):
        raise ValueError("Series levels must be strictly decreasing")
    nest = nest or find_center(sys, trace_settings)

    def point(indexed: tuple[int, float]) -> tuple[float, float]:
        index, h = indexed
        with series_point_span("integral_series", index, h):
            return integral_at(sys, eta, h, trace_settings, settings, nest)

    with stage_span("integral_series", {"lambda": sys.lam, "points": len(grid)}):
        results = indexed_map(point, list(enumerate(grid)), threads)
    return IntegralSeries(
        lam=sys.lam,
        h_grid=np.array(grid),
        values=np.array([r[0] for r in results]),
        errors=np.array([r[1] for r in results]),
        h_max=nest.h_max,
    )


def relative_grid(nest: NestRange, fractions: Sequence[float]) -> list[float]:
    """Levels at fixed fractions of n(λ), sorted decreasing."""
    return sorted((f * nest.h_max for f in fractions), reverse=True)


def homogeneous_degree(sys: DarbouxSystem) -> int:
    """Degree of the integrating factor at the triple point: the number of factors through it."""
    return len(sys.triple_point_indices)


def pullback_weight(sys: DarbouxSystem, eta: Perturbation) -> float:
    """Lowest homogeneity weight q of η/M_λ in the scaling (x, y, λ) → (cx, cy, cλ).

    A monomial x^i y^j dx (or dy) scales with weight i + j + 1; M_λ with the number of factors
    through the triple point. A quasi-homogeneous η makes J = λ^{-q} I independent of λ.
    """
    degrees = [i + j + 1 for i, j, _ in eta.R.terms] + [i + j + 1 for i, j, _ in eta.S.terms]
    if not degrees:
        return 0.0
    return float(min(degrees) - homogeneous_degree(sys))
