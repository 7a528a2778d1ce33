from __future__ import annotations

import math
from collections import defaultdict
from collections.abc import Sequence
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq
from scipy.spatial import ConvexHull, cKDTree

from . import _debug
from ._parallel import indexed_map
from .darboux_core import DarbouxSystem, Point, eval_H
from .exceptions import (
    DomainError,
    NoCenterError,
    NonClosureError,
    NotACenterError,
    RangeError,
)
from .logger import logger
from .settings import TraceSettings
from .tracing import stage_span

DEFAULT_TRACE_SETTINGS = TraceSettings()


@dataclass(frozen=True)
class NestRange:
    """The center of the nest and the range (0, n(λ)) of levels filled by its ovals."""

    center: Point
    h_max: float
    """n(λ) = H_λ(center)."""

    lam: float
    scale: float
    """Longest side of the saddle triangle."""

    def relative(self, fraction: float) -> float:
        """The level `fraction`·n(λ)."""
        return fraction * self.h_max


@dataclass(frozen=True, eq=False)
class Oval:
    """An ordered closed sample of the oval γ(λ, h), counterclockwise.

    The last point closes the curve; it coincides with the first up to `closure_defect`.
    """

    points: NDArray[np.float64]
    h: float
    lam: float
    center: Point
    closure_defect: float = 0.0
    level_defect: float = 0.0
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        points = np.array(self.points, dtype=float, copy=True)
        if points.ndim != 2 or points.shape[1] != 2 or len(points) < 4:
            raise ValueError("An oval needs at least four (x, y) points")
        points.flags.writeable = False
        object.__setattr__(self, "points", points)

    def __len__(self) -> int:
        return len(self.points)

    @cached_property
    def segment_lengths(self) -> NDArray[np.float64]:
        return np.hypot(*np.diff(self.points, axis=0).T)

    @property
    def length(self) -> float:
        return float(self.segment_lengths.sum())

    @property
    def area(self) -> float:
        """Signed enclosed area (shoelace); positive for counterclockwise ovals."""
        x, y = self.points[:, 0], self.points[:, 1]
        return 0.5 * float(np.dot(x[:-1], y[1:]) - np.dot(x[1:], y[:-1]))

    @cached_property
    def diameter(self) -> float:
        # Largest width over 1440 directions; relative error below 3e-6.
        hull = self.points[ConvexHull(self.points).vertices]
        theta = np.linspace(0.0, np.pi, 1440, endpoint=False)
        projections = hull @ np.vstack([np.cos(theta), np.sin(theta)])
        return float((projections.max(axis=0) - projections.min(axis=0)).max())

    def winding_number(self, p: Point | None = None) -> int:
        """Number of counterclockwise turns around `p` (the center by default)."""
        px, py = p if p is not None else self.center
        rel = self.points - np.array([px, py])
        angles = np.arctan2(rel[:, 1], rel[:, 0])
        increments = np.angle(np.exp(1j * np.diff(angles)))
        return int(round(math.fsum(increments) / (2 * math.pi)))

    def reversed(self) -> Oval:
        return Oval(
            points=self.points[::-1],
            h=self.h,
            lam=self.lam,
            center=self.center,
            closure_defect=self.closure_defect,
            level_defect=self.level_defect,
            metadata=dict(self.metadata),
        )

    def closed_points(self) -> NDArray[np.float64]:
        """The sample with the last point snapped onto the first."""
        closed = np.array(self.points)
        closed[-1] = closed[0]
        return closed

    @cached_property
    def arc_parameter(self) -> NDArray[np.float64]:
        closed = self.closed_points()
        return np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(closed, axis=0).T))])

    @cached_property
    def spline(self) -> CubicSpline:
        """Periodic cubic re-parametrization of the sample by arc length."""
        return CubicSpline(self.arc_parameter, self.closed_points(), bc_type="periodic")

    def sample(self, count: int) -> NDArray[np.float64]:
        """`count` points equally spaced in arc length along the spline."""
        s = np.linspace(0.0, self.arc_parameter[-1], count, endpoint=False)
        return np.asarray(self.spline(s))

    def distance_to(self, points: ArrayLike) -> NDArray[np.float64]:
        """Distance from each query point to the oval (resolved on a dense spline sampling)."""
        dense = self.sample(max(20 * len(self.points), 20_000))
        distances, _ = cKDTree(dense).query(np.atleast_2d(np.asarray(points, dtype=float)))
        return np.asarray(distances)

    def self_intersections(self) -> list[tuple[int, int]]:
        """Index pairs of non-adjacent polyline segments that cross."""
        closed = self.closed_points()
        starts, ends = closed[:-1], closed[1:]
        n = len(starts)
        cell = max(float(self.segment_lengths.max()), 1e-300) * 2.0
        buckets: dict[tuple[int, int], list[int]] = defaultdict(list)
        lo = np.floor(np.minimum(starts, ends) / cell).astype(int)
        hi = np.floor(np.maximum(starts, ends) / cell).astype(int)
        for k in range(n):
            for cx in range(lo[k, 0], hi[k, 0] + 1):
                for cy in range(lo[k, 1], hi[k, 1] + 1):
                    buckets[(cx, cy)].append(k)

        found: set[tuple[int, int]] = set()
        for members in buckets.values():
            for a_index, i in enumerate(members):
                for j in members[a_index + 1 :]:
                    if abs(i - j) <= 1 or abs(i - j) == n - 1:
                        continue
                    pair = (min(i, j), max(i, j))
                    if pair in found:
                        continue
                    if _segments_cross(starts[i], ends[i], starts[j], ends[j]):
                        found.add(pair)
        return sorted(found)

    def export_table(self) -> tuple[dict[str, float], list[str], list[tuple[float, ...]]]:
        """Metadata, header and rows of the `x,y` CSV export."""
        metadata = {"lambda": self.lam, "h": self.h, "closure_defect": self.closure_defect}
        rows = [(float(x), float(y)) for x, y in self.points]
        return metadata, ["x", "y"], rows


def _segments_cross(p1: NDArray[Any], p2: NDArray[Any], q1: NDArray[Any], q2: NDArray[Any]) -> bool:
    def orient(a: NDArray[Any], b: NDArray[Any], c: NDArray[Any]) -> float:
        return float((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    return d1 * d2 < 0 and d3 * d4 < 0


def hausdorff_distance(a: Oval, b: Oval | NDArray[np.float64]) -> float:
    """Symmetric Hausdorff distance between an oval and another oval or a dense point set."""
    other = b.sample(max(20 * len(b.points), 20_000)) if isinstance(b, Oval) else np.asarray(b)
    forward = float(a.distance_to(other).max())
    backward = float(cKDTree(other).query(a.sample(max(20 * len(a.points), 20_000)))[0].max())
    return max(forward, backward)


def _require_positive_lambda(sys: DarbouxSystem) -> None:
    if sys.lam <= 0:
        raise DomainError(f"The nest exists only for λ > 0, got λ={sys.lam}")


def find_center(sys: DarbouxSystem, settings: TraceSettings | None = None) -> NestRange:
    """Locate the center p_c^λ of the nest by damped Newton iteration on ∇log H, starting at the
    centroid of the saddle triangle.

    Raises:
        NoCenterError: if Newton does not converge within `center_max_iter` steps.
        NotACenterError: if the critical point found is not a nondegenerate maximum.
    """
    _require_positive_lambda(sys)
    settings = settings or DEFAULT_TRACE_SETTINGS
    scale = sys.scale
    x, y = sys.reference_point

    with stage_span("find_center", {"lambda": sys.lam}) as span:
        converged = False
        for iteration in range(settings.center_max_iter):
            try:
                gx, gy = sys.log_h_grad(x, y)
                hxx, hxy, hyy = sys.log_h_hessian(x, y)
            except DomainError as e:
                raise NoCenterError(f"Newton left the nest at ({x}, {y}): {e.message}") from e
            if math.hypot(gx, gy) * scale < settings.center_tol:
                converged = True
                break
            try:
                dx, dy = np.linalg.solve(np.array([[hxx, hxy], [hxy, hyy]]), [-gx, -gy])
            except np.linalg.LinAlgError as e:
                raise NoCenterError(f"Singular Hessian of log H at ({x}, {y})") from e
            x, y = _damped_step(sys, (x, y), (float(dx), float(dy)))
            if _debug.LOG_STEPS:
                gradient = math.hypot(gx, gy)
                logger.debug(f"Center Newton step {iteration}: ({x}, {y}), |g|={gradient}")
        if not converged:
            raise NoCenterError(
                f"Center search did not converge in {settings.center_max_iter} Newton steps"
            )

        hxx, hxy, hyy = sys.log_h_hessian(x, y)
        if not (hxx < 0 and hxx * hyy - hxy * hxy > 0):
            raise NotACenterError(f"Critical point ({x}, {y}) is not a nondegenerate maximum of H")

        h_max = eval_H(sys, (x, y))
        radius = 1e-3 * sys.lam
        for k in range(16):
            theta = 2 * math.pi * k / 16
            probe = (x + radius * math.cos(theta), y + radius * math.sin(theta))
            try:
                if eval_H(sys, probe) >= h_max:
                    raise NotACenterError(f"H does not attain a strict maximum at ({x}, {y})")
            except DomainError as e:
                raise NotACenterError(f"Center ({x}, {y}) lies too close to a factor") from e

        span.span_data.result.update({"center": [x, y], "h_max": h_max})
    logger.debug(f"Nest center at λ={sys.lam}: ({x}, {y}), n(λ)={h_max}")
    return NestRange(center=(x, y), h_max=h_max, lam=sys.lam, scale=scale)


def _damped_step(sys: DarbouxSystem, p: Point, d: Point) -> Point:
    # log H is concave near the center; halve the step until it stays in the nest and climbs.
    current = sys.log_h(*p)
    t = 1.0
    while t > 1e-10:
        candidate = (p[0] + t * d[0], p[1] + t * d[1])
        try:
            if sys.log_h(*candidate) >= current - 1e-15 * abs(current):
                return candidate
        except DomainError:
            pass
        t *= 0.5
    return p[0] + t * d[0], p[1] + t * d[1]


class _LevelCurve:
    """Continuation state for one level {log H = log h}."""

    def __init__(self, sys: DarbouxSystem, h: float, nest: NestRange, settings: TraceSettings):
        self.sys = sys
        self.target = math.log(h)
        self.nest = nest
        self.settings = settings
        self.vertices = sys.nest_vertices

    def residual(self, p: Point) -> float:
        return self.sys.log_h(*p) - self.target

    def tangent(self, p: Point) -> tuple[Point, float]:
        """Unit counterclockwise tangent and the curvature of the level curve through p."""
        gx, gy = self.sys.log_h_grad(*p)
        norm = math.hypot(gx, gy)
        hxx, hxy, hyy = self.sys.log_h_hessian(*p)
        curvature = abs(gy * gy * hxx - 2 * gx * gy * hxy + gx * gx * hyy) / norm**3
        return (gy / norm, -gx / norm), curvature

    def correct(self, p: Point) -> Point | None:
        x, y = p
        for _ in range(self.settings.corrector_max_iter):
            try:
                f = self.residual((x, y))
                if abs(f) < self.settings.corrector_tol:
                    return x, y
                gx, gy = self.sys.log_h_grad(x, y)
            except DomainError:
                return None
            g2 = gx * gx + gy * gy
            x, y = x - f * gx / g2, y - f * gy / g2
        try:
            if abs(self.residual((x, y))) < self.settings.corrector_tol:
                return x, y
        except DomainError:
            pass
        return None

    def step_bound(self, p: Point, curvature: float) -> float:
        scale = self.nest.scale
        bound = self.settings.step_fraction * scale
        if curvature > 0:
            bound = min(bound, self.settings.max_turn / curvature)
        nearest = min(math.dist(p, v) for v in self.vertices)
        return min(bound, self.settings.saddle_fraction * nearest)

    def angle_increment(self, p: Point, q: Point) -> float:
        cx, cy = self.nest.center
        a = complex(p[0] - cx, p[1] - cy)
        b = complex(q[0] - cx, q[1] - cy)
        return math.atan2((b * a.conjugate()).imag, (b * a.conjugate()).real)

    def advance(self, p: Point, s: float, t: Point) -> Point | None:
        return self.correct((p[0] + s * t[0], p[1] + s * t[1]))


def start_direction(sys: DarbouxSystem, nest: NestRange) -> Point:
    """Unit direction of the ray from the center through the centroid of the saddle triangle
    (+x when the two coincide). Ovals start, and Poincaré sections lie, on this ray.
    """
    cx, cy = nest.center
    rx, ry = sys.reference_point
    dx, dy = rx - cx, ry - cy
    norm = math.hypot(dx, dy)
    if norm < 1e-9 * nest.scale:
        return 1.0, 0.0
    return dx / norm, dy / norm


def level_on_ray(sys: DarbouxSystem, nest: NestRange, direction: Point, h: float) -> float:
    """Distance s from the center along `direction` at which H = h.

    Raises:
        RangeError: if the ray never leaves the nest, or h is too close to the polycycle to be
            separated from the nest edge.
    """
    cx, cy = nest.center
    dx, dy = direction

    def inside(s: float) -> bool:
        return min(sys.oriented_values(cx + s * dx, cy + s * dy)) > 0.0

    # Bracket the nest edge along the ray, then pin it down to rounding.
    s_in, s_out = 0.0, nest.scale * 1e-3
    while inside(s_out):
        s_in, s_out = s_out, 2 * s_out
        if s_out > 1e6 * nest.scale:
            raise RangeError("The ray from the center never leaves the nest")
    for _ in range(200):
        mid = 0.5 * (s_in + s_out)
        if mid in (s_in, s_out):
            break
        if inside(mid):
            s_in = mid
        else:
            s_out = mid

    target = math.log(h)

    def f(s: float) -> float:
        return sys.log_h(cx + s * dx, cy + s * dy) - target

    if f(s_in) >= 0:
        raise RangeError("Level too close to the polycycle to locate on the start ray")
    return float(
        brentq(f, 0.0, s_in, xtol=1e-16 * nest.scale, rtol=4 * np.finfo(float).eps, maxiter=500)
    )


def _start_point(curve: _LevelCurve) -> Point:
    cx, cy = curve.nest.center
    dx, dy = start_direction(curve.sys, curve.nest)
    s = level_on_ray(curve.sys, curve.nest, (dx, dy), math.exp(curve.target))
    start = curve.correct((cx + s * dx, cy + s * dy))
    return start if start is not None else (cx + s * dx, cy + s * dy)


def trace_oval(
    sys: DarbouxSystem,
    h: float,
    settings: TraceSettings | None = None,
    nest: NestRange | None = None,
) -> Oval:
    """Trace the oval γ(λ, h) by tangent-predictor / Newton-corrector continuation.

    The trace starts where the ray from the center through the centroid of the saddle triangle
    meets the level, runs counterclockwise with an arc step bounded by the curvature and by the
    distance to the saddles, and closes exactly when the angle about the center reaches 2π.

    Raises:
        RangeError: if h is outside (0, n(λ)).
        NonClosureError: if the curve does not close within `max_steps` steps, or the closed
            sample violates the oval invariants.
    """
    settings = settings or DEFAULT_TRACE_SETTINGS
    nest = nest or find_center(sys, settings)
    if not 0.0 < h < nest.h_max:
        raise RangeError(f"Level h={h} is outside the nest range (0, {nest.h_max})")

    with stage_span("trace_oval", {"lambda": sys.lam, "h": h}) as span:
        curve = _LevelCurve(sys, h, nest, settings)
        start = _start_point(curve)
        points: list[Point] = [start]
        p = start
        total_angle = 0.0
        min_step = settings.min_step_fraction * nest.scale
        closed = False

        for step in range(settings.max_steps):
            t, curvature = curve.tangent(p)
            s = curve.step_bound(p, curvature)
            q = curve.advance(p, s, t)
            while q is None or curve.angle_increment(p, q) <= 0.0 or math.dist(p, q) > 2 * s:
                s *= 0.5
                if s < min_step:
                    raise NonClosureError(f"Continuation stalled at {p} on level h={h}")
                q = curve.advance(p, s, t)
            increment = curve.angle_increment(p, q)
            if total_angle + increment >= 2 * math.pi:
                q = _close(curve, p, t, s, total_angle)
                points.append(q)
                closed = True
                break
            total_angle += increment
            points.append(q)
            p = q
            if _debug.LOG_STEPS:
                logger.debug(f"Trace step {step}: p={p}, ds={s}, angle={total_angle}")

        if not closed:
            raise NonClosureError(
                f"Oval at h={h} did not close within {settings.max_steps} steps"
            )

        array = np.array(points)
        closure_defect = math.dist(points[0], points[-1])
        level_defect = max(abs(math.expm1(curve.residual(pt))) for pt in points)
        oval = Oval(
            points=array,
            h=h,
            lam=sys.lam,
            center=nest.center,
            closure_defect=closure_defect,
            level_defect=level_defect,
        )
        validate_oval(oval)
        span.span_data.result.update(
            {"points": len(oval), "closure_defect": closure_defect, "level_defect": level_defect}
        )
    return oval


def _close(curve: _LevelCurve, p: Point, t: Point, s: float, total_angle: float) -> Point:
    def overshoot(step: float) -> float:
        q = curve.advance(p, step, t)
        if q is None:
            raise NonClosureError(f"Corrector failed while closing the oval near {p}")
        return total_angle + curve.angle_increment(p, q) - 2 * math.pi

    if overshoot(s) == 0.0:
        closing = s
    else:
        closing = brentq(overshoot, 0.0, s, xtol=1e-16 * curve.nest.scale, maxiter=200)
    q = curve.advance(p, closing, t)
    assert q is not None
    return q


def validate_oval(oval: Oval) -> None:
    """Check the closure, level, winding and simplicity invariants of a traced oval.

    Raises:
        NonClosureError: naming the first violated invariant.
    """
    if oval.closure_defect >= 1e-8 * oval.length:
        raise NonClosureError(
            f"Closure defect {oval.closure_defect} exceeds 1e-8 of the length {oval.length}"
        )
    if oval.level_defect >= 1e-8:
        raise NonClosureError(f"Level defect {oval.level_defect} exceeds 1e-8")
    if oval.winding_number() != 1:
        raise NonClosureError(f"Oval winds {oval.winding_number()} times around the center")
    crossings = oval.self_intersections()
    if crossings:
        raise NonClosureError(f"Oval sample self-intersects at segments {crossings[:5]}")


def trace_sweep(
    sys: DarbouxSystem,
    h_grid: Sequence[float],
    settings: TraceSettings | None = None,
    threads: int = 0,
    nest: NestRange | None = None,
) -> list[Oval]:
    """Trace one oval per level, in grid order. The output does not depend on `threads`."""
    settings = settings or DEFAULT_TRACE_SETTINGS
    nest = nest or find_center(sys, settings)
    return indexed_map(lambda h: trace_oval(sys, h, settings, nest), list(h_grid), threads)


def triangle_boundary(sys: DarbouxSystem, per_side: int = 2000) -> NDArray[np.float64]:
    """Dense sample of the saddle triangle, the h → 0 limit of the ovals."""
    vertices = list(sys.nest_vertices)
    pieces = []
    for a, b in zip(vertices, vertices[1:] + vertices[:1]):
        s = np.linspace(0.0, 1.0, per_side, endpoint=False)[:, None]
        pieces.append((1 - s) * np.array(a) + s * np.array(b))
    return np.vstack(pieces)
