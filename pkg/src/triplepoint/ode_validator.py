from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from numpy.typing import NDArray
from scipy.integrate import solve_ivp

from ._parallel import ordered_map
from .darboux_core import DarbouxSystem, Perturbation, Point, eval_H, eval_omega
from .exceptions import DomainError, EscapeError
from .logger import logger
from .oval_tracer import NestRange, find_center, level_on_ray, start_direction, trace_oval
from .settings import OdeSettings, TraceSettings
from .tracing import stage_span
from .zero_counter import ZeroReport

DEFAULT_ODE_SETTINGS = OdeSettings()


def flow_orientation(sys: DarbouxSystem) -> int:
    """Sign that makes (B, −A) circulate counterclockwise around the center: sign M_λ in the
    nest.
    """
    x, y = sys.reference_point
    return 1 if sys.integrating_factor.value(x, y) > 0 else -1


def vector_field(
    sys: DarbouxSystem,
    eta: Perturbation | None,
    kappa: float,
    p: Point,
    orientation: int | None = None,
) -> Point:
    """The direction annihilated by ω_λ + κη = A dx + B dy, as σ·(B, −A)."""
    sigma = flow_orientation(sys) if orientation is None else orientation
    a_coef, b_coef = eval_omega(sys, eta.with_kappa(kappa) if eta is not None else None, p)
    return sigma * b_coef, -sigma * a_coef


@dataclass(frozen=True)
class SectionPoint:
    h: float
    location: Point


@dataclass(frozen=True)
class Section:
    """A transverse section: the ray from the nest center in a fixed direction."""

    sys: DarbouxSystem
    nest: NestRange
    direction: Point

    @classmethod
    def through_start(cls, sys: DarbouxSystem, nest: NestRange, rotation: float = 0.0) -> Section:
        """The ray the oval tracer starts on, rotated counterclockwise by `rotation`."""
        dx, dy = start_direction(sys, nest)
        c, s = math.cos(rotation), math.sin(rotation)
        return cls(sys, nest, (c * dx - s * dy, s * dx + c * dy))

    def point(self, h: float) -> SectionPoint:
        s = level_on_ray(self.sys, self.nest, self.direction, h)
        cx, cy = self.nest.center
        return SectionPoint(h, (cx + s * self.direction[0], cy + s * self.direction[1]))

    def signed_distance(self, z: Sequence[float]) -> float:
        """Positive on the side the counterclockwise flow moves to after crossing the ray."""
        cx, cy = self.nest.center
        dx, dy = self.direction
        return dx * (z[1] - cy) - dy * (z[0] - cx)


def _period_estimate(sys: DarbouxSystem, h: float, nest: NestRange, sigma: int) -> float:
    oval = trace_oval(sys, h, nest=nest)
    mids = 0.5 * (oval.points[1:] + oval.points[:-1])
    speeds = np.array([math.hypot(*vector_field(sys, None, 0.0, (x, y), sigma)) for x, y in mids])
    return float(np.sum(oval.segment_lengths / speeds))


class _Revolution:
    """One return to the section, integrated in two halves so the start is not taken for a
    crossing.
    """

    def __init__(
        self,
        sys: DarbouxSystem,
        eta: Perturbation | None,
        kappa: float,
        section: Section,
        settings: OdeSettings,
    ):
        self.sys = sys
        self.eta = eta
        self.kappa = kappa
        self.section = section
        self.settings = settings
        self.sigma = flow_orientation(sys)

    def rhs(self, _t: float, z: NDArray[np.float64]) -> list[float]:
        return list(vector_field(self.sys, self.eta, self.kappa, (z[0], z[1]), self.sigma))

    def run(self, start: Point, time_limit: float) -> tuple[Point, list[NDArray[np.float64]]]:
        scale = self.section.nest.scale

        def escape(_t: float, z: NDArray[np.float64]) -> float:
            return min(self.sys.oriented_values(z[0], z[1])[: len(self.sys.factors)]) / scale

        escape.terminal = True  # type: ignore[attr-defined]
        escape.direction = -1  # type: ignore[attr-defined]

        def crossing(_t: float, z: NDArray[np.float64]) -> float:
            return self.section.signed_distance(z) / scale

        crossing.terminal = True  # type: ignore[attr-defined]

        trajectory: list[NDArray[np.float64]] = []
        z0 = np.array(start, dtype=float)
        elapsed = 0.0
        # First the opposite ray (downward crossing), then back to the section (upward).
        for direction in (-1, 1):
            crossing.direction = direction  # type: ignore[attr-defined]
            result = solve_ivp(
                self.rhs,
                (0.0, time_limit - elapsed),
                z0,
                method=self.settings.method,
                rtol=self.settings.rtol,
                atol=self.settings.atol,
                events=[crossing, escape],
            )
            trajectory.append(result.y)
            if result.status == -1:
                raise EscapeError(f"Integration failed: {result.message}")
            if len(result.t_events[1]):
                raise EscapeError(
                    f"Trajectory from {start} left the nest at κ={self.kappa}; lower κ"
                )
            if not len(result.t_events[0]):
                raise EscapeError(
                    f"No return to the section within {time_limit:.3g} time units at κ={self.kappa}"
                )
            z0 = result.y_events[0][0]
            elapsed += float(result.t_events[0][0])
        return (float(z0[0]), float(z0[1])), trajectory


def _revolution(
    sys: DarbouxSystem,
    eta: Perturbation | None,
    kappa: float,
    h: float,
    section: Section,
    settings: OdeSettings,
) -> tuple[SectionPoint, Point, list[NDArray[np.float64]]]:
    start = section.point(h)
    period = _period_estimate(sys, h, section.nest, flow_orientation(sys))
    end, trajectory = _Revolution(sys, eta, kappa, section, settings).run(
        start.location, settings.max_periods * period
    )
    return start, end, trajectory


def displacement(
    sys: DarbouxSystem,
    eta: Perturbation | None,
    kappa: float,
    h: float,
    settings: OdeSettings | None = None,
    nest: NestRange | None = None,
    section: Section | None = None,
) -> float:
    """D(κ, λ, h) = H(return) − h after one revolution from the section point at level h.

    Raises:
        EscapeError: if the trajectory leaves the nest or does not return in time.
    """
    settings = settings or DEFAULT_ODE_SETTINGS
    nest = nest or find_center(sys)
    section = section or Section.through_start(sys, nest)
    with stage_span("displacement", {"lambda": sys.lam, "h": h, "kappa": kappa}) as span:
        _, end, _ = _revolution(sys, eta, kappa, h, section, settings)
        try:
            value = eval_H(sys, end) - h
        except DomainError as e:
            raise EscapeError(f"Return point {end} is outside the nest") from e
        span.span_data.result["D"] = value
    return value


def energy_drift(
    sys: DarbouxSystem,
    h: float,
    settings: OdeSettings | None = None,
    nest: NestRange | None = None,
) -> float:
    """max |H(trajectory) − h| / h over one unperturbed revolution."""
    settings = settings or DEFAULT_ODE_SETTINGS
    nest = nest or find_center(sys)
    section = Section.through_start(sys, nest)
    _, _, trajectory = _revolution(sys, None, 0.0, h, section, settings)
    drift = 0.0
    for chunk in trajectory:
        for x, y in chunk.T:
            drift = max(drift, abs(eval_H(sys, (x, y)) - h))
    return drift / h


@dataclass
class DisplacementProfile:
    lam: float
    kappa: float
    h_grid: NDArray[np.float64]
    values: NDArray[np.float64]
    excluded: list[float] = field(default_factory=list)
    """Levels below the validation cutoff, not integrated."""

    def sign_changes(self) -> list[tuple[float, float, float]]:
        """`(h_low, h_high, estimate)` for every sign change, by linear interpolation.

        Exact zeros are skipped when comparing signs: a zero between samples of opposite sign is
        one change located at the zero level(s), and a touch or an all-zero run is none.
        """
        changes = []
        h, d = self.h_grid, self.values
        signs = np.sign(d)
        nonzero = np.flatnonzero(signs)
        for i, j in zip(nonzero[:-1], nonzero[1:]):
            if signs[i] == signs[j]:
                continue
            low, high = sorted((float(h[i]), float(h[j])))
            if j == i + 1:
                estimate = float(h[i] - d[i] * (h[j] - h[i]) / (d[j] - d[i]))
            else:
                estimate = float(np.mean(h[i + 1 : j]))
            changes.append((low, high, estimate))
        return sorted(changes, key=lambda c: c[2])

    def export_table(self) -> tuple[dict[str, Any], list[str], list[tuple[float, ...]]]:
        metadata: dict[str, Any] = {"lambda": self.lam, "kappa": self.kappa}
        if self.excluded:
            metadata["excluded"] = " ".join(f"{v:.17g}" for v in self.excluded)
        rows = [(float(h), float(v), self.kappa) for h, v in zip(self.h_grid, self.values)]
        return metadata, ["h", "D", "kappa"], rows


def displacement_sweep(
    sys: DarbouxSystem,
    eta: Perturbation,
    kappas: Sequence[float],
    h_grid: Sequence[float],
    settings: OdeSettings | None = None,
    threads: int = 0,
    nest: NestRange | None = None,
    rotation: float = 0.0,
) -> list[DisplacementProfile]:
    """Displacement profiles for every κ on a strictly decreasing h-grid.

    Levels below `exclude_fraction`·n(λ) are skipped. All (κ, h) runs are independent and run
    concurrently when `threads > 0`.
    """
    settings = settings or DEFAULT_ODE_SETTINGS
    nest = nest or find_center(sys)
    section = Section.through_start(sys, nest, rotation)
    cutoff = settings.exclude_fraction * nest.h_max
    kept = [float(h) for h in h_grid if h >= cutoff]
    excluded = [float(h) for h in h_grid if h < cutoff]
    if excluded:
        logger.info(f"{len(excluded)} levels below {cutoff:.3g} are excluded from ODE validation")

    jobs = [(kappa, h) for kappa in kappas for h in kept]

    def run(job: tuple[float, float]) -> float:
        kappa, h = job
        return displacement(sys, eta, kappa, h, settings, nest, section)

    with stage_span("displacement_sweep", {"lambda": sys.lam, "kappas": list(kappas)}):
        values = ordered_map(run, jobs, threads)
    profiles = []
    for k, kappa in enumerate(kappas):
        chunk = values[k * len(kept) : (k + 1) * len(kept)]
        profiles.append(
            DisplacementProfile(sys.lam, float(kappa), np.array(kept), np.array(chunk), excluded)
        )
    return profiles


def kappa_linearity(
    sys: DarbouxSystem,
    eta: Perturbation,
    kappa: float,
    h: float,
    settings: OdeSettings | None = None,
    nest: NestRange | None = None,
) -> float:
    """|D(2κ) − 2D(κ)| / κ², the constant of the second-order remainder."""
    nest = nest or find_center(sys)
    single = displacement(sys, eta, kappa, h, settings, nest)
    double = displacement(sys, eta, 2 * kappa, h, settings, nest)
    return abs(double - 2 * single) / kappa**2


def section_rotation_shift(
    sys: DarbouxSystem,
    eta: Perturbation,
    kappa: float,
    h_grid: Sequence[float],
    rotation: float = 1e-3,
    settings: OdeSettings | None = None,
    threads: int = 0,
) -> float:
    """Largest move of a displacement sign change (in h) when the section ray is rotated.

    Returns `inf` if the two sections see different numbers of sign changes.
    """
    nest = find_center(sys)
    base = displacement_sweep(sys, eta, [kappa], h_grid, settings, threads, nest)[0]
    rotated = displacement_sweep(sys, eta, [kappa], h_grid, settings, threads, nest, rotation)[0]
    a, b = base.sign_changes(), rotated.sign_changes()
    if len(a) != len(b):
        return math.inf
    return max((abs(x[2] - y[2]) for x, y in zip(a, b)), default=0.0)


@dataclass(frozen=True)
class MatchPair:
    zero: float
    change: float
    """Interpolated location of the displacement sign change."""

    distance: float
    """Distance from the zero to the sign-change bracket; 0 inside it."""

    estimate_distance: float


@dataclass
class MatchReport:
    pairs: list[MatchPair] = field(default_factory=list)
    unmatched_zeros: list[float] = field(default_factory=list)
    unmatched_changes: list[float] = field(default_factory=list)

    @property
    def perfect(self) -> bool:
        return not self.unmatched_zeros and not self.unmatched_changes

    @property
    def max_distance(self) -> float:
        return max((p.distance for p in self.pairs), default=0.0)

    @property
    def max_estimate_distance(self) -> float:
        return max((p.estimate_distance for p in self.pairs), default=0.0)

    def export_table(self) -> tuple[dict[str, Any], list[str], list[tuple[Any, ...]]]:
        metadata = {
            "unmatched_zeros": " ".join(f"{v:.17g}" for v in self.unmatched_zeros),
            "unmatched_changes": " ".join(f"{v:.17g}" for v in self.unmatched_changes),
        }
        rows = [(p.zero, p.change, p.distance, p.estimate_distance) for p in self.pairs]
        return metadata, ["zero", "change", "distance", "estimate_distance"], rows


def limit_cycle_match(profile: DisplacementProfile, zeros: ZeroReport) -> MatchReport:
    """Pair every zero of I with the nearest unused sign change of the displacement."""
    changes = profile.sign_changes()
    used: set[int] = set()
    report = MatchReport()
    for zero in sorted(z.estimate for z in zeros.zeros):
        best = None
        for index, (low, high, estimate) in enumerate(changes):
            if index in used:
                continue
            distance = max(low - zero, zero - high, 0.0)
            if best is None or (distance, abs(estimate - zero)) < best[0]:
                best = ((distance, abs(estimate - zero)), index)
        if best is None:
            report.unmatched_zeros.append(zero)
            continue
        (distance, estimate_distance), index = best
        used.add(index)
        report.pairs.append(MatchPair(zero, changes[index][2], distance, estimate_distance))
    report.unmatched_changes = [c[2] for i, c in enumerate(changes) if i not in used]
    if not report.perfect:
        logger.warning(
            f"Unmatched zeros {report.unmatched_zeros} / sign changes {report.unmatched_changes} "
            f"at κ={profile.kappa}"
        )
    return report
