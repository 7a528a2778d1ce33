from __future__ import annotations

import math
from collections.abc import Mapping
from dataclasses import dataclass, fields, replace
from functools import lru_cache
from typing import Any, TypeVar, get_type_hints

from pydantic import TypeAdapter, ValidationError

_T = TypeVar("_T")


@lru_cache(maxsize=None)
def _adapter(hint: Any) -> TypeAdapter[Any]:
    return TypeAdapter(hint)


def _overlay(base: _T, override: Mapping[str, Any] | None) -> _T:
    """Overlay the non-None values of `override` on `base`, each checked strictly against the
    field's type.

    Raises:
        ValueError: on unknown keys or wrongly typed values.
    """
    if not override:
        return base
    known = {f.name for f in fields(base)}  # type: ignore[arg-type]
    unknown = set(override) - known
    if unknown:
        raise ValueError(f"Unknown settings for {type(base).__name__}: {sorted(unknown)}")
    hints = get_type_hints(type(base))
    changes: dict[str, Any] = {}
    problems = []
    for key, value in override.items():
        if value is None:
            continue
        try:
            changes[key] = _adapter(hints[key]).validate_python(value, strict=True)
        except ValidationError as e:
            problems.append(f"{key}: {e.errors()[0]['msg']} (got {value!r})")
    if problems:
        raise ValueError(f"Invalid settings for {type(base).__name__}: {'; '.join(problems)}")
    return replace(base, **changes)  # type: ignore[type-var]


@dataclass(frozen=True)
class TraceSettings:
    """Settings for the center search and for level-curve continuation.

    Step lengths are relative to the nest scale (the longest side of the saddle triangle), so the
    same settings serve every λ.
    """

    step_fraction: float = 1e-3
    """Default arc-length step, as a fraction of the nest scale."""

    max_turn: float = 0.02
    """Largest tangent rotation (radians) allowed per step. Bounds the step by the curvature."""

    saddle_fraction: float = 0.1
    """The step never exceeds this fraction of the distance to the nearest saddle."""

    min_step_fraction: float = 1e-14
    """Step halving below this fraction of the nest scale is a continuation failure."""

    corrector_tol: float = 1e-12
    """Tolerance on |log H − log h| after the Newton corrector."""

    corrector_max_iter: int = 8
    max_steps: int = 1_000_000
    center_max_iter: int = 50
    center_tol: float = 1e-13
    """Newton stops once |∇log H|·scale falls below this."""

    def resolve(self, override: Mapping[str, Any] | None) -> TraceSettings:
        """Produce new settings by overlaying the non-None values of `override`."""
        return _overlay(self, override)


@dataclass(frozen=True)
class QuadratureSettings:
    """Settings for line integrals along ovals and for the interior (Stokes) oracle."""

    rtol: float = 1e-10
    """Relative tolerance on the value of the integral."""

    atol_rel: float = 1e-12
    """Absolute tolerance, relative to ∮|η/M| ds. Governs integrals that vanish."""

    high_order: int = 10
    low_order: int = 5
    max_depth: int = 24
    """Maximal number of bisections of one spline segment."""

    oracle_rtol: float = 1e-9
    oracle_max_depth: int = 14
    oracle_order: int = 8

    def resolve(self, override: Mapping[str, Any] | None) -> QuadratureSettings:
        return _overlay(self, override)


@dataclass(frozen=True)
class FitSettings:
    """Settings for the log-λ split and for power-log model fits."""

    split_residual_ratio: float = 0.01
    """The log-split residual must stay below this fraction of max |J|."""

    split_stability_factor: float = 3.0
    """J₂ from the two λ half-grids may differ by this many residual / (log λ half-grid spread)."""

    psi_residual: float = 1e-4
    """Largest relative residual accepted for a power-log fit."""

    condition_limit: float = 1e13
    combination_depth: int = 3
    max_log_power: int = 1
    exponent_window: tuple[float, float] = (-3.0, 3.0)
    """Bounds (v, V) on the exponents of the model basis."""

    max_basis: int = 40
    holdout_every: int = 5
    """Every n-th series point is held out of the fit and used for validation."""

    holdout_rtol: float = 1e-3

    def resolve(self, override: Mapping[str, Any] | None) -> FitSettings:
        return _overlay(self, override)


@dataclass(frozen=True)
class ContourSettings:
    """Sector contour |arg t| ≤ απ between the radii r1 < R1, for argument-principle bounds."""

    r1: float = 1e-3
    R1: float = 1.0
    alpha: float = 1.0
    samples_per_arc: int = 64
    max_arg_step: float = math.pi / 4
    max_refinements: int = 14

    def resolve(self, override: Mapping[str, Any] | None) -> ContourSettings:
        return _overlay(self, override)


@dataclass(frozen=True)
class OdeSettings:
    """Settings for integrating the perturbed vector field."""

    method: str = "DOP853"
    rtol: float = 1e-12
    atol: float = 1e-14
    max_periods: float = 20.0
    """Integration stops with an escape error after this many unperturbed periods."""

    exclude_fraction: float = 0.05
    """Levels below this fraction of n(λ) are not validated (passage times blow up)."""

    def resolve(self, override: Mapping[str, Any] | None) -> OdeSettings:
        return _overlay(self, override)


@dataclass(frozen=True)
class ZeroSettings:
    """Settings for zero scanning on an integral series."""

    bracket_rel: float = 1e-10
    """Brackets are refined to this width relative to n(λ)."""

    max_indeterminate_fraction: float = 0.05
    error_band_factor: float = 1.0
    """Values with |I| ≤ factor·error are indeterminate."""

    def resolve(self, override: Mapping[str, Any] | None) -> ZeroSettings:
        return _overlay(self, override)
