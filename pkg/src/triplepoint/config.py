from __future__ import annotations

from dataclasses import replace
from importlib import resources
from pathlib import Path
from typing import Any, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, NonNegativeInt, PositiveFloat, model_validator
from typing_extensions import Annotated, Self

from .darboux_core import DarbouxSystem, Perturbation, build_normal_form, oriented_system
from .polynomial import Polynomial2
from .settings import (
    ContourSettings,
    FitSettings,
    OdeSettings,
    QuadratureSettings,
    TraceSettings,
    ZeroSettings,
)

Triple = tuple[NonNegativeInt, NonNegativeInt, float]
"""A monomial `(i, j, value)`: value·xⁱyʲ."""

Positive = Annotated[float, Field(gt=0)]


def _polynomial(triples: list[Triple], degree: int | None = None) -> Polynomial2:
    return Polynomial2.from_terms(triples, degree)


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class NormalFormSection(_Section):
    """(x − λ)^ε (y − x)^{ε₊} (y + x)^{ε₋} Δ."""

    eps: PositiveFloat
    eps_plus: PositiveFloat
    eps_minus: PositiveFloat
    unit: Optional[list[Triple]] = None
    """Δ as monomials; omitted means Δ ≡ 1."""


class FactorSection(_Section):
    polynomial: list[Triple] = Field(min_length=1)
    exponent: PositiveFloat


class UnfoldingSection(_Section):
    """P_λ = base − λ·direction."""

    base: list[Triple] = Field(min_length=1)
    direction: list[Triple] = Field(min_length=1)
    exponent: PositiveFloat


class DarbouxSection(_Section):
    """Either a normal form or a general factor list, and the values of λ."""

    normal_form: Optional[NormalFormSection] = None
    unfolding: Optional[UnfoldingSection] = None
    factors: list[FactorSection] = Field(default_factory=list)
    unit: Optional[list[Triple]] = None
    orientation: Optional[list[int]] = None
    """One sign per factor (unfolding first). Detected at the nest centroid when omitted."""

    lam: Positive = 1.0

    @model_validator(mode="after")
    def _one_description(self) -> Self:
        if (self.normal_form is None) == (self.unfolding is None):
            raise ValueError("Give exactly one of `normal_form` or `unfolding` (+ `factors`)")
        if self.normal_form is not None and (self.factors or self.orientation or self.unit):
            raise ValueError("`factors`, `unit` and `orientation` only go with `unfolding`")
        if self.unfolding is not None and not self.factors:
            raise ValueError("A general Darboux system needs at least one fixed factor")
        if self.orientation is not None:
            if any(s not in (-1, 1) for s in self.orientation):
                raise ValueError("Orientation signs must be +1 or -1")
            if len(self.orientation) != 1 + len(self.factors):
                raise ValueError("Give one orientation sign per factor, unfolding first")
        return self


class DegreeBounds(_Section):
    """Bounds of the parameter space: deg P_λ ≤ n₀, deg Pᵢ ≤ nᵢ, deg(R, S) ≤ n."""

    unfolding: Optional[NonNegativeInt] = None
    factors: Optional[list[NonNegativeInt]] = None
    perturbation: Optional[NonNegativeInt] = None


class PerturbationSection(_Section):
    """η = R dx + S dy, and the amplitudes κ used for ODE validation."""

    R: list[Triple] = Field(default_factory=list)
    S: list[Triple] = Field(default_factory=list)
    kappas: list[PositiveFloat] = Field(default_factory=lambda: [1e-3, 5e-4, 2.5e-4])

    def build(self, degree: int | None = None) -> Perturbation:
        r, s = _polynomial(self.R), _polynomial(self.S)
        return Perturbation(r, s, n=degree)


class GridSection(_Section):
    """Levels as fractions of n(λ), and the λ- and t-grids of the log-λ split."""

    h_fractions: Optional[list[Annotated[float, Field(gt=0, lt=1)]]] = None
    """Explicit fractions; otherwise `h_count` geometric points from `h_first` to `h_last`."""

    h_count: int = Field(default=200, ge=2)
    h_first: Annotated[float, Field(gt=0, lt=1)] = 0.95
    h_last: Annotated[float, Field(gt=0, lt=1)] = 1e-3
    split_lambda_first: Positive = 2.0**-6
    split_lambda_count: int = Field(default=9, ge=5)
    split_lambda_ratio: Annotated[float, Field(gt=0, lt=1)] = 0.5
    t_values: list[Positive] = Field(default_factory=lambda: [10.0], min_length=1)
    """t = λᵃ/h points of the log-λ split."""

    ode_h_fractions: list[Annotated[float, Field(gt=0, lt=1)]] = Field(
        default_factory=lambda: [0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1]
    )

    @model_validator(mode="after")
    def _ordered(self) -> Self:
        if self.h_fractions is None and not self.h_last < self.h_first:
            raise ValueError("`h_last` must be below `h_first`")
        if self.h_fractions is not None and not self.h_fractions:
            raise ValueError("`h_fractions` must not be empty")
        return self

    def fractions(self) -> list[float]:
        """Strictly decreasing level fractions."""
        if self.h_fractions is not None:
            return sorted(set(self.h_fractions), reverse=True)
        values = np.geomspace(self.h_first, self.h_last, self.h_count)
        return [float(v) for v in values]

    def split_lambdas(self) -> list[float]:
        return [
            self.split_lambda_first * self.split_lambda_ratio**m
            for m in range(self.split_lambda_count)
        ]


def _positive_settings(values: dict[str, Any], section: str) -> None:
    for key, value in values.items():
        if isinstance(value, bool):
            continue
        if isinstance(value, (int, float)) and not value > 0:
            raise ValueError(f"Tolerance `{section}.{key}` must be positive, got {value}")


class ToleranceSection(_Section):
    """Overrides of the numerical settings; keys are the settings' field names."""

    trace: dict[str, Any] = Field(default_factory=dict)
    quadrature: dict[str, Any] = Field(default_factory=dict)
    fit: dict[str, Any] = Field(default_factory=dict)
    contour: dict[str, Any] = Field(default_factory=dict)
    ode: dict[str, Any] = Field(default_factory=dict)
    zeros: dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _known_and_positive(self) -> Self:
        # Overlaying rejects unknown keys and wrongly typed values.
        self.settings()
        for name in ("trace", "quadrature", "contour", "ode", "zeros"):
            _positive_settings(getattr(self, name), name)
        # FitSettings carries a signed exponent window.
        _positive_settings({k: v for k, v in self.fit.items() if k != "exponent_window"}, "fit")
        return self

    def settings(self) -> dict[str, Any]:
        fit = dict(self.fit)
        if isinstance(fit.get("exponent_window"), list):
            fit["exponent_window"] = tuple(fit["exponent_window"])
        return {
            "trace": TraceSettings().resolve(self.trace),
            "quadrature": QuadratureSettings().resolve(self.quadrature),
            "fit": FitSettings().resolve(fit),
            "contour": ContourSettings().resolve(self.contour),
            "ode": OdeSettings().resolve(self.ode),
            "zeros": ZeroSettings().resolve(self.zeros),
        }


class StudySection(_Section):
    uniformity_lambdas: list[Positive] = Field(
        default_factory=lambda: [1e-1, 1e-2, 1e-3, 1e-4], min_length=1
    )
    split_perturbation: Optional[PerturbationSection] = None
    """η for the log-λ split and the power-log fit; defaults to the main perturbation."""

    blowup_samples: int = Field(default=1000, ge=1)
    seed: int = 0
    """Seed of every random sample the lab draws (blow-up chart points)."""

    model_bound: bool = True
    """Compute argument-principle bounds next to the scan counts."""


class ScenarioConfig(_Section):
    """A complete scenario: Darboux data, perturbation, grids, tolerances and studies."""

    name: str = Field(min_length=1)
    darboux: DarbouxSection
    perturbation: PerturbationSection = Field(default_factory=PerturbationSection)
    degree_bounds: DegreeBounds = Field(default_factory=DegreeBounds)
    grids: GridSection = Field(default_factory=GridSection)
    tolerances: ToleranceSection = Field(default_factory=ToleranceSection)
    study: StudySection = Field(default_factory=StudySection)
    output_dir: Optional[str] = None

    @model_validator(mode="after")
    def _degrees_within_bounds(self) -> Self:
        bounds = self.degree_bounds
        d = self.darboux
        if bounds.unfolding is not None:
            unfolding = (
                [_polynomial(d.unfolding.base), _polynomial(d.unfolding.direction)]
                if d.unfolding is not None
                else []
            )
            for p in unfolding:
                if p.actual_degree > bounds.unfolding:
                    raise ValueError(
                        f"Unfolding factor has degree {p.actual_degree} > n0 = {bounds.unfolding}"
                    )
        if bounds.factors is not None and d.unfolding is not None:
            if len(bounds.factors) != len(d.factors):
                raise ValueError("Give one degree bound per fixed factor")
            for index, (factor, bound) in enumerate(zip(d.factors, bounds.factors)):
                degree = _polynomial(factor.polynomial).actual_degree
                if degree > bound:
                    raise ValueError(
                        f"Factor {index + 1} has degree {degree} > n{index + 1} = {bound}"
                    )
        if bounds.perturbation is not None:
            perturbations = [self.perturbation]
            if self.study.split_perturbation is not None:
                perturbations.append(self.study.split_perturbation)
            for section in perturbations:
                degree = section.build().n or 0
                if degree > bounds.perturbation:
                    raise ValueError(
                        f"Perturbation has degree {degree} > n = {bounds.perturbation}"
                    )
        return self

    def build_system(self, lam: float | None = None) -> DarbouxSystem:
        d = self.darboux
        lam = d.lam if lam is None else lam
        if d.normal_form is not None:
            nf = d.normal_form
            unit = _polynomial(nf.unit) if nf.unit else None
            system = build_normal_form(nf.eps, nf.eps_plus, nf.eps_minus, lam, unit)
            return replace(system, name=self.name)
        assert d.unfolding is not None
        return oriented_system(
            unfolding_base=_polynomial(d.unfolding.base),
            unfolding_direction=_polynomial(d.unfolding.direction),
            unfolding_exponent=d.unfolding.exponent,
            fixed=[(_polynomial(f.polynomial), f.exponent) for f in d.factors],
            lam=lam,
            unit=_polynomial(d.unit) if d.unit else None,
            sign_hints=d.orientation,
            name=self.name,
        )

    def build_perturbation(self, split: bool = False) -> Perturbation:
        section = self.perturbation
        if split and self.study.split_perturbation is not None:
            section = self.study.split_perturbation
        return section.build(self.degree_bounds.perturbation)

    def settings(self) -> dict[str, Any]:
        return self.tolerances.settings()


SCENARIO_DIR = "scenarios"


def _scenario_root() -> Any:
    return resources.files("triplepoint").joinpath(SCENARIO_DIR)


def bundled_scenarios() -> list[str]:
    """Names of the scenarios shipped with the package."""
    files = _scenario_root()
    return sorted(p.name[: -len(".json")] for p in files.iterdir() if p.name.endswith(".json"))


def scenario_text(name_or_path: str | Path) -> str:
    """The JSON text of a scenario file, or of a bundled scenario by name.

    Raises:
        FileNotFoundError: if neither exists.
    """
    path = Path(name_or_path)
    if path.is_file():
        return path.read_text(encoding="utf-8")
    name = str(name_or_path)
    name = name[: -len(".json")] if name.endswith(".json") else name
    candidate = _scenario_root().joinpath(f"{name}.json")
    if candidate.is_file():
        return candidate.read_text(encoding="utf-8")
    raise FileNotFoundError(
        f"No scenario file or bundled scenario named {name_or_path!r}; "
        f"bundled: {', '.join(bundled_scenarios())}"
    )


def load_scenario(name_or_path: str | Path) -> ScenarioConfig:
    """Read and validate a scenario.

    Raises:
        FileNotFoundError: if the scenario doesn't exist.
        pydantic.ValidationError: if the JSON is malformed or fails validation.
    """
    return ScenarioConfig.model_validate_json(scenario_text(name_or_path))

