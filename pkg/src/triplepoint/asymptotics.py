from __future__ import annotations

import itertools
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field, replace
from typing import Any, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .exceptions import (
    ConditioningError,
    InvalidExponentError,
    ModelMismatchError,
    ScenarioError,
    UnsupportedContinuationError,
)
from .integrator import IntegralSeries
from .logger import logger
from .settings import FitSettings
from .tracing import stage_span

DEFAULT_FIT_SETTINGS = FitSettings()

_EXPONENT_DIGITS = 12


def _key(exponent: float) -> float:
    return round(float(exponent), _EXPONENT_DIGITS) + 0.0


def _phase(x: float) -> complex:
    """e^{iπx}, exact when 2x is an integer."""
    doubled = 2 * x
    nearest = round(doubled)
    if abs(doubled - nearest) < 1e-12:
        return (1, 1j, -1, -1j)[int(nearest) % 4]  # type: ignore[return-value]
    return complex(math.cos(math.pi * x), math.sin(math.pi * x))


Term = tuple[float, int]
"""(exponent, log power) of a basis element t^exponent · log^power t."""


@dataclass(frozen=True)
class PsiExpansion:
    """A finite power-log model Σ c_{β,l} t^β log^l t.

    Coefficients are complex; expansions fitted to real data have real coefficients, variations
    make them complex.
    """

    terms: Mapping[Term, complex] = field(default_factory=dict)
    window: tuple[float, float] = (-math.inf, math.inf)
    """Exponent bounds (v, V) of the basis the expansion was built from."""

    t_range: tuple[float, float] | None = None
    """The t-interval the model was fitted on, if it was fitted."""

    residual: float = 0.0
    """Relative fit residual."""

    def __post_init__(self) -> None:
        cleaned: dict[Term, complex] = {}
        for (exponent, power), coef in self.terms.items():
            if power < 0:
                raise ValueError("Log powers must be non-negative")
            if coef == 0:
                continue
            key = (_key(exponent), int(power))
            cleaned[key] = cleaned.get(key, 0) + complex(coef)
        object.__setattr__(self, "terms", {k: v for k, v in sorted(cleaned.items()) if v != 0})

    @classmethod
    def monomial(cls, exponent: float, power: int = 0, coef: complex = 1.0) -> PsiExpansion:
        return cls({(exponent, power): coef})

    @classmethod
    def constant(cls, value: complex) -> PsiExpansion:
        return cls({(0.0, 0): value})

    def is_zero(self) -> bool:
        return not self.terms

    @property
    def exponents(self) -> list[float]:
        return sorted({exponent for exponent, _ in self.terms})

    def max_log_power(self, exponent: float | None = None) -> int:
        powers = [p for e, p in self.terms if exponent is None or e == _key(exponent)]
        return max(powers, default=-1)

    def evaluate_polar(self, r: ArrayLike, theta: ArrayLike) -> NDArray[np.complex128]:
        """The model at t = r·e^{iθ} on the universal cover (θ is not reduced mod 2π)."""
        r_arr = np.asarray(r, dtype=float)
        theta_arr = np.asarray(theta, dtype=float)
        log_t = np.log(r_arr) + 1j * theta_arr
        total = np.zeros(np.broadcast(r_arr, theta_arr).shape, dtype=complex)
        for (exponent, power), coef in self.terms.items():
            total += coef * np.exp(exponent * log_t) * log_t**power
        return total

    def __call__(self, t: ArrayLike) -> NDArray[np.complex128]:
        return self.evaluate_polar(t, 0.0)

    def real(self, t: ArrayLike) -> NDArray[np.float64]:
        """The model on the positive real axis (real part)."""
        return np.real(self(t))

    def __add__(self, other: PsiExpansion) -> PsiExpansion:
        merged: dict[Term, complex] = dict(self.terms)
        for key, coef in other.terms.items():
            merged[key] = merged.get(key, 0) + coef
        return PsiExpansion(merged, _union(self.window, other.window))

    def scaled(self, factor: complex) -> PsiExpansion:
        return replace(self, terms={k: factor * v for k, v in self.terms.items()})

    def __neg__(self) -> PsiExpansion:
        return self.scaled(-1)

    def __sub__(self, other: PsiExpansion) -> PsiExpansion:
        return self + (-other)

    def export_rows(self) -> list[tuple[float, int, float, float]]:
        """Rows `(exponent, log_power, re, im)`."""
        return [(e, p, c.real, c.imag) for (e, p), c in self.terms.items()]


def _union(a: tuple[float, float], b: tuple[float, float]) -> tuple[float, float]:
    return min(a[0], b[0]), max(a[1], b[1])


def var_t(f: PsiExpansion, alpha: float) -> PsiExpansion:
    """The variation F(te^{iπα}) − F(te^{−iπα}), exactly on the basis.

    t^β logˡ t ↦ t^β Σ_k C(l, k) (iπα)^k [e^{iπαβ} − (−1)^k e^{−iπαβ}] log^{l−k} t.
    """
    result: dict[Term, complex] = {}
    for (exponent, power), coef in f.terms.items():
        plus = _phase(alpha * exponent)
        minus = _phase(-alpha * exponent)
        for k in range(power + 1):
            bracket = plus - minus if k % 2 == 0 else plus + minus
            if bracket == 0:
                continue
            term = coef * math.comb(power, k) * (1j * math.pi * alpha) ** k * bracket
            key = (exponent, power - k)
            result[key] = result.get(key, 0) + term
    return replace(f, terms=result)


def annihilation_angles(f: PsiExpansion) -> list[float]:
    """The angles α whose variations, applied in order, kill `f`: for every distinct exponent β,
    α = 2/β (α = 1 for β = 0), repeated one more time than the top log power of β.
    """
    angles: list[float] = []
    for exponent in f.exponents:
        alpha = 1.0 if exponent == 0.0 else 2.0 / exponent
        angles.extend([alpha] * (f.max_log_power(exponent) + 1))
    return angles


def annihilate(f: PsiExpansion) -> tuple[PsiExpansion, list[float]]:
    """Apply the annihilating variations of `f` and return the result (the zero expansion) with
    the angles used.
    """
    angles = annihilation_angles(f)
    current = f
    for alpha in angles:
        current = var_t(current, alpha)
    return current, angles


Component = Union[PsiExpansion, complex, float, NDArray[Any]]


@dataclass(frozen=True)
class LambdaModel:
    """scale·(J₁ + J₂ log λ): the λ-multivaluedness of J that the lab models.

    J₁ and J₂ are power-log expansions in t, or samples at fixed t (numbers or arrays); only the
    former can be varied in t.
    """

    J1: Component
    J2: Component
    scale: complex = 1.0

    def value(self, lam: float, t: ArrayLike | None = None) -> Any:
        log_lambda = math.log(lam)
        j1, j2 = _component_value(self.J1, t), _component_value(self.J2, t)
        return self.scale * (j1 + j2 * log_lambda)

    def is_zero(self) -> bool:
        return self.scale == 0 or (_component_zero(self.J1) and _component_zero(self.J2))

    @classmethod
    def from_split(cls, split: LogSplit) -> LambdaModel:
        return cls(J1=np.asarray(split.J1), J2=np.asarray(split.J2))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LambdaModel):
            return NotImplemented
        return (
            self.scale == other.scale
            and _component_equal(self.J1, other.J1)
            and _component_equal(self.J2, other.J2)
        )

    def __hash__(self) -> int:
        return hash(self.scale)


def _component_value(c: Component, t: ArrayLike | None) -> Any:
    if isinstance(c, PsiExpansion):
        if t is None:
            raise ValueError("A t value is needed to evaluate an expansion component")
        return c(t)
    return c


def _component_zero(c: Component) -> bool:
    if isinstance(c, PsiExpansion):
        return c.is_zero()
    return bool(np.all(np.asarray(c) == 0))


def _component_equal(a: Component, b: Component) -> bool:
    if isinstance(a, PsiExpansion) or isinstance(b, PsiExpansion):
        if _component_zero(a) and _component_zero(b):
            return True
        return isinstance(a, PsiExpansion) and isinstance(b, PsiExpansion) and a.terms == b.terms
    return bool(np.array_equal(np.asarray(a), np.asarray(b)))


def _zero_like(c: Component) -> Component:
    if isinstance(c, PsiExpansion):
        return PsiExpansion(window=c.window)
    return np.zeros_like(np.asarray(c, dtype=complex))


def var_lambda(g: LambdaModel | LogSplit | Any, beta: float = 1.0) -> LambdaModel:
    """Var_{(λ,β)}: continuation of log λ by ±iπβ, so J₁ + J₂ log λ ↦ 2πiβ·J₂.

    Raises:
        UnsupportedContinuationError: if `g` is raw data without a (J₁, J₂) model.
    """
    if isinstance(g, LogSplit):
        g = LambdaModel.from_split(g)
    if not isinstance(g, LambdaModel):
        raise UnsupportedContinuationError(
            "Only log-split models can be continued in λ; fit a LogSplit first"
        )
    return LambdaModel(J1=g.J2, J2=_zero_like(g.J2), scale=g.scale * 2j * math.pi * beta)


def var_t_model(g: LambdaModel, alpha: float) -> LambdaModel:
    """var_t on both components of a λ-model.

    Raises:
        UnsupportedContinuationError: if a component is sampled rather than an expansion.
    """
    components = []
    for c in (g.J1, g.J2):
        if isinstance(c, PsiExpansion):
            components.append(var_t(c, alpha))
        elif _component_zero(c):
            components.append(PsiExpansion())
        else:
            raise UnsupportedContinuationError("Sampled components cannot be continued in t")
    return LambdaModel(J1=components[0], J2=components[1], scale=g.scale)


@dataclass(frozen=True, eq=False)
class LogSplit:
    """J(λ, t) = J₁(t) + J₂(t)·log λ, fitted per t-grid point over a geometric λ-grid."""

    t_grid: NDArray[np.float64]
    J1: NDArray[np.float64]
    J2: NDArray[np.float64]
    residual: float
    lambda_grid: NDArray[np.float64]
    residual_profile: NDArray[np.float64]
    stability_gap: float = 0.0
    """max |J₂(first half) − J₂(second half)| over the t-grid."""

    stability_tolerance: float = 0.0

    @property
    def stable(self) -> bool:
        return self.stability_gap <= self.stability_tolerance

    def export_table(self) -> tuple[dict[str, Any], list[str], list[tuple[float, ...]]]:
        metadata = {
            "residual": self.residual,
            "stability_gap": self.stability_gap,
            "stability_tolerance": self.stability_tolerance,
            "stable": self.stable,
            "lambdas": " ".join(f"{v:.17g}" for v in self.lambda_grid),
        }
        rows = [
            (float(t), float(j1), float(j2), float(r))
            for t, j1, j2, r in zip(self.t_grid, self.J1, self.J2, self.residual_profile)
        ]
        return metadata, ["t", "J1", "J2", "residual"], rows


def _split_fit(
    lambdas: NDArray[np.float64], values: NDArray[np.float64]
) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
    design = np.column_stack([np.ones_like(lambdas), np.log(lambdas)])
    coefficients, *_ = np.linalg.lstsq(design, values, rcond=None)
    residuals = np.abs(design @ coefficients - values).max(axis=0)
    return coefficients[0], coefficients[1], residuals


def fit_log_split_arrays(
    lambdas: Sequence[float],
    t_grid: Sequence[float],
    values: ArrayLike,
    settings: FitSettings | None = None,
) -> LogSplit:
    """Fit J against (1, log λ) at every t. `values[m, k]` is J(λ_m, t_k).

    Raises:
        ScenarioError: with fewer than five λ samples.
        ModelMismatchError: if the residual exceeds `split_residual_ratio`·max|J|.
    """
    settings = settings or DEFAULT_FIT_SETTINGS
    lam = np.asarray(lambdas, dtype=float)
    data = np.asarray(values, dtype=float)
    if len(lam) < 5:
        raise ScenarioError(f"The log-λ split needs at least 5 λ samples, got {len(lam)}")
    if data.shape != (len(lam), len(t_grid)):
        raise ScenarioError(f"Expected values of shape {(len(lam), len(t_grid))}, got {data.shape}")

    with stage_span("fit_log_split", {"lambdas": len(lam), "t_points": len(t_grid)}) as span:
        j1, j2, profile = _split_fit(lam, data)
        scale = float(np.abs(data).max()) if data.size else 0.0
        residual = float(profile.max()) if profile.size else 0.0
        if residual > settings.split_residual_ratio * scale:
            raise ModelMismatchError(
                f"Log-λ split residual {residual:.3e} exceeds "
                f"{settings.split_residual_ratio} of max|J| = {scale:.3e}",
                profile,
            )

        half = (len(lam) + 1) // 2
        _, j2_first, _ = _split_fit(lam[:half], data[:half])
        _, j2_second, _ = _split_fit(lam[-half:], data[-half:])
        gap = float(np.abs(j2_first - j2_second).max()) if j2_first.size else 0.0
        # The residual moves a half-grid slope by about residual / spread.
        spread = float(np.ptp(np.log(lam[:half]))) or 1.0
        tolerance = max(settings.split_stability_factor * residual / spread, 1e-9 * scale)
        if gap > tolerance:
            logger.warning(
                f"J2 differs by {gap:.3e} between the λ half-grids (tolerance {tolerance:.3e})"
            )
        span.span_data.result.update({"residual": residual, "stability_gap": gap})

    return LogSplit(
        t_grid=np.asarray(t_grid, dtype=float),
        J1=j1,
        J2=j2,
        residual=residual,
        lambda_grid=lam,
        residual_profile=profile,
        stability_gap=gap,
        stability_tolerance=tolerance,
    )


def fit_log_split(
    series_per_lambda: Sequence[IntegralSeries],
    a: float,
    q: float,
    settings: FitSettings | None = None,
) -> LogSplit:
    """Fit the log-λ decomposition of J(λ, t) = λ^{-q} I(λ, λᵃ/t) from one series per λ.

    Raises:
        ScenarioError: if the series don't share a t-grid.
    """
    if not series_per_lambda:
        raise ScenarioError("No series to split")
    rescaled = [s.rescaled(a, q) for s in series_per_lambda]
    t_grid = rescaled[0][0]
    for t, _ in rescaled[1:]:
        if t.shape != t_grid.shape or not np.allclose(t, t_grid, rtol=1e-9, atol=0.0):
            raise ScenarioError("Series passed to the log-λ split must share a t-grid")
    values = np.vstack([j for _, j in rescaled])
    return fit_log_split_arrays([s.lam for s in series_per_lambda], t_grid, values, settings)


def candidate_exponents(
    exponents: Sequence[float],
    a: float,
    depth: int = 3,
    window: tuple[float, float] = (-3.0, 3.0),
) -> list[float]:
    """t-exponents for power-log fits near the polycycle.

    Level exponents are s + Σ n_k g_k with s ∈ {0, −1}, n_k ≥ 0 and Σ n_k ≤ depth, where the
    generators g are the saddle eigenvalue ratios ε_k/a together with 1 for the analytic part;
    t = λᵃ/h turns h^γ into t^{−γ}.
    """
    if a <= 0:
        raise InvalidExponentError(f"Blowup weight a must be positive, got {a}")
    generators = sorted({_key(e / a) for e in exponents} | {1.0})
    found: set[float] = set()
    for shift in (0.0, -1.0):
        for total in range(depth + 1):
            for combo in itertools.combinations_with_replacement(generators, total):
                beta = _key(-(shift + sum(combo)))
                if window[0] <= beta <= window[1]:
                    found.add(beta)
    return sorted(found)


def power_log_basis(
    t: NDArray[np.float64], exponents: Iterable[float], max_log_power: int
) -> tuple[list[Term], NDArray[np.float64]]:
    terms = [(_key(e), l) for e in sorted(set(exponents)) for l in range(max_log_power + 1)]
    log_t = np.log(t)
    columns = [t**e * log_t**l for e, l in terms]
    return terms, np.column_stack(columns) if columns else np.empty((len(t), 0))


def fit_power_log(
    t: ArrayLike,
    values: ArrayLike,
    candidate_exponents: Sequence[float],
    settings: FitSettings | None = None,
) -> PsiExpansion:
    """Least-squares fit of sampled values in the power-log basis built from the candidates.

    Raises:
        ConditioningError: if the normalized basis is numerically collinear.
        ModelMismatchError: if the relative residual exceeds `psi_residual`.
    """
    settings = settings or DEFAULT_FIT_SETTINGS
    t_arr = np.asarray(t, dtype=float)
    y = np.asarray(values, dtype=float)
    v, big_v = settings.exponent_window
    chosen = [e for e in candidate_exponents if v <= e <= big_v]
    t_range = (float(t_arr.min()), float(t_arr.max())) if t_arr.size else None
    if not np.any(y):
        return PsiExpansion(window=settings.exponent_window, t_range=t_range)

    terms, basis = power_log_basis(t_arr, chosen, settings.max_log_power)
    if len(terms) > settings.max_basis:
        raise ConditioningError(
            f"{len(terms)} basis functions exceed the cap of {settings.max_basis}; "
            "narrow the exponent window"
        )
    if len(terms) > len(t_arr):
        raise ConditioningError(f"{len(terms)} basis functions for {len(t_arr)} samples")
    norms = np.linalg.norm(basis, axis=0)
    normalized = basis / norms
    condition = float(np.linalg.cond(normalized))
    if condition > settings.condition_limit:
        raise ConditioningError(
            f"Power-log basis condition number {condition:.3e} exceeds "
            f"{settings.condition_limit:.1e}; change the exponent window"
        )
    coefficients, *_ = np.linalg.lstsq(normalized, y, rcond=None)
    coefficients = coefficients / norms
    fitted = basis @ coefficients
    residual = float(np.abs(fitted - y).max() / np.abs(y).max())
    if residual > settings.psi_residual:
        raise ModelMismatchError(
            f"Power-log fit residual {residual:.3e} exceeds {settings.psi_residual:.1e}",
            residual,
        )
    return PsiExpansion(
        {term: complex(c) for term, c in zip(terms, coefficients)},
        window=settings.exponent_window,
        t_range=t_range,
        residual=residual,
    )


def held_out_error(expansion: PsiExpansion, t: ArrayLike, values: ArrayLike) -> float:
    """Largest relative deviation of the model from points it was not fitted on."""
    y = np.asarray(values, dtype=float)
    scale = max(float(np.abs(y).max()), 1e-300)
    return float(np.abs(expansion.real(t) - y).max() / scale)


def fit_psi_expansion(
    series: IntegralSeries,
    candidate_exponents: Sequence[float],
    a: float,
    q: float,
    settings: FitSettings | None = None,
) -> PsiExpansion:
    """Fit J(λ, t) of a near-polycycle series in the power-log space, holding out every
    `holdout_every`-th point for validation.

    Raises:
        ModelMismatchError: if the fit or the held-out check fails.
        ConditioningError: if the basis is ill-conditioned.
    """
    settings = settings or DEFAULT_FIT_SETTINGS
    t, j = series.rescaled(a, q)
    mask = np.ones(len(t), dtype=bool)
    if settings.holdout_every > 1 and len(t) >= 2 * settings.holdout_every:
        mask[settings.holdout_every - 1 :: settings.holdout_every] = False

    with stage_span("fit_psi_expansion", {"lambda": series.lam, "points": len(t)}) as span:
        expansion = fit_power_log(t[mask], j[mask], candidate_exponents, settings)
        if (~mask).any() and not expansion.is_zero():
            error = held_out_error(expansion, t[~mask], j[~mask])
            if error > settings.holdout_rtol:
                raise ModelMismatchError(
                    f"Fitted expansion misses held-out points by {error:.3e}", error
                )
        # Report over the whole window the model is trusted on.
        expansion = replace(expansion, t_range=(float(t.min()), float(t.max())))
        span.span_data.result.update(
            {"terms": len(expansion.terms), "residual": expansion.residual}
        )
    return expansion
