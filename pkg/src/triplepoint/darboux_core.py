from __future__ import annotations

import itertools
import math
from collections.abc import Sequence
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.optimize import least_squares

from .exceptions import DomainError, InvalidExponentError, InvalidUnitError, ScenarioError
from .logger import logger
from .polynomial import ONE, X, Y, Polynomial2

Point = tuple[float, float]

UNIT_INDEX = "unit"
"""Factor index reported by domain errors raised on the unit factor Δ."""


@dataclass(frozen=True)
class DarbouxFactor:
    """One factor P_i^{ε_i} of the first integral, with the orientation sign s_i that makes
    s_i·P_i positive on the nest.
    """

    polynomial: Polynomial2
    exponent: float
    sign: int = 1


@dataclass(frozen=True)
class UnfoldingFactor:
    """The λ-dependent factor P_λ = P_0 − λ·U raised to the exponent ε."""

    base: Polynomial2
    """P_0, the factor at λ = 0."""

    direction: Polynomial2
    """U. Assumption A₁ asks for U(0,0) ≠ 0."""

    exponent: float
    sign: int = 1

    def at(self, lam: float) -> Polynomial2:
        return self.base - self.direction * lam


@dataclass(frozen=True)
class _FactorKernel:
    # Precomputed derivatives of one oriented factor, for scalar evaluation.
    index: int | str
    p: Polynomial2
    px: Polynomial2
    py: Polynomial2
    pxx: Polynomial2
    pxy: Polynomial2
    pyy: Polynomial2
    exponent: float
    sign: int


@dataclass(frozen=True)
class DarbouxSystem:
    """The Darboux data H_λ = ∏ (s_i P_i)^{ε_i} · Δ with integrating factor M_λ = P_λ ∏ P_i.

    Index 0 is always the unfolding factor P_λ; fixed factors follow in order. Instances are
    immutable and safe to share between threads.
    """

    unfolding_factor: UnfoldingFactor
    fixed_factors: tuple[DarbouxFactor, ...]
    lam: float
    unit_factor: Polynomial2 | None = None
    unit_sign: int = 1
    name: str = field(default="scenario", compare=False)

    def __post_init__(self) -> None:
        exponents = [self.unfolding_factor.exponent] + [f.exponent for f in self.fixed_factors]
        for index, exponent in enumerate(exponents):
            if not exponent > 0:
                raise InvalidExponentError(
                    f"Exponent of factor {index} must be strictly positive, got {exponent}"
                )
        if self.lam < 0:
            raise ScenarioError(f"The unfolding parameter must be non-negative, got {self.lam}")
        if self.unit_factor is not None and self.unit_factor(0.0, 0.0) == 0.0:
            raise InvalidUnitError("The unit factor Δ must not vanish at the origin")

    @cached_property
    def factors(self) -> tuple[DarbouxFactor, ...]:
        """All factors at the current λ, unfolding factor first."""
        unfolding = DarbouxFactor(
            polynomial=self.unfolding_factor.at(self.lam),
            exponent=self.unfolding_factor.exponent,
            sign=self.unfolding_factor.sign,
        )
        return (unfolding, *self.fixed_factors)

    @property
    def exponents(self) -> tuple[float, ...]:
        return tuple(f.exponent for f in self.factors)

    @cached_property
    def triple_point_indices(self) -> tuple[int, ...]:
        """Indices of the factors whose λ = 0 zero sets pass through the origin."""
        at_zero = [self.unfolding_factor.base, *(f.polynomial for f in self.fixed_factors)]
        return tuple(i for i, p in enumerate(at_zero) if abs(p(0.0, 0.0)) < 1e-14)

    @cached_property
    def a(self) -> float:
        """Sum of the exponents of the factors through the triple point."""
        return float(sum(self.exponents[i] for i in self.triple_point_indices))

    @cached_property
    def integrating_factor(self) -> Polynomial2:
        """M_λ = P_λ ∏ P_i, with the raw (unoriented) factors."""
        product = ONE
        for factor in self.factors:
            product = product * factor.polynomial
        return product

    @cached_property
    def _kernels(self) -> tuple[_FactorKernel, ...]:
        kernels = []
        entries: list[tuple[int | str, Polynomial2, float, int]] = [
            (i, f.polynomial, f.exponent, f.sign) for i, f in enumerate(self.factors)
        ]
        if self.unit_factor is not None:
            entries.append((UNIT_INDEX, self.unit_factor, 1.0, self.unit_sign))
        for index, p, exponent, sign in entries:
            px, py = p.grad
            pxx, pxy, pyy = p.hessian
            kernels.append(_FactorKernel(index, p, px, py, pxx, pxy, pyy, exponent, sign))
        return tuple(kernels)

    def with_lambda(self, lam: float) -> DarbouxSystem:
        """The same scenario at another value of the unfolding parameter. Orientation signs are
        kept.
        """
        return replace(self, lam=lam)

    def oriented_values(self, x: float, y: float) -> list[float]:
        """The values s_i·P_i(x, y) for every factor (and Δ last, when present)."""
        return [k.sign * k.p.value(x, y) for k in self._kernels]

    def log_h(self, x: float, y: float) -> float:
        total = 0.0
        for k in self._kernels:
            v = k.sign * k.p.value(x, y)
            if v <= 0.0:
                raise DomainError(
                    f"Oriented factor {k.index} is not positive at ({x}, {y})", k.index
                )
            total += k.exponent * math.log(v)
        return total

    def log_h_grad(self, x: float, y: float) -> tuple[float, float]:
        gx = gy = 0.0
        for k in self._kernels:
            v = k.p.value(x, y)
            if k.sign * v <= 0.0:
                raise DomainError(
                    f"Oriented factor {k.index} is not positive at ({x}, {y})", k.index
                )
            gx += k.exponent * k.px.value(x, y) / v
            gy += k.exponent * k.py.value(x, y) / v
        return gx, gy

    def log_h_hessian(self, x: float, y: float) -> tuple[float, float, float]:
        """`(∂xx, ∂xy, ∂yy)` of log H."""
        hxx = hxy = hyy = 0.0
        for k in self._kernels:
            v = k.p.value(x, y)
            if k.sign * v <= 0.0:
                raise DomainError(
                    f"Oriented factor {k.index} is not positive at ({x}, {y})", k.index
                )
            px, py = k.px.value(x, y), k.py.value(x, y)
            hxx += k.exponent * (k.pxx.value(x, y) / v - px * px / (v * v))
            hxy += k.exponent * (k.pxy.value(x, y) / v - px * py / (v * v))
            hyy += k.exponent * (k.pyy.value(x, y) / v - py * py / (v * v))
        return hxx, hxy, hyy

    def log_h_array(self, x: ArrayLike, y: ArrayLike) -> NDArray[np.float64]:
        """Vectorized log H; `-inf` wherever some oriented factor is not positive."""
        xs, ys = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        total = np.zeros(xs.shape)
        outside = np.zeros(xs.shape, dtype=bool)
        for k in self._kernels:
            v = k.sign * np.asarray(k.p(xs, ys), dtype=float)
            outside |= v <= 0.0
            total += k.exponent * np.log(np.where(v > 0.0, v, 1.0))
        return np.where(outside, -np.inf, total)

    def hamiltonian_direction(self, x: float, y: float) -> Point:
        """Unit tangent of the level curve through (x, y), counterclockwise around a maximum."""
        gx, gy = self.log_h_grad(x, y)
        norm = math.hypot(gx, gy)
        if norm == 0.0:
            return 0.0, 0.0
        return gy / norm, -gx / norm

    @cached_property
    def nest_vertices(self) -> tuple[Point, Point, Point]:
        """The three saddles of the unfolded triple point: pairwise intersections of the factors
        through the origin, at the current λ.
        """
        if len(self.triple_point_indices) != 3:
            raise ScenarioError(
                f"Expected three factors through the origin, found {len(self.triple_point_indices)}"
            )
        polys = [self.factors[i].polynomial for i in self.triple_point_indices]
        scale = max(self.lam, 1e-300)
        vertices = []
        for p, q in itertools.combinations(polys, 2):
            vertices.append(_intersect(p, q, start=(0.0, 0.0), scale=scale))
        return tuple(vertices)  # type: ignore[return-value]

    @cached_property
    def reference_point(self) -> Point:
        """Centroid of the nest triangle. Oval tracing and orientation start from here."""
        vertices = self.nest_vertices
        return (
            sum(v[0] for v in vertices) / 3.0,
            sum(v[1] for v in vertices) / 3.0,
        )

    @property
    def scale(self) -> float:
        """Linear size of the nest: the longest side of the saddle triangle."""
        vertices = self.nest_vertices
        return max(math.dist(p, q) for p, q in itertools.combinations(vertices, 2))


@dataclass(frozen=True)
class Perturbation:
    """The polynomial one-form η = R dx + S dy with amplitude κ."""

    R: Polynomial2
    S: Polynomial2
    kappa: float = 0.0
    n: int | None = None

    def __post_init__(self) -> None:
        stated = max(self.R.degree or 0, self.S.degree or 0)
        if self.n is None:
            object.__setattr__(self, "n", stated)
        elif self.n < max(self.R.actual_degree, self.S.actual_degree):
            raise ScenarioError(f"Degree bound n={self.n} is below deg(R, S)")

    def __call__(self, x: ArrayLike, y: ArrayLike) -> tuple[ArrayLike, ArrayLike]:
        return self.R(x, y), self.S(x, y)

    def __add__(self, other: Perturbation) -> Perturbation:
        return Perturbation(self.R + other.R, self.S + other.S, self.kappa)

    def scaled(self, factor: float) -> Perturbation:
        return Perturbation(self.R * factor, self.S * factor, self.kappa, self.n)

    def with_kappa(self, kappa: float) -> Perturbation:
        return replace(self, kappa=kappa)


def exact_perturbation(sys: DarbouxSystem, potential: Polynomial2) -> Perturbation:
    """η = M_λ dF, whose pseudo-Abelian integral vanishes identically."""
    m = sys.integrating_factor
    fx, fy = potential.grad
    return Perturbation(m * fx, m * fy)


def _intersect(p: Polynomial2, q: Polynomial2, start: Point, scale: float) -> Point:
    if p.actual_degree <= 1 and q.actual_degree <= 1:
        (px, py), (qx, qy) = p.grad, q.grad
        matrix = np.array([[px.value(0, 0), py.value(0, 0)], [qx.value(0, 0), qy.value(0, 0)]])
        if abs(np.linalg.det(matrix)) > 1e-14 * np.abs(matrix).max() ** 2:
            rhs = np.array([-p.value(0.0, 0.0), -q.value(0.0, 0.0)])
            x, y = np.linalg.solve(matrix, rhs)
            return float(x), float(y)

    def residual(z: NDArray[np.float64]) -> list[float]:
        return [p.value(z[0], z[1]), q.value(z[0], z[1])]

    def jacobian(z: NDArray[np.float64]) -> list[list[float]]:
        (px, py), (qx, qy) = p.grad, q.grad
        return [
            [px.value(z[0], z[1]), py.value(z[0], z[1])],
            [qx.value(z[0], z[1]), qy.value(z[0], z[1])],
        ]

    result = least_squares(
        residual, np.array(start), jac=jacobian, method="lm", xtol=1e-15, ftol=1e-15
    )
    if max(abs(r) for r in result.fun) > 1e-10 * max(1.0, scale):
        raise ScenarioError(f"Factor zero sets do not intersect near {start}")
    return float(result.x[0]), float(result.x[1])


def build_normal_form(
    eps: float,
    eps_plus: float,
    eps_minus: float,
    lam: float,
    delta: Polynomial2 | None = None,
) -> DarbouxSystem:
    """The local normal form (x − λ)^ε (y − x)^{ε₊} (y + x)^{ε₋} Δ of a triple-point unfolding.

    The factors are oriented so that every one of them is positive on the open triangle with
    vertices (0, 0), (λ, λ), (λ, −λ): the system evaluates λ − x, x − y and x + y.

    Raises:
        InvalidExponentError: if an exponent is not strictly positive.
        InvalidUnitError: if Δ vanishes at the origin.
    """
    unit_sign = 1
    if delta is not None:
        at_origin = delta(0.0, 0.0)
        if at_origin == 0.0:
            raise InvalidUnitError("The unit factor Δ must not vanish at the origin")
        unit_sign = 1 if at_origin > 0 else -1

    return DarbouxSystem(
        unfolding_factor=UnfoldingFactor(base=X, direction=ONE, exponent=eps, sign=-1),
        fixed_factors=(
            DarbouxFactor(polynomial=Y - X, exponent=eps_plus, sign=-1),
            DarbouxFactor(polynomial=Y + X, exponent=eps_minus, sign=1),
        ),
        lam=lam,
        unit_factor=delta,
        unit_sign=unit_sign,
        name="normal_form",
    )


def oriented_system(
    unfolding_base: Polynomial2,
    unfolding_direction: Polynomial2,
    unfolding_exponent: float,
    fixed: Sequence[tuple[Polynomial2, float]],
    lam: float,
    unit: Polynomial2 | None = None,
    sign_hints: Sequence[int] | None = None,
    name: str = "scenario",
) -> DarbouxSystem:
    """Build a general Darboux system, detecting the orientation signs at the centroid of the
    saddle triangle unless `sign_hints` (one per factor, unfolding first) are given.
    """
    if unit is not None and unit(0.0, 0.0) == 0.0:
        raise InvalidUnitError("The unit factor Δ must not vanish at the origin")
    unit_sign = 1 if unit is None or unit(0.0, 0.0) > 0 else -1
    provisional = DarbouxSystem(
        unfolding_factor=UnfoldingFactor(unfolding_base, unfolding_direction, unfolding_exponent),
        fixed_factors=tuple(DarbouxFactor(p, e) for p, e in fixed),
        lam=lam,
        unit_factor=unit,
        unit_sign=unit_sign,
        name=name,
    )
    if sign_hints is not None:
        signs = list(sign_hints)
        if len(signs) != len(provisional.factors) or any(s not in (-1, 1) for s in signs):
            raise ScenarioError("Orientation hints must give one sign (+1 or -1) per factor")
    else:
        cx, cy = provisional.reference_point
        signs = []
        for index, factor in enumerate(provisional.factors):
            value = factor.polynomial(cx, cy)
            if value == 0.0:
                raise DomainError(
                    f"Factor {index} vanishes at the nest reference point ({cx}, {cy})", index
                )
            signs.append(1 if value > 0 else -1)
    logger.debug(f"Orientation signs for {name}: {signs}")
    return replace(
        provisional,
        unfolding_factor=replace(provisional.unfolding_factor, sign=signs[0]),
        fixed_factors=tuple(
            replace(f, sign=s) for f, s in zip(provisional.fixed_factors, signs[1:])
        ),
    )


def eval_H(sys: DarbouxSystem, p: Point) -> float:
    """H_λ(p) on the oriented factors.

    Integer exponents use repeated multiplication; the rest go through exp/log.

    Raises:
        DomainError: if some oriented factor (or Δ) is not positive at p. The error carries the
            index of the offending factor.
    """
    x, y = float(p[0]), float(p[1])
    product = 1.0
    log_part = 0.0
    for index, value in enumerate(sys.oriented_values(x, y)):
        label: int | str = index if index < len(sys.factors) else UNIT_INDEX
        if value <= 0.0:
            raise DomainError(f"Oriented factor {label} is not positive at ({x}, {y})", label)
        exponent = sys.factors[index].exponent if index < len(sys.factors) else 1.0
        if float(exponent).is_integer():
            product *= value ** int(exponent)
        else:
            log_part += exponent * math.log(value)
    return product * math.exp(log_part) if log_part else product


def eval_omega(sys: DarbouxSystem, eta: Perturbation | None, p: Point) -> tuple[float, float]:
    """Coefficients (A, B) of ω_λ (+ κη) at p.

    ω_λ = M_λ dH/H is evaluated in the pole-free expanded form Σ ε_i (∏_{j≠i} P_j) dP_i plus
    M_λ dΔ/Δ, so it is defined on the factor zero sets as well.

    Raises:
        DomainError: if Δ vanishes at p.
    """
    x, y = float(p[0]), float(p[1])
    values = [f.polynomial.value(x, y) for f in sys.factors]
    a_coef = b_coef = 0.0
    for i, factor in enumerate(sys.factors):
        others = 1.0
        for j, v in enumerate(values):
            if j != i:
                others *= v
        px, py = factor.polynomial.grad
        a_coef += factor.exponent * others * px.value(x, y)
        b_coef += factor.exponent * others * py.value(x, y)
    if sys.unit_factor is not None:
        delta = sys.unit_factor.value(x, y)
        if delta == 0.0:
            raise DomainError(f"Δ vanishes at ({x}, {y})", UNIT_INDEX)
        m = math.prod(values)
        dx, dy = sys.unit_factor.grad
        a_coef += m * dx.value(x, y) / delta
        b_coef += m * dy.value(x, y) / delta
    if eta is not None:
        a_coef += eta.kappa * eta.R.value(x, y)
        b_coef += eta.kappa * eta.S.value(x, y)
    return a_coef, b_coef


@dataclass(frozen=True)
class Contact:
    """An intersection of two factor zero sets at λ = 0."""

    factors: tuple[int, int]
    point: Point
    sine: float
    """|sin| of the angle between the two gradients; 0 means tangential contact."""


@dataclass(frozen=True)
class GenericityReport:
    a1: bool
    """∂P_λ/∂λ at the origin is nonzero."""

    a2: bool
    """Factor zero sets meet pairwise transversally, and the origin is the only triple point."""

    unfolding_derivative: float
    contacts: tuple[Contact, ...]
    """All intersections found in the box; the failing ones have `sine` below the threshold."""

    extra_triple_points: tuple[Point, ...] = ()

    @property
    def tangential(self) -> tuple[Contact, ...]:
        return tuple(c for c in self.contacts if c.sine < TRANSVERSALITY_THRESHOLD)


TRANSVERSALITY_THRESHOLD = 1e-6


def check_genericity(
    sys: DarbouxSystem,
    box: tuple[float, float, float, float] = (-1.0, 1.0, -1.0, 1.0),
    starts_per_axis: int = 9,
) -> GenericityReport:
    """Check assumptions A₁ and A₂ for the scenario. Failures are reported, never raised.

    A₂ is checked on the λ = 0 factors: every pairwise intersection inside `box` is located by
    Levenberg–Marquardt from a grid of starts and tested for gradient collinearity.
    """
    step = 1e-6
    derivative = (
        sys.unfolding_factor.at(step)(0.0, 0.0) - sys.unfolding_factor.at(-step)(0.0, 0.0)
    ) / (2 * step)
    a1 = abs(derivative) > 1e-12

    polys = [sys.unfolding_factor.base, *(f.polynomial for f in sys.fixed_factors)]
    xmin, xmax, ymin, ymax = box
    starts = [
        (float(sx), float(sy))
        for sx in np.linspace(xmin, xmax, starts_per_axis)
        for sy in np.linspace(ymin, ymax, starts_per_axis)
    ]
    contacts: list[Contact] = []
    for i, j in itertools.combinations(range(len(polys)), 2):
        found: list[Point] = []
        for start in starts:
            point = _try_intersect(polys[i], polys[j], start)
            if point is None:
                continue
            if not (xmin <= point[0] <= xmax and ymin <= point[1] <= ymax):
                continue
            if any(math.dist(point, q) < 1e-6 for q in found):
                continue
            found.append(point)
            contacts.append(Contact((i, j), point, _gradient_sine(polys[i], polys[j], point)))

    extra: list[Point] = []
    for contact in contacts:
        i, j = contact.factors
        x, y = contact.point
        others = [k for k in range(len(polys)) if k not in (i, j)]
        if any(abs(polys[k](x, y)) < 1e-9 for k in others) and math.hypot(x, y) > 1e-6:
            if not any(math.dist(contact.point, q) < 1e-6 for q in extra):
                extra.append(contact.point)

    a2 = not extra and all(c.sine >= TRANSVERSALITY_THRESHOLD for c in contacts)
    report = GenericityReport(a1, a2, derivative, tuple(contacts), tuple(extra))
    if not (a1 and a2):
        logger.warning(
            f"Genericity check failed for {sys.name}: A1={a1}, A2={a2}, "
            f"tangential contacts at {[c.point for c in report.tangential]}"
        )
    return report


def _try_intersect(p: Polynomial2, q: Polynomial2, start: Point) -> Point | None:
    try:
        return _intersect(p, q, start, scale=1.0)
    except ScenarioError:
        return None


def _gradient_sine(p: Polynomial2, q: Polynomial2, point: Point) -> float:
    x, y = point
    (px, py), (qx, qy) = p.grad, q.grad
    gp = (px.value(x, y), py.value(x, y))
    gq = (qx.value(x, y), qy.value(x, y))
    norms = math.hypot(*gp) * math.hypot(*gq)
    if norms == 0.0:
        return 0.0
    return abs(gp[0] * gq[1] - gp[1] * gq[0]) / norms
