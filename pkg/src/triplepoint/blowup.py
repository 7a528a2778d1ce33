from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Literal, get_args

import numpy as np

from .darboux_core import DarbouxSystem, build_normal_form
from .exceptions import DegeneracyError, DomainError
from .logger import logger
from .oval_tracer import find_center

DirectionalChart = Literal["W1", "W2", "W3"]
QuasiHomogeneousChart = Literal["tau1", "tau2", "tau3", "V_b1", "V_c1", "V_a3", "V_b3"]
ChartName = Literal[DirectionalChart, QuasiHomogeneousChart]
SaddleLabel = Literal["p+", "p-", "q+", "q-"]
PhiTag = Literal["J/logλ", "J1/logλ", "J2"]

DIRECTIONAL_CHARTS: tuple[str, ...] = get_args(DirectionalChart)
QH_CHARTS: tuple[str, ...] = get_args(QuasiHomogeneousChart)

Triple = tuple[float, float, float]


@dataclass(frozen=True)
class ChartPoint:
    chart: ChartName
    coords: Triple

    def __post_init__(self) -> None:
        if self.chart not in DIRECTIONAL_CHARTS + QH_CHARTS:
            raise ValueError(f"Unknown chart {self.chart!r}")
        object.__setattr__(self, "coords", tuple(float(c) for c in self.coords))


@dataclass(frozen=True)
class NormalFormExponents:
    """Exponents (ε, ε₊, ε₋) of the normal form (x − λ)^ε (y − x)^{ε₊} (y + x)^{ε₋} Δ."""

    eps: float
    eps_plus: float
    eps_minus: float

    @property
    def a(self) -> float:
        return self.eps + self.eps_plus + self.eps_minus

    @classmethod
    def of(cls, sys: DarbouxSystem) -> NormalFormExponents:
        eps, eps_plus, eps_minus = sys.exponents[:3]
        return cls(eps, eps_plus, eps_minus)


def chart_map(cp: ChartPoint) -> Triple:
    """Blow-down of a directional chart point to (x, y, λ).

    W₁: (u, uv, uw). W₂: (uv, v, wv). W₃: (uw, vw, w).
    """
    u, v, w = cp.coords
    if cp.chart == "W1":
        return u, u * v, u * w
    if cp.chart == "W2":
        return u * v, v, w * v
    if cp.chart == "W3":
        return u * w, v * w, w
    raise DomainError(f"chart_map expects a directional chart, got {cp.chart}")


def chart_inverse(chart: DirectionalChart, point: Triple) -> ChartPoint:
    """The chart coordinates of a point (x, y, λ) visible in `chart`.

    Raises:
        DomainError: if the point is not visible in the chart (its dividing coordinate is 0).
    """
    x, y, lam = point
    divisor = {"W1": x, "W2": y, "W3": lam}[chart]
    if divisor == 0.0:
        raise DomainError(f"Point {point} is not visible in chart {chart}")
    if chart == "W1":
        return ChartPoint("W1", (x, y / x, lam / x))
    if chart == "W2":
        return ChartPoint("W2", (x / y, y, lam / y))
    return ChartPoint("W3", (x / lam, y / lam, lam))


def chart_transition(cp: ChartPoint, target: DirectionalChart) -> ChartPoint:
    return chart_inverse(target, chart_map(cp))


def _abs_h(sys: DarbouxSystem, x: float, y: float) -> float:
    # |H| on raw factors; chart points off the nest have factors of either sign.
    total = 0.0
    for index, factor in enumerate(sys.factors):
        value = abs(factor.polynomial.value(x, y))
        if value == 0.0:
            raise DomainError(f"Factor {index} vanishes at ({x}, {y})", index)
        total += factor.exponent * math.log(value)
    if sys.unit_factor is not None:
        total += math.log(abs(sys.unit_factor.value(x, y)))
    return math.exp(total)


def pullback_H(sys: DarbouxSystem, cp: ChartPoint) -> float:
    """|H| ∘ σ at a directional chart point, with the scenario taken at λ of the blow-down."""
    x, y, lam = chart_map(cp)
    if lam < 0:
        raise DomainError(f"Chart point {cp.coords} blows down to λ={lam} < 0")
    return _abs_h(sys.with_lambda(lam), x, y)


def exceptional_G(
    exponents: NormalFormExponents, v1: float, w1: float, unit_value: float = 1.0
) -> float:
    """G = w^a (1 − w)^{−ε} (1 − v)^{−ε₊} (1 + v)^{−ε₋} Δ̃^{−1} on the interior of the square Q.

    Raises:
        DomainError: unless −1 < v1 < 1 and 0 < w1 < 1.
    """
    if not (-1.0 < v1 < 1.0 and 0.0 < w1 < 1.0):
        raise DomainError(f"(v1, w1)=({v1}, {w1}) is not interior to the square Q")
    e = exponents
    log_g = (
        e.a * math.log(w1)
        - e.eps * math.log1p(-w1)
        - e.eps_plus * math.log1p(-v1)
        - e.eps_minus * math.log1p(v1)
    )
    return math.exp(log_g) / unit_value


def g_identity_residual(sys: DarbouxSystem, cp: ChartPoint) -> float:
    """Relative residual of G·(H∘σ₁) = (u₁w₁)ᵃ at a W₁ point of the square Q."""
    if cp.chart != "W1":
        raise DomainError("The G identity lives in chart W1")
    u, v, w = cp.coords
    x, y, lam = chart_map(cp)
    local = sys.with_lambda(lam)
    exponents = NormalFormExponents.of(sys)
    unit = abs(local.unit_factor.value(x, y)) if local.unit_factor is not None else 1.0
    lhs = exceptional_G(exponents, v, w, unit) * _abs_h(local, x, y)
    rhs = (u * w) ** exponents.a
    return abs(lhs - rhs) / abs(rhs)


def rescaled_t(lam: float, h: float, a: float) -> float:
    """t = λᵃ / h."""
    if lam <= 0 or h <= 0:
        raise DomainError(f"t = λ^a/h needs λ > 0 and h > 0, got λ={lam}, h={h}")
    return lam**a / h


@dataclass(frozen=True)
class SaddleData:
    """Linearization of the blown-up foliation at one of the corners of Q."""

    label: SaddleLabel
    location: ChartPoint
    eigen: Triple
    """Eigenvalues along (u₁, v₁, w₁), scaled so the first nonzero entry matches `reference`."""

    raw_eigen: Triple
    """Eigenvalues of the polynomial direction field, before scaling."""

    reference: Triple
    """The formula the scaling is anchored to: the X± field of the proof at p±, the stated ν± at
    q±."""

    printed: Triple
    """The eigenvalues as stated for this point."""

    @property
    def matches_printed(self) -> bool:
        return bool(np.allclose(self.eigen, self.printed, rtol=1e-8, atol=1e-10))

    @property
    def zero_directions(self) -> tuple[int, ...]:
        """Axes with a vanishing eigenvalue (saddle-node directions along the divisor)."""
        return tuple(i for i, value in enumerate(self.eigen) if abs(value) < 1e-10)

    @property
    def resonance_free(self) -> bool:
        values = sorted(self.eigen)
        return all(abs(b - a) > 1e-8 for a, b in zip(values, values[1:]))


SADDLE_LOCATIONS: dict[str, Triple] = {
    "p+": (0.0, 1.0, 0.0),
    "p-": (0.0, -1.0, 0.0),
    "q+": (0.0, 1.0, 1.0),
    "q-": (0.0, -1.0, 1.0),
}


def _references(label: str, e: NormalFormExponents) -> tuple[Triple, Triple]:
    """(reference, printed) eigenvalue triples for a corner of Q."""
    a = e.a
    if label == "p+":
        return (e.eps_plus, -a, -e.eps_plus), (e.eps_plus, -a, -e.eps_minus)
    if label == "p-":
        return (-e.eps_minus, a, e.eps_minus), (-e.eps_minus, a, e.eps_minus)
    if label == "q+":
        return (0.0, -e.eps, e.eps_plus), (0.0, -e.eps, e.eps_plus)
    return (0.0, -e.eps, e.eps_minus), (0.0, -e.eps, e.eps_minus)


def direction_field(exponents: NormalFormExponents, p: Triple) -> Triple:
    """The foliation in chart W₁, as the cross product of ∇log|H∘σ₁| and ∇(u₁w₁) with the poles
    on v₁ = ±1 and w₁ = 1 cleared.
    """
    u, v, w = p
    e = exponents
    b = e.eps_plus * (v + 1.0) + e.eps_minus * (v - 1.0)
    d = v * v - 1.0
    return (
        u * (1.0 - w) * b,
        d * (-e.eps * w - e.a * (1.0 - w)),
        -w * (1.0 - w) * b,
    )


def _jacobian(exponents: NormalFormExponents, p: Triple, step: float = 1e-6) -> np.ndarray:
    jac = np.zeros((3, 3))
    for k in range(3):
        forward, backward = list(p), list(p)
        forward[k] += step
        backward[k] -= step
        jac[:, k] = (
            np.array(direction_field(exponents, tuple(forward)))  # type: ignore[arg-type]
            - np.array(direction_field(exponents, tuple(backward)))  # type: ignore[arg-type]
        ) / (2 * step)
    return jac


def saddle_eigen(label: SaddleLabel, exponents: NormalFormExponents) -> SaddleData:
    """Numerically linearize the blown-up foliation at p±, q± and order the eigenvalues along
    the (u₁, v₁, w₁) axes.

    Raises:
        DegeneracyError: if the linearization is not diagonalizable.
    """
    location = SADDLE_LOCATIONS[label]
    jac = _jacobian(exponents, location)
    values, vectors = np.linalg.eig(jac)
    if np.linalg.cond(vectors) > 1e8:
        raise DegeneracyError(f"The linearization at {label} is not diagonalizable")

    ordered = [0.0, 0.0, 0.0]
    used: set[int] = set()
    for axis in range(3):
        candidates = [k for k in range(3) if k not in used]
        best = max(candidates, key=lambda k: abs(vectors[axis, k]))
        used.add(best)
        ordered[axis] = float(np.real(values[best]))
    raw = (ordered[0], ordered[1], ordered[2])

    reference, printed = _references(label, exponents)
    anchor = next(i for i, value in enumerate(reference) if value != 0.0)
    if raw[anchor] == 0.0:
        raise DegeneracyError(f"Eigenvalue {anchor} vanishes at {label}")
    factor = reference[anchor] / raw[anchor]
    eigen = (raw[0] * factor, raw[1] * factor, raw[2] * factor)
    return SaddleData(
        label=label,
        location=ChartPoint("W1", location),
        eigen=eigen,
        raw_eigen=raw,
        reference=reference,
        printed=printed,
    )


def qh_chart_map(cp: ChartPoint) -> Triple:
    """(a, b, c) from a quasi-homogeneous chart point, weights (1/2, 1, 1/2).

    τ₁: (√a₁, b₁a₁, c₁√a₁). τ₂: (a₂√b₂, b₂, c₂√b₂). τ₃: (a₃√c₃, b₃c₃, √c₃). The V charts are the
    second blow-up, composed with τ₁ or τ₃.

    Raises:
        DomainError: on a negative radicand.
    """
    p, q, r = cp.coords
    chart = cp.chart
    if chart in ("V_b1", "V_c1", "V_a3", "V_b3"):
        return qh_chart_map(_second_blowdown(cp))
    radicand = {"tau1": p, "tau2": q, "tau3": r}.get(chart)
    if radicand is None:
        raise DomainError(f"qh_chart_map expects a quasi-homogeneous chart, got {chart}")
    if radicand < 0:
        raise DomainError(f"Negative radicand {radicand} in chart {chart}")
    root = math.sqrt(radicand)
    if chart == "tau1":
        return root, q * p, r * root
    if chart == "tau2":
        return p * root, q, r * root
    return p * root, q * r, root


def _second_blowdown(cp: ChartPoint) -> ChartPoint:
    at, bt, ct = cp.coords
    if cp.chart == "V_b1":
        return ChartPoint("tau1", (at, bt, bt * ct))
    if cp.chart == "V_c1":
        return ChartPoint("tau1", (at, bt * ct, ct))
    if cp.chart == "V_a3":
        return ChartPoint("tau3", (at, at * bt, ct))
    if cp.chart == "V_b3":
        return ChartPoint("tau3", (at * bt, at, ct))
    raise DomainError(f"{cp.chart} is not a second blow-up chart")


PHI_TAGS: dict[str, PhiTag] = {
    "tau2": "J/logλ",
    "V_b1": "J2",
    "V_c1": "J1/logλ",
    "V_a3": "J1/logλ",
    "V_b3": "J1/logλ",
}
"""Which representative of ψ each chart sees near its divisor."""


def qh_total_transform(cp: ChartPoint) -> tuple[float, float]:
    """(divisor factor, strict factor) of ψ(a, b, c) = ca + b pulled back to the chart.

    The product equals ψ at the blown-down point.
    """
    p, q, r = cp.coords
    if cp.chart == "tau1":
        return p, r + q
    if cp.chart == "tau2":
        return q, p * r + 1.0
    if cp.chart == "tau3":
        return r, p + q
    if cp.chart == "V_b1":
        return p * q, r + 1.0
    if cp.chart == "V_c1":
        return p * r, 1.0 + q
    if cp.chart in ("V_a3", "V_b3"):
        return r * p, 1.0 + q
    raise DomainError(f"qh_total_transform expects a quasi-homogeneous chart, got {cp.chart}")


def psi(a: float, b: float, c: float) -> float:
    return c * a + b


def psi_reduction(j1: float, j2: float, log_lambda: float) -> tuple[float, PhiTag]:
    """ψ = J₁/log λ + J₂ = J/log λ, with the representative of the φ set the value reduces to.

    Raises:
        DomainError: unless log λ < 0 (λ in (0, 1)).
    """
    if not log_lambda < 0:
        raise DomainError(f"ψ reduction needs λ in (0, 1), got log λ={log_lambda}")
    value = j1 / log_lambda + j2
    tag: PhiTag
    if j2 == 0.0:
        tag = "J1/logλ"
    elif j1 == 0.0:
        tag = "J2"
    else:
        tag = "J/logλ"
    return value, tag


@dataclass
class BlowupReport:
    exponents: NormalFormExponents
    g_identity_max_residual: float
    qh_identity_max_residual: float
    chart_roundtrip_max_residual: float
    nest_top_t: dict[float, float] = field(default_factory=dict)
    saddles: list[SaddleData] = field(default_factory=list)

    @property
    def discrepancies(self) -> list[SaddleData]:
        """Corners where the computed eigenvalues disagree with the stated ones."""
        return [s for s in self.saddles if not s.matches_printed]

    def rows(self) -> list[tuple[str, ...]]:
        """Rows `(item, value, detail)` of the report table."""
        rows: list[tuple[str, ...]] = [
            ("g_identity_max_residual", f"{self.g_identity_max_residual:.3e}", ""),
            ("qh_identity_max_residual", f"{self.qh_identity_max_residual:.3e}", ""),
            ("chart_roundtrip_max_residual", f"{self.chart_roundtrip_max_residual:.3e}", ""),
        ]
        for lam, t in sorted(self.nest_top_t.items()):
            rows.append((f"nest_top_t[lambda={lam:g}]", repr(t), ""))
        for s in self.saddles:
            detail = (
                f"printed={_fmt(s.printed)} reference={_fmt(s.reference)} "
                f"matches_printed={s.matches_printed} zero_directions={list(s.zero_directions)}"
            )
            rows.append((f"eigen[{s.label}]", _fmt(s.eigen), detail))
        return rows


def _fmt(values: Sequence[float]) -> str:
    return "(" + ", ".join(f"{v:.10g}" for v in values) + ")"


def blowup_report(
    exponents: NormalFormExponents,
    samples: int = 1000,
    seed: int = 0,
    lambdas: Sequence[float] = (1.0, 0.1, 0.01),
) -> BlowupReport:
    """Chart identities, nest-top t values and corner linearizations for one set of exponents."""
    rng = np.random.default_rng(seed)
    sys = build_normal_form(exponents.eps, exponents.eps_plus, exponents.eps_minus, 1.0)

    g_residual = 0.0
    roundtrip = 0.0
    for u, v, w in zip(
        rng.uniform(0.05, 1.0, samples),
        rng.uniform(-0.95, 0.95, samples),
        rng.uniform(0.05, 0.95, samples),
    ):
        cp = ChartPoint("W1", (u, v, w))
        g_residual = max(g_residual, g_identity_residual(sys, cp))
        for target in ("W2", "W3"):
            back = chart_transition(chart_transition(cp, target), "W1")  # type: ignore[arg-type]
            roundtrip = max(roundtrip, max(abs(p - q) for p, q in zip(back.coords, cp.coords)))

    qh_residual = 0.0
    for chart in QH_CHARTS:
        for p, q, r in zip(
            rng.uniform(0.01, 2.0, samples // 10 or 1),
            rng.uniform(0.01, 2.0, samples // 10 or 1),
            rng.uniform(0.01, 2.0, samples // 10 or 1),
        ):
            cp = ChartPoint(chart, (p, q, r))  # type: ignore[arg-type]
            divisor, strict = qh_total_transform(cp)
            direct = psi(*qh_chart_map(cp))
            relative = abs(divisor * strict - direct) / max(abs(direct), 1e-300)
            qh_residual = max(qh_residual, relative)

    top: dict[float, float] = {}
    for lam in lambdas:
        nest = find_center(sys.with_lambda(lam))
        top[lam] = rescaled_t(lam, nest.h_max, exponents.a)

    saddles = [saddle_eigen(label, exponents) for label in ("p+", "p-", "q+", "q-")]
    report = BlowupReport(
        exponents=exponents,
        g_identity_max_residual=g_residual,
        qh_identity_max_residual=qh_residual,
        chart_roundtrip_max_residual=roundtrip,
        nest_top_t=top,
        saddles=saddles,
    )
    for s in report.discrepancies:
        logger.info(
            f"Eigenvalues at {s.label} are {_fmt(s.eigen)}; the stated values are {_fmt(s.printed)}"
        )
    return report
