from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Union, overload

import numpy as np
from numpy.polynomial import polynomial as npoly
from numpy.typing import ArrayLike, NDArray
from scipy.signal import convolve2d

Scalar = Union[int, float]


def _actual_degree(coefficients: NDArray[np.float64]) -> int:
    nonzero = np.argwhere(coefficients != 0.0)
    if nonzero.size == 0:
        return 0
    return int(nonzero.sum(axis=1).max())


def _pad_to(coefficients: NDArray[np.float64], shape: tuple[int, int]) -> NDArray[np.float64]:
    padded = np.zeros(shape)
    padded[: coefficients.shape[0], : coefficients.shape[1]] = coefficients
    return padded


@dataclass(frozen=True, eq=False)
class Polynomial2:
    """A real polynomial in two variables, stored as a dense coefficient array where
    `coefficients[i, j]` multiplies `x**i * y**j`.

    Instances are immutable. `degree` is the stated degree bound; it may exceed the degree of the
    nonzero coefficients (the Λ-space bounds of a scenario are stated degrees) but never fall
    below it.
    """

    coefficients: NDArray[np.float64]
    degree: int | None = None

    def __post_init__(self) -> None:
        coefficients = np.array(self.coefficients, dtype=float, copy=True)
        if coefficients.ndim != 2:
            raise ValueError("Polynomial2 coefficients must be a 2-D array")
        coefficients.flags.writeable = False
        object.__setattr__(self, "coefficients", coefficients)

        actual = _actual_degree(coefficients)
        if self.degree is None:
            object.__setattr__(self, "degree", actual)
        elif self.degree < actual:
            raise ValueError(f"Stated degree {self.degree} is below the actual degree {actual}")

    @classmethod
    def from_terms(
        cls, terms: Iterable[Sequence[Scalar]], degree: int | None = None
    ) -> Polynomial2:
        """Build a polynomial from `(i, j, value)` triples. Repeated monomials are summed."""
        triples = [(int(i), int(j), float(v)) for i, j, v in terms]
        if not triples:
            return cls(np.zeros((1, 1)), degree)
        if any(i < 0 or j < 0 for i, j, _ in triples):
            raise ValueError("Monomial exponents must be non-negative")
        shape = (max(i for i, _, _ in triples) + 1, max(j for _, j, _ in triples) + 1)
        coefficients = np.zeros(shape)
        for i, j, value in triples:
            coefficients[i, j] += value
        return cls(coefficients, degree)

    @classmethod
    def constant(cls, value: float) -> Polynomial2:
        return cls(np.array([[float(value)]]))

    @classmethod
    def zero(cls) -> Polynomial2:
        return cls.constant(0.0)

    @classmethod
    def monomial(cls, i: int, j: int, value: float = 1.0) -> Polynomial2:
        return cls.from_terms([(i, j, value)])

    @property
    def actual_degree(self) -> int:
        return _actual_degree(self.coefficients)

    @cached_property
    def terms(self) -> tuple[tuple[int, int, float], ...]:
        """The nonzero monomials as `(i, j, value)`, in row-major order."""
        return tuple(
            (int(i), int(j), float(self.coefficients[i, j]))
            for i, j in np.argwhere(self.coefficients != 0.0)
        )

    def is_zero(self) -> bool:
        return not self.terms

    def to_triples(self) -> list[list[float]]:
        return [[i, j, value] for i, j, value in self.terms]

    @overload
    def __call__(self, x: float, y: float) -> float: ...

    @overload
    def __call__(self, x: ArrayLike, y: ArrayLike) -> NDArray[np.float64]: ...

    def __call__(self, x: Any, y: Any) -> Any:
        result = npoly.polyval2d(x, y, self.coefficients)
        if np.ndim(result) == 0:
            return float(result)
        return result

    def value(self, x: float, y: float) -> float:
        """Scalar evaluation on the sparse term list. This is the hot path of curve tracing, where
        array dispatch would dominate the cost of a low-degree polynomial.
        """
        total = 0.0
        for i, j, c in self.terms:
            total += c * x**i * y**j
        return total

    def deriv(self, dx: int = 0, dy: int = 0) -> Polynomial2:
        coefficients = self.coefficients
        if dx:
            coefficients = npoly.polyder(coefficients, m=dx, axis=0)
        if dy:
            coefficients = npoly.polyder(coefficients, m=dy, axis=1)
        if coefficients.size == 0:
            return Polynomial2.zero()
        degree = max((self.degree or 0) - dx - dy, 0)
        return Polynomial2(coefficients, max(degree, _actual_degree(coefficients)))

    @cached_property
    def grad(self) -> tuple[Polynomial2, Polynomial2]:
        return self.deriv(dx=1), self.deriv(dy=1)

    @cached_property
    def hessian(self) -> tuple[Polynomial2, Polynomial2, Polynomial2]:
        """`(p_xx, p_xy, p_yy)`."""
        return self.deriv(dx=2), self.deriv(dx=1, dy=1), self.deriv(dy=2)

    def __add__(self, other: Polynomial2 | Scalar) -> Polynomial2:
        if not isinstance(other, Polynomial2):
            other = Polynomial2.constant(float(other))
        shape = (
            max(self.coefficients.shape[0], other.coefficients.shape[0]),
            max(self.coefficients.shape[1], other.coefficients.shape[1]),
        )
        total = _pad_to(self.coefficients, shape) + _pad_to(other.coefficients, shape)
        return Polynomial2(total, max(self.degree or 0, other.degree or 0))

    __radd__ = __add__

    def __neg__(self) -> Polynomial2:
        return Polynomial2(-self.coefficients, self.degree)

    def __sub__(self, other: Polynomial2 | Scalar) -> Polynomial2:
        return self + (-other)

    def __rsub__(self, other: Scalar) -> Polynomial2:
        return (-self) + other

    def __mul__(self, other: Polynomial2 | Scalar) -> Polynomial2:
        if isinstance(other, Polynomial2):
            product = convolve2d(self.coefficients, other.coefficients)
            return Polynomial2(product, (self.degree or 0) + (other.degree or 0))
        return Polynomial2(self.coefficients * float(other), self.degree)

    __rmul__ = __mul__

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Polynomial2):
            return NotImplemented
        shape = (
            max(self.coefficients.shape[0], other.coefficients.shape[0]),
            max(self.coefficients.shape[1], other.coefficients.shape[1]),
        )
        return bool(
            np.array_equal(_pad_to(self.coefficients, shape), _pad_to(other.coefficients, shape))
        )

    def __hash__(self) -> int:
        return hash(self.terms)

    def __repr__(self) -> str:
        if not self.terms:
            return "Polynomial2(0)"
        body = " + ".join(f"{c:g}*x^{i}*y^{j}" for i, j, c in self.terms)
        return f"Polynomial2({body}; degree={self.degree})"


X = Polynomial2.monomial(1, 0)
Y = Polynomial2.monomial(0, 1)
ONE = Polynomial2.constant(1.0)


def linear(cx: float, cy: float, c0: float) -> Polynomial2:
    """`cx*x + cy*y + c0`."""
    return Polynomial2.from_terms([(1, 0, cx), (0, 1, cy), (0, 0, c0)])
