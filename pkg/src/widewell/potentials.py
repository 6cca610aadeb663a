"""Dimensionless potential models represented by their derivatives.

A potential enters the dynamics only through its derivatives ``U^(n)(x)``
evaluated along trajectories and at the origin, so models expose a single
``derivative(order, x)`` method.  ``U`` is dimensionless: the physical
potential divided by ``m * omega**2 * x_zp**2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import WidewellError

__all__ = ["OrderUnavailable", "DoubleWell", "PolynomialPotential", "eval_derivative",
           "taylor_coefficients"]


class OrderUnavailable(WidewellError, ValueError):
    """A derivative order beyond what the model can supply was requested."""


@dataclass(frozen=True)
class DoubleWell:
    """Symmetric quartic double well ``U(x) = (-x**2 + x**4 / (2 d**2)) / 2``.

    ``d`` is the half-distance between the two minima, in zero-point lengths.
    Wells sit at ``x = +-d`` with depth ``U(+-d) = -d**2 / 4``; the curvature is
    ``U''(0) = -1`` at the hump and ``U''(+-d) = 2`` at the minima.
    """

    d: float

    def __post_init__(self) -> None:
        if not self.d > 0.0:
            raise ValueError(f"well separation d must be positive, got {self.d}")

    @property
    def max_order(self) -> int | None:
        return None  # closed form at every order

    def derivative(self, order: int, x):
        if order < 0:
            raise OrderUnavailable(f"negative derivative order {order}")
        x = np.asarray(x, dtype=float)
        d2 = self.d * self.d
        if order == 0:
            out = 0.5 * (-x * x + x * x * x * x / (2.0 * d2))
        elif order == 1:
            out = -x + x * x * x / d2
        elif order == 2:
            out = -1.0 + 3.0 * x * x / d2
        elif order == 3:
            out = 6.0 * x / d2
        elif order == 4:
            out = np.full_like(x, 6.0 / d2)
        else:
            out = np.zeros_like(x)
        return out if out.ndim else float(out)

    def __call__(self, x):
        return self.derivative(0, x)


@dataclass(frozen=True)
class PolynomialPotential:
    """Potential given as a finite power series ``U(x) = sum_k coeffs[k] x**k``.

    ``max_order`` is the highest derivative order the model vouches for;
    orders between the polynomial degree and ``max_order`` are exactly zero,
    orders beyond raise :class:`OrderUnavailable`.  The default covers one
    order past the degree (and at least order 4) so that decoherence
    coefficient tables for quartic potentials can be built without ceremony.
    """

    coeffs: tuple[float, ...]
    max_order: int = field(default=-1)

    def __post_init__(self) -> None:
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        if len(self.coeffs) == 0:
            raise ValueError("coeffs must hold at least one entry")
        if self.max_order < 0:
            object.__setattr__(self, "max_order", max(self.degree + 1, 4))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def derivative(self, order: int, x):
        if order < 0:
            raise OrderUnavailable(f"negative derivative order {order}")
        if order > self.max_order:
            raise OrderUnavailable(
                f"order {order} beyond supplied max_order {self.max_order}")
        x = np.asarray(x, dtype=float)
        # d^order/dx^order sum c_k x^k = sum_{k>=order} c_k k!/(k-order)! x^(k-order)
        out = np.zeros_like(x)
        for k in range(self.degree, order - 1, -1):
            fall = 1.0
            for j in range(order):
                fall *= (k - j)
            out = out * x + self.coeffs[k] * fall
        return out if out.ndim else float(out)

    def __call__(self, x):
        return self.derivative(0, x)


def eval_derivative(model, order: int, x):
    """Evaluate ``U^(order)`` of ``model`` at ``x`` (scalar or array)."""
    return model.derivative(order, x)


def taylor_coefficients(model, order_max: int) -> np.ndarray:
    """Derivatives of ``U`` at the origin, ``out[n] = U^(n)(0)``, n = 0..order_max."""
    return np.array([model.derivative(n, 0.0) for n in range(order_max + 1)])
