"""Second-order forward-mode dual numbers in two spatial variables.

A :class:`DualScalar2` carries a value together with its gradient and its
Hessian with respect to ``(x, y)``.  The Hessian is stored as the triple
``(xx, xy, yy)`` so symmetry holds by construction.  All fields may be numpy
arrays with a common leading shape, which lets a whole batch of query points
flow through one network evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _outer_sym(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Symmetrised outer product a b^T + b a^T, halved, as an (xx, xy, yy) triple."""
    return np.stack(
        [
            a[..., 0] * b[..., 0],
            0.5 * (a[..., 0] * b[..., 1] + a[..., 1] * b[..., 0]),
            a[..., 1] * b[..., 1],
        ],
        axis=-1,
    )


@dataclass(frozen=True)
class DualScalar2:
    value: np.ndarray
    d1: np.ndarray  # (..., 2)
    d2: np.ndarray  # (..., 3) as xx, xy, yy

    @classmethod
    def coordinates(cls, points: np.ndarray) -> "DualScalar2":
        """Seed the coordinates of ``points`` (shape (N, 2)) as a length-2 dual vector.

        The result has value shape (N, 2), d1 shape (N, 2, 2) and d2 shape (N, 2, 3).
        """
        pts = np.asarray(points, dtype=float)
        n = pts.shape[0]
        d1 = np.broadcast_to(np.eye(2), (n, 2, 2)).copy()
        return cls(pts, d1, np.zeros((n, 2, 3)))

    @classmethod
    def constant(cls, c) -> "DualScalar2":
        c = np.asarray(c, dtype=float)
        return cls(c, np.zeros(c.shape + (2,)), np.zeros(c.shape + (3,)))

    def component(self, i: int) -> "DualScalar2":
        """Entry ``i`` along the last value axis of a dual vector."""
        return DualScalar2(self.value[..., i], self.d1[..., i, :], self.d2[..., i, :])

    @staticmethod
    def _lift(other) -> "DualScalar2":
        if isinstance(other, DualScalar2):
            return other
        return DualScalar2.constant(other)

    def __add__(self, other):
        if not isinstance(other, DualScalar2):
            return DualScalar2(self.value + other, self.d1, self.d2)
        return DualScalar2(self.value + other.value, self.d1 + other.d1, self.d2 + other.d2)

    __radd__ = __add__

    def __neg__(self):
        return DualScalar2(-self.value, -self.d1, -self.d2)

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, DualScalar2):
            c = np.asarray(other, dtype=float)
            return DualScalar2(self.value * c, self.d1 * c[..., None], self.d2 * c[..., None])
        u, v = self, other
        value = u.value * v.value
        d1 = u.d1 * v.value[..., None] + v.d1 * u.value[..., None]
        d2 = (
            u.d2 * v.value[..., None]
            + v.d2 * u.value[..., None]
            + 2.0 * _outer_sym(u.d1, v.d1)
        )
        return DualScalar2(value, d1, d2)

    __rmul__ = __mul__

    def apply(self, f0, f1, f2) -> "DualScalar2":
        """Chain rule for a scalar function with value f0, derivative f1, second derivative f2."""
        d1 = f1[..., None] * self.d1
        d2 = f1[..., None] * self.d2 + f2[..., None] * _outer_sym(self.d1, self.d1)
        return DualScalar2(f0, d1, d2)

    def __truediv__(self, other):
        if not isinstance(other, DualScalar2):
            return self * (1.0 / np.asarray(other, dtype=float))
        v = other.value
        return self * other.apply(1.0 / v, -1.0 / v**2, 2.0 / v**3)

    def __rtruediv__(self, other):
        v = self.value
        return self.apply(1.0 / v, -1.0 / v**2, 2.0 / v**3) * other


def sin(u: DualScalar2) -> DualScalar2:
    s, c = np.sin(u.value), np.cos(u.value)
    return u.apply(s, c, -s)


def cos(u: DualScalar2) -> DualScalar2:
    s, c = np.sin(u.value), np.cos(u.value)
    return u.apply(c, -s, -c)


def sqrt(u: DualScalar2) -> DualScalar2:
    r = np.sqrt(u.value)
    return u.apply(r, 0.5 / r, -0.25 / (r * u.value))


def affine(inputs: DualScalar2, weight: np.ndarray, bias: np.ndarray) -> DualScalar2:
    """Dense layer ``W a + b`` on a vector of duals stored along the last value axis.

    ``inputs`` holds values of shape (N, fan_in), d1 of shape (N, fan_in, 2) and
    d2 of shape (N, fan_in, 3).  The map is linear, so every component is pushed
    through the same matrix.
    """
    wt = np.asarray(weight).T
    value = inputs.value @ wt + bias
    d1 = np.einsum("nik,io->nok", inputs.d1, wt)
    d2 = np.einsum("nik,io->nok", inputs.d2, wt)
    return DualScalar2(value, d1, d2)
