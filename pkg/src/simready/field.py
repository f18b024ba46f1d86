"""Implicit scalar fields in 2D with exact value, gradient and Hessian.

Every field exposes vectorised ``values(points)`` and ``jets(points)`` methods
over arrays of shape (N, 2); :func:`eval_jet` is the single-point convenience.
Hessians are returned as ``(xx, xy, yy)`` triples.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from simready.errors import ConfigError, SingularPointError
from simready.mlp import MlpWeights, forward, forward_dual

# Background box D = [-2, 2]^2 as (xmin, xmax, ymin, ymax).
DEFAULT_BBOX = (-2.0, 2.0, -2.0, 2.0)


class Point2(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True)
class Jet2:
    value: float
    grad: np.ndarray
    hess: np.ndarray  # (xx, xy, yy)

    def hess_matrix(self) -> np.ndarray:
        h = self.hess
        return np.array([[h[0], h[1]], [h[1], h[2]]])


def hess_opnorm(h: np.ndarray) -> np.ndarray:
    """Spectral norm of symmetric 2x2 matrices given as (..., 3) triples."""
    a, b, c = h[..., 0], h[..., 1], h[..., 2]
    mean = 0.5 * (a + c)
    rad = np.hypot(0.5 * (a - c), b)
    return np.abs(mean) + rad


def as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[None, :]
    if pts.shape[-1] != 2:
        raise ConfigError(f"points must have shape (N, 2), got {pts.shape}")
    return pts


class ImplicitField:
    """Base class; subclasses implement :meth:`jets` and usually a cheaper :meth:`values`."""

    ident: str = "field"

    def values(self, points) -> np.ndarray:
        return self.jets(points)[0]

    def jets(self, points) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        raise NotImplementedError

    def gradients(self, points) -> tuple[np.ndarray, np.ndarray]:
        v, g, _ = self.jets(points)
        return v, g

    def singular(self, points) -> np.ndarray:
        """Mask of points where derivatives do not exist (jets are NaN there)."""
        return np.zeros(len(as_points(points)), dtype=bool)


class _Radial(ImplicitField):
    def singular(self, points) -> np.ndarray:
        pts = as_points(points)
        return (pts[:, 0] == 0.0) & (pts[:, 1] == 0.0)


def _radial_jets(pts, profile):
    """Jets of ``f(r)`` for a radial profile returning (f, f', f''); NaN derivatives at r = 0."""
    r = np.hypot(pts[:, 0], pts[:, 1])
    f0, f1, f2 = profile(r)
    with np.errstate(divide="ignore", invalid="ignore"):
        n = pts / r[:, None]
        tang = f1 / r
    grad = f1[:, None] * n
    hess = np.stack(
        [
            f2 * n[:, 0] ** 2 + tang * (1.0 - n[:, 0] ** 2),
            (f2 - tang) * n[:, 0] * n[:, 1],
            f2 * n[:, 1] ** 2 + tang * (1.0 - n[:, 1] ** 2),
        ],
        axis=-1,
    )
    return f0, grad, hess


@dataclass(frozen=True)
class CircleSdf(_Radial):
    """Signed distance to the circle of radius ``radius``: ``|x| - R``."""

    radius: float = 1.0

    @property
    def ident(self) -> str:
        return f"circle_sdf(R={self.radius:g})"

    def values(self, points) -> np.ndarray:
        pts = as_points(points)
        return np.hypot(pts[:, 0], pts[:, 1]) - self.radius

    def jets(self, points):
        pts = as_points(points)
        return _radial_jets(pts, lambda r: (r - self.radius, np.ones_like(r), np.zeros_like(r)))


@dataclass(frozen=True)
class Quadratic(ImplicitField):
    """Non-eikonal field ``|x|^2 - R^2`` sharing the circle's zero set."""

    radius: float = 1.0

    @property
    def ident(self) -> str:
        return f"quadratic(R={self.radius:g})"

    def values(self, points) -> np.ndarray:
        pts = as_points(points)
        return pts[:, 0] ** 2 + pts[:, 1] ** 2 - self.radius**2

    def jets(self, points):
        pts = as_points(points)
        n = len(pts)
        hess = np.tile([2.0, 0.0, 2.0], (n, 1))
        return self.values(pts), 2.0 * pts, hess


@dataclass(frozen=True)
class Banded(_Radial):
    """Circle SDF inside a band, flattened to slope ``far_slope`` outside twice the band.

    With ``s = r - R`` and ``t = (|s| - band)/band``, the radial profile is
    ``|s|`` for ``|s| <= band``, a cubic Hermite ramp on the transition with
    slope ``far_slope + (1 - far_slope)(1 - t)^2`` (value and slope continuous
    at ``t = 0``, slope and curvature continuous at ``t = 1``), and linear with
    slope ``far_slope`` beyond ``2 band``.  The profile is C^1 in ``s``, monotone
    and odd, so the zero set is the circle exactly.
    """

    radius: float = 1.0
    band: float = 0.2
    far_slope: float = 0.02

    @property
    def ident(self) -> str:
        return f"banded(R={self.radius:g},band={self.band:g},far={self.far_slope:g})"

    def _profile(self, r):
        s = r - self.radius
        a = np.abs(s)
        sign = np.sign(s)
        b, k = self.band, self.far_slope
        t = np.clip((a - b) / b, 0.0, 1.0)
        u = 1.0 - t
        ramp = b * (1.0 + k * t + (1.0 - k) * (1.0 - u**3) / 3.0)
        end = b * (1.0 + k + (1.0 - k) / 3.0)  # profile value at |s| = 2 band
        inner = a <= b
        far = a >= 2 * b
        mag = np.where(inner, a, np.where(far, end + k * (a - 2 * b), ramp))
        slope = np.where(inner, 1.0, np.where(far, k, k + (1.0 - k) * u**2))
        curv = np.where(inner | far, 0.0, -2.0 * (1.0 - k) * u / b)
        return sign * mag, slope, sign * curv

    def values(self, points) -> np.ndarray:
        pts = as_points(points)
        return self._profile(np.hypot(pts[:, 0], pts[:, 1]))[0]

    def jets(self, points):
        return _radial_jets(as_points(points), self._profile)


def make_banded(radius: float, band: float, far_slope: float) -> Banded:
    if not 0.0 < band < radius:
        raise ConfigError(f"band must satisfy 0 < band < R, got band={band}, R={radius}")
    if not 0.0 <= far_slope < 1.0:
        raise ConfigError(f"far_slope must satisfy 0 <= far_slope < 1, got {far_slope}")
    return Banded(float(radius), float(band), float(far_slope))


@dataclass(frozen=True)
class Offset(ImplicitField):
    """``base - alpha``: shifts the value only."""

    base: ImplicitField
    alpha: float

    @property
    def ident(self) -> str:
        return f"offset({self.base.ident},alpha={self.alpha:g})"

    def values(self, points) -> np.ndarray:
        return self.base.values(points) - self.alpha

    def jets(self, points):
        v, g, h = self.base.jets(points)
        return v - self.alpha, g, h

    def singular(self, points):
        return self.base.singular(points)


@dataclass(frozen=True, eq=False)
class Scaled(ImplicitField):
    """``factor * base``; same zero set for positive factors."""

    base: ImplicitField
    factor: float

    @property
    def ident(self) -> str:
        return f"scaled({self.base.ident},{self.factor:g})"

    def values(self, points) -> np.ndarray:
        return self.factor * self.base.values(points)

    def jets(self, points):
        v, g, h = self.base.jets(points)
        return self.factor * v, self.factor * g, self.factor * h

    def singular(self, points):
        return self.base.singular(points)


@dataclass(frozen=True, eq=False)
class Translated(ImplicitField):
    """``base(x - shift)``."""

    base: ImplicitField
    shift: tuple[float, float]

    @property
    def ident(self) -> str:
        return f"translated({self.base.ident},{self.shift[0]:g},{self.shift[1]:g})"

    def values(self, points) -> np.ndarray:
        return self.base.values(as_points(points) - np.asarray(self.shift))

    def jets(self, points):
        return self.base.jets(as_points(points) - np.asarray(self.shift))

    def singular(self, points):
        return self.base.singular(as_points(points) - np.asarray(self.shift))


@dataclass(frozen=True, eq=False)
class Neural(ImplicitField):
    """Field defined by a trained sine network; derivatives by forward-mode duals."""

    weights: MlpWeights
    label: str = "neural"
    chunk: int = 8192

    @property
    def ident(self) -> str:
        return f"{self.label}(steps={self.weights.steps},seed={self.weights.seed})"

    def values(self, points) -> np.ndarray:
        pts = as_points(points)
        out = np.empty(len(pts))
        for i in range(0, len(pts), self.chunk * 8):
            out[i : i + self.chunk * 8] = forward(self.weights, pts[i : i + self.chunk * 8])
        return out

    def jets(self, points):
        pts = as_points(points)
        n = len(pts)
        v, g, h = np.empty(n), np.empty((n, 2)), np.empty((n, 3))
        for i in range(0, n, self.chunk):
            d = forward_dual(self.weights, pts[i : i + self.chunk])
            v[i : i + self.chunk] = d.value
            g[i : i + self.chunk] = d.d1
            h[i : i + self.chunk] = d.d2
        return v, g, h


class Constant(ImplicitField):
    """Constant field, mostly useful as a degenerate test case."""

    def __init__(self, c: float):
        self.c = float(c)
        self.ident = f"constant({self.c:g})"

    def jets(self, points):
        n = len(as_points(points))
        return np.full(n, self.c), np.zeros((n, 2)), np.zeros((n, 3))


def eval_jet(field: ImplicitField, p) -> Jet2:
    pts = as_points(p)
    if not np.all(np.isfinite(pts)):
        raise ConfigError(f"point must be finite, got {p}")
    if field.singular(pts)[0]:
        raise SingularPointError(f"{field.ident} has no derivative at {tuple(pts[0])}")
    v, g, h = field.jets(pts)
    return Jet2(float(v[0]), g[0].copy(), h[0].copy())


class FdCheck(NamedTuple):
    grad_rel_err: float
    hess_rel_err: float


def finite_diff_check(field: ImplicitField, p, step: float) -> FdCheck:
    """Central-difference check of :func:`eval_jet` at ``p``.

    The gradient is differenced from values, the Hessian from the analytic
    gradient, each with spacing ``step``.  Errors are relative to the norm of
    the analytic quantity (absolute when that norm is below 1).
    """
    if step <= 0:
        raise ConfigError("step must be positive")
    p = np.asarray(p, dtype=float)
    e = np.eye(2) * step
    stencil = np.array([p + e[0], p - e[0], p + e[1], p - e[1]])
    vals, grads, _ = field.jets(stencil)
    jet = eval_jet(field, p)
    fd_grad = np.array([vals[0] - vals[1], vals[2] - vals[3]]) / (2 * step)
    dgx = (grads[0] - grads[1]) / (2 * step)
    dgy = (grads[2] - grads[3]) / (2 * step)
    fd_hess = np.array([dgx[0], 0.5 * (dgx[1] + dgy[0]), dgy[1]])
    g_scale = max(1.0, float(np.linalg.norm(jet.grad)))
    h_scale = max(1.0, float(np.linalg.norm(jet.hess)))
    return FdCheck(
        float(np.linalg.norm(fd_grad - jet.grad) / g_scale),
        float(np.linalg.norm(fd_hess - jet.hess) / h_scale),
    )


def parse_field(field_id: str) -> ImplicitField:
    """Build a field from a short text id such as ``circle``, ``quadratic:1``,
    ``banded:1,0.2,0.02``, ``offset:circle,0.01`` or a path to a weights JSON file."""
    from pathlib import Path

    from simready.mlp import load_weights

    name, _, args = field_id.partition(":")
    name = name.strip().lower()
    nums = [float(a) for a in args.split(",") if a.strip()] if name != "offset" else []
    if name in ("circle", "circle_sdf", "sdf"):
        return CircleSdf(*(nums or [1.0]))
    if name == "quadratic":
        return Quadratic(*(nums or [1.0]))
    if name == "banded":
        return make_banded(*(nums or [1.0, 0.2, 0.02]))
    if name == "offset":
        base, _, alpha = args.rpartition(",")
        return Offset(parse_field(base), float(alpha))
    if Path(field_id).suffix == ".json" or Path(field_id).exists():
        return Neural(load_weights(field_id), label=Path(field_id).stem)
    raise ConfigError(f"unknown field '{field_id}'")


def unit_circle_closest_point(points) -> np.ndarray:
    """Closest point on the unit circle; the origin maps to NaN."""
    pts = as_points(points)
    r = np.hypot(pts[:, 0], pts[:, 1])
    with np.errstate(divide="ignore", invalid="ignore"):
        out = pts / r[:, None]
    out[r == 0.0] = np.nan
    return out


def circle_closest_point(radius: float = 1.0, center=(0.0, 0.0)):
    c = np.asarray(center, dtype=float)

    def truth(points):
        return c + radius * unit_circle_closest_point(as_points(points) - c)

    return truth

