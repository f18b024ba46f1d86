"""Closest-point projection onto a zero level set.

Two routes are provided: the Newton normal iteration
``x <- x - psi(x) grad psi(x) / |grad psi(x)|^2`` and an RK4 integration of
the normalised gradient flow along which ``psi`` changes at unit rate.  They
are independent and serve as oracles for each other.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from simready.errors import ConfigError
from simready.field import DEFAULT_BBOX, ImplicitField, as_points
from simready.regularity import grid_points

TOL_DEFAULT = 1e-10
MAX_ITER_DEFAULT = 50
GRAD_FLOOR_DEFAULT = 1e-6
FLOW_DT_DEFAULT = 1e-2

CONVERGED = "converged"
MAX_ITER = "max_iter"
GRAD_FLOOR = "grad_floor"
NONFINITE = "nonfinite"


@dataclass
class ProjectionResult:
    converged: bool
    final_point: np.ndarray
    signed_distance: float
    iterations: int
    residual: float
    reason: str
    psi_history: list[float] = field(default_factory=list)


@dataclass
class BatchProjection:
    """Vectorised outcome of projecting many starting points."""

    converged: np.ndarray
    final_points: np.ndarray
    signed_distance: np.ndarray
    iterations: np.ndarray
    residual: np.ndarray
    reason: np.ndarray  # object array of reason codes


def newton_project_many(
    field: ImplicitField,
    x0,
    tol: float = TOL_DEFAULT,
    max_iter: int = MAX_ITER_DEFAULT,
    grad_floor: float = GRAD_FLOOR_DEFAULT,
) -> BatchProjection:
    if not tol > 0:
        raise ConfigError("tol must be positive")
    if max_iter < 1:
        raise ConfigError("max_iter must be at least 1")
    x0 = as_points(x0)
    n = len(x0)
    x = x0.copy()
    iters = np.zeros(n, dtype=int)
    residual = np.full(n, np.nan)
    reason = np.full(n, MAX_ITER, dtype=object)
    active = np.ones(n, dtype=bool)
    sign0 = None
    for k in range(max_iter + 1):
        idx = np.nonzero(active)[0]
        if len(idx) == 0:
            break
        v, g = field.gradients(x[idx])
        if sign0 is None:
            sign0 = np.sign(v)
        residual[idx] = np.abs(v)
        done = np.abs(v) <= tol
        reason[idx[done]] = CONVERGED
        gn2 = np.einsum("ij,ij->i", g, g)
        bad = ~done & ~(np.isfinite(gn2) & np.isfinite(v))
        reason[idx[bad]] = NONFINITE
        flat = ~done & ~bad & (np.sqrt(gn2) < grad_floor)
        reason[idx[flat]] = GRAD_FLOOR
        stop = done | bad | flat
        if k == max_iter:
            stop[:] = True
        active[idx[stop]] = False
        go = ~stop
        if not go.any():
            break
        j = idx[go]
        x[j] = x[j] - (v[go] / gn2[go])[:, None] * g[go]
        iters[j] += 1
    converged = reason == CONVERGED
    dist = np.linalg.norm(x0 - x, axis=1) * sign0
    return BatchProjection(converged, x, dist, iters, residual, reason)


def newton_project(
    field: ImplicitField,
    x0,
    tol: float = TOL_DEFAULT,
    max_iter: int = MAX_ITER_DEFAULT,
    grad_floor: float = GRAD_FLOOR_DEFAULT,
) -> ProjectionResult:
    b = newton_project_many(field, as_points(x0)[:1], tol, max_iter, grad_floor)
    return ProjectionResult(
        bool(b.converged[0]),
        b.final_points[0],
        float(b.signed_distance[0]),
        int(b.iterations[0]),
        float(b.residual[0]),
        str(b.reason[0]),
    )


def _flow_rhs(field: ImplicitField, x: np.ndarray, direction: float) -> tuple[np.ndarray, float]:
    _, g = field.gradients(x[None, :])
    g = g[0]
    gn2 = float(g @ g)
    return -direction * g / gn2, np.sqrt(gn2)


def flow_project(
    field: ImplicitField,
    x0,
    dt: float = FLOW_DT_DEFAULT,
    tol: float = TOL_DEFAULT,
    max_steps: int = 10_000,
    grad_floor: float = GRAD_FLOOR_DEFAULT,
) -> ProjectionResult:
    """Integrate ``x' = -sign(psi0) grad psi / |grad psi|^2`` with classical RK4.

    The time step is ``min(dt, |psi(x)|)``: along the exact flow ``psi``
    reaches zero at time ``|psi0|``, so the last step lands on the zero set up
    to the integration error and later steps are correspondingly tiny.
    """
    if not dt > 0:
        raise ConfigError("dt must be positive")
    x = as_points(x0)[0].copy()
    start = x.copy()
    psi = float(field.values(x[None, :])[0])
    direction = float(np.sign(psi))
    history = [psi]
    reason = MAX_ITER
    steps = 0
    while steps <= max_steps:
        if abs(psi) <= tol:
            reason = CONVERGED
            break
        if steps == max_steps:
            break
        if not np.isfinite(psi):
            reason = NONFINITE
            break
        tau = min(dt, abs(psi))
        k1, gn = _flow_rhs(field, x, direction)
        if not np.isfinite(gn):
            reason = NONFINITE
            break
        if gn < grad_floor:
            reason = GRAD_FLOOR
            break
        k2, _ = _flow_rhs(field, x + 0.5 * tau * k1, direction)
        k3, _ = _flow_rhs(field, x + 0.5 * tau * k2, direction)
        k4, _ = _flow_rhs(field, x + tau * k3, direction)
        x = x + tau / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        psi = float(field.values(x[None, :])[0])
        history.append(psi)
        steps += 1
    return ProjectionResult(
        reason == CONVERGED,
        x,
        float(direction * np.linalg.norm(start - x)),
        steps,
        abs(psi),
        reason,
        history,
    )


@dataclass
class ProjectionMap:
    bbox: tuple[float, float, float, float]
    res: int
    success_mask: np.ndarray  # (res, res), row = y index
    error_field: np.ndarray  # (res, res), NaN where unsuccessful
    truth: str
    points: np.ndarray  # (res*res, 2)

    @property
    def success_fraction(self) -> float:
        return float(self.success_mask.mean())


def success_map(
    field: ImplicitField,
    truth,
    bbox=DEFAULT_BBOX,
    res: int = 256,
    tol: float = TOL_DEFAULT,
    success_radius: float | None = None,
    max_iter: int = MAX_ITER_DEFAULT,
    grad_floor: float = GRAD_FLOOR_DEFAULT,
    truth_name: str = "unit_circle",
) -> ProjectionMap:
    """Newton success mask and closest-point error over a ``res x res`` grid.

    A point succeeds when Newton converges and lands within ``success_radius``
    of ``truth(x0)``; the default radius is ``1e-4`` times the box width.
    """
    if success_radius is None:
        success_radius = 1e-4 * (bbox[1] - bbox[0])
    pts, _ = grid_points(bbox, res)
    b = newton_project_many(field, pts, tol, max_iter, grad_floor)
    target = truth(pts)
    err = np.linalg.norm(b.final_points - target, axis=1)
    ok = b.converged & np.isfinite(err) & (err <= success_radius)
    err_field = np.where(ok, err, np.nan)
    return ProjectionMap(
        tuple(bbox), res, ok.reshape(res, res), err_field.reshape(res, res), truth_name, pts
    )
