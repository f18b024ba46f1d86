"""Sampled certification of gradient non-degeneracy and curvature bounds on a tube."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from simready.errors import ConfigError, EmptyTubeError
from simready.field import DEFAULT_BBOX, ImplicitField, hess_opnorm

C0_MIN_DEFAULT = 0.1
CPSI_MAX_DEFAULT = 100.0


@dataclass
class TubeSampling:
    """Grid points of the box retained where ``|reference(p)| < h_tube``.

    ``index`` holds the (row, col) grid index of every retained point so
    neighbouring pairs can be recovered.
    """

    reference: ImplicitField
    h_tube: float
    grid_res: int
    bbox: tuple[float, float, float, float]
    points: np.ndarray
    index: np.ndarray

    @property
    def spacing(self) -> tuple[float, float]:
        x0, x1, y0, y1 = self.bbox
        return (x1 - x0) / (self.grid_res - 1), (y1 - y0) / (self.grid_res - 1)


@dataclass
class Thresholds:
    c0_min: float = C0_MIN_DEFAULT
    cpsi_max: float = CPSI_MAX_DEFAULT


@dataclass
class RegularityCertificate:
    c0_hat: float
    cpsi_hat: float
    lip_grad_hat: float
    h_crit_est: float  # reach heuristic c0^2 / (2 C_psi), an estimate only
    passed: bool
    thresholds: Thresholds


@dataclass
class BoundValidity:
    eps_inf: float
    cond_disc: bool  # eps <= c0^2 / (2 C_psi)
    cond_tube: bool  # eps <= (c0 / 2) h
    disc_limit: float
    tube_limit: float


@dataclass
class StabilityParameters:
    """Cone-condition parameters, stored for reporting the smallness limit only."""

    rho: float
    theta: float

    def __post_init__(self) -> None:
        if not self.rho > 0 or not 0 < self.theta < math.pi / 2:
            raise ConfigError("need rho > 0 and 0 < theta < pi/2")

    @property
    def smallness_limit(self) -> float:
        return 0.5 * self.rho * math.sin(self.theta)


def grid_points(bbox, res: int) -> tuple[np.ndarray, np.ndarray]:
    """Points of a ``res x res`` vertex grid over ``bbox`` as (res*res, 2), plus their (row, col)."""
    x0, x1, y0, y1 = bbox
    xs = np.linspace(x0, x1, res)
    ys = np.linspace(y0, y1, res)
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    rows, cols = np.meshgrid(np.arange(res), np.arange(res), indexing="ij")
    return np.column_stack([xx.ravel(), yy.ravel()]), np.column_stack([rows.ravel(), cols.ravel()])


def sample_tube(
    reference: ImplicitField, h_tube: float, grid_res: int, bbox=DEFAULT_BBOX
) -> TubeSampling:
    if not h_tube > 0:
        raise ConfigError(f"h_tube must be positive, got {h_tube}")
    if grid_res < 32:
        raise ConfigError(f"grid_res must be at least 32, got {grid_res}")
    pts, idx = grid_points(bbox, grid_res)
    keep = np.abs(reference.values(pts)) < h_tube
    if not keep.any():
        raise EmptyTubeError(
            f"no grid point of a {grid_res}^2 grid lies within |phi| < {h_tube:g}"
        )
    return TubeSampling(reference, float(h_tube), int(grid_res), tuple(bbox), pts[keep], idx[keep])


def _neighbour_lipschitz(tube: TubeSampling, grads: np.ndarray) -> float:
    """Max of |grad(p) - grad(q)| / |p - q| over horizontally/vertically adjacent tube points."""
    res = tube.grid_res
    lin = tube.index[:, 0] * res + tube.index[:, 1]
    order = np.argsort(lin)
    lin_sorted = lin[order]
    best = 0.0
    for step, dist in ((1, tube.spacing[0]), (res, tube.spacing[1])):
        target = lin + step
        pos = np.searchsorted(lin_sorted, target)
        pos = np.minimum(pos, len(lin_sorted) - 1)
        hit = lin_sorted[pos] == target
        if step == 1:
            hit &= tube.index[:, 1] < res - 1
        if not hit.any():
            continue
        a = np.nonzero(hit)[0]
        b = order[pos[hit]]
        q = np.linalg.norm(grads[a] - grads[b], axis=1) / dist
        best = max(best, float(q.max()))
    return best


def certify(
    field: ImplicitField, tube: TubeSampling, thresholds: Thresholds | None = None
) -> RegularityCertificate:
    thresholds = thresholds or Thresholds()
    _, g, h = field.jets(tube.points)
    c0 = float(np.linalg.norm(g, axis=1).min())
    cpsi = float(hess_opnorm(h).max())
    lip = _neighbour_lipschitz(tube, g)
    h_crit = c0**2 / (2.0 * cpsi) if cpsi > 0 else math.inf
    passed = c0 >= thresholds.c0_min and cpsi <= thresholds.cpsi_max
    return RegularityCertificate(c0, cpsi, lip, h_crit, bool(passed), thresholds)


def check_bound_validity(cert: RegularityCertificate, eps_inf: float, h_tube: float) -> BoundValidity:
    if eps_inf < 0:
        raise ConfigError("eps_inf must be non-negative")
    disc = cert.c0_hat**2 / (2.0 * cert.cpsi_hat) if cert.cpsi_hat > 0 else math.inf
    tube = 0.5 * cert.c0_hat * h_tube
    return BoundValidity(eps_inf, bool(eps_inf <= disc), bool(eps_inf <= tube), disc, tube)
