"""Poisson solve on an implicit domain with Q1 elements on a uniform background grid.

Dirichlet data is imposed weakly on the surrogate boundary (the grid faces
between interior and non-interior cells) with the shifted boundary method:
the trace of the discrete solution is Taylor-shifted along the distance
vector ``d = x* - x~`` to the closest point ``x*`` on the zero level set,
``S(u)(x~) = u(x~) + grad u(x~) . d``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from simready.errors import ClassificationError, ConfigError, SolverError
from simready.field import DEFAULT_BBOX, ImplicitField
from simready.projection import newton_project_many

log = logging.getLogger(__name__)

LEVEL_MIN, LEVEL_MAX = 2, 10
GAMMA_DEFAULT = 10.0
SOLVE_TOL_DEFAULT = 1e-10
DENSE_LU_MAX = 5000

_G2 = np.array([-1.0, 1.0]) / math.sqrt(3.0)
_G3 = np.array([-math.sqrt(0.6), 0.0, math.sqrt(0.6)])
_W3 = np.array([5.0, 8.0, 5.0]) / 9.0

INTERIOR, EXTERIOR = 1, 0


def mesh_size(level: int) -> float:
    """Mesh size for a refinement level: level 4 -> 0.125, ..., level 8 -> 0.0078125."""
    return 2.0 ** (1 - level)


@dataclass
class BackgroundGrid:
    level: int
    bbox: tuple[float, float, float, float] = DEFAULT_BBOX

    def __post_init__(self) -> None:
        if not LEVEL_MIN <= self.level <= LEVEL_MAX:
            raise ConfigError(f"level must lie in [{LEVEL_MIN}, {LEVEL_MAX}], got {self.level}")
        x0, x1, y0, y1 = self.bbox
        nx = (x1 - x0) / self.h
        ny = (y1 - y0) / self.h
        if abs(nx - round(nx)) > 1e-9 or abs(ny - round(ny)) > 1e-9:
            raise ConfigError(f"box {self.bbox} is not a whole number of cells of size {self.h}")
        self.nx, self.ny = int(round(nx)), int(round(ny))

    @property
    def h(self) -> float:
        return mesh_size(self.level)

    @property
    def n_nodes(self) -> int:
        return (self.nx + 1) * (self.ny + 1)

    def node_coords(self) -> np.ndarray:
        x0, _, y0, _ = self.bbox
        jj, ii = np.meshgrid(np.arange(self.nx + 1), np.arange(self.ny + 1))
        return np.column_stack([x0 + jj.ravel() * self.h, y0 + ii.ravel() * self.h])

    def cell_nodes(self, ci: np.ndarray, cj: np.ndarray) -> np.ndarray:
        """Node ids of cells (row ci, column cj), counter-clockwise from the lower-left corner."""
        w = self.nx + 1
        n0 = ci * w + cj
        return np.stack([n0, n0 + 1, n0 + w + 1, n0 + w], axis=-1)

    def cell_origin(self, ci: np.ndarray, cj: np.ndarray) -> np.ndarray:
        x0, _, y0, _ = self.bbox
        return np.stack([x0 + cj * self.h, y0 + ci * self.h], axis=-1)


def _shape(xi: np.ndarray, eta: np.ndarray) -> np.ndarray:
    """Q1 shape functions on the reference square [0,1]^2, shape (..., 4)."""
    return np.stack([(1 - xi) * (1 - eta), xi * (1 - eta), xi * eta, (1 - xi) * eta], axis=-1)


def _shape_grad(xi: np.ndarray, eta: np.ndarray, h: float) -> np.ndarray:
    """Physical gradients of the Q1 shape functions, shape (..., 4, 2)."""
    gx = np.stack([-(1 - eta), (1 - eta), eta, -eta], axis=-1) / h
    gy = np.stack([-(1 - xi), -xi, xi, (1 - xi)], axis=-1) / h
    return np.stack([gx, gy], axis=-1)


# Local corner pairs of each cell side with its outward normal: bottom, right, top, left.
_SIDES = (
    ((0, 1), (0.0, -1.0), (0, -1)),
    ((1, 2), (1.0, 0.0), (1, 0)),
    ((2, 3), (0.0, 1.0), (0, 1)),
    ((3, 0), (-1.0, 0.0), (-1, 0)),
)
_REF_CORNERS = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


@dataclass
class DomainClassification:
    grid: BackgroundGrid
    labels: np.ndarray  # (ny, nx) INTERIOR / EXTERIOR
    node_values: np.ndarray  # psi at nodes
    face_cell: np.ndarray  # (F, 2) owning interior cell (row, col)
    face_side: np.ndarray  # (F,) side index into _SIDES
    face_normal: np.ndarray  # (F, 2) outward unit normal
    quad_points: np.ndarray  # (F, 2, 2) face Gauss points x~
    quad_ref: np.ndarray  # (F, 2, 2) same points in the owning cell's reference coordinates
    closest: np.ndarray  # (F, 2, 2) x* on the zero level set
    distance: np.ndarray  # (F, 2, 2) d = x* - x~

    @property
    def interior_cells(self) -> tuple[np.ndarray, np.ndarray]:
        return np.nonzero(self.labels == INTERIOR)

    @property
    def active_cells(self) -> int:
        return int((self.labels == INTERIOR).sum())

    @property
    def surrogate_faces(self) -> int:
        return len(self.face_side)

    def with_zero_shift(self) -> "DomainClassification":
        """Same classification with all distance vectors zeroed (plain Nitsche on the surrogate)."""
        return replace(self, distance=np.zeros_like(self.distance), closest=self.quad_points.copy())

    def face_endpoints(self) -> np.ndarray:
        """Global node ids of each surrogate face, (F, 2)."""
        nodes = self.grid.cell_nodes(self.face_cell[:, 0], self.face_cell[:, 1])
        pairs = np.array([s[0] for s in _SIDES])[self.face_side]
        return np.take_along_axis(nodes, pairs, axis=1)

    def surrogate_loops(self) -> int:
        """Number of connected components of the surrogate boundary (faces joined at shared nodes)."""
        ends = self.face_endpoints()
        uniq, inv = np.unique(ends.ravel(), return_inverse=True)
        inv = inv.reshape(-1, 2)
        g = sp.coo_matrix(
            (np.ones(len(inv)), (inv[:, 0], inv[:, 1])), shape=(len(uniq), len(uniq))
        )
        n, _ = sp.csgraph.connected_components(g, directed=False)
        return int(n)

    def is_closed(self) -> bool:
        ends = self.face_endpoints().ravel()
        counts = np.bincount(ends)
        return bool(np.all(counts[counts > 0] % 2 == 0))


def classify(
    grid: BackgroundGrid,
    field: ImplicitField,
    tol: float = 1e-12,
    max_iter: int = 50,
    grad_floor: float = 1e-6,
) -> DomainClassification:
    """Label cells, build the surrogate boundary and project its Gauss points onto ``{field = 0}``."""
    nodes = grid.node_coords()
    psi = field.values(nodes).reshape(grid.ny + 1, grid.nx + 1)
    edge = np.concatenate([psi[0], psi[-1], psi[:, 0], psi[:, -1]])
    if np.any(edge <= 0.0):
        raise ClassificationError("the domain {psi <= 0} reaches the boundary of the background box")
    inside_node = psi <= 0.0
    interior = (
        inside_node[:-1, :-1] & inside_node[:-1, 1:] & inside_node[1:, :-1] & inside_node[1:, 1:]
    )
    if not interior.any():
        raise ClassificationError(f"no interior cell at level {grid.level}: domain not resolved or outside the box")
    labels = np.where(interior, INTERIOR, EXTERIOR)

    padded = np.pad(interior, 1, constant_values=False)
    cells, sides, normals = [], [], []
    ci, cj = np.nonzero(interior)
    for s, (_, normal, (dj, di)) in enumerate(_SIDES):
        nb = padded[ci + 1 + di, cj + 1 + dj]
        sel = ~nb
        cells.append(np.column_stack([ci[sel], cj[sel]]))
        sides.append(np.full(sel.sum(), s))
        normals.append(np.tile(normal, (sel.sum(), 1)))
    face_cell = np.concatenate(cells)
    face_side = np.concatenate(sides)
    face_normal = np.concatenate(normals)

    # Gauss points along each face in reference coordinates of the owning cell
    a = _REF_CORNERS[np.array([s[0][0] for s in _SIDES])[face_side]]
    b = _REF_CORNERS[np.array([s[0][1] for s in _SIDES])[face_side]]
    t = 0.5 * (1.0 + _G2)
    quad_ref = a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]
    origin = grid.cell_origin(face_cell[:, 0], face_cell[:, 1])
    quad_pts = origin[:, None, :] + grid.h * quad_ref

    flat = quad_pts.reshape(-1, 2)
    proj = newton_project_many(field, flat, tol=tol, max_iter=max_iter, grad_floor=grad_floor)
    if not proj.converged.all():
        k = int(np.nonzero(~proj.converged)[0][0])
        raise ClassificationError(
            f"closest-point projection failed at surrogate point {tuple(flat[k])} "
            f"({proj.reason[k]}); geometry is not simulation-ready at level {grid.level}"
        )
    closest = proj.final_points.reshape(quad_pts.shape)
    dist = closest - quad_pts
    dn = np.linalg.norm(dist, axis=-1)
    if np.any(dn > 2.0 * math.sqrt(2.0) * grid.h):
        k = np.unravel_index(np.argmax(dn), dn.shape)
        raise ClassificationError(
            f"distance {dn[k]:.3g} from surrogate point {tuple(quad_pts[k])} exceeds 2*sqrt(2)*h; "
            "projection landed on a remote part of the zero set"
        )
    return DomainClassification(
        grid, labels, psi.ravel(), face_cell, face_side, face_normal, quad_pts, quad_ref, closest, dist
    )


@dataclass
class SparseSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    dof_nodes: np.ndarray  # global node id of each unknown
    node_to_dof: np.ndarray  # -1 for inactive nodes

    @property
    def size(self) -> int:
        return len(self.rhs)


def _element_stiffness(h: float) -> np.ndarray:
    K = np.zeros((4, 4))
    for xi in 0.5 * (1 + _G2):
        for eta in 0.5 * (1 + _G2):
            G = _shape_grad(np.array(xi), np.array(eta), h)
            K += (G @ G.T) * (h * h / 4.0)
    return K


def assemble(
    grid: BackgroundGrid,
    cls: DomainClassification,
    kappa: float,
    f: Callable[[np.ndarray], np.ndarray],
    g: Callable[[np.ndarray], np.ndarray],
    gamma: float = GAMMA_DEFAULT,
) -> SparseSystem:
    """Bilinear form and load vector of the shifted-boundary Nitsche discretisation.

    a(u, v) = (k grad u, grad v) - <k grad u . n, v> - <k grad v . n, S(u)> + (gamma k / h) <S(u), S(v)>
    l(v)    = (f, v) - <k grad v . n, g(x*)> + (gamma k / h) <g(x*), S(v)>

    ``g`` is evaluated at the closest points ``x*``.
    """
    h = grid.h
    ci, cj = cls.interior_cells
    cell_nodes = grid.cell_nodes(ci, cj)
    active = np.unique(cell_nodes)
    node_to_dof = np.full(grid.n_nodes, -1)
    node_to_dof[active] = np.arange(len(active))
    edofs = node_to_dof[cell_nodes]

    K = kappa * _element_stiffness(h)
    rows = [np.repeat(edofs, 4, axis=1).ravel()]
    cols = [np.tile(edofs, (1, 4)).ravel()]
    vals = [np.tile(K.ravel(), len(edofs))]

    rhs = np.zeros(len(active))
    origin = grid.cell_origin(ci, cj)
    for xi in 0.5 * (1 + _G2):
        for eta in 0.5 * (1 + _G2):
            N = _shape(np.array(xi), np.array(eta))
            xq = origin + h * np.array([xi, eta])
            fq = f(xq) * (h * h / 4.0)
            np.add.at(rhs, edofs, fq[:, None] * N[None, :])

    fnodes = grid.cell_nodes(cls.face_cell[:, 0], cls.face_cell[:, 1])
    fdofs = node_to_dof[fnodes]
    n = cls.face_normal
    wq = 0.5 * h  # 2-point Gauss weight on a face of length h
    pen = gamma * kappa / h
    for q in range(2):
        xi, eta = cls.quad_ref[:, q, 0], cls.quad_ref[:, q, 1]
        N = _shape(xi, eta)  # (F, 4)
        G = _shape_grad(xi, eta, h)  # (F, 4, 2)
        d = cls.distance[:, q]
        dn_ = np.einsum("fak,fk->fa", G, n)  # grad N . n
        S = N + np.einsum("fak,fk->fa", G, d)
        gq = g(cls.closest[:, q])
        # A[a, b]: test a, trial b
        local = (
            -kappa * N[:, :, None] * dn_[:, None, :]
            - kappa * dn_[:, :, None] * S[:, None, :]
            + pen * S[:, :, None] * S[:, None, :]
        ) * wq
        rows.append(np.repeat(fdofs, 4, axis=1).ravel())
        cols.append(np.tile(fdofs, (1, 4)).ravel())
        vals.append(local.ravel())
        np.add.at(rhs, fdofs, (wq * gq)[:, None] * (-kappa * dn_ + pen * S))

    A = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(len(active), len(active)),
    ).tocsr()
    A.sum_duplicates()
    return SparseSystem(A, rhs, active, node_to_dof)


@dataclass
class LinearSolveInfo:
    x: np.ndarray
    iterations: int
    residual: float  # |A x - b| / |b|
    method: str


def bicgstab(A, b: np.ndarray, tol: float = SOLVE_TOL_DEFAULT, max_iter: int = 20_000) -> tuple[np.ndarray, int, float]:
    """Right-preconditioned BiCGStab with a Jacobi preconditioner.

    Returns ``(x, iterations, relative residual)``; stops when the true
    relative residual ``|b - A x| / |b|`` drops below ``tol``.
    """
    n = len(b)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros(n), 0, 0.0
    diag = A.diagonal()
    minv = np.where(diag != 0.0, 1.0 / np.where(diag != 0.0, diag, 1.0), 1.0)
    x = np.zeros(n)
    r = b.copy()
    r_hat = r.copy()
    rho = alpha = omega = 1.0
    v = np.zeros(n)
    p = np.zeros(n)
    res = 1.0
    for it in range(1, max_iter + 1):
        rho_new = float(r_hat @ r)
        if rho_new == 0.0:
            break
        beta = (rho_new / rho) * (alpha / omega)
        rho = rho_new
        p = r + beta * (p - omega * v)
        phat = minv * p
        v = A @ phat
        denom = float(r_hat @ v)
        if denom == 0.0:
            break
        alpha = rho / denom
        s = r - alpha * v
        if np.linalg.norm(s) / bnorm <= tol:
            x += alpha * phat
            r = s
            res = float(np.linalg.norm(b - A @ x)) / bnorm
            if res <= tol:
                return x, it, res
            continue
        shat = minv * s
        t = A @ shat
        tt = float(t @ t)
        omega = float(t @ s) / tt if tt > 0 else 0.0
        x += alpha * phat + omega * shat
        r = s - omega * t
        if np.linalg.norm(r) / bnorm <= tol:
            # confirm with the true residual; recursive residuals drift
            r = b - A @ x
            res = float(np.linalg.norm(r)) / bnorm
            if res <= tol:
                return x, it, res
        if omega == 0.0:
            break
    res = float(np.linalg.norm(b - A @ x)) / bnorm
    return x, it, res


def solve_linear(
    system: SparseSystem,
    tol: float = SOLVE_TOL_DEFAULT,
    max_iter: int = 20_000,
    method: str = "auto",
) -> LinearSolveInfo:
    """Solve the assembled system.

    ``auto`` runs BiCGStab and falls back to dense LU when it stalls and the
    system has at most 5000 unknowns.  ``lu`` forces the direct route (dense
    LU up to 5000 unknowns, sparse LU above).
    """
    A, b = system.matrix, system.rhs
    n = len(b)
    bnorm = float(np.linalg.norm(b)) or 1.0
    if method not in ("auto", "bicgstab", "lu"):
        raise ConfigError(f"unknown solve method '{method}'")
    if method in ("auto", "bicgstab"):
        x, it, res = bicgstab(A, b, tol, max_iter)
        if res <= tol:
            return LinearSolveInfo(x, it, res, "bicgstab")
        if method == "bicgstab" or n > DENSE_LU_MAX:
            raise SolverError(
                f"BiCGStab reached relative residual {res:.3e} > {tol:.1e} after {it} iterations",
                res,
                it,
            )
        log.info("BiCGStab stalled at residual %.3e; falling back to dense LU", res)
    if n <= DENSE_LU_MAX:
        x = scipy.linalg.lu_solve(scipy.linalg.lu_factor(A.toarray()), b)
        name = "dense_lu"
    else:
        x = spla.splu(A.tocsc()).solve(b)
        name = "sparse_lu"
    res = float(np.linalg.norm(b - A @ x)) / bnorm
    return LinearSolveInfo(x, 0, res, name)


def l2_error(
    coefficients: np.ndarray,
    grid: BackgroundGrid,
    cls: DomainClassification,
    system: SparseSystem,
    exact: Callable[[np.ndarray], np.ndarray],
) -> float:
    """L2 norm of ``u_h - exact`` over the interior (surrogate) cells, 3x3 Gauss per cell."""
    ci, cj = cls.interior_cells
    edofs = system.node_to_dof[grid.cell_nodes(ci, cj)]
    uh_e = coefficients[edofs]
    origin = grid.cell_origin(ci, cj)
    h = grid.h
    total = 0.0
    for a, wa in zip(0.5 * (1 + _G3), _W3):
        for b, wb in zip(0.5 * (1 + _G3), _W3):
            N = _shape(np.array(a), np.array(b))
            diff = uh_e @ N - exact(origin + h * np.array([a, b]))
            total += wa * wb * 0.25 * h * h * float(diff @ diff)
    return math.sqrt(total)


def manufactured_u(x: np.ndarray) -> np.ndarray:
    return np.sin(np.pi * x[:, 0])


def manufactured_f(x: np.ndarray) -> np.ndarray:
    return np.pi**2 * np.sin(np.pi * x[:, 0])


@dataclass
class SolveReport:
    alpha: float
    level: int
    h: float
    l2_error: float
    hausdorff: float
    active_cells: int
    surrogate_faces: int
    solver_iterations: int
    residual: float
    method: str

    CSV_HEADER = ("alpha", "level", "h", "L2_error", "Hausdorff")

    def csv_row(self) -> tuple:
        return (self.alpha, self.level, self.h, self.l2_error, self.hausdorff)


def reference_data(g: Callable, reference: ImplicitField, tol: float = 1e-13) -> Callable:
    """Boundary data known on the reference interface, carried to other points by closest-point projection.

    ``g_ref(y) = g(pi(y))`` where ``pi`` is the Newton projection onto ``{reference = 0}``.
    """

    def data(points: np.ndarray) -> np.ndarray:
        proj = newton_project_many(reference, points, tol=tol)
        if not proj.converged.all():
            raise ClassificationError("projection of boundary points onto the reference interface failed")
        return g(proj.final_points)

    return data


def solve_poisson(
    field: ImplicitField,
    level: int,
    gamma: float = GAMMA_DEFAULT,
    kappa: float = 1.0,
    reference: ImplicitField | None = None,
    alpha: float = float("nan"),
    hausdorff: float | None = None,
    tol: float = SOLVE_TOL_DEFAULT,
    method: str = "auto",
    exact: Callable = manufactured_u,
    source: Callable = manufactured_f,
    bbox=DEFAULT_BBOX,
) -> SolveReport:
    """Classify, assemble, solve and measure the L2 error against ``exact``.

    With a ``reference`` field the Dirichlet data is the trace of ``exact`` on
    the reference interface, transported to the closest points of the
    computational interface; without one it is ``exact`` evaluated at those
    closest points.  ``hausdorff`` is recorded as given; when omitted and a
    reference is present it is measured by zero-set extraction.
    """
    grid = BackgroundGrid(level, bbox)
    cls = classify(grid, field)
    g = reference_data(exact, reference) if reference is not None else exact
    system = assemble(grid, cls, kappa, source, g, gamma)
    info = solve_linear(system, tol=tol, method=method)
    err = l2_error(info.x, grid, cls, system, exact)
    if hausdorff is None:
        if reference is None:
            hausdorff = 0.0
        else:
            from simready.geometry import extract_zero_set
            from simready.geometry import hausdorff as hd

            hausdorff = hd(extract_zero_set(reference, bbox), extract_zero_set(field, bbox)).d_H
    return SolveReport(
        float(alpha),
        level,
        grid.h,
        err,
        float(hausdorff),
        cls.active_cells,
        cls.surrogate_faces,
        info.iterations,
        info.residual,
        info.method,
    )
