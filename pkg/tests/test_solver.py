import math

import numpy as np
import pytest
import scipy.sparse as sp

from simready.errors import ClassificationError, ConfigError, SolverError
from simready.field import CircleSdf, Offset
from simready.solver import (
    BackgroundGrid,
    assemble,
    bicgstab,
    classify,
    l2_error,
    manufactured_f,
    manufactured_u,
    mesh_size,
    solve_linear,
    solve_poisson,
)


def _linear(x):
    return x[:, 0]


def _zero(x):
    return np.zeros(len(x))


def _patch(level, method="lu"):
    grid = BackgroundGrid(level)
    cls = classify(grid, CircleSdf(1.0))
    system = assemble(grid, cls, 1.0, _zero, _linear)
    info = solve_linear(system, method=method)
    nodes = grid.node_coords()[system.dof_nodes]
    return info.x, nodes[:, 0], (grid, cls, system)


@pytest.mark.parametrize("level, h", [(2, 0.5), (4, 0.125), (8, 0.0078125)])
def test_mesh_size(level, h):
    assert mesh_size(level) == h
    assert BackgroundGrid(level).nx == round(4 / h)


@pytest.mark.parametrize("level", [1, 11])
def test_level_range(level):
    with pytest.raises(ConfigError):
        BackgroundGrid(level)


def test_cell_nodes_counter_clockwise():
    g = BackgroundGrid(2)  # 8 x 8 cells, 9 nodes per row
    np.testing.assert_array_equal(g.cell_nodes(np.array(1), np.array(2)), [11, 12, 21, 20])
    np.testing.assert_allclose(g.cell_origin(np.array(1), np.array(2)), [-1.0, -1.5])


def test_classification_of_unit_circle():
    grid = BackgroundGrid(5)
    cls = classify(grid, CircleSdf(1.0))
    nodes = grid.node_coords()
    ci, cj = cls.interior_cells
    cn = grid.cell_nodes(ci, cj)
    assert np.all(np.hypot(*nodes[cn].reshape(-1, 2).T) <= 1.0)
    assert cls.is_closed() and cls.surrogate_loops() == 1
    # every surrogate Gauss point projects onto the circle, within a couple of cells
    np.testing.assert_allclose(np.hypot(*cls.closest.reshape(-1, 2).T), 1.0, atol=1e-12)
    assert np.linalg.norm(cls.distance, axis=-1).max() <= 2 * math.sqrt(2) * grid.h
    # distance vectors point outward from the surrogate
    assert np.all(np.einsum("fqk,fk->fq", cls.distance, cls.face_normal) > -1e-12)


def test_classification_errors():
    with pytest.raises(ClassificationError, match="boundary of the background box"):
        classify(BackgroundGrid(4), CircleSdf(2.5))
    with pytest.raises(ClassificationError, match="no interior cell"):
        classify(BackgroundGrid(3), CircleSdf(0.1))


@pytest.mark.parametrize("level", [4, 5, 6])
def test_linear_patch_test(level):
    x, exact, _ = _patch(level)
    assert np.abs(x - exact).max() < 1e-10


def test_zero_shift_is_plain_nitsche_on_surrogate():
    grid = BackgroundGrid(4)
    cls = classify(grid, CircleSdf(1.0)).with_zero_shift()
    system = assemble(grid, cls, 1.0, _zero, _linear)
    info = solve_linear(system, method="lu")
    # u = x is still reproduced: data is now taken at the surrogate itself
    assert np.abs(info.x - grid.node_coords()[system.dof_nodes][:, 0]).max() < 1e-10


def test_bicgstab_matches_direct_solve(rng):
    n = 60
    A = sp.random(n, n, density=0.1, random_state=3) + sp.eye(n) * 4.0
    A = sp.csr_matrix(A)
    b = rng.normal(size=n)
    x, it, res = bicgstab(A, b, tol=1e-12)
    assert res <= 1e-12 and it > 0
    np.testing.assert_allclose(x, np.linalg.solve(A.toarray(), b), atol=1e-9)


def test_bicgstab_zero_rhs():
    x, it, res = bicgstab(sp.eye(4, format="csr"), np.zeros(4))
    assert it == 0 and res == 0.0 and not x.any()


def test_lu_and_bicgstab_agree_at_level_4():
    _, _, (grid, cls, system) = _patch(4)
    system = assemble(grid, cls, 1.0, manufactured_f, manufactured_u)
    a = solve_linear(system, method="bicgstab")
    b = solve_linear(system, method="lu")
    assert a.method == "bicgstab" and b.method == "dense_lu"
    assert np.abs(a.x - b.x).max() <= 1e-8


def test_stalled_bicgstab_raises():
    _, _, (grid, cls, system) = _patch(5)
    with pytest.raises(SolverError) as exc:
        solve_linear(system, method="bicgstab", max_iter=3)
    assert exc.value.iterations == 3 and exc.value.residual > 1e-10


def test_auto_falls_back_to_lu():
    _, _, (grid, cls, system) = _patch(4)
    info = solve_linear(system, method="auto", max_iter=2)
    assert info.method == "dense_lu" and info.residual < 1e-10


def test_unknown_method():
    _, _, (grid, cls, system) = _patch(4)
    with pytest.raises(ConfigError):
        solve_linear(system, method="cg")


def test_l2_error_of_exact_interpolant_is_interpolation_error():
    errs = []
    for level in (5, 6):
        _, _, (grid, cls, system) = _patch(level)
        nodes = grid.node_coords()[system.dof_nodes]
        assert l2_error(nodes[:, 0], grid, cls, system, _linear) < 1e-13  # Q1 reproduces linears
        errs.append(l2_error(manufactured_u(nodes), grid, cls, system, manufactured_u))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)


def test_unperturbed_second_order():
    errs = [solve_poisson(CircleSdf(1.0), lv).l2_error for lv in (4, 5, 6)]
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates > 1.8)


def test_frozen_level_5_error():
    rep = solve_poisson(CircleSdf(1.0), 5)
    assert rep.l2_error == pytest.approx(0.00625, rel=0.02)
    assert rep.h == 0.0625 and rep.level == 5 and rep.residual <= 1e-10


def test_penalty_robustness():
    base = solve_poisson(CircleSdf(1.0), 6, gamma=10.0).l2_error
    doubled = solve_poisson(CircleSdf(1.0), 6, gamma=20.0).l2_error
    assert abs(doubled - base) / base < 0.2


def test_geometry_error_enters_through_reference_data():
    ref = CircleSdf(1.0)
    psi = Offset(ref, -0.01)
    with_ref = solve_poisson(psi, 6, reference=ref, hausdorff=0.01, alpha=0.01)
    without = solve_poisson(psi, 6)
    assert with_ref.l2_error > 5 * without.l2_error
    assert with_ref.csv_row() == (0.01, 6, 0.03125, with_ref.l2_error, 0.01)


def test_hausdorff_measured_when_not_given():
    rep = solve_poisson(Offset(CircleSdf(1.0), -0.02), 4, reference=CircleSdf(1.0))
    assert rep.hausdorff == pytest.approx(0.02, abs=1e-4)
