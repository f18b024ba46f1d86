"""End-to-end acceptance checks, one test per criterion.

Each test attaches a one-line summary of the measured quantities; the
terminal summary prints ``PASS``/``FAIL`` with that line for every criterion.
"""

import math

import numpy as np
import pytest

from simready.field import CircleSdf, Neural, Offset, Quadratic, finite_diff_check, make_banded, unit_circle_closest_point
from simready.geometry import bound_report, directed_distances_brute, extract_zero_set, extraction_resolution, hausdorff
from simready.harness import DEFAULT_BUDGETS, fit_loglog_slope, hausdorff_validation, sweep_perturbation, sweep_refinement
from simready.mlp import init_weights
from simready.projection import flow_project, newton_project, newton_project_many, success_map
from simready.regularity import certify, sample_tube
from simready.solver import BackgroundGrid, assemble, classify, manufactured_f, manufactured_u, solve_linear, solve_poisson
from simready.train import loss_and_grad, sample_batch, TrainConfig


@pytest.fixture
def detail(record_property):
    def emit(text):
        record_property("detail", text)
        print(text)

    return emit


def _tube_points(rng, n, h):
    r = rng.uniform(1 - h, 1 + h, n)
    th = rng.uniform(0, 2 * np.pi, n)
    return np.column_stack([r * np.cos(th), r * np.sin(th)])


def test_criterion_1_slope_one_propagation(detail):
    res = sweep_perturbation([2e-4, 4e-4, 8e-4, 1.6e-3], level=8)
    errs = ", ".join(f"{r.l2_error:.3e}" for r in res.reports)
    detail(f"slope={res.slope:.4f} (need [0.85, 1.15]); errors {errs}")
    assert 0.85 <= res.slope <= 1.15


def test_criterion_2_refinement_plateau(detail):
    parts, ok = [], True
    for d_h in (1.4e-3, 2.8e-3, 3.5e-3):
        errs = np.array([r.l2_error for r in sweep_refinement(d_h, [4, 5, 6, 7, 8]).reports])
        monotone = bool(np.all(np.diff(errs) <= 0))
        ratio = errs[-1] / d_h
        within = 0.5 <= ratio <= 2.0
        improve = 1 - errs[-1] / errs[-2]
        flat = improve < 0.15
        ok &= monotone and within and flat
        parts.append(
            f"d_H={d_h:g}: non-increasing={monotone}, e8/d_H={ratio:.3f} (need within x2)={within}, "
            f"7->8 improvement={improve:.1%} (<15%)={flat}"
        )
    detail("; ".join(parts))
    assert ok


def test_criterion_3_unperturbed_convergence(detail):
    reps = [solve_poisson(CircleSdf(1.0), lv) for lv in (4, 5, 6, 7)]
    order = fit_loglog_slope([r.h for r in reps], [r.l2_error for r in reps])
    errs = ", ".join(f"{r.l2_error:.3e}" for r in reps)
    detail(f"observed order={order:.3f} (need >= 1.8); errors {errs}")
    assert order >= 1.8


def test_criterion_4_linear_patch(detail):
    worst = {}
    for level in (4, 5, 6):
        grid = BackgroundGrid(level)
        cls = classify(grid, CircleSdf(1.0))
        system = assemble(grid, cls, 1.0, lambda x: np.zeros(len(x)), lambda x: x[:, 0])
        x = solve_linear(system, method="lu").x
        worst[level] = float(np.abs(x - grid.node_coords()[system.dof_nodes][:, 0]).max())
    detail("max nodal error " + ", ".join(f"level {k}: {v:.2e}" for k, v in worst.items()) + " (need <= 1e-10)")
    assert max(worst.values()) <= 1e-10


def test_criterion_5_hausdorff_bound(detail):
    phi = CircleSdf(1.0)
    tube = sample_tube(phi, 0.1, 512)
    parts, ok = [], True
    for a in (1e-3, 1e-2, 5e-2):
        rep = bound_report(phi, Offset(phi, a), tube, res=extraction_resolution(a))
        ok &= rep.bound_satisfied
        parts.append(f"offset {a:g}: d_H={rep.d_H:.4e} <= {rep.bound:.4e}+{rep.slack:.1e} {rep.bound_satisfied}")
    rows, _ = hausdorff_validation(DEFAULT_BUDGETS, seed=0)
    eps = [r.eps_inf_hat for r in rows]
    c0 = [r.c0_tilde_hat for r in rows]
    dec = all(b < a for a, b in zip(eps, eps[1:]))
    nondec = all(b >= a for a, b in zip(c0, c0[1:]))
    for r in rows:
        ok &= r.bound_satisfied
        parts.append(f"budget {r.budget}: eps={r.eps_inf_hat:.3e} c0~={r.c0_tilde_hat:.4f} d_H={r.d_H:.3e} <= {r.bound:.3e} {r.bound_satisfied}")
    parts.append(f"eps strictly decreasing={dec}, c0~ non-decreasing={nondec}")
    detail("; ".join(parts))
    assert ok and dec and nondec


def test_criterion_6_projection_correctness(detail):
    rng = np.random.default_rng(2024)
    pts = _tube_points(rng, 10_000, 0.1)
    truth = unit_circle_closest_point(pts)
    c = newton_project_many(CircleSdf(1.0), pts, tol=1e-12)
    c_err = np.linalg.norm(c.final_points - truth, axis=1).max()
    c_ok = bool(c.converged.all() and c.iterations.max() <= 2 and c_err <= 1e-10)
    q = newton_project_many(Quadratic(1.0), pts, tol=1e-12)
    q_err = np.linalg.norm(q.final_points - truth, axis=1).max()
    q_ok = bool(q.converged.all() and q.iterations.max() <= 10 and q_err <= 1e-8)

    band = 0.2
    pm = success_map(make_banded(1.0, band, 0.02), unit_circle_closest_point, res=256)
    s = np.abs(np.hypot(pm.points[:, 0], pm.points[:, 1]) - 1.0).reshape(pm.res, pm.res)
    inside = pm.success_mask[s <= band].mean()
    outside = pm.success_mask[s > band].mean()
    b_ok = bool(outside < 0.05 and inside > 0.99)
    detail(
        f"circle: max iters={c.iterations.max()}, max err={c_err:.1e} ok={c_ok}; "
        f"quadratic: max iters={q.iterations.max()}, max err={q_err:.1e} ok={q_ok}; "
        f"banded: success inside band={inside:.4f} (>0.99), outside band={outside:.4f} (<0.05) ok={b_ok}"
    )
    assert c_ok and q_ok and b_ok


def test_criterion_7_oracle_equivalences(detail):
    rng = np.random.default_rng(7)
    worst = 0.0
    fields = [CircleSdf(1.0), Quadratic(1.0), Offset(Quadratic(1.0), 0.2), make_banded(1.0, 0.2, 0.02)]
    for f in fields:
        starts = _tube_points(rng, 8, 0.15) if f.ident.startswith("banded") else rng.uniform(-1.8, 1.8, (8, 2))
        for p in starts:
            if np.hypot(*p) < 0.2:
                continue
            a, b = flow_project(f, p), newton_project(f, p)
            assert a.converged and b.converged
            worst = max(worst, float(np.linalg.norm(a.final_point - b.final_point)))
    flow_ok = worst <= 1e-6

    ga = extract_zero_set(CircleSdf(1.0), res=1024)
    gb = extract_zero_set(Offset(Quadratic(1.0), 0.05), res=1024)
    fast, slow = hausdorff(ga, gb), hausdorff(ga, gb, accelerated=False)
    pts = ga.samples()
    bins_ok = (fast.d_forward, fast.d_backward) == (slow.d_forward, slow.d_backward)
    from simready.geometry import SegmentBins

    bins_ok &= bool(np.array_equal(SegmentBins(gb.segments).nearest(pts), directed_distances_brute(pts, gb.segments)))

    grid = BackgroundGrid(4)
    system = assemble(grid, classify(grid, CircleSdf(1.0)), 1.0, manufactured_f, manufactured_u)
    diff = float(np.abs(solve_linear(system, method="bicgstab").x - solve_linear(system, method="lu").x).max())
    detail(
        f"flow vs Newton max distance={worst:.2e} (<=1e-6); accelerated == brute Hausdorff: {bins_ok}; "
        f"BiCGStab vs LU level 4 max diff={diff:.2e} (<=1e-8)"
    )
    assert flow_ok and bins_ok and diff <= 1e-8


def test_criterion_8_differentiation(detail):
    rng = np.random.default_rng(8)
    fields = [
        (CircleSdf(1.0), 1e-5),
        (Quadratic(1.0), 1e-5),
        (make_banded(1.0, 0.2, 0.02), 1e-5),
        (Offset(CircleSdf(1.0), 0.1), 1e-5),
        (Neural(init_weights([2, 64, 64, 1], 30.0, seed=5)), 1e-6),
    ]
    worst = 0.0
    for k in range(1000):
        f, step = fields[k % len(fields)]
        p = rng.uniform(-2, 2, 2)
        while np.hypot(*p) < 0.05:
            p = rng.uniform(-2, 2, 2)
        chk = finite_diff_check(f, p, step)
        worst = max(worst, chk.grad_rel_err, chk.hess_rel_err)

    w = init_weights([2, 64, 64, 1], 30.0, seed=0)
    pts, phi, band = sample_batch(np.random.default_rng(9), TrainConfig())
    _, grads = loss_and_grad(w, pts, phi, band, 0.1)
    g = np.concatenate([x.ravel() for x in grads])
    theta = w.flat()
    worst_p = 0.0
    for k in rng.choice(len(theta), size=20, replace=False):
        h = 1e-6 * max(1.0, abs(theta[k]))
        tp, tm = theta.copy(), theta.copy()
        tp[k] += h
        tm[k] -= h
        fd = (loss_and_grad(w.with_flat(tp), pts, phi, band, 0.1)[0].total
              - loss_and_grad(w.with_flat(tm), pts, phi, band, 0.1)[0].total) / (2 * h)  # fmt: skip
        worst_p = max(worst_p, abs(fd - g[k]) / max(abs(fd), abs(g[k]), 1e-3))
    detail(f"jets vs central differences max rel err={worst:.2e} (<=1e-6); parameter gradient max rel err={worst_p:.2e} (<=1e-4)")
    assert worst <= 1e-6 and worst_p <= 1e-4


def test_criterion_9_regularity_certificates(detail):
    tube = sample_tube(CircleSdf(1.0), 0.1, 512)
    circ = certify(CircleSdf(1.0), tube)
    quad = certify(Quadratic(1.0), tube)
    c0_ok = abs(circ.c0_hat - 1.0) <= 1e-9
    cpsi_ok = abs(circ.cpsi_hat - 1 / 0.9) <= 0.02 / 0.9
    q_ok = abs(quad.cpsi_hat - 2.0) <= 1e-9
    detail(f"circle c0={circ.c0_hat:.12f}, cpsi={circ.cpsi_hat:.5f} (1/0.9={1 / 0.9:.5f}); quadratic cpsi={quad.cpsi_hat:.12f}")
    assert c0_ok and cpsi_ok and q_ok and math.isfinite(circ.h_crit_est)
