"""Fit a sine network to the unit-circle signed distance with a narrow-band eikonal penalty.

The parameter gradient is written out by hand for the fixed ``[2, W, W, 1]``
architecture.  The eikonal term depends on the spatial gradient of the
network, so its adjoint runs back through the tangent (derivative) pass as
well as the primal pass.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from simready.errors import ConfigError, TrainingDivergedError
from simready.field import DEFAULT_BBOX, CircleSdf, Neural
from simready.mlp import MlpWeights, init_weights

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    budget_steps: int = 15_000
    batch_size: int = 512
    learning_rate: float = 1e-4
    lr_halflife: float = 3000.0  # steps; 0 keeps the rate constant
    eikonal_weight: float = 0.1
    band_halfwidth: float = 0.2
    bbox: tuple[float, float, float, float] = DEFAULT_BBOX
    seed: int = 0
    width: int = 64
    omega0: float = 30.0
    log_every: int = 500
    probe_h: float = 0.1
    probe_res: int = 128

    def __post_init__(self) -> None:
        for name in ("budget_steps", "batch_size", "learning_rate", "band_halfwidth", "omega0", "log_every"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.lr_halflife < 0:
            raise ConfigError("lr_halflife must be non-negative")
        if self.eikonal_weight < 0:
            raise ConfigError("eikonal_weight must be non-negative")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")


class HistoryRow(NamedTuple):
    step: int
    data_loss: float
    eikonal_loss: float
    eps_inf_probe: float


@dataclass
class TrainHistory:
    rows: list[HistoryRow] = field(default_factory=list)

    def write_csv(self, path_or_file) -> None:
        _write_rows(path_or_file, HistoryRow._fields, self.rows)


def _write_rows(target, header, rows) -> None:
    if hasattr(target, "write"):
        w = csv.writer(target, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        return
    with open(target, "w", newline="") as fh:
        _write_rows(fh, header, rows)


class LossParts(NamedTuple):
    total: float
    data: float
    eikonal: float


def loss_and_grad(
    w: MlpWeights,
    points: np.ndarray,
    targets: np.ndarray,
    in_band: np.ndarray,
    eikonal_weight: float,
) -> tuple[LossParts, list[np.ndarray]]:
    """Loss and its gradient with respect to ``[W1, b1, W2, b2, W3, b3]``.

    ``loss = mean (psi - target)^2 + lambda * mean_band (|grad_x psi| - 1)^2``
    """
    if len(points) == 0:
        raise ConfigError("batch must be non-empty")
    W1, W2, W3 = w.weights
    b1, b2, b3 = w.biases
    om = w.omega0
    X = np.asarray(points, dtype=float)
    B = len(X)

    # primal pass
    s1 = om * (X @ W1.T + b1)
    a1, c1 = np.sin(s1), np.cos(s1)
    s2 = om * (a1 @ W2.T + b2)
    a2, c2 = np.sin(s2), np.cos(s2)
    y = (a2 @ W3.T + b3)[:, 0]

    # tangent pass, one per spatial direction k: D1 = da1/dx_k, E2 = ds2/dx_k, D2 = da2/dx_k
    D1 = [c1 * (om * W1[:, k]) for k in range(2)]
    E2 = [om * (D1[k] @ W2.T) for k in range(2)]
    D2 = [c2 * E2[k] for k in range(2)]
    g = np.column_stack([(D2[k] @ W3.T)[:, 0] for k in range(2)])
    gnorm = np.linalg.norm(g, axis=1)

    resid = y - np.asarray(targets, dtype=float)
    data = float(np.mean(resid**2))
    band = np.asarray(in_band, dtype=bool)
    nb = int(band.sum())
    if nb and eikonal_weight > 0:
        eik = float(np.mean((gnorm[band] - 1.0) ** 2))
    else:
        eik = 0.0
    total = data + eikonal_weight * eik

    dW1 = np.zeros_like(W1)
    dW2 = np.zeros_like(W2)
    dW3 = np.zeros_like(W3)

    dy = 2.0 * resid / B
    dg = np.zeros_like(g)
    if nb and eikonal_weight > 0:
        with np.errstate(divide="ignore", invalid="ignore"):
            coef = np.where(band & (gnorm > 0), 2.0 * eikonal_weight * (gnorm - 1.0) / (gnorm * nb), 0.0)
        dg = coef[:, None] * g

    # adjoint of the tangent pass
    dc1 = np.zeros_like(c1)
    dc2 = np.zeros_like(c2)
    for k in range(2):
        dgk = dg[:, k]
        dW3[0] += dgk @ D2[k]
        dD2 = dgk[:, None] * W3[0]
        dc2 += dD2 * E2[k]
        dE2 = dD2 * c2
        dW2 += om * (dE2.T @ D1[k])
        dD1 = om * (dE2 @ W2)
        dc1 += dD1 * (om * W1[:, k])
        dW1[:, k] += om * np.einsum("bi,bi->i", dD1, c1)

    # adjoint of the primal pass
    dW3[0] += dy @ a2
    db3 = np.array([dy.sum()])
    da2 = dy[:, None] * W3[0]
    ds2 = da2 * c2 - dc2 * a2
    dW2 += om * (ds2.T @ a1)
    db2 = om * ds2.sum(axis=0)
    da1 = om * (ds2 @ W2)
    ds1 = da1 * c1 - dc1 * a1
    dW1 += om * (ds1.T @ X)
    db1 = om * ds1.sum(axis=0)

    return LossParts(total, data, eik), [dW1, db1, dW2, db2, dW3, db3]


def spatial_gradient(w: MlpWeights, points: np.ndarray) -> np.ndarray:
    """Network spatial gradient from the training tangent pass (independent of the dual-number path)."""
    W1, W2, W3 = w.weights
    b1, b2, _ = w.biases
    om = w.omega0
    s1 = om * (points @ W1.T + b1)
    c1 = np.cos(s1)
    s2 = om * (np.sin(s1) @ W2.T + b2)
    c2 = np.cos(s2)
    cols = []
    for k in range(2):
        d1 = c1 * (om * W1[:, k])
        d2 = c2 * (om * (d1 @ W2.T))
        cols.append((d2 @ W3.T)[:, 0])
    return np.column_stack(cols)


class Adam:
    def __init__(self, params: list[np.ndarray], lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def sample_batch(rng: np.random.Generator, cfg: TrainConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Half uniform over the box, half uniform over the band ``|phi| < band_halfwidth``."""
    x0, x1, y0, y1 = cfg.bbox
    n_band = cfg.batch_size // 2
    n_box = cfg.batch_size - n_band
    box = np.column_stack([rng.uniform(x0, x1, n_box), rng.uniform(y0, y1, n_box)])
    # area-uniform over the annulus 1 - hb < r < 1 + hb
    r_lo, r_hi = max(0.0, 1.0 - cfg.band_halfwidth), 1.0 + cfg.band_halfwidth
    r = np.sqrt(rng.uniform(r_lo**2, r_hi**2, n_band))
    th = rng.uniform(0.0, 2.0 * math.pi, n_band)
    ring = np.column_stack([r * np.cos(th), r * np.sin(th)])
    pts = np.concatenate([box, ring])
    phi = np.hypot(pts[:, 0], pts[:, 1]) - 1.0
    return pts, phi, np.abs(phi) < cfg.band_halfwidth


def _probe_points(cfg: TrainConfig) -> np.ndarray:
    from simready.regularity import sample_tube

    return sample_tube(CircleSdf(1.0), cfg.probe_h, cfg.probe_res, cfg.bbox).points


def train(
    cfg: TrainConfig, checkpoints: list[int] | tuple[int, ...] = ()
) -> tuple[MlpWeights, TrainHistory, dict[int, MlpWeights]]:
    """Run Adam for ``cfg.budget_steps`` steps from a seeded initialisation.

    Returns final weights, the loss history, and copies of the weights after
    each step count in ``checkpoints``.  A run's state after ``k`` steps does
    not depend on its total budget, so checkpoints of one long run equal
    separate shorter runs.
    """
    w = init_weights([2, cfg.width, cfg.width, 1], cfg.omega0, cfg.seed)
    params = [w.weights[0], w.biases[0], w.weights[1], w.biases[1], w.weights[2], w.biases[2]]
    opt = Adam(params, cfg.learning_rate)
    rng = np.random.Generator(np.random.PCG64([cfg.seed, 1]))
    probe = _probe_points(cfg)
    probe_phi = np.hypot(probe[:, 0], probe[:, 1]) - 1.0
    history = TrainHistory()
    saved: dict[int, MlpWeights] = {}
    wanted = set(int(c) for c in checkpoints)
    for step in range(1, cfg.budget_steps + 1):
        pts, phi, band = sample_batch(rng, cfg)
        parts, grads = loss_and_grad(w, pts, phi, band, cfg.eikonal_weight)
        if not math.isfinite(parts.total):
            raise TrainingDivergedError(f"loss became non-finite at step {step}")
        if cfg.lr_halflife > 0:
            # depends on the step index only, so checkpoints still equal shorter runs
            opt.lr = cfg.learning_rate * 0.5 ** ((step - 1) / cfg.lr_halflife)
        opt.step(params, grads)
        w.steps = step
        if step % cfg.log_every == 0 or step == cfg.budget_steps:
            eps = float(np.abs(Neural(w).values(probe) - probe_phi).max())
            history.rows.append(HistoryRow(step, parts.data, parts.eikonal, eps))
            log.debug("step %d data %.3e eik %.3e eps %.3e", step, parts.data, parts.eikonal, eps)
        if step in wanted:
            saved[step] = w.copy()
    return w, history, saved
