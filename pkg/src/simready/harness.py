"""Experiment sweeps: error versus perturbation size, refinement plateaus, bound validation."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from simready.errors import ConfigError
from simready.field import DEFAULT_BBOX, CircleSdf, ImplicitField, Neural, Offset
from simready.geometry import bound_report
from simready.regularity import sample_tube
from simready.solver import GAMMA_DEFAULT, SolveReport, solve_poisson
from simready.train import TrainConfig, train

log = logging.getLogger(__name__)

DEFAULT_BUDGETS = (1000, 3000, 10000, 15000)
DEFAULT_LEVELS = (4, 5, 6, 7, 8)
PLATEAU_IMPROVEMENT = 0.10


@dataclass
class ExperimentRecord:
    experiment: str
    params: dict
    measured: dict
    slope: float | None = None


@dataclass
class SweepResult:
    records: list[ExperimentRecord] = field(default_factory=list)
    reports: list[SolveReport] = field(default_factory=list)
    slope: float = math.nan
    plateau_level: int | None = None


def fit_loglog_slope(x, y) -> float:
    """Least-squares slope of log(y) against log(x); NaN for fewer than two points."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 2:
        return math.nan
    if np.any(x <= 0) or np.any(y <= 0):
        raise ConfigError("log-log fit needs positive data")
    lx, ly = np.log(x), np.log(y)
    lx = lx - lx.mean()
    return float((lx @ (ly - ly.mean())) / (lx @ lx))


def perturbed_circle(alpha: float) -> ImplicitField:
    """Unit-circle SDF shifted so that its zero set is the circle of radius ``1 - alpha``."""
    return Offset(CircleSdf(1.0), -alpha)


def _solve_perturbed(alpha: float, level: int, gamma: float) -> SolveReport:
    ref = CircleSdf(1.0)
    psi = perturbed_circle(alpha) if alpha != 0 else ref
    # concentric circles: the Hausdorff distance is |alpha| exactly
    return solve_poisson(psi, level, gamma=gamma, reference=ref, alpha=alpha, hausdorff=abs(alpha))


def sweep_perturbation(alphas, level: int = 8, gamma: float = GAMMA_DEFAULT) -> SweepResult:
    alphas = [float(a) for a in alphas]
    if not alphas:
        raise ConfigError("need at least one alpha")
    if any(a <= 0 for a in alphas):
        raise ConfigError("alphas must be positive (the fit takes logarithms)")
    if alphas != sorted(alphas):
        raise ConfigError("alphas must be sorted ascending")
    out = SweepResult()
    for a in alphas:
        rep = _solve_perturbed(a, level, gamma)
        out.reports.append(rep)
        out.records.append(
            ExperimentRecord(
                "sweep_perturbation",
                {"alpha": a, "level": level},
                {"d_H": rep.hausdorff, "l2_error": rep.l2_error},
            )
        )
        log.info("alpha=%g level=%d L2=%.4e", a, level, rep.l2_error)
    out.slope = fit_loglog_slope([r.hausdorff for r in out.reports], [r.l2_error for r in out.reports])
    if math.isnan(out.slope):
        log.warning("single perturbation: slope undefined")
    out.records.append(
        ExperimentRecord("sweep_perturbation_summary", {"level": level}, {}, out.slope)
    )
    return out


def detect_plateau(levels, errors, threshold: float = PLATEAU_IMPROVEMENT) -> int | None:
    """First level whose error improves by less than ``threshold`` (relative) on the previous one."""
    for k in range(1, len(errors)):
        if errors[k - 1] > 0 and 1.0 - errors[k] / errors[k - 1] < threshold:
            return int(levels[k])
    return None


def sweep_refinement(alpha: float, levels=DEFAULT_LEVELS, gamma: float = GAMMA_DEFAULT) -> SweepResult:
    levels = [int(lv) for lv in levels]
    if not levels or any(lv < 4 or lv > 8 for lv in levels):
        raise ConfigError("levels must be drawn from 4..8")
    if alpha < 0:
        raise ConfigError("alpha must be non-negative")
    out = SweepResult()
    for lv in levels:
        rep = _solve_perturbed(alpha, lv, gamma)
        out.reports.append(rep)
        out.records.append(
            ExperimentRecord(
                "sweep_refinement",
                {"alpha": alpha, "level": lv},
                {"d_H": rep.hausdorff, "l2_error": rep.l2_error},
            )
        )
        log.info("alpha=%g level=%d L2=%.4e", alpha, lv, rep.l2_error)
    out.plateau_level = detect_plateau(levels, [r.l2_error for r in out.reports])
    return out


@dataclass
class BoundRow:
    budget: int
    eps_inf_hat: float
    c0_tilde_hat: float
    bound: float
    d_H: float
    bound_satisfied: bool
    res: int
    h_tube: float

    CSV_HEADER = ("budget", "eps_inf_hat", "c0_tilde_hat", "bound", "d_H", "bound_satisfied", "res", "h_tube")

    def csv_row(self) -> tuple:
        return (
            self.budget,
            self.eps_inf_hat,
            self.c0_tilde_hat,
            self.bound,
            self.d_H,
            int(self.bound_satisfied),
            self.res,
            self.h_tube,
        )


def hausdorff_validation(
    budgets=DEFAULT_BUDGETS,
    seed: int = 0,
    config: TrainConfig | None = None,
    h_tube: float = 0.1,
    tube_res: int = 512,
    res: int = 1024,
    bbox=DEFAULT_BBOX,
) -> tuple[list[BoundRow], dict]:
    """Train once up to the largest budget and compare measured Hausdorff distance to the bound.

    Weights at smaller budgets are checkpoints of the same run, which equal
    separate runs with those budgets because nothing in the optimiser depends
    on the total step count.
    """
    budgets = [int(b) for b in budgets]
    if not budgets or budgets != sorted(budgets) or len(set(budgets)) != len(budgets):
        raise ConfigError("budgets must be strictly ascending")
    base = config or TrainConfig()
    cfg = TrainConfig(**{**base.__dict__, "budget_steps": budgets[-1], "seed": seed, "bbox": tuple(bbox)})
    _, _, saved = train(cfg, budgets)
    phi = CircleSdf(1.0)
    tube = sample_tube(phi, h_tube, tube_res, bbox)
    rows = []
    for b in budgets:
        rep = bound_report(phi, Neural(saved[b]), tube, bbox, res)
        rows.append(
            BoundRow(b, rep.eps_inf_hat, rep.c0_tilde_hat, rep.bound, rep.d_H, rep.bound_satisfied, rep.res, h_tube)
        )
        log.info("budget=%d eps=%.4e c0=%.4f bound=%.4e dH=%.4e", b, rep.eps_inf_hat, rep.c0_tilde_hat, rep.bound, rep.d_H)
    return rows, saved
