"""Command-line front end.

Every subcommand writes CSV to ``--out`` or standard output.  Exit status is
0 on success, 1 when a check fails (certificate, bound) or the computation
cannot proceed, and 2 on usage errors.  ``--config FILE`` reads flat
``key = value`` lines whose keys are flag names; flags given on the command
line take precedence.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from simready.errors import ConfigError, SimreadyError
from simready.field import DEFAULT_BBOX, CircleSdf, circle_closest_point, parse_field
from simready.geometry import bound_report, extraction_resolution
from simready.harness import (
    DEFAULT_BUDGETS,
    DEFAULT_LEVELS,
    BoundRow,
    hausdorff_validation,
    perturbed_circle,
    sweep_perturbation,
    sweep_refinement,
)
from simready.mlp import save_weights
from simready.projection import GRAD_FLOOR_DEFAULT, MAX_ITER_DEFAULT, TOL_DEFAULT, success_map
from simready.regularity import Thresholds, certify, sample_tube
from simready.solver import GAMMA_DEFAULT, LEVEL_MAX, LEVEL_MIN, SolveReport, solve_poisson
from simready.train import TrainConfig, train

log = logging.getLogger("simready")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

CERTIFY_HEADER = ("field_id", "h_tube", "grid_res", "c0_hat", "cpsi_hat", "lip_grad_hat", "h_crit_est", "passed")
HAUSDORFF_HEADER = (
    "phi_id", "psi_id", "h_tube", "eps_inf_hat", "c0_tilde_hat", "bound",
    "d_forward", "d_backward", "d_H", "bound_satisfied", "res",
)  # fmt: skip
GRID_HEADER = ("kind", "xmin", "xmax", "ymin", "ymax", "res")
SUMMARY_HEADER = ("experiment", "level", "alpha", "slope", "plateau_level")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # raise instead of exiting so dispatch owns the exit code
        raise _UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


# -- argument types -----------------------------------------------------------


def _level(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid level '{text}'") from None
    if not LEVEL_MIN <= v <= LEVEL_MAX:
        raise argparse.ArgumentTypeError(f"level must be in {LEVEL_MIN}..{LEVEL_MAX}, got {v}")
    return v


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{text}'") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{text}'") from None


def _bbox(text: str) -> tuple[float, float, float, float]:
    vals = _float_list(text)
    if len(vals) != 4 or not (vals[0] < vals[1] and vals[2] < vals[3]):
        raise argparse.ArgumentTypeError("bbox must be xmin,xmax,ymin,ymax with min < max")
    return tuple(vals)


def _positive(kind):
    def conv(text: str):
        try:
            v = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"invalid value '{text}'") from None
        if not v > 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return v

    return conv


# -- parser -------------------------------------------------------------------


def _training_flags(p: argparse.ArgumentParser) -> None:
    d = TrainConfig()
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--lr", type=_positive(float), default=d.learning_rate)
    p.add_argument("--lr-halflife", type=float, default=d.lr_halflife)
    p.add_argument("--batch-size", type=_positive(int), default=d.batch_size)
    p.add_argument("--eikonal-weight", type=float, default=d.eikonal_weight)
    p.add_argument("--band", type=_positive(float), default=d.band_halfwidth)
    p.add_argument("--width", type=int, default=d.width)
    p.add_argument("--omega0", type=_positive(float), default=d.omega0)
    p.add_argument("--log-every", type=_positive(int), default=d.log_every)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--out", help="output path (default: standard output)")
    common.add_argument("--config", help="flat key=value file of flag defaults")
    common.add_argument("--bbox", type=_bbox, default=DEFAULT_BBOX, help="xmin,xmax,ymin,ymax")
    common.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    parser = _Parser(prog="simready", description="Regularity checks and geometry-error studies for implicit boundaries.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("certify", parents=[common], help="estimate regularity constants on a tube")
    p.add_argument("--field", required=True, help="field id (circle, quadratic:R, banded:R,b,k, offset:<id>,a) or weights JSON")
    p.add_argument("--reference", default="circle", help="field whose tube |reference| < h_tube is sampled")
    p.add_argument("--h-tube", type=_positive(float), default=0.1)
    p.add_argument("--grid-res", type=int, default=512)
    p.add_argument("--c0-min", type=float, default=Thresholds().c0_min)
    p.add_argument("--cpsi-max", type=float, default=Thresholds().cpsi_max)

    p = sub.add_parser("project-map", parents=[common], help="Newton projection success and error grids")
    p.add_argument("--field", required=True)
    p.add_argument("--truth-radius", type=_positive(float), default=1.0, help="radius of the true circle")
    p.add_argument("--res", type=int, default=256)
    p.add_argument("--tol", type=_positive(float), default=TOL_DEFAULT)
    p.add_argument("--max-iter", type=_positive(int), default=MAX_ITER_DEFAULT)
    p.add_argument("--grad-floor", type=float, default=GRAD_FLOOR_DEFAULT)
    p.add_argument("--success-radius", type=_positive(float), default=None)
    p.add_argument("--error-out", help="path for the error grid (default: <out stem>_error.csv)")

    p = sub.add_parser("hausdorff", parents=[common], help="measured Hausdorff distance against the bound")
    p.add_argument("--phi", default="circle", help="reference field, an exact distance in the tube")
    p.add_argument("--psi", required=True)
    p.add_argument("--h-tube", type=_positive(float), default=0.1)
    p.add_argument("--grid-res", type=int, default=512)
    p.add_argument("--res", type=int, default=None, help="extraction resolution (default from --alpha-target)")
    p.add_argument("--alpha-target", type=_positive(float), default=None)

    p = sub.add_parser("train", parents=[common], help="fit a sine network to the unit-circle distance")
    p.add_argument("--budget", type=_positive(int), default=TrainConfig().budget_steps)
    p.add_argument("--history", help="history CSV path (default: standard output)")
    _training_flags(p)

    p = sub.add_parser("solve", parents=[common], help="shifted-boundary Poisson solve with L2 error")
    p.add_argument("--level", type=_level, required=True)
    p.add_argument("--alpha", type=float, default=0.0, help="offset of the perturbed circle (ignored geometry-wise with --field)")
    p.add_argument("--field", default=None, help="boundary field; default is the circle of radius 1 - alpha")
    p.add_argument("--reference", default="circle", help="field on which the boundary data is prescribed")
    p.add_argument("--gamma", type=_positive(float), default=GAMMA_DEFAULT)
    p.add_argument("--kappa", type=_positive(float), default=1.0)
    p.add_argument("--method", default="auto", choices=["auto", "bicgstab", "lu"])

    p = sub.add_parser("sweep-perturbation", parents=[common], help="error against perturbation size at a fixed level")
    p.add_argument("--alphas", type=_float_list, default=[2e-4, 4e-4, 8e-4, 1.6e-3])
    p.add_argument("--level", type=_level, default=8)
    p.add_argument("--gamma", type=_positive(float), default=GAMMA_DEFAULT)
    p.add_argument("--summary", help="path for the slope summary CSV (default: log only)")

    p = sub.add_parser("sweep-refinement", parents=[common], help="error against mesh level at a fixed perturbation")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--levels", type=_int_list, default=list(DEFAULT_LEVELS))
    p.add_argument("--gamma", type=_positive(float), default=GAMMA_DEFAULT)
    p.add_argument("--summary", help="path for the plateau summary CSV (default: log only)")

    p = sub.add_parser("validate-bound", parents=[common], help="train at several budgets and check the Hausdorff bound")
    p.add_argument("--budgets", type=_int_list, default=list(DEFAULT_BUDGETS))
    p.add_argument("--h-tube", type=_positive(float), default=0.1)
    p.add_argument("--tube-res", type=int, default=512)
    p.add_argument("--res", type=int, default=1024)
    p.add_argument("--save-dir", help="directory for weights JSON per budget")
    _training_flags(p)
    return parser


# -- config file --------------------------------------------------------------


def read_config(path: str) -> dict[str, str]:
    out: dict[str, str] = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for n, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"{path}:{n}: expected key = value")
        out[key.strip().replace("_", "-")] = value.strip()
    return out


def _config_argv(values: dict[str, str]) -> list[str]:
    argv = []
    for key, value in values.items():
        if key == "config":
            raise ConfigError("config files cannot include other config files")
        argv += [f"--{key}", value]
    return argv


def parse_args(argv: list[str]) -> argparse.Namespace:
    parser = build_parser()
    config = None
    for k, tok in enumerate(argv):
        if tok == "--config" and k + 1 < len(argv):
            config = argv[k + 1]
        elif tok.startswith("--config="):
            config = tok.split("=", 1)[1]
    cmd_at = next((k for k, tok in enumerate(argv) if tok in COMMANDS), None)
    if config is not None and cmd_at is not None:
        extra = _config_argv(read_config(config))
        # file values first so explicit flags, parsed later, win
        argv = [*argv[: cmd_at + 1], *extra, *argv[cmd_at + 1 :]]
    return parser.parse_args(argv)


# -- output helpers -----------------------------------------------------------


@contextlib.contextmanager
def _open_out(path: str | None):
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _write_csv(path: str | None, header, rows) -> None:
    with _open_out(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _write_grid(fh, kind: str, bbox, res: int, grid: np.ndarray, fmt) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(GRID_HEADER)
    w.writerow((kind, *bbox, res))
    for row in grid:
        w.writerow([fmt(v) for v in row])


# -- commands -----------------------------------------------------------------


def _cmd_certify(a) -> int:
    field = parse_field(a.field)
    tube = sample_tube(parse_field(a.reference), a.h_tube, a.grid_res, a.bbox)
    cert = certify(field, tube, Thresholds(a.c0_min, a.cpsi_max))
    _write_csv(
        a.out,
        CERTIFY_HEADER,
        [(a.field, a.h_tube, a.grid_res, cert.c0_hat, cert.cpsi_hat, cert.lip_grad_hat, cert.h_crit_est, int(cert.passed))],
    )
    return EXIT_OK if cert.passed else EXIT_FAIL


def _cmd_project_map(a) -> int:
    pm = success_map(
        parse_field(a.field),
        circle_closest_point(a.truth_radius),
        a.bbox,
        a.res,
        a.tol,
        a.success_radius,
        a.max_iter,
        a.grad_floor,
        truth_name=f"circle:{a.truth_radius}",
    )
    mask_fmt = lambda v: int(v)  # noqa: E731
    err_fmt = lambda v: "nan" if np.isnan(v) else repr(float(v))  # noqa: E731
    if a.out is None:
        _write_grid(sys.stdout, "mask", pm.bbox, pm.res, pm.success_mask, mask_fmt)
        _write_grid(sys.stdout, "error", pm.bbox, pm.res, pm.error_field, err_fmt)
    else:
        err_path = a.error_out or str(Path(a.out).with_name(Path(a.out).stem + "_error.csv"))
        with open(a.out, "w", newline="") as fh:
            _write_grid(fh, "mask", pm.bbox, pm.res, pm.success_mask, mask_fmt)
        with open(err_path, "w", newline="") as fh:
            _write_grid(fh, "error", pm.bbox, pm.res, pm.error_field, err_fmt)
    log.info("success fraction %.4f", pm.success_fraction)
    return EXIT_OK


def _cmd_hausdorff(a) -> int:
    phi, psi = parse_field(a.phi), parse_field(a.psi)
    res = a.res if a.res is not None else extraction_resolution(a.alpha_target, a.bbox[1] - a.bbox[0])
    tube = sample_tube(phi, a.h_tube, a.grid_res, a.bbox)
    r = bound_report(phi, psi, tube, a.bbox, res)
    _write_csv(
        a.out,
        HAUSDORFF_HEADER,
        [(a.phi, a.psi, a.h_tube, r.eps_inf_hat, r.c0_tilde_hat, r.bound, r.d_forward, r.d_backward, r.d_H,
          int(r.bound_satisfied), r.res)],
    )  # fmt: skip
    return EXIT_OK if r.bound_satisfied else EXIT_FAIL


def _train_config(a, budget: int) -> TrainConfig:
    return TrainConfig(
        budget_steps=budget,
        batch_size=a.batch_size,
        learning_rate=a.lr,
        lr_halflife=a.lr_halflife,
        eikonal_weight=a.eikonal_weight,
        band_halfwidth=a.band,
        bbox=a.bbox,
        seed=a.seed,
        width=a.width,
        omega0=a.omega0,
        log_every=a.log_every,
    )


def _cmd_train(a) -> int:
    if a.out is None:
        raise ConfigError("train needs --out for the weights JSON")
    w, history, _ = train(_train_config(a, a.budget))
    save_weights(w, a.out)
    with _open_out(a.history) as fh:
        history.write_csv(fh)
    return EXIT_OK


def _cmd_solve(a) -> int:
    reference = parse_field(a.reference)
    if a.field is None:
        if a.alpha < 0:
            raise ConfigError("alpha must be non-negative")
        psi = perturbed_circle(a.alpha) if a.alpha > 0 else CircleSdf(1.0)
        d_h = abs(a.alpha)
    else:
        psi, d_h = parse_field(a.field), None
    rep = solve_poisson(
        psi, a.level, gamma=a.gamma, kappa=a.kappa, reference=reference, alpha=a.alpha,
        hausdorff=d_h, method=a.method, bbox=a.bbox,
    )  # fmt: skip
    _write_csv(a.out, SolveReport.CSV_HEADER, [rep.csv_row()])
    return EXIT_OK


def _cmd_sweep_perturbation(a) -> int:
    res = sweep_perturbation(a.alphas, a.level, a.gamma)
    _write_csv(a.out, SolveReport.CSV_HEADER, [r.csv_row() for r in res.reports])
    log.info("slope %.4f", res.slope)
    if a.summary:
        _write_csv(a.summary, SUMMARY_HEADER, [("sweep_perturbation", a.level, "", res.slope, "")])
    return EXIT_OK


def _cmd_sweep_refinement(a) -> int:
    res = sweep_refinement(a.alpha, a.levels, a.gamma)
    _write_csv(a.out, SolveReport.CSV_HEADER, [r.csv_row() for r in res.reports])
    log.info("plateau level %s", res.plateau_level)
    if a.summary:
        plateau = "" if res.plateau_level is None else res.plateau_level
        _write_csv(a.summary, SUMMARY_HEADER, [("sweep_refinement", "", a.alpha, "", plateau)])
    return EXIT_OK


def _cmd_validate_bound(a) -> int:
    rows, saved = hausdorff_validation(
        a.budgets, a.seed, _train_config(a, max(a.budgets)), a.h_tube, a.tube_res, a.res, a.bbox
    )
    if a.save_dir:
        Path(a.save_dir).mkdir(parents=True, exist_ok=True)
        for b, w in saved.items():
            save_weights(w, Path(a.save_dir) / f"weights_{b}.json")
    _write_csv(a.out, BoundRow.CSV_HEADER, [r.csv_row() for r in rows])
    return EXIT_OK if all(r.bound_satisfied for r in rows) else EXIT_FAIL


COMMANDS = {
    "certify": _cmd_certify,
    "project-map": _cmd_project_map,
    "hausdorff": _cmd_hausdorff,
    "train": _cmd_train,
    "solve": _cmd_solve,
    "sweep-perturbation": _cmd_sweep_perturbation,
    "sweep-refinement": _cmd_sweep_refinement,
    "validate-bound": _cmd_validate_bound,
}


def dispatch(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
    except _UsageError as exc:
        sys.stderr.write(str(exc))
        return EXIT_USAGE
    except ConfigError as exc:
        sys.stderr.write(f"simready: error: {exc}\n")
        return EXIT_USAGE
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        sys.stderr.write(f"simready: error: {exc}\n")
        return EXIT_USAGE
    except SimreadyError as exc:
        sys.stderr.write(f"simready: {type(exc).__name__}: {exc}\n")
        return EXIT_FAIL


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
