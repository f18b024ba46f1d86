import math

import numpy as np
import pytest

from simready.errors import ConfigError
from simready.harness import (
    BoundRow,
    detect_plateau,
    fit_loglog_slope,
    hausdorff_validation,
    perturbed_circle,
    sweep_perturbation,
    sweep_refinement,
)
from simready.train import TrainConfig

# (d_H, L2 error) pairs from a level-8 reference sweep
REFERENCE_SWEEP = np.array(
    [
        (1.10485e-04, 1.38921e-04),
        (2.76213e-04, 2.88161e-04),
        (3.86698e-04, 3.95160e-04),
        (5.52426e-04, 5.59827e-04),
        (1.10485e-03, 1.10331e-03),
    ]
)


def test_slope_of_exact_power_law():
    x = np.array([1e-4, 1e-3, 1e-2])
    assert fit_loglog_slope(x, 3.0 * x**1.5) == pytest.approx(1.5, abs=1e-12)


def test_slope_on_reference_sweep():
    ref = np.polyfit(np.log(REFERENCE_SWEEP[:, 0]), np.log(REFERENCE_SWEEP[:, 1]), 1)[0]
    assert fit_loglog_slope(*REFERENCE_SWEEP.T) == pytest.approx(ref, abs=1e-12)
    assert fit_loglog_slope(*REFERENCE_SWEEP.T) == pytest.approx(0.9013, abs=1e-4)


def test_slope_undefined_for_single_point():
    assert math.isnan(fit_loglog_slope([1e-3], [2e-3]))


def test_slope_rejects_nonpositive():
    with pytest.raises(ConfigError):
        fit_loglog_slope([0.0, 1.0], [1.0, 2.0])


def test_perturbed_circle_zero_set():
    f = perturbed_circle(0.01)
    assert f.values(np.array([[0.99, 0.0]]))[0] == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize(
    "errors, plateau",
    [
        ([0.032, 0.011, 0.0027, 0.00152, 0.00143], 8),
        ([0.0327, 0.0167, 0.0087, 0.00358, 0.00357], 8),
        ([0.0323, 0.0136, 0.0045, 0.0028157, 0.00278998], 8),
        ([0.0323, 0.0136, 0.0045, 0.0044, 0.0043], 7),
        ([0.0317, 0.0063, 0.0013, 0.0003, 0.00007], None),
    ],
)
def test_detect_plateau(errors, plateau):
    assert detect_plateau([4, 5, 6, 7, 8], errors) == plateau


def test_sweep_perturbation_validation():
    for bad in ([], [0.0, 1e-3], [-1e-3], [2e-3, 1e-3]):
        with pytest.raises(ConfigError):
            sweep_perturbation(bad, level=4)


def test_sweep_perturbation_single_alpha_has_no_slope():
    res = sweep_perturbation([1e-3], level=4)
    assert math.isnan(res.slope)
    assert res.records[-1].experiment == "sweep_perturbation_summary"


def test_sweep_perturbation_records():
    res = sweep_perturbation([1e-3, 4e-3], level=5)
    assert [r.hausdorff for r in res.reports] == [1e-3, 4e-3]
    assert res.reports[1].l2_error > res.reports[0].l2_error
    assert res.slope > 0
    assert res.records[0].params == {"alpha": 1e-3, "level": 5}


def test_sweep_refinement_validation():
    with pytest.raises(ConfigError):
        sweep_refinement(1e-3, [3, 4])
    with pytest.raises(ConfigError):
        sweep_refinement(-1e-3, [4])


def test_sweep_refinement_is_reproducible():
    a = sweep_refinement(2e-3, [4, 5])
    b = sweep_refinement(2e-3, [4, 5])
    assert [r.csv_row() for r in a.reports] == [r.csv_row() for r in b.reports]
    assert a.reports[1].l2_error < a.reports[0].l2_error


def _tiny_config():
    return TrainConfig(batch_size=64, width=16, log_every=50, probe_res=64, learning_rate=1e-3)


def test_hausdorff_validation_rows():
    rows, saved = hausdorff_validation([300, 600], seed=0, config=_tiny_config(), tube_res=128, res=256)
    assert [r.budget for r in rows] == [300, 600]
    assert set(saved) == {300, 600}
    for r in rows:
        assert r.bound == pytest.approx(r.eps_inf_hat / min(1.0, r.c0_tilde_hat))
        assert len(r.csv_row()) == len(BoundRow.CSV_HEADER)


def test_hausdorff_validation_budget_order():
    with pytest.raises(ConfigError):
        hausdorff_validation([100, 50], config=_tiny_config())
