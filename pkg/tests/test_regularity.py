import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from simready.errors import ConfigError, EmptyTubeError
from simready.field import CircleSdf, Quadratic, Scaled, make_banded
from simready.regularity import (
    StabilityParameters,
    Thresholds,
    certify,
    check_bound_validity,
    grid_points,
    sample_tube,
)


def test_grid_points_layout():
    pts, idx = grid_points((-1, 1, 0, 2), 3)
    assert pts.shape == (9, 2)
    np.testing.assert_allclose(pts[1], [0.0, 0.0])  # row 0 is y = ymin, columns run along x
    np.testing.assert_allclose(pts[3], [-1.0, 1.0])
    assert tuple(idx[5]) == (1, 2)


def test_tube_contains_only_band_points():
    tube = sample_tube(CircleSdf(1.0), 0.1, 128)
    r = np.hypot(tube.points[:, 0], tube.points[:, 1])
    assert np.all(np.abs(r - 1.0) < 0.1)
    # area fraction of the annulus in the box: 2*pi*1*0.2/16
    assert len(tube.points) / 128**2 == pytest.approx(2 * math.pi * 0.2 / 16, rel=0.05)


def test_tube_errors():
    with pytest.raises(EmptyTubeError):
        sample_tube(CircleSdf(5.0), 0.01, 32)
    with pytest.raises(ConfigError):
        sample_tube(CircleSdf(1.0), 0.1, 16)
    with pytest.raises(ConfigError):
        sample_tube(CircleSdf(1.0), 0.0, 64)


@pytest.mark.parametrize("res", [64, 128, 512])
def test_circle_sdf_is_eikonal(res):
    cert = certify(CircleSdf(1.0), sample_tube(CircleSdf(1.0), 0.1, res))
    assert cert.c0_hat == pytest.approx(1.0, abs=1e-9)
    assert cert.passed


def test_circle_curvature_bound():
    cert = certify(CircleSdf(1.0), sample_tube(CircleSdf(1.0), 0.1, 512))
    assert cert.cpsi_hat == pytest.approx(1 / 0.9, rel=0.02)
    assert cert.h_crit_est == pytest.approx(cert.c0_hat**2 / (2 * cert.cpsi_hat))
    # gradient of |x| is 1/r-Lipschitz: pair estimate cannot exceed the Hessian bound by much
    assert cert.lip_grad_hat <= cert.cpsi_hat * 1.01


def test_quadratic_constants():
    cert = certify(Quadratic(1.0), sample_tube(CircleSdf(1.0), 0.1, 256))
    assert cert.cpsi_hat == pytest.approx(2.0, abs=1e-9)
    assert cert.lip_grad_hat == pytest.approx(2.0, rel=1e-9)
    assert cert.c0_hat == pytest.approx(2 * 0.9, rel=0.01)


def test_scaling_doubles_constants():
    tube = sample_tube(CircleSdf(1.0), 0.1, 128)
    c1 = certify(CircleSdf(1.0), tube)
    c2 = certify(Scaled(CircleSdf(1.0), 2.0), tube)
    assert c2.c0_hat == pytest.approx(2 * c1.c0_hat)
    assert c2.cpsi_hat == pytest.approx(2 * c1.cpsi_hat)
    assert c2.h_crit_est == pytest.approx(c2.c0_hat**2 / (2 * c2.cpsi_hat))
    assert c2.h_crit_est == pytest.approx(2 * c1.h_crit_est)


@given(st.floats(0.02, 0.5), st.floats(0.02, 0.5))
def test_shrinking_tube_is_monotone(h1, h2):
    lo, hi = sorted((h1, h2))
    f = Quadratic(1.0)
    small = certify(f, sample_tube(CircleSdf(1.0), lo, 96))
    big = certify(f, sample_tube(CircleSdf(1.0), hi, 96))
    assert small.c0_hat >= big.c0_hat
    assert small.cpsi_hat <= big.cpsi_hat


def test_banded_certificate_depends_on_tube():
    f = make_banded(1.0, 0.2, 0.02)
    th = Thresholds(c0_min=0.5)
    inside = certify(f, sample_tube(CircleSdf(1.0), 0.15, 256), th)
    assert inside.passed and inside.c0_hat == pytest.approx(1.0, abs=1e-6)
    wide = certify(f, sample_tube(CircleSdf(1.0), 0.9, 256), th)
    assert not wide.passed and wide.c0_hat <= 0.02 + 1e-12


def test_bound_validity_conditions():
    cert = certify(CircleSdf(1.0), sample_tube(CircleSdf(1.0), 0.1, 128))
    ok = check_bound_validity(cert, 0.01, 0.1)
    assert ok.cond_disc and ok.cond_tube
    assert ok.tube_limit == pytest.approx(0.05)
    bad = check_bound_validity(cert, 0.06, 0.1)
    assert bad.cond_disc and not bad.cond_tube
    with pytest.raises(ConfigError):
        check_bound_validity(cert, -1.0, 0.1)


def test_stability_parameters():
    sp = StabilityParameters(0.2, math.pi / 6)
    assert sp.smallness_limit == pytest.approx(0.05)
    with pytest.raises(ConfigError):
        StabilityParameters(0.2, math.pi / 2)
