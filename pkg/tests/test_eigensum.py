import math

import numpy as np
import pytest

from obscert.certify import empirical_ratio, soundness_check
from obscert.errors import ConfigError, ResolutionError
from obscert.eigensum import (
    build_eigensum,
    calibrate_gamma,
    certify_eigensum,
    derive_eigensum_gevrey,
    doubling_growth_study,
    gamma_params,
    l2_inner,
    l2_norm,
    orthogonality_check,
    shape_constant,
)
from obscert.functions import FunctionModel, TrigSum
from obscert.geometry import Domain, Grid, MeasurableSet

TWO_PI = 2 * math.pi
TORUS_1D = Domain.torus([1.0])
TORUS_2D = Domain.torus([1.0, 1.0])


def torus_grid(cells=1024):
    return Grid(TORUS_1D, (cells,))


# ---------------------------------------------------------------------------
# Construction and eigenvalue grouping
# ---------------------------------------------------------------------------

def test_single_mode_eigenvalue():
    es = build_eigensum([([1], 1.0, 0.0)], 1)
    assert es.m == 1
    assert es.max_eigenvalue == pytest.approx(4 * math.pi ** 2, rel=1e-12)


def test_two_modes_distinct_eigenvalues():
    es = build_eigensum([([1], 1.0, 0.0), ([2], 0.5, 0.1)], 1)
    assert es.m == 2
    assert es.max_eigenvalue == pytest.approx(16 * math.pi ** 2, rel=1e-12)


def test_equal_norm_frequencies_grouped():
    es = build_eigensum([([1, 0], 1.0, 0.0), ([0, 1], 1.0, 0.0)], 2)
    assert es.m == 1


def test_duplicate_mode_rejected():
    with pytest.raises(ConfigError):
        build_eigensum([([1], 1.0, 0.0), ([1], 1.0, 0.0)], 1)


def test_zero_frequency_requires_flag():
    with pytest.raises(ConfigError):
        build_eigensum([([0], 1.0, 0.5)], 1)
    es = build_eigensum([([0], 1.0, 0.5), ([1], 1.0, 0.0)], 1, allow_constant=True)
    assert es.m == 2


def test_laplacian_identity_at_random_points():
    # -Lap h = sum lambda_i phi_i, via exact axis second derivatives
    rng = np.random.default_rng(6)
    es = build_eigensum([([1], 1.0, 0.2), ([3], 0.4, 1.0), ([5], 0.25, 2.2)], 1)
    pts = rng.uniform(0, 1, size=(1000, 1))
    lap = -es.model.directional_derivative(pts, np.array([1.0]), 2)
    want = es.laplace_power(1).evaluate(pts)
    assert np.allclose(lap, want, rtol=1e-8, atol=1e-8 * np.max(np.abs(want)))


def test_laplacian_identity_2d():
    rng = np.random.default_rng(7)
    es = build_eigensum([([1, 0], 1.0, 0.0), ([1, 1], 0.5, 0.4), ([2, 1], 0.3, 1.1)], 2)
    pts = rng.uniform(0, 1, size=(500, 2))
    lap = -(
        es.model.directional_derivative(pts, np.array([1.0, 0.0]), 2)
        + es.model.directional_derivative(pts, np.array([0.0, 1.0]), 2)
    )
    want = es.laplace_power(1).evaluate(pts)
    assert np.allclose(lap, want, rtol=1e-8, atol=1e-8 * np.max(np.abs(want)))


# ---------------------------------------------------------------------------
# Orthogonality and power bounds
# ---------------------------------------------------------------------------

def test_orthogonality_exact_for_aligned_modes():
    g = torus_grid(256)
    u = TrigSum.sine([1])
    v = TrigSum.sine([2])
    assert abs(l2_inner(u, v, g)) <= 1e-14


def test_orthogonality_report_passes():
    g = torus_grid(512)
    es = build_eigensum([([1], 1.0, 0.0), ([2], 0.7, 0.4), ([4], 0.2, 1.3)], 1)
    rep = orthogonality_check(es, g)
    assert rep.passed
    assert rep.max_inner <= 1e-10
    assert rep.pairs_checked == 3


def test_power_bound_single_mode_equality():
    g = torus_grid(512)
    es = build_eigensum([([2], 1.0, 0.3)], 1)
    lam = es.max_eigenvalue
    h_norm = l2_norm(es.model, g)
    for order in (1, 2, 3, 4):
        lhs = l2_norm(es.laplace_power(order), g)
        assert lhs == pytest.approx(lam ** order * h_norm, rel=1e-10)


def test_orthogonality_rejects_aliased_grid():
    g = torus_grid(16)
    es = build_eigensum([([7], 1.0, 0.0)], 1)
    with pytest.raises(ResolutionError):
        orthogonality_check(es, g)


# ---------------------------------------------------------------------------
# Gamma parameters
# ---------------------------------------------------------------------------

def test_gamma_single_mode():
    es = build_eigensum([([1], 1.0, 0.0)], 1)
    gp = gamma_params(es, 1.0)
    assert gp.gamma == pytest.approx(TWO_PI + 1.0, rel=1e-12)


def test_gamma_two_modes():
    es = build_eigensum([([1], 1.0, 0.0), ([2], 1.0, 0.0)], 1)
    gp = gamma_params(es, 1.0)
    assert gp.gamma == pytest.approx(4 * math.pi + 4 * math.log(2.0) + 1.0, rel=1e-12)


def test_gamma_linear_in_calibration():
    es = build_eigensum([([3], 1.0, 0.0)], 1)
    assert gamma_params(es, 2.0).gamma == pytest.approx(2 * gamma_params(es, 1.0).gamma)


def test_gamma_monotone_in_lambda_and_m():
    g1 = gamma_params(build_eigensum([([1], 1.0, 0.0)], 1)).gamma
    g2 = gamma_params(build_eigensum([([4], 1.0, 0.0)], 1)).gamma
    g3 = gamma_params(build_eigensum([([1], 1.0, 0.0), ([4], 1.0, 0.0)], 1)).gamma
    assert g1 < g2 < g3


# ---------------------------------------------------------------------------
# Growth study
# ---------------------------------------------------------------------------

def family_k(kmax):
    return [build_eigensum([([k], 1.0, 0.0)], 1) for k in range(1, kmax + 1)]


def test_growth_study_eigen_family_within_bound():
    g = torus_grid()
    fam = family_k(6)
    c_cal = calibrate_gamma(fam, TORUS_1D, g)
    study = doubling_growth_study(fam, TORUS_1D, g, calibration=c_cal, slope_bound=c_cal)
    assert not study.flagged
    assert study.slope <= c_cal
    assert all(row.kappa_hat >= 2.0 for row in study.rows)


def test_growth_study_flags_exponential_control():
    class ExpGrowth(FunctionModel):
        kind = "exp"
        dimension = 1

        def __init__(self, c):
            self.c = c

        def evaluate(self, points):
            x = np.asarray(points)[..., 0]
            return np.exp(self.c * x)

    g = Grid(Domain.box([1.0]), (1024,))
    fam = family_k(6)
    eigen = doubling_growth_study(fam, TORUS_1D, torus_grid())
    controls = [(ExpGrowth(c), c * c) for c in (4.0, 8.0, 16.0, 24.0)]
    bound = 3 * abs(eigen.slope) + 0.05
    study = doubling_growth_study(controls, g.domain, g, slope_bound=bound)
    assert study.flagged


def test_growth_study_csv(tmp_path):
    g = torus_grid(512)
    study = doubling_growth_study(family_k(3), TORUS_1D, g)
    path = tmp_path / "growth.csv"
    study.write_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "lambda,m,gamma,kappa_hat"
    assert len(lines) == 4


# ---------------------------------------------------------------------------
# Eigen-sum certification
# ---------------------------------------------------------------------------

def test_certify_eigensum_half_torus():
    g = torus_grid()
    es = build_eigensum([([1], 1.0, 0.0)], 1)
    e = MeasurableSet.from_box(g, [(0.0, 0.5)])
    cert = certify_eigensum(es, e, gamma_params(es), search=4)
    ratio = empirical_ratio(es.model, e, TORUS_1D, g)
    assert soundness_check(cert, ratio).passed
    assert cert.aux["shape_constant"] >= 1.0
    # growth shape: log C <= c2 * gamma * log(c2 / |E|)
    c2, gam = cert.aux["shape_constant"], cert.aux["gamma"]
    assert cert.log_constant <= c2 * gam * (math.log(c2) - math.log(e.measure)) + 1e-9


def test_certify_eigensum_two_dimensional():
    g = Grid(TORUS_2D, (192, 192))
    es = build_eigensum([([1, 0], 1.0, 0.0), ([0, 1], 0.7, 0.5), ([1, 1], 0.4, 1.1)], 2)
    rng = np.random.default_rng(15)
    e = MeasurableSet.random(g, 0.2, rng)
    cert = certify_eigensum(es, e, gamma_params(es), search=2)
    ratio = empirical_ratio(es.model, e, TORUS_2D, g)
    assert soundness_check(cert, ratio).passed
    assert es.m == 2  # |k| = 1 twice, |k| = sqrt(2) once


def test_certify_eigensum_full_torus_trivial():
    g = torus_grid(512)
    es = build_eigensum([([1], 1.0, 0.0), ([2], 0.5, 0.7)], 1)
    e = MeasurableSet.full(g)
    cert = certify_eigensum(es, e, gamma_params(es), search=2)
    ratio = empirical_ratio(es.model, e, TORUS_1D, g)
    assert ratio.ratio == pytest.approx(1.0)
    assert soundness_check(cert, ratio).passed


def test_certify_eigensum_shrinking_set_slope():
    g = torus_grid()
    es = build_eigensum([([1], 1.0, 0.0)], 1)
    gp = gamma_params(es)
    logs, shapes = [], []
    for k in (1, 2, 3, 4, 5):
        e = MeasurableSet.from_box(g, [(0.0, 2.0 ** -k)])
        cert = certify_eigensum(es, e, gp, search=4)
        logs.append(cert.log_constant)
        shapes.append(cert.aux["shape_constant"])
    c2 = max(shapes)
    # growth shape with the sweep-wide constant: log C <= c2 g log(c2/|E|)
    for k, log_c in zip((1, 2, 3, 4, 5), logs):
        assert log_c <= c2 * gp.gamma * (math.log(c2) + k * math.log(2.0)) + 1e-9
    # fitted slope of log C against log(1/|E|) stays under c2 * gamma
    xs = np.array([k * math.log(2.0) for k in (1, 2, 3, 4, 5)])
    slope = float(np.polyfit(xs, np.array(logs), 1)[0])
    assert slope <= c2 * gp.gamma + 1e-9


def test_derived_gevrey_for_eigensum():
    g = torus_grid(512)
    es = build_eigensum([([1], 1.0, 0.0), ([3], 0.5, 0.2)], 1)
    gc = derive_eigensum_gevrey(es, TORUS_1D, g)
    assert gc.sigma == 1.0
    assert gc.delta == pytest.approx(1.0 / (TWO_PI * 3.0), rel=1e-12)
    assert gc.M >= 1.0


def test_shape_constant_monotone():
    assert shape_constant(0.5, 10.0, 0.5) >= 1.0
    small = shape_constant(5.0, 10.0, 0.25)
    large = shape_constant(50.0, 10.0, 0.25)
    assert small <= large
