import warnings

import numpy as np
import pytest

from jointfuse.errors import ClampWarning, NonPositiveTime
from jointfuse.hazard import (
    AffineTrajectory,
    BaselineParams,
    SubjectHazard,
    association_terms,
    baseline_log_hazard,
    cum_hazard_closed_constant,
    cum_hazard_closed_piecewise,
    cum_hazard_closed_weibull,
    cum_hazard_quadrature,
    difference_penalty,
    log_event_density,
    spline_basis,
)
from jointfuse.model import Association, BaselineHazardSpec

# frozen from 40-digit mpmath quadrature of the integrands
CONST_ORACLE = 2.594885082800512587   # A0=0.5, A1=-0.25, lambda0=1, t=2
PIECEWISE_ORACLE = 0.6813027024098740543   # h=.1..0.5, knots 1..4, t=2.5, A0=0.1, A1=0.2
WEIBULL_ORACLE = 2.011703132834668294   # nu=1.5, A0=0.2, A1=-0.3, t=1.7

H5 = np.array([0.1, 0.2, 0.3, 0.4, 0.5])
K4 = (1.0, 2.0, 3.0, 4.0)
PW = BaselineHazardSpec(kind="piecewise", knots=K4)
CONST = BaselineHazardSpec()
WEIB = BaselineHazardSpec(kind="weibull")


def test_weibull_nu_one_is_constant():
    t = np.array([0.1, 1.0, 5.0])
    np.testing.assert_allclose(baseline_log_hazard(WEIB, BaselineParams(lambda0=2.5, nu=1.0), t),
                               np.log(2.5))


def test_piecewise_lookup():
    v = baseline_log_hazard(PW, BaselineParams(heights=H5), 2.5)
    assert abs(v - np.log(0.3)) < 1e-15
    # interval (s_{j-1}, s_j] is closed on the right
    assert abs(baseline_log_hazard(PW, BaselineParams(heights=H5), 2.0) - np.log(0.2)) < 1e-15


def test_zero_spline_gives_intercept():
    spec = BaselineHazardSpec(kind="bspline")
    times = np.linspace(0.1, 3, 40)
    basis = spline_basis(spec, times)
    p = BaselineParams(spline_intercept=-0.7, spline_coef=np.zeros(basis.size), basis=basis)
    np.testing.assert_allclose(baseline_log_hazard(spec, p, np.array([0.2, 1.3, 2.9])), -0.7)


def test_spline_basis_size_and_knots():
    spec = BaselineHazardSpec(kind="bspline")
    times = np.arange(1, 101) / 10.0
    basis = spline_basis(spec, times)
    assert basis.size == spec.degree + spec.interior_knot_count == spec.n_basis == 10
    np.testing.assert_allclose(basis.interior, np.quantile(times, [0.1, 0.25, 0.4, 0.55, 0.7, 0.85]))
    # dropping the first function of a partition of unity
    B = basis(np.array([0.5, 3.0, 9.0]))
    assert np.all(B.sum(axis=1) <= 1 + 1e-12)


def test_baseline_rejects_nonpositive_time():
    with pytest.raises(NonPositiveTime):
        baseline_log_hazard(CONST, BaselineParams(), 0.0)


def test_difference_penalty_identity():
    rng = np.random.default_rng(3)
    for m in (1, 2, 3):
        a = rng.normal(size=9)
        P = difference_penalty(9, m)
        assert abs(a @ P @ a - np.sum(np.diff(a, n=m) ** 2)) < 1e-12
        assert np.linalg.matrix_rank(P) == 9 - m


def test_association_terms():
    mu = AffineTrajectory(0.4, -0.3)
    for kind in Association:
        g = np.zeros(2)
        assert association_terms(kind, g, mu, 1.5, b=np.array([1.0, 2.0])) == 0.0
    a, c = 0.4, -0.3
    assert abs(association_terms(Association.CUMULATIVE, 1.5, mu, 2.0) - 1.5 * (2 * a + 2 * c)) < 1e-14
    v = association_terms(Association.SHARED_RE, [1.0, 2.0], mu, 1.0, b=np.array([0.3, -0.1]))
    assert abs(v - 0.1) < 1e-15
    assert abs(association_terms(Association.CURRENT_VALUE, 2.0, mu, 1.0) - 2 * (a + c)) < 1e-15
    assert abs(association_terms(Association.CURRENT_SLOPE, 2.0, mu, 1.0) - 2 * c) < 1e-15
    assert abs(association_terms(Association.VALUE_SLOPE, [1.0, 2.0], mu, 1.0) - (a + c + 2 * c)) < 1e-15


def test_cumulative_effect_nonaffine_by_quadrature():
    v = association_terms(Association.CUMULATIVE, 1.0, np.cos, 1.2)
    assert abs(v - np.sin(1.2)) < 1e-12


def test_closed_constant_examples():
    assert cum_hazard_closed_constant(0.0, 0.0, 1.0, 2.0) == 2.0
    assert abs(cum_hazard_closed_constant(0.5, -0.25, 1.0, 2.0) - CONST_ORACLE) < 1e-8
    assert cum_hazard_closed_constant(0.3, 0.2, 1.0, 0.0) == 0.0


def test_closed_constant_small_a1_continuity():
    # the exact value moves by about A1 t / 2 relative, so t stays below 2
    for t in (0.5, 1.0, 1.5):
        base = cum_hazard_closed_constant(0.2, 0.0, 1.3, t)
        for a1 in (1e-9, -1e-9):
            assert abs(cum_hazard_closed_constant(0.2, a1, 1.3, t) - base) <= 1e-9 * base


def test_closed_constant_clamps():
    with pytest.warns(ClampWarning):
        v = cum_hazard_closed_constant(0.0, 800.0, 1.0, 2.0)
    assert v == 1e300


def test_piecewise_examples():
    v = cum_hazard_closed_piecewise(0.1, 0.2, H5, K4, 2.5)
    assert abs(v - PIECEWISE_ORACLE) < 1e-8
    one = cum_hazard_closed_piecewise(0.3, -0.4, [0.7], [], 1.9)
    assert abs(one - cum_hazard_closed_constant(0.3, -0.4, 0.7, 1.9)) < 1e-13
    # both sides of the small-A1 expansion threshold agree with quadrature
    for a1 in (2e-8, 0.5e-8, -0.5e-8):
        c = cum_hazard_closed_piecewise(0.1, a1, H5, K4, 3.5)
        q = cum_hazard_quadrature(PW, BaselineParams(heights=H5), 0.1, a1, 3.5)
        assert abs(c - q) < 1e-12
    for s in K4:
        left = cum_hazard_closed_piecewise(0.1, 0.2, H5, K4, s - 1e-12)
        right = cum_hazard_closed_piecewise(0.1, 0.2, H5, K4, s + 1e-12)
        assert abs(left - right) < 1e-10


def test_piecewise_vectorized_matches_scalar():
    t = np.array([0.5, 1.0, 2.5, 4.5])
    A0 = np.array([0.0, 0.1, -0.2, 0.3])
    A1 = np.array([0.2, 1e-10, -0.5, 0.0])
    v = cum_hazard_closed_piecewise(A0, A1, H5, K4, t)
    for i in range(4):
        assert v[i] == cum_hazard_closed_piecewise(A0[i], A1[i], H5, K4, t[i])


def test_quadrature_weibull_examples():
    p1 = BaselineParams(nu=1.0)
    for A0, A1, t in [(0.2, -0.3, 1.7), (0.0, 0.5, 3.0), (-1.0, 0.0, 0.4)]:
        q = cum_hazard_quadrature(WEIB, p1, A0, A1, t)
        c = cum_hazard_closed_constant(A0, A1, 1.0, t)
        assert abs(q - c) < 1e-8 * max(c, 1)
    q2 = cum_hazard_quadrature(WEIB, BaselineParams(nu=2.0), 0.3, 0.0, 1.4)
    assert abs(q2 - np.exp(0.3) * 1.4 ** 2) < 1e-10
    q = cum_hazard_quadrature(WEIB, BaselineParams(nu=1.5), 0.2, -0.3, 1.7)
    assert abs(q - WEIBULL_ORACLE) < 1e-6 * WEIBULL_ORACLE


def test_quadrature_weibull_trapezoid_oracle():
    # the 10,001-point trapezoid on s = u^2 removes the sqrt endpoint
    u = np.linspace(0.0, np.sqrt(1.7), 10001)
    s = u * u
    f = 1.5 * np.sqrt(s) * np.exp(0.2 - 0.3 * s) * 2 * u
    trap = np.sum((f[1:] + f[:-1]) / 2 * np.diff(u))
    q = cum_hazard_quadrature(WEIB, BaselineParams(nu=1.5), 0.2, -0.3, 1.7)
    assert abs(q - trap) < 1e-6 * trap


def test_closed_weibull_against_quadrature():
    rng = np.random.default_rng(11)
    for _ in range(200):
        nu = rng.uniform(0.3, 3.0)
        t = rng.uniform(0.05, 5.0)
        A1 = rng.uniform(-5, 5) / t
        A0 = rng.normal()
        c = cum_hazard_closed_weibull(A0, A1, 1.0, nu, t)
        q = cum_hazard_quadrature(WEIB, BaselineParams(nu=nu), A0, A1, t)
        assert abs(c - q) < 1e-8 * c


def test_quadrature_custom_integrand():
    v = cum_hazard_quadrature(None, None, 0.0, 0.0, 2.0, log_hazard=lambda s: np.log1p(s))
    assert abs(v - 4.0) < 1e-12


def test_quadrature_piecewise_segmentwise():
    q = cum_hazard_quadrature(PW, BaselineParams(heights=H5), 0.1, 0.2, 2.5)
    assert abs(q - PIECEWISE_ORACLE) < 1e-12


@pytest.mark.parametrize("spec,params", [
    (CONST, BaselineParams(lambda0=0.8)),
    (WEIB, BaselineParams(nu=0.7)),
    (PW, BaselineParams(heights=H5)),
])
def test_cum_hazard_monotone_from_zero(spec, params):
    grid = np.linspace(0.0, 5.0, 60)
    for A0, A1, A2 in [(0.1, 0.4, 0.0), (-0.3, -0.8, 0.0), (0.0, 0.2, -0.1)]:
        h = SubjectHazard(spec, params, A0, A1, A2)
        vals = np.array([h.cum_hazard(t) for t in grid])
        assert vals[0] == 0.0
        assert np.all(np.diff(vals) >= -1e-14)


def test_spline_cum_hazard_monotone():
    spec = BaselineHazardSpec(kind="bspline")
    basis = spline_basis(spec, np.linspace(0.1, 4, 50))
    coef = np.random.default_rng(2).normal(size=basis.size)
    h = SubjectHazard(spec, BaselineParams(spline_intercept=-1, spline_coef=coef, basis=basis), 0.2, 0.3)
    vals = [h.cum_hazard(t) for t in np.linspace(0, 4, 30)]
    assert vals[0] == 0.0 and np.all(np.diff(vals) > 0)


def test_log_event_density_examples():
    h = SubjectHazard(CONST, BaselineParams(lambda0=1.0), 0.0)
    assert abs(log_event_density(1.0, 1, [h]) - (-1.0)) < 1e-15
    g = SubjectHazard(CONST, BaselineParams(lambda0=0.4), 0.3, 0.2)
    assert abs(log_event_density(2.0, 0, [g]) + g.cum_hazard(2.0)) < 1e-15
    # a cause-2 hazard of zero leaves the single-event value unchanged
    zero = SubjectHazard(CONST, BaselineParams(lambda0=0.0), 0.0)
    with np.errstate(divide="ignore"):
        assert log_event_density(2.0, 1, [g, zero]) == log_event_density(2.0, 1, [g])


def test_scale_intercept_confounding():
    # lambda0 -> c lambda0 with A0 -> A0 - log c leaves the density unchanged
    for spec, params in [(CONST, BaselineParams(lambda0=0.5)), (WEIB, BaselineParams(lambda0=0.5, nu=1.3))]:
        h1 = SubjectHazard(spec, params, 0.2, -0.1)
        p2 = BaselineParams(lambda0=params.lambda0 * 3.0, nu=params.nu)
        h2 = SubjectHazard(spec, p2, 0.2 - np.log(3.0), -0.1)
        for status in (0, 1):
            assert abs(log_event_density(1.7, status, [h1]) - log_event_density(1.7, status, [h2])) < 1e-12


def test_no_warnings_in_normal_range():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        cum_hazard_closed_constant(np.array([0.1, 0.2]), np.array([-3.0, 3.0]), 1.0, np.array([1.0, 1.0]))
