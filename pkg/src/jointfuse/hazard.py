"""Baseline hazards, association terms and cumulative hazards.

The log hazard of subject i for one cause is written as

    log lambda(t) = log lambda_0(t) + A0 + A1 t + A2 t^2

which covers every association when the marker linear predictor is affine
in t (A2 is nonzero only for the cumulative effect).  Closed forms are used
for the constant and piecewise baselines when A2 = 0, quadrature otherwise.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import BSpline
from scipy.special import gammainc, gammaln, hyp1f1

from .errors import ClampWarning, NonFiniteIntegrand, NonPositiveTime, UnsupportedDesign
from .model import Association, BaselineKind
from .quadrature import kronrod15_rule, scaled_nodes

EPS_A1 = 1e-8
LAMBDA_MAX = 1e300
# geometric grading of [0, t] for integrands with an s^(nu - 1) endpoint
GRADE_RATIO = 0.1


# ---------------------------------------------------------------- spline basis


@dataclass(frozen=True)
class SplineBasis:
    """B-spline basis on [0, upper] with the first function dropped.

    Dropping one function of a partition of unity leaves the level to the
    separate spline intercept, so the basis has ``degree + len(interior)``
    columns.
    """

    interior: np.ndarray
    upper: float
    degree: int

    @property
    def knots(self):
        k = self.degree
        return np.concatenate([np.zeros(k + 1), self.interior, np.full(k + 1, self.upper)])

    @property
    def size(self):
        return self.degree + len(self.interior)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        flat = np.clip(t.ravel(), 0.0, self.upper)
        M = BSpline.design_matrix(flat, self.knots, self.degree).toarray()
        return M[:, 1:].reshape(t.shape + (self.size,))


def spline_basis(spec, event_times):
    """Basis for a spline baseline, knots at quantiles of the event times.

    Interior knots sit at the quantile levels 0.1, 0.25, 0.4, ... (step
    0.15) of the event times unless the spec fixes them.
    """
    event_times = np.asarray(event_times, dtype=float)
    upper = spec.boundary
    if upper is None:
        if event_times.size == 0:
            raise UnsupportedDesign("spline baseline needs observed times or an explicit boundary")
        upper = float(event_times.max())
    if spec.knots:
        interior = np.asarray(spec.knots, dtype=float)
    else:
        if event_times.size == 0:
            raise UnsupportedDesign("spline baseline needs observed times or explicit knots")
        levels = 0.1 + 0.15 * np.arange(spec.interior_knot_count)
        if levels[-1] >= 1.0:
            raise UnsupportedDesign("too many interior knots for quantile step 0.15")
        interior = np.quantile(event_times, levels)
    if np.any(np.diff(interior) <= 0) or interior[0] <= 0 or interior[-1] >= upper:
        raise UnsupportedDesign("spline knots must be distinct and inside (0, boundary)")
    return SplineBasis(interior, float(upper), int(spec.degree))


def difference_penalty(L, m):
    """Penalty matrix K_m^T K_m from the m-th order difference matrix."""
    Km = np.diff(np.eye(L), n=m, axis=0)
    return Km.T @ Km


# ---------------------------------------------------------------- baselines


@dataclass
class BaselineParams:
    """Parameters of one baseline hazard.

    ``lambda0`` scales the constant and Weibull baselines.  ``heights``
    are the piecewise levels h_1..h_J.  The spline uses ``spline_intercept``,
    ``spline_coef`` and ``basis``.
    """

    lambda0: float = 1.0
    nu: float = 1.0
    heights: np.ndarray = None
    spline_intercept: float = 0.0
    spline_coef: np.ndarray = None
    basis: SplineBasis = None


def baseline_log_hazard(spec, params, t):
    """log lambda_0(t) for a baseline spec (vectorized over ``t``)."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise NonPositiveTime("baseline hazard needs t > 0")
    return _log_baseline(spec, params, t)


def _log_baseline(spec, params, t):
    kind = spec.kind
    if kind is BaselineKind.CONSTANT:
        return np.full(t.shape, np.log(params.lambda0)) if t.ndim else np.log(params.lambda0)
    if kind is BaselineKind.WEIBULL:
        return np.log(params.lambda0) + np.log(params.nu) + (params.nu - 1.0) * np.log(t)
    if kind is BaselineKind.PIECEWISE:
        j = np.searchsorted(np.asarray(spec.knots), t, side="left")
        return np.log(np.asarray(params.heights, dtype=float))[j]
    return params.spline_intercept + params.basis(t) @ np.asarray(params.spline_coef, dtype=float)


# ---------------------------------------------------------------- association


@dataclass(frozen=True)
class AffineTrajectory:
    """Marker linear predictor mu(t) = a + c t."""

    a: float
    c: float

    def __call__(self, t):
        return self.a + self.c * np.asarray(t, dtype=float)


def association_terms(kind, gamma, mu, t, b=None, dmu=None, rule=None):
    """Contribution of one marker to the log hazard at time t.

    Parameters
    ----------
    kind : Association
    gamma : float or array
        Association coefficient(s) of the marker.
    mu : AffineTrajectory or callable
        Marker linear predictor.
    t : float
    b : array, optional
        The marker's random effects (shared random effects only).
    dmu : callable, optional
        Derivative of a non-affine ``mu``.
    rule : QuadratureRule, optional
        Used for the cumulative effect of a non-affine ``mu``.
    """
    kind = Association(kind)
    g = np.atleast_1d(np.asarray(gamma, dtype=float))
    affine = isinstance(mu, AffineTrajectory)

    def slope():
        if affine:
            return mu.c
        if dmu is None:
            raise UnsupportedDesign("current slope needs a differentiable trajectory")
        return float(dmu(t))

    if kind is Association.CURRENT_VALUE:
        return float(g[0] * mu(t))
    if kind is Association.CURRENT_SLOPE:
        return float(g[0] * slope())
    if kind is Association.VALUE_SLOPE:
        return float(g[0] * mu(t) + g[1] * slope())
    if kind is Association.CUMULATIVE:
        if affine:
            return float(g[0] * (mu.a * t + mu.c * t * t / 2.0))
        if t <= 0:
            return 0.0
        x, w = scaled_nodes(rule or kronrod15_rule(), t)
        return float(g[0] * np.dot(w, mu(x)))
    return float(np.dot(g, np.asarray(b, dtype=float)))


# ---------------------------------------------------------------- closed forms


def _clamp(val):
    val = np.asarray(val, dtype=float)
    over = ~(val <= LAMBDA_MAX)
    if np.any(over):
        warnings.warn("cumulative hazard clamped at 1e300", ClampWarning, stacklevel=3)
        val = np.where(over, LAMBDA_MAX, val)
    return val


def _expm1_ratio(A1, t):
    """(exp(A1 t) - 1) / A1, with a second-order expansion near A1 = 0."""
    A1 = np.asarray(A1, dtype=float)
    t = np.asarray(t, dtype=float)
    small = np.abs(A1) <= EPS_A1
    safe = np.where(small, 1.0, A1)
    with np.errstate(over="ignore"):
        big = np.expm1(safe * t) / safe
    return np.where(small, t * (1.0 + A1 * t / 2.0), big)


def cum_hazard_closed_constant(A0, A1, lambda0, t):
    """Cumulative hazard lambda0 exp(A0 + A1 s) integrated over [0, t]."""
    t = np.asarray(t, dtype=float)
    with np.errstate(over="ignore"):
        val = lambda0 * np.exp(A0) * _expm1_ratio(A1, t)
    val = _clamp(val)
    return float(val) if val.ndim == 0 else val


def cum_hazard_closed_piecewise(A0, A1, heights, knots, t):
    """Cumulative hazard of a piecewise-constant baseline times exp(A0 + A1 s).

    Intervals are (s_{j-1}, s_j] with s_0 = 0 and the last one open.
    """
    h = np.asarray(heights, dtype=float)
    s = np.concatenate([[0.0], np.asarray(knots, dtype=float), [np.inf]])
    t = np.asarray(t, dtype=float)
    A0 = np.asarray(A0, dtype=float)
    A1 = np.asarray(A1, dtype=float)
    lo = np.minimum(s[:-1], t[..., None])
    hi = np.minimum(s[1:], t[..., None])
    A1e = A1[..., None]
    small = np.abs(A1e) <= EPS_A1
    safe = np.where(small, 1.0, A1e)
    with np.errstate(over="ignore", invalid="ignore"):
        seg = np.exp(safe * lo) * np.expm1(safe * (hi - lo)) / safe
    # exact piecewise-exponential sum when A1 is negligible
    dl = hi - lo
    seg_small = dl + A1e * (hi * hi - lo * lo) / 2.0
    seg = np.where(small, seg_small, seg)
    seg = np.where(dl > 0, seg, 0.0)
    with np.errstate(over="ignore"):
        val = np.exp(A0) * np.sum(h * seg, axis=-1)
    val = _clamp(val)
    return float(val) if val.ndim == 0 else val


def weibull_affine_integral(nu, a, t):
    """Integral of nu s^(nu-1) exp(a s) over [0, t], vectorized.

    Equals t^nu 1F1(nu; nu + 1; a t); for a t < -1 the regularized lower
    incomplete gamma form Gamma(nu + 1) (-a)^-nu P(nu, -a t) is used.
    """
    nu = np.asarray(nu, dtype=float)
    a = np.asarray(a, dtype=float)
    t = np.asarray(t, dtype=float)
    z = a * t
    neg = z < -1.0
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        series = t ** nu * hyp1f1(nu, nu + 1.0, np.where(neg, 0.0, z))
        safe_a = np.where(neg, -a, 1.0)
        lower = np.exp(gammaln(nu + 1.0) - nu * np.log(safe_a)) * gammainc(nu, np.where(neg, -z, 0.0))
    out = np.where(neg, lower, series)
    return np.where(t > 0, out, 0.0)


def cum_hazard_closed_weibull(A0, A1, lambda0, nu, t):
    """Cumulative hazard lambda0 nu s^(nu-1) exp(A0 + A1 s) over [0, t]."""
    with np.errstate(over="ignore"):
        val = lambda0 * np.exp(A0) * weibull_affine_integral(nu, A1, t)
    val = _clamp(val)
    return float(val) if val.ndim == 0 else val


def graded_cuts(t, levels):
    """Cut points t q^levels < ... < t q < t of a geometric grading toward 0."""
    return [0.0] + [t * GRADE_RATIO ** j for j in range(levels, 0, -1)] + [float(t)]


def cum_hazard_quadrature(spec, params, A0, A1, t, rule=None, A2=0.0, log_hazard=None):
    """Cumulative hazard by a fixed-order rule on [0, t].

    ``log_hazard`` replaces the baseline-plus-affine integrand with an
    arbitrary function of s when given.  A piecewise baseline is integrated
    segment by segment so each piece is smooth; a Weibull baseline with
    nu != 1 is integrated on a geometric grading toward 0, which resolves
    the s^(nu-1) endpoint behaviour.
    """
    rule = rule or kronrod15_rule()
    if t <= 0:
        return 0.0
    if log_hazard is None:
        def log_hazard(s):
            return _log_baseline(spec, params, s) + A0 + A1 * s + A2 * s * s
    cuts = [0.0]
    if spec is not None and spec.kind is BaselineKind.PIECEWISE:
        cuts += [k for k in spec.knots if k < t]
    if spec is not None and spec.kind is BaselineKind.WEIBULL and params.nu != 1.0:
        cuts = graded_cuts(t, int(np.clip(np.ceil(12.0 / params.nu), 1, 60)))[:-1]
    cuts.append(float(t))
    total = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        x = (rule.nodes + 1.0) / 2.0 * (b - a) + a
        w = rule.weights * (b - a) / 2.0
        with np.errstate(over="ignore"):
            vals = np.exp(log_hazard(x))
        if np.any(np.isnan(vals)):
            raise NonFiniteIntegrand("hazard is not finite at a quadrature node")
        with np.errstate(over="ignore", invalid="ignore"):
            total += float(np.dot(w, vals))
    return float(_clamp(total))


# ---------------------------------------------------------------- subject level


@dataclass
class SubjectHazard:
    """Hazard of one cause for one subject, as log-linear pieces."""

    spec: object
    params: BaselineParams
    A0: float
    A1: float = 0.0
    A2: float = 0.0
    rule: object = None

    def log_hazard(self, t):
        t = np.asarray(t, dtype=float)
        return _log_baseline(self.spec, self.params, t) + self.A0 + self.A1 * t + self.A2 * t * t

    def cum_hazard(self, t):
        if t <= 0:
            return 0.0
        kind = self.spec.kind
        if self.A2 == 0.0 and kind is BaselineKind.CONSTANT:
            return cum_hazard_closed_constant(self.A0, self.A1, self.params.lambda0, t)
        if self.A2 == 0.0 and kind is BaselineKind.PIECEWISE:
            return cum_hazard_closed_piecewise(self.A0, self.A1, self.params.heights, self.spec.knots, t)
        if self.A2 == 0.0 and kind is BaselineKind.WEIBULL:
            return cum_hazard_closed_weibull(self.A0, self.A1, self.params.lambda0, self.params.nu, t)
        return cum_hazard_quadrature(self.spec, self.params, self.A0, self.A1, t,
                                     rule=self.rule, A2=self.A2)


def log_event_density(time, status, hazards):
    """Event-process log-likelihood of one subject.

    Parameters
    ----------
    time : float
    status : int
        0 for censored, l for an event of cause l (1-based).
    hazards : sequence of SubjectHazard
        One per cause.
    """
    ll = -sum(h.cum_hazard(time) for h in hazards)
    if status > 0:
        ll += float(hazards[status - 1].log_hazard(time))
    return ll
