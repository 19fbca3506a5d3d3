"""Synthetic data from joint models.

Event times are drawn by inverting the cumulative hazard: in closed form
for a constant baseline without a cumulative effect, by Brent root finding
otherwise.  A time that cannot be reached (the cumulative hazard stays
below -log u) is returned as ``CENSORED`` (infinity) so that the censoring
time wins.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit
from scipy.stats import nbinom

from .errors import ClampWarning, ConfigError, ConvergenceFailure, DomainError
from .hazard import EPS_A1, BaselineParams, SubjectHazard
from .likelihood import JointModel
from .model import (
    BaselineKind,
    Dataset,
    Family,
    MarkerObservations,
    ParamState,
)

CENSORED = np.inf
COUNT_MAX = 10 ** 6


@dataclass
class SimScenario:
    """Everything needed to generate one dataset.

    Parameters
    ----------
    spec : ModelSpec
    truth : ParamState
        Population parameters; ``truth.b`` and ``truth.u`` are ignored.
    n : int
        Number of subjects.
    grid : array
        Ascending measurement times starting at 0.
    covariates : dict
        Column name -> ``("bernoulli", p)`` or ``("normal", mean, sd)``.
        A third-position-free tuple ``("normal", mean, sd, "observation")``
        draws a fresh value for every measurement.
    censoring_rate : float
        Rate of the exponential censoring time; 0 disables it.
    admin_cutoff : float
        Administrative censoring time.
    seed : int
    t_max_factor : float
        Root-finding horizon as a multiple of ``admin_cutoff``.
    """

    spec: object
    truth: ParamState
    n: int
    grid: np.ndarray
    covariates: dict = field(default_factory=dict)
    censoring_rate: float = 0.0
    admin_cutoff: float = 1.0
    seed: int = 0
    t_max_factor: float = 100.0

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        if self.grid.ndim != 1 or self.grid.size == 0:
            raise ConfigError("grid: must be a non-empty list of times")
        if self.grid[0] != 0 or np.any(np.diff(self.grid) <= 0):
            raise ConfigError("grid: must start at 0 and be strictly ascending")
        if self.admin_cutoff < 0:
            raise ConfigError("admin_cutoff: must be >= 0")
        if self.censoring_rate < 0:
            raise ConfigError("censoring_rate: must be >= 0")
        if int(self.n) != self.n or self.n < 0:
            raise ConfigError("n: must be a non-negative integer")
        for name, gen in self.covariates.items():
            if not gen or gen[0] not in ("bernoulli", "normal"):
                raise ConfigError(f"covariates.{name}: expected bernoulli or normal generator")


# ---------------------------------------------------------------- inversion


def invert_constant_baseline(u, A0, A1, lambda0):
    """Event time solving lambda0 e^{A0} (e^{A1 t} - 1) / A1 = -log u.

    Vectorized.  Returns ``CENSORED`` where no finite solution exists.
    """
    u = np.asarray(u, dtype=float)
    if np.any(~((u > 0) & (u < 1))):
        raise DomainError("u must lie in (0, 1)")
    A0 = np.asarray(A0, dtype=float)
    A1 = np.asarray(A1, dtype=float)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        target = -np.log(u) / (lambda0 * np.exp(A0))
        small = np.abs(A1) <= EPS_A1
        safe = np.where(small, 1.0, A1)
        arg = safe * target
        t_big = np.log1p(arg) / safe
        # second-order expansion of the inverse near A1 = 0
        t_small = target * (1.0 - A1 * target / 2.0)
        t = np.where(small, t_small, np.where(arg > -1.0, t_big, CENSORED))
    t = np.where(np.isfinite(t) & (t >= 0), t, CENSORED)
    return float(t) if t.ndim == 0 else t


def invert_by_root_finding(u, cum_hazard, t_max, xtol=1e-12, maxiter=200):
    """Solve cum_hazard(t) = -log u by Brent's method on (0, t_max]."""
    if not 0 < u < 1:
        raise DomainError("u must lie in (0, 1)")
    target = -np.log(u)

    def f(t):
        with warnings.catch_warnings():
            # a clamped value far beyond the target still brackets the root
            warnings.simplefilter("ignore", ClampWarning)
            return cum_hazard(t) - target

    if f(t_max) < 0:
        return CENSORED
    lo, hi = 0.0, min(1.0, t_max)
    while f(hi) < 0:
        lo, hi = hi, min(2.0 * hi, t_max)
    try:
        t, res = brentq(f, lo, hi, xtol=xtol, maxiter=maxiter, full_output=True, disp=False)
    except RuntimeError as e:
        raise ConvergenceFailure(str(e)) from None
    if not res.converged:
        raise ConvergenceFailure(f"Brent did not converge in {maxiter} iterations")
    return float(t)


# ---------------------------------------------------------------- longitudinal


def draw_marker(family, mu, rng, sigma2=None, logit_pi=None, r=None):
    """One draw per entry of ``mu`` from a marker family."""
    mu = np.asarray(mu, dtype=float)
    if family is Family.GAUSSIAN:
        return mu + np.sqrt(sigma2) * rng.standard_normal(mu.shape)
    if family is Family.BERNOULLI:
        return (rng.random(mu.shape) < expit(mu)).astype(float)
    zero = rng.random(mu.shape) < expit(logit_pi)
    u = rng.random(mu.shape)
    eta = np.exp(mu)
    kappa = r / (r + eta)
    with np.errstate(divide="ignore", invalid="ignore"):
        p0 = np.exp(r * np.log(kappa))
        y = nbinom.ppf(p0 + u * (1.0 - p0), r, kappa)
    y = np.where(np.isfinite(y), np.maximum(y, 1.0), np.inf)
    if np.any(y[~zero] > COUNT_MAX):
        raise DomainError("truncated negative binomial draw exceeded the count ceiling")
    return np.where(zero, 0.0, y)


def simulate_longitudinal(scenario, b, rng, covariates, times=None, obs_covariates=None):
    """Marker values of subjects at the measurement grid.

    Parameters
    ----------
    scenario : SimScenario
    b : ndarray, shape (n, Nb)
    rng : numpy Generator
    covariates : dict of str -> ndarray (n,)
        Subject-level covariates.
    times : array, optional
        Defaults to the scenario grid.
    obs_covariates : dict of str -> ndarray (n, G), optional

    Returns
    -------
    dict of marker name -> ndarray (n, G)
    """
    spec, truth = scenario.spec, scenario.truth
    times = scenario.grid if times is None else np.asarray(times, dtype=float)
    b = np.atleast_2d(b)
    n, G = b.shape[0], times.size
    obs_covariates = obs_covariates or {}
    slices = spec.re_slices()

    def design(cols):
        out = np.empty((n, G, len(cols)))
        for j, c in enumerate(cols):
            if c == "intercept":
                out[..., j] = 1.0
            elif c == "time":
                out[..., j] = times
            elif c in covariates:
                out[..., j] = np.asarray(covariates[c], dtype=float)[:, None]
            else:
                out[..., j] = obs_covariates[c]
        return out

    values = {}
    for k, mk in enumerate(spec.markers):
        X = design(mk.fixed)
        sl = slices[k]
        nr = len(mk.random)
        mu = X @ truth.beta[k]
        if nr:
            Z = design(mk.random)
            mu = mu + np.einsum("igj,ij->ig", Z, b[:, sl.start:sl.start + nr])
        if mk.offset is not None:
            off = obs_covariates.get(mk.offset)
            mu = mu + (off if off is not None else np.asarray(covariates[mk.offset], float)[:, None])
        logit_pi = None
        if mk.family is Family.HURDLE:
            logit_pi = design(mk.hurdle_fixed) @ truth.beta_pi[k]
            if mk.hurdle_random:
                Zp = design(mk.hurdle_random)
                logit_pi = logit_pi + np.einsum("igj,ij->ig", Zp, b[:, sl.start + nr:sl.stop])
        s2 = truth.sigma2[k] if mk.family is Family.GAUSSIAN else None
        values[mk.name] = draw_marker(mk.family, mu, rng, sigma2=s2, logit_pi=logit_pi,
                                      r=truth.r[k] if mk.family is Family.HURDLE else None)
    return values


# ---------------------------------------------------------------- datasets


def _draw_covariates(scenario, rng, n, G):
    subj, obs = {}, {}
    for name in sorted(scenario.covariates):
        gen = scenario.covariates[name]
        level_obs = len(gen) > 1 and gen[-1] == "observation"
        shape = (n, G) if level_obs else (n,)
        if gen[0] == "bernoulli":
            val = (rng.random(shape) < gen[1]).astype(float)
        else:
            mean = gen[1] if len(gen) > 1 and not isinstance(gen[1], str) else 0.0
            sd = gen[2] if len(gen) > 2 and not isinstance(gen[2], str) else 1.0
            val = mean + sd * rng.standard_normal(shape)
        (obs if level_obs else subj)[name] = val
    return subj, obs


def _baseline_params(base, theta, basis):
    if base.kind is BaselineKind.WEIBULL:
        return BaselineParams(nu=float(theta[0]))
    if base.kind is BaselineKind.PIECEWISE:
        return BaselineParams(heights=np.asarray(theta, dtype=float))
    if base.kind is BaselineKind.BSPLINE:
        return BaselineParams(spline_intercept=float(theta[0]), spline_coef=np.asarray(theta[1:]),
                              basis=basis)
    return BaselineParams()


def simulate_dataset(scenario, return_latent=False):
    """Simulate covariates, random effects, markers and event times.

    Returns
    -------
    Dataset
        With ``(b, u)`` appended when ``return_latent`` is true.
    """
    spec, truth = scenario.spec, scenario.truth
    rng = np.random.default_rng(np.random.SeedSequence(int(scenario.seed)))
    n, G = int(scenario.n), scenario.grid.size
    subj_cov, obs_cov = _draw_covariates(scenario, rng, n, G)
    Nb = spec.n_random
    if Nb:
        C = np.linalg.cholesky(truth.D)
        b = rng.standard_normal((n, Nb)) @ C.T
    else:
        b = np.zeros((n, 0))
    cure = spec.event.is_cure
    u_class = np.ones(n, dtype=np.int8)
    if cure:
        W1 = np.column_stack([np.ones(n)] + [subj_cov[c] for c in spec.event.incidence_covariates])
        with np.errstate(invalid="ignore"):
            p = expit(W1 @ truth.xi)
        u_class = (rng.random(n) < p).astype(np.int8)
        b_cured = rng.standard_normal((n, Nb)) @ np.linalg.cholesky(truth.D_cured).T if Nb else b
        b = np.where(u_class[:, None] == 1, b, b_cured)
    # event times from the uncured-class hazard
    pseudo = Dataset(np.arange(n), np.full(n, max(scenario.admin_cutoff, 1.0)), np.zeros(n, int),
                     subj_cov, {mk.name: MarkerObservations(np.zeros(0, int), np.zeros(0), np.zeros(0), {})
                                for mk in spec.markers})
    model = JointModel(spec, pseudo)
    state = truth.copy()
    state.b = b
    t_max = scenario.t_max_factor * scenario.admin_cutoff
    L = spec.event.n_causes
    latent = np.full((n, L), CENSORED)
    for l, base in enumerate(spec.event.baselines):
        A0, A1, A2 = model.hazard_coefs(l, state, b)
        uu = rng.random(n)
        uu = np.clip(uu, np.finfo(float).tiny, 1 - np.finfo(float).eps)
        if base.kind is BaselineKind.CONSTANT and not model.has_A2:
            latent[:, l] = invert_constant_baseline(uu, A0, A1, 1.0)
            continue
        if t_max <= 0:
            continue
        params = _baseline_params(base, truth.baseline[l],
                                  getattr(model.causes[l], "basis", None))
        for i in range(n):
            h = SubjectHazard(base, params, float(A0[i]), float(A1[i]), float(A2[i]), model.rule)
            latent[i, l] = invert_by_root_finding(uu[i], h.cum_hazard, t_max)
    if cure:
        latent[u_class == 0] = CENSORED
    t_star = latent.min(axis=1) if n else np.zeros(0)
    cause = latent.argmin(axis=1) + 1 if n else np.zeros(0, int)
    cens = np.full(n, scenario.admin_cutoff)
    if scenario.censoring_rate > 0:
        cens = np.minimum(cens, rng.exponential(1.0 / scenario.censoring_rate, size=n))
    event = t_star <= cens
    T = np.where(event, t_star, cens)
    status = np.where(event, cause, 0).astype(int)
    values = simulate_longitudinal(scenario, b, rng, subj_cov, obs_covariates=obs_cov)
    keep = scenario.grid[None, :] <= T[:, None]
    si, gi = np.nonzero(keep)
    markers = {}
    for mk in spec.markers:
        markers[mk.name] = MarkerObservations(
            si.astype(int), scenario.grid[gi], values[mk.name][si, gi],
            {c: v[si, gi] for c, v in obs_cov.items()})
    data = Dataset(np.arange(1, n + 1), T, status, dict(subj_cov), markers,
                   int(keep.size - keep.sum()))
    if return_latent:
        return data, b, u_class
    return data


def kaplan_meier(time, status, at):
    """Kaplan-Meier estimate of the all-cause survival at the given times."""
    time = np.asarray(time, dtype=float)
    event = np.asarray(status) > 0
    ut = np.unique(time[event])
    surv = 1.0
    steps = []
    for t in ut:
        at_risk = np.sum(time >= t)
        d = np.sum(event & (time == t))
        surv *= 1.0 - d / at_risk
        steps.append((t, surv))
    out = []
    for a in np.atleast_1d(at):
        s = 1.0
        for t, v in steps:
            if t <= a:
                s = v
        out.append(s)
    return np.array(out)


__all__ = [
    "CENSORED", "SimScenario", "invert_constant_baseline", "invert_by_root_finding",
    "simulate_longitudinal", "simulate_dataset", "draw_marker", "kaplan_meier",
]
