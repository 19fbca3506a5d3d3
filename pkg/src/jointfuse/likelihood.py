"""Marker, random-effects, event and prior log-densities.

Public scalar functions cover single markers and random-effects vectors.
:class:`JointModel` compiles a model and dataset into arrays once and
evaluates per-subject contributions for every subject at the same time,
which is what the sampler uses.
"""

import numpy as np
from scipy.special import expit, gammaln, log_expit, multigammaln

from .errors import (
    DomainError,
    NonBinaryValue,
    NonPositiveVariance,
    NotPositiveDefinite,
)
from .hazard import LAMBDA_MAX, difference_penalty, graded_cuts, spline_basis, weibull_affine_integral
from .model import Association, BaselineKind, Family, zero_tail_mask
from .quadrature import get_rule

LOG2PI = np.log(2.0 * np.pi)
WEIBULL_GRADE_LEVELS = 12


# ---------------------------------------------------------------- markers


def gaussian_logpdf(y, mu, sigma2):
    return -0.5 * (LOG2PI + np.log(sigma2)) - (y - mu) ** 2 / (2.0 * sigma2)


def bernoulli_logpmf(y, mu):
    # y*mu - log(1 + e^mu), stable for large |mu|
    return np.where(y > 0, log_expit(mu), log_expit(-mu))


def hurdle_logpmf(y, eta, pi, r):
    """Per-observation log pmf of the zero-hurdle truncated negative binomial.

    ``pi`` is the probability of a zero, ``eta`` the mean of the untruncated
    negative binomial and ``r`` its dispersion.
    """
    y = np.asarray(y, dtype=float)
    eta = np.asarray(eta, dtype=float)
    pi = np.asarray(pi, dtype=float)
    zero = y == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        log_kappa = -np.log1p(eta / r)
        log_1mkappa = -np.log1p(r / eta)
        log_1m_kappa_r = np.log(-np.expm1(r * log_kappa))
        pos = (np.log1p(-pi) + gammaln(r + y) - gammaln(r) - gammaln(y + 1.0)
               + r * log_kappa + y * log_1mkappa - log_1m_kappa_r)
        return np.where(zero, np.log(pi), pos)


def hurdle_logpmf_logit(y, log_eta, logit_pi, r):
    """Same as :func:`hurdle_logpmf` from the linear predictors."""
    y = np.asarray(y, dtype=float)
    zero = y == 0
    log_kappa = -np.logaddexp(0.0, log_eta - np.log(r))
    log_1mkappa = -np.logaddexp(0.0, np.log(r) - log_eta)
    with np.errstate(divide="ignore"):
        log_1m_kappa_r = np.log(-np.expm1(r * log_kappa))
    pos = (log_expit(-logit_pi) + gammaln(r + y) - gammaln(r) - gammaln(y + 1.0)
           + r * log_kappa + y * log_1mkappa - log_1m_kappa_r)
    return np.where(zero, log_expit(logit_pi), pos)


def marker_loglik_gaussian(y, mu, sigma2):
    """Sum of normal log densities of the observations."""
    if not sigma2 > 0:
        raise NonPositiveVariance(f"sigma2 must be > 0, got {sigma2}")
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        return 0.0
    return float(np.sum(gaussian_logpdf(y, mu, sigma2)))


def marker_loglik_bernoulli(y, mu):
    """Sum of Bernoulli-logit log probabilities."""
    y = np.asarray(y, dtype=float)
    if np.any((y != 0) & (y != 1)):
        raise NonBinaryValue("Bernoulli values must be 0 or 1")
    if y.size == 0:
        return 0.0
    return float(np.sum(bernoulli_logpmf(y, np.asarray(mu, dtype=float))))


def marker_loglik_hurdle(y, eta, pi, r):
    """Sum of hurdle log probabilities."""
    y = np.asarray(y, dtype=float)
    if np.any(y < 0):
        raise DomainError("counts must be >= 0")
    if not r > 0:
        raise DomainError(f"dispersion must be > 0, got {r}")
    if y.size == 0:
        return 0.0
    return float(np.sum(hurdle_logpmf(y, eta, pi, r)))


def re_loglik(b, D):
    """Multivariate normal log density of b under N(0, D)."""
    b = np.asarray(b, dtype=float)
    D = np.asarray(D, dtype=float)
    if not np.allclose(D, D.T):
        raise NotPositiveDefinite("D is not symmetric")
    try:
        C = np.linalg.cholesky(D)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite("D is not positive definite") from None
    z = np.linalg.solve(C, b.T).T
    q = b.shape[-1]
    return -0.5 * q * LOG2PI - np.sum(np.log(np.diag(C))) - 0.5 * np.sum(z * z, axis=-1)


# ---------------------------------------------------------------- priors


def normal_logpdf(x, mean, var):
    x = np.asarray(x, dtype=float)
    return float(np.sum(-0.5 * (LOG2PI + np.log(var)) - (x - mean) ** 2 / (2.0 * var)))


def gamma_logpdf(x, shape, rate):
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        return -np.inf
    return float(np.sum(shape * np.log(rate) - gammaln(shape) + (shape - 1.0) * np.log(x) - rate * x))


def inv_gamma_precision_logpdf(s2, shape, rate):
    """Density of sigma^2 when 1/sigma^2 ~ gamma(shape, rate)."""
    s2 = np.asarray(s2, dtype=float)
    if np.any(~(s2 > 0)):
        return -np.inf
    return float(np.sum(shape * np.log(rate) - gammaln(shape) - (shape + 1.0) * np.log(s2) - rate / s2))


def inv_wishart_logpdf(D, R, df):
    """Density of D when D^{-1} ~ Wishart with scale R^{-1} and df degrees."""
    p = D.shape[0]
    try:
        C = np.linalg.cholesky(D)
    except np.linalg.LinAlgError:
        return -np.inf
    logdet_D = 2.0 * np.sum(np.log(np.diag(C)))
    logdet_R = np.linalg.slogdet(R)[1]
    Dinv = np.linalg.inv(D)
    return float(0.5 * df * logdet_R - 0.5 * df * p * np.log(2.0) - multigammaln(0.5 * df, p)
                 - 0.5 * (df + p + 1.0) * logdet_D - 0.5 * np.trace(R @ Dinv))


def spline_log_prior(coef, tau, penalty, order, priors):
    """Random-walk prior of the spline coefficients plus a weak ridge."""
    coef = np.asarray(coef, dtype=float)
    if not tau > 0:
        return -np.inf
    L = coef.size
    rank = L - order
    lp = 0.5 * rank * (np.log(tau) - LOG2PI) - 0.5 * tau * float(coef @ penalty @ coef)
    ridge = priors.spline_ridge_precision
    if ridge > 0:
        lp += 0.5 * L * (np.log(ridge) - LOG2PI) - 0.5 * ridge * float(coef @ coef)
    return lp


# ---------------------------------------------------------------- compiled model


class _MarkerData:
    pass


def _design(columns, obs, data):
    cols = []
    for c in columns:
        if c == "intercept":
            cols.append(np.ones(len(obs)))
        elif c == "time":
            cols.append(obs.time.astype(float))
        elif c in data.covariates:
            cols.append(np.asarray(data.covariates[c], dtype=float)[obs.subject])
        else:
            cols.append(np.asarray(obs.covariates[c], dtype=float))
    return np.column_stack(cols) if cols else np.zeros((len(obs), 0))


def _affine(columns, data):
    """Subject-level design split as x(t) = x0 + t * xt, or None."""
    n = data.n
    X0 = np.zeros((n, len(columns)))
    xt = np.zeros(len(columns))
    for j, c in enumerate(columns):
        if c == "intercept":
            X0[:, j] = 1.0
        elif c == "time":
            xt[j] = 1.0
        elif c in data.covariates:
            X0[:, j] = np.asarray(data.covariates[c], dtype=float)
        else:
            return None, None
    return X0, xt


def _subject_design(columns, data):
    n = data.n
    cols = []
    for c in columns:
        if c == "intercept":
            cols.append(np.ones(n))
        else:
            cols.append(np.asarray(data.covariates[c], dtype=float))
    return np.column_stack(cols) if cols else np.zeros((n, 0))


class JointModel:
    """A model specification compiled against a dataset.

    Parameters
    ----------
    spec : ModelSpec
    data : Dataset
        Must pass :func:`validate_spec` (an empty dataset is accepted).
    """

    def __init__(self, spec, data):
        self.spec = spec
        self.data = data
        self.n = n = data.n
        self.rule = get_rule(spec.quadrature)
        self.cure = spec.event.is_cure
        self._re_blocks = spec.re_blocks()
        self.re_slices = spec.re_slices()
        self.gamma_slices = spec.gamma_slices()
        self.markers = []
        for k, mk in enumerate(spec.markers):
            md = _MarkerData()
            md.spec = mk
            obs = data.markers[mk.name]
            md.subj = obs.subject.astype(int)
            md.time = obs.time.astype(float)
            md.y = obs.value.astype(float)
            md.n_obs = len(md.y)
            md.counts = np.bincount(md.subj, minlength=n) if n else np.zeros(0, int)
            md.X = _design(mk.fixed, obs, data)
            sl = self.re_slices[k]
            nr = len(mk.random)
            md.re_mean = np.arange(sl.start, sl.start + nr)
            md.re_pi = np.arange(sl.start + nr, sl.stop)
            md.Z = md.X[:, [mk.fixed.index(c) for c in mk.random]]
            md.random_pos = np.array([mk.fixed.index(c) for c in mk.random], dtype=int)
            md.X0, md.xt = _affine(mk.fixed, data)
            md.offset = 0.0
            if mk.offset is not None:
                md.offset = (np.asarray(obs.covariates[mk.offset], float) if mk.offset in obs.covariates
                             else np.asarray(data.covariates[mk.offset], float)[md.subj])
            if mk.family is Family.HURDLE:
                md.Xpi = _design(mk.hurdle_fixed, obs, data)
                md.Zpi = md.Xpi[:, [mk.hurdle_fixed.index(c) for c in mk.hurdle_random]]
                md.zero = md.y == 0
            if md.X0 is not None:
                md.Z0 = md.X0[:, md.random_pos]
                md.zt = md.xt[md.random_pos]
            md.gamma = self.gamma_slices[k]
            self.markers.append(md)
        ev = spec.event
        self.T = data.time.astype(float)
        self.status = data.status.astype(int)
        self.L = ev.n_causes
        self.W = [_subject_design(spec.event_columns(l), data) for l in range(self.L)]
        self.p_w = [w.shape[1] for w in self.W]
        if self.cure:
            self.W1 = _subject_design(spec.incidence_columns(), data)
            self.fixed_class = (self.status > 0) | zero_tail_mask(spec, data)
            self.zero_tail = zero_tail_mask(spec, data)
        kinds = {md.spec.association.kind for md in self.markers}
        self.has_A1 = bool(kinds & {Association.CURRENT_VALUE, Association.VALUE_SLOPE,
                                    Association.CUMULATIVE})
        self.has_A2 = Association.CUMULATIVE in kinds
        event_times = self.T[self.status > 0]
        self.causes = []
        for l, base in enumerate(ev.baselines):
            c = _MarkerData()
            c.spec = base
            c.kind = base.kind
            c.d = self.status == l + 1
            if base.kind is BaselineKind.CONSTANT:
                c.method = "quad" if self.has_A2 else "constant"
            elif base.kind is BaselineKind.PIECEWISE:
                c.method = "quad" if self.has_A2 else "piecewise"
                c.knots = np.asarray(base.knots, dtype=float)
                c.seg_T = np.searchsorted(c.knots, self.T, side="left")
                s = np.concatenate([[0.0], c.knots, [np.inf]])
                c.s_lo, c.s_hi = s[:-1], s[1:]
            elif base.kind is BaselineKind.WEIBULL:
                c.method = "quad" if self.has_A2 else "weibull"
                with np.errstate(divide="ignore"):
                    c.logT = np.log(self.T)
            else:
                c.method = "quad"
                times = event_times if event_times.size else self.T
                c.basis = spline_basis(base, times) if (times.size or base.knots) else None
                c.order = base.penalty_order
                c.penalty = difference_penalty(base.n_basis, base.penalty_order)
                c.B_T = c.basis(self.T) if c.basis is not None else np.zeros((n, base.n_basis))
            if c.method == "quad":
                self._setup_nodes(c)
            self.causes.append(c)

    def _setup_nodes(self, c):
        rule = self.rule
        K = len(rule.nodes)
        if c.kind is BaselineKind.PIECEWISE:
            lo = np.minimum(c.s_lo, self.T[:, None])
            hi = np.minimum(c.s_hi, self.T[:, None])
            half = (hi - lo) / 2.0
            x = (rule.nodes + 1.0) * half[..., None] + lo[..., None]
            w = rule.weights * half[..., None]
            J = len(c.s_lo)
            c.xq = x.reshape(self.n, J * K)
            c.wq = w.reshape(self.n, J * K)
            c.seg_q = np.repeat(np.arange(J), K)[None, :].repeat(self.n, axis=0)
        elif c.kind is BaselineKind.WEIBULL:
            # graded segments toward 0 for the s^(nu-1) factor
            unit = np.array(graded_cuts(1.0, WEIBULL_GRADE_LEVELS))
            lo, hi = unit[:-1], unit[1:]
            xs = ((rule.nodes[None, :] + 1.0) / 2.0 * (hi - lo)[:, None] + lo[:, None]).ravel()
            ws = (rule.weights[None, :] / 2.0 * (hi - lo)[:, None]).ravel()
            c.xq = xs[None, :] * self.T[:, None]
            c.wq = ws[None, :] * self.T[:, None]
        else:
            c.xq = (rule.nodes + 1.0) / 2.0 * self.T[:, None]
            c.wq = rule.weights / 2.0 * self.T[:, None]
        if c.kind is BaselineKind.WEIBULL:
            with np.errstate(divide="ignore"):
                c.logxq = np.log(c.xq)
        if c.kind is BaselineKind.BSPLINE:
            L = c.spec.n_basis
            c.B_q = c.basis(c.xq) if c.basis is not None else np.zeros(c.xq.shape + (L,))

    # ------------------------------------------------------------ markers

    def marker_mu(self, k, beta, b):
        """Linear predictor of marker k at each observation."""
        md = self.markers[k]
        mu = md.X @ beta
        if md.re_mean.size:
            mu = mu + np.einsum("ij,ij->i", md.Z, b[md.subj][:, md.re_mean])
        return mu + md.offset

    def marker_pi_logit(self, k, beta_pi, b):
        md = self.markers[k]
        lp = md.Xpi @ beta_pi
        if md.re_pi.size:
            lp = lp + np.einsum("ij,ij->i", md.Zpi, b[md.subj][:, md.re_pi])
        return lp

    def marker_obs_ll(self, k, state, b=None, cls=None):
        """Per-observation log-likelihood of marker k.

        ``cls`` selects the class-specific parameters of cure models:
        None uses each subject's current class, 1 or 0 forces a class for
        everyone.
        """
        md = self.markers[k]
        if md.n_obs == 0:
            return np.zeros(0)
        b = state.b if b is None else b
        fam = md.spec.family
        if self.cure:
            u = state.u if cls is None else np.full(self.n, cls)
            uo = u[md.subj].astype(bool)
            if cls == 1:
                beta, s2 = state.beta[k], state.sigma2[k]
            elif cls == 0:
                beta, s2 = state.beta_cured[k], state.sigma2_cured[k]
            else:
                beta = None
            if beta is None:
                mu = np.where(uo, md.X @ state.beta[k], md.X @ state.beta_cured[k])
                if md.re_mean.size:
                    mu = mu + np.einsum("ij,ij->i", md.Z, b[md.subj][:, md.re_mean])
                s2 = np.where(uo, state.sigma2[k], state.sigma2_cured[k])
            else:
                mu = self.marker_mu(k, beta, b)
        else:
            mu = self.marker_mu(k, state.beta[k], b)
            s2 = state.sigma2[k]
        if fam is Family.GAUSSIAN:
            if np.any(~(np.asarray(s2) > 0)):
                return np.full(md.n_obs, -np.inf)
            return gaussian_logpdf(md.y, mu, s2)
        if fam is Family.BERNOULLI:
            return bernoulli_logpmf(md.y, mu)
        r = state.r[k]
        if not r > 0:
            return np.full(md.n_obs, -np.inf)
        return hurdle_logpmf_logit(md.y, mu, self.marker_pi_logit(k, state.beta_pi[k], b), r)

    def marker_ll(self, k, state, b=None, cls=None):
        """Per-subject log-likelihood of marker k."""
        md = self.markers[k]
        ll = self.marker_obs_ll(k, state, b, cls)
        return np.bincount(md.subj, weights=ll, minlength=self.n)

    # ------------------------------------------------------------ random effects

    def re_ll(self, state, b=None, cls=None):
        """Per-subject log density of the random effects."""
        b = state.b if b is None else b
        if b.shape[1] == 0:
            return np.zeros(self.n)
        if not self.cure:
            return self._re_ll_D(b, state.D)
        if cls == 1:
            return self._re_ll_D(b, state.D)
        if cls == 0:
            return self._re_ll_D(b, state.D_cured)
        return np.where(state.u.astype(bool), self._re_ll_D(b, state.D), self._re_ll_D(b, state.D_cured))

    def _re_ll_D(self, b, D):
        out = np.zeros(len(b))
        for blk in self._re_blocks:
            Db = D[np.ix_(blk, blk)] if len(self._re_blocks) > 1 else D
            try:
                C = np.linalg.cholesky(Db)
            except np.linalg.LinAlgError:
                return np.full(len(b), -np.inf)
            Ci = np.linalg.inv(C)
            bb = b[:, blk] if len(self._re_blocks) > 1 else b
            z = bb @ Ci.T
            out += (-0.5 * len(blk) * LOG2PI - np.sum(np.log(np.diag(C)))
                    - 0.5 * np.einsum("ij,ij->i", z, z))
        return out

    # ------------------------------------------------------------ event

    def hazard_coefs(self, l, state, b=None):
        """A0, A1, A2 of every subject for cause l.

        Uses the uncured-class fixed effects of cure models.
        """
        b = state.b if b is None else b
        A0 = self.W[l] @ state.alpha[l, :self.p_w[l]]
        A1 = np.zeros(self.n)
        A2 = np.zeros(self.n)
        g_all = state.gamma[l]
        for k, md in enumerate(self.markers):
            g = g_all[md.gamma]
            kind = md.spec.association.kind
            if kind is Association.SHARED_RE:
                sl = self.re_slices[k]
                A0 = A0 + b[:, sl] @ g
                continue
            beta = state.beta[k]
            a = md.X0 @ beta
            c = np.full(self.n, md.xt @ beta)
            if md.re_mean.size:
                bb = b[:, md.re_mean]
                a = a + np.einsum("ij,ij->i", md.Z0, bb)
                c = c + bb @ md.zt
            if kind is Association.CURRENT_VALUE:
                A0 = A0 + g[0] * a
                A1 = A1 + g[0] * c
            elif kind is Association.CURRENT_SLOPE:
                A0 = A0 + g[0] * c
            elif kind is Association.VALUE_SLOPE:
                A0 = A0 + g[0] * a + g[1] * c
                A1 = A1 + g[0] * c
            else:
                A1 = A1 + g[0] * a
                A2 = A2 + g[0] * c / 2.0
        return A0, A1, A2

    def _log_baseline_T(self, c, theta):
        if c.kind is BaselineKind.CONSTANT:
            return 0.0
        if c.kind is BaselineKind.WEIBULL:
            nu = theta[0]
            return np.log(nu) + (nu - 1.0) * c.logT
        if c.kind is BaselineKind.PIECEWISE:
            return np.log(theta)[c.seg_T]
        return theta[0] + c.B_T @ theta[1:]

    def _log_baseline_q(self, c, theta):
        if c.kind is BaselineKind.CONSTANT:
            return 0.0
        if c.kind is BaselineKind.WEIBULL:
            nu = theta[0]
            return np.log(nu) + (nu - 1.0) * c.logxq
        if c.kind is BaselineKind.PIECEWISE:
            return np.log(theta)[c.seg_q]
        return theta[0] + c.B_q @ theta[1:]

    def event_ll_cause(self, l, state, b=None):
        """Per-subject I(status = l) log hazard(T) - Lambda(T) for cause l."""
        c = self.causes[l]
        theta = state.baseline[l]
        if theta.size and c.kind in (BaselineKind.WEIBULL, BaselineKind.PIECEWISE) and np.any(~(theta > 0)):
            return np.full(self.n, -np.inf)
        A0, A1, A2 = self.hazard_coefs(l, state, b)
        T = self.T
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            if c.method == "constant":
                small = np.abs(A1) <= 1e-8
                safe = np.where(small, 1.0, A1)
                ratio = np.where(small, T * (1.0 + A1 * T / 2.0), np.expm1(safe * T) / safe)
                Lam = np.exp(A0) * ratio
            elif c.method == "piecewise":
                lo = np.minimum(c.s_lo, T[:, None])
                hi = np.minimum(c.s_hi, T[:, None])
                A1e = A1[:, None]
                small = np.abs(A1e) <= 1e-8
                safe = np.where(small, 1.0, A1e)
                seg = np.exp(safe * lo) * np.expm1(safe * (hi - lo)) / safe
                seg = np.where(small, (hi - lo) + A1e * (hi * hi - lo * lo) / 2.0, seg)
                seg = np.where(hi > lo, seg, 0.0)
                Lam = np.exp(A0) * (seg @ theta)
            elif c.method == "weibull":
                Lam = np.exp(A0) * weibull_affine_integral(theta[0], A1, T)
            else:
                x = c.xq
                eta = self._log_baseline_q(c, theta) + A0[:, None] + A1[:, None] * x
                if self.has_A2:
                    eta = eta + A2[:, None] * x * x
                Lam = np.sum(c.wq * np.exp(eta), axis=1)
            Lam = np.minimum(Lam, LAMBDA_MAX)
            Lam = np.where(np.isnan(Lam), LAMBDA_MAX, Lam)
            ll = -Lam
            if np.any(c.d):
                d = c.d
                logh = self._log_baseline_T(c, theta) + A0 + A1 * T + A2 * T * T
                ll = np.where(d, ll + logh, ll)
        return ll

    def event_ll(self, state, b=None):
        """Per-subject event log-likelihood summed over causes."""
        out = np.zeros(self.n)
        for l in range(self.L):
            out = out + self.event_ll_cause(l, state, b)
        return out

    def incidence_ll(self, state, u=None):
        """Per-subject u log p + (1 - u) log(1 - p) of cure models."""
        u = state.u if u is None else u
        lp = self.W1 @ state.xi
        return np.where(u.astype(bool), log_expit(lp), log_expit(-lp))

    def cure_probability(self, state):
        return expit(self.W1 @ state.xi)

    # ------------------------------------------------------------ totals

    def subject_ll(self, state, b=None):
        """Per-subject complete-data log-likelihood including the RE density."""
        tot = self.re_ll(state, b)
        for k in range(len(self.markers)):
            tot = tot + self.marker_ll(k, state, b)
        ev = self.event_ll(state, b)
        if self.cure:
            tot = tot + np.where(state.u.astype(bool), ev, 0.0) + self.incidence_ll(state)
        else:
            tot = tot + ev
        return tot

    def log_likelihood(self, state):
        with np.errstate(invalid="ignore"):
            val = float(np.sum(self.subject_ll(state)))
        return val if not np.isnan(val) else -np.inf

    def log_prior(self, state):
        return log_prior(state, self.spec, self)

    def log_posterior(self, state):
        lp = self.log_prior(state)
        if not np.isfinite(lp):
            return -np.inf
        ll = self.log_likelihood(state)
        return lp + ll if np.isfinite(ll) else -np.inf


def log_prior(state, spec, model=None):
    """Sum of all prior log densities; -inf outside the support.

    ``model`` supplies the spline penalty matrices; without it they are
    rebuilt from the spec.
    """
    pr = spec.priors
    cure = spec.event.is_cure
    lp = 0.0
    for k, mk in enumerate(spec.markers):
        lp += normal_logpdf(state.beta[k], pr.beta_mean, pr.beta_var)
        if cure:
            lp += normal_logpdf(state.beta_cured[k], pr.beta_mean, pr.beta_var)
        if mk.family is Family.GAUSSIAN:
            lp += inv_gamma_precision_logpdf(state.sigma2[k], *pr.error_precision)
            if cure:
                lp += inv_gamma_precision_logpdf(state.sigma2_cured[k], *pr.error_precision)
        if mk.family is Family.HURDLE:
            lp += normal_logpdf(state.beta_pi[k], pr.beta_mean, pr.beta_var)
            lp += gamma_logpdf(state.r[k], *pr.dispersion)
        if not np.isfinite(lp):
            return -np.inf
    for D in ((state.D, state.D_cured) if cure else (state.D,)):
        for blk in spec.re_blocks():
            R, df = pr.wishart(len(blk))
            Db = D[np.ix_(blk, blk)]
            if not np.allclose(Db, Db.T):
                return -np.inf
            lp += inv_wishart_logpdf(Db, R, df)
    for l, base in enumerate(spec.event.baselines):
        p = len(spec.event_columns(l))
        lp += normal_logpdf(state.alpha[l, :p], pr.alpha_mean, pr.alpha_var)
        lp += normal_logpdf(state.gamma[l], pr.gamma_mean, pr.gamma_var)
        theta = state.baseline[l]
        if base.kind is BaselineKind.WEIBULL:
            lp += gamma_logpdf(theta, *pr.weibull_shape)
        elif base.kind is BaselineKind.PIECEWISE:
            lp += gamma_logpdf(theta, *pr.piecewise_height)
        elif base.kind is BaselineKind.BSPLINE:
            tau = state.tau_spline[l]
            penalty = (model.causes[l].penalty if model is not None
                       else difference_penalty(base.n_basis, base.penalty_order))
            lp += normal_logpdf(theta[0], pr.alpha_mean, pr.spline_intercept_var)
            lp += spline_log_prior(theta[1:], tau, penalty, base.penalty_order, pr)
            lp += gamma_logpdf(tau, *pr.spline_smoothing)
        if not np.isfinite(lp):
            return -np.inf
    if cure:
        lp += normal_logpdf(state.xi, pr.xi_mean, pr.xi_var)
    return float(lp) if np.isfinite(lp) else -np.inf


def log_posterior(state, spec, data):
    """Joint log posterior (complete-data form for cure models)."""
    return JointModel(spec, data).log_posterior(state)
