"""Adaptive random-walk Metropolis-within-Gibbs sampler.

One sweep updates, in order: the random effects of every subject, the
fixed effects of each marker (random walk plus an exact translation move
between fixed and random effects), residual variances and the random
effects covariance by conjugate draws, event coefficients, baseline
parameters, spline smoothing, hurdle parameters and, for cure models, the
latent classes and incidence coefficients.

Random-walk scales adapt by Robbins-Monro during burn-in only.  Every
block draws from its own counter-based Philox stream keyed by
(seed, chain, block), so a chain's output depends only on its id.
"""

import copy
import os
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, log_expit

from .errors import (
    ChainDiverged,
    ConfigError,
    FactorizationFailure,
    NonFiniteLogPosterior,
)
from .likelihood import (
    JointModel,
    gamma_logpdf,
    inv_gamma_precision_logpdf,
    normal_logpdf,
    spline_log_prior,
)
from .model import (
    Association,
    BaselineKind,
    Family,
    flatten_state,
    initial_state,
    parameter_names,
)

# draws of sigma^2 beyond e^690 (prior tail of IG(0.01, 0.01)) are clamped
SIGMA2_LOG_MAX = 690.0

BLOCK_NAMES = ("b", "beta", "centering", "sigma2", "D", "survival", "baseline", "tau",
               "beta_pi", "r", "u", "xi")


@dataclass
class McmcConfig:
    """Sampler settings.

    ``fixed`` names blocks held at their initial values (see
    ``BLOCK_NAMES``).  ``monitor`` selects output columns by exact name or
    by prefix (``"beta"`` keeps every ``beta[..]`` column); None keeps all.
    """

    n_chains: int = 3
    n_iter: int = 20000
    n_burnin: int = None
    n_thin: int = 10
    seed: int = 0
    adapt_window: int = 50
    target_scalar: float = 0.44
    target_vector: float = 0.234
    rm_exponent: float = 0.6
    init_jitter: float = 0.1
    fixed: tuple = ()
    monitor: tuple = None
    sigma_diagonal_only: bool = False
    class_swap_move: bool = True
    record_classes: bool = False
    n_workers: int = None

    def __post_init__(self):
        if self.n_burnin is None:
            self.n_burnin = self.n_iter // 2
        if not (isinstance(self.n_iter, (int, np.integer)) and self.n_iter >= 1):
            raise ConfigError("n_iter must be a positive integer")
        if not 0 <= self.n_burnin < self.n_iter:
            raise ConfigError("n_burnin must satisfy 0 <= n_burnin < n_iter")
        if self.n_thin < 1:
            raise ConfigError("n_thin must be >= 1")
        if self.n_chains < 1:
            raise ConfigError("n_chains must be >= 1")
        if self.adapt_window < 1:
            raise ConfigError("adapt_window must be >= 1")
        unknown = set(self.fixed) - set(BLOCK_NAMES)
        if unknown:
            raise ConfigError(f"unknown fixed blocks {sorted(unknown)}")
        self.fixed = tuple(self.fixed)
        if self.monitor is not None:
            self.monitor = tuple(self.monitor)

    @property
    def n_keep(self):
        return (self.n_iter - self.n_burnin) // self.n_thin


@dataclass
class ChainOutput:
    chain_id: int
    seed: int
    names: list
    draws: np.ndarray
    acceptance: dict
    scales_at_burnin: dict
    scales_final: dict
    elapsed: float
    classes: np.ndarray = None
    final_state: object = None
    extras: dict = field(default_factory=dict)


# ---------------------------------------------------------------- conjugate draws


def conjugate_sigma2_update(residuals, a, b, rng):
    """Draw sigma^2 from IG(a + N/2, b + SSR/2)."""
    r = np.asarray(residuals, dtype=float)
    shape = a + r.size / 2.0
    rate = b + 0.5 * float(r @ r)
    return float(np.exp(min(np.log(rate) - log_gamma_draw(shape, rng), SIGMA2_LOG_MAX)))


def log_gamma_draw(shape, rng):
    """log of a Gamma(shape, 1) draw, accurate for shapes far below 1.

    Small shapes put most of their mass below the smallest double, so the
    draw uses G(a) = G(a + 1) U^{1/a} on the log scale.
    """
    if shape >= 1.0:
        return float(np.log(rng.gamma(shape)))
    return float(np.log(rng.gamma(shape + 1.0)) + np.log(rng.random()) / shape)


def wishart_draw(df, scale, rng):
    """Bartlett draw from Wishart(df, scale)."""
    p = scale.shape[0]
    C = np.linalg.cholesky(scale)
    A = np.zeros((p, p))
    A[np.diag_indices(p)] = np.sqrt(rng.chisquare(df - np.arange(p)))
    il = np.tril_indices(p, -1)
    A[il] = rng.standard_normal(len(il[0]))
    CA = C @ A
    return CA @ CA.T


def conjugate_wishart_update(b, R, df, rng):
    """Draw D with D^{-1} ~ Wishart(df + n, (R + sum b b^T)^{-1}).

    ``R`` and ``df`` are the prior scale and degrees of freedom of the
    random-effects precision.  The factorizations are retried with
    jitter 1e-10 I up to three times.
    """
    b = np.atleast_2d(np.asarray(b, dtype=float))
    p = R.shape[0]
    S = R + b.T @ b if b.size else R.copy()
    jitter = 0.0
    for _ in range(4):
        try:
            Sj = S + jitter * np.eye(p)
            scale = np.linalg.inv(Sj)
            scale = (scale + scale.T) / 2.0
            Om = wishart_draw(df + b.shape[0] * (b.size > 0), scale, rng)
            D = np.linalg.inv(Om)
            D = (D + D.T) / 2.0
            np.linalg.cholesky(D)
            return D
        except np.linalg.LinAlgError:
            jitter = 1e-10 if jitter == 0 else jitter * 10
    raise FactorizationFailure("Wishart update failed after jitter retries")


def cure_class_full_conditional(log_p, log_1mp, log_surv, ll_class1, ll_class0):
    """P(u = 1 | rest) for censored subjects, in log space.

    ``ll_class1`` and ``ll_class0`` are the longitudinal plus random-effect
    log densities under each class; ``log_surv`` is log S(T) of the uncured
    class.  Vectorized.
    """
    l1 = np.asarray(log_p) + np.asarray(log_surv) + np.asarray(ll_class1)
    l0 = np.asarray(log_1mp) + np.asarray(ll_class0)
    with np.errstate(invalid="ignore"):
        out = expit(l1 - l0)
    out = np.where(np.isneginf(l1) & np.isneginf(l0), 0.0, out)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------- proposals


class _Proposal:
    """Gaussian random walk with adaptive scale and covariance."""

    def __init__(self, name, dim, cov, cfg):
        self.name = name
        self.dim = dim
        self.target = cfg.target_scalar if dim == 1 else cfg.target_vector
        self.log_scale = np.log(2.38 / np.sqrt(dim))
        self.cov = cov
        self.chol = np.linalg.cholesky(cov)
        self.acc_win = 0
        self.n_win = 0
        self.acc_total = 0
        self.n_total = 0
        self.emp_n = 0
        self.emp_mean = np.zeros(dim)
        self.emp_m2 = np.zeros((dim, dim))
        self.using_emp = False

    @property
    def scale(self):
        return float(np.exp(self.log_scale))

    def propose(self, x, rng):
        return x + self.scale * (self.chol @ rng.standard_normal(self.dim))

    def record(self, accepted):
        self.acc_win += accepted
        self.n_win += 1
        self.acc_total += accepted
        self.n_total += 1

    def observe(self, x):
        self.emp_n += 1
        d = x - self.emp_mean
        self.emp_mean += d / self.emp_n
        self.emp_m2 += np.outer(d, x - self.emp_mean)

    def adapt(self, step):
        if self.n_win:
            rate = self.acc_win / self.n_win
            self.log_scale += step * (rate - self.target)
        self.acc_win = self.n_win = 0
        if self.dim > 1 and self.emp_n >= max(4 * self.dim, 50):
            emp = self.emp_m2 / (self.emp_n - 1)
            emp = emp + 1e-10 * np.eye(self.dim) * max(np.trace(emp) / self.dim, 1e-12)
            try:
                chol = np.linalg.cholesky(emp)
            except np.linalg.LinAlgError:
                return
            self.cov, self.chol = emp, chol
            if not self.using_emp:
                self.using_emp = True
                self.log_scale = np.log(2.38 / np.sqrt(self.dim))

    @property
    def rate(self):
        return self.acc_total / self.n_total if self.n_total else np.nan


def _initial_cov(f, x, prior_var, dim):
    """Inverse negative Hessian of f at x, regularized toward the prior."""
    h = 1e-3 * (1.0 + np.abs(x))
    f0 = f(x)
    H = np.zeros((dim, dim))
    if np.isfinite(f0):
        for i in range(dim):
            ei = np.zeros(dim)
            ei[i] = h[i]
            H[i, i] = (f(x + ei) - 2 * f0 + f(x - ei)) / h[i] ** 2
            for j in range(i):
                ej = np.zeros(dim)
                ej[j] = h[j]
                H[i, j] = H[j, i] = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej)
                                     + f(x - ei - ej)) / (4 * h[i] * h[j])
    if not np.all(np.isfinite(H)):
        H = np.zeros((dim, dim))
    w, V = np.linalg.eigh(-H)
    floor = 1.0 / prior_var
    w = np.maximum(w, floor)
    cov = (V / w) @ V.T
    return (cov + cov.T) / 2.0


# ---------------------------------------------------------------- chain


def _stream(seed, chain_id, name):
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(chain_id), zlib.crc32(name.encode())))
    return np.random.Generator(np.random.Philox(ss))


class _Chain:
    def __init__(self, model, cfg, chain_id, init=None):
        self.m = model
        self.spec = model.spec
        self.cfg = cfg
        self.cid = chain_id
        self.n = model.n
        self.fixed = set(cfg.fixed)
        self.rngs = {}
        if init is None:
            seed_i = int(np.random.SeedSequence(int(cfg.seed), spawn_key=(int(chain_id),))
                         .generate_state(1)[0])
            init = initial_state(self.spec, model.data, seed_i)
            self._jitter(init)
        self.s = init.copy()
        if self.m.cure:
            self.s.u = self.s.u.astype(np.int8)
            self.s.u[self.m.status > 0] = 1
            self.s.u[self.m.zero_tail] = 0
        self.props = {}

    def rng(self, name):
        if name not in self.rngs:
            self.rngs[name] = _stream(self.cfg.seed, self.cid, name)
        return self.rngs[name]

    def _jitter(self, s):
        j = self.cfg.init_jitter
        if j <= 0:
            return
        g = self.rng("init")
        for k in range(len(s.beta)):
            s.beta[k] = s.beta[k] + j * g.standard_normal(s.beta[k].shape)
            if s.beta_pi[k] is not None:
                s.beta_pi[k] = s.beta_pi[k] + j * g.standard_normal(s.beta_pi[k].shape)
        s.sigma2 = s.sigma2 * np.exp(j * g.standard_normal(s.sigma2.shape))
        s.alpha = s.alpha + j * g.standard_normal(s.alpha.shape)
        for l, base in enumerate(self.spec.event.baselines):
            th = s.baseline[l]
            if base.kind in (BaselineKind.WEIBULL, BaselineKind.PIECEWISE):
                s.baseline[l] = th * np.exp(j * g.standard_normal(th.shape))
            elif base.kind is BaselineKind.BSPLINE:
                s.baseline[l] = th + j * g.standard_normal(th.shape)
        if s.xi is not None:
            s.xi = s.xi + j * g.standard_normal(s.xi.shape)
            s.beta_cured = [x + j * g.standard_normal(x.shape) for x in s.beta_cured]

    # ------------------------------------------------------------ caches

    def refresh(self):
        m, s = self.m, self.s
        self.mll = [m.marker_ll(k, s) for k in range(len(m.markers))]
        self.ell = [m.event_ll_cause(l, s) for l in range(m.L)]
        self.rell = m.re_ll(s)
        self.ill = m.incidence_ll(s) if m.cure else None

    def umask(self):
        return self.s.u.astype(bool) if self.m.cure else None

    def event_total(self, ell_list):
        tot = sum(np.sum(e if not self.m.cure else np.where(self.s.u.astype(bool), e, 0.0))
                  for e in ell_list)
        return float(tot)

    def log_post_cached(self):
        lp = self.m.log_prior(self.s)
        ll = sum(float(np.sum(x)) for x in self.mll) + self.event_total(self.ell) + float(np.sum(self.rell))
        if self.m.cure:
            ll += float(np.sum(self.ill))
        return lp + ll

    # ------------------------------------------------------------ setup

    def setup(self):
        m, s, spec, cfg = self.m, self.s, self.spec, self.cfg
        pr = spec.priors
        self.refresh()
        lp = self.log_post_cached()
        if not np.isfinite(lp):
            raise NonFiniteLogPosterior(f"initial log posterior is {lp}")
        classes = (1, 0) if m.cure else (1,)
        for k, mk in enumerate(spec.markers):
            for c in classes:
                name = f"beta{k}" if c == 1 else f"beta_cured{k}"
                x0 = self._get_beta(k, c)
                if x0.size:
                    f = self._beta_target(k, c)
                    self.props[name] = _Proposal(name, x0.size, _initial_cov(f, x0, pr.beta_var, x0.size), cfg)
            if mk.family is Family.HURDLE:
                x0 = s.beta_pi[k].copy()
                f = self._beta_pi_target(k)
                self.props[f"beta_pi{k}"] = _Proposal(f"beta_pi{k}", x0.size,
                                                      _initial_cov(f, x0, pr.beta_var, x0.size), cfg)
                x0 = np.log(np.atleast_1d(s.r[k]))
                f = self._r_target(k)
                self.props[f"r{k}"] = _Proposal(f"r{k}", 1, _initial_cov(f, x0, 100.0, 1), cfg)
        for l in range(m.L):
            x0 = self._get_surv(l)
            if x0.size:
                f = self._surv_target(l)
                self.props[f"survival{l}"] = _Proposal(f"survival{l}", x0.size,
                                                       _initial_cov(f, x0, pr.alpha_var, x0.size), cfg)
            x0 = self._get_base(l)
            if x0.size:
                f = self._base_target(l)
                self.props[f"baseline{l}"] = _Proposal(f"baseline{l}", x0.size,
                                                       _initial_cov(f, x0, 100.0, x0.size), cfg)
        if m.cure:
            x0 = s.xi.copy()
            f = self._xi_target()
            self.props["xi"] = _Proposal("xi", x0.size, _initial_cov(f, x0, pr.xi_var, x0.size), cfg)
        Nb = spec.n_random
        self.Nb = Nb
        if Nb:
            self.b_logscale = np.full(self.n, np.log(2.38 / np.sqrt(Nb)))
            self.b_acc_win = np.zeros(self.n)
            self.b_acc_total = np.zeros(self.n)
            self.b_n_win = 0
            self.b_n_total = 0
            self._zz = self._subject_crossprod()
            self._update_b_chol()
        self._centering_setup()

    def _subject_crossprod(self):
        """Per-subject sum of z z^T weights for each marker part."""
        m = self.m
        out = []
        for k, md in enumerate(m.markers):
            parts = [(md.Z, md.re_mean, "mean")]
            if md.spec.family is Family.HURDLE:
                parts.append((md.Zpi, md.re_pi, "pi"))
            for Z, idx, part in parts:
                if idx.size == 0:
                    continue
                outer = Z[:, :, None] * Z[:, None, :]
                zz = np.zeros((self.n, idx.size, idx.size))
                np.add.at(zz, md.subj, outer)
                out.append((k, idx, part, zz))
        return out

    def _update_b_chol(self):
        m, s = self.m, self.s
        Nb = self.Nb

        def prec_of(D, sigma2):
            try:
                Dinv = np.linalg.inv(D)
            except np.linalg.LinAlgError:
                Dinv = np.eye(Nb)
            P = np.broadcast_to(Dinv, (self.n, Nb, Nb)).copy()
            for k, idx, part, zz in self._zz:
                fam = m.markers[k].spec.family
                if part == "pi":
                    w = 0.25
                elif fam is Family.GAUSSIAN:
                    w = 1.0 / sigma2[k]
                elif fam is Family.BERNOULLI:
                    w = 0.25
                else:
                    w = 0.5
                P[:, idx[:, None], idx[None, :]] += w * zz
            return P

        P = prec_of(s.D, s.sigma2)
        if m.cure:
            P0 = prec_of(s.D_cured, s.sigma2_cured)
            P = np.where(s.u.astype(bool)[:, None, None], P, P0)
        try:
            cov = np.linalg.inv(P)
            self.b_chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            self.b_chol = np.broadcast_to(np.eye(Nb), (self.n, Nb, Nb)).copy()

    def _centering_setup(self):
        """Positions where a translation between beta and b keeps every mu fixed."""
        self.center = []
        for k, md in enumerate(self.m.markers):
            if md.spec.association.kind is Association.SHARED_RE:
                continue
            mk = md.spec
            if mk.random:
                self.center.append((k, "beta", md.random_pos, md.re_mean))
            if mk.family is Family.HURDLE and mk.hurdle_random:
                pos = np.array([mk.hurdle_fixed.index(c) for c in mk.hurdle_random])
                self.center.append((k, "beta_pi", pos, md.re_pi))

    # ------------------------------------------------------------ getters

    def _get_beta(self, k, c):
        return (self.s.beta[k] if c == 1 else self.s.beta_cured[k]).copy()

    def _set_beta(self, s, k, c, x):
        if c == 1:
            s.beta[k] = x
        else:
            s.beta_cured[k] = x

    def _get_surv(self, l):
        return np.concatenate([self.s.alpha[l, :self.m.p_w[l]], self.s.gamma[l]])

    def _set_surv(self, s, l, x):
        p = self.m.p_w[l]
        s.alpha = s.alpha.copy()
        s.gamma = s.gamma.copy()
        s.alpha[l, :p] = x[:p]
        s.gamma[l] = x[p:]

    def _get_base(self, l):
        th = self.s.baseline[l]
        kind = self.spec.event.baselines[l].kind
        if kind in (BaselineKind.WEIBULL, BaselineKind.PIECEWISE):
            return np.log(th)
        return th.copy()

    def _set_base(self, s, l, x):
        kind = self.spec.event.baselines[l].kind
        s.baseline = list(s.baseline)
        s.baseline[l] = np.exp(x) if kind in (BaselineKind.WEIBULL, BaselineKind.PIECEWISE) else x

    # ------------------------------------------------------------ targets

    def _shallow(self):
        t = copy.copy(self.s)
        t.beta = list(t.beta)
        t.beta_pi = list(t.beta_pi)
        if t.beta_cured is not None:
            t.beta_cured = list(t.beta_cured)
        return t

    def _beta_target(self, k, c):
        m, pr = self.m, self.spec.priors
        assoc = m.markers[k].spec.association.kind is not Association.SHARED_RE

        def f(x, parts=False, current=False):
            if current:
                mll, ell = self.mll[k], None
            else:
                t = self._shallow()
                self._set_beta(t, k, c, x)
                mll = m.marker_ll(k, t)
                ell = [m.event_ll_cause(l, t) for l in range(m.L)] if c == 1 and assoc else None
            val = float(np.sum(mll)) + normal_logpdf(x, pr.beta_mean, pr.beta_var)
            if c == 1:
                val += self.event_total(ell if ell is not None else self.ell)
            if not np.isfinite(val):
                val = -np.inf
            return (val, mll, ell) if parts else val
        return f

    def _beta_pi_target(self, k):
        m, pr = self.m, self.spec.priors

        def f(x, parts=False, current=False):
            if current:
                mll = self.mll[k]
            else:
                t = self._shallow()
                t.beta_pi[k] = x
                mll = m.marker_ll(k, t)
            val = float(np.sum(mll)) + normal_logpdf(x, pr.beta_mean, pr.beta_var)
            if not np.isfinite(val):
                val = -np.inf
            return (val, mll) if parts else val
        return f

    def _r_target(self, k):
        m, pr = self.m, self.spec.priors

        def f(x, parts=False, current=False):
            if current:
                mll = self.mll[k]
            else:
                t = self._shallow()
                t.r = t.r.copy()
                t.r[k] = np.exp(x[0])
                mll = m.marker_ll(k, t)
            val = float(np.sum(mll)) + gamma_logpdf(np.exp(x[0]), *pr.dispersion) + x[0]
            if not np.isfinite(val):
                val = -np.inf
            return (val, mll) if parts else val
        return f

    def _surv_target(self, l):
        m, pr = self.m, self.spec.priors
        p = m.p_w[l]

        def f(x, parts=False, current=False):
            if current:
                e = self.ell[l]
            else:
                t = self._shallow()
                self._set_surv(t, l, x)
                e = m.event_ll_cause(l, t)
            val = (self.event_total([e]) + normal_logpdf(x[:p], pr.alpha_mean, pr.alpha_var)
                   + normal_logpdf(x[p:], pr.gamma_mean, pr.gamma_var))
            if not np.isfinite(val):
                val = -np.inf
            return (val, e) if parts else val
        return f

    def _base_target(self, l):
        m, pr = self.m, self.spec.priors
        base = self.spec.event.baselines[l]

        def f(x, parts=False, current=False):
            t = self._shallow()
            self._set_base(t, l, x)
            e = self.ell[l] if current else m.event_ll_cause(l, t)
            val = self.event_total([e])
            th = t.baseline[l]
            if base.kind is BaselineKind.WEIBULL:
                val += gamma_logpdf(th, *pr.weibull_shape) + float(np.sum(x))
            elif base.kind is BaselineKind.PIECEWISE:
                val += gamma_logpdf(th, *pr.piecewise_height) + float(np.sum(x))
            else:
                val += normal_logpdf(th[0], pr.alpha_mean, pr.spline_intercept_var)
                val += spline_log_prior(th[1:], self.s.tau_spline[l], m.causes[l].penalty,
                                        base.penalty_order, pr)
            if not np.isfinite(val):
                val = -np.inf
            return (val, e) if parts else val
        return f

    def _xi_target(self):
        m, pr = self.m, self.spec.priors

        def f(x, parts=False, current=False):
            if current:
                ill = self.ill
            else:
                t = self._shallow()
                t.xi = x
                ill = m.incidence_ll(t)
            val = float(np.sum(ill)) + normal_logpdf(x, pr.xi_mean, pr.xi_var)
            return (val, ill) if parts else val
        return f

    def _mh(self, name, get, f, commit):
        prop = self.props[name]
        g = self.rng(name)
        x = get()
        cur = f(x, current=True)
        y = prop.propose(x, g)
        res = f(y, parts=True)
        new = res[0]
        acc = np.log(g.random()) < new - cur
        prop.record(bool(acc))
        if acc:
            commit(y, res)
            x = y
        if self.adapting:
            prop.observe(x)

    # ------------------------------------------------------------ updates

    def update_b(self, mask=None):
        m, s = self.m, self.s
        g = self.rng("b")
        z = g.standard_normal((self.n, self.Nb))
        logu = np.log(g.random(self.n))
        step = np.exp(self.b_logscale)[:, None] * np.einsum("ijk,ik->ij", self.b_chol, z)
        if mask is not None:
            step[~mask] = 0.0
        bp = s.b + step
        mll = [m.marker_ll(k, s, bp) for k in range(len(m.markers))]
        ell = [m.event_ll_cause(l, s, bp) for l in range(m.L)]
        rell = m.re_ll(s, bp)
        u = self.umask()

        def tot(ml, el, rl):
            t = rl + sum(ml)
            e = sum(el)
            return t + (np.where(u, e, 0.0) if u is not None else e)

        with np.errstate(invalid="ignore"):
            ratio = tot(mll, ell, rell) - tot(self.mll, self.ell, self.rell)
        acc = logu < ratio
        if mask is not None:
            acc &= mask
        s.b = np.where(acc[:, None], bp, s.b)
        self.mll = [np.where(acc, a, b) for a, b in zip(mll, self.mll)]
        self.ell = [np.where(acc, a, b) for a, b in zip(ell, self.ell)]
        self.rell = np.where(acc, rell, self.rell)
        if mask is None:
            self.b_acc_win += acc
            self.b_acc_total += acc
            self.b_n_win += 1
            self.b_n_total += 1

    def update_beta(self):
        m = self.m
        classes = (1, 0) if m.cure else (1,)
        for k in range(len(m.markers)):
            for c in classes:
                name = f"beta{k}" if c == 1 else f"beta_cured{k}"
                if name not in self.props:
                    continue

                def commit(y, res, k=k, c=c):
                    self._set_beta(self.s, k, c, y)
                    self.mll[k] = res[1]
                    if res[2] is not None:
                        self.ell = res[2]
                self._mh(name, lambda k=k, c=c: self._get_beta(k, c), self._beta_target(k, c), commit)

    def update_centering(self):
        if not self.center or not self.Nb:
            return
        m, s, pr = self.m, self.s, self.spec.priors
        g = self.rng("centering")
        classes = (1, 0) if m.cure else (1,)
        for c in classes:
            mask = np.ones(self.n, bool) if not m.cure else (s.u == c)
            nc = int(mask.sum())
            D = s.D if c == 1 else s.D_cured
            try:
                Dinv = np.linalg.inv(D)
            except np.linalg.LinAlgError:
                return
            idx = np.concatenate([e[3] for e in self.center])
            cur = []
            for k, kind, pos, _ in self.center:
                vec = (s.beta_pi[k] if kind == "beta_pi" else
                       (s.beta[k] if c == 1 else s.beta_cured[k]))
                cur.append(vec[pos])
            cur = np.concatenate(cur)
            bsum = s.b[mask].sum(axis=0)
            Q = nc * Dinv[np.ix_(idx, idx)] + np.eye(idx.size) / pr.beta_var
            h = Dinv[idx] @ bsum + (pr.beta_mean - cur) / pr.beta_var
            try:
                C = np.linalg.cholesky(Q)
            except np.linalg.LinAlgError:
                return
            mean = np.linalg.solve(Q, h)
            delta = mean + np.linalg.solve(C.T, g.standard_normal(idx.size))
            off = 0
            for k, kind, pos, re_idx in self.center:
                d = delta[off:off + pos.size]
                off += pos.size
                if kind == "beta_pi":
                    if c == 0 and m.cure:
                        continue
                    s.beta_pi[k] = s.beta_pi[k].copy()
                    s.beta_pi[k][pos] += d
                elif c == 1:
                    s.beta[k] = s.beta[k].copy()
                    s.beta[k][pos] += d
                else:
                    s.beta_cured[k] = s.beta_cured[k].copy()
                    s.beta_cured[k][pos] += d
            shift = np.zeros(self.Nb)
            shift[idx] = delta
            s.b = np.where(mask[:, None], s.b - shift, s.b)
        # linear predictors are unchanged by the translation
        self.rell = m.re_ll(s)

    def update_sigma2(self):
        m, s, pr = self.m, self.s, self.spec.priors
        g = self.rng("sigma2")
        for k, md in enumerate(m.markers):
            if md.spec.family is not Family.GAUSSIAN:
                continue
            if m.cure:
                uo = s.u[md.subj].astype(bool)
                for c, sel in ((1, uo), (0, ~uo)):
                    beta = s.beta[k] if c == 1 else s.beta_cured[k]
                    res = (md.y - m.marker_mu(k, beta, s.b))[sel]
                    val = conjugate_sigma2_update(res, *pr.error_precision, g)
                    if c == 1:
                        s.sigma2 = s.sigma2.copy()
                        s.sigma2[k] = val
                    else:
                        s.sigma2_cured = s.sigma2_cured.copy()
                        s.sigma2_cured[k] = val
            else:
                res = md.y - m.marker_mu(k, s.beta[k], s.b)
                s.sigma2 = s.sigma2.copy()
                s.sigma2[k] = conjugate_sigma2_update(res, *pr.error_precision, g)
            self.mll[k] = m.marker_ll(k, s)

    def update_D(self):
        m, s, pr = self.m, self.s, self.spec.priors
        g = self.rng("D")
        classes = ((1, s.u == 1), (0, s.u == 0)) if m.cure else ((1, None),)
        for c, mask in classes:
            D = np.zeros((self.Nb, self.Nb))
            for blk in self.spec.re_blocks():
                R, df = pr.wishart(len(blk))
                bb = s.b[:, blk] if mask is None else s.b[mask][:, blk]
                D[np.ix_(blk, blk)] = conjugate_wishart_update(bb, R, df, g)
            if c == 1:
                s.D = D
            else:
                s.D_cured = D
        self.rell = m.re_ll(s)

    def update_survival(self):
        m = self.m
        for l in range(m.L):
            name = f"survival{l}"
            if name not in self.props:
                continue

            def commit(y, res, l=l):
                self._set_surv(self.s, l, y)
                self.ell[l] = res[1]
            self._mh(name, lambda l=l: self._get_surv(l), self._surv_target(l), commit)

    def update_baseline(self):
        m = self.m
        for l in range(m.L):
            name = f"baseline{l}"
            if name not in self.props:
                continue

            def commit(y, res, l=l):
                self._set_base(self.s, l, y)
                self.ell[l] = res[1]
            self._mh(name, lambda l=l: self._get_base(l), self._base_target(l), commit)

    def update_tau(self):
        m, s, pr = self.m, self.s, self.spec.priors
        g = self.rng("tau")
        for l, base in enumerate(self.spec.event.baselines):
            if base.kind is not BaselineKind.BSPLINE:
                continue
            coef = s.baseline[l][1:]
            a, b = pr.spline_smoothing
            shape = a + (coef.size - base.penalty_order) / 2.0
            rate = b + 0.5 * float(coef @ m.causes[l].penalty @ coef)
            s.tau_spline = s.tau_spline.copy()
            s.tau_spline[l] = g.gamma(shape, 1.0 / rate)

    def update_hurdle(self):
        m = self.m
        for k, md in enumerate(m.markers):
            if md.spec.family is not Family.HURDLE:
                continue
            if "beta_pi" not in self.fixed:
                def commit(y, res, k=k):
                    self.s.beta_pi[k] = y
                    self.mll[k] = res[1]
                self._mh(f"beta_pi{k}", lambda k=k: self.s.beta_pi[k].copy(), self._beta_pi_target(k), commit)
            if "r" not in self.fixed:
                def commit_r(y, res, k=k):
                    self.s.r = self.s.r.copy()
                    self.s.r[k] = np.exp(y[0])
                    self.mll[k] = res[1]
                self._mh(f"r{k}", lambda k=k: np.log(np.atleast_1d(self.s.r[k])), self._r_target(k), commit_r)

    def _class_lls(self, b=None):
        """Per-subject longitudinal plus RE log densities under each class."""
        m, s = self.m, self.s
        l1 = m.re_ll(s, b, cls=1)
        l0 = m.re_ll(s, b, cls=0)
        for k in range(len(m.markers)):
            l1 = l1 + m.marker_ll(k, s, b, cls=1)
            l0 = l0 + m.marker_ll(k, s, b, cls=0)
        return l1, l0

    def update_classes(self):
        m, s = self.m, self.s
        g = self.rng("u")
        free = ~m.fixed_class
        old = s.u.copy()
        lp = m.W1 @ s.xi
        log_p, log_1mp = log_expit(lp), log_expit(-lp)
        l1, l0 = self._class_lls()
        ev = sum(self.ell)
        prob = cure_class_full_conditional(log_p, log_1mp, ev, l1, l0)
        draw = (g.random(self.n) < prob).astype(np.int8)
        s.u = np.where(free, draw, s.u).astype(np.int8)
        if self.cfg.class_swap_move and self.Nb:
            self._class_swap(free, log_p, log_1mp)
        self.refresh()
        flipped = s.u != old
        if flipped.any() and self.Nb and "b" not in self.fixed:
            self.update_b(mask=flipped)

    def _class_swap(self, free, log_p, log_1mp):
        """Flip u and shift b so each subject's trajectory is unchanged."""
        m, s = self.m, self.s
        g = self.rng("u")
        shift1 = np.zeros(self.Nb)   # b' - b when moving 1 -> 0
        for k, md in enumerate(m.markers):
            d = s.beta[k] - s.beta_cured[k]
            shift1[md.re_mean] = d[md.random_pos]
        u = s.u.astype(bool)
        bp = s.b + np.where(u[:, None], shift1, -shift1)

        def total(uarr, b):
            t = self._shallow()
            t.u = uarr
            t.b = b
            val = m.re_ll(t, b)
            for k in range(len(m.markers)):
                val = val + m.marker_ll(k, t, b)
            ev = m.event_ll(t, b)
            val = val + np.where(uarr.astype(bool), ev + log_p, log_1mp)
            return val

        up = (1 - s.u).astype(np.int8)
        with np.errstate(invalid="ignore"):
            ratio = total(up, bp) - total(s.u, s.b)
        acc = (np.log(g.random(self.n)) < ratio) & free
        s.u = np.where(acc, up, s.u).astype(np.int8)
        s.b = np.where(acc[:, None], bp, s.b)

    def update_xi(self):
        def commit(y, res):
            self.s.xi = y
            self.ill = res[1]
        self._mh("xi", lambda: self.s.xi.copy(), self._xi_target(), commit)

    # ------------------------------------------------------------ driver

    def sweep(self):
        fx = self.fixed
        if self.Nb and "b" not in fx:
            self.update_b()
        if "beta" not in fx:
            self.update_beta()
        if "centering" not in fx and "beta" not in fx and "b" not in fx:
            self.update_centering()
        if "sigma2" not in fx:
            self.update_sigma2()
        if self.Nb and "D" not in fx:
            self.update_D()
        if "survival" not in fx:
            self.update_survival()
        if "baseline" not in fx:
            self.update_baseline()
        if "tau" not in fx:
            self.update_tau()
        self.update_hurdle()
        if self.m.cure:
            if "u" not in fx:
                self.update_classes()
            if "xi" not in fx:
                self.update_xi()

    def adapt(self, batch):
        step = batch ** (-self.cfg.rm_exponent)
        for p in self.props.values():
            p.adapt(step)
        if self.Nb:
            rate = self.b_acc_win / max(self.b_n_win, 1)
            target = self.cfg.target_scalar if self.Nb == 1 else self.cfg.target_vector
            self.b_logscale += step * (rate - target)
            self.b_acc_win[:] = 0
            self.b_n_win = 0
            self._update_b_chol()

    def scales(self):
        out = {name: (p.scale, p.cov.copy()) for name, p in self.props.items()}
        if self.Nb:
            out["b"] = (np.exp(self.b_logscale).copy(), self.b_chol.copy())
        return out

    def run(self):
        cfg = self.cfg
        t0 = time.perf_counter()
        self.adapting = cfg.n_burnin > 0
        self.setup()
        all_names = parameter_names(self.spec, cfg.sigma_diagonal_only)
        sel = _select(all_names, cfg.monitor)
        names = [all_names[i] for i in sel]
        draws = np.empty((cfg.n_keep, len(sel)))
        classes = (np.empty((cfg.n_keep, self.n), np.int8)
                   if self.m.cure and cfg.record_classes else None)
        row = 0
        neg_inf_windows = 0
        scales_burnin = self.scales() if cfg.n_burnin == 0 else None
        for it in range(cfg.n_iter):
            self.adapting = it < cfg.n_burnin
            self.sweep()
            if (it + 1) % cfg.adapt_window == 0:
                if self.adapting:
                    self.adapt((it + 1) // cfg.adapt_window)
                lp = self.log_post_cached()
                neg_inf_windows = neg_inf_windows + 1 if not np.isfinite(lp) else 0
                if neg_inf_windows >= 2:
                    raise ChainDiverged(f"log posterior -inf over a whole window at iteration {it + 1}")
            if it + 1 == cfg.n_burnin:
                scales_burnin = self.scales()
            if it >= cfg.n_burnin and (it - cfg.n_burnin + 1) % cfg.n_thin == 0:
                draws[row] = flatten_state(self.spec, self.s, cfg.sigma_diagonal_only)[sel]
                if classes is not None:
                    classes[row] = self.s.u
                row += 1
        acceptance = {name: p.rate for name, p in self.props.items()}
        if self.Nb and self.b_n_total:
            acceptance["b"] = float(np.mean(self.b_acc_total / self.b_n_total))
        return ChainOutput(
            chain_id=self.cid, seed=cfg.seed, names=names, draws=draws, acceptance=acceptance,
            scales_at_burnin=scales_burnin, scales_final=self.scales(),
            elapsed=time.perf_counter() - t0, classes=classes, final_state=self.s,
        )


def _select(names, monitor):
    if monitor is None:
        return list(range(len(names)))
    keep = []
    for i, nm in enumerate(names):
        for m in monitor:
            if nm == m or nm.startswith(m + "["):
                keep.append(i)
                break
    return keep


def run_chain(spec, data, config, chain_id=0, init=None, model=None):
    """Run one chain and return its retained draws."""
    model = model or JointModel(spec, data)
    return _Chain(model, config, chain_id, init=init).run()


def _run_one(args):
    spec, data, config, cid = args
    try:
        return run_chain(spec, data, config, cid)
    except Exception as e:
        e.args = (f"chain {cid}: {e.args[0] if e.args else e}",) + tuple(e.args[1:])
        raise


def n_workers(config):
    env = os.environ.get("JOINTFUSE_THREADS")
    cap = os.cpu_count() or 1
    if env:
        try:
            cap = max(1, int(env))
        except ValueError:
            pass
    if config.n_workers is not None:
        cap = min(cap, config.n_workers)
    return max(1, min(cap, config.n_chains))


def run(spec, data, config):
    """Run ``config.n_chains`` chains, possibly in parallel, ordered by id."""
    jobs = [(spec, data, config, cid) for cid in range(config.n_chains)]
    workers = n_workers(config)
    if workers == 1:
        model = JointModel(spec, data)
        out = []
        for cid in range(config.n_chains):
            try:
                out.append(run_chain(spec, data, config, cid, model=model))
            except Exception as e:
                e.args = (f"chain {cid}: {e.args[0] if e.args else e}",) + tuple(e.args[1:])
                raise
        return out
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(_run_one, jobs))
