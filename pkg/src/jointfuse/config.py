"""TOML configuration files for models, samplers and simulations.

A config file has up to three top-level tables::

    [model]                # ModelSpec
    quadrature = "kronrod15"
    [[model.markers]]
    name = "y"
    family = "gaussian"
    fixed = ["intercept", "time", "x1"]
    random = ["intercept", "time"]
    association = "current_value"
    [model.event]
    structure = "single"
    covariates = ["w1"]
    [[model.event.baselines]]
    kind = "constant"
    [model.priors]         # any PriorSet field

    [mcmc]                 # any McmcConfig field, plus rhat_threshold / split_rhat

    [simulation]           # SimScenario; grid is a list or {start, stop, step}
    n = 500
    [simulation.covariates]
    x1 = ["bernoulli", 0.6]
    [simulation.truth]     # ParamState fields with one row per marker / cause
"""

import sys
from dataclasses import fields

import numpy as np

from .errors import ConfigError, JointFuseError
from .model import (
    AssociationSpec,
    BaselineHazardSpec,
    EventSpec,
    Family,
    MarkerSpec,
    ModelSpec,
    ParamState,
    PriorSet,
)
from .sampler import McmcConfig
from .simulate import SimScenario

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

RHAT_THRESHOLD = 1.1
_CLI_KEYS = {"rhat_threshold", "split_rhat"}


def load_config(path):
    """Parse a TOML file into a dict; syntax errors become ConfigError."""
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"config {path}: {e}") from None


def _check_keys(table, allowed, where):
    extra = set(table) - set(allowed)
    if extra:
        raise ConfigError(f"{where}: unknown keys {sorted(extra)}")


def _tuple(v, where):
    if v is None:
        return None
    if not isinstance(v, (list, tuple)):
        raise ConfigError(f"{where}: expected a list")
    return tuple(v)


def _wrap(where, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except ConfigError as e:
        raise ConfigError(f"{where}: {e}") from None
    except (JointFuseError, ValueError, TypeError) as e:
        raise ConfigError(f"{where}: {e}") from None


def marker_from_dict(d, where="model.markers"):
    _check_keys(d, {"name", "family", "fixed", "random", "association", "offset",
                    "hurdle_fixed", "hurdle_random"}, where)
    if "name" not in d:
        raise ConfigError(f"{where}: marker needs a name")
    kw = {"name": d["name"]}
    if "family" in d:
        kw["family"] = d["family"]
    for key in ("fixed", "random", "hurdle_fixed", "hurdle_random"):
        if key in d:
            kw[key] = _tuple(d[key], f"{where}.{key}")
    if "association" in d:
        kw["association"] = _wrap(f"{where}.association", AssociationSpec, d["association"])
    if "offset" in d:
        kw["offset"] = d["offset"]
    return _wrap(where, MarkerSpec, **kw)


def baseline_from_dict(d, where="model.event.baselines"):
    names = {f.name for f in fields(BaselineHazardSpec)}
    _check_keys(d, names, where)
    kw = dict(d)
    if "knots" in kw:
        kw["knots"] = tuple(float(x) for x in _tuple(kw["knots"], f"{where}.knots"))
    return _wrap(where, BaselineHazardSpec, **kw)


def event_from_dict(d, where="model.event"):
    _check_keys(d, {"structure", "baselines", "covariates", "incidence_covariates",
                    "zero_tail"}, where)
    kw = {}
    if "structure" in d:
        kw["structure"] = d["structure"]
    if "baselines" in d:
        bl = d["baselines"]
        if isinstance(bl, dict):
            bl = [bl]
        kw["baselines"] = tuple(baseline_from_dict(b, f"{where}.baselines[{i}]")
                                for i, b in enumerate(bl))
    for key in ("covariates", "incidence_covariates"):
        if key in d:
            kw[key] = _tuple(d[key], f"{where}.{key}")
    if "zero_tail" in d:
        kw["zero_tail"] = bool(d["zero_tail"])
    return _wrap(where, EventSpec, **kw)


def priors_from_dict(d, where="model.priors"):
    names = {f.name for f in fields(PriorSet)}
    _check_keys(d, names, where)
    kw = {k: (tuple(v) if isinstance(v, list) and k != "wishart_scale" else v)
          for k, v in d.items()}
    if isinstance(kw.get("wishart_scale"), list):
        kw["wishart_scale"] = np.asarray(kw["wishart_scale"], dtype=float)
    return _wrap(where, PriorSet, **kw)


def model_from_dict(d, where="model"):
    """ModelSpec from the ``[model]`` table."""
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected a table")
    _check_keys(d, {"markers", "event", "priors", "block_diagonal_re", "quadrature"}, where)
    markers = d.get("markers")
    if not markers:
        raise ConfigError(f"{where}.markers: at least one marker is required")
    kw = {"markers": tuple(marker_from_dict(m, f"{where}.markers[{i}]")
                           for i, m in enumerate(markers))}
    if "event" in d:
        kw["event"] = event_from_dict(d["event"], f"{where}.event")
    if "priors" in d:
        kw["priors"] = priors_from_dict(d["priors"], f"{where}.priors")
    if "block_diagonal_re" in d:
        kw["block_diagonal_re"] = bool(d["block_diagonal_re"])
    if "quadrature" in d:
        kw["quadrature"] = d["quadrature"]
    return _wrap(where, ModelSpec, **kw)


def mcmc_from_dict(d, overrides=None, where="mcmc"):
    """McmcConfig from the ``[mcmc]`` table; ``overrides`` wins over the file.

    Returns
    -------
    (McmcConfig, dict)
        The sampler config and the CLI-only settings (``rhat_threshold``,
        ``split_rhat``).
    """
    d = dict(d or {})
    names = {f.name for f in fields(McmcConfig)}
    _check_keys(d, names | _CLI_KEYS, where)
    for k, v in (overrides or {}).items():
        if v is not None:
            d[k] = v
    extra = {"rhat_threshold": float(d.pop("rhat_threshold", RHAT_THRESHOLD)),
             "split_rhat": bool(d.pop("split_rhat", False))}
    for key in ("fixed", "monitor"):
        if key in d and d[key] is not None:
            d[key] = _tuple(d[key], f"{where}.{key}")
    return _wrap(where, McmcConfig, **d), extra


def _grid(g, where):
    if isinstance(g, dict):
        _check_keys(g, {"start", "stop", "step"}, where)
        try:
            start, stop, step = float(g.get("start", 0.0)), float(g["stop"]), float(g["step"])
        except KeyError as e:
            raise ConfigError(f"{where}: missing {e.args[0]}") from None
        if step <= 0:
            raise ConfigError(f"{where}: step must be positive")
        k = int(np.floor((stop - start) / step + 1e-9))
        return np.round(start + step * np.arange(k + 1), 12)
    if not isinstance(g, list):
        raise ConfigError(f"{where}: expected a list or a {{start, stop, step}} table")
    return np.asarray(g, dtype=float)


def truth_from_dict(spec, d, where="simulation.truth"):
    """Generating parameters; absent per-family entries default to NaN/None."""
    _check_keys(d, {"beta", "sigma2", "beta_pi", "r", "D", "alpha", "gamma", "baseline",
                    "tau_spline", "xi", "beta_cured", "sigma2_cured", "D_cured"}, where)
    K, L = spec.n_markers, spec.event.n_causes

    def rows(key, n_rows, default=None):
        v = d.get(key, default)
        if v is None:
            raise ConfigError(f"{where}.{key}: required")
        if len(v) != n_rows:
            raise ConfigError(f"{where}.{key}: expected {n_rows} rows")
        return [None if r is None or (isinstance(r, list) and r == [] and key == "beta_pi")
                else np.asarray(r, dtype=float) for r in v]

    def per_marker(key):
        v = d.get(key)
        out = np.full(K, np.nan)
        if v is None:
            return out
        if len(v) != K:
            raise ConfigError(f"{where}.{key}: expected {K} values")
        return np.array([np.nan if x is None else float(x) for x in v])

    beta = rows("beta", K)
    for k, mk in enumerate(spec.markers):
        if len(beta[k]) != len(mk.fixed):
            raise ConfigError(f"{where}.beta[{k}]: expected {len(mk.fixed)} values")
    beta_pi = [None] * K
    if any(mk.family is Family.HURDLE for mk in spec.markers):
        beta_pi = rows("beta_pi", K)
    Nb = spec.n_random
    D = np.asarray(d.get("D", np.eye(Nb)), dtype=float).reshape(Nb, Nb)
    alpha = d.get("alpha")
    if alpha is None:
        raise ConfigError(f"{where}.alpha: required")
    p_w = max(len(spec.event_columns(l)) for l in range(L))
    A = np.zeros((L, p_w))
    for l, row in enumerate(alpha):
        if l >= L or len(row) != len(spec.event_columns(l)):
            raise ConfigError(f"{where}.alpha[{l}]: expected {len(spec.event_columns(l))} values")
        A[l, :len(row)] = row
    gamma = np.asarray(d.get("gamma", np.zeros((L, spec.n_gamma))), dtype=float).reshape(L, spec.n_gamma)
    baseline = d.get("baseline", [[] for _ in range(L)])
    if len(baseline) != L:
        raise ConfigError(f"{where}.baseline: expected {L} rows")
    baseline = [np.asarray(b, dtype=float) for b in baseline]
    for l, base in enumerate(spec.event.baselines):
        if len(baseline[l]) != base.n_params:
            raise ConfigError(f"{where}.baseline[{l}]: expected {base.n_params} values")
    tau = np.asarray(d.get("tau_spline", [np.nan] * L), dtype=float)
    state = ParamState(beta=beta, sigma2=per_marker("sigma2"), beta_pi=beta_pi, r=per_marker("r"),
                       D=D, b=np.zeros((0, Nb)), alpha=A, gamma=gamma, baseline=baseline,
                       tau_spline=tau)
    if spec.event.is_cure:
        if "xi" not in d:
            raise ConfigError(f"{where}.xi: required for a cure model")
        state.xi = np.asarray(d["xi"], dtype=float)
        state.beta_cured = rows("beta_cured", K, [b.tolist() for b in beta])
        sc = d.get("sigma2_cured")
        state.sigma2_cured = per_marker("sigma2_cured") if sc is not None else state.sigma2.copy()
        state.D_cured = np.asarray(d.get("D_cured", D), dtype=float).reshape(Nb, Nb)
    return state


def scenario_from_config(cfg, seed=None):
    """SimScenario from a parsed config with ``[model]`` and ``[simulation]``."""
    if "model" not in cfg:
        raise ConfigError("model: section missing")
    if "simulation" not in cfg:
        raise ConfigError("simulation: section missing")
    spec = model_from_dict(cfg["model"])
    sim = cfg["simulation"]
    _check_keys(sim, {"n", "grid", "covariates", "censoring_rate", "admin_cutoff", "seed",
                      "t_max_factor", "truth"}, "simulation")
    if "truth" not in sim:
        raise ConfigError("simulation.truth: section missing")
    if "grid" not in sim:
        raise ConfigError("grid: required")
    truth = truth_from_dict(spec, sim["truth"])
    covs = {k: tuple(v) for k, v in sim.get("covariates", {}).items()}
    kw = {k: sim[k] for k in ("n", "censoring_rate", "admin_cutoff", "t_max_factor") if k in sim}
    kw["seed"] = int(sim.get("seed", 0) if seed is None else seed)
    grid = _grid(sim["grid"], "grid")
    try:
        return SimScenario(spec, truth, grid=grid, covariates=covs, **kw)
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(f"simulation: {e}") from None
