"""Model vocabulary and validated runtime containers.

A model is a set of longitudinal markers, each with a fixed and a random
design, linked to an event sub-model through an association structure.
Designs are explicit column lists.  The reserved names ``"intercept"`` and
``"time"`` denote the constant column and the measurement time; any other
name is a covariate column taken from the data.
"""

import copy
import json
import logging
from dataclasses import dataclass, field, fields
from enum import Enum

import numpy as np

from .errors import (
    InvariantViolation,
    MissingColumn,
    SingularDesign,
    UnsupportedDesign,
)

log = logging.getLogger(__name__)

RESERVED = ("intercept", "time")
SIGMA2_FLOOR = 1e-3


class Family(str, Enum):
    GAUSSIAN = "gaussian"
    BERNOULLI = "bernoulli"
    HURDLE = "hurdle_negbin"


class Association(str, Enum):
    CURRENT_VALUE = "current_value"
    CURRENT_SLOPE = "current_slope"
    CUMULATIVE = "cumulative_effect"
    SHARED_RE = "shared_random_effects"
    VALUE_SLOPE = "current_value_plus_slope"


class BaselineKind(str, Enum):
    CONSTANT = "constant"
    WEIBULL = "weibull"
    PIECEWISE = "piecewise"
    BSPLINE = "bspline"


class Structure(str, Enum):
    SINGLE = "single"
    COMPETING = "competing_risks"
    CURE = "mixture_cure"


def _enum(cls, value):
    try:
        return cls(value)
    except ValueError:
        names = ", ".join(m.value for m in cls)
        raise InvariantViolation(f"unknown {cls.__name__} {value!r}; expected one of {names}") from None


@dataclass(frozen=True)
class AssociationSpec:
    kind: Association = Association.CURRENT_VALUE

    def __post_init__(self):
        object.__setattr__(self, "kind", _enum(Association, self.kind))


@dataclass(frozen=True)
class MarkerSpec:
    """One longitudinal marker.

    Parameters
    ----------
    name : str
        Column of ``long.csv`` holding the marker value.
    family : Family
    fixed : tuple of str
        Fixed-effects design columns.
    random : tuple of str
        Random-effects design columns, a subset of ``fixed``.
    association : AssociationSpec
    offset : str, optional
        Observation-level offset column (log link of the hurdle mean).
    hurdle_fixed : tuple of str, optional
        Design of logit(pi) for the hurdle family.
    hurdle_random : tuple of str
        Random effects of the zero part, a subset of ``hurdle_fixed``.
    """

    name: str
    family: Family = Family.GAUSSIAN
    fixed: tuple = ("intercept", "time")
    random: tuple = ("intercept", "time")
    association: AssociationSpec = field(default_factory=AssociationSpec)
    offset: str = None
    hurdle_fixed: tuple = None
    hurdle_random: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "family", _enum(Family, self.family))
        object.__setattr__(self, "fixed", tuple(self.fixed))
        object.__setattr__(self, "random", tuple(self.random))
        object.__setattr__(self, "hurdle_random", tuple(self.hurdle_random))
        if self.hurdle_fixed is not None:
            object.__setattr__(self, "hurdle_fixed", tuple(self.hurdle_fixed))
        if isinstance(self.association, (str, Association)):
            object.__setattr__(self, "association", AssociationSpec(self.association))
        if not self.fixed:
            raise InvariantViolation(f"marker {self.name!r}: empty fixed design")
        extra = set(self.random) - set(self.fixed)
        if extra:
            raise InvariantViolation(
                f"marker {self.name!r}: random columns {sorted(extra)} not in fixed design")
        if (self.hurdle_fixed is not None) != (self.family is Family.HURDLE):
            raise InvariantViolation(
                f"marker {self.name!r}: hurdle_fixed is required for, and only for, the hurdle family")
        if self.family is Family.HURDLE:
            if not self.hurdle_fixed:
                raise InvariantViolation(f"marker {self.name!r}: empty hurdle design")
            extra = set(self.hurdle_random) - set(self.hurdle_fixed)
            if extra:
                raise InvariantViolation(
                    f"marker {self.name!r}: hurdle random columns {sorted(extra)} not in hurdle design")
        elif self.hurdle_random:
            raise InvariantViolation(f"marker {self.name!r}: hurdle_random without hurdle family")
        if self.offset is not None and self.family is not Family.HURDLE:
            raise InvariantViolation(f"marker {self.name!r}: offsets are only supported for hurdle markers")

    @property
    def n_random(self):
        return len(self.random) + len(self.hurdle_random)

    @property
    def n_gamma(self):
        kind = self.association.kind
        if kind is Association.SHARED_RE:
            return self.n_random
        if kind is Association.VALUE_SLOPE:
            return 2
        return 1


@dataclass(frozen=True)
class BaselineHazardSpec:
    """Baseline hazard of one cause.

    ``knots`` are the interior change points of the piecewise baseline or,
    optionally, fixed interior knots of the spline.  ``boundary`` fixes the
    upper spline boundary; otherwise it is the largest observed time.
    """

    kind: BaselineKind = BaselineKind.CONSTANT
    knots: tuple = ()
    degree: int = 4
    interior_knot_count: int = 6
    penalty_order: int = 2
    boundary: float = None

    def __post_init__(self):
        object.__setattr__(self, "kind", _enum(BaselineKind, self.kind))
        object.__setattr__(self, "knots", tuple(float(k) for k in self.knots))
        k = np.asarray(self.knots)
        if k.size and (np.any(k <= 0) or np.any(np.diff(k) <= 0)):
            raise InvariantViolation("baseline knots must be positive and strictly ascending")
        if self.kind is BaselineKind.BSPLINE:
            if self.degree < 1 or self.interior_knot_count < 1:
                raise InvariantViolation("spline degree and knot count must be >= 1")
            if self.penalty_order not in (1, 2):
                raise InvariantViolation("spline penalty order must be 1 or 2")
            if k.size and k.size != self.interior_knot_count:
                object.__setattr__(self, "interior_knot_count", int(k.size))

    @property
    def n_pieces(self):
        return len(self.knots) + 1

    @property
    def n_basis(self):
        return self.degree + self.interior_knot_count

    @property
    def has_intercept(self):
        """Whether the event design carries an intercept for this cause."""
        return self.kind in (BaselineKind.CONSTANT, BaselineKind.WEIBULL)

    @property
    def n_params(self):
        """Length of the baseline parameter vector stored in ParamState."""
        if self.kind is BaselineKind.CONSTANT:
            return 0
        if self.kind is BaselineKind.WEIBULL:
            return 1
        if self.kind is BaselineKind.PIECEWISE:
            return self.n_pieces
        return 1 + self.n_basis


@dataclass(frozen=True)
class EventSpec:
    structure: Structure = Structure.SINGLE
    baselines: tuple = (BaselineHazardSpec(),)
    covariates: tuple = ()
    incidence_covariates: tuple = ()
    zero_tail: bool = True

    def __post_init__(self):
        object.__setattr__(self, "structure", _enum(Structure, self.structure))
        if isinstance(self.baselines, BaselineHazardSpec):
            object.__setattr__(self, "baselines", (self.baselines,))
        object.__setattr__(self, "baselines", tuple(self.baselines))
        object.__setattr__(self, "covariates", tuple(self.covariates))
        object.__setattr__(self, "incidence_covariates", tuple(self.incidence_covariates))
        nb = len(self.baselines)
        if self.structure is Structure.COMPETING and nb < 2:
            raise InvariantViolation("competing risks need at least two causes")
        if self.structure is not Structure.COMPETING and nb != 1:
            raise InvariantViolation(f"{self.structure.value} allows exactly one cause")
        if self.incidence_covariates and self.structure is not Structure.CURE:
            raise InvariantViolation("incidence covariates are only valid for mixture cure models")

    @property
    def n_causes(self):
        return len(self.baselines)

    @property
    def is_cure(self):
        return self.structure is Structure.CURE


@dataclass(frozen=True)
class PriorSet:
    """Prior hyperparameters.

    Gamma priors are (shape, rate).  ``wishart_scale`` is the matrix R of the
    Wishart(R, df) prior on the random-effects precision, with R given as a
    scalar multiple of the identity or as a full matrix; ``wishart_df``
    defaults to the random-effects dimension.
    """

    beta_mean: float = 0.0
    beta_var: float = 1000.0
    error_precision: tuple = (0.01, 0.01)
    wishart_scale: object = 1.0
    wishart_df: float = None
    alpha_mean: float = 0.0
    alpha_var: float = 1000.0
    gamma_mean: float = 0.0
    gamma_var: float = 1000.0
    weibull_shape: tuple = (0.01, 0.01)
    piecewise_height: tuple = (0.01, 0.01)
    spline_smoothing: tuple = (1.0, 0.005)
    spline_ridge_precision: float = 1e-6
    spline_intercept_var: float = 1000.0
    dispersion: tuple = (0.01, 0.01)
    xi_mean: float = 0.0
    xi_var: float = 1000.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name.endswith("_var") and not v > 0:
                raise InvariantViolation(f"prior {f.name} must be > 0")
            if isinstance(v, (tuple, list)):
                object.__setattr__(self, f.name, tuple(float(x) for x in v))
                if len(v) != 2 or min(v) <= 0:
                    raise InvariantViolation(f"prior {f.name} must be a positive (shape, rate) pair")
        if not self.spline_ridge_precision >= 0:
            raise InvariantViolation("spline_ridge_precision must be >= 0")
        if self.wishart_df is not None and not self.wishart_df > 0:
            raise InvariantViolation("wishart_df must be > 0")

    def wishart(self, dim):
        """Return (R, df) for a random-effects block of dimension ``dim``."""
        R = np.asarray(self.wishart_scale, dtype=float)
        R = R * np.eye(dim) if R.ndim == 0 else R.copy()
        if R.shape != (dim, dim):
            raise InvariantViolation(f"wishart_scale must be {dim}x{dim}")
        try:
            np.linalg.cholesky(R)
        except np.linalg.LinAlgError:
            raise InvariantViolation("wishart_scale must be positive definite") from None
        df = float(dim if self.wishart_df is None else self.wishart_df)
        if df < dim:
            raise InvariantViolation("wishart_df must be >= random-effects dimension")
        return R, df


@dataclass(frozen=True)
class ModelSpec:
    markers: tuple
    event: EventSpec = field(default_factory=EventSpec)
    priors: PriorSet = field(default_factory=PriorSet)
    block_diagonal_re: bool = False
    quadrature: str = "kronrod15"

    def __post_init__(self):
        object.__setattr__(self, "markers", tuple(self.markers))
        if not self.markers:
            raise InvariantViolation("model needs at least one marker")
        names = [m.name for m in self.markers]
        if len(set(names)) != len(names):
            raise InvariantViolation("duplicate marker names")
        if self.event.is_cure:
            for m in self.markers:
                if m.family is Family.HURDLE:
                    raise UnsupportedDesign("cure models support Gaussian and Bernoulli markers only")

    @property
    def n_markers(self):
        return len(self.markers)

    @property
    def n_random(self):
        return sum(m.n_random for m in self.markers)

    def re_slices(self):
        """Slice of the joint random-effects vector owned by each marker."""
        out, start = [], 0
        for m in self.markers:
            out.append(slice(start, start + m.n_random))
            start += m.n_random
        return out

    def gamma_slices(self):
        out, start = [], 0
        for m in self.markers:
            out.append(slice(start, start + m.n_gamma))
            start += m.n_gamma
        return out

    @property
    def n_gamma(self):
        return sum(m.n_gamma for m in self.markers)

    def event_columns(self, cause=0):
        """Column names of the event design w_i for one cause."""
        base = self.event.baselines[cause]
        return (("intercept",) if base.has_intercept else ()) + self.event.covariates

    def incidence_columns(self):
        return ("intercept",) + self.event.incidence_covariates

    def re_blocks(self):
        """Index groups of D that are free; one group unless block-diagonal."""
        if not self.block_diagonal_re:
            return [np.arange(self.n_random)] if self.n_random else []
        return [np.arange(s.start, s.stop) for s in self.re_slices() if s.stop > s.start]


# ---------------------------------------------------------------- data


@dataclass
class MarkerObservations:
    """Column-oriented observations of one marker."""

    subject: np.ndarray
    time: np.ndarray
    value: np.ndarray
    covariates: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.value)


@dataclass
class Dataset:
    """Subjects with event records and per-marker observations.

    Attributes
    ----------
    ids : ndarray
        Subject identifiers, in the order of all per-subject arrays.
    time, status : ndarray
        Event or censoring time and status (0 = censored, l = cause l).
    covariates : dict of str -> ndarray
        Subject-level covariates.
    markers : dict of str -> MarkerObservations
    """

    ids: np.ndarray
    time: np.ndarray
    status: np.ndarray
    covariates: dict
    markers: dict
    dropped_rows: int = 0

    @property
    def n(self):
        return len(self.ids)

    @classmethod
    def from_frames(cls, long, surv, marker_names):
        """Build a dataset from ``long`` and ``surv`` data frames.

        Marker rows with a missing value are skipped per marker; rows after
        the subject's event time are dropped with a logged count.
        """
        for col in ("id", "time", "status"):
            if col not in surv.columns:
                raise MissingColumn(col, "surv.csv")
        for col in ("id", "time"):
            if col not in long.columns:
                raise MissingColumn(col, "long.csv")
        for name in marker_names:
            if name not in long.columns:
                raise MissingColumn(name, "long.csv")
        ids = surv["id"].to_numpy()
        if len(np.unique(ids)) != len(ids):
            raise InvariantViolation("duplicate subject ids in surv.csv")
        time = surv["time"].to_numpy(dtype=float)
        status = surv["status"].to_numpy()
        if np.any(~np.isfinite(time)) or np.any(time < 0):
            bad = ids[~(np.isfinite(time) & (time >= 0))][0]
            raise InvariantViolation(f"subject {bad}: event time must be finite and >= 0")
        if np.any(np.isnan(status.astype(float))) or np.any(status.astype(float) % 1 != 0):
            raise InvariantViolation("status must be an integer")
        status = status.astype(int)
        covs = {c: surv[c].to_numpy() for c in surv.columns if c not in ("id", "time", "status")}
        index = {v: i for i, v in enumerate(ids.tolist())}
        lid = long["id"].tolist()
        unknown = [v for v in lid if v not in index]
        if unknown:
            raise InvariantViolation(f"long.csv subject {unknown[0]} absent from surv.csv")
        subj = np.array([index[v] for v in lid], dtype=int)
        ltime = long["time"].to_numpy(dtype=float)
        if np.any(~np.isfinite(ltime)) or np.any(ltime < 0):
            raise InvariantViolation("marker observation times must be finite and >= 0")
        keep = ltime <= time[subj] if len(subj) else np.zeros(0, bool)
        dropped = int(np.sum(~keep))
        if dropped:
            log.info("dropped %d marker rows recorded after the event time", dropped)
        other = [c for c in long.columns if c not in ("id", "time") and c not in marker_names]
        markers = {}
        for name in marker_names:
            val = long[name].to_numpy(dtype=float)
            m = keep & ~np.isnan(val)
            obs = MarkerObservations(subj[m], ltime[m], val[m],
                                     {c: long[c].to_numpy()[m] for c in other})
            pairs = np.stack([obs.subject.astype(float), obs.time], axis=1) if len(obs) else np.zeros((0, 2))
            if len(np.unique(pairs, axis=0)) != len(pairs):
                raise InvariantViolation(f"marker {name!r}: duplicate (subject, time) observations")
            markers[name] = obs
        # subject-level covariates only present in long.csv
        for c in other:
            if c in covs:
                continue
            col = long[c].to_numpy()
            vals = np.full(len(ids), np.nan, dtype=object)
            consistent = True
            for s, v in zip(subj, col):
                if isinstance(vals[s], float) and np.isnan(vals[s]):
                    vals[s] = v
                elif vals[s] != v:
                    consistent = False
                    break
            if consistent and len(col):
                try:
                    covs[c] = vals.astype(float)
                except (TypeError, ValueError):
                    pass
        return cls(ids, time, status, covs, markers, dropped)

    @classmethod
    def empty(cls, marker_names):
        z = np.zeros(0)
        return cls(np.zeros(0, dtype=int), z, np.zeros(0, dtype=int), {},
                   {m: MarkerObservations(np.zeros(0, int), z, z, {}) for m in marker_names})


# ---------------------------------------------------------------- validation


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)
    dims: dict = field(default_factory=dict)

    @property
    def ok(self):
        return not self.violations

    def raise_for_errors(self):
        if self.violations:
            raise self.violations[0]


def _design_kinds(spec, data, mk, columns):
    """Classify design columns as reserved, subject-level or observation-level."""
    out = {}
    obs = data.markers.get(mk.name)
    for c in columns:
        if c in RESERVED:
            out[c] = c
        elif c in data.covariates:
            out[c] = "subject"
        elif obs is not None and c in obs.covariates:
            out[c] = "observation"
        else:
            raise MissingColumn(c, f"marker {mk.name!r}")
    return out


def validate_spec(spec, data):
    """Check a model against a dataset.

    Returns
    -------
    ValidationReport
        Violations are exception instances naming the offending column,
        subject or marker.  ``dims`` holds n, per-marker observation counts,
        the number of markers K and the random-effects dimension Nb.
    """
    rep = ValidationReport()
    v = rep.violations
    n = data.n
    if n == 0:
        v.append(InvariantViolation("dataset has no subjects"))
    for mk in spec.markers:
        if mk.name not in data.markers:
            v.append(MissingColumn(mk.name, "marker value column"))
            continue
        obs = data.markers[mk.name]
        cols = list(mk.fixed) + list(mk.hurdle_fixed or ())
        try:
            kinds = _design_kinds(spec, data, mk, cols)
        except MissingColumn as e:
            v.append(e)
            continue
        if mk.offset is not None and mk.offset not in obs.covariates and mk.offset not in data.covariates:
            v.append(MissingColumn(mk.offset, f"offset of marker {mk.name!r}"))
        obs_level = [c for c, k in kinds.items() if k == "observation"] + ([mk.offset] if mk.offset else [])
        if obs_level and mk.association.kind is not Association.SHARED_RE:
            v.append(UnsupportedDesign(
                f"marker {mk.name!r}: observation-level columns {obs_level} need the "
                "shared random effects association"))
        y = obs.value
        if len(y) == 0:
            v.append(InvariantViolation(f"marker {mk.name!r} has no observations"))
        if mk.family is Family.BERNOULLI and np.any((y != 0) & (y != 1)):
            i = obs.subject[(y != 0) & (y != 1)][0]
            v.append(InvariantViolation(f"marker {mk.name!r}, subject {data.ids[i]}: value not in {{0, 1}}"))
        if mk.family is Family.HURDLE and np.any((y < 0) | (y % 1 != 0)):
            i = obs.subject[(y < 0) | (y % 1 != 0)][0]
            v.append(InvariantViolation(
                f"marker {mk.name!r}, subject {data.ids[i]}: counts must be non-negative integers"))
        if len(obs) and np.any(obs.time > data.time[obs.subject]):
            v.append(InvariantViolation(f"marker {mk.name!r}: observation after event time"))
        for c, k in kinds.items():
            if k == "subject" and not np.all(np.isfinite(np.asarray(data.covariates[c], float))):
                v.append(InvariantViolation(f"covariate {c!r} has missing values"))
    ev = spec.event
    for c in set(ev.covariates) | set(ev.incidence_covariates):
        if c not in data.covariates:
            v.append(MissingColumn(c, "event covariates"))
        elif not np.all(np.isfinite(np.asarray(data.covariates[c], float))):
            v.append(InvariantViolation(f"covariate {c!r} has missing values"))
    if n:
        st = data.status
        if np.any(st < 0) or np.any(st > ev.n_causes):
            i = np.flatnonzero((st < 0) | (st > ev.n_causes))[0]
            v.append(InvariantViolation(f"subject {data.ids[i]}: status {st[i]} outside 0..{ev.n_causes}"))
        if np.any(data.time <= 0):
            i = np.flatnonzero(data.time <= 0)[0]
            v.append(InvariantViolation(f"subject {data.ids[i]}: event time must be > 0"))
    rep.dims = {
        "n": n,
        "n_obs": {m.name: len(data.markers[m.name]) for m in spec.markers if m.name in data.markers},
        "K": spec.n_markers,
        "Nb": spec.n_random,
    }
    return rep


# ---------------------------------------------------------------- state


@dataclass
class ParamState:
    """One point of the parameter space.

    Per-marker quantities are lists indexed by marker; entries that do not
    apply to a marker's family are ``None`` (arrays) or NaN (scalars).
    ``alpha`` and ``gamma`` have one row per cause.  ``baseline[l]`` holds
    the cause-specific baseline vector: empty (constant), ``[nu]``
    (Weibull), ``h_1..h_J`` (piecewise) or ``[intercept, c_1..c_L]``
    (spline).  Class-specific longitudinal parameters of cure models live
    in the ``*_cured`` fields; the unsuffixed ones belong to the uncured
    class.
    """

    beta: list
    sigma2: np.ndarray
    beta_pi: list
    r: np.ndarray
    D: np.ndarray
    b: np.ndarray
    alpha: np.ndarray
    gamma: np.ndarray
    baseline: list
    tau_spline: np.ndarray
    xi: np.ndarray = None
    u: np.ndarray = None
    beta_cured: list = None
    sigma2_cured: np.ndarray = None
    D_cured: np.ndarray = None

    def copy(self):
        return copy.deepcopy(self)

    def to_dict(self):
        def enc(x):
            if x is None:
                return None
            if isinstance(x, list):
                return [enc(e) for e in x]
            a = np.asarray(x)
            return {"dtype": a.dtype.str, "shape": list(a.shape),
                    "data": [float(e).hex() if a.dtype.kind == "f" else int(e) for e in a.ravel()]}
        return {f.name: enc(getattr(self, f.name)) for f in fields(self)}

    @classmethod
    def from_dict(cls, d):
        def dec(x):
            if x is None:
                return None
            if isinstance(x, list):
                return [dec(e) for e in x]
            dt = np.dtype(x["dtype"])
            vals = [float.fromhex(e) if dt.kind == "f" else e for e in x["data"]]
            return np.array(vals, dtype=dt).reshape(x["shape"])
        return cls(**{k: dec(v) for k, v in d.items()})

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, s):
        return cls.from_dict(json.loads(s))

    def equals(self, other):
        a, b = self.to_dict(), other.to_dict()
        return a == b


def _pooled_design(data, mk, columns):
    """Fixed design matrix over all observations of a marker."""
    obs = data.markers[mk.name]
    cols = []
    for c in columns:
        if c == "intercept":
            cols.append(np.ones(len(obs)))
        elif c == "time":
            cols.append(obs.time)
        elif c in data.covariates:
            cols.append(np.asarray(data.covariates[c], float)[obs.subject])
        else:
            cols.append(np.asarray(obs.covariates[c], float))
    return np.column_stack(cols) if cols else np.zeros((len(obs), 0))


def _lstsq(X, y, label):
    p = X.shape[1]
    if len(y) < p or np.linalg.matrix_rank(X) < p:
        log.warning("%s: singular least-squares design, starting at zero", label)
        return np.zeros(p), False
    coef = np.linalg.lstsq(X, y, rcond=None)[0]
    if not np.all(np.isfinite(coef)):
        raise SingularDesign(label)
    return coef, True


def initial_state(spec, data, rng_seed=0):
    """Deterministic starting point for the sampler.

    Fixed effects come from pooled least squares per marker (on a
    linearized scale for the non-Gaussian families), residual variances
    are floored at ``SIGMA2_FLOOR``, D is the identity, b is zero, and the
    event intercept is the log crude event rate.
    """
    rng = np.random.default_rng(np.random.SeedSequence(int(rng_seed), spawn_key=(7,)))
    n = data.n
    K = spec.n_markers
    beta, beta_pi = [], []
    sigma2 = np.full(K, np.nan)
    r = np.full(K, np.nan)
    for k, mk in enumerate(spec.markers):
        obs = data.markers.get(mk.name)
        if obs is None or len(obs) == 0:
            beta.append(np.zeros(len(mk.fixed)))
            beta_pi.append(np.zeros(len(mk.hurdle_fixed)) if mk.family is Family.HURDLE else None)
            if mk.family is Family.GAUSSIAN:
                sigma2[k] = 1.0
            if mk.family is Family.HURDLE:
                r[k] = 1.0
            continue
        X = _pooled_design(data, mk, mk.fixed)
        y = obs.value
        if mk.family is Family.GAUSSIAN:
            coef, _ = _lstsq(X, y, f"marker {mk.name}")
            res = y - X @ coef
            sigma2[k] = max(float(np.mean(res ** 2)) if len(res) else 1.0, SIGMA2_FLOOR)
            beta.append(coef)
            beta_pi.append(None)
        elif mk.family is Family.BERNOULLI:
            coef, _ = _lstsq(X, 4.0 * (y - 0.5), f"marker {mk.name}")
            beta.append(coef)
            beta_pi.append(None)
        else:
            pos = y > 0
            off = 0.0
            if mk.offset is not None:
                off = (np.asarray(obs.covariates[mk.offset], float) if mk.offset in obs.covariates
                       else np.asarray(data.covariates[mk.offset], float)[obs.subject])
                off = off[pos]
            if pos.sum() >= X.shape[1]:
                coef, _ = _lstsq(X[pos], np.log(y[pos]) - off, f"marker {mk.name}")
            else:
                coef = np.zeros(X.shape[1])
            beta.append(coef)
            Xp = _pooled_design(data, mk, mk.hurdle_fixed)
            cpi, _ = _lstsq(Xp, 4.0 * ((y == 0) - 0.5), f"marker {mk.name} zero part")
            beta_pi.append(cpi)
            r[k] = 1.0
    Nb = spec.n_random
    D = np.eye(Nb)
    b = np.zeros((n, Nb))
    L = spec.event.n_causes
    events = np.array([np.sum(data.status == l + 1) for l in range(L)], float)
    total = float(np.sum(data.time)) if n else 0.0
    crude = np.maximum(events, 0.5) / max(total, 1e-8) if n else np.ones(L)
    p_w = max(len(spec.event_columns(l)) for l in range(L))
    alpha = np.zeros((L, p_w))
    baseline = []
    tau = np.full(L, np.nan)
    for l, base in enumerate(spec.event.baselines):
        if base.has_intercept:
            alpha[l, 0] = np.log(crude[l])
        if base.kind is BaselineKind.CONSTANT:
            baseline.append(np.zeros(0))
        elif base.kind is BaselineKind.WEIBULL:
            baseline.append(np.ones(1))
        elif base.kind is BaselineKind.PIECEWISE:
            baseline.append(np.full(base.n_pieces, crude[l]))
        else:
            v = np.zeros(1 + base.n_basis)
            v[0] = np.log(crude[l])
            baseline.append(v)
            tau[l] = 1.0
    gamma = np.zeros((L, spec.n_gamma))
    state = ParamState(beta=beta, sigma2=sigma2, beta_pi=beta_pi, r=r, D=D, b=b,
                       alpha=alpha, gamma=gamma, baseline=baseline, tau_spline=tau)
    if spec.event.is_cure:
        state.xi = np.zeros(len(spec.incidence_columns()))
        u = (data.status > 0).astype(np.int8)
        cens = data.status == 0
        u[cens] = rng.integers(0, 2, size=int(cens.sum()))
        u[zero_tail_mask(spec, data)] = 0
        state.u = u
        state.beta_cured = [x.copy() for x in beta]
        state.sigma2_cured = sigma2.copy()
        state.D_cured = np.eye(Nb)
    return state


def zero_tail_mask(spec, data):
    """Censored subjects beyond the largest event time, fixed as cured."""
    if not spec.event.is_cure or not spec.event.zero_tail or data.n == 0:
        return np.zeros(data.n, bool)
    ev = data.status > 0
    if not ev.any():
        return np.zeros(data.n, bool)
    return (data.status == 0) & (data.time > data.time[ev].max())


# ---------------------------------------------------------------- names


def parameter_names(spec, sigma_diagonal_only=False):
    """Canonical monitored column names, 1-based."""
    names = []
    cure = spec.event.is_cure
    for k, mk in enumerate(spec.markers, start=1):
        names += [f"beta[{k}][{j}]" for j in range(1, len(mk.fixed) + 1)]
        if cure:
            names += [f"beta_cured[{k}][{j}]" for j in range(1, len(mk.fixed) + 1)]
        if mk.family is Family.GAUSSIAN:
            names.append(f"sigma2[{k}]")
            if cure:
                names.append(f"sigma2_cured[{k}]")
        if mk.family is Family.HURDLE:
            names += [f"beta_pi[{k}][{j}]" for j in range(1, len(mk.hurdle_fixed) + 1)]
            names.append(f"r[{k}]")
    Nb = spec.n_random
    free = np.zeros((Nb, Nb), bool)
    for blk in spec.re_blocks():
        free[np.ix_(blk, blk)] = True
    for prefix in (("Sigma", "Sigma_cured") if cure else ("Sigma",)):
        for i in range(Nb):
            for j in range(i, Nb):
                if free[i, j] and (i == j or not sigma_diagonal_only):
                    names.append(f"{prefix}[{i + 1}][{j + 1}]")
    L = spec.event.n_causes
    multi = L > 1
    for l in range(L):
        tag = f"[{l + 1}]" if multi else ""
        names += [f"alpha{tag}[{j}]" for j in range(1, len(spec.event_columns(l)) + 1)]
    for l in range(L):
        tag = f"[{l + 1}]" if multi else ""
        names += [f"gamma{tag}[{j}]" for j in range(1, spec.n_gamma + 1)]
    for l, base in enumerate(spec.event.baselines):
        tag = f"[{l + 1}]" if multi else ""
        if base.kind is BaselineKind.WEIBULL:
            names.append(f"nu{tag}" if multi else "nu")
        elif base.kind is BaselineKind.PIECEWISE:
            names += [f"h{tag}[{j}]" for j in range(1, base.n_pieces + 1)]
        elif base.kind is BaselineKind.BSPLINE:
            names.append(f"spline_intercept{tag}" if multi else "spline_intercept")
            names += [f"spline{tag}[{j}]" for j in range(1, base.n_basis + 1)]
            names.append(f"tau_spline{tag}" if multi else "tau_spline")
    if cure:
        names += [f"xi[{j}]" for j in range(1, len(spec.incidence_columns()) + 1)]
    return names


def flatten_state(spec, state, sigma_diagonal_only=False):
    """Monitored values in the order of :func:`parameter_names`."""
    vals = []
    cure = spec.event.is_cure
    for k, mk in enumerate(spec.markers):
        vals += list(state.beta[k])
        if cure:
            vals += list(state.beta_cured[k])
        if mk.family is Family.GAUSSIAN:
            vals.append(state.sigma2[k])
            if cure:
                vals.append(state.sigma2_cured[k])
        if mk.family is Family.HURDLE:
            vals += list(state.beta_pi[k])
            vals.append(state.r[k])
    Nb = spec.n_random
    free = np.zeros((Nb, Nb), bool)
    for blk in spec.re_blocks():
        free[np.ix_(blk, blk)] = True
    for D in ((state.D, state.D_cured) if cure else (state.D,)):
        for i in range(Nb):
            for j in range(i, Nb):
                if free[i, j] and (i == j or not sigma_diagonal_only):
                    vals.append(D[i, j])
    L = spec.event.n_causes
    for l in range(L):
        vals += list(state.alpha[l, :len(spec.event_columns(l))])
    for l in range(L):
        vals += list(state.gamma[l])
    for l, base in enumerate(spec.event.baselines):
        if base.kind is BaselineKind.BSPLINE:
            vals += list(state.baseline[l])
            vals.append(state.tau_spline[l])
        else:
            vals += list(state.baseline[l])
    if cure:
        vals += list(state.xi)
    return np.array(vals, dtype=float)
