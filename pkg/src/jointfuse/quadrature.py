"""Fixed-order Gauss-Legendre and Gauss-Kronrod rules on [-1, 1]."""

from dataclasses import dataclass

import numpy as np

from .errors import EmptyInterval, NonFiniteIntegrand, UnsupportedOrder

# QUADPACK qk15 abscissae and weights (non-negative half, centre last)
_XGK = (
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
)
_WGK = (
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
)


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and weights of a rule on [-1, 1]."""

    nodes: np.ndarray
    weights: np.ndarray
    kind: str

    def __len__(self):
        return len(self.nodes)


@dataclass(frozen=True)
class ScaledRule:
    """A rule mapped to a finite interval [a, b]."""

    nodes: np.ndarray
    weights: np.ndarray
    a: float
    b: float


def legendre_rule(K):
    """K-point Gauss-Legendre rule.

    Parameters
    ----------
    K : int
        Number of nodes, 2 <= K <= 64.

    Returns
    -------
    QuadratureRule
    """
    if int(K) != K or K < 2 or K > 64:
        raise UnsupportedOrder(f"Legendre order must be in [2, 64], got {K}")
    nodes, weights = np.polynomial.legendre.leggauss(int(K))
    return QuadratureRule(nodes, weights, "legendre")


def kronrod15_rule():
    """The tabulated 15-point Kronrod extension of the 7-point Gauss rule."""
    x = np.array(_XGK)
    w = np.array(_WGK)
    nodes = np.concatenate([-x, x[-2::-1]])
    weights = np.concatenate([w, w[-2::-1]])
    return QuadratureRule(nodes, weights, "kronrod15")


def get_rule(name):
    """Rule from a config name: ``"kronrod15"`` or ``"legendre<K>"``."""
    name = str(name).lower()
    if name == "kronrod15":
        return kronrod15_rule()
    if name.startswith("legendre"):
        tail = name[len("legendre"):].lstrip("-_")
        try:
            K = int(tail) if tail else 15
        except ValueError:
            raise UnsupportedOrder(f"unknown quadrature rule {name!r}") from None
        return legendre_rule(K)
    raise UnsupportedOrder(f"unknown quadrature rule {name!r}")


def scale_to_interval(rule, a, b):
    """Map a rule on [-1, 1] to [a, b]."""
    if not b > a:
        raise EmptyInterval(f"empty interval [{a}, {b}]")
    half = (b - a) / 2.0
    return ScaledRule((rule.nodes + 1.0) * half + a, rule.weights * half, a, b)


def scaled_nodes(rule, t):
    """Vectorized scaling to [0, t] for an array of upper limits.

    Returns node and weight arrays of shape ``t.shape + (K,)``.
    """
    t = np.asarray(t, dtype=float)[..., None]
    return (rule.nodes + 1.0) / 2.0 * t, rule.weights / 2.0 * t


def integrate(rule, f):
    """Weighted sum of ``f`` over the nodes of a scaled rule."""
    vals = np.asarray(f(rule.nodes), dtype=float)
    if vals.shape != rule.nodes.shape:
        vals = np.broadcast_to(vals, rule.nodes.shape)
    if not np.all(np.isfinite(vals)):
        raise NonFiniteIntegrand("integrand is not finite at every node")
    return float(np.dot(rule.weights, vals))
