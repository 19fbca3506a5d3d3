import numpy as np
import pytest

from jointfuse.errors import EmptyInterval, NonFiniteIntegrand, UnsupportedOrder
from jointfuse.quadrature import (
    QuadratureRule,
    get_rule,
    integrate,
    kronrod15_rule,
    legendre_rule,
    scale_to_interval,
    scaled_nodes,
)


def test_legendre_two_points():
    r = legendre_rule(2)
    np.testing.assert_allclose(r.nodes, [-1 / np.sqrt(3), 1 / np.sqrt(3)], rtol=0, atol=1e-15)
    np.testing.assert_allclose(r.weights, [1.0, 1.0], rtol=0, atol=1e-15)


def test_legendre15_high_monomial():
    r = legendre_rule(15)
    assert abs(np.dot(r.weights, r.nodes ** 28) - 2 / 29) < 1e-12
    assert abs(r.weights.sum() - 2.0) < 1e-13


@pytest.mark.parametrize("K", [2, 3, 7, 15, 20, 33, 64])
def test_legendre_exact_to_degree_2k_minus_1(K):
    r = legendre_rule(K)
    for p in range(2 * K):
        exact = 0.0 if p % 2 else 2.0 / (p + 1)
        assert abs(np.dot(r.weights, r.nodes ** p) - exact) < 1e-10
    assert np.all(r.weights > 0)


def test_legendre_matches_numpy():
    # numpy's Golub-Welsch rule as an independent check
    for K in (5, 15, 40):
        x, w = np.polynomial.legendre.leggauss(K)
        r = legendre_rule(K)
        np.testing.assert_allclose(r.nodes, x, atol=1e-14)
        np.testing.assert_allclose(r.weights, w, atol=1e-14)


@pytest.mark.parametrize("K", [1, 0, 65, 2.5])
def test_legendre_order_range(K):
    with pytest.raises(UnsupportedOrder):
        legendre_rule(K)


def test_kronrod_constants():
    r = kronrod15_rule()
    assert len(r) == 15
    assert abs(r.weights.sum() - 2.0) < 1e-12
    assert abs(np.dot(r.weights, np.exp(r.nodes)) - (np.e - 1 / np.e)) < 1e-10
    assert np.all(r.weights > 0)
    # embedded 7-point Gauss nodes are the odd-position abscissae
    np.testing.assert_allclose(r.nodes[1::2], legendre_rule(7).nodes, atol=1e-15)
    for p in range(23):
        exact = 0.0 if p % 2 else 2.0 / (p + 1)
        assert abs(np.dot(r.weights, r.nodes ** p) - exact) < 1e-12


def test_get_rule():
    assert get_rule("kronrod15").kind == "kronrod15"
    assert len(get_rule("legendre20")) == 20
    assert len(get_rule("legendre")) == 15
    with pytest.raises(UnsupportedOrder):
        get_rule("simpson")


def test_scale_endpoints_and_measure():
    ends = QuadratureRule(np.array([-1.0, 1.0]), np.ones(2), "ends")
    s = scale_to_interval(ends, 0.0, 2.0)
    np.testing.assert_allclose(s.nodes, [0.0, 2.0])
    assert s.a == 0.0 and s.b == 2.0
    for t in (0.3, 1.0, 7.5):
        s = scale_to_interval(kronrod15_rule(), 0.0, t)
        assert abs(s.weights.sum() - t) < 1e-14 * max(t, 1)


def test_scaled_square_integral():
    s = scale_to_interval(legendre_rule(15), 0.0, 3.0)
    assert abs(integrate(s, lambda x: x ** 2) - 9.0) < 1e-12


def test_integrate_examples():
    s = scale_to_interval(kronrod15_rule(), 0.0, 2.0)
    assert integrate(s, lambda x: np.zeros_like(x)) == 0.0
    assert abs(integrate(s, lambda x: 3.5) - 7.0) < 1e-13
    assert abs(integrate(s, lambda x: np.exp(0.5 * x)) - 2 * (np.e - 1)) < 1e-10


def test_scaling_consistency():
    rule = kronrod15_rule()
    t = 2.7

    def f(s):
        return np.sin(s) * np.exp(-s)

    direct = integrate(scale_to_interval(rule, 0.0, t), f)
    pulled = np.dot(rule.weights, f((rule.nodes + 1) * t / 2) * t / 2)
    assert abs(direct - pulled) < 1e-12


def test_empty_interval():
    with pytest.raises(EmptyInterval):
        scale_to_interval(kronrod15_rule(), 1.0, 1.0)


def test_nonfinite_integrand():
    s = scale_to_interval(kronrod15_rule(), 0.0, 1.0)
    with pytest.raises(NonFiniteIntegrand):
        integrate(s, lambda x: np.where(x > 0.5, np.inf, x))


def test_scaled_nodes_vectorized():
    rule = kronrod15_rule()
    t = np.array([[0.5, 1.0], [2.0, 3.0]])
    x, w = scaled_nodes(rule, t)
    assert x.shape == (2, 2, 15)
    np.testing.assert_allclose(w.sum(axis=-1), t, rtol=1e-14)
