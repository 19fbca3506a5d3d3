import json

import numpy as np
import pytest

from jointfuse.diagnostics import N_BINS, export_plot_data, gelman_rubin, summarize
from jointfuse.errors import DegenerateChainsWarning, UnknownParameter


def _classic_rhat(x):
    # textbook formula, evaluated directly
    m, n = x.shape
    W = np.mean([np.var(c, ddof=1) for c in x])
    B = n * np.var(x.mean(axis=1), ddof=1)
    V = (n - 1) / n * W + B / n + B / (m * n)
    return np.sqrt(V / W)


def test_identical_chains():
    c = np.random.default_rng(0).normal(size=500)
    assert abs(gelman_rubin(np.stack([c, c, c])) - 1.0) < 1e-12


def test_separated_chains():
    rng = np.random.default_rng(1)
    x = np.stack([rng.normal(0, 1, 10000), rng.normal(10, 1, 10000)])
    r = gelman_rubin(x)
    assert r > 3
    # agrees with the textbook value up to the (n-1)/n factor in W
    assert abs(r - _classic_rhat(x) * np.sqrt(10000 / 9999)) < 1e-10


def test_independent_chains():
    rng = np.random.default_rng(2)
    for _ in range(20):
        r = gelman_rubin(rng.normal(size=(2, 10000)))
        assert 1.0 <= r <= 1.05


def test_affine_invariance():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(3, 400)) + np.array([[0.0], [0.3], [-0.2]])
    r = gelman_rubin(x)
    for a, b in ((2.5, -7.0), (-0.01, 3.0), (1e4, 1e3)):
        assert abs(gelman_rubin(a * x + b) - r) < 1e-10


def test_split_detects_trend():
    n = 1000
    trend = np.linspace(0, 5, n)
    rng = np.random.default_rng(4)
    x = np.stack([trend + rng.normal(size=n), trend + rng.normal(size=n)])
    assert gelman_rubin(x) < 1.01
    assert gelman_rubin(x, split=True) > 1.5


def test_degenerate_chains():
    assert gelman_rubin(np.ones((2, 10))) == 1.0
    with pytest.warns(DegenerateChainsWarning):
        assert gelman_rubin(np.stack([np.zeros(10), np.ones(10)])) == np.inf
    with pytest.raises(ValueError):
        gelman_rubin(np.zeros((1, 10)))
    with pytest.raises(ValueError):
        gelman_rubin(np.zeros((2, 3)))


def test_constant_chain_summary():
    x = np.full((200, 1), 0.1 + 0.2)
    s = summarize([x, x], ["c"])
    assert s.mean[0] == 0.1 + 0.2 and s.sd[0] == 0.0
    assert s.q025[0] == s.q975[0] == 0.1 + 0.2
    assert s.rhat[0] == 1.0


def test_type7_quantile():
    x = np.arange(1.0, 101.0).reshape(-1, 1)
    s = summarize([x], ["v"])
    # h = 99 * 0.025 = 2.475 -> 3 + 0.475 * (4 - 3)
    assert abs(s.q025[0] - 3.475) < 1e-12
    assert abs(s.q975[0] - 97.525) < 1e-12
    assert abs(s.sd[0] - np.sqrt(841.6666666666666)) < 1e-12
    assert s.rhat is None


def test_duplicate_chains():
    rng = np.random.default_rng(5)
    c = rng.normal(size=(300, 2))
    one = summarize([c], ["a", "b"])
    two = summarize([c, c], ["a", "b"])
    n = 300
    np.testing.assert_allclose(two.mean, one.mean, rtol=1e-14)
    # pooled SD has 2n - 1 degrees of freedom instead of n - 1
    np.testing.assert_allclose(two.sd, one.sd * np.sqrt(2 * (n - 1) / (2 * n - 1)), rtol=1e-13)
    assert np.all(np.abs(two.rhat - 1.0) < 1e-12)


def test_summary_invariants():
    rng = np.random.default_rng(6)
    chains = [rng.standard_cauchy(size=(500, 3)) for _ in range(3)]
    s = summarize(chains, ["a", "b", "c"])
    assert np.all(s.q025 <= s.q975)
    assert np.all(s.rhat >= 1 - 1e-6)


def test_unknown_parameter():
    x = np.zeros((10, 2))
    with pytest.raises(UnknownParameter):
        summarize([x, x], ["a", "b"], parameters=["z"])
    s = summarize([x, x], ["a", "b"], parameters=["b"])
    assert s.names == ["b"]
    with pytest.raises(UnknownParameter):
        s.row("a")


def test_json_and_table():
    rng = np.random.default_rng(7)
    chains = [rng.normal(size=(50, 2)) for _ in range(2)]
    s = summarize(chains, ["beta[1][1]", "gamma[1]"])
    d = json.loads(s.to_json())
    assert d["n_chains"] == 2 and d["n_draws_per_chain"] == 50
    assert set(d["parameters"]["gamma[1]"]) == {"mean", "sd", "q2.5", "q97.5", "rhat"}
    lines = s.to_table().splitlines()
    assert lines[0].split() == ["Parameter", "Est.", "SD.", "2.5%", "97.5%", "R-hat"]
    assert len(lines) == 3 and lines[2].startswith("gamma[1]")
    assert lines[1].split()[1] == f"{s.mean[0]:.3f}"


def test_summary_accepts_chain_outputs():
    class C:
        def __init__(self, d):
            self.draws = d

    rng = np.random.default_rng(8)
    a, b = rng.normal(size=(40, 1)), rng.normal(size=(40, 1))
    s1 = summarize([C(a), C(b)], ["x"])
    s2 = summarize([a, b], ["x"])
    assert s1.to_json() == s2.to_json()
    with pytest.raises(ValueError):
        summarize([a, b[:30]], ["x"])


def test_trace_rows():
    x = np.random.default_rng(9).normal(size=(3, 25, 4))
    header, rows = export_plot_data(list(x), list("abcd"), "trace")
    assert header == ("chain", "iteration", "parameter", "value")
    assert len(rows) == 3 * 25 * 4
    assert rows[0] == (1, 1, "a", x[0, 0, 0])


def test_density_rows():
    x = np.random.default_rng(10).normal(size=(3, 200, 2))
    header, rows = export_plot_data(list(x), ["a", "b"], "density")
    assert len(rows) == 2 * 3 * N_BINS
    for nm in ("a", "b"):
        for c in (1, 2, 3):
            counts = [r[5] for r in rows if r[0] == nm and r[1] == c]
            assert sum(counts) == 200
        edges = {(r[3], r[4]) for r in rows if r[0] == nm}
        assert len(edges) == N_BINS  # shared across chains


def test_density_constant_parameter():
    x = np.ones((2, 10, 1))
    _, rows = export_plot_data(list(x), ["a"], "density")
    assert sum(r[5] for r in rows) == 20
    assert rows[0][3] == 0.5 and rows[-1][4] == 1.5


def test_caterpillar_rows():
    rng = np.random.default_rng(11)
    names = [f"gamma[{j}]" for j in range(1, 6)]
    chains = [rng.normal(size=(100, 5)) for _ in range(2)]
    header, rows = export_plot_data(chains, names, "caterpillar")
    assert header == ("parameter", "mean", "q2.5", "q97.5")
    assert [r[0] for r in rows] == names
    s = summarize(chains, names)
    for i, r in enumerate(rows):
        assert r[1:] == (s.mean[i], s.q025[i], s.q975[i])


def test_unknown_plot_kind():
    with pytest.raises(ValueError):
        export_plot_data([np.zeros((4, 1))], ["a"], "violin")
