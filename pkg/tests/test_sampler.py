import warnings

import numpy as np
import pytest
from scipy import stats

from conftest import BENCH_BETA, BENCH_D, benchmark_spec, zoo_scenario
from jointfuse.diagnostics import gelman_rubin
from jointfuse.errors import ConfigError
from jointfuse.likelihood import JointModel
from jointfuse.model import (
    Dataset,
    EventSpec,
    MarkerObservations,
    MarkerSpec,
    ModelSpec,
    zero_tail_mask,
)
from jointfuse.sampler import (
    McmcConfig,
    conjugate_sigma2_update,
    conjugate_wishart_update,
    cure_class_full_conditional,
    log_gamma_draw,
    run,
    run_chain,
    wishart_draw,
)
from jointfuse.simulate import simulate_dataset


def batch_se(x, n_batches=40):
    """Monte Carlo standard error of a mean by batch means."""
    x = np.asarray(x, dtype=float)
    m = len(x) // n_batches
    means = x[: m * n_batches].reshape(n_batches, m).mean(axis=1)
    return means.std(ddof=1) / np.sqrt(n_batches)


@pytest.fixture(scope="module")
def small():
    sc = zoo_scenario("gauss-constant-cv", n=60, seed=2)
    return sc.spec, simulate_dataset(sc)


def test_config_defaults_and_invariants():
    c = McmcConfig()
    assert (c.n_chains, c.n_iter, c.n_burnin, c.n_thin) == (3, 20000, 10000, 10)
    assert c.n_keep == 1000
    with pytest.raises(ConfigError):
        McmcConfig(n_iter=100, n_burnin=100)
    with pytest.raises(ConfigError):
        McmcConfig(n_thin=0)
    with pytest.raises(ConfigError):
        McmcConfig(n_chains=0)


def test_run_deterministic(small):
    spec, data = small
    cfg = McmcConfig(n_chains=2, n_iter=300, n_thin=2, seed=5)
    a, b = run(spec, data, cfg), run(spec, data, cfg)
    for x, y in zip(a, b):
        assert np.array_equal(x.draws, y.draws)
    assert not np.array_equal(a[0].draws, a[1].draws)
    assert a[0].draws.shape == (75, len(a[0].names))
    assert np.all(np.isfinite(a[0].draws))


def test_chain_id_streams(small):
    spec, data = small
    cfg = McmcConfig(n_chains=3, n_iter=200, n_thin=1, seed=5)
    chains = run(spec, data, cfg)
    for cid in (2, 0, 1):
        alone = run_chain(spec, data, cfg, chain_id=cid)
        assert np.array_equal(alone.draws, chains[cid].draws)


def test_thinning_offline_equivalence(small):
    spec, data = small
    full = run_chain(spec, data, McmcConfig(n_iter=400, n_burnin=100, n_thin=1, seed=8))
    thin = run_chain(spec, data, McmcConfig(n_iter=400, n_burnin=100, n_thin=7, seed=8))
    assert np.array_equal(full.draws[6::7], thin.draws)


def test_adaptation_frozen_after_burnin(small):
    spec, data = small
    out = run_chain(spec, data, McmcConfig(n_iter=600, n_burnin=300, seed=1))
    assert out.scales_at_burnin.keys() == out.scales_final.keys()
    for name, (scale, cov) in out.scales_at_burnin.items():
        s2, c2 = out.scales_final[name]
        assert np.array_equal(scale, s2) and np.array_equal(cov, c2)


def test_monitor_selection(small):
    spec, data = small
    out = run_chain(spec, data, McmcConfig(n_iter=50, n_burnin=10, n_thin=1, monitor=("beta", "gamma")))
    assert out.names == ["beta[1][1]", "beta[1][2]", "beta[1][3]", "gamma[1]"]


def test_sigma2_update_posterior_mean():
    rng = np.random.default_rng(0)
    N = 10000
    res = rng.standard_normal(N)
    res *= np.sqrt(4.0 / np.mean(res ** 2))  # SSR / N = 4 exactly
    draws = np.array([conjugate_sigma2_update(res, 0.01, 0.01, rng) for _ in range(100000)])
    exact = (0.01 + 0.5 * res @ res) / (0.01 + N / 2 - 1)
    assert abs(draws.mean() - exact) < 3 * draws.std() / np.sqrt(len(draws))
    assert abs(draws.mean() - 4.0) < 0.01


def test_sigma2_update_prior_draw():
    rng = np.random.default_rng(1)
    draws = np.array([conjugate_sigma2_update(np.zeros(0), 3.0, 2.0, rng) for _ in range(100000)])
    assert np.all(draws > 0)
    assert stats.kstest(draws, stats.invgamma(3.0, scale=2.0).cdf).pvalue > 1e-3


def test_sigma2_update_small_shape_positive():
    rng = np.random.default_rng(2)
    draws = np.array([conjugate_sigma2_update(np.zeros(0), 0.01, 0.01, rng) for _ in range(20000)])
    assert np.all(draws > 0) and np.all(np.isfinite(draws))


def test_log_gamma_draw_small_shape():
    rng = np.random.default_rng(3)
    x = np.array([log_gamma_draw(0.05, rng) for _ in range(50000)])
    # P(G <= e^q) against scipy's regularized incomplete gamma
    for q in (-60.0, -20.0, -3.0, 0.0):
        p = stats.gamma(0.05).cdf(np.exp(q))
        assert abs(np.mean(x <= q) - p) < 4 * np.sqrt(p * (1 - p) / len(x))


def test_wishart_draw_against_scipy():
    rng = np.random.default_rng(4)
    scale = np.array([[2.0, 0.6], [0.6, 1.0]])
    W = np.array([wishart_draw(5.0, scale, rng) for _ in range(40000)])
    ref = stats.wishart(df=5.0, scale=scale)
    np.testing.assert_allclose(W.mean(axis=0), ref.mean(), rtol=0.02)
    np.testing.assert_allclose(W.var(axis=0), ref.var(), rtol=0.05)
    assert stats.kstest(W[:, 0, 0] / 2.0, stats.chi2(5).cdf).pvalue > 1e-3


def test_wishart_update_prior_draw():
    rng = np.random.default_rng(5)
    R = np.array([[1.0, 0.2], [0.2, 0.5]])
    prec = np.array([np.linalg.inv(conjugate_wishart_update(np.zeros((0, 2)), R, 4.0, rng))
                     for _ in range(40000)])
    np.testing.assert_allclose(prec.mean(axis=0), 4.0 * np.linalg.inv(R), rtol=0.03)


def test_wishart_update_large_n():
    rng = np.random.default_rng(6)
    D0 = np.array([[1.0, 0.5], [0.5, 2.0]])
    b = rng.multivariate_normal(np.zeros(2), D0, size=100000)
    D = np.array([conjugate_wishart_update(b, np.eye(2), 2.0, rng) for _ in range(200)])
    assert np.all(np.abs(D.mean(axis=0) - D0) <= 0.02 * np.abs(D0))
    for x in D:
        assert np.array_equal(x, x.T)
        np.linalg.cholesky(x)


def test_cure_full_conditional_examples():
    p = 0.37
    v = cure_class_full_conditional(np.log(p), np.log1p(-p), 0.0, -4.2, -4.2)
    assert abs(v - p) < 1e-12
    assert cure_class_full_conditional(-np.inf, 0.0, -0.3, -1.0, -2.0) == 0.0
    # against the direct ratio
    v = cure_class_full_conditional(np.log(0.6), np.log(0.4), -0.8, -3.0, -2.5)
    num = 0.6 * np.exp(-0.8 - 3.0)
    assert abs(v - num / (num + 0.4 * np.exp(-2.5))) < 1e-14


def test_cure_constraints_preserved():
    sc = zoo_scenario("cure", n=120, seed=4)
    data = simulate_dataset(sc)
    out = run_chain(sc.spec, data, McmcConfig(n_iter=400, n_burnin=100, n_thin=2, seed=3,
                                              record_classes=True))
    ev = data.status == 1
    tail = zero_tail_mask(sc.spec, data)
    assert tail.any() and ev.any()
    assert np.all(out.classes[:, ev] == 1)
    assert np.all(out.classes[:, tail] == 0)
    free = ~ev & ~tail
    assert len(np.unique(out.classes[:, free])) == 2


def _prior_only_spec():
    return ModelSpec((MarkerSpec("y", fixed=("intercept", "time"), random=()),))


def test_prior_only_run():
    spec = _prior_only_spec()
    out = run_chain(spec, Dataset.empty(["y"]), McmcConfig(n_iter=60000, n_burnin=5000, n_thin=1, seed=1))
    x = out.draws[:, out.names.index("beta[1][1]")]
    for p in (0.025, 0.5, 0.975):
        q = stats.norm(0, np.sqrt(1000)).ppf(p)
        ind = (x <= q).astype(float)
        assert abs(ind.mean() - p) <= 3 * batch_se(ind)


def test_degenerate_data():
    n = 30
    subj = np.repeat(np.arange(n), 3)
    t = np.tile([0.0, 0.5, 1.0], n)
    data = Dataset(np.arange(1, n + 1), np.full(n, 1.5), np.zeros(n, int), {"w1": np.zeros(n)},
                   {"y": MarkerObservations(subj, t, np.ones(3 * n), {})})
    spec = ModelSpec((MarkerSpec("y", fixed=("intercept", "time"), random=("intercept",)),),
                     EventSpec(covariates=("w1",)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        out = run_chain(spec, data, McmcConfig(n_iter=2000, seed=0))
    assert np.all(np.isfinite(out.draws))
    assert np.median(out.draws[:, out.names.index("sigma2[1]")]) < 0.05


def test_normal_normal_calibration():
    # y ~ N(b0 + b1 x, s2) with s2 and the event part held fixed
    rng = np.random.default_rng(11)
    n = 80
    x = rng.normal(size=n)
    y = 1.0 - 0.7 * x + rng.normal(scale=0.8, size=n)
    data = Dataset(np.arange(1, n + 1), np.full(n, 1.0), np.zeros(n, int), {"x": x},
                   {"y": MarkerObservations(np.arange(n), np.zeros(n), y, {})})
    spec = ModelSpec((MarkerSpec("y", fixed=("intercept", "x"), random=()),))
    out = run_chain(spec, data, McmcConfig(n_iter=40000, n_burnin=4000, n_thin=1, seed=2,
                                           fixed=("sigma2", "survival")))
    held = out.draws[:, out.names.index("sigma2[1]")]
    assert np.all(held == held[0])
    s2 = held[0]
    X = np.column_stack([np.ones(n), x])
    cov = np.linalg.inv(X.T @ X / s2 + np.eye(2) / 1000.0)
    mean = cov @ (X.T @ y / s2)
    B = out.draws[:, :2]
    for j in range(2):
        assert abs(B[:, j].mean() - mean[j]) <= 3 * batch_se(B[:, j])
        sq = (B[:, j] - mean[j]) ** 2
        assert abs(sq.mean() - cov[j, j]) <= 3 * batch_se(sq)


def test_log_posterior_cache_consistent(small):
    spec, data = small
    out = run_chain(spec, data, McmcConfig(n_iter=200, n_burnin=100, seed=4))
    m = JointModel(spec, data)
    assert np.isfinite(m.log_posterior(out.final_state))


# ---------------------------------------------------------------- benchmark


@pytest.fixture(scope="module")
def bench_fit(bench_data):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return run(benchmark_spec(), bench_data, McmcConfig(n_chains=3, n_iter=20000, seed=1))


@pytest.mark.slow
def test_benchmark_within_three_sd(bench_fit):
    names = bench_fit[0].names
    pooled = np.vstack([c.draws for c in bench_fit])
    truth = {f"beta[1][{j + 1}]": v for j, v in enumerate(BENCH_BETA)}
    truth.update({"sigma2[1]": 1.0, "gamma[1]": -0.5})
    for nm, v in truth.items():
        x = pooled[:, names.index(nm)]
        assert abs(x.mean() - v) <= 3 * x.std(ddof=1), nm


@pytest.mark.slow
def test_benchmark_rhat(bench_fit):
    stack = np.stack([c.draws for c in bench_fit])
    for j, nm in enumerate(bench_fit[0].names):
        assert gelman_rubin(stack[:, :, j]) <= 1.1, nm


@pytest.mark.slow
def test_benchmark_acceptance_rates(bench_fit):
    for c in bench_fit:
        for block, rate in c.acceptance.items():
            assert 0.2 <= rate <= 0.7, (c.chain_id, block, rate)


@pytest.mark.slow
def test_benchmark_covariance_truth(bench_fit):
    names = bench_fit[0].names
    pooled = np.vstack([c.draws for c in bench_fit])
    for (i, j) in ((1, 1), (1, 2), (2, 2)):
        x = pooled[:, names.index(f"Sigma[{i}][{j}]")]
        assert abs(x.mean() - BENCH_D[i - 1, j - 1]) <= 3 * x.std(ddof=1)
