import numpy as np
import pytest

from clustdiag.bootstrap import (
    BootstrapConfig, WildClusterKernel, all_sign_patterns, bootstrap_pvalue, wcr_ci,
    wcr_pvalue,
)
from clustdiag.data import prepare_design
from clustdiag.exceptions import DesignError
from clustdiag.ols import fit_ols

from conftest import random_design_arrays


def dense_t(y, X, ids, j, beta0):
    N, k = X.shape
    beta = np.linalg.lstsq(X, y, rcond=None)[0]
    u = y - X @ beta
    bread = np.linalg.inv(X.T @ X)
    labels = np.unique(ids)
    G = labels.size
    meat = sum(np.outer(X[ids == g].T @ u[ids == g], X[ids == g].T @ u[ids == g]) for g in labels)
    V = G * (N - 1) / ((G - 1) * (N - k)) * bread @ meat @ bread
    return (beta[j] - beta0) / np.sqrt(V[j, j])


def brute_bootstrap(y, X, ids, j, beta0, V):
    """Generate each bootstrap sample explicitly and refit it."""
    others = np.delete(X, j, axis=1)
    target = y - beta0 * X[:, j]
    coef = np.linalg.lstsq(others, target, rcond=None)[0]
    fitted = others @ coef + beta0 * X[:, j]
    u = target - others @ coef
    out = []
    for b in range(V.shape[1]):
        ystar = fitted + u * V[ids, b]
        out.append(dense_t(ystar, X, ids, j, beta0))
    return np.array(out)


def small_design(seed, G=5, beta0=0.0):
    rng = np.random.default_rng(seed)
    y, X, ids = random_design_arrays(rng, G=G, k=3, min_ng=3, max_ng=8)
    return prepare_design(y, X, ids, j=1), y, X, ids


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("beta0", [0.0, 0.7])
def test_closed_form_matches_explicit_refits(seed, beta0):
    d, y, X, ids = small_design(seed)
    V = all_sign_patterns(d.G)
    kernel = WildClusterKernel(d)
    fast = kernel.bootstrap_t(kernel.restricted_scores(y, beta0), V)[0]
    slow = brute_bootstrap(y, X, ids, 1, beta0, V)
    assert np.allclose(fast, slow, rtol=1e-9, atol=1e-12)
    t_hat = kernel.t_stat(y, beta0)[0][0]
    assert t_hat == pytest.approx(dense_t(y, X, ids, 1, beta0), rel=1e-10)


def test_enumeration_for_four_clusters():
    d, y, X, ids = small_design(11, G=4)
    res = wcr_pvalue(d, config=BootstrapConfig(B=999, seed=1))
    assert res.enumerated and res.B == 16
    # v and -v give the same |t*|
    assert len(np.unique(np.round(np.abs(res.t_stats), 10))) <= 8
    slow = brute_bootstrap(y, X, ids, 1, 0.0, all_sign_patterns(4))
    t_hat = dense_t(y, X, ids, 1, 0.0)
    assert res.p_value == pytest.approx(np.mean(np.abs(slow) >= np.abs(t_hat) * (1 - 1e-10)))


def test_exact_null_fit_gives_p_one():
    rng = np.random.default_rng(0)
    ids = np.repeat(np.arange(6), 4)
    X = np.column_stack([np.ones(24), rng.normal(size=24)])
    d = prepare_design(np.full(24, 2.5), X, ids, j=1)
    res = wcr_pvalue(d, config=BootstrapConfig(B=99, seed=3, enumerate=False))
    assert res.t_hat == 0.0 and np.all(res.t_stats == 0.0) and res.p_value == 1.0


def test_reproducible_and_granular():
    d, *_ = small_design(4, G=12)
    cfg = BootstrapConfig(B=199, seed=42)
    a, b = wcr_pvalue(d, config=cfg), wcr_pvalue(d, config=cfg)
    assert a.p_value == b.p_value and np.array_equal(a.t_stats, b.t_stats)
    assert not a.enumerated
    assert (a.p_value * 199) == pytest.approx(round(a.p_value * 199))


def test_sign_flip_invariance():
    d, y, X, ids = small_design(6, G=10)
    flipped = prepare_design(-y, X, ids, j=1)
    cfg = BootstrapConfig(B=299, seed=5)
    assert wcr_pvalue(d, config=cfg).p_value == wcr_pvalue(flipped, config=cfg).p_value


def test_pvalue_convention():
    assert bootstrap_pvalue(2.0, np.array([-3.0, 1.0, 2.0, -0.5])) == 0.5
    assert bootstrap_pvalue(0.0, np.zeros(5)) == 1.0


def test_ci_contains_estimate_and_endpoints_straddle_level():
    d, *_ = small_design(8, G=14)
    model = fit_ols(d)
    cfg = BootstrapConfig(B=399, seed=9, ci=True, ci_tol=1e-6)
    res = wcr_pvalue(d, model, cfg)
    lo, hi = res.ci
    b = model.beta_hat[1]
    assert lo < b < hi
    step = 1e-4 * (hi - lo)
    for end, outward in ((lo, -step), (hi, step)):
        inside = wcr_pvalue(d, model, BootstrapConfig(B=399, seed=9, beta_0j=end - outward))
        outside = wcr_pvalue(d, model, BootstrapConfig(B=399, seed=9, beta_0j=end + outward))
        assert inside.p_value > 0.05 >= outside.p_value


def test_ci_symmetric_for_symmetric_scores():
    # mirrored clusters make the problem symmetric about the estimate; with
    # all 2**12 sign patterns the bootstrap distribution is symmetric too
    rng = np.random.default_rng(1)
    half = rng.normal(size=(6, 5))
    y = np.concatenate([half, -half]).ravel()
    ids = np.repeat(np.arange(12), 5)
    d = prepare_design(y, np.ones((60, 1)), ids)
    lo, hi = wcr_ci(d, config=BootstrapConfig(B=4096, ci_tol=1e-7))
    assert abs(lo + hi) <= 1e-5 * (hi - lo)


def test_open_ended_ci_for_two_clusters():
    d = prepare_design([1.0, 2, 5, 7], np.ones((4, 1)), [0, 0, 1, 1])
    lo, hi = wcr_ci(d, config=BootstrapConfig(B=4))
    assert lo == -np.inf and hi == np.inf


def test_config_validation():
    with pytest.raises(ValueError):
        BootstrapConfig(B=0)
    with pytest.raises(ValueError):
        BootstrapConfig(weight_kind="mammen")
    d = prepare_design([1.0, 2, 3], np.ones((3, 1)), [0, 0, 0])
    with pytest.raises(DesignError):
        wcr_pvalue(d)


def test_batched_outcomes_match_single_runs():
    d, y, X, ids = small_design(2, G=8)
    kernel = WildClusterKernel(d)
    rng = np.random.default_rng(0)
    Y = np.column_stack([y, rng.normal(size=y.size)])
    V = np.sign(rng.normal(size=(2, 8, 50)))
    both = kernel.bootstrap_t(kernel.restricted_scores(Y), V)
    for r in range(2):
        one = kernel.bootstrap_t(kernel.restricted_scores(Y[:, r]), V[r])
        assert np.allclose(both[r], one[0])
