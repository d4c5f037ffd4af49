import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from cdfit import exact
from cdfit.errors import EnumerationLimitError, MLENotFoundError, UnreachableSupportError
from cdfit.kernels import BlockDistribution, KernelPlan
from cdfit.models import BinaryPairwiseModel, ErgmModel
from conftest import LADDER_EDGES

ETA_L = np.array([-0.3, 0.8])
# plain-loop enumeration of the ladder (tests/oracles.py brute_law)
LOGZ_L = 7.381850908038616
MU_L = np.array([6.060721475317748, 6.182428597292616])


def ladder_logw(eta):
    def logw(y):
        g = oracles.pairwise_stats(list(y), [0] * 8, [(a, b, 1) for a, b in LADDER_EDGES], 2)
        return oracles.dot(eta, g)
    return logw


def test_independent_partition_closed_form():
    model = BinaryPairwiseModel.independent(7)
    for theta in (-1.3, 0.0, 0.4):
        assert exact.partition(model, [theta]) == pytest.approx((1 + math.exp(theta)) ** 7,
                                                                rel=1e-13)


def test_edges_only_partition_closed_form():
    model = ErgmModel(5, ("edges",))
    assert exact.log_partition(model, [0.7]) == pytest.approx(10 * math.log1p(math.exp(0.7)),
                                                              rel=1e-13)


def test_ladder_frozen_values(ladder):
    assert exact.log_partition(ladder, ETA_L) == pytest.approx(LOGZ_L, abs=1e-12)
    np.testing.assert_allclose(exact.exact_mean_params(ladder, ETA_L), MU_L, atol=1e-12)


def test_ladder_matches_brute_oracle(ladder):
    eta = np.array([0.4, -0.6])
    states, probs, lz = oracles.brute_law(8, ladder_logw(eta))
    assert exact.log_partition(ladder, eta) == pytest.approx(lz, abs=1e-12)
    law = exact.exact_distribution(ladder, eta)
    np.testing.assert_allclose(law.probs, probs, atol=1e-14)


def test_capped_ergm_matches_brute_oracle(ergm4):
    eta = np.array([-0.2, 0.5, 0.3, 0.4])

    def logw(y):
        if oracles.naive_max_degree(4, y) > 2:
            return -math.inf
        return oracles.dot(eta, oracles.naive_ergm_stats(4, y, ergm4.names, [0, 0, 1, 1], 2 / 3))

    states, probs, lz = oracles.brute_law(6, logw)
    assert exact.log_partition(ergm4, eta) == pytest.approx(lz, abs=1e-12)
    law = exact.exact_distribution(ergm4, eta)
    nz = [p for p in probs if p > 0]
    np.testing.assert_allclose(law.probs, nz, atol=1e-14)
    mu = np.array([sum(p * v for p, v in zip(probs, col)) for col in zip(*[
        oracles.naive_ergm_stats(4, s, ergm4.names, [0, 0, 1, 1], 2 / 3) for s in states])])
    np.testing.assert_allclose(exact.exact_mean_params(ergm4, eta), mu, atol=1e-12)


def test_covariance_is_hessian_of_log_partition(ladder):
    h = 1e-4
    H = np.zeros((2, 2))
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        H[i] = (exact.exact_mean_params(ladder, ETA_L + e)
                - exact.exact_mean_params(ladder, ETA_L - e)) / (2 * h)
    np.testing.assert_allclose(exact.exact_covariance(ladder, ETA_L), H, atol=1e-7)


def test_enumeration_limit():
    with pytest.raises(EnumerationLimitError):
        exact.log_partition(BinaryPairwiseModel.independent(21), [0.0])


# ---------------------------------------------------------------------------
# MLE
# ---------------------------------------------------------------------------

def test_exact_mle_solves_moment_equation(ladder, ladder_y):
    from cdfit.core import suff_stats
    g = suff_stats(ladder, ladder_y)
    eta = exact.exact_mle(ladder, g)
    states, probs, _ = oracles.brute_law(8, ladder_logw(eta))
    mu = np.zeros(2)
    for s, p in zip(states, probs):
        mu += p * np.array(oracles.pairwise_stats(list(s), [0] * 8,
                                                  [(a, b, 1) for a, b in LADDER_EDGES], 2))
    np.testing.assert_allclose(mu, g, atol=1e-9)


def test_exact_mle_boundary(ladder):
    with pytest.raises(MLENotFoundError):
        exact.exact_mle(ladder, [0.0, 0.0])
    with pytest.raises(MLENotFoundError):
        # eight sites on: maximal coupling count, a vertex of the hull
        exact.exact_mle(ladder, [8.0, 10.0])


# ---------------------------------------------------------------------------
# chain laws
# ---------------------------------------------------------------------------

def test_chain_law_matches_matrix_power(ladder, ladder_y):
    plan = KernelPlan("random_scan_gibbs", 5)
    T = exact.kernel_step_matrix(ladder, ETA_L, plan.with_k(1))
    start = np.zeros(T.codes.size)
    start[np.searchsorted(T.codes, exact.encode(ladder_y))] = 1.0
    want = start @ T.power(5).matrix
    law = exact.chain_law(ladder, ETA_L, plan, ladder_y)
    np.testing.assert_allclose(law[T.codes], want, atol=1e-13)


def test_kernel_moments_consistent_with_law(ladder, ladder_y):
    plan = KernelPlan("blocked_gibbs", 3, blocks=BlockDistribution.uniform(
        [(0, 1, 2), (3, 4, 5), (6, 7)]))
    law = exact.chain_law(ladder, ETA_L, plan, ladder_y)
    Y = ((np.arange(256)[:, None] >> np.arange(8)) & 1)
    G = ladder.stats(Y.astype(np.uint8))
    mu, cov, within = exact.kernel_moments(ladder, ETA_L, plan, ladder_y)
    np.testing.assert_allclose(mu, law @ G, atol=1e-12)
    D = G - mu
    np.testing.assert_allclose(cov, (D * law[:, None]).T @ D, atol=1e-12)
    # within-component covariance never exceeds the total
    assert np.all(np.linalg.eigvalsh(cov - within) > -1e-12)


def test_kl_decay_monotone_for_reversible_kernel(ladder, ladder_y):
    kl = exact.kl_decay_curve(ladder, ETA_L, KernelPlan("random_scan_gibbs"), ladder_y, 60)
    assert np.all(np.diff(kl) <= 1e-12)
    assert kl[-1] < 0.05 * kl[0]


def test_kl_divergence_basics():
    assert exact.kl_divergence([0.5, 0.5], [0.5, 0.5]) == 0
    assert exact.kl_divergence([1.0, 0.0], [0.0, 1.0]) == math.inf


# ---------------------------------------------------------------------------
# chain-support conditionals
# ---------------------------------------------------------------------------

def test_support_distribution_random_scan_k1(ladder):
    d = exact.support_distribution(ladder, KernelPlan("random_scan_gibbs", 1))
    assert d == pytest.approx({(i,): 1 / 8 for i in range(8)})


def test_support_distribution_sums_to_one(ergm4):
    for plan in (KernelPlan("random_scan_gibbs", 3), KernelPlan("node_s", 2, s=2)):
        assert sum(exact.support_distribution(ergm4, plan).values()) == pytest.approx(1.0)


def test_q_star_single_site_is_conditional(ladder, ladder_y):
    plan = KernelPlan("random_scan_gibbs", 1)
    for i in range(8):
        qs = exact.q_star_distribution(ladder, ETA_L, plan, ladder_y, (i,))
        assert qs.pi == pytest.approx(1 / 8)
        cond = exact.conditional_table(ladder, ETA_L, (i,), ladder_y)
        np.testing.assert_allclose(qs.probs, cond, atol=1e-14)


def test_q_star_blocked_k1_is_block_conditional(ladder, ladder_y):
    plan = KernelPlan("blocked_gibbs", 1, blocks=BlockDistribution.uniform([(0, 1, 4), (2, 3)]))
    qs = exact.q_star_distribution(ladder, ETA_L, plan, ladder_y, (0, 1, 4))
    np.testing.assert_allclose(qs.probs, exact.conditional_table(ladder, ETA_L, (0, 1, 4),
                                                                 ladder_y), atol=1e-14)
    assert qs.probs.sum() == pytest.approx(1.0)


def test_q_star_unreachable(ladder, ladder_y):
    with pytest.raises(UnreachableSupportError):
        exact.q_star_distribution(ladder, ETA_L, KernelPlan("random_scan_gibbs", 1), ladder_y,
                                  (0, 1))


@settings(max_examples=15)
@given(st.lists(st.floats(-1.5, 1.5), min_size=2, max_size=2),
       st.lists(st.floats(-1.5, 1.5), min_size=2, max_size=2))
def test_augmented_divergence_forms_agree(eta_p, eta_q):
    model = BinaryPairwiseModel.homogeneous(4, [(0, 1), (1, 2), (2, 3), (3, 0)])
    plan = KernelPlan("random_scan_gibbs", 3)
    for a in exact.support_distribution(model, plan):
        three, single = exact.augmented_divergence_terms(model, model, eta_p, eta_q, plan, a)
        assert three == pytest.approx(single, abs=1e-9)
        assert single >= -1e-12


def test_augmented_divergence_zero_at_block_conditional():
    # one exact block update from any start reproduces q(y_a | y_rest)
    model = BinaryPairwiseModel.homogeneous(4, [(0, 1), (1, 2), (2, 3), (3, 0)])
    eta = np.array([0.2, 0.6])
    plan = KernelPlan("blocked_gibbs", 1, blocks=BlockDistribution.uniform([(0, 1), (2, 3)]))
    for a in [(0, 1), (2, 3)]:
        assert exact.augmented_divergence(model, model, eta, eta, plan, a) == pytest.approx(
            0.0, abs=1e-12)
    assert exact.combined_divergence(model, model, eta, eta, plan) == pytest.approx(0.0,
                                                                                   abs=1e-12)


def test_cd_objective_single_site_is_pseudo_likelihood(ladder, ladder_y):
    plan = KernelPlan("random_scan_gibbs", 1)

    def stats_fn(y):
        return oracles.pairwise_stats(y, [0] * 8, [(a, b, 1) for a, b in LADDER_EDGES], 2)

    want = oracles.pl_objective(list(ladder_y), ETA_L, stats_fn) / 8
    assert exact.cd_objective(ladder, ETA_L, plan, ladder_y) == pytest.approx(want, abs=1e-12)
