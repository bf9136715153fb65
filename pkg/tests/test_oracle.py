import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from boise.dpmm import Hyperparams, sample_posterior
from boise.errors import GuardError
from boise.matrix import from_array
from boise.oracle import (
    ExactModel,
    bell_number,
    enumerate_partitions,
    exact_pel1,
    exact_posterior,
    exact_theta_hat,
    no_cluster_outcome_prob,
    no_cluster_pel1,
    no_cluster_pel1_quadrature,
    no_cluster_posterior_means,
    no_cluster_quadrature,
)
from boise.pel import InformerAssay, pel1

from conftest import binary_matrices, hyperparams

BELL = [1, 1, 2, 5, 15, 52, 203, 877, 4140, 21147]


def _matrix_with_column_sums(sums, m):
    """Complete m-row binary matrix whose column j has sums[j] leading ones."""
    x = np.zeros((m, len(sums)), dtype=int)
    for j, s in enumerate(sums):
        x[:s, j] = 1
    return from_array(x)


class TestPartitions:
    @pytest.mark.parametrize("m", range(1, 10))
    def test_counts_are_bell_numbers(self, m):
        assert len(enumerate_partitions(m)) == BELL[m] == bell_number(m)

    def test_bell_twelve(self):
        assert bell_number(12) == 4_213_597

    @pytest.mark.parametrize("m", [1, 3, 5, 7])
    def test_rows_are_canonical_and_distinct(self, m):
        parts = enumerate_partitions(m)
        assert len({tuple(p) for p in parts}) == len(parts)
        for p in parts:
            seen = -1
            for c in p:
                assert c <= seen + 1
                seen = max(seen, c)

    def test_guard(self):
        with pytest.raises(GuardError):
            enumerate_partitions(13)


class TestExactPosterior:
    def test_single_target(self):
        post = exact_posterior(from_array([[1, 0]]), Hyperparams(2.0, 0.5, 0.5))
        assert post == {(0,): pytest.approx(1.0)}

    def test_two_identical_ones_rows(self):
        post = exact_posterior(from_array([[1, 1], [1, 1]]), Hyperparams(1.0, 1.0, 1.0))
        merged = 0.5 * (1 / 3) ** 2
        split = 0.5 * (1 / 2) ** 4
        assert post[(0, 0)] == pytest.approx(merged / (merged + split), abs=1e-14)
        assert post[(0, 0)] == pytest.approx(0.64, abs=1e-14)

    @settings(max_examples=30, deadline=None)
    @given(binary_matrices(max_m=5, missing=True), hyperparams)
    def test_normalized_and_matches_loop(self, x0, hyper):
        post = exact_posterior(x0, hyper)
        assert math.fsum(post.values()) == pytest.approx(1.0, abs=1e-12)
        # unnormalized mass rebuilt with math.lgamma one cluster and cell at a time
        logw = {}
        for lab in post:
            K = max(lab) + 1
            lw = K * math.log(hyper.m0) + math.lgamma(hyper.m0) - math.lgamma(x0.m + hyper.m0)
            for k in range(K):
                members = [i for i, c in enumerate(lab) if c == k]
                lw += math.lgamma(len(members))
                for j in range(x0.n):
                    s = sum(int(x0.values[i, j]) for i in members if x0.observed[i, j])
                    f = sum(1 - int(x0.values[i, j]) for i in members if x0.observed[i, j])
                    a, b = hyper.alpha0, hyper.beta0
                    lw += (
                        math.lgamma(a + s) + math.lgamma(b + f) - math.lgamma(a + b + s + f)
                        - math.lgamma(a) - math.lgamma(b) + math.lgamma(a + b)
                    )
            logw[lab] = lw
        top = max(logw.values())
        z = math.fsum(math.exp(v - top) for v in logw.values())
        for lab, p in post.items():
            assert p == pytest.approx(math.exp(logw[lab] - top) / z, rel=1e-10, abs=1e-15)


class TestExactPel:
    def test_empty_informers(self, small_x0, hyper):
        th = exact_theta_hat(small_x0, hyper, InformerAssay())
        assert exact_pel1(small_x0, hyper, [], 2) == pytest.approx(2 - np.sort(th)[::-1][:2].sum(), abs=1e-14)

    def test_predictive_masses_sum_to_one(self, small_x0, hyper):
        model = ExactModel(small_x0, hyper)
        total = math.fsum(model.predictive([0, 2, 3], xs)[0] for xs in itertools.product((0, 1), repeat=3))
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_theta_hat_averages_back_to_prior_mean(self, small_x0, hyper):
        model = ExactModel(small_x0, hyper)
        prior = model.predictive([], [])[1]
        mixed = sum(p * th for p, th in (model.predictive([1], [x]) for x in (0, 1)))
        np.testing.assert_allclose(mixed, prior, atol=1e-12)

    def test_guard_on_large_instances(self):
        with pytest.raises(GuardError):
            ExactModel(from_array(np.zeros((12, 2), dtype=int)), Hyperparams(1, 1, 1))

    @settings(max_examples=40, deadline=None)
    @given(binary_matrices(min_m=2, max_m=5, min_n=3, max_n=6), hyperparams, st.data())
    def test_risk_never_increases_along_chains(self, x0, hyper, data):
        n_T = data.draw(st.integers(1, x0.n))
        j, k = data.draw(st.permutations(range(x0.n)))[:2]
        model = ExactModel(x0, hyper)
        chain = [model.pel1([], n_T), model.pel1([j], n_T), model.pel1([j, k], n_T)]
        assert chain[1] <= chain[0] + 1e-10
        assert chain[2] <= chain[1] + 1e-10

    @settings(max_examples=30, deadline=None)
    @given(binary_matrices(min_m=2, max_m=4, min_n=3, max_n=6), hyperparams, st.data())
    def test_top_set_rule_beats_every_subset(self, x0, hyper, data):
        model = ExactModel(x0, hyper)
        n_T = data.draw(st.integers(1, x0.n))
        A = data.draw(st.permutations(range(x0.n)))[: data.draw(st.integers(0, 2))]
        for xs in itertools.product((0, 1), repeat=len(A)):
            _, th = model.predictive(A, xs)
            rule = model.pel2(A, xs, n_T)
            for T in itertools.combinations(range(x0.n), n_T):
                assert rule <= np.sum(1 - th[list(T)]) + 1e-12

    @pytest.mark.slow
    def test_agrees_with_monte_carlo(self):
        x0 = from_array([[1, 0, 1, 0], [1, 1, 0, 0], [0, 0, 1, 1], [0, 1, 1, 1]])
        h = Hyperparams(1.0, 0.5, 0.5)
        ens = sample_posterior(x0, h, 5000, 1, burn_in=200, seed=1)
        mc = pel1(ens, [0, 3], 2, rng=np.random.default_rng(2))
        assert mc == pytest.approx(exact_pel1(x0, h, [0, 3], 2), abs=0.02)

    def test_full_model_can_couple_outcomes(self):
        """Under shared clustering, informer outcomes are not independent."""
        x0 = from_array([[1, 1, 0, 0], [1, 1, 0, 0], [0, 0, 1, 1], [0, 0, 1, 1]])
        model = ExactModel(x0, Hyperparams(1.0, 0.5, 0.5))
        joint = model.predictive([0, 2], [1, 1])[0]
        marg = model.predictive([0], [1])[0] * model.predictive([2], [1])[0]
        assert abs(joint - marg) > 1e-3


class TestNoClustering:
    def test_posterior_means(self):
        x0 = _matrix_with_column_sums([0, 2, 3], 4)
        th = no_cluster_posterior_means(x0, 1.0, 2.0, [1], [1])
        np.testing.assert_allclose(th, [1 / 7, 4 / 8, 4 / 7])

    def test_needs_complete_matrix(self):
        x0 = from_array([[1, 0]], observed=[[True, False]])
        with pytest.raises(ValueError):
            no_cluster_pel1(x0, 1.0, 1.0, [0], 1)

    @pytest.mark.parametrize("alpha,beta", [(0.5, 0.5), (1.0, 3.0), (2.5, 0.7)])
    def test_closed_form_matches_quadrature(self, alpha, beta):
        x0 = _matrix_with_column_sums([0, 1, 3, 3, 5, 2], 6)
        for A in ([], [2], [4, 1], [0, 3, 5]):
            for n_T in (1, 2, 4):
                closed = no_cluster_pel1(x0, alpha, beta, A, n_T)
                numeric = no_cluster_pel1_quadrature(x0, alpha, beta, A, n_T)
                assert closed == pytest.approx(numeric, abs=1e-12)

    @pytest.mark.parametrize("alpha,beta", [(0.5, 0.5), (1.0, 3.0)])
    def test_constant_risk_without_ties(self, alpha, beta):
        x0 = _matrix_with_column_sums([0, 1, 2, 3, 4], 5)
        for n_T in (1, 2, 3):
            singles = [no_cluster_pel1(x0, alpha, beta, [j], n_T) for j in range(5)]
            assert max(singles) - min(singles) <= 1e-12
            pairs = [no_cluster_pel1(x0, alpha, beta, list(A), n_T) for A in itertools.combinations(range(5), 2)]
            assert max(pairs) - min(pairs) <= 1e-12

    def test_constant_top_set_gives_equal_risk(self):
        """When every outcome of two sets leads to the same top set, the risks agree."""
        x0 = _matrix_with_column_sums([0, 1, 4, 5], 6)
        alpha, beta = 0.5, 0.5
        for A1, A2 in (([0], [1]), ([0], [3])):
            tops = set()
            for A in (A1, A2):
                for x in (0, 1):
                    th = no_cluster_posterior_means(x0, alpha, beta, A, [x])
                    tops.add(tuple(sorted(np.argsort(-th)[:2])))
            assert len(tops) == 1
            assert no_cluster_pel1(x0, alpha, beta, A1, 2) == pytest.approx(no_cluster_pel1(x0, alpha, beta, A2, 2), abs=1e-12)

    @pytest.mark.parametrize("alpha,beta", [(0.5, 0.5), (1.0, 1.0), (2.0, 0.3)])
    def test_frequent_hitter_counterexample(self, alpha, beta):
        # column sums s_{m-2} = s_{m-1} = 3 < s_m = 5 over 6 targets
        n_targets = 6
        x0 = _matrix_with_column_sums([1, 3, 3, 5], n_targets)
        s, s_m = 3, 5
        N = alpha + beta + n_targets
        fh = no_cluster_pel1(x0, alpha, beta, [3], 2)
        best = no_cluster_pel1(x0, alpha, beta, [2], 2)
        # closed forms for n_T minus each risk
        assert 2 - fh == pytest.approx(((alpha + s_m) + (alpha + s)) / N, abs=1e-12)
        expected = (alpha + s_m) / N + (alpha + s) / N * ((alpha + s + 1) / (N + 1) + (beta + n_targets - s) / N)
        assert 2 - best == pytest.approx(expected, abs=1e-12)
        assert best < fh
        assert no_cluster_pel1_quadrature(x0, alpha, beta, [2], 2) == pytest.approx(best, abs=1e-12)

    @pytest.mark.parametrize("A,k", [([0], 2), ([1, 3], 0), ([0, 2], 4)])
    def test_outcomes_independent_without_clustering(self, A, k):
        x0 = _matrix_with_column_sums([1, 4, 2, 0, 3], 5)
        for xs in itertools.product((0, 1), repeat=len(A) + 1):
            joint, _ = no_cluster_quadrature(x0, 0.7, 1.3, A + [k], xs)
            prod = no_cluster_outcome_prob(x0, 0.7, 1.3, A, xs[:-1]) * no_cluster_outcome_prob(x0, 0.7, 1.3, [k], xs[-1:])
            assert joint == pytest.approx(prod, abs=1e-10)
