import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from boise.dpmm import (
    Clustering,
    Hyperparams,
    canonical_labels,
    choose_hyperparams,
    cr_log_prior,
    gibbs_conditional,
    load_ensemble,
    prior_mean_clusters,
    sample_posterior,
)
from boise.errors import DegenerateDataError
from boise.matrix import from_array
from boise.oracle import enumerate_partitions, exact_posterior

from conftest import binary_matrices, hyperparams


def _loop_counts(labels, x0, hyper):
    """Count actives/inactives cell by cell, skipping unobserved entries."""
    K = max(labels) + 1
    a = [[hyper.alpha0] * x0.n for _ in range(K)]
    b = [[hyper.beta0] * x0.n for _ in range(K)]
    for i, k in enumerate(labels):
        for j in range(x0.n):
            if x0.observed[i, j]:
                if x0.values[i, j] == 1:
                    a[k][j] += 1
                else:
                    b[k][j] += 1
    return np.array(a), np.array(b)


class TestHyperparams:
    @pytest.mark.parametrize("field", ["m0", "alpha0", "beta0"])
    def test_must_be_positive(self, field):
        kw = {"m0": 1.0, "alpha0": 1.0, "beta0": 1.0, field: 0.0}
        with pytest.raises(ValueError):
            Hyperparams(**kw)


class TestClustering:
    def test_canonical_labels(self):
        assert canonical_labels([5, 5, 2, 7, 2]) == (0, 0, 1, 2, 1)

    def test_counts_skip_missing(self):
        x0 = from_array([[1, 0, 1], [1, 1, 0], [0, 0, 0]], observed=[[True, False, True], [True, True, True], [False, True, True]])
        h = Hyperparams(1.0, 0.3, 0.6)
        c = Clustering.from_labels([1, 1, 0], x0, h)
        a, b = _loop_counts(list(c.labels), x0, h)
        np.testing.assert_allclose(c.counts_a, a)
        np.testing.assert_allclose(c.counts_b, b)
        assert list(c.sizes) == [2, 1]

    @given(binary_matrices(max_m=6, missing=True), st.integers(0, 10**6))
    def test_sizes_and_counts_invariant(self, x0, seed):
        rng = np.random.default_rng(seed)
        labels = canonical_labels(rng.integers(0, 3, x0.m))
        h = Hyperparams(1.0, 0.5, 0.5)
        c = Clustering.from_labels(labels, x0, h)
        assert c.sizes.sum() == x0.m
        assert np.all(c.sizes > 0)
        assert set(c.labels) == set(range(c.K))
        a, b = _loop_counts(list(c.labels), x0, h)
        np.testing.assert_array_equal(c.counts_a, a)
        np.testing.assert_array_equal(c.counts_b, b)


class TestCrPrior:
    def test_single_target(self):
        assert cr_log_prior((0,), 3.7) == 0.0

    def test_two_targets_unit_mass(self):
        assert math.exp(cr_log_prior((0, 0), 1.0)) == pytest.approx(0.5, abs=1e-15)
        assert math.exp(cr_log_prior((0, 1), 1.0)) == pytest.approx(0.5, abs=1e-15)

    @pytest.mark.parametrize("m", range(1, 7))
    @pytest.mark.parametrize("m0", [0.3, 1.0, 2.0, 7.5])
    def test_normalized_over_partitions(self, m, m0):
        total = math.fsum(math.exp(cr_log_prior(tuple(p), m0)) for p in enumerate_partitions(m))
        assert total == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("m,m0", [(3, 2.0), (5, 0.7), (6, 4.0)])
    def test_prior_mean_clusters_matches_enumeration(self, m, m0):
        parts = enumerate_partitions(m)
        expected = math.fsum(math.exp(cr_log_prior(tuple(p), m0)) * (max(p) + 1) for p in parts)
        assert prior_mean_clusters(m, m0) == pytest.approx(expected, rel=1e-12)


class TestGibbsConditional:
    def test_identical_ones_join_probability(self):
        x0 = from_array([[1], [1]])
        p = gibbs_conditional(1, [0, 0], x0, Hyperparams(1.0, 1.0, 1.0))
        assert p[1] == pytest.approx(4 / 7, abs=1e-15)
        assert p[0] == pytest.approx(3 / 7, abs=1e-15)

    def test_unobserved_cell_contributes_nothing(self):
        h = Hyperparams(1.0, 1.0, 1.0)
        full = from_array([[1], [1]])
        masked = from_array([[1, 0], [1, 1]], observed=[[True, True], [True, False]])
        np.testing.assert_allclose(gibbs_conditional(1, [0, 0], full, h), gibbs_conditional(1, [0, 0], masked.take_compounds([0]), h))
        p = gibbs_conditional(1, [0, 0], masked, h)
        np.testing.assert_allclose(p, [3 / 7, 4 / 7], atol=1e-15)

    def test_tiny_mass_always_joins(self):
        x0 = from_array([[1, 0], [0, 1]])
        p = gibbs_conditional(1, [0, 0], x0, Hyperparams(1e-12, 1.0, 1.0))
        assert p[1] == pytest.approx(1.0, abs=1e-9)

    @settings(max_examples=40, deadline=None)
    @given(binary_matrices(min_m=2, max_m=5), hyperparams, st.integers(0, 10**6))
    def test_matches_exact_posterior_ratios(self, x0, hyper, seed):
        """Full conditional equals the exact joint posterior restricted to i's moves."""
        rng = np.random.default_rng(seed)
        i = int(rng.integers(x0.m))
        labels = list(canonical_labels(rng.integers(0, 3, x0.m)))
        post = exact_posterior(x0, hyper)
        others = [labels[r] for r in range(x0.m) if r != i]
        order = list(dict.fromkeys(others))
        new_label = max(labels) + 1
        moves = [new_label] + order
        mass = []
        for k in moves:
            lab = labels.copy()
            lab[i] = k
            mass.append(post[canonical_labels(lab)])
        expected = np.array(mass) / sum(mass)
        np.testing.assert_allclose(gibbs_conditional(i, labels, x0, hyper), expected, rtol=1e-9, atol=1e-13)


class TestSampler:
    def test_single_target(self):
        ens = sample_posterior(from_array([[1, 0, 1]]), Hyperparams(1, 1, 1), n_samples=5, thin=2, burn_in=3)
        assert all(c.labels == (0,) for c in ens)

    def test_shape_of_run(self):
        x0 = from_array(np.eye(4, dtype=int))
        ens = sample_posterior(x0, Hyperparams(1, 0.5, 0.5), n_samples=7, thin=3, burn_in=5, seed=1)
        assert len(ens) == 7
        assert len(ens.trace) == 5 + 7 * 3
        assert all(1 <= k <= 4 for k in ens.trace)

    def test_seed_determinism(self, small_x0, hyper):
        a = sample_posterior(small_x0, hyper, 20, 2, burn_in=10, seed=42)
        b = sample_posterior(small_x0, hyper, 20, 2, burn_in=10, seed=42)
        assert a.to_dict() == b.to_dict()

    def test_count_cache_coherent_every_sweep(self):
        rng = np.random.default_rng(5)
        x0 = from_array(rng.integers(0, 2, (12, 9)), observed=rng.random((12, 9)) > 0.2)
        sample_posterior(x0, Hyperparams(2.0, 0.3, 0.9), 30, 1, burn_in=20, seed=3, check_counts=True)

    def test_singleton_init(self, small_x0, hyper):
        ens = sample_posterior(small_x0, hyper, 3, 1, burn_in=0, seed=0, init="singletons")
        assert ens.init == "singletons"

    @pytest.mark.slow
    def test_partition_frequencies_match_exact(self):
        x0 = from_array([[1, 0], [1, 1], [0, 1], [0, 0]])
        h = Hyperparams(1.0, 0.5, 0.5)
        ens = sample_posterior(x0, h, 20000, 1, burn_in=200, seed=11)
        freq = {}
        for c in ens:
            freq[c.labels] = freq.get(c.labels, 0) + 1
        exact = exact_posterior(x0, h)
        tv = 0.5 * sum(abs(freq.get(k, 0) / len(ens) - p) for k, p in exact.items())
        assert tv < 0.05


class TestMissingData:
    def test_garbage_at_unobserved_cells_is_ignored(self):
        rng = np.random.default_rng(9)
        v = rng.integers(0, 2, (8, 6))
        obs = rng.random((8, 6)) > 0.3
        a = from_array(v, obs)
        b = from_array(np.where(obs, v, 1 - v), obs)
        h = Hyperparams(1.0, 0.4, 0.6)
        ea = sample_posterior(a, h, 25, 2, burn_in=10, seed=4)
        eb = sample_posterior(b, h, 25, 2, burn_in=10, seed=4)
        assert ea.to_dict() == eb.to_dict()

    def test_fully_missing_column_equals_deleted_column(self):
        rng = np.random.default_rng(2)
        v = rng.integers(0, 2, (7, 5))
        obs = np.ones((7, 5), dtype=bool)
        obs[:, 2] = False
        h = Hyperparams(1.0, 0.4, 0.6)
        masked = sample_posterior(from_array(v, obs), h, 25, 2, burn_in=10, seed=8)
        deleted = sample_posterior(from_array(np.delete(v, 2, axis=1)), h, 25, 2, burn_in=10, seed=8)
        assert [c.labels for c in masked] == [c.labels for c in deleted]
        assert masked.trace == deleted.trace


class TestEnsembleFile:
    def test_round_trip(self, tmp_path, small_x0, hyper):
        ens = sample_posterior(small_x0, hyper, 10, 2, burn_in=5, seed=3)
        p = tmp_path / "e.json"
        ens.save(p)
        back = load_ensemble(p, small_x0)
        assert back.to_dict() == ens.to_dict()
        assert json.loads(p.read_text())["seed"] == 3

    def test_wrong_targets_rejected(self, tmp_path, small_x0, hyper):
        ens = sample_posterior(small_x0, hyper, 3, 1, burn_in=0)
        p = tmp_path / "e.json"
        ens.save(p)
        other = from_array(small_x0.values, targets=["a", "b", "c", "d"])
        with pytest.raises(ValueError):
            load_ensemble(p, other)


class TestEmpiricalBayes:
    def test_half_ones(self):
        x0 = from_array([[1, 0], [0, 1], [1, 0], [0, 1]])
        h = choose_hyperparams(x0, m0_grid=(1.0, 2.0), pilot_sweeps=30, pilot_burn_in=10)
        assert h.alpha0 == 0.5 and h.beta0 == 0.5
        assert h.m0 in (1.0, 2.0)

    def test_rate_uses_observed_cells(self):
        x0 = from_array([[1, 1], [0, 1]], observed=[[True, False], [True, True]])
        h = choose_hyperparams(x0, m0_grid=(1.0,), pilot_sweeps=20, pilot_burn_in=5)
        assert h.alpha0 == pytest.approx(2 / 3)

    def test_constant_matrix_is_degenerate(self):
        with pytest.raises(DegenerateDataError):
            choose_hyperparams(from_array([[1, 1], [1, 1]]))

    def test_picks_closest_prior_mean(self):
        rng = np.random.default_rng(0)
        x0 = from_array(rng.integers(0, 2, (10, 6)))
        grid = (0.5, 3.0, 30.0)
        h = choose_hyperparams(x0, m0_grid=grid, pilot_sweeps=120, pilot_burn_in=20, seed=1)
        gaps = []
        for m0 in grid:
            ens = sample_posterior(x0, Hyperparams(m0, h.alpha0, h.beta0), 100, 1, burn_in=20, seed=1)
            gaps.append(abs(prior_mean_clusters(10, m0) - np.mean(ens.trace[20:])))
        assert h.m0 == grid[int(np.argmin(gaps))]
