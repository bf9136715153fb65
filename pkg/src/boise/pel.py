"""Posterior expected loss of informer sets.

For a clustering C of the training targets, a new target i* joins cluster k
with probability m_k / (m + m0) or founds a new cluster (index 0, counts
alpha0 / beta0) with probability m0 / (m + m0).  Given intermediate outcomes
x_A on informer compounds A this gives

* the link distribution p_k over clusters 0..K,
* the conditional mean ``theta_tilde`` of every compound's activity, and
* the predictive mass p(x_A | x0, C).

Posterior means given x_A are obtained by re-weighting the clusterings drawn
from p(C | x0) with p(x_A | x0, C) (self-normalized importance weights), so no
resampling is needed per outcome.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .dpmm import Clustering, PosteriorEnsemble
from .errors import ZeroMassError

# entries of (outcomes x samples x clusters) processed per block
_BLOCK = 2_000_000


@dataclass(frozen=True)
class InformerAssay:
    """Informer compounds (ordered, distinct) and their binary outcomes."""

    informers: tuple = ()
    outcomes: tuple = ()

    def __post_init__(self):
        informers = tuple(int(j) for j in self.informers)
        outcomes = tuple(int(x) for x in self.outcomes)
        if len(informers) != len(outcomes):
            raise ValueError("informers and outcomes must have equal length")
        if len(set(informers)) != len(informers):
            raise ValueError("duplicate informer compound")
        if any(j < 0 for j in informers):
            raise ValueError("informer indices must be nonnegative")
        if any(x not in (0, 1) for x in outcomes):
            raise ValueError("outcomes must be 0 or 1")
        object.__setattr__(self, "informers", informers)
        object.__setattr__(self, "outcomes", outcomes)

    def __len__(self):
        return len(self.informers)

    def check(self, n: int):
        if any(j >= n for j in self.informers):
            raise ValueError(f"informer index out of range for {n} compounds")


@dataclass(frozen=True, eq=False)
class LinkDistribution:
    """Probabilities that the new target joins cluster 0 (new), 1, ..., K."""

    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if p.ndim != 1 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("link probabilities must be nonnegative and sum to 1")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)


def _cluster_table(clustering: Clustering):
    """Counts and log prior link weights with the new cluster at index 0."""
    h = clustering.hyper
    n = clustering.counts_a.shape[1]
    a = np.vstack([np.full(n, h.alpha0), clustering.counts_a])
    b = np.vstack([np.full(n, h.beta0), clustering.counts_b])
    sizes = np.concatenate([[h.m0], clustering.sizes.astype(float)])
    log_pi = np.log(sizes) - math.log(clustering.m + h.m0)
    return a, b, log_pi


def _log_link_joint(clustering: Clustering, assay: InformerAssay):
    a, b, log_pi = _cluster_table(clustering)
    A = list(assay.informers)
    x = np.asarray(assay.outcomes, dtype=float)
    lp1 = np.log(a[:, A]) - np.log(a[:, A] + b[:, A])
    lp0 = np.log(b[:, A]) - np.log(a[:, A] + b[:, A])
    return log_pi + lp1 @ x + lp0 @ (1.0 - x)


def sample_intermediate(clustering: Clustering, informers: Sequence[int], rng) -> np.ndarray:
    """Draw outcomes on ``informers`` for a new target given a clustering."""
    a, b, log_pi = _cluster_table(clustering)
    pi = np.exp(log_pi)
    k = int(rng.choice(len(pi), p=pi / pi.sum()))
    A = list(informers)
    p = a[k, A] / (a[k, A] + b[k, A])
    return (rng.random(len(A)) < p).astype(np.int8)


def link_distribution(clustering: Clustering, assay: InformerAssay) -> LinkDistribution:
    """p_k proportional to (size weight) x (Bernoulli likelihood of x_A)."""
    assay.check(clustering.counts_a.shape[1])
    lw = _log_link_joint(clustering, assay)
    p = np.exp(lw - logsumexp(lw))
    return LinkDistribution(p / p.sum())


def theta_tilde(clustering: Clustering, assay: InformerAssay, j: int) -> float:
    """E(theta_{i*, j} | C, x0, x_A)."""
    a, b, _ = _cluster_table(clustering)
    p = link_distribution(clustering, assay).p
    if j in assay.informers:
        x = assay.outcomes[assay.informers.index(j)]
        means = (a[:, j] + x) / (a[:, j] + b[:, j] + 1.0)
    else:
        means = a[:, j] / (a[:, j] + b[:, j])
    return float(p @ means)


def p_xa_given_x0_C(clustering: Clustering, assay: InformerAssay) -> float:
    """Predictive probability of the outcomes x_A given the clustering."""
    assay.check(clustering.counts_a.shape[1])
    return float(math.exp(logsumexp(_log_link_joint(clustering, assay))))


class PackedEnsemble:
    """Padded array view of an ensemble for vectorized outcome scoring.

    Identical clusterings are merged and their weights added, which leaves
    every self-normalized estimate unchanged.
    """

    def __init__(self, ensemble: PosteriorEnsemble):
        self.ensemble = ensemble
        sw = ensemble.sample_weights()
        index, uniq, weight = {}, [], []
        self.sample_slot = np.empty(len(ensemble), dtype=int)
        for s, c in enumerate(ensemble.samples):
            key = c.labels
            if key not in index:
                index[key] = len(uniq)
                uniq.append(c)
                weight.append(0.0)
            weight[index[key]] += sw[s]
            self.sample_slot[s] = index[key]
        self.clusterings = uniq
        h = ensemble.hyper
        n = ensemble.n_compounds
        S = len(uniq)
        K = max(c.K for c in uniq) + 1
        a = np.full((S, K, n), h.alpha0)
        b = np.full((S, K, n), h.beta0)
        log_pi = np.full((S, K), -np.inf)
        for s, c in enumerate(uniq):
            ca, cb, lp = _cluster_table(c)
            a[s, : c.K + 1] = ca
            b[s, : c.K + 1] = cb
            log_pi[s, : c.K + 1] = lp
        self.n = n
        self.a = a
        self.ab = a + b
        self.mean = a / self.ab
        self.lp1 = np.log(a) - np.log(self.ab)
        self.lp0 = np.log(b) - np.log(self.ab)
        self.log_pi = log_pi
        with np.errstate(divide="ignore"):
            self.log_sw = np.log(np.asarray(weight))

    def _block(self, D):
        S, K = self.log_pi.shape
        return max(1, _BLOCK // max(1, S * K))

    def posterior_means(self, informers, X):
        """theta_hat for every outcome row of ``X`` and log p(x_A | x0).

        Returns arrays of shape (D, n) and (D,).
        """
        A = list(informers)
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != len(A):
            raise ValueError("outcome rows must have one entry per informer")
        D = X.shape[0]
        theta = np.empty((D, self.n))
        log_px = np.empty(D)
        step = self._block(D)
        for lo in range(0, D, step):
            hi = min(D, lo + step)
            theta[lo:hi], log_px[lo:hi] = self._posterior_block(A, X[lo:hi])
        return theta, log_px

    def _log_joint(self, A, X):
        if A:
            lp1 = self.lp1[:, :, A]
            lp0 = self.lp0[:, :, A]
            ll = np.einsum("da,ska->dsk", X, lp1 - lp0) + lp0.sum(axis=2)[None]
        else:
            ll = np.zeros((X.shape[0],) + self.log_pi.shape)
        return self.log_pi[None] + ll

    def _posterior_block(self, A, X):
        D = X.shape[0]
        log_q = self._log_joint(A, X) + self.log_sw[None, :, None]
        log_px = logsumexp(log_q.reshape(D, -1), axis=1)
        with np.errstate(invalid="ignore"):
            q = np.exp(log_q - log_px[:, None, None])
        S, K = self.log_pi.shape
        theta = q.reshape(D, S * K) @ self.mean.reshape(S * K, self.n)
        if A:
            num = self.a[None, :, :, A] + X[:, None, None, :]
            den = self.ab[None, :, :, A] + 1.0
            theta[:, A] = np.einsum("dsk,dska->da", q, num / den)
        return theta, log_px

    def predictive_rows(self, rng, draws: int = 1) -> np.ndarray:
        """One full predictive row per original sample and draw.

        Restricting a row to any informer set A gives a draw of x_A from
        p(x_A | x0, C) for that sample, so one set of rows serves every A.
        """
        samples = self.ensemble.samples
        S = len(samples)
        rows = np.empty((S * draws, self.n), dtype=np.int8)
        pi = np.exp(self.log_pi)
        for s in range(S):
            u = self.sample_slot[s]
            p_link = pi[u] / pi[u].sum()
            for d in range(draws):
                k = int(rng.choice(len(p_link), p=p_link))
                rows[s * draws + d] = rng.random(self.n) < self.mean[u, k]
        return rows


def _check_ensemble_assay(ensemble, assay):
    assay.check(ensemble.n_compounds)


def _zero_mass(assay):
    return ZeroMassError(
        f"outcome {dict(zip(assay.informers, assay.outcomes))} has zero estimated predictive mass"
    )


def theta_hat(ensemble: PosteriorEnsemble, assay: InformerAssay, j: int | None = None, packed=None):
    """Recycled estimate of E(theta_{i*, j} | x0, x_A).

    Returns the full length-n vector when ``j`` is None.
    """
    _check_ensemble_assay(ensemble, assay)
    packed = packed or PackedEnsemble(ensemble)
    theta, log_px = packed.posterior_means(assay.informers, [assay.outcomes])
    if not np.isfinite(log_px[0]):
        raise _zero_mass(assay)
    return theta[0] if j is None else float(theta[0, j])


def _loss_of_top(theta, n_T):
    """Sum of (1 - theta) over the n_T largest entries, per row."""
    theta = np.atleast_2d(theta)
    top = -np.sort(-theta, axis=1)[:, :n_T]
    return (1.0 - top).sum(axis=1)


def pel2(ensemble: PosteriorEnsemble, assay: InformerAssay, n_T: int, packed=None) -> float:
    """Posterior expected loss of the optimal top set given x_A."""
    from .ranker import top_set

    th = theta_hat(ensemble, assay, packed=packed)
    if not 1 <= n_T <= len(th):
        raise ValueError("n_T must be between 1 and the number of compounds")
    T = top_set(th, n_T)
    return float(np.sum(1.0 - th[list(T)]))


def all_outcomes(k: int) -> np.ndarray:
    """Every binary outcome vector of length ``k``, one per row (2^k x k)."""
    return np.array(list(itertools.product((0, 1), repeat=k)), dtype=np.int8).reshape(2**k, k)


def pel1(
    ensemble: PosteriorEnsemble,
    informers: Sequence[int],
    n_T: int,
    rng=None,
    rows=None,
    draws: int = 1,
    outcomes: str = "sampled",
    packed=None,
) -> float:
    """Monte Carlo PEL_1 of an informer set.

    ``outcomes="sampled"`` draws ``draws`` predictive outcome vectors per
    clustering (or restricts the supplied ``rows``), evaluates PEL_2 once per
    distinct vector and averages with multiplicities.  ``"exhaustive"`` sums
    PEL_2 over all 2^|A| outcomes weighted by their recycled predictive
    probability.
    """
    packed = packed or PackedEnsemble(ensemble)
    A = [int(j) for j in informers]
    if len(set(A)) != len(A):
        raise ValueError("duplicate informer compound")
    if not 1 <= n_T <= packed.n:
        raise ValueError("n_T must be between 1 and the number of compounds")
    if outcomes == "exhaustive":
        if len(A) > 16:
            raise ValueError("exhaustive outcomes limited to 16 informers")
        X = all_outcomes(len(A))
        theta, log_px = packed.posterior_means(A, X)
        w = np.exp(log_px - logsumexp(log_px))
        return float(w @ _loss_of_top(theta, n_T))
    if outcomes != "sampled":
        raise ValueError(f"unknown outcomes mode {outcomes!r}")
    if ensemble.weights is not None and rows is None:
        raise ValueError("sampled outcomes need an unweighted ensemble")
    if rows is None:
        if rng is None:
            raise ValueError("pass rng or pre-drawn rows")
        rows = packed.predictive_rows(rng, draws)
    XA = np.asarray(rows)[:, A]
    if not A:
        X, counts = np.zeros((1, 0), dtype=np.int8), np.array([XA.shape[0]])
    else:
        X, counts = np.unique(XA, axis=0, return_counts=True)
    theta, log_px = packed.posterior_means(A, X)
    # every outcome was drawn from some clustering, so its mass is positive
    assert np.all(np.isfinite(log_px)), "sampled outcome with zero predictive mass"
    losses = _loss_of_top(theta, n_T)
    return float(counts @ losses / counts.sum())
