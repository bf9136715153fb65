"""Exact reference computations for small instances.

Everything here is computed by total enumeration and shares no code with the
Monte Carlo path:

* posterior masses of partitions use the closed-form Beta-function marginal
  likelihood times the Chinese-restaurant prior;
* posterior means and predictive probabilities given intermediate data are
  computed by enumerating partitions of the m + 1 targets (the new target's
  informer outcomes appended as a partially observed row), not by
  re-weighting partitions of the original m targets;
* the clustering-free Beta-Bernoulli model has closed forms and a
  Gauss-Jacobi quadrature counterpart.
"""

from __future__ import annotations

import functools
import itertools
import math

import numpy as np
from scipy.special import betaln, gammaln, logsumexp, roots_jacobi

from .errors import GuardError

MAX_PARTITION_SIZE = 12
MAX_EXACT_TERMS = 20_000_000


def bell_number(m: int) -> int:
    """Bell number via the Bell triangle."""
    row = [1]
    for _ in range(m):
        nxt = [row[-1]]
        for v in row:
            nxt.append(nxt[-1] + v)
        row = nxt
    return row[0]


@functools.lru_cache(maxsize=16)
def _partition_array(m: int) -> np.ndarray:
    labels = np.zeros((1, 1), dtype=np.int8)
    top = np.zeros(1, dtype=np.int8)
    for _ in range(1, m):
        choices = top.astype(int) + 2
        parent = np.repeat(np.arange(len(labels)), choices)
        starts = np.cumsum(choices) - choices
        new = (np.arange(choices.sum()) - np.repeat(starts, choices)).astype(np.int8)
        labels = np.hstack([labels[parent], new[:, None]])
        top = np.maximum(top[parent], new)
    labels.setflags(write=False)
    return labels


def enumerate_partitions(m: int) -> np.ndarray:
    """All set partitions of m items as canonical label rows, shape (Bell(m), m).

    Labels are restricted growth strings, so each row is already canonical
    (clusters numbered by smallest member).
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    if m > MAX_PARTITION_SIZE:
        raise GuardError(f"m={m} exceeds the enumeration guard of {MAX_PARTITION_SIZE}")
    return _partition_array(m)


def _onehot(labels):
    K = int(labels.max()) + 1
    return (labels[:, :, None] == np.arange(K)).astype(float)


def _cr_log_prior(onehot, m0):
    sizes = onehot.sum(axis=1)
    nonempty = sizes > 0
    K = nonempty.sum(axis=1)
    r = onehot.shape[1]
    lg = np.where(nonempty, gammaln(np.where(nonempty, sizes, 1.0)), 0.0).sum(axis=1)
    return K * math.log(m0) + gammaln(m0) + lg - gammaln(r + m0)


def _complete_binary(x0):
    if not np.all(x0.observed):
        raise ValueError("the clustering-free oracle needs a complete matrix")
    return x0.values.astype(float)


def exact_log_posterior(x0, hyper):
    """Partitions of the m targets and their normalized log posterior mass."""
    parts = enumerate_partitions(x0.m)
    oh = _onehot(parts)
    S = np.einsum("bik,ij->bkj", oh, x0.ones)
    F = np.einsum("bik,ij->bkj", oh, x0.zeros)
    ll = (betaln(hyper.alpha0 + S, hyper.beta0 + F) - betaln(hyper.alpha0, hyper.beta0)).sum(axis=(1, 2))
    lw = _cr_log_prior(oh, hyper.m0) + ll
    return parts, lw - logsumexp(lw)


def exact_posterior(x0, hyper) -> dict:
    """Map from canonical label tuple to exact posterior probability."""
    parts, lp = exact_log_posterior(x0, hyper)
    return {tuple(int(c) for c in row): float(math.exp(v)) for row, v in zip(parts, lp)}


class ExactModel:
    """Exact predictive quantities for one (x0, hyperparameters) pair."""

    def __init__(self, x0, hyper):
        m, n = x0.shape
        if m + 1 > MAX_PARTITION_SIZE:
            raise GuardError(f"{m} targets exceed the exact-enumeration guard")
        self.hyper = hyper
        self.n = n
        parts = enumerate_partitions(m + 1)
        oh = _onehot(parts)
        B = len(parts)
        self.log_prior = _cr_log_prior(oh, hyper.m0)
        S0 = np.einsum("bik,ij->bkj", oh[:, :m], x0.ones)
        F0 = np.einsum("bik,ij->bkj", oh[:, :m], x0.zeros)
        a, b = hyper.alpha0, hyper.beta0
        G0 = betaln(a + S0, b + F0) - betaln(a, b)
        kstar = parts[:, m].astype(int)
        self.Sk = S0[np.arange(B), kstar]
        self.Fk = F0[np.arange(B), kstar]
        self.rest = G0.sum(axis=(1, 2)) - G0[np.arange(B), kstar].sum(axis=1)
        parts0 = enumerate_partitions(m)
        oh0 = _onehot(parts0)
        S = np.einsum("bik,ij->bkj", oh0, x0.ones)
        F = np.einsum("bik,ij->bkj", oh0, x0.zeros)
        ll0 = (betaln(a + S, b + F) - betaln(a, b)).sum(axis=(1, 2))
        self.log_evidence0 = float(logsumexp(_cr_log_prior(oh0, hyper.m0) + ll0))
        self.terms = B

    def predictive(self, informers, outcomes):
        """(p(x_A | x0), vector of E(theta_{i*, j} | x0, x_A))."""
        a, b = self.hyper.alpha0, self.hyper.beta0
        x1 = np.zeros(self.n)
        xz = np.zeros(self.n)
        for j, x in zip(informers, outcomes):
            if x:
                x1[j] = 1.0
            else:
                xz[j] = 1.0
        Sk = self.Sk + x1
        Fk = self.Fk + xz
        ll = self.rest + (betaln(a + Sk, b + Fk) - betaln(a, b)).sum(axis=1)
        lw = self.log_prior + ll
        lz = logsumexp(lw)
        post = np.exp(lw - lz)
        theta = post @ ((a + Sk) / (a + b + Sk + Fk))
        return math.exp(lz - self.log_evidence0), theta

    def pel2(self, informers, outcomes, n_T):
        _, theta = self.predictive(informers, outcomes)
        return _top_loss(theta, n_T)

    def pel1(self, informers, n_T):
        k = len(informers)
        if (2**k) * self.terms > MAX_EXACT_TERMS:
            raise GuardError(f"2^{k} outcomes x {self.terms} partitions exceed the exact guard")
        total = 0.0
        for xs in itertools.product((0, 1), repeat=k):
            p, theta = self.predictive(informers, xs)
            total += p * _top_loss(theta, n_T)
        return total


def _top_loss(theta, n_T):
    if not 1 <= n_T <= len(theta):
        raise ValueError("n_T must be between 1 and the number of compounds")
    return float(np.sum(1.0 - np.sort(theta)[::-1][:n_T]))


def exact_theta_hat(x0, hyper, assay, j=None):
    """Exact E(theta_{i*, j} | x0, x_A); full vector when ``j`` is None."""
    _, theta = ExactModel(x0, hyper).predictive(assay.informers, assay.outcomes)
    return theta if j is None else float(theta[j])


def exact_p_xa(x0, hyper, assay) -> float:
    p, _ = ExactModel(x0, hyper).predictive(assay.informers, assay.outcomes)
    return p


def exact_pel2(x0, hyper, assay, n_T) -> float:
    return ExactModel(x0, hyper).pel2(assay.informers, assay.outcomes, n_T)


def exact_pel1(x0, hyper, informers, n_T) -> float:
    """Exact PEL_1 summed over every outcome of the informer set."""
    return ExactModel(x0, hyper).pel1(list(informers), n_T)


# --- clustering-free Beta-Bernoulli model -------------------------------


def no_cluster_posterior_means(x0, alpha, beta, informers=(), outcomes=()):
    """Closed-form E(theta_j | x0, x_A) with independent compound rates."""
    x = _complete_binary(x0)
    m = x.shape[0]
    s = x.sum(axis=0)
    theta = (alpha + s) / (alpha + beta + m)
    for j, o in zip(informers, outcomes):
        theta[j] = (alpha + s[j] + o) / (alpha + beta + m + 1)
    return theta


def no_cluster_outcome_prob(x0, alpha, beta, informers, outcomes) -> float:
    x = _complete_binary(x0)
    m = x.shape[0]
    s = x.sum(axis=0)
    p = 1.0
    for j, o in zip(informers, outcomes):
        pj = (alpha + s[j]) / (alpha + beta + m)
        p *= pj if o else 1.0 - pj
    return p


def no_cluster_pel1(x0, alpha, beta, informers, n_T) -> float:
    """Exact PEL_1 under the clustering-free model from closed forms."""
    informers = list(informers)
    total = 0.0
    for xs in itertools.product((0, 1), repeat=len(informers)):
        p = no_cluster_outcome_prob(x0, alpha, beta, informers, xs)
        total += p * _top_loss(no_cluster_posterior_means(x0, alpha, beta, informers, xs), n_T)
    return total


def _beta_nodes(a, b, order):
    """Gauss-Jacobi nodes on [0, 1] and normalized weights for Beta(a, b)."""
    t, w = roots_jacobi(order, b - 1.0, a - 1.0)
    return (1.0 + t) / 2.0, w / w.sum()


def no_cluster_quadrature(x0, alpha, beta, informers, outcomes, order=24):
    """p(x_A | x0) and posterior means by numeric integration over rates.

    The joint probability of x_A is integrated on the tensor-product grid of
    the informer rates; posterior means of informers are ratios of integrals.
    """
    x = _complete_binary(x0)
    m, n = x.shape
    s = x.sum(axis=0)
    informers = list(informers)
    nodes = [_beta_nodes(alpha + s[j], beta + m - s[j], order) for j in range(n)]
    theta = np.array([nodes[j][1] @ nodes[j][0] for j in range(n)])
    if not informers:
        return 1.0, theta
    grids = np.meshgrid(*[nodes[j][0] for j in informers], indexing="ij")
    wgrid = functools.reduce(np.multiply.outer, [nodes[j][1] for j in informers])
    lik = np.ones_like(wgrid)
    for g, o in zip(grids, outcomes):
        lik = lik * (g if o else 1.0 - g)
    p = float(np.sum(wgrid * lik))
    for g, j in zip(grids, informers):
        theta[j] = float(np.sum(wgrid * lik * g)) / p
    return p, theta


def no_cluster_pel1_quadrature(x0, alpha, beta, informers, n_T, order=24) -> float:
    informers = list(informers)
    total = 0.0
    for xs in itertools.product((0, 1), repeat=len(informers)):
        p, theta = no_cluster_quadrature(x0, alpha, beta, informers, xs, order)
        total += p * _top_loss(theta, n_T)
    return total
