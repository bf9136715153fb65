"""Chinese-restaurant clustering of targets and its collapsed Gibbs sampler.

Each cluster shares one activity rate per compound with a conjugate
Beta(alpha0, beta0) prior, so cluster parameters integrate out and only the
Beta posterior counts

    a[k, j] = alpha0 + (observed actives of compound j in cluster k)
    b[k, j] = beta0  + (observed inactives of compound j in cluster k)

are needed.  Unobserved cells contribute to neither count.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

from .errors import DegenerateDataError
from .matrix import BioactivityMatrix

logger = logging.getLogger(__name__)

DEFAULT_M0_GRID = (1.0, 2.0, 3.0, 5.0, 10.0, 15.0, 20.0, 30.0)
DEFAULT_BURN_IN = 1000
ENSEMBLE_FORMAT = "boise-ensemble"


@dataclass(frozen=True)
class Hyperparams:
    """Prior mass ``m0`` of the partition prior and Beta(alpha0, beta0) rates."""

    m0: float
    alpha0: float
    beta0: float

    def __post_init__(self):
        for name in ("m0", "alpha0", "beta0"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be a positive finite number, got {v!r}")
            object.__setattr__(self, name, float(v))

    def to_dict(self):
        return {"m0": self.m0, "alpha0": self.alpha0, "beta0": self.beta0}


def canonical_labels(labels: Sequence[int]) -> tuple:
    """Relabel clusters 0..K-1 in order of their smallest member."""
    mapping = {}
    out = []
    for c in labels:
        if c not in mapping:
            mapping[c] = len(mapping)
        out.append(mapping[c])
    return tuple(out)


def cluster_counts(labels, x0: BioactivityMatrix, hyper: Hyperparams):
    """Sizes and Beta posterior counts for a canonical labelling."""
    labels = np.asarray(labels, dtype=int)
    K = int(labels.max()) + 1
    member = np.zeros((K, labels.size))
    member[labels, np.arange(labels.size)] = 1.0
    sizes = member.sum(axis=1).astype(int)
    a = hyper.alpha0 + member @ x0.ones
    b = hyper.beta0 + member @ x0.zeros
    return sizes, a, b


@dataclass(frozen=True, eq=False)
class Clustering:
    """A partition of the targets together with its cached Beta counts."""

    labels: tuple
    hyper: Hyperparams
    sizes: np.ndarray
    counts_a: np.ndarray
    counts_b: np.ndarray

    @classmethod
    def from_labels(cls, labels, x0: BioactivityMatrix, hyper: Hyperparams) -> "Clustering":
        labels = canonical_labels(labels)
        if len(labels) != x0.m:
            raise ValueError(f"{len(labels)} labels for {x0.m} targets")
        sizes, a, b = cluster_counts(labels, x0, hyper)
        for arr in (sizes, a, b):
            arr.setflags(write=False)
        return cls(labels, hyper, sizes, a, b)

    @property
    def K(self) -> int:
        return len(self.sizes)

    @property
    def m(self) -> int:
        return len(self.labels)

    def members(self, k: int) -> tuple:
        return tuple(i for i, c in enumerate(self.labels) if c == k)

    def __eq__(self, other):
        if not isinstance(other, Clustering):
            return NotImplemented
        return self.labels == other.labels and self.hyper == other.hyper

    def __hash__(self):
        return hash((self.labels, self.hyper))


def _sizes_of(clustering_or_labels):
    if isinstance(clustering_or_labels, Clustering):
        return np.asarray(clustering_or_labels.sizes)
    labels = canonical_labels(clustering_or_labels)
    return np.bincount(np.asarray(labels, dtype=int))


def cr_log_prior(clustering, m0: float) -> float:
    """log of m0^K Gamma(m0) prod_k Gamma(m_k) / Gamma(m + m0).

    Accepts a :class:`Clustering` or a plain label sequence.
    """
    sizes = _sizes_of(clustering)
    m = int(sizes.sum())
    K = len(sizes)
    return float(K * math.log(m0) + gammaln(m0) + gammaln(sizes).sum() - gammaln(m + m0))


def prior_mean_clusters(m: int, m0: float) -> float:
    """Expected number of clusters under the m-target partition prior."""
    i = np.arange(m)
    return float(np.sum(m0 / (m0 + i)))


def _new_cluster_loglik(x0: BioactivityMatrix, hyper: Hyperparams) -> np.ndarray:
    tot = hyper.alpha0 + hyper.beta0
    return x0.ones.sum(axis=1) * math.log(hyper.alpha0 / tot) + x0.zeros.sum(axis=1) * math.log(
        hyper.beta0 / tot
    )


def gibbs_conditional(i: int, labels, x0: BioactivityMatrix, hyper: Hyperparams) -> np.ndarray:
    """Full conditional of target ``i``'s cluster given every other label.

    ``labels`` is the current labelling of all targets; target ``i`` is taken
    out of its cluster before the weights are formed.  Index 0 of the result
    is a new cluster and index k >= 1 is the k-th cluster of the remaining
    targets in canonical order.
    """
    m = x0.m
    others = [r for r in range(m) if r != i]
    log_w = np.empty(1)
    log_w[0] = math.log(hyper.m0) + _new_cluster_loglik(x0, hyper)[i]
    if others:
        sub = canonical_labels([labels[r] for r in others])
        sizes, a, b = cluster_counts(sub, x0.take_targets(others), hyper)
        lp1 = np.log(a) - np.log(a + b)
        lp0 = np.log(b) - np.log(a + b)
        ll = lp1 @ x0.ones[i] + lp0 @ x0.zeros[i]
        log_w = np.concatenate([log_w, np.log(sizes) + ll])
    p = np.exp(log_w - logsumexp(log_w))
    total = p.sum()
    if not (total > 0 and math.isfinite(total)):
        raise ArithmeticError("Gibbs conditional has no mass after normalization")
    return p / total


class _GibbsState:
    """Mutable sampler state with clusters packed in slots 0..K-1."""

    def __init__(self, x0: BioactivityMatrix, hyper: Hyperparams, labels):
        self.hyper = hyper
        self.x1 = x0.ones
        self.x0 = x0.zeros
        m, n = x0.shape
        self.S = np.zeros((m, n))
        self.F = np.zeros((m, n))
        self.L1 = np.zeros((m, n))
        self.L0 = np.zeros((m, n))
        self.size = np.zeros(m, dtype=int)
        self.log_size = np.zeros(m)
        self.lab = np.asarray(canonical_labels(labels), dtype=int)
        self.K = int(self.lab.max()) + 1
        for i, k in enumerate(self.lab):
            self.S[k] += self.x1[i]
            self.F[k] += self.x0[i]
            self.size[k] += 1
        for k in range(self.K):
            self._refresh(k)
        self.log_m0 = math.log(hyper.m0)
        self.new_ll = _new_cluster_loglik(x0, hyper)
        self.log_w = np.empty(m + 1)

    def _refresh(self, k):
        a = self.hyper.alpha0 + self.S[k]
        b = self.hyper.beta0 + self.F[k]
        lab = np.log(a + b)
        self.L1[k] = np.log(a) - lab
        self.L0[k] = np.log(b) - lab
        self.log_size[k] = math.log(self.size[k]) if self.size[k] else -math.inf

    def _delete(self, k):
        last = self.K - 1
        if k != last:
            for arr in (self.S, self.F, self.L1, self.L0):
                arr[k] = arr[last]
            self.size[k] = self.size[last]
            self.log_size[k] = self.log_size[last]
            self.lab[self.lab == last] = k
        self.S[last] = 0.0
        self.F[last] = 0.0
        self.size[last] = 0
        self.K -= 1

    def update(self, i, u):
        k_old = self.lab[i]
        self.S[k_old] -= self.x1[i]
        self.F[k_old] -= self.x0[i]
        self.size[k_old] -= 1
        if self.size[k_old] == 0:
            self._delete(k_old)
        else:
            self._refresh(k_old)
        K = self.K
        w = self.log_w[: K + 1]
        w[:K] = self.log_size[:K] + self.L1[:K] @ self.x1[i] + self.L0[:K] @ self.x0[i]
        w[K] = self.log_m0 + self.new_ll[i]
        p = np.exp(w - w.max())
        c = np.cumsum(p)
        k = min(int(np.searchsorted(c, u * c[-1], side="right")), K)
        if k == K:
            self.K += 1
        self.lab[i] = k
        self.S[k] += self.x1[i]
        self.F[k] += self.x0[i]
        self.size[k] += 1
        self._refresh(k)

    def sweep(self, rng):
        us = rng.random(len(self.lab))
        for i in range(len(self.lab)):
            self.update(i, us[i])

    def labels(self):
        return canonical_labels(self.lab.tolist())

    def check_counts(self, x0: BioactivityMatrix):
        """Recompute counts from scratch and compare with the cache."""
        sizes, a, b = cluster_counts(self.lab, x0, self.hyper)
        K = self.K
        return (
            np.array_equal(sizes, self.size[:K])
            and np.array_equal(a, self.hyper.alpha0 + self.S[:K])
            and np.array_equal(b, self.hyper.beta0 + self.F[:K])
        )


@dataclass(frozen=True, eq=False)
class PosteriorEnsemble:
    """Clusterings drawn from the posterior given the training matrix.

    ``weights`` is None for an ordinary Monte Carlo ensemble (equal weights);
    a weighted ensemble is used to evaluate the recycling formulas against an
    exactly enumerated posterior.
    """

    samples: tuple
    hyper: Hyperparams
    seed: int | None = None
    burn_in: int = 0
    thinning: int = 1
    trace: tuple = ()
    init: str = "one"
    weights: np.ndarray | None = None
    targets: tuple = field(default=(), compare=False)

    def __post_init__(self):
        if not self.samples:
            raise ValueError("an ensemble needs at least one clustering")
        object.__setattr__(self, "samples", tuple(self.samples))
        object.__setattr__(self, "trace", tuple(int(k) for k in self.trace))
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (len(self.samples),) or np.any(w < 0) or w.sum() <= 0:
                raise ValueError("weights must be nonnegative, one per sample, not all zero")
            w = w / w.sum()
            w.setflags(write=False)
            object.__setattr__(self, "weights", w)

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    @property
    def n_compounds(self) -> int:
        return self.samples[0].counts_a.shape[1]

    def sample_weights(self) -> np.ndarray:
        if self.weights is None:
            return np.full(len(self.samples), 1.0 / len(self.samples))
        return self.weights

    def to_dict(self) -> dict:
        return {
            "format": ENSEMBLE_FORMAT,
            "version": 1,
            "hyper": self.hyper.to_dict(),
            "seed": self.seed,
            "burn_in": self.burn_in,
            "thinning": self.thinning,
            "init": self.init,
            "targets": list(self.targets),
            "trace": list(self.trace),
            "samples": [list(s.labels) for s in self.samples],
            "weights": None if self.weights is None else [float(w) for w in self.weights],
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.to_dict(), fh, separators=(",", ":"), sort_keys=True)
            fh.write("\n")


def ensemble_from_dict(doc: dict, x0: BioactivityMatrix) -> PosteriorEnsemble:
    if doc.get("format") != ENSEMBLE_FORMAT:
        raise ValueError("not an ensemble file")
    targets = tuple(doc.get("targets") or ())
    if targets and targets != x0.targets:
        raise ValueError("ensemble was sampled on a different set of targets")
    hyper = Hyperparams(**doc["hyper"])
    samples = [Clustering.from_labels(lab, x0, hyper) for lab in doc["samples"]]
    return PosteriorEnsemble(
        samples,
        hyper,
        seed=doc.get("seed"),
        burn_in=doc.get("burn_in", 0),
        thinning=doc.get("thinning", 1),
        trace=doc.get("trace", ()),
        init=doc.get("init", "one"),
        weights=doc.get("weights"),
        targets=targets,
    )


def load_ensemble(path, x0: BioactivityMatrix) -> PosteriorEnsemble:
    with open(path, encoding="utf-8") as fh:
        return ensemble_from_dict(json.load(fh), x0)


def _initial_labels(m, init):
    if init == "one":
        return [0] * m
    if init == "singletons":
        return list(range(m))
    raise ValueError(f"unknown initialization {init!r}")


def sample_posterior(
    x0: BioactivityMatrix,
    hyper: Hyperparams,
    n_samples: int,
    thin: int,
    burn_in: int = DEFAULT_BURN_IN,
    seed: int | None = 0,
    init: str = "one",
    check_counts: bool = False,
) -> PosteriorEnsemble:
    """Run the collapsed Gibbs sampler and keep ``n_samples`` clusterings.

    One sweep updates every target's label once, in index order.  After
    ``burn_in`` sweeps a clustering is recorded every ``thin`` sweeps.  The
    number of clusters after every sweep (burn-in included) is kept in
    ``trace``.
    """
    if n_samples < 1 or thin < 1 or burn_in < 0:
        raise ValueError("need n_samples >= 1, thin >= 1, burn_in >= 0")
    rng = np.random.default_rng(seed)
    state = _GibbsState(x0, hyper, _initial_labels(x0.m, init))
    trace, kept = [], []
    total = burn_in + n_samples * thin
    for sweep in range(1, total + 1):
        state.sweep(rng)
        trace.append(state.K)
        if check_counts and not state.check_counts(x0):
            raise AssertionError(f"count cache diverged at sweep {sweep}")
        if sweep > burn_in and (sweep - burn_in) % thin == 0:
            kept.append(state.labels())
    cache = {}
    samples = []
    for lab in kept:
        if lab not in cache:
            cache[lab] = Clustering.from_labels(lab, x0, hyper)
        samples.append(cache[lab])
    return PosteriorEnsemble(
        samples,
        hyper,
        seed=seed,
        burn_in=burn_in,
        thinning=thin,
        trace=trace,
        init=init,
        targets=x0.targets,
    )


def choose_hyperparams(
    x0: BioactivityMatrix,
    m0_grid: Sequence[float] = DEFAULT_M0_GRID,
    pilot_sweeps: int = 300,
    pilot_burn_in: int = 100,
    seed: int | None = 0,
) -> Hyperparams:
    """Empirical-Bayes hyperparameters.

    alpha0 is the observed activity rate and beta0 = 1 - alpha0.  For every
    candidate m0 a pilot chain estimates the posterior mean number of
    clusters; the m0 whose prior mean cluster count is closest to it wins
    (first grid entry on ties).
    """
    alpha0 = x0.observed_mean()
    if alpha0 <= 0.0 or alpha0 >= 1.0:
        raise DegenerateDataError(
            f"observed activity rate is {alpha0}; empirical Bayes needs a mix of actives and inactives"
        )
    if pilot_sweeps <= pilot_burn_in:
        raise ValueError("pilot_sweeps must exceed pilot_burn_in")
    best, best_gap = None, math.inf
    for m0 in m0_grid:
        hyper = Hyperparams(m0, alpha0, 1.0 - alpha0)
        ens = sample_posterior(
            x0, hyper, n_samples=pilot_sweeps - pilot_burn_in, thin=1, burn_in=pilot_burn_in, seed=seed
        )
        post_k = float(np.mean(ens.trace[pilot_burn_in:]))
        prior_k = prior_mean_clusters(x0.m, m0)
        gap = abs(prior_k - post_k)
        logger.info("m0=%g prior E[K]=%.3f posterior E[K]=%.3f", m0, prior_k, post_k)
        if gap < best_gap:
            best, best_gap = hyper, gap
    return best
