"""Greedy informer selection by PEL_1, and the entropy-based accelerated variant.

Selection is written against a *scorer*: any object with an ``n`` attribute
(number of compounds) and a ``score(informers) -> float`` method, lower being
better.  The same greedy loop therefore runs on the Monte Carlo estimate, the
exact enumeration oracle or the clustering-free closed form.
"""

from __future__ import annotations

import json
import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .pel import PackedEnsemble, pel1

logger = logging.getLogger(__name__)

METHODS = ("greedy-pel", "entropy")
TIE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class SelectionConfig:
    n_A: int
    n_T: int
    method: str = "greedy-pel"
    tie_break: str = "lowest-index"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.tie_break != "lowest-index":
            raise ValueError("only the lowest-index tie break is supported")
        if self.n_A < 0 or self.n_T < 1:
            raise ValueError("need n_A >= 0 and n_T >= 1")

    def check(self, n: int):
        if self.n_A > n or self.n_T > n:
            raise ValueError(f"n_A={self.n_A} and n_T={self.n_T} must not exceed {n} compounds")


def argmin_lowest(candidates, values, tol: float = TIE_TOLERANCE) -> int:
    """Candidate with the smallest value; within ``tol`` of it the lowest index wins."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("no candidates")
    best = values.min()
    return min(int(c) for c, v in zip(candidates, values) if v <= best + tol)


@dataclass
class SelectionResult:
    informers: tuple
    step_scores: tuple
    method: str
    n_T: int
    seed: int | None = None
    hyper: dict | None = None
    compounds: tuple = field(default=())
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        doc = {
            "informers": list(self.informers),
            "step_scores": list(self.step_scores),
            "config": {
                "method": self.method,
                "n_A": len(self.informers),
                "n_T": self.n_T,
                "tie_break": "lowest-index",
            },
            "seed": self.seed,
            "hyper": self.hyper,
        }
        if self.compounds:
            doc["informer_ids"] = [self.compounds[j] for j in self.informers]
        doc.update(self.extra)
        return doc

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def greedy_select(scorer, n_A: int, threads: int = 1, warn_increase: bool = True):
    """Grow an informer set one compound at a time by minimizing ``scorer``.

    Returns ``(informers, step_scores)`` in selection order.  Candidates of a
    step may be scored in parallel; the reduction is by value, then index, so
    the outcome never depends on evaluation order.
    """
    n = scorer.n
    if not 0 <= n_A <= n:
        raise ValueError(f"n_A={n_A} outside 0..{n}")
    chosen, scores = [], []
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for _ in range(n_A):
            taken = set(chosen)
            cands = [j for j in range(n) if j not in taken]
            sets = [chosen + [j] for j in cands]
            if pool is None:
                values = [scorer.score(s) for s in sets]
            else:
                values = list(pool.map(scorer.score, sets))
            j = argmin_lowest(cands, values)
            chosen.append(j)
            scores.append(float(values[cands.index(j)]))
            logger.debug("step %d: picked %d, score %.6g", len(chosen), j, scores[-1])
    finally:
        if pool is not None:
            pool.shutdown()
    if warn_increase:
        for step, (prev, cur) in enumerate(zip(scores, scores[1:]), start=2):
            if cur > prev + 1e-9:
                warnings.warn(
                    f"greedy score rose at step {step} ({prev:.6g} -> {cur:.6g}); Monte Carlo noise",
                    RuntimeWarning,
                    stacklevel=2,
                )
    return tuple(chosen), tuple(scores)


class MonteCarloPEL:
    """PEL_1 estimated from one fixed ensemble and one fixed set of outcome draws.

    Every candidate set is scored against the same predictive rows, so
    differences between candidates are not swamped by fresh sampling noise.
    Weighted ensembles are scored with exhaustive outcomes instead.
    """

    def __init__(self, ensemble, n_T: int, rng=None, draws: int = 1, outcomes: str | None = None):
        self.ensemble = ensemble
        self.packed = PackedEnsemble(ensemble)
        self.n = self.packed.n
        self.n_T = n_T
        if outcomes is None:
            outcomes = "sampled" if ensemble.weights is None else "exhaustive"
        self.outcomes = outcomes
        self.rows = None
        if outcomes == "sampled":
            rng = rng if rng is not None else np.random.default_rng(0)
            self.rows = self.packed.predictive_rows(rng, draws)

    def score(self, informers) -> float:
        return pel1(self.ensemble, informers, self.n_T, rows=self.rows, outcomes=self.outcomes, packed=self.packed)


class ExactPEL:
    """Exact PEL_1 by enumeration (small instances only)."""

    def __init__(self, x0, hyper, n_T: int):
        from .oracle import ExactModel

        self.model = ExactModel(x0, hyper)
        self.n = x0.n
        self.n_T = n_T

    def score(self, informers) -> float:
        return self.model.pel1(list(informers), self.n_T)


class NoClusterPEL:
    """Exact PEL_1 under independent Beta-Bernoulli compound rates."""

    def __init__(self, x0, alpha: float, beta: float, n_T: int):
        self.x0 = x0
        self.alpha = alpha
        self.beta = beta
        self.n = x0.n
        self.n_T = n_T

    def score(self, informers) -> float:
        from .oracle import no_cluster_pel1

        return no_cluster_pel1(self.x0, self.alpha, self.beta, informers, self.n_T)


def entropy(p) -> float:
    """Shannon entropy in bits, with 0 log 0 taken as 0."""
    p = np.asarray(getattr(p, "p", p), dtype=float)
    nz = p[p > 0]
    return float(max(0.0, -np.sum(nz * np.log2(nz))))


def _row_entropy(log_w):
    """Entropy (bits) of the normalized rows of exp(log_w) along the last axis."""
    top = np.max(log_w, axis=-1, keepdims=True)
    w = np.exp(log_w - top)
    z = w.sum(axis=-1, keepdims=True)
    p = w / z
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log2(np.where(p > 0, p, 1.0)), 0.0)
    return np.maximum(0.0, -terms.sum(axis=-1))


class EntropyScore:
    """Expected link entropy of an informer set from fixed auxiliary rows.

    Auxiliary row ``r`` belongs to ensemble sample ``r // draws``; restricting
    it to A gives that sample's simulated intermediate outcomes.
    """

    def __init__(self, ensemble, aux_rows=None, rng=None, draws: int = 1):
        self.packed = PackedEnsemble(ensemble)
        self.n = self.packed.n
        if aux_rows is None:
            rng = rng if rng is not None else np.random.default_rng(0)
            aux_rows = self.packed.predictive_rows(rng, draws)
        aux_rows = np.asarray(aux_rows)
        S = len(ensemble)
        if aux_rows.ndim != 2 or aux_rows.shape[0] % S or aux_rows.shape[1] != self.n:
            raise ValueError("need the same number of auxiliary rows for every sample")
        draws = aux_rows.shape[0] // S
        slot = np.repeat(self.packed.sample_slot, draws)
        self.rows = aux_rows.astype(float)
        self.row_weight = np.repeat(ensemble.sample_weights(), draws) / draws
        self.log_pi = self.packed.log_pi[slot]
        # per (row, cluster, compound) log-likelihood of the row's own outcome
        lp1 = self.packed.lp1[slot]
        lp0 = self.packed.lp0[slot]
        x = self.rows[:, None, :]
        self.loglik = np.where(x > 0, lp1, lp0)
        self.loglik[~np.isfinite(self.log_pi)] = 0.0

    def _base(self, informers):
        A = list(informers)
        return self.log_pi + self.loglik[:, :, A].sum(axis=2)

    def score(self, informers) -> float:
        return float(self.row_weight @ _row_entropy(self._base(informers)))

    def score_extensions(self, informers) -> np.ndarray:
        """Score of A + [j] for every compound j (entries for j in A are +inf)."""
        base = self._base(informers)
        out = np.empty(self.n)
        for j in range(self.n):
            out[j] = self.row_weight @ _row_entropy(base + self.loglik[:, :, j])
        out[list(informers)] = np.inf
        return out


def entropy_score(ensemble, aux_rows, informers) -> float:
    """Average link entropy over samples with x_A read from ``aux_rows``."""
    return EntropyScore(ensemble, aux_rows).score(informers)


def accelerated_select(ensemble, n_A: int, rng=None, aux_rows=None, draws: int = 1):
    """Greedy minimization of the expected link entropy.

    Auxiliary rows are drawn once and reused for the whole run.  Returns
    ``(informers, step_scores)``.
    """
    scorer = EntropyScore(ensemble, aux_rows=aux_rows, rng=rng, draws=draws)
    if not 0 <= n_A <= scorer.n:
        raise ValueError(f"n_A={n_A} outside 0..{scorer.n}")
    chosen, scores = [], []
    for _ in range(n_A):
        values = scorer.score_extensions(chosen)
        cands = [j for j in range(scorer.n) if j not in chosen]
        j = argmin_lowest(cands, values[cands])
        chosen.append(j)
        scores.append(float(values[j]))
    return tuple(chosen), tuple(scores)


def select_informers(ensemble, config: SelectionConfig, seed: int | None = 0, draws: int = 1, threads: int = 1, compounds=()):
    """Run the configured selection method and wrap the result in a report."""
    config.check(ensemble.n_compounds)
    rng = np.random.default_rng(seed)
    if config.method == "entropy":
        chosen, scores = accelerated_select(ensemble, config.n_A, rng=rng, draws=draws)
    else:
        scorer = MonteCarloPEL(ensemble, config.n_T, rng=rng, draws=draws)
        chosen, scores = greedy_select(scorer, config.n_A, threads=threads)
    return SelectionResult(
        informers=chosen,
        step_scores=tuple(s if math.isfinite(s) else None for s in scores),
        method=config.method,
        n_T=config.n_T,
        seed=seed,
        hyper=ensemble.hyper.to_dict(),
        compounds=tuple(compounds),
        extra={"draws": draws, "samples": len(ensemble)},
    )
