"""Leave-one-target-out evaluation of informer selection methods.

Each fold removes one target, fits the clustering posterior on the rest,
chooses informers, reveals the held-out target's outcomes on those informers
only, ranks all compounds and scores the ranking against the held-out row.
"""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .dpmm import DEFAULT_M0_GRID, Hyperparams, choose_hyperparams, sample_posterior
from .errors import DegenerateDataError, UndefinedMetricError
from .metrics import f1_best_split, frequent_hitters, mcc_best_split, nef10, rocauc
from .pel import InformerAssay, PackedEnsemble
from .ranker import rank_all
from .selector import MonteCarloPEL, accelerated_select, greedy_select

CV_METHODS = ("greedy-pel", "entropy", "frequent-hitters", "random")
METRICS_HEADER = ("target", "method", "n_A", "NEF10", "ROCAUC", "MCC", "F1")

# stream tags for SeedSequence([seed, fold, tag])
_STREAMS = {"sampler": 0, "greedy-pel": 1, "entropy": 2, "frequent-hitters": 3, "random": 4, "hyper": 5}


@dataclass(frozen=True)
class CVConfig:
    n_A: int
    n_T: int
    methods: tuple = ("greedy-pel",)
    samples: int = 100
    thin: int = 5
    burn_in: int = 200
    m0: float | None = None
    alpha0: float | None = None
    beta0: float | None = None
    m0_grid: tuple = DEFAULT_M0_GRID
    draws: int = 1
    init: str = "one"
    seed: int = 0

    def __post_init__(self):
        bad = [m for m in self.methods if m not in CV_METHODS]
        if bad:
            raise ValueError(f"unknown methods {bad}; choose from {CV_METHODS}")


def fold_seed(seed: int, fold: int, stream: str) -> int:
    ss = np.random.SeedSequence([seed, fold, _STREAMS[stream]])
    return int(ss.generate_state(1)[0])


class HeldOutTarget:
    """Held-out activity row that only hands out informer outcomes.

    ``accessed`` records every compound whose outcome was revealed.  After
    :meth:`evaluate` no further reveals are allowed.
    """

    def __init__(self, values, observed):
        self._values = np.asarray(values).astype(np.int8)
        self._observed = np.asarray(observed, dtype=bool)
        self.accessed: set = set()
        self._closed = False

    def reveal(self, informers) -> InformerAssay:
        """Outcomes on ``informers``; unobserved informers are left out."""
        if self._closed:
            raise RuntimeError("held-out row already scored")
        informers = [int(j) for j in informers]
        self.accessed.update(informers)
        kept = [j for j in informers if self._observed[j]]
        return InformerAssay(kept, [int(self._values[j]) for j in kept])

    def evaluate(self, order, scores) -> dict:
        """Ranking metrics over the observed compounds; undefined ones are None."""
        self._closed = True
        obs = np.nonzero(self._observed)[0]
        pos = np.full(self._observed.size, -1)
        pos[obs] = np.arange(obs.size)
        sub_order = pos[[j for j in order if self._observed[j]]]
        truth = self._values[obs]
        sub_scores = np.asarray(scores, dtype=float)[obs]
        out = {}
        for name, fn in (
            ("NEF10", lambda: nef10(sub_order, truth)),
            ("ROCAUC", lambda: rocauc(sub_order, truth, scores=sub_scores)),
            ("MCC", lambda: mcc_best_split(sub_order, truth)),
            ("F1", lambda: f1_best_split(sub_order, truth)),
        ):
            try:
                out[name] = fn()
            except UndefinedMetricError:
                out[name] = None
        return out


def fold_hyperparams(x0, config: CVConfig, fold: int) -> Hyperparams:
    """Fixed values where configured, empirical Bayes on the training rows otherwise."""
    if config.m0 is None:
        eb = choose_hyperparams(x0, config.m0_grid, seed=fold_seed(config.seed, fold, "hyper"))
        m0, alpha0 = eb.m0, eb.alpha0
    else:
        m0 = config.m0
        alpha0 = config.alpha0 if config.alpha0 is not None else x0.observed_mean()
    if config.alpha0 is not None:
        alpha0 = config.alpha0
    beta0 = config.beta0 if config.beta0 is not None else 1.0 - alpha0
    if beta0 <= 0 or alpha0 <= 0:
        raise DegenerateDataError(f"training rows give alpha0={alpha0}, beta0={beta0}")
    return Hyperparams(m0, alpha0, beta0)


def _select(method, x0, ensemble, packed, config, fold):
    seed = fold_seed(config.seed, fold, method)
    rng = np.random.default_rng(seed)
    if method == "greedy-pel":
        scorer = MonteCarloPEL(ensemble, config.n_T, rng=rng, draws=config.draws)
        return greedy_select(scorer, config.n_A, warn_increase=False)[0]
    if method == "entropy":
        return accelerated_select(ensemble, config.n_A, rng=rng, draws=config.draws)[0]
    if method == "frequent-hitters":
        return frequent_hitters(x0, config.n_A)
    return tuple(int(j) for j in rng.choice(x0.n, size=config.n_A, replace=False))


def run_fold(x, fold: int, config: CVConfig) -> list:
    """Evaluate every configured method with target ``fold`` held out.

    One posterior ensemble is shared by all methods of the fold.
    """
    x0 = x.drop_target(fold)
    hyper = fold_hyperparams(x0, config, fold)
    ensemble = sample_posterior(
        x0,
        hyper,
        n_samples=config.samples,
        thin=config.thin,
        burn_in=config.burn_in,
        seed=fold_seed(config.seed, fold, "sampler"),
        init=config.init,
    )
    packed = PackedEnsemble(ensemble)
    rows = []
    for method in config.methods:
        target = HeldOutTarget(x.values[fold], x.observed[fold])
        t0 = time.perf_counter()
        informers = _select(method, x0, ensemble, packed, config, fold)
        elapsed = time.perf_counter() - t0
        assay = target.reveal(informers)
        ranking = rank_all(ensemble, assay, x0, packed=packed)
        scores = target.evaluate(ranking.order, ranking.scores)
        rows.append(
            {
                "target": x.targets[fold],
                "method": method,
                "n_A": config.n_A,
                **scores,
                "select_seconds": elapsed,
                "informers": informers,
                "accessed": frozenset(target.accessed),
            }
        )
    return rows


def run_cv(x, config: CVConfig, folds=None, threads: int = 1) -> list:
    """Run ``run_fold`` over ``folds`` (default: every target), in fold order."""
    folds = list(range(x.m)) if folds is None else [int(f) for f in folds]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_fold = list(pool.map(lambda f: run_fold(x, f, config), folds))
    else:
        per_fold = [run_fold(x, f, config) for f in folds]
    return [row for rows in per_fold for row in rows]


def _fmt(v):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "NA"
    if isinstance(v, float):
        return repr(v)
    return v


def write_metrics_csv(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_HEADER)
        for r in rows:
            w.writerow([_fmt(r[k]) for k in METRICS_HEADER])


def median_metric(rows, method: str, metric: str = "NEF10") -> float:
    vals = [r[metric] for r in rows if r["method"] == method and r[metric] is not None]
    return float(np.median(vals)) if vals else float("nan")
