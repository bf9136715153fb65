"""Top-set rule, full compound ranking and coding of continuous readouts."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np


def rank_order(scores) -> np.ndarray:
    """Indices sorted by descending score, ties broken by lowest index."""
    scores = np.asarray(scores, dtype=float)
    return np.argsort(-scores, kind="stable")


def top_set(theta_hat, n_T: int) -> tuple:
    """The ``n_T`` compounds with the largest posterior means.

    Ties go to the lowest index.  Returned in rank order.
    """
    theta_hat = np.asarray(theta_hat, dtype=float)
    if not 0 <= n_T <= theta_hat.size:
        raise ValueError(f"n_T={n_T} outside 0..{theta_hat.size}")
    return tuple(int(j) for j in rank_order(theta_hat)[:n_T])


@dataclass(frozen=True, eq=False)
class Ranking:
    """Compounds in priority order with their posterior-mean scores."""

    order: np.ndarray
    scores: np.ndarray
    informers: tuple = ()
    compounds: tuple = ()

    def rank_of(self, j: int) -> int:
        """1-based rank of compound ``j``."""
        return int(np.nonzero(self.order == j)[0][0]) + 1

    def rows(self):
        informer_set = set(self.informers)
        for r, j in enumerate(self.order, start=1):
            cid = self.compounds[j] if self.compounds else str(j)
            yield cid, float(self.scores[j]), r, int(j in informer_set)


def rank_all(ensemble, assay, x0=None, packed=None) -> Ranking:
    """Rank every compound by its recycled posterior mean given ``assay``."""
    from .pel import theta_hat

    scores = theta_hat(ensemble, assay, packed=packed)
    compounds = x0.compounds if x0 is not None else ()
    return Ranking(rank_order(scores), scores, tuple(assay.informers), compounds)


RANKING_HEADER = ("compound", "score", "rank", "informer")


def write_ranking_csv(ranking: Ranking, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RANKING_HEADER)
        for cid, score, r, flag in ranking.rows():
            w.writerow([cid, repr(score), r, flag])


def encode_intermediate(z_A, Z_A, X_A) -> np.ndarray:
    """Binary code for continuous informer readouts by nearest centroid.

    Rows of the training readouts ``Z_A`` are grouped by their binary pattern
    in ``X_A``; each pattern's centroid is the mean of its rows.  The pattern
    whose centroid is nearest to ``z_A`` in Euclidean distance is returned,
    the first-encountered pattern winning ties.
    """
    z_A = np.asarray(z_A, dtype=float)
    Z_A = np.asarray(Z_A, dtype=float)
    X_A = np.asarray(X_A).astype(np.int8)
    if Z_A.ndim != 2 or Z_A.shape != X_A.shape:
        raise ValueError("Z_A and X_A must be row-aligned matrices of equal shape")
    if Z_A.shape[0] == 0:
        raise ValueError("no training rows to build centroids from")
    if z_A.shape != (Z_A.shape[1],):
        raise ValueError("z_A must have one value per informer")
    patterns, groups = [], {}
    for r, row in enumerate(X_A):
        key = row.tobytes()
        if key not in groups:
            groups[key] = []
            patterns.append(row)
        groups[key].append(r)
    best, best_d = None, np.inf
    for pat in patterns:
        centroid = Z_A[groups[pat.tobytes()]].mean(axis=0)
        d = float(np.linalg.norm(z_A - centroid))
        if d < best_d:
            best, best_d = pat, d
    return best.copy()
