"""Ranking metrics against revealed activity, and the frequent-hitters rule.

A *ranking* is a sequence of compound indices, highest priority first.
*truth* is the binary activity vector of the new target indexed by compound.
"""

from __future__ import annotations

import numpy as np

from .errors import UndefinedMetricError
from .ranker import rank_order


def _prepare(ranking, truth):
    ranking = np.asarray(ranking, dtype=int)
    truth = np.asarray(truth).astype(int)
    if truth.ndim != 1 or ranking.shape != truth.shape:
        raise ValueError("ranking and truth must be 1-D of equal length")
    if not np.array_equal(np.sort(ranking), np.arange(truth.size)):
        raise ValueError("ranking must be a permutation of compound indices")
    if np.any((truth != 0) & (truth != 1)):
        raise ValueError("truth must be binary")
    return ranking, truth


def _ef10_parts(ranking, truth):
    ranking, truth = _prepare(ranking, truth)
    n = truth.size
    if n < 10:
        raise UndefinedMetricError(f"EF10 needs at least 10 compounds, got {n}")
    actives = int(truth.sum())
    if actives == 0:
        raise UndefinedMetricError("EF10 is undefined without actives")
    top = n // 10
    hits = int(truth[ranking[:top]].sum())
    ef = (hits / top) / (actives / n)
    ef_max = (min(top, actives) / top) / (actives / n)
    return ef, ef_max


def ef10(ranking, truth) -> float:
    """Enrichment of actives in the top floor(n/10) of the ranking."""
    return _ef10_parts(ranking, truth)[0]


def nef10(ranking, truth) -> float:
    """Normalized EF10: 0.5 for random-level enrichment, 1 for the maximum.

    Computed as (1 + (EF10 - 1) / (EF10_max - 1)) / 2.
    """
    ef, ef_max = _ef10_parts(ranking, truth)
    if ef_max == 1.0:
        raise UndefinedMetricError("NEF10 is undefined when the maximum EF10 equals 1")
    return (1.0 + (ef - 1.0) / (ef_max - 1.0)) / 2.0


def rocauc(ranking, truth, scores=None) -> float:
    """Area under the TPR/FPR curve traced down the ranking.

    When ``scores`` are given, compounds with equal scores form one block
    and the curve moves diagonally across it (trapezoid).
    """
    ranking, truth = _prepare(ranking, truth)
    P = int(truth.sum())
    N = truth.size - P
    if P == 0 or N == 0:
        raise UndefinedMetricError("ROCAUC needs both actives and inactives")
    y = truth[ranking]
    if scores is None:
        ends = np.arange(1, y.size + 1)
    else:
        s = np.asarray(scores, dtype=float)[ranking]
        ends = np.append(np.nonzero(s[1:] != s[:-1])[0] + 1, y.size)
    tp = np.concatenate([[0], np.cumsum(y)[ends - 1]])
    fp = np.concatenate([[0], np.cumsum(1 - y)[ends - 1]])
    area = np.sum((fp[1:] - fp[:-1]) * (tp[1:] + tp[:-1])) / 2.0
    return float(area / (P * N))


def _prefix_confusion(ranking, truth):
    ranking, truth = _prepare(ranking, truth)
    P = int(truth.sum())
    n = truth.size
    if P == 0 or P == n:
        raise UndefinedMetricError("best-split metrics need both classes")
    y = truth[ranking]
    t = np.arange(1, n)  # prefix sizes 1..n-1
    tp = np.cumsum(y)[:-1].astype(float)
    fp = t - tp
    fn = P - tp
    tn = (n - P) - fp
    return tp, fp, fn, tn


def mcc_best_split(ranking, truth) -> float:
    """Largest Matthews correlation over all prefix splits of the ranking.

    A split whose MCC denominator vanishes scores 0.
    """
    tp, fp, fn, tn = _prefix_confusion(ranking, truth)
    den = np.sqrt((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn))
    num = tp * tn - fp * fn
    mcc = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
    return float(mcc.max())


def f1_best_split(ranking, truth) -> float:
    """Largest F1 score over all prefix splits of the ranking."""
    tp, fp, fn, _ = _prefix_confusion(ranking, truth)
    return float(np.max(2 * tp / (2 * tp + fn + fp)))


def frequent_hitters(x0, n_A: int) -> tuple:
    """The ``n_A`` compounds active on the most training targets."""
    if not 0 <= n_A <= x0.n:
        raise ValueError(f"n_A={n_A} outside 0..{x0.n}")
    return tuple(int(j) for j in rank_order(x0.column_sums())[:n_A])
