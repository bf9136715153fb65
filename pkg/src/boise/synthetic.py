"""Block-structured synthetic bioactivity data with known target clusters."""

from __future__ import annotations

import numpy as np

from .matrix import from_array


def block_matrix(
    seed: int = 0,
    m: int = 30,
    n: int = 40,
    n_clusters: int = 3,
    specific: int = 4,
    promiscuous: int = 8,
    promiscuous_rate: float = 0.6,
    noise: float = 0.05,
):
    """Targets in equal-sized clusters, each with its own active compounds.

    Every cluster has ``specific`` compounds active on all its members.
    ``promiscuous`` compounds are active at ``promiscuous_rate`` on every
    target regardless of cluster, so they are frequent hitters that carry no
    cluster information.  The remaining compounds are inactive.  Each cell is
    then flipped with probability ``noise`` and compound order is shuffled.

    Returns ``(matrix, cluster_of_target)``.
    """
    if n_clusters * specific + promiscuous > n:
        raise ValueError("not enough compounds for the requested blocks")
    rng = np.random.default_rng(seed)
    cluster = np.arange(m) % n_clusters
    x = np.zeros((m, n), dtype=np.int8)
    for c in range(n_clusters):
        x[np.ix_(cluster == c, np.arange(c * specific, (c + 1) * specific))] = 1
    lo = n_clusters * specific
    x[:, lo : lo + promiscuous] = rng.random((m, promiscuous)) < promiscuous_rate
    x ^= (rng.random((m, n)) < noise).astype(np.int8)
    x = x[:, rng.permutation(n)]
    return from_array(x), cluster
