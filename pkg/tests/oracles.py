"""Independent oracles used by the test suite.

These deliberately avoid the library's own solver paths: the transport oracle
enumerates every vertex of the transportation polytope, the scalar oracles
use plain Python arithmetic, and the derivative oracles use central finite
differences.
"""

from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def _vertex_bases(m: int, n: int):
    """All spanning trees of the complete bipartite graph K_{m,n}.

    Returns (edge index array (T, m+n-1), inverse incidence tensor
    (T, m+n-1, m+n-1)) such that flows = inv @ [supply; demand[:-1]] solves
    the tree equations exactly (the incidence basis is unimodular, so the
    inverse is integer).
    """
    cells = [(i, j) for i in range(m) for j in range(n)]
    n_edges = m + n - 1
    bases = []
    for combo in itertools.combinations(range(m * n), n_edges):
        parent = list(range(m + n))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        acyclic = True
        for idx in combo:
            i, j = cells[idx]
            ra, rb = find(i), find(m + j)
            if ra == rb:
                acyclic = False
                break
            parent[rb] = ra
        if acyclic:
            bases.append(combo)

    edge_idx = np.array(bases, dtype=np.int64)
    t = edge_idx.shape[0]
    incidence = np.zeros((t, m + n - 1, n_edges))
    for b in range(t):
        for e, idx in enumerate(edge_idx[b]):
            i, j = cells[idx]
            incidence[b, i, e] = 1.0
            if j < n - 1:  # drop the last demand row (redundant constraint)
                incidence[b, m + j, e] = 1.0
    inverse = np.rint(np.linalg.inv(incidence))
    return edge_idx, inverse


def transport_bruteforce(p, q, cost):
    """Exact transportation LP optimum by enumerating all basic solutions."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    cost = np.asarray(cost, dtype=float)
    m, n = cost.shape
    edge_idx, inverse = _vertex_bases(m, n)
    rhs = np.concatenate([p, q[:-1]])
    flows = inverse @ rhs  # (T, m+n-1)
    feasible = np.all(flows >= -1e-12, axis=1)
    if not np.any(feasible):
        raise AssertionError("no feasible vertex found (unbalanced marginals?)")
    edge_costs = cost.ravel()[edge_idx]
    objectives = np.sum(flows * edge_costs, axis=1)
    return float(objectives[feasible].min())


def gauss_w2_sq_scalar(mean_a, std_a, mean_b, std_b) -> float:
    """Squared axis-aligned W2 evaluated coordinate by coordinate in pure Python."""
    total = 0.0
    for ma, sa, mb, sb in zip(mean_a, std_a, mean_b, std_b):
        total += (float(ma) - float(mb)) ** 2 + (float(sa) - float(sb)) ** 2
    return total


def central_difference(f, x, h=1e-5):
    """Central finite-difference gradient of a scalar function of a vector."""
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    for k in range(x.size):
        plus = x.copy()
        minus = x.copy()
        plus[k] += h
        minus[k] -= h
        grad[k] = (f(plus) - f(minus)) / (2.0 * h)
    return grad


def random_mixture(rng, k, d, n_classes=None, spread=3.0, uniform_weights=False):
    """Random valid mixture for metric/solver stress tests.

    ``uniform_weights`` matters for barycenter reproduction checks: a
    barycenter carries fixed uniform component weights, so it can match a
    single measure exactly only when that measure is uniform-weighted too.
    """
    from mixot import GaussianMixture

    if uniform_weights:
        weights = np.full(k, 1.0 / k)
    else:
        weights = rng.random(k) + 0.1
        weights /= weights.sum()
    means = spread * rng.standard_normal((k, d))
    stds = 0.3 + rng.random((k, d))
    labels = None
    if n_classes is not None:
        labels = rng.random((k, n_classes)) + 0.05
        labels /= labels.sum(axis=1, keepdims=True)
    return GaussianMixture(weights, means, stds, labels)
