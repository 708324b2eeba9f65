"""Discrete optimal transport between mixture components.

The coupling between two mixtures is restricted to the component level, so
the problem reduces to a dense transportation LP over the component pairs with
the closed-form squared 2-Wasserstein distance between axis-aligned Gaussians
as the ground cost (optionally augmented with a soft-label penalty). The LP is
solved exactly with a primal transportation-simplex specialized to dense costs,
returning a basic optimal solution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DiagGaussian, GaussianMixture, UnlabeledMixtureError

MARGINAL_ATOL = 1e-9  # marginal residual tolerance up to 64 components
MARGINAL_ATOL_LARGE = 1e-7  # relaxed tolerance above 64 components
MARGINAL_SIZE_THRESHOLD = 64
MARGINAL_SUM_TOL = 1e-6  # how far input marginal sums may stray from 1
PLAN_NONNEG_ATOL = 1e-12


def _marginal_atol(k_p: int, k_q: int) -> float:
    return MARGINAL_ATOL if max(k_p, k_q) <= MARGINAL_SIZE_THRESHOLD else MARGINAL_ATOL_LARGE


@dataclass(frozen=True)
class TransportPlan:
    """Nonnegative coupling matrix with prescribed row/column marginals."""

    omega: np.ndarray
    row_marginal: np.ndarray
    col_marginal: np.ndarray

    def __post_init__(self):
        omega = np.asarray(self.omega, dtype=float)
        p = np.asarray(self.row_marginal, dtype=float)
        q = np.asarray(self.col_marginal, dtype=float)
        if omega.ndim != 2 or p.ndim != 1 or q.ndim != 1 or omega.shape != (p.size, q.size):
            raise ValueError("omega must be a (len(p), len(q)) matrix")
        if np.any(omega < -PLAN_NONNEG_ATOL):
            raise ValueError("transport plan has negative entries")
        atol = _marginal_atol(p.size, q.size)
        if np.max(np.abs(omega.sum(axis=1) - p)) > atol:
            raise ValueError("row marginals of the plan do not match")
        if np.max(np.abs(omega.sum(axis=0) - q)) > atol:
            raise ValueError("column marginals of the plan do not match")
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "row_marginal", p)
        object.__setattr__(self, "col_marginal", q)

    @property
    def shape(self) -> tuple[int, int]:
        return self.omega.shape


def gauss_w2_sq(a: DiagGaussian, b: DiagGaussian) -> float:
    """Squared 2-Wasserstein distance between axis-aligned Gaussians.

    For diagonal covariances this is exactly the squared Euclidean distance
    between the mean vectors plus the squared Euclidean distance between the
    std vectors.
    """
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    dm = a.mean - b.mean
    ds = a.std - b.std
    return float(dm @ dm + ds @ ds)


def _pairwise_sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    diff = a[:, None, :] - b[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def pairwise_w2_sq(p: GaussianMixture, q: GaussianMixture) -> np.ndarray:
    """Matrix of squared component-to-component 2-Wasserstein distances."""
    if p.dim != q.dim:
        raise ValueError(f"dimension mismatch: {p.dim} vs {q.dim}")
    return _pairwise_sq_dists(p.means, q.means) + _pairwise_sq_dists(p.stds, q.stds)


def mixture_cost(p: GaussianMixture, q: GaussianMixture, beta: float = 0.0) -> np.ndarray:
    """Ground-cost matrix between components, label-augmented when beta > 0."""
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    cost = pairwise_w2_sq(p, q)
    if beta > 0.0:
        if p.labels is None or q.labels is None:
            raise UnlabeledMixtureError("label-augmented cost requires labeled mixtures")
        if p.n_classes != q.n_classes:
            raise ValueError(f"class count mismatch: {p.n_classes} vs {q.n_classes}")
        cost = cost + beta * _pairwise_sq_dists(p.labels, q.labels)
    return cost


class _UnionFind:
    __slots__ = ("parent",)

    def __init__(self, size: int):
        self.parent = list(range(size))

    def find(self, a: int) -> int:
        parent = self.parent
        root = a
        while parent[root] != root:
            root = parent[root]
        while parent[a] != root:
            parent[a], a = root, parent[a]
        return root

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[rb] = ra
        return True


def _initial_basis(supply, demand, cost, m, n):
    """Greedy cheapest-cell allocation, completed to a spanning-tree basis."""
    order = np.argsort(cost, axis=None, kind="stable")
    rs = supply.copy()
    rd = demand.copy()
    basis_i: list[int] = []
    basis_j: list[int] = []
    basis_f: list[float] = []
    rows_open = int(np.count_nonzero(rs > 0.0))
    cols_open = int(np.count_nonzero(rd > 0.0))
    for cell in order:
        if rows_open == 0 or cols_open == 0:
            break
        cell = int(cell)
        i, j = divmod(cell, n)
        si = rs[i]
        dj = rd[j]
        if si <= 0.0 or dj <= 0.0:
            continue
        f = si if si <= dj else dj
        basis_i.append(i)
        basis_j.append(j)
        basis_f.append(float(f))
        rs[i] = si - f
        rd[j] = dj - f
        if rs[i] == 0.0:
            rows_open -= 1
        if rd[j] == 0.0:
            cols_open -= 1
    # Degenerate allocations leave the support forest disconnected; patch in
    # zero-flow cells (cheapest first) until it spans all rows and columns.
    if len(basis_i) < m + n - 1:
        uf = _UnionFind(m + n)
        for i, j in zip(basis_i, basis_j):
            uf.union(i, m + j)
        for cell in order:
            cell = int(cell)
            i, j = divmod(cell, n)
            if uf.union(i, m + j):
                basis_i.append(i)
                basis_j.append(j)
                basis_f.append(0.0)
                if len(basis_i) == m + n - 1:
                    break
    return basis_i, basis_j, basis_f


def _transport_simplex(supply: np.ndarray, demand: np.ndarray, cost: np.ndarray) -> np.ndarray:
    """Exact solver for the balanced transportation problem.

    Primal simplex on the spanning-tree basis: duals from the tree equations,
    entering cell by most-negative reduced cost (ties to the lowest flat index),
    leaving cell by minimum flow on the alternating cycle. Stalling on
    degenerate pivots switches to Bland's rule, which cannot cycle, so the
    solver always terminates at an optimal basic solution.
    """
    m, n = cost.shape
    if m == 1:
        return demand[None, :].copy()
    if n == 1:
        return supply[:, None].copy()

    basis_i, basis_j, basis_f = _initial_basis(supply, demand, cost, m, n)
    n_nodes = m + n
    adj: list[list[int]] = [[] for _ in range(n_nodes)]
    for pos in range(len(basis_i)):
        adj[basis_i[pos]].append(pos)
        adj[m + basis_j[pos]].append(pos)

    dual = np.zeros(n_nodes)
    eps = 1e-11 * max(1.0, float(np.abs(cost).max()))
    max_pivots = 2000 + 200 * n_nodes
    stall = 0
    use_bland = False

    for _ in range(max_pivots):
        # Duals from u_i + v_j = C_ij on the tree, rooted at row 0.
        visited = bytearray(n_nodes)
        visited[0] = 1
        dual[0] = 0.0
        stack = [0]
        while stack:
            node = stack.pop()
            for pos in adj[node]:
                bi = basis_i[pos]
                other = m + basis_j[pos] if node == bi else bi
                if not visited[other]:
                    visited[other] = 1
                    dual[other] = cost[bi, basis_j[pos]] - dual[node]
                    stack.append(other)

        reduced = cost - dual[:m, None] - dual[None, m:]
        flat = reduced.ravel()
        if use_bland:
            negative = np.flatnonzero(flat < -eps)
            if negative.size == 0:
                break
            enter = int(negative[0])
        else:
            enter = int(np.argmin(flat))
            if flat[enter] >= -eps:
                break
        ei, ej = divmod(enter, n)

        # Unique tree path from row ei to column ej closes the pivot cycle.
        prev_pos = [-1] * n_nodes
        prev_node = [-1] * n_nodes
        seen = bytearray(n_nodes)
        seen[ei] = 1
        stack = [ei]
        target = m + ej
        while stack:
            node = stack.pop()
            if node == target:
                break
            for pos in adj[node]:
                bi = basis_i[pos]
                other = m + basis_j[pos] if node == bi else bi
                if not seen[other]:
                    seen[other] = 1
                    prev_pos[other] = pos
                    prev_node[other] = node
                    stack.append(other)
        path: list[int] = []
        node = target
        while node != ei:
            path.append(prev_pos[node])
            node = prev_node[node]
        path.reverse()

        # Entering edge gets +theta; path edges alternate starting with minus.
        minus = path[0::2]
        plus = path[1::2]
        theta = min(basis_f[pos] for pos in minus)
        leave = -1
        leave_key = -1
        for pos in minus:
            if basis_f[pos] <= theta + 1e-15:
                key = basis_i[pos] * n + basis_j[pos]
                if leave < 0 or key < leave_key:
                    leave = pos
                    leave_key = key
        for pos in minus:
            basis_f[pos] -= theta
        for pos in plus:
            basis_f[pos] += theta

        adj[basis_i[leave]].remove(leave)
        adj[m + basis_j[leave]].remove(leave)
        basis_i[leave] = ei
        basis_j[leave] = ej
        basis_f[leave] = theta
        adj[ei].append(leave)
        adj[m + ej].append(leave)

        if theta <= 1e-15:
            stall += 1
            if stall > n_nodes + 10:
                use_bland = True
        else:
            stall = 0
            use_bland = False
    else:
        raise RuntimeError("transportation simplex exceeded its pivot budget")

    omega = np.zeros((m, n))
    for pos in range(len(basis_i)):
        f = basis_f[pos]
        omega[basis_i[pos], basis_j[pos]] = f if f > 0.0 else 0.0
    return omega


def solve_transport(p, q, cost) -> tuple[TransportPlan, float]:
    """Solve the transportation LP min <omega, cost> over the polytope of
    couplings with marginals ``p`` and ``q``.

    Returns an optimal basic plan and its objective value. Marginals must each
    sum to 1 within 1e-6; they are renormalized exactly before solving.
    """
    p = np.asarray(p, dtype=float).ravel()
    q = np.asarray(q, dtype=float).ravel()
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2 or cost.shape != (p.size, q.size):
        raise ValueError(f"cost must have shape ({p.size}, {q.size}), got {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix contains non-finite entries")
    if np.any(p < -PLAN_NONNEG_ATOL) or np.any(q < -PLAN_NONNEG_ATOL):
        raise ValueError("marginals must be nonnegative")
    if abs(float(p.sum()) - 1.0) > MARGINAL_SUM_TOL or abs(float(q.sum()) - 1.0) > MARGINAL_SUM_TOL:
        raise ValueError("marginals must each sum to 1 within 1e-6")
    p = np.maximum(p, 0.0)
    q = np.maximum(q, 0.0)
    p = p / p.sum()
    q = q / q.sum()
    omega = _transport_simplex(p, q, cost)
    plan = TransportPlan(omega, p, q)
    return plan, float((omega * cost).sum())


def gmmot(p: GaussianMixture, q: GaussianMixture) -> TransportPlan:
    """Optimal component coupling between two mixtures under the W2 cost."""
    plan, _ = solve_transport(p.weights, q.weights, mixture_cost(p, q, beta=0.0))
    return plan


def mw2_sq(p: GaussianMixture, q: GaussianMixture) -> float:
    """Squared mixture-Wasserstein distance (optimal transport objective)."""
    _, objective = solve_transport(p.weights, q.weights, mixture_cost(p, q, beta=0.0))
    return objective


def smw2_sq(p: GaussianMixture, q: GaussianMixture, beta: float) -> float:
    """Squared supervised mixture-Wasserstein distance.

    The component cost is augmented with ``beta`` times the squared Euclidean
    distance between soft-label vectors; ``beta=0`` recovers ``mw2_sq``.
    """
    _, objective = solve_transport(p.weights, q.weights, mixture_cost(p, q, beta=beta))
    return objective


def transport_params(
    plan: TransportPlan, source_weights, target: GaussianMixture
) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    """Barycentric image of every source component's parameters under a plan.

    Row i of the output is the row-normalized plan applied to the target
    parameters: sum_j (omega_ij / p_i) * (target parameter j). Requires every
    source weight to be strictly positive.
    """
    source_weights = np.asarray(source_weights, dtype=float).ravel()
    k_p, k_q = plan.shape
    if source_weights.size != k_p:
        raise ValueError("source_weights length does not match the plan's rows")
    if k_q != target.n_components:
        raise ValueError("plan's column count does not match the target mixture")
    atol = _marginal_atol(k_p, k_q)
    if np.max(np.abs(plan.row_marginal - source_weights)) > atol:
        raise ValueError("plan row marginal does not match source_weights")
    if np.any(source_weights <= 0.0):
        raise ValueError("source weights must be strictly positive to map parameters")
    norm = plan.omega / source_weights[:, None]
    mapped_means = norm @ target.means
    mapped_stds = norm @ target.stds
    mapped_labels = None if target.labels is None else norm @ target.labels
    return mapped_means, mapped_stds, mapped_labels


def plan_to_dict(plan: TransportPlan, objective: float) -> dict:
    return {
        "omega": plan.omega.tolist(),
        "p": plan.row_marginal.tolist(),
        "q": plan.col_marginal.tolist(),
        "objective": float(objective),
    }
