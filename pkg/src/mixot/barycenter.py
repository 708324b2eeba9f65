"""Fixed-point barycenters of Gaussian mixtures under mixture-Wasserstein costs.

Block-coordinate descent: with the barycenter parameters held fixed, solve one
component-level transport problem per input measure; with the plans held
fixed, the optimal parameters are the coordinate-weighted averages of each
component's barycentric images, which is the update applied here. Both steps
decrease the objective, so the loss trace is non-increasing.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import util
from .core import DEFAULT_S_MIN, GaussianMixture, check_simplex
from .transport import (
    TransportPlan,
    _pairwise_sq_dists,
    smw2_sq,
    solve_transport,
    transport_params,
)

LAMBDA_SUM_TOL = 1e-6


@dataclass(frozen=True)
class BarycenterConfig:
    """Fixed-point solve knobs.

    ``init_from`` selects a measure whose parameters seed the barycenter
    (its component count must match ``n_components``); when None the means
    are drawn from a standard normal, stds start at 1, and soft labels start
    uniform.
    """

    n_components: int
    beta: float = 1.0
    tol: float = 1e-6
    max_iter: int = 100
    seed: int = 0
    init_from: int | None = None
    s_min: float = DEFAULT_S_MIN

    def __post_init__(self):
        if self.n_components < 1:
            raise ValueError("n_components must be positive")
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")
        if self.s_min <= 0:
            raise ValueError("s_min must be positive")


@dataclass(frozen=True)
class BarycenterTrace:
    losses: tuple[float, ...]
    iterations_run: int
    converged: bool


def _check_measures(measures, lam, labeled: bool):
    if len(measures) == 0:
        raise ValueError("need at least one input measure")
    lam = np.asarray(lam, dtype=float).ravel()
    if lam.size != len(measures):
        raise ValueError(f"lambda has {lam.size} entries for {len(measures)} measures")
    d = measures[0].dim
    for c, measure in enumerate(measures):
        if measure.dim != d:
            raise ValueError(f"measure {c} has dimension {measure.dim}, expected {d}")
    if labeled:
        n_classes = measures[0].n_classes
        for c, measure in enumerate(measures):
            if measure.labels is None:
                raise ValueError(f"measure {c} is unlabeled")
            if measure.n_classes != n_classes:
                raise ValueError(f"measure {c} has {measure.n_classes} classes, expected {n_classes}")
    return lam


def _validate_simplex_lam(lam: np.ndarray) -> np.ndarray:
    if np.any(lam < -LAMBDA_SUM_TOL) or abs(float(lam.sum()) - 1.0) > LAMBDA_SUM_TOL:
        raise ValueError("lambda must lie on the probability simplex")
    lam = np.maximum(lam, 0.0)
    return lam / lam.sum()


def _initial_state(measures, cfg: BarycenterConfig, labeled: bool):
    d = measures[0].dim
    k = cfg.n_components
    if cfg.init_from is not None:
        src = measures[cfg.init_from]
        if src.n_components != k:
            raise ValueError(
                f"init_from measure has {src.n_components} components, expected {k}"
            )
        labels = None
        if labeled:
            if src.labels is not None:
                labels = src.labels.copy()
            else:
                n_classes = measures[0].n_classes
                labels = np.full((k, n_classes), 1.0 / n_classes)
        return src.means.copy(), np.maximum(src.stds, cfg.s_min), labels
    generator = util.rng(cfg.seed)
    means = generator.standard_normal((k, d))
    stds = np.ones((k, d))
    labels = None
    if labeled:
        n_classes = measures[0].n_classes
        labels = np.full((k, n_classes), 1.0 / n_classes)
    return means, stds, labels


def component_cost_arrays(means_a, stds_a, labels_a, means_b, stds_b, labels_b, beta: float) -> np.ndarray:
    """Component cost matrix between two raw (means, stds, labels) triples."""
    cost = _pairwise_sq_dists(means_a, means_b) + _pairwise_sq_dists(stds_a, stds_b)
    if beta > 0.0:
        cost = cost + beta * _pairwise_sq_dists(labels_a, labels_b)
    return cost


def _solve_barycenter_state(
    measures, lam, cfg: BarycenterConfig, labeled: bool, init_state=None, threads: int = 1
):
    """Fixed-point iteration on raw parameter arrays.

    Returns ``((means, stds, labels), trace, plans)``. ``lam`` is used exactly
    as given (the combination step is linear in it); the public wrappers
    validate and renormalize onto the simplex, while the dictionary-learning
    gradient path needs the raw linear extension evaluated slightly off it.
    """
    lam = _check_measures(measures, lam, labeled)
    if init_state is not None:
        means, stds, labels = init_state
        means = means.copy()
        stds = np.maximum(stds, cfg.s_min)
        labels = labels.copy() if labeled else None
        if means.shape != (cfg.n_components, measures[0].dim):
            raise ValueError("warm-start state has the wrong shape")
    else:
        means, stds, labels = _initial_state(measures, cfg, labeled)
    k = cfg.n_components
    weights = np.full(k, 1.0 / k)
    beta = cfg.beta if labeled else 0.0

    def solve_one(measure):
        cost = component_cost_arrays(
            means, stds, labels, measure.means, measure.stds, measure.labels, beta
        )
        return solve_transport(weights, measure.weights, cost)

    losses: list[float] = []
    plans: list[TransportPlan] = []
    converged = False
    prev_loss = None
    lam_sum = float(lam.sum())
    for _ in range(cfg.max_iter):
        if threads > 1 and len(measures) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                solved = list(pool.map(solve_one, measures))
        else:
            solved = [solve_one(measure) for measure in measures]
        plans = [plan for plan, _ in solved]
        loss = float(sum(l * obj for l, (_, obj) in zip(lam, solved)))
        losses.append(loss)

        new_means = np.zeros_like(means)
        new_stds = np.zeros_like(stds)
        new_labels = np.zeros_like(labels) if labeled else None
        for l, plan, measure in zip(lam, plans, measures):
            if l == 0.0:
                continue
            m_c, s_c, v_c = transport_params(plan, weights, measure)
            new_means += l * m_c
            new_stds += l * s_c
            if labeled:
                new_labels += l * v_c
        means = new_means
        stds = np.maximum(new_stds, cfg.s_min)
        if labeled:
            # Row sums already equal sum(lam) up to drift; rescaling to that
            # value corrects the drift while keeping the update linear in lam
            # (rows land on the simplex whenever lam does).
            new_labels = np.maximum(new_labels, 0.0)
            labels = new_labels * (lam_sum / new_labels.sum(axis=1, keepdims=True))

        if prev_loss is not None and abs(loss - prev_loss) < cfg.tol:
            converged = True
            break
        prev_loss = loss

    trace = BarycenterTrace(tuple(losses), len(losses), converged)
    return (means, stds, labels if labeled else None), trace, plans


def _as_state(initial, labeled: bool, measures):
    if initial is None:
        return None
    if isinstance(initial, GaussianMixture):
        labels = initial.labels
        if labeled and labels is None:
            n_classes = measures[0].n_classes
            labels = np.full((initial.n_components, n_classes), 1.0 / n_classes)
        return initial.means, initial.stds, labels
    return initial


def _solve_barycenter(measures, lam, cfg: BarycenterConfig, labeled: bool, initial=None, threads: int = 1):
    """Fixed-point iteration; returns (mixture, trace, final plans)."""
    init_state = _as_state(initial, labeled, measures)
    state, trace, plans = _solve_barycenter_state(
        measures, lam, cfg, labeled, init_state=init_state, threads=threads
    )
    means, stds, labels = state
    k = cfg.n_components
    result = GaussianMixture(np.full(k, 1.0 / k), means, stds, labels)
    return result, trace, plans


def smw_barycenter(measures, lam, cfg: BarycenterConfig, initial=None, threads: int = 1):
    """Barycenter of labeled mixtures under the label-augmented cost.

    Returns the labeled barycenter (uniform component weights) and the loss
    trace. ``initial`` warm-starts the fixed point from an existing mixture.
    """
    lam = _validate_simplex_lam(np.asarray(lam, dtype=float).ravel())
    gmm, trace, _ = _solve_barycenter(measures, lam, cfg, labeled=True, initial=initial, threads=threads)
    return gmm, trace


def mw_barycenter(measures, lam, cfg: BarycenterConfig, initial=None, threads: int = 1):
    """Unlabeled variant: plain W2 component costs, no label state."""
    lam = _validate_simplex_lam(np.asarray(lam, dtype=float).ravel())
    gmm, trace, _ = _solve_barycenter(measures, lam, cfg, labeled=False, initial=initial, threads=threads)
    return gmm, trace


def barycenter_loss(bary: GaussianMixture, measures, lam, beta: float) -> float:
    """Coordinate-weighted sum of squared (supervised) mixture-Wasserstein
    distances from ``bary`` to each measure."""
    lam = np.asarray(lam, dtype=float).ravel()
    if lam.size != len(measures):
        raise ValueError(f"lambda has {lam.size} entries for {len(measures)} measures")
    check_simplex(lam, "lambda", atol=LAMBDA_SUM_TOL)
    return float(sum(l * smw2_sq(bary, measure, beta) for l, measure in zip(lam, measures)))
