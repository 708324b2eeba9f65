"""Multi-source domain adaptation on top of mixture optimal transport.

Two strategies over fitted domain mixtures:

* ``gmm_wbt`` - compute the barycenter of the labeled source mixtures, couple
  it to the unlabeled target mixture, and transport the barycenter parameters
  onto the target while keeping the barycenter's soft labels.
* ``dadil_fit`` - dictionary learning: express every domain mixture as a
  barycenter of ``C`` learned labeled atom mixtures with one barycentric
  coordinate vector per domain, optimized by projected gradient descent with
  all transport plans frozen per gradient evaluation. The target's labeled
  reconstruction supplies target supervision.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import util
from .barycenter import (
    BarycenterConfig,
    _solve_barycenter,
    _solve_barycenter_state,
    _validate_simplex_lam,
    component_cost_arrays,
)
from .core import DEFAULT_S_MIN, DivergenceError, GaussianMixture, gmm_from_dict, gmm_to_dict
from .transport import mixture_cost, solve_transport, transport_params


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-based, exact)."""
    v = np.asarray(v, dtype=float).ravel()
    if not np.all(np.isfinite(v)):
        raise ValueError("cannot project a non-finite vector")
    if v.size == 1:
        return np.ones(1)
    # The projection is invariant to shifts along the all-ones direction;
    # anchoring the maximum at 0 keeps the threshold search well conditioned
    # for arbitrarily large inputs.
    v = v - v.max()
    u = np.sort(v)[::-1]
    cumulative = np.cumsum(u)
    ks = np.arange(1, v.size + 1)
    rho = np.nonzero(u + (1.0 - cumulative) / ks > 0)[0][-1]
    tau = (1.0 - cumulative[rho]) / (rho + 1.0)
    return np.maximum(v + tau, 0.0)


def project_nonneg(v: np.ndarray, s_min: float) -> np.ndarray:
    """Elementwise floor at ``s_min``."""
    return np.maximum(np.asarray(v, dtype=float), s_min)


def softmax_rows(u: np.ndarray) -> np.ndarray:
    shifted = u - u.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


class Adam:
    """Adam with bias correction; state is kept per parameter block."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self, params: dict, grads: dict) -> dict:
        self.t += 1
        out = {}
        for name, p in params.items():
            g = grads[name]
            m = self._m.get(name)
            v = self._v.get(name)
            if m is None:
                m = np.zeros_like(p)
                v = np.zeros_like(p)
            m = self.beta1 * m + (1.0 - self.beta1) * g
            v = self.beta2 * v + (1.0 - self.beta2) * (g * g)
            self._m[name] = m
            self._v[name] = v
            m_hat = m / (1.0 - self.beta1**self.t)
            v_hat = v / (1.0 - self.beta2**self.t)
            out[name] = p - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return out


class Sgd:
    """Plain gradient step, mainly for debugging the projected dynamics."""

    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: dict, grads: dict) -> dict:
        return {name: p - self.lr * grads[name] for name, p in params.items()}


@dataclass(frozen=True)
class DadilConfig:
    """Dictionary-learning knobs.

    ``inner_tol`` / ``inner_max_iter`` bound the per-step barycenter solves,
    which are warm-started across outer iterations.
    """

    n_atoms: int
    k_atom: int
    eta: float = 0.1
    n_iter: int = 200
    beta: float = 1.0
    inner_tol: float = 1e-5
    inner_max_iter: int = 20
    s_min: float = DEFAULT_S_MIN
    seed: int = 0
    optimizer: str = "adam"

    def __post_init__(self):
        if self.n_atoms < 1 or self.k_atom < 1:
            raise ValueError("n_atoms and k_atom must be positive")
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.n_iter < 1:
            raise ValueError("n_iter must be positive")
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if self.inner_tol <= 0 or self.inner_max_iter < 1:
            raise ValueError("inner barycenter budget must be positive")
        if self.s_min <= 0:
            raise ValueError("s_min must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass(frozen=True)
class Dictionary:
    """Learned atoms (means, stds, label logits) plus per-domain coordinates.

    ``coords`` has one row per source domain and a final row for the target;
    every row lies on the simplex over atoms. Atom labels are the row-wise
    softmax of ``logits``.
    """

    means: np.ndarray  # (C, K, d)
    stds: np.ndarray  # (C, K, d)
    logits: np.ndarray  # (C, K, n_classes)
    coords: np.ndarray  # (N + 1, C)

    def __post_init__(self):
        means = np.asarray(self.means, dtype=float)
        stds = np.asarray(self.stds, dtype=float)
        logits = np.asarray(self.logits, dtype=float)
        coords = np.asarray(self.coords, dtype=float)
        if means.ndim != 3 or stds.shape != means.shape:
            raise ValueError("means and stds must share shape (n_atoms, k_atom, d)")
        if logits.ndim != 3 or logits.shape[:2] != means.shape[:2]:
            raise ValueError("logits must have shape (n_atoms, k_atom, n_classes)")
        if coords.ndim != 2 or coords.shape[1] != means.shape[0]:
            raise ValueError("coords must have one column per atom")
        if np.any(stds <= 0):
            raise ValueError("atom std entries must be strictly positive")
        row_err = np.abs(coords.sum(axis=1) - 1.0)
        if np.any(coords < -1e-9) or np.any(row_err > 1e-9):
            raise ValueError("every coords row must lie on the simplex")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "stds", stds)
        object.__setattr__(self, "logits", logits)
        object.__setattr__(self, "coords", coords)

    @property
    def n_atoms(self) -> int:
        return self.means.shape[0]

    @property
    def k_atom(self) -> int:
        return self.means.shape[1]

    @property
    def dim(self) -> int:
        return self.means.shape[2]

    @property
    def n_classes(self) -> int:
        return self.logits.shape[2]

    @property
    def labels(self) -> np.ndarray:
        return softmax_rows(self.logits)

    @property
    def atoms(self) -> list[GaussianMixture]:
        uniform = np.full(self.k_atom, 1.0 / self.k_atom)
        labels = self.labels
        return [
            GaussianMixture(uniform, self.means[c], self.stds[c], labels[c])
            for c in range(self.n_atoms)
        ]


@dataclass(frozen=True)
class DadilGradients:
    """Gradients of the dictionary loss, pre-projection for stds and coords."""

    means: np.ndarray
    stds: np.ndarray
    logits: np.ndarray
    coords: np.ndarray


@dataclass(frozen=True)
class AdaptationResult:
    target_gmm: GaussianMixture
    loss_trace: tuple[float, ...]
    coords_trace: tuple[np.ndarray, ...] | None = None


def _check_domains(sources, target):
    if len(sources) == 0:
        raise ValueError("need at least one source mixture")
    d = sources[0].dim
    n_classes = sources[0].n_classes
    for idx, src in enumerate(sources):
        if src.labels is None:
            raise ValueError(f"source mixture {idx} must be labeled")
        if src.dim != d or src.n_classes != n_classes:
            raise ValueError(f"source mixture {idx} has inconsistent shape")
    if target.labels is not None:
        raise ValueError("target mixture must be unlabeled")
    if target.dim != d:
        raise ValueError(f"target dimension {target.dim} does not match sources ({d})")
    return d, n_classes


def gmm_wbt(sources, target: GaussianMixture, cfg: BarycenterConfig, threads: int = 1) -> AdaptationResult:
    """Barycenter-then-transport adaptation.

    The labeled source barycenter is coupled to the target mixture and every
    barycenter component's mean/std is replaced by its barycentric image under
    the optimal plan; the barycenter's labels are kept. Returns the resulting
    labeled target-domain mixture with uniform component weights.
    """
    _check_domains(sources, target)
    lam = np.full(len(sources), 1.0 / len(sources))
    bary, trace, _ = _solve_barycenter(sources, lam, cfg, labeled=True, threads=threads)
    plan, _ = solve_transport(bary.weights, target.weights, mixture_cost(bary, target, beta=0.0))
    means, stds, _ = transport_params(plan, bary.weights, target)
    adapted = GaussianMixture(bary.weights, means, np.maximum(stds, cfg.s_min), bary.labels)
    return AdaptationResult(adapted, trace.losses, None)


def _inner_config(cfg: DadilConfig, domain: int, k: int) -> BarycenterConfig:
    return BarycenterConfig(
        n_components=k,
        beta=cfg.beta,
        tol=cfg.inner_tol,
        max_iter=cfg.inner_max_iter,
        seed=util.child_seed(cfg.seed, 1, domain),
        s_min=cfg.s_min,
    )


def _loss_and_grads(means, stds, logits, coords, measures, cfg: DadilConfig, warm, threads):
    """One frozen-plan evaluation of the dictionary loss and its gradients.

    For each domain the barycenter of the atoms is solved (warm-started), its
    final per-atom plans freeze the linear map from atom parameters to
    barycenter parameters, and one outer transport plan couples the domain
    mixture to the barycenter. With every plan frozen the loss is quadratic in
    the parameters, so the chain rule through the linear maps and the label
    softmax gives the exact local gradient.
    """
    n_atoms, k_atom, d = means.shape
    labels = softmax_rows(logits)
    uniform = np.full(k_atom, 1.0 / k_atom)
    atoms = [GaussianMixture(uniform, means[c], stds[c], labels[c]) for c in range(n_atoms)]

    def solve_domain(idx):
        return _solve_barycenter_state(
            atoms, coords[idx], _inner_config(cfg, idx, k_atom), labeled=True, init_state=warm[idx]
        )

    indices = range(len(measures))
    if threads > 1 and len(measures) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            solved = list(pool.map(solve_domain, indices))
    else:
        solved = [solve_domain(idx) for idx in indices]

    loss = 0.0
    g_means = np.zeros_like(means)
    g_stds = np.zeros_like(stds)
    g_labels = np.zeros_like(labels)
    g_coords = np.zeros_like(coords)
    barys = []
    for idx, measure in enumerate(measures):
        (b_means, b_stds, b_labels), _, inner_plans = solved[idx]
        barys.append((b_means, b_stds, b_labels))
        maps = [plan.omega / plan.row_marginal[:, None] for plan in inner_plans]

        labeled = measure.labels is not None
        beta = cfg.beta if labeled else 0.0
        cost = component_cost_arrays(
            measure.means, measure.stds, measure.labels, b_means, b_stds, b_labels, beta
        )
        outer, objective = solve_transport(measure.weights, uniform, cost)
        loss += objective

        col_mass = outer.col_marginal[:, None]
        grad_bm = 2.0 * (col_mass * b_means - outer.omega.T @ measure.means)
        grad_bs = 2.0 * (col_mass * b_stds - outer.omega.T @ measure.stds)
        grad_bv = None
        if labeled:
            grad_bv = 2.0 * beta * (col_mass * b_labels - outer.omega.T @ measure.labels)

        for c in range(n_atoms):
            weight = coords[idx, c]
            mapped_m = maps[c] @ means[c]
            mapped_s = maps[c] @ stds[c]
            mapped_v = maps[c] @ labels[c]
            g_means[c] += weight * (maps[c].T @ grad_bm)
            g_stds[c] += weight * (maps[c].T @ grad_bs)
            contribution = float((grad_bm * mapped_m).sum() + (grad_bs * mapped_s).sum())
            if labeled:
                g_labels[c] += weight * (maps[c].T @ grad_bv)
                contribution += float((grad_bv * mapped_v).sum())
            g_coords[idx, c] = contribution

    # Back through the row-wise softmax that defines the atom labels.
    dots = (g_labels * labels).sum(axis=-1, keepdims=True)
    g_logits = labels * (g_labels - dots)
    return loss, DadilGradients(g_means, g_stds, g_logits, g_coords), barys


def dadil_loss_grad(
    dictionary: Dictionary,
    measures,
    cfg: DadilConfig,
    warm_start=None,
    return_barycenters: bool = False,
):
    """Dictionary loss and its frozen-plan gradients.

    ``measures`` holds one mixture per row of ``dictionary.coords``; labeled
    mixtures contribute the label-augmented distance, unlabeled ones the plain
    mixture-Wasserstein distance. Gradients for stds and coords are taken
    before their respective projections.
    """
    if len(measures) != dictionary.coords.shape[0]:
        raise ValueError("need exactly one measure per coords row")
    if dictionary.n_atoms != cfg.n_atoms or dictionary.k_atom != cfg.k_atom:
        raise ValueError("dictionary shape does not match the config's n_atoms/k_atom")
    for measure in measures:
        if measure.dim != dictionary.dim:
            raise ValueError("measure dimension does not match the dictionary")
        if measure.labels is not None and measure.n_classes != dictionary.n_classes:
            raise ValueError("measure class count does not match the dictionary")
    if warm_start is None:
        warm_start = [None] * len(measures)
    warm = [
        (item.means, item.stds, item.labels) if isinstance(item, GaussianMixture) else item
        for item in warm_start
    ]
    loss, grads, barys = _loss_and_grads(
        dictionary.means,
        dictionary.stds,
        dictionary.logits,
        dictionary.coords,
        measures,
        cfg,
        warm,
        threads=1,
    )
    if return_barycenters:
        uniform = np.full(dictionary.k_atom, 1.0 / dictionary.k_atom)
        mixtures = [GaussianMixture(uniform, m, s, v) for (m, s, v) in barys]
        return loss, grads, mixtures
    return loss, grads


def dadil_fit(
    sources,
    target: GaussianMixture,
    cfg: DadilConfig,
    threads: int = 1,
    track_coords: bool = True,
) -> tuple[Dictionary, AdaptationResult]:
    """Learn a dictionary of atom mixtures and reconstruct the target.

    Atoms start with standard-normal means, unit stds, uniform label logits;
    all coordinate rows start uniform. Each iteration evaluates the summed
    reconstruction loss over all domains, then takes one optimizer step on
    every block, flooring stds at ``cfg.s_min`` and projecting each
    coordinate row back onto the simplex. Returns the dictionary plus the
    target reconstruction (a labeled mixture) with the loss trace.
    """
    d, n_classes = _check_domains(sources, target)
    measures = list(sources) + [target]
    n_rows = len(measures)

    generator = util.rng(cfg.seed)
    means = generator.standard_normal((cfg.n_atoms, cfg.k_atom, d))
    stds = np.ones((cfg.n_atoms, cfg.k_atom, d))
    logits = np.full((cfg.n_atoms, cfg.k_atom, n_classes), 1.0 / n_classes)
    coords = np.full((n_rows, cfg.n_atoms), 1.0 / cfg.n_atoms)

    optimizer = Adam(cfg.eta) if cfg.optimizer == "adam" else Sgd(cfg.eta)
    warm = [None] * n_rows
    losses: list[float] = []
    coords_hist: list[np.ndarray] = []

    for it in range(cfg.n_iter):
        loss, grads, barys = _loss_and_grads(
            means, stds, logits, coords, measures, cfg, warm, threads
        )
        if not np.isfinite(loss):
            raise DivergenceError("dictionary loss became non-finite", it)
        losses.append(loss)
        if track_coords:
            coords_hist.append(coords.copy())

        params = {"means": means, "stds": stds, "logits": logits, "coords": coords}
        raw = {
            "means": grads.means,
            "stds": grads.stds,
            "logits": grads.logits,
            "coords": grads.coords,
        }
        stepped = optimizer.step(params, raw)
        means = stepped["means"]
        stds = project_nonneg(stepped["stds"], cfg.s_min)
        logits = stepped["logits"]
        coords = np.stack([project_simplex(row) for row in stepped["coords"]])
        assert np.all(np.abs(coords.sum(axis=1) - 1.0) <= 1e-9)
        warm = barys

    dictionary = Dictionary(means, stds, logits, coords)
    final_cfg = BarycenterConfig(
        n_components=cfg.k_atom,
        beta=cfg.beta,
        tol=min(cfg.inner_tol, 1e-9),
        max_iter=max(cfg.inner_max_iter, 100),
        seed=util.child_seed(cfg.seed, 2),
        s_min=cfg.s_min,
    )
    target_gmm, _, _ = _solve_barycenter(
        dictionary.atoms, coords[-1], final_cfg, labeled=True, initial=warm[-1], threads=threads
    )
    result = AdaptationResult(
        target_gmm, tuple(losses), tuple(coords_hist) if track_coords else None
    )
    return dictionary, result


def reconstruct(dictionary: Dictionary, lam, cfg: BarycenterConfig | None = None) -> GaussianMixture:
    """Barycenter of the dictionary atoms at the given coordinates."""
    if cfg is None:
        cfg = BarycenterConfig(n_components=dictionary.k_atom, beta=1.0, tol=1e-8, max_iter=200)
    lam = _validate_simplex_lam(np.asarray(lam, dtype=float).ravel())
    gmm, _, _ = _solve_barycenter(dictionary.atoms, lam, cfg, labeled=True)
    return gmm


def dictionary_to_dict(dictionary: Dictionary) -> dict:
    return {
        "atoms": [gmm_to_dict(atom) for atom in dictionary.atoms],
        "coords": dictionary.coords.tolist(),
    }


def dictionary_from_dict(doc: dict) -> Dictionary:
    atoms = [gmm_from_dict(entry) for entry in doc["atoms"]]
    if not atoms:
        raise ValueError("dictionary must contain at least one atom")
    means = np.stack([a.means for a in atoms])
    stds = np.stack([a.stds for a in atoms])
    for idx, atom in enumerate(atoms):
        if atom.labels is None:
            raise ValueError(f"atom {idx} is missing labels")
    # log of the soft labels is a valid softmax preimage.
    logits = np.log(np.maximum(np.stack([a.labels for a in atoms]), 1e-300))
    return Dictionary(means, stds, logits, np.asarray(doc["coords"], dtype=float))


def save_dictionary(path, dictionary: Dictionary) -> None:
    util.write_json_atomic(path, dictionary_to_dict(dictionary))


def load_dictionary(path) -> Dictionary:
    return dictionary_from_dict(util.read_json(path))
