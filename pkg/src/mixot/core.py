"""Axis-aligned Gaussian mixture models.

Mixtures are parametrized by component means, per-dimension standard
deviations, simplex weights, and (optionally) one soft-label vector per
component. Fitting is maximum likelihood via EM with a hard floor on the
standard deviations.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import logsumexp

from . import util

DEFAULT_S_MIN = 1e-3
SIMPLEX_ATOL = 1e-9

_LOG_2PI = float(np.log(2.0 * np.pi))


class UnlabeledMixtureError(ValueError):
    """The operation needs per-component soft labels but the mixture has none."""


class DivergenceError(RuntimeError):
    """An iterative optimization produced a non-finite loss."""

    def __init__(self, message: str, iteration: int):
        super().__init__(f"{message} (iteration {iteration})")
        self.iteration = iteration


def _as_float_array(x, name: str, ndim: int) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    return arr


def check_simplex(v: np.ndarray, name: str, atol: float = SIMPLEX_ATOL) -> None:
    if np.any(v < -atol):
        raise ValueError(f"{name} has negative entries")
    if abs(float(v.sum()) - 1.0) > atol:
        raise ValueError(f"{name} must sum to 1 (got {float(v.sum())!r})")


@dataclass(frozen=True)
class DiagGaussian:
    """One axis-aligned Gaussian: mean vector and per-dimension std vector."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = _as_float_array(self.mean, "mean", 1)
        std = _as_float_array(self.std, "std", 1)
        if mean.shape != std.shape:
            raise ValueError("mean and std must have the same length")
        if mean.size < 1:
            raise ValueError("dimension must be at least 1")
        if np.any(std <= 0):
            raise ValueError("std entries must be strictly positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @property
    def dim(self) -> int:
        return self.mean.size


@dataclass(frozen=True)
class GaussianMixture:
    """Weighted mixture of axis-aligned Gaussians, optionally labeled.

    ``labels``, when present, is a (K, n_classes) matrix whose rows are
    soft-label vectors on the class simplex.
    """

    weights: np.ndarray
    means: np.ndarray
    stds: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        weights = _as_float_array(self.weights, "weights", 1)
        means = _as_float_array(self.means, "means", 2)
        stds = _as_float_array(self.stds, "stds", 2)
        k = weights.size
        if means.shape != stds.shape or means.shape[0] != k:
            raise ValueError(
                f"inconsistent shapes: weights {weights.shape}, means {means.shape}, stds {stds.shape}"
            )
        if means.shape[1] < 1:
            raise ValueError("dimension must be at least 1")
        if np.any(stds <= 0):
            raise ValueError("std entries must be strictly positive")
        check_simplex(weights, "weights")
        labels = self.labels
        if labels is not None:
            labels = _as_float_array(labels, "labels", 2)
            if labels.shape[0] != k:
                raise ValueError("labels must have one row per component")
            for i in range(k):
                check_simplex(labels[i], f"labels row {i}")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "stds", stds)
        object.__setattr__(self, "labels", labels)

    @property
    def n_components(self) -> int:
        return self.weights.size

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def n_classes(self) -> int | None:
        return None if self.labels is None else self.labels.shape[1]

    @property
    def is_labeled(self) -> bool:
        return self.labels is not None

    @property
    def components(self) -> list[DiagGaussian]:
        return [DiagGaussian(self.means[k], self.stds[k]) for k in range(self.n_components)]

    @classmethod
    def from_components(cls, weights, components, labels=None) -> "GaussianMixture":
        means = np.stack([c.mean for c in components])
        stds = np.stack([c.std for c in components])
        return cls(np.asarray(weights, dtype=float), means, stds, labels)

    def without_labels(self) -> "GaussianMixture":
        return GaussianMixture(self.weights, self.means, self.stds, None)


@dataclass(frozen=True)
class LabeledDataset:
    """Feature matrix plus optional integer class labels."""

    features: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        features = _as_float_array(self.features, "features", 2)
        if features.shape[0] < 1 or features.shape[1] < 1:
            raise ValueError("dataset must have at least one sample and one feature")
        labels = self.labels
        if labels is not None:
            labels = np.asarray(labels)
            if labels.shape != (features.shape[0],):
                raise ValueError("labels must be a vector with one entry per sample")
            if not np.issubdtype(labels.dtype, np.integer):
                if np.any(labels != np.floor(labels)):
                    raise ValueError("labels must be integers")
                labels = labels.astype(np.int64)
            if np.any(labels < 0):
                raise ValueError("labels must be nonnegative class indices")
            labels = labels.astype(np.int64)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class EmConfig:
    """EM fitting knobs: component count, stopping rule, std floor, seed."""

    n_components: int
    max_iter: int = 100
    tol: float = 1e-5
    s_min: float = DEFAULT_S_MIN
    seed: int = 0

    def __post_init__(self):
        if self.n_components < 1:
            raise ValueError("n_components must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.s_min <= 0:
            raise ValueError("s_min must be positive")


def _component_log_pdf(means: np.ndarray, stds: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Per-component Gaussian log density, shape (n, K)."""
    z = (x[:, None, :] - means[None, :, :]) / stds[None, :, :]
    d = means.shape[1]
    return -0.5 * np.sum(z * z, axis=2) - np.sum(np.log(stds), axis=1)[None, :] - 0.5 * d * _LOG_2PI


def _features_of(data) -> np.ndarray:
    if isinstance(data, LabeledDataset):
        return data.features
    return _as_float_array(data, "features", 2)


def _kmeanspp_means(x: np.ndarray, k: int, generator: np.random.Generator) -> np.ndarray:
    """Seed means at data points, spreading them out k-means++ style."""
    n = x.shape[0]
    chosen = [int(generator.integers(n))]
    d2 = np.sum((x - x[chosen[0]]) ** 2, axis=1)
    for _ in range(k - 1):
        total = float(d2.sum())
        if total <= 0.0:
            nxt = int(generator.integers(n))
        else:
            nxt = int(generator.choice(n, p=d2 / total))
        chosen.append(nxt)
        d2 = np.minimum(d2, np.sum((x - x[nxt]) ** 2, axis=1))
    return x[chosen].copy()


def em_fit(data, cfg: EmConfig, return_trace: bool = False):
    """Fit an unlabeled mixture by EM.

    Initialization: k-means++ seeding of means from data points, per-coordinate
    sample std (floored at ``cfg.s_min``), uniform weights. A component whose
    total responsibility drops below 1e-10 is re-seeded at the lowest-density
    point. The average log-likelihood is non-decreasing across iterations up to
    the std floor, and the run stops when its change falls below ``cfg.tol``.

    Returns the fitted mixture; with ``return_trace=True`` also returns the
    per-iteration average log-likelihood sequence.
    """
    x = _features_of(data)
    if not np.all(np.isfinite(x)):
        raise ValueError("features contain non-finite values")
    n, d = x.shape
    k = cfg.n_components
    if n < k:
        raise ValueError(f"need at least {k} samples to fit {k} components, got {n}")

    generator = util.rng(cfg.seed)
    means = _kmeanspp_means(x, k, generator)
    base_std = np.maximum(x.std(axis=0), cfg.s_min)
    stds = np.tile(base_std, (k, 1))
    weights = np.full(k, 1.0 / k)

    trace: list[float] = []
    prev_ll = None
    for _ in range(cfg.max_iter):
        log_joint = _component_log_pdf(means, stds, x) + np.log(weights)[None, :]
        log_norm = logsumexp(log_joint, axis=1)
        avg_ll = float(log_norm.mean())
        trace.append(avg_ll)

        resp = np.exp(log_joint - log_norm[:, None])
        nk = resp.sum(axis=0)
        dead = np.flatnonzero(nk < 1e-10)
        if dead.size:
            # Re-seed collapsed components where the model is weakest and
            # restart the E-step from there.
            worst = int(np.argmin(log_norm))
            for idx in dead:
                means[idx] = x[worst]
                stds[idx] = base_std
                weights[idx] = 1.0 / k
            weights = weights / weights.sum()
            prev_ll = None
            continue

        weights = nk / n
        means = (resp.T @ x) / nk[:, None]
        second = (resp.T @ (x * x)) / nk[:, None]
        var = np.maximum(second - means * means, 0.0)
        stds = np.maximum(np.sqrt(var), cfg.s_min)

        if prev_ll is not None and abs(avg_ll - prev_ll) < cfg.tol:
            break
        prev_ll = avg_ll

    gmm = GaussianMixture(weights, means, stds)
    if return_trace:
        return gmm, trace
    return gmm


def fit_labeled(
    data: LabeledDataset, k_per_class: int, cfg: EmConfig, n_classes: int | None = None
) -> GaussianMixture:
    """Fit one mixture per class and concatenate into a labeled mixture.

    Each class-conditional density gets ``k_per_class`` components; the
    per-class weights are rescaled by the empirical class frequency so the
    concatenated weights sum to 1, and each component carries the one-hot
    label of its class.
    """
    if data.labels is None:
        raise ValueError("fit_labeled requires a labeled dataset")
    if k_per_class < 1:
        raise ValueError("k_per_class must be positive")
    labels = data.labels
    if n_classes is None:
        n_classes = int(labels.max()) + 1
    elif labels.max() >= n_classes:
        raise ValueError(f"label {int(labels.max())} out of range for {n_classes} classes")

    n = data.n_samples
    all_weights, all_means, all_stds, all_rows = [], [], [], []
    for y in range(n_classes):
        mask = labels == y
        count = int(mask.sum())
        if count < k_per_class:
            raise ValueError(
                f"class {y} has {count} samples, fewer than k_per_class={k_per_class}"
            )
        sub_cfg = replace(cfg, n_components=k_per_class, seed=util.child_seed(cfg.seed, y))
        part = em_fit(data.features[mask], sub_cfg)
        all_weights.append(part.weights * (count / n))
        all_means.append(part.means)
        all_stds.append(part.stds)
        one_hot = np.zeros((k_per_class, n_classes))
        one_hot[:, y] = 1.0
        all_rows.append(one_hot)

    return GaussianMixture(
        np.concatenate(all_weights),
        np.concatenate(all_means),
        np.concatenate(all_stds),
        np.concatenate(all_rows),
    )


def _check_query(gmm: GaussianMixture, x) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != gmm.dim:
        raise ValueError(f"query points must have dimension {gmm.dim}")
    return arr, single


def log_density(gmm: GaussianMixture, x):
    """log of the mixture density at ``x`` (vector, or matrix of rows)."""
    pts, single = _check_query(gmm, x)
    log_joint = _component_log_pdf(gmm.means, gmm.stds, pts) + np.log(gmm.weights)[None, :]
    out = logsumexp(log_joint, axis=1)
    return float(out[0]) if single else out


def responsibilities(gmm: GaussianMixture, x):
    """Posterior component probabilities P(k | x), normalized in log space."""
    pts, single = _check_query(gmm, x)
    log_joint = _component_log_pdf(gmm.means, gmm.stds, pts) + np.log(gmm.weights)[None, :]
    out = np.exp(log_joint - logsumexp(log_joint, axis=1)[:, None])
    return out[0] if single else out


def map_classify(gmm: GaussianMixture, x):
    """MAP class prediction: mix component soft labels with responsibilities.

    Returns ``(class, posterior)`` for a single point or arrays of both for a
    batch; argmax ties break toward the lowest class index.
    """
    if gmm.labels is None:
        raise UnlabeledMixtureError("map_classify requires a labeled mixture")
    pts, single = _check_query(gmm, x)
    resp = responsibilities(gmm, pts)
    posterior = resp @ gmm.labels
    classes = np.argmax(posterior, axis=1)
    if single:
        return int(classes[0]), posterior[0]
    return classes, posterior


def sample(gmm: GaussianMixture, n: int, seed: int):
    """Draw ``n`` points: component ids from the weights, then Gaussian noise.

    Returns ``(points, component_ids, class_ids)``; ``class_ids`` is None for
    unlabeled mixtures, otherwise the argmax of each drawn component's label
    row. Deterministic given the seed.
    """
    if n < 1:
        raise ValueError("n must be positive")
    generator = util.rng(seed)
    comp = generator.choice(gmm.n_components, size=n, p=gmm.weights)
    points = gmm.means[comp] + gmm.stds[comp] * generator.standard_normal((n, gmm.dim))
    class_ids = None
    if gmm.labels is not None:
        class_ids = np.argmax(gmm.labels[comp], axis=1)
    return points, comp, class_ids


def gmm_to_dict(gmm: GaussianMixture) -> dict:
    return {
        "d": gmm.dim,
        "weights": gmm.weights.tolist(),
        "means": gmm.means.tolist(),
        "stds": gmm.stds.tolist(),
        "labels": None if gmm.labels is None else gmm.labels.tolist(),
    }


def gmm_from_dict(doc: dict) -> GaussianMixture:
    gmm = GaussianMixture(
        np.asarray(doc["weights"], dtype=float),
        np.asarray(doc["means"], dtype=float),
        np.asarray(doc["stds"], dtype=float),
        None if doc.get("labels") is None else np.asarray(doc["labels"], dtype=float),
    )
    if "d" in doc and int(doc["d"]) != gmm.dim:
        raise ValueError(f"declared dimension {doc['d']} does not match means of dimension {gmm.dim}")
    return gmm


def save_gmm(path, gmm: GaussianMixture) -> None:
    util.write_json_atomic(path, gmm_to_dict(gmm))


def load_gmm(path) -> GaussianMixture:
    return gmm_from_dict(util.read_json(path))
