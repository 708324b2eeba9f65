"""Dataset loading/saving and synthetic shifted-classification scenarios."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from . import util
from .barycenter import BarycenterConfig
from .core import EmConfig, LabeledDataset
from .msda import DadilConfig

# Base cluster layout for the synthetic scenario: class centers on a circle of
# this radius (d = 2), isotropic clusters of this std.
TOY_CLASS_RADIUS = 4.0
TOY_CLUSTER_STD = 0.6


@dataclass(frozen=True)
class ToyConfig:
    """Synthetic multi-domain scenario: a base dataset of Gaussian class
    clusters, with domain ``l`` obtained by rotating every base sample by
    ``l * rot_step`` and shifting by ``l * shift_step``."""

    n_domains: int = 4
    n_classes: int = 3
    n_per_class: int = 200
    d: int = 2
    shift_step: tuple[float, ...] = (2.0, 0.5)
    rot_step: float = math.pi / 12.0
    seed: int = 0

    def __post_init__(self):
        if self.n_domains < 2:
            raise ValueError("n_domains must be at least 2")
        if self.n_classes < 2:
            raise ValueError("n_classes must be at least 2")
        if self.n_per_class < 1:
            raise ValueError("n_per_class must be positive")
        if self.d < 1:
            raise ValueError("d must be positive")
        shift = tuple(float(s) for s in np.asarray(self.shift_step, dtype=float).ravel())
        if len(shift) != self.d:
            raise ValueError(f"shift_step must have {self.d} entries")
        if self.rot_step != 0.0 and self.d != 2:
            raise ValueError("rotation is only defined for d = 2")
        object.__setattr__(self, "shift_step", shift)


def _class_centers(n_classes: int, d: int, generator: np.random.Generator) -> np.ndarray:
    if d == 2:
        angles = 2.0 * np.pi * np.arange(n_classes) / n_classes
        return TOY_CLASS_RADIUS * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    if d == 1:
        return np.linspace(-TOY_CLASS_RADIUS, TOY_CLASS_RADIUS, n_classes)[:, None]
    dirs = generator.standard_normal((n_classes, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return TOY_CLASS_RADIUS * dirs


def make_toy(cfg: ToyConfig) -> list[LabeledDataset]:
    """Generate one labeled dataset per domain, deterministically from the seed."""
    generator = util.rng(cfg.seed)
    centers = _class_centers(cfg.n_classes, cfg.d, generator)
    blocks = []
    labels = []
    for y in range(cfg.n_classes):
        blocks.append(centers[y] + TOY_CLUSTER_STD * generator.standard_normal((cfg.n_per_class, cfg.d)))
        labels.append(np.full(cfg.n_per_class, y, dtype=np.int64))
    base = np.concatenate(blocks)
    labels = np.concatenate(labels)

    shift = np.asarray(cfg.shift_step, dtype=float)
    domains = []
    for domain in range(cfg.n_domains):
        x = base
        if cfg.d == 2 and cfg.rot_step != 0.0:
            angle = domain * cfg.rot_step
            rot = np.array(
                [[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]]
            )
            x = base @ rot.T
        x = x + domain * shift
        domains.append(LabeledDataset(x.copy(), labels.copy()))
    return domains


def save_csv(dataset: LabeledDataset, path) -> None:
    """Write ``f0,...,f{d-1},label`` rows; the label column is empty for
    unlabeled datasets. Floats carry 17 significant digits so a round trip
    is exact."""
    d = dataset.dim
    lines = [",".join([f"f{k}" for k in range(d)] + ["label"])]
    for i in range(dataset.n_samples):
        feats = [format(float(v), ".17g") for v in dataset.features[i]]
        label = "" if dataset.labels is None else str(int(dataset.labels[i]))
        lines.append(",".join(feats + [label]))
    text = "\n".join(lines) + "\n"
    directory = os.path.dirname(os.path.abspath(os.fspath(path)))
    tmp = os.fspath(path) + ".tmp"
    os.makedirs(directory, exist_ok=True)
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, os.fspath(path))


def load_csv(path) -> LabeledDataset:
    """Parse a dataset CSV, reporting malformed rows by line number."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty file")
    header = lines[0].split(",")
    if len(header) < 2 or header[-1] != "label" or any(not h.startswith("f") for h in header[:-1]):
        raise ValueError(f"{path}: line 1: expected header 'f0,...,label'")
    d = len(header) - 1

    features = []
    labels: list[int] = []
    labeled = None
    for lineno, line in enumerate(lines[1:], start=2):
        if line == "":
            continue
        parts = line.split(",")
        if len(parts) != d + 1:
            raise ValueError(f"{path}: line {lineno}: expected {d + 1} columns, got {len(parts)}")
        try:
            row = [float(tok) for tok in parts[:-1]]
        except ValueError:
            raise ValueError(f"{path}: line {lineno}: non-numeric feature value") from None
        if not all(math.isfinite(v) for v in row):
            raise ValueError(f"{path}: line {lineno}: non-finite feature value")
        token = parts[-1].strip()
        row_labeled = token != ""
        if labeled is None:
            labeled = row_labeled
        elif labeled != row_labeled:
            raise ValueError(f"{path}: line {lineno}: mixed labeled and unlabeled rows")
        if row_labeled:
            try:
                labels.append(int(token))
            except ValueError:
                raise ValueError(f"{path}: line {lineno}: unknown label token {token!r}") from None
            if labels[-1] < 0:
                raise ValueError(f"{path}: line {lineno}: negative label")
        features.append(row)

    if not features:
        raise ValueError(f"{path}: no data rows")
    return LabeledDataset(
        np.asarray(features, dtype=float),
        np.asarray(labels, dtype=np.int64) if labeled else None,
    )


@dataclass(frozen=True)
class RunConfig:
    """Resolved configuration for a full adaptation run."""

    em: EmConfig
    barycenter: BarycenterConfig
    dadil: DadilConfig
    source_paths: tuple[str, ...]
    target_path: str | None
    out_dir: str


def run_config_to_dict(cfg: RunConfig) -> dict:
    from dataclasses import asdict

    doc = {
        "em": asdict(cfg.em),
        "barycenter": asdict(cfg.barycenter),
        "dadil": asdict(cfg.dadil),
        "source_paths": list(cfg.source_paths),
        "target_path": cfg.target_path,
        "out_dir": cfg.out_dir,
    }
    return doc


def run_config_from_dict(doc: dict) -> RunConfig:
    return RunConfig(
        em=EmConfig(**doc["em"]),
        barycenter=BarycenterConfig(**doc["barycenter"]),
        dadil=DadilConfig(**doc["dadil"]),
        source_paths=tuple(doc["source_paths"]),
        target_path=doc.get("target_path"),
        out_dir=doc["out_dir"],
    )


def save_run_config(path, cfg: RunConfig) -> None:
    util.write_json_atomic(path, run_config_to_dict(cfg))


def load_run_config(path) -> RunConfig:
    cfg = run_config_from_dict(util.read_json(path))
    for src in cfg.source_paths:
        if not os.path.exists(src):
            raise ValueError(f"source path does not exist: {src}")
    if cfg.target_path is not None and not os.path.exists(cfg.target_path):
        raise ValueError(f"target path does not exist: {cfg.target_path}")
    return cfg
