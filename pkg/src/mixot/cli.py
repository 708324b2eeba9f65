"""Command-line front end: fitting, distances, barycenters, adaptation runs.

Exit codes: 0 success, 1 usage error, 2 numerical failure (the failing stage
is named on stderr). Every artifact-producing run writes a manifest with the
fully resolved configuration and seed next to its outputs.
"""

from __future__ import annotations

import argparse
import contextlib
import datetime
import math
import os
import sys
from dataclasses import asdict

import numpy as np

from . import __version__, util
from .barycenter import BarycenterConfig, smw_barycenter
from .core import (
    DivergenceError,
    EmConfig,
    em_fit,
    fit_labeled,
    load_gmm,
    map_classify,
    sample,
    save_gmm,
)
from .datasets import ToyConfig, load_csv, make_toy, save_csv
from .msda import DadilConfig, dadil_fit, dictionary_to_dict, gmm_wbt
from .transport import mixture_cost, plan_to_dict, solve_transport
from .core import LabeledDataset


class UsageError(Exception):
    pass


class StageError(Exception):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage


@contextlib.contextmanager
def _stage(name: str):
    try:
        yield
    except (ValueError, RuntimeError, FloatingPointError) as exc:
        raise StageError(name, exc) from exc


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _write_manifest(manifest_path: str, command: str, config: dict, seed: int, outputs: list[str]):
    manifest = {
        "command": command,
        "resolved_config": config,
        "seed": int(seed),
        "version": __version__,
        "outputs": outputs,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    util.write_json_atomic(manifest_path, manifest)


def _dir_manifest(out_dir: str) -> str:
    return os.path.join(out_dir, "manifest.json")


def _file_manifest(out_file: str) -> str:
    return os.fspath(out_file) + ".manifest.json"


def _load_dataset(path) -> LabeledDataset:
    if not os.path.exists(path):
        raise UsageError(f"no such file: {path}")
    try:
        return load_csv(path)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _load_model(path):
    if not os.path.exists(path):
        raise UsageError(f"no such file: {path}")
    try:
        return load_gmm(path)
    except (ValueError, KeyError) as exc:
        raise UsageError(f"{path}: invalid model file: {exc}") from exc


def _fit_domains(args):
    sources = [_load_dataset(p) for p in args.sources.split(",")]
    target = _load_dataset(args.target)
    for idx, src in enumerate(sources):
        if src.labels is None:
            raise UsageError(f"source dataset {idx} has no labels")
    n_classes = max(int(ds.labels.max()) for ds in sources) + 1
    k_target = args.k if args.k is not None else args.k_per_class * n_classes
    with _stage("fit source mixtures"):
        source_gmms = [
            fit_labeled(ds, args.k_per_class,
                        EmConfig(args.k_per_class, args.em_iters, args.em_tol, args.s_min,
                                 util.child_seed(args.seed, 10, idx)),
                        n_classes=n_classes)
            for idx, ds in enumerate(sources)
        ]
    with _stage("fit target mixture"):
        target_gmm = em_fit(
            target.features,
            EmConfig(k_target, args.em_iters, args.em_tol, args.s_min,
                     util.child_seed(args.seed, 11)),
        )
    return sources, target, source_gmms, target_gmm, n_classes


def _report_accuracy(gmm, dataset: LabeledDataset) -> float | None:
    if dataset.labels is None:
        return None
    predicted, _ = map_classify(gmm, dataset.features)
    return float(np.mean(predicted == dataset.labels))


def _cmd_toy_gen(args) -> int:
    cfg = ToyConfig(
        n_domains=args.domains,
        n_classes=args.classes,
        n_per_class=args.per_class,
        seed=args.seed,
    )
    with _stage("toy synthesis"):
        domains = make_toy(cfg)
    os.makedirs(args.out, exist_ok=True)
    outputs = []
    for idx, dataset in enumerate(domains):
        name = f"domain{idx}.csv"
        save_csv(dataset, os.path.join(args.out, name))
        outputs.append(name)
    config = asdict(cfg)
    config["shift_step"] = list(config["shift_step"])
    _write_manifest(_dir_manifest(args.out), "toy-gen", config, args.seed, outputs)
    print(f"wrote {len(outputs)} domains to {args.out}")
    return 0


def _cmd_fit_gmm(args) -> int:
    if (args.k is None) == (args.k_per_class is None):
        raise UsageError("provide exactly one of --k or --k-per-class")
    dataset = _load_dataset(args.data)
    cfg = EmConfig(
        n_components=args.k if args.k is not None else args.k_per_class,
        max_iter=args.iters,
        tol=args.tol,
        s_min=args.s_min,
        seed=args.seed,
    )
    with _stage("EM fit"):
        if args.k is not None:
            gmm = em_fit(dataset.features, cfg)
        else:
            if dataset.labels is None:
                raise UsageError("--k-per-class requires a labeled dataset")
            gmm = fit_labeled(dataset, args.k_per_class, cfg)
    save_gmm(args.out, gmm)
    _write_manifest(_file_manifest(args.out), "fit-gmm",
                    {**asdict(cfg), "data": args.data, "k_per_class": args.k_per_class},
                    args.seed, [os.path.basename(args.out)])
    print(f"fitted {gmm.n_components}-component mixture -> {args.out}")
    return 0


def _cmd_mw2(args) -> int:
    a = _load_model(args.a)
    b = _load_model(args.b)
    with _stage("transport solve"):
        cost = mixture_cost(a, b, beta=args.beta)
        _, objective = solve_transport(a.weights, b.weights, cost)
    value = math.sqrt(max(objective, 0.0))
    print(format(value, ".17g"))
    if args.out:
        util.write_json_atomic(args.out, {"distance": value, "squared": objective, "beta": args.beta})
    return 0


def _cmd_gmmot(args) -> int:
    a = _load_model(args.a)
    b = _load_model(args.b)
    with _stage("transport solve"):
        cost = mixture_cost(a, b, beta=args.beta)
        plan, objective = solve_transport(a.weights, b.weights, cost)
    util.write_json_atomic(args.out, plan_to_dict(plan, objective))
    _write_manifest(_file_manifest(args.out), "gmmot",
                    {"a": args.a, "b": args.b, "beta": args.beta},
                    0, [os.path.basename(args.out)])
    print(f"objective {objective:.12g} -> {args.out}")
    return 0


def _cmd_barycenter(args) -> int:
    models = [_load_model(p) for p in args.sources.split(",")]
    if args.coords is not None:
        lam = np.asarray([float(tok) for tok in args.coords.split(",")], dtype=float)
    else:
        lam = np.full(len(models), 1.0 / len(models))
    cfg = BarycenterConfig(
        n_components=args.k, beta=args.beta, tol=args.tol, max_iter=args.iters,
        seed=args.seed, s_min=args.s_min,
    )
    with _stage("barycenter"):
        gmm, trace = smw_barycenter(models, lam, cfg, threads=args.threads)
    os.makedirs(args.out, exist_ok=True)
    save_gmm(os.path.join(args.out, "barycenter.json"), gmm)
    util.write_json_atomic(os.path.join(args.out, "trace.json"), list(trace.losses))
    _write_manifest(_dir_manifest(args.out), "barycenter",
                    {**asdict(cfg), "sources": args.sources, "coords": lam.tolist()},
                    args.seed, ["barycenter.json", "trace.json"])
    print(f"barycenter converged={trace.converged} loss={trace.losses[-1]:.6g} -> {args.out}")
    return 0


def _cmd_wbt(args) -> int:
    sources, target, source_gmms, target_gmm, n_classes = _fit_domains(args)
    cfg = BarycenterConfig(
        n_components=args.k_per_class * n_classes, beta=args.beta, tol=args.tol,
        max_iter=args.iters, seed=util.child_seed(args.seed, 12), s_min=args.s_min,
    )
    with _stage("barycenter transport"):
        result = gmm_wbt(source_gmms, target_gmm, cfg, threads=args.threads)
    os.makedirs(args.out, exist_ok=True)
    outputs = ["target_gmm.json", "barycenter_trace.json"]
    save_gmm(os.path.join(args.out, "target_gmm.json"), result.target_gmm)
    util.write_json_atomic(os.path.join(args.out, "barycenter_trace.json"), list(result.loss_trace))
    accuracy = _report_accuracy(result.target_gmm, target)
    _write_manifest(_dir_manifest(args.out), "wbt",
                    {**asdict(cfg), "sources": args.sources, "target": args.target,
                     "k_per_class": args.k_per_class,
                     "accuracy": accuracy},
                    args.seed, outputs)
    if accuracy is not None:
        print(f"target accuracy {accuracy:.4f}")
    print(f"adapted mixture -> {args.out}")
    return 0


def _cmd_dadil(args) -> int:
    sources, target, source_gmms, target_gmm, n_classes = _fit_domains(args)
    n_atoms = args.atoms if args.atoms is not None else len(source_gmms) + 1
    cfg = DadilConfig(
        n_atoms=n_atoms,
        k_atom=target_gmm.n_components,
        eta=args.eta,
        n_iter=args.iters,
        beta=args.beta,
        s_min=args.s_min,
        seed=util.child_seed(args.seed, 13),
    )
    with _stage("dictionary learning"):
        dictionary, result = dadil_fit(source_gmms, target_gmm, cfg, threads=args.threads)
    os.makedirs(args.out, exist_ok=True)
    util.write_json_atomic(os.path.join(args.out, "dictionary.json"), dictionary_to_dict(dictionary))
    util.write_json_atomic(os.path.join(args.out, "loss_trace.json"), list(result.loss_trace))
    util.write_json_atomic(
        os.path.join(args.out, "coords_trace.json"),
        [c.tolist() for c in (result.coords_trace or ())],
    )
    save_gmm(os.path.join(args.out, "target_gmm.json"), result.target_gmm)
    outputs = ["dictionary.json", "loss_trace.json", "coords_trace.json", "target_gmm.json"]
    accuracy = _report_accuracy(result.target_gmm, target)
    _write_manifest(_dir_manifest(args.out), "dadil",
                    {**asdict(cfg), "sources": args.sources, "target": args.target,
                     "k_per_class": args.k_per_class, "accuracy": accuracy},
                    args.seed, outputs)
    if accuracy is not None:
        print(f"target accuracy {accuracy:.4f}")
    print(f"dictionary -> {args.out}")
    return 0


def _cmd_classify(args) -> int:
    gmm = _load_model(args.model)
    if args.mode == "map":
        dataset = _load_dataset(args.data)
        with _stage("classification"):
            predicted, _ = map_classify(gmm, dataset.features)
        save_csv(LabeledDataset(dataset.features, predicted), args.out)
        accuracy = None
        if dataset.labels is not None:
            accuracy = float(np.mean(predicted == dataset.labels))
            print(f"accuracy {accuracy:.4f}")
    else:
        with _stage("sampling"):
            points, _, class_ids = sample(gmm, args.n, args.seed)
        save_csv(LabeledDataset(points, class_ids), args.out)
        accuracy = None
    _write_manifest(_file_manifest(args.out), "classify",
                    {"model": args.model, "mode": args.mode, "n": args.n, "accuracy": accuracy},
                    args.seed, [os.path.basename(args.out)])
    print(f"wrote {args.out}")
    return 0


def _add_em_flags(parser):
    parser.add_argument("--k", type=int, default=None, help="target mixture component count")
    parser.add_argument("--k-per-class", type=int, default=2, help="components per class for source fits")
    parser.add_argument("--em-iters", type=int, default=100, help="EM iteration cap")
    parser.add_argument("--em-tol", type=float, default=1e-5, help="EM log-likelihood tolerance")


def build_parser() -> _Parser:
    parser = _Parser(prog="mixot", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("toy-gen", help="generate the synthetic shifted-classification datasets")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--domains", type=int, default=4)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--per-class", type=int, default=200)
    p.set_defaults(func=_cmd_toy_gen)

    p = sub.add_parser("fit-gmm", help="fit a mixture to a dataset by EM")
    p.add_argument("--data", required=True, help="input CSV")
    p.add_argument("--out", required=True, help="output model JSON")
    p.add_argument("--k", type=int, default=None, help="component count (unlabeled fit)")
    p.add_argument("--k-per-class", type=int, default=None, help="components per class (labeled fit)")
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-5)
    p.add_argument("--s-min", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_fit_gmm)

    p = sub.add_parser("mw2", help="mixture-Wasserstein distance between two models")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--beta", type=float, default=0.0, help="label cost weight (requires labeled models)")
    p.add_argument("--out", default=None, help="optional JSON output")
    p.set_defaults(func=_cmd_mw2)

    p = sub.add_parser("gmmot", help="optimal component coupling between two models")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--out", required=True, help="plan JSON output")
    p.set_defaults(func=_cmd_gmmot)

    p = sub.add_parser("barycenter", help="barycenter of labeled mixture models")
    p.add_argument("--sources", required=True, help="comma-separated model JSON paths")
    p.add_argument("--coords", default=None, help="comma-separated barycentric coordinates")
    p.add_argument("--k", type=int, required=True, help="barycenter component count")
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--s-min", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_barycenter)

    p = sub.add_parser("wbt", help="barycenter-transport adaptation from CSV datasets")
    p.add_argument("--sources", required=True, help="comma-separated labeled CSV paths")
    p.add_argument("--target", required=True, help="target CSV path")
    p.add_argument("--out", required=True, help="output directory")
    _add_em_flags(p)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--s-min", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=_cmd_wbt)

    p = sub.add_parser("dadil", help="dictionary-learning adaptation from CSV datasets")
    p.add_argument("--sources", required=True, help="comma-separated labeled CSV paths")
    p.add_argument("--target", required=True, help="target CSV path")
    p.add_argument("--out", required=True, help="output directory")
    _add_em_flags(p)
    p.add_argument("--atoms", type=int, default=None, help="atom count (default: sources + 1)")
    p.add_argument("--eta", type=float, default=0.1, help="learning rate")
    p.add_argument("--iters", type=int, default=200)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--s-min", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=_cmd_dadil)

    p = sub.add_parser("classify", help="MAP-classify a dataset or export labeled samples")
    p.add_argument("--model", required=True, help="labeled model JSON")
    p.add_argument("--data", default=None, help="input CSV (map mode)")
    p.add_argument("--mode", choices=("map", "sample"), default="map")
    p.add_argument("--n", type=int, default=1000, help="sample count (sample mode)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output CSV")
    p.set_defaults(func=_cmd_classify)

    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "classify" and args.mode == "map" and args.data is None:
            raise UsageError("--data is required in map mode")
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except StageError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
