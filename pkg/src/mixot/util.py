"""Shared plumbing: seeded RNG streams, fixed-format JSON, atomic file writes."""

from __future__ import annotations

import os
import tempfile

import numpy as np

_SEED_MASK = (1 << 64) - 1


def rng(seed: int, *key: int) -> np.random.Generator:
    """Generator for an isolated stream derived from ``seed`` and a split key.

    Every operation in the library draws from its own stream so that any
    sub-computation is reproducible in isolation.
    """
    ss = np.random.SeedSequence(entropy=int(seed) & _SEED_MASK, spawn_key=tuple(int(k) for k in key))
    return np.random.default_rng(ss)


def child_seed(seed: int, *key: int) -> int:
    """Derive a 64-bit sub-seed for handing to a nested config."""
    ss = np.random.SeedSequence(entropy=int(seed) & _SEED_MASK, spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0])


def _format_scalar(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, int):
        return str(x)
    if isinstance(x, float):
        if not np.isfinite(x):
            raise ValueError(f"non-finite value {x!r} cannot be serialized")
        return format(x, ".17g")
    raise TypeError(f"unsupported JSON scalar {type(x).__name__}")


def dumps_json(obj) -> str:
    """Serialize to JSON with floats printed at 17 significant digits.

    Deterministic: identical inputs produce identical bytes (insertion-ordered
    keys, fixed float formatting), which is what makes artifacts byte-for-byte
    reproducible across runs.
    """
    if obj is None:
        return "null"
    if isinstance(obj, str):
        import json

        return json.dumps(obj)
    if isinstance(obj, dict):
        items = ", ".join(f"{dumps_json(str(k))}: {dumps_json(v)}" for k, v in obj.items())
        return "{" + items + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(dumps_json(v) for v in obj) + "]"
    return _format_scalar(obj)


def write_json_atomic(path, obj) -> None:
    """Write JSON via a temp file in the same directory plus rename."""
    path = os.fspath(path)
    text = dumps_json(obj) + "\n"
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_json(path):
    import json

    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
