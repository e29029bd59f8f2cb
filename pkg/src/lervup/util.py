"""Shared plumbing: canonical JSON, hashing, grids, seeding, parallel map."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable, Iterable, Sequence

import numpy as np

LIKERT_MIN = -3.0
LIKERT_MAX = 3.0


def canonical_json(obj: Any) -> str:
    """Serialize deterministically: sorted keys, tight separators, no NaN."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"),
                      ensure_ascii=False, allow_nan=False)


def sha256_of(obj: Any) -> str:
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


def atomic_write_text(path: str, text: str) -> None:
    """Write via a temp file + rename so readers never see partial content."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path: str, obj: Any, indent: int = 2) -> None:
    atomic_write_text(path, json.dumps(obj, sort_keys=True, indent=indent,
                                       ensure_ascii=False, allow_nan=False) + "\n")


def read_json(path: str) -> Any:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def eta_grid() -> np.ndarray:
    """Detection-threshold candidates 0.01 .. 1.00 in exact 0.01 steps."""
    return np.array([k / 100.0 for k in range(1, 101)])


def tau_grid() -> np.ndarray:
    """Correlation-threshold candidates -1.00 .. 1.00 in exact 0.01 steps."""
    return np.array([k / 100.0 for k in range(-100, 101)])


def clamp_rating(x: float) -> float:
    return float(min(LIKERT_MAX, max(LIKERT_MIN, x)))


def likert_level(x: float) -> int:
    """Nearest integer on the 7-point scale (ties round to even)."""
    return int(np.clip(np.rint(x), LIKERT_MIN, LIKERT_MAX))


def spawn_rngs(seed: int, n: int) -> list[np.random.Generator]:
    """n independent generators derived from one seed, index-stable."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def default_jobs() -> int:
    return os.cpu_count() or 1


def pmap(fn: Callable[[Any], Any], items: Sequence[Any], jobs: int = 1) -> list[Any]:
    """Order-preserving parallel map; results keyed by index, not arrival."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as pool:
        return list(pool.map(fn, items))


def parse_int_range(text: str) -> list[int]:
    """Parse '2..6' or '3' or '1,2,5' into a list of ints."""
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    if "," in text:
        return [int(part) for part in text.split(",") if part]
    return [int(text)]


def format_float(x: float) -> str:
    """Full-precision, round-trippable float text."""
    return repr(float(x))


def iter_chunks(seq: Sequence[Any], size: int) -> Iterable[Sequence[Any]]:
    for start in range(0, len(seq), size):
        yield seq[start:start + size]
