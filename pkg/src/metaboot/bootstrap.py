"""Deterministic, parallelizable bootstrap resampling engine.

Every trial owns a private random substream derived only from the plan seed
and the trial index, so replicate sets are bitwise identical regardless of
execution order or worker count. Two equivalent lanes share that guarantee:

- `run_replicates` evaluates an arbitrary statistic once per trial, handing
  it the trial's own `numpy` generator (PCG64 seeded via `SeedSequence` with
  the trial index as spawn key).
- `uint64_blocks` exposes the same contract in array form for vectorized
  statistics: trial t's draws are the outputs of a Philox stream keyed by the
  seed, at counter block [t*width, (t+1)*width). Any [lo, hi) trial window
  reproduces its rows exactly, which is what makes chunking safe.
"""

from __future__ import annotations

import csv
import hashlib
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from joblib import Parallel, delayed

from .data import SystemRecord
from .estimators import PairSide, PairView

JUDGMENT_LEVEL = "judgment_level"
SEGMENT_LEVEL = "segment_level"
JOINT = "joint"
SCHEMES = (JUDGMENT_LEVEL, SEGMENT_LEVEL, JOINT)

DEFAULT_TRIALS = 10_000
SIGNIFICANCE_TRIALS = 1_000

WORKERS_ENV = "METABOOT_WORKERS"
_MIN_PARALLEL_TRIALS = 4096


class ReplicateFailure(RuntimeError):
    """A statistic raised during a trial; carries the trial index."""

    def __init__(self, trial: int, cause: BaseException):
        super().__init__(f"statistic failed at trial {trial}: {cause!r}")
        self.trial = trial


@dataclass(frozen=True)
class ResamplePlan:
    seed: int
    n_trials: int = DEFAULT_TRIALS
    scheme: str = JUDGMENT_LEVEL
    subsample_size: int | None = None

    def __post_init__(self):
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ValueError("seed must be a non-negative integer")
        if self.n_trials < 1:
            raise ValueError("n_trials must be >= 1")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.subsample_size is not None and self.subsample_size < 1:
            raise ValueError("subsample_size must be >= 1 when present")


@dataclass(frozen=True)
class ReplicateSet:
    values: np.ndarray
    plan: ResamplePlan

    def __post_init__(self):
        if len(self.values) != self.plan.n_trials:
            raise ValueError("replicate vector length must equal n_trials")

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    @property
    def std(self) -> float:
        return float(np.std(self.values))


def derive_seed(root: int, *parts: str | int) -> int:
    """Mix identifying parts into an independent 64-bit child seed."""
    h = hashlib.blake2b(digest_size=8)
    h.update(struct.pack("<Q", root & (2**64 - 1)))
    for part in parts:
        if isinstance(part, str):
            h.update(b"s" + part.encode("utf-8") + b"\x00")
        else:
            h.update(b"i" + struct.pack("<q", part))
    return int.from_bytes(h.digest(), "little")


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """The private generator for one trial, a pure function of (seed, trial)."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(trial,))
    return np.random.Generator(np.random.PCG64(ss))


def uint64_blocks(seed: int, width: int, lo: int, hi: int) -> np.ndarray:
    """Raw per-trial substream blocks for trials [lo, hi), shape (hi-lo, width).

    Row t-lo is trial t's private budget of uniform uint64 draws; widths are
    padded internally to Philox's 4-output counter granularity so windows tile
    exactly.
    """
    if width < 1 or hi <= lo:
        raise ValueError("need width >= 1 and a non-empty trial window")
    wpad = -(-width // 4) * 4
    bg = np.random.Philox(key=seed, counter=lo * (wpad // 4))
    raw = np.random.Generator(bg).integers(
        0, 2**64, size=(hi - lo, wpad), dtype=np.uint64, endpoint=False
    )
    return raw[:, :width]


def indices_from_raw(raw: np.ndarray, n: int) -> np.ndarray:
    """Map raw uint64 draws to uniform indices in [0, n).

    The modulo reduction carries an O(n / 2**64) bias, which is far below
    every tolerance used here.
    """
    return (raw % np.uint64(n)).astype(np.intp, copy=False)


def _judgment_pool(source: SystemRecord | PairSide | PairView) -> int:
    if isinstance(source, SystemRecord):
        return source.judgment_count()
    if isinstance(source, PairSide):
        return source.judgment_count
    raise TypeError(f"cannot resample judgments from {type(source).__name__}")


def resample_judgments(
    source: SystemRecord | PairSide,
    rng: np.random.Generator,
    size: int | None = None,
) -> np.ndarray:
    """Draw judgment indices i.i.d. with replacement, uniform over the pool."""
    n = _judgment_pool(source)
    if n == 0:
        raise ValueError("system has no judgments to resample")
    if size is None:
        size = n
    return rng.integers(0, n, size=size)


def resample_segments_paired(
    pair: PairView, rng: np.random.Generator, size: int | None = None
) -> np.ndarray:
    """One draw of shared-segment indices, applied to both systems of a pair."""
    n = pair.n_segments
    if n == 0:
        raise ValueError("pair has no shared segments")
    if size is None:
        size = n
    return rng.integers(0, n, size=size)


def resolve_workers(workers: int | None = None) -> int:
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _run_chunk(seed: int, lo: int, hi: int, statistic: Callable) -> np.ndarray:
    out = np.empty(hi - lo, dtype=np.float64)
    for t in range(lo, hi):
        try:
            out[t - lo] = statistic(trial_rng(seed, t))
        except Exception as e:  # noqa: BLE001 - reported with trial index
            raise ReplicateFailure(t, e) from e
    return out


def run_replicates(
    plan: ResamplePlan,
    statistic: Callable[[np.random.Generator], float],
    workers: int | None = None,
) -> ReplicateSet:
    """Evaluate a statistic once per trial on the trial's private substream.

    The statistic must be a pure function of the indices it draws from the
    generator it is handed; under that contract the result is bitwise
    identical for any worker count.
    """
    n = plan.n_trials
    workers = resolve_workers(workers)
    if workers <= 1 or n < _MIN_PARALLEL_TRIALS:
        values = _run_chunk(plan.seed, 0, n, statistic)
    else:
        bounds = np.linspace(0, n, workers + 1, dtype=int)
        chunks = Parallel(n_jobs=workers)(
            delayed(_run_chunk)(plan.seed, int(lo), int(hi), statistic)
            for lo, hi in zip(bounds[:-1], bounds[1:])
            if hi > lo
        )
        values = np.concatenate(chunks)
    return ReplicateSet(values=values, plan=plan)


def load_replicates_csv(path: str | Path) -> dict[tuple[str, str, str], np.ndarray]:
    """Read externally computed per-trial system scores.

    Columns: trial, group, system, metric_id, score. Trials for each
    (group, system, metric) must cover 0..T-1 exactly once.
    """
    staged: dict[tuple[str, str, str], dict[int, float]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = ["trial", "group", "system", "metric_id", "score"]
        missing = [c for c in required if c not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"{path}: missing replicate columns {missing}")
        for row in reader:
            key = (row["group"], row["system"], row["metric_id"])
            trial = int(row["trial"])
            slot = staged.setdefault(key, {})
            if trial in slot:
                raise ValueError(f"{path}: duplicate trial {trial} for {key}")
            slot[trial] = float(row["score"])
    out: dict[tuple[str, str, str], np.ndarray] = {}
    for key, slot in staged.items():
        trials = sorted(slot)
        if trials != list(range(len(trials))):
            raise ValueError(f"{path}: non-contiguous trials for {key}")
        out[key] = np.asarray([slot[t] for t in trials], dtype=np.float64)
    return out
