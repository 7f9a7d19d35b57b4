"""Observed pairwise error and its noise / bias / variance decomposition.

All expectation terms are bootstrap fractions over label replicates. Human
labels and metric labels are always drawn from independent substreams, which
is what makes the two-class identity

    err_obs = c0 * noise + bias + c1 * variance

hold to Monte Carlo accuracy per pair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np
from joblib import Parallel, delayed

from .bootstrap import (
    JOINT,
    JUDGMENT_LEVEL,
    SEGMENT_LEVEL,
    ResamplePlan,
    derive_seed,
    indices_from_raw,
    resolve_workers,
    uint64_blocks,
)
from .data import ComparisonGroup
from .estimators import PairView, PairwiseLabel, label_sign, pair_views

STREAM_NOISE = "noise"
STREAM_METRIC = "metric"
STREAM_HUMAN_ESTIMATOR = "human-estimator"

FULL_DATA = "full_data"
REPLICATE_MAJORITY = "replicate_majority"

_CHUNK_BUDGET = 4_000_000  # raw uint64 draws held in memory at once


class DecompositionError(RuntimeError):
    """The per-pair identity check failed beyond Monte Carlo tolerance."""


def identity_tolerance(n_trials: int) -> float:
    return 4.0 / math.sqrt(n_trials)


@dataclass(frozen=True)
class DecompositionResult:
    group_id: str
    system_a: str
    system_b: str
    err_obs: float
    noise: float
    bias: int
    variance: float
    c0: float
    c0_noise: float
    c1: int
    c1_var: float
    optimal_label: PairwiseLabel
    main_prediction: PairwiseLabel
    n_trials: int
    seed: int


@dataclass(frozen=True)
class DatasetDecomposition:
    """Per-pair results plus unweighted dataset averages."""

    estimator: str
    results: tuple[DecompositionResult, ...]

    def _mean(self, attr: str) -> float:
        return float(np.mean([getattr(r, attr) for r in self.results]))

    @property
    def err_obs(self) -> float:
        return self._mean("err_obs")

    @property
    def noise(self) -> float:
        return self._mean("noise")

    @property
    def bias(self) -> float:
        return self._mean("bias")

    @property
    def variance(self) -> float:
        return self._mean("variance")

    @property
    def c0_noise(self) -> float:
        return self._mean("c0_noise")

    @property
    def c1_var(self) -> float:
        return self._mean("c1_var")


def _pair_seed(seed: int, view: PairView, stream: str) -> int:
    return derive_seed(seed, view.group_id, view.system_a, view.system_b, stream)


def _chunk_bounds(n_trials: int, width: int) -> list[tuple[int, int]]:
    rows = max(1, _CHUNK_BUDGET // max(width, 1))
    return [(lo, min(lo + rows, n_trials)) for lo in range(0, n_trials, rows)]


def human_diff_replicates(
    view: PairView, plan: ResamplePlan, stream: str = STREAM_NOISE
) -> np.ndarray:
    """Resampled human score differences, one per trial.

    Only the sign (and exact zero) of each value is meaningful: the
    judgment_level scheme returns the cross-multiplied sum difference so
    integer-valued data compares exactly. `judgment_level` resamples each
    system's judgment pool i.i.d.; `joint` resamples shared segments first and
    then one judgment per chosen segment on each side, so test-set variation
    reaches the human estimator too.
    """
    if plan.scheme not in (JUDGMENT_LEVEL, JOINT):
        raise ValueError(f"human resampling needs judgment_level or joint, got {plan.scheme!r}")
    seed = _pair_seed(plan.seed, view, stream)
    out = np.empty(plan.n_trials, dtype=np.float64)
    if plan.scheme == JUDGMENT_LEVEL:
        na, nb = view.a.judgment_count, view.b.judgment_count
        if na == 0 or nb == 0:
            raise ValueError("both systems need at least one judgment")
        sa = plan.subsample_size or na
        sb = plan.subsample_size or nb
        width = sa + sb
        va, vb = view.a.judgments, view.b.judgments
        for lo, hi in _chunk_bounds(plan.n_trials, width):
            raw = uint64_blocks(seed, width, lo, hi)
            sums_a = va[indices_from_raw(raw[:, :sa], na)].sum(axis=1)
            sums_b = vb[indices_from_raw(raw[:, sa:], nb)].sum(axis=1)
            out[lo:hi] = sums_a * sb - sums_b * sa
    else:
        pool = view.segs_with_judgments
        m = len(pool)
        if m == 0:
            raise ValueError("no shared segment carries judgments on both sides")
        k = plan.subsample_size or m
        counts_a = np.diff(view.a.seg_ptr)
        counts_b = np.diff(view.b.seg_ptr)
        starts_a = view.a.seg_ptr[:-1]
        starts_b = view.b.seg_ptr[:-1]
        width = 3 * k
        for lo, hi in _chunk_bounds(plan.n_trials, width):
            raw = uint64_blocks(seed, width, lo, hi)
            segs = pool[indices_from_raw(raw[:, :k], m)]
            picks_a = starts_a[segs] + (raw[:, k : 2 * k] % counts_a[segs].astype(np.uint64)).astype(np.intp)
            picks_b = starts_b[segs] + (raw[:, 2 * k :] % counts_b[segs].astype(np.uint64)).astype(np.intp)
            out[lo:hi] = view.a.judgments[picks_a].sum(axis=1) - view.b.judgments[picks_b].sum(axis=1)
    return out


def human_label_replicates(
    view: PairView, plan: ResamplePlan, stream: str = STREAM_NOISE
) -> np.ndarray:
    """Signs of resampled human differences, one per trial (int8, ties -> +1)."""
    diffs = human_diff_replicates(view, plan, stream=stream)
    return np.where(diffs < 0, -1, 1).astype(np.int8)


def metric_diff_replicates(
    view: PairView,
    metric_id: str,
    plan: ResamplePlan,
    injected: dict[tuple[str, str, str], np.ndarray] | None = None,
    stream: str = STREAM_METRIC,
) -> np.ndarray:
    """Resampled metric score differences under paired test-set resampling.

    As with the human replicates, only sign and exact zero are meaningful.
    Externally injected per-trial scores bypass internal resampling for
    metrics whose aggregation the engine cannot express.
    """
    if plan.scheme != SEGMENT_LEVEL:
        raise ValueError(f"metric resampling needs a segment_level plan, got {plan.scheme!r}")
    if injected is not None:
        key_a = (view.group_id, view.system_a, metric_id)
        key_b = (view.group_id, view.system_b, metric_id)
        if key_a not in injected or key_b not in injected:
            raise KeyError(f"injected replicates missing for {key_a} / {key_b}")
        scores_a, scores_b = injected[key_a], injected[key_b]
        if len(scores_a) < plan.n_trials or len(scores_b) < plan.n_trials:
            raise ValueError("injected replicate files carry fewer trials than the plan")
        return scores_a[: plan.n_trials] - scores_b[: plan.n_trials]

    seed = _pair_seed(plan.seed, view, stream)
    n = view.n_segments
    k = plan.subsample_size or n
    out = np.empty(plan.n_trials, dtype=np.float64)
    if metric_id in view.a.metric_scalars:
        va = view.a.metric_scalars[metric_id]
        vb = view.b.metric_scalars[metric_id]
        d = va - vb  # paired draw: both systems score the same segment multiset
        for lo, hi in _chunk_bounds(plan.n_trials, k):
            idx = indices_from_raw(uint64_blocks(seed, k, lo, hi), n)
            out[lo:hi] = d[idx].sum(axis=1)
    else:
        num_a, den_a = view.a.metric_statistics[metric_id]
        num_b, den_b = view.b.metric_statistics[metric_id]
        for lo, hi in _chunk_bounds(plan.n_trials, k * num_a.shape[1]):
            idx = indices_from_raw(uint64_blocks(seed, k, lo, hi), n)
            score_a = (num_a[idx].sum(axis=1) / den_a[idx].sum(axis=1)).mean(axis=1)
            score_b = (num_b[idx].sum(axis=1) / den_b[idx].sum(axis=1)).mean(axis=1)
            out[lo:hi] = score_a - score_b
    return out


def metric_label_replicates(
    view: PairView,
    metric_id: str,
    plan: ResamplePlan,
    injected: dict[tuple[str, str, str], np.ndarray] | None = None,
    stream: str = STREAM_METRIC,
) -> np.ndarray:
    """Signs of resampled metric differences (int8, ties -> +1)."""
    diffs = metric_diff_replicates(view, metric_id, plan, injected=injected, stream=stream)
    return np.where(diffs < 0, -1, 1).astype(np.int8)


def optimal_label(view: PairView) -> PairwiseLabel:
    """Sign of the full-data human score difference (the true-label estimate)."""
    if view.a.judgment_count == 0 or view.b.judgment_count == 0:
        raise ValueError("optimal label needs judgments on both systems")
    return view.human_label()


def main_prediction(view: PairView, metric_id: str) -> PairwiseLabel:
    """Sign of the metric difference on the full shared segment set."""
    return view.metric_label(metric_id)


def estimate_noise(view: PairView, plan: ResamplePlan) -> float:
    """P(resampled human label != optimal label): the irreducible error floor."""
    labels = human_label_replicates(view, plan, stream=STREAM_NOISE)
    return float(np.mean(labels != optimal_label(view).sign))


def estimate_variance(
    view: PairView,
    metric_id: str,
    plan: ResamplePlan,
    injected: dict | None = None,
) -> float:
    """P(resampled metric label != main prediction) under test-set resampling."""
    labels = metric_label_replicates(view, metric_id, plan, injected=injected)
    return float(np.mean(labels != main_prediction(view, metric_id).sign))


def compute_c0(
    view: PairView,
    metric_id: str,
    plan: ResamplePlan,
    injected: dict | None = None,
) -> float:
    """2 * P(resampled metric label = optimal label) - 1."""
    labels = metric_label_replicates(view, metric_id, plan, injected=injected)
    return float(2.0 * np.mean(labels == optimal_label(view).sign) - 1.0)


def compute_bias(view: PairView, metric_id: str) -> int:
    """1 when the metric's main prediction contradicts the optimal label."""
    return int(optimal_label(view).sign != main_prediction(view, metric_id).sign)


def observed_error(
    view: PairView,
    metric_id: str,
    plan: ResamplePlan,
    injected: dict | None = None,
) -> float:
    """P(resampled human label != resampled metric label).

    Each trial simulates human noise and test-set sampling jointly but
    independently: the plan's scheme picks the human-noise granularity
    (judgment_level or joint) and the metric side always resamples the shared
    segments from its own substream.
    """
    h = human_label_replicates(view, plan, stream=STREAM_NOISE)
    m = metric_label_replicates(
        view, metric_id, replace(plan, scheme=SEGMENT_LEVEL, subsample_size=None), injected=injected
    )
    return float(np.mean(h != m))


def _majority(signs: np.ndarray) -> int:
    return label_sign(float(signs.sum()))


def _pair_decomposition(
    view: PairView,
    metric_id: str,
    plan: ResamplePlan,
    label_estimation: str,
    injected: dict | None,
) -> DecompositionResult:
    h = human_label_replicates(view, plan, stream=STREAM_NOISE)
    m = metric_label_replicates(
        view, metric_id, replace(plan, scheme=SEGMENT_LEVEL, subsample_size=None), injected=injected
    )
    opt = optimal_label(view)
    main = main_prediction(view, metric_id)
    if label_estimation == REPLICATE_MAJORITY:
        opt = PairwiseLabel(sign=_majority(h), difference=opt.difference)
        main = PairwiseLabel(sign=_majority(m), difference=main.difference)
    elif label_estimation != FULL_DATA:
        raise ValueError(f"unknown label estimation mode {label_estimation!r}")
    return _assemble(view, plan, h, m, opt, main)


def _assemble(
    view: PairView,
    plan: ResamplePlan,
    h: np.ndarray,
    m: np.ndarray,
    opt: PairwiseLabel,
    main: PairwiseLabel,
) -> DecompositionResult:
    noise = float(np.mean(h != opt.sign))
    variance = float(np.mean(m != main.sign))
    bias = int(opt.sign != main.sign)
    c0 = float(2.0 * np.mean(m == opt.sign) - 1.0)
    c1 = 1 - 2 * bias
    err = float(np.mean(h != m))
    gap = abs(err - (c0 * noise + bias + c1 * variance))
    tol = identity_tolerance(plan.n_trials)
    if gap > tol:
        raise DecompositionError(
            f"identity violated on pair ({view.group_id}, {view.system_a}, "
            f"{view.system_b}): |{err:.6f} - ({c0:.4f}*{noise:.4f} + {bias} + "
            f"{c1}*{variance:.4f})| = {gap:.6f} > {tol:.6f}"
        )
    return DecompositionResult(
        group_id=view.group_id,
        system_a=view.system_a,
        system_b=view.system_b,
        err_obs=err,
        noise=noise,
        bias=bias,
        variance=variance,
        c0=c0,
        c0_noise=c0 * noise,
        c1=c1,
        c1_var=c1 * variance,
        optimal_label=opt,
        main_prediction=main,
        n_trials=plan.n_trials,
        seed=plan.seed,
    )


def _as_views(
    dataset: Sequence[ComparisonGroup] | Sequence[PairView], metric_ids: Iterable[str]
) -> list[PairView]:
    items = list(dataset)
    if items and isinstance(items[0], PairView):
        return items  # caller already built views with the metrics it needs
    views = pair_views(items, metric_ids)
    if not views:
        raise ValueError("dataset contains no pairwise examples")
    return views


def decompose(
    dataset: Sequence[ComparisonGroup] | Sequence[PairView],
    metric_id: str,
    plan: ResamplePlan,
    label_estimation: str = FULL_DATA,
    injected: dict | None = None,
    workers: int | None = None,
) -> DatasetDecomposition:
    """Full decomposition for every pair, plus unweighted dataset averages.

    The plan's scheme selects the human-noise resampling granularity; the
    metric side always uses paired segment resampling from an independent
    substream.
    """
    views = _as_views(dataset, [metric_id])
    workers = resolve_workers(workers)
    if workers > 1 and len(views) > 1:
        results = Parallel(n_jobs=workers)(
            delayed(_pair_decomposition)(v, metric_id, plan, label_estimation, injected)
            for v in views
        )
    else:
        results = [
            _pair_decomposition(v, metric_id, plan, label_estimation, injected)
            for v in views
        ]
    return DatasetDecomposition(estimator=metric_id, results=tuple(results))


def _pair_human_row(view: PairView, plan: ResamplePlan) -> DecompositionResult:
    # The human estimator treated as the predictor: a fresh, independent
    # judgment resample scored against the usual noisy evaluation labels.
    h_eval = human_label_replicates(view, plan, stream=STREAM_NOISE)
    h_est = human_label_replicates(view, plan, stream=STREAM_HUMAN_ESTIMATOR)
    opt = optimal_label(view)
    return _assemble(view, plan, h_eval, h_est, opt, opt)


def decompose_human(
    dataset: Sequence[ComparisonGroup] | Sequence[PairView],
    plan: ResamplePlan,
    workers: int | None = None,
) -> DatasetDecomposition:
    """Decomposition of an independent human estimator (bias 0 by construction)."""
    views = _as_views(dataset, [])
    workers = resolve_workers(workers)
    if workers > 1 and len(views) > 1:
        results = Parallel(n_jobs=workers)(
            delayed(_pair_human_row)(v, plan) for v in views
        )
    else:
        results = [_pair_human_row(v, plan) for v in views]
    return DatasetDecomposition(estimator="human", results=tuple(results))


def lower_bound(
    dataset: Sequence[ComparisonGroup] | Sequence[PairView],
    plan: ResamplePlan,
    workers: int | None = None,
) -> float:
    """Dataset-average noise: the observed error of the optimal constant
    estimator, and the floor for every other estimator."""
    views = _as_views(dataset, [])
    workers = resolve_workers(workers)
    if workers > 1 and len(views) > 1:
        values = Parallel(n_jobs=workers)(
            delayed(estimate_noise)(v, plan) for v in views
        )
    else:
        values = [estimate_noise(v, plan) for v in views]
    return float(np.mean(values))


def adjusted_error(
    dataset: Sequence[ComparisonGroup] | Sequence[PairView], metric_id: str
) -> float:
    """Noise-free, infinite-test-set error: the dataset-average bias."""
    views = _as_views(dataset, [metric_id])
    return float(np.mean([compute_bias(v, metric_id) for v in views]))


def convergence_curve(
    dataset: Sequence[ComparisonGroup] | Sequence[PairView],
    metric_id: str,
    grid: Sequence[int],
    plan: ResamplePlan,
) -> list[tuple[int, float]]:
    """Agreement of k-segment metric labels with the main prediction, per k."""
    if len(grid) == 0:
        raise ValueError("empty size grid")
    views = _as_views(dataset, [metric_id])
    cap = min(v.n_segments for v in views)
    for k in grid:
        if not 1 <= k <= cap:
            raise ValueError(f"grid size {k} outside [1, {cap}]")
    curve = []
    for k in grid:
        sub = replace(plan, scheme=SEGMENT_LEVEL, subsample_size=int(k))
        agreements = [
            float(np.mean(
                metric_label_replicates(v, metric_id, sub)
                == main_prediction(v, metric_id).sign
            ))
            for v in views
        ]
        curve.append((int(k), float(np.mean(agreements))))
    return curve
