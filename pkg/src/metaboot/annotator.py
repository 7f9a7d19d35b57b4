"""Annotator variance model: total vs within-segment judgment variance, the
derived perfect-annotator variance, judgment-dependent error curves for
unbiased estimators, and metric breakeven points.

The perfect annotator returns each output's expected human score; its
estimator keeps the segment-quality spread but none of the per-judgment
noise, so its variance is the total variance minus the pooled within-segment
variance (law of total variance).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import norm

from .bootstrap import JUDGMENT_LEVEL, ResamplePlan, derive_seed, trial_rng
from .data import ComparisonGroup, SystemRecord, aggregate_categories
from .decomposition import (
    STREAM_NOISE,
    _as_views,
    adjusted_error,
    human_label_replicates,
    optimal_label,
)
from .estimators import PairView

log = logging.getLogger(__name__)

HUMAN = "human"
PERFECT_ANNOTATOR = "perfect_annotator"
KINDS = (HUMAN, PERFECT_ANNOTATOR)

ANALYTIC = "analytic"
BOOTSTRAP = "bootstrap"

DEFAULT_CURVE_GRID = tuple(
    int(n) for n in sorted(set(np.rint(np.geomspace(10, 10_000, 20)).astype(int)))
)


class NoRepeatJudgmentsError(ValueError):
    """No segment carries repeat judgments, so within-variance is undefined."""


@dataclass(frozen=True)
class AnnotatorVarianceReport:
    var_h: float          # total judgment variance, Var(H(x))
    within_var: float     # pooled within-segment variance, E[Var(H(x)|x)]
    var_p: float          # perfect annotator variance, Var(P(x))
    ratio: float          # efficiency ratio r = var_h / var_p
    n_judgments: int
    n_repeat_segments: int


@dataclass(frozen=True)
class ErrorCurve:
    estimator_kind: str
    method: str
    points: tuple[tuple[int, float], ...]


def _iter_systems(
    data: ComparisonGroup | Sequence[ComparisonGroup] | Sequence[SystemRecord],
) -> Iterable[SystemRecord]:
    if isinstance(data, ComparisonGroup):
        yield from data.systems
        return
    for item in data:
        if isinstance(item, ComparisonGroup):
            yield from item.systems
        elif isinstance(item, SystemRecord):
            yield item
        else:
            raise TypeError(f"cannot extract systems from {type(item).__name__}")


def variance_report(
    data: ComparisonGroup | Sequence[ComparisonGroup] | Sequence[SystemRecord],
) -> AnnotatorVarianceReport:
    """Estimate the variance split from all judgments in a data slice.

    Total variance is the unbiased sample variance over every
    category-aggregated judgment; the within term pools per-segment variances
    from segments with repeat judgments, weighted by degrees of freedom.
    """
    values: list[float] = []
    pooled_ss = 0.0
    pooled_df = 0
    repeat_segments = 0
    for sys in _iter_systems(data):
        for seg in sys.segments:
            seg_vals = [aggregate_categories(j) for j in seg.judgments]
            values.extend(seg_vals)
            if len(seg_vals) >= 2:
                arr = np.asarray(seg_vals)
                pooled_ss += float(((arr - arr.mean()) ** 2).sum())
                pooled_df += len(seg_vals) - 1
                repeat_segments += 1
    if len(values) < 2:
        raise ValueError("need at least two judgments to estimate variance")
    if pooled_df == 0:
        raise NoRepeatJudgmentsError(
            "no segment has repeat judgments; within-segment variance is undefined"
        )
    var_h = float(np.var(values, ddof=1))
    within = pooled_ss / pooled_df
    var_p = var_h - within
    if var_p < 0:
        log.warning(
            "within-segment variance (%.4f) exceeds total variance (%.4f); "
            "clamping perfect-annotator variance to 0",
            within,
            var_h,
        )
        var_p = 0.0
    if var_p == 0:
        ratio = 1.0 if var_h == 0 else math.inf
    else:
        ratio = var_h / var_p
    return AnnotatorVarianceReport(
        var_h=var_h,
        within_var=within,
        var_p=var_p,
        ratio=ratio,
        n_judgments=len(values),
        n_repeat_segments=repeat_segments,
    )


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _analytic_error(delta: float, sigma2: float, n: int) -> float:
    if sigma2 == 0:
        return 0.0 if delta != 0 else 0.5
    return float(norm.sf(abs(delta) / math.sqrt(2.0 * sigma2 / n)))


def unbiased_error_at(
    view: PairView,
    n: int,
    kind: str = HUMAN,
    method: str = BOOTSTRAP,
    plan: ResamplePlan | None = None,
    report: AnnotatorVarianceReport | None = None,
    replace_draws: bool = True,
) -> float:
    """Error of an unbiased estimator at n judgments per system on one pair.

    The perfect annotator at n judgments is simulated by the human estimator
    at round(r*n) judgments, matching its variance; analytically it is the
    normal tail at the pair's observed difference with sigma^2 = var_p.
    """
    if n < 1:
        raise ValueError("judgment count must be >= 1")
    if kind not in KINDS:
        raise ValueError(f"unknown estimator kind {kind!r}")
    if kind == PERFECT_ANNOTATOR or method == ANALYTIC:
        if report is None:
            raise ValueError(f"{kind}/{method} requires an AnnotatorVarianceReport")
    if method == ANALYTIC:
        sigma2 = report.var_h if kind == HUMAN else report.var_p
        return _analytic_error(view.human_difference(), sigma2, n)
    if method != BOOTSTRAP:
        raise ValueError(f"unknown method {method!r}")
    if plan is None:
        raise ValueError("bootstrap method requires a plan")
    m = n if kind == HUMAN else round_half_up(report.ratio * n)
    if not replace_draws:
        return _subsample_error(view, m, plan)
    sub = replace(plan, scheme=JUDGMENT_LEVEL, subsample_size=m)
    labels = human_label_replicates(view, sub, stream=STREAM_NOISE)
    return float(np.mean(labels != optimal_label(view).sign))


def _subsample_error(view: PairView, m: int, plan: ResamplePlan) -> float:
    # without-replacement draws cannot exceed the finite judgment pools
    na, nb = view.a.judgment_count, view.b.judgment_count
    if m > na or m > nb:
        raise ValueError(
            f"subsample of {m} judgments exceeds available pools ({na}, {nb})"
        )
    seed = derive_seed(plan.seed, view.group_id, view.system_a, view.system_b, "subsample")
    opt = optimal_label(view).sign
    wrong = 0
    for t in range(plan.n_trials):
        rng = trial_rng(seed, t)
        ma = view.a.judgments[rng.choice(na, size=m, replace=False)].mean()
        mb = view.b.judgments[rng.choice(nb, size=m, replace=False)].mean()
        sign = -1 if ma - mb < 0 else 1
        wrong += sign != opt
    return wrong / plan.n_trials


def dataset_error_at(
    views: Sequence[PairView],
    n: int,
    kind: str,
    method: str,
    plan: ResamplePlan | None = None,
    report: AnnotatorVarianceReport | None = None,
) -> float:
    return float(
        np.mean(
            [unbiased_error_at(v, n, kind, method, plan=plan, report=report) for v in views]
        )
    )


def error_curve(
    dataset: Sequence[ComparisonGroup] | Sequence[PairView],
    kind: str,
    method: str,
    report: AnnotatorVarianceReport,
    plan: ResamplePlan | None = None,
    grid: Sequence[int] | None = None,
) -> ErrorCurve:
    """Dataset-averaged error as a function of judgments per system."""
    views = _as_views(dataset, [])
    grid = tuple(int(n) for n in (grid if grid is not None else DEFAULT_CURVE_GRID))
    points = tuple(
        (n, dataset_error_at(views, n, kind, method, plan=plan, report=report))
        for n in grid
    )
    return ErrorCurve(estimator_kind=kind, method=method, points=points)


def _analytic_dataset_error(deltas: np.ndarray, sigma2: float, n: int) -> float:
    if sigma2 == 0:
        return float(np.mean(np.where(deltas != 0, 0.0, 0.5)))
    return float(np.mean(norm.sf(np.abs(deltas) / math.sqrt(2.0 * sigma2 / n))))


def breakeven(
    dataset: Sequence[ComparisonGroup] | Sequence[PairView],
    metric_id: str,
    kind: str,
    report: AnnotatorVarianceReport,
    plan: ResamplePlan | None = None,
    method: str = ANALYTIC,
    grid: Sequence[int] | None = None,
    max_n: int = 10**9,
) -> int | None:
    """Smallest judgment count where the unbiased estimator's dataset-average
    error drops to the metric's bias-only adjusted error; None when the metric
    is never matched (adjusted error 0, or unreachable below `max_n`)."""
    views = _as_views(dataset, [metric_id])
    adjusted = adjusted_error(views, metric_id)
    if adjusted <= 0:
        return None
    if method == ANALYTIC:
        deltas = np.asarray([v.human_difference() for v in views])
        sigma2 = report.var_h if kind == HUMAN else report.var_p
        if _analytic_dataset_error(deltas, sigma2, 1) <= adjusted:
            return 1
        if _analytic_dataset_error(deltas, sigma2, max_n) > adjusted:
            log.warning(
                "no breakeven below n=%d for %s/%s (adjusted error %.4f)",
                max_n, metric_id, kind, adjusted,
            )
            return None
        lo, hi = 1, max_n
        while lo < hi:
            mid = (lo + hi) // 2
            if _analytic_dataset_error(deltas, sigma2, mid) <= adjusted:
                hi = mid
            else:
                lo = mid + 1
        return lo
    if method != BOOTSTRAP:
        raise ValueError(f"unknown method {method!r}")
    if plan is None:
        raise ValueError("bootstrap breakeven requires a plan")
    grid = tuple(int(n) for n in (grid if grid is not None else DEFAULT_CURVE_GRID))
    for n in grid:
        if dataset_error_at(views, n, kind, BOOTSTRAP, plan=plan, report=report) <= adjusted:
            return n
    return None
