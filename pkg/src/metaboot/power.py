"""Closed-form power analysis for judgment counts, paired bootstrap
significance testing, and human/metric significance co-occurrence."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.stats import norm

from .bootstrap import (
    JOINT,
    JUDGMENT_LEVEL,
    SEGMENT_LEVEL,
    SIGNIFICANCE_TRIALS,
    ResamplePlan,
)
from .data import ComparisonGroup
from .decomposition import _as_views, human_diff_replicates, metric_diff_replicates
from .estimators import PairView, label_sign

ONE_SIDED = "one"
TWO_SIDED = "two"

HUMAN = "human"
METRIC = "metric"

STREAM_SIG_HUMAN = "significance-human"
STREAM_SIG_METRIC = "significance-metric"


@dataclass(frozen=True)
class PowerSpec:
    """Two-sample test parameters: per-judgment sd `sigma`, target effect
    `delta` in score units, false positive rate `alpha`, power `beta`."""

    sigma: float
    delta: float
    alpha: float = 0.05
    beta: float = 0.95
    sidedness: str = ONE_SIDED

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if not 0 < self.beta < 1:
            raise ValueError("beta must lie in (0, 1)")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.delta <= 0:
            raise ValueError("delta must be positive (no finite answer at 0)")
        if self.sidedness not in (ONE_SIDED, TWO_SIDED):
            raise ValueError(f"sidedness must be {ONE_SIDED!r} or {TWO_SIDED!r}")


def required_sample_size(spec: PowerSpec) -> int:
    """Judgments per system to detect `delta` with the requested power.

    Two-sample, equal-variance normal approximation:
    n = ceil(2 sigma^2 (z_{1-alpha[/2]} + z_beta)^2 / delta^2).
    """
    alpha = spec.alpha / 2 if spec.sidedness == TWO_SIDED else spec.alpha
    z = norm.ppf(1 - alpha) + norm.ppf(spec.beta)
    return math.ceil(2.0 * spec.sigma**2 * z**2 / spec.delta**2)


@dataclass(frozen=True)
class PowerTable:
    sigmas: tuple[float, ...]
    deltas: tuple[float, ...]
    counts: tuple[tuple[int, ...], ...]  # rows follow sigmas, columns deltas
    alpha: float
    beta: float
    sidedness: str

    @property
    def log_color_anchors(self) -> tuple[float, float]:
        """log10 range of the counts, for log-scaled cell coloring."""
        flat = [c for row in self.counts for c in row]
        return (math.log10(min(flat)), math.log10(max(flat)))


def power_table(
    sigmas: Sequence[float],
    deltas: Sequence[float],
    alpha: float = 0.05,
    beta: float = 0.95,
    sidedness: str = ONE_SIDED,
) -> PowerTable:
    if not sigmas or not deltas:
        raise ValueError("sigma and delta grids must be non-empty")
    counts = tuple(
        tuple(
            required_sample_size(
                PowerSpec(sigma=s, delta=d, alpha=alpha, beta=beta, sidedness=sidedness)
            )
            for d in deltas
        )
        for s in sigmas
    )
    return PowerTable(
        sigmas=tuple(float(s) for s in sigmas),
        deltas=tuple(float(d) for d in deltas),
        counts=counts,
        alpha=alpha,
        beta=beta,
        sidedness=sidedness,
    )


@dataclass(frozen=True)
class SignificanceOutcome:
    group_id: str
    system_a: str
    system_b: str
    estimator_kind: str
    p_fraction: float
    significant: bool
    direction: int


def bootstrap_significance(
    view: PairView,
    estimator_kind: str,
    metric_id: str | None = None,
    plan: ResamplePlan | None = None,
    n_trials: int = SIGNIFICANCE_TRIALS,
    alpha: float = 0.05,
    direction: int | None = None,
) -> SignificanceOutcome:
    """One-sided bootstrap test in the direction of the observed difference.

    `p_fraction` is the raw fraction of replicate differences whose sign
    opposes (or ties) the tested direction; ties count against significance.

    When `direction` is left to default the tested direction is read off the
    data, which doubles the chance of a small p under the null (the bootstrap
    p is the tail mass beyond |observed|). The significance decision then
    compares `p_fraction` against alpha/2 so the procedure fires at rate
    alpha on truly tied systems; pass an a-priori `direction` (+1 or -1) for
    the uncorrected fixed-direction test.
    """
    if plan is None:
        raise ValueError("bootstrap_significance requires a plan for its seed")
    if estimator_kind == HUMAN:
        observed = view.human_difference()
        scheme = plan.scheme if plan.scheme in (JUDGMENT_LEVEL, JOINT) else JUDGMENT_LEVEL
        sub = replace(plan, n_trials=n_trials, scheme=scheme, subsample_size=None)
        diffs = human_diff_replicates(view, sub, stream=STREAM_SIG_HUMAN)
    elif estimator_kind == METRIC:
        if metric_id is None:
            raise ValueError("metric significance requires a metric_id")
        observed = view.metric_difference(metric_id)
        sub = replace(plan, n_trials=n_trials, scheme=SEGMENT_LEVEL, subsample_size=None)
        diffs = metric_diff_replicates(view, metric_id, sub, stream=STREAM_SIG_METRIC)
    else:
        raise ValueError(f"unknown estimator kind {estimator_kind!r}")
    if direction is None:
        direction = label_sign(observed)
        threshold = alpha / 2.0
    elif direction in (-1, 1):
        threshold = alpha
    else:
        raise ValueError("direction must be -1, +1, or None")
    p_fraction = float(np.mean(diffs * direction <= 0))
    return SignificanceOutcome(
        group_id=view.group_id,
        system_a=view.system_a,
        system_b=view.system_b,
        estimator_kind=estimator_kind,
        p_fraction=p_fraction,
        significant=bool(p_fraction < threshold),
        direction=direction,
    )


@dataclass(frozen=True)
class CooccurrenceCounts:
    """2x2 counts of (human significant) x (metric significant)."""

    hh: int  # human significant, metric significant
    hm: int  # human significant, metric not
    mh: int  # human not, metric significant
    mm: int  # neither

    @property
    def total(self) -> int:
        return self.hh + self.hm + self.mh + self.mm


def cooccurrence(
    dataset: Sequence[ComparisonGroup] | Sequence[PairView],
    metric_id: str,
    plan: ResamplePlan,
    n_trials: int = SIGNIFICANCE_TRIALS,
    alpha: float = 0.05,
) -> tuple[CooccurrenceCounts, list[tuple[SignificanceOutcome, SignificanceOutcome]]]:
    """Per-pair human and metric significance, pairs oriented so the human
    difference is non-negative."""
    views = _as_views(dataset, [metric_id])
    outcomes = []
    hh = hm = mh = mm = 0
    for view in views:
        human = bootstrap_significance(view, HUMAN, plan=plan, n_trials=n_trials, alpha=alpha)
        metric = bootstrap_significance(
            view, METRIC, metric_id=metric_id, plan=plan, n_trials=n_trials, alpha=alpha
        )
        if view.human_difference() < 0:
            human = _flip(human)
            metric = _flip(metric)
        outcomes.append((human, metric))
        if human.significant and metric.significant:
            hh += 1
        elif human.significant:
            hm += 1
        elif metric.significant:
            mh += 1
        else:
            mm += 1
    return CooccurrenceCounts(hh=hh, hm=hm, mh=mh, mm=mm), outcomes


def _flip(outcome: SignificanceOutcome) -> SignificanceOutcome:
    return SignificanceOutcome(
        group_id=outcome.group_id,
        system_a=outcome.system_b,
        system_b=outcome.system_a,
        estimator_kind=outcome.estimator_kind,
        p_fraction=outcome.p_fraction,
        significant=outcome.significant,
        direction=-outcome.direction,
    )
