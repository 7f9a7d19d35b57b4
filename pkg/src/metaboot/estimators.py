"""System-level score estimators, pairwise labels, and the 0-1 comparison loss.

Public scoring operates on `SystemRecord`s with explicit index selections.
`PairView` packs a pair's aligned shared-segment data into numpy arrays for
the resampling hot paths; both routes compute the same quantities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .data import (
    SCALAR,
    STATISTICS,
    ComparisonGroup,
    PairwiseExample,
    SystemRecord,
    aggregate_categories,
    build_pairs,
)

HUMAN_MEAN = "human_mean"
METRIC = "metric"

MEAN = "mean"
RATIO_OF_SUMS = "ratio_of_sums"


class MissingMetricError(KeyError):
    """A requested metric score is absent for an indexed segment."""


@dataclass(frozen=True)
class SystemScore:
    value: float
    estimator_kind: str
    n_used: int

    def __post_init__(self):
        if self.n_used < 1:
            raise ValueError("a score must use at least one observation")


@dataclass(frozen=True)
class PairwiseLabel:
    """Sign of a score difference; exact ties resolve to +1, deterministically."""

    sign: int
    difference: float


def label_sign(difference: float) -> int:
    return -1 if difference < 0 else 1


def pairwise_label(score_a: SystemScore, score_b: SystemScore) -> PairwiseLabel:
    if score_a.estimator_kind != score_b.estimator_kind:
        raise ValueError(
            f"cannot compare {score_a.estimator_kind} against {score_b.estimator_kind}"
        )
    diff = score_a.value - score_b.value
    return PairwiseLabel(sign=label_sign(diff), difference=diff)


def zero_one_loss(a: PairwiseLabel, b: PairwiseLabel) -> int:
    return int(a.sign != b.sign)


def judgment_table(sys: SystemRecord) -> list[tuple[int, int]]:
    """Flat judgment index space: (segment position, judgment position)."""
    return [
        (si, ji)
        for si, seg in enumerate(sys.segments)
        for ji in range(len(seg.judgments))
    ]


def human_score(
    sys: SystemRecord,
    selection: Sequence[int] | np.ndarray,
    segment_weighted: bool = False,
) -> SystemScore:
    """Mean of category-aggregated judgments over a flat index selection.

    The default is judgment-weighted (a flat mean over every selected
    judgment); `segment_weighted` averages per-segment means instead.
    """
    table = judgment_table(sys)
    if len(selection) == 0:
        raise ValueError("empty judgment selection")
    values: list[float] = []
    segments: list[int] = []
    for idx in selection:
        si, ji = table[idx]
        values.append(aggregate_categories(sys.segments[si].judgments[ji]))
        segments.append(si)
    if segment_weighted:
        per_seg: dict[int, list[float]] = {}
        for si, v in zip(segments, values):
            per_seg.setdefault(si, []).append(v)
        seg_means = [math.fsum(vs) / len(vs) for vs in per_seg.values()]
        value = math.fsum(seg_means) / len(seg_means)
    else:
        value = math.fsum(values) / len(values)
    return SystemScore(value=value, estimator_kind=HUMAN_MEAN, n_used=len(values))


def metric_score(
    sys: SystemRecord,
    metric_id: str,
    segments: Sequence[int] | np.ndarray,
    aggregator: str = MEAN,
) -> SystemScore:
    """Aggregate per-segment metric observations over a segment multiset.

    `mean` averages scalar observations with multiplicity; `ratio_of_sums`
    sums the numerator/denominator vectors with multiplicity, then averages
    the componentwise ratios.
    """
    if len(segments) == 0:
        raise ValueError("empty segment selection")
    obs = []
    for si in segments:
        seg = sys.segments[si]
        if metric_id not in seg.metric_scores:
            raise MissingMetricError(
                f"metric {metric_id!r} missing on segment {seg.segment_id!r} "
                f"of system {sys.system_id!r}"
            )
        obs.append(seg.metric_scores[metric_id])
    if aggregator == MEAN:
        if any(o.kind != SCALAR for o in obs):
            raise ValueError("mean aggregation requires scalar observations")
        value = math.fsum(o.scalar for o in obs) / len(obs)
    elif aggregator == RATIO_OF_SUMS:
        if any(o.kind != STATISTICS for o in obs):
            raise ValueError("ratio_of_sums aggregation requires statistics observations")
        width = len(obs[0].statistics[0])
        if any(len(o.statistics[0]) != width for o in obs):
            raise ValueError("inconsistent statistics width across segments")
        nums = [math.fsum(o.statistics[0][c] for o in obs) for c in range(width)]
        dens = [math.fsum(o.statistics[1][c] for o in obs) for c in range(width)]
        if any(d == 0 for d in dens):
            raise ValueError("zero denominator after summation")
        value = math.fsum(n / d for n, d in zip(nums, dens)) / width
    else:
        raise ValueError(f"unknown aggregator {aggregator!r}")
    return SystemScore(value=value, estimator_kind=METRIC, n_used=len(obs))


# ---------------------------------------------------------------------------
# Array views over a pair's aligned shared segments
# ---------------------------------------------------------------------------


@dataclass
class PairSide:
    system_id: str
    # category-aggregated judgment values on shared segments, segment-major
    judgments: np.ndarray
    # CSR offsets: judgments of shared segment i live in [seg_ptr[i], seg_ptr[i+1})
    seg_ptr: np.ndarray
    metric_scalars: dict[str, np.ndarray]
    metric_statistics: dict[str, tuple[np.ndarray, np.ndarray]]

    @property
    def judgment_count(self) -> int:
        return int(self.judgments.shape[0])

    def full_human_sum(self) -> float:
        return math.fsum(self.judgments.tolist())

    def full_metric_score(self, metric_id: str) -> float:
        if metric_id in self.metric_scalars:
            vals = self.metric_scalars[metric_id]
            return math.fsum(vals.tolist()) / len(vals)
        num, den = self.metric_statistics[metric_id]
        sums_n = num.sum(axis=0)
        sums_d = den.sum(axis=0)
        return float(np.mean(sums_n / sums_d))


@dataclass
class PairView:
    group_id: str
    a: PairSide
    b: PairSide
    n_segments: int
    # shared-segment positions where both sides carry at least one judgment
    segs_with_judgments: np.ndarray

    @property
    def system_a(self) -> str:
        return self.a.system_id

    @property
    def system_b(self) -> str:
        return self.b.system_id

    def human_difference(self) -> float:
        return (
            self.a.full_human_sum() / self.a.judgment_count
            - self.b.full_human_sum() / self.b.judgment_count
        )

    def human_label(self) -> PairwiseLabel:
        # cross-multiplied comparison keeps exact ties exact
        sa, sb = self.a.full_human_sum(), self.b.full_human_sum()
        na, nb = self.a.judgment_count, self.b.judgment_count
        return PairwiseLabel(
            sign=label_sign(sa * nb - sb * na), difference=sa / na - sb / nb
        )

    def metric_difference(self, metric_id: str) -> float:
        return self.a.full_metric_score(metric_id) - self.b.full_metric_score(metric_id)

    def metric_label(self, metric_id: str) -> PairwiseLabel:
        diff = self.metric_difference(metric_id)
        return PairwiseLabel(sign=label_sign(diff), difference=diff)


def _build_side(
    sys: SystemRecord, shared_ids: list[str], metric_ids: Iterable[str]
) -> PairSide:
    by_id = sys.segment_index()
    values: list[float] = []
    ptr = [0]
    for sid in shared_ids:
        seg = by_id[sid]
        for j in seg.judgments:
            values.append(aggregate_categories(j))
        ptr.append(len(values))
    scalars: dict[str, np.ndarray] = {}
    statistics: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    for mid in metric_ids:
        kinds = set()
        obs_list = []
        for sid in shared_ids:
            seg = by_id[sid]
            if mid not in seg.metric_scores:
                raise MissingMetricError(
                    f"metric {mid!r} missing on segment {sid!r} of system {sys.system_id!r}"
                )
            obs = seg.metric_scores[mid]
            kinds.add(obs.kind)
            obs_list.append(obs)
        if len(kinds) != 1:
            raise ValueError(f"metric {mid!r} mixes observation kinds within a system")
        if kinds == {SCALAR}:
            scalars[mid] = np.asarray([o.scalar for o in obs_list], dtype=np.float64)
        else:
            width = len(obs_list[0].statistics[0])
            if any(len(o.statistics[0]) != width for o in obs_list):
                raise ValueError(f"metric {mid!r} has inconsistent statistics width")
            statistics[mid] = (
                np.asarray([o.statistics[0] for o in obs_list], dtype=np.float64),
                np.asarray([o.statistics[1] for o in obs_list], dtype=np.float64),
            )
    return PairSide(
        system_id=sys.system_id,
        judgments=np.asarray(values, dtype=np.float64),
        seg_ptr=np.asarray(ptr, dtype=np.intp),
        metric_scalars=scalars,
        metric_statistics=statistics,
    )


def pair_view(
    group: ComparisonGroup,
    pair: PairwiseExample,
    metric_ids: Iterable[str] = (),
) -> PairView:
    """Materialize a pair's aligned arrays over the group's shared segments."""
    metric_ids = tuple(metric_ids)
    side_a = _build_side(group.system(pair.system_a), group.shared_segment_ids, metric_ids)
    side_b = _build_side(group.system(pair.system_b), group.shared_segment_ids, metric_ids)
    counts_a = np.diff(side_a.seg_ptr)
    counts_b = np.diff(side_b.seg_ptr)
    both = np.flatnonzero((counts_a > 0) & (counts_b > 0))
    return PairView(
        group_id=group.group_id,
        a=side_a,
        b=side_b,
        n_segments=len(group.shared_segment_ids),
        segs_with_judgments=both,
    )


def pair_views(
    groups: Iterable[ComparisonGroup], metric_ids: Iterable[str] = ()
) -> list[PairView]:
    """Views for every pair of every group, in canonical order."""
    views = []
    for group in groups:
        for pair in build_pairs(group):
            views.append(pair_view(group, pair, metric_ids))
    return views


def metric_coverage(group: ComparisonGroup, metric_id: str) -> bool:
    """True when every system scores every shared segment for `metric_id`."""
    for sys in group.systems:
        by_id = sys.segment_index()
        for sid in group.shared_segment_ids:
            if metric_id not in by_id[sid].metric_scores:
                return False
    return True
