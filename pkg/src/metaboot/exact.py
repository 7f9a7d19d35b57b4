"""Exhaustive enumeration oracle for small two-system instances.

With at most a few segments and judgments, every with-replacement resample
distribution can be enumerated exactly (as integer counts over an integer
value lattice), giving exact rational values for every decomposition term.
The engine's Monte Carlo estimates are validated against these.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass
from fractions import Fraction
from itertools import accumulate
from math import lcm

import numpy as np

from .data import ComparisonGroup, JudgmentRecord, MetricObservation, SegmentRecord, SystemRecord
from .estimators import PairSide, PairView

WIDE_SCALE = (-1e18, 1e18)
_MAX_JUDGMENTS = 12
_MAX_SEGMENTS = 8
_MAX_SUPPORT = 1_000_000


class InstanceTooLargeError(ValueError):
    """The instance exceeds the exhaustive enumeration budget."""


@dataclass(frozen=True)
class SmallInstance:
    """Two systems over shared segments; values must be rationals (ints are
    the common case and keep the engine's float sums exact too)."""

    judgments_a: tuple[tuple[Fraction, ...], ...]
    judgments_b: tuple[tuple[Fraction, ...], ...]
    metric_a: tuple[Fraction, ...]
    metric_b: tuple[Fraction, ...]

    def __post_init__(self):
        k = len(self.metric_a)
        if not (len(self.judgments_a) == len(self.judgments_b) == len(self.metric_b) == k):
            raise ValueError("per-segment structures must have equal lengths")
        if k < 1:
            raise ValueError("need at least one segment")
        if sum(map(len, self.judgments_a)) < 1 or sum(map(len, self.judgments_b)) < 1:
            raise ValueError("each system needs at least one judgment")

    @property
    def n_segments(self) -> int:
        return len(self.metric_a)


@dataclass(frozen=True)
class ExactTerms:
    optimal: int
    main: int
    noise: Fraction
    variance: Fraction
    bias: int
    c0: Fraction
    c1: int
    err_obs: Fraction

    def identity_gap(self) -> Fraction:
        return abs(self.err_obs - (self.c0 * self.noise + self.bias + self.c1 * self.variance))


def _lattice(values: list[Fraction]) -> tuple[list[int], int]:
    """Rescale rationals onto a common integer lattice (sign-preserving)."""
    scale = lcm(*(v.denominator for v in values)) if values else 1
    return [int(v * scale) for v in values], scale


def _sum_distribution(values: list[int], draws: int) -> dict[int, int]:
    """Counts of ordered i.i.d. uniform with-replacement draw sums."""
    dist = {0: 1}
    for _ in range(draws):
        nxt: dict[int, int] = {}
        for s, w in dist.items():
            for v in values:
                key = s + v
                nxt[key] = nxt.get(key, 0) + w
        if len(nxt) > _MAX_SUPPORT:
            raise InstanceTooLargeError("sum distribution support exceeds budget")
        dist = nxt
    return dist


def _sign(x: int | Fraction) -> int:
    return -1 if x < 0 else 1


def enumerate_exact(instance: SmallInstance) -> ExactTerms:
    """Exact decomposition terms by enumerating every resample outcome.

    Human resampling follows the engine default (each system redraws its full
    pooled judgment count); the metric side redraws the shared segment count,
    paired across systems. Ties resolve to +1 everywhere, as in the engine.
    """
    pool_a = [v for seg in instance.judgments_a for v in seg]
    pool_b = [v for seg in instance.judgments_b for v in seg]
    na, nb = len(pool_a), len(pool_b)
    k = instance.n_segments
    if na > _MAX_JUDGMENTS or nb > _MAX_JUDGMENTS or k > _MAX_SEGMENTS:
        raise InstanceTooLargeError(
            f"instance too large to enumerate ({na}, {nb} judgments; {k} segments)"
        )

    lat_h, _ = _lattice(pool_a + pool_b)
    ints_a, ints_b = lat_h[:na], lat_h[na:]
    dist_a = _sum_distribution(ints_a, na)
    dist_b = _sum_distribution(ints_b, nb)

    # P(resampled human label = +1): mean_a >= mean_b, cross-multiplied
    total_h = Fraction(na**na) * Fraction(nb**nb)
    favourable = 0
    items_b = sorted(dist_b.items())
    sums_b = [s * na for s, _ in items_b]
    cum_weights_b = list(accumulate(w for _, w in items_b))
    for sa, wa in dist_a.items():
        # count of sb with sb*na <= sa*nb
        pos = bisect_right(sums_b, sa * nb)
        if pos:
            favourable += wa * cum_weights_b[pos - 1]
    p_plus_h = Fraction(favourable) / total_h

    lat_m, _ = _lattice(list(instance.metric_a) + list(instance.metric_b))
    d = [a - b for a, b in zip(lat_m[:k], lat_m[k:])]
    dist_d = _sum_distribution(d, k)
    total_m = Fraction(k**k)
    p_plus_m = Fraction(sum(w for s, w in dist_d.items() if s >= 0)) / total_m

    # full-data labels, exact rational comparisons
    optimal = _sign(sum(ints_a) * nb - sum(ints_b) * na)
    main = _sign(sum(d))

    noise = 1 - p_plus_h if optimal == 1 else p_plus_h
    variance = 1 - p_plus_m if main == 1 else p_plus_m
    q = p_plus_m if optimal == 1 else 1 - p_plus_m
    bias = int(optimal != main)
    err = p_plus_h * (1 - p_plus_m) + (1 - p_plus_h) * p_plus_m
    return ExactTerms(
        optimal=optimal,
        main=main,
        noise=noise,
        variance=variance,
        bias=bias,
        c0=2 * q - 1,
        c1=1 - 2 * bias,
        err_obs=err,
    )


def argmin_constant_label(instance: SmallInstance) -> int:
    """The constant label minimizing expected loss against resampled human
    labels: the majority resample outcome (ties -> +1)."""
    pool_a = [v for seg in instance.judgments_a for v in seg]
    pool_b = [v for seg in instance.judgments_b for v in seg]
    na, nb = len(pool_a), len(pool_b)
    lat, _ = _lattice(pool_a + pool_b)
    dist_a = _sum_distribution(lat[:na], na)
    dist_b = _sum_distribution(lat[na:], nb)
    total = Fraction(na**na) * Fraction(nb**nb)
    favourable = sum(
        wa * wb
        for sa, wa in dist_a.items()
        for sb, wb in dist_b.items()
        if sa * nb >= sb * na
    )
    return 1 if Fraction(favourable) / total >= Fraction(1, 2) else -1


def to_view(
    instance: SmallInstance,
    group_id: str = "enum",
    metric_id: str = "metric",
    system_ids: tuple[str, str] = ("sysA", "sysB"),
) -> PairView:
    """The instance as a pair view, so the real resampling engine runs on it.

    Built directly (not via a `ComparisonGroup`) because enumeration instances
    may have a single segment, below the ingestion minimum of two.
    """

    def side(system_id, judgments, metric):
        values = [float(v) for seg in judgments for v in seg]
        ptr = np.zeros(len(judgments) + 1, dtype=np.intp)
        np.cumsum([len(seg) for seg in judgments], out=ptr[1:])
        return PairSide(
            system_id=system_id,
            judgments=np.asarray(values, dtype=np.float64),
            seg_ptr=ptr,
            metric_scalars={metric_id: np.asarray([float(v) for v in metric])},
            metric_statistics={},
        )

    side_a = side(system_ids[0], instance.judgments_a, instance.metric_a)
    side_b = side(system_ids[1], instance.judgments_b, instance.metric_b)
    counts_a = np.diff(side_a.seg_ptr)
    counts_b = np.diff(side_b.seg_ptr)
    return PairView(
        group_id=group_id,
        a=side_a,
        b=side_b,
        n_segments=instance.n_segments,
        segs_with_judgments=np.flatnonzero((counts_a > 0) & (counts_b > 0)),
    )


def to_group(
    instance: SmallInstance,
    group_id: str = "enum",
    metric_id: str = "metric",
    system_ids: tuple[str, str] = ("sysA", "sysB"),
) -> ComparisonGroup:
    """Materialize the instance as core records (needs >= 2 segments)."""
    seg_ids = [f"seg{i}" for i in range(instance.n_segments)]
    systems = []
    for sys_id, judgments, metric in (
        (system_ids[0], instance.judgments_a, instance.metric_a),
        (system_ids[1], instance.judgments_b, instance.metric_b),
    ):
        segments = []
        for i, sid in enumerate(seg_ids):
            recs = [
                JudgmentRecord(None, {"score": float(v)}, WIDE_SCALE[0], WIDE_SCALE[1])
                for v in judgments[i]
            ]
            segments.append(
                SegmentRecord(
                    segment_id=sid,
                    judgments=recs,
                    metric_scores={metric_id: MetricObservation.from_scalar(float(metric[i]))},
                    scale=WIDE_SCALE,
                )
            )
        systems.append(SystemRecord(system_id=sys_id, segments=segments))
    return ComparisonGroup(group_id=group_id, systems=systems, shared_segment_ids=seg_ids)


def random_instance(rng: np.random.Generator, max_value: int = 10) -> SmallInstance:
    """A random small-integer instance for the oracle regression corpus."""
    k = int(rng.integers(1, 4))
    counts_a = rng.integers(0, 4, size=k)
    counts_b = rng.integers(0, 4, size=k)
    if counts_a.sum() == 0:
        counts_a[int(rng.integers(0, k))] = 1
    if counts_b.sum() == 0:
        counts_b[int(rng.integers(0, k))] = 1
    draw = lambda n: tuple(Fraction(int(v)) for v in rng.integers(0, max_value + 1, size=n))
    return SmallInstance(
        judgments_a=tuple(draw(int(c)) for c in counts_a),
        judgments_b=tuple(draw(int(c)) for c in counts_b),
        metric_a=draw(k),
        metric_b=draw(k),
    )
