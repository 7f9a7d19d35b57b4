import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from metaboot.data import JudgmentRecord, MetricObservation, SegmentRecord, SystemRecord
from metaboot.estimators import (
    HUMAN_MEAN,
    METRIC,
    MissingMetricError,
    PairwiseLabel,
    SystemScore,
    human_score,
    label_sign,
    metric_score,
    pair_view,
    pair_views,
    pairwise_label,
    zero_one_loss,
)
from metaboot.synthetic import GeneratorConfig, generate


def _system(values_per_segment, metrics_per_segment=None):
    segments = []
    for i, vals in enumerate(values_per_segment):
        judgments = [JudgmentRecord("a", {"score": float(v)}, -1e6, 1e6) for v in vals]
        metrics = {}
        if metrics_per_segment is not None:
            metrics = {"m": metrics_per_segment[i]}
        segments.append(SegmentRecord(f"x{i}", judgments, metrics))
    return SystemRecord("s", segments)


def test_human_score_mean():
    sys = _system([[80.0], [60.0]])
    assert human_score(sys, [0, 1]).value == 70.0


def test_human_score_single():
    sys = _system([[55.0]])
    score = human_score(sys, [0])
    assert score.value == 55.0
    assert score.n_used == 1
    assert score.estimator_kind == HUMAN_MEAN


def test_human_score_empty_selection():
    with pytest.raises(ValueError, match="empty"):
        human_score(_system([[1.0]]), [])


def test_human_score_segment_weighted():
    # segment 0 carries three judgments, segment 1 one
    sys = _system([[0.0, 0.0, 0.0], [8.0]])
    flat = human_score(sys, range(4))
    weighted = human_score(sys, range(4), segment_weighted=True)
    assert flat.value == 2.0
    assert weighted.value == 4.0


def test_human_score_recovers_generator_mean():
    # true mean 50, var_h = 200, 5000 judgments: within 3 standard errors
    cfg = GeneratorConfig(
        system_means=(50.0, 60.0), tau=10.0, eta=10.0, n_segments=5000, seed=123
    )
    groups, _ = generate(cfg)
    sys = groups[0].systems[0]
    score = human_score(sys, range(sys.judgment_count()))
    bound = 3 * math.sqrt(200.0) / math.sqrt(5000)
    assert abs(score.value - 50.0) <= bound


def test_metric_score_mean():
    sys = _system(
        [[1.0], [1.0]],
        [MetricObservation.from_scalar(0.9), MetricObservation.from_scalar(0.7)],
    )
    assert metric_score(sys, "m", [0, 1]).value == pytest.approx(0.8)


def test_metric_score_ratio_of_sums():
    sys = _system(
        [[1.0], [1.0]],
        [
            MetricObservation.from_statistics([3.0], [4.0]),
            MetricObservation.from_statistics([1.0], [4.0]),
        ],
    )
    score = metric_score(sys, "m", [0, 1], aggregator="ratio_of_sums")
    assert score.value == pytest.approx(0.5)
    assert score.estimator_kind == METRIC


def test_metric_score_multiset_multiplicity():
    sys = _system(
        [[1.0], [1.0]],
        [MetricObservation.from_scalar(0.9), MetricObservation.from_scalar(0.1)],
    )
    assert metric_score(sys, "m", [0, 0]).value == pytest.approx(0.9)
    assert metric_score(sys, "m", [0, 0, 1]).value == pytest.approx((0.9 + 0.9 + 0.1) / 3)


def test_metric_score_kind_mismatch():
    sys = _system([[1.0]], [MetricObservation.from_scalar(0.9)])
    with pytest.raises(ValueError, match="ratio_of_sums"):
        metric_score(sys, "m", [0], aggregator="ratio_of_sums")


def test_metric_score_missing_metric():
    sys = _system([[1.0]], [MetricObservation.from_scalar(0.9)])
    with pytest.raises(MissingMetricError, match="other"):
        metric_score(sys, "other", [0])


def test_pairwise_label_examples():
    a = SystemScore(70.0, HUMAN_MEAN, 1)
    b = SystemScore(60.0, HUMAN_MEAN, 1)
    assert pairwise_label(a, b) == PairwiseLabel(1, 10.0)
    assert pairwise_label(b, a) == PairwiseLabel(-1, -10.0)
    assert pairwise_label(a, a) == PairwiseLabel(1, 0.0)


def test_pairwise_label_rejects_mixed_kinds():
    with pytest.raises(ValueError, match="compare"):
        pairwise_label(SystemScore(1.0, HUMAN_MEAN, 1), SystemScore(1.0, METRIC, 1))


def test_zero_one_loss_table():
    plus = PairwiseLabel(1, 1.0)
    minus = PairwiseLabel(-1, -1.0)
    assert zero_one_loss(plus, plus) == 0
    assert zero_one_loss(plus, minus) == 1
    assert zero_one_loss(minus, minus) == 0
    assert zero_one_loss(minus, plus) == 1


@given(st.floats(-1e6, 1e6, allow_nan=False), st.floats(-1e6, 1e6, allow_nan=False))
def test_antisymmetry(x, y):
    a = SystemScore(x, HUMAN_MEAN, 1)
    b = SystemScore(y, HUMAN_MEAN, 1)
    fwd = pairwise_label(a, b)
    rev = pairwise_label(b, a)
    assert rev.difference == -fwd.difference
    if fwd.difference != 0:
        assert rev.sign == -fwd.sign


@given(st.integers(0, 1), st.integers(0, 1))
def test_loss_is_indicator(sa, sb):
    a = PairwiseLabel(1 if sa else -1, 0.0)
    b = PairwiseLabel(1 if sb else -1, 0.0)
    assert zero_one_loss(a, b) == zero_one_loss(b, a)
    assert zero_one_loss(a, a) == 0


def test_full_set_metric_mean_matches_compensated_sum():
    rng = np.random.default_rng(7)
    values = rng.normal(0.5, 0.2, size=4001)
    cfg_vals = [MetricObservation.from_scalar(float(v)) for v in values]
    sys = _system([[1.0]] * len(values), cfg_vals)
    score = metric_score(sys, "m", range(len(values)))
    expected = math.fsum(values.tolist()) / len(values)
    assert abs(score.value - expected) <= 1e-9 * abs(expected)
    assert abs(score.value - float(np.mean(values))) <= 1e-9 * abs(expected)


def test_pair_view_alignment():
    cfg = GeneratorConfig(system_means=(1.0, 2.0), tau=0.0, eta=0.0, n_segments=3, seed=0)
    groups, _ = generate(cfg)
    views = pair_views(groups, ["synthetic-metric"])
    assert len(views) == 1
    v = views[0]
    assert v.n_segments == 3
    assert v.a.judgment_count == 3
    # tau=eta=0: all judgments equal the system mean exactly
    assert np.all(v.a.judgments == 1.0)
    assert np.all(v.b.judgments == 2.0)
    assert v.human_label().sign == -1
    assert v.metric_label("synthetic-metric").sign == -1
    assert v.human_difference() == pytest.approx(-1.0)


def test_pair_view_missing_metric():
    cfg = GeneratorConfig(system_means=(1.0, 2.0), tau=0.0, eta=0.0, n_segments=3, seed=0)
    groups, _ = generate(cfg)
    with pytest.raises(MissingMetricError):
        pair_views(groups, ["nope"])


def test_label_sign_tie_rule():
    assert label_sign(0.0) == 1
    assert label_sign(-0.0) == 1
    assert label_sign(-1e-300) == -1
