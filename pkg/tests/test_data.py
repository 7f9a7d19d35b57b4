import json
import math

import pytest
from hypothesis import given, strategies as st

from metaboot.data import (
    ComparisonGroup,
    JudgmentRecord,
    MetricObservation,
    PairwiseExample,
    SchemaError,
    SegmentRecord,
    SystemRecord,
    aggregate_categories,
    build_pairs,
    dataset_summary,
    ingest,
    write_jsonl,
)


def _row(group, system, segment, judgments, metrics=None, scale=(0, 100)):
    return json.dumps(
        {
            "group": group,
            "system": system,
            "segment": segment,
            "scale": list(scale),
            "judgments": judgments,
            "metrics": metrics or {},
        }
    )


def _write(tmp_path, lines, name="data.jsonl"):
    path = tmp_path / name
    path.write_text("\n".join(lines) + "\n")
    return path


JUDG = [{"annotator": "a1", "values": {"score": 70.0}}]


def test_minimal_wellformed_file(tmp_path):
    lines = [
        _row("g", "s1", "x1", JUDG, {"bleu": 0.5}),
        _row("g", "s1", "x2", JUDG, {"bleu": 0.6}),
        _row("g", "s2", "x1", JUDG, {"bleu": 0.4}),
        _row("g", "s2", "x2", JUDG, {"bleu": 0.3}),
    ]
    groups = ingest(_write(tmp_path, lines))
    assert len(groups) == 1
    g = groups[0]
    assert len(g.systems) == 2
    assert g.shared_segment_ids == ["x1", "x2"]


def test_scale_violation_names_line(tmp_path):
    lines = [
        _row("g", "s1", "x1", JUDG),
        _row("g", "s1", "x2", [{"annotator": None, "values": {"score": 101.0}}]),
        _row("g", "s2", "x1", JUDG),
        _row("g", "s2", "x2", JUDG),
    ]
    with pytest.raises(SchemaError, match="line 2") as exc:
        ingest(_write(tmp_path, lines))
    assert exc.value.line == 2
    assert "101" in str(exc.value)


def test_duplicate_triple_rejected(tmp_path):
    lines = [
        _row("g", "s1", "x1", JUDG),
        _row("g", "s1", "x1", JUDG),
    ]
    with pytest.raises(SchemaError, match="duplicate"):
        ingest(_write(tmp_path, lines))


def test_malformed_json_names_line(tmp_path):
    lines = [_row("g", "s1", "x1", JUDG), "{not json"]
    with pytest.raises(SchemaError, match="line 2"):
        ingest(_write(tmp_path, lines))


def test_metric_only_segments_allowed(tmp_path):
    lines = [
        _row("g", "s1", "x1", JUDG, {"bleu": 0.1}),
        _row("g", "s1", "x2", [], {"bleu": 0.2}),
        _row("g", "s2", "x1", JUDG, {"bleu": 0.3}),
        _row("g", "s2", "x2", [], {"bleu": 0.4}),
    ]
    groups = ingest(_write(tmp_path, lines))
    assert groups[0].shared_segment_ids == ["x1", "x2"]


def test_segment_with_neither_judgments_nor_metrics_rejected(tmp_path):
    lines = [_row("g", "s1", "x1", [], {})]
    with pytest.raises(SchemaError, match="neither"):
        ingest(_write(tmp_path, lines))


def test_unshared_segments_dropped_with_warning(tmp_path, caplog):
    lines = [
        _row("g", "s1", "x1", JUDG),
        _row("g", "s1", "x2", JUDG),
        _row("g", "s1", "x3", JUDG),
        _row("g", "s2", "x1", JUDG),
        _row("g", "s2", "x2", JUDG),
    ]
    with caplog.at_level("WARNING"):
        groups = ingest(_write(tmp_path, lines))
    assert groups[0].shared_segment_ids == ["x1", "x2"]
    assert any("not shared" in r.message for r in caplog.records)


def test_round_trip_is_identity(tmp_path):
    lines = [
        _row("g", "s1", "x1", [{"annotator": "a", "values": {"c1": 4.0, "c2": 5.0}}],
             {"bleu": 0.25, "chrf": {"num": [3.0, 1.0], "den": [4.0, 4.0]}},
             scale=(0, 5)),
        _row("g", "s1", "x2", JUDG),
        _row("g", "s2", "x1", [{"annotator": None, "values": {"score": 12.5}}]),
        _row("g", "s2", "x2", JUDG),
    ]
    first = ingest(_write(tmp_path, lines))
    write_jsonl(first, tmp_path / "rt.jsonl")
    second = ingest(tmp_path / "rt.jsonl")
    assert first == second
    # serialization is a fixed point after one pass
    write_jsonl(second, tmp_path / "rt2.jsonl")
    assert (tmp_path / "rt.jsonl").read_bytes() == (tmp_path / "rt2.jsonl").read_bytes()


def _group_of(n_systems, n_segments=2):
    systems = []
    seg_ids = [f"x{i}" for i in range(n_segments)]
    for s in range(n_systems):
        segments = [
            SegmentRecord(sid, [JudgmentRecord("a", {"score": 1.0}, 0, 100)], {})
            for sid in seg_ids
        ]
        systems.append(SystemRecord(f"s{s:03d}", segments))
    return ComparisonGroup("g", systems, seg_ids)


def test_build_pairs_17_systems_gives_136():
    pairs = build_pairs(_group_of(17))
    assert len(pairs) == 136
    assert len(set(pairs)) == 136
    for p in pairs:
        assert p.system_a < p.system_b


def test_build_pairs_two_systems():
    assert len(build_pairs(_group_of(2))) == 1


def test_build_pairs_requires_two_systems():
    with pytest.raises(ValueError, match="fewer than 2"):
        build_pairs(_group_of(1))


def test_261_systems_partition_yields_1324_pairs():
    # find a partition of 261 systems whose pair counts total 1324, then check
    # build_pairs on each part
    target_systems, target_pairs = 261, 1324
    best = None
    # DP over (systems, pairs) reachable with group sizes 2..20
    reachable = {(0, 0): []}
    for size in range(2, 21):
        for _ in range(target_systems // size):
            additions = {}
            for (s, p), sizes in reachable.items():
                ns, np_ = s + size, p + size * (size - 1) // 2
                if ns <= target_systems and np_ <= target_pairs and (ns, np_) not in reachable:
                    additions[(ns, np_)] = sizes + [size]
            reachable.update(additions)
            if (target_systems, target_pairs) in reachable:
                best = reachable[(target_systems, target_pairs)]
                break
        if best:
            break
    assert best is not None, "no partition found"
    assert sum(best) == target_systems
    total = sum(len(build_pairs(_group_of(k))) for k in best)
    assert total == target_pairs


@given(st.lists(st.integers(min_value=2, max_value=12), min_size=1, max_size=6))
def test_pair_count_formula(sizes):
    total = sum(len(build_pairs(_group_of(k))) for k in sizes)
    assert total == sum(k * (k - 1) // 2 for k in sizes)


def test_aggregate_categories_examples():
    j = JudgmentRecord("a", {"coherence": 4, "consistency": 5, "fluency": 4, "relevance": 3}, 0, 5)
    assert aggregate_categories(j) == 4.0
    assert aggregate_categories(JudgmentRecord("a", {"score": 73.0}, 0, 100)) == 73.0
    assert aggregate_categories(JudgmentRecord("a", {"a": 0, "b": 5}, 0, 5)) == 2.5


@given(
    st.lists(
        st.tuples(st.text(min_size=1, max_size=4), st.floats(0, 100, allow_nan=False)),
        min_size=1,
        max_size=6,
        unique_by=lambda t: t[0],
    ),
    st.randoms(),
)
def test_aggregation_permutation_invariant(cats, rnd):
    values = dict(cats)
    j1 = JudgmentRecord("a", values, 0, 100)
    shuffled = list(values.items())
    rnd.shuffle(shuffled)
    j2 = JudgmentRecord("a", dict(shuffled), 0, 100)
    assert aggregate_categories(j1) == aggregate_categories(j2)


def test_pairwise_example_requires_canonical_order():
    with pytest.raises(ValueError):
        PairwiseExample("g", "s2", "s1", 2)
    with pytest.raises(ValueError):
        PairwiseExample("g", "s1", "s1", 2)


def test_metric_observation_validation():
    with pytest.raises(ValueError):
        MetricObservation(kind="scalar")
    with pytest.raises(ValueError):
        MetricObservation.from_statistics([1.0], [2.0, 3.0])
    with pytest.raises(ValueError):
        MetricObservation.from_scalar(float("nan"))


def test_csv_ingestion(tmp_path):
    jpath = tmp_path / "judgments.csv"
    jpath.write_text(
        "group,system,segment,annotator,category,value\n"
        "g,s1,x1,a1,coherence,4\n"
        "g,s1,x1,a1,fluency,2\n"
        "g,s1,x2,a1,coherence,3\n"
        "g,s2,x1,,score,5\n"
        "g,s2,x2,a2,coherence,1\n"
    )
    mpath = tmp_path / "metrics.csv"
    mpath.write_text(
        "group,system,segment,metric_id,value\n"
        "g,s1,x1,rouge,0.5\n"
        "g,s1,x2,rouge,0.25\n"
        "g,s2,x1,rouge,0.75\n"
        "g,s2,x2,rouge,0.5\n"
    )
    groups = ingest(jpath, format="csv", metrics_path=mpath, scale=(0, 5))
    g = groups[0]
    assert g.shared_segment_ids == ["x1", "x2"]
    s1 = g.system("s1")
    seg = s1.segment_index()["x1"]
    assert seg.judgments[0].values == {"coherence": 4.0, "fluency": 2.0}
    assert seg.metric_scores["rouge"].scalar == 0.5
    summary = dataset_summary(groups)
    assert summary["pairs"] == 1


def test_csv_requires_scale(tmp_path):
    path = tmp_path / "x.csv"
    path.write_text("group,system,segment,annotator,category,value\n")
    with pytest.raises(SchemaError, match="scale"):
        ingest(path, format="csv")


def test_csv_duplicate_cell_rejected(tmp_path):
    path = tmp_path / "x.csv"
    path.write_text(
        "group,system,segment,annotator,category,value\n"
        "g,s1,x1,a1,score,4\n"
        "g,s1,x1,a1,score,4\n"
    )
    with pytest.raises(SchemaError, match="duplicate"):
        ingest(path, format="csv", scale=(0, 5))


def test_missing_file():
    with pytest.raises(SchemaError, match="no such file"):
        ingest("/nonexistent/data.jsonl")
