"""Evaluation data model: human judgments, per-segment metric scores, and
comparison groups of systems scored on a shared test set.

The on-disk formats are JSONL (one row per (group, system, segment)) and a
long-format CSV pair (judgments + metric scores). Scales are always declared,
never inferred.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Iterable

log = logging.getLogger(__name__)

SCALAR = "scalar"
STATISTICS = "statistics"


class SchemaError(ValueError):
    """Input rows that violate the schema. Carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass
class JudgmentRecord:
    """One human judgment: a score per category on a declared scale."""

    annotator_id: str | None
    values: dict[str, float]
    scale_min: float
    scale_max: float

    def __post_init__(self):
        if not self.values:
            raise ValueError("judgment has no category values")
        if not self.scale_min < self.scale_max:
            raise ValueError(f"bad scale [{self.scale_min}, {self.scale_max}]")
        for cat, v in self.values.items():
            if not math.isfinite(v):
                raise ValueError(f"non-finite value for category {cat!r}")
            if not self.scale_min <= v <= self.scale_max:
                raise ValueError(
                    f"value {v} for category {cat!r} outside scale "
                    f"[{self.scale_min}, {self.scale_max}]"
                )


@dataclass
class MetricObservation:
    """Per-segment metric payload: a scalar for mean-aggregated metrics, or
    (numerators, denominators) vectors for ratio-of-sums aggregation."""

    kind: str
    scalar: float | None = None
    statistics: tuple[tuple[float, ...], tuple[float, ...]] | None = None

    def __post_init__(self):
        if self.kind == SCALAR:
            if self.scalar is None or self.statistics is not None:
                raise ValueError("scalar observation must set exactly `scalar`")
            if not math.isfinite(self.scalar):
                raise ValueError("non-finite metric scalar")
        elif self.kind == STATISTICS:
            if self.statistics is None or self.scalar is not None:
                raise ValueError("statistics observation must set exactly `statistics`")
            num, den = self.statistics
            if len(num) != len(den) or len(num) < 1:
                raise ValueError("statistics vectors must have equal length >= 1")
            if not all(math.isfinite(x) for x in num + den):
                raise ValueError("non-finite metric statistics")
        else:
            raise ValueError(f"unknown observation kind {self.kind!r}")

    @classmethod
    def from_scalar(cls, value: float) -> "MetricObservation":
        return cls(kind=SCALAR, scalar=float(value))

    @classmethod
    def from_statistics(cls, num: Iterable[float], den: Iterable[float]) -> "MetricObservation":
        return cls(
            kind=STATISTICS,
            statistics=(tuple(float(x) for x in num), tuple(float(x) for x in den)),
        )


@dataclass
class SegmentRecord:
    """One system output: its judgments and metric scores.

    Metric-only segments (no judgments) are allowed; human estimators skip
    them. `scale` echoes the row's declared judgment scale for round-trips.
    """

    segment_id: str
    judgments: list[JudgmentRecord]
    metric_scores: dict[str, MetricObservation]
    scale: tuple[float, float] | None = None

    def __post_init__(self):
        if not self.judgments and not self.metric_scores:
            raise ValueError(f"segment {self.segment_id!r} has neither judgments nor metrics")


@dataclass
class SystemRecord:
    system_id: str
    segments: list[SegmentRecord]

    def segment_index(self) -> dict[str, SegmentRecord]:
        return {seg.segment_id: seg for seg in self.segments}

    def judgment_count(self) -> int:
        return sum(len(seg.judgments) for seg in self.segments)


@dataclass
class ComparisonGroup:
    """Systems sharing a source test set, e.g. one WMT year x language pair."""

    group_id: str
    systems: list[SystemRecord]
    shared_segment_ids: list[str]

    def __post_init__(self):
        ids = [s.system_id for s in self.systems]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate system ids in group {self.group_id!r}")
        if len(self.shared_segment_ids) < 2:
            raise ValueError(
                f"group {self.group_id!r} has {len(self.shared_segment_ids)} shared "
                "segments; at least 2 required"
            )
        shared = set(self.shared_segment_ids)
        for sys in self.systems:
            missing = shared - set(seg.segment_id for seg in sys.segments)
            if missing:
                raise ValueError(
                    f"system {sys.system_id!r} is missing shared segments: "
                    f"{sorted(missing)[:3]}..."
                )

    def system(self, system_id: str) -> SystemRecord:
        for sys in self.systems:
            if sys.system_id == system_id:
                return sys
        raise KeyError(system_id)


@dataclass(frozen=True)
class PairwiseExample:
    """An unordered pair of systems within a group, canonically ordered."""

    group_id: str
    system_a: str
    system_b: str
    n_segments: int

    def __post_init__(self):
        if self.system_a >= self.system_b:
            raise ValueError("system_a must sort strictly before system_b")


def aggregate_categories(judgment: JudgmentRecord) -> float:
    """Unweighted mean over category scores; exact and order-independent."""
    return math.fsum(judgment.values.values()) / len(judgment.values)


def build_pairs(group: ComparisonGroup) -> list[PairwiseExample]:
    """All C(k, 2) unordered system pairs of a group, lexicographically ordered."""
    if len(group.systems) < 2:
        raise ValueError(f"group {group.group_id!r} has fewer than 2 systems")
    ids = sorted(s.system_id for s in group.systems)
    n = len(group.shared_segment_ids)
    return [
        PairwiseExample(group.group_id, a, b, n_segments=n)
        for a, b in combinations(ids, 2)
    ]


# ---------------------------------------------------------------------------
# Ingestion
# ---------------------------------------------------------------------------


def ingest(
    path: str | Path,
    format: str = "jsonl",
    metrics_path: str | Path | None = None,
    scale: tuple[float, float] | None = None,
) -> list[ComparisonGroup]:
    """Read, validate, and index an evaluation data file.

    JSONL rows carry their own scale; the CSV variant requires an explicit
    `scale` and takes metric scores from a parallel `metrics_path` CSV.
    """
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"no such file: {path}")
    if format == "jsonl":
        rows = _read_jsonl_rows(path)
    elif format == "csv":
        if scale is None:
            raise SchemaError("CSV ingestion requires a declared scale (min, max)")
        rows = _read_csv_rows(path, metrics_path, scale)
    else:
        raise SchemaError(f"unknown format {format!r}")
    return _assemble_groups(rows)


def _read_jsonl_rows(path: Path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as e:
                raise SchemaError(f"invalid JSON: {e.msg}", line=lineno) from e
            yield lineno, _parse_jsonl_row(row, lineno)


def _parse_jsonl_row(row: dict, lineno: int):
    try:
        group = row["group"]
        system = row["system"]
        segment = row["segment"]
        lo, hi = row["scale"]
    except (KeyError, TypeError, ValueError) as e:
        raise SchemaError(f"missing or malformed required field ({e})", line=lineno) from e
    judgments = []
    for j in row.get("judgments", []):
        try:
            judgments.append(
                JudgmentRecord(
                    annotator_id=j.get("annotator"),
                    values={str(c): float(v) for c, v in j["values"].items()},
                    scale_min=float(lo),
                    scale_max=float(hi),
                )
            )
        except (KeyError, TypeError, ValueError) as e:
            raise SchemaError(f"bad judgment: {e}", line=lineno) from e
    metrics: dict[str, MetricObservation] = {}
    for mid, payload in row.get("metrics", {}).items():
        try:
            if isinstance(payload, dict):
                metrics[str(mid)] = MetricObservation.from_statistics(
                    payload["num"], payload["den"]
                )
            else:
                metrics[str(mid)] = MetricObservation.from_scalar(payload)
        except (KeyError, TypeError, ValueError) as e:
            raise SchemaError(f"bad metric {mid!r}: {e}", line=lineno) from e
    try:
        seg = SegmentRecord(
            segment_id=str(segment),
            judgments=judgments,
            metric_scores=metrics,
            scale=(float(lo), float(hi)),
        )
    except ValueError as e:
        raise SchemaError(str(e), line=lineno) from e
    return str(group), str(system), seg


def _read_csv_rows(path: Path, metrics_path: Path | None, scale: tuple[float, float]):
    lo, hi = scale
    # Named annotators accumulate one judgment per (row key, annotator);
    # anonymous rows each become a standalone single-category judgment.
    named: dict[tuple[str, str, str], dict[str, dict[str, float]]] = {}
    anonymous: dict[tuple[str, str, str], list[dict[str, float]]] = {}
    order: list[tuple[str, str, str]] = []
    lines: dict[tuple[str, str, str], int] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        _require_columns(reader, ["group", "system", "segment", "annotator", "category", "value"], path)
        for row in reader:
            lineno = reader.line_num
            key = (row["group"], row["system"], row["segment"])
            annot = row["annotator"] or None
            try:
                value = float(row["value"])
            except ValueError as e:
                raise SchemaError(f"bad value {row['value']!r}", line=lineno) from e
            if key not in lines:
                order.append(key)
                lines[key] = lineno
            if annot is None:
                anonymous.setdefault(key, []).append({row["category"]: value})
            else:
                values = named.setdefault(key, {}).setdefault(annot, {})
                if row["category"] in values:
                    raise SchemaError(
                        f"duplicate judgment cell {key + (annot, row['category'])}", line=lineno
                    )
                values[row["category"]] = value

    metrics: dict[tuple[str, str, str], dict[str, MetricObservation]] = {}
    if metrics_path is not None:
        with open(metrics_path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            _require_columns(reader, ["group", "system", "segment", "metric_id", "value"], metrics_path)
            for row in reader:
                lineno = reader.line_num
                key = (row["group"], row["system"], row["segment"])
                mid = row["metric_id"]
                slot = metrics.setdefault(key, {})
                if mid in slot:
                    raise SchemaError(f"duplicate metric row {key + (mid,)}", line=lineno)
                try:
                    slot[mid] = MetricObservation.from_scalar(float(row["value"]))
                except ValueError as e:
                    raise SchemaError(f"bad metric value: {e}", line=lineno) from e
                if key not in lines:
                    order.append(key)
                    lines[key] = lineno

    for key in order:
        group, system, segment = key
        recs = []
        try:
            for annot, values in named.get(key, {}).items():
                recs.append(JudgmentRecord(annot, dict(values), lo, hi))
            for values in anonymous.get(key, []):
                recs.append(JudgmentRecord(None, dict(values), lo, hi))
            seg = SegmentRecord(
                segment_id=segment,
                judgments=recs,
                metric_scores=metrics.get(key, {}),
                scale=(lo, hi),
            )
        except ValueError as e:
            raise SchemaError(str(e), line=lines[key]) from e
        yield lines[key], (group, system, seg)


def _require_columns(reader: csv.DictReader, required: list[str], path) -> None:
    have = set(reader.fieldnames or [])
    missing = [c for c in required if c not in have]
    if missing:
        raise SchemaError(f"{path}: missing CSV columns {missing}")


def _assemble_groups(rows) -> list[ComparisonGroup]:
    # group -> system -> {segment_id: SegmentRecord}, preserving input order
    table: dict[str, dict[str, dict[str, SegmentRecord]]] = {}
    for lineno, (group, system, seg) in rows:
        systems = table.setdefault(group, {})
        segments = systems.setdefault(system, {})
        if seg.segment_id in segments:
            raise SchemaError(
                f"duplicate (group, system, segment) = ({group!r}, {system!r}, "
                f"{seg.segment_id!r})",
                line=lineno,
            )
        segments[seg.segment_id] = seg

    groups = []
    for group_id, systems in table.items():
        sys_records = [
            SystemRecord(system_id=sid, segments=list(segs.values()))
            for sid, segs in sorted(systems.items())
        ]
        first_order = [seg.segment_id for seg in sys_records[0].segments]
        common = set(first_order)
        for sys in sys_records[1:]:
            common &= {seg.segment_id for seg in sys.segments}
        shared = [sid for sid in first_order if sid in common]
        dropped = sum(len(s.segments) for s in sys_records) - len(shared) * len(sys_records)
        if dropped:
            log.warning(
                "group %s: %d segment rows are not shared by every system and are "
                "excluded from pairwise alignment",
                group_id,
                dropped,
            )
        if len(shared) < 2:
            raise SchemaError(
                f"group {group_id!r} has only {len(shared)} segments shared by all systems"
            )
        groups.append(
            ComparisonGroup(group_id=group_id, systems=sys_records, shared_segment_ids=shared)
        )
    return groups


def write_jsonl(groups: Iterable[ComparisonGroup], path: str | Path) -> None:
    """Serialize groups back to the JSONL schema (round-trip safe)."""
    with open(path, "w", encoding="utf-8") as fh:
        for group in groups:
            for sys in group.systems:
                for seg in sys.segments:
                    scale = seg.scale
                    if scale is None and seg.judgments:
                        scale = (seg.judgments[0].scale_min, seg.judgments[0].scale_max)
                    if scale is None:
                        scale = (0.0, 1.0)
                    row = {
                        "group": group.group_id,
                        "system": sys.system_id,
                        "segment": seg.segment_id,
                        "scale": list(scale),
                        "judgments": [
                            {"annotator": j.annotator_id, "values": j.values}
                            for j in seg.judgments
                        ],
                        "metrics": {
                            mid: (
                                obs.scalar
                                if obs.kind == SCALAR
                                else {"num": list(obs.statistics[0]), "den": list(obs.statistics[1])}
                            )
                            for mid, obs in sorted(seg.metric_scores.items())
                        },
                    }
                    fh.write(json.dumps(row, sort_keys=True) + "\n")


def dataset_summary(groups: list[ComparisonGroup]) -> dict:
    """Counts used by the validation command."""
    out = {"groups": len(groups), "systems": 0, "pairs": 0, "per_group": {}}
    for g in groups:
        judgments = {s.system_id: s.judgment_count() for s in g.systems}
        npairs = len(g.systems) * (len(g.systems) - 1) // 2
        out["systems"] += len(g.systems)
        out["pairs"] += npairs
        out["per_group"][g.group_id] = {
            "systems": len(g.systems),
            "shared_segments": len(g.shared_segment_ids),
            "pairs": npairs,
            "judgments": judgments,
        }
    return out
