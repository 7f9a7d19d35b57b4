"""Synthetic evaluation datasets with known ground truth.

The gaussian generative model keeps every downstream quantity in closed form:
segment qualities are normal around each system's mean with spread tau,
judgments add centered noise with spread eta, and the synthetic metric scores
each segment at its true quality plus a per-system systematic offset.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import norm

from .data import ComparisonGroup, JudgmentRecord, MetricObservation, SegmentRecord, SystemRecord
from .estimators import label_sign

UNBOUNDED_SCALE = (-1e18, 1e18)


@dataclass(frozen=True)
class GeneratorConfig:
    system_means: tuple[float, ...]
    tau: float                      # sd of true segment quality around the system mean
    eta: float                      # sd of per-judgment human noise
    n_segments: int
    judgments_per_segment: int = 1
    metric_offsets: tuple[float, ...] | None = None
    seed: int = 0
    group_id: str = "synthetic"
    metric_id: str = "synthetic-metric"
    clip: bool = False
    scale: tuple[float, float] | None = None
    # calibration mode: force the empirical first/second moments (means,
    # variances, zero cross-covariances) to equal the parameters exactly, so
    # bootstrap estimates can be checked against the closed forms without
    # sampling slack; requires one judgment per segment
    match_moments: bool = False

    def __post_init__(self):
        if len(self.system_means) < 2:
            raise ValueError("need at least two systems")
        if self.tau < 0 or self.eta < 0:
            raise ValueError("tau and eta must be non-negative")
        if self.n_segments < 2:
            raise ValueError("need at least two segments")
        if self.judgments_per_segment < 1:
            raise ValueError("judgments per segment must be >= 1")
        if self.metric_offsets is not None and len(self.metric_offsets) != len(self.system_means):
            raise ValueError("one metric offset per system required")
        if self.clip and self.scale is None:
            raise ValueError("clipping requires a declared scale")
        if self.match_moments and self.judgments_per_segment != 1:
            raise ValueError("moment matching supports exactly one judgment per segment")
        if self.match_moments and self.n_segments < 2 * len(self.system_means) + 2:
            raise ValueError("moment matching needs n_segments > 2 * n_systems + 1")

    @property
    def offsets(self) -> tuple[float, ...]:
        if self.metric_offsets is None:
            return tuple(0.0 for _ in self.system_means)
        return self.metric_offsets

    def system_ids(self) -> list[str]:
        width = len(str(len(self.system_means) - 1))
        return [f"sys{idx:0{width}d}" for idx in range(len(self.system_means))]


@dataclass(frozen=True)
class GroundTruth:
    """Generator parameters restated as the quantities estimated downstream."""

    config: GeneratorConfig
    var_h: float
    within_var: float
    var_p: float
    ratio: float
    true_labels: dict[tuple[str, str], int]
    components: dict[tuple[str, str], tuple[float, float, int]]  # noise, variance, bias

    def to_json(self) -> str:
        payload = {
            "config": {
                "system_means": list(self.config.system_means),
                "tau": self.config.tau,
                "eta": self.config.eta,
                "n_segments": self.config.n_segments,
                "judgments_per_segment": self.config.judgments_per_segment,
                "metric_offsets": list(self.config.offsets),
                "seed": self.config.seed,
                "group_id": self.config.group_id,
                "metric_id": self.config.metric_id,
                "match_moments": self.config.match_moments,
            },
            "var_h": self.var_h,
            "within_var": self.within_var,
            "var_p": self.var_p,
            "ratio": self.ratio,
            "true_labels": {f"{a}|{b}": s for (a, b), s in self.true_labels.items()},
            "components": {
                f"{a}|{b}": {"noise": n, "variance": v, "bias": bias}
                for (a, b), (n, v, bias) in self.components.items()
            },
        }
        return json.dumps(payload, sort_keys=True, indent=2)


def analytic_components(
    config: GeneratorConfig,
    pair: tuple[int, int],
    n_judgments: int,
    n_segments: int,
) -> tuple[float, float, int]:
    """Closed-form (noise, metric variance, bias) for a system index pair.

    Normal-limit forms for the bootstrap fractions: the human noise is the
    tail mass of the n-judgment mean difference on the wrong side of zero,
    and the metric variance the same for the paired k-segment difference.
    """
    i, j = pair
    d_mu = config.system_means[i] - config.system_means[j]
    d_metric = d_mu + config.offsets[i] - config.offsets[j]
    var_h = config.tau**2 + config.eta**2
    if d_mu == 0:
        noise = 0.5
    elif var_h == 0:
        noise = 0.0
    else:
        noise = float(norm.sf(abs(d_mu) / math.sqrt(2.0 * var_h / n_judgments)))
    if config.tau == 0:
        variance = 0.0 if d_metric != 0 else 0.5
    else:
        variance = float(
            norm.sf(abs(d_metric) * math.sqrt(n_segments) / (config.tau * math.sqrt(2.0)))
        )
    bias = int(label_sign(d_metric) != label_sign(d_mu))
    return noise, variance, bias


def _orthonormal_basis(rng: np.random.Generator, k: int, n_cols: int) -> np.ndarray:
    """Columns orthonormal and exactly orthogonal to the constant vector."""
    raw = np.column_stack([np.ones(k), rng.standard_normal((k, n_cols))])
    q, r = np.linalg.qr(raw)
    signs = np.sign(np.diag(r))
    if np.any(signs == 0):
        raise RuntimeError("degenerate draw during moment matching")
    return q[:, 1:] * signs[1:]


def generate(config: GeneratorConfig) -> tuple[list[ComparisonGroup], GroundTruth]:
    """Draw a dataset and its ground truth; bitwise reproducible per seed."""
    rng = np.random.default_rng(config.seed)
    k = config.n_segments
    n_sys = len(config.system_means)
    mus = np.asarray(config.system_means)
    offsets = np.asarray(config.offsets)
    J = config.judgments_per_segment

    if config.match_moments:
        basis = _orthonormal_basis(rng, k, 2 * n_sys)
        scale = math.sqrt(k)
        qualities = mus + config.tau * scale * basis[:, :n_sys]
        noise = config.eta * scale * basis[:, n_sys:]
        judgments = (qualities + noise)[:, :, None]
    else:
        qualities = mus + config.tau * rng.standard_normal((k, n_sys))
        judgments = qualities[:, :, None] + config.eta * rng.standard_normal((k, n_sys, J))

    metric = qualities + offsets

    declared = config.scale if config.scale is not None else UNBOUNDED_SCALE
    if config.clip:
        judgments = np.clip(judgments, declared[0], declared[1])

    seg_width = len(str(k - 1))
    seg_ids = [f"seg{idx:0{seg_width}d}" for idx in range(k)]
    systems = []
    for s, sys_id in enumerate(config.system_ids()):
        segments = []
        for i in range(k):
            recs = [
                JudgmentRecord(
                    annotator_id=None,
                    values={"score": float(judgments[i, s, j])},
                    scale_min=declared[0],
                    scale_max=declared[1],
                )
                for j in range(J)
            ]
            segments.append(
                SegmentRecord(
                    segment_id=seg_ids[i],
                    judgments=recs,
                    metric_scores={
                        config.metric_id: MetricObservation.from_scalar(float(metric[i, s]))
                    },
                    scale=declared,
                )
            )
        systems.append(SystemRecord(system_id=sys_id, segments=segments))
    group = ComparisonGroup(
        group_id=config.group_id, systems=systems, shared_segment_ids=list(seg_ids)
    )

    ids = config.system_ids()
    labels: dict[tuple[str, str], int] = {}
    components: dict[tuple[str, str], tuple[float, float, int]] = {}
    for i in range(n_sys):
        for j in range(i + 1, n_sys):
            key = (ids[i], ids[j])
            labels[key] = label_sign(mus[i] - mus[j])
            components[key] = analytic_components(config, (i, j), k * J, k)
    var_h = config.tau**2 + config.eta**2
    var_p = config.tau**2
    truth = GroundTruth(
        config=config,
        var_h=var_h,
        within_var=config.eta**2,
        var_p=var_p,
        ratio=var_h / var_p if var_p > 0 else (1.0 if var_h == 0 else math.inf),
        true_labels=labels,
        components=components,
    )
    return [group], truth
