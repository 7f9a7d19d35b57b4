"""metaboot: bootstrap meta-evaluation of system-level NLG metrics.

Humans and automatic metrics are both estimators of true system quality;
this package measures their pairwise prediction error, decomposes it into
noise, bias, and variance by resampling, and answers how many human
judgments a metric is worth via perfect-annotator simulation, breakeven
curves, and power analysis.
"""

from .annotator import (
    ANALYTIC,
    BOOTSTRAP,
    HUMAN,
    PERFECT_ANNOTATOR,
    AnnotatorVarianceReport,
    ErrorCurve,
    breakeven,
    error_curve,
    unbiased_error_at,
    variance_report,
)
from .bootstrap import (
    JOINT,
    JUDGMENT_LEVEL,
    SEGMENT_LEVEL,
    ReplicateSet,
    ResamplePlan,
    derive_seed,
    load_replicates_csv,
    resample_judgments,
    resample_segments_paired,
    run_replicates,
    trial_rng,
)
from .data import (
    ComparisonGroup,
    JudgmentRecord,
    MetricObservation,
    PairwiseExample,
    SchemaError,
    SegmentRecord,
    SystemRecord,
    aggregate_categories,
    build_pairs,
    ingest,
    write_jsonl,
)
from .decomposition import (
    DatasetDecomposition,
    DecompositionError,
    DecompositionResult,
    adjusted_error,
    compute_bias,
    compute_c0,
    convergence_curve,
    decompose,
    decompose_human,
    estimate_noise,
    estimate_variance,
    lower_bound,
    main_prediction,
    observed_error,
    optimal_label,
)
from .estimators import (
    PairView,
    PairwiseLabel,
    SystemScore,
    human_score,
    metric_score,
    pair_view,
    pair_views,
    pairwise_label,
    zero_one_loss,
)
from .exact import ExactTerms, SmallInstance, enumerate_exact, random_instance, to_group, to_view
from .power import (
    CooccurrenceCounts,
    PowerSpec,
    PowerTable,
    SignificanceOutcome,
    bootstrap_significance,
    cooccurrence,
    power_table,
    required_sample_size,
)
from .synthetic import GeneratorConfig, GroundTruth, analytic_components, generate

__version__ = "0.1.0"
