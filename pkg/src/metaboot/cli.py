"""Command-line surface: validation, decomposition tables, breakeven and
convergence curves, power tables, significance counts, synthetic data.

Every command is a pure function of its inputs and seed: reruns produce
byte-identical artifacts regardless of worker count (set via the
METABOOT_WORKERS environment variable; default: logical core count).
Exit codes: 0 success, 1 internal or statistical failure, 2 input error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .annotator import (
    ANALYTIC,
    BOOTSTRAP,
    HUMAN,
    PERFECT_ANNOTATOR,
    breakeven,
    error_curve,
    variance_report,
)
from .bootstrap import (
    DEFAULT_TRIALS,
    JUDGMENT_LEVEL,
    SIGNIFICANCE_TRIALS,
    ResamplePlan,
    load_replicates_csv,
)
from .data import SchemaError, dataset_summary, ingest, write_jsonl
from .decomposition import (
    FULL_DATA,
    DecompositionError,
    adjusted_error,
    convergence_curve,
    decompose,
    decompose_human,
    lower_bound,
)
from .estimators import metric_coverage, pair_views
from .power import ONE_SIDED, TWO_SIDED, cooccurrence, power_table
from .synthetic import GeneratorConfig, generate

log = logging.getLogger("metaboot")


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def _fmt_g(x: float) -> str:
    return format(float(x), ".10g")


def _write_csv(path: Path, header: list[str], rows: list[list[str]]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, encoding="utf-8") as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise SchemaError("run-config file must hold a JSON object")
    return cfg


def _merged(args: argparse.Namespace, key: str, default=None):
    """Flag value if given, else run-config value, else default."""
    value = getattr(args, key, None)
    if value is not None:
        return value
    return getattr(args, "_config", {}).get(key.replace("_", "-"), default)


def _require(args, key, default=None):
    value = _merged(args, key, default)
    if value is None:
        raise SchemaError(f"missing required option --{key.replace('_', '-')}")
    return value


def _parse_metrics(raw) -> list[str] | None:
    if raw is None or raw == "all":
        return None
    if isinstance(raw, list):
        return [str(m) for m in raw]
    return [m.strip() for m in str(raw).split(",") if m.strip()]


def _parse_floats(raw) -> list[float]:
    if isinstance(raw, list):
        return [float(x) for x in raw]
    return [float(x) for x in str(raw).split(",") if x.strip()]


def _parse_ints(raw) -> list[int]:
    if isinstance(raw, list):
        return [int(x) for x in raw]
    return [int(x) for x in str(raw).split(",") if x.strip()]


def _load_data(args) -> list:
    path = _require(args, "data")
    fmt = _merged(args, "format", "jsonl")
    scale = _merged(args, "scale")
    if scale is not None:
        scale = tuple(_parse_floats(scale))
        if len(scale) != 2:
            raise SchemaError("--scale takes exactly two values: MIN MAX")
    return ingest(path, format=fmt, metrics_path=_merged(args, "metrics_csv"), scale=scale)


def _all_metric_ids(groups) -> list[str]:
    ids = set()
    for g in groups:
        for sys in g.systems:
            for seg in sys.segments:
                ids.update(seg.metric_scores)
    return sorted(ids)


def _covered_groups(groups, metric_id: str) -> list:
    covered = [g for g in groups if metric_coverage(g, metric_id)]
    if len(covered) < len(groups):
        log.warning(
            "metric %s: %d/%d groups lack full coverage and are excluded",
            metric_id, len(groups) - len(covered), len(groups),
        )
    return covered


def _out_dir(args) -> Path:
    out = Path(_require(args, "out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _seed(args) -> int:
    return int(_require(args, "seed"))


def _trials(args, default: int) -> int:
    return int(_merged(args, "trials", default))


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_validate(args) -> int:
    groups = _load_data(args)
    summary = dataset_summary(groups)
    print(f"groups: {summary['groups']}  systems: {summary['systems']}  pairs: {summary['pairs']}")
    for gid, info in summary["per_group"].items():
        total_j = sum(info["judgments"].values())
        print(
            f"  {gid}: {info['systems']} systems, {info['shared_segments']} shared "
            f"segments, {info['pairs']} pairs, {total_j} judgments"
        )
    metrics = _all_metric_ids(groups)
    print(f"metrics: {', '.join(metrics) if metrics else '(none)'}")
    return 0


def cmd_decompose(args) -> int:
    groups = _load_data(args)
    metrics = _parse_metrics(_merged(args, "metrics")) or _all_metric_ids(groups)
    if not metrics:
        raise SchemaError("no metric scores in the data and none requested")
    plan = ResamplePlan(
        seed=_seed(args),
        n_trials=_trials(args, DEFAULT_TRIALS),
        scheme=_merged(args, "scheme", JUDGMENT_LEVEL),
    )
    injected = None
    replicates = _merged(args, "replicates")
    if replicates:
        injected = load_replicates_csv(replicates)
    label_estimation = _merged(args, "label_estimation", FULL_DATA)
    out = _out_dir(args)

    noise_avg = lower_bound(groups, plan)
    human = decompose_human(groups, plan)
    table = [("Optimal", noise_avg, 0.0, 0.0, noise_avg)]
    table.append(("Human", human.err_obs, human.c0_noise, human.bias, human.c1_var))
    pair_rows: list[list[str]] = []
    for r in human.results:
        pair_rows.append(_pair_row("Human", r))
    metric_rows = []
    for metric_id in metrics:
        covered = _covered_groups(groups, metric_id)
        if not covered:
            log.warning("metric %s: no covered groups; skipped", metric_id)
            continue
        result = decompose(
            covered, metric_id, plan, label_estimation=label_estimation, injected=injected
        )
        metric_rows.append(
            (metric_id, result.err_obs, result.c0_noise, result.bias, result.c1_var)
        )
        for r in result.results:
            pair_rows.append(_pair_row(metric_id, r))
    metric_rows.sort(key=lambda row: (row[1], row[0]))
    table.extend(metric_rows)

    _write_csv(
        out / "decomposition_table.csv",
        ["estimator", "err_obs", "c0_noise", "bias", "c1_var"],
        [[name, _fmt(e), _fmt(n), _fmt(b), _fmt(v)] for name, e, n, b, v in table],
    )
    _write_csv(
        out / "decomposition_pairs.csv",
        [
            "estimator", "group", "system_a", "system_b", "err_obs", "noise", "bias",
            "variance", "c0", "c0_noise", "c1", "c1_var", "optimal_sign", "main_sign",
            "n_trials", "seed",
        ],
        pair_rows,
    )
    print(f"wrote {out / 'decomposition_table.csv'} ({len(table)} estimators)")
    return 0


def _pair_row(estimator: str, r) -> list[str]:
    return [
        estimator, r.group_id, r.system_a, r.system_b, _fmt(r.err_obs), _fmt(r.noise),
        str(r.bias), _fmt(r.variance), _fmt(r.c0), _fmt(r.c0_noise), str(r.c1),
        _fmt(r.c1_var), str(r.optimal_label.sign), str(r.main_prediction.sign),
        str(r.n_trials), str(r.seed),
    ]


def cmd_breakeven(args) -> int:
    groups = _load_data(args)
    metrics = _parse_metrics(_merged(args, "metrics")) or _all_metric_ids(groups)
    method = _merged(args, "method", ANALYTIC)
    kinds_opt = _merged(args, "kind", "both")
    kinds = [HUMAN, PERFECT_ANNOTATOR] if kinds_opt == "both" else [kinds_opt]
    plan = ResamplePlan(seed=_seed(args), n_trials=_trials(args, DEFAULT_TRIALS))
    grid = _merged(args, "grid")
    grid = _parse_ints(grid) if grid is not None else None
    out = _out_dir(args)

    report = variance_report(groups)
    curve_rows = []
    for kind in kinds:
        curve = error_curve(groups, kind, method, report, plan=plan, grid=grid)
        for n, err in curve.points:
            curve_rows.append([kind, method, str(n), _fmt(err)])
    _write_csv(out / "breakeven_curves.csv", ["estimator_kind", "method", "n", "error"], curve_rows)

    point_rows = []
    for metric_id in metrics:
        covered = _covered_groups(groups, metric_id)
        if not covered:
            continue
        adj = adjusted_error(covered, metric_id)
        for kind in kinds:
            n = breakeven(covered, metric_id, kind, report, plan=plan, method=method, grid=grid)
            point_rows.append([metric_id, kind, _fmt(adj), "none" if n is None else str(n)])
    _write_csv(
        out / "breakeven_points.csv",
        ["metric", "estimator_kind", "adjusted_error", "breakeven_n"],
        point_rows,
    )

    _write_csv(
        out / "variance_report.csv",
        ["slice", "sqrt_var_h", "sqrt_within", "sqrt_var_p", "ratio", "n_judgments"],
        _variance_rows(groups),
    )
    print(f"wrote {out / 'breakeven_points.csv'} ({len(point_rows)} rows)")
    return 0


def _variance_rows(groups) -> list[list[str]]:
    rows = []
    slices = [(g.group_id, [g]) for g in groups]
    if len(groups) > 1:
        slices.append(("all", list(groups)))
    for name, data in slices:
        r = variance_report(data)
        rows.append([
            name,
            _fmt(r.var_h**0.5),
            _fmt(r.within_var**0.5),
            _fmt(r.var_p**0.5),
            _fmt(r.ratio) if np.isfinite(r.ratio) else "inf",
            str(r.n_judgments),
        ])
    return rows


def cmd_power(args) -> int:
    sigmas = _parse_floats(_require(args, "sigmas"))
    deltas = _parse_floats(_require(args, "deltas"))
    alpha = float(_merged(args, "alpha", 0.05))
    beta = float(_merged(args, "beta", 0.95))
    sidedness = _merged(args, "sidedness", ONE_SIDED)
    out = _out_dir(args)
    table = power_table(sigmas, deltas, alpha=alpha, beta=beta, sidedness=sidedness)
    rows = [
        [_fmt_g(s)] + [str(n) for n in row]
        for s, row in zip(table.sigmas, table.counts)
    ]
    _write_csv(out / "power_table.csv", ["sigma"] + [_fmt_g(d) for d in table.deltas], rows)
    lo, hi = table.log_color_anchors
    meta = {
        "alpha": table.alpha,
        "beta": table.beta,
        "sidedness": table.sidedness,
        "log_color_anchors": [lo, hi],
    }
    (out / "power_table_meta.json").write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
    print(f"wrote {out / 'power_table.csv'} ({len(sigmas)}x{len(deltas)} cells)")
    return 0


def cmd_significance(args) -> int:
    groups = _load_data(args)
    metrics = _parse_metrics(_merged(args, "metrics")) or _all_metric_ids(groups)
    alpha = float(_merged(args, "alpha", 0.05))
    n_trials = _trials(args, SIGNIFICANCE_TRIALS)
    plan = ResamplePlan(seed=_seed(args), n_trials=n_trials)
    out = _out_dir(args)

    pair_rows = []
    cooc_rows = []
    for metric_id in metrics:
        covered = _covered_groups(groups, metric_id)
        if not covered:
            continue
        counts, outcomes = cooccurrence(covered, metric_id, plan, n_trials=n_trials, alpha=alpha)
        cooc_rows.append([
            metric_id, str(counts.hh), str(counts.hm), str(counts.mh), str(counts.mm),
            str(counts.total),
        ])
        for human, metric in outcomes:
            for o in (human, metric):
                pair_rows.append([
                    metric_id, o.group_id, o.system_a, o.system_b, o.estimator_kind,
                    _fmt(o.p_fraction), str(int(o.significant)), str(o.direction),
                ])
    _write_csv(
        out / "significance_pairs.csv",
        ["metric", "group", "system_a", "system_b", "estimator", "p_fraction",
         "significant", "direction"],
        pair_rows,
    )
    _write_csv(out / "cooccurrence.csv", ["metric", "hh", "hm", "mh", "mm", "total"], cooc_rows)
    print(f"wrote {out / 'cooccurrence.csv'} ({len(cooc_rows)} metrics)")
    return 0


def cmd_convergence(args) -> int:
    groups = _load_data(args)
    metrics = _parse_metrics(_merged(args, "metrics")) or _all_metric_ids(groups)
    plan = ResamplePlan(seed=_seed(args), n_trials=_trials(args, DEFAULT_TRIALS))
    out = _out_dir(args)
    rows = []
    for metric_id in metrics:
        covered = _covered_groups(groups, metric_id)
        if not covered:
            continue
        views = pair_views(covered, [metric_id])
        cap = min(v.n_segments for v in views)
        grid = _merged(args, "grid")
        if grid is not None:
            sizes = [k for k in _parse_ints(grid) if k <= cap]
        else:
            sizes = sorted({int(k) for k in np.rint(np.geomspace(2, cap, 12)).astype(int)})
        for k, agreement in convergence_curve(views, metric_id, sizes, plan):
            rows.append([metric_id, str(k), _fmt(agreement)])
    _write_csv(out / "convergence.csv", ["metric", "n_segments", "agreement"], rows)
    print(f"wrote {out / 'convergence.csv'} ({len(rows)} points)")
    return 0


def cmd_synth(args) -> int:
    mus = _merged(args, "mus")
    if mus is not None:
        mus = _parse_floats(mus)
    else:
        n = int(_merged(args, "systems", 2))
        start = float(_merged(args, "mu_start", 50.0))
        step = float(_merged(args, "mu_step", 1.0))
        mus = [start + step * i for i in range(n)]
    offsets = _merged(args, "offsets")
    config = GeneratorConfig(
        system_means=tuple(mus),
        tau=float(_require(args, "tau")),
        eta=float(_require(args, "eta")),
        n_segments=int(_merged(args, "segments", 1000)),
        judgments_per_segment=int(_merged(args, "judgments", 1)),
        metric_offsets=tuple(_parse_floats(offsets)) if offsets is not None else None,
        seed=_seed(args),
        group_id=str(_merged(args, "group_id", "synthetic")),
        metric_id=str(_merged(args, "metric_id", "synthetic-metric")),
        match_moments=bool(_merged(args, "match_moments", False)),
    )
    out = _out_dir(args)
    groups, truth = generate(config)
    write_jsonl(groups, out / "synthetic.jsonl")
    (out / "ground_truth.json").write_text(truth.to_json() + "\n")
    print(f"wrote {out / 'synthetic.jsonl'} ({len(mus)} systems, {config.n_segments} segments)")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_data_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", help="evaluation data file (JSONL or CSV)")
    p.add_argument("--format", choices=["jsonl", "csv"], help="input format (default jsonl)")
    p.add_argument("--metrics-csv", dest="metrics_csv", help="parallel metric CSV (csv format only)")
    p.add_argument("--scale", nargs=2, metavar=("MIN", "MAX"), help="declared judgment scale (csv format only)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="metaboot",
        description="Bootstrap meta-evaluation of system-level metrics against human judgments.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run-config file; flags override its values")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="root random seed (mandatory where sampling occurs)")
    common.add_argument("--trials", type=int, help="bootstrap trial count")

    p = sub.add_parser("validate", parents=[common], help="ingest and report counts")
    _add_data_options(p)
    p.set_defaults(run=cmd_validate)

    p = sub.add_parser("decompose", parents=[common], help="error decomposition table")
    _add_data_options(p)
    p.add_argument("--metrics", help="comma-separated metric ids (default: all present)")
    p.add_argument("--scheme", choices=[JUDGMENT_LEVEL, "joint"], help="human-noise resampling scheme")
    p.add_argument("--replicates", help="externally computed per-trial score CSV")
    p.add_argument("--label-estimation", dest="label_estimation",
                   choices=["full_data", "replicate_majority"])
    p.set_defaults(run=cmd_decompose)

    p = sub.add_parser("breakeven", parents=[common], help="error curves and breakeven points")
    _add_data_options(p)
    p.add_argument("--metrics", help="comma-separated metric ids (default: all present)")
    p.add_argument("--kind", choices=[HUMAN, PERFECT_ANNOTATOR, "both"])
    p.add_argument("--method", choices=[ANALYTIC, BOOTSTRAP])
    p.add_argument("--grid", help="comma-separated judgment counts for the curve")
    p.set_defaults(run=cmd_breakeven)

    p = sub.add_parser("power", parents=[common], help="required judgment counts")
    p.add_argument("--sigmas", help="comma-separated per-judgment standard deviations")
    p.add_argument("--deltas", help="comma-separated effect sizes")
    p.add_argument("--alpha", type=float, help="false positive rate (default 0.05)")
    p.add_argument("--beta", type=float, help="power (default 0.95)")
    side = p.add_mutually_exclusive_group()
    side.add_argument("--one-sided", dest="sidedness", action="store_const", const=ONE_SIDED)
    side.add_argument("--two-sided", dest="sidedness", action="store_const", const=TWO_SIDED)
    p.set_defaults(run=cmd_power)

    p = sub.add_parser("significance", parents=[common], help="paired bootstrap significance")
    _add_data_options(p)
    p.add_argument("--metrics", help="comma-separated metric ids (default: all present)")
    p.add_argument("--alpha", type=float, help="significance level (default 0.05)")
    p.set_defaults(run=cmd_significance)

    p = sub.add_parser("convergence", parents=[common], help="metric-vs-main-prediction agreement curves")
    _add_data_options(p)
    p.add_argument("--metrics", help="comma-separated metric ids (default: all present)")
    p.add_argument("--grid", help="comma-separated test-set sizes")
    p.set_defaults(run=cmd_convergence)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    p.add_argument("--mus", help="comma-separated system quality means")
    p.add_argument("--systems", type=int, help="system count (with --mu-start/--mu-step)")
    p.add_argument("--mu-start", dest="mu_start", type=float)
    p.add_argument("--mu-step", dest="mu_step", type=float)
    p.add_argument("--tau", type=float, help="segment-quality standard deviation")
    p.add_argument("--eta", type=float, help="judgment-noise standard deviation")
    p.add_argument("--segments", type=int, help="segments per system (default 1000)")
    p.add_argument("--judgments", type=int, help="judgments per segment (default 1)")
    p.add_argument("--offsets", help="comma-separated per-system metric offsets")
    p.add_argument("--group-id", dest="group_id")
    p.add_argument("--metric-id", dest="metric_id")
    p.add_argument("--match-moments", dest="match_moments", action="store_const", const=True,
                   help="force empirical moments to equal the parameters exactly")
    p.set_defaults(run=cmd_synth)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args._config = _load_config(getattr(args, "config", None))
    except (OSError, json.JSONDecodeError) as e:
        print(f"error: cannot read run config: {e}", file=sys.stderr)
        return 2
    try:
        return args.run(args)
    except (SchemaError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except DecompositionError as e:
        print(f"statistical failure: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # noqa: BLE001 - CLI boundary
        print(f"internal failure: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
