import json
import os
from pathlib import Path

import pytest

from metaboot.cli import main


def run(argv, capsys=None):
    code = main(argv)
    return code


def _synth(tmp_path, extra=()):
    out = tmp_path / "synth"
    code = main(
        [
            "synth", "--out", str(out), "--mus", "50,50.5,51", "--tau", "8",
            "--eta", "8", "--segments", "120", "--seed", "7", *extra,
        ]
    )
    assert code == 0
    return out / "synthetic.jsonl"


def test_synth_then_validate_roundtrip(tmp_path, capsys):
    data = _synth(tmp_path)
    assert main(["validate", "--data", str(data)]) == 0
    captured = capsys.readouterr().out
    assert "groups: 1" in captured
    assert "3 systems" in captured
    assert "synthetic-metric" in captured


def test_validate_scale_violation_exits_2(tmp_path, capsys):
    path = tmp_path / "bad.jsonl"
    row = {
        "group": "g", "system": "s", "segment": "x", "scale": [0, 100],
        "judgments": [{"annotator": None, "values": {"score": 101.0}}],
        "metrics": {},
    }
    path.write_text(json.dumps(row) + "\n")
    assert main(["validate", "--data", str(path)]) == 2
    assert "101" in capsys.readouterr().err


def test_validate_missing_file_exits_2(tmp_path, capsys):
    assert main(["validate", "--data", str(tmp_path / "nope.jsonl")]) == 2


def test_synth_deterministic(tmp_path):
    a = _synth(tmp_path / "a")
    b = _synth(tmp_path / "b")
    assert a.read_bytes() == b.read_bytes()
    truth_a = (tmp_path / "a" / "synth" / "ground_truth.json").read_text()
    truth_b = (tmp_path / "b" / "synth" / "ground_truth.json").read_text()
    assert truth_a == truth_b
    assert '"ratio": 2.0' in truth_a  # tau = eta


def test_decompose_outputs_and_determinism(tmp_path, monkeypatch):
    data = _synth(tmp_path)

    def decompose_into(out, workers):
        monkeypatch.setenv("METABOOT_WORKERS", str(workers))
        code = main(
            ["decompose", "--data", str(data), "--metrics", "synthetic-metric",
             "--trials", "400", "--seed", "11", "--out", str(out)]
        )
        assert code == 0
        return (out / "decomposition_table.csv").read_bytes(), (
            out / "decomposition_pairs.csv"
        ).read_bytes()

    t1, p1 = decompose_into(tmp_path / "r1", workers=1)
    t2, p2 = decompose_into(tmp_path / "r2", workers=2)
    assert t1 == t2
    assert p1 == p2

    lines = t1.decode().strip().splitlines()
    assert lines[0] == "estimator,err_obs,c0_noise,bias,c1_var"
    assert lines[1].startswith("Optimal,")
    assert lines[2].startswith("Human,")
    assert lines[3].startswith("synthetic-metric,")
    # zero-offset synthetic metric: bias column exactly zero
    assert lines[3].split(",")[3] == "0.000000"
    # optimal row: error equals its c1_var column, noise/bias columns zero
    opt = lines[1].split(",")
    assert opt[1] == opt[4]
    assert opt[2] == opt[3] == "0.000000"


def test_decompose_rejects_unknown_metric(tmp_path, capsys):
    data = _synth(tmp_path)
    code = main(
        ["decompose", "--data", str(data), "--metrics", "made-up", "--trials", "50",
         "--seed", "1", "--out", str(tmp_path / "out")]
    )
    assert code == 0  # metric skipped with a warning; table still written
    table = (tmp_path / "out" / "decomposition_table.csv").read_text()
    assert "made-up" not in table


def test_decompose_requires_seed(tmp_path, capsys):
    data = _synth(tmp_path)
    code = main(["decompose", "--data", str(data), "--out", str(tmp_path / "x")])
    assert code == 2
    assert "--seed" in capsys.readouterr().err


def test_breakeven_command(tmp_path):
    out = tmp_path / "be"
    data = _synth(tmp_path, extra=("--offsets", "2.0,0,0", "--judgments", "2"))
    code = main(
        ["breakeven", "--data", str(data), "--seed", "3", "--out", str(out),
         "--grid", "10,100,1000,10000"]
    )
    assert code == 0
    curves = (out / "breakeven_curves.csv").read_text().strip().splitlines()
    assert curves[0] == "estimator_kind,method,n,error"
    human_errs = [float(l.split(",")[3]) for l in curves[1:] if l.startswith("human,")]
    assert human_errs == sorted(human_errs, reverse=True)
    points = (out / "breakeven_points.csv").read_text()
    assert "synthetic-metric,human," in points
    report = (out / "variance_report.csv").read_text().splitlines()
    assert report[0] == "slice,sqrt_var_h,sqrt_within,sqrt_var_p,ratio,n_judgments"


def test_breakeven_zero_bias_marks_none(tmp_path):
    out = tmp_path / "be0"
    data = _synth(tmp_path, extra=("--judgments", "2"))
    assert main(["breakeven", "--data", str(data), "--seed", "3", "--out", str(out)]) == 0
    points = (out / "breakeven_points.csv").read_text()
    for line in points.strip().splitlines()[1:]:
        assert line.endswith(",none")


def test_power_command(tmp_path):
    out = tmp_path / "pw"
    code = main(
        ["power", "--sigmas", "19.27,30", "--deltas", "1,2,5", "--out", str(out),
         "--one-sided"]
    )
    assert code == 0
    lines = (out / "power_table.csv").read_text().strip().splitlines()
    assert lines[0] == "sigma,1,2,5"
    first = lines[1].split(",")
    assert first[0] == "19.27"
    assert abs(int(first[1]) - 8037) <= 1
    meta = json.loads((out / "power_table_meta.json").read_text())
    assert meta["alpha"] == 0.05
    assert meta["sidedness"] == "one"
    assert len(meta["log_color_anchors"]) == 2


def test_significance_command(tmp_path):
    out = tmp_path / "sig"
    data = _synth(tmp_path)
    code = main(
        ["significance", "--data", str(data), "--seed", "5", "--trials", "300",
         "--out", str(out)]
    )
    assert code == 0
    cooc = (out / "cooccurrence.csv").read_text().strip().splitlines()
    assert cooc[0] == "metric,hh,hm,mh,mm,total"
    cells = [int(x) for x in cooc[1].split(",")[1:]]
    assert sum(cells[:4]) == cells[4] == 3
    pairs = (out / "significance_pairs.csv").read_text().strip().splitlines()
    assert len(pairs) == 1 + 3 * 2  # human + metric rows per pair


def test_convergence_command(tmp_path):
    out = tmp_path / "conv"
    data = _synth(tmp_path)
    code = main(
        ["convergence", "--data", str(data), "--seed", "6", "--trials", "2000",
         "--grid", "4,16,64,120", "--out", str(out)]
    )
    assert code == 0
    lines = (out / "convergence.csv").read_text().strip().splitlines()
    assert lines[0] == "metric,n_segments,agreement"
    agreements = [float(l.split(",")[2]) for l in lines[1:]]
    # agreement at the largest size beats every earlier point, within MC slack
    mc = 2 * (0.25 / 2000) ** 0.5
    assert all(agreements[-1] >= a - mc for a in agreements[:-1])


def test_config_file_merging(tmp_path):
    data = _synth(tmp_path)
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"data": str(data), "trials": 200, "seed": 9}))
    out = tmp_path / "cfg_out"
    code = main(["decompose", "--config", str(cfg), "--out", str(out)])
    assert code == 0
    pairs = (out / "decomposition_pairs.csv").read_text().strip().splitlines()
    assert pairs[1].split(",")[-2] == "200"   # trials from config
    assert pairs[1].split(",")[-1] == "9"     # seed from config
    # flags override the config file
    out2 = tmp_path / "cfg_out2"
    code = main(["decompose", "--config", str(cfg), "--out", str(out2), "--trials", "300"])
    assert code == 0
    pairs2 = (out2 / "decomposition_pairs.csv").read_text().strip().splitlines()
    assert pairs2[1].split(",")[-2] == "300"


def test_injected_replicates_missing_key_exits_1(tmp_path, capsys):
    data = _synth(tmp_path)
    reps = tmp_path / "reps.csv"
    reps.write_text("trial,group,system,metric_id,score\n0,other,sys0,synthetic-metric,1.0\n")
    code = main(
        ["decompose", "--data", str(data), "--seed", "1", "--trials", "50",
         "--replicates", str(reps), "--out", str(tmp_path / "oops")]
    )
    assert code == 1
    assert "internal failure" in capsys.readouterr().err


def test_synth_match_moments_flag(tmp_path):
    out = tmp_path / "mm"
    code = main(
        ["synth", "--out", str(out), "--mus", "50,51", "--tau", "3", "--eta", "4",
         "--segments", "64", "--seed", "2", "--match-moments"]
    )
    assert code == 0
    truth = json.loads((out / "ground_truth.json").read_text())
    assert truth["config"]["match_moments"] is True
    assert main(["validate", "--data", str(out / "synthetic.jsonl")]) == 0
