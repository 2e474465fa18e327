import csv
import io
import json

import numpy as np
import pytest

from fedecgr.cli import (
    DEFAULTS,
    cmd_check_theory,
    cmd_partition_stats,
    cmd_run,
    main,
    parse_config,
    parse_config_text,
)
from fedecgr.errors import ConfigError
from fedecgr.linalg import norm

SMALL = """
dataset.num_classes = 3
dataset.dim = 4
dataset.samples_per_class = 60
dataset.test_per_class = 20
partition.num_clients = 3
partition.alpha = 0.5
train.batch_size = 16
train.lr = 0.05
rounds = 5
seeds = 0,1
"""


def small(tmp_path, extra=""):
    rc = parse_config_text(SMALL + extra)
    rc.out_dir = tmp_path
    return rc


def read_csv(path):
    with open(path) as f:
        return list(csv.DictReader(f))


def test_defaults():
    rc = parse_config_text("")
    assert rc.algo.beta == 0.2 and rc.alpha == 0.01 and rc.num_clients == 10
    assert rc.algo.rounds == 100 and rc.algo.lr == 0.001 and rc.algo.batch_size == 128
    assert rc.algo.momentum == 0.9 and rc.algo.lr_decay_factor == 0.5
    assert rc.seeds == [0, 1, 42, 999, 2025]


@pytest.mark.parametrize("text,key", [
    ("beta = 1.5", "ecgr.beta"),
    ("algorithm = fedprox", "algorithm.mu"),
    ("mu = 0.1", "algorithm.mu"),
    ("partition.alpha = 0", "partition.alpha"),
    ("colour = blue", "colour"),
    ("train.rounds = many", "train.rounds"),
    ("algorithm = sgd", "algorithm"),
    ("seeds = 1,x", "seeds"),
])
def test_invalid_configs_name_the_key(text, key):
    with pytest.raises(ConfigError) as err:
        parse_config_text(text)
    assert err.value.key == key


def test_fedprox_with_mu():
    rc = parse_config_text("algorithm = fedprox\nmu = 0.01  # proximal weight")
    assert rc.algo.mu == 0.01


def test_parse_file(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("ecgr.beta = 0.5\n")
    assert parse_config(p).algo.beta == 0.5


def test_run_writes_metrics(tmp_path):
    cmd_run(small(tmp_path))
    rows = read_csv(tmp_path / "metrics.csv")
    assert len(rows) == 10
    assert list(rows[0]) == ["round", "seed", "algorithm", "ecgr", "beta",
                             "test_accuracy", "test_loss"]
    assert {r["ecgr"] for r in rows} == {"true"}
    masks = (tmp_path / "seed-0" / "masks.jsonl").read_text().splitlines()
    assert len(masks) == 5 * 3


def test_run_is_byte_identical(tmp_path):
    cmd_run(small(tmp_path / "a"))
    cmd_run(small(tmp_path / "b"))
    for name in ("metrics.csv", "summary.csv", "seed-1/masks.jsonl"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_paired_summary_delta(tmp_path):
    cmd_run(small(tmp_path, "ecgr.paired = true\naudit.enabled = true"))
    metrics = read_csv(tmp_path / "metrics.csv")
    assert len(metrics) == 20
    summary = read_csv(tmp_path / "summary.csv")
    assert len(summary) == 5
    for row in summary:
        r = row["round"]
        base = [float(m["test_accuracy"]) for m in metrics
                if m["round"] == r and m["ecgr"] == "false"]
        ecgr = [float(m["test_accuracy"]) for m in metrics
                if m["round"] == r and m["ecgr"] == "true"]
        assert float(row["delta"]) == pytest.approx(np.mean(ecgr) - np.mean(base), abs=1e-12)
        assert float(row["baseline_min"]) == min(base)
    devs = read_csv(tmp_path / "seed-0" / "deviations.csv")
    assert len(devs) == 15 and set(devs[0]) == {"round", "client", "dev_raw", "dev_ecgr",
                                                "assumption_held"}


def test_export_selection_schema(tmp_path):
    assert main(["export-selection", "--out", str(tmp_path), "--seed-override", "3",
                 "--config", str(_write(tmp_path, SMALL))]) == 0
    assert not (tmp_path / "metrics.csv").exists()
    lines = (tmp_path / "seed-3" / "masks.jsonl").read_text().splitlines()
    rec = json.loads(lines[0])
    assert set(rec) == {"round", "client", "tau", "selected_indices", "beta"}
    assert len(rec["selected_indices"]) == rec["tau"] // 2
    assert all(0 <= i < rec["tau"] for i in rec["selected_indices"])


def _write(tmp_path, text):
    p = tmp_path / "run.cfg"
    p.write_text(text)
    return p


def test_check_theory_rejects_zero_samples():
    with pytest.raises(ConfigError):
        cmd_check_theory(0, 16, 42)


def test_check_theory_one_dimension(tmp_path):
    buf = io.StringIO()
    assert cmd_check_theory(50, 1, 42, tmp_path, stream=buf) == 0
    report = json.loads((tmp_path / "theory_report.json").read_text())
    assert [s["passed"] for s in report["suites"]] == [50, 50, 50]
    assert "monotonicity: 50/50" in buf.getvalue()


def test_check_theory_reports_counterexamples(tmp_path):
    # in higher dimension the monotonicity claim has counterexamples
    assert cmd_check_theory(100, 16, 42, tmp_path, stream=io.StringIO()) == 1
    report = json.loads((tmp_path / "theory_report.json").read_text())
    mono = report["suites"][1]
    assert mono["passed"] < 100 and len(mono["counterexamples"]) == 100 - mono["passed"]


def test_partition_stats_single_client(tmp_path):
    rc = small(tmp_path, "partition.num_clients = 1\nseeds = 0")
    cmd_partition_stats(rc)
    rows = read_csv(tmp_path / "seed-0" / "partition_stats.csv")
    assert len(rows) == 1 and float(rows[0]["p_i"]) == 1.0 and int(rows[0]["size"]) == 180


def test_partition_stats_skewed_vs_uniform(tmp_path):
    base = "dataset.num_classes = 10\ndataset.samples_per_class = 500\n" \
           "partition.num_clients = 10\ntrain.batch_size = 8\nseeds = 42\n"
    skew = parse_config_text(base + "alpha = 0.01")
    skew.out_dir = tmp_path / "skew"
    cmd_partition_stats(skew)
    flat = parse_config_text(base + "alpha = 1e6")
    flat.out_dir = tmp_path / "flat"
    cmd_partition_stats(flat)
    h_skew = [float(r["entropy"]) for r in read_csv(tmp_path / "skew/seed-42/partition_stats.csv")]
    flat_rows = read_csv(tmp_path / "flat/seed-42/partition_stats.csv")
    assert np.mean(h_skew) < 1.0
    assert all(abs(int(r[f"class_{k}"]) - 50) <= 5 for r in flat_rows for k in range(10))
    assert sum(float(r["p_i"]) for r in flat_rows) == pytest.approx(1.0)


def test_main_exit_codes(tmp_path, capsys):
    bad = _write(tmp_path, "beta = 2")
    assert main(["run", "--config", str(bad)]) == 2
    assert "ecgr.beta" in capsys.readouterr().err
    assert main(["run", "--config", str(tmp_path / "missing.cfg")]) == 2
    assert main(["check-theory", "--samples", "20", "--dim", "1",
                 "--out", str(tmp_path)]) == 0


def test_every_default_key_parses():
    text = "\n".join(f"{k} = {v}" for k, v in DEFAULTS.items()
                     if v is not None and v != "")
    assert parse_config_text(text).algo.beta == DEFAULTS["ecgr.beta"]
