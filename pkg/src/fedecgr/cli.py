"""Command-line entry point: configuration, orchestration and file export.

Config files are flat ``key = value`` lines with dotted sections, ``#``
comments allowed. Unknown keys are rejected. See ``DEFAULTS`` for every key.

Outputs (``--out DIR``)::

    metrics.csv               round,seed,algorithm,ecgr,beta,test_accuracy,test_loss
    summary.csv               per-round mean/min/max accuracy across seeds
    seed-<s>/masks.jsonl      one selection record per (round, client)
    seed-<s>/deviations.csv   round,client,dev_raw,dev_ecgr,assumption_held
    seed-<s>/partition_stats.csv
    theory_report.json
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import analysis
from .data import (
    Dataset,
    PartitionSpec,
    dirichlet_partition,
    label_entropy,
    load_idx,
    make_synthetic,
)
from .errors import ConfigError, FedEcgrError
from .fedopt import ALGORITHMS, AlgoConfig, run_training
from .model import ModelSpec

log = logging.getLogger("fedecgr")

METRICS_HEADER = ["round", "seed", "algorithm", "ecgr", "beta", "test_accuracy", "test_loss"]
DEVIATIONS_HEADER = ["round", "client", "dev_raw", "dev_ecgr", "assumption_held"]

DEFAULTS = {
    "dataset": "synthetic",
    "dataset.num_classes": 10,
    "dataset.dim": 32,
    "dataset.samples_per_class": 500,
    "dataset.test_per_class": 100,
    "dataset.separation": 3.0,
    "dataset.seed": 7,
    "dataset.train_images": "",
    "dataset.train_labels": "",
    "dataset.test_images": "",
    "dataset.test_labels": "",
    "dataset.max_train": 0,
    "model.kind": "logistic",
    "model.hidden_dim": 0,
    "model.activation": "tanh",
    "partition.num_clients": 10,
    "partition.alpha": 0.01,
    "partition.min_batches": 2,
    "seeds": "0,1,42,999,2025",
    "algorithm": "fedavg",
    "algorithm.mu": None,
    "ecgr.enabled": True,
    "ecgr.beta": 0.2,
    "ecgr.paired": False,
    "train.rounds": 100,
    "train.lr": 0.001,
    "train.lr_decay_every": 10,
    "train.lr_decay_factor": 0.5,
    "train.momentum": 0.9,
    "train.batch_size": 128,
    "audit.enabled": False,
    "audit.every": 1,
    "output.dir": "out",
}

ALIASES = {
    "beta": "ecgr.beta",
    "mu": "algorithm.mu",
    "alpha": "partition.alpha",
    "rounds": "train.rounds",
    "lr": "train.lr",
    "momentum": "train.momentum",
    "batch_size": "train.batch_size",
}


@dataclass
class RunConfig:
    dataset: str
    dataset_params: dict
    model_spec: ModelSpec
    num_clients: int
    alpha: float
    min_batches: int
    seeds: list
    algo: AlgoConfig
    paired: bool = False
    out_dir: Path = Path("out")
    audit_enabled: bool = False
    audit_every: int = 1
    raw: dict = field(default_factory=dict)

    def partition_spec(self, seed) -> PartitionSpec:
        return PartitionSpec(self.num_clients, self.alpha, seed, self.min_batches,
                             self.algo.batch_size)


def _parse_bool(key, text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(key, f"expected a boolean, got {text!r}")


def _coerce(key, text):
    default = DEFAULTS[key]
    if isinstance(default, bool):
        return _parse_bool(key, text)
    try:
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float) or key == "algorithm.mu":
            return float(text)
    except ValueError:
        raise ConfigError(key, f"cannot parse {text!r}") from None
    return str(text).strip()


def parse_config_text(text: str) -> RunConfig:
    values = dict(DEFAULTS)
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected key=value, got {line!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        key = ALIASES.get(key, key)
        if key not in DEFAULTS:
            raise ConfigError(key, "unknown key")
        values[key] = _coerce(key, val)
    return build_config(values)


def parse_config(path) -> RunConfig:
    return parse_config_text(Path(path).read_text())


def build_config(values: dict) -> RunConfig:
    v = values

    def need(key, ok, msg):
        if not ok:
            raise ConfigError(key, msg)

    need("dataset", v["dataset"] in ("synthetic", "mnist"), "must be synthetic or mnist")
    for key in ("dataset.num_classes", "dataset.dim", "dataset.samples_per_class",
                "dataset.test_per_class", "partition.num_clients", "partition.min_batches",
                "train.batch_size"):
        need(key, v[key] > 0, "must be positive")
    need("dataset.separation", v["dataset.separation"] >= 0, "must be non-negative")
    need("partition.alpha", v["partition.alpha"] > 0, "must be positive")
    need("ecgr.beta", 0.0 <= v["ecgr.beta"] <= 1.0, "must lie in [0, 1]")
    need("train.rounds", v["train.rounds"] >= 0, "must be non-negative")
    need("train.lr", v["train.lr"] > 0, "must be positive")
    need("train.lr_decay_factor", v["train.lr_decay_factor"] > 0, "must be positive")
    need("train.momentum", 0.0 <= v["train.momentum"] < 1.0, "must lie in [0, 1)")
    need("audit.every", v["audit.every"] > 0, "must be positive")
    algo = v["algorithm"]
    need("algorithm", algo in ALGORITHMS, f"must be one of {', '.join(ALGORITHMS)}")
    mu = v["algorithm.mu"]
    if algo == "fedprox":
        need("algorithm.mu", mu is not None and mu > 0, "fedprox requires mu > 0")
    else:
        need("algorithm.mu", mu is None or mu == 0, "mu applies to fedprox only")
    if v["dataset"] == "mnist":
        for key in ("dataset.train_images", "dataset.train_labels",
                    "dataset.test_images", "dataset.test_labels"):
            need(key, bool(v[key]), "required for the mnist dataset")
    try:
        seeds = [int(s) for s in str(v["seeds"]).split(",") if s.strip()]
    except ValueError:
        raise ConfigError("seeds", "expected comma-separated integers") from None
    need("seeds", bool(seeds) and all(s >= 0 for s in seeds), "need at least one non-negative seed")
    kind = v["model.kind"]
    need("model.kind", kind in ("logistic", "mlp"), "must be logistic or mlp")
    need("model.activation", v["model.activation"] in ("tanh", "relu"), "must be tanh or relu")
    if kind == "mlp":
        need("model.hidden_dim", v["model.hidden_dim"] > 0, "mlp needs hidden_dim > 0")

    cfg = AlgoConfig(
        algorithm=algo, ecgr_enabled=v["ecgr.enabled"], beta=v["ecgr.beta"], mu=mu or 0.0,
        lr=v["train.lr"], lr_decay_every=v["train.lr_decay_every"],
        lr_decay_factor=v["train.lr_decay_factor"], momentum=v["train.momentum"],
        batch_size=v["train.batch_size"], rounds=v["train.rounds"],
    )
    return RunConfig(
        dataset=v["dataset"],
        dataset_params={k.split(".", 1)[1]: v[k] for k in v if k.startswith("dataset.")},
        model_spec=None,  # resolved once the input dimension is known
        num_clients=v["partition.num_clients"],
        alpha=v["partition.alpha"],
        min_batches=v["partition.min_batches"],
        seeds=seeds,
        algo=cfg,
        paired=v["ecgr.paired"],
        out_dir=Path(v["output.dir"]),
        audit_enabled=v["audit.enabled"],
        audit_every=v["audit.every"],
        raw=v,
    )


def load_datasets(rc: RunConfig) -> tuple:
    """Build train/test datasets and fill in ``rc.model_spec``."""
    d = rc.dataset_params
    if rc.dataset == "synthetic":
        train = make_synthetic(d["num_classes"], d["dim"], d["samples_per_class"],
                               d["separation"], seed=d["seed"])
        test = make_synthetic(d["num_classes"], d["dim"], d["test_per_class"],
                              d["separation"], seed=d["seed"] + 1, center_seed=d["seed"])
    else:
        train = load_idx(d["train_images"], d["train_labels"])
        test = load_idx(d["test_images"], d["test_labels"])
        if d["max_train"]:
            train = train.subset(np.arange(min(d["max_train"], len(train))))
    v = rc.raw
    rc.model_spec = ModelSpec(v["model.kind"], train.dim, train.num_classes,
                              v["model.hidden_dim"] if v["model.kind"] == "mlp" else 0,
                              v["model.activation"])
    return train, test


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(float(x))
    return str(x)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def _summary_rows(metrics, rounds, paired):
    by_arm = {}
    for m in metrics:
        by_arm.setdefault(m.ecgr, {}).setdefault(m.round, []).append(m.test_accuracy)

    def stats(arm, r):
        acc = by_arm[arm][r]
        return [sum(acc) / len(acc), min(acc), max(acc)]

    rows = []
    for r in range(1, rounds + 1):
        if paired:
            base, ecgr = stats(False, r), stats(True, r)
            rows.append([r, *base, *ecgr, ecgr[0] - base[0]])
        else:
            arm = next(iter(by_arm))
            rows.append([r, *stats(arm, r)])
    return rows


def cmd_run(rc: RunConfig, masks_only=False) -> int:
    out = rc.out_dir
    out.mkdir(parents=True, exist_ok=True)
    train, test = load_datasets(rc)
    arms = [replace(rc.algo, ecgr_enabled=False), replace(rc.algo, ecgr_enabled=True)] \
        if rc.paired else [rc.algo]
    if masks_only:
        arms = [replace(rc.algo, ecgr_enabled=True)]
    metrics = []
    for seed in rc.seeds:
        part = dirichlet_partition(train, rc.partition_spec(seed))
        seed_dir = out / f"seed-{seed}"
        seed_dir.mkdir(exist_ok=True)
        for cfg in arms:
            log.info("seed %d: %s%s", seed, cfg.algorithm, "-ecgr" if cfg.ecgr_enabled else "")
            res = run_training(train, test, part, cfg, rc.model_spec, seed,
                               audit=rc.audit_enabled and (cfg.ecgr_enabled or not rc.paired),
                               audit_every=rc.audit_every)
            metrics.extend(res.metrics)
            if cfg.ecgr_enabled:
                with open(seed_dir / "masks.jsonl", "w") as f:
                    for m in res.masks:
                        f.write(m.to_json() + "\n")
                if res.masks:
                    stats = analysis.selection_stats(res.masks)
                    log.info("seed %d: mean late-half selection fraction %.3f", seed, stats["mean"])
            if res.deviations:
                _write_csv(seed_dir / "deviations.csv", DEVIATIONS_HEADER,
                           ([d.round, d.client, d.dev_raw, d.dev_ecgr, d.assumption_held]
                            for d in res.deviations))
    if masks_only:
        return 0
    _write_csv(out / "metrics.csv", METRICS_HEADER,
               ([m.round, m.seed, m.algorithm, m.ecgr, m.beta, m.test_accuracy, m.test_loss]
                for m in metrics))
    if rc.paired:
        header = ["round", "baseline_mean", "baseline_min", "baseline_max",
                  "ecgr_mean", "ecgr_min", "ecgr_max", "delta"]
    else:
        header = ["round", "mean_accuracy", "min_accuracy", "max_accuracy"]
    _write_csv(out / "summary.csv", header, _summary_rows(metrics, rc.algo.rounds, rc.paired))
    return 0


def cmd_check_theory(samples: int, dim: int, seed: int, out_dir=None, stream=sys.stdout) -> int:
    if samples < 1:
        raise ConfigError("samples", "must be at least 1")
    if dim < 1:
        raise ConfigError("dim", "must be at least 1")
    results = analysis.run_theory_suites(samples, dim, seed)
    for r in results:
        print(f"{r.name}: {r.passed}/{r.total} passed ({r.seconds:.2f}s)", file=stream)
        for ce in r.counterexamples[:3]:
            print(f"  counterexample: {json.dumps(ce)}", file=stream)
        if len(r.counterexamples) > 3:
            print(f"  ... {len(r.counterexamples) - 3} more in theory_report.json", file=stream)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        report = {
            "samples": samples, "dim": dim, "seed": seed,
            "suites": [
                {"name": r.name, "total": r.total, "passed": r.passed,
                 "counterexamples": r.counterexamples}
                for r in results
            ],
        }
        (out / "theory_report.json").write_text(json.dumps(report, indent=1) + "\n")
    return 0 if all(r.ok for r in results) else 1


def partition_stats_rows(ds: Dataset, part) -> list:
    rows = []
    for i, ix in enumerate(part.indices):
        counts = ds.label_counts(ix)
        rows.append([i, len(ix), float(part.weights[i]), label_entropy(counts), *counts.tolist()])
    return rows


def cmd_partition_stats(rc: RunConfig) -> int:
    train, _ = load_datasets(rc)
    for seed in rc.seeds:
        part = dirichlet_partition(train, rc.partition_spec(seed))
        seed_dir = rc.out_dir / f"seed-{seed}"
        seed_dir.mkdir(parents=True, exist_ok=True)
        rows = partition_stats_rows(train, part)
        header = ["client", "size", "p_i", "entropy"] + [f"class_{k}" for k in range(train.num_classes)]
        _write_csv(seed_dir / "partition_stats.csv", header, rows)
        log.info("seed %d: mean label entropy %.4f nats", seed, np.mean([r[3] for r in rows]))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedecgr", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("run", "train and export metrics"),
                        ("partition-stats", "export per-client label histograms"),
                        ("export-selection", "train with ECGR and export selection masks")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", type=Path, help="key=value config file (defaults if omitted)")
        p.add_argument("--seed-override", type=int, help="run this single seed instead of the list")
        p.add_argument("--out", type=Path, help="output directory")
    p = sub.add_parser("check-theory", help="randomised checks of the ECGR theory")
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", type=Path, default=Path("."))
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    try:
        if args.command == "check-theory":
            return cmd_check_theory(args.samples, args.dim, args.seed, args.out)
        rc = parse_config(args.config) if args.config else parse_config_text("")
        if args.seed_override is not None:
            rc.seeds = [args.seed_override]
        if args.out is not None:
            rc.out_dir = args.out
        if args.command == "run":
            return cmd_run(rc)
        if args.command == "export-selection":
            return cmd_run(rc, masks_only=True)
        return cmd_partition_stats(rc)
    except (FedEcgrError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
