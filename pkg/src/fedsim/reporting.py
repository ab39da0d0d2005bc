"""Config parsing, metrics persistence, and run comparison.

Configs are flat JSON documents with strict unknown-key rejection;
omitted keys fall back to the experiment defaults. Every run emits
metrics.jsonl (one object per round, deterministic content), summary.csv,
timings.csv, and manifest.json under a directory keyed by the config
hash, so identical configs always land in the same place.
"""
from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass
from pathlib import Path

from .aggregators import AggregatorConfig
from .errors import ConfigError, FedSimError
from .federation import FederationConfig, RoundRecord
from .training import LocalConfig

# key -> (type, default, validator)
_CONFIG_SCHEMA = {
    "num_clients": (int, 3, lambda v: v >= 1),
    "rounds": (int, 10, lambda v: v >= 1),
    "model_kind": (str, "mlp", lambda v: v in ("softmax_regression", "mlp")),
    "hidden_dim": (int, 32, lambda v: v >= 1),
    "activation": (str, "relu", lambda v: v in ("relu", "sigmoid")),
    "lr": (float, 0.01, lambda v: v > 0),
    "momentum": (float, 0.9, lambda v: 0 <= v < 1),
    "batch_size": (int, 64, lambda v: v >= 1),
    "local_epochs": (int, 1, lambda v: v >= 1),
    "strategy": (str, "fedavg", lambda v: v in (
        "fedavg", "fedopt", "fedams", "ewwa", "fedadp", "fedboosting")),
    "variant": (str, "adam", lambda v: v in ("adam", "adagrad", "yogi")),
    "server_lr": (float, 1.0, lambda v: v > 0),
    "beta1": (float, 0.9, lambda v: 0 <= v < 1),
    "beta2": (float, 0.999, lambda v: 0 <= v < 1),
    "epsilon": (float, 1e-8, lambda v: v > 0),
    "adp_alpha": (float, 5.0, lambda v: v > 0),
    "partition": (str, "iid", lambda v: v in ("iid", "label_skew")),
    "concentration": (float, 0.5, lambda v: v > 0),
    "data_source": (str, "synth", lambda v: v in ("synth", "idx")),
    "idx_images": (str, "", lambda v: True),
    "idx_labels": (str, "", lambda v: True),
    "synth_classes": (int, 5, lambda v: v >= 2),
    "synth_per_class": (int, 200, lambda v: v >= 1),
    "synth_dim": (int, 16, lambda v: v >= 1),
    "synth_spread": (float, 0.3, lambda v: v > 0),
    "seed": (int, 0, lambda v: True),
    "global_step_scale": (float, 1.0, lambda v: v > 0),
}


@dataclass(frozen=True)
class RunManifest:
    config_hash: str
    seed: int
    strategy: str
    variant: str
    started_at: str
    finished_at: str
    out_dir: str


def config_from_dict(doc: dict) -> FederationConfig:
    """Strictly validate a flat config dict; unknown keys are errors."""
    for key in doc:
        if key not in _CONFIG_SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
    values = {}
    for key, (typ, default, ok) in _CONFIG_SCHEMA.items():
        raw = doc.get(key, default)
        if typ is float and isinstance(raw, int) and not isinstance(raw, bool):
            raw = float(raw)
        if not isinstance(raw, typ) or isinstance(raw, bool):
            raise ConfigError(f"config key {key!r}: expected {typ.__name__}")
        if not ok(raw):
            raise ConfigError(f"config key {key!r}: value {raw!r} out of range")
        values[key] = raw
    try:
        return FederationConfig(
            num_clients=values["num_clients"],
            rounds=values["rounds"],
            model_kind=values["model_kind"],
            hidden_dim=values["hidden_dim"],
            activation=values["activation"],
            local=LocalConfig(
                lr=values["lr"], momentum=values["momentum"],
                batch_size=values["batch_size"],
                local_epochs=values["local_epochs"],
            ),
            aggregator=AggregatorConfig(
                strategy=values["strategy"], variant=values["variant"],
                server_lr=values["server_lr"], beta1=values["beta1"],
                beta2=values["beta2"], epsilon=values["epsilon"],
                adp_alpha=values["adp_alpha"],
            ),
            partition=values["partition"],
            concentration=values["concentration"],
            data_source=values["data_source"],
            idx_images=values["idx_images"],
            idx_labels=values["idx_labels"],
            synth_classes=values["synth_classes"],
            synth_per_class=values["synth_per_class"],
            synth_dim=values["synth_dim"],
            synth_spread=values["synth_spread"],
            seed=values["seed"],
            global_step_scale=values["global_step_scale"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def parse_config(path) -> FederationConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return config_from_dict(doc)


def config_to_dict(cfg: FederationConfig) -> dict:
    return {
        "num_clients": cfg.num_clients,
        "rounds": cfg.rounds,
        "model_kind": cfg.model_kind,
        "hidden_dim": cfg.hidden_dim,
        "activation": cfg.activation,
        "lr": cfg.local.lr,
        "momentum": cfg.local.momentum,
        "batch_size": cfg.local.batch_size,
        "local_epochs": cfg.local.local_epochs,
        "strategy": cfg.aggregator.strategy,
        "variant": cfg.aggregator.variant,
        "server_lr": cfg.aggregator.server_lr,
        "beta1": cfg.aggregator.beta1,
        "beta2": cfg.aggregator.beta2,
        "epsilon": cfg.aggregator.epsilon,
        "adp_alpha": cfg.aggregator.adp_alpha,
        "partition": cfg.partition,
        "concentration": cfg.concentration,
        "data_source": cfg.data_source,
        "idx_images": cfg.idx_images,
        "idx_labels": cfg.idx_labels,
        "synth_classes": cfg.synth_classes,
        "synth_per_class": cfg.synth_per_class,
        "synth_dim": cfg.synth_dim,
        "synth_spread": cfg.synth_spread,
        "seed": cfg.seed,
        "global_step_scale": cfg.global_step_scale,
    }


def canonical_config_text(cfg: FederationConfig) -> str:
    return json.dumps(config_to_dict(cfg), sort_keys=True, separators=(",", ":"))


def config_hash(cfg: FederationConfig) -> str:
    return hashlib.sha256(canonical_config_text(cfg).encode()).hexdigest()


def run_dir(out_root, cfg: FederationConfig) -> Path:
    """Output directory is a pure function of the root and config hash."""
    return Path(out_root) / config_hash(cfg)[:16]


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def emit_metrics(records: list[RoundRecord], manifest: RunManifest,
                 out_dir) -> dict:
    """Write metrics.jsonl, summary.csv, timings.csv, manifest.json.

    metrics.jsonl and summary.csv carry only seed-deterministic fields;
    wall-clock times go to timings.csv so reruns stay byte-identical.
    """
    if not records:
        raise FedSimError("no records to emit")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "metrics": out / "metrics.jsonl",
        "summary": out / "summary.csv",
        "timings": out / "timings.csv",
        "manifest": out / "manifest.json",
    }
    with open(paths["metrics"], "w") as fh:
        for rec in records:
            fh.write(json.dumps({
                "round": rec.round,
                "test_acc": rec.global_test_accuracy,
                "test_loss": rec.global_test_loss,
                "mean_train_loss": rec.mean_local_train_loss,
                "per_client_train_loss": rec.per_client_train_loss,
            }, sort_keys=True) + "\n")
    with open(paths["summary"], "w") as fh:
        fh.write("round,test_acc,test_loss,mean_train_loss\n")
        for rec in records:
            fh.write(f"{rec.round},{_fmt(rec.global_test_accuracy)},"
                     f"{_fmt(rec.global_test_loss)},"
                     f"{_fmt(rec.mean_local_train_loss)}\n")
    with open(paths["timings"], "w") as fh:
        fh.write("round,wall_ms\n")
        for rec in records:
            fh.write(f"{rec.round},{rec.wall_ms}\n")
    with open(paths["manifest"], "w") as fh:
        json.dump({
            "config_hash": manifest.config_hash,
            "seed": manifest.seed,
            "strategy": manifest.strategy,
            "variant": manifest.variant,
            "started_at": manifest.started_at,
            "finished_at": manifest.finished_at,
            "out_dir": manifest.out_dir,
        }, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return paths


def make_manifest(cfg: FederationConfig, out_dir, started_at: float,
                  finished_at: float) -> RunManifest:
    iso = lambda t: time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(t))
    return RunManifest(
        config_hash=config_hash(cfg),
        seed=cfg.seed,
        strategy=cfg.aggregator.strategy,
        variant=cfg.aggregator.variant,
        started_at=iso(started_at),
        finished_at=iso(finished_at),
        out_dir=str(out_dir),
    )


def load_metrics(run_dir_path) -> list[dict]:
    path = Path(run_dir_path) / "metrics.jsonl"
    try:
        lines = path.read_text().splitlines()
        rows = [json.loads(line) for line in lines if line.strip()]
    except (OSError, json.JSONDecodeError) as exc:
        raise FedSimError(f"{run_dir_path}: cannot read metrics ({exc})") from exc
    if not rows:
        raise FedSimError(f"{run_dir_path}: metrics file is empty")
    return rows


def compare_runs(dirs: list, threshold: float, out_path=None) -> list[dict]:
    """One summary row per run; optionally written as comparison.csv."""
    rows = []
    for d in dirs:
        metrics = load_metrics(d)
        manifest_path = Path(d) / "manifest.json"
        try:
            manifest = json.loads(manifest_path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise FedSimError(f"{d}: cannot read manifest ({exc})") from exc
        accs = [row["test_acc"] for row in metrics]
        reached = [row["round"] for row in metrics if row["test_acc"] >= threshold]
        rows.append({
            "strategy": manifest.get("strategy", "?"),
            "variant": manifest.get("variant", "?"),
            "final_test_acc": accs[-1],
            "best_test_acc": max(accs),
            "rounds_to_threshold": reached[0] if reached else "never",
        })
    if out_path is not None:
        with open(out_path, "w") as fh:
            fh.write("strategy,variant,final_test_acc,best_test_acc,"
                     "rounds_to_threshold\n")
            for row in rows:
                fh.write(f"{row['strategy']},{row['variant']},"
                         f"{_fmt(row['final_test_acc'])},"
                         f"{_fmt(row['best_test_acc'])},"
                         f"{row['rounds_to_threshold']}\n")
    return rows
