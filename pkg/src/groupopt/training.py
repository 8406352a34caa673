"""Experiment harness: configuration, the training loop, sweeps, and the
magnitude-pruning baseline pipeline.

Reports are plain dict-convertible dataclasses; the CLI serializes them to
JSON and CSV, and tests consume them directly. Everything is deterministic
given (config, seed): data, initialization, and batch order all come from
pinned generators.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, asdict, replace

import numpy as np

from .blocks import make_rng
from .data import Dataset, SynthSpec, generate, load_libsvm, samples_to_arrays
from .metrics import auc, nonzero_groups, sparsity
from .model import EMBEDDING, ModelConfig, backward, forward, init_params, logloss
from .optimizers import RegConfig, make_optimizer
from .pruning import PruneSchedule, magnitude_prune

VANILLA_NAMES = ("sgd", "momentum", "adagrad", "adam", "amsgrad", "ftrl")
GROUP_NAMES = tuple(f"group-{k}" for k in ("sgd", "momentum", "adagrad", "adam", "amsgrad"))
OPTIMIZER_NAMES = VANILLA_NAMES + GROUP_NAMES

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid experiment configuration; message includes the field path."""


@dataclass
class ExperimentConfig:
    model: ModelConfig
    data: SynthSpec | str
    optimizer: str = "group-adam"
    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    gamma: float = 0.9
    epsilon: float = 1e-8
    reg: RegConfig = field(default_factory=lambda: RegConfig(apply_to=frozenset({EMBEDDING})))
    epochs: int = 1
    batch_size: int = 64
    seed: int = 0
    output_dir: str | None = None
    repeats: int = 1

    def __post_init__(self):
        if self.optimizer not in OPTIMIZER_NAMES:
            raise ConfigError(f"optimizer: unknown name {self.optimizer!r}")
        if self.lr <= 0:
            raise ConfigError("lr: must be > 0")
        if self.epochs < 1 or self.batch_size < 1 or self.repeats < 1:
            raise ConfigError("epochs, batch_size, repeats: must be >= 1")

    def schedule_args(self) -> dict:
        return {"beta1": self.beta1, "beta2": self.beta2,
                "gamma": self.gamma, "epsilon": self.epsilon}

    def to_dict(self) -> dict:
        d = asdict(self)
        d["reg"]["apply_to"] = sorted(self.reg.apply_to) if self.reg.apply_to is not None else None
        d["data"] = self.data if isinstance(self.data, str) else asdict(self.data)
        return d


def config_from_dict(doc: dict) -> ExperimentConfig:
    """Build a config from a JSON document, rejecting unknown fields."""

    def build(cls, sub: dict, path: str):
        allowed = set(cls.__dataclass_fields__)
        for key in sub:
            if key not in allowed:
                raise ConfigError(f"{path}.{key}: unknown field")
        try:
            return cls(**sub)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{path}: {exc}") from exc

    doc = dict(doc)
    known = set(ExperimentConfig.__dataclass_fields__)
    for key in doc:
        if key not in known:
            raise ConfigError(f"{key}: unknown field")
    if "model" not in doc:
        raise ConfigError("model: required")
    model = build(ModelConfig, dict(doc.pop("model")), "model")
    data = doc.pop("data", None)
    if data is None:
        raise ConfigError("data: required")
    if isinstance(data, dict):
        data = build(SynthSpec, dict(data), "data")
    elif not isinstance(data, str):
        raise ConfigError("data: must be a spec object or a file path")
    reg_doc = dict(doc.pop("reg", {}))
    if "apply_to" in reg_doc and reg_doc["apply_to"] is not None:
        reg_doc["apply_to"] = frozenset(reg_doc["apply_to"])
    else:
        reg_doc.setdefault("apply_to", frozenset({EMBEDDING}))
    reg = build(RegConfig, reg_doc, "reg")
    try:
        return ExperimentConfig(model=model, data=data, reg=reg, **doc)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_dataset(config: ExperimentConfig) -> Dataset:
    if isinstance(config.data, SynthSpec):
        return generate(config.data)
    samples = load_libsvm(config.data)
    ids, labels = samples_to_arrays(samples)
    if ids.shape[1] != config.model.num_fields:
        raise ConfigError(
            f"data: file has {ids.shape[1]} fields, model expects {config.model.num_fields}")
    n_train = int(0.9 * len(labels))
    return Dataset(ids[:n_train], labels[:n_train], ids[n_train:], labels[n_train:],
                   support=frozenset())


@dataclass
class RunReport:
    config: dict
    epochs: list
    final: dict
    schema_version: int = SCHEMA_VERSION
    # in-memory artifacts, not serialized
    blocks: dict | None = field(default=None, repr=False, compare=False)
    features_seen: np.ndarray | None = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "config": self.config,
            "epochs": self.epochs,
            "final": self.final,
        }


def evaluate(blocks: dict, dataset: Dataset, model_config: ModelConfig,
             features_seen: np.ndarray) -> dict:
    logits = forward(blocks, dataset.test_ids, model_config).logits
    return {
        "logloss": logloss(logits, dataset.test_labels),
        "auc": auc(dataset.test_labels, logits),
        "sparsity": sparsity(blocks[EMBEDDING], features_seen),
        "nonzero_groups": nonzero_groups(blocks[EMBEDDING]),
    }


def _run_epochs(blocks, optimizer, dataset, config, epochs, shuffle_seed,
                ids=None, labels=None) -> list[dict]:
    """Train in place; returns per-epoch metric rows."""
    ids = dataset.train_ids if ids is None else ids
    labels = dataset.train_labels if labels is None else labels
    features_seen = np.unique(ids)
    rng = make_rng(shuffle_seed)
    rows = []
    n = len(labels)
    for epoch in range(epochs):
        start = time.perf_counter()
        order = rng.permutation(n)
        for lo in range(0, n, config.batch_size):
            batch = order[lo:lo + config.batch_size]
            cache = forward(blocks, ids[batch], config.model)
            grads = backward(cache, labels[batch], blocks)
            for name, block in blocks.items():
                optimizer.step(block, grads[name])
        wall_ms = 1000.0 * (time.perf_counter() - start)
        row = {"epoch": epoch + 1,
               **evaluate(blocks, dataset, config.model, features_seen),
               "wall_ms": wall_ms}
        rows.append(row)
    return rows


def train_model(config: ExperimentConfig, dataset: Dataset | None = None,
                seed_offset: int = 0) -> RunReport:
    """One full training run; returns the report with blocks attached."""
    if dataset is None:
        dataset = load_dataset(config)
    run_seed = config.seed + seed_offset
    blocks = init_params(replace(config.model, seed=run_seed))
    optimizer = make_optimizer(config.optimizer, config.lr, config.reg,
                               config.schedule_args())
    rows = _run_epochs(blocks, optimizer, dataset, config, config.epochs,
                       shuffle_seed=run_seed + 1)
    features_seen = np.unique(dataset.train_ids)
    report = RunReport(config=config.to_dict(), epochs=rows, final=dict(rows[-1]),
                       blocks=blocks, features_seen=features_seen)
    report.final.pop("epoch", None)
    report.final["seed"] = run_seed
    return report


def run_repeated(config: ExperimentConfig) -> tuple[list[RunReport], dict]:
    """config.repeats independent runs (seed, seed+1, ...) plus mean/std summary."""
    reports = [train_model(config, seed_offset=i) for i in range(config.repeats)]
    keys = ("logloss", "auc", "sparsity", "nonzero_groups")
    summary = {}
    for key in keys:
        vals = np.array([r.final[key] for r in reports], dtype=np.float64)
        summary[key] = {"mean": float(vals.mean()),
                        "std": float(vals.std(ddof=1)) if len(vals) > 1 else 0.0}
    return reports, summary


def sweep(config: ExperimentConfig, lambda21_grid) -> list[RunReport]:
    """One run per grid value at fixed seed; reg otherwise unchanged."""
    if len(lambda21_grid) == 0:
        raise ConfigError("lambda21 grid: must be nonempty")
    dataset = load_dataset(config)
    reports = []
    for lam21 in lambda21_grid:
        reg = RegConfig(lambda1=config.reg.lambda1, lambda21=float(lam21),
                        lambda2=config.reg.lambda2, variant=config.reg.variant,
                        apply_to=config.reg.apply_to)
        point = ExperimentConfig(**{**_config_kwargs(config), "reg": reg})
        reports.append(train_model(point, dataset=dataset))
    return reports


def _config_kwargs(config: ExperimentConfig) -> dict:
    return {name: getattr(config, name) for name in ExperimentConfig.__dataclass_fields__}


def finetune(blocks: dict, dataset: Dataset, fraction: float,
             config: ExperimentConfig) -> None:
    """Train in place on the chronologically last fraction of train samples."""
    if fraction <= 0:
        return
    n = dataset.num_train
    lo = n - int(fraction * n)
    ids = dataset.train_ids[lo:]
    labels = dataset.train_labels[lo:]
    if len(labels) == 0:
        return
    optimizer = make_optimizer(config.optimizer, config.lr, config.reg,
                               config.schedule_args())
    _run_epochs(blocks, optimizer, dataset, config, 1, shuffle_seed=config.seed + 7919,
                ids=ids, labels=labels)


def prune_finetune_prune(blocks: dict, dataset: Dataset, schedule: PruneSchedule,
                         config: ExperimentConfig) -> dict:
    """Prune to target, fine-tune on the tail of the training data, prune again."""
    out = {name: b.copy() for name, b in blocks.items()}
    out[EMBEDDING] = magnitude_prune(out[EMBEDDING], schedule.target_keep)
    if schedule.finetune_fraction > 0:
        finetune(out, dataset, schedule.finetune_fraction, config)
        out[EMBEDDING] = magnitude_prune(out[EMBEDDING], schedule.target_keep)
    return out


def prune_baseline(config: ExperimentConfig, target_keep: int,
                   fractions=(0.0, 0.1, 0.2, 0.3),
                   dataset: Dataset | None = None,
                   base_report: RunReport | None = None) -> dict:
    """Train a vanilla model, then prune at each fine-tune fraction and keep
    the best test AUC. Returns a report dict with the per-fraction table."""
    if dataset is None:
        dataset = load_dataset(config)
    if base_report is None:
        base_report = train_model(config, dataset=dataset)
    features_seen = base_report.features_seen
    table = []
    best = None
    for fraction in fractions:
        schedule = PruneSchedule(target_keep=target_keep, finetune_fraction=fraction)
        pruned = prune_finetune_prune(base_report.blocks, dataset, schedule, config)
        metrics = evaluate(pruned, dataset, config.model, features_seen)
        row = {"finetune_fraction": fraction, **metrics}
        table.append(row)
        if best is None or row["auc"] > best["auc"]:
            best = row
    return {
        "schema_version": SCHEMA_VERSION,
        "config": config.to_dict(),
        "target_keep": int(target_keep),
        "base": dict(base_report.final),
        "fractions": table,
        "best": dict(best),
    }
