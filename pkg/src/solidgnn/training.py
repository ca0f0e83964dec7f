"""Training orchestration: run configs, the optimization loop, metrics,
checkpointing, and evaluation reports.

One optimizer step consumes a mini-batch of graphs (default 4); the
batch loss is the mean of per-sample losses, evaluated on a
block-diagonal merged graph for the flat message-passing models and
sample-by-sample for the hierarchical one. Everything is a pure function
of the config seeds, so reruns and checkpoint resumes are bit-exact.
"""

from __future__ import annotations

import base64
import json
import os
from dataclasses import asdict, dataclass, replace
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import LrSchedule, Tensor, adam_step, cosine_warm_restart_lr
from .coords import FrameTransform
from .data import SampleRecord, load_dataset, split_dataset
from .graphs import Graph, augment_edges, merge_graphs, mesh_to_graph
from .models import (
    MODEL_KINDS,
    build_model,
    loss_scale_from_graph,
    relative_error,
)
from .seeding import derive_seed

__all__ = [
    "RunConfig",
    "TrainingDivergedError",
    "default_lr",
    "prepare_graphs",
    "train",
    "evaluate",
    "save_checkpoint",
    "load_checkpoint",
    "model_from_checkpoint",
]

CHECKPOINT_FORMAT_VERSION = 1

# desk-scale defaults: (lr_min, lr_max, weight_decay) per model kind.
# The flat models use 3x the reference learning-rate band (which was tuned
# for ~50x more data and epochs); the hierarchy keeps its reference band.
_LR_DEFAULTS = {
    "b": (3e-4, 4.5e-4, 1e-5),
    "b-sc": (3e-4, 4.5e-4, 1e-5),
    "ea-gnn": (3e-4, 4.5e-4, 1e-5),
    "m-gnn": (2e-3, 3e-3, 1e-6),
}

_TAG_AUGMENT = 11
_TAG_DROPOUT = 12


class TrainingDivergedError(RuntimeError):
    """Raised when a non-finite loss appears; names the offending samples."""


def default_lr(model: str) -> tuple[float, float, float]:
    return _LR_DEFAULTS[model]


@dataclass(frozen=True)
class RunConfig:
    """Everything one training run depends on."""

    model: str = "ea-gnn"
    target: str = "displacement"
    epochs: int = 150
    batch_size: int = 4
    lr_min: float = 1e-4
    lr_max: float = 1.5e-4
    weight_decay: float = 1e-5
    a_perc: float = 0.2
    keep_ratio: float = 0.6
    depth: int = 3
    power: int = 3
    dropout: float = 0.1
    data_seed: int = 0
    init_seed: int = 0
    shuffle_seed: int = 0
    dataset: str = "dataset.jsonl"
    out_dir: str = "run"

    def __post_init__(self):
        if self.model not in MODEL_KINDS:
            raise ValueError(f"unknown model {self.model!r}")
        if self.target not in ("displacement", "stress"):
            raise ValueError("target must be 'displacement' or 'stress'")

    @classmethod
    def with_defaults(cls, model: str, **kwargs) -> "RunConfig":
        lr_min, lr_max, wd = default_lr(model)
        base = dict(model=model, lr_min=lr_min, lr_max=lr_max, weight_decay=wd)
        base.update(kwargs)
        return cls(**base)


def prepare_graphs(records: list[SampleRecord], config: RunConfig) -> list[Graph]:
    """Convert records to model-ready graphs for the configured kind."""
    kind = MODEL_KINDS[config.model]
    graphs = []
    for i, rec in enumerate(records):
        transform = rec.transform if kind.simulation_coords else FrameTransform.identity()
        g = mesh_to_graph(rec.mesh, rec.bcs, rec.solution, transform, config.target)
        a_perc = config.a_perc if kind.name == "ea-gnn" else 0.0
        if a_perc > 0.0:
            g = augment_edges(g, a_perc, derive_seed(config.data_seed, _TAG_AUGMENT, i))
        graphs.append(g)
    return graphs


def _sample_weight(graph: Graph, loss: str, n_batch: int) -> np.ndarray:
    """Per-entry weight so that sum(w * err) equals this sample's share of
    the batch loss (mean over samples of per-sample mean error scaled by
    the boundary-condition magnitude for the scaled-MAE loss)."""
    size = graph.targets.size
    if loss == "mse":
        scale = 1.0
    else:
        scale = loss_scale_from_graph(graph)
    return np.full(graph.targets.shape, scale / (size * n_batch))


def _batch_loss(model, graphs: list[Graph], loss: str, training: bool, seed: int) -> Tensor:
    """Loss of one mini-batch on the merged graph."""
    merged, _ = merge_graphs(graphs)
    weights = np.vstack([_sample_weight(g, loss, len(graphs)) for g in graphs])
    pred = model.forward(merged, training=training, seed=seed)
    diff = pred - Tensor(merged.targets)
    if loss == "mse":
        err = diff * diff
    else:
        err = ad.abs_(diff)
    return ad.sum_all(err * Tensor(weights))


def _batch_loss_per_sample(model, graphs, loss, training, seed) -> Tensor:
    """Same batch loss evaluated sample-by-sample (hierarchical model)."""
    total = None
    for j, g in enumerate(graphs):
        pred = model.forward(g, training=training, seed=derive_seed(seed, j))
        diff = pred - Tensor(g.targets)
        err = diff * diff if loss == "mse" else ad.abs_(diff)
        term = ad.sum_all(err * Tensor(_sample_weight(g, loss, len(graphs))))
        total = term if total is None else total + term
    return total


def _loss_value(model, graphs, kind, batch_size, training, seed) -> float:
    """Mean per-sample loss over ``graphs`` (no gradient use)."""
    total = 0.0
    merged_ok = kind.arch == "edge_augmented"
    chunk = batch_size if not merged_ok else max(batch_size, 8)
    for lo in range(0, len(graphs), chunk):
        part = graphs[lo : lo + chunk]
        if merged_ok:
            val = _batch_loss(model, part, kind.loss, training, seed).values
        else:
            val = _batch_loss_per_sample(model, part, kind.loss, training, seed).values
        total += float(val) * len(part)
    return total / len(graphs)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def _encode(arr: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(arr, dtype="<f8").tobytes()).decode()


def _decode(data: str, shape) -> np.ndarray:
    return np.frombuffer(base64.b64decode(data), dtype="<f8").reshape(shape).copy()


def save_checkpoint(path: str, model, config: RunConfig, epoch: int,
                    best_val_loss: float) -> None:
    store = model.store
    doc = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "config": asdict(config),
        "epoch": epoch,
        "best_val_loss": best_val_loss,
        "params": {
            name: {"shape": list(t.values.shape), "data": _encode(t.values)}
            for name, t in store.items()
        },
        "adam": {
            "step": store.step_count,
            "m": {name: _encode(v) for name, v in store.adam_m.items()},
            "v": {name: _encode(v) for name, v in store.adam_v.items()},
        },
        "rng": {
            "data_seed": config.data_seed,
            "init_seed": config.init_seed,
            "shuffle_seed": config.shuffle_seed,
        },
    }
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")
    os.replace(tmp, path)


def load_checkpoint(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise ValueError("unsupported checkpoint format version")
    return doc


def model_from_checkpoint(doc: dict):
    """Rebuild the model and config stored in a checkpoint document."""
    cfg_doc = dict(doc["config"])
    config = RunConfig(**cfg_doc)
    model = _build(config)
    arrays = {
        name: _decode(entry["data"], entry["shape"])
        for name, entry in doc["params"].items()
    }
    model.store.load_arrays(arrays)
    model.store.step_count = doc["adam"]["step"]
    for name in model.store.adam_m:
        model.store.adam_m[name] = _decode(
            doc["adam"]["m"][name], model.store.adam_m[name].shape
        )
        model.store.adam_v[name] = _decode(
            doc["adam"]["v"][name], model.store.adam_v[name].shape
        )
    return model, config


def _build(config: RunConfig):
    kind = MODEL_KINDS[config.model]
    return build_model(
        kind,
        config.target,
        config.init_seed,
        dropout=config.dropout,
        depth=config.depth,
        keep_ratio=config.keep_ratio,
        power=config.power,
    )


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------

def train(config: RunConfig, records: Optional[list[SampleRecord]] = None,
          resume_from: Optional[str] = None, log_fn=None) -> dict:
    """Run one training job; writes metrics.csv plus best/last checkpoints
    under config.out_dir and returns a summary dict."""
    os.makedirs(config.out_dir, exist_ok=True)
    if records is None:
        records = load_dataset(config.dataset)
    kind = MODEL_KINDS[config.model]
    train_idx, val_idx, _ = split_dataset(records, config.data_seed)
    graphs = prepare_graphs(records, config)
    train_graphs = [graphs[i] for i in train_idx]
    train_ids = [records[i].sample_id for i in train_idx]
    val_graphs = [graphs[i] for i in val_idx]
    if not train_graphs or not val_graphs:
        raise ValueError("dataset too small to form train and val partitions")

    metrics_path = os.path.join(config.out_dir, "metrics.csv")
    best_path = os.path.join(config.out_dir, "checkpoint.json")
    last_path = os.path.join(config.out_dir, "checkpoint_last.json")

    steps_per_epoch = int(np.ceil(len(train_graphs) / config.batch_size))
    schedule = LrSchedule(config.lr_min, config.lr_max, steps_per_epoch)

    if resume_from is not None:
        doc = load_checkpoint(resume_from)
        if RunConfig(**doc["config"]) != config:
            raise ValueError("resume checkpoint was trained with a different config")
        model, _ = model_from_checkpoint(doc)
        start_epoch = doc["epoch"] + 1
        best_val = doc["best_val_loss"]
        mode = "a"
    else:
        model = _build(config)
        start_epoch = 0
        best_val = np.inf
        mode = "w"

    merged_ok = kind.arch == "edge_augmented"
    with open(metrics_path, mode, encoding="utf-8") as metrics:
        if mode == "w":
            metrics.write(f"# model={config.model} loss={kind.loss} target={config.target}\n")
            metrics.write("epoch,lr,train_loss,val_loss\n")
        for epoch in range(start_epoch, config.epochs):
            order = np.random.default_rng(
                np.random.SeedSequence([config.shuffle_seed, epoch])
            ).permutation(len(train_graphs))
            epoch_lr = cosine_warm_restart_lr(schedule, epoch * steps_per_epoch)
            train_total = 0.0
            for step in range(steps_per_epoch):
                chunk_idx = order[step * config.batch_size : (step + 1) * config.batch_size]
                chunk = [train_graphs[i] for i in chunk_idx]
                lr = cosine_warm_restart_lr(schedule, epoch * steps_per_epoch + step)
                seed = derive_seed(config.shuffle_seed, _TAG_DROPOUT, epoch, step)
                if merged_ok:
                    loss = _batch_loss(model, chunk, kind.loss, True, seed)
                else:
                    loss = _batch_loss_per_sample(model, chunk, kind.loss, True, seed)
                value = float(loss.values)
                if not np.isfinite(value):
                    names = ", ".join(train_ids[i] for i in chunk_idx)
                    raise TrainingDivergedError(
                        f"non-finite loss at epoch {epoch} step {step} on samples: {names}"
                    )
                model.store.zero_grads()
                ad.backward(loss)
                adam_step(model.store, lr, config.weight_decay)
                train_total += value * len(chunk)
            train_loss = train_total / len(train_graphs)
            val_loss = _loss_value(model, val_graphs, kind, config.batch_size, False, 0)
            metrics.write(f"{epoch},{epoch_lr!r},{train_loss!r},{val_loss!r}\n")
            metrics.flush()
            if val_loss < best_val:
                best_val = val_loss
                save_checkpoint(best_path, model, config, epoch, best_val)
            save_checkpoint(last_path, model, config, epoch, best_val)
            if log_fn is not None:
                log_fn(epoch, epoch_lr, train_loss, val_loss)
    return {
        "metrics": metrics_path,
        "checkpoint": best_path,
        "checkpoint_last": last_path,
        "best_val_loss": best_val,
        "final_train_loss": train_loss,
        "final_val_loss": val_loss,
    }


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def _component_names(target: str) -> list[str]:
    if target == "displacement":
        return ["e_ux", "e_uy"]
    return ["e_sxx", "e_syy", "e_sxy"]


def evaluate(model, config: RunConfig, records: list[SampleRecord],
             indices: list[int], per_sample_csv: Optional[str] = None) -> dict:
    """Relative l1 error per output component over a partition.

    Components are concatenated over all nodes of all selected samples;
    an optional CSV receives a per-sample breakdown.
    """
    if not indices:
        raise ValueError("cannot evaluate an empty partition")
    graphs = prepare_graphs(records, config)
    names = _component_names(config.target)
    preds, truths = [], []
    rows = []
    for i in indices:
        g = graphs[i]
        pred = model.forward(g, training=False).values
        preds.append(pred)
        truths.append(g.targets)
        row = [records[i].sample_id]
        for c, _ in enumerate(names):
            denom = np.abs(g.targets[:, c]).sum()
            err = (
                float(np.abs(pred[:, c] - g.targets[:, c]).sum() / denom)
                if denom > 0
                else float("nan")
            )
            row.append(err)
        rows.append(row)
    pred_all = np.vstack(preds)
    truth_all = np.vstack(truths)
    report = {
        name: relative_error(pred_all[:, c], truth_all[:, c])
        for c, name in enumerate(names)
    }
    if per_sample_csv is not None:
        with open(per_sample_csv, "w", encoding="utf-8") as fh:
            fh.write("sample_id," + ",".join(names) + "\n")
            for row in rows:
                fh.write(row[0] + "," + ",".join(repr(v) for v in row[1:]) + "\n")
    return report
