"""Seeded experiment drivers behind the CLI: train, sweep and noise runs."""
from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import data
from .config import DatasetConfig, ExperimentConfig
from .trainer import METRIC_COLUMNS, RunRecord, fit

log = logging.getLogger(__name__)

SUMMARY_METRICS = ("train_loss", "train_acc", "val_acc_top1", "val_acc_topk", "ece", "train_confidence")


@dataclass
class DataBundle:
    train: data.LabeledDataset
    val: data.LabeledDataset
    info: dict


def build_datasets(ds: DatasetConfig, seed: int) -> DataBundle:
    """Train/validation splits for one run.

    The clean data depends on ``data_seed`` only; label noise is drawn from the
    run seed so paired runs of different losses see the same corrupted labels.
    Validation labels stay clean.
    """
    if ds.kind == "idx":
        full = data.load_idx(ds.images, ds.labels)
        if ds.val_images:
            val = data.load_idx(ds.val_images, ds.val_labels)
            c = max(full.c, val.c)
            train = data.LabeledDataset(full.features, full.labels, c)
            val = data.LabeledDataset(val.features, val.labels, c, "validation")
        else:
            train, val = data.split_per_class(full, ds.n_val_per_class, ds.data_seed)
    else:
        n = ds.n_train_per_class + ds.n_val_per_class
        if ds.kind == "separated":
            specs = data.separated_specs(ds.c, ds.d, ds.tight_std, n, ds.scale)
        else:
            specs = data.overlapping_pair_specs(ds.c, ds.d, ds.gap, ds.tight_std, ds.loose_std, n, ds.scale)
        full = data.gaussian_clusters(specs, ds.data_seed)
        train, val = data.split_per_class(full, ds.n_val_per_class, ds.data_seed)
    info = {"n_train": train.n, "n_val": val.n}
    if ds.imbalance > 1.0:
        train = data.longtail_resample(train, ds.imbalance, ds.data_seed)
        info["n_train"] = train.n
        info["train_class_counts"] = train.class_counts().tolist()
    train, val = data.standardize(train, val)
    if ds.noise_rate > 0:
        train, corrupted = data.inject_label_noise(train, ds.noise_rate, seed)
        info["n_corrupted"] = int(corrupted.size)
    else:
        info["n_corrupted"] = 0
    return DataBundle(train, val, info)


def run_one(cfg: ExperimentConfig, seed: int, out_dir=None) -> RunRecord:
    """Train one seed and persist its record under ``out_dir`` if given."""
    bundle = build_datasets(cfg.dataset, seed)
    tcfg = cfg.train_config(seed, bundle.train.d, bundle.train.c)
    snapshot = {**cfg.to_dict(), "resolved": {"seed": seed, "layer_sizes": tcfg.sizes,
                                              "tau": None if "adr" not in tcfg.loss else _tau(tcfg, bundle.train.c)}}
    try:
        record, params = fit(tcfg, bundle.train, bundle.val, record_config=snapshot)
    except Exception as exc:
        record = getattr(exc, "record", None)
        if record is not None and out_dir is not None:
            record.extra.update(bundle.info)
            record.save(out_dir, getattr(exc, "params", None))
        raise
    record.extra.update(bundle.info)
    if out_dir is not None:
        record.save(out_dir, params)
    return record


def _tau(tcfg, c: int) -> int:
    from .losses import AdrHyper

    return AdrHyper(tcfg.gamma, tcfg.tau).tau_for(c)


def _run_task(args) -> RunRecord:
    cfg, seed, out_dir = args
    return run_one(cfg, seed, out_dir)


def run_many(tasks: list[tuple[ExperimentConfig, int, Path | None]], jobs: int = 1) -> list[RunRecord]:
    """Independent runs, optionally in worker processes; results keep task order."""
    if jobs <= 1 or len(tasks) <= 1:
        return [_run_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_task, tasks))


def mean_std(values) -> tuple[float, float]:
    a = np.asarray(values, dtype=np.float64)
    return float(a.mean()), float(a.std())


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def summarize(records: list[RunRecord]) -> dict[str, tuple[float, float]]:
    return {m: mean_std([r.final[m] for r in records]) for m in SUMMARY_METRICS}


def train_experiment(cfg: ExperimentConfig, out) -> list[RunRecord]:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "config.json", cfg.to_dict())
    tasks = [(cfg, s, out / f"seed_{s}") for s in cfg.run.seeds]
    records = run_many(tasks, cfg.run.jobs)
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "mean", "std", "n_seeds"])
        for m, (mu, sd) in summarize(records).items():
            w.writerow([m, repr(mu), repr(sd), len(records)])
    return records


def sweep_experiment(cfg: ExperimentConfig, gammas: list[float], taus: list[int], out) -> dict:
    """Full gamma x tau grid for the ADR loss, plus a CE baseline on the same seeds."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    loss = cfg.loss.loss if "adr" in cfg.loss.loss else "ce+adr"
    base = "ls" if loss == "ls+adr" else "ce"
    write_json(out / "config.json", {**cfg.to_dict(), "sweep": {"gammas": gammas, "taus": taus, "loss": loss,
                                                               "baseline": base}})
    cells = [(g, t) for g in gammas for t in taus]
    tasks, keys = [], []
    for g, t in cells:
        cell_cfg = cfg.with_updates(loss={"loss": loss, "gamma": g, "tau": t})
        for s in cfg.run.seeds:
            tasks.append((cell_cfg, s, out / f"gamma_{g:g}_tau_{t}" / f"seed_{s}"))
            keys.append((g, t))
    base_cfg = cfg.with_updates(loss={"loss": base})
    for s in cfg.run.seeds:
        tasks.append((base_cfg, s, out / f"baseline_{base}" / f"seed_{s}"))
        keys.append(None)
    records = run_many(tasks, cfg.run.jobs)
    by_cell: dict = {}
    baseline = []
    for key, rec in zip(keys, records):
        (baseline if key is None else by_cell.setdefault(key, [])).append(rec.final["val_acc_top1"])
    base_mean, base_std = mean_std(baseline)
    rows = []
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["loss", "gamma", "tau", "val_acc_top1_mean", "val_acc_top1_std", "n_seeds",
                    "baseline_mean", "delta_vs_baseline"])
        for g, t in cells:
            mu, sd = mean_std(by_cell[(g, t)])
            rows.append({"gamma": g, "tau": t, "mean": mu, "std": sd, "delta": mu - base_mean})
            w.writerow([loss, repr(float(g)), t, repr(mu), repr(sd), len(by_cell[(g, t)]), repr(base_mean),
                        repr(mu - base_mean)])
    return {"loss": loss, "baseline": (base_mean, base_std), "cells": rows}


def noise_experiment(cfg: ExperimentConfig, rates: list[float], out, losses=("ce", "ce+adr")) -> dict:
    """Train every loss at every noise rate; per-epoch curves go to ``noise.csv``.

    The final-epoch table is written to ``noise_summary.csv``.
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "config.json", {**cfg.to_dict(), "noise": {"rates": rates, "losses": list(losses)}})
    tasks, keys = [], []
    for r in rates:
        for loss in losses:
            run_cfg = cfg.with_updates(dataset={"noise_rate": r}, loss={"loss": loss})
            for s in cfg.run.seeds:
                tasks.append((run_cfg, s, out / f"rate_{r:g}" / loss.replace("+", "_") / f"seed_{s}"))
                keys.append((r, loss, s))
    records = run_many(tasks, cfg.run.jobs)
    with open(out / "noise.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rate", "loss", "seed", "n_corrupted", "epoch", "train_acc", "test_acc"])
        for (r, loss, s), rec in zip(keys, records):
            for row in rec.rows:
                w.writerow([repr(float(r)), loss, s, rec.extra["n_corrupted"], row["epoch"],
                            repr(row["train_acc"]), repr(row["val_acc_top1"])])
    table: dict = {}
    for (r, loss, s), rec in zip(keys, records):
        table.setdefault((r, loss), []).append(rec)
    summary = {}
    with open(out / "noise_summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rate", "loss", "test_acc_mean", "test_acc_std", "train_acc_mean", "n_seeds"])
        for (r, loss), recs in table.items():
            mu, sd = mean_std([x.final["val_acc_top1"] for x in recs])
            tr, _ = mean_std([x.final["train_acc"] for x in recs])
            summary[(r, loss)] = {"test_mean": mu, "test_std": sd, "train_mean": tr,
                                  "n_corrupted": [x.extra["n_corrupted"] for x in recs]}
            w.writerow([repr(float(r)), loss, repr(mu), repr(sd), repr(tr), len(recs)])
    return summary


__all__ = [
    "DataBundle", "METRIC_COLUMNS", "build_datasets", "noise_experiment", "run_many", "run_one",
    "summarize", "sweep_experiment", "train_experiment",
]
