"""SGD training loop, evaluation metrics and run records."""
from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import model
from .data import LabeledDataset, batches
from .errors import DivergenceError, InvalidArgumentError
from .losses import (
    AdrHyper,
    EntropyHyper,
    adr_forward,
    ce_forward_backward,
    combined_forward_backward,
    entropy_combined_forward_backward,
    ls_forward_backward,
)
from .simplex import softmax

log = logging.getLogger(__name__)

LOSS_CHOICES = ("ce", "ce+adr", "ls", "ls+adr", "ce+entropy")
DIVERGENCE_LIMIT = 1e6

METRIC_COLUMNS = (
    "epoch",
    "train_loss",
    "train_ce_part",
    "train_adr_part",
    "train_acc",
    "val_loss",
    "val_acc_top1",
    "val_acc_topk",
    "ece",
    "train_entropy_part",
    "train_confidence",
)


@dataclass
class OptimState:
    theta: np.ndarray
    velocity: np.ndarray
    alpha: float
    momentum: float = 0.0
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.theta.shape != self.velocity.shape:
            raise InvalidArgumentError("theta and velocity shapes differ")
        if not self.alpha > 0:
            raise InvalidArgumentError("learning rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise InvalidArgumentError("momentum must lie in [0, 1)")


def sgd_step(state: OptimState, grads: np.ndarray) -> OptimState:
    """``v <- mu v + G``; ``theta <- theta - alpha v`` (plain SGD when ``mu = 0``)."""
    g = np.asarray(grads, dtype=np.float64)
    if g.shape != state.theta.shape:
        raise InvalidArgumentError(f"gradient shape {g.shape} does not match parameters {state.theta.shape}")
    if state.weight_decay:
        g = g + state.weight_decay * state.theta
    v = state.momentum * state.velocity + g
    return OptimState(state.theta - state.alpha * v, v, state.alpha, state.momentum, state.weight_decay)


def step_decay_schedule(alpha0: float, drop_every: int, factor: float) -> Callable[[int], float]:
    if not 0.0 < factor <= 1.0:
        raise InvalidArgumentError("decay factor must lie in (0, 1]")
    if drop_every < 1:
        raise InvalidArgumentError("drop_every must be >= 1")
    return lambda epoch: alpha0 * factor ** (epoch // drop_every)


def topk_accuracy(logits, labels, k: int) -> float:
    """Fraction of rows whose label is among the ``k`` largest logits (ties to lower index)."""
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels)
    if not 1 <= k <= z.shape[1]:
        raise InvalidArgumentError(f"k must lie in [1, {z.shape[1]}], got {k}")
    top = np.argsort(-z, axis=1, kind="stable")[:, :k]
    return float(np.mean(np.any(top == y[:, None], axis=1)))


def expected_calibration_error(confidences, correct, bins: int = 15) -> float:
    """Equal-width binned ``sum_b (n_b / n) |acc_b - conf_b|``.

    Bin ``b`` covers ``((b-1)/bins, b/bins]``; a confidence of exactly 0 goes to
    the first bin.
    """
    conf = np.asarray(confidences, dtype=np.float64)
    hit = np.asarray(correct, dtype=np.float64)
    if bins < 1:
        raise InvalidArgumentError("bins must be >= 1")
    if conf.size == 0:
        return 0.0
    idx = np.clip(np.ceil(conf * bins).astype(int) - 1, 0, bins - 1)
    n = conf.size
    ece = 0.0
    for b in range(bins):
        m = idx == b
        nb = int(m.sum())
        if nb:
            ece += nb / n * abs(hit[m].mean() - conf[m].mean())
    return float(ece)


@dataclass
class TrainConfig:
    sizes: list[int]
    loss: str = "ce"
    gamma: float = 0.05
    tau: int | None = None
    phi_kind: str = "entropy"
    lam: float = 0.05
    eps_ls: float = 0.1
    lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 0.0
    lr_drop_every: int = 0
    lr_drop_factor: float = 0.1
    batch_size: int = 64
    epochs: int = 100
    topk: int = 5
    ece_bins: int = 15
    seed: int = 0

    def __post_init__(self):
        if self.loss not in LOSS_CHOICES:
            raise InvalidArgumentError(f"unknown loss {self.loss!r}; choose from {LOSS_CHOICES}")


@dataclass
class RunRecord:
    config: dict
    rows: list[dict] = field(default_factory=list)
    seed: int = 0
    wall_time: float = 0.0
    extra: dict = field(default_factory=dict)
    status: str = "ok"

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows])

    @property
    def final(self) -> dict:
        return self.rows[-1]

    def write_metrics(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(METRIC_COLUMNS)
            for r in self.rows:
                w.writerow([r["epoch"]] + [repr(float(r[c])) for c in METRIC_COLUMNS[1:]])

    def save(self, out_dir, params: model.MlpParams | None = None) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        self.write_metrics(out / "metrics.csv")
        (out / "config.json").write_text(json.dumps(self.config, indent=2, sort_keys=True) + "\n")
        # wall time is not reproducible, so it lives apart from the CSV and config
        (out / "run.json").write_text(json.dumps(
            {"seed": self.seed, "status": self.status, "wall_time": self.wall_time, **self.extra},
            indent=2, sort_keys=True) + "\n")
        if params is not None:
            model.save_checkpoint(params, out / "checkpoint.bin")


def objective(cfg: TrainConfig, logits: np.ndarray, labels: np.ndarray):
    """Batch-mean loss, its parts, and ``dL/dlogits`` for the configured loss.

    ``adr_part`` is the mean ADR penalty at the default hyperparameters for every
    loss choice, weighted into the total only for the ``+adr`` variants; logging
    it for the baselines makes their curves comparable.
    """
    b, c = logits.shape
    hyper = AdrHyper(cfg.gamma, cfg.tau)
    entropy_part = np.zeros(b)
    if cfg.loss in ("ce+adr", "ls+adr"):
        out = combined_forward_backward(logits, labels, hyper, cfg.phi_kind,
                                        eps_ls=cfg.eps_ls if cfg.loss == "ls+adr" else 0.0)
        adr_part = out.parts["adr_part"]
    else:
        if cfg.loss == "ce":
            out = ce_forward_backward(logits, labels)
        elif cfg.loss == "ls":
            out = ls_forward_backward(logits, labels, cfg.eps_ls)
        else:
            out = entropy_combined_forward_backward(logits, labels, EntropyHyper(cfg.lam))
            entropy_part = out.parts["entropy_part"]
        adr_part = adr_forward(softmax(logits), hyper.tau_for(c), cfg.phi_kind)[0]
    parts = {
        "ce_part": float(np.mean(out.parts["ce_part"])),
        "adr_part": float(np.mean(adr_part)),
        "entropy_part": float(np.mean(entropy_part)),
    }
    return float(np.mean(out.value)), parts, out.grad / b


def evaluate(cfg: TrainConfig, params: model.MlpParams, ds: LabeledDataset) -> dict:
    logits, _ = model.forward(params, ds.features)
    loss, parts, _ = objective(cfg, logits, ds.labels)
    p = softmax(logits)
    conf = p.max(axis=1)
    pred = np.argmax(logits, axis=1)
    return {
        "loss": loss,
        **parts,
        "acc": topk_accuracy(logits, ds.labels, 1),
        "acc_topk": topk_accuracy(logits, ds.labels, min(cfg.topk, ds.c)),
        "ece": expected_calibration_error(conf, pred == ds.labels, cfg.ece_bins),
        "confidence": float(conf.mean()),
    }


def _diverged(record: RunRecord, epoch: int, loss: float, params, start: float):
    record.status = "diverged"
    record.extra["diverged_epoch"] = epoch
    record.wall_time = time.perf_counter() - start
    err = DivergenceError(epoch, loss)
    err.record = record
    err.params = params
    raise err


def fit(cfg: TrainConfig, train_ds: LabeledDataset, val_ds: LabeledDataset,
        record_config: dict | None = None) -> tuple[RunRecord, model.MlpParams]:
    """Train an MLP on ``train_ds`` and log one row per epoch.

    On divergence the partial record is attached to the raised error as ``record``.
    """
    if cfg.sizes[0] != train_ds.d or cfg.sizes[-1] != train_ds.c:
        raise InvalidArgumentError(f"layer sizes {cfg.sizes} do not fit d={train_ds.d}, c={train_ds.c}")
    start = time.perf_counter()
    params = model.init(cfg.sizes, cfg.seed)
    sizes = params.sizes
    state = OptimState(params.flat(), np.zeros(params.flat().size), cfg.lr, cfg.momentum, cfg.weight_decay)
    schedule = (step_decay_schedule(cfg.lr, cfg.lr_drop_every, cfg.lr_drop_factor)
                if cfg.lr_drop_every else (lambda epoch: cfg.lr))
    record = RunRecord(config=record_config or asdict(cfg), seed=cfg.seed)
    for epoch in range(cfg.epochs):
        state.alpha = schedule(epoch)
        for xb, yb in batches(train_ds, cfg.batch_size, cfg.seed, epoch):
            logits, cache = model.forward(params, xb)
            if not np.all(np.isfinite(logits)):
                _diverged(record, epoch, float("nan"), params, start)
            _, _, dlogits = objective(cfg, logits, yb)
            grads = model.flatten_grads(model.backward(params, cache, dlogits))
            state = sgd_step(state, grads)
            params = model.MlpParams.from_flat(sizes, state.theta)
        tr = evaluate(cfg, params, train_ds)
        va = evaluate(cfg, params, val_ds)
        record.rows.append({
            "epoch": epoch,
            "train_loss": tr["loss"],
            "train_ce_part": tr["ce_part"],
            "train_adr_part": tr["adr_part"],
            "train_acc": tr["acc"],
            "val_loss": va["loss"],
            "val_acc_top1": va["acc"],
            "val_acc_topk": va["acc_topk"],
            "ece": va["ece"],
            "train_entropy_part": tr["entropy_part"],
            "train_confidence": tr["confidence"],
        })
        if not math.isfinite(tr["loss"]) or abs(tr["loss"]) > DIVERGENCE_LIMIT:
            _diverged(record, epoch, tr["loss"], params, start)
        log.debug("epoch %d loss %.5f val top1 %.4f", epoch, tr["loss"], va["acc"])
    record.wall_time = time.perf_counter() - start
    return record, params
