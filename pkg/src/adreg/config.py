"""Experiment configuration: INI-style ``key = value`` sections plus flag overrides."""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .losses import PHI_KINDS
from .trainer import LOSS_CHOICES, TrainConfig


@dataclass
class DatasetConfig:
    kind: str = "overlapping-pairs"  # overlapping-pairs | separated | idx
    c: int = 10
    d: int = 2
    gap: float = 1.0
    tight_std: float = 0.5
    loose_std: float = 1.0
    scale: float = 4.0
    n_train_per_class: int = 100
    n_val_per_class: int = 100
    data_seed: int = 0
    images: str | None = None
    labels: str | None = None
    val_images: str | None = None
    val_labels: str | None = None
    noise_rate: float = 0.0
    imbalance: float = 1.0


@dataclass
class ModelConfig:
    hidden: list[int] = field(default_factory=lambda: [64])


@dataclass
class LossConfig:
    loss: str = "ce"
    gamma: float = 0.05
    tau: int | None = None
    phi_kind: str = "entropy"
    lam: float = 0.05
    eps_ls: float = 0.1


@dataclass
class OptimConfig:
    lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 0.0
    batch_size: int = 64
    epochs: int = 100
    lr_drop_every: int = 0
    lr_drop_factor: float = 0.1


@dataclass
class RunConfig:
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    out: str = "runs"
    topk: int = 5
    ece_bins: int = 15
    jobs: int = 1


@dataclass
class ExperimentConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    run: RunConfig = field(default_factory=RunConfig)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def with_updates(self, **sections) -> "ExperimentConfig":
        """Copy with per-section field replacements, e.g. ``loss={"gamma": 0.0}``."""
        parts = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}
        for name, updates in sections.items():
            parts[name] = dataclasses.replace(parts[name], **updates)
        return ExperimentConfig(**parts)

    def layer_sizes(self, d: int, c: int) -> list[int]:
        return [d, *self.model.hidden, c]

    def train_config(self, seed: int, d: int, c: int) -> TrainConfig:
        lc, oc = self.loss, self.optim
        return TrainConfig(
            sizes=self.layer_sizes(d, c), loss=lc.loss, gamma=lc.gamma, tau=lc.tau,
            phi_kind=lc.phi_kind, lam=lc.lam, eps_ls=lc.eps_ls, lr=oc.lr,
            momentum=oc.momentum, weight_decay=oc.weight_decay,
            lr_drop_every=oc.lr_drop_every, lr_drop_factor=oc.lr_drop_factor,
            batch_size=oc.batch_size, epochs=oc.epochs, topk=self.run.topk,
            ece_bins=self.run.ece_bins, seed=seed,
        )


_OPTIONAL_INT = {("loss", "tau")}
_OPTIONAL_STR = {("dataset", "images"), ("dataset", "labels"), ("dataset", "val_images"), ("dataset", "val_labels")}
_INT_LISTS = {("model", "hidden"), ("run", "seeds")}


def parse_int_list(text: str) -> list[int]:
    items = [t for t in text.replace(",", " ").split() if t]
    return [int(t) for t in items]


def _coerce(section: str, key: str, raw: str, default):
    text = raw.strip()
    try:
        if (section, key) in _INT_LISTS:
            return parse_int_list(text)
        if (section, key) in _OPTIONAL_INT:
            return None if text.lower() in ("", "none", "auto") else int(text)
        if (section, key) in _OPTIONAL_STR:
            return None if text.lower() in ("", "none") else text
        if isinstance(default, bool):
            return text.lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        return text
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key} = {raw!r}: {exc}") from None


def apply_overrides(cfg: ExperimentConfig, overrides: dict[str, str]) -> ExperimentConfig:
    """Apply ``"section.key": "value"`` string overrides; unknown keys are rejected."""
    sections: dict[str, dict] = {}
    for dotted, raw in overrides.items():
        if "." not in dotted:
            raise ConfigError(f"override {dotted!r} must look like section.key")
        section, key = dotted.split(".", 1)
        if not hasattr(cfg, section):
            raise ConfigError(f"unknown section [{section}]")
        current = getattr(cfg, section)
        names = {f.name for f in dataclasses.fields(current)}
        if key not in names:
            raise ConfigError(f"unknown key {key!r} in [{section}]")
        sections.setdefault(section, {})[key] = _coerce(section, key, str(raw), getattr(current, key))
    return cfg.with_updates(**sections)


def load_config(path=None, overrides: dict[str, str] | None = None) -> ExperimentConfig:
    cfg = ExperimentConfig()
    values: dict[str, str] = {}
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
        parser.optionxform = str
        if not Path(path).is_file():
            raise ConfigError(f"config file not found: {path}")
        parser.read(path)
        if parser.defaults():
            raise ConfigError("keys outside a section are not allowed")
        for section in parser.sections():
            for key, raw in parser.items(section):
                values[f"{section}.{key}"] = raw
    values.update(overrides or {})
    cfg = apply_overrides(cfg, values)
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    ds, lc, oc, rc = cfg.dataset, cfg.loss, cfg.optim, cfg.run
    problems = []
    if ds.kind not in ("overlapping-pairs", "separated", "idx"):
        problems.append(f"dataset.kind {ds.kind!r} is not one of overlapping-pairs, separated, idx")
    if ds.kind == "idx":
        for name in ("images", "labels"):
            p = getattr(ds, name)
            if not p:
                problems.append(f"dataset.{name} is required for idx data")
            elif not Path(p).is_file():
                problems.append(f"dataset.{name} not found: {p}")
        if bool(ds.val_images) != bool(ds.val_labels):
            problems.append("dataset.val_images and dataset.val_labels must be given together")
        for name in ("val_images", "val_labels"):
            p = getattr(ds, name)
            if p and not Path(p).is_file():
                problems.append(f"dataset.{name} not found: {p}")
    else:
        if ds.c < 2:
            problems.append("dataset.c must be >= 2")
        if ds.d < 1:
            problems.append("dataset.d must be >= 1")
        if ds.tight_std <= 0 or ds.loose_std <= 0:
            problems.append("dataset stds must be positive")
        if ds.n_train_per_class < 1:
            problems.append("dataset.n_train_per_class must be >= 1")
    if ds.n_val_per_class < 1:
        problems.append("dataset.n_val_per_class must be >= 1")
    if not 0.0 <= ds.noise_rate <= 1.0:
        problems.append("dataset.noise_rate must lie in [0, 1]")
    if ds.imbalance < 1.0:
        problems.append("dataset.imbalance must be >= 1")
    if any(h < 1 for h in cfg.model.hidden):
        problems.append("model.hidden sizes must be positive")
    if lc.loss not in LOSS_CHOICES:
        problems.append(f"loss.loss {lc.loss!r} is not one of {LOSS_CHOICES}")
    if lc.gamma < 0:
        problems.append("loss.gamma must be >= 0")
    if lc.tau is not None and lc.tau < 1:
        problems.append("loss.tau must be >= 1")
    if lc.tau is not None and ds.kind != "idx" and lc.tau > ds.c:
        problems.append(f"loss.tau={lc.tau} exceeds dataset.c={ds.c}")
    if lc.phi_kind not in PHI_KINDS:
        problems.append(f"loss.phi_kind must be one of {PHI_KINDS}")
    if lc.lam < 0:
        problems.append("loss.lam must be >= 0")
    if not 0.0 <= lc.eps_ls < 1.0:
        problems.append("loss.eps_ls must lie in [0, 1)")
    if oc.lr <= 0:
        problems.append("optim.lr must be positive")
    if not 0.0 <= oc.momentum < 1.0:
        problems.append("optim.momentum must lie in [0, 1)")
    if oc.weight_decay < 0:
        problems.append("optim.weight_decay must be >= 0")
    if oc.batch_size < 1 or oc.epochs < 1:
        problems.append("optim.batch_size and optim.epochs must be >= 1")
    if oc.lr_drop_every < 0 or not 0.0 < oc.lr_drop_factor <= 1.0:
        problems.append("optim.lr_drop_every must be >= 0 and lr_drop_factor in (0, 1]")
    if not rc.seeds:
        problems.append("run.seeds must list at least one seed")
    if rc.topk < 1 or rc.ece_bins < 1 or rc.jobs < 1:
        problems.append("run.topk, run.ece_bins and run.jobs must be >= 1")
    if problems:
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(problems))
