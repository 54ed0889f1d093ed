"""Loss functions with exact gradients.

Public functions accept a single sample (``(c,)`` logits or probabilities and an
integer label) or a batch (``(B, c)`` and ``(B,)`` labels). Values come back
per sample; reduction over the batch is the caller's job.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InvalidArgumentError
from .simplex import (
    EPS_P,
    PHI_MIN,
    TopKStats,
    log_softmax,
    normalized_entropy,
    normalized_entropy_grad,
    softmax,
    softmax_vjp,
    topk_stats,
    variance_uncertainty,
    variance_uncertainty_grad,
)

PHI_KINDS = ("entropy", "variance")


def default_tau(c: int) -> int:
    """Similar-class count proportional to ``c``: ``max(2, round(0.3 c))``, capped at ``c``."""
    return min(c, max(2, math.floor(0.3 * c + 0.5)))


@dataclass(frozen=True)
class AdrHyper:
    gamma: float = 0.05
    tau: int | None = None

    def __post_init__(self):
        if self.gamma < 0:
            raise InvalidArgumentError(f"gamma must be non-negative, got {self.gamma}")
        if self.tau is not None and self.tau < 1:
            raise InvalidArgumentError(f"tau must be >= 1, got {self.tau}")

    def tau_for(self, c: int) -> int:
        tau = default_tau(c) if self.tau is None else self.tau
        if tau > c:
            raise InvalidArgumentError(f"tau={tau} exceeds class count {c}")
        return tau


@dataclass(frozen=True)
class EntropyHyper:
    lam: float = 0.05

    def __post_init__(self):
        if self.lam < 0:
            raise InvalidArgumentError(f"lambda must be non-negative, got {self.lam}")


@dataclass
class LossOutput:
    value: np.ndarray | float
    grad: np.ndarray
    parts: dict = field(default_factory=dict)


@dataclass(frozen=True)
class AdrCache:
    p: np.ndarray
    phi: np.ndarray | float
    phi_floored: np.ndarray | bool
    phi_kind: str
    stats: TopKStats
    log_value: np.ndarray | float
    value: np.ndarray | float

    @property
    def tau(self) -> int:
        return self.stats.indices.shape[-1]


def _check_labels(labels, c: int) -> np.ndarray:
    y = np.asarray(labels)
    if not np.issubdtype(y.dtype, np.integer):
        raise InvalidArgumentError("labels must be integers")
    if np.any(y < 0) or np.any(y >= c):
        raise InvalidArgumentError(f"label out of range [0, {c})")
    return y


def _onehot(labels: np.ndarray, c: int) -> np.ndarray:
    return np.eye(c)[labels]


def ce_forward_backward(logits, label) -> LossOutput:
    """Cross-entropy ``-log softmax(z)[y]`` and its gradient ``p - onehot(y)`` w.r.t. logits."""
    z = np.asarray(logits, dtype=np.float64)
    y = _check_labels(label, z.shape[-1])
    p = softmax(z)
    logp = log_softmax(z)
    value = -np.take_along_axis(logp, y[..., None], axis=-1)[..., 0]
    grad = p - _onehot(y, z.shape[-1])
    return LossOutput(value=value, grad=grad, parts={"ce_part": value})


def ce_binary_derivative(p_t: float) -> float:
    if not 0.0 < p_t <= 1.0:
        raise DomainError(f"p_t must lie in (0, 1], got {p_t}")
    return -1.0 / p_t


def label_smooth_targets(label, eps_ls: float, c: int) -> np.ndarray:
    """``(1 - eps) * onehot + eps / c`` for every class."""
    if not 0.0 <= eps_ls < 1.0:
        raise InvalidArgumentError(f"eps_ls must lie in [0, 1), got {eps_ls}")
    y = _check_labels(label, c)
    return (1.0 - eps_ls) * _onehot(y, c) + eps_ls / c


def ls_forward_backward(logits, label, eps_ls: float = 0.1) -> LossOutput:
    """Cross-entropy against label-smoothed targets."""
    z = np.asarray(logits, dtype=np.float64)
    q = label_smooth_targets(label, eps_ls, z.shape[-1])
    value = -np.sum(q * log_softmax(z), axis=-1)
    return LossOutput(value=value, grad=softmax(z) - q, parts={"ce_part": value})


def entropy_reg_forward_backward(p, hyper: EntropyHyper) -> LossOutput:
    """``lam * H(p)`` with natural-log Shannon entropy; gradient w.r.t. ``p``."""
    q = np.maximum(np.asarray(p, dtype=np.float64), EPS_P)
    logq = np.log(q)
    h = -np.sum(q * logq, axis=-1)
    return LossOutput(value=hyper.lam * h, grad=hyper.lam * (-logq - 1.0), parts={"entropy_part": h})


def entropy_binary_derivative(p: float) -> float:
    if not 0.0 < p < 1.0:
        raise DomainError(f"p must lie in (0, 1), got {p}")
    return math.log((1.0 - p) / p)


def _uncertainty(p, phi_kind: str):
    if phi_kind == "entropy":
        return normalized_entropy(p, return_raw=True)
    if phi_kind == "variance":
        return variance_uncertainty(p, return_raw=True)
    raise InvalidArgumentError(f"unknown phi_kind {phi_kind!r}; expected one of {PHI_KINDS}")


def adr_forward(p, tau: int, phi_kind: str = "entropy") -> tuple[np.ndarray | float, AdrCache]:
    """Exponential ADR penalty ``(2 pi phi)^(-tau/2) * exp(-T / (2 phi))``.

    Evaluated in log space. The returned cache carries everything the backward
    passes reuse.
    """
    q = np.asarray(p, dtype=np.float64)
    stats = topk_stats(q, tau)
    phi, raw = _uncertainty(q, phi_kind)
    log_value = -0.5 * tau * np.log(2.0 * np.pi * phi) - stats.t_value / (2.0 * phi)
    value = np.exp(log_value)
    cache = AdrCache(
        p=q,
        phi=phi,
        phi_floored=raw < PHI_MIN,
        phi_kind=phi_kind,
        stats=stats,
        log_value=log_value,
        value=value,
    )
    return value, cache


def adr_backward_exact(cache: AdrCache) -> np.ndarray:
    """Gradient of the ADR forward w.r.t. every component of ``p``.

    The TopK index set is held fixed. Selected entries get the direct term
    ``-F * p_k / phi``; every entry gets the chain term through ``phi``.
    """
    phi = np.asarray(cache.phi)[..., None]
    value = np.asarray(cache.value)[..., None]
    t = np.asarray(cache.stats.t_value)[..., None]
    tau = cache.tau
    if cache.phi_kind == "entropy":
        dphi = normalized_entropy_grad(cache.p)
    else:
        dphi = variance_uncertainty_grad(cache.p)
    dphi = np.where(np.asarray(cache.phi_floored)[..., None], 0.0, dphi)
    dF_dphi = value * (-0.5 * tau / phi + t / (2.0 * phi * phi))
    grad = dF_dphi * dphi
    direct = -value * cache.stats.selected / phi
    if grad.ndim == 1:
        np.add.at(grad, cache.stats.indices, direct)
    else:
        rows = np.arange(grad.shape[0])[:, None]
        np.add.at(grad, (rows, cache.stats.indices), direct)
    return grad


def adr_backward_paper(cache: AdrCache) -> tuple[np.ndarray, np.ndarray | bool]:
    """Per-selected-component derivative in the closed form published with ADR.

    Component ``j`` is ``F * (y_j^2 phi'_j - 2 y_j phi - phi phi'_j) / (2 phi^2)``
    with ``phi'_j = -(phi + log y_j) / (1 - y_j)``; ``F`` and ``phi`` come from the
    cache. Returns ``(grad, degenerate)``: rows with a selected entry equal to 1
    are singular and fall back to the exact gradient gathered at the selected
    indices.
    """
    if cache.phi_kind != "entropy":
        raise InvalidArgumentError("the closed-form backward is defined for the entropy uncertainty only")
    y = cache.stats.selected
    phi = np.asarray(cache.phi)[..., None]
    value = np.asarray(cache.value)[..., None]
    degenerate = np.any(y >= 1.0, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        dphi = -(phi + np.log(np.maximum(y, EPS_P))) / (1.0 - y)
        grad = value * (y * y * dphi - 2.0 * y * phi - phi * dphi) / (2.0 * phi * phi)
    if np.any(degenerate):
        exact = np.take_along_axis(adr_backward_exact(cache), cache.stats.indices, axis=-1)
        grad = np.where(np.asarray(degenerate)[..., None], exact, grad)
    return grad, degenerate


def combined_forward_backward(
    logits,
    label,
    hyper: AdrHyper,
    phi_kind: str = "entropy",
    eps_ls: float = 0.0,
) -> LossOutput:
    """``CE + gamma * F`` with the gradient taken w.r.t. logits.

    ``eps_ls > 0`` swaps plain cross-entropy for the label-smoothed version.
    """
    z = np.asarray(logits, dtype=np.float64)
    base = ls_forward_backward(z, label, eps_ls) if eps_ls > 0 else ce_forward_backward(z, label)
    p = softmax(z)
    f, cache = adr_forward(p, hyper.tau_for(z.shape[-1]), phi_kind)
    grad = base.grad + hyper.gamma * softmax_vjp(p, adr_backward_exact(cache))
    ce_part = base.value
    return LossOutput(
        value=ce_part + hyper.gamma * f,
        grad=grad,
        parts={"ce_part": ce_part, "adr_part": f},
    )


def entropy_combined_forward_backward(logits, label, hyper: EntropyHyper) -> LossOutput:
    """``CE + lam * H(softmax(z))`` with the gradient w.r.t. logits."""
    z = np.asarray(logits, dtype=np.float64)
    base = ce_forward_backward(z, label)
    p = softmax(z)
    reg = entropy_reg_forward_backward(p, hyper)
    return LossOutput(
        value=base.value + reg.value,
        grad=base.grad + softmax_vjp(p, reg.grad),
        parts={"ce_part": base.value, "entropy_part": reg.parts["entropy_part"]},
    )
