"""Probability-simplex primitives.

Every function here works on the last axis, so a single vector of shape
``(c,)`` and a batch of shape ``(B, c)`` are both accepted.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, InvalidInputError

EPS_P = 1e-12
PHI_MIN = 1e-6


@dataclass(frozen=True)
class TopKStats:
    indices: np.ndarray
    selected: np.ndarray
    t_value: np.ndarray | float


def softmax(logits) -> np.ndarray:
    """Max-shifted softmax, clamped to ``EPS_P`` and renormalized."""
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim == 0 or z.shape[-1] < 2:
        raise InvalidInputError("logits need at least two classes")
    if not np.all(np.isfinite(z)):
        raise InvalidInputError("logits contain non-finite values")
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    p = e / e.sum(axis=-1, keepdims=True)
    p = np.maximum(p, EPS_P)
    p = p / p.sum(axis=-1, keepdims=True)
    return np.maximum(p, EPS_P)


def log_softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax_vjp(p: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Pull a probability-space gradient back to logits: ``J^T g`` for the softmax Jacobian."""
    return p * (g - np.sum(p * g, axis=-1, keepdims=True))


def _clamped(p) -> np.ndarray:
    return np.maximum(np.asarray(p, dtype=np.float64), EPS_P)


def normalized_entropy(p, return_raw: bool = False):
    """Shannon entropy divided by ``log(c)``, floored at ``PHI_MIN`` and capped at 1."""
    q = _clamped(p)
    c = q.shape[-1]
    raw = -np.sum(q * np.log(q), axis=-1) / np.log(c)
    phi = np.clip(raw, PHI_MIN, 1.0)
    return (phi, raw) if return_raw else phi


def normalized_entropy_grad(p) -> np.ndarray:
    """Ambient gradient of the unfloored normalized entropy with respect to ``p``."""
    q = _clamped(p)
    return -(np.log(q) + 1.0) / np.log(q.shape[-1])


def variance_uncertainty(p, return_raw: bool = False):
    """``1 - Var(p) / Var_onehot(c)``, floored at ``PHI_MIN``.

    ``Var`` is the population variance of the entries and ``(c-1)/c**2`` is the
    variance of a one-hot vector, so uniform maps to 1 and one-hot to the floor.
    """
    q = np.asarray(p, dtype=np.float64)
    c = q.shape[-1]
    var = np.mean((q - q.mean(axis=-1, keepdims=True)) ** 2, axis=-1)
    raw = 1.0 - var / ((c - 1) / c**2)
    phi = np.clip(raw, PHI_MIN, 1.0)
    return (phi, raw) if return_raw else phi


def variance_uncertainty_grad(p) -> np.ndarray:
    q = np.asarray(p, dtype=np.float64)
    c = q.shape[-1]
    centred = q - q.mean(axis=-1, keepdims=True)
    return -(2.0 / c) * centred / ((c - 1) / c**2)


def topk_stats(p, tau: int) -> TopKStats:
    """The ``tau`` largest entries, descending; ties go to the lower class index."""
    q = np.asarray(p, dtype=np.float64)
    c = q.shape[-1]
    if not 1 <= int(tau) <= c:
        raise InvalidArgumentError(f"tau must lie in [1, {c}], got {tau}")
    idx = np.argsort(-q, axis=-1, kind="stable")[..., : int(tau)]
    sel = np.take_along_axis(q, idx, axis=-1)
    t = np.sum(sel * sel, axis=-1)
    return TopKStats(indices=idx, selected=sel, t_value=t)
