"""Central-difference oracle for checking analytic gradients."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InvalidArgumentError, OracleFailure

DEFAULT_H = 1e-6


@dataclass
class GradReport:
    max_abs_err: float
    max_rel_err: float
    worst_index: int
    analytic: np.ndarray
    numeric: np.ndarray
    passed: bool

    def __bool__(self) -> bool:
        return self.passed


def central_difference(f: Callable[[np.ndarray], float], x, h: float = DEFAULT_H) -> np.ndarray:
    """Component ``i`` is ``(f(x + h e_i) - f(x - h e_i)) / 2h``.

    For functions constrained to the simplex, pass ``f`` already composed with
    softmax so every perturbed point stays feasible.
    """
    if h <= 0:
        raise InvalidArgumentError("step size h must be positive")
    x = np.array(x, dtype=np.float64)
    out = np.empty(x.size)
    flat = x.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(f(x))
        flat[i] = orig - h
        fm = float(f(x))
        flat[i] = orig
        for v in (fp, fm):
            if not np.isfinite(v):
                raise OracleFailure(i, v)
        out[i] = (fp - fm) / (2.0 * h)
    return out.reshape(x.shape)


def compare(analytic, numeric, rtol: float = 1e-5, atol: float = 1e-8) -> GradReport:
    """Component passes iff ``|a - n| <= atol + rtol * max(|a|, |n|)``."""
    a = np.asarray(analytic, dtype=np.float64).reshape(-1)
    n = np.asarray(numeric, dtype=np.float64).reshape(-1)
    if a.shape != n.shape:
        raise InvalidArgumentError(f"length mismatch: {a.size} vs {n.size}")
    diff = np.abs(a - n)
    scale = np.maximum(np.abs(a), np.abs(n))
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(scale > 0, diff / scale, 0.0)
    excess = diff - (atol + rtol * scale)
    worst = int(np.argmax(excess)) if a.size else 0
    return GradReport(
        max_abs_err=float(diff.max(initial=0.0)),
        max_rel_err=float(rel.max(initial=0.0)),
        worst_index=worst,
        analytic=a,
        numeric=n,
        passed=bool(np.all(excess <= 0)),
    )


def check(f: Callable[[np.ndarray], float], grad, x, h: float = DEFAULT_H, rtol: float = 1e-5, atol: float = 1e-8) -> GradReport:
    return compare(grad, central_difference(f, x, h), rtol=rtol, atol=atol)


def interior_logits(rng: np.random.Generator, c: int, tau: int | None = None, min_prob: float = 1e-3,
                    min_gap: float = 1e-4, scale: float = 0.5, max_tries: int = 10_000) -> np.ndarray:
    """Random logits whose softmax keeps every probability ``>= min_prob``.

    With ``tau`` given, the ``tau``-th and ``tau+1``-th largest probabilities are
    also kept ``min_gap`` apart so finite differences never cross a TopK boundary.
    """
    from .simplex import softmax

    for _ in range(max_tries):
        z = rng.normal(0.0, scale, size=c)
        p = softmax(z)
        if p.min() < min_prob:
            continue
        if tau is not None and tau < c:
            s = np.sort(p)[::-1]
            if s[tau - 1] - s[tau] < min_gap:
                continue
        return z
    raise RuntimeError(f"could not draw an interior point for c={c}")
