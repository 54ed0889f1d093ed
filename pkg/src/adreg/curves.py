"""Regularizer curves along the uniform-to-one-hot slice of the simplex.

For a class count ``c`` the slice is ``p(t) = (1 - t) * uniform + t * onehot_0``.
The two closed binary forms (``ce`` and ``binary-entropy-derivative``) use the
two-class slice instead, so their ``p`` runs from 0.5 to 1.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .losses import (
    EntropyHyper,
    adr_backward_exact,
    adr_forward,
    ce_binary_derivative,
    entropy_binary_derivative,
    entropy_reg_forward_backward,
)
from .simplex import variance_uncertainty, variance_uncertainty_grad

FAMILIES = ("variance", "entropy", "exp-variance", "exp-entropy", "ce", "binary-entropy-derivative")
CSV_HEADER = ("family", "c", "tau", "t", "p", "value", "derivative")


@dataclass(frozen=True)
class CurveSample:
    family: str
    c: int
    tau: int
    t: float
    p: float
    value: float
    derivative: float


def slice_point(c: int, t: float) -> np.ndarray:
    p = np.full(c, (1.0 - t) / c)
    p[0] += t
    return p


def curve_point(family: str, c: int, tau: int, t: float) -> CurveSample:
    """Value and slice derivative ``d/dt`` of one family at position ``t``."""
    if family not in FAMILIES:
        raise InvalidArgumentError(f"unknown family {family!r}; choose from {FAMILIES}")
    if family in ("ce", "binary-entropy-derivative"):
        p = 0.5 + 0.5 * t
        if family == "ce":
            value, deriv = -math.log(p), ce_binary_derivative(p)
        else:
            value = -(p * math.log(p) + (1 - p) * math.log(1 - p))
            deriv = entropy_binary_derivative(p)
        return CurveSample(family, 2, tau, t, p, value, deriv)

    p = slice_point(c, t)
    direction = -np.full(c, 1.0 / c)
    direction[0] += 1.0
    if family == "variance":
        value, grad = float(variance_uncertainty(p)), variance_uncertainty_grad(p)
    elif family == "entropy":
        out = entropy_reg_forward_backward(p, EntropyHyper(1.0))
        value, grad = float(out.value), out.grad
    else:
        kind = "entropy" if family == "exp-entropy" else "variance"
        f, cache = adr_forward(p, tau, kind)
        value, grad = float(f), adr_backward_exact(cache)
    return CurveSample(family, c, tau, t, float(p[0]), value, float(grad @ direction))


def slice_curve(family: str, c: int = 10, tau: int = 3, grid: int = 200) -> list[CurveSample]:
    """Evaluate ``family`` at ``t = (i + 1) / (grid + 1)`` for ``i < grid``."""
    if grid < 3:
        raise InvalidArgumentError("grid must be >= 3")
    if family not in FAMILIES:
        raise InvalidArgumentError(f"unknown family {family!r}; choose from {FAMILIES}")
    return [curve_point(family, c, tau, (i + 1) / (grid + 1)) for i in range(grid)]


def write_curves_csv(samples: list[CurveSample], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for s in samples:
            w.writerow([s.family, s.c, s.tau, repr(s.t), repr(s.p), repr(s.value), repr(s.derivative)])


def shape_report(c: int = 10, tau: int = 3, grid: int = 200) -> dict:
    """Numbers behind the curve-shape gates."""
    out = {}
    for fam in ("exp-entropy", "exp-variance"):
        samples = slice_curve(fam, c, tau, grid)
        d = np.array([abs(s.derivative) for s in samples])
        t = np.array([s.t for s in samples])
        out[fam] = {
            "tail_max_abs_derivative": float(d[t >= 0.9].max()),
            "global_max_abs_derivative": float(d.max()),
            "argmax_t": float(t[np.argmax(d)]),
        }
    out["entropy"] = {
        "abs_derivative_t0": abs(curve_point("entropy", c, tau, 0.0).derivative),
        "abs_derivative_t099": abs(curve_point("entropy", c, tau, 0.99).derivative),
    }
    out["exp-entropy"]["value_t0"] = curve_point("exp-entropy", c, tau, 0.0).value
    out["exp-entropy"]["value_t099"] = curve_point("exp-entropy", c, tau, 0.99).value
    out["binary_entropy_derivative_at_half"] = entropy_binary_derivative(0.5)
    return out
