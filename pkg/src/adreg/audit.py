"""Gradient audit: every analytic gradient against the central-difference oracle.

Also compares the exact ADR backward with the published closed form and times
the closed form for growing ``tau``.
"""
from __future__ import annotations

import csv
import itertools
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import model
from .gradcheck import GradReport, central_difference, compare, interior_logits
from .losses import (
    AdrHyper,
    EntropyHyper,
    adr_backward_exact,
    adr_backward_paper,
    adr_forward,
    ce_forward_backward,
    combined_forward_backward,
    entropy_combined_forward_backward,
    entropy_reg_forward_backward,
    ls_forward_backward,
)
from .simplex import softmax, softmax_vjp

CLASS_COUNTS = (5, 10, 100)
TAUS = (2, 3, 5)
CHECKS = ("adr_exact_entropy", "adr_exact_variance", "combined", "entropy_reg", "ce", "ls", "mlp")


@dataclass
class CheckResult:
    name: str
    n_points: int = 0
    n_failed: int = 0
    max_rel_err: float = 0.0
    max_abs_err: float = 0.0
    worst: str = ""

    def add(self, report: GradReport, where: str) -> None:
        self.n_points += 1
        if not report.passed:
            self.n_failed += 1
        if report.max_rel_err >= self.max_rel_err or not self.worst:
            self.max_rel_err = max(self.max_rel_err, report.max_rel_err)
            self.worst = f"{where}, component {report.worst_index}"
        self.max_abs_err = max(self.max_abs_err, report.max_abs_err)

    @property
    def passed(self) -> bool:
        return self.n_points > 0 and self.n_failed == 0


@dataclass
class AuditResult:
    checks: dict[str, CheckResult]
    closed_form_rows: list[dict]
    benchmark: dict
    rtol: float
    samples: int
    seed: int
    elapsed: float = 0.0
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())


def _mlp_point(rng: np.random.Generator, c: int, batch: int = 3):
    """A 3-8-c net and batch whose hidden pre-activations stay clear of the ReLU kink."""
    for attempt in range(1000):
        params = model.init([3, 8, c], int(rng.integers(2**31)))
        params.layers[0] = (params.layers[0][0], rng.normal(0, 0.5, 8))
        x = rng.normal(size=(batch, 3))
        _, cache = model.forward(params, x)
        if np.min(np.abs(cache.pre[0])) > 1e-3:
            return params, x
    raise RuntimeError("could not find a kink-free MLP test point")


def run_audit(samples: int = 100, seed: int = 0, rtol: float = 1e-5, atol: float = 1e-8,
              perturb: dict[str, Callable[[np.ndarray], np.ndarray]] | None = None,
              bench_repeats: int = 30) -> AuditResult:
    """Check every analytic gradient at ``samples`` interior points per loss.

    ``perturb`` maps a check name to a function applied to its analytic gradient
    before comparison; it exists for negative-control tests.
    """
    perturb = perturb or {}
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    checks = {name: CheckResult(name) for name in CHECKS}
    closed_form_rows = []
    combos = list(itertools.product(CLASS_COUNTS, TAUS))
    ident = lambda g: g  # noqa: E731

    def record(name, analytic, f, x, where):
        g = perturb.get(name, ident)(analytic)
        checks[name].add(compare(g, central_difference(f, x), rtol=rtol, atol=atol), where)

    for i in range(samples):
        c, tau = combos[i % len(combos)]
        where = f"point {i} (c={c}, tau={tau})"
        z = interior_logits(rng, c, tau)
        p = softmax(z)
        label = int(rng.integers(c))
        hyper = AdrHyper(gamma=float(rng.uniform(0.01, 0.5)), tau=tau)

        for kind in ("entropy", "variance"):
            _, cache = adr_forward(p, tau, kind)
            g = softmax_vjp(p, adr_backward_exact(cache))
            record(f"adr_exact_{kind}", g, lambda zz, k=kind: adr_forward(softmax(zz), tau, k)[0], z, where)

        out = combined_forward_backward(z, label, hyper)
        record("combined", out.grad, lambda zz: combined_forward_backward(zz, label, hyper).value, z, where)

        eh = EntropyHyper(float(rng.uniform(0.01, 1.0)))
        reg = entropy_reg_forward_backward(p, eh)
        record("entropy_reg", softmax_vjp(p, reg.grad),
               lambda zz: entropy_reg_forward_backward(softmax(zz), eh).value, z, where)

        record("ce", ce_forward_backward(z, label).grad, lambda zz: ce_forward_backward(zz, label).value, z, where)
        record("ls", ls_forward_backward(z, label, 0.1).grad,
               lambda zz: ls_forward_backward(zz, label, 0.1).value, z, where)

        # full network: loss = mean over batch of CE + gamma * ADR
        params, x = _mlp_point(rng, c)
        y = rng.integers(c, size=x.shape[0])
        sizes = params.sizes

        def net_loss(theta):
            logits, _ = model.forward(model.MlpParams.from_flat(sizes, theta), x)
            return float(np.mean(combined_forward_backward(logits, y, hyper).value))

        logits, fcache = model.forward(params, x)
        dlogits = combined_forward_backward(logits, y, hyper).grad / x.shape[0]
        g = model.flatten_grads(model.backward(params, fcache, dlogits))
        record("mlp", g, net_loss, params.flat(), where)

        _, cache = adr_forward(p, tau, "entropy")
        closed, degenerate = adr_backward_paper(cache)
        exact_sel = np.take_along_axis(adr_backward_exact(cache), cache.stats.indices, axis=-1)
        diff = np.abs(closed - exact_sel)
        closed_form_rows.append({
            "point": i, "c": c, "tau": tau, "phi": float(cache.phi), "F": float(cache.value),
            "max_abs_diff": float(diff.max()),
            "max_rel_diff": float(np.max(diff / np.maximum(np.abs(exact_sel), 1e-300))),
            "cosine": float(closed @ exact_sel / (np.linalg.norm(closed) * np.linalg.norm(exact_sel) or 1.0)),
            "degenerate": bool(degenerate),
        })

    result = AuditResult(checks, closed_form_rows, tau_benchmark(repeats=bench_repeats), rtol, samples, seed)
    result.elapsed = time.perf_counter() - t0
    return result


def tau_benchmark(taus=(16, 64), c: int = 128, batch: int = 256, repeats: int = 30, seed: int = 0) -> dict:
    """Best-of-``repeats`` wall time of the closed-form backward on a cached batch."""
    rng = np.random.default_rng(seed)
    p = softmax(rng.normal(size=(batch, c)))
    times = {}
    for tau in taus:
        _, cache = adr_forward(p, tau, "entropy")
        best = float("inf")
        for _ in range(repeats):
            t = time.perf_counter()
            adr_backward_paper(cache)
            best = min(best, time.perf_counter() - t)
        times[tau] = best
    lo, hi = min(taus), max(taus)
    ratio = times[hi] / times[lo]
    return {"c": c, "batch": batch, "times": times, "ratio": ratio, "limit": 8.0, "passed": ratio <= 8.0}


PAPER_COLUMNS = ("point", "c", "tau", "phi", "F", "max_abs_diff", "max_rel_diff", "cosine", "degenerate")


def write_csvs(res: AuditResult, out_dir) -> None:
    """``gradcheck.csv`` holds per-check totals, ``closed_form.csv`` the per-point comparison.

    Timings are left out so re-runs are byte-identical.
    """
    with open(Path(out_dir) / "gradcheck.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["check", "points", "failed", "max_abs_err", "max_rel_err", "status"])
        for c in res.checks.values():
            w.writerow([c.name, c.n_points, c.n_failed, repr(c.max_abs_err), repr(c.max_rel_err),
                        "PASS" if c.passed else "FAIL"])
    with open(Path(out_dir) / "closed_form.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PAPER_COLUMNS)
        for r in res.closed_form_rows:
            w.writerow([r[k] if isinstance(r[k], (int, bool)) else repr(r[k]) for k in PAPER_COLUMNS])


def format_report(res: AuditResult) -> str:
    lines = [
        "gradient audit",
        f"samples per check: {res.samples}  seed: {res.seed}  rtol: {res.rtol:g}",
        f"class counts: {CLASS_COUNTS}  taus: {TAUS}",
        "",
        "exact-gradient checks",
        f"{'check':<22}{'points':>8}{'failed':>8}{'max_rel_err':>14}{'max_abs_err':>14}  status",
    ]
    for c in res.checks.values():
        lines.append(f"{c.name:<22}{c.n_points:>8}{c.n_failed:>8}{c.max_rel_err:>14.3e}{c.max_abs_err:>14.3e}  "
                     f"{'PASS' if c.passed else 'FAIL'}")
    failed = [c for c in res.checks.values() if not c.passed]
    for c in failed:
        lines.append(f"  worst case for {c.name}: {c.worst}")
    rows = res.closed_form_rows
    lines += [
        "",
        "closed-form vs exact ADR backward (selected components, entropy uncertainty)",
        "this section is informational; the closed form is not used for training",
    ]
    if rows:
        rel = np.array([r["max_rel_diff"] for r in rows])
        cos = np.array([r["cosine"] for r in rows])
        lines += [
            f"points: {len(rows)}  degenerate: {sum(r['degenerate'] for r in rows)}",
            f"max relative discrepancy: median {np.median(rel):.4e}  max {rel.max():.4e}",
            f"cosine(closed form, exact): min {cos.min():.4f}  median {np.median(cos):.4f}",
            f"{'point':>6}{'c':>5}{'tau':>5}{'phi':>12}{'F':>13}{'max_abs_diff':>14}{'max_rel_diff':>14}{'cosine':>9}",
        ]
        for r in rows:
            lines.append(f"{r['point']:>6}{r['c']:>5}{r['tau']:>5}{r['phi']:>12.5f}{r['F']:>13.5e}"
                         f"{r['max_abs_diff']:>14.4e}{r['max_rel_diff']:>14.4e}{r['cosine']:>9.4f}")
    b = res.benchmark
    lo, hi = sorted(b["times"])
    lines += [
        "",
        f"tau scaling of the closed-form backward (c={b['c']}, batch={b['batch']}, cached F and phi)",
        f"time(tau={lo}) = {b['times'][lo] * 1e6:.1f} us  time(tau={hi}) = {b['times'][hi] * 1e6:.1f} us",
        f"ratio {b['ratio']:.2f} (limit {b['limit']:g}, quadratic would be {(hi / lo) ** 2:g})  "
        f"{'PASS' if b['passed'] else 'FAIL'}",
        "",
        f"elapsed: {res.elapsed:.1f} s",
        f"result: {'PASS' if res.passed else 'FAIL'}",
    ]
    return "\n".join(lines) + "\n"
