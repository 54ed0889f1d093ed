"""Command-line entry point: ``adreg {train,sweep,noise,gradcheck,curves}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import audit, curves, experiments
from .config import ExperimentConfig, load_config, parse_int_list
from .errors import ConfigError, DivergenceError, InvalidArgumentError

log = logging.getLogger("adreg")

# shorthand flags -> config keys
_FLAG_KEYS = {
    "loss": "loss.loss",
    "gamma": "loss.gamma",
    "tau": "loss.tau",
    "phi_kind": "loss.phi_kind",
    "lam": "loss.lam",
    "eps_ls": "loss.eps_ls",
    "epochs": "optim.epochs",
    "lr": "optim.lr",
    "batch_size": "optim.batch_size",
    "noise_rate": "dataset.noise_rate",
    "imbalance": "dataset.imbalance",
    "jobs": "run.jobs",
}


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.replace(",", " ").split()]


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="INI-style config file")
    p.add_argument("--out", type=Path, help="output directory (overrides run.out)")
    p.add_argument("--seeds", help="comma-separated seed list (overrides run.seeds)")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override any config key; repeatable")
    for flag in _FLAG_KEYS:
        p.add_argument(f"--{flag.replace('_', '-')}", dest=flag)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adreg", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one run per seed")
    _add_common(p)

    p = sub.add_parser("sweep", help="gamma x tau grid")
    _add_common(p)
    p.add_argument("--gammas", type=_floats, default=[0.01, 0.05, 0.1])
    p.add_argument("--taus", type=parse_int_list, default=[2, 3, 5])

    p = sub.add_parser("noise", help="label-noise tolerance runs")
    _add_common(p)
    p.add_argument("--rates", type=_floats, default=[0.2, 0.4, 0.6, 0.8])

    p = sub.add_parser("gradcheck", help="audit analytic gradients against finite differences")
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=Path("."))
    p.add_argument("--perturb", action="append", default=[], choices=audit.CHECKS, help=argparse.SUPPRESS)

    p = sub.add_parser("curves", help="regularizer curves along the uniform-to-one-hot slice")
    p.add_argument("--c", type=int, default=10)
    p.add_argument("--tau", type=int, default=3)
    p.add_argument("--grid", type=int, default=200)
    p.add_argument("--out", type=Path, default=Path("."))
    return parser


def resolve_config(args) -> tuple[ExperimentConfig, Path]:
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    for flag, key in _FLAG_KEYS.items():
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = value
    if args.seeds:
        overrides["run.seeds"] = args.seeds
    if args.out:
        overrides["run.out"] = str(args.out)
    cfg = load_config(args.config, overrides)
    return cfg, Path(cfg.run.out)


def _fmt(mu: float, sd: float) -> str:
    return f"{mu:.4f} ± {sd:.4f}"


def cmd_train(args) -> int:
    cfg, out = resolve_config(args)
    records = experiments.train_experiment(cfg, out)
    print(f"loss={cfg.loss.loss} seeds={cfg.run.seeds} -> {out}")
    for m, (mu, sd) in experiments.summarize(records).items():
        print(f"  {m:<18} {_fmt(mu, sd)}")
    return 0


def cmd_sweep(args) -> int:
    cfg, out = resolve_config(args)
    if not args.gammas or not args.taus:
        raise InvalidArgumentError("gamma and tau grids must be non-empty")
    res = experiments.sweep_experiment(cfg, args.gammas, args.taus, out)
    bm, bs = res["baseline"]
    print(f"baseline val top-1: {_fmt(bm, bs)}")
    print(f"{'gamma':>8}{'tau':>5}  val top-1          delta   in 0.01<=gamma<=0.1 band")
    for r in res["cells"]:
        band = 0.01 <= r["gamma"] <= 0.1
        note = ("ok" if r["mean"] >= bm - 0.005 else "below") if band else "-"
        print(f"{r['gamma']:>8g}{r['tau']:>5}  {_fmt(r['mean'], r['std'])}  {r['delta']:+.4f}  {note}")
    print(f"wrote {out / 'sweep.csv'}")
    return 0


def cmd_noise(args) -> int:
    cfg, out = resolve_config(args)
    if any(not 0.0 <= r <= 1.0 for r in args.rates):
        raise InvalidArgumentError("noise rates must lie in [0, 1]")
    summary = experiments.noise_experiment(cfg, args.rates, out)
    print(f"{'rate':>6}  {'loss':<8} test top-1         train acc  corrupted")
    for (r, loss), s in summary.items():
        print(f"{r:>6g}  {loss:<8} {_fmt(s['test_mean'], s['test_std'])}  {s['train_mean']:.4f}     "
              f"{s['n_corrupted'][0]}")
    print(f"wrote {out / 'noise.csv'} and {out / 'noise_summary.csv'}")
    return 0


def cmd_gradcheck(args) -> int:
    if args.samples < 1:
        raise InvalidArgumentError("--samples must be >= 1")
    perturb = {name: (lambda g: g * (1.0 + 1e-3) + 1e-6) for name in args.perturb}
    res = audit.run_audit(args.samples, args.seed, perturb=perturb)
    report = audit.format_report(res)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "gradcheck.txt").write_text(report)
    audit.write_csvs(res, args.out)
    experiments.write_json(args.out / "config.json", {"command": "gradcheck", "samples": args.samples,
                                                      "seed": args.seed, "rtol": res.rtol})
    print(report, end="")
    if not res.passed:
        worst = [f"{c.name}: {c.worst}" for c in res.checks.values() if not c.passed]
        print("gradient check failed; worst cases:\n  " + "\n  ".join(worst), file=sys.stderr)
        return 1
    return 0


def cmd_curves(args) -> int:
    samples = []
    for fam in curves.FAMILIES:
        samples += curves.slice_curve(fam, args.c, args.tau, args.grid)
    args.out.mkdir(parents=True, exist_ok=True)
    curves.write_curves_csv(samples, args.out / "curves.csv")
    experiments.write_json(args.out / "config.json", {"command": "curves", "c": args.c, "tau": args.tau,
                                                      "grid": args.grid, "families": list(curves.FAMILIES)})
    print(json.dumps(curves.shape_report(args.c, args.tau, args.grid), indent=2, sort_keys=True))
    print(f"wrote {args.out / 'curves.csv'} ({len(samples)} rows)")
    return 0


COMMANDS = {"train": cmd_train, "sweep": cmd_sweep, "noise": cmd_noise,
            "gradcheck": cmd_gradcheck, "curves": cmd_curves}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    np.seterr(over="ignore", under="ignore")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (InvalidArgumentError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
