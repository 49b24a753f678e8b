"""Command-line harness. Every subcommand writes one CSV into ``--out``."""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
from dataclasses import fields

from . import __version__
from . import experiments as ex
from .core_math import NumericalError
from .privatizer import TrainConfig, save_checkpoint
from .scenarios import BUILTIN_SCENARIOS

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


class ValidationError(ValueError):
    pass


def _floats(text: str) -> list[float]:
    try:
        vals = [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _words(text: str) -> list[str]:
    return [v.strip() for v in str(text).split(",") if v.strip()]


def format_cell(v) -> str:
    if hasattr(v, "item"):
        v = v.item()
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(float(v))
    return str(v)


def config_hash(settings: dict) -> str:
    blob = json.dumps(settings, sort_keys=True, default=str, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def render_csv(columns, rows, settings: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        if len(r) != len(columns):
            raise AssertionError(f"row has {len(r)} cells for {len(columns)} columns")
        w.writerow([format_cell(v) for v in r])
    buf.write(f"# seed={settings.get('seed')} version={__version__} config_hash={config_hash(settings)}\n")
    return buf.getvalue()


def write_atomic(path: str, text: str) -> None:
    tmp = path + ".partial"
    try:
        with open(tmp, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)


def _scenario(args):
    try:
        make = BUILTIN_SCENARIOS[args.scenario]
    except KeyError:
        raise ValidationError(f"unknown scenario {args.scenario!r}; known: {sorted(BUILTIN_SCENARIOS)}") from None
    if args.m < 1:
        raise ValidationError("--m must be at least 1")
    return make(m=args.m, seed=args.seed)


def _train_config(args) -> TrainConfig:
    return TrainConfig(**{f.name: getattr(args, f.name) for f in fields(TrainConfig)})


def cmd_divergence(args):
    if not 1 <= args.d <= 64:
        raise ValidationError("--d must lie in [1, 64]")
    if args.n < 100 or args.pairs < 1:
        raise ValidationError("--n must be >= 100 and --pairs >= 1")
    return {"divergence.csv": ex.run_divergence(args.seed, args.d, args.pairs, args.n, args.alpha)}


def cmd_dual_check(args):
    if not 2 <= args.atoms <= 6:
        raise ValidationError("--atoms must lie in [2, 6]")
    if args.alpha < 0:
        raise ValidationError("--alpha must be >= 0")
    return {"dual_check.csv": ex.run_dual_check(args.seed, args.alpha, args.delta, args.atoms, args.trials)}


def cmd_dp_calibrate(args):
    return {"dp_calibrate.csv": ex.run_dp_calibrate(
        args.L, args.eps, args.delta, args.tau, args.n, args.alpha, args.renyi_delta,
        args.budget_b, args.d, args.base_variance)}


def cmd_mi_bounds(args):
    return {"mi_bounds.csv": ex.run_mi_bounds(_scenario(args), args.noise, args.seed, args.prior_marginal)}


def cmd_train(args):
    result, table = ex.run_train(_scenario(args), _train_config(args))
    return {"train_trace.csv": table, "checkpoint.json": (result, _train_config(args))}


def cmd_budget_sweep(args):
    if any(b <= 0 for b in args.budgets):
        raise ValidationError("budgets must be positive")
    cfg = _train_config(args)
    return {"budget_sweep.csv": ex.run_budget_sweep(_scenario(args), args.budgets, cfg, args.eval_epochs)}


def cmd_attack(args):
    bad = [n for n in args.norms if n not in ("l2", "linf")]
    if bad:
        raise ValidationError(f"unknown norms {bad}")
    return {"attack.csv": ex.run_attack(_scenario(args), args.epsilons, args.norms, args.steps,
                                        args.step_size, args.seed, args.eval_epochs)}


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", default=".")
    p.add_argument("--config", default=None, help="JSON file of flag defaults; explicit flags win")


def _scenario_flags(p):
    p.add_argument("--scenario", default="S1")
    p.add_argument("--m", type=int, default=8000)


def _train_flags(p):
    d = TrainConfig()
    for f in fields(TrainConfig):
        if f.name == "seed":
            continue
        p.add_argument("--" + f.name.replace("_", "-"), dest=f.name, type=type(getattr(d, f.name)),
                       default=getattr(d, f.name))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="latentpriv", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("divergence", help="closed-form vs Monte-Carlo Gaussian divergences")
    p.add_argument("--d", type=int, default=4)
    p.add_argument("--pairs", type=int, default=20)
    p.add_argument("--n", type=int, default=100_000)
    p.add_argument("--alpha", type=float, default=2.0, help="Rényi order")
    p.set_defaults(func=cmd_divergence)

    p = sub.add_parser("dual-check", help="brute-force primal vs conjugate dual")
    p.add_argument("--alpha", type=float, default=2.0, help="1 selects KL, 0 reverse KL")
    p.add_argument("--delta", type=float, default=0.5)
    p.add_argument("--atoms", type=int, default=3)
    p.add_argument("--trials", type=int, default=50)
    p.set_defaults(func=cmd_dual_check)

    p = sub.add_parser("dp-calibrate", help="Gaussian mechanism noise calibration")
    p.add_argument("--L", type=float, default=1.0, help="l2 sensitivity")
    p.add_argument("--eps", type=float, default=0.5)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--renyi-delta", dest="renyi_delta", type=float, default=None)
    p.add_argument("--budget-b", dest="budget_b", type=float, default=None)
    p.add_argument("--d", type=int, default=4)
    p.add_argument("--base-variance", dest="base_variance", type=float, default=1.0)
    p.set_defaults(func=cmd_dp_calibrate)

    p = sub.add_parser("mi-bounds", help="MI lower bound on raw latents vs upper bound after noise")
    _scenario_flags(p)
    p.add_argument("--noise", type=_floats, default=[1.0, 2.0, 5.0], help="comma-separated A_eps scales")
    p.add_argument("--prior-marginal", dest="prior_marginal", action="store_true",
                   help="use N(0, I) for p(z~) instead of a fitted marginal")
    p.set_defaults(func=cmd_mi_bounds)

    p = sub.add_parser("train", help="train the filter once and save a checkpoint")
    _scenario_flags(p)
    _train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("budget-sweep", help="privacy/utility trade-off over distortion budgets")
    _scenario_flags(p)
    _train_flags(p)
    p.add_argument("--budgets", type=_floats, default=[0.1, 0.5, 1.0, 2.0, 4.0])
    p.add_argument("--eval-epochs", dest="eval_epochs", type=int, default=20)
    p.set_defaults(func=cmd_budget_sweep)

    p = sub.add_parser("attack", help="FGSM/PGM attacks on a raw-latent classifier")
    _scenario_flags(p)
    p.add_argument("--epsilons", type=_floats, default=[0.5, 1.0])
    p.add_argument("--norms", type=_words, default=["l2", "linf"])
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--step-size", dest="step_size", type=float, default=0.3)
    p.add_argument("--eval-epochs", dest="eval_epochs", type=int, default=20)
    p.set_defaults(func=cmd_attack)

    for sp in sub.choices.values():
        _common(sp)
    return parser


def _apply_config(parser, argv):
    """Parse once to find the subcommand and config, then reparse with file values as defaults."""
    args = parser.parse_args(argv)
    if args.config is None:
        return args
    try:
        with open(args.config, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read config {args.config}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ValidationError("config file must hold a JSON object")
    sp = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest for a in sp._actions}
    unknown = sorted(set(k.replace("-", "_") for k in cfg) - known - {"command"})
    if unknown:
        raise ValidationError(f"unknown config keys: {unknown}")
    defaults = {}
    for k, v in cfg.items():
        k = k.replace("-", "_")
        if k in ("budgets", "noise", "epsilons") and not isinstance(v, str):
            v = _floats(",".join(str(x) for x in (v if isinstance(v, list) else [v])))
        elif k == "norms" and isinstance(v, list):
            v = [str(x) for x in v]
        defaults[k] = v
    sp.set_defaults(**defaults)
    return parser.parse_args(argv)


def _settings(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "out", "config")}


def main(argv=None) -> int:
    parser = build_parser()
    written: list[str] = []
    try:
        args = _apply_config(parser, argv)
        os.makedirs(args.out, exist_ok=True)
        settings = _settings(args)
        outputs = args.func(args)
        for name, payload in outputs.items():
            path = os.path.join(args.out, name)
            written.append(path)
            if name.endswith(".json"):
                result, cfg = payload
                save_checkpoint(path, result, cfg)
            else:
                columns, rows = payload
                write_atomic(path, render_csv(columns, rows, settings))
            print(path)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code not in (0, None) else EXIT_OK
    except NumericalError as exc:
        _cleanup(written)
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, TypeError) as exc:
        _cleanup(written)
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        _cleanup(written)
        print(f"I/O failure: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


def _cleanup(paths) -> None:
    for p in paths:
        if os.path.exists(p):
            os.remove(p)


if __name__ == "__main__":
    sys.exit(main())
