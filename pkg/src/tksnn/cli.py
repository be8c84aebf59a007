"""Command-line entry point: train / eval / sweep / gradcheck / synth."""

from __future__ import annotations

import argparse
import json
import sys

from . import evaluation, gradcheck, trainer
from .data import build_dataset, save_dataset, synth_temporal
from .errors import ConfigError, ParameterError, TksnnError
from .network import load_checkpoint


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _apply_overrides(raw: dict, overrides) -> dict:
    """Apply dotted key=value overrides; unknown keys are rejected, never ignored."""
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        parts = key.split(".")
        node = raw
        for part in parts[:-1]:
            if not isinstance(node, dict) or part not in node:
                raise ConfigError(f"override references unknown config key {key!r}")
            node = node[part]
        if not isinstance(node, dict) or parts[-1] not in node:
            raise ConfigError(f"override references unknown config key {key!r}")
        node[parts[-1]] = _parse_value(value)
    return raw


def _load_config(path: str, overrides):
    with open(path) as f:
        raw = json.load(f)
    # fill every section so overrides can target defaulted keys too
    resolved = trainer.config_to_dict(trainer.config_from_dict(raw))
    for section, keys in raw.items():
        resolved[section].update(keys)
    _apply_overrides(resolved, overrides)
    cfg = trainer.config_from_dict(resolved)
    return cfg


def cmd_train(args) -> int:
    cfg = _load_config(args.config, args.set)
    print("resolved config:")
    print(json.dumps(trainer.config_to_dict(cfg), indent=2, sort_keys=True))
    model, reports = trainer.fit(cfg, resume=args.resume)
    if reports:
        last = reports[-1]
        print(f"done: {len(reports)} epochs, final train_acc={last.train_acc:.4f} "
              f"l_final={last.l_final:.6f}")
    else:
        print("done: 0 epochs (initial checkpoint written)")
    return 0


def cmd_eval(args) -> int:
    cfg = _load_config(args.config, args.set)
    model, header, _ = load_checkpoint(args.checkpoint)
    data = build_dataset(cfg.data, split=args.split)
    t_test = args.t if args.t is not None else cfg.t_train
    report = evaluation.evaluate(model, data, t_test)
    text = report.to_json()
    print(text)
    if args.out:
        with open(args.out, "w") as f:
            f.write(text + "\n")
    return 0


def cmd_sweep(args) -> int:
    cfg = _load_config(args.config, args.set)
    model, header, _ = load_checkpoint(args.checkpoint)
    data = build_dataset(cfg.data, split=args.split)
    t_values = [int(v) for v in args.t.split(",")]
    sweep = evaluation.timestep_sweep(model, data, t_values)
    evaluation.write_sweep_csv(args.out, sweep)
    for t_test in sorted(sweep):
        rep = sweep[t_test]
        print(f"T_test={t_test}: top1={rep.top1:.4f} aurc_x1000={rep.aurc:.3f}")
    return 0


def cmd_gradcheck(args) -> int:
    worst = gradcheck.run_suite(range(args.seeds))
    for name in sorted(worst):
        print(f"{name}: {worst[name]:.3e}")
    overall = max(worst.values())
    print(f"max relative error: {overall:.3e}")
    return 0 if overall < 1e-3 else 2


def cmd_synth(args) -> int:
    ds = synth_temporal(args.n_per_class, args.t, args.classes, args.noise, args.seed)
    save_dataset(ds, args.out)
    print(f"wrote {ds.inputs.shape[0]} samples to {args.out}.inputs.bin")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tksnn")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config key, e.g. teacher.mode=none")
    p.add_argument("--resume", default=None, help="checkpoint to continue from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint; JSON report to stdout")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--t", type=int, default=None, help="test timesteps (default: t_train)")
    p.add_argument("--split", default="test", choices=["train", "test"])
    p.add_argument("--out", default=None, help="also write the report here")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="timestep-mismatch sweep; writes a CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--t", required=True, help="comma-separated test lengths, e.g. 1,2,4,6,8,10")
    p.add_argument("--split", default="test", choices=["train", "test"])
    p.add_argument("--out", required=True)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--seeds", type=int, default=10)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("synth", help="write a synthetic order-encoded dataset")
    p.add_argument("--out", required=True, help="output base path")
    p.add_argument("--n-per-class", type=int, default=40)
    p.add_argument("--t", type=int, default=10)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    try:
        return args.func(args)
    except (ConfigError, ParameterError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except TksnnError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())
