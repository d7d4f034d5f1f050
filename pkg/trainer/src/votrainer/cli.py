"""Command-line interface: vo-trainer train / export.

The optional --spec JSON file carries two top-level objects, "network" and
"train", whose keys override the corresponding spec dataclass fields, e.g.

  {"network": {"corr_radius": 4}, "train": {"iterations": 500}}
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from .errors import CheckpointError, DataError, TrainerError, TrainingDivergedError
from .export import export_maps
from .model import NetworkSpec
from .train import TrainSpec, build_samples, load_checkpoint, save_checkpoint, train


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _load_specs(path: str):
    try:
        with open(path) as f:
            blob = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read spec file {path}: {exc}") from exc
    if not isinstance(blob, dict):
        raise DataError(f"{path}: spec file must hold a JSON object")
    try:
        net = dataclasses.replace(
            NetworkSpec(),
            **{
                k: tuple(v) if isinstance(v, list) else v
                for k, v in blob.get("network", {}).items()
            },
        )
        tr = dataclasses.replace(TrainSpec(), **blob.get("train", {}))
    except (TypeError, ValueError) as exc:
        raise DataError(f"{path}: bad spec field: {exc}") from exc
    return net, tr


def _cmd_train(args) -> int:
    net_spec, train_spec = (
        _load_specs(args.spec) if args.spec else (NetworkSpec(), TrainSpec())
    )
    overrides = {}
    if args.iters is not None:
        overrides["iterations"] = args.iters
    if args.seed is not None:
        overrides["seed"] = args.seed
    if overrides:
        train_spec = dataclasses.replace(train_spec, **overrides)
    samples = build_samples(args.data)
    model, history = train(
        samples, net_spec, train_spec, log_every=args.log_every
    )
    save_checkpoint(args.out, model)
    print(f"trained {len(history)} iterations, final loss {history[-1]:.5f}")
    print(f"checkpoint written to {args.out}")
    return 0


def _cmd_export(args) -> int:
    model = load_checkpoint(args.checkpoint)
    paths = export_maps(model, args.data, args.out)
    print(f"wrote {len(paths)} maps to {args.out}")
    return 0


def main(argv=None) -> int:
    parser = _Parser(prog="vo-trainer", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train an uncertainty network")
    p_train.add_argument(
        "--data",
        action="append",
        required=True,
        help="sequence directory with GT (repeatable)",
    )
    p_train.add_argument("--out", required=True, help="output checkpoint path")
    p_train.add_argument("--spec", help="JSON file overriding network/train specs")
    p_train.add_argument("--iters", type=int, help="override iteration count")
    p_train.add_argument("--seed", type=int, help="override training seed")
    p_train.add_argument("--log-every", type=int, default=50)
    p_train.set_defaults(func=_cmd_train)

    p_export = sub.add_parser("export", help="export .cmap maps for a sequence")
    p_export.add_argument("--checkpoint", required=True)
    p_export.add_argument("--data", required=True, help="sequence directory")
    p_export.add_argument("--out", required=True, help="output directory")
    p_export.set_defaults(func=_cmd_export)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TrainingDivergedError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return 1
    except (DataError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TrainerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
