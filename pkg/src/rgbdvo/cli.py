"""Command-line interface.

Subcommands: synth, track, eval, ablate, prior-dump.
Exit codes: 0 success, 1 usage/validation error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import synth as synth_mod
from .datasets import load_dataset, write_sequence
from .errors import RgbdvoError, InsufficientOverlapError, InvalidArgumentError
from .evaluation import ate_rmse, read_trajectory, rpe_trans_rmse, write_trajectory
from .geometry import Intrinsics
from .pipeline import MODES, PipelineConfig, make_provider, run_sequence
from .providers import cmap_filename, write_cmap
from .quality import fuse_bidirectional, pairwise_quality


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def spec_from_dict(d: dict, seed: int = None) -> synth_mod.SceneSpec:
    """Build a SceneSpec from a JSON-style dict."""
    width = int(d.get("width", 160))
    height = int(d.get("height", 120))
    k = Intrinsics(
        fx=float(d.get("fx", 140.0)),
        fy=float(d.get("fy", 140.0)),
        cx=float(d.get("cx", (width - 1) / 2.0)),
        cy=float(d.get("cy", (height - 1) / 2.0)),
        width=width,
        height=height,
    )
    planes = []
    for p in d.get("planes", [{"depth": 2.5}]):
        planes.append(
            synth_mod.Plane(
                depth=float(p["depth"]),
                extent=tuple(p["extent"]) if p.get("extent") else None,
                texture_freq=float(p.get("freq", 6.0)),
                contrast=float(p.get("contrast", 0.42)),
            )
        )
    traj = d.get("trajectory", {})
    frames = int(d.get("frames", 50))
    trajectory = synth_mod.arc_trajectory(
        frames,
        trans_amp=tuple(traj.get("trans_amp", (0.05, 0.03, 0.04))),
        rot_amp=tuple(traj.get("rot_amp", (0.01, 0.015, 0.01))),
        period=float(traj.get("period", 120.0)),
    )
    degradations = []
    for g in d.get("degradations", []):
        degradations.append(
            synth_mod.Degradation(
                kind=g["kind"],
                region=tuple(g["region"]),
                magnitude=float(g.get("magnitude", 1.0)),
                motion=tuple(g.get("motion", (0.0, 0.0))),
                offset=float(g.get("offset", 0.0)),
                drift=float(g.get("drift", 0.0)),
            )
        )
    return synth_mod.SceneSpec(
        intrinsics=k,
        planes=planes,
        trajectory=trajectory,
        seed=int(d.get("seed", 0)) if seed is None else seed,
        degradations=degradations,
    )


def write_pgm16(path: str, values: np.ndarray) -> None:
    """16-bit binary PGM (P5); values expected in [0, 1]."""
    arr = np.clip(np.round(values * 65535.0), 0, 65535).astype(">u2")
    h, w = arr.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n65535\n".encode())
        f.write(arr.tobytes())


def _cmd_synth(args) -> int:
    try:
        with open(args.spec) as f:
            d = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read spec: {exc}", file=sys.stderr)
        return 1
    try:
        spec = spec_from_dict(d, seed=args.seed)
        frames, gt = synth_mod.render_sequence(spec)
    except InvalidArgumentError as exc:
        print(f"error: invalid scene spec: {exc}", file=sys.stderr)
        return 1
    try:
        write_sequence(args.out, frames, gt)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {len(frames)} frames to {args.out}")
    return 0


def _load_config(path: str) -> PipelineConfig:
    if not os.path.exists(path):
        print(f"error: config file not found: {path}", file=sys.stderr)
        raise SystemExit(1)
    try:
        return PipelineConfig.from_file(path)
    except InvalidArgumentError as exc:
        print(f"error: bad config: {exc}", file=sys.stderr)
        raise SystemExit(1)


def _write_report(path: str, reports) -> None:
    lines = ["# frame timestamp energy valid_fraction iterations keyframe fallback events"]
    for r in reports:
        ev = ";".join(r.events) if r.events else "-"
        lines.append(
            f"{r.index} {r.timestamp:.6f} {r.energy:.9g} {r.valid_fraction:.4f} "
            f"{r.iterations} {int(r.is_keyframe)} {int(r.fallback)} {ev}"
        )
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def _cmd_track(args) -> int:
    config = _load_config(args.config)
    if args.mode:
        config.mode = args.mode
    if args.provider:
        config.provider = args.provider
    if args.seed is not None:
        config.seed = args.seed
    config.__post_init__()
    try:
        dataset = load_dataset(args.data)
    except RgbdvoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    sink = None
    if args.export_cmaps:
        os.makedirs(args.export_cmaps, exist_ok=True)

        def sink(pair):
            path = os.path.join(args.export_cmaps, cmap_filename(pair.frame_j, pair.frame_i))
            write_cmap(path, pair.log_photo, pair.log_geo)

    try:
        traj, reports = run_sequence(dataset, config, cmap_sink=sink)
    except RgbdvoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    write_trajectory(args.out, traj)
    _write_report(args.out + ".report.txt", reports)
    print(f"tracked {len(traj)} frames -> {args.out}")
    return 0


def _cmd_eval(args) -> int:
    try:
        est = read_trajectory(args.est)
        ref = read_trajectory(args.ref)
        ate = ate_rmse(est, ref)
        rpe = rpe_trans_rmse(est, ref, delta=args.rpe_delta)
    except InsufficientOverlapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RgbdvoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"ATE_RMSE {ate:.9g}")
    print(f"RPE_T_RMSE {rpe:.9g}")
    return 0


def _cmd_ablate(args) -> int:
    config = _load_config(args.config)
    try:
        dataset = load_dataset(args.data)
        ref = read_trajectory(os.path.join(args.data, dataset.groundtruth_path or "groundtruth.txt"))
    except RgbdvoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    rows = []
    for mode in MODES:
        cfg = PipelineConfig.from_file(args.config)
        cfg.mode = mode
        cfg.seed = config.seed
        try:
            traj, _reports = run_sequence(dataset, cfg)
            ate = ate_rmse(traj, ref)
            rpe = rpe_trans_rmse(traj, ref)
        except RgbdvoError as exc:
            print(f"error: mode {mode}: {exc}", file=sys.stderr)
            return 2
        rows.append((mode, ate, rpe))
    for mode, ate, rpe in rows:
        print(f"{mode}\t{ate:.9g}\t{rpe:.9g}")
    return 0


def _cmd_prior_dump(args) -> int:
    try:
        dataset = load_dataset(args.data)
    except RgbdvoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    t = args.frame
    if t < 0 or t >= len(dataset):
        print(f"error: frame index {t} out of range [0, {len(dataset)})", file=sys.stderr)
        return 1
    config = PipelineConfig(mode="full", provider=args.provider, seed=args.seed or 0)
    try:
        provider = make_provider(config, dataset.gt_source())
        frames = {
            i: dataset.load_frame(i)
            for i in range(max(t - 1, 0), min(t + 2, len(dataset)))
        }
        maps = {"photo": None, "geo": None}
        pairs = []
        if t - 1 >= 0:
            pairs.append(provider.get_uncertainty(frames[t - 1], frames[t]))
        if t + 1 < len(dataset):
            pairs.append(provider.get_uncertainty(frames[t], frames[t + 1]))
        if not pairs:
            print("error: frame has no adjacent pairs", file=sys.stderr)
            return 1
        for kind, attr in (("photo", "log_photo"), ("geo", "log_geo")):
            qs = [pairwise_quality(getattr(p, attr), kind) for p in pairs]
            q = qs[0] if len(qs) == 1 else fuse_bidirectional(qs[0], qs[1])
            maps[kind] = q.values
    except RgbdvoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    os.makedirs(args.out, exist_ok=True)
    for kind in ("photo", "geo"):
        path = os.path.join(args.out, f"qabs_{kind}_{t:06d}.pgm")
        write_pgm16(path, maps[kind])
        print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rgbdvo", description="Consistency-weighted RGB-D direct odometry")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[], help="render a synthetic RGB-D sequence")
    p.add_argument("--spec", required=True, help="JSON scene spec file")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--seed", type=int, default=None, help="override the spec seed")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("track", help="run the odometry pipeline on a dataset")
    p.add_argument("--data", required=True, help="dataset directory (tum or synth layout)")
    p.add_argument("--config", required=True, help="pipeline config file (key = value)")
    p.add_argument("--mode", choices=list(MODES), default=None, help="ablation mode override")
    p.add_argument("--provider", default=None, help="constant | oracle | file:<dir>")
    p.add_argument("--seed", type=int, default=None, help="seed override")
    p.add_argument("--out", required=True, help="output trajectory file (TUM format)")
    p.add_argument("--export-cmaps", default=None, help="also write per-pair .cmap files here")
    p.set_defaults(func=_cmd_track)

    p = sub.add_parser("eval", help="compute ATE/RPE RMSE between trajectories")
    p.add_argument("--est", required=True, help="estimated trajectory file")
    p.add_argument("--ref", required=True, help="reference trajectory file")
    p.add_argument("--rpe-delta", type=int, default=1, help="RPE frame delta (default 1)")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("ablate", help="run baseline/select/full and print a TSV table")
    p.add_argument("--data", required=True, help="dataset directory with ground truth")
    p.add_argument("--config", required=True, help="pipeline config file")
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("prior-dump", help="export host-side quality maps as 16-bit PGM")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--provider", required=True, help="constant | oracle | file:<dir>")
    p.add_argument("--frame", type=int, required=True, help="host frame index")
    p.add_argument("--out", required=True, help="output directory for PGM files")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_prior_dump)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
