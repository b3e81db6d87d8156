"""Command-line entry point.

Subcommands: synth-data, train-tokenizer, train-policy, duel, react,
sparse, evaluate, serve, export. Configuration is layered (defaults <
--preset < --config file < --set key=value); every generation command
writes a run manifest and stamps its artifacts with a reference to it.

Exit codes: 0 ok, 2 usage/config, 3 data error, 4 numeric failure, 5 I/O.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import clipio, data, metrics
from .clipio import ClipError, load_clip, save_clip
from .config import ConfigError, config_echo, layer_config, parse_sets, preset_for
from .data import load_split, save_dataset
from .diffusion import NumericError
from .engine import default_stance_poses, run_duel, run_reactive, run_sparse
from .manifest import write_run_manifest
from .motion import MotionClip, extract_sparse_signals
from .policy import PolicyConfig, ReactionPolicy, train_stage2
from .protocol import ProtocolError
from .serve import ServeConfig, serve_stream
from .skeleton import default_skeleton
from .synth import SynthStyle, synth_duel
from .tokenizer import MotionTokenizer, TokenizerConfig, train_stage1

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4
EXIT_IO = 5


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--preset", default="full", help="config preset (toy|full)")
    p.add_argument("--config", default=None, help="key=value config file")
    p.add_argument("--set", dest="sets", action="append", default=[],
                   metavar="KEY=VALUE", help="override a single config key")
    p.add_argument("--seed", type=int, default=None, help="training seed override")


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sparring",
                                description="streaming two-character motion engine")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth-data", help="generate a synthetic dataset")
    sp.add_argument("--out", required=True)
    sp.add_argument("--clips", type=int, default=6)
    sp.add_argument("--duration", type=float, default=20.0)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--ring-radius", type=float, default=3.0)
    sp.add_argument("--encoding", default="binary", choices=["binary", "text"])

    sp = sub.add_parser("train-tokenizer", help="stage-1 tokenizer training")
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True)
    _add_config_args(sp)

    sp = sub.add_parser("train-policy", help="stage-2 policy training")
    sp.add_argument("--tokenizer", default=None, help="stage-1 checkpoint")
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True)
    _add_config_args(sp)

    sp = sub.add_parser("duel", help="free two-character generation")
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--ckpt-b", default=None, help="separate policy for agent b")
    sp.add_argument("--frames", type=int, default=1800)
    sp.add_argument("--seed-a", type=int, default=1)
    sp.add_argument("--seed-b", type=int, default=2)
    sp.add_argument("--out", required=True, help="output prefix")
    sp.add_argument("--ring-radius", type=float, default=3.0)
    sp.add_argument("--gap", type=float, default=2.0, help="initial separation, meters")
    sp.add_argument("--init-a", default=None, help="clip for agent a seed poses")
    sp.add_argument("--init-b", default=None, help="clip for agent b seed poses")

    sp = sub.add_parser("react", help="generate against a recorded opponent")
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--opponent", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int, default=1)
    sp.add_argument("--agent-seed", default=None, help="clip for agent seed poses")
    sp.add_argument("--ring-radius", type=float, default=3.0)

    sp = sub.add_parser("sparse", help="sparse-signal-driven reactive generation")
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--opponent", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--signals", default=None, help="JSON signal stream file")
    sp.add_argument("--signals-from", default=None, help="extract signals from a clip")
    sp.add_argument("--seed", type=int, default=1)
    sp.add_argument("--agent-seed", default=None)
    sp.add_argument("--ring-radius", type=float, default=3.0)

    sp = sub.add_parser("evaluate", help="metric battery over two clip directories")
    sp.add_argument("--real", required=True)
    sp.add_argument("--gen", required=True)
    sp.add_argument("--out", required=True, help="report prefix (.json/.txt)")
    sp.add_argument("--split", default="test", help="manifest split for the real dir")

    sp = sub.add_parser("serve", help="websocket streaming service")
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--port", type=int, default=8765)
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--seed", type=int, default=1)

    sp = sub.add_parser("export", help="clip to viewer-consumable pose stream")
    sp.add_argument("--clip", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--signals", default=None,
                    help="also write the clip's head/hand signal stream here")
    return p


def _seed_poses_from(path: str | None, policy: ReactionPolicy, fallback_pos, fallback_facing):
    d = policy.config.downsample
    if path is None:
        return default_stance_poses(default_skeleton(), fallback_pos, fallback_facing, count=d)
    clip = load_clip(path)
    if clip.length < d:
        raise ClipError(clipio.ERR_LENGTH, f"seed clip needs at least {d} frames")
    return [clip.pose(i) for i in range(d)]


def _cmd_synth_data(args) -> int:
    style = SynthStyle(ring_radius=args.ring_radius)
    interactions = []
    for i in range(args.clips):
        interactions.append((f"duel{i:03d}", synth_duel(args.seed + i, args.duration, style)))
    out = Path(args.out)
    save_dataset(out, interactions, encoding=args.encoding)
    write_run_manifest(out / "run.manifest.json", "synth-data", vars(args),
                       seeds={"seed": args.seed},
                       artifacts=[str(out / "manifest.json")])
    print(f"wrote {args.clips} interactions to {out}")
    return EXIT_OK


def _load_streams(data_root: str, split: str = "train"):
    streams = []
    for inter in load_split(data_root, split):
        streams.extend(data.encode_interaction(inter))
    if not streams:
        raise ClipError(clipio.ERR_LENGTH, f"no {split} interactions under {data_root}")
    return streams


def _cmd_train_tokenizer(args) -> int:
    sets = parse_sets(args.sets)
    if args.seed is not None:
        sets["seed"] = args.seed
    cfg = layer_config(TokenizerConfig, preset_for("tokenizer", args.preset),
                       args.config, sets)
    streams = _load_streams(args.data)
    result = train_stage1(streams, cfg, args.out, progress=True)
    write_run_manifest(Path(args.out).with_suffix(".manifest.json"), "train-tokenizer",
                       config_echo(cfg), seeds={"seed": cfg.seed},
                       checkpoints={"tokenizer": args.out},
                       artifacts=[args.out])
    usage = result["codebook_usage"]
    print(f"stage-1 done: final loss {result['final_loss']:.4f}"
          + (f", codebook usage {usage:.1%}" if usage is not None else ""))
    return EXIT_OK


def _cmd_train_policy(args) -> int:
    sets = parse_sets(args.sets)
    if args.seed is not None:
        sets["seed"] = args.seed
    cfg = layer_config(PolicyConfig, preset_for("policy", args.preset), args.config, sets)
    tokenizer = None
    if cfg.motion_encoder != "none":
        if args.tokenizer is None:
            raise ConfigError("--tokenizer is required unless motion_encoder=none")
        tokenizer = MotionTokenizer.load(args.tokenizer)
        if tokenizer.config.latent_dim != cfg.latent_dim:
            raise ConfigError(f"latent_dim mismatch: tokenizer {tokenizer.config.latent_dim}"
                              f" vs policy {cfg.latent_dim}")
        if (tokenizer.config.variant == "vae") != (cfg.motion_encoder == "vae"):
            raise ConfigError("tokenizer variant does not match policy motion_encoder")
    streams = _load_streams(args.data)
    result = train_stage2(streams, tokenizer, cfg, args.out, progress=True)
    ckpts = {"policy": args.out}
    if args.tokenizer:
        ckpts["tokenizer"] = args.tokenizer
    write_run_manifest(Path(args.out).with_suffix(".manifest.json"), "train-policy",
                       config_echo(cfg), seeds={"seed": cfg.seed}, checkpoints=ckpts,
                       artifacts=[args.out])
    print(f"stage-2 done: final loss {result['final_loss']:.4f}")
    return EXIT_OK


def _write_facing_csv(path: Path, facing_deg: np.ndarray, first_frame: int) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["frame", "facing_angle_deg"])
        for i, v in enumerate(facing_deg):
            w.writerow([first_frame + i, f"{v:.4f}"])


def _cmd_duel(args) -> int:
    policy_a = ReactionPolicy.load(args.ckpt)
    policy_b = ReactionPolicy.load(args.ckpt_b) if args.ckpt_b else policy_a
    sk = default_skeleton()
    half = args.gap / 2
    seeds_a = _seed_poses_from(args.init_a, policy_a, (-half, 0.0), (1.0, 0.0))
    seeds_b = _seed_poses_from(args.init_b, policy_b, (half, 0.0), (-1.0, 0.0))
    out = Path(args.out)
    manifest_path = out.parent / (out.name + ".manifest.json")
    ckpts = {"policy_a": args.ckpt}
    if args.ckpt_b:
        ckpts["policy_b"] = args.ckpt_b
    artifacts = [f"{out}_a.clip", f"{out}_b.clip", f"{out}.facing.csv"]
    write_run_manifest(manifest_path, "duel", vars(args),
                       seeds={"seed_a": args.seed_a, "seed_b": args.seed_b},
                       checkpoints=ckpts, artifacts=artifacts)
    result = run_duel(policy_a, policy_b, sk, seeds_a, seeds_b, total_frames=args.frames,
                      seed_a=args.seed_a, seed_b=args.seed_b, ring_radius=args.ring_radius)
    meta = {"run_manifest": str(manifest_path)}
    result.clip_a.meta.update(meta)
    result.clip_b.meta.update(meta)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_clip(result.clip_a, f"{out}_a.clip")
    save_clip(result.clip_b, f"{out}_b.clip")
    _write_facing_csv(Path(f"{out}.facing.csv"), result.facing_deg,
                      first_frame=policy_a.config.downsample)
    print(f"duel complete: {result.frames_total} frames per agent, "
          f"max buffer {result.max_buffer}, "
          f"boundary violations {result.boundary_violations}")
    return EXIT_OK


def _cmd_react(args) -> int:
    policy = ReactionPolicy.load(args.ckpt)
    opponent = load_clip(args.opponent)
    start = opponent.pose(0)
    opp_xz = np.array([start.root_pos[0], start.root_pos[2]])
    agent_pos = -opp_xz if np.linalg.norm(opp_xz) > 0.5 else opp_xz + np.array([2.0, 0.0])
    facing = opp_xz - agent_pos
    seeds = _seed_poses_from(args.agent_seed, policy, tuple(agent_pos), tuple(facing))
    manifest_path = Path(args.out + ".manifest.json")
    write_run_manifest(manifest_path, "react", vars(args), seeds={"seed": args.seed},
                       checkpoints={"policy": args.ckpt}, artifacts=[args.out])
    clip = run_reactive(opponent, seeds, policy, seed=args.seed,
                        ring_radius=args.ring_radius)
    clip.meta.update({"run_manifest": str(manifest_path)})
    save_clip(clip, args.out)
    print(f"reactive clip of {clip.length} frames written to {args.out}")
    return EXIT_OK


def load_signal_stream(path: str) -> list:
    from .protocol import parse_signal
    doc = json.loads(Path(path).read_text())
    if not isinstance(doc, list):
        raise ClipError(clipio.ERR_HEADER, "signal stream must be a JSON list")
    return [parse_signal({"frame": i, "signal": entry})[1] for i, entry in enumerate(doc)]


def _cmd_sparse(args) -> int:
    policy = ReactionPolicy.load(args.ckpt)
    if not policy.config.sparse_control:
        raise ConfigError("checkpoint was not trained with sparse_control=true")
    opponent = load_clip(args.opponent)
    if args.signals_from:
        signals = extract_sparse_signals(load_clip(args.signals_from))
    elif args.signals:
        signals = load_signal_stream(args.signals)
    else:
        raise ConfigError("need --signals or --signals-from")
    start = opponent.pose(0)
    opp_xz = np.array([start.root_pos[0], start.root_pos[2]])
    agent_pos = -opp_xz if np.linalg.norm(opp_xz) > 0.5 else opp_xz + np.array([2.0, 0.0])
    seeds = _seed_poses_from(args.agent_seed, policy, tuple(agent_pos), tuple(opp_xz - agent_pos))
    manifest_path = Path(args.out + ".manifest.json")
    write_run_manifest(manifest_path, "sparse", vars(args), seeds={"seed": args.seed},
                       checkpoints={"policy": args.ckpt}, artifacts=[args.out])
    clip = run_sparse(signals, seeds, policy, opponent, seed=args.seed,
                      ring_radius=args.ring_radius)
    clip.meta.update({"run_manifest": str(manifest_path)})
    save_clip(clip, args.out)
    pos_err, rot_err = metrics.control_error(clip, signals)
    print(f"sparse clip written to {args.out}; pos_err {pos_err:.2f} cm, "
          f"rot_err {rot_err:.2f} deg")
    return EXIT_OK


def _collect_pairs(root: str, split: str | None) -> list[tuple[MotionClip, MotionClip]]:
    root_path = Path(root)
    if (root_path / data.MANIFEST_NAME).exists():
        inters = load_split(root_path, split) if split else None
        if not inters:  # no split requested, or the requested one is empty
            inters = load_split(root_path, "train") + load_split(root_path, "test")
        return [(i.clip_a, i.clip_b) for i in inters]
    pairs = []
    for a in sorted(root_path.glob("*_a.clip")):
        b = a.with_name(a.name.replace("_a.clip", "_b.clip"))
        if b.exists():
            pairs.append((load_clip(a), load_clip(b)))
    return pairs


def _cmd_evaluate(args) -> int:
    real = _collect_pairs(args.real, args.split)
    gen = _collect_pairs(args.gen, None)
    if not real or not gen:
        raise ClipError(clipio.ERR_LENGTH,
                        f"no clip pairs found (real: {len(real)}, gen: {len(gen)})")
    report = metrics.evaluate_pairs(gen, real)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.with_suffix(".json").write_text(json.dumps(report.to_dict(), indent=2))
    table = metrics.format_table({"generated": report})
    out.with_suffix(".txt").write_text(table + "\n")
    print(table)
    return EXIT_OK


def _cmd_serve(args) -> int:
    policy = ReactionPolicy.load(args.ckpt)
    server = serve_stream(policy, ServeConfig(host=args.host, port=args.port,
                                              seed=args.seed))
    print(f"serving r2r-stream/1 on ws://{args.host}:{server.port} (ctrl-c to stop)")
    try:
        server._thread.join()
    except KeyboardInterrupt:
        server.stop()
    return EXIT_OK


def _cmd_export(args) -> int:
    clip = load_clip(args.clip)
    from .motion import clip_root_frames
    roots = clip_root_frames(clip)
    positions = clip.joint_positions()
    doc = {
        "v": "r2r-export/1",
        "fps": clip.fps,
        "joint_count": clip.skeleton.joint_count,
        "parent_index": list(clip.skeleton.parent_index),
        "frames": [
            {"root": clip.root_pos[i].tolist(),
             "positions": positions[i].tolist(),
             "facing": roots[i].facing_xz.tolist()}
            for i in range(clip.length)
        ],
    }
    Path(args.out).write_text(json.dumps(doc))
    if args.signals:
        stream = [{
            "head_pos": s.head_pos.tolist(), "head_rot6d": s.head_rot6d.tolist(),
            "lhand_pos": s.lhand_pos.tolist(), "lhand_rot6d": s.lhand_rot6d.tolist(),
            "rhand_pos": s.rhand_pos.tolist(), "rhand_rot6d": s.rhand_rot6d.tolist(),
        } for s in extract_sparse_signals(clip)]
        Path(args.signals).write_text(json.dumps(stream))
        print(f"wrote {len(stream)} signals to {args.signals}")
    print(f"exported {clip.length} frames to {args.out}")
    return EXIT_OK


_HANDLERS = {
    "synth-data": _cmd_synth_data,
    "train-tokenizer": _cmd_train_tokenizer,
    "train-policy": _cmd_train_policy,
    "duel": _cmd_duel,
    "react": _cmd_react,
    "sparse": _cmd_sparse,
    "evaluate": _cmd_evaluate,
    "serve": _cmd_serve,
    "export": _cmd_export,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_USAGE
    try:
        return _HANDLERS[args.command](args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ClipError, ProtocolError, ValueError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
