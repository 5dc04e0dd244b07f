"""Command line entry point: ``maskmix <command> ...``.

Exit codes: 0 success, 1 I/O failure, 2 usage or parse error, 3 numeric
failure, 4 artifact mismatch. ``MASKMIX_LOG_LEVEL`` sets log verbosity.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .errors import (DigestMismatchError, FormatError, LayoutMismatchError, MaskMixError,
                     NonFiniteError, ZeroNormError)
from .io import (FORMAT_VERSION, code_from_dict, code_to_dict, load_checkpoint, load_world,
                 read_json, save_world, write_json)
from .metrics import channel_table, evaluate, mask_recovery
from .style_space import LAYOUT_NAMES, StyleCode, builtin_layout
from .trainer import TrainConfig, train, world_for
from .world import WorldSizes, make_world, sample_code

EXIT_IO, EXIT_USAGE, EXIT_NUMERIC, EXIT_MISMATCH = 1, 2, 3, 4


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _checked(checkpoint_path, world_path):
    ckpt = load_checkpoint(checkpoint_path)
    world = load_world(world_path)
    if ckpt.world_digest != world.digest:
        raise DigestMismatchError("world", ckpt.world_digest, world.digest)
    return ckpt, world


def cmd_world_create(args):
    layout = builtin_layout(args.layout)
    sizes = WorldSizes.from_dict(json.loads(args.sizes)) if args.sizes else WorldSizes()
    world = make_world(layout, sizes, args.seed)
    # dense matrices are D x D; large layouts are stored as seed + dims only
    with_mats = not args.no_matrices and layout.total_dims <= args.max_dense
    save_world(args.out, world, include_matrices=with_mats)
    print(f"digest {world.digest}")
    print(f"layout {layout.name} total_dims {layout.total_dims} active_dims {layout.active_dims}")
    return 0


def cmd_code_sample(args):
    world = load_world(args.world)
    write_json(args.out, code_to_dict(sample_code(world, args.seed)))
    return 0


def cmd_train(args):
    doc = read_json(args.config)
    config = TrainConfig.from_dict(doc).resolved()
    if args.out_dir:
        config.out_dir = args.out_dir
    out = Path(config.out_dir)
    ckpt_path, log_path, manifest_path = out / "checkpoint.json", out / "train_log.csv", out / "manifest.json"
    if config.world_path and not Path(config.world_path).exists():
        raise FileNotFoundError(f"world file {config.world_path} not found")
    world = world_for(config)
    resume = load_checkpoint(args.resume) if args.resume else None
    started = _now()
    result = train(config, world=world, resume=resume, checkpoint_path=ckpt_path, log_path=log_path)
    write_json(manifest_path, {
        "format_version": FORMAT_VERSION,
        "kind": "manifest",
        "config": config.to_dict(),
        "world_digest": world.digest,
        "checkpoint_digest": result.checkpoint.digest,
        "checkpoint_path": str(ckpt_path),
        "log_path": str(log_path),
        "tool_version": __version__,
        "started": started,
        "finished": _now(),
        "iterations": result.checkpoint.iteration,
    }, indent=2)
    print(f"checkpoint {ckpt_path} ({result.checkpoint.iteration} iterations)")
    return 0


def cmd_eval(args):
    ckpt, world = _checked(args.checkpoint, args.world)
    report = evaluate(ckpt, world, args.pairs, args.seed)
    sys.stdout.write(report.render(args.format))
    return 0


def cmd_inspect_mask(args):
    ckpt, world = _checked(args.checkpoint, args.world)
    rec = mask_recovery(ckpt, world, args.pairs, args.seed, args.threshold)
    rows = channel_table(world, rec)
    path = Path(args.out)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    print(f"precision {rec.precision:.6f}")
    print(f"recall {rec.recall:.6f}")
    print(f"F1 {rec.f1:.6f}")
    print(f"F1 (pose/expr/identity channels only) {rec.f1_informative:.6f}")
    return 0


def _semantics(world, code):
    image = world.render_t(code.values).data
    pose = world.pose_t(image).data
    return {
        "pose": {"yaw": pose[0], "pitch": pose[1], "roll": pose[2]},
        "a_e": world.expr_t(image).data.tolist(),
        "a_s": world.shape_t(image).data.tolist(),
        "identity": world.identity_t(image).data.tolist(),
    }


def cmd_reenact(args):
    ckpt, world = _checked(args.checkpoint, args.world)
    source = code_from_dict(read_json(args.source), world.layout)
    target = code_from_dict(read_json(args.target), world.layout)
    s_r, m = ckpt.reenactor().reenact(source.values, target.values)
    reenacted = StyleCode(s_r.data, world.layout)
    write_json(args.out, {
        "format_version": FORMAT_VERSION,
        "kind": "reenactment",
        "reenacted": code_to_dict(reenacted),
        "mask": m.data.tolist(),
        "semantics": {
            "source": _semantics(world, source),
            "target": _semantics(world, target),
            "reenacted": _semantics(world, reenacted),
        },
        "world_digest": world.digest,
        "checkpoint_digest": ckpt.digest,
    }, indent=2)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="maskmix", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    world = sub.add_parser("world", help="create surrogate worlds")
    wsub = world.add_subparsers(dest="world_command", required=True)
    create = wsub.add_parser("create")
    create.add_argument("--layout", required=True, choices=LAYOUT_NAMES)
    create.add_argument("--seed", type=int, required=True)
    create.add_argument("--out", required=True)
    create.add_argument("--sizes", help="JSON object overriding world sizes")
    create.add_argument("--no-matrices", action="store_true", help="store seed and dims only")
    create.add_argument("--max-dense", type=int, default=2048, help=argparse.SUPPRESS)
    create.set_defaults(func=cmd_world_create)

    code = sub.add_parser("code", help="sample style codes")
    csub = code.add_subparsers(dest="code_command", required=True)
    sample = csub.add_parser("sample")
    sample.add_argument("--world", required=True)
    sample.add_argument("--seed", type=int, required=True)
    sample.add_argument("--out", required=True)
    sample.set_defaults(func=cmd_code_sample)

    tr = sub.add_parser("train", help="train a mask network")
    tr.add_argument("--config", required=True)
    tr.add_argument("--resume")
    tr.add_argument("--out-dir")
    tr.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="evaluate a checkpoint")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--world", required=True)
    ev.add_argument("--pairs", type=int, default=500)
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--format", choices=("json", "csv", "table"), default="json")
    ev.set_defaults(func=cmd_eval)

    ins = sub.add_parser("inspect-mask", help="per-channel mean mask and recovery scores")
    ins.add_argument("--checkpoint", required=True)
    ins.add_argument("--world", required=True)
    ins.add_argument("--pairs", type=int, default=200)
    ins.add_argument("--seed", type=int, default=0)
    ins.add_argument("--threshold", type=float, default=0.5)
    ins.add_argument("--out", required=True)
    ins.set_defaults(func=cmd_inspect_mask)

    re = sub.add_parser("reenact", help="reenact a source code toward a target code")
    for name in ("--checkpoint", "--world", "--source", "--target", "--out"):
        re.add_argument(name, required=True)
    re.set_defaults(func=cmd_reenact)
    return p


def main(argv=None):
    logging.basicConfig(level=os.environ.get("MASKMIX_LOG_LEVEL", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DigestMismatchError, LayoutMismatchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except (NonFiniteError, ZeroNormError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FormatError, MaskMixError, json.JSONDecodeError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
