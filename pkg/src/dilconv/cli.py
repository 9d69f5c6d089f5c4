"""``dilconv`` command line: prepare, train, evaluate, shapes.

Exit codes: 0 success, 2 user or configuration error, 3 training diverged.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import data
from .errors import DilconvError, DivergenceError
from .manifest import RunManifest, load_manifest
from .metrics import FORMATS, format_report
from .model import PRESETS, flatten_size, load_checkpoint, preset, save_checkpoint, shape_check
from .train import evaluate, report, train

log = logging.getLogger("dilconv")

# instance counts reported for the three dataset protocols
PUBLISHED_COUNTS = {"v1_split": (8347, 2643), "v1_individual": (41729, 13162), "v2": (10396, 4456)}


class UsageError(DilconvError):
    pass


def _echo(msg=""):
    print(msg, flush=True)


def build_segment_set(m: RunManifest) -> tuple[data.SegmentSet, int]:
    raw = m.resolve(m.dataset_path)
    if raw is None:
        raise UsageError("manifest has no dataset_path")
    if not raw.exists():
        raise FileNotFoundError(f"dataset file not found: {raw}")
    samples = data.parse_wisdm(raw, m.label_names, m.label_aliases)
    spec = m.segment_spec()
    segs = data.segment(samples, spec)
    return data.split(segs, spec, m.seed, m.label_names), samples.skipped


def cmd_prepare(m: RunManifest) -> int:
    ss, skipped = build_segment_set(m)
    m.out_dir.mkdir(parents=True, exist_ok=True)
    data.save_segment_set(m.cache_path, ss)
    _echo(f"cache: {m.cache_path}")
    _echo(f"train segments: {len(ss.train)}")
    _echo(f"test segments: {len(ss.test)}")
    _echo(f"skipped records: {skipped}")
    ref = PUBLISHED_COUNTS.get(m.dataset_kind)
    if ref:
        for name, got, want in (("train", len(ss.train), ref[0]), ("test", len(ss.test), ref[1])):
            _echo(f"{name} deviation from published {want}: {100.0 * (got - want) / want:+.2f}%")
    return 0


def _load_or_prepare(m: RunManifest) -> data.SegmentSet:
    if m.cache_path.exists():
        return data.load_segment_set(m.cache_path)
    cmd_prepare(m)
    return data.load_segment_set(m.cache_path)


def cmd_train(m: RunManifest, fmt: str) -> int:
    cfg = m.network()
    tcfg = m.train_config()
    ss = _load_or_prepare(m)
    norm = {}
    if m.normalize == "per_channel_standardize":
        mean, sd = data.channel_stats(ss.train)
        norm = {"mean": mean.tolist(), "sd": sd.tolist()}
        ss = data.standardize(ss, mean, sd)
    m.out_dir.mkdir(parents=True, exist_ok=True)
    log_path = m.out_dir / "runlog.jsonl"
    with open(log_path, "w") as fh:
        def flush(rec):
            fh.write(json.dumps(rec.to_dict()) + "\n")
            fh.flush()
        params, run = train(ss, cfg, tcfg, callback=flush)
    log_path.write_text(run.to_jsonl())
    ckpt = m.out_dir / "model.ckpt"
    save_checkpoint(ckpt, cfg, params, {"label_names": list(ss.label_names), "normalize": norm,
                                        "selected_epoch": run.selected_epoch})
    final = run.final
    _echo(f"checkpoint: {ckpt}")
    _echo(f"run log: {log_path}")
    if final is not None:
        _echo(f"final epoch {final.epoch}: train loss {final.train_loss:.6f}, "
              f"train accuracy {final.train_accuracy:.4f}")
    if run.selected_epoch is not None:
        _echo(f"selected epoch: {run.selected_epoch} ({run.selection})")
    _echo(report(run, fmt).rstrip("\n"))
    return 0


def cmd_evaluate(checkpoint: Path, cache: Path, fmt: str, split: str) -> int:
    if not checkpoint.exists():
        raise FileNotFoundError(f"checkpoint not found: {checkpoint}")
    if not cache.exists():
        raise FileNotFoundError(f"segment cache not found: {cache}")
    cfg, params, extra = load_checkpoint(checkpoint)
    ss = data.load_segment_set(cache)
    m, k = ss.train.images.shape[2:] if len(ss.train) else ss.test.images.shape[2:]
    s = cfg.input_shape
    labels = tuple(extra.get("label_names", ss.label_names))
    if (s.rows, s.cols) != (m, k) or labels != ss.label_names:
        raise UsageError(f"config digest mismatch: checkpoint expects {s.rows}x{s.cols} images with labels "
                         f"{list(labels)}, cache holds {m}x{k} with {list(ss.label_names)}")
    norm = extra.get("normalize") or {}
    if norm:
        ss = data.standardize(ss, norm["mean"], norm["sd"])
    segs = ss.test if split == "test" else ss.train
    rep = evaluate(params, cfg, segs)
    _echo(format_report(rep, ss.label_names, fmt).rstrip("\n"))
    return 0


def shapes_table(name: str) -> str:
    cfg = preset(name)
    s = cfg.input_shape
    rows = [f"preset {name}: input [1,{s.channels},{s.rows},{s.cols}]"]
    width = max(len(layer.describe()) for layer in cfg.layers) + 2
    rows.append(f"  {'#':>2}  {'layer':<{width}}output")
    flattened = False
    for i, (layer, shape) in enumerate(zip(cfg.layers, shape_check(cfg)), start=1):
        if layer.kind == "FL" and not flattened:
            rows.append(f"  {'':>2}  {'flatten':<{width}}{flatten_size(cfg)}")
            flattened = True
        rows.append(f"  {i:>2}  {layer.describe():<{width}}[{','.join(map(str, shape))}]")
    return "\n".join(rows)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run manifest (key = value file)")
    common.add_argument("--seed", type=int)
    common.add_argument("--epochs", type=int)
    common.add_argument("--preset")
    common.add_argument("--out", help="output directory")
    common.add_argument("--format", choices=FORMATS, default=None)
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="dilconv", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("prepare", parents=[common], help="parse, segment and split a raw dataset into a cache")
    sub.add_parser("train", parents=[common], help="train a network and write checkpoint + run log")
    ev = sub.add_parser("evaluate", parents=[common], help="score a checkpoint on a segment cache")
    ev.add_argument("--checkpoint")
    ev.add_argument("--cache")
    ev.add_argument("--split", choices=("test", "train"), default="test")
    sub.add_parser("shapes", parents=[common], help="print layer-by-layer output shapes of the presets")
    return p


def _manifest(args) -> RunManifest:
    if not args.config:
        raise UsageError("--config is required")
    overrides = {"seed": args.seed, "epochs": args.epochs, "preset": args.preset, "out": args.out}
    m = load_manifest(args.config, overrides)
    if args.out:
        m.out = str(Path(args.out).resolve())
    return m


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.command == "shapes":
        if args.preset is not None and args.preset not in PRESETS:
            raise UsageError(f"unknown preset {args.preset!r}; choose from {sorted(PRESETS)}")
        names = [args.preset] if args.preset else list(PRESETS)
        _echo("\n\n".join(shapes_table(n) for n in names))
        return 0
    if args.command == "evaluate" and args.checkpoint and args.cache and not args.config:
        return cmd_evaluate(Path(args.checkpoint), Path(args.cache), args.format or "plain_table", args.split)
    m = _manifest(args)
    fmt = args.format or m.format
    if args.command == "prepare":
        return cmd_prepare(m)
    if args.command == "train":
        return cmd_train(m, fmt)
    ckpt = Path(args.checkpoint) if args.checkpoint else m.out_dir / "model.ckpt"
    cache = Path(args.cache) if args.cache else m.cache_path
    return cmd_evaluate(ckpt, cache, fmt, args.split)


def main(argv=None) -> int:
    try:
        return run(argv)
    except DivergenceError as e:
        print(f"error: training diverged: {e}", file=sys.stderr)
        return 3
    except (DilconvError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
