"""``haad`` command line: synth, train, eval, sweep, convert.

Errors are reported on stderr as a single ``error: <message>`` line; the exit
status is 0 only on success (2 for usage errors, 1 otherwise).
"""
from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import config as run_config
from .motion import (BodyPartition, ClipDescriptor, DatasetManifest, MotionClip, load_manifest,
                     save_manifest, write_clip)
from .scoring import DEFAULT_K, SCHEMES, evaluate, roc_csv, score_dataset, scores_csv
from .synth import synth_dataset
from .trainer import TrainedModel, load_model, save_model, train

PARTS_SETTINGS = (("full",), ("full", "up"), ("full", "low"), ("full", "up", "low"))


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _index_list(text: str) -> list[int]:
    """'0-9,12' -> [0..9, 12]."""
    out = []
    for part in filter(None, (t.strip() for t in text.split(","))):
        lo, _, hi = part.partition("-")
        out.extend(range(int(lo), int(hi or lo) + 1))
    return out


def _add_run_overrides(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("config overrides (flags win over --config)")
    g.add_argument("--config", help="JSON run config file")
    g.add_argument("--seed", type=int)
    g.add_argument("--epochs", type=_positive_int)
    g.add_argument("--batch-size", type=_positive_int)
    g.add_argument("--lr-start", type=float)
    g.add_argument("--lr-end", type=float)
    g.add_argument("--m", dest="M", type=_positive_int, help="DCT coefficients kept (default 10)")
    g.add_argument("--layers", dest="L", type=int, help="GCN layers per stream (default 4)")
    g.add_argument("--hidden", type=_positive_int)
    g.add_argument("--d-out", type=_positive_int)
    g.add_argument("--fuse-dim", type=_positive_int)
    g.add_argument("--flow-layers", type=int)
    g.add_argument("--holdout", dest="holdout_fraction", type=float)
    g.add_argument("--streams", help="e.g. full+up+low")


_OVERRIDE_KEYS = ("seed", "epochs", "batch_size", "lr_start", "lr_end", "M", "L", "hidden", "d_out",
                  "fuse_dim", "flow_layers", "holdout_fraction", "streams")


def _run_cfg(args, **extra) -> dict:
    overrides = {k: getattr(args, k, None) for k in _OVERRIDE_KEYS}
    overrides.update(extra)
    return run_config.load_run_config(args.config, overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="haad", description="One-class human action anomaly detection.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write a synthetic wave/kick/jump dataset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--per-class", type=_positive_int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--frames-min", type=_positive_int, default=40)
    p.add_argument("--frames-max", type=_positive_int, default=60)
    p.add_argument("--jitter", type=float, default=0.01)

    p = sub.add_parser("train", help="train a one-class model")
    p.add_argument("--data", required=True, help="training manifest")
    p.add_argument("--normal", help="normal action label")
    p.add_argument("--out", required=True, help="model file to write")
    _add_run_overrides(p)

    p = sub.add_parser("eval", help="score a test manifest and compute AUC")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="test manifest")
    p.add_argument("--scheme", choices=SCHEMES, default="knn")
    p.add_argument("--k", type=_positive_int, default=DEFAULT_K)
    p.add_argument("--scores", default="scores.csv")
    p.add_argument("--roc", default="roc.csv")

    p = sub.add_parser("sweep", help="ablation sweeps: dct_m, scoring, parts")
    p.add_argument("--kind", choices=("dct_m", "scoring", "parts"), required=True)
    p.add_argument("--values", type=_int_list, default=[2, 5, 10], help="M values for dct_m")
    p.add_argument("--data", required=True, help="training manifest")
    p.add_argument("--test-data", required=True, help="test manifest")
    p.add_argument("--normal", help="normal action label")
    p.add_argument("--model", help="existing model for --kind scoring (else one is trained)")
    p.add_argument("--k", type=_positive_int, default=DEFAULT_K)
    p.add_argument("--out", required=True, help="CSV of setting,auc")
    _add_run_overrides(p)

    p = sub.add_parser("convert", help="wrap H x J x Cn array dumps (.npy/.npz) as clip files")
    p.add_argument("inputs", nargs="+", help=".npy (one clip) or .npz (one clip per array)")
    p.add_argument("--label", required=True)
    p.add_argument("--out", required=True, help="dataset directory (manifest.json is created or extended)")
    p.add_argument("--upper", type=_index_list, help="upper-body joint indices, e.g. 0-9")
    p.add_argument("--lower", type=_index_list, help="lower-body joint indices, e.g. 10-15")
    p.add_argument("--joint-names", help="comma-separated skeleton joint names")
    return parser


def cmd_synth(args) -> None:
    if args.frames_min > args.frames_max:
        raise UsageError("--frames-min must not exceed --frames-max")
    manifest = synth_dataset(args.out, args.seed, args.per_class,
                             frames_range=(args.frames_min, args.frames_max), jitter_sigma=args.jitter)
    print(manifest.path)


def cmd_train(args) -> None:
    cfg = _run_cfg(args, normal_label=args.normal)
    if not cfg["normal_label"]:
        raise UsageError("--normal is required (or normal_label in --config)")
    manifest = load_manifest(args.data)

    def report(rec):
        print(f"epoch={rec['epoch']} nll={rec['train_nll']:.6f}", flush=True)

    tm = train(manifest, run_config.train_config(cfg), on_epoch=report)
    save_model(tm, args.out)


def _auc(model: TrainedModel, manifest: DatasetManifest, scheme: str, K: int):
    return evaluate(score_dataset(manifest, model, scheme, K))


def cmd_eval(args) -> None:
    model = load_model(args.model)
    report = _auc(model, load_manifest(args.data), args.scheme, args.k)
    Path(args.scores).write_text(scores_csv(report), encoding="utf-8", newline="\n")
    Path(args.roc).write_text(roc_csv(report), encoding="utf-8", newline="\n")
    print(f"auc={report.auc:.6f}")


def cmd_sweep(args) -> None:
    base = _run_cfg(args, normal_label=args.normal)
    if not base["normal_label"] and args.model is None:
        raise UsageError("--normal is required (or normal_label in --config)")
    train_manifest = load_manifest(args.data)
    test_manifest = load_manifest(args.test_data)

    def fit(**changes) -> TrainedModel:
        return train(train_manifest, run_config.train_config({**base, **changes}))

    rows = []
    if args.kind == "dct_m":
        if not args.values:
            raise UsageError("--values must list at least one M")
        for M in args.values:
            rows.append((str(M), _auc(fit(M=M), test_manifest, "knn", args.k).auc))
    elif args.kind == "scoring":
        model = load_model(args.model) if args.model else fit()
        for scheme in SCHEMES:
            rows.append((scheme, _auc(model, test_manifest, scheme, args.k).auc))
    else:
        for streams in PARTS_SETTINGS:
            rows.append(("+".join(streams), _auc(fit(streams=list(streams)), test_manifest, "knn", args.k).auc))

    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["setting", "auc"])
        for setting, auc in rows:
            w.writerow([setting, f"{auc:.6f}"])
    for setting, auc in rows:
        print(f"setting={setting} auc={auc:.6f}")


def _load_arrays(path: Path) -> list[tuple[str, np.ndarray]]:
    if path.suffix == ".npz":
        with np.load(path) as z:
            return [(f"{path.stem}_{k}", np.asarray(z[k])) for k in sorted(z.files)]
    if path.suffix == ".npy":
        return [(path.stem, np.load(path))]
    raise ValueError(f"convert: unsupported input {path} (expected .npy or .npz)")


def cmd_convert(args) -> None:
    out = Path(args.out)
    mpath = out / "manifest.json"
    arrays = [item for p in args.inputs for item in _load_arrays(Path(p))]
    if not arrays:
        raise ValueError("convert: no arrays found in the inputs")
    J = arrays[0][1].shape[1] if arrays[0][1].ndim == 3 else 0
    if mpath.exists():
        manifest = load_manifest(mpath)
    else:
        if args.upper is None or args.lower is None:
            raise UsageError("--upper and --lower are required when creating a new manifest")
        names = args.joint_names.split(",") if args.joint_names else [f"joint{j}" for j in range(J)]
        manifest = DatasetManifest(names, BodyPartition(tuple(args.upper), tuple(args.lower)), [], mpath)
    (out / "clips").mkdir(parents=True, exist_ok=True)
    taken = {c.id for c in manifest.clips}
    new = []
    for cid, data in arrays:
        if cid in taken:
            raise ValueError(f"convert: clip id {cid!r} already in {mpath}")
        clip = MotionClip(cid, args.label, np.asarray(data, dtype=np.float64))
        path = out / "clips" / f"{cid}.haad"
        write_clip(path, clip.data)
        new.append(ClipDescriptor(cid, args.label, path, clip.frames, clip.joints, clip.channels))
        taken.add(cid)
    manifest = manifest.with_clips(list(manifest.clips) + new)
    manifest.validate()
    save_manifest(manifest, mpath)
    print(mpath)


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "eval": cmd_eval, "sweep": cmd_sweep,
            "convert": cmd_convert}


def _one_line(exc: BaseException) -> str:
    return " ".join(str(exc).split()) or type(exc).__name__


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: usage: {_one_line(exc)}", file=sys.stderr)
        return 2
    except Exception as exc:  # every failure surfaces as one machine-parsable line
        print(f"error: {_one_line(exc)}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
