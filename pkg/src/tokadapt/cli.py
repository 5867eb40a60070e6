"""Command-line surface: run streams, estimate compute, sweep, inspect."""

import argparse
import csv
import itertools
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .archive import TensorArchive, iter_dataset, validate_file
from .condensation import CondensationPlan
from .encoder import EncoderConfig, load_encoder
from .errors import EngineError
from .pipeline import MODES, Engine, RunConfig, flops_estimate
from .reservoir import STRATEGIES


def _parse_blocks(text):
    try:
        return tuple(int(b) for b in text.split(",") if b != "")
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad block list {text!r}")


def _add_run_flags(p):
    p.add_argument("--model", required=True, help="archive with visual/* entries")
    p.add_argument("--text", required=True, help="archive with text/* entries")
    p.add_argument("--data", required=True, help="archive with sample/* entries")
    p.add_argument("--rate", type=float, default=0.9, help="keep rate per stage")
    p.add_argument("--ratio", type=float, default=2.0, help="merge:prune ratio")
    p.add_argument("--k", type=int, default=2, help="merge centers per stage")
    p.add_argument("--lambda", dest="correction_weight", type=float, default=2.0,
                   help="logits correction weight")
    p.add_argument("--beta", type=float, default=0.05, help="layer temperature")
    p.add_argument("--direction", choices=("shallow", "deep"), default="shallow")
    p.add_argument("--reservoir", type=int, default=3, help="records per class")
    p.add_argument("--strategy", choices=STRATEGIES, default="diversity")
    p.add_argument("--blocks", type=_parse_blocks, default=(4, 7, 10),
                   help="comma-separated 1-indexed condensation blocks")
    p.add_argument("--tau", type=float, default=0.01)
    p.add_argument("--mode", choices=MODES, default="tca")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--heads", type=int, default=None,
                   help="override visual/meta/heads")
    p.add_argument("--warm-start", default=None,
                   help="archive with a reservoir snapshot to restore")
    p.add_argument("--save-reservoir", default=None,
                   help="write the final reservoir snapshot to this archive")


def _run_config(args) -> RunConfig:
    return RunConfig(
        mode=args.mode, keep_rate=args.rate, merge_prune_ratio=args.ratio,
        centers=args.k, correction_weight=args.correction_weight,
        layer_temp=args.beta, direction=args.direction,
        reservoir_size=args.reservoir, strategy=args.strategy,
        condense_blocks=args.blocks, tau=args.tau, seed=args.seed)


class _ArchiveCache:
    def __init__(self):
        self._open = {}

    def get(self, path) -> TensorArchive:
        key = str(Path(path).resolve())
        if key not in self._open:
            self._open[key] = TensorArchive(path)
        return self._open[key]


def _build_engine(args, run_cfg):
    cache = _ArchiveCache()
    model_ar = cache.get(args.model)
    text_ar = cache.get(args.text)
    data_ar = cache.get(args.data)
    cfg, weights = load_encoder(model_ar, heads=args.heads)
    text = text_ar.read_f32("text/embeddings")
    classnames = (text_ar.read_utf8("text/classnames")
                  if "text/classnames" in text_ar else None)
    engine = Engine(cfg, weights, text, run_cfg, classnames)
    if args.warm_start:
        engine.reservoir.restore(cache.get(args.warm_start))
    return engine, data_ar


def _sample_record(res):
    rec = {
        "index": res.index,
        "pred": res.pred,
        "base_pred": res.base_pred,
        "label": res.label,
        "probs": res.probs,
        "entropy_key": res.entropy_key,
        "admission": res.admission,
        "evicted_seq": res.evicted_seq,
        "flops": res.flops,
        "stages": [{
            "block": d.block_id,
            "anchor_class": d.anchor_class,
            "n_in": d.counts.n_in,
            "n_final": d.counts.n_final,
            "n_pruned": d.counts.n_pruned,
            "band": d.counts.band,
            "centers": d.counts.centers,
            "mask": d.mask,
        } for d in res.stages],
    }
    return rec


def cmd_run(args) -> int:
    run_cfg = _run_config(args)
    engine, data_ar = _build_engine(args, run_cfg)
    summary, results = engine.run_stream(iter_dataset(data_ar))
    if args.save_reservoir:
        from .archive import ArchiveWriter
        writer = ArchiveWriter()
        engine.reservoir.snapshot(writer)
        writer.write(args.save_reservoir)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out.with_suffix(".jsonl"), "w") as fh:
        for res in results:
            fh.write(json.dumps(_sample_record(res), sort_keys=True) + "\n")
    with open(out.with_suffix(".json"), "w") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")
    acc = summary.get("accuracy")
    print(f"mode={summary['mode']} samples={summary['samples']} "
          f"accuracy={'n/a' if acc is None else f'{acc:.4f}'} "
          f"flops_ratio={summary['flops_ratio']:.4f} "
          f"report={out.with_suffix('.json')}")
    return 0


def cmd_flops(args) -> int:
    cfg = EncoderConfig(image_side=args.image_side, patch_side=args.patch,
                        layers=args.layers, heads=args.heads, width=args.width,
                        mlp_ratio=args.mlp_ratio, embed_dim=args.embed_dim,
                        condense_blocks=args.blocks if args.rate < 1 else ())
    plan = CondensationPlan(args.rate, args.ratio, args.k)
    vanilla = flops_estimate(replace_blocks(cfg, ()), CondensationPlan(1.0))
    total = flops_estimate(cfg, plan)
    print(f"vanilla={vanilla} ({vanilla / 1e9:.2f} GFLOPs)")
    print(f"condensed={total} ({total / 1e9:.2f} GFLOPs)")
    print(f"ratio={total / vanilla:.4f}")
    return 0


def replace_blocks(cfg: EncoderConfig, blocks) -> EncoderConfig:
    return EncoderConfig(image_side=cfg.image_side, patch_side=cfg.patch_side,
                         layers=cfg.layers, heads=cfg.heads, width=cfg.width,
                         mlp_ratio=cfg.mlp_ratio, embed_dim=cfg.embed_dim,
                         condense_blocks=tuple(blocks))


_SWEEPABLE = {
    "rate": ("keep_rate", float),
    "ratio": ("merge_prune_ratio", float),
    "k": ("centers", int),
    "lambda": ("correction_weight", float),
    "beta": ("layer_temp", float),
    "reservoir": ("reservoir_size", int),
    "strategy": ("strategy", str),
    "direction": ("direction", str),
}


def cmd_ablate(args) -> int:
    axes = []
    for flag, (field_name, typ) in _SWEEPABLE.items():
        raw = getattr(args, f"sweep_{flag}")
        if raw is None:
            continue
        values = [typ(v) for v in raw.split(",") if v != ""]
        if not values:
            raise EngineError(f"--sweep-{flag} lists no values")
        axes.append((field_name, values))
    if not axes:
        raise EngineError("nothing to sweep; pass at least one --sweep-* flag")

    base_cfg = _run_config(args)
    rows = []
    for combo in itertools.product(*(vals for _, vals in axes)):
        overrides = {name: value for (name, _), value in zip(axes, combo)}
        run_cfg = replace(base_cfg, **overrides)
        engine, data_ar = _build_engine(args, run_cfg)
        summary, _ = engine.run_stream(iter_dataset(data_ar))
        row = dict(overrides)
        row["accuracy"] = summary.get("accuracy", "")
        row["flops_ratio"] = summary["flops_ratio"]
        row["samples"] = summary["samples"]
        rows.append(row)

    fieldnames = [name for name, _ in axes] + ["accuracy", "flops_ratio", "samples"]
    target = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.DictWriter(target, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)
    finally:
        if args.out:
            target.close()
    return 0


def cmd_inspect(args) -> int:
    problems = validate_file(args.archive)
    if problems:
        for msg in problems:
            print(f"invalid: {msg}", file=sys.stderr)
        return 1
    ar = TensorArchive(args.archive)
    for name in ar.names():
        ent = ar.manifest[name]
        shape = "x".join(str(d) for d in ent["shape"]) or "scalar"
        print(f"{name}  {ent['dtype']}  {shape}  ({ent['length']} bytes)")
    print(f"{len(ar.manifest)} entries, 0 violations")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tokadapt",
        description="Token-condensation test-time adaptation engine")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="process a dataset stream")
    _add_run_flags(p_run)
    p_run.add_argument("--out", default="report", help="report path stem")
    p_run.set_defaults(func=cmd_run)

    p_flops = sub.add_parser("flops", help="analytic compute estimate")
    p_flops.add_argument("--image-side", type=int, default=224)
    p_flops.add_argument("--patch", type=int, default=16)
    p_flops.add_argument("--layers", type=int, default=12)
    p_flops.add_argument("--heads", type=int, default=12)
    p_flops.add_argument("--width", type=int, default=768)
    p_flops.add_argument("--mlp-ratio", type=float, default=4.0)
    p_flops.add_argument("--embed-dim", type=int, default=512)
    p_flops.add_argument("--rate", type=float, default=0.9)
    p_flops.add_argument("--ratio", type=float, default=2.0)
    p_flops.add_argument("--k", type=int, default=2)
    p_flops.add_argument("--blocks", type=_parse_blocks, default=(4, 7, 10))
    p_flops.set_defaults(func=cmd_flops)

    p_abl = sub.add_parser("ablate", help="Cartesian hyperparameter sweep")
    _add_run_flags(p_abl)
    p_abl.add_argument("--out", default=None, help="CSV path (default stdout)")
    for flag in _SWEEPABLE:
        p_abl.add_argument(f"--sweep-{flag}", default=None,
                           help=f"comma-separated {flag} values")
    p_abl.set_defaults(func=cmd_ablate)

    p_ins = sub.add_parser("inspect", help="validate and list an archive")
    p_ins.add_argument("archive")
    p_ins.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (EngineError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
