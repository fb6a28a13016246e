"""Command line interface: ``quanvnet {encode,train,eval,count,report}``."""

from __future__ import annotations

import argparse
import csv
import glob
import logging
import sys
from pathlib import Path

from . import accounting
from .data import (
    DEFAULT_DATASET_SEED,
    DEFAULT_SIZES,
    SPLITS,
    OnTheFlyDataset,
    find_idx_pair,
    load_idx,
    make_splits,
    preencode,
    read_cache,
)
from .encoders import Encoder
from .experiment import (
    ExperimentConfig,
    Trainer,
    evaluate_model,
    load_model,
    report_rows,
    save_model,
)
from .quanvolution import FilterSpec

log = logging.getLogger("quanvnet")


def _bool(text: str) -> bool:
    value = text.strip().lower()
    if value in ("true", "1", "yes"):
        return True
    if value in ("false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected true or false, got {text!r}")


def _sizes(text: str) -> tuple[int, int, int]:
    parts = [int(p) for p in text.split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("sizes take the form train,val,test")
    return parts[0], parts[1], parts[2]


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--encoder", choices=["threshold", "frqi", "neqr"], required=True)
    p.add_argument("--filter", type=int, choices=[2, 4], default=2)
    p.add_argument("--stride", type=int, choices=[1, 2], default=1)


def _add_data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data-dir", help="directory with IDX files (default: $QUANVNET_DATA_DIR)")
    p.add_argument("--sizes", type=_sizes, default=DEFAULT_SIZES, help="train,val,test sizes")
    p.add_argument("--dataset-seed", type=int, default=DEFAULT_DATASET_SEED)
    p.add_argument("--threshold", type=int, default=0)


def _load_splits(args):
    images, labels = find_idx_pair(args.data_dir)
    return make_splits(load_idx(images, labels), args.sizes, args.dataset_seed)


def cmd_encode(args) -> int:
    splits = dict(zip(SPLITS, _load_splits(args)))
    spec = FilterSpec(args.filter, args.stride)
    enc = preencode(splits[args.split], args.encoder, spec, args.out, threshold=args.threshold)
    print(f"{args.out}: {len(enc)} images x {enc.patches_per_image} patches, {enc.num_qubits} qubits")
    return 0


def _cache_file(cache: str, split: str) -> Path:
    path = Path(cache)
    return path / f"{split}.qenc" if path.is_dir() else path


def cmd_train(args) -> int:
    cfg = ExperimentConfig(
        encoder=Encoder.parse(args.encoder),
        filter_edge=args.filter,
        stride=args.stride,
        rotations=args.rotations,
        seed=args.seed,
        trainable=args.trainable,
        epochs=args.epochs,
        steps_per_epoch=args.steps,
        val_steps=args.val_steps,
        batch_size=args.batch,
        lr=args.lr,
        threshold=args.threshold,
        sizes=args.sizes,
        dataset_seed=args.dataset_seed,
        cache_dir=args.cache,
    )
    if args.cache:
        if not Path(args.cache).is_dir():
            raise SystemExit("--cache must be a directory holding train.qenc, val.qenc, test.qenc")
        sources = []
        for split in SPLITS:
            f = _cache_file(args.cache, split)
            sources.append(read_cache(f) if f.exists() else None)
        if sources[0] is None:
            raise SystemExit(f"{_cache_file(args.cache, 'train')} not found")
    else:
        sources = [
            OnTheFlyDataset(d, cfg.encoder, cfg.filter_spec, threshold=cfg.threshold)
            for d in _load_splits(args)
        ]
    trainer = Trainer(cfg, *sources)
    metrics = trainer.run()
    if args.metrics_out:
        metrics.to_csv(args.metrics_out)
    if args.model_out:
        save_model(args.model_out, trainer.model)
    print(f"test_loss={metrics.test_loss:.6f} test_acc={metrics.test_acc:.4f}")
    return 0


def cmd_eval(args) -> int:
    model = load_model(args.model)
    source = read_cache(_cache_file(args.cache, "test"))
    loss, acc = evaluate_model(model, source)
    print(f"loss={loss:.6f} acc={acc:.4f} images={len(source)}")
    return 0


def cmd_count(args) -> int:
    rc = accounting.resources(args.encoder, args.filter, args.stride, args.rotations)
    w = csv.writer(sys.stdout)
    w.writerow(["encoder", "filter", "stride", "rotations", "N", "Q", "G", "G_is_upper_bound", "P"])
    w.writerow([rc.encoder.name.lower(), args.filter, args.stride, args.rotations,
                rc.N, rc.Q, rc.G, str(rc.gate_is_bound).lower(), rc.P])
    return 0


def cmd_report(args) -> int:
    paths = sorted(glob.glob(args.metrics_glob))
    if not paths:
        raise SystemExit(f"no metrics files match {args.metrics_glob!r}")
    rows = report_rows(paths, args.last_epochs)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.DictWriter(out, fieldnames=list(rows[0]))
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{v:.4f}" if isinstance(v, float) else v) for k, v in r.items()})
    finally:
        if args.out:
            out.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="quanvnet", description=__doc__)
    parser.add_argument("--verbose", "-v", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="pre-encode one split into a QENC cache file")
    _add_config_args(p)
    _add_data_args(p)
    p.add_argument("--split", choices=SPLITS, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("train", help="train one configuration")
    _add_config_args(p)
    _add_data_args(p)
    p.add_argument("--rotations", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trainable", type=_bool, default=True)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--val-steps", type=int, default=50)
    p.add_argument("--batch", type=int, default=2)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--cache", help="directory with train/val/test .qenc files")
    p.add_argument("--metrics-out")
    p.add_argument("--model-out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a saved model on a cache")
    p.add_argument("--model", required=True)
    p.add_argument("--cache", required=True, help="a .qenc file or a directory with test.qenc")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("count", help="qubit / gate / parameter counts as CSV")
    _add_config_args(p)
    p.add_argument("--rotations", type=int, default=4)
    p.set_defaults(func=cmd_count)

    p = sub.add_parser("report", help="aggregate metrics CSVs per configuration")
    p.add_argument("--metrics-glob", required=True)
    p.add_argument("--last-epochs", type=int, default=20)
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(message)s",
    )
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
