"""Command-line interface: ``patchecg {synth,mask,train,eval,explain}``.

Exit codes: 0 on success, 1 for usage errors, 2 for data or format errors.
"""
import argparse
import csv
import json
import logging
import sys

from .assembly import EmptyRecordError
from .checkpoint import CheckpointError, save_checkpoint
from .data import VOCAB, DataFormatError, load_dataset, load_record_csv, save_dataset, save_record_csv, synth_dataset
from .layouts import LayoutError, apply_mask, layout_mask, resolve_layout
from .patching import patch_table, segment
from .training import TrainConfig, evaluate, key_patches, load_model, split_indices, train, write_log_csv

log = logging.getLogger("patchecg")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Raise instead of exiting so usage errors map to exit code 1."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _subparser(sub, name, help_text):
    return sub.add_parser(name, help=help_text, description=help_text,
                          formatter_class=argparse.ArgumentDefaultsHelpFormatter)


def build_parser():
    parser = _Parser(prog="patchecg", description="Patch transformer for ECGs with layout-induced missing data.",
                     formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")
    sub.required = True

    p = _subparser(sub, "synth", "generate a synthetic labeled 12-lead dataset")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--n", type=int, required=True, help="number of records")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.add_argument("--classes", default=",".join(VOCAB), help="comma-separated label vocabulary")

    p = _subparser(sub, "mask", "apply a print layout to one record CSV")
    p.add_argument("--in", dest="inp", required=True, help="input record CSV")
    p.add_argument("--layout", required=True, help="catalog layout name or layout JSON path")
    p.add_argument("--out", required=True, help="output masked record CSV")
    p.add_argument("--dump-patches", default=None, help="also write a (lead, j, kind) patch table CSV")
    p.add_argument("--patch", type=int, default=64, help="patch size P used for --dump-patches")

    p = _subparser(sub, "train", "train a model on a dataset directory")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--mask-policy", default="random", help="'random', 'none' or a layout name")
    p.add_argument("--out", required=True, help="output checkpoint path")
    p.add_argument("--d-model", type=int, default=64, help="embedding width D")
    p.add_argument("--epochs", type=int, default=30, help="training epochs")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.add_argument("--layers", type=int, default=3, help="transformer layers K")
    p.add_argument("--heads", type=int, default=8, help="attention heads")
    p.add_argument("--batch", type=int, default=64, help="records per optimizer step")
    p.add_argument("--lr", type=float, default=1e-3, help="Adam learning rate")
    p.add_argument("--weight-decay", type=float, default=1e-4, help="decoupled weight decay")
    p.add_argument("--patch", type=int, default=64, help="patch size P")
    p.add_argument("--encoder", choices=("projection", "net1d"), default="projection", help="patch encoder")
    p.add_argument("--no-s3", action="store_true", help="disable the segment-shuffle-stitch layers")
    p.add_argument("--freeze-masks", action="store_true", help="draw one random mask per record, not per epoch")
    p.add_argument("--folds", type=int, default=0, help="fold rotation instead of a fractional split (0: off)")
    p.add_argument("--fold", type=int, default=0, help="test fold when --folds is set")
    p.add_argument("--log", default=None, help="per-epoch CSV log path")

    p = _subparser(sub, "eval", "evaluate a checkpoint under a layout")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--model", required=True, help="checkpoint path")
    p.add_argument("--layout", default="12x1", help="catalog layout name or layout JSON path")
    p.add_argument("--report", required=True, help="output report JSON")
    p.add_argument("--split", choices=("all", "test", "val", "train"), default="all",
                   help="records to score; named splits are rebuilt from the checkpoint's training seed")
    p.add_argument("--threshold", type=float, default=0.5, help="decision threshold for confusion metrics")

    p = _subparser(sub, "explain", "list the patches the model attends to most")
    p.add_argument("--model", required=True, help="checkpoint path")
    p.add_argument("--record", required=True, help="record CSV")
    p.add_argument("--layout", default="12x1", help="catalog layout name or layout JSON path")
    p.add_argument("--top-k", type=int, default=3, help="number of patches to report")
    p.add_argument("--out", required=True, help="output JSON")
    p.add_argument("--fs", type=float, default=None, help="sampling rate (default: from the checkpoint)")
    return parser


def _cmd_synth(args):
    classes = tuple(c.strip() for c in args.classes.split(",") if c.strip())
    if args.n < 1:
        raise UsageError("--n must be at least 1")
    save_dataset(synth_dataset(args.n, args.seed, classes), args.out)
    log.info("wrote %d records to %s", args.n, args.out)


def _cmd_mask(args):
    signal = load_record_csv(args.inp)
    masked = apply_mask(signal, layout_mask(resolve_layout(args.layout), signal.n_leads,
                                            signal.n_samples, signal.lead_names))
    save_record_csv(masked, args.out)
    if args.dump_patches:
        rows = patch_table(segment(masked, args.patch), masked.lead_names)
        with open(args.dump_patches, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["lead", "j", "kind"])
            writer.writerows(rows)


def _cmd_train(args):
    dataset = load_dataset(args.data)
    cfg = TrainConfig(P=args.patch, batch=args.batch, epochs=args.epochs, lr=args.lr,
                      weight_decay=args.weight_decay, D=args.d_model, K=args.layers, heads=args.heads,
                      encoder=args.encoder, s3=not args.no_s3, mask_policy=args.mask_policy,
                      freeze_masks=args.freeze_masks, seed=args.seed, folds=args.folds, fold=args.fold)
    try:
        cfg.validate()
        cfg.model_config(len(dataset.leads), len(dataset.vocab),
                         dataset.records[0].signal.n_samples).validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    result = train(dataset, cfg)
    save_checkpoint(result.checkpoint, args.out)
    if args.log:
        write_log_csv(result.log, args.log)
    log.info("best epoch %d; checkpoint written to %s", result.best_epoch, args.out)


def _cmd_eval(args):
    dataset = load_dataset(args.data)
    model, ckpt = load_model(args.model)
    if list(dataset.vocab) != ckpt.config.get("vocab", list(dataset.vocab)):
        raise DataFormatError(f"label vocabulary {list(dataset.vocab)} differs from the model's "
                              f"{ckpt.config.get('vocab')}", args.data)
    if args.split != "all":
        t = TrainConfig.from_dict(ckpt.config.get("train", {}))
        parts = dict(zip(("train", "val", "test"),
                         split_indices(len(dataset), t.split, t.seed, t.folds, t.fold)))
        dataset = dataset.subset(parts[args.split])
    report = evaluate(dataset, model, resolve_layout(args.layout), args.threshold)
    with open(args.report, "w", encoding="utf-8") as fh:
        fh.write(report.to_json() + "\n")
    log.info("macro AUROC %s over %d records", report.macro_auroc, report.extra["n_records"])


def _cmd_explain(args):
    if args.top_k < 1:
        raise UsageError("--top-k must be at least 1")
    model, ckpt = load_model(args.model)
    fs = args.fs or ckpt.config.get("fs", 100.0)
    signal = load_record_csv(args.record, fs=fs)
    patches = key_patches(model, signal, resolve_layout(args.layout), args.top_k, fs)
    out = {"record": args.record, "layout": resolve_layout(args.layout).name,
           "patches": [{"lead": lead, "t_start": t0, "t_stop": t1, "weight": w}
                       for lead, (t0, t1), w in patches]}
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(out, indent=2) + "\n")


COMMANDS = {"synth": _cmd_synth, "mask": _cmd_mask, "train": _cmd_train,
            "eval": _cmd_eval, "explain": _cmd_explain}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataFormatError, EmptyRecordError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except CheckpointError as exc:
        print(f"error: {args.model if hasattr(args, 'model') else ''}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except LayoutError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE if "unknown layout" in str(exc) else EXIT_DATA
    except OSError as exc:
        print(f"error: {exc.filename or ''}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
