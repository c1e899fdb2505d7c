"""Command-line entry point: ``treesent <subcommand> ...``.

Exit status: 0 success, 1 usage error, 2 data error, 3 numeric failure.
Outputs go to ``--out``, defaulting to ``$TREESENT_OUTPUT_DIR`` and then to
``./treesent-out``.
"""

import argparse
import logging
import os
import sys

import numpy as np

from . import config as cfgmod
from . import saliency, trees
from .encoders import EncoderError
from .harness import (
    DataError,
    NumericError,
    evaluate,
    evaluate_by_length,
    load_checkpoint,
    load_dataset,
    predict_all,
    rho_sweep,
    save_checkpoint,
    synth_generate,
    train,
    write_dataset,
)
from .harness.data import SYNTH_TASKS

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
OUTPUT_ENV = "TREESENT_OUTPUT_DIR"

log = logging.getLogger("treesent")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _rho(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid rho {text!r}") from None
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"rho must lie in [0, 1], got {value}")
    return value


def _float_list(text):
    try:
        return [float(x) for x in text.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text):
    try:
        return [int(x) for x in text.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _out_dir(args):
    path = args.out or os.environ.get(OUTPUT_ENV) or "treesent-out"
    os.makedirs(path, exist_ok=True)
    return path


def _write_table(path, rows, columns):
    with open(path, "w", encoding="utf-8") as fh:
        _emit_table(fh, rows, columns)


def _emit_table(fh, rows, columns):
    fh.write("\t".join(columns) + "\n")
    for row in rows:
        fh.write("\t".join(_cell(row[c]) for c in columns) + "\n")


def _cell(v):
    if v is None:
        return "NA"
    if isinstance(v, float):
        return f"{v:.6f}"
    if isinstance(v, (list, tuple)):
        return ",".join(_cell(x) for x in v)
    return str(v)


def _load_run_config(args):
    flat = {}
    if args.config and "=" in args.config and not os.path.exists(args.config):
        # no config file given; the first positional is already an override
        args.overrides = [args.config] + args.overrides
        args.config = None
    if args.config:
        if not os.path.exists(args.config):
            raise DataError(f"config file {args.config} not found")
        flat.update(cfgmod.read_config(args.config))
    flat.update(cfgmod.parse_overrides(args.overrides))
    return flat


def _dataset_from(data):
    if "dir" not in data:
        raise UsageError("config needs data.dir (a directory with train/dev/test .tsv files)")
    return load_dataset(data["dir"])


# -- subcommands ---------------------------------------------------------------


def cmd_treegen(args):
    if args.kind == "random" and args.rho is None:
        raise UsageError("random trees need --rho")
    rng = np.random.default_rng(args.seed)
    if args.corpus:
        with open(args.corpus, encoding="utf-8") as fh:
            sentences = [line.split() for line in fh if line.strip()]
    else:
        if args.n is None or args.n < 1:
            raise UsageError("give a positive leaf count or --corpus")
        sentences = [None] * args.count
    stats = []
    for sent in sentences:
        n = len(sent) if sent is not None else args.n
        if args.kind == "random":
            lay = trees.build_random(n, args.rho, rng)
        else:
            lay = trees.BUILDERS[args.kind](n)
        print(lay.render(sent))
        stats.append(trees.depth_stats(lay))
    print(f"# trees={len(stats)} max_depth={max(s.max_depth for s in stats)} "
          f"mean_leaf_depth={sum(s.mean_leaf_depth for s in stats) / len(stats):.4f}")


def cmd_synth(args):
    ds = synth_generate(args.task, args.vocab_size, args.min_len, args.max_len, args.sizes, args.seed,
                        args.classes)
    out = _out_dir(args)
    write_dataset(ds, out)
    print(f"wrote {ds.task} dataset to {out}")


def cmd_train(args):
    flat = _load_run_config(args)
    _, _, _, data = cfgmod.build(flat)
    dataset = _dataset_from(data)
    enc, head, tcfg, data = cfgmod.build(flat, encoder={"vocab_size": len(dataset.vocab)})
    out = _out_dir(args)
    with open(os.path.join(out, "config.txt"), "w", encoding="utf-8") as fh:
        fh.write(cfgmod.dump(cfgmod.effective(enc, head, tcfg, data)))
    result = train(dataset, enc, head, tcfg)
    save_checkpoint(os.path.join(out, "model.ckpt"), result.model, tcfg, result.optimizer,
                    {"best_epoch": result.best_epoch})
    _write_table(os.path.join(out, "metrics.tsv"), result.history, ["epoch", "train_loss", "dev_loss", "dev_metric"])
    test = evaluate(result.model, dataset.test, tcfg.eval_batch_size)
    print(f"best_epoch\t{result.best_epoch}\ndev\t{result.best_metric:.6f}\ntest\t{test:.6f}")


def cmd_eval(args):
    model, _, _ = load_checkpoint(args.checkpoint)
    ds = load_dataset(args.data)
    examples = ds.split(args.split)
    preds = predict_all(model, examples)
    if args.by_length:
        rows = evaluate_by_length(model, examples, preds=preds)
        _emit_table(sys.stdout, rows, ["bucket", "min_len", "max_len", "count", "metric"])
    else:
        value = evaluate(model, examples)
        name = "bleu" if model.task == "seq2seq" else "accuracy"
        print(f"split\t{name}\n{args.split}\t{value:.6f}")


def _sentences(args):
    if args.corpus:
        with open(args.corpus, encoding="utf-8") as fh:
            return [line.split() for line in fh if line.strip()]
    ds = load_dataset(args.data)
    return [ex.tokens for ex in ds.split(args.split)]


def _check_corpus(sentences):
    if not sentences:
        raise DataError("empty corpus")


def cmd_saliency(args):
    model, _, _ = load_checkpoint(args.checkpoint)
    sents = _sentences(args)
    _check_corpus(sents)
    if model.enc_config.layout == "parsed":
        raise UsageError("saliency of parsed-layout models needs trees; use a corpus-free API call")
    profiles = saliency.corpus_saliency(model.encoder, sents, model.vocab, model=args.checkpoint,
                                        rng=np.random.default_rng([model.seed, 2]))
    if args.out:
        os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
        with open(args.out, "w", encoding="utf-8") as fh:
            saliency.write_records(fh, profiles)
    else:
        saliency.write_records(sys.stdout, profiles)


def cmd_agree(args):
    if len(args.checkpoints) < 2:
        raise UsageError("agreement needs at least two checkpoints")
    models = [load_checkpoint(p)[0] for p in args.checkpoints]
    vocab = models[0].vocab
    if any(m.vocab != vocab for m in models):
        raise DataError("checkpoints use different vocabularies")
    sents = _sentences(args)
    _check_corpus(sents)
    profiles = [saliency.corpus_saliency(m.encoder, sents, vocab, rng=np.random.default_rng([m.seed, 2]))
                for m in models]
    agg = saliency.saliency_agreement(profiles)
    print("model_i\tmodel_j\tpearson_x100")
    for (i, j), v in sorted(agg.pairs.items()):
        print(f"{i}\t{j}\t{_cell(v)}")
    print(f"# mean={agg.mean:.6f} sentences={agg.sentences} excluded={agg.excluded}")


def cmd_sweep(args):
    flat = _load_run_config(args)
    _, _, _, data = cfgmod.build(flat)
    dataset = _dataset_from(data)
    enc, head, tcfg, data = cfgmod.build(flat, encoder={"vocab_size": len(dataset.vocab)})
    out = _out_dir(args)
    with open(os.path.join(out, "config.txt"), "w", encoding="utf-8") as fh:
        fh.write(cfgmod.dump(cfgmod.effective(enc, head, tcfg, data)))
    rows = rho_sweep(dataset, enc, args.grid, head, tcfg, args.seeds)
    cols = ["rho", "mean_depth", "mean_metric", "median_metric", "values"]
    _write_table(os.path.join(out, "rho_sweep.tsv"), rows, cols)
    _emit_table(sys.stdout, rows, cols)


# -- parser --------------------------------------------------------------------


def build_parser():
    p = _Parser(prog="treesent", description="Tree-LSTM sentence encoder experiments.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("treegen", help="print bracketed layouts and depth statistics")
    s.add_argument("kind", choices=["balanced", "left", "right", "random"])
    s.add_argument("n", type=int, nargs="?", help="leaf count")
    s.add_argument("--rho", type=_rho)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--count", type=int, default=1, help="trees to draw when no corpus is given")
    s.add_argument("--corpus", help="file with one whitespace-tokenized sentence per line")
    s.set_defaults(func=cmd_treegen)

    s = sub.add_parser("synth", help="write a synthetic dataset")
    s.add_argument("task", choices=SYNTH_TASKS)
    s.add_argument("--vocab-size", type=int, default=50)
    s.add_argument("--min-len", type=int, default=4)
    s.add_argument("--max-len", type=int, default=12)
    s.add_argument("--sizes", type=_int_list, default=[1000, 200, 200], help="train,dev,test counts")
    s.add_argument("--classes", type=int, default=2)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_synth)

    for name, func, helptext in (("train", cmd_train, "train a model from a config"),
                                 ("sweep-rho", cmd_sweep, "rho sweep over random layouts")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("config", nargs="?", help="key = value config file")
        s.add_argument("overrides", nargs="*", help="key=value settings applied after the file")
        s.add_argument("--out")
        if name == "sweep-rho":
            s.add_argument("--grid", type=_float_list, default=[0.0, 0.25, 0.5, 0.75, 1.0])
            s.add_argument("--seeds", type=_int_list, default=[0, 1, 2, 3, 4])
        s.set_defaults(func=func)

    s = sub.add_parser("eval", help="evaluate a checkpoint")
    s.add_argument("checkpoint")
    s.add_argument("--data", required=True, help="dataset directory")
    s.add_argument("--split", default="test", choices=["train", "dev", "test"])
    s.add_argument("--by-length", action="store_true", help="report per length bucket")
    s.set_defaults(func=cmd_eval)

    for name, func in (("saliency", cmd_saliency), ("agree", cmd_agree)):
        s = sub.add_parser(name, help="word saliency records" if name == "saliency" else
                           "cross-model saliency agreement")
        if name == "saliency":
            s.add_argument("checkpoint")
            s.add_argument("--out", help="record file (default: standard output)")
        else:
            s.add_argument("checkpoints", nargs="+")
        src = s.add_mutually_exclusive_group(required=True)
        src.add_argument("--corpus", help="one sentence per line")
        src.add_argument("--data", help="dataset directory")
        s.add_argument("--split", default="test", choices=["train", "dev", "test"])
        s.set_defaults(func=func)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        args.func(args)
    except (UsageError, cfgmod.ConfigError, EncoderError) as exc:
        print(f"treesent: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, trees.TreeError, saliency.SaliencyError, OSError, KeyError) as exc:
        print(f"treesent: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, FloatingPointError) as exc:
        print(f"treesent: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
