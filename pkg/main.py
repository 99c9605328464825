"""
Command-line entry point.

Subcommands: preprocess, gen-synthetic, train, eval, inspect, ablate, check.
Each one is a thin wrapper over the module APIs; library errors surface
here as a logged diagnostic and a nonzero exit code.
"""

import argparse
import logging
import sys
from typing import Optional, Sequence

import health_check
from checkpoint import load_checkpoint, restore_model
from config import PRECISIONS, CorpusSpec, DecoderKind, TrainConfig
from corpus import (
    DEFAULT_SPLIT,
    encode_sentences,
    flatten,
    preprocess,
    read_text_lines,
    read_token_file,
    split_sentences,
    write_preprocessed,
)
from errors import ArgumentError, SDLMError
from evaluation import case_study, compare, evaluate, format_case_study, format_comparison, format_report, robustness_run, write_report
from lexicon import NormalizationMode, ablate_edges, compute_stats, load_lexicon, save_lexicon
from model import LanguageModel
from synthetic import gen_synthetic, write_synthetic
from training import train

logger = logging.getLogger(__name__)


def _proportions(text: str) -> tuple[float, ...]:
    try:
        values = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if len(values) != 3:
        raise argparse.ArgumentTypeError("expected three proportions: train,valid,test")
    return values


def _clip(text: str) -> Optional[float]:
    return None if text.lower() == "none" else float(text)


def add_train_arguments(parser: argparse.ArgumentParser) -> None:
    defaults = TrainConfig()
    group = parser.add_argument_group("training")
    group.add_argument("--decoder", choices=[k.value for k in DecoderKind], default=defaults.decoder_kind.value)
    group.add_argument("--norm", choices=[m.value for m in NormalizationMode], default=defaults.mode.value)
    group.add_argument("--basis", type=int, default=defaults.basis, help="number of basis matrices R")
    group.add_argument("--seed", type=int, default=defaults.seed)
    group.add_argument("--input-dim", type=int, default=defaults.input_dim)
    group.add_argument("--context-dim", type=int, default=defaults.context_dim)
    group.add_argument("--layers", type=int, default=defaults.layers)
    group.add_argument("--dropout", type=float, default=defaults.dropout_rate)
    group.add_argument("--lr", type=float, default=defaults.lr0)
    group.add_argument("--epochs", type=int, default=defaults.max_epochs)
    group.add_argument("--batch-size", type=int, default=defaults.batch_size)
    group.add_argument("--bptt", type=int, default=defaults.bptt_len)
    group.add_argument("--clip-norm", type=_clip, default=defaults.clip_norm, help="'none' disables clipping")
    group.add_argument("--precision", choices=PRECISIONS, default=defaults.precision)
    group.add_argument("--init-scale", type=float, default=defaults.init_scale)
    group.add_argument("--min-lr", type=float, default=defaults.min_lr)
    group.add_argument("--log-every", type=int, default=defaults.log_every)
    group.add_argument("--prefetch", action="store_true")


def config_from_args(args: argparse.Namespace) -> TrainConfig:
    return TrainConfig(
        lr0=args.lr,
        batch_size=args.batch_size,
        bptt_len=args.bptt,
        max_epochs=args.epochs,
        clip_norm=args.clip_norm,
        seed=args.seed,
        decoder_kind=DecoderKind(args.decoder),
        mode=NormalizationMode(args.norm),
        basis=args.basis,
        input_dim=args.input_dim,
        context_dim=args.context_dim,
        layers=args.layers,
        dropout_rate=args.dropout,
        precision=args.precision,
        init_scale=args.init_scale,
        min_lr=args.min_lr,
        log_every=args.log_every,
        prefetch=args.prefetch,
    ).check()


def _load_splits(args: argparse.Namespace, lexicon):
    train_ids = flatten(encode_sentences(read_token_file(args.train), lexicon))
    valid_ids = flatten(encode_sentences(read_token_file(args.valid), lexicon)) if args.valid else None
    return train_ids, valid_ids


# --- subcommands ---

def cmd_preprocess(args: argparse.Namespace) -> int:
    lexicon = load_lexicon(args.lexicon)
    if args.input:
        lines = [line for line in read_text_lines(args.input) if line.strip()]
        raw = {name: [" ".join(s) for s in sentences]
               for name, sentences in split_sentences([line.split() for line in lines], args.split, args.seed).items()}
    else:
        if not (args.train and args.valid and args.test):
            raise ArgumentError("preprocess needs --input or all of --train/--valid/--test")
        CorpusSpec(args.train, args.valid, args.test, args.lexicon, args.min_count).check()
        raw = {name: read_text_lines(path) for name, path in (("train", args.train), ("valid", args.valid), ("test", args.test))}

    result = preprocess(
        raw,
        lexicon,
        min_count=args.min_count,
        canonicalize_numbers=not args.no_canonicalize,
        segment_unknown=not args.no_segment,
    )
    for name, path in write_preprocessed(result, args.out_dir).items():
        print(f"{name}\t{path}")
    return 0


def cmd_gen_synthetic(args: argparse.Namespace) -> int:
    corpus = gen_synthetic(
        K=args.K,
        M=args.M,
        N=args.N,
        corpus_len=args.tokens,
        signal_strength=args.signal,
        seed=args.seed,
        proportions=args.split,
    )
    for name, path in write_synthetic(corpus, args.out_dir, export_truth=args.export_truth).items():
        print(f"{name}\t{path}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    config = config_from_args(args)
    lexicon = load_lexicon(args.lexicon)
    train_ids, valid_ids = _load_splits(args, lexicon)

    model = LanguageModel(lexicon, config)
    result = train(model, train_ids, valid_ids, checkpoint_path=args.out)
    print(f"epochs\t{len(result.epochs)}")
    print(f"stop_reason\t{result.stop_reason}")
    if result.best_valid_ppl is not None:
        print(f"best_valid_ppl\t{result.best_valid_ppl!r}")
    print(f"parameters\t{model.parameter_count()}")
    print(f"extra_parameters\t{model.extra_parameters()}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    lexicon = load_lexicon(args.lexicon)
    sentences = encode_sentences(read_token_file(args.data), lexicon)
    reset = not args.stream

    model = restore_model(load_checkpoint(args.checkpoint), lexicon)
    report = evaluate(model, sentences, reset_per_sentence=reset, workers=args.workers, label=args.label)
    if args.out:
        write_report(report, args.out, args.table)
    sys.stdout.write(format_report(report))

    if args.against:
        other = restore_model(load_checkpoint(args.against), lexicon)
        reference = evaluate(other, sentences, reset_per_sentence=reset, workers=args.workers, label=args.against_label)
        table = format_comparison(compare(reference, report), reference.label, report.label)
        if args.comparison:
            with open(args.comparison, "w", encoding="utf-8", newline="\n") as f:
                f.write(table)
        sys.stdout.write(table)
    return 0


def cmd_inspect(args: argparse.Namespace) -> int:
    lexicon = load_lexicon(args.lexicon)
    model = restore_model(load_checkpoint(args.checkpoint), lexicon)
    target = None
    if args.target is not None:
        target = int(encode_sentences([[args.target]], lexicon)[0][0])
    for context in args.context:
        ids = encode_sentences([context.split()], lexicon)[0]
        sys.stdout.write(format_case_study(case_study(model, ids, args.k, target)))
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    lexicon = load_lexicon(args.lexicon)
    if args.output_lexicon:
        ablated = ablate_edges(lexicon, args.fraction, args.ablate_seed)
        save_lexicon(ablated, args.output_lexicon)
        stats = compute_stats(ablated)
        print(f"edges\t{lexicon.edge_count}\t{stats.edge_count}")
    if args.train:
        if not args.test:
            raise ArgumentError("a paired ablation run needs --test")
        config = config_from_args(args)
        train_ids, valid_ids = _load_splits(args, lexicon)
        test = encode_sentences(read_token_file(args.test), lexicon)
        result = robustness_run(config, lexicon, args.fraction, args.ablate_seed, train_ids, valid_ids, test)
        print(f"ppl_full\t{result.ppl_full!r}")
        print(f"ppl_ablated\t{result.ppl_ablated!r}")
    return 0


def cmd_check(args: argparse.Namespace) -> int:
    return health_check.main(args.seed)


# --- parser ---

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sdlm", description="Sememe-driven language modeling")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true")
    verbosity.add_argument("-q", "--quiet", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="raw text to token files and a frozen vocabulary")
    p.add_argument("--lexicon", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--input", help="one raw corpus, shuffled and split by sentence")
    p.add_argument("--train")
    p.add_argument("--valid")
    p.add_argument("--test")
    p.add_argument("--split", type=_proportions, default=DEFAULT_SPLIT, help="train,valid,test token shares")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--min-count", type=int, default=5)
    p.add_argument("--no-canonicalize", action="store_true")
    p.add_argument("--no-segment", action="store_true")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("gen-synthetic", help="generate a lexicon and a sememe-driven corpus")
    p.add_argument("--K", type=int, required=True)
    p.add_argument("--M", type=int, required=True)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--tokens", type=int, required=True)
    p.add_argument("--signal", type=float, default=0.9)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--split", type=_proportions, default=(10.0, 1.0, 1.0))
    p.add_argument("--out-dir", required=True)
    p.add_argument("--export-truth", action="store_true")
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("train", help="train a language model")
    p.add_argument("--lexicon", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--valid")
    p.add_argument("--out", required=True, help="checkpoint path")
    add_train_arguments(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="perplexity report for a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--lexicon", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out")
    p.add_argument("--table")
    p.add_argument("--label", default="")
    p.add_argument("--stream", action="store_true", help="carry state across sentences")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--against", help="reference checkpoint to compare with")
    p.add_argument("--against-label", default="reference")
    p.add_argument("--comparison", help="write the comparison table here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("inspect", help="top-k words and sememes after given contexts")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--lexicon", required=True)
    p.add_argument("--context", action="append", required=True)
    p.add_argument("--target")
    p.add_argument("--k", type=int, default=5)
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("ablate", help="remove random sense-sememe edges, optionally with a paired run")
    p.add_argument("--lexicon", required=True)
    p.add_argument("--fraction", type=float, default=0.1)
    p.add_argument("--ablate-seed", type=int, default=1)
    p.add_argument("--output-lexicon")
    p.add_argument("--train")
    p.add_argument("--valid")
    p.add_argument("--test")
    add_train_arguments(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("check", help="run the numeric health check")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_check)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)

    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(format="%(asctime)s - %(name)s - %(levelname)s - %(message)s", level=level)

    try:
        return args.func(args)
    except SDLMError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return 1
    except OSError as e:
        logger.error(f"I/O error: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
