"""``tagseq`` command line: synth, build-vocab, train, generate, evaluate."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys

from . import __version__
from .checkpoint import load_checkpoint, save_checkpoint
from .config import PRESETS, VARIANTS, load_config
from .corpus import ORDERS, build_vocab, read_corpus
from .attention import PE_MODES
from .errors import TagSeqError
from .evaluation import evaluate_corpus, nbest_from_records
from .inference import generate, generation_record
from .synth import SynthSpec, synth_corpus, write_synth
from .training import train, write_loss_log

log = logging.getLogger("tagseq")


def sha256_of(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(out_dir, command: str, config: dict, inputs: dict) -> str:
    os.makedirs(out_dir, exist_ok=True)
    manifest = {
        "command": command,
        "version": __version__,
        "config": config,
        "inputs": {name: {"path": os.path.abspath(p), "sha256": sha256_of(p)} for name, p in inputs.items() if p},
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return path


def _require(path, what="file"):
    if not os.path.exists(path):
        raise FileNotFoundError(f"{what} not found: {path}")
    return path


def _config_flags(p: argparse.ArgumentParser, decode: bool = False) -> None:
    p.add_argument("--config", help="JSON config file (flat or with train/decode sections)")
    p.add_argument("--seed", type=int)
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--deterministic", action=argparse.BooleanOptionalAction, default=None)
    if decode:
        p.add_argument("--beam", type=int)
        p.add_argument("--n-best", dest="n_best", type=int)
        p.add_argument("--vote", type=float, help="voting threshold; negative keeps only the top hypothesis")
        p.add_argument("--vote-counting", dest="vote_counting", choices=("set", "occurrence"))
        p.add_argument("--max-len", dest="max_len", type=int)
        p.add_argument("--length-norm", dest="length_norm", action="store_true", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tagseq", description="Tag-sequence generation toolkit.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic compositional corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-train", dest="n_train", type=int)
    p.add_argument("--n-dev", dest="n_dev", type=int)
    p.add_argument("--n-test", dest="n_test", type=int)
    p.add_argument("--held-out", dest="held_out", type=float)

    p = sub.add_parser("build-vocab", help="build source and target vocabularies")
    p.add_argument("--train", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--cap", type=int)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--train", required=True)
    p.add_argument("--dev")
    p.add_argument("--out", required=True, help="output directory")
    _config_flags(p)
    p.add_argument("--order", choices=ORDERS)
    p.add_argument("--pe", choices=PE_MODES)
    p.add_argument("--pe-convention", dest="pe_convention", choices=("symmetric", "as-printed"))
    p.add_argument("--variant", choices=VARIANTS)
    p.add_argument("--dmodel", dest="d_model", type=int)
    p.add_argument("--heads", type=int)
    p.add_argument("--dff", dest="d_ff", type=int)
    p.add_argument("--enc-layers", dest="enc_layers", type=int)
    p.add_argument("--dec-layers", dest="dec_layers", type=int)
    p.add_argument("--epochs", dest="max_epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--warmup", type=int)

    p = sub.add_parser("generate", help="generate tags with a trained model")
    p.add_argument("--model", required=True, help="checkpoint file")
    p.add_argument("--input", required=True, help="JSON-lines corpus")
    p.add_argument("--out", required=True, help="JSON-lines predictions")
    p.add_argument("--emit-nbest", dest="emit_nbest", action="store_true")
    _config_flags(p, decode=True)

    p = sub.add_parser("evaluate", help="score predictions against a gold corpus")
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--train", help="training corpus defining the tag inventory")
    p.add_argument("--model", help="checkpoint whose frequency table defines the inventory")
    p.add_argument("--macro", action="store_true")
    p.add_argument("--out", help="directory for report.json, report.txt and records.csv")
    return parser


def _overrides(args, skip=()) -> dict:
    ignore = {"command", "verbose", "config", "train", "dev", "out", "model", "input", "emit_nbest", *skip}
    return {k: v for k, v in vars(args).items() if k not in ignore}


def cmd_synth(args) -> int:
    values = {k: getattr(args, k) for k in ("n_train", "n_dev", "n_test", "held_out") if getattr(args, k) is not None}
    spec = SynthSpec(**values)
    corpus = synth_corpus(spec, args.seed)
    write_synth(corpus, args.out)
    print(f"wrote {len(corpus.train)}/{len(corpus.dev)}/{len(corpus.test_open)} documents to {args.out}")
    return 0


def cmd_build_vocab(args) -> int:
    docs = read_corpus(_require(args.train))
    cap = args.cap if args.cap is not None else load_config().train.src_vocab_cap
    os.makedirs(args.out, exist_ok=True)
    for side, vocab in (("source", build_vocab(docs, "source", cap)), ("target", build_vocab(docs, "target"))):
        with open(os.path.join(args.out, f"{side}_vocab.json"), "w", encoding="utf-8") as fh:
            json.dump(vocab.to_dict(), fh, ensure_ascii=False)
    write_manifest(args.out, "build-vocab", {"src_vocab_cap": cap}, {"train": args.train})
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    train_docs = read_corpus(_require(args.train))
    dev_docs = read_corpus(_require(args.dev)) if args.dev else None
    os.makedirs(args.out, exist_ok=True)
    write_manifest(args.out, "train", cfg.to_dict(), {"train": args.train, "dev": args.dev, "config": args.config})
    result = train(train_docs, cfg.train, dev_docs, callback=lambda r: log.info("epoch %d: %.4f", r.epoch, r.train_loss))
    save_checkpoint(result.model, os.path.join(args.out, "model.ckpt"))
    write_loss_log(result.log, os.path.join(args.out, "loss.csv"))
    print(f"trained {result.steps} steps; best epoch {result.best_epoch}; model in {args.out}")
    return 0


def cmd_generate(args) -> int:
    model = load_checkpoint(_require(args.model, "checkpoint"))
    cfg = load_config(args.config, _overrides(args))
    docs = read_corpus(_require(args.input))
    out_dir = os.path.dirname(os.path.abspath(args.out))
    with open(args.out, "w", encoding="utf-8") as fh:
        for doc in docs:
            record = generation_record(doc, generate(model, doc.source_words, cfg.decode), args.emit_nbest)
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
    write_manifest(out_dir, "generate", cfg.to_dict(), {"model": args.model, "input": args.input, "config": args.config})
    return 0


def cmd_evaluate(args) -> int:
    _require(args.pred)
    gold = read_corpus(_require(args.gold))
    with open(args.pred, encoding="utf-8") as fh:
        records = [json.loads(line) for line in fh if line.strip()]
    if args.model:
        inventory = set(load_checkpoint(_require(args.model, "checkpoint")).freq)
    elif args.train:
        inventory = {t for d in read_corpus(_require(args.train)) for t in d.tags}
    else:
        inventory = set()
    nbest = nbest_from_records(records) or None
    report = evaluate_corpus(records, gold, inventory, macro=args.macro, nbest=nbest)
    print(report.to_table())
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "report.json"), "w", encoding="utf-8") as fh:
            fh.write(report.to_json())
        with open(os.path.join(args.out, "report.txt"), "w", encoding="utf-8") as fh:
            fh.write(report.to_table() + "\n")
        report.write_records(os.path.join(args.out, "records.csv"))
        write_manifest(args.out, "evaluate", {"macro": args.macro}, {"pred": args.pred, "gold": args.gold, "train": args.train, "model": args.model})
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "build-vocab": cmd_build_vocab,
    "train": cmd_train,
    "generate": cmd_generate,
    "evaluate": cmd_evaluate,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except (TagSeqError, OSError, json.JSONDecodeError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
