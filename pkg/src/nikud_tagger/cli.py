"""Command-line entry point.

Exit codes: 0 ok, 1 internal error, 2 usage/config/IO error, 3 data mismatch.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import checkpoint
from .corpus import (
    DEFAULT_RATIOS, BadRatios, EncodingError, load_corpus, pack_documents, pack_stats,
    read_manifest, read_text, split_dataset, split_from_manifest, write_manifest,
)
from .hebrew import StrictModeViolation, analyze, normalize
from .infer import diacritize_lines
from .metrics import AlignmentError, MissingDocument, VocEquivalence, evaluate_corpus
from .model import ConfigError, TrainingConfig, init
from .train import Trainer
from .vocab import CharVocab

logger = logging.getLogger("nikud_tagger")

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE, EXIT_MISMATCH = 0, 1, 2, 3


class UsageError(Exception):
    pass


def load_config(path: str | Path | None, overrides: dict) -> TrainingConfig:
    data: dict = {}
    prefix = ""
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise UsageError(f"config file not found: {path}")
        text = path.read_text(encoding="utf-8")
        try:
            if path.suffix == ".toml":
                data = tomllib.loads(text)
            else:
                data = json.loads(text)
        except ValueError as e:
            raise UsageError(f"{path}: cannot parse config: {e}") from e
        if not isinstance(data, dict):
            raise UsageError(f"{path}: config must be a table/object")
        if isinstance(data.get("training"), dict):
            data, prefix = data["training"], "training."
    data.update({k: v for k, v in overrides.items() if v is not None})
    return TrainingConfig.from_dict(data, prefix=prefix)


def cmd_split(args) -> int:
    docs = load_corpus(args.corpus, strict=args.strict)
    if not docs:
        raise UsageError(f"no .txt documents under {args.corpus}")
    split = split_dataset(docs, args.ratios, args.seed)
    out = args.out or Path(args.corpus) / "split.tsv"
    write_manifest(split, out)
    print(f"train={len(split.train)} validation={len(split.validation)} test={len(split.test)} -> {out}")
    return EXIT_OK


def _describe(config: TrainingConfig) -> str:
    params = init(config, CharVocab.default(), config.seed)
    groups: dict[str, int] = {}
    for name, w in params.weights.items():
        groups[name.split("_")[0]] = groups.get(name.split("_")[0], 0) + w.size
    lines = [f"{k} = {v}" for k, v in config.to_dict().items()]
    lines.append(f"dense input width = {params.weights['dense_W'].shape[0]}")
    lines += [f"params[{k}] = {v}" for k, v in groups.items()]
    lines.append(f"params[total] = {params.n_parameters()}")
    return "\n".join(lines)


def cmd_train(args) -> int:
    overrides = {
        "seed": args.seed, "epochs": args.epochs, "learning_rate": args.lr,
        "batch_size": args.batch_size, "hidden_size": args.hidden_size,
        "embedding_dim": args.embedding_dim, "max_length": args.max_length,
    }
    config = load_config(args.config, overrides)
    if args.dry_run:
        print(_describe(config))
        return EXIT_OK
    if args.corpus is None or not Path(args.corpus).is_dir():
        raise UsageError(f"corpus directory not found: {args.corpus}")
    docs = load_corpus(args.corpus, config.max_length, strict=args.strict)
    if args.manifest:
        split = split_from_manifest(docs, read_manifest(args.manifest), config.seed)
    else:
        split = split_dataset(docs, DEFAULT_RATIOS, config.seed)
    out_dir = Path(args.out)
    vocab = CharVocab.default()
    train_packs = pack_documents(split.train, config.max_length, vocab)
    dev_packs = pack_documents(split.validation, config.max_length, vocab)
    if args.resume:
        trainer = Trainer.resume(args.resume, vocab, out_dir, epochs=config.epochs)
    else:
        trainer = Trainer(config, vocab, out_dir=out_dir)
    _, log = trainer.fit(train_packs, dev_packs)
    last = log.epochs[-1] if log.epochs else None
    print(f"epochs={trainer.epoch} steps={trainer.step} best_dev_letter_acc={trainer.best_acc:.4f}"
          + (f" last_train_loss={last.train_loss:.4f}" if last else ""))
    print(f"checkpoints and logs in {out_dir}")
    return EXIT_OK


def cmd_predict(args) -> int:
    ck = checkpoint.load(args.checkpoint)
    src = open(args.input, encoding="utf-8") if args.input else sys.stdin
    dst = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    kwargs = {"packing": not args.no_packing, "force_shin_dot": args.force_shin_dot}
    try:
        started = time.perf_counter()
        text = src.read()
        trailing = text.endswith("\n")
        lines = text[:-1].split("\n") if trailing else text.split("\n")
        if not text:
            lines = []
        out = list(diacritize_lines(ck.params, lines, vocab=ck.vocab, **kwargs))
        n_chars = len(text)
        dst.write("\n".join(out) + ("\n" if trailing else ""))
        dst.flush()
        elapsed = time.perf_counter() - started
        if args.time:
            rate = n_chars / elapsed if elapsed > 0 else float("inf")
            print(f"{n_chars} chars in {elapsed:.3f}s ({rate:.1f} chars/sec)", file=sys.stderr)
    finally:
        if args.input:
            src.close()
        if args.out:
            dst.close()
    return EXIT_OK


def _load_analyzed_dir(root: Path, strict: bool):
    if not root.is_dir():
        raise UsageError(f"directory not found: {root}")
    docs, genres = {}, {}
    for path in sorted(root.rglob("*.txt")):
        rel = path.relative_to(root).with_suffix("").as_posix()
        docs[rel] = analyze(normalize(read_text(path)), strict=strict)
        genres[rel] = rel.split("/")[0] if "/" in rel else ""
    return docs, genres


def _line_col(text: str, pos: int) -> tuple[int, int]:
    line = text.count("\n", 0, pos) + 1
    return line, pos - (text.rfind("\n", 0, pos) + 1) + 1


def cmd_eval(args) -> int:
    voc = VocEquivalence.load(args.voc) if args.voc else VocEquivalence.default()
    gold, genres = _load_analyzed_dir(Path(args.gold), args.strict)
    pred, _ = _load_analyzed_dir(Path(args.pred), args.strict)
    try:
        report = evaluate_corpus(gold, pred, voc, genres)
    except AlignmentError as e:
        doc_id = e.detail.split(":", 1)[0]
        line, col = _line_col(gold[doc_id].plain, e.position)
        print(f"error: {Path(args.gold) / doc_id}.txt:{line}:{col}: {e.detail}", file=sys.stderr)
        return EXIT_MISMATCH
    table = report.format_table()
    print(table)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        report.write_csv(out / "report.csv")
        (out / "report.txt").write_text(table + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_pack_stats(args) -> int:
    docs = load_corpus(args.corpus, args.max_length, strict=args.strict)
    packed = pack_documents(docs, args.max_length)
    unpacked = pack_documents(docs, args.max_length, packing=False)
    if not packed:
        raise UsageError(f"no sentences under {args.corpus}")
    for name, packs in (("packed", packed), ("unpacked", unpacked)):
        pad, per_sentence = pack_stats(packs)
        print(f"{name}: rows={len(packs)} pad_fraction={pad:.4f} packs_per_sentence={per_sentence:.4f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nikud-tagger", description="Hebrew nikud restoration")
    p.add_argument("--log-level", default="WARNING")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("split", help="write a train/validation/test manifest")
    s.add_argument("corpus", help="corpus root laid out as <root>/<genre>/<file>.txt")
    s.add_argument("--ratios", nargs=3, type=float, default=list(DEFAULT_RATIOS), metavar=("TRAIN", "VAL", "TEST"))
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", help="manifest path (default <corpus>/split.tsv)")
    s.add_argument("--strict", action="store_true")
    s.set_defaults(func=cmd_split)

    t = sub.add_parser("train", help="train a model")
    t.add_argument("--config", help="TOML or JSON hyperparameter file")
    t.add_argument("--corpus")
    t.add_argument("--manifest")
    t.add_argument("--out", default="run")
    t.add_argument("--resume", help="continue from a last.ckpt")
    t.add_argument("--seed", type=int)
    t.add_argument("--epochs", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--hidden-size", type=int)
    t.add_argument("--embedding-dim", type=int)
    t.add_argument("--max-length", type=int)
    t.add_argument("--dry-run", action="store_true", help="print config and parameter counts, then exit")
    t.add_argument("--strict", action="store_true")
    t.set_defaults(func=cmd_train)

    r = sub.add_parser("predict", help="diacritize text")
    r.add_argument("--checkpoint", required=True)
    r.add_argument("input", nargs="?", help="input file (default stdin)")
    r.add_argument("--out", help="output file (default stdout)")
    r.add_argument("--time", action="store_true", help="report characters/second on stderr")
    r.add_argument("--no-packing", action="store_true")
    r.add_argument("--force-shin-dot", action="store_true")
    r.set_defaults(func=cmd_predict)

    e = sub.add_parser("eval", help="score predictions against gold")
    e.add_argument("gold")
    e.add_argument("pred")
    e.add_argument("--voc", help="JSON vocalization-equivalence file")
    e.add_argument("--out", help="directory for report.csv and report.txt")
    e.add_argument("--strict", action="store_true")
    e.set_defaults(func=cmd_eval)

    k = sub.add_parser("pack-stats", help="padding saved by sentence packing")
    k.add_argument("corpus")
    k.add_argument("--max-length", type=int, default=1024)
    k.add_argument("--strict", action="store_true")
    k.set_defaults(func=cmd_pack_stats)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError, BadRatios, FileNotFoundError, IsADirectoryError,
            EncodingError, StrictModeViolation, checkpoint.VersionMismatch,
            checkpoint.ChecksumMismatch, KeyError) as e:
        if isinstance(e, MissingDocument):
            print(f"error: {e}", file=sys.stderr)
            return EXIT_MISMATCH
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except AlignmentError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_MISMATCH
    except Exception as e:  # noqa: BLE001
        logger.exception("internal error")
        print(f"internal error: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
