"""Command-line entry point.

Subcommands: stats, convert, train, predict, evaluate, oracle-check, trace.
Configuration is one "key = value" per line with "#" comments; command-line
flags override config values. All randomness flows from the single
configured seed, so a repeated run produces byte-identical outputs.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from . import corpus as corpus_mod
from . import evaluation, neural, schemas, transitions
from .corpus import Corpus, CorpusError, ResampleMode

CONFIG_PATH_KEYS = ("train_corpus", "dev_corpus", "test_corpus",
                    "external_vectors", "checkpoint", "report")
SCORER_FIELDS = {f.name: f.type for f in dataclasses.fields(neural.ScorerConfig)}


def parse_config_file(path: str) -> dict[str, str]:
    """Read "key = value" lines; '#' starts a comment; unknown keys rejected."""
    values: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise CorpusError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in SCORER_FIELDS and key not in CONFIG_PATH_KEYS:
                raise CorpusError(f"{path}:{lineno}: unknown config key {key!r}")
            values[key] = value
    return values


def build_scorer_config(values: dict[str, str], seed: int | None) -> neural.ScorerConfig:
    kwargs = {}
    for name, typ in SCORER_FIELDS.items():
        if name not in values:
            continue
        raw = values[name]
        if "bool" in str(typ):
            kwargs[name] = raw.lower() in ("1", "true", "yes", "on")
        elif "float" in str(typ):
            kwargs[name] = float(raw)
        else:
            kwargs[name] = int(raw)
    if seed is not None:
        kwargs["seed"] = seed
    return neural.ScorerConfig(**kwargs)


def read_corpus(path: str, fmt: str) -> Corpus:
    if fmt == "standoff":
        with open(path + ".txt", encoding="utf-8") as fh:
            text = fh.read()
        with open(path + ".ann", encoding="utf-8") as fh:
            ann = fh.read()
        boundaries = [(m, e) for m, e in _line_boundaries(text)]
        corpus, warnings = corpus_mod.parse_standoff(text, ann, boundaries)
        for w in warnings:
            print(f"warning: {w}", file=sys.stderr)
        return corpus
    with open(path, encoding="utf-8") as fh:
        return corpus_mod.parse_inline(fh.read())


def _line_boundaries(text: str) -> list[tuple[int, int]]:
    """One sentence per line of the standoff text file."""
    bounds = []
    pos = 0
    for line in text.split("\n"):
        bounds.append((pos, pos + len(line)))
        pos += len(line) + 1
    return [b for b in bounds if text[b[0]:b[1]].strip()]


def write_corpus(corpus: Corpus, path: str, fmt: str) -> None:
    if fmt == "tags":
        blocks = []
        for sent in corpus:
            tags = schemas.encode_biohd(sent)
            blocks.append(schemas.to_conll(sent, tags) + "\n")
        out = "\n".join(blocks)
    else:
        out = corpus_mod.write_inline(corpus)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(out)


def _log_config(config: neural.ScorerConfig, values: dict[str, str]) -> None:
    resolved = dict(sorted(dataclasses.asdict(config).items()))
    for key in CONFIG_PATH_KEYS:
        if key in values:
            resolved[key] = values[key]
    print("config: " + json.dumps(resolved, sort_keys=True))


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_stats(args) -> int:
    corpus = read_corpus(args.corpus, args.format)
    print(corpus_mod.corpus_stats(corpus).to_text())
    return 0


def cmd_convert(args) -> int:
    corpus = read_corpus(args.input, args.format)
    if args.flatten:
        corpus = corpus_mod.flatten_for_flat_model(corpus)
    if args.resample:
        corpus = corpus_mod.resample(corpus, ResampleMode(args.resample), args.seed)
    write_corpus(corpus, args.output, args.to)
    return 0


def cmd_oracle_check(args) -> int:
    corpus = read_corpus(args.corpus, args.format)
    covered = 0
    total = 0
    nested: list[int] = []
    uncovered_by_cat: dict[str, int] = {}
    for sent in corpus:
        total += len(sent.mentions)
        try:
            actions, uncovered = transitions.oracle(sent)
        except CorpusError:
            nested.append(sent.sent_index)
            continue
        derived = transitions.decode(actions, len(sent.tokens))
        if derived != frozenset(sent.mentions) - uncovered:
            print(f"error: oracle round-trip mismatch in sentence {sent.sent_index}")
            return 1
        covered += len(sent.mentions) - len(uncovered)
        for m in uncovered:
            cat = (corpus_mod.overlap_category(m, list(sent.mentions)).value
                   if m.is_discontinuous else "continuous")
            uncovered_by_cat[cat] = uncovered_by_cat.get(cat, 0) + 1
    rate = covered / total if total else 1.0
    print(f"mentions = {total}")
    print(f"covered = {covered}")
    print(f"coverage = {rate:.4f}")
    for cat in sorted(uncovered_by_cat):
        print(f"uncovered_{cat} = {uncovered_by_cat[cat]}")
    if nested:
        print(f"nested_sentences = {','.join(str(i) for i in nested)}")
    return 0


def cmd_trace(args) -> int:
    corpus = read_corpus(args.corpus, args.format)
    if not (0 <= args.sentence < len(corpus)):
        raise CorpusError(f"sentence index {args.sentence} out of range")
    sent = corpus.sentences[args.sentence]
    actions, uncovered = transitions.oracle(sent)
    print(transitions.trace(sent, actions).to_text())
    if uncovered:
        print(f"uncovered = {len(uncovered)}")
    return 0


def cmd_train(args) -> int:
    values = parse_config_file(args.config) if args.config else {}
    config = build_scorer_config(values, args.seed)
    _log_config(config, values)
    train_path = args.train or values.get("train_corpus")
    if not train_path:
        raise CorpusError("train corpus required (flag --train or config train_corpus)")
    ckpt_path = args.checkpoint or values.get("checkpoint")
    if not ckpt_path:
        raise CorpusError("checkpoint path required (flag --checkpoint or config checkpoint)")
    train = read_corpus(train_path, args.format)
    dev_path = args.dev or values.get("dev_corpus")
    dev = read_corpus(dev_path, args.format) if dev_path else None

    vocab = neural.Vocab.build(train)
    best = {"f1": -1.0, "epoch": -1, "params": None}

    def dev_hook(epoch: int, params: neural.ScorerParams) -> None:
        if dev is None:
            return
        gold = [frozenset(s.mentions) for s in dev]
        pred = [neural.predict(s, params, vocab, config) for s in dev]
        _, _, f1 = evaluation.strict_prf(gold, pred)
        print(f"epoch {epoch} dev_f1 {f1:.4f}")
        if f1 > best["f1"]:
            best.update(f1=f1, epoch=epoch, params=params.copy())

    params, vocab, info = neural.train(train, config, vocab=vocab, dev_hook=dev_hook)
    if info["skipped_nested"]:
        print(f"skipped_nested = {info['skipped_nested']}")
    if info["uncovered_dropped"]:
        print(f"uncovered_dropped = {info['uncovered_dropped']}")
    neural.save_checkpoint(ckpt_path + ".last", params, config, vocab)
    if best["params"] is not None:
        neural.save_checkpoint(ckpt_path, best["params"], config, vocab)
        print(f"best_epoch = {best['epoch']} best_dev_f1 = {best['f1']:.4f}")
    else:
        neural.save_checkpoint(ckpt_path, params, config, vocab)
    print(f"checkpoint = {ckpt_path}")
    return 0


def cmd_predict(args) -> int:
    params, config, vocab = neural.load_checkpoint(args.checkpoint)
    corpus = read_corpus(args.input, args.format)
    sentences = []
    for sent in corpus:
        pred = neural.predict(sent, params, vocab, config)
        sentences.append(corpus_mod.Sentence(sent.tokens, tuple(sorted(
            pred, key=lambda m: (m.fragments, m.entity_type))),
            sent.doc_id, sent.sent_index))
    write_corpus(Corpus(tuple(sentences)), args.output, "inline")
    return 0


def cmd_evaluate(args) -> int:
    gold = read_corpus(args.gold, args.format)
    pred = read_corpus(args.pred, args.format)
    report = evaluation.evaluate([frozenset(s.mentions) for s in gold],
                                 [frozenset(s.mentions) for s in pred])
    print(report.to_text())
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write(report.to_json() + "\n")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="disconer")
    parser.add_argument("--config", default=None, help="key = value config file")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--format", choices=("inline", "standoff", "tags"),
                        default="inline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats")
    p.add_argument("corpus")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("convert")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--to", choices=("inline", "tags"), default="inline")
    p.add_argument("--flatten", action="store_true")
    p.add_argument("--resample", choices=[m.value for m in ResampleMode], default=None)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("oracle-check")
    p.add_argument("corpus")
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("trace")
    p.add_argument("corpus")
    p.add_argument("--sentence", type=int, default=0)
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("train")
    p.add_argument("--train", default=None)
    p.add_argument("--dev", default=None)
    p.add_argument("--checkpoint", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate")
    p.add_argument("gold")
    p.add_argument("pred")
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_evaluate)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.seed is None:
        args.seed = 0
    try:
        return args.func(args)
    except (CorpusError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
