"""Command-line surface: prepare, train, translate, evaluate, parse.

All commands are deterministic given their inputs and the configured
seed, exit 0 on success, and print a one-line diagnostic to stderr with
exit 1 on any error.
"""

import argparse
import os
import sys
from dataclasses import dataclass, fields

import numpy as np

from grnmt import bleu as bleu_mod
from grnmt import corpus
from grnmt.beamsearch import BeamConfig, beam_search, normalized_score
from grnmt.grconv import extract_tree, grconv_encode
from grnmt.model import GRCONV_ENC, init_model
from grnmt.modelfile import read_model, write_model
from grnmt.training import TrainConfig, checkpoint_load, trace_csv_lines, train

SOURCE_VOCAB = "source.vocab"
TARGET_VOCAB = "target.vocab"
SOURCE_IDS = "source.ids"
TARGET_IDS = "target.ids"


@dataclass
class RunConfig:
    """Flat key=value hyperparameter file; unknown keys are rejected.

    Defaults are desk-scale; the reference full-scale sizes (1000/2000
    hidden units, 620-dim embeddings, 30k vocabularies) remain
    expressible through the same keys.
    """

    encoder: str = "rnnenc"
    d_emb: int = 32
    d_h: int = 64
    batch_size: int = 32
    max_updates: int = 1000
    seed: int = 0
    checkpoint_interval: int = 0
    report_interval: int = 50
    beam_width: int = 10
    k_best: int = 1
    max_len: int = 30
    vocab_capacity: int = 30000
    window: int = 10
    threshold: float = 0.1

    @classmethod
    def parse(cls, path):
        casters = {f.name: type(f.default) for f in fields(cls)}
        values = {}
        with open(path, encoding="utf-8") as f:
            for lineno, raw in enumerate(f, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ValueError(f"{path}:{lineno}: expected key = value")
                key, _, value = line.partition("=")
                key = key.strip()
                if key not in casters:
                    raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
                if key in values:
                    raise ValueError(f"{path}:{lineno}: duplicate config key {key!r}")
                values[key] = casters[key](value.strip())
        return cls(**values)


def _read_lines(path):
    with open(path, encoding="utf-8") as f:
        return [line.rstrip("\n") for line in f]


def cmd_prepare(args):
    src_sentences = [corpus.tokenize(s) for s in _read_lines(args.source)]
    tgt_sentences = [corpus.tokenize(s) for s in _read_lines(args.target)]
    if not src_sentences or not tgt_sentences:
        raise ValueError("empty corpus file")
    if len(src_sentences) != len(tgt_sentences):
        raise ValueError(
            f"line count mismatch: {len(src_sentences)} source vs {len(tgt_sentences)} target"
        )
    src_vocab = corpus.build_vocab(src_sentences, args.capacity)
    tgt_vocab = corpus.build_vocab(tgt_sentences, args.capacity)
    pairs = [
        corpus.SentencePair.from_ids(src_vocab.encode(s), tgt_vocab.encode(t))
        for s, t in zip(src_sentences, tgt_sentences)
    ]
    kept = corpus.filter_pairs(pairs, args.max_len)
    os.makedirs(args.out_dir, exist_ok=True)
    src_vocab.save(os.path.join(args.out_dir, SOURCE_VOCAB))
    tgt_vocab.save(os.path.join(args.out_dir, TARGET_VOCAB))
    corpus.write_id_corpus(os.path.join(args.out_dir, SOURCE_IDS), [p.source for p in kept])
    corpus.write_id_corpus(os.path.join(args.out_dir, TARGET_IDS), [p.target for p in kept])
    print(f"pairs before filtering: {len(pairs)}")
    print(f"pairs after filtering: {len(kept)}")
    return 0


def _load_prepared(corpus_dir):
    src_vocab = corpus.Vocabulary.load(os.path.join(corpus_dir, SOURCE_VOCAB))
    tgt_vocab = corpus.Vocabulary.load(os.path.join(corpus_dir, TARGET_VOCAB))
    sources = corpus.read_id_corpus(os.path.join(corpus_dir, SOURCE_IDS))
    targets = corpus.read_id_corpus(os.path.join(corpus_dir, TARGET_IDS))
    if len(sources) != len(targets):
        raise ValueError("prepared corpus is misaligned")
    pairs = [corpus.SentencePair.from_ids(s, t) for s, t in zip(sources, targets) if s and t]
    return src_vocab, tgt_vocab, pairs


def cmd_train(args):
    cfg = RunConfig.parse(args.config) if args.config else RunConfig()
    src_vocab, tgt_vocab, pairs = _load_prepared(args.corpus_dir)
    if args.resume:
        model, state = checkpoint_load(args.resume)
    else:
        rng = np.random.default_rng(cfg.seed)
        model = init_model(cfg.encoder, src_vocab.size, tgt_vocab.size, cfg.d_emb, cfg.d_h, rng)
        state = None
    train_cfg = TrainConfig(
        batch_size=cfg.batch_size,
        max_updates=cfg.max_updates,
        seed=cfg.seed,
        checkpoint_interval=cfg.checkpoint_interval,
        report_interval=cfg.report_interval,
    )
    model, trace, state = train(model, pairs, train_cfg, state=state, checkpoint_path=args.model + ".ckpt")
    write_model(args.model, model)
    for line in trace_csv_lines(trace):
        print(line)
    return 0


def _vocab_dir_for(args):
    return args.corpus_dir if args.corpus_dir else os.path.dirname(os.path.abspath(args.model))


def _translation_lines(model, src_vocab, tgt_vocab, line, cfg, normalized=False):
    tokens = corpus.tokenize(line)
    if not tokens:
        return ["\t0.00\tempty"]
    hyps = beam_search(model, src_vocab.encode(tokens), cfg)
    out = []
    for hyp in hyps:
        words = tgt_vocab.decode([t for t in hyp.tokens if t != corpus.EOS_ID])
        text = f"{' '.join(words)}\t{-hyp.logp:.2f}"
        if normalized:
            text += f"\t{normalized_score(hyp):.4f}"
        if hyp.forced:
            text += "\tforced"
        out.append(text)
    return out


def cmd_translate(args):
    model = read_model(args.model)
    vocab_dir = _vocab_dir_for(args)
    src_vocab = corpus.Vocabulary.load(os.path.join(vocab_dir, SOURCE_VOCAB))
    tgt_vocab = corpus.Vocabulary.load(os.path.join(vocab_dir, TARGET_VOCAB))
    cfg = BeamConfig(
        width=args.beam_width,
        k_best=args.k_best,
        exclude_unk=not args.keep_unk,
        max_length=args.max_length,
    )
    for line in _read_lines(args.input):
        for out in _translation_lines(model, src_vocab, tgt_vocab, line, cfg, normalized=args.normalized):
            print(out)
    return 0


def cmd_evaluate(args):
    hyp_sentences = [corpus.tokenize(s) for s in _read_lines(args.hypotheses)]
    ref_sentences = [corpus.tokenize(s) for s in _read_lines(args.references)]
    if len(hyp_sentences) != len(ref_sentences):
        raise ValueError(
            f"line count mismatch: {len(hyp_sentences)} hypotheses vs {len(ref_sentences)} references"
        )
    if args.src:
        src_sentences = [corpus.tokenize(s) for s in _read_lines(args.src)]
        if len(src_sentences) != len(hyp_sentences):
            raise ValueError("line count mismatch between sources and hypotheses")
    else:
        src_sentences = [None] * len(hyp_sentences)
    pairs = [
        bleu_mod.EvalPair.build(h, r, source=s)
        for h, r, s in zip(hyp_sentences, ref_sentences, src_sentences)
    ]
    if args.no_unk_only:
        if not args.src:
            raise ValueError("--no-unk-only needs --src to count source unknowns")
        pairs = bleu_mod.no_unk_subset(pairs)
        if not pairs:
            raise ValueError("no pairs left after removing unknown-word sentences")
    print(f"BLEU = {bleu_mod.corpus_bleu(pairs):.4f} ({len(pairs)} pairs)")
    os.makedirs(args.out_dir, exist_ok=True)
    if args.by_length is not None:
        if args.axis in ("source", "both") and not args.src:
            raise ValueError(f"--axis {args.axis} needs --src for source lengths")
        points = bleu_mod.bleu_by_length(pairs, window=args.by_length, axis=args.axis)
        bleu_mod.write_curve_csv(os.path.join(args.out_dir, "bleu_by_length.csv"), points)
    if args.by_unk:
        if not args.src:
            raise ValueError("--by-unk needs --src to count source unknowns")
        points = bleu_mod.bleu_by_max_unk(pairs)
        bleu_mod.write_curve_csv(os.path.join(args.out_dir, "bleu_by_max_unk.csv"), points)
    return 0


def _dot_escape(text):
    return text.replace("\\", "\\\\").replace('"', '\\"')


def tree_dot(tree, tokens, name="merges"):
    """DOT rendering of a hard merge tree; leaves show the source tokens."""
    lines = [f"digraph {name} {{"]
    for pos, token in enumerate(tokens, start=1):
        lines.append(f'  leaf_{pos} [label="{_dot_escape(str(token))}" shape=box];')
    counter = [0]

    def emit(node):
        if node.is_leaf:
            return f"leaf_{node.index}"
        counter[0] += 1
        node_id = f"m{node.level}_{node.index}"
        lines.append(f'  {node_id} [label="L{node.level} {node.label}"];')
        for child in (node.left, node.right):
            lines.append(f"  {node_id} -> {emit(child)};")
        return node_id

    emit(tree.root)
    lines.append("}")
    return "\n".join(lines) + "\n"


def soft_dot(edges, tokens, name="gates"):
    """DOT rendering of the thresholded pyramid edges, weights to 3 decimals."""
    lines = [f"digraph {name} {{"]
    for pos, token in enumerate(tokens, start=1):
        lines.append(f'  p0_{pos} [label="{_dot_escape(str(token))}" shape=box];')
    seen = set()
    for e in edges:
        for t, j in (e.parent, e.child):
            if t > 0 and (t, j) not in seen:
                seen.add((t, j))
                lines.append(f'  p{t}_{j} [label="L{t}.{j}"];')
    for e in edges:
        pt, pj = e.parent
        ct, cj = e.child
        style = ' style=dashed' if e.kind == "center" else ""
        lines.append(f'  p{pt}_{pj} -> p{ct}_{cj} [label="{e.weight:.3f}"{style}];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def cmd_parse(args):
    model = read_model(args.model)
    if model.encoder_kind != GRCONV_ENC:
        raise ValueError("structure extraction needs a grConv-encoder model")
    vocab_dir = _vocab_dir_for(args)
    src_vocab = corpus.Vocabulary.load(os.path.join(vocab_dir, SOURCE_VOCAB))
    for idx, line in enumerate(_read_lines(args.input)):
        tokens = corpus.tokenize(line)
        if not tokens:
            continue
        _, record = grconv_encode(model.enc, model.src_emb, src_vocab.encode(tokens))
        if args.mode == "hard":
            tree = extract_tree(record, mode="hard")
            print(tree_dot(tree, tokens, name=f"merges_{idx}"), end="")
        else:
            edges = extract_tree(record, mode="soft", threshold=args.threshold)
            print(soft_dot(edges, tokens, name=f"gates_{idx}"), end="")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="grnmt", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="build vocabularies and an id-encoded corpus")
    p.add_argument("source")
    p.add_argument("target")
    p.add_argument("out_dir")
    p.add_argument("--capacity", type=int, default=30000)
    p.add_argument("--max-len", type=int, default=30, dest="max_len")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train a model on a prepared corpus")
    p.add_argument("corpus_dir")
    p.add_argument("model")
    p.add_argument("--config", default=None)
    p.add_argument("--resume", default=None, help="checkpoint to continue from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("translate", help="beam-search translate a text file")
    p.add_argument("model")
    p.add_argument("input")
    p.add_argument("--corpus-dir", default=None, dest="corpus_dir")
    p.add_argument("--beam-width", type=int, default=10, dest="beam_width")
    p.add_argument("--k-best", type=int, default=1, dest="k_best")
    p.add_argument("--max-length", type=int, default=None, dest="max_length")
    p.add_argument("--keep-unk", action="store_true", dest="keep_unk")
    p.add_argument("--normalized", action="store_true", help="also print the length-normalized score")
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("evaluate", help="corpus BLEU and diagnostic curves")
    p.add_argument("hypotheses")
    p.add_argument("references")
    p.add_argument("--src", default=None, help="source file for lengths and unknown counts")
    p.add_argument("--by-length", type=int, default=None, dest="by_length", metavar="WINDOW")
    p.add_argument("--by-unk", action="store_true", dest="by_unk")
    p.add_argument("--no-unk-only", action="store_true", dest="no_unk_only")
    p.add_argument("--axis", choices=("source", "reference", "both"), default="source")
    p.add_argument("--out-dir", default=".", dest="out_dir")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("parse", help="emit DOT structure for a grConv model")
    p.add_argument("model")
    p.add_argument("input")
    p.add_argument("--corpus-dir", default=None, dest="corpus_dir")
    p.add_argument("--mode", choices=("hard", "soft"), default="hard")
    p.add_argument("--threshold", type=float, default=0.1)
    p.set_defaults(func=cmd_parse)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # one-line diagnostic, nonzero exit
        print(f"grnmt: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
