"""Vocabulary construction, sentence-pair filtering, batching, toy tasks.

Token ids 0, 1 and 2 are reserved for the unknown-word, beginning-of-
sequence and end-of-sequence markers.  Source sequences carry no
sentinel tokens; BOS/EOS framing of targets happens inside the loss.
"""

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

UNK_ID = 0
BOS_ID = 1
EOS_ID = 2
NUM_RESERVED = 3

UNK_TOKEN = "[UNK]"
BOS_TOKEN = "[BOS]"
EOS_TOKEN = "[EOS]"

_RESERVED_TOKENS = (UNK_TOKEN, BOS_TOKEN, EOS_TOKEN)


@dataclass
class Vocabulary:
    """Bidirectional token/id map with reserved UNK, BOS and EOS entries."""

    id_to_token: list = field(default_factory=lambda: list(_RESERVED_TOKENS))
    token_to_id: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.token_to_id:
            self.token_to_id = {t: i for i, t in enumerate(self.id_to_token)}

    @property
    def size(self):
        """Total entry count, reserved ids included."""
        return len(self.id_to_token)

    @property
    def capacity(self):
        """Count of non-reserved entries."""
        return len(self.id_to_token) - NUM_RESERVED

    def encode(self, tokens):
        """Map tokens to ids; out-of-vocabulary tokens map to UNK_ID."""
        return [self.token_to_id.get(t, UNK_ID) for t in tokens]

    def decode(self, ids):
        """Map ids back to tokens; raises on out-of-range ids."""
        out = []
        for i in ids:
            if not 0 <= i < len(self.id_to_token):
                raise ValueError(f"token id {i} out of range for vocabulary of size {self.size}")
            out.append(self.id_to_token[i])
        return out

    def save(self, path):
        """One non-reserved token per line; line number equals id - 3."""
        with open(path, "w", encoding="utf-8") as f:
            for token in self.id_to_token[NUM_RESERVED:]:
                f.write(token + "\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as f:
            tokens = [line.rstrip("\n") for line in f]
        return cls(id_to_token=list(_RESERVED_TOKENS) + tokens)


@dataclass
class SentencePair:
    """Id-encoded source/target pair with cached unknown-token counts."""

    source: list
    target: list
    source_unk_count: int = 0
    target_unk_count: int = 0

    @classmethod
    def from_ids(cls, source, target):
        return cls(
            source=list(source),
            target=list(target),
            source_unk_count=sum(1 for i in source if i == UNK_ID),
            target_unk_count=sum(1 for i in target if i == UNK_ID),
        )


def tokenize(line):
    """Whitespace tokenization; the corpus layer assumes pre-tokenized text."""
    return line.split()


def build_vocab(sentences, capacity):
    """Vocabulary of the ``capacity`` most frequent tokens.

    Frequency ties break by earlier first occurrence, and ids are
    assigned in descending frequency order starting at 3, so the result
    is deterministic for a given stream.
    """
    if capacity < 1:
        raise ValueError("vocabulary capacity must be >= 1")
    counts = Counter()
    first_seen = {}
    for sentence in sentences:
        for token in sentence:
            counts[token] += 1
            if token not in first_seen:
                first_seen[token] = len(first_seen)
    ranked = sorted(counts, key=lambda t: (-counts[t], first_seen[t]))
    kept = ranked[:capacity]
    return Vocabulary(id_to_token=list(_RESERVED_TOKENS) + kept)


def filter_pairs(pairs, max_len=30):
    """Keep pairs whose source and target both have at most max_len tokens."""
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    return [p for p in pairs if len(p.source) <= max_len and len(p.target) <= max_len]


@dataclass
class PaddedBatch:
    """One minibatch with explicit padding masks.

    Padded positions hold EOS_ID and a 0 mask entry, so mask sums equal
    the true token counts on each side.
    """

    pairs: list
    source: np.ndarray
    source_mask: np.ndarray
    target: np.ndarray
    target_mask: np.ndarray

    def __len__(self):
        return len(self.pairs)


def _pad(seqs):
    width = max(len(s) for s in seqs)
    ids = np.full((len(seqs), width), EOS_ID, dtype=np.int64)
    mask = np.zeros((len(seqs), width), dtype=np.float64)
    for i, s in enumerate(seqs):
        ids[i, : len(s)] = s
        mask[i, : len(s)] = 1.0
    return ids, mask


def make_batches(pairs, batch_size, rng):
    """Yield PaddedBatch objects covering a seeded random permutation of pairs."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    order = rng.permutation(len(pairs))
    for start in range(0, len(pairs), batch_size):
        chunk = [pairs[i] for i in order[start : start + batch_size]]
        src, src_mask = _pad([p.source for p in chunk])
        tgt, tgt_mask = _pad([p.target for p in chunk])
        yield PaddedBatch(pairs=chunk, source=src, source_mask=src_mask, target=tgt, target_mask=tgt_mask)


def gen_toy_task(kind, vocab_size, len_range, count, rng):
    """Synthetic copy/reverse pairs over ids 3 .. vocab_size + 2.

    A desk-scale stand-in for a parallel corpus: sources are uniform
    random, targets are the source either copied or reversed.
    """
    if kind not in ("copy", "reverse"):
        raise ValueError(f"unknown toy task kind: {kind!r}")
    if vocab_size < 2:
        raise ValueError("toy task needs vocab_size >= 2")
    lo, hi = len_range
    if lo > hi or lo < 1:
        raise ValueError(f"bad length range: {len_range}")
    pairs = []
    for _ in range(count):
        length = int(rng.integers(lo, hi + 1))
        source = (NUM_RESERVED + rng.integers(0, vocab_size, size=length)).tolist()
        target = source[::-1] if kind == "reverse" else list(source)
        pairs.append(SentencePair.from_ids(source, target))
    return pairs


def toy_vocab(vocab_size):
    """Vocabulary matching gen_toy_task ids: token "w<i>" has id i."""
    return Vocabulary(
        id_to_token=list(_RESERVED_TOKENS) + [f"w{i}" for i in range(NUM_RESERVED, NUM_RESERVED + vocab_size)]
    )


def read_corpus(path):
    """Token sequences from a UTF-8 text file, one sentence per line."""
    with open(path, encoding="utf-8") as f:
        return [tokenize(line.rstrip("\n")) for line in f]


def read_id_corpus(path):
    """Id sequences from a text file of space-separated integers."""
    with open(path, encoding="utf-8") as f:
        return [[int(tok) for tok in line.split()] for line in f]


def write_id_corpus(path, sequences):
    with open(path, "w", encoding="utf-8") as f:
        for seq in sequences:
            f.write(" ".join(str(i) for i in seq) + "\n")
