"""Corpus BLEU and the length / unknown-word diagnostic curves.

Single-reference, corpus-level BLEU: clipped n-gram counts are summed
over the whole set before any ratio is taken, the geometric mean runs
over orders 1..4, and the brevity penalty is exp(min(0, 1 - r/c)).  A
zero precision at any order zeroes the score; no smoothing.
"""

import math
from collections import Counter
from dataclasses import dataclass

from grnmt.corpus import UNK_ID, UNK_TOKEN


def _is_unk(token):
    return token == UNK_TOKEN or token == UNK_ID


@dataclass
class EvalPair:
    """One scored hypothesis with the metadata the curves bucket on."""

    hypothesis: list
    reference: list
    source_length: int = 0
    source_unk_count: int = 0
    reference_unk_count: int = 0

    @classmethod
    def build(cls, hypothesis, reference, source=None):
        """Counts unknown markers (id 0 or the [UNK] literal) itself."""
        source = source if source is not None else []
        return cls(
            hypothesis=list(hypothesis),
            reference=list(reference),
            source_length=len(source),
            source_unk_count=sum(1 for t in source if _is_unk(t)),
            reference_unk_count=sum(1 for t in reference if _is_unk(t)),
        )


def _ngrams(tokens, n):
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu_details(pairs, max_n=4):
    """(bleu, per-order precisions, brevity penalty, hyp length, ref length)."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("cannot score an empty pair list")
    matches = [0] * max_n
    totals = [0] * max_n
    hyp_len = 0
    ref_len = 0
    for p in pairs:
        hyp_len += len(p.hypothesis)
        ref_len += len(p.reference)
        for n in range(1, max_n + 1):
            hyp_counts = _ngrams(p.hypothesis, n)
            ref_counts = _ngrams(p.reference, n)
            totals[n - 1] += sum(hyp_counts.values())
            matches[n - 1] += sum(min(c, ref_counts[g]) for g, c in hyp_counts.items())
    precisions = [m / t if t > 0 else 0.0 for m, t in zip(matches, totals)]
    if hyp_len == 0 or any(p == 0.0 for p in precisions):
        return 0.0, precisions, 0.0, hyp_len, ref_len
    bp = math.exp(min(0.0, 1.0 - ref_len / hyp_len))
    bleu = bp * math.exp(sum(math.log(p) for p in precisions) / max_n)
    return bleu, precisions, bp, hyp_len, ref_len


def corpus_bleu(pairs, max_n=4):
    """Corpus BLEU in [0, 1]."""
    return bleu_details(pairs, max_n)[0]


def _axis_lengths(pair, axis):
    if axis == "source":
        return (pair.source_length,)
    if axis == "reference":
        return (len(pair.reference),)
    if axis == "both":
        return (pair.source_length, len(pair.reference))
    raise ValueError(f"unknown axis: {axis!r}")


def bleu_by_length(pairs, window=10, axis="source"):
    """BLEU over a sliding length window: one point per bucket start L,
    scoring the pairs whose axis length(s) fall in [L, L + window - 1].

    Returns (L, bleu, bucket_size) tuples for nonempty buckets only;
    each pair lands in exactly ``window`` consecutive buckets per axis.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    pairs = list(pairs)
    if not pairs:
        return []
    lengths = [l for p in pairs for l in _axis_lengths(p, axis)]
    points = []
    for start in range(min(lengths) - window + 1, max(lengths) + 1):
        bucket = [
            p for p in pairs if all(start <= l <= start + window - 1 for l in _axis_lengths(p, axis))
        ]
        if bucket:
            points.append((start, corpus_bleu(bucket), len(bucket)))
    return points


def bleu_by_max_unk(pairs):
    """BLEU over the pairs with fewer than m source unknowns, m = 1..max+1."""
    pairs = list(pairs)
    if not pairs:
        return []
    top = max(p.source_unk_count for p in pairs)
    points = []
    for m in range(1, top + 2):
        subset = [p for p in pairs if p.source_unk_count < m]
        if subset:
            points.append((m, corpus_bleu(subset), len(subset)))
    return points


def no_unk_subset(pairs):
    """Pairs whose source and reference are both free of unknowns."""
    return [p for p in pairs if p.source_unk_count == 0 and p.reference_unk_count == 0]


def write_curve_csv(path, points):
    with open(path, "w", encoding="utf-8") as f:
        f.write("x,value,bucket_size\n")
        for x, value, size in points:
            f.write(f"{x},{value:.6f},{size}\n")
