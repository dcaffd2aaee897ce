"""Beam-search decoding with unknown-word exclusion and width decay.

The search expands on raw cumulative log-probability; each time an
EOS-terminated candidate ranks inside the current top-width set it
retires to the finished pool and the live width drops by one, until the
width reaches zero or the length cap is hit.  Only the final ranking of
the finished pool uses length-normalized scores.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from grnmt.corpus import BOS_ID, EOS_ID, UNK_ID
from grnmt.decoder import decoder_step, init_state
from grnmt.model import encode_source
from grnmt.numerics import log_softmax


@dataclass
class BeamConfig:
    """Search knobs; width 10 and UNK exclusion follow the reference setup."""

    width: int = 10
    max_length: int | None = None
    exclude_unk: bool = True
    k_best: int = 10

    def __post_init__(self):
        if self.width < 1:
            raise ValueError("beam width must be >= 1")
        if self.max_length is not None and self.max_length < 1:
            raise ValueError("max output length must be >= 1")
        if self.k_best < 1:
            raise ValueError("k_best must be >= 1")


@dataclass
class Hypothesis:
    """Partial or finished translation; tokens exclude BOS."""

    tokens: tuple = ()
    logp: float = 0.0
    state: object = None
    finished: bool = False
    forced: bool = field(default=False)


def normalized_score(h):
    """Raw log-probability divided by token count, EOS counted."""
    if len(h.tokens) == 0:
        raise ValueError("cannot length-normalize an empty hypothesis")
    return h.logp / len(h.tokens)


def default_max_length(source_len):
    # guard absent from the reference setup; generous for desk-scale data
    return 3 * source_len + 10


def _step_scores(dec_params, hyp, exclude_unk):
    prev = hyp.tokens[-1] if hyp.tokens else BOS_ID
    new_state, logits = decoder_step(dec_params, hyp.state, prev)
    if exclude_unk:
        logits = logits.copy()
        logits[UNK_ID] = -np.inf
    return new_state, log_softmax(logits)


def _rank_key(h):
    return (-h.logp, h.tokens)


def beam_search(model, source, cfg=None):
    """Up to k_best finished hypotheses, best normalized score first."""
    cfg = cfg or BeamConfig()
    source = list(source)
    if not source:
        raise ValueError("cannot translate an empty source")
    max_length = cfg.max_length if cfg.max_length is not None else default_max_length(len(source))

    context, _ = encode_source(model, source)
    live = [Hypothesis(state=init_state(model.dec, context))]
    finished = []
    width = cfg.width

    for _ in range(max_length):
        if not live or width == 0:
            break
        candidates = []
        for hyp in live:
            new_state, logp = _step_scores(model.dec, hyp, cfg.exclude_unk)
            for token, lp in enumerate(logp):
                if not np.isfinite(lp):
                    continue
                candidates.append(
                    Hypothesis(tokens=hyp.tokens + (token,), logp=hyp.logp + float(lp), state=new_state)
                )
        candidates.sort(key=_rank_key)
        live = []
        for cand in candidates[:width]:
            if cand.tokens[-1] == EOS_ID:
                finished.append(replace(cand, state=None, finished=True))
                width -= 1
            else:
                live.append(cand)
        live = live[:width]

    for hyp in live[:width]:
        finished.append(replace(hyp, state=None, finished=True, forced=True))

    finished.sort(key=lambda h: (-normalized_score(h), h.tokens))
    return finished[: cfg.k_best]


def greedy_decode(model, source, max_length=None, exclude_unk=False):
    """Stepwise argmax decoding; the width-1 degenerate case of the beam."""
    source = list(source)
    if not source:
        raise ValueError("cannot translate an empty source")
    if max_length is None:
        max_length = default_max_length(len(source))
    context, _ = encode_source(model, source)
    hyp = Hypothesis(state=init_state(model.dec, context))
    for _ in range(max_length):
        new_state, logp = _step_scores(model.dec, hyp, exclude_unk)
        token = int(np.argmax(logp))
        hyp = Hypothesis(tokens=hyp.tokens + (token,), logp=hyp.logp + float(logp[token]), state=new_state)
        if token == EOS_ID:
            return replace(hyp, state=None, finished=True)
    return replace(hyp, state=None, finished=True, forced=True)
