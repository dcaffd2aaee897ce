"""Scikit-learn style front end for the translation models.

Wraps vocabulary construction, training and beam-search decoding behind
fit/predict/score so the models compose with pipelines and grid search:

    >>> tr = Seq2SeqTranslator(encoder="rnnenc", max_updates=2000)
    >>> tr.fit(source_sentences, target_sentences)
    >>> tr.predict(["une phrase source"])

Sentences may be whitespace-tokenizable strings or token lists; predict
always returns space-joined strings.
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from grnmt import corpus
from grnmt.beamsearch import BeamConfig, beam_search
from grnmt.bleu import EvalPair, corpus_bleu
from grnmt.grconv import extract_tree, grconv_encode
from grnmt.model import GRCONV_ENC, encode_source, init_model
from grnmt.training import TrainConfig, train


def _tokens(sentence):
    return sentence.split() if isinstance(sentence, str) else list(sentence)


def _check_parallel(X, y):
    if y is None:
        raise ValueError("fitting a translator needs target sentences")
    if len(X) != len(y):
        raise ValueError(f"got {len(X)} source sentences but {len(y)} targets")
    if len(X) == 0:
        raise ValueError("cannot fit on an empty corpus")


class Seq2SeqTranslator(BaseEstimator):
    """Encoder-decoder translator with a scikit-learn estimator surface.

    Parameters mirror the run configuration: ``encoder`` selects the
    gated recurrent ("rnnenc") or gated recursive convolutional
    ("grconv") source encoder; the rest size the model and the
    training run.
    """

    def __init__(
        self,
        encoder="rnnenc",
        d_emb=32,
        d_hidden=64,
        vocab_capacity=30000,
        max_len=30,
        batch_size=32,
        max_updates=2000,
        report_interval=100,
        beam_width=10,
        exclude_unk=True,
        seed=0,
    ):
        self.encoder = encoder
        self.d_emb = d_emb
        self.d_hidden = d_hidden
        self.vocab_capacity = vocab_capacity
        self.max_len = max_len
        self.batch_size = batch_size
        self.max_updates = max_updates
        self.report_interval = report_interval
        self.beam_width = beam_width
        self.exclude_unk = exclude_unk
        self.seed = seed

    def fit(self, X, y):
        """Build vocabularies from the pairs and train the model."""
        _check_parallel(X, y)
        sources = [_tokens(s) for s in X]
        targets = [_tokens(t) for t in y]
        self.src_vocab_ = corpus.build_vocab(sources, self.vocab_capacity)
        self.tgt_vocab_ = corpus.build_vocab(targets, self.vocab_capacity)
        pairs = [
            corpus.SentencePair.from_ids(self.src_vocab_.encode(s), self.tgt_vocab_.encode(t))
            for s, t in zip(sources, targets)
            if s and t
        ]
        pairs = corpus.filter_pairs(pairs, self.max_len)
        if not pairs:
            raise ValueError("no usable pairs after length filtering")
        rng = np.random.default_rng(self.seed)
        model = init_model(
            self.encoder, self.src_vocab_.size, self.tgt_vocab_.size, self.d_emb, self.d_hidden, rng
        )
        cfg = TrainConfig(
            batch_size=self.batch_size,
            max_updates=self.max_updates,
            seed=self.seed,
            report_interval=self.report_interval,
        )
        self.model_, self.loss_trace_, _ = train(model, pairs, cfg)
        self.n_pairs_ = len(pairs)
        return self

    def _require_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError("this Seq2SeqTranslator instance is not fitted yet")

    def predict(self, X):
        """Best translation per sentence, as space-joined token strings."""
        self._require_fitted()
        cfg = BeamConfig(width=self.beam_width, k_best=1, exclude_unk=self.exclude_unk)
        out = []
        for sentence in X:
            tokens = _tokens(sentence)
            if not tokens:
                out.append("")
                continue
            best = beam_search(self.model_, self.src_vocab_.encode(tokens), cfg)[0]
            words = self.tgt_vocab_.decode([t for t in best.tokens if t != corpus.EOS_ID])
            out.append(" ".join(words))
        return out

    def score(self, X, y):
        """Corpus BLEU of the predictions against the references."""
        self._require_fitted()
        _check_parallel(X, y)
        hyps = self.predict(X)
        pairs = [
            EvalPair.build(_tokens(h), _tokens(r), source=_tokens(s))
            for h, r, s in zip(hyps, y, X)
        ]
        return corpus_bleu(pairs)

    def parse(self, X):
        """Hard merge trees induced by a fitted grConv encoder."""
        self._require_fitted()
        if self.model_.encoder_kind != GRCONV_ENC:
            raise ValueError("parse() needs encoder='grconv'")
        trees = []
        for sentence in X:
            tokens = _tokens(sentence)
            if not tokens:
                raise ValueError("cannot parse an empty sentence")
            _, record = grconv_encode(self.model_.enc, self.model_.src_emb, self.src_vocab_.encode(tokens))
            trees.append(extract_tree(record, mode="hard"))
        return trees

    def encode(self, X):
        """Context vectors for sentences, as an (n, d_hidden) array."""
        self._require_fitted()
        rows = []
        for sentence in X:
            tokens = _tokens(sentence)
            if not tokens:
                raise ValueError("cannot encode an empty sentence")
            context, _ = encode_source(self.model_, self.src_vocab_.encode(tokens))
            rows.append(context)
        return np.asarray(rows)
