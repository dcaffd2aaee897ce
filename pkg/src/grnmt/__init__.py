"""Desk-scale neural machine translation toolkit.

Two encoder-decoder models: a gated recurrent encoder and a gated
recursive convolutional encoder, with beam-search decoding, BLEU
diagnostics, and extraction of the parse-like structures induced by the
recursive encoder's gates.
"""

from grnmt.beamsearch import BeamConfig, Hypothesis, beam_search, greedy_decode, normalized_score
from grnmt.bleu import EvalPair, bleu_by_length, bleu_by_max_unk, corpus_bleu, no_unk_subset
from grnmt.corpus import SentencePair, Vocabulary, build_vocab, filter_pairs, gen_toy_task, make_batches
from grnmt.estimator import Seq2SeqTranslator
from grnmt.grconv import GateRecord, GrConvParams, MergeTree, extract_tree, grconv_encode
from grnmt.gru import EmbeddingTable, GruParams, encode_rnn, gru_step
from grnmt.model import TranslationModel, init_model
from grnmt.training import AdaDeltaState, TrainConfig, adadelta_update, checkpoint_load, checkpoint_save, train

__version__ = "0.1.0"

__all__ = [
    "AdaDeltaState",
    "BeamConfig",
    "EmbeddingTable",
    "EvalPair",
    "GateRecord",
    "GrConvParams",
    "GruParams",
    "Hypothesis",
    "MergeTree",
    "SentencePair",
    "Seq2SeqTranslator",
    "TrainConfig",
    "TranslationModel",
    "Vocabulary",
    "adadelta_update",
    "beam_search",
    "bleu_by_length",
    "bleu_by_max_unk",
    "build_vocab",
    "checkpoint_load",
    "checkpoint_save",
    "corpus_bleu",
    "encode_rnn",
    "extract_tree",
    "filter_pairs",
    "gen_toy_task",
    "grconv_encode",
    "greedy_decode",
    "gru_step",
    "init_model",
    "make_batches",
    "no_unk_subset",
    "normalized_score",
    "train",
]
