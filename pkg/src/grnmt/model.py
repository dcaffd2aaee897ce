"""Encoder-decoder composition: parameter registry, batch loss, gradients.

A model is one encoder (gated recurrent or recursive convolutional)
plus the shared decoder.  Everything a batch step needs lives here:
grouping sources for the pyramid encoder, masked recurrent encoding,
and stitching the decoder's context gradient back into the encoder.
"""

from dataclasses import dataclass

import numpy as np

from grnmt import decoder as dec
from grnmt import grconv, gru

RNN_ENC = "rnnenc"
GRCONV_ENC = "grconv"
ENCODER_KINDS = (RNN_ENC, GRCONV_ENC)


@dataclass
class TranslationModel:
    encoder_kind: str
    src_emb: gru.EmbeddingTable
    enc: object
    dec: dec.DecoderParams

    @property
    def d_hidden(self):
        return self.enc.d_hidden

    @property
    def d_emb(self):
        return self.src_emb.d_emb

    @property
    def k_source(self):
        return self.src_emb.vocab_size

    @property
    def k_target(self):
        return self.dec.k_target

    def named_params(self):
        out = {"src_emb": self.src_emb.table}
        out.update(self.enc.named("enc."))
        out.update(self.dec.named("dec."))
        return out


def init_model(encoder_kind, k_source, k_target, d_emb, d_hidden, rng):
    """Fresh model; the generator stream fixes every tensor, so a seed
    reproduces the initialization exactly."""
    if encoder_kind not in ENCODER_KINDS:
        raise ValueError(f"unknown encoder kind: {encoder_kind!r}")
    src_emb = gru.init_embedding(k_source, d_emb, rng)
    if encoder_kind == RNN_ENC:
        enc = gru.init_gru_params(d_emb, d_hidden, rng)
    else:
        enc = grconv.init_grconv_params(d_emb, d_hidden, rng)
    d_ctx = d_hidden
    dparams = dec.init_decoder_params(k_target, d_emb, d_hidden, d_ctx, rng)
    return TranslationModel(encoder_kind=encoder_kind, src_emb=src_emb, enc=enc, dec=dparams)


def encode_source(model, source):
    """Context vector for one source; grConv models also return gates."""
    if model.encoder_kind == RNN_ENC:
        return gru.encode_rnn(model.enc, model.src_emb, source), None
    context, record = grconv.grconv_encode(model.enc, model.src_emb, source)
    return context, record


def _merge_grads(total, part, prefix):
    for name, arr in part.items():
        key = "src_emb" if name == "emb" else prefix + name
        if key in total:
            total[key] += arr
        else:
            total[key] = arr


def batch_loss_and_grads(model, pairs):
    """Summed nll, token count, and parameter gradients for one batch.

    Gradients are of the *mean* per-token loss, matching what the
    training loop feeds the optimizer.
    """
    sources = [p.source for p in pairs]
    targets = [p.target for p in pairs]
    batch = len(pairs)

    if model.encoder_kind == RNN_ENC:
        ids = np.full((batch, max(len(s) for s in sources)), 0, dtype=np.int64)
        mask = np.zeros_like(ids, dtype=np.float64)
        for i, s in enumerate(sources):
            ids[i, : len(s)] = s
            mask[i, : len(s)] = 1.0
        contexts, enc_cache = gru.rnn_encode_forward(model.enc, model.src_emb, ids, mask)
    else:
        groups = {}
        for i, s in enumerate(sources):
            groups.setdefault(len(s), []).append(i)
        contexts = np.zeros((batch, model.d_hidden))
        enc_cache = []
        for length, idx in sorted(groups.items()):
            mat = np.asarray([sources[i] for i in idx], dtype=np.int64)
            ctx, _, cache = grconv.grconv_forward(model.enc, model.src_emb, mat)
            contexts[idx] = ctx
            enc_cache.append((idx, cache))

    loss_sum, token_count, dec_cache = dec.nll_forward(model.dec, contexts, targets)
    scale = 1.0 / token_count
    dec_grads, dcontexts = dec.nll_backward(model.dec, dec_cache, scale=scale)

    grads = {}
    _merge_grads(grads, dec_grads, "dec.")
    if model.encoder_kind == RNN_ENC:
        enc_grads = gru.rnn_encode_backward(model.enc, model.src_emb, enc_cache, dcontexts)
        _merge_grads(grads, enc_grads, "enc.")
    else:
        for idx, cache in enc_cache:
            enc_grads = grconv.grconv_backward(model.enc, model.src_emb, cache, dcontexts[idx])
            _merge_grads(grads, enc_grads, "enc.")
    return loss_sum, token_count, grads


def model_nll(model, pairs):
    """Mean per-token nll of a set of pairs (no gradients)."""
    total = 0.0
    tokens = 0.0
    for p in pairs:
        context, _ = encode_source(model, p.source)
        total += dec.sequence_nll(model.dec, context, p.target)
        tokens += len(p.target) + 1
    return total / tokens


def flatten_params(named):
    """Concatenate named tensors in sorted-name order into one vector."""
    names = sorted(named)
    vec = np.concatenate([named[n].ravel() for n in names])
    return vec, names


def unflatten_into(named, names, vec):
    """Write a flat vector back into the named tensors, in the same order."""
    pos = 0
    for n in names:
        arr = named[n]
        arr.flat[:] = vec[pos : pos + arr.size]
        pos += arr.size
    if pos != vec.size:
        raise ValueError("flat vector length does not match parameter count")
