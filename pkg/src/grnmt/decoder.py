"""Target-side generator: gated recurrent cell conditioned on the context.

The source context enters every step, not just the first: projections
C ctx, C_r ctx, C_z ctx are added to the candidate / reset / update
pre-activations, and the initial hidden state is tanh(V ctx).  The
output layer is a plain softmax over the target vocabulary.
"""

from dataclasses import dataclass

import numpy as np

from grnmt.corpus import BOS_ID, EOS_ID
from grnmt.gru import EmbeddingTable, GruParams, _mat_grad, _vec_grad, gru_backward, gru_forward, init_embedding, init_gru_params
from grnmt.numerics import gaussian_init, log_softmax, softmax

_SIGMA = 0.01


@dataclass
class DecoderParams:
    """Decoder cell plus context-injection, init, and output weights."""

    gru: GruParams
    C: np.ndarray
    C_r: np.ndarray
    C_z: np.ndarray
    V: np.ndarray
    O: np.ndarray
    o: np.ndarray
    emb: EmbeddingTable

    @property
    def d_hidden(self):
        return self.gru.d_hidden

    @property
    def d_context(self):
        return self.C.shape[1]

    @property
    def k_target(self):
        return self.O.shape[0]

    def named(self, prefix="dec."):
        out = self.gru.named(prefix)
        out.update(
            {
                prefix + "C": self.C,
                prefix + "C_r": self.C_r,
                prefix + "C_z": self.C_z,
                prefix + "V": self.V,
                prefix + "O": self.O,
                prefix + "o": self.o,
                prefix + "tgt_emb": self.emb.table,
            }
        )
        return out


def init_decoder_params(k_target, d_emb, d_hidden, d_context, rng):
    return DecoderParams(
        gru=init_gru_params(d_emb, d_hidden, rng),
        C=gaussian_init((d_hidden, d_context), _SIGMA, rng),
        C_r=gaussian_init((d_hidden, d_context), _SIGMA, rng),
        C_z=gaussian_init((d_hidden, d_context), _SIGMA, rng),
        V=gaussian_init((d_hidden, d_context), _SIGMA, rng),
        O=gaussian_init((k_target, d_hidden), _SIGMA, rng),
        o=np.zeros(k_target),
        emb=init_embedding(k_target, d_emb, rng),
    )


@dataclass
class DecoderState:
    """Per-sentence decoding state; a value, freely copyable.

    The context projections are constant for a sentence, so they are
    computed once here and reused by every step.
    """

    hidden: np.ndarray
    context: np.ndarray
    ctx_c: np.ndarray
    ctx_r: np.ndarray
    ctx_z: np.ndarray


def init_state(p, context):
    """Fresh state with hidden = tanh(V context)."""
    context = np.asarray(context, dtype=np.float64)
    if context.shape[-1] != p.d_context:
        raise ValueError(f"context dim {context.shape[-1]} != decoder context dim {p.d_context}")
    return DecoderState(
        hidden=np.tanh(context @ p.V.T),
        context=context,
        ctx_c=context @ p.C.T,
        ctx_r=context @ p.C_r.T,
        ctx_z=context @ p.C_z.T,
    )


def decoder_step(p, state, y_prev):
    """Advance one token; returns the new state and the output logits."""
    if not 0 <= y_prev < p.k_target:
        raise ValueError(f"previous token id {y_prev} out of range")
    x = p.emb.table[y_prev]
    h, _ = gru_forward(p.gru, state.hidden, x, extra=(state.ctx_c, state.ctx_r, state.ctx_z))
    logits = h @ p.O.T + p.o
    new_state = DecoderState(
        hidden=h, context=state.context, ctx_c=state.ctx_c, ctx_r=state.ctx_r, ctx_z=state.ctx_z
    )
    return new_state, logits


def step_log_probs(p, state, y_prev):
    """Convenience wrapper: new state and log token distribution."""
    new_state, logits = decoder_step(p, state, y_prev)
    return new_state, log_softmax(logits)


def teacher_arrays(targets):
    """Shifted input/output id matrices and loss mask for teacher forcing.

    Row i of the input starts with BOS followed by the target tokens;
    the output row is the target tokens followed by EOS.  The mask
    covers each row's true tokens plus its EOS.
    """
    if any(len(t) == 0 for t in targets):
        raise ValueError("cannot score an empty target sequence")
    width = max(len(t) for t in targets) + 1
    y_in = np.full((len(targets), width), EOS_ID, dtype=np.int64)
    y_out = np.full((len(targets), width), EOS_ID, dtype=np.int64)
    mask = np.zeros((len(targets), width), dtype=np.float64)
    y_in[:, 0] = BOS_ID
    for i, t in enumerate(targets):
        y_in[i, 1 : len(t) + 1] = t
        y_out[i, : len(t)] = t
        mask[i, : len(t) + 1] = 1.0
    return y_in, y_out, mask


def nll_forward(p, contexts, targets):
    """Teacher-forced negative log-likelihood of a batch of targets.

    ``contexts`` is (B, d_ctx) and ``targets`` a list of id sequences.
    Returns (total nll in nats, token count, cache); the total sums the
    masked per-token terms, EOS included.
    """
    contexts = np.atleast_2d(np.asarray(contexts, dtype=np.float64))
    y_in, y_out, mask = teacher_arrays(targets)
    state = init_state(p, contexts)
    h = state.hidden
    steps = []
    total = 0.0
    rows = np.arange(len(targets))
    for t in range(y_in.shape[1]):
        x = p.emb.table[y_in[:, t]]
        h_new, cell_cache = gru_forward(p.gru, h, x, extra=(state.ctx_c, state.ctx_r, state.ctx_z))
        logits = h_new @ p.O.T + p.o
        logp = log_softmax(logits)
        total -= float(np.sum(logp[rows, y_out[:, t]] * mask[:, t]))
        steps.append((cell_cache, h_new, softmax(logits)))
        h = h_new
    cache = (contexts, state, y_in, y_out, mask, steps)
    return total, float(mask.sum()), cache


def nll_backward(p, cache, scale=1.0):
    """Gradients of scale * total_nll for every decoder parameter.

    Returns (grads, dcontexts) where dcontexts is (B, d_ctx), ready to
    feed the encoder's backward pass.
    """
    contexts, state, y_in, y_out, mask, steps = cache
    grads = {name: np.zeros_like(arr) for name, arr in p.gru.named("").items()}
    dO = np.zeros_like(p.O)
    do = np.zeros_like(p.o)
    demb = np.zeros_like(p.emb.table)
    dctx_c = np.zeros_like(state.ctx_c)
    dctx_r = np.zeros_like(state.ctx_r)
    dctx_z = np.zeros_like(state.ctx_z)

    rows = np.arange(y_in.shape[0])
    dh = np.zeros_like(state.hidden)
    for t in range(len(steps) - 1, -1, -1):
        cell_cache, h_new, probs = steps[t]
        dlogits = probs * mask[:, t : t + 1]
        dlogits[rows, y_out[:, t]] -= mask[:, t]
        dlogits *= scale
        dO += dlogits.T @ h_new
        do += dlogits.sum(axis=0)
        dh = dh + dlogits @ p.O
        g, dh, dx, dextra = gru_backward(p.gru, cell_cache, dh)
        for name in g:
            grads[name] += g[name]
        np.add.at(demb, y_in[:, t], dx)
        dctx_c += dextra[0]
        dctx_r += dextra[1]
        dctx_z += dextra[2]

    # initial hidden = tanh(contexts @ V.T)
    dpre0 = dh * (1.0 - state.hidden * state.hidden)
    dcontexts = dpre0 @ p.V + dctx_c @ p.C + dctx_r @ p.C_r + dctx_z @ p.C_z

    out = {f"{k}": v for k, v in grads.items()}
    out["C"] = _mat_grad(dctx_c, contexts)
    out["C_r"] = _mat_grad(dctx_r, contexts)
    out["C_z"] = _mat_grad(dctx_z, contexts)
    out["V"] = _mat_grad(dpre0, contexts)
    out["O"] = dO
    out["o"] = do
    out["tgt_emb"] = demb
    return out, dcontexts


def sequence_nll(p, context, target):
    """Total nats assigned to one target sequence (its EOS included)."""
    target = list(target)
    if not target:
        raise ValueError("cannot score an empty target sequence")
    total, _, _ = nll_forward(p, np.asarray(context)[None, :], [target])
    return total
