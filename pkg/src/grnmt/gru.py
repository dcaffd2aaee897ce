"""Gated recurrent cell (reset/update gates) and the recurrent encoder.

The cell convention, with sigma the logistic sigmoid:

    r = sigma(W_r x + U_r h + b_r)
    z = sigma(W_z x + U_z h + b_z)
    c = tanh(W x + U (r * h) + b)
    h' = z * h + (1 - z) * c

All step functions broadcast over leading axes, so the same code path
serves a single (d,) vector and a (batch, d) matrix.  Backward passes
are hand-written reverse-mode derivatives validated against central
differences.
"""

from dataclasses import dataclass

import numpy as np

from grnmt.numerics import gaussian_init, orthogonal_init, sigmoid

EMBED_SIGMA = 0.01


@dataclass
class GruParams:
    """Weight collection for one gated recurrent cell."""

    W: np.ndarray
    W_r: np.ndarray
    W_z: np.ndarray
    U: np.ndarray
    U_r: np.ndarray
    U_z: np.ndarray
    b: np.ndarray
    b_r: np.ndarray
    b_z: np.ndarray

    @property
    def d_hidden(self):
        return self.W.shape[0]

    @property
    def d_input(self):
        return self.W.shape[1]

    def named(self, prefix=""):
        return {
            prefix + "W": self.W,
            prefix + "W_r": self.W_r,
            prefix + "W_z": self.W_z,
            prefix + "U": self.U,
            prefix + "U_r": self.U_r,
            prefix + "U_z": self.U_z,
            prefix + "b": self.b,
            prefix + "b_r": self.b_r,
            prefix + "b_z": self.b_z,
        }


@dataclass
class EmbeddingTable:
    """Token embeddings; row i is the vector for token id i."""

    table: np.ndarray

    @property
    def vocab_size(self):
        return self.table.shape[0]

    @property
    def d_emb(self):
        return self.table.shape[1]

    def lookup(self, ids):
        ids = np.asarray(ids)
        if ids.size and (ids.min() < 0 or ids.max() >= self.vocab_size):
            raise ValueError("token id out of range for embedding table")
        return self.table[ids]


def init_embedding(vocab_size, d_emb, rng):
    return EmbeddingTable(table=gaussian_init((vocab_size, d_emb), EMBED_SIGMA, rng))


def init_gru_params(d_input, d_hidden, rng):
    """Square recurrent matrices orthogonal with unit spectral radius,
    input matrices Gaussian(0.01), biases zero."""
    return GruParams(
        W=gaussian_init((d_hidden, d_input), EMBED_SIGMA, rng),
        W_r=gaussian_init((d_hidden, d_input), EMBED_SIGMA, rng),
        W_z=gaussian_init((d_hidden, d_input), EMBED_SIGMA, rng),
        U=orthogonal_init(d_hidden, 1.0, rng),
        U_r=orthogonal_init(d_hidden, 1.0, rng),
        U_z=orthogonal_init(d_hidden, 1.0, rng),
        b=np.zeros(d_hidden),
        b_r=np.zeros(d_hidden),
        b_z=np.zeros(d_hidden),
    )


def _check_step_dims(p, h_prev, x):
    if h_prev.shape[-1] != p.d_hidden:
        raise ValueError(f"hidden state dim {h_prev.shape[-1]} != cell dim {p.d_hidden}")
    if x.shape[-1] != p.d_input:
        raise ValueError(f"input dim {x.shape[-1]} != cell input dim {p.d_input}")


def gru_forward(p, h_prev, x, extra=None):
    """One cell step, returning the new state and the cache for backward.

    ``extra`` optionally adds (candidate, reset, update) pre-activation
    terms; the decoder injects its projected context this way.
    """
    h_prev = np.asarray(h_prev, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    _check_step_dims(p, h_prev, x)
    pre_r = x @ p.W_r.T + h_prev @ p.U_r.T + p.b_r
    pre_z = x @ p.W_z.T + h_prev @ p.U_z.T + p.b_z
    if extra is not None:
        e_c, e_r, e_z = extra
        pre_r = pre_r + e_r
        pre_z = pre_z + e_z
    r = sigmoid(pre_r)
    z = sigmoid(pre_z)
    rh = r * h_prev
    pre_c = x @ p.W.T + rh @ p.U.T + p.b
    if extra is not None:
        pre_c = pre_c + e_c
    c = np.tanh(pre_c)
    h = z * h_prev + (1.0 - z) * c
    cache = (x, h_prev, r, z, rh, c, extra is not None)
    return h, cache


def gru_step(p, h_prev, x, extra=None):
    """New hidden state for one step (forward only)."""
    h, _ = gru_forward(p, h_prev, x, extra)
    return h


def _mat_grad(dpre, x):
    # gradient of W for pre = x @ W.T, summed over all leading axes
    if dpre.ndim == 1:
        return np.outer(dpre, x)
    axes = list(range(dpre.ndim - 1))
    return np.tensordot(dpre, x, axes=(axes, axes))


def _vec_grad(dpre):
    if dpre.ndim == 1:
        return dpre.copy()
    return dpre.sum(axis=tuple(range(dpre.ndim - 1)))


def gru_backward(p, cache, dh):
    """Reverse-mode derivatives of one cell step.

    Returns (parameter gradients, d h_prev, d x, d extra) where d extra
    is the triple of gradients for the injected pre-activation terms
    (None if the forward pass had none).
    """
    x, h_prev, r, z, rh, c, had_extra = cache
    dh = np.asarray(dh, dtype=np.float64)
    if dh.shape != c.shape:
        raise ValueError(f"output gradient shape {dh.shape} != state shape {c.shape}")

    dz = dh * (h_prev - c)
    dc = dh * (1.0 - z)
    dh_prev = dh * z

    dpre_c = dc * (1.0 - c * c)
    dx = dpre_c @ p.W
    drh = dpre_c @ p.U
    dh_prev = dh_prev + drh * r
    dr = drh * h_prev

    dpre_z = dz * z * (1.0 - z)
    dx = dx + dpre_z @ p.W_z
    dh_prev = dh_prev + dpre_z @ p.U_z

    dpre_r = dr * r * (1.0 - r)
    dx = dx + dpre_r @ p.W_r
    dh_prev = dh_prev + dpre_r @ p.U_r

    grads = {
        "W": _mat_grad(dpre_c, x),
        "W_r": _mat_grad(dpre_r, x),
        "W_z": _mat_grad(dpre_z, x),
        "U": _mat_grad(dpre_c, rh),
        "U_r": _mat_grad(dpre_r, h_prev),
        "U_z": _mat_grad(dpre_z, h_prev),
        "b": _vec_grad(dpre_c),
        "b_r": _vec_grad(dpre_r),
        "b_z": _vec_grad(dpre_z),
    }
    dextra = (dpre_c, dpre_r, dpre_z) if had_extra else None
    return grads, dh_prev, dx, dextra


def rnn_encode_forward(p, emb, source, mask=None):
    """Fold the cell left-to-right from a zero state over embedded tokens.

    ``source`` is (T,) or (B, T) of token ids; ``mask`` (same shape)
    freezes each row's state once its true tokens are exhausted, so
    padding never leaks into the context.  Returns (context, cache).
    """
    source = np.asarray(source, dtype=np.int64)
    if source.size == 0 or source.shape[-1] == 0:
        raise ValueError("cannot encode an empty source sequence")
    x_all = emb.lookup(source)
    lead = source.shape[:-1]
    h = np.zeros(lead + (p.d_hidden,))
    steps = []
    for t in range(source.shape[-1]):
        h_new, cache = gru_forward(p, h, x_all[..., t, :])
        if mask is None:
            h = h_new
            m = None
        else:
            m = mask[..., t : t + 1]
            h = m * h_new + (1.0 - m) * h
        steps.append((cache, m))
    return h, (source, steps)


def rnn_encode_backward(p, emb, cache, dcontext):
    """Gradients of the encoder for a given context gradient.

    Returns a dict with the cell's parameter names plus "emb" for the
    embedding table.
    """
    source, steps = cache
    grads = {name: np.zeros_like(arr) for name, arr in p.named().items()}
    demb = np.zeros_like(emb.table)
    dh = np.asarray(dcontext, dtype=np.float64)
    for t in range(len(steps) - 1, -1, -1):
        step_cache, m = steps[t]
        if m is None:
            dh_new = dh
            dh_carry = 0.0
        else:
            dh_new = m * dh
            dh_carry = (1.0 - m) * dh
        g, dh_prev, dx, _ = gru_backward(p, step_cache, dh_new)
        for name in grads:
            grads[name] += g[name]
        np.add.at(demb, source[..., t], dx)
        dh = dh_prev + dh_carry
    grads["emb"] = demb
    return grads


def encode_rnn(p, emb, source):
    """Fixed-length context vector for one source id sequence."""
    context, _ = rnn_encode_forward(p, emb, source)
    return context
