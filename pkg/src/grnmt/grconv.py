"""Gated recursive convolutional encoder.

A binary merge pyramid over the source: level 0 holds one projected
vector per token, and every following level shrinks by one node.  Each
node blends a fresh rectifier merge of its two children with copies of
the children themselves, weighted by a three-way softmax gate:

    out = w_center * relu(W_l left + W_r right + b)
        + w_left * left + w_right * right

The gate weights of every node are recorded, which is what makes the
encoder's merge order readable as an unsupervised parse.
"""

from dataclasses import dataclass, field

import numpy as np

from grnmt.numerics import gaussian_init, orthogonal_init, relu, softmax

CENTER, LEFT, RIGHT = 0, 1, 2
_LABELS = ("center", "left", "right")

GRCONV_RADIUS = 0.4
_SIGMA = 0.01


@dataclass
class GrConvParams:
    """Weights of the recursive convolution: merge, gate, input projection."""

    W_l: np.ndarray
    W_r: np.ndarray
    G_l: np.ndarray
    G_r: np.ndarray
    U: np.ndarray
    b: np.ndarray
    g: np.ndarray

    @property
    def d_hidden(self):
        return self.W_l.shape[0]

    @property
    def d_emb(self):
        return self.U.shape[1]

    def named(self, prefix=""):
        return {
            prefix + "W_l": self.W_l,
            prefix + "W_r": self.W_r,
            prefix + "G_l": self.G_l,
            prefix + "G_r": self.G_r,
            prefix + "U": self.U,
            prefix + "b": self.b,
            prefix + "g": self.g,
        }


def init_grconv_params(d_emb, d_hidden, rng):
    """Merge matrices orthogonal with spectral radius 0.4, the rest Gaussian(0.01)."""
    return GrConvParams(
        W_l=orthogonal_init(d_hidden, GRCONV_RADIUS, rng),
        W_r=orthogonal_init(d_hidden, GRCONV_RADIUS, rng),
        G_l=gaussian_init((3, d_hidden), _SIGMA, rng),
        G_r=gaussian_init((3, d_hidden), _SIGMA, rng),
        U=gaussian_init((d_hidden, d_emb), _SIGMA, rng),
        b=np.zeros(d_hidden),
        g=np.zeros(3),
    )


@dataclass
class GateRecord:
    """Gate triples (w_center, w_left, w_right) for every pyramid node.

    ``levels[t-1]`` has shape (T - t, 3): one row per node of level t,
    node j (1-based) merging nodes j and j+1 of the level below.
    """

    length: int
    levels: list = field(default_factory=list)

    def node(self, level, index):
        """Gate triple at 1-based (level, index)."""
        return self.levels[level - 1][index - 1]

    def num_nodes(self):
        return sum(arr.shape[0] for arr in self.levels)

    def validate(self):
        if len(self.levels) != max(self.length - 1, 0):
            raise ValueError("gate record level count does not match sequence length")
        for t, arr in enumerate(self.levels, start=1):
            if arr.shape != (self.length - t, 3):
                raise ValueError(f"gate record level {t} has shape {arr.shape}, expected {(self.length - t, 3)}")


def gate_coefficients(p, h_left, h_right):
    """Softmax gate (w_center, w_left, w_right) for a candidate merge."""
    h_left = np.asarray(h_left, dtype=np.float64)
    h_right = np.asarray(h_right, dtype=np.float64)
    if h_left.shape[-1] != p.d_hidden or h_right.shape[-1] != p.d_hidden:
        raise ValueError("gate input dim does not match encoder dim")
    return softmax(h_left @ p.G_l.T + h_right @ p.G_r.T + p.g)


def _level_forward(p, h):
    # h: (..., n, d) with n >= 2
    left = h[..., :-1, :]
    right = h[..., 1:, :]
    pre = left @ p.W_l.T + right @ p.W_r.T + p.b
    htilde = relu(pre)
    omega = softmax(left @ p.G_l.T + right @ p.G_r.T + p.g)
    out = (
        omega[..., CENTER : CENTER + 1] * htilde
        + omega[..., LEFT : LEFT + 1] * left
        + omega[..., RIGHT : RIGHT + 1] * right
    )
    return out, (h, pre, htilde, omega)


def grconv_level(p, level):
    """One pyramid step: n node vectors in, n-1 out plus their gate triples."""
    level = np.asarray(level, dtype=np.float64)
    if level.ndim < 2 or level.shape[-2] < 2:
        raise ValueError("a pyramid level needs at least 2 nodes")
    if level.shape[-1] != p.d_hidden:
        raise ValueError("level dim does not match encoder dim")
    out, cache = _level_forward(p, level)
    return out, cache[3]


def _level_backward(p, cache, dout, grads):
    h, pre, htilde, omega = cache
    left = h[..., :-1, :]
    right = h[..., 1:, :]

    w_c = omega[..., CENTER : CENTER + 1]
    w_l = omega[..., LEFT : LEFT + 1]
    w_r = omega[..., RIGHT : RIGHT + 1]

    domega = np.stack(
        [
            np.sum(dout * htilde, axis=-1),
            np.sum(dout * left, axis=-1),
            np.sum(dout * right, axis=-1),
        ],
        axis=-1,
    )
    dhtilde = dout * w_c
    dleft = dout * w_l
    dright = dout * w_r

    # softmax jacobian: dg_pre = omega * (domega - <domega, omega>)
    inner = np.sum(domega * omega, axis=-1, keepdims=True)
    dg_pre = omega * (domega - inner)
    dleft = dleft + dg_pre @ p.G_l
    dright = dright + dg_pre @ p.G_r

    dpre = dhtilde * (pre > 0)
    dleft = dleft + dpre @ p.W_l
    dright = dright + dpre @ p.W_r

    axes = list(range(dpre.ndim - 1))
    grads["W_l"] += np.tensordot(dpre, left, axes=(axes, axes))
    grads["W_r"] += np.tensordot(dpre, right, axes=(axes, axes))
    grads["G_l"] += np.tensordot(dg_pre, left, axes=(axes, axes))
    grads["G_r"] += np.tensordot(dg_pre, right, axes=(axes, axes))
    grads["b"] += dpre.sum(axis=tuple(axes))
    grads["g"] += dg_pre.sum(axis=tuple(axes))

    dh = np.zeros_like(h)
    dh[..., :-1, :] += dleft
    dh[..., 1:, :] += dright
    return dh


def grconv_forward(p, emb, source):
    """Run the full pyramid; source is (T,) or (B, T) of token ids.

    Batched input requires equal true lengths (the pyramid shape depends
    on T), so callers group sequences by length.  Returns
    (context, gate arrays per level, cache).
    """
    source = np.asarray(source, dtype=np.int64)
    if source.size == 0 or source.shape[-1] == 0:
        raise ValueError("cannot encode an empty source sequence")
    x = emb.lookup(source)
    h = x @ p.U.T
    level_caches = []
    gate_levels = []
    while h.shape[-2] > 1:
        h, cache = _level_forward(p, h)
        level_caches.append(cache)
        gate_levels.append(cache[3])
    context = h[..., 0, :]
    return context, gate_levels, (source, x, level_caches)


def grconv_backward(p, emb, cache, dcontext):
    """Gradients of the pyramid encoder for a given context gradient."""
    source, x, level_caches = cache
    grads = {name: np.zeros_like(arr) for name, arr in p.named().items()}
    dh = np.asarray(dcontext, dtype=np.float64)[..., None, :]
    for lev_cache in reversed(level_caches):
        dh = _level_backward(p, lev_cache, dh, grads)
    axes = list(range(dh.ndim - 1))
    grads["U"] += np.tensordot(dh, x, axes=(axes, axes))
    dx = dh @ p.U
    demb = np.zeros_like(emb.table)
    np.add.at(demb, source, dx)
    grads["emb"] = demb
    return grads


def grconv_encode(p, emb, source):
    """Context vector and gate record for one source id sequence."""
    source = list(source)
    context, gate_levels, _ = grconv_forward(p, emb, source)
    return context, GateRecord(length=len(source), levels=[np.asarray(g) for g in gate_levels])


@dataclass
class TreeNode:
    """Node of a merge tree; leaves carry token positions (1-based)."""

    level: int
    index: int
    label: str = ""
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self):
        return self.left is None


@dataclass
class MergeTree:
    """Binary tree over source positions 1..T recovered from gate decisions."""

    root: TreeNode
    length: int

    def leaves(self):
        out = []
        self._walk(self.root, out, leaves_only=True)
        return out

    def internal_nodes(self):
        out = []
        self._walk(self.root, out, leaves_only=False)
        return out

    def _walk(self, node, out, leaves_only):
        if node.is_leaf:
            if leaves_only:
                out.append(node.index)
            return
        self._walk(node.left, out, leaves_only)
        if not leaves_only:
            out.append(node)
        self._walk(node.right, out, leaves_only)


@dataclass
class SoftEdge:
    """Pyramid edge retained by the threshold view of a gate record."""

    parent: tuple
    child: tuple
    kind: str
    weight: float


def _build_hard(rec, a, b):
    # span of tokens [a, b], 1-based inclusive
    if a == b:
        return TreeNode(level=0, index=a)
    t, j = b - a, a
    label = _LABELS[int(np.argmax(rec.node(t, j)))]
    if label == "right":
        # mass flows from the right child's span; token a attaches here
        return TreeNode(level=t, index=j, label=label, left=TreeNode(0, a), right=_build_hard(rec, a + 1, b))
    # center merges and left routing both keep the left child's span
    # intact, so the sibling's exclusive token b attaches at this node
    return TreeNode(level=t, index=j, label=label, left=_build_hard(rec, a, b - 1), right=TreeNode(0, b))


def extract_tree(rec, mode="hard", threshold=0.1):
    """Reduce a gate record to structure.

    hard: argmax routing from the apex down, yielding a spanning binary
    MergeTree with the dominant gate label on every internal node.
    soft: the weighted pyramid edges with gate weight strictly above
    ``threshold``, for visualization (a DAG, not reduced to a tree).
    """
    rec.validate()
    if mode == "hard":
        return MergeTree(root=_build_hard(rec, 1, rec.length), length=rec.length)
    if mode != "soft":
        raise ValueError(f"unknown extraction mode: {mode!r}")
    edges = []
    for t, arr in enumerate(rec.levels, start=1):
        for j in range(1, arr.shape[0] + 1):
            w_c, w_l, w_r = arr[j - 1]
            if w_l > threshold:
                edges.append(SoftEdge(parent=(t, j), child=(t - 1, j), kind="left", weight=float(w_l)))
            if w_r > threshold:
                edges.append(SoftEdge(parent=(t, j), child=(t - 1, j + 1), kind="right", weight=float(w_r)))
            if w_c > threshold:
                edges.append(SoftEdge(parent=(t, j), child=(t - 1, j), kind="center", weight=float(w_c)))
                edges.append(SoftEdge(parent=(t, j), child=(t - 1, j + 1), kind="center", weight=float(w_c)))
    return edges
