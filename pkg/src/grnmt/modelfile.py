"""Binary model serialization.

Layout (everything little-endian):

    magic   7 bytes  "GRNMT1\\0"
    version u16      currently 1
    kind    u16      1 = gated recurrent encoder, 2 = grConv encoder
    dims    5 x u32  d_emb, d_hidden, d_ctx, k_source, k_target
    count   u32      number of named tensors
    tensor records, each:
        name_len u16, name UTF-8 bytes,
        rank u8, dims rank x u32,
        payload float64 x prod(dims)

Every parameter name required by the encoder kind must appear exactly
once, shapes must agree with the header dims, and no trailing bytes are
tolerated, so a load either reproduces the saved model bit-exactly or
fails without partial state.
"""

import io
import struct

import numpy as np

from grnmt import decoder as dec
from grnmt import grconv, gru
from grnmt.model import GRCONV_ENC, RNN_ENC, TranslationModel

MAGIC = b"GRNMT1\x00"
VERSION = 1
KIND_TAGS = {RNN_ENC: 1, GRCONV_ENC: 2}
TAG_KINDS = {v: k for k, v in KIND_TAGS.items()}


class ModelFileError(ValueError):
    """Raised for bad magic, version, truncation, or inconsistent contents."""


def _expected_shapes(kind, d_emb, d_hidden, d_ctx, k_source, k_target):
    shapes = {"src_emb": (k_source, d_emb)}
    if kind == RNN_ENC:
        for n in ("W", "W_r", "W_z"):
            shapes[f"enc.{n}"] = (d_hidden, d_emb)
        for n in ("U", "U_r", "U_z"):
            shapes[f"enc.{n}"] = (d_hidden, d_hidden)
        for n in ("b", "b_r", "b_z"):
            shapes[f"enc.{n}"] = (d_hidden,)
    else:
        shapes["enc.W_l"] = (d_hidden, d_hidden)
        shapes["enc.W_r"] = (d_hidden, d_hidden)
        shapes["enc.G_l"] = (3, d_hidden)
        shapes["enc.G_r"] = (3, d_hidden)
        shapes["enc.U"] = (d_hidden, d_emb)
        shapes["enc.b"] = (d_hidden,)
        shapes["enc.g"] = (3,)
    for n in ("W", "W_r", "W_z"):
        shapes[f"dec.{n}"] = (d_hidden, d_emb)
    for n in ("U", "U_r", "U_z"):
        shapes[f"dec.{n}"] = (d_hidden, d_hidden)
    for n in ("b", "b_r", "b_z"):
        shapes[f"dec.{n}"] = (d_hidden,)
    for n in ("C", "C_r", "C_z", "V"):
        shapes[f"dec.{n}"] = (d_hidden, d_ctx)
    shapes["dec.O"] = (k_target, d_hidden)
    shapes["dec.o"] = (k_target,)
    shapes["dec.tgt_emb"] = (k_target, d_emb)
    return shapes


def _read_exact(f, n, what):
    data = f.read(n)
    if len(data) != n:
        raise ModelFileError(f"truncated model file while reading {what}")
    return data


def write_tensors(f, named):
    """Count-prefixed named tensor list, in sorted name order."""
    f.write(struct.pack("<I", len(named)))
    for name in sorted(named):
        arr = np.ascontiguousarray(named[name], dtype="<f8")
        encoded = name.encode("utf-8")
        f.write(struct.pack("<H", len(encoded)))
        f.write(encoded)
        f.write(struct.pack("<B", arr.ndim))
        for d in arr.shape:
            f.write(struct.pack("<I", d))
        f.write(arr.tobytes())


def read_tensors(f):
    (count,) = struct.unpack("<I", _read_exact(f, 4, "tensor count"))
    named = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", _read_exact(f, 2, "tensor name length"))
        name = _read_exact(f, name_len, "tensor name").decode("utf-8")
        if name in named:
            raise ModelFileError(f"duplicate tensor name {name!r}")
        (rank,) = struct.unpack("<B", _read_exact(f, 1, "tensor rank"))
        shape = tuple(struct.unpack("<I", _read_exact(f, 4, "tensor dim"))[0] for _ in range(rank))
        size = int(np.prod(shape, dtype=np.int64)) if shape else 1
        payload = _read_exact(f, size * 8, f"tensor {name!r} payload")
        named[name] = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(shape)
    return named


def write_model_to(f, model):
    named = model.named_params()
    f.write(MAGIC)
    f.write(struct.pack("<HH", VERSION, KIND_TAGS[model.encoder_kind]))
    f.write(
        struct.pack(
            "<5I",
            model.d_emb,
            model.d_hidden,
            model.dec.d_context,
            model.k_source,
            model.k_target,
        )
    )
    write_tensors(f, named)


def read_model_from(f):
    magic = f.read(len(MAGIC))
    if magic != MAGIC:
        raise ModelFileError("bad magic: not a model file")
    version, tag = struct.unpack("<HH", _read_exact(f, 4, "header"))
    if version != VERSION:
        raise ModelFileError(f"unsupported model file version {version}")
    if tag not in TAG_KINDS:
        raise ModelFileError(f"unknown encoder kind tag {tag}")
    kind = TAG_KINDS[tag]
    d_emb, d_hidden, d_ctx, k_source, k_target = struct.unpack("<5I", _read_exact(f, 20, "dims"))
    named = read_tensors(f)

    expected = _expected_shapes(kind, d_emb, d_hidden, d_ctx, k_source, k_target)
    missing = sorted(set(expected) - set(named))
    extra = sorted(set(named) - set(expected))
    if missing or extra:
        raise ModelFileError(f"model file tensor set mismatch (missing {missing}, unexpected {extra})")
    for name, shape in expected.items():
        if named[name].shape != shape:
            raise ModelFileError(f"tensor {name!r} has shape {named[name].shape}, expected {shape}")

    src_emb = gru.EmbeddingTable(table=named["src_emb"])
    if kind == RNN_ENC:
        enc = gru.GruParams(**{n: named[f"enc.{n}"] for n in ("W", "W_r", "W_z", "U", "U_r", "U_z", "b", "b_r", "b_z")})
    else:
        enc = grconv.GrConvParams(**{n: named[f"enc.{n}"] for n in ("W_l", "W_r", "G_l", "G_r", "U", "b", "g")})
    dparams = dec.DecoderParams(
        gru=gru.GruParams(**{n: named[f"dec.{n}"] for n in ("W", "W_r", "W_z", "U", "U_r", "U_z", "b", "b_r", "b_z")}),
        C=named["dec.C"],
        C_r=named["dec.C_r"],
        C_z=named["dec.C_z"],
        V=named["dec.V"],
        O=named["dec.O"],
        o=named["dec.o"],
        emb=gru.EmbeddingTable(table=named["dec.tgt_emb"]),
    )
    return TranslationModel(encoder_kind=kind, src_emb=src_emb, enc=enc, dec=dparams)


def write_model(path, model):
    buf = io.BytesIO()
    write_model_to(buf, model)
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def read_model(path):
    with open(path, "rb") as f:
        model = read_model_from(f)
        if f.read(1):
            raise ModelFileError("trailing bytes after model payload")
    return model
