"""AdaDelta optimization, the minibatch loop, and checkpointing.

Batch order is derived statelessly: epoch e uses a generator seeded
with (seed, e), so a run can be checkpointed at any update and resumed
bit-exactly by replaying the epoch permutation and skipping consumed
batches.
"""

import io
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from grnmt.corpus import make_batches
from grnmt.model import batch_loss_and_grads
from grnmt.modelfile import ModelFileError, _read_exact, read_model_from, read_tensors, write_model_to, write_tensors

ADADELTA_RHO = 0.95
ADADELTA_EPS = 1e-6
CLIP_NORM = 1.0

CKPT_MAGIC = b"GRNMTCK\x00"
CKPT_VERSION = 1


@dataclass
class AdaDeltaState:
    """Running averages E[g^2] and E[dx^2], one entry per parameter."""

    sq_grad: dict
    sq_delta: dict
    rho: float = ADADELTA_RHO
    eps: float = ADADELTA_EPS

    @classmethod
    def fresh(cls, params, rho=ADADELTA_RHO, eps=ADADELTA_EPS):
        return cls(
            sq_grad={n: np.zeros_like(a) for n, a in params.items()},
            sq_delta={n: np.zeros_like(a) for n, a in params.items()},
            rho=rho,
            eps=eps,
        )


def adadelta_update(state, params, grads):
    """One AdaDelta step, elementwise over every named parameter.

    Mutates the parameter arrays and accumulators in place and returns
    them for convenience.
    """
    if set(params) != set(grads) or set(params) != set(state.sq_grad):
        raise ValueError("parameter, gradient and accumulator name sets differ")
    rho, eps = state.rho, state.eps
    for name in sorted(params):
        g = grads[name]
        if g.shape != params[name].shape:
            raise ValueError(f"gradient shape mismatch for {name!r}")
        eg = state.sq_grad[name]
        ex = state.sq_delta[name]
        eg *= rho
        eg += (1.0 - rho) * g * g
        dx = -np.sqrt(ex + eps) / np.sqrt(eg + eps) * g
        ex *= rho
        ex += (1.0 - rho) * dx * dx
        params[name] += dx
    return state, params


def clip_global_norm(grads, max_norm=CLIP_NORM):
    """Scale all gradients so their joint L2 norm is at most max_norm."""
    total = 0.0
    for arr in grads.values():
        total += float(np.sum(arr * arr))
    norm = math.sqrt(total)
    if norm > max_norm:
        scale = max_norm / norm
        for arr in grads.values():
            arr *= scale
    return norm


@dataclass
class TrainConfig:
    batch_size: int = 32
    max_updates: int = 1000
    seed: int = 0
    checkpoint_interval: int = 0
    report_interval: int = 50

    def __post_init__(self):
        if self.batch_size < 1 or self.report_interval < 1:
            raise ValueError("batch_size and report_interval must be positive")
        if self.max_updates < 0 or self.checkpoint_interval < 0:
            raise ValueError("max_updates and checkpoint_interval must be nonnegative")


@dataclass
class TrainState:
    """Optimizer state plus the loop position needed for exact resume."""

    ada: AdaDeltaState
    update_index: int = 0
    epoch: int = 0
    batch_in_epoch: int = 0
    interval_nats: float = 0.0
    interval_tokens: float = 0.0


def _epoch_rng(seed, epoch):
    return np.random.default_rng([seed, epoch])


def train(model, pairs, cfg, state=None, checkpoint_path=None):
    """Minibatch AdaDelta training; returns (model, loss trace, state).

    The trace holds (update_index, mean nats per non-masked token) per
    report interval.  With a fixed seed the whole run is deterministic,
    and passing the state reloaded from a checkpoint continues the
    original run step-for-step.
    """
    if not pairs:
        raise ValueError("training set is empty")
    params = model.named_params()
    if state is None:
        state = TrainState(ada=AdaDeltaState.fresh(params))
    trace = []

    while state.update_index < cfg.max_updates:
        rng = _epoch_rng(cfg.seed, state.epoch)
        for batch_idx, batch in enumerate(make_batches(pairs, cfg.batch_size, rng)):
            if batch_idx < state.batch_in_epoch:
                continue
            if state.update_index >= cfg.max_updates:
                break
            loss_sum, tokens, grads = batch_loss_and_grads(model, batch.pairs)
            if not math.isfinite(loss_sum):
                raise RuntimeError(
                    f"non-finite loss at update {state.update_index + 1} "
                    f"(epoch {state.epoch}, batch {batch_idx})"
                )
            clip_global_norm(grads)
            adadelta_update(state.ada, params, grads)
            state.update_index += 1
            state.batch_in_epoch = batch_idx + 1
            state.interval_nats += loss_sum
            state.interval_tokens += tokens
            if state.update_index % cfg.report_interval == 0:
                trace.append((state.update_index, state.interval_nats / state.interval_tokens))
                state.interval_nats = 0.0
                state.interval_tokens = 0.0
            if checkpoint_path and cfg.checkpoint_interval and state.update_index % cfg.checkpoint_interval == 0:
                checkpoint_save(model, state, checkpoint_path)
        else:
            state.epoch += 1
            state.batch_in_epoch = 0
            continue
        break
    return model, trace, state


def trace_csv_lines(trace):
    """Loss trace rendered as update_index,avg_nats_per_token lines."""
    return [f"{u},{loss:.17g}" for u, loss in trace]


def checkpoint_save(model, state, path):
    """Model, optimizer accumulators and loop position, bit-exactly."""
    buf = io.BytesIO()
    buf.write(CKPT_MAGIC)
    buf.write(struct.pack("<H", CKPT_VERSION))
    model_blob = io.BytesIO()
    write_model_to(model_blob, model)
    blob = model_blob.getvalue()
    buf.write(struct.pack("<Q", len(blob)))
    buf.write(blob)
    buf.write(
        struct.pack(
            "<QQQdddd",
            state.update_index,
            state.epoch,
            state.batch_in_epoch,
            state.ada.rho,
            state.ada.eps,
            state.interval_nats,
            state.interval_tokens,
        )
    )
    write_tensors(buf, {f"sq_grad.{n}": a for n, a in state.ada.sq_grad.items()})
    write_tensors(buf, {f"sq_delta.{n}": a for n, a in state.ada.sq_delta.items()})
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def checkpoint_load(path):
    """Inverse of checkpoint_save; returns (model, TrainState)."""
    with open(path, "rb") as f:
        magic = f.read(len(CKPT_MAGIC))
        if magic != CKPT_MAGIC:
            raise ModelFileError("bad magic: not a checkpoint file")
        (version,) = struct.unpack("<H", _read_exact(f, 2, "checkpoint version"))
        if version != CKPT_VERSION:
            raise ModelFileError(f"unsupported checkpoint version {version}")
        (blob_len,) = struct.unpack("<Q", _read_exact(f, 8, "model blob length"))
        blob = _read_exact(f, blob_len, "model blob")
        model = read_model_from(io.BytesIO(blob))
        update_index, epoch, batch_in_epoch, rho, eps, nats, tokens = struct.unpack(
            "<QQQdddd", _read_exact(f, 56, "train scalars")
        )
        sq_grad = {n[len("sq_grad.") :]: a for n, a in read_tensors(f).items()}
        sq_delta = {n[len("sq_delta.") :]: a for n, a in read_tensors(f).items()}
        if f.read(1):
            raise ModelFileError("trailing bytes after checkpoint payload")
    params = model.named_params()
    if set(sq_grad) != set(params) or set(sq_delta) != set(params):
        raise ModelFileError("checkpoint accumulators do not match model parameters")
    for name, arr in params.items():
        if sq_grad[name].shape != arr.shape or sq_delta[name].shape != arr.shape:
            raise ModelFileError(f"checkpoint accumulator shape mismatch for {name!r}")
    state = TrainState(
        ada=AdaDeltaState(sq_grad=sq_grad, sq_delta=sq_delta, rho=rho, eps=eps),
        update_index=update_index,
        epoch=epoch,
        batch_in_epoch=batch_in_epoch,
        interval_nats=nats,
        interval_tokens=tokens,
    )
    return model, state
