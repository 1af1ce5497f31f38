"""Scaled dot-product attention, multi-head attention and sinusoidal positions."""

from __future__ import annotations

import contextlib
import math
from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .errors import ConfigError, ContractError

PE_MODES = ("local", "global", "none")
PE_CONVENTIONS = ("symmetric", "as-printed")

_recorder = None


@contextlib.contextmanager
def record_attention():
    """Collect ``(label, weights)`` pairs from every attention call in the block."""
    global _recorder
    previous, _recorder = _recorder, []
    try:
        yield _recorder
    finally:
        _recorder = previous


def _swap_last(x: ag.Tensor) -> ag.Tensor:
    axes = tuple(range(x.ndim - 2)) + (x.ndim - 1, x.ndim - 2)
    return ag.transpose(x, axes)


def scaled_attention(q: ag.Tensor, k: ag.Tensor, v: ag.Tensor, mask=None, label=None) -> ag.Tensor:
    """``softmax(q k^T / sqrt(d_k) + mask) v`` over the last two axes.

    ``mask`` is a boolean array broadcastable to the score shape; ``True`` marks
    keys a query may attend to. Every query row needs at least one such key.
    """
    scores = ag.mul(ag.matmul(q, _swap_last(k)), 1.0 / math.sqrt(q.shape[-1]))
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if not mask.any(axis=-1).all():
            raise ContractError("attention row has no unmasked key")
        scores = ag.add(scores, np.where(mask, 0.0, ag.MASK_VALUE))
    weights = ag.softmax(scores, axis=-1)
    if _recorder is not None:
        _recorder.append((label, weights.data.copy()))
    return ag.matmul(weights, v)


def _split_heads(x: ag.Tensor, heads: int) -> ag.Tensor:
    b, t, d = x.shape
    return ag.transpose(ag.reshape(x, (b, t, heads, d // heads)), (0, 2, 1, 3))


def multi_head(xq: ag.Tensor, xkv: ag.Tensor, params: dict, prefix: str, heads: int, mask=None, label=None):
    """Project to ``heads`` subspaces, attend in each, concatenate, project back.

    ``xq`` is (B, T, d), ``xkv`` is (B, S, d); ``mask`` broadcasts to (B, T, S).
    Parameters are read from ``params`` under ``{prefix}.{wq,bq,wk,wv,bv,wo,bo}``.
    """
    b, t, d = xq.shape
    if d % heads:
        raise ConfigError(f"heads={heads} does not divide d_model={d}")
    p = lambda n: params[f"{prefix}.{n}"]  # noqa: E731
    q = _split_heads(ag.add(ag.matmul(xq, p("wq")), p("bq")), heads)
    k = _split_heads(ag.matmul(xkv, p("wk")), heads)
    v = _split_heads(ag.add(ag.matmul(xkv, p("wv")), p("bv")), heads)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        mask = mask.reshape(mask.shape[:-2] + (1,) + mask.shape[-2:]) if mask.ndim == 3 else mask
    out = scaled_attention(q, k, v, mask, label=label)
    out = ag.reshape(ag.transpose(out, (0, 2, 1, 3)), (b, t, d))
    return ag.add(ag.matmul(out, p("wo")), p("bo"))


def sinusoid(positions, d_model: int, convention: str = "symmetric") -> np.ndarray:
    """Sinusoidal encodings, one row per position.

    Dimension ``2c`` is ``sin(p / 10000**(2c/d))``. Dimension ``2c+1`` is
    ``cos(p / 10000**(2c/d))`` under the symmetric convention and
    ``cos(p / 10000**((2c+1)/d))`` under the as-printed one.
    """
    if convention not in PE_CONVENTIONS:
        raise ConfigError(f"unknown positional-encoding convention {convention!r}")
    pos = np.asarray(positions, dtype=np.float64).reshape(-1, 1)
    if pos.size and pos.min() < 0:
        raise ContractError("positions must be non-negative")
    dims = np.arange(d_model)
    pair = dims - dims % 2
    exponent = pair / d_model if convention == "symmetric" else dims / d_model
    angles = pos / np.power(10000.0, exponent)
    return np.where(dims % 2 == 0, np.sin(angles), np.cos(angles))


@dataclass(frozen=True)
class PositionalEncodingPlan:
    """Which positions feed the decoder's sinusoidal encoding.

    ``local`` uses within-tag offsets, ``global`` absolute indices and ``none``
    a zero matrix.
    """

    mode: str = "local"
    d_model: int = 512
    convention: str = "symmetric"

    def __post_init__(self):
        if self.mode not in PE_MODES:
            raise ConfigError(f"unknown positional-encoding mode {self.mode!r}")
        if self.convention not in PE_CONVENTIONS:
            raise ConfigError(f"unknown positional-encoding convention {self.convention!r}")

    def encode(self, positions) -> np.ndarray:
        positions = np.asarray(positions, dtype=np.int64)
        if positions.size and positions.min() < 0:
            raise ContractError("positions must be non-negative")
        if self.mode == "none":
            return np.zeros(positions.shape + (self.d_model,))
        if self.mode == "global":
            positions = np.broadcast_to(np.arange(positions.shape[-1]), positions.shape)
        table = sinusoid(positions.reshape(-1), self.d_model, self.convention)
        return table.reshape(positions.shape + (self.d_model,))
