"""Source encoders: stacked bidirectional LSTM (default) and self-attention.

LSTM gate layout along the 4H axis is ``[input, forget, output, candidate]``.
"""

from __future__ import annotations

import math

import numpy as np

from . import autograd as ag
from .attention import multi_head, sinusoid
from .errors import DimensionError


def _cell(gates: ag.Tensor, c_prev, hidden: int):
    sig = ag.sigmoid(ag.take(gates, (Ellipsis, slice(0, 3 * hidden))))
    g = ag.tanh(ag.take(gates, (Ellipsis, slice(3 * hidden, 4 * hidden))))
    i = ag.take(sig, (Ellipsis, slice(0, hidden)))
    f = ag.take(sig, (Ellipsis, slice(hidden, 2 * hidden)))
    o = ag.take(sig, (Ellipsis, slice(2 * hidden, 3 * hidden)))
    c = ag.mul(i, g) if c_prev is None else ag.add(ag.mul(f, c_prev), ag.mul(i, g))
    h = ag.mul(o, ag.tanh(c))
    return h, c


def lstm_step(x, h_prev, c_prev, w_ih, w_hh, b):
    """One LSTM step: returns ``(h, c)`` for input ``x`` (B, in) and state (B, H)."""
    hidden = w_hh.shape[0]
    if w_ih.shape[1] != 4 * hidden or w_hh.shape[1] != 4 * hidden or b.shape[-1] != 4 * hidden:
        raise DimensionError(
            f"lstm_step: gate widths {w_ih.shape}, {w_hh.shape}, {b.shape} inconsistent with H={hidden}"
        )
    gates = ag.add(ag.add(ag.matmul(x, w_ih), b), ag.matmul(h_prev, w_hh))
    return _cell(gates, c_prev, hidden)


def lstm_layer(xs: ag.Tensor, lengths, w_ih, w_hh, b, reverse: bool = False) -> ag.Tensor:
    """Run one direction over (B, N, in) inputs; returns (B, N, H) hidden states.

    Zero initial state. Right padding beyond ``lengths`` is handled by holding
    the backward scan at the zero state until it reaches real tokens; forward
    outputs past a row's length are left for the caller to mask.
    """
    batch, steps, _ = xs.shape
    hidden = w_hh.shape[0]
    lengths = np.asarray(lengths)
    proj = ag.add(ag.matmul(xs, w_ih), b)
    outputs = [None] * steps
    h = c = None
    order = range(steps - 1, -1, -1) if reverse else range(steps)
    for t in order:
        gates = ag.take(proj, (slice(None), t))
        if h is not None:
            gates = ag.add(gates, ag.matmul(h, w_hh))
        h, c = _cell(gates, c, hidden)
        if reverse:
            valid = t < lengths
            if not valid.all():
                keep = valid.astype(np.float64)[:, None]
                h, c = ag.mul(h, keep), ag.mul(c, keep)
        outputs[t] = h
    return ag.stack(outputs, axis=1)


def encode_bilstm(emb: ag.Tensor, lengths, params: dict, layers: int, dropout: float = 0.0, rng=None):
    """Stacked biLSTM: each layer's output is ``[forward ; backward]`` states."""
    x = emb
    for k in range(1, layers + 1):
        pre = f"enc.l{k}"
        fwd = lstm_layer(x, lengths, params[f"{pre}.fwd.w_ih"], params[f"{pre}.fwd.w_hh"], params[f"{pre}.fwd.b"])
        bwd = lstm_layer(
            x, lengths, params[f"{pre}.bwd.w_ih"], params[f"{pre}.bwd.w_hh"], params[f"{pre}.bwd.b"], reverse=True
        )
        x = ag.concat([fwd, bwd], axis=-1)
        if dropout > 0 and rng is not None and k < layers:
            keep = (rng.random(x.shape) >= dropout) / (1.0 - dropout)
            x = ag.mul(x, keep)
    return x


def feed_forward(x: ag.Tensor, params: dict, prefix: str) -> ag.Tensor:
    hidden = ag.relu(ag.add(ag.matmul(x, params[f"{prefix}.w1"]), params[f"{prefix}.b1"]))
    return ag.add(ag.matmul(hidden, params[f"{prefix}.w2"]), params[f"{prefix}.b2"])


def norm(x: ag.Tensor, params: dict, prefix: str) -> ag.Tensor:
    return ag.layer_norm(x, params[f"{prefix}.g"], params[f"{prefix}.b"])


def encode_attention(emb: ag.Tensor, src_mask, params: dict, layers: int, heads: int, scale: bool = True):
    """Self-attention encoder with absolute sinusoidal positions (post-norm)."""
    _, steps, d = emb.shape
    x = ag.mul(emb, math.sqrt(d)) if scale else emb
    x = ag.add(x, sinusoid(np.arange(steps), d))
    key_mask = np.asarray(src_mask, dtype=bool)[:, None, :]
    for k in range(1, layers + 1):
        pre = f"enc.l{k}"
        x = norm(ag.add(x, multi_head(x, x, params, f"{pre}.self", heads, key_mask, label=f"enc{k}.self")), params, f"{pre}.ln1")
        x = norm(ag.add(x, feed_forward(x, params, f"{pre}.ffn")), params, f"{pre}.ln2")
    return x
