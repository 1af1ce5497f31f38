"""Target-side decoders producing hidden states for next-token prediction.

The attention decoder stacks identical post-norm layers of masked
self-attention, attention over the encoder output and a position-wise
feed-forward block. The LSTM decoder (for the ablation variants) runs a
unidirectional LSTM stack followed by dot-product attention over the encoder
output.
"""

from __future__ import annotations

import math

import numpy as np

from . import autograd as ag
from .attention import PositionalEncodingPlan, multi_head
from .corpus import DELIM_ID
from .encoder import feed_forward, lstm_layer, norm


def decoder_positions(input_ids, delim_id: int = DELIM_ID) -> np.ndarray:
    """Local positions for decoder inputs ``[BOS, y1, ..., y_{t-1}]``.

    Input slot ``i`` carries the within-tag offset of the token it predicts,
    ``y_{i+1}``: the count of words since the last delimiter in ``y1..y_i``.
    This equals ``local_positions`` of the full stream wherever that is defined.
    """
    ids = np.atleast_2d(np.asarray(input_ids))
    out = np.zeros(ids.shape, dtype=np.int64)
    for r in range(ids.shape[0]):
        counter = 0
        for i in range(ids.shape[1]):
            if i > 0:
                counter = 0 if ids[r, i] == delim_id else counter + 1
            out[r, i] = counter
    return out


def causal_mask(steps: int) -> np.ndarray:
    return np.tril(np.ones((steps, steps), dtype=bool))[None]


def attention_decoder(
    input_ids, z: ag.Tensor, src_mask, params: dict, layers: int, heads: int, plan: PositionalEncodingPlan, scale: bool = True
) -> ag.Tensor:
    """Hidden states (B, T, d) for decoder inputs (B, T) given encoder output z."""
    input_ids = np.asarray(input_ids)
    d = z.shape[-1]
    x = ag.embedding(params["tgt_emb"], input_ids)
    if scale:
        x = ag.mul(x, math.sqrt(d))
    if plan.mode != "none":
        x = ag.add(x, plan.encode(decoder_positions(input_ids)))
    self_mask = causal_mask(input_ids.shape[1])
    cross_mask = np.asarray(src_mask, dtype=bool)[:, None, :]
    for k in range(1, layers + 1):
        pre = f"dec.l{k}"
        x = norm(ag.add(x, multi_head(x, x, params, f"{pre}.self", heads, self_mask, label=f"dec{k}.self")), params, f"{pre}.ln1")
        x = norm(ag.add(x, multi_head(x, z, params, f"{pre}.cross", heads, cross_mask, label=f"dec{k}.cross")), params, f"{pre}.ln2")
        x = norm(ag.add(x, feed_forward(x, params, f"{pre}.ffn")), params, f"{pre}.ln3")
    return x


def lstm_decoder(input_ids, z: ag.Tensor, src_mask, params: dict, layers: int, scale_embeddings: bool = True) -> ag.Tensor:
    """Unidirectional LSTM stack with a final attention-over-source combiner.

    Each layer is wrapped in a residual connection. Without it the small
    LSTM init shrinks activations several-fold per layer, the attention
    query at the top of a 4-layer stack starts near zero and training
    stalls at the unigram tag distribution.
    """
    input_ids = np.asarray(input_ids)
    batch, steps = input_ids.shape
    lengths = np.full(batch, steps)
    x = ag.embedding(params["tgt_emb"], input_ids)
    if scale_embeddings:
        x = ag.mul(x, math.sqrt(x.shape[-1]))
    for k in range(1, layers + 1):
        pre = f"dec.l{k}"
        x = ag.add(x, lstm_layer(x, lengths, params[f"{pre}.w_ih"], params[f"{pre}.w_hh"], params[f"{pre}.b"]))
    d = z.shape[-1]
    scores = ag.mul(ag.matmul(x, ag.transpose(z, (0, 2, 1))), 1.0 / math.sqrt(d))
    scores = ag.add(scores, np.where(np.asarray(src_mask, dtype=bool)[:, None, :], 0.0, ag.MASK_VALUE))
    context = ag.matmul(ag.softmax(scores, axis=-1), z)
    combined = ag.concat([x, context], axis=-1)
    return ag.tanh(ag.add(ag.matmul(combined, params["dec.comb.w"]), params["dec.comb.b"]))
