"""Encoder-decoder tag generator: parameters, batching and forward passes."""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .attention import PositionalEncodingPlan
from .config import TrainConfig
from .corpus import BOS_ID, EOS_ID, PAD_ID, UNK_ID, Vocab
from .decoder import attention_decoder, lstm_decoder
from .encoder import encode_attention, encode_bilstm
from .errors import ContractError

BANNED_OUTPUTS = (PAD_ID, BOS_ID, UNK_ID)


def derive_rng(seed: int, name: str) -> np.random.Generator:
    """Independent generator for a named purpose (``init``, ``data``, ``shuffle``...)."""
    return np.random.default_rng([int(seed), zlib.crc32(name.encode())])


def _uniform(rng, shape, bound):
    return rng.uniform(-bound, bound, size=shape)


def _xavier(rng, fan_in, fan_out):
    return _uniform(rng, (fan_in, fan_out), math.sqrt(6.0 / (fan_in + fan_out)))


def _attention_params(out: dict, rng, prefix: str, d: int) -> None:
    # no key bias: it shifts every score in a query row equally, so softmax ignores it
    for n in ("q", "k", "v", "o"):
        out[f"{prefix}.w{n}"] = _xavier(rng, d, d)
        if n != "k":
            out[f"{prefix}.b{n}"] = np.zeros(d)


def _norm_params(out: dict, prefix: str, d: int) -> None:
    out[f"{prefix}.g"] = np.ones(d)
    out[f"{prefix}.b"] = np.zeros(d)


def _ffn_params(out: dict, rng, prefix: str, d: int, d_ff: int) -> None:
    out[f"{prefix}.w1"] = _xavier(rng, d, d_ff)
    out[f"{prefix}.b1"] = np.zeros(d_ff)
    out[f"{prefix}.w2"] = _xavier(rng, d_ff, d)
    out[f"{prefix}.b2"] = np.zeros(d)


def _lstm_params(out: dict, rng, prefix: str, d_in: int, hidden: int) -> None:
    out[f"{prefix}.w_ih"] = _uniform(rng, (d_in, 4 * hidden), 0.08)
    out[f"{prefix}.w_hh"] = _uniform(rng, (hidden, 4 * hidden), 0.08)
    bias = _uniform(rng, (4 * hidden,), 0.08)
    bias[hidden : 2 * hidden] = 1.0
    out[f"{prefix}.b"] = bias


def init_params(cfg: TrainConfig, n_src: int, n_tgt: int, rng: np.random.Generator) -> dict:
    d, d_ff = cfg.d_model, cfg.ffn_width
    raw = {
        "src_emb": rng.normal(0.0, d**-0.5, size=(n_src, d)),
        "tgt_emb": rng.normal(0.0, d**-0.5, size=(n_tgt, d)),
    }
    if cfg.variant[0] == "L":
        for k in range(1, cfg.enc_layers + 1):
            for direction in ("fwd", "bwd"):
                _lstm_params(raw, rng, f"enc.l{k}.{direction}", d, d // 2)
    else:
        for k in range(1, cfg.enc_layers + 1):
            _attention_params(raw, rng, f"enc.l{k}.self", d)
            _norm_params(raw, f"enc.l{k}.ln1", d)
            _ffn_params(raw, rng, f"enc.l{k}.ffn", d, d_ff)
            _norm_params(raw, f"enc.l{k}.ln2", d)
    if cfg.variant[-1] == "A":
        for k in range(1, cfg.dec_layers + 1):
            _attention_params(raw, rng, f"dec.l{k}.self", d)
            _norm_params(raw, f"dec.l{k}.ln1", d)
            _attention_params(raw, rng, f"dec.l{k}.cross", d)
            _norm_params(raw, f"dec.l{k}.ln2", d)
            _ffn_params(raw, rng, f"dec.l{k}.ffn", d, d_ff)
            _norm_params(raw, f"dec.l{k}.ln3", d)
    else:
        for k in range(1, cfg.dec_layers + 1):
            _lstm_params(raw, rng, f"dec.l{k}", d, d)
        raw["dec.comb.w"] = _xavier(rng, 2 * d, d)
        raw["dec.comb.b"] = np.zeros(d)
    raw["out.w"] = _uniform(rng, (d, n_tgt), 0.01)
    raw["out.b"] = np.zeros(n_tgt)
    return {name: ag.parameter(value, name) for name, value in raw.items()}


@dataclass
class Batch:
    src: np.ndarray
    lengths: np.ndarray
    tgt_in: np.ndarray
    tgt_out: np.ndarray
    weights: np.ndarray

    @property
    def n_tokens(self) -> int:
        return int(self.weights.sum())


def make_batch(pairs) -> Batch:
    """Pad ``(source ids, target ids ending in EOS)`` pairs into a batch."""
    if not pairs:
        raise ContractError("empty batch")
    n = len(pairs)
    s_len = max(len(s) for s, _ in pairs)
    t_len = max(len(t) for _, t in pairs)
    src = np.full((n, s_len), PAD_ID, dtype=np.int64)
    tgt_in = np.full((n, t_len), PAD_ID, dtype=np.int64)
    tgt_out = np.full((n, t_len), PAD_ID, dtype=np.int64)
    lengths = np.zeros(n, dtype=np.int64)
    for r, (s, t) in enumerate(pairs):
        if not s:
            raise ContractError("empty source sequence")
        src[r, : len(s)] = s
        lengths[r] = len(s)
        tgt_out[r, : len(t)] = t
        tgt_in[r, 0] = BOS_ID
        tgt_in[r, 1 : len(t)] = t[:-1]
    return Batch(src, lengths, tgt_in, tgt_out, (tgt_out != PAD_ID).astype(np.float64))


class TagModel:
    """Parameters plus vocabularies of one trained (or freshly initialised) model."""

    def __init__(self, config: TrainConfig, src_vocab: Vocab, tgt_vocab: Vocab, freq=None, params=None):
        self.config = config
        self.src_vocab = src_vocab
        self.tgt_vocab = tgt_vocab
        self.freq = freq if freq is not None else {}
        if params is None:
            params = init_params(config, len(src_vocab), len(tgt_vocab), derive_rng(config.seed, "init"))
        self.params = params
        self.plan = PositionalEncodingPlan(config.pe, config.d_model, config.pe_convention)

    def parameters(self) -> list:
        return [self.params[k] for k in sorted(self.params)]

    def n_parameters(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def encode(self, src, lengths, rng=None):
        """Encoder output (B, S, d) and the (B, S) key mask."""
        cfg = self.config
        src = np.asarray(src)
        lengths = np.asarray(lengths)
        mask = np.arange(src.shape[1])[None, :] < lengths[:, None]
        emb = ag.embedding(self.params["src_emb"], src)
        if cfg.variant[0] == "L":
            z = encode_bilstm(emb, lengths, self.params, cfg.enc_layers, cfg.dropout, rng)
        else:
            z = encode_attention(emb, mask, self.params, cfg.enc_layers, cfg.heads, cfg.scale_embeddings)
        return z, mask

    def decode(self, tgt_in, z, src_mask) -> ag.Tensor:
        """Next-token logits (B, T, V) for teacher-forced decoder inputs."""
        cfg = self.config
        if cfg.variant[-1] == "A":
            h = attention_decoder(tgt_in, z, src_mask, self.params, cfg.dec_layers, cfg.heads, self.plan, cfg.scale_embeddings)
        else:
            h = lstm_decoder(tgt_in, z, src_mask, self.params, cfg.dec_layers, cfg.scale_embeddings)
        return ag.add(ag.matmul(h, self.params["out.w"]), self.params["out.b"])

    def logits(self, batch: Batch, rng=None) -> ag.Tensor:
        z, mask = self.encode(batch.src, batch.lengths, rng)
        return self.decode(batch.tgt_in, z, mask)

    def loss(self, batch: Batch, rng=None) -> ag.Tensor:
        """Mean cross-entropy over non-PAD target positions."""
        return ag.cross_entropy(self.logits(batch, rng), batch.tgt_out, batch.weights)

    def source_ids(self, words) -> list:
        return self.src_vocab.encode(words)

    def step_function(self, source_words):
        """Encode one source once; return ``prefixes -> log-probs (n, V)``."""
        ids = np.asarray([self.source_ids(source_words)])
        with ag.no_grad():
            z, mask = self.encode(ids, [ids.shape[1]])

        def step(prefixes):
            n = len(prefixes)
            tgt_in = np.array([(BOS_ID,) + tuple(p) for p in prefixes], dtype=np.int64)
            with ag.no_grad():
                zz = ag.constant(np.broadcast_to(z.data, (n,) + z.shape[1:]))
                logits = self.decode(tgt_in, zz, np.broadcast_to(mask, (n, mask.shape[1]))).data[:, -1]
            logp = ag.log_softmax_array(logits)
            logp[:, list(BANNED_OUTPUTS)] = -np.inf
            return logp

        return step


__all__ = ["TagModel", "Batch", "make_batch", "init_params", "derive_rng", "EOS_ID"]
