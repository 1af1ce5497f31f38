"""Teacher-forced maximum-likelihood training with Adam and best-dev selection."""

from __future__ import annotations

import contextlib
import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from . import autograd as ag
from .config import TrainConfig
from .corpus import EOS_ID, Document, FrequencyTable, Vocab, build_vocab, reorder_tags, serialize_tags, tag_frequency
from .errors import ContractError, TrainingDivergedError
from .model import Batch, TagModel, derive_rng, make_batch

log = logging.getLogger(__name__)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    dev_loss: float | None = None


@dataclass
class TrainResult:
    model: TagModel
    log: list = field(default_factory=list)
    best_epoch: int = 0
    steps: int = 0


def target_ids(tags, tgt_vocab: Vocab) -> list:
    return tgt_vocab.encode(serialize_tags(tags)) + [EOS_ID]


def prepare_examples(docs, src_vocab: Vocab, tgt_vocab: Vocab, freq, order: str, rng=None) -> list:
    """Encode documents as ``(source ids, ordered target ids)`` pairs.

    Tagless documents carry no target and are skipped. Under ``order='random'``
    each document's permutation is drawn once, here.
    """
    pairs = []
    for doc in docs:
        if not doc.tags:
            continue
        tags = reorder_tags(doc.tags, freq, order, seed=rng, unseen_count=0)
        pairs.append((src_vocab.encode(doc.source_words), target_ids(tags, tgt_vocab)))
    return pairs


def teacher_forced_loss(model: TagModel, batch: Batch, rng=None) -> ag.Tensor:
    if batch.src.shape[0] == 0:
        raise ContractError("empty batch")
    return model.loss(batch, rng)


def bucket_batches(pairs: list, batch_size: int, rng) -> list:
    """Group similar source lengths; batch order is shuffled by ``rng``."""
    perm = rng.permutation(len(pairs))
    ordered = sorted(perm, key=lambda i: len(pairs[i][0]))
    batches = [ordered[i : i + batch_size] for i in range(0, len(ordered), batch_size)]
    return [batches[i] for i in rng.permutation(len(batches))]


def corpus_loss(model: TagModel, pairs: list, batch_size: int = 64) -> float:
    """Per-token teacher-forced loss over ``pairs`` without recording a graph."""
    total, tokens = 0.0, 0
    with ag.no_grad():
        for i in range(0, len(pairs), batch_size):
            batch = make_batch(pairs[i : i + batch_size])
            total += model.loss(batch).item() * batch.n_tokens
            tokens += batch.n_tokens
    return total / tokens if tokens else float("nan")


class Adam:
    def __init__(self, params: dict, beta1=0.9, beta2=0.98, eps=1e-9):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.t = 0

    def step(self, params: dict, lr: float) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1, c2 = 1 - b1**self.t, 1 - b2**self.t
        for k, p in params.items():
            if p.grad is None:
                continue
            self.m[k] = b1 * self.m[k] + (1 - b1) * p.grad
            self.v[k] = b2 * self.v[k] + (1 - b2) * p.grad * p.grad
            if lr == 0.0:
                continue
            p.data = p.data - lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def learning_rate(cfg: TrainConfig, step: int) -> float:
    """Linear warm-up to ``cfg.lr`` then inverse square-root decay."""
    if cfg.warmup <= 0:
        return cfg.lr
    return cfg.lr * min(step / cfg.warmup, math.sqrt(cfg.warmup / step))


def clip_gradients(params: dict, max_norm: float) -> float:
    norm = math.sqrt(sum(float((p.grad * p.grad).sum()) for p in params.values() if p.grad is not None))
    if norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for p in params.values():
            if p.grad is not None:
                p.grad = p.grad * scale
    return norm


def fit_vocabularies(docs, cfg: TrainConfig):
    return build_vocab(docs, "source", cfg.src_vocab_cap), build_vocab(docs, "target"), tag_frequency(docs)


def train(
    train_docs: list,
    cfg: TrainConfig,
    dev_docs: list | None = None,
    callback=None,
    model: TagModel | None = None,
) -> TrainResult:
    """Train a model on ``train_docs``; returns the best-dev (or last) model.

    The only randomness comes from ``cfg.seed`` via named sub-streams: ``init``
    for parameters, ``data`` for random tag orders, ``shuffle`` for batching.
    """
    if model is None:
        src_vocab, tgt_vocab, freq = fit_vocabularies(train_docs, cfg)
        model = TagModel(cfg, src_vocab, tgt_vocab, freq)
    data_rng = derive_rng(cfg.seed, "data")
    train_pairs = prepare_examples(train_docs, model.src_vocab, model.tgt_vocab, model.freq, cfg.order, data_rng)
    if not train_pairs:
        raise ContractError("no tagged training documents")
    dev_pairs = (
        prepare_examples(dev_docs, model.src_vocab, model.tgt_vocab, model.freq, cfg.order, derive_rng(cfg.seed, "dev"))
        if dev_docs
        else []
    )
    shuffle_rng = derive_rng(cfg.seed, "shuffle")
    dropout_rng = derive_rng(cfg.seed, "dropout") if cfg.dropout > 0 else None
    optimizer = Adam(model.params, cfg.beta1, cfg.beta2, cfg.adam_eps)
    result = TrainResult(model)
    best_loss, best_params = math.inf, None
    limiter = threadpool_limits(1) if cfg.deterministic else contextlib.nullcontext()
    with limiter:
        for epoch in range(1, cfg.max_epochs + 1):
            total, tokens = 0.0, 0
            for idx in bucket_batches(train_pairs, cfg.batch_size, shuffle_rng):
                batch = make_batch([train_pairs[i] for i in idx])
                for p in model.params.values():
                    p.grad = None
                loss = teacher_forced_loss(model, batch, dropout_rng)
                value = loss.item()
                result.steps += 1
                if not math.isfinite(value):
                    raise TrainingDivergedError(f"loss became {value} at epoch {epoch}, step {result.steps}")
                ag.backward(loss, model.params.values())
                clip_gradients(model.params, cfg.clip_norm)
                optimizer.step(model.params, learning_rate(cfg, result.steps))
                total += value * batch.n_tokens
                tokens += batch.n_tokens
            record = EpochRecord(epoch, total / tokens)
            if dev_pairs:
                record.dev_loss = corpus_loss(model, dev_pairs)
            score = record.dev_loss if record.dev_loss is not None else record.train_loss
            if score <= best_loss or best_params is None:
                best_loss = score
                best_params = {k: p.data.copy() for k, p in model.params.items()}
                result.best_epoch = epoch
            result.log.append(record)
            log.info("epoch %d train %.4f dev %s", epoch, record.train_loss, record.dev_loss)
            if callback is not None:
                callback(record)
    if dev_pairs:
        for k, p in model.params.items():
            p.data = best_params[k]
    return result


def write_loss_log(records, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "dev_loss"])
        for r in records:
            writer.writerow([r.epoch, repr(r.train_loss), "" if r.dev_loss is None else repr(r.dev_loss)])
