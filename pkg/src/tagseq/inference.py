"""Beam search, N-best voting and tag generation."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .attention import record_attention
from .config import DecodeConfig
from .corpus import BOS, EOS_ID, as_tag, parse_tag_stream, serialize_tags, tag_string
from .errors import ContractError


@dataclass
class Hypothesis:
    """Token ids after BOS (EOS excluded) and their cumulative log-probability."""

    tokens: tuple
    logprob: float
    finished: bool = False
    tags: list = field(default_factory=list)
    raw_tags: list = field(default_factory=list)
    malformed: int = 0

    def score(self, length_norm: bool = False) -> float:
        if not length_norm:
            return self.logprob
        return self.logprob / (len(self.tokens) + int(self.finished))


@dataclass
class NBestList:
    hypotheses: list

    def __len__(self) -> int:
        return len(self.hypotheses)

    def __iter__(self):
        return iter(self.hypotheses)

    def __getitem__(self, i):
        return self.hypotheses[i]

    @property
    def tag_sets(self) -> list:
        return [h.tags for h in self.hypotheses]

    @property
    def malformed(self) -> int:
        return sum(h.malformed for h in self.hypotheses)


def beam_search(step_fn, beam: int, max_len: int, eos_id: int = EOS_ID, n_best: int | None = None, length_norm=False):
    """Beam search over ``step_fn(prefixes) -> (len(prefixes), V)`` log-probabilities.

    Each step keeps the ``beam`` best extensions of the live hypotheses by
    cumulative log-probability; ties go to the earlier hypothesis and then the
    lower token id. Extensions ending in ``eos_id`` leave the beam for the
    finished pool. Decoding ends once the pool holds ``beam`` hypotheses or
    after ``max_len`` steps, when live hypotheses are kept unfinished.
    Returns the ``n_best`` (default ``beam``) best as an :class:`NBestList`.
    """
    if beam < 1 or max_len < 1:
        raise ContractError(f"beam and max_len must be >= 1, got beam={beam}, max_len={max_len}")
    n_best = beam if n_best is None else n_best
    live = [Hypothesis((), 0.0)]
    finished = []
    for _ in range(max_len):
        logp = np.asarray(step_fn([h.tokens for h in live]), dtype=np.float64)
        scores = np.array([h.logprob for h in live])[:, None] + logp
        flat = scores.ravel()
        order = np.argsort(-flat, kind="stable")[:beam]
        vocab = logp.shape[1]
        survivors = []
        for idx in order:
            if not np.isfinite(flat[idx]):
                break
            parent, tok = divmod(int(idx), vocab)
            if tok == eos_id:
                finished.append(Hypothesis(live[parent].tokens, float(flat[idx]), True))
            else:
                survivors.append(Hypothesis(live[parent].tokens + (tok,), float(flat[idx])))
        live = survivors
        if len(finished) >= beam or not live:
            break
    else:
        finished.extend(live)
    ranked = sorted(finished, key=lambda h: -h.score(length_norm))
    return NBestList(ranked[:n_best])


def greedy_decode(step_fn, max_len: int, eos_id: int = EOS_ID) -> Hypothesis:
    tokens, total = (), 0.0
    for _ in range(max_len):
        logp = np.asarray(step_fn([tokens]))[0]
        tok = int(np.argmax(logp))
        total += float(logp[tok])
        if tok == eos_id:
            return Hypothesis(tokens, total, True)
        tokens += (tok,)
    return Hypothesis(tokens, total, False)


def attach_tags(nbest: NBestList, tgt_vocab) -> NBestList:
    """Parse each hypothesis' tokens into tags in place; returns ``nbest``."""
    for h in nbest:
        words = tgt_vocab.decode(h.tokens)
        h.tags, h.malformed = parse_tag_stream(words)
        h.raw_tags, _ = parse_tag_stream(words, dedupe=False)
    return nbest


def n_best_voting(tag_lists, tau: float, counting: str = "set") -> list:
    """Tags counted more than ``tau`` times across hypotheses.

    ``tag_lists`` holds one list of tags per hypothesis, best first. Under
    ``counting='set'`` a tag counts once per hypothesis, under ``'occurrence'``
    once per appearance. A negative ``tau`` turns voting off and returns the
    first hypothesis' tags. Output is ordered by count, ties by first
    appearance.
    """
    tag_lists = [[as_tag(t) for t in tags] for tags in tag_lists]
    if tau < 0:
        return list(dict.fromkeys(tag_lists[0])) if tag_lists else []
    if counting not in ("set", "occurrence"):
        raise ContractError(f"unknown vote counting {counting!r}")
    counts, first = Counter(), {}
    for tags in tag_lists:
        for t in dict.fromkeys(tags) if counting == "set" else tags:
            counts[t] += 1
            first.setdefault(t, len(first))
    kept = [t for t in counts if counts[t] > tau]
    return sorted(kept, key=lambda t: (-counts[t], first[t]))


@dataclass
class GenerationResult:
    tags: list
    nbest: NBestList
    malformed: int


def generate(model, source_words, config: DecodeConfig | None = None) -> GenerationResult:
    """Encode, beam-search, parse and vote for one document."""
    config = config or DecodeConfig()
    step = model.step_function(source_words)
    nbest = beam_search(step, config.beam, config.max_len, EOS_ID, config.nbest_size, config.length_norm)
    attach_tags(nbest, model.tgt_vocab)
    lists = [h.raw_tags if config.vote_counting == "occurrence" else h.tags for h in nbest]
    tags = n_best_voting(lists, config.threshold, config.vote_counting)
    return GenerationResult(tags, nbest, nbest.malformed)


def classify_tags(predicted, inventory, reference) -> dict:
    """Split predictions into seen/unseen (vs the inventory) and correct/incorrect (vs the reference)."""
    inventory = {as_tag(t) for t in inventory}
    reference = {as_tag(t) for t in reference}
    out = {"seen_correct": 0, "seen_incorrect": 0, "unseen_correct": 0, "unseen_uncorroborated": 0}
    for t in dict.fromkeys(as_tag(t) for t in predicted):
        if t in inventory:
            out["seen_correct" if t in reference else "seen_incorrect"] += 1
        else:
            out["unseen_correct" if t in reference else "unseen_uncorroborated"] += 1
    return out


def restrict_to_inventory(tags, inventory) -> list:
    """Drop predictions outside the training inventory (the closed-set baseline)."""
    inventory = {as_tag(t) for t in inventory}
    return [t for t in tags if as_tag(t) in inventory]


def generation_record(doc, result: GenerationResult, emit_nbest: bool = False) -> dict:
    record = {"id": doc.doc_id, "text": " ".join(doc.source_words), "tags": [tag_string(t) for t in result.tags]}
    if emit_nbest:
        record["nbest"] = [{"tags": [tag_string(t) for t in h.raw_tags], "logprob": h.logprob} for h in result.nbest]
        record["malformed"] = result.malformed
    return record


def attention_weights(model, source_words, tags) -> dict:
    """Teacher-forced attention weights for one document and a given tag list.

    Keys are ``"{label}/h{head}"``; each value maps query token to a mapping
    from key token to weight. Repeated tokens get an ``@index`` suffix.
    """
    src = model.source_ids(source_words)
    tgt = model.tgt_vocab.encode(serialize_tags(tags))
    tgt_in = np.array([[model.tgt_vocab.id_of[BOS]] + tgt])
    with ag.no_grad(), record_attention() as rec:
        z, mask = model.encode(np.array([src]), [len(src)])
        model.decode(tgt_in, z, mask)
    src_words = [f"{w}@{i}" for i, w in enumerate(model.src_vocab.decode(src))]
    tgt_words = [f"{w}@{i}" for i, w in enumerate(model.tgt_vocab.decode(tgt_in[0]))]
    dump = {}
    for label, w in rec:
        q_words = src_words if label.startswith("enc") else tgt_words
        k_words = tgt_words if label.endswith(".self") and label.startswith("dec") else src_words
        for h in range(w.shape[1]):
            dump[f"{label}/h{h}"] = {
                q: {k: float(w[0, h, i, j]) for j, k in enumerate(k_words)} for i, q in enumerate(q_words)
            }
    return dump


def dump_attention(model, source_words, tags, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(attention_weights(model, source_words, tags), fh, indent=1, sort_keys=True)
