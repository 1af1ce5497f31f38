"""Deterministic synthetic tagging corpora with held-out tag compositions.

Every tag is either a bare category word (general, frequent) or a composition
``entity words + category word`` (specific, rare). The composition appears
verbatim as a span of the source text, so each tag word is a cue. A fraction of
compositions is withheld from train/dev and used only in the open test split;
all of their words still occur in training tags.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .corpus import Document, tag_string, write_corpus
from .errors import ContractError


@dataclass
class SynthSpec:
    n_categories: int = 8
    n_entities: int = 30
    entity_pool: int = 40
    max_entity_words: int = 2
    n_compositions: int = 100
    held_out: float = 0.2
    n_train: int = 2000
    n_dev: int = 200
    n_test: int = 200
    filler_vocab: int = 300
    min_fillers: int = 4
    max_fillers: int = 10
    max_compositions_per_doc: int = 2


@dataclass
class SynthCorpus:
    train: list
    dev: list
    test_open: list
    manifest: dict = field(default_factory=dict)


def _check(spec: SynthSpec) -> None:
    if not 0.0 <= spec.held_out < 1.0:
        raise ContractError(f"held_out must be in [0, 1), got {spec.held_out}")
    if spec.n_compositions > spec.n_entities * spec.n_categories:
        raise ContractError("n_compositions exceeds n_entities * n_categories")
    if spec.max_entity_words < 1 or spec.entity_pool < spec.max_entity_words:
        raise ContractError("entity_pool must hold at least max_entity_words words")
    if spec.min_fillers > spec.max_fillers:
        raise ContractError("min_fillers > max_fillers")


def _entities(spec: SynthSpec, rng) -> list:
    pool = [f"e{i:03d}" for i in range(spec.entity_pool)]
    seen, out = set(), []
    attempts = 0
    while len(out) < spec.n_entities:
        attempts += 1
        if attempts > 100 * spec.n_entities:
            raise ContractError("entity_pool too small for the requested number of distinct entities")
        k = int(rng.integers(1, spec.max_entity_words + 1))
        phrase = tuple(pool[i] for i in rng.choice(spec.entity_pool, size=k, replace=False))
        if phrase not in seen:
            seen.add(phrase)
            out.append(phrase)
    return out


def _select_held_out(comps: list, n_hold: int, rng) -> set:
    """Pick compositions to withhold while keeping every word covered by the rest."""
    word_uses = {}
    for e, c in comps:
        for w in e + (c,):
            word_uses[w] = word_uses.get(w, 0) + 1
    held = set()
    for i in rng.permutation(len(comps)):
        if len(held) == n_hold:
            break
        e, c = comps[i]
        words = e + (c,)
        if all(word_uses[w] > 1 for w in words):
            held.add(int(i))
            for w in words:
                word_uses[w] -= 1
    if len(held) < n_hold:
        raise ContractError(
            f"cannot withhold {n_hold} compositions while keeping all tag words in training"
        )
    return held


def _document(comps: list, rng, spec: SynthSpec, fillers: list, doc_id: str) -> Document:
    n_fill = int(rng.integers(spec.min_fillers, spec.max_fillers + 1))
    # units are single fillers or whole composition spans, so spans never nest
    units = [[fillers[i]] for i in rng.integers(0, len(fillers), size=n_fill)]
    tags = []
    for e, c in comps:
        at = int(rng.integers(0, len(units) + 1))
        units.insert(at, list(e) + [c])
        for t in ((c,), e + (c,)):
            if t not in tags:
                tags.append(t)
    order = rng.permutation(len(tags))
    words = [w for u in units for w in u]
    return Document(words, [tags[i] for i in order], doc_id)


def synth_corpus(spec: SynthSpec | None = None, seed: int = 0) -> SynthCorpus:
    spec = spec or SynthSpec()
    _check(spec)
    rng = np.random.default_rng(seed)
    categories = [f"k{i:02d}" for i in range(spec.n_categories)]
    fillers = [f"w{i:03d}" for i in range(spec.filler_vocab)]
    entities = _entities(spec, rng)
    pairs = [(e, c) for e in entities for c in categories]
    picked = rng.choice(len(pairs), size=spec.n_compositions, replace=False)
    comps = [pairs[i] for i in sorted(picked)]
    n_hold = int(round(spec.held_out * spec.n_compositions))
    held_idx = _select_held_out(comps, n_hold, rng)
    seen_comps = [c for i, c in enumerate(comps) if i not in held_idx]
    held_comps = [c for i, c in enumerate(comps) if i in held_idx]
    if held_comps and spec.n_test < len(held_comps):
        raise ContractError("n_test is smaller than the number of held-out compositions")
    if spec.n_train < len(seen_comps):
        raise ContractError("n_train is smaller than the number of training compositions")

    def split(n: int, primary: list, prefix: str) -> list:
        docs = []
        cycle = [primary[i] for i in rng.permutation(len(primary))]
        for j in range(n):
            chosen = [cycle[j % len(cycle)]]
            extra = int(rng.integers(0, spec.max_compositions_per_doc))
            for _ in range(extra):
                cand = seen_comps[int(rng.integers(0, len(seen_comps)))]
                if cand not in chosen:
                    chosen.append(cand)
            docs.append(_document(chosen, rng, spec, fillers, f"{prefix}{j}"))
        return docs

    train = split(spec.n_train, seen_comps, "train-")
    dev = split(spec.n_dev, seen_comps, "dev-")
    test_open = split(spec.n_test, held_comps, "test-") if held_comps else []
    manifest = {
        "seed": seed,
        "spec": asdict(spec),
        "unseen_tags": sorted(tag_string(e + (c,)) for e, c in held_comps),
        "train_compositions": sorted(tag_string(e + (c,)) for e, c in seen_comps),
    }
    return SynthCorpus(train, dev, test_open, manifest)


def write_synth(corpus: SynthCorpus, out_dir) -> dict:
    """Write the three splits and ``manifest.json``; returns the written paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "train": os.path.join(out_dir, "train.jsonl"),
        "dev": os.path.join(out_dir, "dev.jsonl"),
        "test_open": os.path.join(out_dir, "test_open.jsonl"),
        "manifest": os.path.join(out_dir, "manifest.json"),
    }
    write_corpus(corpus.train, paths["train"])
    write_corpus(corpus.dev, paths["dev"])
    write_corpus(corpus.test_open, paths["test_open"])
    with open(paths["manifest"], "w", encoding="utf-8") as fh:
        json.dump(corpus.manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return paths
