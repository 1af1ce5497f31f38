"""Corpus ingestion, vocabularies, tag statistics and tag-stream encoding."""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ContractError, CorpusFormatError

PAD, EOS, DELIM, UNK, BOS = "<pad>", "</s>", "|", "<unk>", "<s>"
SPECIALS = (PAD, EOS, DELIM, UNK, BOS)
PAD_ID, EOS_ID, DELIM_ID, UNK_ID, BOS_ID = range(5)

DEFAULT_SOURCE_CAP = 80000

_URL = re.compile(r"(?:https?://|ftp://|www\.)\S+", re.IGNORECASE)

Tag = tuple


def as_tag(tag) -> tuple:
    """Normalise a tag given as a string or a word sequence to a word tuple."""
    words = tuple(tag.split()) if isinstance(tag, str) else tuple(tag)
    if not words or any(not w for w in words):
        raise ContractError(f"empty tag or tag word in {tag!r}")
    return words


def tag_string(tag: Sequence[str]) -> str:
    return " ".join(tag)


@dataclass
class Document:
    source_words: list
    tags: list
    doc_id: str = ""
    tagless: bool = False

    def tag_strings(self) -> list:
        return [tag_string(t) for t in self.tags]

    def to_json(self) -> dict:
        return {"id": self.doc_id, "text": " ".join(self.source_words), "tags": self.tag_strings()}


def strip_urls(text: str) -> str:
    return _URL.sub(" ", text)


def ingest_corpus(lines: Iterable[str]) -> list:
    """Parse JSON-lines records into documents, in file order.

    Each record needs ``text`` (string or word list) and ``tags`` (list of
    strings whose words are space separated); ``id`` is optional and defaults to
    the 0-based record index. Blank lines are skipped.
    """
    docs = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusFormatError(f"invalid JSON ({exc.msg})", lineno) from None
        if not isinstance(record, dict) or "text" not in record or "tags" not in record:
            raise CorpusFormatError("record needs 'text' and 'tags' fields", lineno)
        text, tags = record["text"], record["tags"]
        if isinstance(text, str):
            words = strip_urls(text).split()
        elif isinstance(text, list) and all(isinstance(w, str) for w in text):
            words = [w for w in strip_urls(" ".join(text)).split()]
        else:
            raise CorpusFormatError("'text' must be a string or a list of strings", lineno)
        if not words:
            raise CorpusFormatError("'text' is empty after URL removal", lineno)
        if DELIM in words:
            raise CorpusFormatError(f"text contains the reserved delimiter {DELIM!r}", lineno)
        if not isinstance(tags, list) or not all(isinstance(t, str) for t in tags):
            raise CorpusFormatError("'tags' must be a list of strings", lineno)
        parsed = []
        for t in tags:
            if DELIM in t:
                raise CorpusFormatError(f"tag {t!r} contains the reserved delimiter", lineno)
            if not t.split():
                raise CorpusFormatError("empty tag", lineno)
            parsed.append(tuple(t.split()))
        doc_id = str(record.get("id", len(docs)))
        docs.append(Document(words, parsed, doc_id, tagless=not parsed))
    return docs


def read_corpus(path) -> list:
    with open(path, encoding="utf-8") as fh:
        return ingest_corpus(fh)


def write_corpus(docs: Iterable[Document], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(json.dumps(doc.to_json(), ensure_ascii=False) + "\n")


# ------------------------------------------------------------------ vocab


class Vocab:
    """Bidirectional word/id map with the five reserved symbols at ids 0..4."""

    def __init__(self, words: Iterable[str] = (), side: str = "source"):
        self.side = side
        self.word_of = list(SPECIALS)
        self.id_of = {w: i for i, w in enumerate(SPECIALS)}
        for w in words:
            if w not in self.id_of:
                self.id_of[w] = len(self.word_of)
                self.word_of.append(w)

    def __len__(self) -> int:
        return len(self.word_of)

    def __contains__(self, word) -> bool:
        return word in self.id_of

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and self.word_of == other.word_of and self.side == other.side

    def encode(self, words: Iterable[str]) -> list:
        get = self.id_of.get
        return [get(w, UNK_ID) for w in words]

    def decode(self, ids: Iterable[int]) -> list:
        return [self.word_of[i] for i in ids]

    def to_dict(self) -> dict:
        return {"side": self.side, "words": self.word_of[len(SPECIALS):]}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Vocab":
        return cls(d["words"], side=d.get("side", "source"))


def build_vocab(docs: Sequence[Document], side: str = "source", cap: int = DEFAULT_SOURCE_CAP) -> Vocab:
    """Build a vocabulary; ``cap`` is the total size including the specials.

    Source side keeps the ``cap - 5`` most frequent words, ties broken
    lexicographically. Target side keeps every tag word regardless of ``cap``.
    """
    if cap < len(SPECIALS):
        raise ContractError(f"vocab cap must be >= {len(SPECIALS)}, got {cap}")
    counts = Counter()
    if side == "source":
        for d in docs:
            counts.update(d.source_words)
    elif side == "target":
        for d in docs:
            for t in d.tags:
                counts.update(t)
    else:
        raise ContractError(f"unknown vocab side {side!r}")
    for s in SPECIALS:
        counts.pop(s, None)
    ranked = sorted(counts, key=lambda w: (-counts[w], w))
    if side == "source":
        ranked = ranked[: cap - len(SPECIALS)]
    return Vocab(ranked, side=side)


# -------------------------------------------------------------- frequency


class FrequencyTable(Counter):
    """Occurrence counts of full tag strings over a training corpus."""

    def count_of(self, tag) -> int:
        return self[tag if isinstance(tag, str) else tag_string(tag)]


def tag_frequency(docs: Iterable[Document]) -> FrequencyTable:
    table = FrequencyTable()
    for d in docs:
        table.update(tag_string(t) for t in d.tags)
    return table


ORDERS = ("random", "asc", "desc")


def reorder_tags(tags: Sequence, freq: Mapping, order: str, seed=None, unseen_count: int | None = None) -> list:
    """Reorder a document's tags by corpus frequency.

    ``asc`` puts rare tags first, ``desc`` frequent tags first; both are stable.
    ``random`` is a seeded shuffle (``seed`` may be an int or a Generator).
    Tags absent from ``freq`` raise unless ``unseen_count`` supplies a count.
    """
    tags = list(tags)
    if order not in ORDERS:
        raise ContractError(f"unknown order {order!r}; expected one of {ORDERS}")
    if order == "random":
        if seed is None:
            raise ContractError("order='random' requires a seed")
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        return [tags[i] for i in rng.permutation(len(tags))]
    counts = []
    for t in tags:
        key = t if isinstance(t, str) else tag_string(t)
        if key in freq:
            counts.append(freq[key])
        elif unseen_count is not None:
            counts.append(unseen_count)
        else:
            raise ContractError(f"tag {key!r} is not in the frequency table")
    sign = 1 if order == "asc" else -1
    ranked = sorted(range(len(tags)), key=lambda i: sign * counts[i])
    return [tags[i] for i in ranked]


# ------------------------------------------------------------ tag streams


def serialize_tags(tags: Sequence) -> list:
    """``[t1, t2]`` -> ``t1 words | t2 words |`` as a token list."""
    if not tags:
        raise ContractError("cannot serialise an empty tag list")
    stream = []
    for t in tags:
        words = as_tag(t)
        if DELIM in words:
            raise ContractError(f"tag {t!r} contains the delimiter")
        stream.extend(words)
        stream.append(DELIM)
    return stream


def parse_tag_stream(tokens: Iterable[str], eos: str = EOS, dedupe: bool = True) -> tuple:
    """Split a generated token stream into tags.

    Reading stops at ``eos``. Empty segments and a trailing segment with no
    closing delimiter are dropped and counted as malformed. Repeated tags keep
    only their first occurrence unless ``dedupe`` is false. Returns
    ``(tags, malformed_count)``.
    """
    tags, seen, current, malformed = [], set(), [], 0
    for tok in tokens:
        if tok == eos:
            break
        if tok == DELIM:
            if current:
                tag = tuple(current)
                if not dedupe or tag not in seen:
                    seen.add(tag)
                    tags.append(tag)
            else:
                malformed += 1
            current = []
        else:
            current.append(tok)
    if current:
        malformed += 1
    return tags, malformed


def local_positions(tokens: Iterable[str], delim=DELIM) -> list:
    """Within-tag offsets; the delimiter takes the offset after the tag's last word."""
    out, counter = [], 0
    for tok in tokens:
        out.append(counter)
        counter = 0 if tok == delim else counter + 1
    return out


@dataclass
class TagSequence:
    tags: list
    token_stream: list = field(default_factory=list)
    local_positions: list = field(default_factory=list)

    @classmethod
    def from_tags(cls, tags: Sequence) -> "TagSequence":
        tags = [as_tag(t) for t in tags]
        stream = serialize_tags(tags)
        return cls(tags, stream, local_positions(stream))
