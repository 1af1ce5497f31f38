"""Input checks shared by the estimator and the command line."""

from __future__ import annotations

from .corpus import DELIM, SPECIALS, Document, as_tag
from .errors import ContractError


def check_documents(X) -> list:
    """Return each document as a list of words.

    Accepts whitespace-separated strings, word sequences or
    :class:`Document` objects; rejects empty documents and reserved tokens.
    """
    if isinstance(X, (str, bytes)):
        raise ContractError("expected a sequence of documents, got a single string")
    docs = []
    for i, x in enumerate(X):
        if isinstance(x, Document):
            words = list(x.source_words)
        elif isinstance(x, str):
            words = x.split()
        else:
            words = [str(w) for w in x]
        if not words:
            raise ContractError(f"document {i} is empty")
        bad = sorted(set(words) & set(SPECIALS))
        if bad:
            raise ContractError(f"document {i} contains reserved tokens {bad}")
        docs.append(words)
    return docs


def check_tag_lists(y) -> list:
    """Return each entry as a list of word-tuple tags (duplicates dropped)."""
    out = []
    for i, tags in enumerate(y):
        if isinstance(tags, str):
            raise ContractError(f"tags of document {i} must be a list, got a string")
        parsed = list(dict.fromkeys(as_tag(t) for t in tags))
        if any(DELIM in t for t in parsed):
            raise ContractError(f"tags of document {i} contain the delimiter {DELIM!r}")
        out.append(parsed)
    return out
