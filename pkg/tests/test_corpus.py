import json
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tagseq.corpus import (
    DELIM,
    EOS,
    SPECIALS,
    Document,
    FrequencyTable,
    TagSequence,
    Vocab,
    build_vocab,
    ingest_corpus,
    local_positions,
    parse_tag_stream,
    read_corpus,
    reorder_tags,
    serialize_tags,
    tag_frequency,
    write_corpus,
)
from tagseq.errors import ContractError, CorpusFormatError

EXAMPLE_TAGS = [("movie",), ("science", "fiction", "movie"), ("Star", "Wars")]


def line(text, tags, **extra):
    return json.dumps({"text": text, "tags": tags, **extra})


# ------------------------------------------------------------------ ingestion


def test_ingest_basic_document():
    (doc,) = ingest_corpus([line("how about star wars", ["movie", "star wars"])])
    assert doc.source_words == ["how", "about", "star", "wars"]
    assert doc.tags == [("movie",), ("star", "wars")]
    assert not doc.tagless


def test_ingest_word_list_and_url_stripping():
    (doc,) = ingest_corpus([line(["see", "http://x.org/a?b", "this"], ["a"])])
    assert doc.source_words == ["see", "this"]
    (doc,) = ingest_corpus([line("go to www.example.com now", ["a"])])
    assert doc.source_words == ["go", "to", "now"]


def test_ingest_flags_tagless():
    (doc,) = ingest_corpus([line("some words", [])])
    assert doc.tagless and doc.tags == []


def test_ingest_malformed_line_names_line_number():
    lines = [line("a b", ["x"]), "{not json", line("c", ["y"])]
    with pytest.raises(CorpusFormatError, match="line 2"):
        ingest_corpus(lines)


@pytest.mark.parametrize(
    "bad",
    [
        json.dumps({"tags": ["x"]}),
        json.dumps({"text": "a", "tags": "x"}),
        json.dumps({"text": "a |", "tags": ["x"]}),
        json.dumps({"text": "a", "tags": ["x | y"]}),
        json.dumps({"text": "", "tags": ["x"]}),
        json.dumps([1, 2]),
    ],
)
def test_ingest_rejects(bad):
    with pytest.raises(CorpusFormatError, match="line 1"):
        ingest_corpus([bad])


def test_corpus_file_round_trip(tmp_path):
    docs = [Document(["a", "b"], [("x", "y")], "d0"), Document(["c"], [("z",)], "d1")]
    path = tmp_path / "c.jsonl"
    write_corpus(docs, path)
    back = read_corpus(path)
    assert [(d.source_words, d.tags, d.doc_id) for d in back] == [(d.source_words, d.tags, d.doc_id) for d in docs]


# ------------------------------------------------------------------ vocab


def test_target_vocab_has_every_tag_word():
    docs = [Document(["q"], [("a", "b")]), Document(["q"], [("b", "c")])]
    vocab = build_vocab(docs, "target")
    assert len(vocab) == 8
    assert set(vocab.word_of) == set(SPECIALS) | {"a", "b", "c"}
    assert vocab.word_of[:5] == list(SPECIALS)


def test_source_vocab_tie_break_is_lexicographic():
    docs = [Document(["zeta"] * 3 + ["alpha"] * 3 + ["top"] * 5, [("t",)])]
    vocab = build_vocab(docs, "source", cap=7)
    assert "top" in vocab and "alpha" in vocab and "zeta" not in vocab


def test_source_vocab_unknown_maps_to_unk():
    vocab = build_vocab([Document(["a"], [("t",)])], "source")
    assert vocab.decode(vocab.encode(["a", "never"])) == ["a", "<unk>"]


def test_vocab_is_deterministic_and_serialisable():
    docs = [Document(list("abcabd"), [("t",)])]
    v1, v2 = build_vocab(docs, "source", 80000), build_vocab(docs, "source", 80000)
    assert v1 == v2
    assert Vocab.from_dict(v1.to_dict()) == v1


# -------------------------------------------------------------- frequencies


def test_tag_frequency_counts_documents():
    docs = [Document(["w"], [("movie",)]) for _ in range(3)] + [Document(["w"], [("star", "wars")])]
    freq = tag_frequency(docs)
    assert freq["movie"] == 3
    assert freq.count_of(("star", "wars")) == 1
    assert sum(freq.values()) == sum(len(d.tags) for d in docs)


def test_tag_frequency_matches_independent_recount(tmp_path):
    docs = [Document(["w"], [("a",), ("b", "c")]), Document(["w"], [("a",)]), Document(["w"], [("d",), ("b", "c")])]
    path = tmp_path / "c.jsonl"
    write_corpus(docs, path)
    recount = Counter()
    for raw in path.read_text().splitlines():
        recount.update(json.loads(raw)["tags"])
    assert dict(tag_frequency(docs)) == dict(recount)


# -------------------------------------------------------------- reordering

TABLE3 = FrequencyTable({"Movie": 15116, "Star Wars": 1743, "Rogue One: A Star Wars Story": 18})
ROGUE = "Rogue One: A Star Wars Story"


def test_reorder_desc_and_asc_table_counts():
    tags = ["Star Wars", ROGUE, "Movie"]
    assert reorder_tags(tags, TABLE3, "desc") == ["Movie", "Star Wars", ROGUE]
    assert reorder_tags(tags, TABLE3, "asc") == [ROGUE, "Star Wars", "Movie"]


def test_reorder_is_stable_on_ties():
    freq = {"x": 7, "y": 7, "z": 1}
    assert reorder_tags(["y", "x", "z"], freq, "desc") == ["y", "x", "z"]
    assert reorder_tags(["y", "x", "z"], freq, "asc") == ["z", "y", "x"]


def test_reorder_errors():
    with pytest.raises(ContractError, match="'nope'"):
        reorder_tags(["nope"], TABLE3, "asc")
    with pytest.raises(ContractError):
        reorder_tags(["Movie"], TABLE3, "random")
    with pytest.raises(ContractError):
        reorder_tags(["Movie"], TABLE3, "sideways")


def test_reorder_random_is_seeded():
    tags = [f"t{i}" for i in range(10)]
    freq = {t: 1 for t in tags}
    a = reorder_tags(tags, freq, "random", seed=5)
    assert a == reorder_tags(tags, freq, "random", seed=5)
    assert sorted(a) == sorted(tags)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(1, 1000), min_size=1, max_size=8, unique=True), st.sampled_from(["asc", "desc"]))
def test_reorder_properties(counts, order):
    tags = [f"t{i}" for i in range(len(counts))]
    freq = dict(zip(tags, counts))
    out = reorder_tags(tags, freq, order)
    assert sorted(out) == sorted(tags)
    seq = [freq[t] for t in out]
    assert seq == sorted(seq, reverse=order == "desc")
    other = "desc" if order == "asc" else "asc"
    assert out[::-1] == reorder_tags(tags, freq, other)


# ------------------------------------------------------------ tag streams


def test_serialize_example():
    stream = serialize_tags(EXAMPLE_TAGS)
    assert " ".join(stream) == "movie | science fiction movie | Star Wars |"
    assert len(stream) == 9
    assert serialize_tags([["a"]]) == ["a", DELIM]


def test_serialize_rejects_empty():
    with pytest.raises(ContractError):
        serialize_tags([])
    with pytest.raises(ContractError):
        serialize_tags([[]])


@pytest.mark.parametrize(
    "stream, tags, malformed",
    [
        ("w1 w2 | w3 | </s>", [("w1", "w2"), ("w3",)], 0),
        ("w1 | | w2 </s>", [("w1",)], 2),
        ("a | a |", [("a",)], 0),
        ("a | b | </s> c |", [("a",), ("b",)], 0),
        ("", [], 0),
    ],
)
def test_parse_examples(stream, tags, malformed):
    assert parse_tag_stream(stream.split()) == (tags, malformed)


def test_parse_without_dedupe_keeps_repeats():
    assert parse_tag_stream("a | a | b".split(), dedupe=False) == ([("a",), ("a",)], 1)


def test_local_positions_examples():
    assert local_positions(serialize_tags(EXAMPLE_TAGS)) == [0, 1, 0, 1, 2, 3, 0, 1, 2]
    assert local_positions(["a", DELIM]) == [0, 1]
    assert local_positions([]) == []


words = st.text(alphabet="abcdefgh", min_size=1, max_size=4)
tag_lists = st.lists(st.lists(words, min_size=1, max_size=4).map(tuple), min_size=1, max_size=6, unique=True)


@settings(max_examples=200, deadline=None)
@given(tag_lists)
def test_stream_properties(tags):
    stream = serialize_tags(tags)
    assert parse_tag_stream(stream + [EOS]) == (list(tags), 0)
    expected = [p for t in tags for p in list(range(len(t))) + [len(t)]]
    assert local_positions(stream) == expected
    seq = TagSequence.from_tags(tags)
    assert seq.token_stream == stream and seq.local_positions == expected
