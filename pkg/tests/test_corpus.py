import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from shorttopics.corpus import (Corpus, Document, PreprocessConfig, RawRecord, Vocabulary,
                                build_corpus, build_vocabulary, encode, read_lemma_map,
                                read_records, read_wordlist, tokenize)
from shorttopics.errors import (DataError, EmptyDocument, EmptyVocabulary, ValidationError)


def test_tokenize_strips_mentions_urls_stopwords():
    cfg = PreprocessConfig(stopword_set={"to", "the"}, min_count=1)
    assert tokenize("Bitcoin to the MOON! @elon https://x.co", cfg) == ["bitcoin", "moon"]


def test_tokenize_empty():
    assert tokenize("", PreprocessConfig()) == []


def test_tokenize_lemma_map():
    cfg = PreprocessConfig(lemma_map={"running": "run", "runs": "run"})
    assert tokenize("running runs", cfg) == ["run", "run"]


def test_tokenize_drops_nonlatin_and_keeps_accented_latin():
    cfg = PreprocessConfig()
    assert tokenize("café 比特币 price", cfg) == ["café", "price"]
    assert tokenize("比特币", cfg) == []


def test_tokenize_flags_off_keep_text():
    cfg = PreprocessConfig(strip_mentions=False, strip_urls=False)
    # the mention survives as a word once its leading "@" is stripped as punctuation
    assert tokenize("hi @bob www.x.org", cfg) == ["hi", "bob", "www.x.org"]


def test_tokenize_stopwords_before_lemmas():
    # "runs" is a stopword only in surface form; its lemma survives elsewhere
    cfg = PreprocessConfig(stopword_set={"runs"}, lemma_map={"running": "runs"})
    assert tokenize("runs running", cfg) == ["runs"]


def test_preprocess_config_validation():
    with pytest.raises(ValidationError):
        PreprocessConfig(min_count=0)
    with pytest.raises(ValidationError):
        PreprocessConfig(lemma_map={"a": ""})


def test_build_vocabulary_examples():
    assert build_vocabulary([["a", "b"], ["a"]], 2).token_of == ("a",)
    assert build_vocabulary([["a"]], 1).id_of == {"a": 0}
    with pytest.raises(EmptyVocabulary):
        build_vocabulary([["a"], ["b"]], 3)


def test_build_vocabulary_first_appearance_order():
    v = build_vocabulary([["c", "a"], ["b", "a", "c"]], 1)
    assert v.token_of == ("c", "a", "b")


def test_encode_examples():
    vocab = Vocabulary(("a", "b"))
    d = encode(["a", "a", "b"], vocab, dedupe=False)
    assert d.counts == {0: 2, 1: 1} and d.length == 3
    d = encode(["a", "a", "b"], vocab, dedupe=True)
    assert d.counts == {0: 1, 1: 1} and d.length == 2
    with pytest.raises(EmptyDocument):
        encode(["zzz"], Vocabulary(("a",)))


def test_vocabulary_roundtrip(tmp_path):
    v = Vocabulary(("x", "y", "zé"))
    v.save(tmp_path / "v.tsv")
    assert (tmp_path / "v.tsv").read_text(encoding="utf-8") == "x\t0\ny\t1\nzé\t2\n"
    assert Vocabulary.load(tmp_path / "v.tsv") == v


def test_vocabulary_load_rejects_gaps(tmp_path):
    (tmp_path / "v.tsv").write_text("a\t0\nb\t2\n")
    with pytest.raises(DataError):
        Vocabulary.load(tmp_path / "v.tsv")


def test_vocabulary_rejects_duplicates():
    with pytest.raises(ValidationError):
        Vocabulary(("a", "a"))


def test_corpus_roundtrip(tmp_path):
    vocab = Vocabulary(("a", "b", "c"))
    c = Corpus([Document((0, 2, 2), author="u1", timestamp_utc=5.0), Document((1,))], vocab)
    c.save(tmp_path / "c.jsonl")
    back = Corpus.load(tmp_path / "c.jsonl", vocab)
    assert [d.tokens for d in back] == [(0, 2, 2), (1,)]
    assert back[0].author == "u1" and back[0].timestamp_utc == 5.0
    assert back.total_tokens == 4


def test_corpus_rejects_bad_documents():
    vocab = Vocabulary(("a",))
    with pytest.raises(EmptyDocument):
        Corpus([Document(())], vocab)
    with pytest.raises(ValidationError):
        Corpus([Document((3,))], vocab)


def test_sparse_view_and_bow(make_corpus):
    c = make_corpus([[0, 0, 2], [1]], V=3)
    indptr, words, counts = c.sparse
    assert indptr.tolist() == [0, 2, 3]
    assert words.tolist() == [0, 2, 1] and counts.tolist() == [2, 1, 1]
    assert c.bow_matrix().tolist() == [[2, 0, 1], [0, 1, 0]]
    assert not c.is_deduped()


def test_build_corpus_drops_empty_and_dedupes():
    recs = [RawRecord("apple apple pie"), RawRecord("the the"), RawRecord("pie apple")]
    cfg = PreprocessConfig(stopword_set={"the"}, min_count=2)
    corpus, dropped = build_corpus(recs, cfg, dedupe=True)
    assert dropped == 1 and len(corpus) == 2
    assert corpus.is_deduped()
    assert corpus.vocab.token_of == ("apple", "pie")


def test_build_corpus_dedupes_before_counting():
    # "x" appears twice but only in one document; after dedupe it counts once
    recs = [RawRecord("x x y"), RawRecord("y")]
    corpus, _ = build_corpus(recs, PreprocessConfig(min_count=2), dedupe=True)
    assert corpus.vocab.token_of == ("y",)


def test_build_corpus_against_given_vocab():
    vocab = Vocabulary(("pie",))
    corpus, dropped = build_corpus([RawRecord("pie cake"), RawRecord("cake")],
                                   PreprocessConfig(min_count=1), vocab=vocab)
    assert corpus.vocab is vocab and dropped == 1


def test_build_corpus_all_empty():
    with pytest.raises(EmptyDocument):
        build_corpus([RawRecord("the")], PreprocessConfig(stopword_set={"the"}, min_count=1),
                     vocab=Vocabulary(("x",)))


def test_readers(tmp_path):
    p = tmp_path / "r.jsonl"
    p.write_text(json.dumps({"text": "hi", "author": 7, "timestamp_utc": 3}) + "\n\n"
                 + json.dumps({"text": "yo"}) + "\n")
    recs = read_records(p)
    assert recs == [RawRecord("hi", "7", 3.0), RawRecord("yo")]
    p.write_text('{"txt": "no"}\n')
    with pytest.raises(DataError):
        read_records(p)
    (tmp_path / "s.txt").write_text("The\n\nA\n")
    assert read_wordlist(tmp_path / "s.txt") == {"the", "a"}
    (tmp_path / "l.tsv").write_text("Ran\trun\n")
    assert read_lemma_map(tmp_path / "l.tsv") == {"ran": "run"}
    (tmp_path / "l.tsv").write_text("ran run\n")
    with pytest.raises(DataError):
        read_lemma_map(tmp_path / "l.tsv")


words = st.lists(st.lists(st.sampled_from("abcdefg"), min_size=1, max_size=8),
                 min_size=1, max_size=10)


@given(words, st.integers(1, 4))
def test_vocabulary_frequency_property(docs, min_count):
    try:
        v = build_vocabulary(docs, min_count)
    except EmptyVocabulary:
        return
    for tok in v.token_of:
        assert sum(d.count(tok) for d in docs) >= min_count
    assert all(v.id_of[t] == i for i, t in enumerate(v.token_of))


@given(words, st.booleans())
def test_encode_idempotent(docs, dedupe):
    v = build_vocabulary(docs, 1)
    for toks in docs:
        d = encode(toks, v, dedupe)
        again = encode([v.token_of[i] for i in d.tokens], v, dedupe)
        assert again == d
        assert d.length == sum(d.counts.values())
        if dedupe:
            assert max(d.counts.values()) == 1 and d.length == len(d.counts)
