"""Text preprocessing, vocabulary construction and bag-of-words encoding."""

from __future__ import annotations

import json
import logging
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError, EmptyDocument, EmptyVocabulary, ValidationError

log = logging.getLogger(__name__)

DEFAULT_MIN_COUNT = 100

_URL_RE = re.compile(r"(?:https?://|www\.)\S+", re.IGNORECASE)
_MENTION_RE = re.compile(r"@\w+")


@dataclass(frozen=True)
class PreprocessConfig:
    stopword_set: frozenset[str] = frozenset()
    lemma_map: Mapping[str, str] | None = None
    min_count: int = DEFAULT_MIN_COUNT
    strip_nonlatin: bool = True
    strip_mentions: bool = True
    strip_urls: bool = True

    def __post_init__(self):
        if self.min_count < 1:
            raise ValidationError(f"min_count must be >= 1, got {self.min_count}")
        if self.lemma_map is not None:
            for key, lemma in self.lemma_map.items():
                if not lemma:
                    raise ValidationError(f"lemma for {key!r} is empty")
        object.__setattr__(self, "stopword_set", frozenset(self.stopword_set))


def _is_latin_or_neutral(ch: str) -> bool:
    if ch.isascii():
        return True
    cat = unicodedata.category(ch)
    if cat.startswith("Z"):
        return True
    if cat.startswith("L") or cat.startswith("M"):
        return "LATIN" in unicodedata.name(ch, "")
    return False


def _strip_punct(token: str) -> str:
    start, end = 0, len(token)
    while start < end and unicodedata.category(token[start])[0] in "PS":
        start += 1
    while end > start and unicodedata.category(token[end - 1])[0] in "PS":
        end -= 1
    return token[start:end]


def tokenize(raw: str, cfg: PreprocessConfig) -> list[str]:
    """Lowercased tokens of ``raw`` after cleaning, stopword removal and lemmatization.

    Stopwords are removed before the lemma map is applied.
    """
    text = raw
    if cfg.strip_urls:
        text = _URL_RE.sub(" ", text)
    if cfg.strip_mentions:
        text = _MENTION_RE.sub(" ", text)
    if cfg.strip_nonlatin:
        text = "".join(ch if _is_latin_or_neutral(ch) else " " for ch in text)
    tokens = []
    for piece in text.lower().split():
        tok = _strip_punct(piece)
        if not tok or tok in cfg.stopword_set:
            continue
        if cfg.lemma_map is not None:
            tok = cfg.lemma_map.get(tok, tok)
        tokens.append(tok)
    return tokens


@dataclass(frozen=True)
class Vocabulary:
    token_of: tuple[str, ...]
    id_of: Mapping[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        id_of = {tok: i for i, tok in enumerate(self.token_of)}
        if len(id_of) != len(self.token_of):
            raise ValidationError("duplicate tokens in vocabulary")
        object.__setattr__(self, "id_of", id_of)

    @property
    def V(self) -> int:
        return len(self.token_of)

    def __len__(self) -> int:
        return len(self.token_of)

    def __contains__(self, token: str) -> bool:
        return token in self.id_of

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            for i, tok in enumerate(self.token_of):
                f.write(f"{tok}\t{i}\n")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        pairs = []
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                try:
                    tok, idx = line.split("\t")
                    pairs.append((int(idx), tok))
                except ValueError:
                    raise DataError(f"{path}:{lineno}: expected 'token<TAB>id'") from None
        pairs.sort()
        if [i for i, _ in pairs] != list(range(len(pairs))):
            raise DataError(f"{path}: vocabulary ids are not dense in [0, V)")
        return cls(tuple(tok for _, tok in pairs))


def build_vocabulary(token_docs: Iterable[Sequence[str]], min_count: int) -> Vocabulary:
    """Keep tokens with corpus frequency >= ``min_count``, ids in first-appearance order."""
    if min_count < 1:
        raise ValidationError(f"min_count must be >= 1, got {min_count}")
    freq: Counter[str] = Counter()
    order: dict[str, None] = {}
    for doc in token_docs:
        for tok in doc:
            freq[tok] += 1
            order.setdefault(tok)
    kept = tuple(tok for tok in order if freq[tok] >= min_count)
    if not kept:
        raise EmptyVocabulary(f"no token occurs at least {min_count} times")
    return Vocabulary(kept)


@dataclass(frozen=True)
class Document:
    """A document as its in-vocabulary token-id sequence.

    The sequence order is kept only for sliding-window statistics; the
    models see the bag of words through :attr:`counts`.
    """

    tokens: tuple[int, ...]
    author: str | None = None
    timestamp_utc: float | None = None

    @cached_property
    def counts(self) -> dict[int, int]:
        return dict(Counter(self.tokens))

    @property
    def ids(self) -> list[int]:
        return list(self.counts)

    @property
    def length(self) -> int:
        return len(self.tokens)

    def __len__(self) -> int:
        return len(self.tokens)

    def bow(self, V: int) -> np.ndarray:
        out = np.zeros(V)
        for w, c in self.counts.items():
            out[w] += c
        return out


def encode(tokens: Sequence[str], vocab: Vocabulary, dedupe: bool = False,
           author: str | None = None, timestamp_utc: float | None = None) -> Document:
    if vocab.V == 0:
        raise EmptyVocabulary("cannot encode against an empty vocabulary")
    ids = [vocab.id_of[t] for t in tokens if t in vocab.id_of]
    if dedupe:
        ids = list(dict.fromkeys(ids))
    if not ids:
        raise EmptyDocument("no in-vocabulary tokens")
    return Document(tuple(ids), author=author, timestamp_utc=timestamp_utc)


class Corpus:
    """Immutable list of documents encoded against one vocabulary."""

    def __init__(self, docs: Sequence[Document], vocab: Vocabulary):
        docs = tuple(docs)
        for i, d in enumerate(docs):
            if d.length == 0:
                raise EmptyDocument(f"document {i} is empty")
            if max(d.tokens) >= vocab.V or min(d.tokens) < 0:
                raise ValidationError(f"document {i} has ids outside [0, {vocab.V})")
        self._docs = docs
        self.vocab = vocab

    @property
    def docs(self) -> tuple[Document, ...]:
        return self._docs

    def __len__(self) -> int:
        return len(self._docs)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return Corpus(self._docs[i], self.vocab)
        return self._docs[i]

    def __iter__(self):
        return iter(self._docs)

    @property
    def V(self) -> int:
        return self.vocab.V

    def subset(self, indices: Iterable[int]) -> "Corpus":
        return Corpus([self._docs[i] for i in indices], self.vocab)

    @property
    def total_tokens(self) -> int:
        return sum(d.length for d in self._docs)

    @cached_property
    def sparse(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """CSR view ``(indptr, word_ids, counts)`` of distinct words per document."""
        indptr = np.zeros(len(self._docs) + 1, dtype=np.int64)
        words, counts = [], []
        for i, d in enumerate(self._docs):
            c = d.counts
            words.extend(c.keys())
            counts.extend(c.values())
            indptr[i + 1] = indptr[i] + len(c)
        return (indptr, np.asarray(words, dtype=np.int64),
                np.asarray(counts, dtype=np.int64))

    def bow_matrix(self) -> np.ndarray:
        out = np.zeros((len(self._docs), self.V))
        indptr, words, counts = self.sparse
        rows = np.repeat(np.arange(len(self._docs)), np.diff(indptr))
        np.add.at(out, (rows, words), counts)
        return out

    def is_deduped(self) -> bool:
        return all(len(d.counts) == d.length for d in self._docs)

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            for d in self._docs:
                rec = {"tokens": list(d.tokens)}
                if d.author is not None:
                    rec["author"] = d.author
                if d.timestamp_utc is not None:
                    rec["timestamp_utc"] = d.timestamp_utc
                f.write(json.dumps(rec, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path, vocab: Vocabulary) -> "Corpus":
        docs = []
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, 1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    docs.append(Document(tuple(int(t) for t in rec["tokens"]),
                                         author=rec.get("author"),
                                         timestamp_utc=rec.get("timestamp_utc")))
                except (ValueError, KeyError, TypeError):
                    raise DataError(f"{path}:{lineno}: malformed corpus record") from None
        return cls(docs, vocab)


@dataclass(frozen=True)
class RawRecord:
    text: str
    author: str | None = None
    timestamp_utc: float | None = None


def read_records(path: str | Path) -> list[RawRecord]:
    """Read line-delimited JSON records with a required ``text`` field."""
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                text = rec["text"]
            except (ValueError, KeyError, TypeError):
                raise DataError(f"{path}:{lineno}: expected a JSON object with a 'text' field") from None
            if not isinstance(text, str):
                raise DataError(f"{path}:{lineno}: 'text' must be a string")
            ts = rec.get("timestamp_utc")
            author = rec.get("author")
            out.append(RawRecord(text, None if author is None else str(author),
                                 None if ts is None else float(ts)))
    return out


def read_wordlist(path: str | Path) -> frozenset[str]:
    with open(path, encoding="utf-8") as f:
        return frozenset(w for w in (line.strip().lower() for line in f) if w)


def read_lemma_map(path: str | Path) -> dict[str, str]:
    out = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[1]:
                raise DataError(f"{path}:{lineno}: expected 'surface<TAB>lemma'")
            out[parts[0].lower()] = parts[1].lower()
    return out


def build_corpus(records: Sequence[RawRecord], cfg: PreprocessConfig,
                 dedupe: bool = False,
                 vocab: Vocabulary | None = None) -> tuple[Corpus, int]:
    """Run the whole pipeline; returns the corpus and the number of dropped documents.

    With ``vocab`` given, documents are encoded against it instead of a
    freshly built vocabulary.
    """
    token_docs = [tokenize(r.text, cfg) for r in records]
    if dedupe:
        token_docs = [list(dict.fromkeys(t)) for t in token_docs]
    if vocab is None:
        vocab = build_vocabulary(token_docs, cfg.min_count)
    docs = []
    dropped = 0
    for rec, toks in zip(records, token_docs):
        try:
            docs.append(encode(toks, vocab, dedupe, rec.author, rec.timestamp_utc))
        except EmptyDocument:
            dropped += 1
    if dropped:
        log.info("dropped %d documents left empty after filtering", dropped)
    if not docs:
        raise EmptyDocument("every document is empty after filtering")
    return Corpus(docs, vocab), dropped
