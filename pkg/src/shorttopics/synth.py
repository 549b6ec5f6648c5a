"""Planted-topic corpus generators and the bundled end-to-end fixture.

Run ``python -m shorttopics.synth OUTDIR`` to (re)write the fixture files.
"""

from __future__ import annotations

import argparse
import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Corpus, Document, Vocabulary


@dataclass(frozen=True)
class Planted:
    corpus: Corpus
    labels: np.ndarray      # dominant (DMM: only) topic per document
    phi: np.ndarray         # K x V generating topic-word matrix
    theta: np.ndarray       # DMM: corpus topic proportions; LDA: D x K doc mixtures


def block_topics(K: int, words_per_topic: int) -> np.ndarray:
    """Uniform topics over disjoint vocabulary blocks."""
    V = K * words_per_topic
    phi = np.zeros((K, V))
    for k in range(K):
        phi[k, k * words_per_topic:(k + 1) * words_per_topic] = 1.0 / words_per_topic
    return phi


def _vocab(V: int) -> Vocabulary:
    return Vocabulary(tuple(f"w{i:03d}" for i in range(V)))


def planted_dmm(n_docs: int, K: int, words_per_topic: int = 20, doc_len: int = 20,
                dedupe: bool = True, seed: int = 0, theta: np.ndarray | None = None,
                phi: np.ndarray | None = None) -> Planted:
    """One topic per document, ``doc_len`` i.i.d. word draws, optionally deduplicated."""
    rng = np.random.default_rng(seed)
    phi = block_topics(K, words_per_topic) if phi is None else np.asarray(phi)
    theta = np.full(K, 1.0 / K) if theta is None else np.asarray(theta)
    V = phi.shape[1]
    labels = rng.choice(K, size=n_docs, p=theta)
    docs = []
    for k in labels:
        toks = rng.choice(V, size=doc_len, p=phi[k]).tolist()
        if dedupe:
            toks = list(dict.fromkeys(toks))
        docs.append(Document(tuple(toks)))
    return Planted(Corpus(docs, _vocab(V)), labels, phi, theta)


def planted_lda(n_docs: int, K: int, words_per_topic: int = 20, doc_len: int = 40,
                alpha: float = 0.5, seed: int = 0, phi: np.ndarray | None = None) -> Planted:
    """Per-document Dirichlet mixtures, per-token topic draws."""
    rng = np.random.default_rng(seed)
    phi = block_topics(K, words_per_topic) if phi is None else np.asarray(phi)
    V = phi.shape[1]
    theta = rng.dirichlet(np.full(K, alpha), size=n_docs)
    docs = []
    for th in theta:
        z = rng.choice(K, size=doc_len, p=th)
        toks = [int(rng.choice(V, p=phi[k])) for k in z]
        docs.append(Document(tuple(toks)))
    return Planted(Corpus(docs, _vocab(V)), theta.argmax(axis=1), phi, theta)


# --- end-to-end fixture -------------------------------------------------------

TOPIC_WORDS = [
    ["bitcoin", "price", "chart", "resistance", "support", "breakout", "candle", "trend"],
    ["mining", "hashrate", "energy", "miner", "difficulty", "power", "rig", "block"],
    ["regulation", "sec", "government", "ban", "law", "policy", "court", "tax"],
    ["wallet", "exchange", "binance", "deposit", "withdraw", "fee", "transfer", "account"],
    ["elon", "tesla", "musk", "tweet", "doge", "pump", "meme", "moon"],
]
POSITIVE = ["good", "great", "bullish", "win", "happy", "strong", "gain", "love"]
NEGATIVE = ["bad", "bearish", "crash", "loss", "fear", "weak", "scam", "dump"]
STOPWORDS = ["the", "a", "to", "is", "of", "and", "in", "it", "on", "for", "this", "with"]


def write_fixture(outdir: str | Path, n_docs: int = 500, n_days: int = 60, seed: int = 7) -> None:
    """Synthetic timestamped tweets, daily closes, stopwords and sentiment lexicons."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    K = len(TOPIC_WORDS)
    day0 = 1_609_459_200  # 2021-01-01T00:00:00Z
    days = np.sort(rng.integers(0, n_days, size=n_docs))
    day_mood = rng.normal(0.0, 1.0, size=n_days)
    with open(out / "tweets.jsonl", "w", encoding="utf-8", newline="\n") as f:
        for i, day in enumerate(days):
            k = int(rng.integers(K))
            words = list(rng.choice(TOPIC_WORDS[k], size=int(rng.integers(4, 9))))
            mood = day_mood[day] + rng.normal(0.0, 0.5)
            lex = POSITIVE if mood > 0 else NEGATIVE
            words += list(rng.choice(lex, size=int(rng.integers(1, 3))))
            words += list(rng.choice(STOPWORDS, size=int(rng.integers(1, 4))))
            rng.shuffle(words)
            text = " ".join(words)
            if i % 7 == 0:
                text = text.capitalize() + "! @trader https://t.co/x" + str(i)
            ts = day0 + int(day) * 86400 + int(rng.integers(0, 86400))
            rec = {"text": text, "author": f"u{int(rng.integers(50))}", "timestamp_utc": ts}
            f.write(json.dumps(rec, sort_keys=True) + "\n")
    close = 30000.0
    with open(out / "prices.csv", "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["date", "close"])
        for day in range(n_days + 1):
            date = np.datetime64("2021-01-01") + np.timedelta64(day, "D")
            w.writerow([str(date), f"{close:.2f}"])
            drift = 0.01 * day_mood[day] if day < n_days else 0.0
            close *= 1.0 + drift + rng.normal(0.0, 0.01)
    for name, words in (("positive.txt", POSITIVE), ("negative.txt", NEGATIVE),
                        ("stopwords.txt", STOPWORDS)):
        (out / name).write_text("\n".join(words) + "\n", encoding="utf-8")


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("outdir")
    ap.add_argument("--docs", type=int, default=500)
    ap.add_argument("--days", type=int, default=60)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args(argv)
    write_fixture(args.outdir, args.docs, args.days, args.seed)


if __name__ == "__main__":
    main()
