"""Command-line pipeline: ingest, train, eval, topics, gridsearch, signal.

Settings resolve as flags over a ``--config`` JSON file over built-in
defaults. Every command writes the resolved settings to ``config.json``
in its output directory. Exit codes: 0 success, 2 invalid input or
configuration, 3 data problems, 4 numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import corpus as corpus_mod
from . import dmm, evaluation, lda, persist, prodlda, selection, signals
from .errors import DataError, EmptyDocument, ShortTopicsError, ValidationError

log = logging.getLogger("shorttopics")

VOCAB_FILE = "vocab.tsv"
CORPUS_FILE = "corpus.jsonl"
MODEL_FILE = "model.json"
CONFIG_FILE = "config.json"


# --- option tables -------------------------------------------------------------

def _csv_ints(s) -> list[int]:
    if isinstance(s, (list, tuple)):
        return [int(v) for v in s]
    try:
        return [int(v) for v in str(s).split(",") if v.strip()]
    except ValueError:
        raise ValidationError(f"expected comma-separated integers, got {s!r}") from None


def _csv_strs(s) -> list[str]:
    if isinstance(s, (list, tuple)):
        return [str(v) for v in s]
    return [v.strip() for v in str(s).split(",") if v.strip()]


def _opt_float(s):
    return None if s is None or s == "auto" else float(s)


@dataclass(frozen=True)
class Opt:
    key: str
    default: Any
    type: Callable | None
    help: str
    required: bool = False
    is_input: bool = False   # path that must exist before work starts
    choices: tuple | None = None

    @property
    def flag(self) -> str:
        return "--" + self.key.replace("_", "-")


COMMON = [
    Opt("seed", 0, int, "random seed"),
    Opt("out", None, str, "output directory", required=True),
]
PREPROCESS = [
    Opt("stopwords", None, str, "stopword list, one word per line", is_input=True),
    Opt("lemmas", None, str, "lemma map, 'surface<TAB>lemma' per line", is_input=True),
    Opt("strip_nonlatin", True, bool, "drop non-Latin characters"),
    Opt("strip_mentions", True, bool, "drop @mentions"),
    Opt("strip_urls", True, bool, "drop URLs"),
    Opt("dedupe", False, bool, "keep each word once per document"),
]
INGEST = [
    Opt("input", None, str, "line-delimited JSON records with a 'text' field",
        required=True, is_input=True),
    Opt("min_count", 100, int, "minimum corpus frequency for a vocabulary word"),
    *PREPROCESS, *COMMON,
]
TRAIN_COMMON = [
    Opt("corpus", None, str, "directory written by 'ingest'", required=True, is_input=True),
    Opt("k", None, int, "number of topics", required=True),
    *COMMON,
]
BACKEND = Opt("backend", "auto", str, "kernel backend", choices=("auto", "cython", "python"))
TRAIN = {
    "dmm": [*TRAIN_COMMON, BACKEND,
            Opt("alpha", 0.1, float, "topic prior"),
            Opt("beta", 0.1, float, "topic-word prior"),
            Opt("iters", 30, int, "Gibbs sweeps")],
    "lda": [*TRAIN_COMMON, BACKEND,
            Opt("alpha", "auto", _opt_float, "document-topic prior (auto = 1/K)"),
            Opt("eta", "auto", _opt_float, "topic-word prior (auto = 1/K)"),
            Opt("kappa", 0.75, float, "learning-rate decay exponent"),
            Opt("tau0", 64.0, float, "learning-rate delay"),
            Opt("batch_size", 256, int, "minibatch size"),
            Opt("passes", 1, int, "passes over the corpus"),
            Opt("tol", 1e-3, float, "e-step convergence tolerance"),
            Opt("max_inner", 100, int, "e-step iteration cap")],
    "prodlda": [*TRAIN_COMMON,
                Opt("alpha", "auto", _opt_float, "symmetric Dirichlet prior (auto = 1/K)"),
                Opt("hidden", "100,100", _csv_ints, "encoder hidden widths"),
                Opt("dropout", 0.2, float, "dropout probability"),
                Opt("lr", 1e-3, float, "Adam learning rate"),
                Opt("batch_size", 256, int, "minibatch size"),
                Opt("max_epochs", 100, int, "epoch cap"),
                Opt("patience", 10, int, "early-stopping patience in epochs"),
                Opt("val_fraction", 0.3, float, "validation share of the documents"),
                Opt("count_weighted", False, bool, "weight reconstruction by word counts"),
                Opt("decoder_bn", False, bool, "batch-normalize decoder logits")],
}
EVAL = [
    Opt("model", None, str, "model file", required=True, is_input=True),
    Opt("corpus", None, str, "evaluation corpus directory", required=True, is_input=True),
    Opt("metrics", "umass,uci,npmi,perplexity", _csv_strs, "comma-separated metrics"),
    Opt("n", 20, int, "top words per topic"),
    Opt("omega", 20, int, "sliding-window length for uci/npmi"),
    Opt("epsilon", 1e-12, float, "smoothing added to co-occurrence probabilities"),
    *COMMON,
]
TOPICS = [
    Opt("model", None, str, "model file", required=True, is_input=True),
    Opt("corpus", None, str, "corpus directory for marginal word probabilities",
        required=True, is_input=True),
    Opt("lambda", 0.3, float, "relevance weight (1 = rank by topic probability)"),
    Opt("n", 20, int, "words per topic"),
    *COMMON,
]
GRID_COMMON = [
    Opt("corpus", None, str, "directory written by 'ingest'", required=True, is_input=True),
    Opt("k_values", ",".join(map(str, selection.K_VALUES)), _csv_ints,
        "comma-separated topic counts"),
    Opt("folds", 5, int, "cross-validation folds"),
    *COMMON,
]
GRID = {
    "dmm": [*GRID_COMMON, BACKEND, Opt("iters", 30, int, "Gibbs sweeps")],
    "lda": [*GRID_COMMON, BACKEND,
            Opt("batch_size", 256, int, "minibatch size"),
            Opt("passes", 1, int, "passes over the corpus")],
}
SIGNAL = [
    Opt("model", None, str, "trained DMM model file", required=True, is_input=True),
    Opt("tweets", None, str, "timestamped line-delimited JSON records",
        required=True, is_input=True),
    Opt("prices", None, str, "daily closes, CSV 'date,close'", required=True, is_input=True),
    Opt("positive", None, str, "positive lexicon, one word per line",
        required=True, is_input=True),
    Opt("negative", None, str, "negative lexicon, one word per line",
        required=True, is_input=True),
    *PREPROCESS, *COMMON,
]


def _add_options(p: argparse.ArgumentParser, opts: list[Opt]) -> None:
    p.add_argument("--config", default=argparse.SUPPRESS,
                   help="JSON file of settings; flags override it")
    for o in opts:
        shown = "required" if o.required else f"default: {o.default}"
        kw = dict(dest=o.key, default=argparse.SUPPRESS, help=f"{o.help} ({shown})")
        if o.type is bool:
            p.add_argument(o.flag, action=argparse.BooleanOptionalAction, **kw)
        else:
            p.add_argument(o.flag, type=o.type or str, choices=o.choices, **kw)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="shorttopics", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)
    _add_options(sub.add_parser("ingest", help="tokenize raw records into a corpus"), INGEST)
    train = sub.add_parser("train", help="train a topic model")
    tsub = train.add_subparsers(dest="kind", required=True)
    for kind, opts in TRAIN.items():
        _add_options(tsub.add_parser(kind, help=f"train {kind}"), opts)
    _add_options(sub.add_parser("eval", help="coherence and held-out perplexity"), EVAL)
    _add_options(sub.add_parser("topics", help="relevance-ranked top words"), TOPICS)
    grid = sub.add_parser("gridsearch", help="cross-validated hyperparameter grid")
    gsub = grid.add_subparsers(dest="kind", required=True)
    for kind, opts in GRID.items():
        _add_options(gsub.add_parser(kind, help=f"grid search {kind}"), opts)
    _add_options(sub.add_parser("signal", help="regress next-day returns on daily topics"),
                 SIGNAL)
    return ap


def _opts_for(ns) -> list[Opt]:
    return {"ingest": INGEST, "eval": EVAL, "topics": TOPICS, "signal": SIGNAL,
            "train": TRAIN.get(getattr(ns, "kind", None)),
            "gridsearch": GRID.get(getattr(ns, "kind", None))}[ns.command]


def resolve_config(ns: argparse.Namespace, opts: list[Opt]) -> dict[str, Any]:
    """Merge defaults, the optional config file and explicit flags."""
    cfg = {o.key: o.default for o in opts}
    given = vars(ns)
    if "config" in given:
        try:
            data = json.loads(Path(given["config"]).read_text(encoding="utf-8"))
        except OSError as exc:
            raise DataError(f"cannot read config file: {exc}") from None
        except ValueError as exc:
            raise ValidationError(f"config file is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ValidationError("config file must hold a JSON object")
        unknown = sorted(set(data) - set(cfg))
        if unknown:
            raise ValidationError(f"unknown config keys: {', '.join(unknown)}")
        cfg.update(data)
    for o in opts:
        if o.key in given:
            cfg[o.key] = given[o.key]
    for o in opts:
        v = cfg[o.key]
        if v is None:
            if o.required:
                raise ValidationError(f"{o.flag} is required")
            continue
        if o.type is bool:
            if not isinstance(v, bool):
                raise ValidationError(f"{o.key} must be true or false")
        elif o.type is not None:
            try:
                v = o.type(v)
            except (TypeError, ValueError):
                raise ValidationError(f"{o.key}: cannot interpret {v!r}") from None
        if o.choices and v not in o.choices:
            raise ValidationError(f"{o.key} must be one of {', '.join(o.choices)}")
        cfg[o.key] = v
    for o in opts:
        if o.is_input and cfg[o.key] is not None and not Path(cfg[o.key]).exists():
            raise DataError(f"{o.flag}: {cfg[o.key]} does not exist")
    return cfg


def _prepare_out(cfg: dict, header: dict) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    echo = {**header, **{k: v for k, v in cfg.items() if k != "out"}}
    (out / CONFIG_FILE).write_text(json.dumps(echo, sort_keys=True, indent=1) + "\n",
                                   encoding="utf-8")
    return out


def _backend(cfg: dict) -> str | None:
    name = cfg.get("backend", "auto")
    return None if name == "auto" else name


def _load_corpus(path) -> corpus_mod.Corpus:
    d = Path(path)
    for name in (VOCAB_FILE, CORPUS_FILE):
        if not (d / name).exists():
            raise DataError(f"{d}: missing {name}; run 'ingest' first")
    return corpus_mod.Corpus.load(d / CORPUS_FILE, corpus_mod.Vocabulary.load(d / VOCAB_FILE))


def _preprocess_config(cfg: dict, min_count: int = 1) -> corpus_mod.PreprocessConfig:
    stop = corpus_mod.read_wordlist(cfg["stopwords"]) if cfg["stopwords"] else frozenset()
    lemmas = corpus_mod.read_lemma_map(cfg["lemmas"]) if cfg["lemmas"] else {}
    return corpus_mod.PreprocessConfig(
        stopword_set=stop, lemma_map=lemmas, min_count=min_count,
        strip_nonlatin=cfg["strip_nonlatin"], strip_mentions=cfg["strip_mentions"],
        strip_urls=cfg["strip_urls"])


def _write_rows(path: Path, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# --- commands --------------------------------------------------------------------

def cmd_ingest(cfg: dict) -> None:
    records = corpus_mod.read_records(cfg["input"])
    if not records:
        raise DataError(f"{cfg['input']}: no records")
    corpus, dropped = corpus_mod.build_corpus(
        records, _preprocess_config(cfg, cfg["min_count"]), dedupe=cfg["dedupe"])
    out = _prepare_out(cfg, {"command": "ingest"})
    corpus.vocab.save(out / VOCAB_FILE)
    corpus.save(out / CORPUS_FILE)
    print(f"documents {len(corpus)}  vocabulary {corpus.V}  dropped {dropped}")


def _dmm_params(cfg: dict, K: int, **over) -> dmm.DmmParams:
    base = dict(K=K, alpha=cfg.get("alpha", 0.1), beta=cfg.get("beta", 0.1),
                iterations=cfg["iters"], seed=cfg["seed"])
    return dmm.DmmParams(**{**base, **over})


def _lda_params(cfg: dict, K: int, **over) -> lda.LdaParams:
    base = dict(K=K, alpha=cfg.get("alpha"), eta=cfg.get("eta"),
                kappa=cfg.get("kappa", 0.75), tau0=cfg.get("tau0", 64.0),
                batch_size=cfg["batch_size"], passes=cfg["passes"], seed=cfg["seed"],
                tol=cfg.get("tol", 1e-3), max_inner=cfg.get("max_inner", 100))
    return lda.LdaParams(**{**base, **over})


def cmd_train(kind: str, cfg: dict) -> None:
    # build the parameter object first so bad settings fail before any I/O
    if kind == "dmm":
        params = _dmm_params(cfg, cfg["k"])
    elif kind == "lda":
        params = _lda_params(cfg, cfg["k"])
    else:
        params = prodlda.ProdLdaConfig(
            K=cfg["k"], alpha=cfg["alpha"], encoder_hidden=tuple(cfg["hidden"]),
            dropout_p=cfg["dropout"], lr=cfg["lr"], batch_size=cfg["batch_size"],
            max_epochs=cfg["max_epochs"], patience=cfg["patience"],
            val_fraction=cfg["val_fraction"], seed=cfg["seed"],
            count_weighted=cfg["count_weighted"], decoder_bn=cfg["decoder_bn"])
    corpus = _load_corpus(cfg["corpus"])
    out = _prepare_out(cfg, {"command": "train", "kind": kind})
    if kind == "dmm":
        occupied = []
        model = dmm.train(corpus, params, _backend(cfg),
                          callback=lambda it, st: occupied.append(
                              (it, int(np.count_nonzero(st.m)))))
        persist.write_labels(out / "labels.tsv", model.labels)
        _write_rows(out / "train_log.csv", ["sweep", "occupied_topics"], occupied)
    elif kind == "lda":
        model = lda.train(corpus, params, _backend(cfg))
        _write_rows(out / "train_log.csv", ["t", "rho", "batch_elbo"],
                    [(t, repr(r), repr(e)) for t, r, e in model.history])
    else:
        model = prodlda.train(corpus, params)
        _write_rows(out / "train_log.csv", ["epoch", "train_loss", "val_loss"],
                    [(e, repr(float(a)), repr(float(b))) for e, a, b in model.log.epochs])
    persist.save_model(model, out / MODEL_FILE)
    print(f"trained {kind} K={cfg['k']} on {len(corpus)} documents -> {out / MODEL_FILE}")


def _shared_top_words(model, corpus: corpus_mod.Corpus, N: int) -> list[list[int]]:
    """Top-N words of each topic that occur in ``corpus``, as corpus word ids."""
    phi = evaluation.topic_word_of(model)
    model_vocab = phi.vocab or corpus.vocab
    occurring = {corpus.vocab.token_of[w] for d in corpus for w in d.counts}
    present = {i for i, tok in enumerate(model_vocab.token_of) if tok in occurring}
    top = evaluation.topic_top_words(phi, N, present)
    return [[corpus.vocab.id_of[model_vocab.token_of[w]] for w in row] for row in top]


def cmd_eval(cfg: dict) -> None:
    metrics = cfg["metrics"]
    unknown = sorted(set(metrics) - {"umass", "uci", "npmi", "perplexity"})
    if unknown or not metrics:
        raise ValidationError(f"unknown metrics: {', '.join(unknown) or '(none given)'}")
    model = persist.load_model(cfg["model"])
    corpus = _load_corpus(cfg["corpus"])
    if "perplexity" in metrics:
        evaluation.check_vocab(model, corpus)
    out = _prepare_out(cfg, {"command": "eval"})
    topics = None
    for metric in metrics:
        if metric == "perplexity":
            ll = evaluation.heldout_loglik(model, corpus, cfg["seed"])
            n_tok = evaluation.heldout_tokens(model, corpus)
            ppl = evaluation.perplexity(ll, n_tok)
            _write_rows(out / "perplexity.csv", ["K", "documents", "tokens", "loglik", "perplexity"],
                        [[model.K, len(corpus), n_tok, repr(ll), repr(ppl)]])
            print(f"perplexity {ppl:.6g}")
            continue
        if topics is None:
            topics = _shared_top_words(model, corpus, cfg["n"])
        report = evaluation.coherence(metric, topics, corpus, cfg["n"], cfg["omega"],
                                      cfg["epsilon"])
        report.write_csv(out / f"coherence_{metric}.csv")
        print(f"{metric} {report.aggregate:.6g}")


def cmd_topics(cfg: dict) -> None:
    model = persist.load_model(cfg["model"])
    corpus = _load_corpus(cfg["corpus"])
    evaluation.check_vocab(model, corpus)
    phi = evaluation.topic_word_of(model)
    scores = evaluation.relevance(phi, evaluation.word_probabilities(corpus), cfg["lambda"])
    tokens = corpus.vocab.token_of
    table = [[tokens[w] for w in evaluation.top_words(row, cfg["n"])] for row in scores]
    out = _prepare_out(cfg, {"command": "topics"})
    evaluation.write_top_words(out / "top_words.tsv", table)
    for k, words in enumerate(table):
        print(f"{k}\t{','.join(words)}")


def cmd_gridsearch(kind: str, cfg: dict) -> None:
    if cfg["folds"] < 2 or not cfg["k_values"] or min(cfg["k_values"]) < 1:
        raise ValidationError("need folds >= 2 and positive K values")
    corpus = _load_corpus(cfg["corpus"])
    out = _prepare_out(cfg, {"command": "gridsearch", "kind": kind})
    axes = selection.DMM_GRID if kind == "dmm" else selection.LDA_GRID
    grid = selection.Grid(axes)
    backend = _backend(cfg)

    def scorer(model, test):
        return evaluation.heldout_perplexity(model, test, cfg["seed"])

    results = {}
    for K in cfg["k_values"]:
        if kind == "dmm":
            def trainer(train, cell, K=K):
                return dmm.train(train, _dmm_params(cfg, K, **cell), backend)
        else:
            def trainer(train, cell, K=K):
                return lda.train(train, _lda_params(cfg, K, **cell), backend)
        res = selection.grid_search(trainer, scorer, corpus, grid, cfg["folds"], cfg["seed"])
        results[K] = res
        cell = ", ".join(f"{k}={v}" for k, v in res.best.items())
        print(f"K={K} best {cell} perplexity {res.mean[res.best_index]:.6g}")
    selection.write_csv(out / "grid.csv", results, list(axes))
    K_best = min(results, key=lambda K: results[K].mean[results[K].best_index])
    best = results[K_best]
    print(f"best K={K_best} " + ", ".join(f"{k}={v}" for k, v in best.best.items()))


def cmd_signal(cfg: dict) -> None:
    model = persist.load_model(cfg["model"])
    if not isinstance(model, dmm.DmmModel):
        raise ValidationError("signal needs a DMM model (one topic per document)")
    if model.vocab is None:
        raise DataError("model file carries no vocabulary")
    lexicon = signals.SentimentLexicon(corpus_mod.read_wordlist(cfg["positive"]),
                                       corpus_mod.read_wordlist(cfg["negative"]))
    prices = signals.read_prices(cfg["prices"])
    pre = _preprocess_config(cfg)
    rows, empty, unknown = [], 0, 0
    for i, rec in enumerate(corpus_mod.read_records(cfg["tweets"])):
        if rec.timestamp_utc is None:
            raise DataError(f"{cfg['tweets']}: record {i + 1} has no timestamp_utc")
        tokens = corpus_mod.tokenize(rec.text, pre)
        if not tokens:
            empty += 1
            continue
        try:
            doc = corpus_mod.encode(tokens, model.vocab, cfg["dedupe"])
        except EmptyDocument:
            unknown += 1
            continue
        p, n = signals.sentiment(tokens, lexicon)
        rows.append((rec.timestamp_utc, dmm.assign(model, doc), p, n))
    if not rows:
        raise DataError("no tweet could be assigned a topic")
    features = signals.daily_aggregate(rows, model.K)
    X, y, dates = signals.align_next_day_returns(features, prices)
    result, dropped = signals.ols_fit_present(X, y)
    out = _prepare_out(cfg, {"command": "signal"})
    names = signals.feature_names(model.K)
    if dropped.size:
        log.warning("left out of the regression (no tweets assigned): %s",
                    ", ".join(names[i][0] for i in dropped))
    result.write_csv(out / "regression.csv", names)
    by_date = {f.date: f for f in features}
    _write_rows(out / "daily.csv",
                ["date", "tweets", "p_d", "n_d", *[f"t_{k}" for k in range(model.K)], "next_return"],
                [[d.isoformat(), by_date[d].tweet_count, repr(by_date[d].p_d), repr(by_date[d].n_d),
                  *[repr(float(v)) for v in by_date[d].t_d], repr(float(r))]
                 for d, r in zip(dates, y)])
    print(f"tweets {len(rows)} (skipped {empty} empty, {unknown} out of vocabulary); "
          f"days {len(features)}; regression rows {len(y)}; R^2 {result.r_squared:.4f}")
    for name, var, coef, _, t, p, star in result.table(names):
        print(f"{name:22s} {float(coef):+.5f}  t={float(t):+.3f}  p={float(p):.3f} {star}")


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    ns = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = resolve_config(ns, _opts_for(ns))
        if ns.command == "ingest":
            cmd_ingest(cfg)
        elif ns.command == "train":
            cmd_train(ns.kind, cfg)
        elif ns.command == "eval":
            cmd_eval(cfg)
        elif ns.command == "topics":
            cmd_topics(cfg)
        elif ns.command == "gridsearch":
            cmd_gridsearch(ns.kind, cfg)
        else:
            cmd_signal(cfg)
    except ShortTopicsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DataError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
