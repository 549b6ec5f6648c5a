"""Daily topic/sentiment features and their regression on next-day returns."""

from __future__ import annotations

import csv
import datetime as dt
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import betainc

from .errors import (DataError, DomainError, EmptyDocument, IndexOutOfRange,
                     InsufficientOverlap, RankDeficient, ValidationError)


@dataclass(frozen=True)
class SentimentLexicon:
    positive: frozenset[str]
    negative: frozenset[str]

    def __post_init__(self):
        object.__setattr__(self, "positive", frozenset(self.positive))
        object.__setattr__(self, "negative", frozenset(self.negative))
        both = self.positive & self.negative
        if both:
            raise ValidationError(f"words in both polarity lists: {sorted(both)[:5]}")


def one_hot(label: int, K: int) -> np.ndarray:
    if not 0 <= label < K:
        raise IndexOutOfRange(f"label {label} outside [0, {K})")
    out = np.zeros(K)
    out[label] = 1.0
    return out


def sentiment(tokens: Sequence[str], lexicon: SentimentLexicon) -> tuple[float, float]:
    """Fractions of tokens in the positive and in the negative word lists."""
    if not tokens:
        raise EmptyDocument("sentiment of an empty token list")
    pos = sum(1 for t in tokens if t in lexicon.positive)
    neg = sum(1 for t in tokens if t in lexicon.negative)
    return pos / len(tokens), neg / len(tokens)


@dataclass(frozen=True)
class DailyFeatures:
    date: dt.date
    t_d: np.ndarray
    p_d: float
    n_d: float
    tweet_count: int


def utc_date(timestamp: float) -> dt.date:
    return dt.datetime.fromtimestamp(timestamp, tz=dt.timezone.utc).date()


def daily_aggregate(records: Iterable[tuple[float, int, float, float]], K: int) -> list[DailyFeatures]:
    """Average one-hot topics and sentiment ratios per UTC calendar day."""
    groups: dict[dt.date, list] = defaultdict(list)
    for ts, label, p, n in records:
        groups[utc_date(ts)].append((label, p, n))
    out = []
    for day in sorted(groups):
        rows = groups[day]
        t = np.zeros(K)
        for label, _, _ in rows:
            t += one_hot(label, K)
        out.append(DailyFeatures(day, t / len(rows),
                                 float(np.mean([r[1] for r in rows])),
                                 float(np.mean([r[2] for r in rows])), len(rows)))
    return out


def read_prices(path) -> list[tuple[dt.date, float]]:
    out = []
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or not {"date", "close"} <= set(reader.fieldnames):
            raise DataError(f"{path}: expected a 'date,close' header")
        for lineno, row in enumerate(reader, 2):
            try:
                day = dt.date.fromisoformat(row["date"].strip())
                close = float(row["close"])
            except (ValueError, AttributeError):
                raise DataError(f"{path}:{lineno}: malformed price row") from None
            if not close > 0:
                raise DataError(f"{path}:{lineno}: close must be positive")
            out.append((day, close))
    return out


def feature_names(K: int) -> list[tuple[str, str]]:
    """(name, variable) pairs in design-matrix column order."""
    out = [("Positive sentiment", "p_d"), ("Negative sentiment", "n_d")]
    out += [(f"Topic {k}", f"t_d,{k}") for k in range(K)]
    return out


def align_next_day_returns(features: Sequence[DailyFeatures],
                           prices: Sequence[tuple[dt.date, float]]):
    """Design matrix [p_d, n_d, t_d,0..K-1] and next-day simple returns.

    Returns ``(X, y, dates)``; days lacking a close for d or d+1 are dropped.
    """
    close = {}
    for day, c in prices:
        if not c > 0:
            raise DomainError("closing prices must be positive")
        close[day] = c
    if not features:
        raise InsufficientOverlap("no daily features")
    K = features[0].t_d.shape[0]
    rows, ys, dates = [], [], []
    one = dt.timedelta(days=1)
    for f in features:
        if f.date in close and f.date + one in close:
            rows.append([f.p_d, f.n_d, *f.t_d])
            ys.append(close[f.date + one] / close[f.date] - 1.0)
            dates.append(f.date)
    if len(rows) < K + 3:
        raise InsufficientOverlap(
            f"{len(rows)} days have features and both closes; at least {K + 3} needed")
    return np.array(rows), np.array(ys), dates


def t_cdf(t: float, df: float) -> float:
    """Student-t CDF through the regularized incomplete beta function."""
    if not df >= 1:
        raise DomainError("degrees of freedom must be >= 1")
    if math.isinf(t):
        return 1.0 if t > 0 else 0.0
    tail = 0.5 * float(betainc(0.5 * df, 0.5, df / (df + t * t)))
    return 1.0 - tail if t > 0 else tail


def two_sided_p(t: float, df: float) -> float:
    if math.isinf(t):
        return 0.0
    return float(betainc(0.5 * df, 0.5, df / (df + t * t)))


def stars(p: float) -> str:
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return ""


@dataclass(frozen=True)
class RegressionResult:
    coef: np.ndarray
    stderr: np.ndarray
    tstat: np.ndarray
    pvalue: np.ndarray
    r_squared: float
    df_resid: int
    rss: float
    degenerate: bool = False

    def table(self, names: Sequence[tuple[str, str]]) -> list[list[str]]:
        rows = []
        for (name, var), c, s, t, p in zip(names, self.coef, self.stderr, self.tstat, self.pvalue):
            rows.append([name, var, repr(float(c)), repr(float(s)), repr(float(t)),
                         repr(float(p)), stars(p)])
        return rows

    def write_csv(self, path, names: Sequence[tuple[str, str]]) -> None:
        with open(path, "w", encoding="utf-8", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["name", "variable", "coef", "stderr", "tstat", "pvalue", "stars"])
            w.writerows(self.table(names))


def ols_fit(X, y, rcond: float = 1e-10) -> RegressionResult:
    """Least squares through a QR decomposition with t-tests on every coefficient.

    An exact fit (zero residual variance) is reported with stderr 0,
    infinite t-statistics, p-values 0 and ``degenerate`` set.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, k = X.shape
    if n <= k:
        raise ValidationError(f"need more rows ({n}) than columns ({k})")
    Q, R = np.linalg.qr(X)
    diag = np.abs(np.diag(R))
    if diag.min() <= rcond * max(diag.max(), 1e-300):
        raise RankDeficient("design matrix is not of full column rank")
    coef = solve_triangular(R, Q.T @ y)
    resid = y - X @ coef
    rss = float(resid @ resid)
    df = n - k
    tss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - rss / tss if tss > 0 else 1.0
    R_inv = solve_triangular(R, np.eye(k))
    cov_unscaled = R_inv @ R_inv.T
    if rss <= (1e-24 * max(float(y @ y), 1e-300)):
        stderr = np.zeros(k)
        tstat = np.where(coef == 0, 0.0, np.copysign(np.inf, coef))
        pvalue = np.where(coef == 0, 1.0, 0.0)
        return RegressionResult(coef, stderr, tstat, pvalue, r2, df, rss, degenerate=True)
    sigma2 = rss / df
    stderr = np.sqrt(sigma2 * np.diag(cov_unscaled))
    tstat = coef / stderr
    pvalue = np.array([two_sided_p(t, df) for t in tstat])
    return RegressionResult(coef, stderr, tstat, pvalue, r2, df, rss)


def ols_fit_present(X, y, rcond: float = 1e-10) -> tuple[RegressionResult, np.ndarray]:
    """ols_fit on the columns that are not identically zero.

    A topic that no tweet was assigned to gives an all-zero column, which
    would make the design singular. Those columns are left out of the fit and
    reported with NaN coefficient, stderr, t and p. Returns the full-width
    result and the indices of the dropped columns.
    """
    X = np.asarray(X, dtype=np.float64)
    keep = np.flatnonzero(np.any(X != 0, axis=0))
    dropped = np.setdiff1d(np.arange(X.shape[1]), keep)
    sub = ols_fit(X[:, keep], y, rcond)
    if dropped.size == 0:
        return sub, dropped

    def widen(v):
        out = np.full(X.shape[1], np.nan)
        out[keep] = v
        return out

    full = RegressionResult(widen(sub.coef), widen(sub.stderr), widen(sub.tstat), widen(sub.pvalue),
                            sub.r_squared, sub.df_resid, sub.rss, sub.degenerate)
    return full, dropped
