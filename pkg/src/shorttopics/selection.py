"""K-fold cross-validated grid search, lower score is better."""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .corpus import Corpus
from .errors import ShortTopicsError, TooFewDocuments, ValidationError

DMM_GRID = {"alpha": [0.01, 0.025, 0.05, 0.1, 0.2], "beta": [0.06, 0.1, 0.24]}
LDA_GRID = {"kappa": [0.6, 0.75, 0.9], "tau0": [1, 64, 256]}
K_VALUES = [5, 10, 15, 20, 25, 30, 35, 40, 45, 50]


class GridSearchError(ShortTopicsError):
    """A trainer or scorer failed; ``cell`` and ``fold`` locate the failure."""

    def __init__(self, cell: Mapping[str, Any], fold: int, cause: BaseException):
        super().__init__(f"cell {dict(cell)} fold {fold}: {type(cause).__name__}: {cause}")
        self.cell = dict(cell)
        self.fold = fold
        self.exit_code = getattr(cause, "exit_code", 1)


@dataclass(frozen=True)
class Grid:
    axes: Mapping[str, Sequence[Any]]

    def __post_init__(self):
        if not self.axes or any(len(v) == 0 for v in self.axes.values()):
            raise ValidationError("every grid axis needs at least one value")

    def cells(self) -> list[dict[str, Any]]:
        names = list(self.axes)
        return [dict(zip(names, vals)) for vals in itertools.product(*self.axes.values())]


@dataclass
class GridResult:
    cells: list[dict[str, Any]]
    fold_scores: np.ndarray  # n_cells x k
    seed: int
    folds: list[np.ndarray] = field(repr=False, default_factory=list)

    @property
    def mean(self) -> np.ndarray:
        return self.fold_scores.mean(axis=1)

    @property
    def std(self) -> np.ndarray:
        return self.fold_scores.std(axis=1)

    @property
    def best_index(self) -> int:
        return int(np.argmin(self.mean))  # first minimum: grid order breaks ties

    @property
    def best(self) -> dict[str, Any]:
        return self.cells[self.best_index]

    def rows(self, extra: Mapping[str, Any] | None = None) -> list[dict[str, Any]]:
        extra = dict(extra or {})
        out = []
        for cell, scores in zip(self.cells, self.fold_scores):
            for f, s in enumerate(scores):
                out.append({**extra, **cell, "fold": f, "score": repr(float(s))})
        for i, cell in enumerate(self.cells):
            out.append({**extra, **cell, "fold": "mean", "score": repr(float(self.mean[i]))})
            out.append({**extra, **cell, "fold": "std", "score": repr(float(self.std[i]))})
        return out


def kfold_split(corpus: Corpus | int, k: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Shuffled round-robin folds as ``(train_indices, test_indices)`` pairs."""
    n_docs = corpus if isinstance(corpus, (int, np.integer)) else len(corpus)
    if k < 2:
        raise ValidationError("k must be >= 2")
    if n_docs < k:
        raise TooFewDocuments(f"{n_docs} documents cannot fill {k} folds")
    perm = np.random.default_rng(seed).permutation(n_docs)
    out = []
    for f in range(k):
        test = np.sort(perm[f::k])
        mask = np.ones(n_docs, dtype=bool)
        mask[test] = False
        out.append((np.flatnonzero(mask), test))
    return out


def grid_search(trainer: Callable[[Corpus, dict], Any], scorer: Callable[[Any, Corpus], float],
                corpus: Corpus, grid: Grid, k: int = 5, seed: int = 0,
                progress: Callable[[dict, int, float], None] | None = None) -> GridResult:
    """Train every cell on every training fold and score it on the held-out fold."""
    folds = kfold_split(corpus, k, seed)
    splits = [(corpus.subset(tr), corpus.subset(te)) for tr, te in folds]
    cells = grid.cells()
    scores = np.empty((len(cells), k))
    for i, cell in enumerate(cells):
        for f, (train_c, test_c) in enumerate(splits):
            try:
                model = trainer(train_c, cell)
                scores[i, f] = scorer(model, test_c)
            except Exception as exc:
                raise GridSearchError(cell, f, exc) from exc
            if progress is not None:
                progress(cell, f, scores[i, f])
    return GridResult(cells, scores, seed, [te for _, te in folds])


def write_csv(path, results: Mapping[Any, GridResult], axis_names: Sequence[str]) -> None:
    """One row per (K, cell, fold) score followed by per-cell mean/std rows."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        fields = ["K", *axis_names, "fold", "score"]
        w = csv.DictWriter(f, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for K, res in results.items():
            w.writerows(res.rows({"K": K}))
