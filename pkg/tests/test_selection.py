import csv

import numpy as np
import pytest

from shorttopics import dmm, evaluation, selection, synth
from shorttopics.errors import TooFewDocuments, ValidationError


def test_kfold_examples():
    folds = selection.kfold_split(10, 5, seed=0)
    assert [len(te) for _, te in folds] == [2] * 5
    assert selection.kfold_split(10, 5, seed=0)[3][1].tolist() == folds[3][1].tolist()
    with pytest.raises(TooFewDocuments):
        selection.kfold_split(3, 5, 0)
    with pytest.raises(ValidationError):
        selection.kfold_split(10, 1, 0)


@pytest.mark.parametrize("n,k", [(10, 5), (23, 5), (7, 3), (100, 10)])
def test_kfold_partitions(n, k):
    folds = selection.kfold_split(n, k, seed=n)
    tests = [te for _, te in folds]
    allidx = np.concatenate(tests)
    assert sorted(allidx.tolist()) == list(range(n))
    sizes = [len(t) for t in tests]
    assert max(sizes) - min(sizes) <= 1
    for tr, te in folds:
        assert not set(tr) & set(te) and len(tr) + len(te) == n


def test_grid_cells_and_validation():
    g = selection.Grid({"a": [1, 2], "b": ["x", "y", "z"]})
    assert len(g.cells()) == 6 and g.cells()[1] == {"a": 1, "b": "y"}
    with pytest.raises(ValidationError):
        selection.Grid({"a": []})


def test_constant_scorer_picks_first_cell(make_corpus):
    c = make_corpus([[0]] * 10, V=1)
    res = selection.grid_search(lambda tr, cell: None, lambda m, te: 1.0, c,
                                selection.Grid({"alpha": [0.3, 0.1, 0.2]}), k=5)
    assert res.best == {"alpha": 0.3} and res.fold_scores.shape == (3, 5)


def test_mock_scorer_finds_target(make_corpus):
    c = make_corpus([[0]] * 10, V=1)
    grid = selection.Grid({"alpha": selection.DMM_GRID["alpha"]})
    res = selection.grid_search(lambda tr, cell: cell["alpha"], lambda a, te: abs(a - 0.05), c, grid)
    assert res.best == {"alpha": 0.05}
    assert np.array_equal(res.mean, res.fold_scores.mean(axis=1))
    assert np.array_equal(res.std, res.fold_scores.std(axis=1))


def test_errors_are_annotated(make_corpus):
    c = make_corpus([[0]] * 10, V=1)

    def trainer(tr, cell):
        if cell["a"] == 2:
            raise ValidationError("boom")

    with pytest.raises(selection.GridSearchError) as info:
        selection.grid_search(trainer, lambda m, te: 0.0, c, selection.Grid({"a": [1, 2]}))
    assert info.value.cell == {"a": 2} and info.value.fold == 0 and info.value.exit_code == 2


def _dmm_search(corpus, seed):
    def trainer(tr, cell):
        return dmm.train(tr, dmm.DmmParams(K=3, iterations=10, seed=seed, **cell))
    return selection.grid_search(trainer, evaluation.heldout_perplexity, corpus,
                                 selection.Grid(selection.DMM_GRID), k=5, seed=seed)


def test_dmm_grid_on_planted_corpus(tmp_path):
    pl = synth.planted_dmm(200, 3, seed=4)
    a, b = _dmm_search(pl.corpus, 1), _dmm_search(pl.corpus, 1)
    assert np.array_equal(a.fold_scores, b.fold_scores) and a.best == b.best
    i = a.best_index
    assert np.all(a.mean[i] <= a.mean + a.std)
    # every document sits in exactly one test fold
    assert sorted(np.concatenate(a.folds).tolist()) == list(range(200))
    selection.write_csv(tmp_path / "g.csv", {3: a}, ["alpha", "beta"])
    rows = list(csv.DictReader(open(tmp_path / "g.csv")))
    assert len(rows) == 15 * 5 + 15 * 2
    assert rows[0].keys() == {"K", "alpha", "beta", "fold", "score"}
    assert float(rows[0]["score"]) == a.fold_scores[0, 0]
