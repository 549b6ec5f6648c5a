"""Model files as sorted-key JSON, and label dumps."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import DataError


def _kinds():
    from . import dmm, lda, prodlda
    return {"dmm": dmm.DmmModel, "lda": lda.LdaModel, "prodlda": prodlda.ProdLdaModel}


def dumps_model(model) -> str:
    # json writes floats with repr, which round-trips exactly
    return json.dumps(model.to_dict(), sort_keys=True, indent=1) + "\n"


def save_model(model, path: str | Path) -> None:
    Path(path).write_text(dumps_model(model), encoding="utf-8")


def load_model(path: str | Path):
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except ValueError as exc:
        raise DataError(f"{path}: not a model file ({exc})") from None
    kind = data.get("kind") if isinstance(data, dict) else None
    cls = _kinds().get(kind)
    if cls is None:
        raise DataError(f"{path}: unknown model kind {kind!r}")
    try:
        return cls.from_dict(data)
    except (KeyError, TypeError) as exc:
        raise DataError(f"{path}: incomplete {kind} model ({exc})") from None


def write_labels(path: str | Path, labels) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for d, k in enumerate(np.asarray(labels).tolist()):
            f.write(f"{d}\t{k}\n")


def read_labels(path: str | Path) -> np.ndarray:
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            parts = line.split("\t")
            if len(parts) != 2 or int(parts[0]) != len(out):
                raise DataError(f"{path}:{lineno}: expected 'doc_index<TAB>topic' in order")
            out.append(int(parts[1]))
    return np.array(out, dtype=np.int64)
