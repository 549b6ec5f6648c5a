"""The K x V topic-word matrix shared by all three models."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Vocabulary
from .errors import ValidationError

ROW_TOL = 1e-9


@dataclass(frozen=True)
class TopicWordMatrix:
    values: np.ndarray
    vocab: Vocabulary | None = None

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64)
        if vals.ndim != 2:
            raise ValidationError("topic-word matrix must be 2-D")
        if np.any(vals < 0) or np.any(np.abs(vals.sum(axis=1) - 1.0) > ROW_TOL):
            raise ValidationError("topic-word rows must be probability vectors")
        if self.vocab is not None and self.vocab.V != vals.shape[1]:
            raise ValidationError(f"matrix has {vals.shape[1]} columns, vocabulary has {self.vocab.V}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def K(self) -> int:
        return self.values.shape[0]

    @property
    def V(self) -> int:
        return self.values.shape[1]

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __getitem__(self, idx):
        return self.values[idx]
