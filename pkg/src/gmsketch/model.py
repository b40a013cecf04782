"""Tree-structured Bayesian networks and the exact factored MLE.

Variables and values are 1-indexed throughout; variable 1 is the root.
``ExactEstimator`` keeps dense count tables, so its space is
``O(sum_k M_k + sum_k M_k * M_pa(k))``.  It is meant as a desk-scale oracle
(a joint table of a few hundred million cells at most), not as a sketch.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np


class ModelError(ValueError):
    """The parent map does not describe a tree rooted at variable 1."""


@dataclass(frozen=True)
class TreeModel:
    """A directed tree over ``K`` variables.

    ``parents[k - 1]`` is the parent of variable ``k`` (0 for the root), and
    ``cardinalities[k - 1]`` is ``M_k``.
    """

    parents: tuple[int, ...]
    cardinalities: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "parents", tuple(int(p) for p in self.parents))
        object.__setattr__(self, "cardinalities", tuple(int(c) for c in self.cardinalities))
        validate(self)

    @property
    def K(self) -> int:
        return len(self.cardinalities)

    @property
    def children(self) -> tuple[int, ...]:
        """Non-root variables in increasing order; edge ``j`` belongs to ``children[j]``."""
        return tuple(range(2, self.K + 1))

    def parent(self, k: int) -> int:
        return self.parents[k - 1]

    @classmethod
    def from_edges(cls, K: int, edges: Mapping[int, int] | Sequence[Sequence[int]],
                   cardinalities: Sequence[int]) -> "TreeModel":
        """Build from ``{child: parent}`` or ``[[child, parent], ...]`` (1-indexed)."""
        pairs = edges.items() if isinstance(edges, Mapping) else [tuple(e) for e in edges]
        parents = [0] * K
        for child, par in pairs:
            if not 1 <= child <= K or not 1 <= par <= K:
                raise ModelError(f"edge {child}->{par} references a variable outside [1, {K}]")
            if child == 1:
                raise ModelError("root variable 1 was given a parent")
            if parents[child - 1]:
                raise ModelError(f"variable {child} has more than one parent")
            parents[child - 1] = par
        if len(cardinalities) != K:
            raise ModelError(f"expected {K} cardinalities, got {len(cardinalities)}")
        return cls(tuple(parents), tuple(cardinalities))

    @classmethod
    def chain(cls, cardinalities: Sequence[int]) -> "TreeModel":
        K = len(cardinalities)
        return cls(tuple([0] + list(range(1, K))), tuple(cardinalities))

    def to_json(self) -> dict:
        return {
            "K": self.K,
            "parents": [[k, self.parent(k)] for k in self.children],
            "cardinalities": list(self.cardinalities),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "TreeModel":
        return cls.from_edges(int(doc["K"]), doc.get("parents", []), doc["cardinalities"])

    @classmethod
    def load(cls, path: str | Path) -> "TreeModel":
        return cls.from_json(json.loads(Path(path).read_text()))

    def check_observations(self, X: np.ndarray) -> np.ndarray:
        """Return ``X`` as a 2-D int64 array, raising on any out-of-range value."""
        X = np.atleast_2d(np.asarray(X, dtype=np.int64))
        if X.shape[1] != self.K:
            raise ValueError(f"observations have {X.shape[1]} coordinates, model has K={self.K}")
        if X.size and (X.min(axis=0) < 1).any():
            raise ValueError("observation values are 1-indexed and must be >= 1")
        if X.size and (X.max(axis=0) > np.asarray(self.cardinalities)).any():
            raise ValueError("observation value exceeds its variable's cardinality")
        return X


def validate(model: TreeModel) -> None:
    """Raise :class:`ModelError` unless ``model`` is a tree rooted at variable 1."""
    K = len(model.cardinalities)
    if K < 1:
        raise ModelError("a model needs at least one variable")
    if len(model.parents) != K:
        raise ModelError("parents and cardinalities differ in length")
    if any(c < 1 for c in model.cardinalities):
        raise ModelError("cardinalities must be >= 1")
    if model.parents[0] != 0:
        raise ModelError("root variable 1 was given a parent")
    for k in range(2, K + 1):
        p = model.parents[k - 1]
        if p == 0:
            raise ModelError(f"variable {k} has no parent (orphan component)")
        if not 1 <= p <= K or p == k:
            raise ModelError(f"variable {k} has invalid parent {p}")
    for k in range(2, K + 1):
        seen = set()
        v = k
        while v != 1:
            if v in seen:
                raise ModelError(f"cycle detected through variable {k}")
            seen.add(v)
            v = model.parents[v - 1]


class ExactEstimator:
    """Dense per-variable and per-edge counts realizing the factored MLE."""

    def __init__(self, model: TreeModel):
        self.model = model
        self.n = 0
        self.var_counts = [np.zeros(M, dtype=np.int64) for M in model.cardinalities]
        self.edge_counts = [
            np.zeros((model.cardinalities[k - 1], model.cardinalities[model.parent(k) - 1]), dtype=np.int64)
            for k in model.children
        ]

    def update(self, x: Sequence[int]) -> None:
        self.update_many(np.asarray(x)[None, :])

    def update_many(self, X: np.ndarray) -> None:
        X = self.model.check_observations(X) - 1
        for k in range(self.model.K):
            self.var_counts[k] += np.bincount(X[:, k], minlength=self.model.cardinalities[k])
        for j, k in enumerate(self.model.children):
            pa = self.model.parent(k)
            table = self.edge_counts[j]
            flat = X[:, k - 1] * table.shape[1] + X[:, pa - 1]
            table += np.bincount(flat, minlength=table.size).reshape(table.shape)
        self.n += X.shape[0]

    def prior(self, k: int, value: int) -> float:
        """Empirical ``P(X_k = value)``."""
        self._require_data()
        return self.var_counts[k - 1][value - 1] / self.n

    def joint(self, k: int, value: int, parent_value: int) -> float:
        """Empirical ``P(X_k = value, X_pa(k) = parent_value)``."""
        self._require_data()
        return self.edge_counts[k - 2][value - 1, parent_value - 1] / self.n

    def conditional(self, k: int, value: int, parent_value: int) -> float:
        den = self.var_counts[self.model.parent(k) - 1][parent_value - 1]
        if den == 0:
            return 0.0
        return self.edge_counts[k - 2][value - 1, parent_value - 1] / den

    def query(self, x: Sequence[int]) -> float:
        return float(self.query_many(np.asarray(x)[None, :])[0])

    def query_many(self, X: np.ndarray) -> np.ndarray:
        """Factored MLE probability of each row; 0 whenever a parent value is unseen."""
        self._require_data()
        X = self.model.check_observations(X) - 1
        p = self.var_counts[0][X[:, 0]] / self.n
        for j, k in enumerate(self.model.children):
            pa = self.model.parent(k)
            num = self.edge_counts[j][X[:, k - 1], X[:, pa - 1]]
            den = self.var_counts[pa - 1][X[:, pa - 1]]
            p = p * np.divide(num, den, out=np.zeros(len(p)), where=den > 0)
        return p

    def pair_frequencies(self, X: np.ndarray) -> np.ndarray:
        """``(n_queries, K - 1)`` array of empirical variable-parent co-occurrence frequencies."""
        self._require_data()
        X = self.model.check_observations(X) - 1
        out = np.empty((X.shape[0], self.model.K - 1))
        for j, k in enumerate(self.model.children):
            out[:, j] = self.edge_counts[j][X[:, k - 1], X[:, self.model.parent(k) - 1]] / self.n
        return out

    def delta(self, x: Sequence[int]) -> float:
        """Minimum co-occurrence frequency over the variable-parent pairs of ``x``."""
        if self.model.K < 2:
            raise ValueError("delta is undefined for a model without edges (K = 1)")
        return float(self.pair_frequencies(np.asarray(x)[None, :]).min())

    def _require_data(self) -> None:
        if self.n == 0:
            raise ValueError("estimator is empty (n = 0)")
