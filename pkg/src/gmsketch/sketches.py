"""Streaming estimators of point probabilities over a tree model.

Four estimators share one surface (``update``, ``update_many``, ``query``,
``query_many``, ``merge``, snapshots):

* :class:`CountMinSketch` hashes the whole observation vector into ``d``
  rows of ``m`` counters and answers with the row minimum.
* :class:`GMHash` keeps one counter table per variable and one per
  variable-parent pair, and multiplies the prior bin by ratios of bins.
* :class:`GMSketch` keeps ``d`` independent ``GMHash`` replicas and
  answers with their (lower) median.
* :class:`GMFactorSketch` keeps the same tables as ``GMSketch`` but turns
  each table into a count-min estimate first, then forms the ratios.

The three graphical-model sketches store identical tables and differ only
in how they are read.  Estimates are never clamped to ``[0, 1]``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .hashing import (
    HashFn,
    eval_hash,
    make_hash,
    new_hash_fn,
    derive_seed,
    pair_key,
    pair_keys,
    vector_key,
    vector_key_residues,
)
from .model import TreeModel

SNAPSHOT_FORMAT = "gmsketch-snapshot"
SNAPSHOT_VERSION = 1


class SketchMismatchError(ValueError):
    """Two sketches with different configurations cannot be merged."""


@dataclass(frozen=True)
class SketchConfig:
    model: TreeModel
    m: int
    d: int = 1
    seed: int = 0
    offset: int = 0  # index of the first hash replica; replica views use it

    def __post_init__(self) -> None:
        if self.m < 1:
            raise ValueError(f"m must be >= 1, got {self.m}")
        if self.d < 1:
            raise ValueError(f"d must be >= 1, got {self.d}")


class StreamKeys:
    """Hash keys of a batch of observations, grouped by counter table.

    Table ids are ``("var", k)`` for variable ``k``, ``("edge", j)`` for the
    pair table of child ``model.children[j]``, and ``("vec",)`` for the whole
    vector.  With ``aggregate=True`` duplicate keys are merged and carry a
    count, which makes ingestion cost proportional to the number of distinct
    keys.  Field values are memoized per hash function, so one batch can be
    ingested into sketches of many widths at the cost of hashing it once.
    """

    def __init__(self, model: TreeModel, keys: dict, counts: dict | None, n: int):
        self.model = model
        self.keys = keys
        self.counts = counts
        self.n = n
        self._fields: dict = {}

    @classmethod
    def from_observations(cls, model: TreeModel, X: np.ndarray, aggregate: bool = True,
                          vector: bool = True) -> "StreamKeys":
        X = model.check_observations(X)
        keys = {}
        for k in range(1, model.K + 1):
            keys[("var", k)] = X[:, k - 1].astype(np.uint64)
        for j, k in enumerate(model.children):
            keys[("edge", j)] = pair_keys(X[:, k - 1], X[:, model.parent(k) - 1], model.cardinalities[k - 1])
        if vector:
            keys[("vec",)] = vector_key_residues(X, model.cardinalities)
        counts = None
        if aggregate:
            counts = {}
            for t, v in keys.items():
                keys[t], counts[t] = np.unique(v, return_counts=True)
        return cls(model, keys, counts, X.shape[0])

    def merge(self, other: "StreamKeys") -> "StreamKeys":
        """Aggregated keys of the concatenated batches."""
        if self.counts is None or other.counts is None:
            raise ValueError("only aggregated key batches can be merged")
        keys, counts = {}, {}
        for t in self.keys.keys() & other.keys.keys():
            k = np.concatenate([self.keys[t], other.keys[t]])
            c = np.concatenate([self.counts[t], other.counts[t]])
            keys[t], inv = np.unique(k, return_inverse=True)
            counts[t] = np.bincount(inv, weights=c, minlength=len(keys[t])).astype(np.int64)
        return StreamKeys(self.model, keys, counts, self.n + other.n)

    def field(self, h: HashFn, table: tuple) -> np.ndarray:
        cache_key = (table, h.a, h.b)
        out = self._fields.get(cache_key)
        if out is None:
            out = h.field(self.keys[table])
            self._fields[cache_key] = out
        return out

    def bins(self, h: HashFn, table: tuple) -> np.ndarray:
        return (self.field(h, table) % np.uint64(h.m)).astype(np.intp)

    def weights(self, table: tuple):
        return None if self.counts is None else self.counts[table]

    def clear_cache(self) -> None:
        self._fields.clear()


def _add_bins(row: np.ndarray, bins: np.ndarray, weights) -> None:
    if weights is None:
        row += np.bincount(bins, minlength=row.size).astype(np.uint64)
    else:
        # float64 weights are exact for per-batch counts below 2**53
        row += np.rint(np.bincount(bins, weights=weights, minlength=row.size)).astype(np.uint64)


def _ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    num = num.astype(np.float64)
    den = den.astype(np.float64)
    return np.divide(num, den, out=np.zeros(np.broadcast(num, den).shape), where=den > 0)


class _Sketch:
    kind = ""

    def __init__(self, config: SketchConfig):
        self.config = config
        self.n = 0

    @property
    def model(self) -> TreeModel:
        return self.config.model

    @property
    def m(self) -> int:
        return self.config.m

    @property
    def d(self) -> int:
        return self.config.d

    def update(self, x: Sequence[int]) -> None:
        self.model.check_observations(np.asarray(x)[None, :])
        self._update_one([int(v) for v in x])
        self.n += 1

    def update_many(self, X: np.ndarray) -> None:
        self.ingest(StreamKeys.from_observations(self.model, X, vector=self._needs_vector))

    def ingest(self, keys: StreamKeys) -> None:
        """Add a pre-keyed batch; equivalent to updating with each observation."""
        if keys.model != self.model:
            raise SketchMismatchError("key batch was built for a different model")
        self._ingest(keys)
        self.n += keys.n

    def query(self, x: Sequence[int]) -> float:
        return float(self.query_many(np.asarray(x)[None, :])[0])

    def query_many(self, X: np.ndarray) -> np.ndarray:
        if self.n == 0:
            raise ValueError("cannot query an empty sketch")
        keys = StreamKeys.from_observations(self.model, X, aggregate=False, vector=self._needs_vector)
        return self.query_keys(keys)

    def query_keys(self, keys: StreamKeys) -> np.ndarray:
        if self.n == 0:
            raise ValueError("cannot query an empty sketch")
        return self._query(keys)

    def merge(self, other: "_Sketch") -> "_Sketch":
        """Sketch of the concatenated streams; both inputs are left untouched."""
        if type(other) is not type(self) or other.config != self.config:
            raise SketchMismatchError("sketches differ in kind, model, m, d or seed")
        out = self.copy()
        for name in self._table_names:
            getattr(out, name)[...] += getattr(other, name)
        out.n = self.n + other.n
        return out

    def copy(self) -> "_Sketch":
        out = object.__new__(type(self))
        out.__dict__.update(self.__dict__)
        for name in self._table_names:
            setattr(out, name, getattr(self, name).copy())
        return out

    def counters_equal(self, other: "_Sketch") -> bool:
        return (type(other) is type(self) and other.config == self.config and other.n == self.n
                and all(np.array_equal(getattr(self, t), getattr(other, t)) for t in self._table_names))

    @property
    def space(self) -> int:
        """Number of counters held."""
        return sum(getattr(self, t).size for t in self._table_names)

    def to_dict(self) -> dict:
        c = self.config
        return {
            "format": SNAPSHOT_FORMAT,
            "version": SNAPSHOT_VERSION,
            "kind": self.kind,
            "model": c.model.to_json(),
            "m": c.m,
            "d": c.d,
            "seed": c.seed,
            "offset": c.offset,
            "n": self.n,
            "tables": {t: getattr(self, t).tolist() for t in self._table_names},
        }


class CountMinSketch(_Sketch):
    """Count-min sketch over whole observation vectors.

    Each observation is keyed by its mixed-radix encoding and hashed by
    ``d`` independent functions into a ``d x m`` table.
    """

    kind = "cm"
    _table_names = ("table",)
    _needs_vector = True

    def __init__(self, model: TreeModel, m: int, d: int = 1, seed: int = 0):
        super().__init__(SketchConfig(model, m, d, seed))
        self.hashes = tuple(new_hash_fn(derive_seed(seed, 1, i), m) for i in range(d))
        self.table = np.zeros((d, m), dtype=np.uint64)

    def _update_one(self, x: list[int]) -> None:
        key = vector_key(x, self.model.cardinalities)
        for i, h in enumerate(self.hashes):
            self.table[i, eval_hash(h, key) - 1] += np.uint64(1)

    def _ingest(self, keys: StreamKeys) -> None:
        w = keys.weights(("vec",))
        for i, h in enumerate(self.hashes):
            _add_bins(self.table[i], keys.bins(h, ("vec",)), w)

    def row_counts(self, keys: StreamKeys) -> np.ndarray:
        """``(d, n_queries)`` counters matched by each query in each row."""
        return np.stack([self.table[i, keys.bins(h, ("vec",))] for i, h in enumerate(self.hashes)])

    def _query(self, keys: StreamKeys) -> np.ndarray:
        return self.row_counts(keys).min(axis=0) / self.n


class _FactorTables(_Sketch):
    """Per-variable tables ``var[i, k-1]`` and per-pair tables ``edge[i, j]``.

    Replica ``i`` uses the hash ``h^i``; the pair table of child ``k`` is
    addressed by the same function ``h^i_k`` as the table of ``X_k``.
    """

    _table_names = ("var", "edge")
    _needs_vector = False

    def __init__(self, model: TreeModel, m: int, d: int = 1, seed: int = 0, offset: int = 0):
        super().__init__(SketchConfig(model, m, d, seed, offset))
        self.hashes = tuple(make_hash(seed, offset + i, model.K, m) for i in range(d))
        self.var = np.zeros((d, model.K, m), dtype=np.uint64)
        self.edge = np.zeros((d, model.K - 1, m), dtype=np.uint64)

    def _update_one(self, x: list[int]) -> None:
        model = self.model
        for i, hs in enumerate(self.hashes):
            for k in range(1, model.K + 1):
                self.var[i, k - 1, eval_hash(hs[k - 1], x[k - 1]) - 1] += np.uint64(1)
            for j, k in enumerate(model.children):
                key = pair_key(x[k - 1], x[model.parent(k) - 1], model.cardinalities[k - 1])
                self.edge[i, j, eval_hash(hs[k - 1], key) - 1] += np.uint64(1)

    def _ingest(self, keys: StreamKeys) -> None:
        model = self.model
        for i, hs in enumerate(self.hashes):
            for k in range(1, model.K + 1):
                t = ("var", k)
                _add_bins(self.var[i, k - 1], keys.bins(hs[k - 1], t), keys.weights(t))
            for j, k in enumerate(model.children):
                t = ("edge", j)
                _add_bins(self.edge[i, j], keys.bins(hs[k - 1], t), keys.weights(t))

    def bin_counts(self, keys: StreamKeys):
        """Counters matched by each query.

        Returns ``(var, pair)`` with shapes ``(d, n_queries, K)`` and
        ``(d, n_queries, K - 1)``.
        """
        model = self.model
        nq = keys.n
        var = np.empty((self.d, nq, model.K), dtype=np.uint64)
        pair = np.empty((self.d, nq, model.K - 1), dtype=np.uint64)
        for i, hs in enumerate(self.hashes):
            for k in range(1, model.K + 1):
                var[i, :, k - 1] = self.var[i, k - 1, keys.bins(hs[k - 1], ("var", k))]
            for j, k in enumerate(model.children):
                pair[i, :, j] = self.edge[i, j, keys.bins(hs[k - 1], ("edge", j))]
        return var, pair

    def replica_estimates(self, keys: StreamKeys) -> np.ndarray:
        """``(d, n_queries)`` single-hash estimates, one per replica."""
        var, pair = self.bin_counts(keys)
        p = var[:, :, 0] / self.n
        for j, k in enumerate(self.model.children):
            p = p * _ratio(pair[:, :, j], var[:, :, self.model.parent(k) - 1])
        return p


class GMHash(_FactorTables):
    """One hash per variable; each conditional is a ratio of two bins."""

    kind = "gmhash"

    def __init__(self, model: TreeModel, m: int, seed: int = 0, offset: int = 0):
        super().__init__(model, m, 1, seed, offset)

    def _query(self, keys: StreamKeys) -> np.ndarray:
        return self.replica_estimates(keys)[0]


class GMSketch(_FactorTables):
    """Lower median of ``d`` independent :class:`GMHash` estimates."""

    kind = "gmsketch"

    def __init__(self, model: TreeModel, m: int, d: int = 1, seed: int = 0, offset: int = 0):
        super().__init__(model, m, d, seed, offset)

    def _query(self, keys: StreamKeys) -> np.ndarray:
        est = np.sort(self.replica_estimates(keys), axis=0)
        return est[(self.d + 1) // 2 - 1]

    def replica(self, i: int) -> GMHash:
        """Replica ``i`` as a standalone :class:`GMHash` (copied tables)."""
        c = self.config
        out = GMHash(c.model, c.m, c.seed, c.offset + i)
        out.var[0] = self.var[i]
        out.edge[0] = self.edge[i]
        out.n = self.n
        return out


class GMFactorSketch(_FactorTables):
    """Conditionals formed as ratios of per-factor count-min estimates."""

    kind = "gmfactor"

    def __init__(self, model: TreeModel, m: int, d: int = 1, seed: int = 0, offset: int = 0):
        super().__init__(model, m, d, seed, offset)

    def factor_estimates_keys(self, keys: StreamKeys):
        """Count-min frequency estimates of every factor along each query.

        Returns ``(var_hat, pair_hat)`` of shapes ``(n_queries, K)`` and
        ``(n_queries, K - 1)``.
        """
        var, pair = self.bin_counts(keys)
        return var.min(axis=0) / self.n, pair.min(axis=0) / self.n

    def factor_estimates(self, X: np.ndarray):
        keys = StreamKeys.from_observations(self.model, X, aggregate=False, vector=False)
        return self.factor_estimates_keys(keys)

    def _query(self, keys: StreamKeys) -> np.ndarray:
        var, pair = self.bin_counts(keys)
        var_min = var.min(axis=0)
        pair_min = pair.min(axis=0)
        p = var_min[:, 0] / self.n
        for j, k in enumerate(self.model.children):
            # zero denominator -> whole estimate 0, even if the numerator collided
            p = p * _ratio(pair_min[:, j], var_min[:, self.model.parent(k) - 1])
        return p


SKETCH_TYPES = {cls.kind: cls for cls in (CountMinSketch, GMHash, GMSketch, GMFactorSketch)}

# counter tables per unit of m*d
def tables_per_replica(kind: str, model: TreeModel) -> int:
    return 1 if kind == "cm" else 2 * model.K - 1


def make_sketch(kind: str, model: TreeModel, m: int, d: int = 1, seed: int = 0) -> _Sketch:
    if kind not in SKETCH_TYPES:
        raise ValueError(f"unknown estimator {kind!r}; expected one of {sorted(SKETCH_TYPES)}")
    if kind == "gmhash":
        if d != 1:
            raise ValueError("GMHash has exactly one replica (d = 1)")
        return GMHash(model, m, seed)
    return SKETCH_TYPES[kind](model, m, d, seed)


def from_dict(doc: dict) -> _Sketch:
    if doc.get("format") != SNAPSHOT_FORMAT:
        raise ValueError("not a sketch snapshot")
    if doc.get("version") != SNAPSHOT_VERSION:
        raise ValueError(f"unsupported snapshot version {doc.get('version')}")
    kind = doc["kind"]
    model = TreeModel.from_json(doc["model"])
    cls = SKETCH_TYPES[kind]
    if kind == "cm":
        sk = cls(model, doc["m"], doc["d"], doc["seed"])
    elif kind == "gmhash":
        sk = cls(model, doc["m"], doc["seed"], doc.get("offset", 0))
    else:
        sk = cls(model, doc["m"], doc["d"], doc["seed"], doc.get("offset", 0))
    for name in sk._table_names:
        arr = np.array(doc["tables"][name], dtype=np.uint64).reshape(getattr(sk, name).shape)
        setattr(sk, name, arr)
    sk.n = int(doc["n"])
    return sk


def save_snapshot(sketch: _Sketch, path: str | Path) -> None:
    Path(path).write_text(json.dumps(sketch.to_dict()))


def load_snapshot(path: str | Path) -> _Sketch:
    return from_dict(json.loads(Path(path).read_text()))
