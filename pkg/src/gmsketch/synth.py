"""Synthetic naive Bayes streams with heavy and light examples.

The class variable ``X_1`` is uniform on ``{1, 2}``.  Given class 1 every
child is uniform on ``[N]``; given class 2 it is uniform on ``[M] \\ [N]``.
A class-1 vector therefore has probability ``0.5 * N**-K`` (heavy) and a
class-2 vector ``0.5 * (M - N)**-K`` (light).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterator

import numpy as np

from .model import TreeModel

DEFAULT_CHUNK = 1 << 16


@dataclass(frozen=True)
class NaiveBayesSpec:
    K: int  # number of children; the model has K + 1 variables
    M: int
    N: int

    def __post_init__(self) -> None:
        if self.K < 1:
            raise ValueError(f"K must be >= 1, got {self.K}")
        if not 1 <= self.N < self.M:
            raise ValueError(f"need 1 <= N < M, got N={self.N}, M={self.M}")

    @property
    def heavy_p(self) -> float:
        return 0.5 * float(self.N) ** -self.K

    @property
    def light_p(self) -> float:
        return 0.5 * float(self.M - self.N) ** -self.K

    def heavy_log2_p(self) -> float:
        return -1.0 - self.K * math.log2(self.N)


EASY = NaiveBayesSpec(K=4, M=1 << 16, N=8)
HARD = NaiveBayesSpec(K=32, M=1 << 16, N=64)


@dataclass(frozen=True)
class LabeledQuery:
    x: tuple[int, ...]
    true_p: float
    heavy: bool


def tree_of(spec: NaiveBayesSpec) -> TreeModel:
    """Star tree: the class variable is the root and parents every child."""
    return TreeModel(tuple([0] + [1] * spec.K), tuple([2] + [spec.M] * spec.K))


def _draw(spec: NaiveBayesSpec, classes: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    n = classes.shape[0]
    X = np.empty((n, spec.K + 1), dtype=np.int32)
    X[:, 0] = classes
    heavy = (classes == 1)[:, None]
    low = np.where(heavy, 1, spec.N + 1)
    high = np.where(heavy, spec.N + 1, spec.M + 1)
    X[:, 1:] = rng.integers(low, high, size=(n, spec.K))
    return X


def stream_chunks(spec: NaiveBayesSpec, n: int, seed: int, chunk: int = DEFAULT_CHUNK) -> Iterator[np.ndarray]:
    """I.i.d. observations in chunks; the concatenation is :func:`sample_stream`."""
    if n < 1:
        raise ValueError("stream length must be >= 1")
    rng = np.random.default_rng(seed)
    done = 0
    while done < n:
        size = min(chunk, n - done)
        classes = rng.integers(1, 3, size=size).astype(np.int32)
        yield _draw(spec, classes, rng)
        done += size


def sample_stream(spec: NaiveBayesSpec, n: int, seed: int) -> np.ndarray:
    return np.concatenate(list(stream_chunks(spec, n, seed)))


def sample_heavy(spec: NaiveBayesSpec, count: int, seed: int) -> np.ndarray:
    """``count`` i.i.d. class-1 observations as an array."""
    if count < 1:
        raise ValueError("query count must be >= 1")
    rng = np.random.default_rng(seed)
    return _draw(spec, np.ones(count, dtype=np.int32), rng)


def sample_light(spec: NaiveBayesSpec, count: int, seed: int) -> np.ndarray:
    if count < 1:
        raise ValueError("query count must be >= 1")
    rng = np.random.default_rng(seed)
    return _draw(spec, np.full(count, 2, dtype=np.int32), rng)


def sample_heavy_queries(spec: NaiveBayesSpec, count: int, seed: int) -> list[LabeledQuery]:
    p = spec.heavy_p
    return [LabeledQuery(tuple(int(v) for v in row), p, True) for row in sample_heavy(spec, count, seed)]


def sample_light_queries(spec: NaiveBayesSpec, count: int, seed: int) -> list[LabeledQuery]:
    p = spec.light_p
    return [LabeledQuery(tuple(int(v) for v in row), p, False) for row in sample_light(spec, count, seed)]


def true_probability(spec: NaiveBayesSpec, X: np.ndarray) -> np.ndarray:
    """Exact ``P(x)`` of each row under the spec (0 off the support)."""
    X = np.atleast_2d(X)
    children = X[:, 1:]
    heavy = (X[:, 0] == 1) & (children <= spec.N).all(axis=1)
    light = (X[:, 0] == 2) & (children > spec.N).all(axis=1) & (children <= spec.M).all(axis=1)
    return np.where(heavy, spec.heavy_p, np.where(light, spec.light_p, 0.0))


# -- file formats -----------------------------------------------------------

def format_probability(p: float) -> str:
    """Powers of two print as ``2^-k``; anything else as a round-trippable decimal."""
    if p > 0:
        mant, exp = math.frexp(p)
        if mant == 0.5:
            return f"2^{exp - 1}"
    return repr(float(p))


def parse_probability(text: str) -> float:
    text = text.strip()
    if text.startswith("2^"):
        return math.ldexp(1.0, int(text[2:]))
    return float(Fraction(text)) if "/" in text else float(text)


def write_stream(X: np.ndarray, path: str | Path) -> None:
    np.savetxt(path, np.asarray(X), fmt="%d", delimiter=" ")


def read_stream(path: str | Path) -> np.ndarray:
    X = np.loadtxt(path, dtype=np.int64, ndmin=2)
    return X


def write_queries(queries: list[LabeledQuery], path: str | Path) -> None:
    with open(path, "w") as fh:
        for q in queries:
            fh.write(" ".join(map(str, q.x)) + " " + format_probability(q.true_p) + "\n")


def read_queries(path: str | Path, with_truth: bool = True):
    """Read a query file; returns ``(X, true_p)`` (``true_p`` is None without a truth column)."""
    rows, probs = [], []
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if not parts:
            continue
        if with_truth:
            rows.append([int(v) for v in parts[:-1]])
            probs.append(parse_probability(parts[-1]))
        else:
            rows.append([int(v) for v in parts])
    X = np.array(rows, dtype=np.int64).reshape(len(rows), -1)
    return X, (np.array(probs) if with_truth else None)
