"""Seeded pairwise-independent hashing from naturals to ``[m]``.

Every hash function is drawn from the multiply-add family

    h(key) = ((a * key + b) mod p) mod m + 1,     p = 2**61 - 1,

with ``a`` uniform on ``[1, p)`` and ``b`` uniform on ``[0, p)``.  For keys
that are distinct modulo ``p`` this family is 2-wise independent up to the
``mod m`` rounding.  Bins are 1-indexed at the public surface; the
vectorized helpers return 0-indexed bins for table addressing.

The intermediate value ``(a * key + b) mod p`` (the *field value*) does not
depend on ``m``, which lets callers hash a key set once and reuse it across
many table widths.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

MERSENNE_61 = (1 << 61) - 1

_P = np.uint64(MERSENNE_61)
_MASK32 = np.uint64(0xFFFFFFFF)
_MASK29 = np.uint64((1 << 29) - 1)
_U3 = np.uint64(3)
_U29 = np.uint64(29)
_U32 = np.uint64(32)
_U61 = np.uint64(61)


def derive_seed(master: int, *coords: int) -> int:
    """Derive a 64-bit seed from a master seed and integer coordinates.

    The derivation is a pure function of its arguments, so experiment cells
    get the same seeds regardless of execution order.
    """
    ss = np.random.SeedSequence(entropy=int(master), spawn_key=tuple(int(c) for c in coords))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _fold(x: np.ndarray) -> np.ndarray:
    # x < 2**63  ->  value congruent to x mod p, < p
    x = (x & _P) + (x >> _U61)
    return np.where(x >= _P, x - _P, x)


def mulmod61(a: int, x: np.ndarray) -> np.ndarray:
    """Return ``(a * x) mod (2**61 - 1)`` elementwise without 128-bit ints.

    ``a`` must lie in ``[0, p)`` and every element of ``x`` in ``[0, p)``.
    """
    x = np.asarray(x, dtype=np.uint64)
    a_hi = np.uint64(a >> 32)
    a_lo = np.uint64(a & 0xFFFFFFFF)
    x_hi = x >> _U32
    x_lo = x & _MASK32

    hi = a_hi * x_hi  # < 2**58, weight 2**64 == 2**3 (mod p)
    mid = a_hi * x_lo + a_lo * x_hi  # < 2**62, weight 2**32
    lo = a_lo * x_lo  # < 2**64, exact in uint64

    s = hi << _U3
    s += mid >> _U29  # mid_hi * 2**61 == mid_hi
    s += (mid & _MASK29) << _U32
    s += (lo & _P) + (lo >> _U61)
    return _fold(s)


def reduce_keys(keys) -> np.ndarray:
    """Reduce integer keys modulo ``p`` into a uint64 array."""
    arr = np.asarray(keys)
    if arr.dtype == object:
        return np.array([int(k) % MERSENNE_61 for k in arr.ravel()], dtype=np.uint64).reshape(arr.shape)
    if np.issubdtype(arr.dtype, np.signedinteger) and arr.size and arr.min() < 0:
        raise ValueError("keys must be non-negative")
    arr = arr.astype(np.uint64, copy=False)
    return np.where(arr >= _P, arr - _P, arr)


@dataclass(frozen=True)
class HashFn:
    """One member of the multiply-add family, fixed by ``seed`` and ``m``."""

    seed: int
    m: int
    a: int = field(init=False, repr=False)
    b: int = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.m < 1:
            raise ValueError(f"bin count must be positive, got m={self.m}")
        rng = np.random.Generator(np.random.PCG64(self.seed))
        object.__setattr__(self, "a", int(rng.integers(1, MERSENNE_61, dtype=np.uint64)))
        object.__setattr__(self, "b", int(rng.integers(0, MERSENNE_61, dtype=np.uint64)))

    def __call__(self, key: int) -> int:
        return eval_hash(self, key)

    def field(self, residues: np.ndarray) -> np.ndarray:
        """Field values ``(a * r + b) mod p`` for keys already reduced mod p."""
        v = mulmod61(self.a, residues) + np.uint64(self.b)
        return np.where(v >= _P, v - _P, v)

    def bins0(self, keys) -> np.ndarray:
        """Vectorized 0-indexed bins for an array of natural keys."""
        return (self.field(reduce_keys(keys)) % np.uint64(self.m)).astype(np.int64)

    def with_m(self, m: int) -> "HashFn":
        return HashFn(self.seed, m)


def new_hash_fn(seed: int, m: int) -> HashFn:
    """Draw the hash function determined by ``seed`` with ``m`` bins."""
    return HashFn(int(seed), int(m))


def eval_hash(h: HashFn, key: int) -> int:
    """Bin of ``key`` in ``[1, m]``."""
    key = int(key)
    if key < 0:
        raise ValueError("key must be a natural number")
    return ((h.a * (key % MERSENNE_61) + h.b) % MERSENNE_61) % h.m + 1


Hash = tuple[HashFn, ...]


def make_hash(master: int, replica: int, K: int, m: int) -> Hash:
    """The hash ``(h_1, ..., h_K)`` of replica ``replica`` under ``master``."""
    return tuple(new_hash_fn(derive_seed(master, 0, replica, k), m) for k in range(K))


def pair_key(x_child: int, x_parent: int, M: int) -> int:
    """Encode a (child value, parent value) pair as ``x_child + M*(x_parent - 1)``."""
    if M < 1 or not 1 <= x_child <= M:
        raise ValueError(f"child value {x_child} outside [1, {M}]")
    if x_parent < 1:
        raise ValueError(f"parent value {x_parent} must be >= 1")
    return int(x_child) + int(M) * (int(x_parent) - 1)


def pair_keys(x_child: np.ndarray, x_parent: np.ndarray, M: int) -> np.ndarray:
    """Vectorized :func:`pair_key` without range checks."""
    return np.asarray(x_child, dtype=np.uint64) + np.uint64(M) * (np.asarray(x_parent, dtype=np.uint64) - np.uint64(1))


def vector_key(x: Sequence[int], cardinalities: Sequence[int]) -> int:
    """Mixed-radix key ``x_1 + M_1 (x_2 - 1) + M_1 M_2 (x_3 - 1) + ...``.

    Exact (arbitrary precision); injective over the product domain.
    """
    if len(x) != len(cardinalities):
        raise ValueError("observation length does not match cardinalities")
    key, radix = 1, 1
    for v, M in zip(x, cardinalities):
        if not 1 <= v <= M:
            raise ValueError(f"value {v} outside [1, {M}]")
        key += radix * (int(v) - 1)
        radix *= int(M)
    return key


def vector_key_residues(X: np.ndarray, cardinalities: Sequence[int]) -> np.ndarray:
    """``vector_key`` of every row of ``X``, reduced mod p (Horner in the field)."""
    X = np.asarray(X)
    r = np.zeros(X.shape[0], dtype=np.uint64)
    for k in range(X.shape[1] - 1, -1, -1):
        r = mulmod61(int(cardinalities[k]) % MERSENNE_61, r)
        r = _fold(r + (X[:, k].astype(np.uint64) - np.uint64(1)))
    return _fold(r + np.uint64(1))
