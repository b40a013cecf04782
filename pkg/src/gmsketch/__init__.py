"""Sketches of tree-structured Bayesian networks for point-probability queries."""

from .hashing import HashFn, eval_hash, new_hash_fn, pair_key, vector_key
from .model import ExactEstimator, ModelError, TreeModel, validate
from .sketches import (
    CountMinSketch,
    GMFactorSketch,
    GMHash,
    GMSketch,
    SketchConfig,
    SketchMismatchError,
    StreamKeys,
    load_snapshot,
    make_sketch,
    save_snapshot,
)
from .synth import NaiveBayesSpec, sample_heavy_queries, sample_stream, tree_of

__all__ = [
    "CountMinSketch", "ExactEstimator", "GMFactorSketch", "GMHash", "GMSketch", "HashFn",
    "ModelError", "NaiveBayesSpec", "SketchConfig", "SketchMismatchError", "StreamKeys",
    "TreeModel", "eval_hash", "load_snapshot", "make_sketch", "new_hash_fn", "pair_key",
    "sample_heavy_queries", "sample_stream", "save_snapshot", "tree_of", "validate", "vector_key",
]
