"""Equal-space sweeps of the four estimators and their error envelopes.

A sweep fixes a list of space budgets (in counters) and, for every
estimator and budget, derives the table width ``m`` so that the estimator
holds at most that many counters:

* count-min: ``m * d`` counters,
* GMHash: ``(2K - 1) * m`` counters,
* GMSketch / GMFactorSketch: ``(2K - 1) * m * d`` counters.

Each run draws a fresh training stream, fresh test queries and fresh hash
seeds, all derived from the master seed and the run index only.  The
reported statistic is the fraction of test queries whose estimate falls
outside ``[p / e, e * p]``.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .hashing import derive_seed
from .model import ExactEstimator, TreeModel
from .sketches import StreamKeys, make_sketch, tables_per_replica
from .synth import (
    NaiveBayesSpec,
    read_queries,
    read_stream,
    sample_heavy,
    stream_chunks,
    tree_of,
)

log = logging.getLogger(__name__)

ESTIMATORS = ("cm", "gmhash", "gmsketch", "gmfactor")
DEFAULT_BUDGETS = tuple(2**b for b in range(8, 25))
CSV_COLUMNS = ("estimator", "budget_counters", "m", "d", "run_count",
               "imprecise_fraction_mean", "imprecise_fraction_std", "seconds")
THREADS_ENV = "GMSKETCH_THREADS"


# -- precision and envelopes --------------------------------------------------

def is_precise(p_hat: float, p_true: float) -> bool:
    if p_true <= 0:
        raise ValueError("precision is undefined for a zero true probability")
    return p_true / math.e <= p_hat <= math.e * p_true


def precise_mask(p_hat: np.ndarray, p_true: np.ndarray) -> np.ndarray:
    p_hat = np.asarray(p_hat, dtype=float)
    p_true = np.broadcast_to(np.asarray(p_true, dtype=float), p_hat.shape)
    if (p_true <= 0).any():
        raise ValueError("precision is undefined for a zero true probability")
    return (p_true / math.e <= p_hat) & (p_hat <= math.e * p_true)


def factor_frequencies(est: ExactEstimator, x: Sequence[int]) -> np.ndarray:
    """Root prior followed by the K - 1 pair co-occurrence frequencies along ``x``."""
    prior = est.prior(1, x[0])
    pairs = est.pair_frequencies(np.asarray(x)[None, :])[0] if est.model.K > 1 else np.empty(0)
    return np.concatenate([[prior], pairs])


def epsilons(est: ExactEstimator, x: Sequence[int], m: int, variant: str, delta: float = 0.25) -> np.ndarray:
    """Per-factor error terms of the multiplicative guarantee.

    ``gmhash`` uses ``2K / (f_k * delta * m)``; ``gmsketch`` the same with
    ``delta = 1/4``; ``gmfactor`` uses ``e / (f_k * m)``, where ``f_k`` is the
    empirical frequency of the root value (k = 1) or of the pair (k >= 2).
    """
    f = factor_frequencies(est, x)
    if (f <= 0).any():
        raise ValueError("envelope is unbounded: a factor of x was never observed")
    K = est.model.K
    if variant == "gmhash":
        return 2 * K / (f * delta * m)
    if variant == "gmsketch":
        return 2 * K / (f * 0.25 * m)
    if variant == "gmfactor":
        return math.e / (f * m)
    raise ValueError(f"no envelope for variant {variant!r}")


def envelope(est: ExactEstimator, x: Sequence[int], m: int, variant: str, delta: float = 0.25) -> tuple[float, float]:
    """``(prod(1 - eps_k), prod(1 + eps_k))`` around the exact estimate of ``x``.

    A factor with ``eps_k >= 1`` has no lower bound, so ``1 - eps_k`` is
    floored at 0 rather than allowed to flip sign.
    """
    eps = epsilons(est, x, m, variant, delta)
    return float(np.prod(np.maximum(1 - eps, 0.0))), float(np.prod(1 + eps))


# -- configuration ------------------------------------------------------------

def derive_m(kind: str, model: TreeModel, budget: int, d: int) -> int:
    """Widest ``m`` that keeps the estimator within ``budget`` counters (0 if none)."""
    reps = 1 if kind == "gmhash" else d
    return budget // (tables_per_replica(kind, model) * reps)


@dataclass
class ExperimentConfig:
    spec: NaiveBayesSpec | None = None
    model_path: str | None = None
    stream_path: str | None = None
    queries_path: str | None = None
    n_train: int = 10**6
    n_test: int = 5 * 10**5
    d: int = 5
    budgets: tuple[int, ...] = DEFAULT_BUDGETS
    estimators: tuple[str, ...] = ESTIMATORS
    runs: int = 20
    seed: int = 0
    truth: str = "analytic"  # or "oracle"
    output: str | None = None

    def __post_init__(self) -> None:
        self.budgets = tuple(int(b) for b in self.budgets)
        self.estimators = tuple(self.estimators)
        if isinstance(self.spec, dict):
            self.spec = NaiveBayesSpec(**self.spec)
        if (self.spec is None) == (self.stream_path is None):
            raise ValueError("give either a synthetic spec or an external stream, not both")
        if self.stream_path is not None and self.model_path is None:
            raise ValueError("an external stream needs a model file")
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if not self.budgets or any(b2 <= b1 for b1, b2 in zip(self.budgets, self.budgets[1:])):
            raise ValueError("budgets must be non-empty and strictly increasing")
        unknown = set(self.estimators) - set(ESTIMATORS)
        if unknown:
            raise ValueError(f"unknown estimators: {sorted(unknown)}")
        if self.truth not in ("analytic", "oracle"):
            raise ValueError("truth must be 'analytic' or 'oracle'")
        if self.n_train < 1 or self.n_test < 1:
            raise ValueError("n_train and n_test must be >= 1")

    @classmethod
    def from_json(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        if "budgets_log2" in doc:
            doc["budgets"] = [2**b for b in doc.pop("budgets_log2")]
        return cls(**doc)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_json(json.loads(Path(path).read_text()))

    def to_json(self) -> dict:
        doc = asdict(self)
        doc["budgets"] = list(self.budgets)
        doc["estimators"] = list(self.estimators)
        return doc

    def model(self) -> TreeModel:
        return tree_of(self.spec) if self.spec is not None else TreeModel.load(self.model_path)


@dataclass
class CellResult:
    estimator: str
    budget_counters: int
    m: int
    d: int
    run_count: int
    imprecise_fraction_mean: float | None
    imprecise_fraction_std: float | None
    seconds: float
    fractions: list[float] = field(default_factory=list, repr=False)

    @property
    def supported(self) -> bool:
        return self.m >= 1

    @property
    def stderr(self) -> float:
        if not self.supported:
            return math.nan
        return (self.imprecise_fraction_std or 0.0) / math.sqrt(self.run_count)

    def row(self) -> dict:
        return {c: getattr(self, c) for c in CSV_COLUMNS}


@dataclass
class ExperimentResult:
    cells: list[CellResult]
    config: dict | None = None

    def cell(self, estimator: str, budget: int) -> CellResult:
        for c in self.cells:
            if c.estimator == estimator and c.budget_counters == budget:
                return c
        raise KeyError((estimator, budget))

    def series(self, estimator: str) -> list[CellResult]:
        return sorted((c for c in self.cells if c.estimator == estimator), key=lambda c: c.budget_counters)

    def crossing_budget(self, estimator: str, threshold: float = 0.05) -> int | None:
        """Smallest budget whose mean imprecise fraction is at most ``threshold``."""
        for c in self.series(estimator):
            if c.supported and c.imprecise_fraction_mean <= threshold:
                return c.budget_counters
        return None


# -- running ------------------------------------------------------------------

@dataclass
class _RunData:
    model: TreeModel
    train: StreamKeys
    queries: StreamKeys
    truth: np.ndarray


def _prepare_run(cfg: ExperimentConfig, run: int, need_vector: bool) -> _RunData:
    model = cfg.model()
    oracle = ExactEstimator(model) if cfg.truth == "oracle" else None
    train = None
    if cfg.spec is not None:
        chunks = stream_chunks(cfg.spec, cfg.n_train, derive_seed(cfg.seed, 0, run))
    else:
        chunks = [read_stream(cfg.stream_path)]
    for X in chunks:
        keys = StreamKeys.from_observations(model, X, vector=need_vector)
        train = keys if train is None else train.merge(keys)
        if oracle is not None:
            oracle.update_many(X)

    truth = None
    if cfg.spec is not None:
        Xq = sample_heavy(cfg.spec, cfg.n_test, derive_seed(cfg.seed, 1, run))
        truth = np.full(len(Xq), cfg.spec.heavy_p)
    elif cfg.queries_path is not None:
        Xq, truth = read_queries(cfg.queries_path, with_truth=cfg.truth == "analytic")
    else:
        stream = read_stream(cfg.stream_path)
        rng = np.random.default_rng(derive_seed(cfg.seed, 1, run))
        Xq = stream[rng.integers(0, len(stream), size=cfg.n_test)]
    if oracle is not None:
        truth = oracle.query_many(Xq)
    if truth is None:
        raise ValueError("no ground truth: supply a truth column or use truth='oracle'")
    keep = truth > 0
    if not keep.all():
        log.warning("dropping %d queries with zero true probability", int((~keep).sum()))
        Xq, truth = Xq[keep], truth[keep]
    queries = StreamKeys.from_observations(model, Xq, aggregate=False, vector=need_vector)
    return _RunData(model, train, queries, truth)


def _run_once(cfg: ExperimentConfig, run: int) -> dict:
    """Imprecise fraction and timing of every (estimator, budget) cell for one run."""
    data = _prepare_run(cfg, run, need_vector="cm" in cfg.estimators)
    hash_seed = derive_seed(cfg.seed, 2, run)
    out = {}
    for kind in cfg.estimators:
        d = 1 if kind == "gmhash" else cfg.d
        for budget in cfg.budgets:
            m = derive_m(kind, data.model, budget, cfg.d)
            if m < 1:
                continue
            t0 = time.perf_counter()
            sk = make_sketch(kind, data.model, m, d, hash_seed)
            sk.ingest(data.train)
            p_hat = sk.query_keys(data.queries)
            frac = 1.0 - float(precise_mask(p_hat, data.truth).mean())
            out[kind, budget] = (frac, time.perf_counter() - t0)
            del sk
    data.train.clear_cache()
    log.info("run %d done", run)
    return out


def run_experiment(cfg: ExperimentConfig, threads: int | None = None) -> ExperimentResult:
    """Run every configured run and aggregate per-cell statistics.

    The result depends only on the configuration: seeds come from
    ``(master seed, run index)``, so thread count and estimator order do not
    change any number except wall-clock time.
    """
    if threads is None:
        threads = int(os.environ.get(THREADS_ENV, "1"))
    model = cfg.model()
    if threads > 1 and cfg.runs > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_run = list(pool.map(lambda r: _run_once(cfg, r), range(cfg.runs)))
    else:
        per_run = [_run_once(cfg, r) for r in range(cfg.runs)]

    cells = []
    for kind in cfg.estimators:
        d = 1 if kind == "gmhash" else cfg.d
        for budget in cfg.budgets:
            m = derive_m(kind, model, budget, cfg.d)
            if m < 1:
                cells.append(CellResult(kind, budget, 0, d, cfg.runs, None, None, 0.0))
                continue
            fr = [r[kind, budget][0] for r in per_run]
            secs = [r[kind, budget][1] for r in per_run]
            std = float(np.std(fr, ddof=1)) if len(fr) > 1 else 0.0
            cells.append(CellResult(kind, budget, m, d, cfg.runs, float(np.mean(fr)), std,
                                    float(np.mean(secs)), fr))
    result = ExperimentResult(cells, cfg.to_json())
    if cfg.output:
        fmt = "json" if cfg.output.endswith(".json") else "csv"
        emit(result, fmt, cfg.output)
    return result


# -- output ---------------------------------------------------------------------

def emit(result: ExperimentResult, fmt: str, path: str | Path) -> None:
    """Write one row per (estimator, budget); unsupported cells have m = 0 and empty fractions."""
    path = Path(path)
    if fmt == "csv":
        with path.open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
            w.writeheader()
            for c in result.cells:
                w.writerow({k: ("" if v is None else v) for k, v in c.row().items()})
    elif fmt == "json":
        doc = {"config": result.config, "rows": [c.row() for c in result.cells]}
        path.write_text(json.dumps(doc, indent=2))
    else:
        raise ValueError(f"unknown output format {fmt!r}")


def load_rows(path: str | Path) -> list[dict]:
    """Read rows written by :func:`emit` (CSV or JSON) back as dicts."""
    path = Path(path)
    if path.suffix == ".json":
        return json.loads(path.read_text())["rows"]
    with path.open() as fh:
        return list(csv.DictReader(fh))


def easy_config(**overrides) -> ExperimentConfig:
    from .synth import EASY
    return ExperimentConfig(spec=EASY, **overrides)


def hard_config(**overrides) -> ExperimentConfig:
    from .synth import HARD
    return ExperimentConfig(spec=HARD, **overrides)
