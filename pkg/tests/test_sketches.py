import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import SMALL_MODELS, domain, injective_sketch, random_tree_stream
from gmsketch.harness import envelope
from gmsketch.model import ExactEstimator, TreeModel
from gmsketch.sketches import (
    CountMinSketch,
    GMFactorSketch,
    GMHash,
    GMSketch,
    SketchMismatchError,
    StreamKeys,
    from_dict,
    load_snapshot,
    make_sketch,
    save_snapshot,
)
from gmsketch.synth import NaiveBayesSpec, sample_heavy, sample_stream, tree_of

KINDS = ["cm", "gmhash", "gmsketch", "gmfactor"]


def build(kind, model, m, d=3, seed=0):
    return make_sketch(kind, model, m, 1 if kind == "gmhash" else d, seed)


def row_sums(sk):
    if sk.kind == "cm":
        return sk.table.sum(axis=-1).ravel()
    return np.concatenate([sk.var.sum(axis=-1).ravel(), sk.edge.sum(axis=-1).ravel()])


def exact_frequency(X, Q):
    rows = {}
    for r in map(tuple, X.tolist()):
        rows[r] = rows.get(r, 0) + 1
    return np.array([rows.get(tuple(q), 0) for q in Q.tolist()]) / len(X)


@pytest.mark.parametrize("kind", KINDS)
def test_single_update_row_sums(kind):
    sk = build(kind, TreeModel.chain([3, 3]), 8)
    sk.update([1, 2])
    assert (row_sums(sk) == 1).all()
    assert sk.n == 1


def test_cm_two_identical_updates():
    sk = CountMinSketch(TreeModel.chain([3, 3]), 16, 4, seed=1)
    sk.update([2, 3])
    sk.update([2, 3])
    assert sorted(sk.table.max(axis=1)) == [2, 2, 2, 2]
    assert (sk.table.sum(axis=1) == 2).all()


def test_gmhash_repeated_update():
    sk = GMHash(TreeModel.chain([3, 3]), 8, seed=2)
    for _ in range(7):
        sk.update([3, 1])
    assert sk.var.max() == 7 and sk.edge.max() == 7


@pytest.mark.parametrize("kind", KINDS)
def test_query_of_point_mass_is_one(kind):
    sk = build(kind, TreeModel.chain([2, 2]), 4)
    sk.update([1, 1])
    assert sk.query([1, 1]) == pytest.approx(1.0)


@pytest.mark.parametrize("kind", KINDS)
def test_empty_sketch_rejects_query(kind):
    with pytest.raises(ValueError):
        build(kind, TreeModel.chain([2, 2]), 4).query([1, 1])


@pytest.mark.parametrize("kind", KINDS)
def test_out_of_range_update_rejected(kind):
    sk = build(kind, TreeModel.chain([2, 2]), 4)
    with pytest.raises(ValueError):
        sk.update([3, 1])
    with pytest.raises(ValueError):
        sk.update_many(np.array([[1, 0]]))


@settings(max_examples=30)
@given(kind=st.sampled_from(KINDS), idx=st.integers(0, len(SMALL_MODELS) - 1),
       m=st.integers(1, 40), d=st.integers(1, 4), n=st.integers(1, 120), seed=st.integers(0, 2**32))
def test_table_sums_and_batch_equivalence(kind, idx, m, d, n, seed):
    model = SMALL_MODELS[idx]
    X = random_tree_stream(model, n, np.random.default_rng(seed))
    one = build(kind, model, m, d, seed)
    for x in X:
        one.update(x)
    batch = build(kind, model, m, d, seed)
    batch.update_many(X)
    assert one.counters_equal(batch)
    assert (row_sums(batch) == n).all()


def test_cm_1000_updates_row_sum():
    model = TreeModel.chain([8, 8, 8])
    sk = CountMinSketch(model, 32, 5, seed=3)
    sk.update_many(random_tree_stream(model, 1000, np.random.default_rng(0)))
    assert (sk.table.sum(axis=1) == 1000).all()


def test_cm_injective_regime_is_exact():
    model = TreeModel.chain([4, 4])
    sk = injective_sketch(CountMinSketch, model, 1024, 3)
    for x in ([1, 2], [1, 2], [3, 4], [1, 2]):
        sk.update(x)
    assert sk.query([1, 2]) == 3 / 4
    assert sk.query([2, 2]) == 0


@settings(max_examples=40)
@given(idx=st.integers(0, len(SMALL_MODELS) - 1), m=st.integers(1, 16), d=st.integers(1, 4),
       n=st.integers(1, 200), seed=st.integers(0, 2**32))
def test_cm_never_underestimates(idx, m, d, n, seed):
    model = SMALL_MODELS[idx]
    X = random_tree_stream(model, n, np.random.default_rng(seed))
    sk = CountMinSketch(model, m, d, seed=seed)
    sk.update_many(X)
    Q = domain(model)
    assert (sk.query_many(Q) >= exact_frequency(X, Q)).all()


@settings(max_examples=40)
@given(idx=st.integers(1, len(SMALL_MODELS) - 1), m=st.integers(1, 16), d=st.integers(1, 4),
       n=st.integers(1, 200), seed=st.integers(0, 2**32))
def test_gmfactor_factors_never_underestimate(idx, m, d, n, seed):
    model = SMALL_MODELS[idx]
    X = random_tree_stream(model, n, np.random.default_rng(seed))
    sk = GMFactorSketch(model, m, d, seed=seed)
    sk.update_many(X)
    est = ExactEstimator(model)
    est.update_many(X)
    Q = domain(model)
    var_hat, pair_hat = sk.factor_estimates(Q)
    for k in range(1, model.K + 1):
        assert (var_hat[:, k - 1] >= est.var_counts[k - 1][Q[:, k - 1] - 1] / n).all()
    assert (pair_hat >= est.pair_frequencies(Q)).all()


@pytest.mark.parametrize("model", SMALL_MODELS)
@pytest.mark.parametrize("cls,args", [(GMHash, ()), (GMSketch, (3,)), (GMFactorSketch, (3,))])
def test_injective_regime_equals_exact(model, cls, args):
    X = random_tree_stream(model, 1000, np.random.default_rng(model.K + sum(model.cardinalities)))
    est = ExactEstimator(model)
    est.update_many(X)
    sk = injective_sketch(cls, model, 4096, *args)
    sk.update_many(X)
    Q = domain(model)
    exact = est.query_many(Q)
    got = sk.query_many(Q)
    assert ((exact == 0) == (got == 0)).all()
    np.testing.assert_allclose(got, exact, rtol=1e-12, atol=0)


def test_gmhash_zero_parent_bin():
    model = TreeModel.chain([4, 2])
    sk = injective_sketch(GMHash, model, 64)
    sk.update_many(np.array([[1, 1], [2, 2]]))
    assert sk.query([3, 1]) == 0


def test_gmsketch_single_replica_matches_gmhash():
    model = TreeModel.chain([6, 6, 6])
    X = random_tree_stream(model, 300, np.random.default_rng(5))
    gs = GMSketch(model, 5, 1, seed=9)
    gh = GMHash(model, 5, seed=9)
    gs.update_many(X)
    gh.update_many(X)
    Q = domain(model)
    assert np.array_equal(gs.query_many(Q), gh.query_many(Q))
    assert gs.replica(0).counters_equal(gh)


def test_gmsketch_is_lower_median_of_replicas():
    model = TreeModel.chain([8, 8])
    X = random_tree_stream(model, 400, np.random.default_rng(1), concentration=0.3)
    Q = domain(model)
    found = False
    for seed in range(200):
        sk = GMSketch(model, 3, 3, seed=seed)
        sk.update_many(X)
        reps = np.array([sk.replica(i).query_many(Q) for i in range(3)])
        distinct = np.array([len(set(c)) == 3 for c in reps.T])
        if distinct.any():
            q = int(np.argmax(distinct))
            assert sk.query(list(Q[q])) == sorted(reps[:, q])[1]
            found = True
            break
    assert found
    even = GMSketch(model, 3, 2, seed=0)
    even.update_many(X)
    reps = np.array([even.replica(i).query_many(Q) for i in range(2)])
    assert np.array_equal(even.query_many(Q), reps.min(axis=0))


def test_estimates_are_not_clamped():
    # with colliding bins the factor ratios can exceed 1 and the product is reported as is
    model = TreeModel.chain([4, 8, 8])
    X = random_tree_stream(model, 300, np.random.default_rng(0), concentration=0.2)
    for seed in range(100):
        sk = GMFactorSketch(model, 2, 1, seed=seed)
        sk.update_many(X)
        if sk.query_many(domain(model)).max() > 1:
            return
    pytest.fail("no estimate above 1 found; clamping suspected")


@pytest.mark.parametrize("kind", KINDS)
def test_merge_identity_and_homomorphism(kind):
    model = TreeModel.from_edges(3, {2: 1, 3: 1}, [2, 8, 8])
    rng = np.random.default_rng(4)
    X = random_tree_stream(model, 500, rng)
    a = build(kind, model, 7, 3, seed=11)
    a.update_many(X[:200])
    empty = build(kind, model, 7, 3, seed=11)
    Q = domain(model)
    assert np.array_equal(a.merge(empty).query_many(Q), a.query_many(Q))
    b = build(kind, model, 7, 3, seed=11)
    b.update_many(X[200:])
    whole = build(kind, model, 7, 3, seed=11)
    whole.update_many(X)
    merged = a.merge(b)
    assert merged.counters_equal(whole)
    assert merged.n == 500 and a.n == 200  # inputs untouched


@pytest.mark.parametrize("kind", KINDS)
def test_merge_rejects_mismatch(kind):
    model = TreeModel.chain([3, 3])
    with pytest.raises(SketchMismatchError):
        build(kind, model, 8, 3, seed=1).merge(build(kind, model, 8, 3, seed=2))
    with pytest.raises(SketchMismatchError):
        build(kind, model, 8, 3, seed=1).merge(build(kind, model, 9, 3, seed=1))
    other = "gmfactor" if kind != "gmfactor" else "cm"
    with pytest.raises(SketchMismatchError):
        build(kind, model, 8, 3, seed=1).merge(build(other, model, 8, 3, seed=1))


@pytest.mark.parametrize("kind", KINDS)
def test_snapshot_round_trip(kind, tmp_path):
    model = TreeModel.from_edges(3, {2: 3, 3: 1}, [4, 6, 3])
    sk = build(kind, model, 13, 3, seed=77)
    sk.update_many(random_tree_stream(model, 300, np.random.default_rng(2)))
    path = tmp_path / "snap.json"
    save_snapshot(sk, path)
    back = load_snapshot(path)
    assert type(back) is type(sk)
    assert back.counters_equal(sk)
    assert np.array_equal(back.query_many(domain(model)), sk.query_many(domain(model)))
    # a loaded snapshot keeps ingesting with the same hashes
    more = random_tree_stream(model, 50, np.random.default_rng(3))
    back.update_many(more)
    sk.update_many(more)
    assert back.counters_equal(sk)


def test_snapshot_rejects_foreign_documents():
    with pytest.raises(ValueError):
        from_dict({"format": "something-else"})


def test_space_accounting():
    model = TreeModel.chain([4, 4, 4, 4])
    assert CountMinSketch(model, 10, 5).space == 50
    assert GMHash(model, 10).space == 7 * 10
    assert GMSketch(model, 10, 5).space == 7 * 10 * 5
    assert GMFactorSketch(model, 10, 5).space == 7 * 10 * 5


def test_ingest_shared_keys_across_widths():
    model = TreeModel.chain([8, 8, 8])
    X = random_tree_stream(model, 500, np.random.default_rng(8))
    keys = StreamKeys.from_observations(model, X)
    for m in (3, 17, 64):
        a = GMFactorSketch(model, m, 3, seed=5)
        a.ingest(keys)
        b = GMFactorSketch(model, m, 3, seed=5)
        b.update_many(X)
        assert a.counters_equal(b)


def test_gmsketch_envelope_coverage():
    # median of d >= 8 log(1/delta) replicas, each with the delta = 1/4 single-hash terms
    spec = NaiveBayesSpec(K=3, M=256, N=8)
    model = tree_of(spec)
    X = sample_stream(spec, 10**4, seed=1)
    est = ExactEstimator(model)
    est.update_many(X)
    keys = StreamKeys.from_observations(model, X, vector=False)
    x = sample_heavy(spec, 1, seed=2)[0]
    K, delta = model.K, 0.25
    freqs = np.concatenate([[est.prior(1, x[0])], est.pair_frequencies(x[None, :])[0]])
    m = math.ceil(2 * K**2 / (freqs.min() * 0.25))
    d = math.ceil(8 * math.log(1 / delta))
    lo, hi = envelope(est, x, m, "gmsketch")
    p = est.query(x)
    trials = 200
    bad = 0
    for s in range(trials):
        sk = GMSketch(model, m, d, seed=1000 + s)
        sk.ingest(keys)
        q = sk.query(x)
        bad += not (p * lo <= q <= p * hi)
    assert bad / trials <= delta + 3 * math.sqrt(delta * (1 - delta) / trials)
