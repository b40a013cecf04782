"""Empirical coverage of the multiplicative error envelopes.

For a fixed random chain-structured stream, sets m in the regime where every
per-factor error term is at most 1/K and counts how often the sketch estimate
falls outside ``[P_exact * lower, P_exact * upper]`` over many hash seeds.
"""

import argparse
import math

import numpy as np

from gmsketch.harness import envelope
from gmsketch.hashing import derive_seed
from gmsketch.model import ExactEstimator, TreeModel
from gmsketch.sketches import StreamKeys, make_sketch


def dirichlet_chain_stream(cards, n, rng, concentration):
    X = np.empty((n, len(cards)), dtype=np.int64)
    X[:, 0] = rng.choice(cards[0], size=n, p=rng.dirichlet(np.full(cards[0], concentration))) + 1
    for k in range(1, len(cards)):
        cpt = rng.dirichlet(np.full(cards[k], concentration), size=cards[k - 1])
        cum = np.cumsum(cpt[X[:, k - 1] - 1], axis=1)
        X[:, k] = np.minimum((rng.random(n)[:, None] > cum).sum(axis=1), cards[k] - 1) + 1
    return X


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--K", type=int, default=4)
    ap.add_argument("--M", type=int, default=256)
    ap.add_argument("--n", type=int, default=10**4)
    ap.add_argument("--delta", type=float, default=0.25)
    ap.add_argument("--seeds", type=int, default=400)
    ap.add_argument("--queries", type=int, default=8)
    args = ap.parse_args()

    cards = [args.M] * args.K
    model = TreeModel.chain(cards)
    X = dirichlet_chain_stream(cards, args.n, np.random.default_rng(5), 0.05)
    est = ExactEstimator(model)
    est.update_many(X)
    rows, counts = np.unique(X, axis=0, return_counts=True)
    Q = rows[np.argsort(-counts)[: args.queries]]
    freqs = np.concatenate([est.var_counts[0][Q[:, 0] - 1][:, None] / est.n, est.pair_frequencies(Q)], axis=1)
    keys = StreamKeys.from_observations(model, X, vector=False)
    exact = est.query_many(Q)
    K, delta = model.K, args.delta

    regimes = {
        "gmhash": (math.ceil(2 * K * K / (freqs.min() * delta)), 1),
        "gmsketch": (math.ceil(2 * K * K / (freqs.min() * 0.25)), math.ceil(8 * math.log(1 / delta))),
        "gmfactor": (math.ceil(math.e * K / freqs.min()), math.ceil(math.log(2 * K / delta))),
    }
    for variant, (m, d) in regimes.items():
        bounds = np.array([envelope(est, x, m, variant, delta) for x in Q])
        bad = 0
        for s in range(args.seeds):
            sk = make_sketch(variant, model, m, d, derive_seed(55, s))
            sk.ingest(keys)
            got = sk.query_many(Q)
            bad += int(((got < exact * bounds[:, 0]) | (got > exact * bounds[:, 1])).sum())
        trials = args.seeds * len(Q)
        print(f"{variant:9s} m={m:7d} d={d:2d} violations {bad}/{trials} = {bad / trials:.4f} (delta {delta})")


if __name__ == "__main__":
    main()
