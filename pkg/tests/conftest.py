import itertools

import hypothesis
import numpy as np
import pytest

from gmsketch.model import TreeModel

hypothesis.settings.register_profile("ci", max_examples=60, deadline=None)
hypothesis.settings.register_profile("dev", max_examples=20, deadline=None)
hypothesis.settings.load_profile("ci")

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def report():
    def _report(criterion: str, ok: bool, detail: str = "") -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] {criterion}" + (f": {detail}" if detail else "")
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return _report


def random_tree_stream(model: TreeModel, n: int, rng: np.random.Generator, concentration: float = 0.5) -> np.ndarray:
    """Ancestral sampling from random Dirichlet CPTs over ``model``."""
    order = [1]
    while len(order) < model.K:
        for k in model.children:
            if k not in order and model.parent(k) in order:
                order.append(k)
    X = np.zeros((n, model.K), dtype=np.int64)
    M = model.cardinalities
    root = rng.dirichlet(np.full(M[0], concentration))
    X[:, 0] = rng.choice(M[0], size=n, p=root) + 1
    for k in order[1:]:
        pa = model.parent(k)
        cpt = rng.dirichlet(np.full(M[k - 1], concentration), size=M[pa - 1])
        u = rng.random(n)
        cum = np.cumsum(cpt[X[:, pa - 1] - 1], axis=1)
        X[:, k - 1] = np.minimum((u[:, None] > cum).sum(axis=1), M[k - 1] - 1) + 1
    return X


def domain(model: TreeModel) -> np.ndarray:
    return np.array(list(itertools.product(*[range(1, M + 1) for M in model.cardinalities])), dtype=np.int64)


SMALL_MODELS = [
    TreeModel((0,), (5,)),
    TreeModel.chain([4, 3]),
    TreeModel.chain([8, 8]),
    TreeModel.chain([3, 5, 2]),
    TreeModel.from_edges(3, {2: 1, 3: 1}, [2, 8, 8]),
    TreeModel.from_edges(3, {2: 3, 3: 1}, [4, 6, 3]),
    TreeModel.chain([8, 8, 8]),
]


def hashes_collision_free(sketch) -> bool:
    """Audit every hash of a graphical-model sketch for collisions on its key domain."""
    model = sketch.model
    for hs in sketch.hashes:
        for k in range(1, model.K + 1):
            M = model.cardinalities[k - 1]
            if len(np.unique(hs[k - 1].bins0(np.arange(1, M + 1)))) != M:
                return False
        for k in model.children:
            size = model.cardinalities[k - 1] * model.cardinalities[model.parent(k) - 1]
            if len(np.unique(hs[k - 1].bins0(np.arange(1, size + 1)))) != size:
                return False
    return True


def cm_collision_free(sketch) -> bool:
    size = int(np.prod(sketch.model.cardinalities))
    return all(len(np.unique(h.bins0(np.arange(1, size + 1)))) == size for h in sketch.hashes)


def injective_sketch(cls, model, m, *args, start=0):
    """First seed from ``start`` whose sketch hashes are collision-free on the domain."""
    audit = cm_collision_free if cls.kind == "cm" else hashes_collision_free
    for seed in range(start, start + 1000):
        sk = cls(model, m, *args, seed=seed)
        if audit(sk):
            return sk
    raise RuntimeError("no collision-free seed found")
