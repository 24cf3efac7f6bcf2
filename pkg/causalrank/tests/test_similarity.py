import math
from fractions import Fraction

import numpy as np
import pytest
import scipy.sparse as sps

from ..config import SimilarityConfig
from ..data import SparseBinaryMatrix
from ..similarity import (NeighborSet, cosine, cosine_block,
                          derive_neighbors, intersection_matrix,
                          load_neighbor_cache, neighbor_matrix, neighbors_for,
                          order_key, raw_neighbors, save_neighbor_cache,
                          scaled_weight, source_matrix, top_k_neighbors)


def random_matrix(n_rows, n_cols, density=0.3, seed=0):
    rng = np.random.RandomState(seed)
    return SparseBinaryMatrix.from_dense(
        (rng.rand(n_rows, n_cols) < density).astype(int))


def test_cosine_examples():
    assert cosine([1, 1, 0], [1, 0, 0]) == pytest.approx(1 / math.sqrt(2))
    assert cosine([1, 0, 1], [1, 0, 1]) == 1.0
    assert cosine([0, 0, 0], [1, 1, 1]) == 0.0
    assert cosine([1, 0], [0, 1]) == 0.0
    assert cosine(sps.csr_matrix([[1, 1, 0]]), [1, 0, 0]) \
        == pytest.approx(1 / math.sqrt(2))
    with pytest.raises(ValueError):
        cosine([1, 0], [1, 0, 0])
    with pytest.raises(ValueError):
        cosine([2, 0], [1, 0])


def test_scaled_weight():
    assert scaled_weight(0.5, 2) == 0.25
    assert scaled_weight(0.25, 0.5) == 0.5
    assert scaled_weight(0.0, 1) == 0.0
    assert scaled_weight(1.0, 3) == 1.0
    assert scaled_weight(np.array([0.5, 1.0]), 1).tolist() == [0.5, 1.0]
    with pytest.raises(ValueError):
        scaled_weight(0.5, 0)
    with pytest.raises(ValueError):
        scaled_weight(1.5, 1)


def test_cosine_block_matches_pairwise():
    m = random_matrix(12, 9, seed=4)
    dense = m.toarray()
    block = cosine_block(m, range(3, 8)).toarray()
    for local, r in enumerate(range(3, 8)):
        for s in range(12):
            assert block[local, s] == cosine(dense[r], dense[s])
    counts = intersection_matrix(m, m)[3:8]
    assert np.array_equal(counts > 0, block > 0)


def exact_cosine_squared(a, b):
    a, b = set(np.flatnonzero(a)), set(np.flatnonzero(b))
    if not a or not b:
        return Fraction(0)
    return Fraction(len(a & b) ** 2, len(a) * len(b))


def brute_force_neighbors(matrix, k):
    """Every pair, sorted by exact cosine then index."""
    dense = matrix.toarray()
    out = []
    for r in range(matrix.n_rows):
        pairs = [(exact_cosine_squared(dense[r], dense[s]), s)
                 for s in range(matrix.n_rows) if s != r]
        pairs = [p for p in pairs if p[0] > 0]
        pairs.sort(key=lambda p: (-p[0], p[1]))
        out.append([(cosine(dense[r], dense[s]), s) for _, s in pairs[:k]])
    return out


@pytest.mark.parametrize('shape, density, k, seed', [
    ((15, 6), 0.4, 5, 1), ((50, 50), 0.1, 12, 2), ((30, 40), 0.05, 29, 3),
    ((50, 20), 0.3, 7, 4), ((40, 4), 0.5, 39, 5)])
@pytest.mark.parametrize('block_size', [1, 4, 100])
def test_top_k_matches_brute_force(shape, density, k, seed, block_size):
    m = random_matrix(*shape, density=density, seed=seed)
    cfg = SimilarityConfig(k=k, alpha=1.0)
    got = top_k_neighbors(m, cfg, block_size=block_size)
    expected = brute_force_neighbors(m, k)
    for ns, exp in zip(got, expected):
        assert ns.ids.tolist() == [s for _, s in exp]
        assert ns.weights.tolist() == [c for c, _ in exp]


def test_parallel_blocks_identical():
    m = random_matrix(40, 20, seed=2)
    serial = raw_neighbors(m, 10, block_size=7, workers=1)
    parallel = raw_neighbors(m, 10, block_size=7, workers=4)
    assert serial == parallel


def test_ties_break_by_index():
    # rows 1, 2 and 3 are identical, all equally similar to row 0
    m = SparseBinaryMatrix.from_dense([[1, 1], [1, 0], [1, 0], [1, 0]])
    ns = top_k_neighbors(m, SimilarityConfig(k=2, alpha=1.0))[0]
    assert ns.ids.tolist() == [1, 2]


def equal_cosine_rows():
    """
    Rows 1 and 2 both have cosine 1/sqrt(6) with row 0, computed from
    different counts: 3 of 18 columns shared and 1 of 2 shared.
    """
    dense = np.zeros((3, 19), dtype=int)
    dense[0, :3] = 1
    dense[1, :18] = 1
    dense[2, [0, 18]] = 1
    return SparseBinaryMatrix.from_dense(dense)


def test_ties_between_equal_cosines_from_different_counts():
    m = equal_cosine_rows()
    dense = m.toarray()
    assert exact_cosine_squared(dense[0], dense[1]) == \
        exact_cosine_squared(dense[0], dense[2]) == Fraction(1, 6)
    ns = top_k_neighbors(m, SimilarityConfig(k=1, alpha=1.0))[0]
    assert ns.ids.tolist() == [1]
    ns = top_k_neighbors(m, SimilarityConfig(k=2, alpha=1.0))[0]
    assert ns.ids.tolist() == [1, 2]
    assert ns.weights == pytest.approx([1 / math.sqrt(6)] * 2)


def test_order_key():
    counts = intersection_matrix(equal_cosine_rows(), equal_cosine_rows())
    key = order_key(counts[0], equal_cosine_rows().row_nnz())
    assert key[1] == key[2] == 0.5
    assert key[0] == 3.0
    assert order_key([0, 2], [0, 4]).tolist() == [0.0, 1.0]


@pytest.mark.parametrize('seed', range(50))
def test_selection_independent_of_alpha_grid(seed):
    rng = np.random.RandomState(seed)
    n_rows, n_cols = rng.randint(2, 16, size=2)
    m = random_matrix(n_rows, n_cols, density=rng.uniform(0.1, 0.6),
                      seed=seed)
    k = int(rng.randint(0, n_rows))
    alpha, other = rng.choice([0.33, 0.5, 1.0, 2.0, 3.0, 5.0], size=2)
    first = top_k_neighbors(m, SimilarityConfig(k=k, alpha=float(alpha)))
    second = top_k_neighbors(m, SimilarityConfig(k=k, alpha=float(other)))
    for a, b in zip(first, second):
        assert a.ids.tolist() == b.ids.tolist()


def test_selection_independent_of_alpha():
    m = random_matrix(20, 10, seed=3)
    raw = raw_neighbors(m, 8)
    for alpha in (0.25, 1.0, 4.0):
        derived = derive_neighbors(raw, 8, alpha, include_self=False)
        for ns, r in zip(derived, raw):
            keep = r.weights ** alpha > 0
            assert ns.ids.tolist() == r.ids[keep].tolist()
            assert np.array_equal(ns.weights, r.weights[keep] ** alpha)


def test_include_self_and_zero_rows():
    m = SparseBinaryMatrix.from_dense([[1, 0], [0, 0], [1, 1]])
    sets = top_k_neighbors(m, SimilarityConfig(k=2, alpha=1.0),
                           include_self=True)
    assert sets[0].neighbors[0] == (0, 1.0)
    assert sets[0].includes_self
    # an all-zero row has no neighbors beyond itself
    assert sets[1].neighbors == [(1, 1.0)]
    assert 1 not in sets[2].ids.tolist()


def test_k_range():
    m = random_matrix(5, 4)
    with pytest.raises(ValueError):
        top_k_neighbors(m, SimilarityConfig(k=5))
    assert all(len(ns) == 0
               for ns in top_k_neighbors(m, SimilarityConfig(k=0)))


def test_source_matrix_and_orientation():
    y = SparseBinaryMatrix.from_dense([[1, 0, 1], [0, 1, 1]])
    z = SparseBinaryMatrix.from_dense([[0, 0, 1], [1, 0, 0]])
    assert source_matrix(y, z, 'outcomes', 'user') is y
    assert source_matrix(y, z, 'treatments', 'item') == z.T
    cfg = SimilarityConfig(k=1, orientation='item', source='outcomes')
    sets = neighbors_for(y, z, cfg)
    assert len(sets) == 3
    with pytest.raises(ValueError):
        source_matrix(y, z, 'ratings', 'user')


def test_neighbor_matrix():
    sets = [NeighborSet(0, [1], [0.5]), NeighborSet(1, [0, 1], [0.5, 1.0],
                                                    includes_self=True)]
    w = neighbor_matrix(sets).toarray()
    assert w.tolist() == [[0.0, 0.5], [0.5, 1.0]]


def test_neighbor_cache(tmp_path):
    m = random_matrix(10, 8, seed=5)
    raw = raw_neighbors(m, 6)
    path = str(tmp_path / 'cache.txt')
    save_neighbor_cache(raw, path, 6)
    again, k_max = load_neighbor_cache(path)
    assert k_max == 6
    assert again == raw
