"""
Scaled-cosine similarity over sparse binary rows and top-k neighbor
selection.

Similarities are accumulated through sparse row intersections (a sparse
matrix product, i.e. an inverted index over columns) one block of rows at a
time. Cosines are always evaluated as ``intersection / sqrt(nnz_a * nnz_b)``
so every code path yields bit-identical values.
"""
import logging
import math

import numpy as np
import scipy.sparse as sps

from .data import read_triplets, write_triplets
from .utils import parallel_map, row_blocks

log = logging.getLogger(__name__)


class NeighborSet(object):
    """
    Neighbors of one row, sorted by weight descending (ties by ascending
    row index).

    Parameters
    ----------
    owner: int
    ids: array-like of int
    weights: array-like of float
    includes_self: bool
        The owner is listed first with weight 1.
    """

    def __init__(self, owner, ids, weights, includes_self=False):
        self.owner = int(owner)
        self.ids = np.asarray(ids, dtype=np.int64)
        self.weights = np.asarray(weights, dtype=float)
        self.includes_self = bool(includes_self)
        if self.ids.shape != self.weights.shape:
            raise ValueError('ids and weights must have the same length')

    @property
    def neighbors(self):
        return list(zip(self.ids.tolist(), self.weights.tolist()))

    def __len__(self):
        return len(self.ids)

    def __iter__(self):
        return iter(self.neighbors)

    def __eq__(self, other):
        if not isinstance(other, NeighborSet):
            return NotImplemented
        return (self.owner == other.owner
                and self.includes_self == other.includes_self
                and np.array_equal(self.ids, other.ids)
                and np.array_equal(self.weights, other.weights))

    __hash__ = None

    def __repr__(self):
        return 'NeighborSet(owner={0}, neighbors={1}{2})'.format(
            self.owner, self.neighbors,
            ', includes_self=True' if self.includes_self else '')


def _support(vector):
    """(length, sorted nonzero positions) of a binary vector."""
    if sps.issparse(vector):
        v = sps.csr_matrix(vector)
        if v.shape[0] != 1:
            v = sps.csr_matrix(v.T) if v.shape[1] == 1 else None
        if v is None:
            raise ValueError('expected a single row vector')
        v.eliminate_zeros()
        values, support = v.data, np.sort(v.indices)
        length = v.shape[1]
    else:
        arr = np.asarray(vector).ravel()
        support = np.flatnonzero(arr)
        values, length = arr[support], arr.size
    if not np.all(values == 1):
        raise ValueError('vectors must be binary')
    return length, support


def cosine(row_a, row_b):
    """
    Cosine similarity of two binary vectors (dense 0/1 arrays or sparse
    rows); 0 when either vector is all zero.
    """
    na, a = _support(row_a)
    nb, b = _support(row_b)
    if na != nb:
        raise ValueError('vectors must share length, got {0} and {1}'
                         .format(na, nb))
    if not len(a) or not len(b):
        return 0.0
    inter = len(np.intersect1d(a, b, assume_unique=True))
    return inter / math.sqrt(len(a) * len(b))


def scaled_weight(sim, alpha):
    """
    Neighbor weight ``sim ** alpha``.

    Parameters
    ----------
    sim: float or array of floats in [0, 1]
    alpha: float > 0
    """
    if alpha <= 0:
        raise ValueError('alpha must be > 0, got {0}'.format(alpha))
    arr = np.asarray(sim, dtype=float)
    if arr.size and (arr.min() < 0 or arr.max() > 1):
        raise ValueError('similarity must be in [0, 1]')
    result = np.power(arr, alpha)
    return float(result) if result.ndim == 0 else result


def intersection_block(matrix, rows):
    """
    Common-column counts of ``rows`` (a range) against every row of
    ``matrix``, as a CSR matrix of shape (len(rows), n_rows).
    """
    csr = matrix.to_csr()
    return sps.csr_matrix(csr[rows.start:rows.stop] @ csr.T)


def _cosine_data(counts, nnz, first_row):
    owners = np.repeat(np.arange(first_row, first_row + counts.shape[0]),
                       np.diff(counts.indptr))
    return counts.data / np.sqrt(nnz[owners] * nnz[counts.indices])


def order_key(counts, nnz):
    """
    Exact sort key for the cosines of one row against other rows.

    For a fixed row, ``inter / sqrt(nnz_row * nnz_other)`` orders like
    ``inter ** 2 / nnz_other``. That quotient of two integers is correctly
    rounded, so equal cosines get equal keys even when their float values
    differ in the last bit. Rows without columns get key 0.
    """
    counts = np.asarray(counts, dtype=float)
    nnz = np.asarray(nnz, dtype=float)
    out = np.zeros(np.broadcast(counts, nnz).shape)
    np.divide(counts * counts, nnz, out=out, where=nnz > 0)
    return out


def cosine_block(matrix, rows):
    """
    Cosines of ``rows`` (a range) against every row of ``matrix``.

    Returns
    -------
    scipy.sparse CSR matrix of shape (len(rows), n_rows); pairs without
    common columns are not stored.
    """
    counts = intersection_block(matrix, rows)
    counts.data = _cosine_data(counts, matrix.row_nnz().astype(float),
                               rows.start)
    return counts


def intersection_matrix(a, b):
    """Dense common-column counts between the rows of two matrices."""
    if a.n_cols != b.n_cols:
        raise ValueError('matrices must share columns, got {0} and {1}'
                         .format(a.n_cols, b.n_cols))
    return np.asarray((a.to_csr() @ b.to_csr().T).todense(), dtype=float)


def source_matrix(y, z, source, orientation):
    """
    Rows the similarities are computed over: Y or Z, transposed for item
    orientation.
    """
    if source not in ('outcomes', 'treatments'):
        raise ValueError('Invalid source: "{0}"'.format(source))
    if orientation not in ('user', 'item'):
        raise ValueError('Invalid orientation: "{0}"'.format(orientation))
    m = y if source == 'outcomes' else z
    return m if orientation == 'user' else m.T


def _check_k(k, n_rows):
    if k < 0 or (n_rows > 0 and k > n_rows - 1):
        raise ValueError('k={0} out of range [0, {1}]'.format(
            k, max(n_rows - 1, 0)))


def raw_neighbors(matrix, k_max, block_size=256, workers=None):
    """
    Unscaled top-``k_max`` cosine neighbors of every row, self excluded.

    Rows are compared block by block; blocks may run in parallel and the
    result does not depend on the schedule.
    """
    n_rows = matrix.n_rows
    _check_k(k_max, n_rows)
    nnz = matrix.row_nnz().astype(float)

    def work(block):
        counts = intersection_block(matrix, block)
        sims = _cosine_data(counts, nnz, block.start)
        out = []
        for local, owner in enumerate(block):
            lo, hi = counts.indptr[local], counts.indptr[local + 1]
            cols, vals = counts.indices[lo:hi], sims[lo:hi]
            keep = (cols != owner) & (vals > 0)
            cols, vals = cols[keep], vals[keep]
            key = order_key(counts.data[lo:hi][keep], nnz[cols])
            top = np.lexsort((cols, -key))[:k_max]
            out.append(NeighborSet(owner, cols[top], vals[top]))
        return out

    blocks = parallel_map(work, row_blocks(n_rows, block_size), workers)
    result = [ns for block in blocks for ns in block]
    log.debug('computed top-%d neighbors of %d rows', k_max, n_rows)
    return result


def derive_neighbors(raw, k, alpha, include_self):
    """
    Truncate raw neighbor lists to ``k`` and apply the ``alpha`` scaling.

    ``raw`` must come from ``raw_neighbors`` with ``k_max >= k``. Selection
    does not depend on alpha, so one raw computation serves every
    (k, alpha) pair.
    """
    out = []
    for ns in raw:
        ids = ns.ids[:k]
        weights = scaled_weight(ns.weights[:k], alpha)
        keep = weights > 0
        ids, weights = ids[keep], weights[keep]
        if include_self:
            ids = np.concatenate([[ns.owner], ids])
            weights = np.concatenate([[1.0], weights])
        out.append(NeighborSet(ns.owner, ids, weights,
                               includes_self=include_self))
    return out


def top_k_neighbors(matrix, cfg, include_self=False, block_size=256,
                    workers=None):
    """
    Top-k neighbors of every row of ``matrix`` with weights
    ``cos ** cfg.alpha``.

    Parameters
    ----------
    matrix: SparseBinaryMatrix
        Rows to compare (see ``source_matrix``).
    cfg: SimilarityConfig
    include_self: bool
        Add the owner with weight 1.

    Returns
    -------
    list of NeighborSet, one per row
    """
    _check_k(cfg.k, matrix.n_rows)
    raw = raw_neighbors(matrix, cfg.k, block_size=block_size,
                        workers=workers)
    return derive_neighbors(raw, cfg.k, cfg.alpha, include_self)


def neighbors_for(y, z, cfg, include_self=False, **kwargs):
    """``top_k_neighbors`` over the source and orientation named in cfg."""
    matrix = source_matrix(y, z, cfg.source, cfg.orientation)
    return top_k_neighbors(matrix, cfg, include_self=include_self, **kwargs)


def neighbor_matrix(neighbor_sets, n_rows=None):
    """Sparse weight matrix W with W[owner, neighbor] = weight."""
    if n_rows is None:
        n_rows = len(neighbor_sets)
    lengths = [len(ns) for ns in neighbor_sets]
    rows = np.repeat([ns.owner for ns in neighbor_sets], lengths) \
        .astype(np.int64)
    if neighbor_sets:
        cols = np.concatenate([ns.ids for ns in neighbor_sets])
        data = np.concatenate([ns.weights for ns in neighbor_sets])
    else:
        cols, data = np.zeros(0, np.int64), np.zeros(0)
    return sps.csr_matrix((data, (rows, cols)), shape=(n_rows, n_rows))


def save_neighbor_cache(raw, path, k_max):
    """Write raw neighbor lists as ``owner neighbor weight`` triplets."""
    lengths = [len(ns) for ns in raw]
    owners = np.repeat([ns.owner for ns in raw], lengths)
    if raw:
        ids = np.concatenate([ns.ids for ns in raw])
        weights = np.concatenate([ns.weights for ns in raw])
    else:
        ids, weights = np.zeros(0), np.zeros(0)
    table = np.column_stack([owners, ids, weights])
    write_triplets(path, (len(raw), k_max), table, ['%d', '%d', '%.17g'])


def load_neighbor_cache(path):
    """
    Read a neighbor cache.

    Returns
    -------
    (raw neighbor lists, k_max)
    """
    (n_rows, k_max), owners, ids, weights = read_triplets(path, np.float64)
    bounds = np.searchsorted(owners, np.arange(n_rows + 1))
    raw = [NeighborSet(r, ids[bounds[r]:bounds[r + 1]],
                       weights[bounds[r]:bounds[r + 1]])
           for r in range(n_rows)]
    return raw, k_max
