"""
Data model and ingestion.

Sparse binary matrices for outcomes and treatments, prior tables, generated
datasets, interaction logs, and the plain-text triplet / JSON manifest files
they are stored in.
"""
import glob
import io
import json
import logging
import os
import re

import numpy as np
import pandas as pd
import scipy.sparse as sps

log = logging.getLogger(__name__)

SPLITS = ('train', 'validation', 'test')
MATRICES = ('y_t', 'y_c', 'z', 'y', 'tau')
LOG_COLUMNS = ['user', 'item', 'y', 'z']
LOG_FORMATS = {'csv': ',', 'tsv': '\t'}


class LogFormatError(ValueError):
    """Malformed interaction log; ``line`` is the 1-based file line."""

    def __init__(self, message, line=None):
        if line is not None:
            message = 'line {0}: {1}'.format(line, message)
        super(LogFormatError, self).__init__(message)
        self.line = line


class SparseBinaryMatrix(object):
    """
    Immutable row-major 0/1 matrix.

    Rows are stored CSR style: ``indices[indptr[r]:indptr[r + 1]]`` are the
    strictly increasing column indices holding a 1 in row ``r``.

    Parameters
    ----------
    indptr: array-like of int, length n_rows + 1
    indices: array-like of int
    shape: (n_rows, n_cols)
    """

    def __init__(self, indptr, indices, shape, check=True):
        self.n_rows, self.n_cols = int(shape[0]), int(shape[1])
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.indices = np.asarray(indices, dtype=np.int64)
        if check:
            self._check()
        self.indptr.flags.writeable = False
        self.indices.flags.writeable = False
        self._csr = None
        self._transpose = None

    def _check(self):
        if self.n_rows < 0 or self.n_cols < 0:
            raise ValueError('negative shape {0}'.format(self.shape))
        if self.indptr.shape != (self.n_rows + 1,):
            raise ValueError('indptr must have n_rows + 1 = {0} entries, '
                             'got {1}'.format(self.n_rows + 1,
                                              self.indptr.shape[0]))
        if self.indptr[0] != 0 or self.indptr[-1] != len(self.indices):
            raise ValueError('indptr must start at 0 and end at nnz')
        if np.any(np.diff(self.indptr) < 0):
            raise ValueError('indptr must be non-decreasing')
        if len(self.indices):
            if self.indices.min() < 0 or self.indices.max() >= self.n_cols:
                raise ValueError('column index out of range [0, {0})'
                                 .format(self.n_cols))
            steps = np.diff(self.indices)
            within = np.ones(len(steps), dtype=bool)
            starts = self.indptr[1:-1]
            starts = starts[(starts > 0) & (starts < len(self.indices))]
            within[starts - 1] = False
            if np.any(steps[within] <= 0):
                raise ValueError('column indices within a row must be '
                                 'strictly increasing')

    @classmethod
    def from_coo(cls, rows, cols, shape):
        """From coordinate lists; duplicate coordinates are an error."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        n_rows, n_cols = int(shape[0]), int(shape[1])
        if rows.shape != cols.shape:
            raise ValueError('rows and cols must have the same length')
        if len(rows) and (rows.min() < 0 or rows.max() >= n_rows):
            raise ValueError('row index out of range [0, {0})'.format(n_rows))
        perm = np.lexsort((cols, rows))
        rows, cols = rows[perm], cols[perm]
        if len(rows) > 1:
            dup = (rows[1:] == rows[:-1]) & (cols[1:] == cols[:-1])
            if dup.any():
                at = np.flatnonzero(dup)[0]
                raise ValueError('duplicate entry ({0}, {1})'
                                 .format(rows[at], cols[at]))
        indptr = np.zeros(n_rows + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=n_rows), out=indptr[1:])
        return cls(indptr, cols, (n_rows, n_cols))

    @classmethod
    def from_rows(cls, rows, n_cols):
        """From a list of per-row column index lists."""
        r = np.repeat(np.arange(len(rows)), [len(x) for x in rows])
        c = np.concatenate([np.asarray(x, dtype=np.int64) for x in rows]) \
            if len(rows) else np.zeros(0, dtype=np.int64)
        return cls.from_coo(r, c, (len(rows), n_cols))

    @classmethod
    def from_dense(cls, array):
        array = np.asarray(array)
        if array.ndim != 2:
            raise ValueError('expected a 2-D array, got {0} dimensions'
                             .format(array.ndim))
        if not np.isin(array, (0, 1)).all():
            raise ValueError('values must be 0 or 1')
        r, c = np.nonzero(array)
        return cls.from_coo(r, c, array.shape)

    @classmethod
    def from_csr(cls, matrix):
        """From any scipy.sparse matrix whose stored values are all 1."""
        m = sps.csr_matrix(matrix, copy=True)
        m.sum_duplicates()
        m.eliminate_zeros()
        if m.nnz and not np.all(m.data == 1):
            raise ValueError('values must be 0 or 1')
        m.sort_indices()
        return cls(m.indptr, m.indices, m.shape)

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self):
        return len(self.indices)

    def row(self, r):
        return self.indices[self.indptr[r]:self.indptr[r + 1]]

    def row_nnz(self):
        return np.diff(self.indptr)

    def row_norms(self):
        return np.sqrt(self.row_nnz().astype(float))

    def col_sums(self):
        return np.bincount(self.indices, minlength=self.n_cols)

    def to_csr(self):
        """scipy.sparse CSR view with float data (cached)."""
        if self._csr is None:
            self._csr = sps.csr_matrix(
                (np.ones(self.nnz), self.indices, self.indptr),
                shape=self.shape)
        return self._csr

    @property
    def T(self):
        """Materialized transpose (cached)."""
        if self._transpose is None:
            self._transpose = SparseBinaryMatrix.from_csr(
                self.to_csr().T.tocsr())
        return self._transpose

    def toarray(self, dtype=np.int8):
        out = np.zeros(self.shape, dtype=dtype)
        rows = np.repeat(np.arange(self.n_rows), self.row_nnz())
        out[rows, self.indices] = 1
        return out

    def __eq__(self, other):
        if not isinstance(other, SparseBinaryMatrix):
            return NotImplemented
        return (self.shape == other.shape
                and np.array_equal(self.indptr, other.indptr)
                and np.array_equal(self.indices, other.indices))

    def __ne__(self, other):
        result = self.__eq__(other)
        return result if result is NotImplemented else not result

    __hash__ = None

    def __repr__(self):
        return 'SparseBinaryMatrix(shape={0}, nnz={1})'.format(self.shape,
                                                              self.nnz)


def _check_probabilities(name, array):
    array = np.asarray(array, dtype=float)
    if array.ndim != 2:
        raise ValueError('{0} must be 2-D'.format(name))
    if not np.all(np.isfinite(array)) or array.min(initial=0) < 0 \
            or array.max(initial=0) > 1:
        raise ValueError('{0} must hold probabilities in [0, 1]'.format(name))
    return array


class PriorTables(object):
    """Per-pair probabilities mu_t, mu_c and propensity used for sampling."""

    def __init__(self, mu_t, mu_c, propensity, params=None):
        self.mu_t = _check_probabilities('mu_t', mu_t)
        self.mu_c = _check_probabilities('mu_c', mu_c)
        self.propensity = _check_probabilities('propensity', propensity)
        if not (self.mu_t.shape == self.mu_c.shape == self.propensity.shape):
            raise ValueError('mu_t, mu_c and propensity must share '
                             'dimensions, got {0}, {1}, {2}'.format(
                                 self.mu_t.shape, self.mu_c.shape,
                                 self.propensity.shape))
        self.params = dict(params or {})

    @property
    def shape(self):
        return self.mu_t.shape


def _ternary(matrix, shape=None):
    m = sps.csr_matrix(matrix, shape=shape, dtype=np.int8, copy=True)
    m.sum_duplicates()
    m.eliminate_zeros()
    if m.nnz and not np.isin(m.data, (-1, 1)).all():
        raise ValueError('tau values must be in {-1, 0, 1}')
    m.sort_indices()
    return m


class GeneratedDataset(object):
    """
    One sampled split: potential outcomes, assignments, observed outcomes
    and the ternary causal effect.

    Parameters
    ----------
    y_t, y_c, z, y: SparseBinaryMatrix
    tau: scipy.sparse matrix with values in {-1, 0, 1}
    seed: int
    split: one of 'train', 'validation', 'test'
    replicate: int
        Index of an independent draw of the same split.
    params: dict
        Generation parameter snapshot.
    user_ids, item_ids: lists of str
        External ids; default to the decimal indices.
    """

    def __init__(self, y_t, y_c, z, y, tau, seed, split, replicate=0,
                 params=None, user_ids=None, item_ids=None, check=True):
        if split not in SPLITS:
            raise ValueError('split must be one of {0}, got "{1}"'
                             .format(list(SPLITS), split))
        shapes = {m.shape for m in (y_t, y_c, z, y)}
        if len(shapes) != 1:
            raise ValueError('y_t, y_c, z and y must share dimensions')
        self.y_t, self.y_c, self.z, self.y = y_t, y_c, z, y
        self.tau = _ternary(tau, shape=y.shape)
        if self.tau.shape != y.shape:
            raise ValueError('tau must have shape {0}'.format(y.shape))
        self.seed = int(seed)
        self.split = split
        self.replicate = int(replicate)
        self.params = dict(params or {})
        n_users, n_items = y.shape
        self.user_ids = [str(u) for u in (user_ids if user_ids is not None
                                          else range(n_users))]
        self.item_ids = [str(i) for i in (item_ids if item_ids is not None
                                          else range(n_items))]
        if len(self.user_ids) != n_users or len(self.item_ids) != n_items:
            raise ValueError('id lists must match the matrix dimensions')
        if check:
            self.validate()

    @classmethod
    def from_dense(cls, y_t, y_c, z, seed, split, **kwargs):
        """Build from dense 0/1 arrays, deriving y and tau."""
        y_t = np.asarray(y_t, dtype=np.int8)
        y_c = np.asarray(y_c, dtype=np.int8)
        z = np.asarray(z, dtype=np.int8)
        y = z * y_t + (1 - z) * y_c
        tau = y_t - y_c
        return cls(SparseBinaryMatrix.from_dense(y_t),
                   SparseBinaryMatrix.from_dense(y_c),
                   SparseBinaryMatrix.from_dense(z),
                   SparseBinaryMatrix.from_dense(y),
                   sps.csr_matrix(tau), seed, split, check=False, **kwargs)

    @property
    def shape(self):
        return self.y.shape

    @property
    def n_users(self):
        return self.y.n_rows

    @property
    def n_items(self):
        return self.y.n_cols

    @property
    def name(self):
        if self.replicate:
            return '{0}{1}'.format(self.split, self.replicate)
        return self.split

    def validate(self):
        """Check y = z*y_t + (1-z)*y_c and tau = y_t - y_c entrywise."""
        y_t, y_c = self.y_t.to_csr(), self.y_c.to_csr()
        z = self.z.to_csr()
        expected = z.multiply(y_t) + y_c - z.multiply(y_c)
        if (expected - self.y.to_csr()).count_nonzero():
            raise ValueError('observed outcomes violate y = z*y_t + (1-z)*y_c')
        if (y_t - y_c - self.tau).count_nonzero():
            raise ValueError('tau differs from y_t - y_c')
        return self

    def tau_dense(self):
        return self.tau.toarray().astype(np.int8)

    @property
    def ate(self):
        size = self.n_users * self.n_items
        return float(self.tau.sum()) / size if size else 0.0

    def __repr__(self):
        return 'GeneratedDataset(split={0!r}, replicate={1}, shape={2}, ' \
               'seed={3})'.format(self.split, self.replicate, self.shape,
                                  self.seed)


class InteractionLog(object):
    """
    Parsed interaction / treatment log.

    ``frame`` holds dense user and item indices with 0/1 y and z columns;
    ``user_ids`` / ``item_ids`` map indices back to external ids in order of
    first appearance.
    """

    def __init__(self, frame, user_ids, item_ids):
        self.frame = frame
        self.user_ids = list(user_ids)
        self.item_ids = list(item_ids)
        self.user_index = {u: n for n, u in enumerate(self.user_ids)}
        self.item_index = {i: n for n, i in enumerate(self.item_ids)}

    @property
    def n_users(self):
        return len(self.user_ids)

    @property
    def n_items(self):
        return len(self.item_ids)

    def __len__(self):
        return len(self.frame)

    def __repr__(self):
        return 'InteractionLog({0} records, {1} users, {2} items)'.format(
            len(self), self.n_users, self.n_items)


def _first_line(mask):
    """1-based file line of the first True data row (header is line 1)."""
    return int(np.flatnonzero(np.asarray(mask))[0]) + 2


def load_log(path, format=None):
    """
    Read a ``user,item,y,z`` log.

    Parameters
    ----------
    path: str
    format: 'csv' or 'tsv', default inferred from the file extension
    """
    if format is None:
        format = 'tsv' if path.lower().endswith('.tsv') else 'csv'
    if format not in LOG_FORMATS:
        raise ValueError('Invalid log format: "{0}".\n'
                         'Valid values are {1}'.format(format,
                                                       list(LOG_FORMATS)))
    try:
        df = pd.read_csv(path, sep=LOG_FORMATS[format], dtype=str,
                         keep_default_na=False, skip_blank_lines=False)
    except pd.errors.EmptyDataError:
        raise LogFormatError('empty file; expected header user,item,y,z',
                             line=1)
    except pd.errors.ParserError as e:
        found = re.search(r'line (\d+)', str(e))
        raise LogFormatError('malformed row ({0})'.format(str(e).strip()),
                             line=int(found.group(1)) if found else None)

    df.columns = [c.strip() for c in df.columns]
    missing = [c for c in LOG_COLUMNS if c not in df.columns]
    if missing:
        raise LogFormatError('header must name columns user, item, y, z; '
                             'missing {0}'.format(missing), line=1)
    df = df[LOG_COLUMNS].apply(lambda s: s.str.strip())
    # trailing empty lines
    empty = (df.isna() | (df == '')).all(axis=1).values
    filled = np.flatnonzero(~empty)
    df = df.iloc[:filled[-1] + 1 if len(filled) else 0]

    blank =df.isna().any(axis=1) | (df == '').any(axis=1)
    if blank.any():
        raise LogFormatError('malformed row: missing fields',
                             line=_first_line(blank))
    for col in ('y', 'z'):
        bad = ~df[col].isin(['0', '1'])
        if bad.any():
            line = _first_line(bad)
            raise LogFormatError('{0}={1!r} is not 0 or 1'.format(
                col, df[col].iloc[line - 2]), line=line)
    dup = df.duplicated(['user', 'item'])
    if dup.any():
        line = _first_line(dup)
        raise LogFormatError('duplicate (user, item) pair ({0}, {1})'.format(
            df['user'].iloc[line - 2], df['item'].iloc[line - 2]), line=line)

    user_ids = list(pd.unique(df['user']))
    item_ids = list(pd.unique(df['item']))
    frame = pd.DataFrame({
        'user': df['user'].map({u: n for n, u in enumerate(user_ids)}),
        'item': df['item'].map({i: n for n, i in enumerate(item_ids)}),
        'y': df['y'].astype(np.int8),
        'z': df['z'].astype(np.int8)}).astype(
            {'user': np.int64, 'item': np.int64})
    result = InteractionLog(frame, user_ids, item_ids)
    log.info('loaded %r from %s', result, path)
    return result


def to_matrices(log_):
    """
    Observed outcome and treatment matrices of a log.

    Returns
    -------
    (Y, Z): SparseBinaryMatrix, SparseBinaryMatrix
    """
    f = log_.frame
    shape = (log_.n_users, log_.n_items)
    users, items = f['user'].values, f['item'].values
    y = f['y'].values == 1
    z = f['z'].values == 1
    return (SparseBinaryMatrix.from_coo(users[y], items[y], shape),
            SparseBinaryMatrix.from_coo(users[z], items[z], shape))


# Triplet files: first line "<n_rows> <n_cols>", then "r c v" per line.

def write_triplets(path, shape, table, fmt):
    with io.open(path, 'w', encoding='utf-8', newline='\n') as fp:
        fp.write(u'{0} {1}\n'.format(int(shape[0]), int(shape[1])))
        if len(table):
            np.savetxt(fp, table, fmt=fmt)


def read_triplets(path, value_dtype):
    with io.open(path, encoding='utf-8') as fp:
        header = fp.readline().split()
    if len(header) != 2:
        raise ValueError('{0}: first line must be "<n_rows> <n_cols>"'
                         .format(path))
    shape = (int(header[0]), int(header[1]))
    try:
        df = pd.read_csv(path, sep=' ', header=None, skiprows=1,
                         names=['r', 'c', 'v'],
                         dtype={'r': np.int64, 'c': np.int64,
                                'v': value_dtype},
                         float_precision='round_trip')
    except pd.errors.EmptyDataError:
        df = pd.DataFrame({'r': np.zeros(0, np.int64),
                           'c': np.zeros(0, np.int64),
                           'v': np.zeros(0, value_dtype)})
    return shape, df['r'].values, df['c'].values, df['v'].values


def write_binary_triplets(path, matrix):
    rows = np.repeat(np.arange(matrix.n_rows), matrix.row_nnz())
    table = np.column_stack([rows, matrix.indices,
                             np.ones(matrix.nnz, dtype=np.int64)])
    write_triplets(path, matrix.shape, table, '%d')


def read_binary_triplets(path):
    shape, r, c, v = read_triplets(path, np.int64)
    if len(v) and not np.all(v == 1):
        raise ValueError('{0}: binary matrix values must be 1'.format(path))
    return SparseBinaryMatrix.from_coo(r, c, shape)


def write_ternary_triplets(path, matrix):
    m = sps.coo_matrix(_ternary(matrix))
    table = np.column_stack([m.row, m.col, m.data]).astype(np.int64)
    write_triplets(path, m.shape, table, '%d')


def read_ternary_triplets(path):
    shape, r, c, v = read_triplets(path, np.int64)
    return _ternary(sps.coo_matrix((v, (r, c)), shape=shape))


def write_dense_triplets(path, array):
    """Every cell written, floats with 17 significant digits."""
    array = np.asarray(array, dtype=float)
    r, c = np.indices(array.shape)
    table = np.column_stack([r.ravel(), c.ravel(), array.ravel()])
    write_triplets(path, array.shape, table, ['%d', '%d', '%.17g'])


def read_dense_triplets(path):
    shape, r, c, v = read_triplets(path, np.float64)
    if len(v) != shape[0] * shape[1]:
        raise ValueError('{0}: dense table must list all {1} cells, found {2}'
                         .format(path, shape[0] * shape[1], len(v)))
    out = np.full(shape, np.nan)
    out[r, c] = v
    if np.isnan(out).any():
        raise ValueError('{0}: cells listed more than once'.format(path))
    return out


def save_dataset(ds, directory):
    """
    Write one triplet file per matrix plus a JSON manifest.

    Returns
    -------
    path of the manifest
    """
    if not os.path.isdir(directory):
        os.makedirs(directory)
    if not os.access(directory, os.W_OK):
        raise ValueError('directory is not writable: {0}'.format(directory))
    files = {}
    for key in MATRICES:
        fname = '{0}.{1}.txt'.format(ds.name, key)
        path = os.path.join(directory, fname)
        if key == 'tau':
            write_ternary_triplets(path, ds.tau)
        else:
            write_binary_triplets(path, getattr(ds, key))
        files[key] = fname
    manifest = {'seed': ds.seed,
                'n_users': ds.n_users,
                'n_items': ds.n_items,
                'split': ds.split,
                'replicate': ds.replicate,
                'params': ds.params,
                'files': files,
                'user_ids': ds.user_ids,
                'item_ids': ds.item_ids}
    path = os.path.join(directory, '{0}.manifest.json'.format(ds.name))
    with io.open(path, 'w', encoding='utf-8', newline='\n') as fp:
        fp.write(json.dumps(manifest, indent=2, sort_keys=True))
        fp.write(u'\n')
    log.debug('saved %r to %s', ds, path)
    return path


def load_dataset(path):
    """Inverse of ``save_dataset``; ``path`` is the manifest."""
    with io.open(path, encoding='utf-8') as fp:
        manifest = json.load(fp)
    directory = os.path.dirname(path)
    files = manifest['files']
    mats = {key: read_binary_triplets(os.path.join(directory, files[key]))
            for key in MATRICES if key != 'tau'}
    tau = read_ternary_triplets(os.path.join(directory, files['tau']))
    ds = GeneratedDataset(tau=tau, seed=manifest['seed'],
                          split=manifest['split'],
                          replicate=manifest.get('replicate', 0),
                          params=manifest.get('params'),
                          user_ids=manifest.get('user_ids'),
                          item_ids=manifest.get('item_ids'), **mats)
    if ds.shape != (manifest['n_users'], manifest['n_items']):
        raise ValueError('{0}: matrix dimensions disagree with the manifest'
                         .format(path))
    return ds


def load_splits(directory, required=SPLITS):
    """
    Load every manifest in ``directory``.

    Returns
    -------
    dict split -> list of GeneratedDataset ordered by replicate
    """
    splits = {}
    for path in sorted(glob.glob(os.path.join(directory, '*.manifest.json'))):
        ds = load_dataset(path)
        splits.setdefault(ds.split, []).append(ds)
    missing = [s for s in required if s not in splits]
    if missing:
        raise ValueError('missing split(s) {0} in {1}'.format(missing,
                                                             directory))
    for datasets in splits.values():
        datasets.sort(key=lambda d: d.replicate)
    return splits


def save_priors(priors, directory):
    if not os.path.isdir(directory):
        os.makedirs(directory)
    for key in ('mu_t', 'mu_c', 'propensity'):
        write_dense_triplets(os.path.join(directory, key + '.txt'),
                             getattr(priors, key))
    with io.open(os.path.join(directory, 'priors.json'), 'w',
                 encoding='utf-8', newline='\n') as fp:
        fp.write(json.dumps(priors.params, indent=2, sort_keys=True))
        fp.write(u'\n')


def has_saved_priors(directory):
    """Whether ``directory`` holds tables written by ``save_priors``."""
    return all(os.path.exists(os.path.join(directory, key + '.txt'))
               for key in ('mu_t', 'mu_c', 'propensity'))


def load_priors(directory):
    tables = {key: read_dense_triplets(os.path.join(directory, key + '.txt'))
              for key in ('mu_t', 'mu_c', 'propensity')}
    params = None
    meta = os.path.join(directory, 'priors.json')
    if os.path.exists(meta):
        with io.open(meta, encoding='utf-8') as fp:
            params = json.load(fp)
    return PriorTables(params=params, **tables)
