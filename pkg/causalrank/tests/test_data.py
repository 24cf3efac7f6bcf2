import os

import numpy as np
import pytest

from ..data import (GeneratedDataset, LogFormatError, PriorTables,
                    SparseBinaryMatrix, load_dataset, load_log, load_priors,
                    load_splits, read_dense_triplets, save_dataset,
                    save_priors, to_matrices, write_dense_triplets)


def toy_dataset(split='train', replicate=0):
    y_t = [[1, 0, 1], [0, 1, 1]]
    y_c = [[0, 0, 1], [1, 1, 0]]
    z = [[1, 0, 0], [1, 0, 1]]
    return GeneratedDataset.from_dense(y_t, y_c, z, seed=3, split=split,
                                       replicate=replicate,
                                       params={'epsilon': 5.0})


def test_sparse_binary_matrix():
    m = SparseBinaryMatrix.from_coo([1, 0, 1], [2, 1, 0], (2, 3))
    assert m.toarray().tolist() == [[0, 1, 0], [1, 0, 1]]
    assert m.row_nnz().tolist() == [1, 2]
    assert m.col_sums().tolist() == [1, 1, 1]
    assert m.T.toarray().tolist() == [[0, 1], [1, 0], [0, 1]]
    assert m == SparseBinaryMatrix.from_rows([[1], [0, 2]], 3)
    assert m == SparseBinaryMatrix.from_csr(m.to_csr())
    assert m.nnz == 3


def test_sparse_binary_matrix_errors():
    with pytest.raises(ValueError):
        SparseBinaryMatrix.from_coo([0, 0], [1, 1], (1, 2))
    with pytest.raises(ValueError):
        SparseBinaryMatrix.from_coo([0], [5], (1, 2))
    with pytest.raises(ValueError):
        SparseBinaryMatrix.from_dense([[0, 2]])
    with pytest.raises(ValueError):
        SparseBinaryMatrix([0, 2], [1, 0], (1, 2))


def test_empty_shapes():
    m = SparseBinaryMatrix.from_coo([], [], (0, 4))
    assert m.shape == (0, 4)
    m = SparseBinaryMatrix.from_coo([], [], (3, 0))
    assert m.row_nnz().tolist() == [0, 0, 0]


def test_generated_dataset_consistency():
    ds = toy_dataset()
    assert ds.y.toarray().tolist() == [[1, 0, 1], [0, 1, 1]]
    assert ds.tau_dense().tolist() == [[1, 0, 0], [-1, 0, 1]]
    assert ds.ate == pytest.approx(1 / 6.)
    assert ds.name == 'train'
    assert toy_dataset('test', 2).name == 'test2'

    bad_y = SparseBinaryMatrix.from_dense([[0, 0, 1], [1, 1, 1]])
    with pytest.raises(ValueError):
        GeneratedDataset(ds.y_t, ds.y_c, ds.z, bad_y, ds.tau, 0, 'train')
    with pytest.raises(ValueError):
        GeneratedDataset(ds.y_t, ds.y_c, ds.z, ds.y, ds.tau, 0, 'dev')


def test_prior_tables_validation():
    ones = np.ones((2, 2))
    PriorTables(ones, ones * 0.5, ones * 0.1)
    with pytest.raises(ValueError):
        PriorTables(ones * 1.5, ones, ones)
    with pytest.raises(ValueError):
        PriorTables(ones, np.ones((2, 3)), ones)


def test_dataset_files_roundtrip(tmp_path):
    ds = toy_dataset('validation', 1)
    path = save_dataset(ds, str(tmp_path))
    assert os.path.basename(path) == 'validation1.manifest.json'
    again = load_dataset(path)
    for key in ('y_t', 'y_c', 'z', 'y'):
        assert getattr(again, key) == getattr(ds, key)
    assert again.tau_dense().tolist() == ds.tau_dense().tolist()
    assert again.params == ds.params
    assert again.replicate == 1

    with open(os.path.join(str(tmp_path), 'validation1.y.txt')) as f:
        assert f.readline() == '2 3\n'


def test_load_splits(tmp_path):
    save_dataset(toy_dataset('train'), str(tmp_path))
    save_dataset(toy_dataset('test', 1), str(tmp_path))
    save_dataset(toy_dataset('test', 0), str(tmp_path))
    with pytest.raises(ValueError):
        load_splits(str(tmp_path))
    splits = load_splits(str(tmp_path), required=['train', 'test'])
    assert [d.replicate for d in splits['test']] == [0, 1]


def test_dense_triplets_keep_full_precision(tmp_path):
    path = str(tmp_path / 'p.txt')
    values = np.array([[0.1, 1 / 3.], [2 ** -40, 1.0]])
    write_dense_triplets(path, values)
    assert np.array_equal(read_dense_triplets(path), values)


def test_priors_roundtrip(tmp_path):
    priors = PriorTables(np.full((2, 2), 0.3), np.full((2, 2), 0.2),
                         np.full((2, 2), 0.7), params={'a': 1.5})
    save_priors(priors, str(tmp_path))
    again = load_priors(str(tmp_path))
    assert np.array_equal(again.mu_t, priors.mu_t)
    assert again.params == {'a': 1.5}


def write(tmp_path, text, name='log.csv'):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_load_log(tmp_path):
    path = write(tmp_path, 'user,item,y,z\nu1,a,1,0\nu2,b,0,1\nu1,b,1,1\n')
    log = load_log(path)
    assert log.user_ids == ['u1', 'u2']
    assert log.item_ids == ['a', 'b']
    y, z = to_matrices(log)
    assert y.toarray().tolist() == [[1, 1], [0, 0]]
    assert z.toarray().tolist() == [[0, 1], [0, 1]]


def test_load_log_trailing_blank_lines(tmp_path):
    path = write(tmp_path, 'user,item,y,z\nu1,a,1,0\nu2,b,0,1\n\n\n')
    assert len(load_log(path)) == 2
    path = write(tmp_path, 'user,item,y,z\nu1,a,1,0\n\nu2,b,0,1\n')
    with pytest.raises(LogFormatError) as err:
        load_log(path)
    assert err.value.line == 3


def test_load_log_tsv(tmp_path):
    path = write(tmp_path, 'user\titem\ty\tz\n1\t2\t1\t1\n', name='log.tsv')
    assert len(load_log(path)) == 1


@pytest.mark.parametrize('text,line', [
    ('user,item,y,z\nu1,a,1,0\nu1,b,2,0\n', 3),
    ('user,item,y,z\nu1,a,1,0\nu1,a,0,0\n', 3),
    ('user,item,y,z\nu1,,1,0\n', 2),
    ('user,item,y\nu1,a,1\n', 1),
])
def test_load_log_errors(tmp_path, text, line):
    path = write(tmp_path, text)
    with pytest.raises(LogFormatError) as err:
        load_log(path)
    assert err.value.line == line


def test_load_log_bad_format(tmp_path):
    path = write(tmp_path, 'user,item,y,z\n')
    with pytest.raises(ValueError):
        load_log(path, format='json')
