import numpy as np
import pandas as pd
import pytest

from ..data import SparseBinaryMatrix
from ..rankers import Ranker, Ranking, list_rankers, make_ranker


def test_from_scores_and_ranks():
    ranking = Ranking.from_scores([[0.1, 0.9, 0.1], [3, 2, 1]])
    assert ranking.order.tolist() == [[1, 0, 2], [0, 1, 2]]
    assert ranking.ranks().tolist() == [[2, 1, 3], [1, 2, 3]]
    assert ranking.shape == (2, 3)
    with pytest.raises(ValueError):
        Ranking([[0, 1]], scores=[[1.0, 2.0, 3.0]])


def test_to_frame():
    ranking = Ranking.from_scores([[0.2, 0.8]], method='Pop')
    frame = ranking.to_frame(['u'], ['a', 'b'])
    assert frame.columns.tolist() == ['user', 'item', 'rank', 'score']
    assert frame['item'].tolist() == ['b', 'a']
    assert frame['rank'].tolist() == [1, 2]
    assert frame['score'].tolist() == [0.8, 0.2]


def test_csv_roundtrip(tmp_path):
    ranking = Ranking.from_scores([[0.5, 0.1, 0.7], [0.0, 0.2, 0.1]],
                                  score_name='tau_hat')
    path = str(tmp_path / 'ranking.csv')
    ranking.write_csv(path, ['u1', 'u2'], ['x', 'y', 'z'])
    with open(path) as f:
        assert f.readline().strip() == 'user,item,rank,tau_hat'
    again = Ranking.read_csv(path, {'u1': 0, 'u2': 1},
                             {'x': 0, 'y': 1, 'z': 2})
    assert np.array_equal(again.order, ranking.order)


def test_from_frame_errors():
    users, items = {'u': 0, 'v': 1}, {'a': 0, 'b': 1}
    good = pd.DataFrame({'user': ['u', 'u', 'v', 'v'],
                         'item': ['b', 'a', 'a', 'b'],
                         'rank': [1, 2, 1, 2]})
    assert Ranking.from_frame(good, users, items).order.tolist() == \
        [[1, 0], [0, 1]]

    with pytest.raises(ValueError, match='misses users'):
        Ranking.from_frame(good[good['user'] == 'u'], users, items)
    with pytest.raises(ValueError, match="user v: 1 rows, missing items"):
        Ranking.from_frame(good.iloc[:3], users, items)
    unknown = good.copy()
    unknown.loc[0, 'item'] = 'c'
    with pytest.raises(ValueError, match='unknown ids'):
        Ranking.from_frame(unknown, users, items)
    with pytest.raises(ValueError, match='column "rank"'):
        Ranking.from_frame(good.drop(columns='rank'), users, items)


def test_registry():
    make_ranker('Pop')
    names = list_rankers()
    for name in ['Random', 'Pop', 'UBN', 'IBN', 'CUBN-O', 'CIBN-T-woM',
                 'external']:
        assert name in names
    with pytest.raises(ValueError):
        make_ranker('BPR')


def test_base_ranker_contract():
    class Constant(Ranker):
        def _rank(self, keep_scores=False):
            return Ranking.from_scores(np.zeros(self.y.shape))

    y = SparseBinaryMatrix.from_dense([[1, 0], [0, 1]])
    ranker = Constant(method='constant')
    with pytest.raises(ValueError, match='not fitted'):
        ranker.rank()
    with pytest.raises(ValueError):
        ranker.fit(y, SparseBinaryMatrix.from_dense([[1, 0, 0]]))
    ranking = ranker.fit(y, y).rank()
    assert ranking.method == 'constant'
    assert ranking.order.tolist() == [[0, 1], [0, 1]]
