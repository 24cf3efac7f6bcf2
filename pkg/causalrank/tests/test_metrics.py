import itertools
import math

import numpy as np
import pytest

from ..data import GeneratedDataset
from ..metrics import (MetricReport, average_reports, car, cdcg, cp_at_n,
                       evaluate, higher_is_better, parse_metric,
                       per_user_metrics)
from ..rankers import Ranking


def reference_metrics(order, tau, n):
    """Dense loops over users and ranks."""
    cp, dcg, ar = [], [], []
    n_items = len(order[0])
    for u in range(len(order)):
        p = d = a = 0.0
        for r, item in enumerate(order[u], start=1):
            t = tau[u][item]
            if r <= n:
                p += t
            d += t / math.log2(1 + r)
            a += r * t
        cp.append(p / n)
        dcg.append(d)
        ar.append(a / n_items)
    return (math.fsum(cp) / len(cp), math.fsum(dcg) / len(dcg),
            math.fsum(ar) / len(ar))


def dataset_from_tau(tau, seed=0):
    """Dataset with effects ``tau`` and no treatment."""
    tau = np.asarray(tau)
    return GeneratedDataset.from_dense((tau == 1).astype(int),
                                       (tau == -1).astype(int),
                                       np.zeros_like(tau), seed=seed,
                                       split='test')


def test_parse_metric():
    assert parse_metric('CP@10') == ('cp', 10)
    assert parse_metric('cp@3') == ('cp', 3)
    assert parse_metric('cdcg') == ('cdcg', None)
    assert parse_metric('CAR') == ('car', None)
    for bad in ['CP@0', 'NDCG', 'CP@']:
        with pytest.raises(ValueError):
            parse_metric(bad)
    assert higher_is_better('CP@10')
    assert not higher_is_better('CAR')


def test_cp_examples():
    assert cp_at_n([[0, 1, 2]], np.zeros((1, 3)), 2) == 0.0
    assert cp_at_n([[0, 1, 2]], [[1, -1, 1]], 2) == 0.0
    assert cp_at_n([[2, 0, 1]], np.ones((1, 3)), 3) == 1.0
    with pytest.raises(ValueError):
        cp_at_n([[0, 1]], [[1, 0]], 3)
    with pytest.raises(ValueError):
        cp_at_n([[0, 1]], [[1, 0]], 0)


def test_cdcg_examples():
    assert cdcg([[0]], [[1]]) == 1.0
    assert cdcg([[1, 2, 0, 3]], [[1, 0, 0, 0]]) == 0.5
    assert cdcg([[0, 1]], [[0, 0]]) == 0.0


def test_car_examples():
    assert car([[0, 1, 2, 3]], [[1, 0, 0, 0]]) == 0.25
    assert car([[0, 1, 2, 3]], [[0, 0, 0, 0]]) == 0.0
    assert car([[0, 1, 2, 3]], [[0, 0, 0, -1]]) == -1.0


def test_per_user_values():
    tau = np.array([[1, 0, -1], [0, 1, 1]])
    order = np.array([[0, 1, 2], [2, 1, 0]])
    values = per_user_metrics(order, tau, [1])
    assert values['CP@1'].tolist() == [1.0, 1.0]
    assert values['CAR'].tolist() == [(1 - 3) / 3., (1 + 2) / 3.]


@pytest.mark.parametrize('seed', range(200))
def test_evaluate_matches_reference(seed):
    rng = np.random.RandomState(seed)
    tau = rng.randint(-1, 2, size=(10, 10))
    order = np.array([rng.permutation(10) for _ in range(10)])
    report = evaluate(order, dataset_from_tau(tau), cutoffs=[1, 2, 5],
                      block_size=3)
    for n in (1, 2, 5):
        expected = reference_metrics(order.tolist(), tau.tolist(), n)
        assert report.cp_at[n] == pytest.approx(expected[0], abs=1e-12)
        assert report.cdcg == pytest.approx(expected[1], abs=1e-12)
        assert report.car == pytest.approx(expected[2], abs=1e-12)


@pytest.mark.parametrize('seed', range(5))
def test_evaluate_matches_reference_any_shape(seed):
    rng = np.random.RandomState(500 + seed)
    n_users, n_items = rng.randint(1, 11, size=2)
    tau = rng.randint(-1, 2, size=(n_users, n_items))
    order = np.array([rng.permutation(n_items) for _ in range(n_users)])
    n = int(rng.randint(1, n_items + 1))
    report = evaluate(order, dataset_from_tau(tau), cutoffs=[n],
                      block_size=3)
    expected = reference_metrics(order.tolist(), tau.tolist(), n)
    assert report.cp_at[n] == expected[0]
    assert report.cdcg == pytest.approx(expected[1], abs=1e-12)
    assert report.car == expected[2]


def test_oracle_ranking_maximizes_cp():
    tau = np.array([[0, 1, -1, 1, 0]])
    best = np.argsort(-tau[0], kind='stable')
    for n in range(1, 6):
        top = cp_at_n([best], tau, n)
        for perm in itertools.permutations(range(5)):
            assert cp_at_n([perm], tau, n) <= top


def test_reverse_decreases_cdcg():
    tau = np.array([[0, 0, 1, 0]])
    order = np.array([[2, 0, 1, 3]])
    assert cdcg(order[:, ::-1], tau) < cdcg(order, tau)


def test_moving_positive_item_earlier():
    tau = np.array([[0, 0, 1, 0, -1]])
    later = np.array([[0, 1, 3, 2, 4]])
    earlier = np.array([[0, 2, 1, 3, 4]])
    for n in range(1, 6):
        assert cp_at_n(earlier, tau, n) >= cp_at_n(later, tau, n)
    assert cdcg(earlier, tau) > cdcg(later, tau)
    assert car(earlier, tau) < car(later, tau)


def test_metrics_depend_on_order_only():
    rng = np.random.RandomState(3)
    scores = rng.rand(4, 6)
    tau = rng.randint(-1, 2, size=(4, 6))
    ds = dataset_from_tau(tau)
    a = evaluate(Ranking.from_scores(scores), ds, [3])
    b = evaluate(Ranking.from_scores(np.exp(5 * scores) - 7), ds, [3])
    assert a.to_dict() == b.to_dict()


def test_evaluate_errors_and_warnings():
    ds = dataset_from_tau(np.ones((2, 3), dtype=int))
    with pytest.raises(ValueError) as err:
        evaluate(np.array([[0, 1, 2]]), ds)
    assert 'missing users [1]' in str(err.value)
    with pytest.raises(ValueError) as err:
        evaluate(np.array([[0, 1, 1], [0, 1, 2]]), ds)
    assert 'user 0: missing items [2]' in str(err.value)
    with pytest.warns(UserWarning):
        report = evaluate(np.array([[0, 1, 2], [2, 1, 0]]), ds, [2, 10])
    assert list(report.cp_at) == [2]


def test_per_user_frame():
    ds = dataset_from_tau(np.array([[1, 0], [0, 1]]))
    report = evaluate(np.array([[0, 1], [0, 1]]), ds, [1], per_user=True)
    frame = report.per_user
    assert frame['user'].tolist() == ['0', '1']
    assert frame['CP@1'].tolist() == [1.0, 0.0]
    assert report['CP@1'] == 0.5
    with pytest.raises(KeyError):
        report['CP@5']


def test_average_reports():
    a = MetricReport({10: 0.2, 100: 0.1}, 1.0, 0.5)
    b = MetricReport({10: 0.4}, 3.0, -0.5)
    avg = average_reports([a, b])
    assert list(avg.cp_at) == [10]
    assert avg.cp_at[10] == pytest.approx(0.3)
    assert avg.cdcg == 2.0
    assert avg.car == 0.0
    assert list(a.to_frame()['metric']) == ['CP@10', 'CP@100', 'CDCG', 'CAR']
    with pytest.raises(ValueError):
        average_reports([])
