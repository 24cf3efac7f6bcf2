"""
Ranked lists and the common ranker interface.

Every ranking method (causal neighborhood rankers, baselines, external
score files) is a ``Ranker``: it is fitted on the observed outcomes and
treatments of a training split and produces a ``Ranking``, a full item
permutation per user. Rankers register themselves by method name so the
CLI and the sweep harness can build them from a name.
"""
import logging

import numpy as np
import pandas as pd
import traitlets as T

from .utils import descending_order, method_name, parse_method, \
    ranks_from_order

log = logging.getLogger(__name__)


class Ranking(object):
    """
    Per-user item permutations.

    Parameters
    ----------
    order: int array (n_users, n_items)
        ``order[u, r]`` is the item at rank ``r + 1`` for user ``u``.
    scores: float array (n_users, n_items), optional
        Scores the order was derived from (indexed by item, not by rank).
    method: str, optional
    score_name: str
        Column name of the scores in CSV output.
    """

    def __init__(self, order, scores=None, method=None, score_name='score'):
        self.order = np.atleast_2d(np.asarray(order, dtype=np.int64))
        self.scores = None if scores is None else np.asarray(scores, float)
        if self.scores is not None and self.scores.shape != self.order.shape:
            raise ValueError('scores shape {0} does not match order shape {1}'
                             .format(self.scores.shape, self.order.shape))
        self.method = method
        self.score_name = score_name

    @classmethod
    def from_scores(cls, scores, keep_scores=True, **kwargs):
        """Rank items by descending score, ties by ascending item index."""
        scores = np.atleast_2d(np.asarray(scores, dtype=float))
        return cls(descending_order(scores),
                   scores=scores if keep_scores else None, **kwargs)

    @property
    def shape(self):
        return self.order.shape

    @property
    def n_users(self):
        return self.order.shape[0]

    @property
    def n_items(self):
        return self.order.shape[1]

    def ranks(self):
        """1-based rank of every (user, item) pair."""
        return ranks_from_order(self.order)

    def to_frame(self, user_ids=None, item_ids=None):
        """
        Long-format frame with columns user, item, rank and, when scores
        are kept, the score column; rows ordered by user then rank.
        """
        n_users, n_items = self.shape
        users = np.repeat(np.arange(n_users), n_items)
        items = self.order.ravel()
        frame = pd.DataFrame({
            'user': users if user_ids is None else np.asarray(user_ids)[users],
            'item': items if item_ids is None else np.asarray(item_ids)[items],
            'rank': np.tile(np.arange(1, n_items + 1), n_users)})
        if self.scores is not None:
            frame[self.score_name] = self.scores[users, items]
        return frame

    @classmethod
    def from_frame(cls, frame, user_index, item_index, method=None):
        """
        Rebuild a ranking from a frame with columns user, item, rank.

        Parameters
        ----------
        frame: pandas.DataFrame
        user_index, item_index: dict external id -> dense index

        Raises ValueError listing the users or items a user's list misses.
        """
        for col in ('user', 'item', 'rank'):
            if col not in frame.columns:
                raise ValueError('ranking is missing column "{0}"'
                                 .format(col))
        users = frame['user'].astype(str).map(user_index)
        items = frame['item'].astype(str).map(item_index)
        unknown = sorted(set(frame['user'].astype(str)[users.isna()]) |
                         set(frame['item'].astype(str)[items.isna()]))
        if unknown:
            raise ValueError('unknown ids in ranking: {0}'.format(unknown))
        n_users, n_items = len(user_index), len(item_index)
        present = set(users.astype(int))
        missing_users = [u for u, i in sorted(user_index.items(),
                                              key=lambda x: x[1])
                         if i not in present]
        if missing_users:
            raise ValueError('ranking misses users {0}'.format(missing_users))

        table = pd.DataFrame({'user': users.astype(np.int64),
                              'item': items.astype(np.int64),
                              'rank': frame['rank'].astype(np.int64)})
        table = table.sort_values(['user', 'rank'], kind='mergesort')
        user_names = sorted(user_index, key=user_index.get)
        item_names = np.array(sorted(item_index, key=item_index.get),
                                dtype=object)
        problems = []
        for u, group in table.groupby('user', sort=True):
            items_u = group['item'].values
            if len(items_u) == n_items and \
                    len(np.unique(items_u)) == n_items:
                continue
            missing = np.setdiff1d(np.arange(n_items), items_u)
            problems.append('user {0}: {1} rows, missing items {2}'.format(
                user_names[u], len(items_u), item_names[missing].tolist()))
        if problems:
            raise ValueError('ranking does not cover every item: {0}'
                             .format('; '.join(problems)))
        order = table['item'].values.reshape(n_users, n_items)
        return cls(order, method=method)

    def write_csv(self, path, user_ids=None, item_ids=None):
        self.to_frame(user_ids, item_ids).to_csv(path, index=False,
                                                 float_format='%.17g')

    @classmethod
    def read_csv(cls, path, user_index, item_index, method=None):
        frame = pd.read_csv(path, dtype={'user': str, 'item': str},
                            keep_default_na=False)
        return cls.from_frame(frame, user_index, item_index, method=method)

    def __repr__(self):
        return 'Ranking(method={0!r}, shape={1})'.format(self.method,
                                                         self.shape)


class Ranker(T.HasTraits):
    """
    Base class of ranking methods.

    Subclasses implement ``_rank(keep_scores)`` and optionally ``_fit``.
    """

    method = T.Unicode('')

    def __init__(self, **kwargs):
        super(Ranker, self).__init__(**kwargs)
        self.y = self.z = None

    def fit(self, y, z):
        """
        Parameters
        ----------
        y, z: SparseBinaryMatrix
            Observed outcomes and treatments of the training split.
        """
        if y.shape != z.shape:
            raise ValueError('Y and Z must share dimensions, got {0} and {1}'
                             .format(y.shape, z.shape))
        self.y, self.z = y, z
        log.debug('fitting %s on %d users x %d items', self.method,
                  y.shape[0], y.shape[1])
        self._fit()
        return self

    def _fit(self):
        pass

    def rank(self, keep_scores=False, **kwargs):
        if self.y is None:
            raise ValueError('{0} is not fitted'.format(self.method or
                                                        type(self).__name__))
        ranking = self._rank(keep_scores=keep_scores, **kwargs)
        ranking.method = self.method
        return ranking

    def _rank(self, keep_scores=False, **kwargs):
        raise NotImplementedError('This ranker is not fully implemented')


_RANKERS = {}


def register_ranker(*names):
    """Class decorator registering a Ranker under one or more method names."""
    def wrap(cls):
        for name in names:
            _RANKERS[name] = cls
        return cls
    return wrap


def list_rankers():
    return sorted(_RANKERS)


def make_ranker(method, **params):
    """
    Build the ranker of a method name.

    Parameters
    ----------
    method: str
        Any name accepted by ``parse_method``.
    params:
        Hyperparameters forwarded to the ranker's ``from_method``
        (k, alpha, beta, seed, path...).
    """
    # baselines and neighbors register on import
    from . import baselines, neighbors  # noqa: F401

    parsed = parse_method(method)
    name = method_name(parsed)
    key = 'external' if parsed['family'] == 'external' else name
    if key not in _RANKERS:
        raise ValueError('No ranker registered for "{0}"'.format(method))
    return _RANKERS[key].from_method(name, **params)
