"""
Non-learned comparison rankers: Random, Pop, UBN / IBN, and rankings read
from external score files.
"""
import logging
import warnings

import numpy as np
import pandas as pd
import traitlets as T

from .config import BaselineConfig, SimilarityConfig
from .data import SparseBinaryMatrix
from .neighbors import iter_sums
from .rankers import Ranker, Ranking, register_ranker
from .similarity import neighbors_for
from .utils import descending_order

log = logging.getLogger(__name__)


def rank_random(n_users, n_items, seed):
    """Independent uniform item permutation per user."""
    if seed is None:
        raise ValueError('rank_random requires a seed')
    rng = np.random.default_rng(seed)
    order = np.vstack([rng.permutation(n_items) for _ in range(n_users)]) \
        if n_users else np.zeros((0, n_items), dtype=np.int64)
    return Ranking(order, method='Random')


def rank_pop(y, keep_scores=False):
    """
    Items by descending number of positive outcomes, ties by ascending
    index; the same list for every user.
    """
    popularity = y.col_sums().astype(float)
    order = np.tile(descending_order(popularity), (y.n_rows, 1))
    scores = np.tile(popularity, (y.n_rows, 1)) if keep_scores else None
    return Ranking(order, scores=scores, method='Pop')


def neighborhood_scores(sums):
    """sum w Y / sum w from NeighborhoodSums computed with Z = 0, where all
    weight lands on the control side."""
    total = sums.control_den
    out = np.zeros_like(total)
    np.divide(sums.control_num, total, out=out, where=total > 0)
    return out


def rank_ubn_ibn(y, cfg, neighbors=None, block_size=256, workers=None,
                 keep_scores=False):
    """
    Classical user- or item-based neighborhood ranking.

    Scores are the weighted mean outcome over the neighborhood
    ``sum w Y / sum w`` (owner excluded); a zero weight sum gives 0.

    Parameters
    ----------
    y: SparseBinaryMatrix
    cfg: BaselineConfig or SimilarityConfig
    """
    sim = cfg.sim if isinstance(cfg, BaselineConfig) else cfg
    if neighbors is None:
        neighbors = neighbors_for(y, y, sim, include_self=False,
                                  block_size=block_size, workers=workers)
    # the weighted means only need the control-side sums of an all-zero Z
    no_treatment = SparseBinaryMatrix.from_coo([], [], y.shape)

    def score(sums):
        s = neighborhood_scores(sums)
        return descending_order(s), (s if keep_scores else None)

    blocks = iter_sums(y, no_treatment, neighbors, sim.orientation, False,
                       block_size=block_size, workers=workers, func=score)
    method = 'UBN' if sim.orientation == 'user' else 'IBN'
    if blocks:
        order = np.vstack([b[0] for b in blocks])
        scores = np.vstack([b[1] for b in blocks]) if keep_scores else None
    else:
        order = np.zeros((0, y.n_cols), dtype=np.int64)
        scores = None
    log.info('ranked %d users x %d items with %s (k=%d, alpha=%g)',
             y.n_rows, y.n_cols, method, sim.k, sim.alpha)
    return Ranking(order, scores=scores, method=method)


def read_scores(path):
    """Read a ``user,item,score`` CSV with ids kept as strings."""
    frame = pd.read_csv(path, dtype={'user': str, 'item': str},
                        keep_default_na=False)
    for col in ('user', 'item', 'score'):
        if col not in frame.columns:
            raise ValueError('{0}: missing column "{1}"'.format(path, col))
    frame['score'] = pd.to_numeric(frame['score'], errors='raise')
    return frame


def rank_external(path, user_index, item_index, keep_scores=False,
                  method=None):
    """
    Rank external model scores with the common tie-break.

    Pairs missing from the file rank after every scored item of the user
    (ties by item index); a warning reports how many were missing.

    Parameters
    ----------
    path: str or DataFrame
        CSV with columns user, item, score.
    user_index, item_index: dict external id -> dense index
    """
    frame = path if isinstance(path, pd.DataFrame) else read_scores(path)
    users = frame['user'].astype(str).map(user_index)
    items = frame['item'].astype(str).map(item_index)
    known = users.notna() & items.notna()
    if not known.all():
        warnings.warn('{0} scored pairs reference unknown ids and are '
                      'ignored'.format(int((~known).sum())))
    users = users[known].astype(np.int64).values
    items = items[known].astype(np.int64).values
    values = frame['score'][known].astype(float).values
    if np.isnan(values).any():
        raise ValueError('external scores must not be NaN')

    n_users, n_items = len(user_index), len(item_index)
    scores = np.zeros((n_users, n_items))
    scored = np.zeros((n_users, n_items), dtype=bool)
    if pd.DataFrame({'u': users, 'i': items}).duplicated().any():
        raise ValueError('duplicate (user, item) pairs in external scores')
    scores[users, items] = values
    scored[users, items] = True
    missing = scored.size - int(scored.sum())
    if missing:
        warnings.warn('{0} of {1} (user, item) pairs have no external score '
                      'and rank last'.format(missing, scored.size))
    # scored pairs first, any score including -inf, then by score and index
    index = np.broadcast_to(np.arange(n_items), scores.shape)
    order = np.lexsort((index, -scores, ~scored), axis=-1)
    if keep_scores:
        scores = np.where(scored, scores, np.nan)
    return Ranking(order, scores=scores if keep_scores else None,
                   method=method)


@register_ranker('Random')
class RandomRanker(Ranker):

    seed = T.Int(0)

    @T.default('method')
    def _method_default(self):
        return 'Random'

    @classmethod
    def from_method(cls, method, seed=0, **kwargs):
        return cls(seed=BaselineConfig(method='random', seed=seed).seed)

    def _rank(self, keep_scores=False):
        return rank_random(self.y.n_rows, self.y.n_cols, self.seed)


@register_ranker('Pop')
class PopRanker(Ranker):

    @T.default('method')
    def _method_default(self):
        return 'Pop'

    @classmethod
    def from_method(cls, method, **kwargs):
        return cls()

    def _rank(self, keep_scores=False):
        return rank_pop(self.y, keep_scores=keep_scores)


@register_ranker('UBN', 'IBN')
class NeighborhoodRanker(Ranker):

    config = T.Instance(BaselineConfig)
    block_size = T.Int(256)
    workers = T.Int(None, allow_none=True)

    @T.default('method')
    def _method_default(self):
        return self.config.method.upper()

    @classmethod
    def from_method(cls, method, k=100, alpha=1.0, block_size=256,
                    workers=None, **kwargs):
        orientation = 'user' if method.upper() == 'UBN' else 'item'
        sim = SimilarityConfig(k=k, alpha=alpha, source='outcomes',
                               orientation=orientation)
        config = BaselineConfig(method=method.lower(), sim=sim)
        return cls(config=config, block_size=block_size, workers=workers)

    def _fit(self):
        self.neighbors = neighbors_for(self.y, self.z, self.config.sim,
                                       block_size=self.block_size,
                                       workers=self.workers)

    def _rank(self, keep_scores=False):
        return rank_ubn_ibn(self.y, self.config, neighbors=self.neighbors,
                            block_size=self.block_size, workers=self.workers,
                            keep_scores=keep_scores)


@register_ranker('external')
class ExternalScoreRanker(Ranker):
    """Ranking read from a ``user,item,score`` file of an outside model."""

    path = T.Unicode()
    user_ids = T.List(default_value=None, allow_none=True)
    item_ids = T.List(default_value=None, allow_none=True)

    @classmethod
    def from_method(cls, method, path=None, user_ids=None, item_ids=None,
                    **kwargs):
        if not path:
            raise ValueError('{0} needs a score file'.format(method))
        return cls(method=method, path=path, user_ids=user_ids,
                   item_ids=item_ids)

    def _rank(self, keep_scores=False):
        user_ids = self.user_ids or [str(u) for u in range(self.y.n_rows)]
        item_ids = self.item_ids or [str(i) for i in range(self.y.n_cols)]
        return rank_external(self.path,
                             {u: n for n, u in enumerate(user_ids)},
                             {i: n for n, i in enumerate(item_ids)},
                             keep_scores=keep_scores, method=self.method)
