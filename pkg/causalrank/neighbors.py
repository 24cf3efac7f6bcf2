"""
Causality-aware neighborhood rankers (CUBN / CIBN).

Potential outcomes of every (user, item) pair are estimated from the
treated and untreated interactions of the user's (or item's) neighbors,
optionally mixing in the pair's own observation and shrinking the estimates
toward zero; items are ranked by the estimated causal effect
``tau_hat = y_t_hat - y_c_hat``.
"""
import logging

import numpy as np
import traitlets as T

from .config import RankerConfig
from .rankers import Ranker, Ranking, register_ranker
from .similarity import derive_neighbors, neighbor_matrix, neighbors_for
from .utils import descending_order, parallel_map, row_blocks

log = logging.getLogger(__name__)

CAUSAL_METHODS = ['CUBN-O', 'CUBN-T', 'CIBN-O', 'CIBN-T',
                  'CUBN-O-woM', 'CUBN-T-woM', 'CIBN-O-woM', 'CIBN-T-woM']


class EffectEstimates(object):
    """Dense potential-outcome estimates and the effect estimate."""

    def __init__(self, y_t_hat, y_c_hat, tau_hat=None):
        self.y_t_hat = np.asarray(y_t_hat, dtype=float)
        self.y_c_hat = np.asarray(y_c_hat, dtype=float)
        if self.y_t_hat.shape != self.y_c_hat.shape:
            raise ValueError('estimate shapes differ: {0} and {1}'.format(
                self.y_t_hat.shape, self.y_c_hat.shape))
        if tau_hat is None:
            tau_hat = effect_mixed(self.y_t_hat, self.y_c_hat)
        self.tau_hat = np.asarray(tau_hat, dtype=float)

    @property
    def shape(self):
        return self.tau_hat.shape


def _dense(matrix):
    if hasattr(matrix, 'toarray'):
        return matrix.toarray().astype(float)
    return np.asarray(matrix, dtype=float)


def _ratio(num, den, beta):
    den = beta + den
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=den > 0)
    return out


class NeighborhoodSums(object):
    """
    Weighted neighborhood sums for a block of users.

    For user orientation with weight matrix W (rows are owners)::

        treated_num[u, i] = sum_v W[u, v] Z[v, i] Y[v, i]
        treated_den[u, i] = sum_v W[u, v] Z[v, i]
        control_num[u, i] = sum_v W[u, v] (1 - Z[v, i]) Y[v, i]
        control_den[u, i] = sum_v W[u, v] (1 - Z[v, i])

    and the same over item neighbors ``j`` of ``i`` for item orientation.
    Shrinkage only enters the denominators, so one set of sums serves any
    number of (beta_t, beta_c) values.
    """

    def __init__(self, treated_num, treated_den, control_num, control_den,
                 own_y, own_z, rows):
        self.treated_num = treated_num
        self.treated_den = treated_den
        self.control_num = control_num
        self.control_den = control_den
        self.own_y = own_y
        self.own_z = own_z
        self.rows = rows

    @classmethod
    def compute(cls, y, z, weights, orientation, rows):
        """
        Parameters
        ----------
        y, z: SparseBinaryMatrix (users x items)
        weights: scipy.sparse CSR neighbor weight matrix
            Users x users for user orientation, items x items for item
            orientation.
        orientation: 'user' or 'item'
        rows: range of user indices
        """
        y_csr, z_csr = y.to_csr(), z.to_csr()
        own_y = y_csr[rows.start:rows.stop].toarray()
        own_z = z_csr[rows.start:rows.stop].toarray()
        if orientation == 'user':
            block = weights[rows.start:rows.stop]
            cols = np.unique(block.indices)
            block = block[:, cols]
            ys = y_csr[cols].toarray()
            zs = z_csr[cols].toarray()

            def wsum(m):
                if not len(cols):
                    return np.zeros((len(rows), m.shape[1]))
                return np.asarray(block @ m)
        elif orientation == 'item':
            ys, zs = own_y, own_z

            def wsum(m):
                return np.asarray(weights @ m.T).T
        else:
            raise ValueError('Invalid orientation: "{0}"'.format(orientation))
        return cls(wsum(zs * ys), wsum(zs), wsum((1 - zs) * ys),
                   wsum(1 - zs), own_y, own_z, rows)

    def estimates(self, beta_t=0.0, beta_c=0.0):
        """(y_t_hat, y_c_hat); a zero denominator gives 0."""
        return (_ratio(self.treated_num, self.treated_den, beta_t),
                _ratio(self.control_num, self.control_den, beta_c))

    def tau_hat(self, beta_t=0.0, beta_c=0.0, mix_own=True):
        if mix_own:
            return effect_mixed(*self.estimates(beta_t, beta_c))
        y_t, y_c = self.estimates()
        return effect_wom(self.own_y, self.own_z, y_t, y_c)


def _n_rows(y, orientation):
    if orientation not in ('user', 'item'):
        raise ValueError('Invalid orientation: "{0}"'.format(orientation))
    return y.n_rows if orientation == 'user' else y.n_cols


def _weights(y, z, neighbor_sets, orientation, include_self):
    if y.shape != z.shape:
        raise ValueError('Y and Z must share dimensions, got {0} and {1}'
                         .format(y.shape, z.shape))
    n_rows = _n_rows(y, orientation)
    if len(neighbor_sets) != n_rows:
        raise ValueError('{0} neighbor sets given for {1} {2}s'.format(
            len(neighbor_sets), n_rows, orientation))
    for ns in neighbor_sets:
        if ns.includes_self != include_self:
            raise ValueError('neighbor sets must {0}include the row itself'
                             .format('' if include_self else 'not '))
        if len(ns) and (ns.ids.min() < 0 or ns.ids.max() >= n_rows):
            raise ValueError('neighbor ids of row {0} out of range'
                             .format(ns.owner))
    return neighbor_matrix(neighbor_sets, n_rows)


def _all_sums(y, z, neighbor_sets, orientation, include_self):
    weights = _weights(y, z, neighbor_sets, orientation, include_self)
    return NeighborhoodSums.compute(y, z, weights, orientation,
                                    range(0, y.n_rows))


def potential_outcomes_shrunk(y, z, neighbors, cfg):
    """
    Shrunk potential-outcome estimates over neighborhoods that may include
    the row itself.

    Parameters
    ----------
    y, z: SparseBinaryMatrix
    neighbors: list of NeighborSet
        Built with ``include_self=cfg.mix_own`` in ``cfg.sim.orientation``.
    cfg: RankerConfig

    Returns
    -------
    (y_t_hat, y_c_hat): dense arrays (n_users, n_items)
    """
    sums = _all_sums(y, z, neighbors, cfg.sim.orientation, cfg.mix_own)
    return sums.estimates(cfg.beta_t, cfg.beta_c)


def potential_outcomes_wom(y, z, neighbors, cfg):
    """Unshrunk estimates over neighborhoods that exclude the row itself."""
    sums = _all_sums(y, z, neighbors, cfg.sim.orientation, False)
    return sums.estimates()


def effect_wom(y, z, y_t_hat, y_c_hat):
    """tau_hat = Z (Y - y_c_hat) + (1 - Z) (y_t_hat - Y)."""
    y, z = _dense(y), _dense(z)
    return z * (y - y_c_hat) + (1 - z) * (y_t_hat - y)


def effect_mixed(y_t_hat, y_c_hat):
    """tau_hat = y_t_hat - y_c_hat."""
    return np.asarray(y_t_hat, float) - np.asarray(y_c_hat, float)


def rank_items(tau_hat, user):
    """Items of one user by descending tau_hat, ties by ascending index."""
    return descending_order(np.asarray(tau_hat)[user])


def build_neighbors(y, z, cfg, raw=None, **kwargs):
    """
    Neighbor sets for a ranker config; ``raw`` lists from
    ``raw_neighbors`` over the same source and orientation skip the
    similarity computation.
    """
    if raw is not None:
        return derive_neighbors(raw, cfg.sim.k, cfg.sim.alpha, cfg.mix_own)
    return neighbors_for(y, z, cfg.sim, include_self=cfg.mix_own, **kwargs)


def estimate(y, z, cfg, neighbors=None):
    """Dense EffectEstimates of a config over the whole matrix."""
    if neighbors is None:
        neighbors = build_neighbors(y, z, cfg)
    if cfg.mix_own:
        y_t, y_c = potential_outcomes_shrunk(y, z, neighbors, cfg)
        return EffectEstimates(y_t, y_c)
    y_t, y_c = potential_outcomes_wom(y, z, neighbors, cfg)
    return EffectEstimates(y_t, y_c, effect_wom(y, z, y_t, y_c))


def iter_sums(y, z, neighbors, orientation, include_self, block_size=256,
              workers=None, func=None):
    """
    Map ``func`` over the NeighborhoodSums of consecutive user blocks.

    Results are returned in block order.
    """
    weights = _weights(y, z, neighbors, orientation, include_self)

    def work(rows):
        sums = NeighborhoodSums.compute(y, z, weights, orientation, rows)
        return sums if func is None else func(sums)

    return parallel_map(work, row_blocks(y.n_rows, block_size), workers)


def run_ranker(y, z, cfg, neighbors=None, raw=None, block_size=256,
               workers=None, keep_scores=False):
    """
    Rank all items for every user.

    Phase 1 builds the neighbors from ``cfg.sim`` (outcomes for -O,
    treatments for -T); phase 2 estimates tau_hat one block of users at a
    time and sorts each row.

    Returns
    -------
    Ranking, with tau_hat as scores when ``keep_scores``
    """
    if neighbors is None:
        neighbors = build_neighbors(y, z, cfg, raw=raw,
                                    workers=workers)

    def score(sums):
        tau = sums.tau_hat(cfg.beta_t, cfg.beta_c, cfg.mix_own)
        return descending_order(tau), (tau if keep_scores else None)

    blocks = iter_sums(y, z, neighbors, cfg.sim.orientation, cfg.mix_own,
                       block_size=block_size, workers=workers, func=score)
    n_items = y.n_cols
    if blocks:
        order = np.vstack([b[0] for b in blocks])
        scores = np.vstack([b[1] for b in blocks]) if keep_scores else None
    else:
        order = np.zeros((0, n_items), dtype=np.int64)
        scores = np.zeros((0, n_items)) if keep_scores else None
    log.info('ranked %d users x %d items with %s (k=%d, alpha=%g, '
             'beta_t=%g, beta_c=%g)', y.n_rows, n_items, cfg.method,
             cfg.sim.k, cfg.sim.alpha, cfg.beta_t, cfg.beta_c)
    return Ranking(order, scores=scores, method=cfg.method,
                   score_name='tau_hat')


@register_ranker(*CAUSAL_METHODS)
class CausalNeighborRanker(Ranker):
    """CUBN / CIBN ranker in the common Ranker interface."""

    config = T.Instance(RankerConfig)
    block_size = T.Int(256)
    workers = T.Int(None, allow_none=True)

    @T.default('config')
    def _config_default(self):
        return RankerConfig()

    @T.default('method')
    def _method_default(self):
        return self.config.method

    @classmethod
    def from_method(cls, method, k=100, alpha=1.0, beta=0.0, beta_t=None,
                    beta_c=None, block_size=256, workers=None):
        config = RankerConfig.from_method(
            method, k=k, alpha=alpha, beta=beta,
            **{name: value for name, value in
               (('beta_t', beta_t), ('beta_c', beta_c)) if value is not None})
        return cls(config=config, block_size=block_size, workers=workers)

    def _fit(self):
        self.neighbors = build_neighbors(self.y, self.z, self.config,
                                         block_size=self.block_size,
                                         workers=self.workers)

    def _rank(self, keep_scores=False):
        return run_ranker(self.y, self.z, self.config,
                          neighbors=self.neighbors,
                          block_size=self.block_size, workers=self.workers,
                          keep_scores=keep_scores)
