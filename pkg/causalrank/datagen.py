"""
Semi-synthetic dataset generation.

Prior tables are derived from predicted ratings ``r_hat`` and predicted
no-recommendation interaction probabilities ``o_hat``:

* ``mu_t = sigmoid(r_hat - epsilon)``, ``mu_c = o_hat``
* ``P = min(1, a * rank ** -b)`` with items ranked per user by
  ``mu_t + mu_c``, ``a`` optionally calibrated to a target number of
  recommendations per user.

Potential outcomes and assignments of each split are then Bernoulli draws.
Every (split, replicate, variable, user) row has its own Philox stream, so
a dataset does not depend on the order or parallelism of its generation.
"""
import logging
import math

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit

from .data import SPLITS, GeneratedDataset, PriorTables
from .utils import descending_order, parallel_map, ranks_from_order, \
    row_blocks, stream_key

log = logging.getLogger(__name__)

VARIABLES = ('y_t', 'y_c', 'z')


def _as_table(name, array):
    array = np.asarray(array, dtype=float)
    if array.ndim != 2:
        raise ValueError('{0} must be 2-D, got {1} dimensions'
                         .format(name, array.ndim))
    return array


def outcome_probabilities(r_hat, o_hat, epsilon=5.0):
    """
    Outcome probabilities with and without recommendation.

    Returns
    -------
    (mu_t, mu_c) with mu_t = sigmoid(r_hat - epsilon) and mu_c = o_hat
    """
    r_hat = _as_table('r_hat', r_hat)
    o_hat = _as_table('o_hat', o_hat)
    if r_hat.shape != o_hat.shape:
        raise ValueError('r_hat and o_hat must share dimensions, got {0} '
                         'and {1}'.format(r_hat.shape, o_hat.shape))
    if o_hat.size and (o_hat.min() < 0 or o_hat.max() > 1):
        raise ValueError('o_hat must hold probabilities in [0, 1]')
    return expit(r_hat - epsilon), o_hat.copy()


def preference_ranks(mu_t, mu_c):
    """1-based per-user item ranks by mu_t + mu_c descending."""
    mu_t, mu_c = _as_table('mu_t', mu_t), _as_table('mu_c', mu_c)
    if mu_t.shape != mu_c.shape:
        raise ValueError('mu_t and mu_c must share dimensions')
    if not mu_t.size:
        return np.zeros(mu_t.shape, dtype=np.int64)
    return ranks_from_order(descending_order(mu_t + mu_c))


def _check_ab(a, b):
    if a <= 0:
        raise ValueError('a must be > 0, got {0}'.format(a))
    if b < 0:
        raise ValueError('b must be >= 0, got {0}'.format(b))


def propensities(mu_t, mu_c, a=1.0, b=1.0):
    """P = min(1, a * (1 / rank) ** b), ranks by mu_t + mu_c per user."""
    _check_ab(a, b)
    ranks = preference_ranks(mu_t, mu_c).astype(float)
    return np.minimum(1.0, a * np.power(ranks, -b))


def expected_recs_per_user(a, b, n_items):
    """Sum of min(1, a r^-b) over r = 1..n_items."""
    r = np.arange(1, n_items + 1, dtype=float)
    return math.fsum(np.minimum(1.0, a * np.power(r, -b)))


def calibrate_a(mu_t, mu_c, b, target_recs_per_user):
    """
    Scale ``a`` so users receive ``target_recs_per_user`` recommendations
    in expectation.

    Every user's ranks are a permutation of 1..n_items, so the expected
    count is the same for all users and only depends on (a, b, n_items).
    It is continuous and non-decreasing in a; it reaches n_items at
    a = n_items ** b, so the root is bracketed by (0, max(1, n_items ** b)].
    """
    mu_t = _as_table('mu_t', mu_t)
    n_items = mu_t.shape[1]
    target = float(target_recs_per_user)
    _check_ab(1.0, b)
    if target <= 0:
        raise ValueError('target_recs_per_user must be > 0, got {0}'
                         .format(target))
    if target > n_items:
        raise ValueError('target of {0} recommendations per user exceeds '
                         'the {1} items'.format(target, n_items))
    upper = max(1.0, float(n_items) ** b)
    if target == n_items:
        return upper
    a = brentq(lambda a: expected_recs_per_user(a, b, n_items) - target,
               0.0, upper, xtol=1e-300, rtol=1e-14, maxiter=500)
    log.info('calibrated a=%.12g for b=%g, %g recommendations per user',
             a, b, target)
    return a


def build_priors(r_hat, o_hat, params):
    """
    Prior tables from predicted ratings and interaction probabilities.

    Parameters
    ----------
    r_hat, o_hat: 2-D arrays (n_users, n_items)
    params: GenParams
        ``a`` is replaced by the calibrated value when
        ``target_recs_per_user`` is set.
    """
    mu_t, mu_c = outcome_probabilities(r_hat, o_hat, params.epsilon)
    if params.target_recs_per_user is not None:
        a = calibrate_a(mu_t, mu_c, params.b, params.target_recs_per_user)
    else:
        a = params.a
    snapshot = params.to_dict()
    snapshot['a'] = a
    return PriorTables(mu_t, mu_c, propensities(mu_t, mu_c, a, params.b),
                       params=snapshot)


def row_uniforms(seed, split, replicate, variable, user, n_items):
    """Uniform draws of one user row; the row index is the counter's
    second word."""
    key = stream_key(seed, split, replicate, variable)
    bitgen = np.random.Philox(key=key, counter=int(user) << 64)
    return np.random.Generator(bitgen).random(n_items)


def _draw(prob, seed, split, replicate, variable, rows):
    n_items = prob.shape[1]
    out = np.empty((len(rows), n_items), dtype=np.int8)
    for local, u in enumerate(rows):
        out[local] = row_uniforms(seed, split, replicate, variable, u,
                                  n_items) < prob[u]
    return out


def sample_split(mu_t, mu_c, propensity, seed, split, replicate=0,
                 params=None, block_size=256, workers=None):
    """
    Sample one split: Y_T ~ Bernoulli(mu_t), Y_C ~ Bernoulli(mu_c),
    Z ~ Bernoulli(propensity); tau = Y_T - Y_C and
    Y = Z Y_T + (1 - Z) Y_C.

    Returns
    -------
    GeneratedDataset
    """
    if split not in SPLITS:
        raise ValueError('split must be one of {0}, got "{1}"'
                         .format(list(SPLITS), split))
    priors = PriorTables(mu_t, mu_c, propensity)
    tables = dict(zip(VARIABLES, (priors.mu_t, priors.mu_c,
                                  priors.propensity)))
    n_users, n_items = priors.shape

    def work(rows):
        return [_draw(tables[v], seed, split, replicate, v, rows)
                for v in VARIABLES]

    blocks = parallel_map(work, row_blocks(n_users, block_size), workers)
    if blocks:
        y_t, y_c, z = (np.vstack([b[n] for b in blocks]) for n in range(3))
    else:
        y_t = y_c = z = np.zeros((0, n_items), dtype=np.int8)
    return GeneratedDataset.from_dense(y_t, y_c, z, seed, split,
                                       replicate=replicate, params=params)


def generate(priors, params, workers=None):
    """
    Sample ``n_train``, ``n_val`` and ``n_test`` replicates from shared
    priors.

    Returns
    -------
    dict split -> list of GeneratedDataset, replicates in index order
    """
    snapshot = dict(priors.params or params.to_dict())
    result = {}
    for split in SPLITS:
        result[split] = [
            sample_split(priors.mu_t, priors.mu_c, priors.propensity,
                         params.seed, split, replicate=r, params=snapshot,
                         workers=workers)
            for r in range(params.samples(split))]
        for ds in result[split]:
            log.info('generated %s: %d users x %d items, %d treated, '
                     'ATE=%.6g', ds.name, ds.n_users, ds.n_items,
                     ds.z.nnz, ds.ate)
    return result


def synth_priors(n_users, n_items, seed=0, rank=8):
    """
    Synthetic stand-in for fitted rating and interaction models.

    Latent preferences ``p`` mix a low-rank user-item term with item
    popularity; ``q`` is correlated with ``p``. Then
    ``r_hat = clip(3.6 + 0.9 p, 1, 5)`` and
    ``o_hat = sigmoid(-2.6 + 1.2 q)``, which with epsilon = 5 puts
    mu_t > mu_c on roughly 85-90% of pairs.

    Returns
    -------
    (r_hat, o_hat): 2-D arrays (n_users, n_items)
    """
    if n_users < 1 or n_items < 1:
        raise ValueError('dimensions must be positive, got {0} x {1}'
                         .format(n_users, n_items))
    rng = np.random.Generator(
        np.random.Philox(key=stream_key(seed, 'priors', rank)))

    def latent():
        users = rng.standard_normal((n_users, rank))
        items = rng.standard_normal((n_items, rank))
        popularity = rng.standard_normal(n_items)
        return 0.8 * (users @ items.T) / math.sqrt(rank) \
            + 0.6 * popularity[None, :]

    p = latent()
    q = 0.6 * p + 0.8 * latent()
    r_hat = np.clip(3.6 + 0.9 * p, 1.0, 5.0)
    o_hat = expit(-2.6 + 1.2 * q)
    return r_hat, o_hat


def prior_stats(priors):
    """Share of pairs with mu_t > mu_c, expected ATE and recommendations."""
    return {'frac_mu_t_greater': float(np.mean(priors.mu_t > priors.mu_c)),
            'expected_ate': float(np.mean(priors.mu_t - priors.mu_c)),
            'mean_recs_per_user': float(priors.propensity.sum(axis=1).mean()),
            'a': priors.params.get('a')}


def dataset_stats(ds):
    """Summary counts of a generated split."""
    return {'split': ds.name,
            'n_users': ds.n_users,
            'n_items': ds.n_items,
            'n_positive': ds.y.nnz,
            'n_treated': ds.z.nnz,
            'ate': ds.ate}
