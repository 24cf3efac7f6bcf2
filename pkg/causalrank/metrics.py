"""
Causal ranking metrics: CP@n, CDCG and CAR.

Every metric is computed per user against the ground-truth ternary effects
and then averaged over users in ascending user order with compensated
summation, so the result does not depend on how users were blocked.
"""
import math
import re
import warnings

import numpy as np
import pandas as pd
import scipy.sparse as sps

CP_RE = re.compile(r'^CP@(\d+)$', re.IGNORECASE)


def parse_metric(name):
    """
    Parse a metric name.

    Parameters
    ----------
    name: str
        "CP@<n>", "CDCG" or "CAR" (case-insensitive).

    Returns
    -------
    (kind, n): kind is 'cp', 'cdcg' or 'car'; n is the cutoff for CP and
    None otherwise.
    """
    key = name.strip()
    m = CP_RE.match(key)
    if m:
        n = int(m.group(1))
        if n < 1:
            raise ValueError('CP cutoff must be >= 1: "{0}"'.format(name))
        return 'cp', n
    if key.upper() in ('CDCG', 'CAR'):
        return key.lower(), None
    raise ValueError('Invalid metric: "{0}".\n'
                     'Valid values are CP@<n>, CDCG and CAR'.format(name))


def metric_name(kind, n=None):
    return 'CP@{0}'.format(n) if kind == 'cp' else kind.upper()


def higher_is_better(name):
    """CAR is the only metric where smaller is better."""
    return parse_metric(name)[0] != 'car'


def _dense_tau(tau):
    if sps.issparse(tau):
        return tau.toarray().astype(float)
    return np.asarray(tau, dtype=float)


def _check_order(order, tau):
    order = np.atleast_2d(np.asarray(order, dtype=np.int64))
    if order.shape != tau.shape:
        raise ValueError('ranking shape {0} does not match tau shape {1}'
                         .format(order.shape, tau.shape))
    return order


def per_user_metrics(order, tau, cutoffs=(), cdcg=True, car=True):
    """
    Per-user metric values for a block of users.

    Parameters
    ----------
    order: int array (n_users, n_items)
        ``order[u, r]`` is the item at rank ``r + 1`` of user ``u``.
    tau: dense or sparse array (n_users, n_items)
        Ground-truth effects of the same users.
    cutoffs: list of int
        CP cutoffs.

    Returns
    -------
    dict metric name -> float array of length n_users
    """
    tau = _dense_tau(tau)
    order = _check_order(order, tau)
    n_items = tau.shape[1]
    ranked = np.take_along_axis(tau, order, axis=1)
    result = {}
    for n in cutoffs:
        if not 1 <= n <= n_items:
            raise ValueError('CP cutoff n={0} out of range [1, {1}]'
                             .format(n, n_items))
        result[metric_name('cp', n)] = ranked[:, :n].sum(axis=1) / n
    positions = np.arange(1, n_items + 1, dtype=float)
    if cdcg:
        result['CDCG'] = (ranked / np.log2(1 + positions)).sum(axis=1)
    if car:
        result['CAR'] = (ranked * positions).sum(axis=1) / n_items
    return result


def mean_over_users(values):
    """Compensated mean in ascending user order; 0 for no users."""
    values = list(values)
    return math.fsum(values) / len(values) if values else 0.0


def cp_at_n(order, tau, n):
    """Causal precision at ``n``, averaged over users."""
    values = per_user_metrics(order, tau, [n], cdcg=False, car=False)
    return mean_over_users(values[metric_name('cp', n)])


def cdcg(order, tau):
    """Causal DCG: sum of tau / log2(1 + rank), averaged over users."""
    return mean_over_users(per_user_metrics(order, tau, car=False)['CDCG'])


def car(order, tau):
    """Causal average rank, normalized by the item count (smaller is
    better)."""
    return mean_over_users(per_user_metrics(order, tau, cdcg=False)['CAR'])


class MetricReport(object):
    """
    Metrics of one ranking on one dataset.

    Parameters
    ----------
    cp_at: dict n -> float
    cdcg: float
    car: float
    per_user: pandas.DataFrame, optional
        One row per user, one column per metric.
    """

    def __init__(self, cp_at, cdcg, car, per_user=None):
        self.cp_at = {int(n): float(v) for n, v in cp_at.items()}
        self.cdcg = float(cdcg)
        self.car = float(car)
        self.per_user = per_user

    def __getitem__(self, name):
        kind, n = parse_metric(name)
        if kind == 'cp':
            if n not in self.cp_at:
                raise KeyError(name)
            return self.cp_at[n]
        return getattr(self, kind)

    def to_dict(self):
        result = {metric_name('cp', n): self.cp_at[n]
                  for n in sorted(self.cp_at)}
        result['CDCG'] = self.cdcg
        result['CAR'] = self.car
        return result

    def to_frame(self):
        d = self.to_dict()
        return pd.DataFrame({'metric': list(d), 'value': list(d.values())})

    def __repr__(self):
        return 'MetricReport({0!r})'.format(self.to_dict())


def _missing(order, n_users, n_items):
    problems = []
    if order.shape[0] < n_users:
        problems.append('missing users {0}'.format(
            list(range(order.shape[0], n_users))))
    for u, row in enumerate(order[:n_users]):
        missing = np.setdiff1d(np.arange(n_items), row)
        if len(missing) or len(row) != n_items:
            problems.append('user {0}: missing items {1}'.format(
                u, missing.tolist()))
    return problems


def evaluate(ranking, dataset, cutoffs=(10, 100), per_user=False,
             block_size=1024):
    """
    Evaluate a ranking against a dataset's ground-truth effects.

    Parameters
    ----------
    ranking: Ranking or int array (n_users, n_items)
    dataset: GeneratedDataset
    cutoffs: list of int
        CP cutoffs; values above the item count are dropped with a warning.
    per_user: bool
        Keep the per-user breakdown in the report.

    Returns
    -------
    MetricReport
    """
    order = getattr(ranking, 'order', ranking)
    order = np.atleast_2d(np.asarray(order, dtype=np.int64))
    n_users, n_items = dataset.shape
    problems = _missing(order, n_users, n_items) if (
        order.shape != (n_users, n_items)
        or not np.array_equal(np.sort(order, axis=1),
                              np.broadcast_to(np.arange(n_items),
                                              order.shape))) else []
    if problems:
        raise ValueError('ranking does not cover the dataset: {0}'
                         .format('; '.join(problems)))

    kept = sorted({int(n) for n in cutoffs if n <= n_items})
    dropped = sorted({int(n) for n in cutoffs} - set(kept))
    if dropped:
        warnings.warn('CP cutoffs {0} exceed the {1} items and are dropped'
                      .format(dropped, n_items))

    columns = {}
    for start in range(0, n_users, block_size):
        stop = min(start + block_size, n_users)
        block = per_user_metrics(order[start:stop], dataset.tau[start:stop],
                                 kept)
        for name, values in block.items():
            columns.setdefault(name, []).append(values)
    columns = {name: np.concatenate(parts) for name, parts in columns.items()}
    if not columns:
        columns = {name: np.zeros(0) for name in
                   [metric_name('cp', n) for n in kept] + ['CDCG', 'CAR']}

    frame = None
    if per_user:
        frame = pd.DataFrame(columns)
        frame.insert(0, 'user', dataset.user_ids)
    return MetricReport({n: mean_over_users(columns[metric_name('cp', n)])
                         for n in kept},
                        mean_over_users(columns['CDCG']),
                        mean_over_users(columns['CAR']),
                        per_user=frame)


def average_reports(reports):
    """Average reports (e.g. over dataset replicates) metric by metric."""
    reports = list(reports)
    if not reports:
        raise ValueError('no reports to average')
    cutoffs = set(reports[0].cp_at)
    for r in reports[1:]:
        cutoffs &= set(r.cp_at)
    return MetricReport(
        {n: mean_over_users(r.cp_at[n] for r in reports) for n in cutoffs},
        mean_over_users(r.cdcg for r in reports),
        mean_over_users(r.car for r in reports))
