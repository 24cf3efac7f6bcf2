"""
Experiment driver: hyperparameter grids, validation-based selection,
sensitivity sweeps and result tables.

Grids are evaluated in declared order (k outer, then alpha, then beta).
Neighbor lists are computed once per (source, orientation) at the largest
k and derived for every (k, alpha); the weighted neighborhood sums of a
(k, alpha) group serve its whole beta grid. Rankings are built from
replicate 0 of the training split and scored block by block against every
validation and test replicate, so full rankings are never materialized.
"""
import json
import logging
import os
import time
import warnings

import jinja2
import numpy as np
import pandas as pd

from .baselines import neighborhood_scores
from .config import GenParams
from .data import (SparseBinaryMatrix, has_saved_priors, load_splits,
                   read_dense_triplets)
from .datagen import build_priors, generate, synth_priors
from .metrics import (MetricReport, average_reports, higher_is_better,
                      mean_over_users, metric_name, parse_metric,
                      per_user_metrics)
from .neighbors import iter_sums
from .rankers import make_ranker
from .similarity import (derive_neighbors, load_neighbor_cache, raw_neighbors,
                         save_neighbor_cache, source_matrix)
from .utils import derive_seed, descending_order, parse_method, row_blocks

log = logging.getLogger(__name__)

EVAL_SPLITS = ('validation', 'test')
SWEEP_KINDS = ('neighbors', 'alpha_beta', 'unevenness', 'log_size')
DEFAULT_SWEEP_VALUES = {'unevenness': [0.5, 1.0, 2.0],
                        'log_size': [10, 25, 50, 100]}

TABLE_TEMPLATE = jinja2.Template("""\
{{ metric }} ({{ 'higher' if higher else 'lower' }} is better)
{{ header }}
{{ rule }}
{% for line in lines %}{{ line }}
{% endfor %}""")


class RunRecord(object):
    """
    Selected configuration of one method for one metric.

    Parameters
    ----------
    method: str
    metric: str
    config: dict
        Hyperparameters of the selected grid point.
    validation, test: dict metric -> float
        Metrics of the selected grid point.
    wall_time: float
        Seconds spent on the method's whole grid.
    seed: int
    grid_index: int
        Position of the selected point in the method's grid.
    """

    def __init__(self, method, metric, config, validation, test, wall_time,
                 seed, grid_index=0):
        self.method = method
        self.metric = metric
        self.config = dict(config)
        self.validation = dict(validation)
        self.test = dict(test)
        self.wall_time = wall_time
        self.seed = seed
        self.grid_index = grid_index

    @property
    def validation_value(self):
        return self.validation[self.metric]

    @property
    def test_value(self):
        return self.test[self.metric]

    def to_dict(self):
        return {'method': self.method, 'metric': self.metric,
                'config': self.config, 'validation': self.validation,
                'test': self.test, 'wall_time': self.wall_time,
                'seed': self.seed, 'grid_index': self.grid_index}

    def __repr__(self):
        return 'RunRecord({0}, {1}, config={2}, validation={3:.6g}, ' \
               'test={4:.6g})'.format(self.method, self.metric, self.config,
                                      self.validation_value, self.test_value)


def admissible_k(k_grid, n_rows, label='rows'):
    """
    k values usable with ``n_rows`` candidates (k <= n_rows - 1); dropped
    values are reported with a warning. When nothing remains,
    ``n_rows - 1`` is used.
    """
    limit = max(n_rows - 1, 0)
    kept = [k for k in k_grid if k <= limit]
    dropped = [k for k in k_grid if k > limit]
    if dropped:
        warnings.warn('k values {0} exceed the {1} other {2} and are '
                      'dropped'.format(dropped, limit, label))
    return kept or [limit]


def _orientation_rows(shape, orientation):
    return shape[0] if orientation == 'user' else shape[1]


def method_grid(method, spec, shape, k_grid=None, alpha_grid=None,
                beta_grid=None):
    """
    Hyperparameter points of a method in declared order.

    Parameters
    ----------
    method: str
    spec: SweepSpec
    shape: (n_users, n_items) of the training data
    k_grid, alpha_grid, beta_grid: lists, optional
        Override the SweepSpec grids.

    Returns
    -------
    list of dict
    """
    parsed = parse_method(method)
    family = parsed['family']
    if family == 'random':
        return [{'seed': spec.seed}]
    if family == 'pop':
        return [{}]
    if family == 'external':
        name = parsed['name']
        if name not in spec.external_scores:
            raise ValueError('no score file configured for "{0}"'
                             .format(method))
        return [{'path': spec.external_scores[name]}]

    k_grid = spec.k_grid if k_grid is None else k_grid
    alpha_grid = spec.alpha_grid if alpha_grid is None else alpha_grid
    beta_grid = spec.beta_grid if beta_grid is None else beta_grid
    orientation = parsed['orientation']
    ks = admissible_k(k_grid, _orientation_rows(shape, orientation),
                      orientation + 's')
    points = []
    for k in ks:
        for alpha in alpha_grid:
            if family == 'causal' and parsed['mix_own']:
                points.extend({'k': k, 'alpha': alpha, 'beta': beta}
                              for beta in beta_grid)
            else:
                points.append({'k': k, 'alpha': alpha})
    return points


class _Scorer(object):
    """Accumulates per-user metrics of ranking blocks for every
    evaluation replicate."""

    def __init__(self, eval_sets, cutoffs):
        self.eval_sets = eval_sets
        self.cutoffs = cutoffs

    def block(self, order, rows):
        return {(split, r): per_user_metrics(
                    order, ds.tau[rows.start:rows.stop], self.cutoffs)
                for split, datasets in self.eval_sets.items()
                for r, ds in enumerate(datasets)}

    def reports(self, blocks):
        """Per-split reports (averaged over replicates) from block
        results."""
        result = {}
        for split, datasets in self.eval_sets.items():
            per_replicate = []
            for r in range(len(datasets)):
                columns = {}
                for b in blocks:
                    for name, values in b[(split, r)].items():
                        columns.setdefault(name, []).append(values)
                columns = {name: np.concatenate(v)
                           for name, v in columns.items()}
                per_replicate.append(MetricReport(
                    {n: mean_over_users(columns.get(metric_name('cp', n), []))
                     for n in self.cutoffs},
                    mean_over_users(columns.get('CDCG', [])),
                    mean_over_users(columns.get('CAR', []))))
            result[split] = average_reports(per_replicate)
        return result


class GridRunner(object):
    """
    Evaluates method grids on one training split against validation and
    test replicates, sharing neighbor computations between grid points.
    """

    def __init__(self, spec, datasets, workers=None):
        if 'train' not in datasets or not datasets['train']:
            raise ValueError('missing split "train"')
        for split in EVAL_SPLITS:
            if split not in datasets or not datasets[split]:
                raise ValueError('missing split "{0}"'.format(split))
        self.spec = spec
        self.train = datasets['train'][0]
        self.workers = workers
        n_items = self.train.n_items
        cutoffs = spec.cutoffs
        kept = [n for n in cutoffs if n <= n_items]
        if len(kept) < len(cutoffs):
            warnings.warn('CP cutoffs {0} exceed the {1} items and are '
                          'dropped'.format(sorted(set(cutoffs) - set(kept)),
                                           n_items))
        self.metrics = [m for m in spec.metrics
                        if parse_metric(m)[0] != 'cp'
                        or parse_metric(m)[1] <= n_items]
        self.scorer = _Scorer({s: datasets[s] for s in EVAL_SPLITS}, kept)
        self._raw = {}

    def raw(self, source, orientation, k_max):
        """Raw neighbor lists, computed once per (source, orientation)."""
        key = (source, orientation)
        if key in self._raw and self._raw[key][1] >= k_max:
            return self._raw[key][0]
        cache_dir = self.spec.neighbor_cache_dir
        path = None
        if cache_dir:
            path = os.path.join(cache_dir, '{0}-{1}-{2}.txt'.format(
                source, orientation, k_max))
            if os.path.exists(path):
                raw, cached_k = load_neighbor_cache(path)
                if cached_k >= k_max:
                    self._raw[key] = (raw, cached_k)
                    return raw
        matrix = source_matrix(self.train.y, self.train.z, source,
                               orientation)
        raw = raw_neighbors(matrix, k_max, block_size=self.spec.block_size,
                            workers=self.workers)
        if path:
            if not os.path.isdir(cache_dir):
                os.makedirs(cache_dir)
            save_neighbor_cache(raw, path, k_max)
        log.info('built %s neighbors over %s (k_max=%d)', orientation,
                 source, k_max)
        self._raw[key] = (raw, k_max)
        return raw

    def _ranked_blocks(self, ranking):
        return [self.scorer.block(ranking.order[rows.start:rows.stop], rows)
                for rows in row_blocks(ranking.n_users,
                                       self.spec.block_size)]

    def _neighborhood_group(self, parsed, k, alpha, betas, raw):
        train = self.train
        if parsed['family'] == 'causal':
            mix_own = parsed['mix_own']
            neighbors = derive_neighbors(raw, k, alpha, mix_own)

            def func(sums):
                results = []
                for beta in betas:
                    tau = sums.tau_hat(beta, beta, mix_own)
                    results.append(self.scorer.block(descending_order(tau),
                                                     sums.rows))
                return results

            z = train.z
        else:
            mix_own = False
            neighbors = derive_neighbors(raw, k, alpha, False)

            def func(sums):
                scores = neighborhood_scores(sums)
                return [self.scorer.block(descending_order(scores),
                                          sums.rows)]

            z = SparseBinaryMatrix.from_coo([], [], train.shape)
        blocks = iter_sums(train.y, z, neighbors, parsed['orientation'],
                           mix_own, block_size=self.spec.block_size,
                           workers=self.workers, func=func)
        return [self.scorer.reports([b[n] for b in blocks])
                for n in range(len(betas))]

    def evaluate(self, method, points):
        """
        Validation and test reports of every grid point.

        Returns
        -------
        (list of dict split -> MetricReport, wall time in seconds)
        """
        start = time.perf_counter()
        parsed = parse_method(method)
        family = parsed['family']
        if family in ('causal', 'neighborhood'):
            source = parsed.get('source', 'outcomes')
            raw = self.raw(source, parsed['orientation'],
                           max(p['k'] for p in points))
            results = [None] * len(points)
            groups = {}
            for n, p in enumerate(points):
                groups.setdefault((p['k'], p['alpha']), []).append(n)
            for (k, alpha), members in groups.items():
                betas = [points[n].get('beta', 0.0) for n in members]
                reports = self._neighborhood_group(parsed, k, alpha, betas,
                                                   raw)
                for n, r in zip(members, reports):
                    results[n] = r
        else:
            results = []
            for p in points:
                params = dict(p)
                if family == 'external':
                    params['user_ids'] = self.train.user_ids
                    params['item_ids'] = self.train.item_ids
                ranker = make_ranker(method, **params)
                ranking = ranker.fit(self.train.y, self.train.z).rank()
                results.append(self.scorer.reports(
                    self._ranked_blocks(ranking)))
        wall = time.perf_counter() - start
        log.info('%s: %d grid points in %.2fs', method, len(points), wall)
        return results, wall


def select_best(values, higher=True):
    """Index of the best value; the first grid point wins ties."""
    values = list(values)
    best = max(values) if higher else min(values)
    return values.index(best)


def _select(method, points, results, metrics, wall, seed):
    records = []
    for metric in metrics:
        n = select_best([r['validation'][metric] for r in results],
                        higher_is_better(metric))
        records.append(RunRecord(method, metric, points[n],
                                 results[n]['validation'].to_dict(),
                                 results[n]['test'].to_dict(), wall, seed,
                                 grid_index=n))
    return records


def run_experiment(spec, datasets=None, workers=None):
    """
    For each method and metric, evaluate the method's grid on validation,
    select the best point (argmin for CAR) and report its test metrics.

    Parameters
    ----------
    spec: SweepSpec
    datasets: dict split -> list of GeneratedDataset, optional
        Loaded from ``spec.dataset_dir`` when omitted.

    Returns
    -------
    list of RunRecord, methods in SweepSpec order, metrics inner
    """
    if datasets is None:
        datasets = load_splits(spec.dataset_dir)
    runner = GridRunner(spec, datasets, workers=workers)
    records = []
    for method in spec.methods:
        points = method_grid(method, spec, runner.train.shape)
        results, wall = runner.evaluate(method, points)
        records.extend(_select(method, points, results, runner.metrics,
                               wall, spec.seed))
    return records


def _has_k(method):
    return parse_method(method)['family'] in ('causal', 'neighborhood')


def _best_row(base, points, results, metrics, split):
    row = dict(base)
    for metric in metrics:
        n = select_best([r['validation'][metric] for r in results],
                        higher_is_better(metric))
        row[metric] = results[n][split][metric]
        row[metric + ' config'] = json.dumps(points[n], sort_keys=True)
    return row


def _neighbors_sweep(spec, runner, values):
    rows = []
    for method in spec.methods:
        if not _has_k(method):
            log.info('%s has no neighbors; skipped in the neighbors sweep',
                     method)
            continue
        orientation = parse_method(method)['orientation']
        ks = admissible_k(values, _orientation_rows(runner.train.shape,
                                                    orientation),
                          orientation + 's')
        for k in ks:
            points = method_grid(method, spec, runner.train.shape,
                                 k_grid=[k])
            results, _ = runner.evaluate(method, points)
            rows.append(_best_row({'kind': 'neighbors', 'point': k,
                                   'method': method},
                                  points, results, runner.metrics,
                                  'validation'))
    return rows


def _alpha_beta_sweep(spec, runner):
    rows = []
    for method in spec.methods:
        if not _has_k(method):
            log.info('%s has no alpha; skipped in the alpha_beta sweep',
                     method)
            continue
        orientation = parse_method(method)['orientation']
        n_rows = _orientation_rows(runner.train.shape, orientation)
        k = spec.alpha_beta_k
        if k is None:
            k = admissible_k(spec.k_grid, n_rows, orientation + 's')[-1]
        else:
            k = admissible_k([k], n_rows, orientation + 's')[-1]
        points = method_grid(method, spec, runner.train.shape, k_grid=[k])
        results, _ = runner.evaluate(method, points)
        for p, r in zip(points, results):
            row = {'kind': 'alpha_beta', 'point': json.dumps(p,
                                                             sort_keys=True),
                   'method': method, 'k': p['k'], 'alpha': p['alpha'],
                   'beta': p.get('beta')}
            row.update(r['validation'].to_dict())
            rows.append(row)
    return rows


def prior_inputs(spec):
    """(r_hat, o_hat) from ``spec.priors_dir`` or synthetic ones."""
    if spec.priors_dir:
        r_hat = os.path.join(spec.priors_dir, 'r_hat.txt')
        if not os.path.exists(r_hat) and has_saved_priors(spec.priors_dir):
            raise ValueError(
                '{0} holds calibrated prior tables; regeneration sweeps '
                'need r_hat.txt and o_hat.txt'.format(spec.priors_dir))
        return (read_dense_triplets(r_hat),
                read_dense_triplets(os.path.join(spec.priors_dir,
                                                 'o_hat.txt')))
    return synth_priors(spec.n_users, spec.n_items, seed=spec.seed)


def _regenerating_sweep(kind, spec, values, workers):
    r_hat, o_hat = prior_inputs(spec)
    rows = []
    for n, value in enumerate(values):
        gen = GenParams.from_dict(spec.gen.to_dict())
        if kind == 'unevenness':
            gen.b = float(value)
        else:
            gen.target_recs_per_user = float(value)
        gen.seed = derive_seed(spec.seed, kind, n)
        priors = build_priors(r_hat, o_hat, gen)
        datasets = generate(priors, gen, workers=workers)
        runner = GridRunner(spec, datasets, workers=workers)
        for method in spec.methods:
            points = method_grid(method, spec, runner.train.shape)
            results, _ = runner.evaluate(method, points)
            row = _best_row({'kind': kind, 'point': value, 'method': method,
                             'seed': gen.seed},
                            points, results, runner.metrics, 'test')
            rows.append(row)
    return rows


def sensitivity_sweep(kind, spec, values=None, datasets=None, workers=None):
    """
    Hyperparameter and data-condition sweeps.

    Parameters
    ----------
    kind: str
        'neighbors': per k, validation metrics with alpha and beta
        optimized per metric.
        'alpha_beta': validation metrics of every (alpha, beta) at a fixed
        k (``spec.alpha_beta_k`` or the largest admissible k).
        'unevenness': per propensity unevenness b, test metrics of the
        validation-selected configs on regenerated data.
        'log_size': the same per target number of recommendations per user.
    spec: SweepSpec
    values: list, optional
        Sweep points; defaults to the k grid for 'neighbors'.

    Returns
    -------
    pandas.DataFrame, one row per (point, method) in declared order
    """
    if kind not in SWEEP_KINDS:
        raise ValueError('kind must be one of {0}, got "{1}"'
                         .format(list(SWEEP_KINDS), kind))
    if kind in ('unevenness', 'log_size'):
        if values is None:
            values = DEFAULT_SWEEP_VALUES[kind]
        rows = _regenerating_sweep(kind, spec, values, workers)
    else:
        if datasets is None:
            datasets = load_splits(spec.dataset_dir)
        runner = GridRunner(spec, datasets, workers=workers)
        if kind == 'neighbors':
            rows = _neighbors_sweep(spec, runner,
                                    spec.k_grid if values is None
                                    else [int(v) for v in values])
        else:
            rows = _alpha_beta_sweep(spec, runner)
    return pd.DataFrame(rows)


def _file_stem(metric):
    return metric.replace('@', '_at_')


def metric_table(records, metric):
    """Comparison frame of one metric with the best test value flagged."""
    rows = [r for r in records if r.metric == metric]
    frame = pd.DataFrame({
        'method': [r.method for r in rows],
        'config': [json.dumps(r.config, sort_keys=True) for r in rows],
        'validation': [r.validation_value for r in rows],
        'test': [r.test_value for r in rows]})
    best = select_best(frame['test'], higher_is_better(metric)) \
        if len(frame) else None
    frame['best'] = ['*' if n == best else '' for n in range(len(frame))]
    return frame


def render_table(frame, metric):
    """Aligned text rendering of a ``metric_table`` frame."""
    cells = [['method', 'validation', 'test', 'best', 'config']]
    for row in frame.itertuples(index=False):
        cells.append([row.method, '{0:.6f}'.format(row.validation),
                      '{0:.6f}'.format(row.test), row.best, row.config])
    widths = [max(len(c[n]) for c in cells) for n in range(len(cells[0]))]

    def line(c):
        return '  '.join(v.ljust(w) for v, w in zip(c, widths)).rstrip()

    return TABLE_TEMPLATE.render(
        metric=metric, higher=higher_is_better(metric),
        header=line(cells[0]), rule='-' * len(line(cells[0])),
        lines=[line(c) for c in cells[1:]])


def emit_tables(records, out_dir):
    """
    Write ``<metric>.csv`` and ``<metric>.txt`` per metric and a
    ``summary.csv`` of test values (methods x metrics).

    Returns
    -------
    list of written paths
    """
    records = list(records)
    if not records:
        raise ValueError('no records to emit')
    if not os.path.isdir(out_dir):
        os.makedirs(out_dir)
    metrics = []
    for r in records:
        if r.metric not in metrics:
            metrics.append(r.metric)
    paths = []
    for metric in metrics:
        frame = metric_table(records, metric)
        stem = os.path.join(out_dir, _file_stem(metric))
        frame.to_csv(stem + '.csv', index=False, float_format='%.17g')
        with open(stem + '.txt', 'w') as f:
            f.write(render_table(frame, metric))
        paths.extend([stem + '.csv', stem + '.txt'])

    methods = []
    for r in records:
        if r.method not in methods:
            methods.append(r.method)
    summary = pd.DataFrame({'method': methods})
    for metric in metrics:
        values = {r.method: r.test_value for r in records
                  if r.metric == metric}
        summary[metric] = [values.get(m, np.nan) for m in methods]
    path = os.path.join(out_dir, 'summary.csv')
    summary.to_csv(path, index=False, float_format='%.17g')
    paths.append(path)
    log.info('wrote %d table files to %s', len(paths), out_dir)
    return paths


def emit_sweep(rows, path):
    """Write sweep rows as CSV for external plotting."""
    frame = rows if isinstance(rows, pd.DataFrame) else pd.DataFrame(rows)
    directory = os.path.dirname(path)
    if directory and not os.path.isdir(directory):
        os.makedirs(directory)
    frame.to_csv(path, index=False, float_format='%.17g')
    return path
