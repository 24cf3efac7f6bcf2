"""
Command-line interface.

``causalrank <subcommand> [options]`` with subcommands generate, rank,
evaluate, sweep and match. Options may also be given in a JSON config file
(``--config``); command-line values take precedence over the file.
"""
import json
import logging
import os
import sys

import pandas as pd
import traitlets as T
from traitlets.config import Application

from .config import (DEFAULT_METRICS, GenParams, RankerConfig,
                     SimilarityConfig, SweepSpec)
from .data import (has_saved_priors, load_log, load_priors, load_splits,
                   read_dense_triplets, save_dataset, save_priors,
                   to_matrices)
from .datagen import (build_priors, dataset_stats, generate, prior_stats,
                      synth_priors)
from .harness import (SWEEP_KINDS, emit_sweep, emit_tables, run_experiment,
                      sensitivity_sweep)
from .matching import estimate_effects, load_panel
from .metrics import average_reports, evaluate, parse_metric
from .rankers import Ranking, make_ranker
from .utils import parse_method

__all__ = ['CausalRankApp', 'main']

COMMON_ALIASES = {
    'config': 'Command.config_file',
    'seed': 'Command.seed',
    'dataset-dir': 'Command.dataset_dir',
    'method': 'Command.method',
    'metric': 'Command.metric',
    'out': 'Command.out',
    'log-level': 'Application.log_level',
}


def _dump(obj, stream=None):
    stream = stream or sys.stdout
    stream.write(json.dumps(obj, sort_keys=True, indent=2) + '\n')


class Command(Application):
    """Shared options and config-file handling of the subcommands."""

    config_file = T.Unicode('', config=True,
                            help='JSON config file; flags override it.')
    seed = T.Int(None, allow_none=True, config=True, help='Base seed.')
    dataset_dir = T.Unicode('', config=True,
                            help='Directory of dataset manifests.')
    method = T.List(T.Unicode(), config=True, help='Ranking method(s).')
    metric = T.List(T.Unicode(), config=True, help='Metric name(s).')
    out = T.Unicode('', config=True, help='Output path.')

    aliases = dict(COMMON_ALIASES)
    classes = [SweepSpec, GenParams, RankerConfig, SimilarityConfig]

    def initialize(self, argv=None):
        self.parse_command_line(argv)
        if self.config_file:
            directory, name = os.path.split(os.path.abspath(self.config_file))
            if not os.path.exists(self.config_file):
                raise ValueError('config file not found: {0}'
                                 .format(self.config_file))
            self.load_config_file(name, path=directory)
            # command-line values win over the file
            self.update_config(self.cli_config)
        _route_logging(self.log_level)

    def require(self, name):
        value = getattr(self, name)
        if not value:
            raise ValueError('--{0} is required'.format(
                name.replace('_', '-')))
        return value


def _route_logging(level):
    logger = logging.getLogger('causalrank')
    logger.setLevel(level)
    if not logger.handlers:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter(
            '[%(name)s %(levelname)s] %(message)s'))
        logger.addHandler(handler)


class GenerateCommand(Command):
    description = ('Generate train, validation and test datasets from prior '
                   'tables (r_hat.txt and o_hat.txt under --priors), from '
                   'calibrated tables saved by an earlier run, or from '
                   'synthetic priors.')

    priors = T.Unicode('', config=True,
                       help=('Directory holding r_hat.txt and o_hat.txt, '
                             'or the priors/ directory of an earlier run.'))
    n_users = T.Int(500, config=True)
    n_items = T.Int(300, config=True)

    aliases = dict(COMMON_ALIASES, **{
        'priors': 'GenerateCommand.priors',
        'n-users': 'GenerateCommand.n_users',
        'n-items': 'GenerateCommand.n_items',
        'epsilon': 'GenParams.epsilon',
        'a': 'GenParams.a',
        'b': 'GenParams.b',
        'target': 'GenParams.target_recs_per_user',
        'n-train': 'GenParams.n_train',
        'n-val': 'GenParams.n_val',
        'n-test': 'GenParams.n_test'})

    def _read_priors(self, params):
        if not self.priors:
            r_hat, o_hat = synth_priors(self.n_users, self.n_items,
                                        seed=params.seed)
        elif has_saved_priors(self.priors):
            # already calibrated; only the sampling seed changes
            saved = load_priors(self.priors)
            saved.params['seed'] = params.seed
            return saved
        else:
            r_hat = read_dense_triplets(os.path.join(self.priors,
                                                     'r_hat.txt'))
            o_hat = read_dense_triplets(os.path.join(self.priors,
                                                     'o_hat.txt'))
        return build_priors(r_hat, o_hat, params)

    def start(self):
        out = self.require('out')
        params = GenParams(parent=self)
        if self.seed is not None:
            params.seed = self.seed
        priors = self._read_priors(params)
        datasets = generate(priors, params)
        manifests = [save_dataset(ds, out)
                     for split in datasets for ds in datasets[split]]
        save_priors(priors, os.path.join(out, 'priors'))
        _dump({'manifests': manifests,
               'priors': prior_stats(priors),
               'datasets': [dataset_stats(ds) for split in datasets
                            for ds in datasets[split]]})


class RankCommand(Command):
    description = ('Rank all items for every user of a dataset split, or of '
                   'a user,item,y,z interaction log (--log).')

    split = T.Enum(['train', 'validation', 'test'], default_value='train',
                   config=True)
    k = T.Int(100, config=True)
    alpha = T.Float(1.0, config=True)
    beta = T.Float(0.0, config=True)
    scores = T.Unicode('', config=True,
                       help='user,item,score CSV for external:<name>.')
    log_path = T.Unicode('', config=True,
                         help='user,item,y,z log (.csv or .tsv) to rank '
                              'instead of a dataset split.')

    aliases = dict(COMMON_ALIASES, **{
        'split': 'RankCommand.split',
        'k': 'RankCommand.k',
        'alpha': 'RankCommand.alpha',
        'beta': 'RankCommand.beta',
        'scores': 'RankCommand.scores',
        'log': 'RankCommand.log_path'})

    def params(self, method):
        family = parse_method(method)['family']
        if family == 'random':
            return {'seed': 0 if self.seed is None else self.seed}
        if family == 'external':
            return {'path': self.require('scores')}
        if family == 'pop':
            return {}
        params = {'k': self.k, 'alpha': self.alpha}
        if family == 'causal':
            params['beta'] = self.beta
        return params

    def start(self):
        methods = self.require('method')
        if len(methods) != 1:
            raise ValueError('rank takes exactly one --method')
        out = self.require('out')
        if self.log_path:
            source = load_log(self.log_path)
            y, z = to_matrices(source)
            name = self.log_path
        else:
            source = load_splits(self.require('dataset_dir'),
                                 required=[self.split])[self.split][0]
            y, z, name = source.y, source.z, source.name
        params = self.params(methods[0])
        if parse_method(methods[0])['family'] == 'external':
            params.update(user_ids=source.user_ids, item_ids=source.item_ids)
        ranker = make_ranker(methods[0], **params)
        ranking = ranker.fit(y, z).rank(keep_scores=True)
        ranking.write_csv(out, source.user_ids, source.item_ids)
        _dump({'method': ranking.method, 'split': name,
               'n_users': ranking.n_users, 'n_items': ranking.n_items,
               'out': out})


class EvaluateCommand(Command):
    description = ('Evaluate a ranked-list CSV (user,item,rank) against the '
                   'ground-truth effects of a split.')

    ranking = T.Unicode('', config=True, help='Ranked-list CSV.')
    split = T.Enum(['validation', 'test'], default_value='test', config=True)
    per_user = T.Bool(False, config=True,
                      help='Also write per-user metrics.')

    aliases = dict(COMMON_ALIASES, **{
        'ranking': 'EvaluateCommand.ranking',
        'split': 'EvaluateCommand.split'})
    flags = {'per-user': ({'EvaluateCommand': {'per_user': True}},
                          'Write per-user metrics.')}

    def start(self):
        metrics = self.metric or list(DEFAULT_METRICS)
        cutoffs = sorted({parse_metric(m)[1] for m in metrics
                          if parse_metric(m)[0] == 'cp'})
        datasets = load_splits(self.require('dataset_dir'),
                               required=[self.split])[self.split]
        first = datasets[0]
        ranking = Ranking.read_csv(
            self.require('ranking'),
            {u: n for n, u in enumerate(first.user_ids)},
            {i: n for n, i in enumerate(first.item_ids)})
        reports = [evaluate(ranking, ds, cutoffs, per_user=self.per_user)
                   for ds in datasets]
        report = average_reports(reports) if len(reports) > 1 else reports[0]
        result = {m: report[m] for m in metrics
                  if parse_metric(m)[0] != 'cp'
                  or parse_metric(m)[1] in report.cp_at}
        if self.out:
            with open(self.out + '.json', 'w') as f:
                _dump(result, f)
            report.to_frame().to_csv(self.out + '.csv', index=False,
                                     float_format='%.17g')
            if self.per_user:
                for ds, r in zip(datasets, reports):
                    r.per_user.to_csv('{0}.{1}.per_user.csv'.format(
                        self.out, ds.name), index=False, float_format='%.17g')
        _dump(result)


class SweepCommand(Command):
    description = ('Run the validation-selected experiment or a '
                   'sensitivity sweep and write result tables.')

    kind = T.Enum(('experiment',) + SWEEP_KINDS, default_value='experiment',
                  config=True)
    values = T.List(T.Float(), default_value=None, allow_none=True,
                    config=True, help='Sweep points.')

    aliases = dict(COMMON_ALIASES, **{
        'kind': 'SweepCommand.kind',
        'values': 'SweepCommand.values'})

    def spec(self):
        spec = SweepSpec(parent=self)
        if self.seed is not None:
            spec.seed = self.seed
        if self.dataset_dir:
            spec.dataset_dir = self.dataset_dir
        if self.method:
            spec.methods = list(self.method)
        if self.metric:
            spec.metrics = list(self.metric)
        return spec

    def start(self):
        out = self.require('out')
        spec = self.spec()
        if self.kind == 'experiment':
            records = run_experiment(spec)
            paths = emit_tables(records, out)
        else:
            rows = sensitivity_sweep(self.kind, spec, values=self.values)
            paths = [emit_sweep(rows, os.path.join(out,
                                                   self.kind + '.csv'))]
        _dump({'kind': self.kind, 'files': paths})


def summary_path(out):
    """``effects.csv`` -> ``effects.summary.csv``."""
    return os.path.splitext(out)[0] + '.summary.csv'


class MatchCommand(Command):
    description = ('Matching estimator over a subject panel CSV '
                   '(id, z, y, covariates...). Writes per-subject effects '
                   'to --out and ATE, ATT, ATC to <out>.summary.csv.')

    panel = T.Unicode('', config=True, help='Subject panel CSV.')
    m = T.Int(1, config=True, help='Matches per treatment group.')

    aliases = dict(COMMON_ALIASES, **{
        'panel': 'MatchCommand.panel',
        'm': 'MatchCommand.m'})

    def start(self):
        panel = load_panel(self.require('panel'))
        frame, summary = estimate_effects(panel, m=self.m)
        if self.out:
            frame.to_csv(self.out, index=False, float_format='%.17g')
            pd.DataFrame({'estimand': list(summary),
                          'value': list(summary.values())}).to_csv(
                summary_path(self.out), index=False, float_format='%.17g')
        _dump(summary)


class CausalRankApp(Application):
    name = 'causalrank'
    description = ('Causal-effect ranking with neighborhood matching '
                   'estimators.')

    subcommands = {
        'generate': (GenerateCommand, GenerateCommand.description),
        'rank': (RankCommand, RankCommand.description),
        'evaluate': (EvaluateCommand, EvaluateCommand.description),
        'sweep': (SweepCommand, SweepCommand.description),
        'match': (MatchCommand, MatchCommand.description),
    }

    def start(self):
        if self.subapp is None:
            raise ValueError('a subcommand is required: {0}'.format(
                ', '.join(sorted(self.subcommands))))
        return self.subapp.start()


def main(argv=None):
    """Run the CLI; returns the process exit code."""
    # subcommands are singletons; drop state left by an earlier run
    for command, _ in CausalRankApp.subcommands.values():
        command.clear_instance()
    app = CausalRankApp()
    try:
        app.initialize(argv)
        app.start()
    except (ValueError, T.TraitError, OSError, KeyError) as exc:
        sys.stderr.write(json.dumps({'error': type(exc).__name__,
                                     'message': str(exc)},
                                    sort_keys=True) + '\n')
        return 1
    return 0
