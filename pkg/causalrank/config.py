"""
Configuration objects for rankers, data generation and sweeps.

All configs are traitlets Configurables, so they can be filled from a JSON
config file or the command line as well as from keyword arguments.
"""
import traitlets as T
from traitlets.config import Configurable

from .metrics import parse_metric
from .utils import parse_method, method_name


DEFAULT_K_GRID = [10, 30, 100, 300, 1000, 3000, 10000]
DEFAULT_ALPHA_GRID = [0.33, 0.5, 1.0, 2.0, 3.0, 5.0]
DEFAULT_BETA_GRID = [0.0, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0]
DEFAULT_METRICS = ['CP@10', 'CP@100', 'CDCG', 'CAR']
DEFAULT_METHODS = ['Random', 'Pop', 'UBN', 'IBN',
                   'CUBN-O', 'CUBN-T', 'CIBN-O', 'CIBN-T',
                   'CUBN-O-woM', 'CUBN-T-woM', 'CIBN-O-woM', 'CIBN-T-woM']


def _nonnegative(name):
    def check(self, proposal):
        value = proposal['value']
        if value is not None and value < 0:
            raise T.TraitError('{0} must be >= 0, got {1}'.format(name, value))
        return value
    return check


def _positive(name):
    def check(self, proposal):
        value = proposal['value']
        if value is not None and value <= 0:
            raise T.TraitError('{0} must be > 0, got {1}'.format(name, value))
        return value
    return check


class BaseConfig(Configurable):

    skip = []
    children = []

    def to_dict(self):
        result = {}
        for k in sorted(self.trait_names(config=True)):
            if k in self.skip:
                continue
            v = getattr(self, k)
            if isinstance(v, (list, tuple)):
                v = list(v)
            elif isinstance(v, dict):
                v = dict(v)
            result[k] = v
        for k in self.children:
            result[k] = getattr(self, k).to_dict()
        return result

    @classmethod
    def from_dict(cls, d, **kwargs):
        d = dict(d)
        traits = cls.class_traits()
        for k in cls.children:
            if k in d and isinstance(d[k], dict):
                d[k] = traits[k].klass.from_dict(d[k])
        d.update(kwargs)
        return cls(**d)

    def __repr__(self):
        return '{0}({1!r})'.format(self.__class__.__name__, self.to_dict())


class SimilarityConfig(BaseConfig):
    """Neighborhood definition: k, scaling exponent, similarity source and
    orientation."""

    k = T.Int(100, config=True,
              help='Number of neighbors, not counting the row itself.')
    alpha = T.Float(1.0, config=True,
                    help='Scaling exponent applied to cosine similarities.')
    source = T.Enum(['outcomes', 'treatments'], default_value='outcomes',
                    config=True,
                    help='Matrix the similarities are computed from.')
    orientation = T.Enum(['user', 'item'], default_value='user', config=True,
                         help='Neighbors among users or among items.')

    _valid_k = T.validate('k')(_nonnegative('k'))
    _valid_alpha = T.validate('alpha')(_positive('alpha'))


class RankerConfig(BaseConfig):
    """Configuration of a causality-aware neighborhood ranker."""

    sim = T.Instance(SimilarityConfig)
    beta_t = T.Float(0.0, config=True,
                     help='Shrinkage of the treated-outcome denominator.')
    beta_c = T.Float(0.0, config=True,
                     help='Shrinkage of the control-outcome denominator.')
    mix_own = T.Bool(True, config=True,
                     help='Mix the own observation into the estimates; '
                          'False gives the -woM variants.')

    children = ['sim']

    _valid_beta_t = T.validate('beta_t')(_nonnegative('beta_t'))
    _valid_beta_c = T.validate('beta_c')(_nonnegative('beta_c'))

    @T.default('sim')
    def _sim_default(self):
        return SimilarityConfig(parent=self)

    @classmethod
    def from_method(cls, method, k=100, alpha=1.0, beta=0.0, **kwargs):
        """Build a config from a method name such as "CUBN-T" or
        "CIBN-O-woM"; beta sets both shrinkage parameters."""
        parsed = parse_method(method)
        if parsed['family'] != 'causal':
            raise ValueError('"{0}" is not a causal neighborhood method'
                             .format(method))
        sim = SimilarityConfig(k=k, alpha=alpha, source=parsed['source'],
                               orientation=parsed['orientation'])
        kwargs.setdefault('beta_t', beta)
        kwargs.setdefault('beta_c', beta)
        return cls(sim=sim, mix_own=parsed['mix_own'], **kwargs)

    @property
    def method(self):
        return method_name({'family': 'causal',
                            'orientation': self.sim.orientation,
                            'source': self.sim.source,
                            'mix_own': self.mix_own})


class BaselineConfig(BaseConfig):
    """Configuration of the non-learned baselines."""

    method = T.Enum(['random', 'pop', 'ubn', 'ibn'], default_value='pop',
                    config=True)
    sim = T.Instance(SimilarityConfig)
    seed = T.Int(None, allow_none=True, config=True,
                 help='Seed of the random ranking; only for method=random.')

    children = ['sim']

    @T.default('sim')
    def _sim_default(self):
        return SimilarityConfig(parent=self)

    def __init__(self, **kwargs):
        super(BaselineConfig, self).__init__(**kwargs)
        self.check()

    def check(self):
        if self.method == 'random' and self.seed is None:
            raise T.TraitError('method=random requires a seed')
        if self.method != 'random' and self.seed is not None:
            raise T.TraitError('seed is only used by method=random, '
                               'got method={0}'.format(self.method))
        if self.method in ('ubn', 'ibn'):
            expected = 'user' if self.method == 'ubn' else 'item'
            if self.sim.orientation != expected:
                raise T.TraitError('{0} needs orientation={1}'
                                   .format(self.method, expected))
        return self


class GenParams(BaseConfig):
    """Parameters of the semi-synthetic data generator."""

    epsilon = T.Float(5.0, config=True,
                      help='Rating shift in mu_t = sigmoid(r_hat - epsilon).')
    a = T.Float(1.0, config=True,
                help='Propensity scale; overwritten by calibration when '
                     'target_recs_per_user is set.')
    b = T.Float(1.0, config=True, help='Propensity unevenness.')
    target_recs_per_user = T.Float(100.0, allow_none=True, config=True,
                                   help='Mean number of recommendations per '
                                        'user that a is calibrated to.')
    n_train = T.Int(1, config=True)
    n_val = T.Int(1, config=True)
    n_test = T.Int(1, config=True)
    seed = T.Int(0, config=True)

    _valid_a = T.validate('a')(_positive('a'))
    _valid_b = T.validate('b')(_nonnegative('b'))
    _valid_target = T.validate('target_recs_per_user')(
        _positive('target_recs_per_user'))

    @T.validate('n_train', 'n_val', 'n_test')
    def _valid_samples(self, proposal):
        if proposal['value'] < 1:
            raise T.TraitError('{0} must be >= 1, got {1}'
                               .format(proposal['trait'].name,
                                       proposal['value']))
        return proposal['value']

    def samples(self, split):
        return {'train': self.n_train,
                'validation': self.n_val,
                'test': self.n_test}[split]


class SweepSpec(BaseConfig):
    """Methods, hyperparameter grids and datasets of an experiment."""

    methods = T.List(T.Unicode(), default_value=list(DEFAULT_METHODS),
                     config=True)
    k_grid = T.List(T.Int(), default_value=list(DEFAULT_K_GRID), config=True)
    alpha_grid = T.List(T.Float(), default_value=list(DEFAULT_ALPHA_GRID),
                        config=True)
    beta_grid = T.List(T.Float(), default_value=list(DEFAULT_BETA_GRID),
                       config=True)
    metrics = T.List(T.Unicode(), default_value=list(DEFAULT_METRICS),
                     config=True)
    dataset_dir = T.Unicode('', config=True,
                            help='Directory holding train, validation and '
                                 'test manifests.')
    seed = T.Int(0, config=True)
    external_scores = T.Dict(value_trait=T.Unicode(), config=True,
                             help='name -> user,item,score CSV for '
                                  '"external:<name>" methods.')
    neighbor_cache_dir = T.Unicode('', config=True)
    alpha_beta_k = T.Int(None, allow_none=True, config=True,
                         help='k of the alpha x beta sweep; default is the '
                              'largest admissible value.')
    priors_dir = T.Unicode('', config=True,
                           help='Directory with r_hat.txt and o_hat.txt for '
                                'the regeneration sweeps.')
    n_users = T.Int(500, config=True,
                    help='Synthetic prior size when priors_dir is empty.')
    n_items = T.Int(300, config=True)
    block_size = T.Int(256, config=True,
                       help='Users per block when estimating effects.')
    gen = T.Instance(GenParams)

    children = ['gen']

    @T.default('gen')
    def _gen_default(self):
        return GenParams(parent=self)

    @T.validate('methods')
    def _valid_methods(self, proposal):
        names = [method_name(parse_method(m)) for m in proposal['value']]
        if not names:
            raise T.TraitError('at least one method is required')
        return names

    @T.validate('metrics')
    def _valid_metrics(self, proposal):
        if not proposal['value']:
            raise T.TraitError('at least one metric is required')
        for name in proposal['value']:
            parse_metric(name)
        return proposal['value']

    @T.validate('alpha_grid')
    def _valid_alpha_grid(self, proposal):
        if any(a <= 0 for a in proposal['value']):
            raise T.TraitError('alpha values must be > 0')
        return proposal['value']

    @T.validate('beta_grid')
    def _valid_beta_grid(self, proposal):
        if any(b < 0 for b in proposal['value']):
            raise T.TraitError('beta values must be >= 0')
        return proposal['value']

    @T.validate('k_grid')
    def _valid_k_grid(self, proposal):
        if any(k < 0 for k in proposal['value']):
            raise T.TraitError('k values must be >= 0')
        return proposal['value']

    @property
    def cutoffs(self):
        return sorted({parse_metric(m)[1] for m in self.metrics
                       if parse_metric(m)[0] == 'cp'})
