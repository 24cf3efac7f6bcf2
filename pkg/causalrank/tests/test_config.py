import pytest
import traitlets as T
from traitlets.config import Config

from ..config import (DEFAULT_ALPHA_GRID, DEFAULT_BETA_GRID, DEFAULT_K_GRID,
                      BaselineConfig, GenParams, RankerConfig,
                      SimilarityConfig, SweepSpec)


def test_similarity_config_validation():
    cfg = SimilarityConfig(k=10, alpha=0.5)
    assert cfg.k == 10 and cfg.alpha == 0.5
    with pytest.raises(T.TraitError):
        SimilarityConfig(alpha=0)
    with pytest.raises(T.TraitError):
        SimilarityConfig(k=-1)
    with pytest.raises(T.TraitError):
        SimilarityConfig(source='pearson')


def test_ranker_config_from_method():
    cfg = RankerConfig.from_method('CIBN-T-woM', k=30, alpha=2.0, beta=3.0)
    assert cfg.sim.orientation == 'item'
    assert cfg.sim.source == 'treatments'
    assert cfg.sim.k == 30
    assert not cfg.mix_own
    assert cfg.beta_t == cfg.beta_c == 3.0
    assert cfg.method == 'CIBN-T-woM'
    with pytest.raises(ValueError):
        RankerConfig.from_method('UBN')
    with pytest.raises(T.TraitError):
        RankerConfig(beta_t=-1)


def test_ranker_config_to_from_dict():
    cfg = RankerConfig.from_method('CUBN-O', k=10, beta=1.0)
    d = cfg.to_dict()
    assert d['sim']['k'] == 10
    assert d['beta_c'] == 1.0
    again = RankerConfig.from_dict(d)
    assert again.to_dict() == d


def test_child_config_reaches_similarity():
    c = Config({'SimilarityConfig': {'k': 7}})
    cfg = RankerConfig(config=c)
    assert cfg.sim.k == 7


def test_baseline_config_seed_rules():
    assert BaselineConfig(method='random', seed=3).seed == 3
    with pytest.raises(T.TraitError):
        BaselineConfig(method='random')
    with pytest.raises(T.TraitError):
        BaselineConfig(method='pop', seed=1)
    with pytest.raises(T.TraitError):
        BaselineConfig(method='ibn',
                       sim=SimilarityConfig(orientation='user'))


def test_gen_params_defaults():
    params = GenParams()
    assert params.epsilon == 5.0
    assert params.b == 1.0
    assert params.target_recs_per_user == 100
    assert params.samples('train') == 1
    with pytest.raises(T.TraitError):
        GenParams(a=0)
    with pytest.raises(T.TraitError):
        GenParams(n_val=0)


def test_sweep_spec_defaults_and_validation():
    spec = SweepSpec()
    assert spec.k_grid == DEFAULT_K_GRID
    assert spec.alpha_grid == DEFAULT_ALPHA_GRID
    assert spec.beta_grid == DEFAULT_BETA_GRID
    assert spec.cutoffs == [10, 100]
    assert SweepSpec(methods=['cubn-o']).methods == ['CUBN-O']
    with pytest.raises(ValueError):
        SweepSpec(methods=['nope'])
    with pytest.raises(ValueError):
        SweepSpec(metrics=['NDCG'])
    with pytest.raises(T.TraitError):
        SweepSpec(alpha_grid=[0.0])
    with pytest.raises(T.TraitError):
        SweepSpec(beta_grid=[-1.0])
