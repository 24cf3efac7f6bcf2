import json
import os

import pandas as pd
import pytest

from ..app import main


def run(capsys, *argv):
    assert main(list(argv)) == 0
    return json.loads(capsys.readouterr().out)


def error(capsys, *argv):
    assert main(list(argv)) == 1
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


@pytest.fixture
def dataset_dir(tmp_path, capsys):
    out = str(tmp_path / 'data')
    run(capsys, 'generate', '--out=' + out, '--n-users=20', '--n-items=12',
        '--target=4', '--seed=1')
    return out


def test_generate(dataset_dir, capsys):
    names = sorted(os.listdir(dataset_dir))
    for split in ('train', 'validation', 'test'):
        assert split + '.manifest.json' in names
    assert 'priors' in names

    out = os.path.join(os.path.dirname(dataset_dir), 'again')
    result = run(capsys, 'generate', '--out=' + out, '--n-users=20',
                 '--n-items=12', '--target=4', '--seed=1')
    assert [os.path.basename(p) for p in result['manifests']] == \
        ['train.manifest.json', 'validation.manifest.json',
         'test.manifest.json']
    assert result['priors']['mean_recs_per_user'] == pytest.approx(4)
    with open(os.path.join(dataset_dir, 'train.y.txt')) as a, \
            open(os.path.join(out, 'train.y.txt')) as b:
        assert a.read() == b.read()


def test_generate_from_saved_priors(dataset_dir, tmp_path, capsys):
    saved = os.path.join(dataset_dir, 'priors')
    out = str(tmp_path / 'resampled')
    # --n-users and --target do not apply to calibrated tables
    result = run(capsys, 'generate', '--out=' + out, '--priors=' + saved,
                 '--seed=7', '--n-users=3', '--target=1')
    assert result['priors']['mean_recs_per_user'] == pytest.approx(4)
    assert [d['n_users'] for d in result['datasets']] == [20, 20, 20]
    for name in ('mu_t.txt', 'mu_c.txt', 'propensity.txt'):
        with open(os.path.join(saved, name)) as a, \
                open(os.path.join(out, 'priors', name)) as b:
            assert a.read() == b.read()
    with open(os.path.join(out, 'priors', 'priors.json')) as f:
        assert json.load(f)['seed'] == 7


def test_rank_then_evaluate(dataset_dir, tmp_path, capsys):
    ranking = str(tmp_path / 'ranking.csv')
    result = run(capsys, 'rank', '--method=CUBN-O',
                 '--dataset-dir=' + dataset_dir, '--out=' + ranking, '--k=3',
                 '--beta=1')
    assert result['method'] == 'CUBN-O'
    assert (result['n_users'], result['n_items']) == (20, 12)
    frame = pd.read_csv(ranking)
    assert frame.columns.tolist() == ['user', 'item', 'rank', 'tau_hat']
    assert len(frame) == 20 * 12

    report = str(tmp_path / 'report')
    result = run(capsys, 'evaluate', '--ranking=' + ranking,
                 '--dataset-dir=' + dataset_dir, '--metric=CP@5',
                 '--out=' + report)
    assert list(result) == ['CP@5']
    assert 0 <= result['CP@5'] <= 1
    with open(report + '.json') as f:
        assert json.load(f) == result


def test_rank_interaction_log(tmp_path, capsys):
    log = tmp_path / 'log.csv'
    log.write_text('user,item,y,z\n'
                   'u1,a,0,1\nu1,b,1,0\nu2,b,1,1\nu2,c,1,0\nu3,a,0,0\n')
    ranking = str(tmp_path / 'ranking.csv')
    result = run(capsys, 'rank', '--method=Pop', '--log=' + str(log),
                 '--out=' + ranking)
    assert (result['n_users'], result['n_items']) == (3, 3)
    frame = pd.read_csv(ranking, dtype={'user': str, 'item': str})
    assert frame['user'].tolist() == ['u1'] * 3 + ['u2'] * 3 + ['u3'] * 3
    assert frame['item'].tolist() == ['b', 'c', 'a'] * 3


def test_sweep_config_file(dataset_dir, tmp_path, capsys):
    config = tmp_path / 'sweep.json'
    config.write_text(json.dumps({'SweepSpec': {
        'methods': ['Pop', 'CUBN-O'], 'k_grid': [3],
        'alpha_grid': [2.0], 'beta_grid': [0.0, 1.0],
        'metrics': ['CP@5', 'CAR']}}))
    out = str(tmp_path / 'tables')
    result = run(capsys, 'sweep', '--config=' + str(config),
                 '--dataset-dir=' + dataset_dir, '--out=' + out,
                 '--SweepSpec.alpha_grid=0.5')
    assert result['kind'] == 'experiment'
    assert [os.path.basename(p) for p in result['files']] == \
        ['CP_at_5.csv', 'CP_at_5.txt', 'CAR.csv', 'CAR.txt', 'summary.csv']
    table = pd.read_csv(os.path.join(out, 'CP_at_5.csv'))
    assert table['method'].tolist() == ['Pop', 'CUBN-O']
    # the command line wins over the file
    assert json.loads(table['config'][1])['alpha'] == 0.5


def test_match(tmp_path, capsys):
    panel = tmp_path / 'panel.csv'
    panel.write_text('id,z,y,x1,x2,x3\n'
                     'a,1,1,1,0,0\nb,0,0,1,0,0\nc,1,1,0,1,1\nd,0,0,0,1,1\n')
    out = str(tmp_path / 'effects.csv')
    summary = run(capsys, 'match', '--panel=' + str(panel), '--out=' + out)
    assert summary == {'ATE': 1.0, 'ATT': 1.0, 'ATC': 1.0}
    assert pd.read_csv(out)['tau_hat'].tolist() == [1.0] * 4
    table = pd.read_csv(str(tmp_path / 'effects.summary.csv'))
    assert table['estimand'].tolist() == ['ATE', 'ATT', 'ATC']
    assert table['value'].tolist() == [1.0, 1.0, 1.0]


def test_errors(dataset_dir, tmp_path, capsys):
    assert error(capsys, 'generate')['message'] == '--out is required'
    result = error(capsys, 'rank', '--method=BPR',
                   '--dataset-dir=' + dataset_dir,
                   '--out=' + str(tmp_path / 'r.csv'))
    assert result['error'] == 'ValueError'
    assert 'subcommand' in error(capsys)['message']
    result = error(capsys, 'sweep', '--config=' + str(tmp_path / 'no.json'),
                   '--out=' + str(tmp_path / 'x'))
    assert 'config file not found' in result['message']
