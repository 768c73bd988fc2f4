import numpy as np
import pytest
import yaml

from harness import read_csv
from instances import load_svmlight
from main import build_parser, main
from utils import ConfigManager


@pytest.fixture(autouse=True)
def isolated_config(tmp_path, monkeypatch):
    monkeypatch.setenv('REGSPARSE_CONFIG', str(tmp_path / 'absent.yaml'))
    yield
    ConfigManager.reset()


def write_config(path, **values):
    values.setdefault('misc', {'print_to_terminal': False, 'progress_bar': False})
    path.write_text(yaml.safe_dump(values))
    return str(path)


def test_parser_requires_a_command():
    with pytest.raises(SystemExit) as info:
        build_parser().parse_args([])
    assert info.value.code == 2


def test_solve_writes_csv(tmp_path, capsys):
    out = str(tmp_path / 'solve.csv')
    code = main(['solve', '--algo', 'regiht', '--s', '3', '--iters', '5', '--seed', '1', '--out', out,
                 '--config', write_config(tmp_path / 'c.yaml', m=20, n=40)])
    assert code == 0
    rows = read_csv(out)
    assert [r.iter for r in rows] == list(range(6))
    assert {r.seed for r in rows} == {1}
    assert 'complete' in capsys.readouterr().out


def test_solve_rejects_batches(tmp_path):
    config = write_config(tmp_path / 'c.yaml', m=20, n=40, seeds=[0, 1])
    assert main(['solve', '--config', config, '--iters', '1']) == 2


def test_bench_runs_config_batch(tmp_path):
    out = str(tmp_path / 'bench.csv')
    config = write_config(tmp_path / 'bench.yaml', algos=['iht', 'regiht'], seeds=[0, 1], m=20, n=40, s=3,
                          iters=5, out=out)
    assert main(['bench', config]) == 0
    assert len({r.run_id for r in read_csv(out)}) == 4


def test_bench_missing_config_is_usage_error(tmp_path):
    assert main(['bench', str(tmp_path / 'nope.yaml')]) == 2


def test_bench_bad_value_is_usage_error(tmp_path):
    config = write_config(tmp_path / 'bad.yaml', source='hard', kappa=2.5)
    assert main(['bench', config]) == 2


def test_bench_failed_run_exit_code(tmp_path):
    config = write_config(tmp_path / 'fail.yaml', m=20, n=40, s=3, s_prime=100, iters=2,
                          out=str(tmp_path / 'fail.csv'))
    assert main(['bench', config]) == 1


def test_gen_hard_writes_instance(tmp_path):
    out = str(tmp_path / 'hard.svm')
    assert main(['gen-hard', '--kappa', '4', '--s', '2', '--s-prime', '19', '--out', out]) == 0
    A, b = load_svmlight(out)
    assert A.shape == (42, 42)
    np.testing.assert_allclose(A.diagonal()[2:10], 2.0)


def test_gen_hard_invalid_parameters(tmp_path):
    assert main(['gen-hard', '--kappa', '4', '--s', '2', '--s-prime', '40', '--out', str(tmp_path / 'h.svm')]) == 2


def test_gen_recovery_roundtrip(tmp_path):
    out = str(tmp_path / 'rec.svm')
    assert main(['gen-recovery', '--m', '10', '--n', '12', '--s', '2', '--seed', '5', '--out', out]) == 0
    A, b = load_svmlight(out, n_features=12)
    assert A.shape == (10, 12)
    assert b.size == 10


def test_solve_on_generated_data(tmp_path):
    data = str(tmp_path / 'rec.svm')
    main(['gen-recovery', '--m', '15', '--n', '20', '--s', '2', '--out', data])
    out = str(tmp_path / 'fit.csv')
    config = write_config(tmp_path / 'c.yaml')
    assert main(['solve', '--config', config, '--data', data, '--s', '2', '--eta', '0.2', '--iters', '20',
                 '--algo', 'iht', '--out', out]) == 0
    rows = read_csv(out)
    assert rows[-1].f <= rows[0].f


def test_check_subset(capsys):
    assert main(['check', 'top-k']) == 0
    assert capsys.readouterr().out.startswith('PASS top-k')


def test_check_unknown_suite():
    assert main(['check', 'nope']) == 2
