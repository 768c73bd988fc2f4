import math

import numpy as np
import pytest

from errors import ConfigError, ParseError
from harness import (CSV_HEADER, SUMMARY_HEADER, CsvRow, ExperimentConfig, ExperimentRunner, RunRecord,
                     best_records, read_csv, relative_excess, run_experiment, stderr_bands, summary_path,
                     write_csv)
from instances import gen_recovery_instance


def small_recovery(**kwargs):
    base = dict(source='recovery', m=20, n=40, s_values=(3,), iters=10, seeds=(0,))
    base.update(kwargs)
    return ExperimentConfig(**base)


def record(algo, s, seed, final_f, eta=0.5, c=None, excess=None):
    rec = RunRecord(f'run-{algo}-{s}-{seed}-{eta}', algo, seed, s, eta=eta, c=c)
    rec.rows = [CsvRow(rec.run_id, algo, seed, eta, c, 0, 10.0, None, None, 0, None, ''),
                CsvRow(rec.run_id, algo, seed, eta, c, 1, final_f, excess, None, s, None, '')]
    return rec


def test_csv_header_is_exact():
    assert ','.join(CSV_HEADER) == 'run_id,algo,seed,eta,c,iter,f,excess,g,support,weight_mass,branch'


def test_config_hash_is_stable_and_ignores_output():
    a = small_recovery(out='a.csv', workers=1)
    b = small_recovery(out='b.csv', workers=4)
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != small_recovery(iters=11).config_hash()
    assert len(a.config_hash()) == 64


@pytest.mark.parametrize('kwargs', [
    dict(algos=('bogus',)),
    dict(seeds=()),
    dict(source='svmlight'),
    dict(path='data.svm'),
    dict(start='bad'),
    dict(task='logistic'),
    dict(source='hard', kappa=2.5),
    dict(s_values=(0,)),
    dict(eta_spec='pow2', pow2_min=3, pow2_max=2),
    dict(c_spec='fixed'),
    dict(iters=-1),
    dict(algos=('lowrank',), lowrank_m=200),
])
def test_config_validation(kwargs):
    with pytest.raises(ConfigError):
        small_recovery(**kwargs).validate()


def test_from_config(quiet_config):
    quiet_config.apply_overrides({'algos': ['iht', 'regiht'], 's_values': [2, 4], 'n': 30, 'm': 10})
    cfg = ExperimentConfig.from_config()
    assert cfg.algos == ('iht', 'regiht')
    assert cfg.s_values == (2, 4)
    assert cfg.n == 30


def test_step_sizes_use_problem_base(quiet_config):
    runner = ExperimentRunner(small_recovery(eta_spec='pow2', pow2_min=-1, pow2_max=2))
    problem = runner.problem(3, 0)
    assert problem.step_base == pytest.approx(1.0 / 3.0)
    np.testing.assert_allclose(runner.step_sizes(problem), [1 / 6, 1 / 3, 2 / 3, 4 / 3])
    mult = ExperimentRunner(small_recovery(eta_spec='mult1.2', mult_count=3))
    np.testing.assert_allclose(mult.step_sizes(problem), [1 / 3, 1.2 / 3, 1.44 / 3])


def test_hard_instance_steps_scale_with_kappa(quiet_config):
    runner = ExperimentRunner(ExperimentConfig(source='hard', kappa=4.0, s_values=(2,), s_prime=19, start='bad',
                                               eta_spec='pow2', pow2_min=-2, pow2_max=0, iters=5))
    problem = runner.problem(2, 0)
    assert problem.step_base == pytest.approx(0.25)
    np.testing.assert_allclose(runner.step_sizes(problem), [1 / 16, 1 / 8, 1 / 4])


def test_recovery_problem_keeps_planted_signal(quiet_config):
    runner = ExperimentRunner(small_recovery(m=100, n=800, s_values=(10,)))
    problem = runner.problem(10, 0)
    design = problem.objective.A
    x_true = gen_recovery_instance(100, 800, 10, 0).x_true
    z = x_true[design.kept] * design.scales
    assert problem.objective.value(z) <= 1e-20 * problem.f0
    assert problem.f_base < 1e-10


def test_plan_expands_sweeps(quiet_config):
    cfg = small_recovery(algos=('iht', 'regiht'), seeds=(0, 1), eta_spec='pow2', pow2_max=2, c_values=(0.1, 0.2))
    jobs = ExperimentRunner(cfg).plan()
    # 2 seeds x 3 steps x (1 IHT + 2 RegIHT weight step sizes)
    assert len(jobs) == 18
    assert len({job.run_id for job in jobs}) == 18


def test_zero_iterations_give_one_row(quiet_config):
    records = run_experiment(small_recovery(iters=0, eta=0.25))
    assert len(records) == 1
    rec = records[0]
    assert rec.status == 'complete'
    assert len(rec.rows) == 1
    assert rec.rows[0].iter == 0
    assert rec.rows[0].excess >= -1e-12


def test_runs_write_csv_and_summary(quiet_config, tmp_path):
    out = str(tmp_path / 'runs.csv')
    cfg = small_recovery(algos=('iht', 'regiht'), seeds=(0, 1), out=out)
    records = run_experiment(cfg)
    assert not any(r.failed for r in records)
    rows = read_csv(out)
    assert len(rows) == sum(len(r.rows) for r in records)
    assert {row.algo for row in rows} == {'iht', 'regiht'}
    assert all(r.weight_mass_ok for r in records if r.algo == 'regiht')
    with open(summary_path(out)) as file:
        assert file.readline().strip() == ','.join(SUMMARY_HEADER)


def test_failed_run_does_not_abort_batch(quiet_config, capsys):
    cfg = small_recovery(algos=('iht', 'regiht'), s_prime=100)
    records = run_experiment(cfg)
    assert len(records) == 2
    assert all(r.failed for r in records)
    assert all('InvalidArgumentError' in r.error for r in records)


def test_lowrank_run(quiet_config):
    cfg = ExperimentConfig(algos=('lowrank',), lowrank_m=5, lowrank_n=4, lowrank_r=1, lowrank_max_iters=20)
    [rec] = run_experiment(cfg)
    assert rec.status == 'target_reached'
    assert rec.rows[-1].f <= 1e-6 * rec.rows[0].f
    assert sum(rec.branch_counts.values()) == len(rec.rows) - 1


def test_csv_roundtrip(tmp_path):
    rows = [CsvRow('r1', 'regiht', 0, 0.1, 0.25, 0, 1.0 / 3.0, None, 2.5, 0, 10.0, 'start'),
            CsvRow('r1', 'regiht', 0, 0.1, 0.25, 1, 0.1, 1e-300, 0.2, 3, 9.75, 'step')]
    path = str(tmp_path / 'rows.csv')
    write_csv(path, rows)
    assert read_csv(path) == rows


def test_read_csv_rejects_malformed(tmp_path):
    path = tmp_path / 'bad.csv'
    path.write_text('a,b\n')
    with pytest.raises(ParseError):
        read_csv(str(path))
    path.write_text(','.join(CSV_HEADER) + '\nr1,iht,0\n')
    with pytest.raises(ParseError) as info:
        read_csv(str(path))
    assert info.value.line == 2


def test_stderr_bands_identical_records():
    rows = stderr_bands([record('iht', 3, seed, 2.0) for seed in range(4)])
    assert len(rows) == 1
    assert rows[0].mean_f == 2.0
    assert rows[0].stderr == 0.0


def test_stderr_bands_two_values():
    [row] = stderr_bands([record('iht', 3, 0, 1.0), record('iht', 3, 1, 3.0)])
    assert row.mean_f == pytest.approx(2.0)
    assert row.stderr == pytest.approx(1.0)
    assert not row.flagged


def test_stderr_bands_flag_single_seed(quiet_config):
    [row] = stderr_bands([record('iht', 3, 0, 1.0)])
    assert row.stderr is None
    assert row.flagged


def test_stderr_bands_match_recomputation():
    rng = np.random.default_rng(0)
    values = rng.uniform(1, 2, size=20)
    [row] = stderr_bands([record('regiht', 5, i, v, c=0.5) for i, v in enumerate(values)])
    assert row.mean_f == pytest.approx(values.mean())
    assert row.stderr == pytest.approx(values.std(ddof=1) / math.sqrt(20))


def test_best_records_and_relative_excess():
    records = [record('iht', 3, 0, 5.0, eta=0.5, excess=0.4), record('iht', 3, 0, 4.0, eta=1.0, excess=0.2),
               record('regiht', 3, 0, 3.0, eta=0.5, c=0.1, excess=0.1),
               record('regiht', 3, 0, 3.5, eta=1.0, c=0.1, excess=0.15)]
    best = best_records(records)
    assert sorted((r.algo, r.eta) for r in best) == [('iht', 1.0), ('regiht', 0.5)]
    assert relative_excess(records) == {3: pytest.approx(0.5)}


def test_summary_path():
    assert summary_path('out/results.csv') == 'out/results.summary.csv'
    assert summary_path('results') == 'results.summary.csv'
