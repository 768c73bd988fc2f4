"""End-to-end properties on desk-scale instances. Run with `pytest -m slow`."""
import numpy as np
import pytest

from checks import check_exchange_inequality, check_gradients, check_hard_fixpoints, check_top_k, check_trace_inequality
from harness import ExperimentConfig, best_records, run_experiment
from instances import gen_frobenius_instance
from lowrank import local_search_solve
from objectives import LeastSquares
from oracle import best_sparse_ls
from regiht import RegIhtConfig, regiht_solve

pytestmark = pytest.mark.slow


def best_final(records, algo):
    return min(r.final_f for r in records if r.algo == algo and not r.failed)


def test_hard_instance_fixpoints():
    assert check_hard_fixpoints().passed


def test_regiht_escapes_where_iht_is_stuck(quiet_config):
    cfg = ExperimentConfig(algos=('iht', 'regiht'), source='hard', kappa=20.0, s_values=(2,), s_prime=480,
                           start='bad', eta_spec='pow2', pow2_min=-4, pow2_max=0, iters=2000)
    records = run_experiment(cfg)
    assert not any(r.failed for r in records)
    initial = records[0].initial_f
    assert best_final(records, 'iht') == initial
    assert best_final(records, 'regiht') <= 0.3 * initial
    assert all(r.weight_mass_ok for r in records if r.algo == 'regiht')


@pytest.fixture(scope='module')
def theory_run():
    from utils import ConfigManager
    ConfigManager.reset()
    ConfigManager.initialize(config_path='absent.yaml')
    ConfigManager.set_config_value(False, 'misc', 'print_to_terminal')
    cfg = ExperimentConfig(algos=('regiht',), source='planted', n=600, kappa=2.0, s_values=(1,), theory_mode=True,
                           revert=True, eps=1e-6)
    [rec] = run_experiment(cfg)
    ConfigManager.reset()
    return rec


def test_theory_parameters_reach_target(theory_run):
    assert not theory_run.failed, theory_run.error
    assert theory_run.final_f <= 1e-6 * theory_run.initial_f


def test_theory_run_satisfies_one_step_dichotomy(theory_run):
    assert theory_run.dichotomy_violations == 0


def test_theory_run_bookkeeping(theory_run):
    assert theory_run.weight_mass_ok
    g = np.array([row.g for row in theory_run.rows])
    assert np.all(np.diff(g) <= 1e-9 * (1.0 + np.abs(g[:-1])))


def test_exchange_inequality():
    assert check_exchange_inequality(n_instances=500).passed


def test_trace_inequality():
    assert check_trace_inequality(n_pairs=1000).passed


def test_lowrank_solve(quiet_config):
    obj = gen_frobenius_instance(32, 32, 1, 1.0, seed=0)
    steps = []

    def watch(t, old, new, tag):
        new.check_invariants()
        steps.append(new.weight_deficit - old.weight_deficit)

    f0 = obj.value(np.zeros((32, 32)))
    A, trace = local_search_solve(obj, 1, 256, 0.0, 1e-6 * f0, 500, callback=watch)
    assert trace.status == 'target_reached'
    assert obj.value(A) <= 1e-6 * f0
    assert all(d <= 1.0 + 1e-9 for d in steps)


def test_gradient_checks():
    assert check_gradients().passed


def test_unconstrained_regiht_matches_oracle(quiet_config):
    rng = np.random.default_rng(2024)
    for _ in range(50):
        n = int(rng.integers(3, 11))
        A = rng.standard_normal((30, n))
        b = rng.standard_normal(30)
        obj = LeastSquares(A, b)
        cfg = RegIhtConfig(s_prime=n, eta=1.0 / obj.beta_estimate, c=float(n), T=3000)
        x, _ = regiht_solve(obj, np.zeros(n), cfg)
        assert abs(obj.value(x) - best_sparse_ls(A, b, n).best_value) <= 1e-6


def test_thresholding_matches_reference():
    assert check_top_k(n_vectors=10_000).passed


def test_regiht_beats_iht_on_signal_recovery(quiet_config):
    cfg = ExperimentConfig(algos=('iht', 'regiht'), source='recovery', m=100, n=800, s_values=(10, 30, 60),
                           seeds=tuple(range(20)), iters=240, eta_spec='mult1.2', mult_count=20, workers=4)
    best = best_records(run_experiment(cfg))
    for s in (10, 30, 60):
        iht = [r.final_f for r in best if r.algo == 'iht' and r.s == s]
        reg = [r.final_f for r in best if r.algo == 'regiht' and r.s == s]
        assert len(iht) == len(reg) == 20
        assert np.mean(reg) <= np.mean(iht)
