import pytest

from checks import (SUITES, CheckResult, check_exchange_inequality, check_gradients, check_hard_fixpoints,
                    check_top_k, check_trace_inequality, run_checks)


def test_hard_fixpoint_suite():
    result = check_hard_fixpoints()
    assert result.passed, result.detail


def test_exchange_suite_on_fewer_instances():
    result = check_exchange_inequality(n_instances=50, seed=1)
    assert result.passed, result.detail


def test_trace_suite():
    assert check_trace_inequality(n_pairs=300, seed=2).passed


def test_gradient_suite():
    result = check_gradients(n_points=5)
    assert result.passed, result.detail
    assert 'regularized-matrix' in result.detail


def test_top_k_suite():
    assert check_top_k(n_vectors=2000, seed=3).passed


def test_run_checks_selects_suites():
    results = run_checks(['top-k', 'hard-fixpoint'])
    assert [r.name for r in results] == ['top-k', 'hard-fixpoint']
    assert all(isinstance(r, CheckResult) for r in results)
    with pytest.raises(KeyError):
        run_checks(['nope'])


@pytest.mark.slow
def test_all_suites_pass():
    results = run_checks()
    assert [r.name for r in results] == list(SUITES)
    assert all(r.passed for r in results), [r for r in results if not r.passed]
