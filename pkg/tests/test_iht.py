import numpy as np
import pytest

from checks import exchange_instance, legal_swaps
from errors import InvalidArgumentError
from iht import (IhtConfig, SolverTrace, TraceRecord, exchange_inequality_check, exchange_sets, iht_solve, iht_step,
                 is_fixpoint)
from instances import gen_hard_instance
from linops import support
from objectives import LeastSquares


def diagonal_ls():
    return LeastSquares(np.diag([1.0, 2.0, 3.0]), np.array([1.0, 2.0, 3.0]))


def test_step_thresholds_gradient_step():
    obj = diagonal_ls()
    x = iht_step(obj, np.zeros(3), IhtConfig(s_prime=1, eta=0.1))
    # x - eta grad = 0.1 * [1, 4, 9]
    np.testing.assert_allclose(x, [0.0, 0.0, 0.9])


def test_step_rejects_dense_iterate():
    with pytest.raises(InvalidArgumentError):
        iht_step(diagonal_ls(), np.ones(3), IhtConfig(s_prime=2, eta=0.1))


def test_config_validation():
    with pytest.raises(InvalidArgumentError):
        IhtConfig(s_prime=4, eta=0.1).validate(3)
    with pytest.raises(InvalidArgumentError):
        IhtConfig(s_prime=1, eta=0.0).validate(3)
    with pytest.raises(InvalidArgumentError):
        IhtConfig(s_prime=1, eta=np.inf).validate(3)


def test_solve_with_zero_iterations_records_start(quiet_config):
    x, trace = iht_solve(diagonal_ls(), np.zeros(3), IhtConfig(1, 0.1, max_iters=0))
    assert len(trace) == 1
    assert trace.records[0].iter == 0
    assert trace.records[0].f_value == pytest.approx(7.0)
    np.testing.assert_array_equal(x, np.zeros(3))


def test_solve_reaches_sparse_optimum(quiet_config):
    obj = diagonal_ls()
    x, trace = iht_solve(obj, np.zeros(3), IhtConfig(3, 1.0 / 9.0, max_iters=500))
    np.testing.assert_allclose(x, [1.0, 1.0, 1.0], atol=1e-6)
    assert len(trace) == 501
    assert np.all(np.diff(trace.f_values()) <= 1e-12)


def test_early_stop_ends_flat_runs(quiet_config):
    inst = gen_hard_instance(4, 2, 19)
    _, trace = iht_solve(inst.objective(), inst.x_bad, IhtConfig(19, 0.25, max_iters=1000, early_stop=True))
    assert len(trace) < 100
    assert np.all(trace.f_values() == trace.f_values()[0])


@pytest.mark.parametrize('kappa', [4, 10, 20])
@pytest.mark.parametrize('fraction', [0.0, 0.5, 1.0])
def test_hard_instance_is_fixpoint(quiet_config, kappa, fraction):
    s = 2
    s_prime = max(1, int(fraction * 0.6 * s * kappa ** 2))
    inst = gen_hard_instance(kappa, s, s_prime)
    assert is_fixpoint(inst.objective(), inst.x_bad, IhtConfig(s_prime, 1.0 / kappa))
    x, _ = iht_solve(inst.objective(), inst.x_bad, IhtConfig(s_prime, 1.0 / kappa, max_iters=5))
    np.testing.assert_array_equal(x, inst.x_bad)


def test_trace_iterations_must_increase():
    trace = SolverTrace()
    trace.append(TraceRecord(0, 1.0))
    with pytest.raises(InvalidArgumentError):
        trace.append(TraceRecord(0, 0.5))


def test_exchange_sets_of_a_step():
    obj = diagonal_ls()
    x = np.array([0.1, 0.0, 0.0])
    A, B = exchange_sets(obj, x, IhtConfig(1, 0.1))
    np.testing.assert_array_equal(A, [2])
    np.testing.assert_array_equal(B, [0])


def test_exchange_inequality_exhaustive():
    rng = np.random.default_rng(7)
    checked = 0
    for _ in range(40):
        obj, x, cfg = exchange_instance(rng)
        A, B = exchange_sets(obj, x, cfg)
        if len(A) != len(B):
            continue
        for A2, B2 in legal_swaps(x.size, support(x)):
            assert exchange_inequality_check(obj, x, A, B, A2, B2, cfg.eta)
            checked += 1
    assert checked > 0


def test_exchange_inequality_rejects_illegal_sets():
    obj = diagonal_ls()
    x = np.array([0.1, 0.0, 0.0])
    with pytest.raises(InvalidArgumentError):
        exchange_inequality_check(obj, x, [0], [0], [2], [0], 0.1)
    with pytest.raises(InvalidArgumentError):
        exchange_inequality_check(obj, x, [2], [0], [1, 2], [0], 0.1)
