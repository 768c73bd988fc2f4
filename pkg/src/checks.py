"""
Invariant suites run by the `check` subcommand.

Each suite returns a CheckResult; none of them raises on a failed property.
"""
from itertools import combinations
from typing import Callable, Dict, List, NamedTuple, Optional

import numpy as np

from iht import IhtConfig, exchange_inequality_check, exchange_sets, is_fixpoint
from instances import gen_frobenius_instance, gen_hard_instance
from linops import hard_threshold_vec, support, top_k_indices
from lowrank import RegularizedMatrixView, trace_ineq_check
from objectives import LeastSquares, RidgeLogistic, gradient_check
from oracle import top_k_reference

HARD_CASES = ((4, 2, 19), (10, 2, 120), (20, 2, 480))
GRADIENT_RTOL = 1e-5


class CheckResult(NamedTuple):
    name: str
    passed: bool
    detail: str


def check_hard_fixpoints() -> CheckResult:
    failures = []
    for kappa, s, s_prime in HARD_CASES:
        inst = gen_hard_instance(kappa, s, s_prime)
        obj = inst.objective()
        fixed = is_fixpoint(obj, inst.x_bad, IhtConfig(s_prime, 1.0 / kappa))
        gap = obj.value(inst.x_bad) - obj.value(inst.x_star)
        if not fixed or gap < 0.1 * s * kappa ** 2:
            failures.append(f'(kappa={kappa}, s={s}, s\'={s_prime}): fixpoint={fixed}, gap={gap:.4g}')
    return CheckResult('hard-fixpoint', not failures, '; '.join(failures) or f'{len(HARD_CASES)} instances')


def legal_swaps(n: int, S):
    """Every (A', B') with A' outside S, B' inside S and |A'| = |B'| >= 1."""
    inside = sorted(int(i) for i in S)
    outside = [i for i in range(n) if i not in set(inside)]
    for k in range(1, min(len(inside), len(outside)) + 1):
        for A2 in combinations(outside, k):
            for B2 in combinations(inside, k):
                yield A2, B2


def exchange_instance(rng: np.random.Generator):
    """Random least squares with n <= 10 and an iterate with exactly s' nonzeros."""
    n = int(rng.integers(2, 11))
    m = int(rng.integers(n, 2 * n + 1))
    s_prime = int(rng.integers(1, n))
    obj = LeastSquares(rng.standard_normal((m, n)), rng.standard_normal(m))
    x = np.zeros(n)
    x[rng.choice(n, size=s_prime, replace=False)] = rng.standard_normal(s_prime)
    eta = float(rng.uniform(0.1, 1.0)) / obj.beta_estimate
    return obj, x, IhtConfig(s_prime, eta)


def check_exchange_inequality(n_instances: int = 500, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    violations = 0
    for _ in range(n_instances):
        obj, x, cfg = exchange_instance(rng)
        A, B = exchange_sets(obj, x, cfg)
        if len(A) != len(B):
            continue
        for A2, B2 in legal_swaps(x.size, support(x)):
            if not exchange_inequality_check(obj, x, A, B, A2, B2, cfg.eta):
                violations += 1
    return CheckResult('exchange-inequality', violations == 0, f'{violations} violation(s) over {n_instances} instances')


def random_trace_pair(rng: np.random.Generator):
    """(Pi, M, r): Pi PSD with rank <= r and spectral norm <= 1, M PSD; dimension at most 8."""
    d = int(rng.integers(1, 9))
    r = int(rng.integers(1, d + 1))
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    k = int(rng.integers(0, r + 1))
    Pi = (Q[:, :k] * rng.uniform(0.0, 1.0, size=k)) @ Q[:, :k].T
    G = rng.standard_normal((d, int(rng.integers(1, d + 1))))
    return 0.5 * (Pi + Pi.T), G @ G.T, r


def check_trace_inequality(n_pairs: int = 1000, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    violations = sum(not trace_ineq_check(*random_trace_pair(rng)) for _ in range(n_pairs))
    return CheckResult('trace-inequality', violations == 0, f'{violations} violation(s) over {n_pairs} pairs')


def check_gradients(n_points: int = 20, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((15, 6))
    objectives = {
        'least-squares': LeastSquares(A, rng.standard_normal(15)),
        'ridge-logistic': RidgeLogistic(A, (rng.random(15) < 0.5).astype(float), rho=0.1),
    }
    W = np.diag(rng.uniform(0.0, 1.0, 4))
    Y = np.diag(rng.uniform(0.0, 1.0, 5))
    objectives['regularized-matrix'] = RegularizedMatrixView(gen_frobenius_instance(4, 5, 2, 3.0, seed), W, Y)
    worst: Dict[str, float] = {}
    for name, obj in objectives.items():
        worst[name] = max(gradient_check(obj, rng.standard_normal(obj.dim)) for _ in range(n_points))
    bad = {k: v for k, v in worst.items() if v > GRADIENT_RTOL}
    detail = ', '.join(f'{k}={v:.2e}' for k, v in worst.items())
    return CheckResult('gradients', not bad, detail)


def check_top_k(n_vectors: int = 10000, seed: int = 0) -> CheckResult:
    """Differential test of the thresholding operator; half of the vectors carry tied magnitudes."""
    rng = np.random.default_rng(seed)
    mismatches = 0
    for t in range(n_vectors):
        n = int(rng.integers(1, 16))
        x = rng.standard_normal(n)
        if t % 2:
            x = np.round(x) * rng.choice([-1.0, 1.0], size=n)
        k = int(rng.integers(0, n + 1))
        ref = top_k_reference(x, k)
        expected = np.zeros(n)
        expected[ref] = x[ref]
        if not (np.array_equal(top_k_indices(x, k), ref) and np.array_equal(hard_threshold_vec(x, k), expected)):
            mismatches += 1
    return CheckResult('top-k', mismatches == 0, f'{mismatches} mismatch(es) over {n_vectors} vectors')


SUITES: Dict[str, Callable[[], CheckResult]] = {
    'hard-fixpoint': check_hard_fixpoints,
    'exchange-inequality': check_exchange_inequality,
    'trace-inequality': check_trace_inequality,
    'gradients': check_gradients,
    'top-k': check_top_k,
}


def run_checks(names: Optional[List[str]] = None) -> List[CheckResult]:
    """Run the named suites (all of them by default) in a fixed order."""
    selected = list(SUITES) if not names else names
    unknown = [n for n in selected if n not in SUITES]
    if unknown:
        raise KeyError(f'unknown check suite(s): {unknown}')
    return [SUITES[name]() for name in selected]
