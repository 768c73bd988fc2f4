"""
Brute-force references for tiny instances.
"""
from itertools import combinations
from typing import NamedTuple, Tuple

import numpy as np

from errors import InvalidArgumentError
from linops import as_csr, as_vector

MAX_ORACLE_COLS = 14
MAX_ORACLE_SPARSITY = 4
PINV_CUTOFF = 1e-12


class OracleResult(NamedTuple):
    best_support: Tuple[int, ...]
    best_value: float
    x_opt: np.ndarray


def best_sparse_ls(A, b, s: int) -> OracleResult:
    """
    Exact min 1/2||Ax - b||^2 over ||x||_0 <= s by enumerating every support.

    Supports are visited by size, then lexicographically; a later support only
    replaces the incumbent when it is strictly better.
    """
    A = as_csr(A).toarray()
    b = as_vector(b, 'b')
    m, n = A.shape
    if b.size != m:
        raise InvalidArgumentError(f'A has {m} rows but b has {b.size} entries')
    if n > MAX_ORACLE_COLS:
        raise InvalidArgumentError(f'oracle is limited to {MAX_ORACLE_COLS} columns, got {n}')
    if not 0 <= s <= MAX_ORACLE_SPARSITY and s != n:
        raise InvalidArgumentError(f's={s} must lie in [0, {MAX_ORACLE_SPARSITY}]')
    s = min(s, n)

    best = OracleResult((), 0.5 * float(np.dot(b, b)), np.zeros(n))
    for k in range(1, s + 1):
        for S in combinations(range(n), k):
            cols = A[:, S]
            coef = np.linalg.pinv(cols.T @ cols, rcond=PINV_CUTOFF) @ (cols.T @ b)
            r = cols @ coef - b
            value = 0.5 * float(np.dot(r, r))
            if value < best.best_value:
                x = np.zeros(n)
                x[list(S)] = coef
                best = OracleResult(S, value, x)
    return best


def top_k_reference(x, k: int) -> np.ndarray:
    """k indices of largest |x_i| by full sort on (-|x_i|, i), returned in that order."""
    x = np.asarray(x, dtype=np.float64)
    if not 0 <= k <= x.size:
        raise InvalidArgumentError(f'k={k} must lie in [0, {x.size}]')
    order = sorted(range(x.size), key=lambda i: (-abs(x[i]), i))
    return np.array(order[:k], dtype=int)
