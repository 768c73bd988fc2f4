"""
Problem instances: the IHT lower-bound construction, Gaussian signal recovery,
planted quadratics, low-rank targets, and svmlight datasets.

Every generator is a pure function of its arguments; random ones draw from
numpy's PCG64 stream seeded with `seed`.
"""
import math
import os
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import aslinearoperator

from errors import InvalidArgumentError, ParseError
from linops import as_csr, as_vector, csr_from_arrays
from lowrank import FrobeniusQuadratic, MatrixSensing
from objectives import LeastSquares, preprocess_design
from utils import ConfigManager

DEFAULT_DELTA = 1e-3


@dataclass
class HardInstance:
    """Diagonal least squares on which the s'-sparse x_bad is an IHT fixpoint far from x_star."""
    A: sp.csr_matrix
    b: np.ndarray
    x_star: np.ndarray
    x_bad: np.ndarray
    delta: float
    kappa: float
    s: int
    s_prime: int

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def blocks(self) -> Tuple[range, range, range]:
        """(I1, I2, I3) as 0-based index ranges."""
        s, k = self.s, int(round(self.kappa))
        return range(0, s), range(s, s * (k + 1)), range(s * (k + 1), self.n)

    def objective(self) -> LeastSquares:
        return LeastSquares(self.A, self.b, beta=self.kappa)

    def gap(self) -> float:
        """f(x_bad) - f(x_star) in closed form."""
        return 0.5 * self.s * self.kappa ** 2 * (1.0 - 4.0 * self.delta) - 0.5 * self.s_prime


@dataclass
class RecoveryInstance:
    A: sp.csr_matrix
    x_true: np.ndarray
    b: np.ndarray
    seed: int

    def objective(self) -> LeastSquares:
        return LeastSquares(self.A, self.b)


@dataclass
class Dataset:
    """Preprocessed design (unit-norm, centered retained columns) with labels."""
    A: object
    b: np.ndarray
    task: str
    dropped_columns: List[int] = field(default_factory=list)


def gen_hard_instance(kappa: int, s: int, s_prime: int, delta: float = DEFAULT_DELTA) -> HardInstance:
    """
    Build the lower-bound instance with n = s (kappa^2 + kappa + 1).

    A_ii is 1 on I1 = [s], sqrt(kappa) on I2 (s kappa entries) and 1 on I3 (s kappa^2 entries).
    x_star = kappa sqrt(1 - 4 delta) on I1; x_bad = 1 on the first s' indices of I3.
    kappa must be an integer so that the block sizes are.
    """
    if kappa < 1 or s < 1 or kappa != int(kappa):
        raise InvalidArgumentError(f'need integer kappa >= 1 and s >= 1, got kappa={kappa}, s={s}')
    if not 0 < delta < 0.25:
        raise InvalidArgumentError(f'delta must lie in (0, 1/4), got {delta}')
    kappa = int(kappa)
    n1, n2, n3 = s, s * kappa, s * kappa * kappa
    n = n1 + n2 + n3
    if s_prime < 1:
        raise InvalidArgumentError(f"s' must be at least 1, got {s_prime}")
    if s_prime > n3:
        raise InvalidArgumentError(f"s'={s_prime} exceeds |I3|={n3}")
    if s_prime > 0.6 * s * kappa ** 2 + 1e-9:
        raise InvalidArgumentError(f"s'={s_prime} exceeds 0.6 s kappa^2 = {0.6 * s * kappa ** 2}")

    diag = np.concatenate([np.ones(n1), np.full(n2, math.sqrt(kappa)), np.ones(n3)])
    b = np.concatenate([np.full(n1, kappa * math.sqrt(1.0 - 4.0 * delta)),
                        np.full(n2, math.sqrt(kappa) * math.sqrt(1.0 - 2.0 * delta)),
                        np.ones(n3)])
    x_star = np.zeros(n)
    x_star[:n1] = kappa * math.sqrt(1.0 - 4.0 * delta)
    x_bad = np.zeros(n)
    x_bad[n1 + n2:n1 + n2 + s_prime] = 1.0
    return HardInstance(sp.diags(diag, format='csr'), b, x_star, x_bad, delta, float(kappa), s, s_prime)


def gen_recovery_instance(m: int, n: int, s: int, seed: int) -> RecoveryInstance:
    """Gaussian m x n measurements of an s-sparse Gaussian signal; b = A x_true."""
    if m < 1 or n < 1:
        raise InvalidArgumentError(f'm and n must be positive, got {m}, {n}')
    if not 0 <= s <= n:
        raise InvalidArgumentError(f's={s} must lie in [0, {n}]')
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, n))
    x_true = np.zeros(n)
    support = np.sort(rng.choice(n, size=s, replace=False))
    x_true[support] = rng.standard_normal(s)
    A_csr = as_csr(A)
    return RecoveryInstance(A_csr, x_true, A_csr @ x_true, seed)


def gen_planted_quadratic(n: int, s: int, kappa: float, seed: int) -> Tuple[LeastSquares, np.ndarray, np.ndarray]:
    """
    Least squares with A = diag(d)^{1/2} Q^T, Q a random rotation and d spread over [1, kappa].

    A^T A has smallest eigenvalue 1 and largest kappa; b = A x_star for a planted
    s-sparse x_star, so f(x_star) = 0. Returns (objective, x_star, S_star).
    """
    if n < 1 or not 0 <= s <= n:
        raise InvalidArgumentError(f'need n >= 1 and 0 <= s <= n, got n={n}, s={s}')
    if kappa < 1:
        raise InvalidArgumentError(f'kappa must be at least 1, got {kappa}')
    rng = np.random.default_rng(seed)
    Q, R = np.linalg.qr(rng.standard_normal((n, n)))
    Q = Q * np.sign(np.diag(R))
    d = np.linspace(1.0, kappa, n) if n > 1 else np.array([1.0])
    A = np.sqrt(d)[:, None] * Q.T
    S_star = np.sort(rng.choice(n, size=s, replace=False))
    x_star = np.zeros(n)
    x_star[S_star] = rng.standard_normal(s)
    op = aslinearoperator(A)
    b = op.matvec(x_star)
    return LeastSquares(op, b, beta=float(d[-1])), x_star, S_star


def gen_lowrank_target(m: int, n: int, r: int, seed: int) -> np.ndarray:
    """Random rank-r matrix U V^T with Gaussian factors."""
    if not 0 <= r <= min(m, n):
        raise InvalidArgumentError(f'r={r} must lie in [0, {min(m, n)}]')
    rng = np.random.default_rng(seed)
    return rng.standard_normal((m, r)) @ rng.standard_normal((r, n))


def gen_frobenius_instance(m: int, n: int, r: int, kappa: float, seed: int) -> FrobeniusQuadratic:
    """1/2 <A - B, H (A - B)> with entrywise curvature in [1, kappa] (both ends attained)."""
    if kappa < 1:
        raise InvalidArgumentError(f'kappa must be at least 1, got {kappa}')
    B = gen_lowrank_target(m, n, r, seed)
    if kappa == 1:
        return FrobeniusQuadratic(B)
    rng = np.random.default_rng([seed, 1])
    h = rng.uniform(1.0, kappa, size=(m, n)).reshape(-1)
    h[0], h[-1] = 1.0, kappa
    return FrobeniusQuadratic(B, h.reshape(m, n))


def gen_sensing_instance(m: int, n: int, r: int, n_measurements: int, seed: int) -> Tuple[MatrixSensing, np.ndarray]:
    """Gaussian sensing (entries scaled by 1/sqrt(k)) of a planted rank-r target B; returns (objective, B)."""
    if n_measurements < 1:
        raise InvalidArgumentError(f'need at least one measurement, got {n_measurements}')
    B = gen_lowrank_target(m, n, r, seed)
    rng = np.random.default_rng([seed, 2])
    sensors = rng.standard_normal((n_measurements, m, n)) / math.sqrt(n_measurements)
    y = sensors.reshape(n_measurements, -1) @ B.reshape(-1)
    return MatrixSensing(sensors, y), B


def load_svmlight(path: str, n_features: Optional[int] = None) -> Tuple[sp.csr_matrix, np.ndarray]:
    """
    Read a svmlight/libsvm file: one example per line, 'label index:value ...',
    1-based strictly increasing indices, optional trailing '# comment'.

    The column count is the largest index seen (or n_features if larger). Malformed
    input raises ParseError with the 1-based line and column of the offending token.
    """
    labels, offsets, cols, vals = [], [0], [], []
    max_index = 0
    with open(path, 'r') as file:
        for line_no, raw in enumerate(file, start=1):
            line = raw.split('#', 1)[0].rstrip('\r\n')
            tokens = _tokens(line)
            if not tokens:
                continue
            (col, label_tok), features = tokens[0], tokens[1:]
            try:
                labels.append(float(label_tok))
            except ValueError:
                raise ParseError(f'bad label {label_tok!r}', line_no, col)
            if not math.isfinite(labels[-1]):
                raise ParseError(f'non-finite label {label_tok!r}', line_no, col)
            prev = 0
            for col, tok in features:
                index_tok, sep, value_tok = tok.partition(':')
                if not sep:
                    raise ParseError(f'expected index:value, got {tok!r}', line_no, col)
                try:
                    index, value = int(index_tok), float(value_tok)
                except ValueError:
                    raise ParseError(f'bad feature token {tok!r}', line_no, col)
                if index < 1:
                    raise ParseError(f'feature index {index} is below 1', line_no, col)
                if index <= prev:
                    raise ParseError(f'feature index {index} does not increase (previous {prev})', line_no, col)
                if not math.isfinite(value):
                    raise ParseError(f'non-finite value {value_tok!r}', line_no, col)
                prev = index
                cols.append(index - 1)
                vals.append(value)
            max_index = max(max_index, prev)
            offsets.append(len(cols))
    n_cols = max(max_index, n_features or 0)
    A = csr_from_arrays(len(labels), n_cols, offsets, cols, vals)
    ConfigManager.console_print(f'Loaded {os.path.basename(path)}: {A.shape[0]} x {A.shape[1]}, {A.nnz} nonzeros')
    return A, np.array(labels, dtype=np.float64)


def _tokens(line: str) -> List[Tuple[int, str]]:
    """Whitespace-separated tokens with their 1-based start columns."""
    out, i, n = [], 0, len(line)
    while i < n:
        while i < n and line[i].isspace():
            i += 1
        start = i
        while i < n and not line[i].isspace():
            i += 1
        if i > start:
            out.append((start + 1, line[start:i]))
    return out


def save_svmlight(path: str, A, b) -> None:
    """Write A (rows) and b (labels) in svmlight format with 17 significant digits; zeros are omitted."""
    A = as_csr(A)
    b = as_vector(b, 'b')
    if A.shape[0] != b.size:
        raise InvalidArgumentError(f'A has {A.shape[0]} rows but b has {b.size} labels')
    with open(path, 'w') as file:
        for i in range(A.shape[0]):
            start, end = A.indptr[i], A.indptr[i + 1]
            feats = ' '.join(f'{j + 1}:{v:.17g}' for j, v in zip(A.indices[start:end], A.data[start:end]) if v != 0.0)
            file.write(f'{b[i]:.17g} {feats}'.rstrip() + '\n')


def load_dataset(path: str, task: str, explicit: bool = False) -> Dataset:
    """
    Parse and preprocess a svmlight dataset.

    task 'ls' (regression) keeps labels as read; task 'logistic' (classification)
    maps labels {-1, +1} to {0, 1} and rejects any other label set.
    """
    A, b = load_svmlight(path)
    if task in ('logistic', 'classification'):
        values = set(np.unique(b).tolist())
        if values <= {-1.0, 1.0}:
            b = (b > 0).astype(np.float64)
        elif not values <= {0.0, 1.0}:
            raise InvalidArgumentError(f'classification labels must be in {{-1, 1}} or {{0, 1}}, got {sorted(values)[:5]}')
        kind = 'classification'
    elif task in ('ls', 'regression'):
        kind = 'regression'
    else:
        raise InvalidArgumentError(f'unknown task {task!r}')
    if explicit:
        design, dropped = preprocess_design(A, explicit=True)
    else:
        design = preprocess_design(A)
        dropped = design.dropped
    return Dataset(design, b, kind, dropped)
