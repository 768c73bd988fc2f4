"""
Plain iterative hard thresholding, x <- H_{s'}(x - eta * grad f(x)).
"""
from dataclasses import dataclass, field
from typing import Iterable, Iterator, List, Optional, Tuple

import numpy as np

from errors import InvalidArgumentError, NumericalError
from linops import as_vector, hard_threshold_vec, support
from objectives import Objective
from utils import ConfigManager

EARLY_STOP_RTOL = 1e-12
EARLY_STOP_PATIENCE = 50


@dataclass(frozen=True)
class IhtConfig:
    s_prime: int
    eta: float
    max_iters: int = 100
    early_stop: bool = False

    def validate(self, dim: int) -> None:
        if not 0 <= self.s_prime <= dim:
            raise InvalidArgumentError(f"s'={self.s_prime} must lie in [0, {dim}]")
        if not (np.isfinite(self.eta) and self.eta > 0):
            raise InvalidArgumentError(f'eta must be finite and positive, got {self.eta}')
        if self.max_iters < 0:
            raise InvalidArgumentError(f'max_iters must be non-negative, got {self.max_iters}')


@dataclass
class TraceRecord:
    iter: int
    f_value: float
    g_value: Optional[float] = None
    support_size: int = 0
    weight_mass: Optional[float] = None
    branch: str = ''


@dataclass
class SolverTrace:
    """Per-iteration records of a run; `status` is 'complete', 'target_reached' or 'incomplete'."""
    records: List[TraceRecord] = field(default_factory=list)
    status: str = 'complete'

    def append(self, record: TraceRecord) -> None:
        if self.records and record.iter <= self.records[-1].iter:
            raise InvalidArgumentError(f'trace iterations must increase, got {record.iter} after {self.records[-1].iter}')
        self.records.append(record)

    def f_values(self) -> np.ndarray:
        return np.array([r.f_value for r in self.records])

    def g_values(self) -> np.ndarray:
        return np.array([np.nan if r.g_value is None else r.g_value for r in self.records])

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[TraceRecord]:
        return iter(self.records)


def check_sparsity(x: np.ndarray, s_prime: int, name: str = 'x') -> None:
    nnz = np.count_nonzero(x)
    if nnz > s_prime:
        raise InvalidArgumentError(f"{name} has {nnz} nonzeros, more than s'={s_prime}")


def finite_gradient(obj: Objective, x: np.ndarray) -> np.ndarray:
    grad = obj.gradient(x)
    if not np.all(np.isfinite(grad)):
        raise NumericalError('gradient has non-finite entries')
    return grad


def iht_step(obj: Objective, x, cfg: IhtConfig) -> np.ndarray:
    """H_{s'}(x - eta * grad f(x))."""
    x = np.asarray(x, dtype=np.float64)
    check_sparsity(x, cfg.s_prime)
    return hard_threshold_vec(x - cfg.eta * finite_gradient(obj, x), cfg.s_prime)


def iht_solve(obj: Objective, x0, cfg: IhtConfig) -> Tuple[np.ndarray, SolverTrace]:
    """Run max_iters IHT steps from x0, recording f after every step (iteration 0 is x0)."""
    cfg.validate(obj.dim)
    x = as_vector(x0, 'x0')
    check_sparsity(x, cfg.s_prime, 'x0')
    trace = SolverTrace()
    f = obj.value(x)
    trace.append(TraceRecord(0, f, support_size=int(np.count_nonzero(x))))
    quiet = 0
    for t in range(cfg.max_iters):
        x = iht_step(obj, x, cfg)
        f_new = obj.value(x)
        trace.append(TraceRecord(t + 1, f_new, support_size=int(np.count_nonzero(x))))
        if ConfigManager.should_log_iteration(t + 1):
            ConfigManager.console_print(f'IHT iter {t + 1}: f={f_new:.6e} support={np.count_nonzero(x)}')
        if cfg.early_stop:
            quiet = quiet + 1 if abs(f_new - f) <= EARLY_STOP_RTOL * max(abs(f), 1e-300) else 0
            if quiet >= EARLY_STOP_PATIENCE:
                ConfigManager.console_print(f'IHT stopped early at iteration {t + 1}')
                break
        f = f_new
    return x, trace


def is_fixpoint(obj: Objective, x, cfg: IhtConfig) -> bool:
    """True iff one IHT step maps x exactly onto itself."""
    x = np.asarray(x, dtype=np.float64)
    return bool(np.array_equal(iht_step(obj, x, cfg), x))


def exchange_sets(obj: Objective, x, cfg: IhtConfig) -> Tuple[np.ndarray, np.ndarray]:
    """(A, B) of an actual IHT step: A entries inserted into the support, B entries removed."""
    x = np.asarray(x, dtype=np.float64)
    before = set(support(x).tolist())
    after = set(support(iht_step(obj, x, cfg)).tolist())
    return np.array(sorted(after - before), dtype=int), np.array(sorted(before - after), dtype=int)


def exchange_inequality_check(obj_g: Objective, x, A_set: Iterable[int], B_set: Iterable[int],
                              A_prime: Iterable[int], B_prime: Iterable[int], eta: float) -> bool:
    """
    Check -||eta grad_A g||^2 + ||xbar_B||^2 <= -||eta grad_A' g||^2 + ||xbar_B'||^2,
    with xbar = x - eta grad g(x).

    (A, B) must come from an actual IHT step on x; (A', B') is any swap of equal size
    taking A' outside supp(x) and B' inside it.
    """
    x = np.asarray(x, dtype=np.float64)
    S = set(support(x).tolist())
    A, B, A2, B2 = (np.array(sorted(set(int(i) for i in idx)), dtype=int)
                    for idx in (A_set, B_set, A_prime, B_prime))
    for name, idx, inside in (('A', A, False), ("A'", A2, False), ('B', B, True), ("B'", B2, True)):
        if any((int(i) in S) != inside for i in idx):
            where = 'inside' if inside else 'outside'
            raise InvalidArgumentError(f'{name} must lie {where} the support of x')
    if len(A) != len(B):
        raise InvalidArgumentError(f'|A|={len(A)} differs from |B|={len(B)}')
    if len(A2) != len(B2):
        raise InvalidArgumentError(f"|A'|={len(A2)} differs from |B'|={len(B2)}")
    step = eta * finite_gradient(obj_g, x)
    xbar = x - step

    def side(ins, outs):
        return -float(np.sum(step[ins] ** 2)) + float(np.sum(xbar[outs] ** 2))

    lhs, rhs = side(A, B), side(A2, B2)
    return lhs <= rhs + 1e-12 * (1.0 + abs(lhs) + abs(rhs))
