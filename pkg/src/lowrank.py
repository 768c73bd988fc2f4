"""
Regularized local search for rank-constrained convex minimization.

The iterate A is regularized by Phi(A) = (beta/4)(<W, A A^T> + <Y, A^T A>) with
symmetric weight matrices W (m x m) and Y (n x n) that start at the identity.
Each iteration either takes a rank-one step followed by a fully corrective step,
or shrinks the weights along the directions that carry the regularization.
"""
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Callable, Dict, Optional, Tuple

import numpy as np
import scipy.linalg

from errors import ConvergenceError, InvalidArgumentError, PreconditionError
from iht import SolverTrace, TraceRecord
from linops import (as_matrix, frob_inner, hard_threshold_mat, numeric_rank, psd_sqrt, svd, sym_eigh,
                    top_eig_projector, trace_top)
from objectives import Objective
from utils import ConfigManager

CORRECTIVE_MAX_ITERS = 50_000
CORRECTIVE_RTOL = 1e-7
STATE_TOL = 1e-9
# Dense eigen-solves of the sensing Gram matrix are only attempted up to m*n of this size.
SENSING_EIG_MAX_DIM = 2500


class MatrixObjective(ABC):
    """Interface of a differentiable convex function on m x n matrices."""

    @property
    @abstractmethod
    def shape(self) -> Tuple[int, int]:
        pass

    @abstractmethod
    def value(self, A: np.ndarray) -> float:
        pass

    @abstractmethod
    def gradient(self, A: np.ndarray) -> np.ndarray:
        pass

    @property
    def beta_estimate(self) -> Optional[float]:
        return None

    @property
    def alpha_estimate(self) -> Optional[float]:
        return None

    @property
    def kappa(self) -> Optional[float]:
        beta, alpha = self.beta_estimate, self.alpha_estimate
        if beta is None or alpha is None or alpha <= 0.0:
            return None
        return beta / alpha

    def _check_shape(self, A) -> np.ndarray:
        A = np.asarray(A, dtype=np.float64)
        if A.shape != self.shape:
            raise InvalidArgumentError(f'shape mismatch: expected {self.shape}, got {A.shape}')
        return A


class FrobeniusQuadratic(MatrixObjective):
    """f(A) = 1/2 sum_ij h_ij (A - B)_ij^2; h = 1 gives 1/2 ||A - B||_F^2."""

    def __init__(self, B, h=None):
        self.B = as_matrix(B, 'B')
        if h is None:
            self.h = np.ones_like(self.B)
        else:
            self.h = as_matrix(h, 'h')
            if self.h.shape != self.B.shape:
                raise InvalidArgumentError(f'h has shape {self.h.shape}, B has shape {self.B.shape}')
            if np.any(self.h <= 0):
                raise InvalidArgumentError('curvature weights h must be positive')

    @property
    def shape(self):
        return self.B.shape

    def value(self, A) -> float:
        D = self._check_shape(A) - self.B
        return 0.5 * float(np.sum(self.h * D * D))

    def gradient(self, A) -> np.ndarray:
        return self.h * (self._check_shape(A) - self.B)

    @property
    def beta_estimate(self):
        return float(self.h.max()) if self.h.size else 1.0

    @property
    def alpha_estimate(self):
        return float(self.h.min()) if self.h.size else 1.0


class MatrixSensing(MatrixObjective):
    """f(A) = 1/2 sum_k (<M_k, A> - y_k)^2 for sensing matrices M_k stacked as (k, m, n)."""

    def __init__(self, sensors, y):
        sensors = np.asarray(sensors, dtype=np.float64)
        if sensors.ndim != 3:
            raise InvalidArgumentError(f'sensors must have shape (k, m, n), got {sensors.shape}')
        if not np.all(np.isfinite(sensors)):
            raise InvalidArgumentError('sensors has non-finite entries')
        self.sensors = sensors
        self.y = np.asarray(y, dtype=np.float64).reshape(-1)
        if self.y.size != sensors.shape[0]:
            raise InvalidArgumentError(f'{sensors.shape[0]} sensors but {self.y.size} measurements')
        self._G = sensors.reshape(sensors.shape[0], -1)

    @property
    def shape(self):
        return self.sensors.shape[1], self.sensors.shape[2]

    def residual(self, A) -> np.ndarray:
        return self._G @ self._check_shape(A).reshape(-1) - self.y

    def value(self, A) -> float:
        r = self.residual(A)
        return 0.5 * float(np.dot(r, r))

    def gradient(self, A) -> np.ndarray:
        return (self._G.T @ self.residual(A)).reshape(self.shape)

    @cached_property
    def _gram_spectrum(self) -> Tuple[float, float]:
        if self._G.shape[1] <= SENSING_EIG_MAX_DIM:
            lam = scipy.linalg.eigvalsh(self._G.T @ self._G)
            return float(max(lam[0], 0.0)), float(lam[-1])
        sigma = np.linalg.svd(self._G, compute_uv=False)
        low = float(sigma[-1] ** 2) if self._G.shape[0] >= self._G.shape[1] else 0.0
        return low, float(sigma[0] ** 2)

    @property
    def beta_estimate(self):
        return self._gram_spectrum[1]

    @property
    def alpha_estimate(self):
        return self._gram_spectrum[0]


@dataclass
class LowRankState:
    """Iterate A (rank <= r_prime) with its weight matrices W (m x m) and Y (n x n)."""
    A: np.ndarray
    W: np.ndarray
    Y: np.ndarray
    r_prime: int

    @classmethod
    def initial(cls, m: int, n: int, r_prime: int) -> 'LowRankState':
        return cls(np.zeros((m, n)), np.eye(m), np.eye(n), r_prime)

    def check_invariants(self) -> None:
        """Raise InvalidArgumentError unless W, Y are symmetric with spectrum in [0, 1] and rank(A) <= r'."""
        m, n = self.A.shape
        if self.W.shape != (m, m) or self.Y.shape != (n, n):
            raise InvalidArgumentError(f'weight shapes {self.W.shape}, {self.Y.shape} do not match A {self.A.shape}')
        for name, M in (('W', self.W), ('Y', self.Y)):
            if M.size and np.max(np.abs(M - M.T)) > 1e-10:
                raise InvalidArgumentError(f'{name} is not symmetric')
            lam = sym_eigh(M)[0]
            if lam.size and (lam[-1] < -STATE_TOL or lam[0] > 1.0 + STATE_TOL):
                raise InvalidArgumentError(f'{name} has eigenvalues outside [0, 1]: [{lam[-1]}, {lam[0]}]')
        if numeric_rank(self.A) > self.r_prime:
            raise InvalidArgumentError(f"A has numeric rank {numeric_rank(self.A)} > r'={self.r_prime}")

    @property
    def weight_deficit(self) -> float:
        """Tr[I - W]."""
        return float(self.W.shape[0] - np.trace(self.W))


class BranchTag(Enum):
    CORRECTIVE = 'corrective'
    PROJECTION_WEIGHT_UPDATE = 'projection_weight_update'
    RANK_ONE_WEIGHT_UPDATE = 'rank_one_weight_update'


@dataclass
class LowRankTrace(SolverTrace):
    branch_counts: Dict[str, int] = field(default_factory=lambda: {tag.value: 0 for tag in BranchTag})
    best_f: float = math.inf


def _beta(obj: MatrixObjective) -> float:
    beta = obj.beta_estimate
    if beta is None or beta <= 0:
        raise InvalidArgumentError('the objective has no positive smoothness estimate')
    return float(beta)


def phi(state: LowRankState, beta: float) -> float:
    """(beta/4)(<W, A A^T> + <Y, A^T A>)."""
    A = state.A
    return 0.25 * beta * (frob_inner(state.W, A @ A.T) + frob_inner(state.Y, A.T @ A))


def regularized_value(obj: MatrixObjective, state: LowRankState) -> float:
    """g(A) = f(A) + Phi(A)."""
    return obj.value(state.A) + phi(state, _beta(obj))


def reg_gradient(obj: MatrixObjective, state: LowRankState) -> np.ndarray:
    """grad f(A) + (beta/2)(W A + A Y)."""
    A = state.A
    return obj.gradient(A) + 0.5 * _beta(obj) * (state.W @ A + A @ state.Y)


def candidate_step(obj: MatrixObjective, state: LowRankState, eta: float, step_form: str = 'lemma') -> np.ndarray:
    """
    H_{r'-1}(A) - eta * H_1(grad g(A)).

    step_form='listing' uses the coefficient 0.5 * eta instead.
    """
    if step_form not in ('lemma', 'listing'):
        raise InvalidArgumentError(f'unknown step form {step_form!r}')
    coef = eta if step_form == 'lemma' else 0.5 * eta
    keep = min(max(state.r_prime - 1, 0), min(state.A.shape))
    return hard_threshold_mat(state.A, keep) - coef * hard_threshold_mat(reg_gradient(obj, state), 1)


def corrective_step(obj: MatrixObjective, state: LowRankState, A_bar,
                    max_iters: int = CORRECTIVE_MAX_ITERS) -> np.ndarray:
    """
    Minimize g over U X V^T, with U and V the singular subspaces of A_bar.

    Gradient descent on X with step 1/(2 beta), started from X = U^T A_bar V, stops once
    ||U^T grad g V||_F <= 1e-7 (1 + ||grad g||_F).
    """
    A_bar = np.asarray(A_bar, dtype=np.float64)
    U, sigma, V = svd(A_bar)
    if sigma.size == 0 or sigma[0] == 0.0:
        return np.zeros_like(A_bar)
    k = int(np.sum(sigma > 1e-10 * sigma[0]))
    U, V = U[:, :k], V[:, :k]
    X = np.diag(sigma[:k])
    step = 1.0 / (2.0 * _beta(obj))
    trial = LowRankState(A_bar, state.W, state.Y, state.r_prime)
    best, best_res = U @ X @ V.T, math.inf
    for _ in range(max_iters):
        trial.A = U @ X @ V.T
        grad = reg_gradient(obj, trial)
        G = U.T @ grad @ V
        res = float(np.linalg.norm(G))
        if res < best_res:
            best, best_res = trial.A, res
        if res <= CORRECTIVE_RTOL * (1.0 + float(np.linalg.norm(grad))):
            return trial.A
        X = X - step * G
    raise ConvergenceError('corrective step did not reach its stationarity certificate', best, best_res)


def _shrink_projection(W: np.ndarray, S: np.ndarray, r: int) -> np.ndarray:
    root = psd_sqrt(W)
    Pi = top_eig_projector(S, r)
    out = root @ (np.eye(W.shape[0]) - Pi / r) @ root
    return 0.5 * (out + out.T)


def _shrink_rank_one(W: np.ndarray, M: np.ndarray) -> np.ndarray:
    denom = frob_inner(W, M)
    if denom <= 0.0:
        # A lies outside the range of W; nothing to remove on this side
        return W
    out = W - W @ M @ W / denom
    return 0.5 * (out + out.T)


def local_search_iterate(obj: MatrixObjective, state: LowRankState, r: int, f_star: float, eta: float,
                         step_form: str = 'lemma') -> Tuple[LowRankState, Optional[BranchTag]]:
    """
    One iteration of the three-branch local search.

    Returns the new state and the branch taken, or the unchanged state and None when
    Delta = g(A) - f_star is negative (target reached). Raises ConvergenceError when the
    rank-one weight update is reached with A outside the range of both W and Y, since no
    branch can make progress from there.
    """
    if r < 1:
        raise InvalidArgumentError(f'r must be at least 1, got {r}')
    beta = _beta(obj)
    A = state.A
    g_A = regularized_value(obj, state)
    delta = g_A - f_star
    if delta < 0:
        return state, None

    A_bar = candidate_step(obj, state, eta, step_form)
    g_bar = obj.value(A_bar) + phi(LowRankState(A_bar, state.W, state.Y, state.r_prime), beta)
    if g_A - g_bar >= delta / state.r_prime:
        A_new = corrective_step(obj, state, A_bar)
        return LowRankState(A_new, state.W, state.Y, state.r_prime), BranchTag.CORRECTIVE

    AAt, AtA = A @ A.T, A.T @ A
    W_root, Y_root = psd_sqrt(state.W), psd_sqrt(state.Y)
    P = W_root @ AAt @ W_root
    Q = Y_root @ AtA @ Y_root
    if max(trace_top(P, r), trace_top(Q, r)) >= (0.4 / beta) * delta:
        W_new = _shrink_projection(state.W, P, r)
        Y_new = _shrink_projection(state.Y, Q, r)
        return LowRankState(A, W_new, Y_new, state.r_prime), BranchTag.PROJECTION_WEIGHT_UPDATE

    W_new = _shrink_rank_one(state.W, AAt)
    Y_new = _shrink_rank_one(state.Y, AtA)
    if W_new is state.W and Y_new is state.Y:
        raise ConvergenceError('rank-one weight update left W and Y unchanged', A, delta)
    return LowRankState(A, W_new, Y_new, state.r_prime), BranchTag.RANK_ONE_WEIGHT_UPDATE


def lowrank_theory_rank(r: int, kappa: float, f_gap: float, eps: float) -> int:
    """max(256 r, ceil(20 r (2 kappa + ln(f_gap / eps))))."""
    if r < 1 or kappa < 1 or f_gap <= 0 or eps <= 0:
        raise InvalidArgumentError('need r >= 1, kappa >= 1 and positive f_gap, eps')
    return max(256 * r, math.ceil(20.0 * r * (2.0 * kappa + max(math.log(f_gap / eps), 0.0))))


def local_search_solve(obj: MatrixObjective, r: int, r_prime: int, f_star: float, eps: float,
                       max_iters: int, eta: Optional[float] = None, theory_mode: bool = False,
                       step_form: str = 'lemma',
                       callback: Optional[Callable[[int, LowRankState, LowRankState, BranchTag], None]] = None
                       ) -> Tuple[np.ndarray, LowRankTrace]:
    """
    Run the local search from A = 0, W = I, Y = I until f(A) <= f_star + eps or max_iters.

    In theory mode r' must satisfy r' >= lowrank_theory_rank(r, kappa, f(0) - f_star, eps) and
    eta must equal 1/(2 beta). Otherwise r' is capped at min(m, n). When the budget runs
    out the best iterate is returned with trace status 'incomplete'; a stalled rank-one weight
    update raises ConvergenceError from local_search_iterate.
    `callback(t, old_state, new_state, branch)` is invoked after every iteration.
    """
    if eps <= 0:
        raise InvalidArgumentError(f'eps must be positive, got {eps}')
    if max_iters < 0:
        raise InvalidArgumentError(f'max_iters must be non-negative, got {max_iters}')
    m, n = obj.shape
    beta = _beta(obj)
    eta = 1.0 / (2.0 * beta) if eta is None else float(eta)
    if not eta > 0:
        raise InvalidArgumentError(f'eta must be positive, got {eta}')
    f0 = obj.value(np.zeros((m, n)))
    if theory_mode:
        kappa = obj.kappa
        if kappa is None:
            raise PreconditionError('theory mode needs a strong convexity estimate', 'alpha > 0')
        needed = lowrank_theory_rank(r, kappa, max(f0 - f_star, eps), eps)
        if r_prime < needed:
            raise PreconditionError(f"r'={r_prime} is below the theory rank {needed}", "r' >= max(256 r, 20 r (2 kappa + log))")
        if abs(eta - 1.0 / (2.0 * beta)) > 1e-12 * eta:
            raise PreconditionError('theory mode requires eta = 1/(2 beta)', 'eta = 1/(2 beta)')
    elif r_prime > min(m, n):
        ConfigManager.console_print(f"Capping r'={r_prime} at min(m, n)={min(m, n)}")
        r_prime = min(m, n)
    if r_prime < 1:
        raise InvalidArgumentError(f"r' must be at least 1, got {r_prime}")

    state = LowRankState.initial(m, n, r_prime)
    trace = LowRankTrace()
    f = f0
    best_A, trace.best_f = state.A, f
    trace.append(TraceRecord(0, f, regularized_value(obj, state), 0, float(np.trace(state.W)), 'start'))
    if f <= f_star + eps:
        trace.status = 'target_reached'
        return state.A, trace
    for t in range(max_iters):
        new_state, tag = local_search_iterate(obj, state, r, f_star, eta, step_form)
        if tag is None:
            trace.status = 'target_reached'
            return state.A, trace
        trace.branch_counts[tag.value] += 1
        if callback is not None:
            callback(t + 1, state, new_state, tag)
        state = new_state
        f = obj.value(state.A)
        trace.append(TraceRecord(t + 1, f, regularized_value(obj, state), numeric_rank(state.A),
                                 float(np.trace(state.W)), tag.value))
        if ConfigManager.should_log_iteration(t + 1):
            ConfigManager.console_print(f'Local search iter {t + 1}: f={f:.6e} branch={tag.value} '
                                        f'Tr[I-W]={state.weight_deficit:.3f}')
        if f < trace.best_f:
            best_A, trace.best_f = state.A, f
        if f <= f_star + eps:
            trace.status = 'target_reached'
            return state.A, trace
    trace.status = 'incomplete'
    return best_A, trace


def trace_ineq_check(Pi, M, r: int) -> bool:
    """|<Pi, M>| <= Tr[H_r(M)] + 1e-9 for a PSD projector-like Pi of rank <= r with ||Pi||_2 <= 1."""
    Pi = as_matrix(Pi, 'Pi')
    M = as_matrix(M, 'M')
    if Pi.shape != M.shape or Pi.shape[0] != Pi.shape[1]:
        raise InvalidArgumentError(f'Pi {Pi.shape} and M {M.shape} must be square and equal in shape')
    if Pi.size and (np.max(np.abs(Pi - Pi.T)) > STATE_TOL or np.max(np.abs(M - M.T)) > STATE_TOL):
        raise PreconditionError('Pi and M must be symmetric', 'Pi = Pi^T, M = M^T')
    lam_pi = sym_eigh(Pi)[0]
    if lam_pi.size and (lam_pi[-1] < -STATE_TOL or lam_pi[0] > 1.0 + STATE_TOL):
        raise PreconditionError('Pi must be PSD with spectral norm at most 1', '0 <= Pi <= I')
    if int(np.sum(lam_pi > STATE_TOL)) > r:
        raise PreconditionError(f'Pi has rank above r={r}', 'rank(Pi) <= r')
    lam_m = sym_eigh(M)[0]
    if lam_m.size and lam_m[-1] < -STATE_TOL * max(1.0, abs(lam_m[0])):
        raise PreconditionError('M must be PSD', 'M >= 0')
    return abs(frob_inner(Pi, M)) <= trace_top(M, r) + 1e-9


class RegularizedMatrixView(Objective):
    """g = f + Phi at fixed weights, seen as a function of the flattened matrix A."""

    def __init__(self, obj: MatrixObjective, W, Y):
        self.obj = obj
        self.W = as_matrix(W, 'W')
        self.Y = as_matrix(Y, 'Y')

    @property
    def dim(self) -> int:
        m, n = self.obj.shape
        return m * n

    def _state(self, x) -> LowRankState:
        A = self._check_dim(x).reshape(self.obj.shape)
        return LowRankState(A, self.W, self.Y, min(self.obj.shape))

    def value(self, x) -> float:
        return regularized_value(self.obj, self._state(x))

    def gradient(self, x) -> np.ndarray:
        return reg_gradient(self.obj, self._state(x)).reshape(-1)
