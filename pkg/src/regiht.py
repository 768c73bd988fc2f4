"""
Regularized IHT: IHT on f(x) + (beta/2)||x||_{w,2}^2 with weights w that are
learned during the run.

Each step shrinks x towards 0 by the current weights, takes a gradient step on f,
thresholds to s' entries, and lowers the weights of the coordinates that carry
the regularization mass. Weights below the rounding threshold drop to 0, so every
weight is 0 or lies in [1/2, 1].
"""
import math
from dataclasses import dataclass, field
from typing import Iterable, List, NamedTuple, Optional, Tuple

import numpy as np

from errors import InvalidArgumentError, PreconditionError
from iht import SolverTrace, TraceRecord, check_sparsity, finite_gradient
from linops import as_vector, hard_threshold_vec, weighted_sq_norm
from objectives import Objective
from utils import ConfigManager

DEFAULT_ROUND_TH = 0.5
_WEIGHT_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class WeightVector:
    """Regularization weights; every entry is 0 or lies in [round_th, 1]."""
    w: np.ndarray
    round_th: float = DEFAULT_ROUND_TH

    def __post_init__(self):
        w = as_vector(self.w, 'w')
        object.__setattr__(self, 'w', w)
        bad = (w != 0.0) & ((w < self.round_th - _WEIGHT_TOL) | (w > 1.0 + _WEIGHT_TOL))
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            raise InvalidArgumentError(f'weight w[{i}]={w[i]} is neither 0 nor in [{self.round_th}, 1]')

    @classmethod
    def ones(cls, n: int, round_th: float = DEFAULT_ROUND_TH) -> 'WeightVector':
        return cls(np.ones(n), round_th)

    @property
    def mass(self) -> float:
        return float(self.w.sum())

    def __len__(self) -> int:
        return self.w.size


def _weights(w) -> np.ndarray:
    return w.w if isinstance(w, WeightVector) else np.asarray(w, dtype=np.float64)


@dataclass(frozen=True)
class RegIhtConfig:
    s_prime: int
    eta: float
    c: float
    T: int
    revert_enabled: bool = False
    round_th: float = DEFAULT_ROUND_TH
    # 'algorithm' subtracts eta*grad, 'listing' subtracts 0.5*eta*grad
    step_form: str = 'algorithm'

    def validate(self, dim: int) -> None:
        if not 0 <= self.s_prime <= dim:
            raise InvalidArgumentError(f"s'={self.s_prime} must lie in [0, {dim}]")
        if not (np.isfinite(self.eta) and self.eta > 0):
            raise InvalidArgumentError(f'eta must be finite and positive, got {self.eta}')
        if not self.c > 0:
            raise InvalidArgumentError(f'c must be positive, got {self.c}')
        if not 0 < self.round_th < 1:
            raise InvalidArgumentError(f'round_th must lie in (0, 1), got {self.round_th}')
        if self.T < 0:
            raise InvalidArgumentError(f'T must be non-negative, got {self.T}')
        if self.step_form not in ('algorithm', 'listing'):
            raise InvalidArgumentError(f'unknown step form {self.step_form!r}')

    @property
    def experimental(self) -> bool:
        """Any rounding threshold other than 1/2 relaxes the weight invariant."""
        return self.round_th != DEFAULT_ROUND_TH

    @property
    def grad_coef(self) -> float:
        return self.eta if self.step_form == 'algorithm' else 0.5 * self.eta


@dataclass
class DichotomyReport:
    """Both bullets of the one-step progress lemma evaluated at one iterate."""
    progress_holds: bool
    correlation_holds: bool
    progress_lhs: float
    progress_rhs: float
    mass_lhs: float
    mass_rhs: float
    reg_lhs: float
    reg_rhs: float
    preconditions_met: bool = True

    @property
    def any_holds(self) -> bool:
        return self.progress_holds or self.correlation_holds


@dataclass
class RegIhtTrace(SolverTrace):
    weights_initial: Optional[np.ndarray] = None
    weights_final: Optional[np.ndarray] = None
    dichotomy: List[DichotomyReport] = field(default_factory=list)
    reverts: int = 0


class TheoryParams(NamedTuple):
    s_prime: int
    eta: float
    c: float
    T: int
    window_feasible: bool


class WeightMassReport(NamedTuple):
    lifted_drop: float
    c_T: float
    deficit: float
    holds: bool


def regiht_step(obj: Objective, x, w, cfg: RegIhtConfig) -> np.ndarray:
    """H_{s'}((1 - 0.5 w) x - eta grad f(x))."""
    x = np.asarray(x, dtype=np.float64)
    check_sparsity(x, cfg.s_prime)
    weights = _weights(w)
    grad = finite_gradient(obj, x)
    return hard_threshold_vec((1.0 - 0.5 * weights) * x - cfg.grad_coef * grad, cfg.s_prime)


def weight_update(x, w, c: float, round_th: float = DEFAULT_ROUND_TH) -> WeightVector:
    """
    w_i <- w_i - c (w_i x_i)^2 / ||x||_{w,2}^2, then entries below round_th become 0.

    This is the same as w_i (1 - c w_i x_i^2 / ||x||_{w,2}^2) since (w_i x_i)^2 = w_i^2 x_i^2.
    When ||x||_{w,2} = 0 the weights are returned unchanged.
    """
    weights = _weights(w)
    x = np.asarray(x, dtype=np.float64)
    reg = weighted_sq_norm(x, weights)
    if reg == 0.0:
        return WeightVector(weights.copy(), round_th)
    new = weights - c * (weights * x) ** 2 / reg
    new[new < round_th] = 0.0
    return WeightVector(new, round_th)


def regularized_value(obj: Objective, x: np.ndarray, w: np.ndarray, coef: float) -> Tuple[float, float]:
    """(f(x), f(x) + coef * ||x||_{w,2}^2)."""
    f = obj.value(x)
    return f, f + coef * weighted_sq_norm(x, w)


def regiht_solve(obj: Objective, x0, cfg: RegIhtConfig, S_star: Optional[Iterable[int]] = None,
                 f_star: Optional[float] = None, kappa: Optional[float] = None,
                 beta: Optional[float] = None, theory_mode: bool = False,
                 s: Optional[int] = None) -> Tuple[np.ndarray, RegIhtTrace]:
    """
    Run T iterations of the regularized step followed by the weight update.

    In theory mode the configuration must lie inside the proof's parameter window for
    target sparsity s (default: the size of S_star), see check_theory_window.

    With revert_enabled, x^{t+1} falls back to x^t whenever
    g^{t+1}(x^{t+1}) > g^{t+1}(x^t), where g^{t+1} = f + (4 eta)^{-1} ||.||_{w^{t+1},2}^2.
    If S_star and f_star are given, a DichotomyReport is recorded for every iteration.
    """
    cfg.validate(obj.dim)
    if theory_mode:
        if s is None:
            if S_star is None:
                raise InvalidArgumentError('theory mode needs the target sparsity s or S_star')
            s = len(set(int(i) for i in S_star))
        check_theory_window(cfg, s, kappa if kappa is not None else obj.kappa,
                            beta if beta is not None else obj.beta_estimate)
    x = as_vector(x0, 'x0')
    check_sparsity(x, cfg.s_prime, 'x0')
    w = WeightVector.ones(obj.dim, cfg.round_th)
    coef = 1.0 / (4.0 * cfg.eta)
    diagnose = S_star is not None and f_star is not None
    if diagnose:
        S_star = np.asarray(sorted(set(int(i) for i in S_star)), dtype=int)
        beta = beta if beta is not None else obj.beta_estimate
        kappa = kappa if kappa is not None else obj.kappa
        if beta is None or kappa is None:
            raise InvalidArgumentError('dichotomy diagnostics need beta and kappa estimates')

    trace = RegIhtTrace(weights_initial=w.w.copy())
    f, g = regularized_value(obj, x, w.w, coef)
    trace.append(TraceRecord(0, f, g, int(np.count_nonzero(x)), w.mass, 'start'))
    for t in range(cfg.T):
        x_next = regiht_step(obj, x, w, cfg)
        if diagnose:
            trace.dichotomy.append(dichotomy_check(obj, x, w, x_next, S_star, f_star, kappa, beta,
                                                   s_prime=cfg.s_prime, strict=False))
        w_next = weight_update(x, w, cfg.c, cfg.round_th)
        f_next, g_next = regularized_value(obj, x_next, w_next.w, coef)
        branch = 'step'
        if cfg.revert_enabled:
            g_stay = f + coef * weighted_sq_norm(x, w_next.w)
            if g_next > g_stay:
                x_next, f_next, g_next = x, f, g_stay
                branch = 'revert'
                trace.reverts += 1
        trace.append(TraceRecord(t + 1, f_next, g_next, int(np.count_nonzero(x_next)), w_next.mass, branch))
        if ConfigManager.should_log_iteration(t + 1):
            ConfigManager.console_print(
                f'RegIHT iter {t + 1}: f={f_next:.6e} g={g_next:.6e} weight_mass={w_next.mass:.3f} [{branch}]')
        x, w, f = x_next, w_next, f_next
    trace.weights_final = w.w.copy()
    return x, trace


def theory_params(kappa: float, beta: float, s: int, f_gap: float, eps: float,
                  s_prime: Optional[int] = None) -> TheoryParams:
    """
    Parameters of the convergence theorem.

    s' = ceil((128 kappa + 2) s) unless a larger s' is passed, eta = 1/(2 beta),
    T = ceil(64 (kappa + 1) ln(f_gap / eps)) (at least 1) and c = s'/(4T).
    `window_feasible` tells whether 8 s (4 kappa + 6) / T <= c, which needs
    s' >= 32 (4 kappa + 6) s (see proof_s_prime).
    """
    if kappa < 1:
        raise InvalidArgumentError(f'kappa must be at least 1, got {kappa}')
    if f_gap <= 0 or eps <= 0 or beta <= 0:
        raise InvalidArgumentError('f_gap, eps and beta must be positive')
    floor = math.ceil((128.0 * kappa + 2.0) * s)
    if s_prime is None:
        s_prime = floor
    elif s_prime < floor:
        raise PreconditionError(f"s'={s_prime} is below the floor {floor}", "s' >= (128 kappa + 2) s")
    T = max(1, math.ceil(64.0 * (kappa + 1.0) * math.log(f_gap / eps)))
    c = s_prime / (4.0 * T)
    window_feasible = 8.0 * s * (4.0 * kappa + 6.0) / T <= c <= s_prime / (4.0 * T)
    return TheoryParams(int(s_prime), 1.0 / (2.0 * beta), c, T, bool(window_feasible))


def proof_s_prime(kappa: float, s: int) -> int:
    """Smallest s' for which the weight step size window of the proof is non-empty."""
    return math.ceil(32.0 * (4.0 * kappa + 6.0) * s)


def check_theory_window(cfg: RegIhtConfig, s: int, kappa: Optional[float], beta: Optional[float],
                        rtol: float = 1e-9) -> None:
    """
    Raise PreconditionError unless cfg satisfies the convergence theorem for sparsity s:
    s' >= (128 kappa + 2) s, eta = 1/(2 beta) and 8 s (4 kappa + 6) / T <= c <= s'/(4T).
    """
    if kappa is None or beta is None:
        raise InvalidArgumentError('theory mode needs beta and kappa estimates')
    if cfg.s_prime < (128.0 * kappa + 2.0) * s:
        raise PreconditionError(f"s'={cfg.s_prime} is below (128 kappa + 2) s for s={s}",
                                "s' >= (128 kappa + 2) s")
    if abs(cfg.eta - 1.0 / (2.0 * beta)) > 1e-12 * cfg.eta:
        raise PreconditionError(f'eta={cfg.eta} differs from 1/(2 beta)', 'eta = 1/(2 beta)')
    lo = 8.0 * s * (4.0 * kappa + 6.0) / cfg.T
    hi = cfg.s_prime / (4.0 * cfg.T)
    if not lo * (1.0 - rtol) <= cfg.c <= hi * (1.0 + rtol):
        raise PreconditionError(f'c={cfg.c} lies outside the window [{lo}, {hi}]',
                                "8 s (4 kappa + 6) / T <= c <= s'/(4T)")


def dichotomy_check(obj: Objective, x, w, x_next, S_star: Iterable[int], f_star: float, kappa: float,
                    beta: float, s_prime: Optional[int] = None, eta: Optional[float] = None,
                    strict: bool = True, tol: float = 1e-12) -> DichotomyReport:
    """
    Evaluate the two bullets of the one-step lemma for the step x -> x_next.

    progress:     g(x') <= g(x) - (16 kappa)^{-1} (g(x) - f*), with g = f + (beta/2)||.||_{w,2}^2
                  (only g(x') <= g(x) when g(x) <= f*)
    correlation:  ||x_{S*}||_{w^2,2}^2 >= (4 kappa + 6)^{-1} ||x||_{w,2}^2 and
                  (beta/2)||x_{S*}||_{w^2,2}^2 >= (8 kappa + 8)^{-1} (g(x) - f*)

    With strict=True a violated precondition raises PreconditionError; otherwise the report
    is returned with preconditions_met=False.
    """
    x = np.asarray(x, dtype=np.float64)
    x_next = np.asarray(x_next, dtype=np.float64)
    weights = WeightVector(_weights(w)).w if strict else _weights(w)
    S_star = np.asarray(sorted(set(int(i) for i in S_star)), dtype=int)
    n, s = x.size, S_star.size
    violated = None
    if s_prime is not None and s_prime < (128.0 * kappa + 2.0) * s:
        violated = "s' >= (128 kappa + 2) s"
    elif s_prime is not None and weights.sum() < n - s_prime / 2.0 - 1e-9:
        violated = "||w||_1 >= n - s'/2"
    elif eta is not None and abs(eta - 1.0 / (2.0 * beta)) > 1e-12 * eta:
        violated = 'eta = 1/(2 beta)'
    if violated and strict:
        raise PreconditionError(f'lemma precondition violated: {violated}', violated)

    half_beta = 0.5 * beta
    g_x = obj.value(x) + half_beta * weighted_sq_norm(x, weights)
    g_next = obj.value(x_next) + half_beta * weighted_sq_norm(x_next, weights)
    gap = g_x - f_star
    slack = tol * (1.0 + abs(g_x) + abs(g_next))
    if gap > 0:
        progress_rhs = g_x - gap / (16.0 * kappa)
    else:
        progress_rhs = g_x
    progress_holds = g_next <= progress_rhs + slack

    on_star = weighted_sq_norm(x[S_star], weights[S_star] ** 2) if s else 0.0
    mass_rhs = weighted_sq_norm(x, weights) / (4.0 * kappa + 6.0)
    reg_lhs = half_beta * on_star
    reg_rhs = gap / (8.0 * kappa + 8.0)
    correlation_holds = on_star >= mass_rhs - slack and reg_lhs >= reg_rhs - slack
    return DichotomyReport(bool(progress_holds), bool(correlation_holds), g_next, progress_rhs,
                           on_star, mass_rhs, reg_lhs, reg_rhs, violated is None)


def lifted_weights(w, round_th: float = DEFAULT_ROUND_TH) -> np.ndarray:
    """w with every zero entry lifted to round_th."""
    weights = _weights(w).copy()
    weights[weights == 0.0] = round_th
    return weights


def weight_mass_report(w0, wT, c: float, T: int) -> WeightMassReport:
    """
    Weight-mass accounting of a run started from w0 = 1:
    sum(lift(w0)) - sum(lift(wT)) <= c T and ||1 - wT||_1 <= 2 c T.
    """
    drop = float(lifted_weights(w0).sum() - lifted_weights(wT).sum())
    deficit = float(np.sum(1.0 - _weights(wT)))
    c_T = c * T
    slack = 1e-9 * (1.0 + c_T)
    return WeightMassReport(drop, c_T, deficit, drop <= c_T + slack and deficit <= 2.0 * c_T + slack)


def c_for_preset(preset: str, s_prime: int, T: int, fixed: Optional[float] = None) -> float:
    """Weight step size: 's_prime_over_T' (experiments), 's_prime_over_4T' (theory) or 'fixed'."""
    if preset == 'fixed':
        if fixed is None:
            raise InvalidArgumentError("c_spec 'fixed' needs a value for c")
        return float(fixed)
    T = max(T, 1)
    if preset == 's_prime_over_T':
        return s_prime / T
    if preset == 's_prime_over_4T':
        return s_prime / (4.0 * T)
    raise InvalidArgumentError(f'unknown weight step size preset {preset!r}')
