"""
Convex objectives f(x) with gradients and curvature estimates.

An objective is immutable after construction; value() and gradient() are pure,
so a single instance can be shared by concurrent solves.
"""
from abc import ABC, abstractmethod
from functools import cached_property
from typing import List, Optional, Tuple

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, aslinearoperator, eigsh
from scipy.special import expit

from errors import ConvergenceError, InvalidArgumentError, NumericalError
from linops import as_csr, as_vector
from utils import ConfigManager

# Exact eigen-solves of A^T A are only attempted up to this dimension.
DENSE_EIG_MAX_DIM = 2000
DENSE_OPTIMUM_MAX_ITERS = 100_000


class Objective(ABC):
    """Interface of a differentiable convex function on R^dim."""

    @property
    @abstractmethod
    def dim(self) -> int:
        pass

    @abstractmethod
    def value(self, x: np.ndarray) -> float:
        pass

    @abstractmethod
    def gradient(self, x: np.ndarray) -> np.ndarray:
        pass

    def value_grad(self, x: np.ndarray) -> Tuple[float, np.ndarray]:
        return self.value(x), self.gradient(x)

    @property
    def beta_estimate(self) -> Optional[float]:
        return None

    @property
    def alpha_estimate(self) -> Optional[float]:
        return None

    @property
    def kappa(self) -> Optional[float]:
        """beta / alpha, or None unless both estimates exist and alpha > 0."""
        beta, alpha = self.beta_estimate, self.alpha_estimate
        if beta is None or alpha is None or alpha <= 0.0:
            return None
        return beta / alpha

    def _check_dim(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.dim,):
            raise InvalidArgumentError(f'dimension mismatch: expected ({self.dim},), got {x.shape}')
        return x


def design_to_dense(A) -> np.ndarray:
    """Dense copy of a CSR matrix, ndarray or LinearOperator."""
    if sp.issparse(A):
        return A.toarray()
    if isinstance(A, LinearOperator):
        return A.matmat(np.eye(A.shape[1]))
    return np.asarray(A, dtype=np.float64)


class StandardizedDesign(LinearOperator):
    """
    Implicit form of a column-centered, column-scaled design matrix.

    Represents (A - 1 mean^T) diag(1/scale) restricted to the retained columns
    without densifying A. `explicit()` returns the same matrix stored densely in CSR.
    """

    def __init__(self, A: sp.csr_matrix, means: np.ndarray, scales: np.ndarray, kept: np.ndarray,
                 dropped: List[int]):
        super().__init__(np.float64, A.shape)
        self.csr = A
        self.means = means
        self.scales = scales
        self.kept = kept
        self.dropped = dropped

    def _matvec(self, x):
        z = np.asarray(x, dtype=np.float64).reshape(-1) / self.scales
        return self.csr @ z - np.dot(self.means, z)

    def _rmatvec(self, y):
        y = np.asarray(y, dtype=np.float64).reshape(-1)
        return (self.csr.T @ y - self.means * y.sum()) / self.scales

    def explicit(self) -> sp.csr_matrix:
        dense = (self.csr.toarray() - self.means[None, :]) / self.scales[None, :]
        return sp.csr_matrix(dense)

    def toarray(self) -> np.ndarray:
        return self.explicit().toarray()


def preprocess_design(A, explicit: bool = False):
    """
    Center every column of A and scale it to unit l2 norm.

    Columns that are constant (zero norm after centering) are dropped; their original
    indices are listed in `.dropped` of the returned design and reported on the console.
    Returns a StandardizedDesign, or its explicit CSR form when `explicit` is true
    (the dropped list is then returned alongside).
    """
    A = as_csr(A)
    m, n = A.shape
    if m == 0:
        raise InvalidArgumentError('cannot preprocess a design without rows')
    col_sq = np.asarray(A.multiply(A).sum(axis=0)).reshape(-1)
    means = np.asarray(A.sum(axis=0)).reshape(-1) / m
    # sum_i (a_ij - mean_j)^2 over stored entries plus the implicit zeros, without cancellation
    csc = A.tocsc()
    stored = np.diff(csc.indptr)
    cols = np.repeat(np.arange(n), stored)
    centered_sq = (np.bincount(cols, weights=(csc.data - means[cols]) ** 2, minlength=n)
                   + (m - stored) * means ** 2)
    constant = centered_sq <= 1e-24 * col_sq
    dropped = [int(j) for j in np.flatnonzero(constant)]
    kept = np.flatnonzero(~constant)
    if dropped:
        ConfigManager.console_print(f'Preprocessing: dropped {len(dropped)} constant column(s): {dropped[:10]}')
    design = StandardizedDesign(A[:, kept].tocsr(), means[kept], np.sqrt(centered_sq[kept]), kept, dropped)
    if explicit:
        return design.explicit(), dropped
    return design


def smoothness_estimate(s_prime: int) -> float:
    """
    beta := s' for a preprocessed design.

    With unit-norm columns, ||A u||^2 <= (sum_i |u_i| ||A_i||)^2 <= s' ||u||^2 for any s'-sparse u.
    """
    if s_prime < 1:
        raise InvalidArgumentError(f"s' must be at least 1, got {s_prime}")
    return float(s_prime)


class LeastSquares(Objective):
    """f(x) = 1/2 ||Ax - b||^2."""

    def __init__(self, A, b, beta: Optional[float] = None):
        self.A = A if isinstance(A, LinearOperator) else as_csr(A)
        self.b = as_vector(b, 'b')
        if self.A.shape[0] != self.b.size:
            raise InvalidArgumentError(f'A has {self.A.shape[0]} rows but b has {self.b.size} entries')
        self._op = aslinearoperator(self.A)
        self._beta = beta

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    def residual(self, x) -> np.ndarray:
        return self._op.matvec(self._check_dim(x)) - self.b

    def value(self, x) -> float:
        r = self.residual(x)
        return 0.5 * float(np.dot(r, r))

    def gradient(self, x) -> np.ndarray:
        return self._op.rmatvec(self.residual(x))

    def value_grad(self, x):
        return ls_value_grad(self, x)

    @cached_property
    def _gram_spectrum(self) -> Optional[Tuple[float, float]]:
        n = self.dim
        if n > DENSE_EIG_MAX_DIM:
            return None
        dense = design_to_dense(self.A)
        lam = scipy.linalg.eigvalsh(dense.T @ dense)
        return float(max(lam[0], 0.0)), float(lam[-1])

    @property
    def beta_estimate(self) -> Optional[float]:
        if self._beta is not None:
            return float(self._beta)
        spectrum = self._gram_spectrum
        if spectrum is not None:
            return spectrum[1]
        return self._lanczos_beta

    @cached_property
    def _lanczos_beta(self) -> float:
        gram = LinearOperator((self.dim, self.dim), matvec=lambda v: self._op.rmatvec(self._op.matvec(v)),
                              dtype=np.float64)
        return float(eigsh(gram, k=1, which='LA', return_eigenvectors=False)[0])

    @property
    def alpha_estimate(self) -> Optional[float]:
        spectrum = self._gram_spectrum
        return None if spectrum is None else spectrum[0]


def ls_value_grad(obj: LeastSquares, x) -> Tuple[float, np.ndarray]:
    """Value 1/2||Ax-b||^2 and gradient A^T(Ax-b) from a single residual."""
    r = obj.residual(x)
    return 0.5 * float(np.dot(r, r)), obj._op.rmatvec(r)


class RidgeLogistic(Objective):
    """f(x) = -sum_i [b_i log s(Ax)_i + (1-b_i) log(1-s(Ax)_i)] + (rho/2)||x||^2."""

    def __init__(self, A, b, rho: float = 0.1):
        self.A = A if isinstance(A, LinearOperator) else as_csr(A)
        self.b = as_vector(b, 'b')
        if self.A.shape[0] != self.b.size:
            raise InvalidArgumentError(f'A has {self.A.shape[0]} rows but b has {self.b.size} entries')
        if not np.all((self.b == 0.0) | (self.b == 1.0)):
            raise InvalidArgumentError('logistic labels must be 0 or 1')
        if rho < 0:
            raise InvalidArgumentError(f'rho must be non-negative, got {rho}')
        self.rho = float(rho)
        self._op = aslinearoperator(self.A)

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    def value(self, x) -> float:
        return logistic_value_grad(self, x)[0]

    def gradient(self, x) -> np.ndarray:
        return logistic_value_grad(self, x)[1]

    def value_grad(self, x):
        return logistic_value_grad(self, x)

    @cached_property
    def _design_beta(self) -> float:
        return LeastSquares(self.A, np.zeros(self.A.shape[0])).beta_estimate

    @property
    def beta_estimate(self) -> Optional[float]:
        # the logistic Hessian is bounded by A^T A / 4 + rho I
        return self._design_beta / 4.0 + self.rho

    @property
    def alpha_estimate(self) -> Optional[float]:
        return self.rho if self.rho > 0 else None


def logistic_value_grad(obj: RidgeLogistic, x) -> Tuple[float, np.ndarray]:
    """
    Value and gradient of the ridge logistic loss.

    Each log term equals softplus(z) - b z with z = Ax, computed with logaddexp so
    that large |z| neither overflows nor takes log(0).
    """
    x = obj._check_dim(x)
    z = obj._op.matvec(x)
    loss = float(np.sum(np.logaddexp(0.0, z) - obj.b * z))
    value = loss + 0.5 * obj.rho * float(np.dot(x, x))
    grad = obj._op.rmatvec(expit(z) - obj.b) + obj.rho * x
    return value, grad


def dense_optimum(obj: Objective, tol: float = 1e-8, x0=None,
                  max_iters: int = DENSE_OPTIMUM_MAX_ITERS) -> np.ndarray:
    """
    Unconstrained minimizer x** with ||grad f(x**)|| <= tol.

    Least squares runs conjugate gradient on the normal equations (CGLS form);
    any other objective runs gradient descent with Armijo backtracking.
    Raises ConvergenceError carrying the best iterate when max_iters is hit.
    """
    if tol <= 0:
        raise InvalidArgumentError(f'tol must be positive, got {tol}')
    x = np.zeros(obj.dim) if x0 is None else as_vector(x0, 'x0')
    if isinstance(obj, LeastSquares):
        return _cgls(obj, x, tol, max_iters)
    return _backtracking_descent(obj, x, tol, max_iters)


def _cgls(obj: LeastSquares, x: np.ndarray, tol: float, max_iters: int) -> np.ndarray:
    op = obj._op
    r = obj.b - op.matvec(x)
    s = op.rmatvec(r)
    p = s.copy()
    gamma = float(np.dot(s, s))
    best, best_norm = x.copy(), np.sqrt(gamma)
    for it in range(max_iters):
        if np.sqrt(gamma) <= tol:
            return x
        q = op.matvec(p)
        qq = float(np.dot(q, q))
        if qq == 0.0:
            break
        alpha = gamma / qq
        x = x + alpha * p
        # refresh the residual now and then to limit drift
        r = obj.b - op.matvec(x) if it % 50 == 49 else r - alpha * q
        s = op.rmatvec(r)
        gamma_new = float(np.dot(s, s))
        if not np.isfinite(gamma_new):
            raise NumericalError('non-finite residual in conjugate gradient')
        if np.sqrt(gamma_new) < best_norm:
            best, best_norm = x.copy(), np.sqrt(gamma_new)
        p = s + (gamma_new / gamma) * p
        gamma = gamma_new
    final = float(np.linalg.norm(obj.gradient(x)))
    if final <= tol:
        return x
    raise ConvergenceError('conjugate gradient did not reach the gradient tolerance', best, best_norm)


def _backtracking_descent(obj: Objective, x: np.ndarray, tol: float, max_iters: int) -> np.ndarray:
    f, g = obj.value_grad(x)
    beta = obj.beta_estimate
    step = 1.0 / beta if beta else 1.0
    for _ in range(max_iters):
        gg = float(np.dot(g, g))
        if np.sqrt(gg) <= tol:
            return x
        t = 2.0 * step
        while True:
            x_new = x - t * g
            f_new = obj.value(x_new)
            if f_new <= f - 0.5 * t * gg:
                break
            t *= 0.5
            if t < 1e-20:
                raise ConvergenceError('line search failed', x, float(np.sqrt(gg)))
        x = x_new
        f, g = obj.value_grad(x)
        step = t
    raise ConvergenceError('gradient descent did not reach the gradient tolerance', x,
                           float(np.linalg.norm(g)))


def gradient_check(obj: Objective, x, h: float = 1e-5) -> float:
    """max_i |central difference_i - grad_i| / (1 + |grad_i|)."""
    if h <= 0:
        raise InvalidArgumentError(f'h must be positive, got {h}')
    x = as_vector(x)
    g = obj.gradient(x)
    worst = 0.0
    e = np.zeros_like(x)
    for i in range(x.size):
        e[i] = h
        fd = (obj.value(x + e) - obj.value(x - e)) / (2.0 * h)
        e[i] = 0.0
        worst = max(worst, abs(fd - g[i]) / (1.0 + abs(g[i])))
    return worst


def convexity_gap(obj: Objective, x, y) -> float:
    """f((x+y)/2) - (f(x)+f(y))/2; never above roundoff for a convex f."""
    x, y = as_vector(x), as_vector(y)
    return obj.value(0.5 * x + 0.5 * y) - 0.5 * obj.value(x) - 0.5 * obj.value(y)
