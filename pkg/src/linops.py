"""
Vector and matrix primitives shared by the solvers.

Dense vectors and matrices are plain float64 numpy arrays (matrices in C order);
the design matrix is a scipy CSR matrix. All functions are pure and never modify
their arguments.
"""
from typing import NamedTuple

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from errors import InvalidArgumentError, NumericalError

SVD_RTOL = 1e-7
PINV_RTOL = 1e-10


class SvdTriple(NamedTuple):
    """Thin SVD M = U diag(sigma) V^T with sigma sorted descending."""
    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.sigma) @ self.V.T


def as_vector(x, name: str = 'x') -> np.ndarray:
    """Return `x` as a finite 1-D float64 array."""
    if np.ndim(x) > 1:
        raise InvalidArgumentError(f'{name} must be one-dimensional, got shape {np.shape(x)}')
    v = np.array(x, dtype=np.float64, copy=True).reshape(-1)
    if not np.all(np.isfinite(v)):
        raise InvalidArgumentError(f'{name} has non-finite entries')
    return v


def as_matrix(M, name: str = 'M') -> np.ndarray:
    """Return `M` as a finite, row-major 2-D float64 array."""
    A = np.array(M, dtype=np.float64, copy=True, order='C')
    if A.ndim != 2:
        raise InvalidArgumentError(f'{name} must be two-dimensional, got shape {A.shape}')
    if not np.all(np.isfinite(A)):
        raise InvalidArgumentError(f'{name} has non-finite entries')
    return A


def csr_from_arrays(n_rows: int, n_cols: int, row_offsets, col_indices, values) -> sp.csr_matrix:
    """Build a CSR matrix from raw arrays, rejecting malformed input instead of repairing it."""
    offsets = np.asarray(row_offsets, dtype=np.int64)
    cols = np.asarray(col_indices, dtype=np.int64)
    vals = np.asarray(values, dtype=np.float64)
    if offsets.shape != (n_rows + 1,) or offsets[0] != 0 or offsets[-1] != len(cols):
        raise InvalidArgumentError('row_offsets must have n_rows + 1 entries from 0 to nnz')
    if np.any(np.diff(offsets) < 0):
        raise InvalidArgumentError('row_offsets must be monotone non-decreasing')
    if len(cols) != len(vals):
        raise InvalidArgumentError('col_indices and values differ in length')
    if len(cols) and (cols.min() < 0 or cols.max() >= n_cols):
        raise InvalidArgumentError('column index out of range')
    for i in range(n_rows):
        row = cols[offsets[i]:offsets[i + 1]]
        if np.any(np.diff(row) <= 0):
            raise InvalidArgumentError(f'col_indices of row {i} are not strictly increasing')
    if not np.all(np.isfinite(vals)):
        raise InvalidArgumentError('values has non-finite entries')
    return sp.csr_matrix((vals, cols, offsets), shape=(n_rows, n_cols))


def as_csr(A, name: str = 'A') -> sp.csr_matrix:
    """Convert a dense or sparse matrix to canonical CSR (sorted, no duplicates, finite)."""
    if sp.issparse(A):
        out = sp.csr_matrix(A, dtype=np.float64, copy=True)
    else:
        out = sp.csr_matrix(as_matrix(A, name))
    out.sum_duplicates()
    out.sort_indices()
    if not np.all(np.isfinite(out.data)):
        raise InvalidArgumentError(f'{name} has non-finite entries')
    return out


def top_k_indices(x: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest |x_i|, ties going to the smaller index."""
    # stable sort keeps index order among equal magnitudes
    return np.argsort(-np.abs(x), kind='stable')[:k]


def hard_threshold_vec(x, k: int) -> np.ndarray:
    """H_k(x): keep the k largest-magnitude entries of x and zero the rest."""
    x = np.asarray(x, dtype=np.float64)
    if k < 0 or k > x.size:
        raise InvalidArgumentError(f'k={k} must lie in [0, {x.size}]')
    out = np.zeros_like(x)
    keep = top_k_indices(x, k)
    out[keep] = x[keep]
    return out


def support(x) -> np.ndarray:
    return np.flatnonzero(np.asarray(x))


def weighted_sq_norm(x, w) -> float:
    """sum_i w_i x_i^2."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if x.shape != w.shape:
        raise InvalidArgumentError(f'dimension mismatch: x has shape {x.shape}, w has shape {w.shape}')
    if np.any(w < 0):
        raise InvalidArgumentError('weights must be non-negative')
    return float(np.dot(w, x * x))


def svd(M) -> SvdTriple:
    """Thin SVD with the residual checked against 1e-7 (1 + ||M||_F)."""
    M = np.asarray(M, dtype=np.float64)
    if not np.all(np.isfinite(M)):
        raise InvalidArgumentError('M has non-finite entries')
    if min(M.shape) == 0:
        k = 0
        return SvdTriple(np.zeros((M.shape[0], k)), np.zeros(k), np.zeros((M.shape[1], k)))
    try:
        U, sigma, Vt = np.linalg.svd(M, full_matrices=False)
    except np.linalg.LinAlgError as e:
        raise NumericalError(f'SVD did not converge: {e}')
    triple = SvdTriple(U, np.maximum(sigma, 0.0), Vt.T.copy())
    residual = float(np.linalg.norm(triple.reconstruct() - M))
    if residual > SVD_RTOL * (1.0 + np.linalg.norm(M)):
        raise NumericalError('SVD reconstruction check failed', residual)
    return triple


def hard_threshold_mat(M, r: int) -> np.ndarray:
    """H_r(M): the top r singular components of M."""
    M = np.asarray(M, dtype=np.float64)
    if r < 0 or r > min(M.shape):
        raise InvalidArgumentError(f'r={r} must lie in [0, {min(M.shape)}]')
    U, sigma, V = svd(M)
    return (U[:, :r] * sigma[:r]) @ V[:, :r].T


def projector_im(M) -> np.ndarray:
    """Orthogonal projector onto the column space of M, M (M^T M)^+ M^T."""
    M = np.asarray(M, dtype=np.float64)
    U, sigma, _ = svd(M)
    if sigma.size == 0 or sigma[0] == 0.0:
        return np.zeros((M.shape[0], M.shape[0]))
    Uk = U[:, sigma > PINV_RTOL * sigma[0]]
    P = Uk @ Uk.T
    return 0.5 * (P + P.T)


def numeric_rank(M, rtol: float = 1e-9) -> int:
    """Number of singular values above rtol * sigma_1."""
    sigma = np.linalg.svd(np.asarray(M, dtype=np.float64), compute_uv=False)
    if sigma.size == 0 or sigma[0] == 0.0:
        return 0
    return int(np.sum(sigma > rtol * sigma[0]))


def frob_inner(A, B) -> float:
    """<A, B> = Tr[A^T B]."""
    return float(np.vdot(A, B))


def sym_eigh(S):
    """Eigen-decomposition of the symmetric part of S, eigenvalues in descending order."""
    S = np.asarray(S, dtype=np.float64)
    lam, vecs = scipy.linalg.eigh(0.5 * (S + S.T))
    return lam[::-1], vecs[:, ::-1]


def psd_sqrt(S) -> np.ndarray:
    """Symmetric square root of a PSD matrix; negative roundoff eigenvalues are clamped to 0."""
    lam, vecs = sym_eigh(S)
    root = (vecs * np.sqrt(np.clip(lam, 0.0, None))) @ vecs.T
    return 0.5 * (root + root.T)


def top_eig_projector(S, r: int, rtol: float = PINV_RTOL) -> np.ndarray:
    """Projector onto the span of the top-r eigenvectors of S with eigenvalue > rtol * lambda_1."""
    lam, vecs = sym_eigh(S)
    n = lam.size
    if n == 0 or r <= 0 or lam[0] <= 0.0:
        return np.zeros((n, n))
    keep = vecs[:, :r][:, lam[:r] > rtol * lam[0]]
    P = keep @ keep.T
    return 0.5 * (P + P.T)


def trace_top(S, r: int) -> float:
    """Tr[H_r(S)] for a symmetric PSD S: the sum of its r largest eigenvalues."""
    lam, _ = sym_eigh(S)
    return float(np.sum(np.clip(lam[:r], 0.0, None)))
