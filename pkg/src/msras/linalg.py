"""Sparse symmetric storage, direct factorization, and a dense generalized
symmetric eigensolver that tolerates a singular right-hand matrix.

Everything downstream (assembly, local solves, coarse solves, eigenproblem
reductions) goes through this module. Factorizations are SuperLU in symmetric
mode with a minimum-degree ordering, which for the SPD matrices that occur
here behaves like a sparse LDL^T with a fill-reducing permutation.
"""

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse as sparse
from scipy.sparse.linalg import splu

from .errors import (
    DimensionMismatch,
    IndexOutOfRange,
    NonConvergence,
    NotPositiveDefinite,
    NotSymmetric,
)

_SYM_RTOL = 1e-12


class SparseSym:
    """Sparse symmetric matrix in CSR storage (both triangles stored).

    Symmetry is an invariant checked at construction: the matrix must be
    structurally and numerically symmetric to 1e-12 relative.
    """

    def __init__(self, mat, validate=True):
        mat = sparse.csr_matrix(mat)
        if mat.shape[0] != mat.shape[1]:
            raise DimensionMismatch(f"matrix is {mat.shape[0]}x{mat.shape[1]}, not square")
        if validate:
            scale = np.abs(mat.data).max() if mat.nnz else 0.0
            skew = (mat - mat.T).tocoo()
            if skew.nnz and np.abs(skew.data).max() > _SYM_RTOL * max(scale, 1e-300):
                raise NotSymmetric("matrix is not symmetric to 1e-12 relative")
        self.mat = mat

    @property
    def n(self):
        return self.mat.shape[0]

    @classmethod
    def from_coo(cls, n, rows, cols, vals, validate=True):
        mat = sparse.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
        return cls(mat, validate=validate)

    @classmethod
    def from_dense(cls, arr, validate=True):
        return cls(sparse.csr_matrix(np.asarray(arr, dtype=float)), validate=validate)

    def to_dense(self):
        return self.mat.toarray()

    def __matmul__(self, other):
        return self.mat @ other


class SparseFactor:
    """Direct factorization of a SparseSym, reusable for many solves."""

    def __init__(self, lu, n):
        self._lu = lu
        self.n = n

    def solve(self, rhs):
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape[0] != self.n:
            raise DimensionMismatch(f"rhs has leading dimension {rhs.shape[0]}, expected {self.n}")
        return self._lu.solve(rhs)


def factorize(A):
    """Factorize an SPD SparseSym for repeated solves.

    Uses SuperLU in symmetric mode (minimum-degree ordering on A^T + A, no
    partial pivoting) so the pivots are the usual LDL^T pivots. A zero or
    negative pivot beyond 1e-14 * max|diag| raises NotPositiveDefinite,
    which almost always indicates a constrained dof leaked into the free set.
    """
    mat = A.mat.tocsc()
    diag_scale = np.abs(A.mat.diagonal()).max() if A.n else 0.0
    try:
        lu = splu(
            mat,
            permc_spec="MMD_AT_PLUS_A",
            diag_pivot_thresh=0.0,
            options=dict(SymmetricMode=True),
        )
    except RuntimeError as exc:  # SuperLU reports exact singularity this way
        raise NotPositiveDefinite(str(exc)) from exc
    pivots = lu.U.diagonal()
    if np.any(pivots <= 1e-14 * diag_scale):
        raise NotPositiveDefinite(
            f"smallest pivot {pivots.min():.3e} vs diag scale {diag_scale:.3e}"
        )
    return SparseFactor(lu, A.n)


def solve(factor, rhs):
    """Solve A x = rhs with a previously computed factor."""
    return factor.solve(rhs)


def extract_submatrix(A, idx):
    """Principal submatrix A[idx, idx]; idx must be strictly increasing."""
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size == 0:
        raise IndexOutOfRange("empty index set")
    if idx[0] < 0 or idx[-1] >= A.n:
        raise IndexOutOfRange(f"indices must lie in [0, {A.n})")
    if idx.size > 1 and np.any(np.diff(idx) <= 0):
        raise IndexOutOfRange("indices must be strictly increasing")
    sub = A.mat[idx][:, idx]
    return SparseSym(sub, validate=False)


class DensePencilEig:
    """Finite eigenpairs of K x = lambda M x with M possibly singular.

    eigenvalues are sorted descending; eigenvectors[:, j] pairs with
    eigenvalues[j]. kernel_dim counts the modes with M x ~ 0 (infinite
    eigenvalues); their basis is kept in kernel_vectors.
    """

    def __init__(self, eigenvalues, eigenvectors, kernel_dim, kernel_vectors):
        self.eigenvalues = eigenvalues
        self.eigenvectors = eigenvectors
        self.kernel_dim = kernel_dim
        self.kernel_vectors = kernel_vectors


def _check_dense_sym(name, M):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"{name} must be square")
    scale = np.abs(M).max()
    if scale and np.abs(M - M.T).max() > 1e-10 * scale:
        raise NotSymmetric(f"{name} is not symmetric")
    return 0.5 * (M + M.T)


def dense_generalized_sym_eig(K, M):
    """All finite eigenpairs of the symmetric PSD pencil K x = lambda M x,
    with M possibly singular (the kernel of M carries infinite eigenvalues).

    Solved through the spectral transform mu = lambda / (1 + lambda): the
    shifted pencil K x = mu (K + M) x has a positive definite right-hand side
    whenever ker(K) and ker(M) intersect trivially, mu lies in [0, 1], and
    ker(M) maps to mu = 1 exactly. Working with the bounded spectrum keeps
    the *relative* accuracy of small eigenvalues uniform even when the top
    eigenvalues are 1e6 times larger (high-contrast coefficients do this),
    which a direct Cholesky reduction of M does not.

    Finite eigenvectors are returned M-orthonormal; eigenvalues descend.
    """
    K = _check_dense_sym("K", K)
    M = _check_dense_sym("M", M)
    if K.shape != M.shape:
        raise DimensionMismatch("K and M differ in size")
    n = K.shape[0]

    try:
        ev_m, Q = scipy.linalg.eigh(M)
    except scipy.linalg.LinAlgError as exc:
        raise NonConvergence(str(exc)) from exc
    kernel = ev_m <= 1e-12 * max(ev_m[-1], 0.0)
    kernel_dim = int(np.count_nonzero(kernel))
    Qk = Q[:, kernel]
    if kernel_dim == n:
        return DensePencilEig(np.zeros(0), np.zeros((n, 0)), kernel_dim, Qk)

    try:
        mu, X = scipy.linalg.eigh(K, K + M)
    except scipy.linalg.LinAlgError as exc:
        raise NonConvergence(f"K + M not positive definite or eigensolve failed: {exc}") from exc
    order = np.argsort(mu)[::-1]
    mu = mu[order]
    X = X[:, order]
    # The kernel_dim largest mu sit at 1; the rest map back to finite lambda.
    mu_f = np.clip(mu[kernel_dim:], 0.0, None)
    one_minus = np.maximum(1.0 - mu_f, np.finfo(float).tiny)
    lam = mu_f / one_minus
    V = X[:, kernel_dim:] / np.sqrt(one_minus)  # (K+M)-orthonormal -> M-orthonormal
    return DensePencilEig(lam, V, kernel_dim, Qk)


def mm_write(path, A):
    """Export a SparseSym in Matrix Market coordinate format (symmetric)."""
    scipy.io.mmwrite(str(path), sparse.coo_matrix(sparse.tril(A.mat)), symmetry="symmetric")


def mm_read(path):
    """Import a SparseSym from a Matrix Market coordinate file."""
    mat = scipy.io.mmread(str(path))
    return SparseSym(sparse.csr_matrix(mat))
