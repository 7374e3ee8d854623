"""Linear operators used by the saddle-point solvers.

Every operator represents a matrix K acting between flat numpy vectors and
exposes ``apply`` (Kx) and ``apply_adjoint`` (K^T y).  Dense and sparse
wrappers are provided next to the matrix-free realizations used by the
benchmark problems: the 2D grid divergence, the doubly-stochastic
(row-sum/column-sum) constraint operator, and vertical stacking.
"""

from typing import NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.io import mmread


class LinearOperator:
    """Base class: an immutable m-by-n linear map with an explicit adjoint."""

    rows: int
    cols: int

    @property
    def shape(self):
        return (self.rows, self.cols)

    def apply(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def apply_adjoint(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _check_in(self, x, n, name):
        if type(x) is np.ndarray and x.ndim == 1 and x.dtype == np.float64:
            if x.size != n:
                raise ValueError(f"{name}: expected length {n}, got {x.size}")
            return x
        x = np.asarray(x, dtype=float).ravel()
        if x.size != n:
            raise ValueError(f"{name}: expected length {n}, got {x.size}")
        return x

    def to_dense(self) -> np.ndarray:
        """Materialize the matrix column by column (small operators only)."""
        if self.rows * self.cols > 1 << 22:
            raise ValueError("operator too large to materialize")
        cols = np.eye(self.cols)
        return np.column_stack([self.apply(cols[:, j]) for j in range(self.cols)])

    def gram_dense(self) -> np.ndarray:
        """Dense K K^T, used when factorizing Gram-shift metrics."""
        A = self.to_dense()
        return A @ A.T


class DenseOperator(LinearOperator):
    """K given as a dense 2D array."""

    def __init__(self, A):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.rows, self.cols = self.A.shape

    def apply(self, x):
        return self.A @ self._check_in(x, self.cols, "apply")

    def apply_adjoint(self, y):
        return self.A.T @ self._check_in(y, self.rows, "apply_adjoint")

    def to_dense(self):
        return self.A.copy()


class SparseOperator(LinearOperator):
    """K given as a scipy CSR matrix."""

    def __init__(self, A):
        self.A = sp.csr_matrix(A)
        self.rows, self.cols = self.A.shape
        self._AT = sp.csr_matrix(self.A.T)

    def apply(self, x):
        return self.A @ self._check_in(x, self.cols, "apply")

    def apply_adjoint(self, y):
        return self._AT @ self._check_in(y, self.rows, "apply_adjoint")

    def to_dense(self):
        return self.A.toarray()

    def gram_dense(self):
        return (self.A @ self._AT).toarray()


class GridDivergence(LinearOperator):
    """Discrete divergence of a two-component flux on an M-by-N grid.

    The flux vector stacks the row-major flattenings of the components m1
    (vertical) and m2 (horizontal), each of shape (M, N).  The stencil is

        div(m)[i, j] = h * (m1[i,j] - m1[i-1,j] + m2[i,j] - m2[i,j-1])

    with zero outside the grid and the structural zeros m1[M-1, :] = 0 and
    m2[:, N-1] = 0 enforced on input; the adjoint (the negative discrete
    gradient) produces zeros in those slots.
    """

    def __init__(self, M: int, N: int, h: float = 1.0):
        if M < 1 or N < 1:
            raise ValueError("grid dimensions must be positive")
        self.M, self.N, self.h = int(M), int(N), float(h)
        self.rows = self.M * self.N
        self.cols = 2 * self.M * self.N

    def boundary_mask(self) -> np.ndarray:
        """Boolean mask of the structurally-zero flux entries."""
        M, N = self.M, self.N
        m1 = np.zeros((M, N), dtype=bool)
        m2 = np.zeros((M, N), dtype=bool)
        m1[M - 1, :] = True
        m2[:, N - 1] = True
        return np.concatenate([m1.ravel(), m2.ravel()])

    def apply(self, x):
        x = self._check_in(x, self.cols, "apply")
        M, N = self.M, self.N
        m1 = x[: M * N].reshape(M, N).copy()
        m2 = x[M * N :].reshape(M, N).copy()
        m1[M - 1, :] = 0.0
        m2[:, N - 1] = 0.0
        d = m1 + m2
        d[1:, :] -= m1[:-1, :]
        d[:, 1:] -= m2[:, :-1]
        return self.h * d.ravel()

    def apply_adjoint(self, y):
        y = self._check_in(y, self.rows, "apply_adjoint")
        M, N = self.M, self.N
        Y = y.reshape(M, N)
        a1 = np.zeros((M, N))
        a2 = np.zeros((M, N))
        a1[: M - 1, :] = Y[: M - 1, :] - Y[1:, :]
        a2[:, : N - 1] = Y[:, : N - 1] - Y[:, 1:]
        return self.h * np.concatenate([a1.ravel(), a2.ravel()])

    def to_sparse(self) -> sp.csr_matrix:
        """Assemble the divergence matrix in CSR form."""
        M, N, h = self.M, self.N, self.h
        idx = np.arange(M * N).reshape(M, N)
        rows, cols, vals = [], [], []

        def add(r, c, v):
            rows.append(r.ravel())
            cols.append(c.ravel())
            vals.append(np.full(r.size, v))

        # m1 contributes +h at (i,j) for i < M-1 and -h at (i+1,j)
        free1 = idx[: M - 1, :]
        add(free1, free1, h)
        add(idx[1:, :], free1, -h)
        # m2 contributes +h at (i,j) for j < N-1 and -h at (i,j+1)
        free2 = idx[:, : N - 1]
        add(free2, M * N + free2, h)
        add(idx[:, 1:], M * N + free2, -h)
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        vals = np.concatenate(vals)
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.rows, self.cols))

    def gram_dense(self):
        A = self.to_sparse()
        return (A @ A.T).toarray()

    def gram_sparse(self) -> sp.csr_matrix:
        A = self.to_sparse()
        return sp.csr_matrix(A @ A.T)


class BirkhoffConstraint(LinearOperator):
    """Row-sum and column-sum operator for n-by-n matrices, matrix-free.

    Acting on the row-major flattening of X, returns the 2n-vector of row
    sums followed by column sums.  Never materialized: it is rank-deficient
    and only apply/adjoint are needed.
    """

    def __init__(self, n: int):
        if n < 1:
            raise ValueError("n must be positive")
        self.n = int(n)
        self.rows = 2 * self.n
        self.cols = self.n * self.n

    def apply(self, x):
        x = self._check_in(x, self.cols, "apply")
        X = x.reshape(self.n, self.n)
        return np.concatenate([X.sum(axis=1), X.sum(axis=0)])

    def apply_adjoint(self, y):
        y = self._check_in(y, self.rows, "apply_adjoint")
        y1, y2 = y[: self.n], y[self.n :]
        return (y1[:, None] + y2[None, :]).ravel()


class VStack(LinearOperator):
    """Vertical stack [K1; K2; ...]: apply concatenates, adjoint sums."""

    def __init__(self, children: Sequence[LinearOperator]):
        if not children:
            raise ValueError("need at least one child operator")
        cols = children[0].cols
        if any(c.cols != cols for c in children):
            raise ValueError("children must share the domain dimension")
        self.children = list(children)
        self.cols = cols
        self.rows = sum(c.rows for c in children)
        self._offsets = np.cumsum([0] + [c.rows for c in children])

    def apply(self, x):
        x = self._check_in(x, self.cols, "apply")
        return np.concatenate([c.apply(x) for c in self.children])

    def apply_adjoint(self, y):
        y = self._check_in(y, self.rows, "apply_adjoint")
        out = np.zeros(self.cols)
        for c, lo, hi in zip(self.children, self._offsets[:-1], self._offsets[1:]):
            out += c.apply_adjoint(y[lo:hi])
        return out


class Transpose(LinearOperator):
    """Adjoint view of another operator (used for the 2D gradient)."""

    def __init__(self, op: LinearOperator):
        self.op = op
        self.rows, self.cols = op.cols, op.rows

    def apply(self, x):
        return self.op.apply_adjoint(x)

    def apply_adjoint(self, y):
        return self.op.apply(y)

    def gram_dense(self):
        A = self.to_dense()
        return A @ A.T


class SpectralEstimate(NamedTuple):
    value: float
    converged: bool
    iterations: int


def spectral_norm_sq(op: LinearOperator, tol: float = 1e-10,
                     max_iter: int = 2000, seed: int = 0) -> SpectralEstimate:
    """Estimate ||K||^2 by power iteration on K^T K.

    Starts from a seeded random vector so repeated runs agree bitwise.  Stops
    when the relative change of successive Rayleigh quotients drops below
    ``tol``; the returned value is a lower bound of ||K||^2 up to that
    tolerance.  Non-convergence is flagged, not raised.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(op.cols)
    nv = np.linalg.norm(v)
    if nv == 0 or op.cols == 0:
        return SpectralEstimate(0.0, True, 0)
    v /= nv
    lam = float(np.dot(op.apply(v), op.apply(v)))
    for it in range(1, max_iter + 1):
        w = op.apply_adjoint(op.apply(v))
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return SpectralEstimate(0.0, True, it)
        v = w / nw
        lam_new = float(np.dot(op.apply(v), op.apply(v)))
        if abs(lam_new - lam) <= tol * max(lam_new, 1e-300):
            return SpectralEstimate(lam_new, True, it)
        lam = lam_new
    return SpectralEstimate(lam, False, max_iter)


def load_dense(path) -> DenseOperator:
    """Read a dense operator from whitespace-separated text."""
    return DenseOperator(np.loadtxt(path, ndmin=2))


def load_sparse(path) -> SparseOperator:
    """Read a sparse operator from a Matrix Market coordinate file."""
    return SparseOperator(sp.csr_matrix(mmread(path)))
