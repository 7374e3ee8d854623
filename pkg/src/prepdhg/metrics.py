"""Symmetric positive-definite preconditioner metrics.

A ``Metric`` supplies ``apply`` (Mz), ``solve`` (M^{-1}r) and the quadratic
form; realizations cover scalar and diagonal matrices, dense factorized
matrices, Gram shifts gamma*tau*K*K^T + P (with a closed-form inverse for
the doubly-stochastic constraint operator), symmetric Gauss-Seidel implied
metrics, and block-diagonal combinations.

``check_condition`` estimates the squared norm that governs convergence of
the preconditioned primal-dual iteration,

    s = || M2^{-1/2} K (M1 + Sigma_f/2)^{-1/2} ||^2,

by power iteration on the equivalent generalized eigenproblem
K^T M2^{-1} K z = s (M1 + Sigma_f/2) z, and compares it against the 4/3
threshold below which the iteration provably converges.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .exceptions import ConfigurationError
from .operators import BirkhoffConstraint, LinearOperator

#: strictness margin subtracted from the 4/3 threshold; the boundary itself
#: is exactly where non-convergent instances exist, and power iteration only
#: gives approximate values
CHECKER_SLACK = 1e-9

CONDITION_THRESHOLD = 4.0 / 3.0

_FACTOR_CAP = 4096


class Metric:
    """Base class for SPD preconditioners."""

    dim: int

    def apply(self, z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def solve(self, r: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def quad(self, z: np.ndarray) -> float:
        """Quadratic form z^T M z."""
        z = np.asarray(z, dtype=float).ravel()
        return float(np.dot(z, self.apply(z)))

    def _check(self, z):
        z = np.asarray(z, dtype=float).ravel()
        if z.size != self.dim:
            raise ValueError(f"expected length {self.dim}, got {z.size}")
        return z

    def to_dense(self) -> np.ndarray:
        if self.dim > _FACTOR_CAP:
            raise ConfigurationError("metric too large to materialize")
        eye = np.eye(self.dim)
        return np.column_stack([self.apply(eye[:, j]) for j in range(self.dim)])


class ScalarMetric(Metric):
    """M = s * I with s > 0."""

    def __init__(self, s: float, dim: int):
        if s <= 0:
            raise ConfigurationError("scalar metric must be positive")
        self.s = float(s)
        self.dim = int(dim)

    def apply(self, z):
        return self.s * self._check(z)

    def solve(self, r):
        return self._check(r) / self.s

    def diagonal(self):
        return np.full(self.dim, self.s)


class DiagonalMetric(Metric):
    """M = diag(d) with d > 0 entrywise."""

    def __init__(self, d):
        d = np.asarray(d, dtype=float).ravel()
        if np.any(d <= 0):
            raise ConfigurationError("diagonal metric must be positive")
        self.d = d
        self.dim = d.size

    def apply(self, z):
        return self.d * self._check(z)

    def solve(self, r):
        return self._check(r) / self.d

    def diagonal(self):
        return self.d


class DenseMetric(Metric):
    """Dense SPD matrix with a cached Cholesky factorization."""

    def __init__(self, A):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        if A.shape[0] != A.shape[1]:
            raise ConfigurationError("dense metric must be square")
        if not np.allclose(A, A.T, atol=1e-12 * (1 + np.abs(A).max())):
            raise ConfigurationError("dense metric must be symmetric")
        self.A = 0.5 * (A + A.T)
        self.dim = A.shape[0]
        try:
            self._chol = sla.cho_factor(self.A)
        except sla.LinAlgError as exc:
            raise ConfigurationError(f"dense metric not positive definite: {exc}")

    def apply(self, z):
        return self.A @ self._check(z)

    def solve(self, r):
        return sla.cho_solve(self._chol, self._check(r))


class GramShiftMetric(Metric):
    """M = gamma * tau * K K^T + P with P = theta*I or a dense SPD matrix.

    For the doubly-stochastic constraint operator with P = theta*I the solve
    uses the closed-form inverse of (K K^T + theta' I); otherwise the Gram
    matrix is assembled and factorized once (small operators only).
    """

    def __init__(self, gamma: float, tau: float, op: LinearOperator,
                 theta: float = None, P: DenseMetric = None):
        if (theta is None) == (P is None):
            raise ConfigurationError("give exactly one of theta or P")
        if gamma < 0 or tau <= 0:
            raise ConfigurationError("need gamma >= 0 and tau > 0")
        self.gamma, self.tau, self.op = float(gamma), float(tau), op
        self.dim = op.rows
        self.theta = None if theta is None else float(theta)
        self.P = P
        if P is not None and P.dim != self.dim:
            raise ConfigurationError("P dimension mismatch")
        if self.theta is not None and self.theta < 0:
            raise ConfigurationError("theta must be nonnegative")
        self._gt = self.gamma * self.tau
        self._closed_form = (isinstance(op, BirkhoffConstraint)
                             and self.theta is not None and self._gt > 0)
        self._chol = None
        if self.theta == 0.0:
            self._probe_definite()

    def _probe_definite(self):
        # theta = 0 leaves only gamma*tau*K*K^T; demand it is PD
        if self._gt == 0.0:
            raise ConfigurationError("gram-shift with gamma*tau = 0 and theta = 0")
        if isinstance(self.op, BirkhoffConstraint):
            # K K^T always has the null vector (e; -e)
            raise ConfigurationError(
                "gram-shift over the row/column-sum operator needs theta > 0")
        if self.dim > _FACTOR_CAP:
            raise ConfigurationError("cannot probe definiteness at this size")
        w = sla.eigvalsh(self._gt * self.op.gram_dense())
        if w[0] <= 0:
            raise ConfigurationError(
                f"gamma*tau*K*K^T not positive definite (min eig {w[0]:.3e})")

    def apply(self, z):
        z = self._check(z)
        out = self._gt * self.op.apply(self.op.apply_adjoint(z))
        if self.theta is not None:
            out += self.theta * z
        else:
            out += self.P.apply(z)
        return out

    def solve(self, r):
        r = self._check(r)
        if self._closed_form:
            return self._birkhoff_solve(r)
        if self._gt == 0.0:
            if self.theta is not None:
                return r / self.theta
            return self.P.solve(r)
        if self._chol is None:
            if self.dim > _FACTOR_CAP:
                raise ConfigurationError("gram-shift too large to factorize")
            A = self._gt * self.op.gram_dense()
            if self.theta is not None:
                A[np.diag_indices_from(A)] += self.theta
            else:
                A += self.P.A
            self._chol = sla.cho_factor(A)
        return sla.cho_solve(self._chol, r)

    def _birkhoff_solve(self, r):
        # M^{-1} = (gamma*tau)^{-1} (K K^T + theta' I)^{-1}, theta' = theta/(gamma*tau)
        n = self.op.n
        th = self.theta / self._gt
        r1, r2 = r[:n], r[n:]
        s1, s2 = r1.sum(), r2.sum()
        c = 1.0 / (2.0 * n * th + th * th)
        f = n / (n + th)
        out = np.empty_like(r)
        out[:n] = r1 / (n + th) + c * (f * s1 - s2)
        out[n:] = r2 / (n + th) + c * (f * s2 - s1)
        return out / self._gt


class SGSMetric(Metric):
    """Metric implied by one backward+forward block Gauss-Seidel sweep.

    Given a symmetric matrix Q with block partition Q = U^T + D + U (D the
    SPD diagonal blocks, U strictly block upper), represents

        M = (D + U) D^{-1} (D + U^T) = Q + U D^{-1} U^T

    without forming it: ``apply`` runs two triangular block products around
    one block-diagonal solve, and ``solve`` runs the backward sweep, the
    block-diagonal scaling, and the forward sweep.
    """

    def __init__(self, Q, blocks):
        Q = sp.csr_matrix(Q)
        if Q.shape[0] != Q.shape[1]:
            raise ConfigurationError("Q must be square")
        self.dim = Q.shape[0]
        blocks = [np.asarray(b, dtype=int).ravel() for b in blocks]
        if len(blocks) < 1:
            raise ConfigurationError("need at least one block")
        perm = np.concatenate(blocks)
        if perm.size != self.dim or np.unique(perm).size != self.dim:
            raise ConfigurationError("blocks must partition the index range")
        self.perm = perm
        self.inv_perm = np.argsort(perm)
        sizes = [b.size for b in blocks]
        self.offsets = np.cumsum([0] + sizes)
        self.nblocks = len(blocks)
        Qp = Q[perm][:, perm].tocsr()
        self._slices = [slice(self.offsets[i], self.offsets[i + 1])
                        for i in range(self.nblocks)]
        self._diag = []
        upper = sp.lil_matrix((self.dim, self.dim))
        for i, si in enumerate(self._slices):
            Dii = Qp[si, si]
            off = Dii - sp.diags(Dii.diagonal())
            if off.nnz == 0 or abs(off).max() == 0.0:
                dv = Dii.diagonal().copy()
                if np.any(dv <= 0):
                    raise ConfigurationError(f"diagonal block {i} not positive definite")
                self._diag.append(("diag", dv, None))
            else:
                A = Dii.toarray()
                try:
                    self._diag.append(("dense", A, sla.cho_factor(A)))
                except sla.LinAlgError:
                    raise ConfigurationError(f"diagonal block {i} not positive definite")
            for j in range(i + 1, self.nblocks):
                sj = self._slices[j]
                upper[si, sj] = Qp[si, sj]
        self.U = upper.tocsr()
        self.UT = self.U.T.tocsr()

    def _dsolve(self, i, r):
        kind, data, chol = self._diag[i]
        if kind == "diag":
            return r / data
        return sla.cho_solve(chol, r)

    def _dapply(self, z):
        out = np.empty_like(z)
        for i, si in enumerate(self._slices):
            kind, data, _ = self._diag[i]
            out[si] = data * z[si] if kind == "diag" else data @ z[si]
        return out

    def apply(self, z):
        z = self._check(z)[self.perm]
        t = self._dapply(z) + self.UT @ z
        u = np.concatenate([self._dsolve(i, t[si]) for i, si in enumerate(self._slices)])
        out = self._dapply(u) + self.U @ u
        return out[self.inv_perm]

    def solve(self, r):
        r = self._check(r)[self.perm]
        # backward: (D + U) w = r
        w = np.zeros_like(r)
        for i in range(self.nblocks - 1, -1, -1):
            si = self._slices[i]
            rhs = r[si] - self.U[si, :] @ w
            w[si] = self._dsolve(i, rhs)
        # forward: (D + U^T) x = D w
        x = np.zeros_like(r)
        for i in range(self.nblocks):
            si = self._slices[i]
            x[si] = w[si] - self._dsolve(i, self.UT[si, :] @ x)
        return x[self.inv_perm]


class BlockDiagMetric(Metric):
    """Direct sum of metrics acting on stacked blocks."""

    def __init__(self, metrics):
        self.metrics = list(metrics)
        self.dim = sum(m.dim for m in self.metrics)
        self._offsets = np.cumsum([0] + [m.dim for m in self.metrics])

    def _blocks(self, z):
        return [z[lo:hi] for lo, hi in zip(self._offsets[:-1], self._offsets[1:])]

    def apply(self, z):
        z = self._check(z)
        return np.concatenate([m.apply(b) for m, b in zip(self.metrics, self._blocks(z))])

    def solve(self, r):
        r = self._check(r)
        return np.concatenate([m.solve(b) for m, b in zip(self.metrics, self._blocks(r))])


@dataclass
class ConditionReport:
    """Outcome of the convergence-condition check."""

    s_hat: float
    threshold: float
    margin: float
    verdict: str  # "pass-strict" | "pass-unit" | "fail"
    converged: bool
    iterations: int

    @property
    def passed(self) -> bool:
        return self.verdict != "fail"

    @property
    def unit(self) -> bool:
        """True when the stronger s_hat < 1 bound (non-ergodic rates) holds."""
        return self.verdict == "pass-unit"


def _shifted_solver(M1: Metric, sigma):
    """Return functions applying and solving with A = M1 + diag(sigma)/2."""
    if sigma is None or not np.any(sigma):
        return M1.apply, M1.solve
    sigma = np.asarray(sigma, dtype=float).ravel()
    if sigma.size != M1.dim:
        raise ValueError("sigma length mismatch")
    if np.any(sigma < 0):
        raise ConfigurationError("sigma must be nonnegative")
    half = 0.5 * sigma
    if isinstance(M1, (ScalarMetric, DiagonalMetric)):
        d = M1.diagonal() + half
        if np.any(d <= 0):
            raise ConfigurationError("primal metric not positive definite")
        return (lambda z: d * z), (lambda r: r / d)
    if M1.dim > _FACTOR_CAP:
        raise ConfigurationError("shifted primal metric too large to factorize")
    A = M1.to_dense() + np.diag(half)
    try:
        chol = sla.cho_factor(A)
    except sla.LinAlgError:
        raise ConfigurationError("primal metric not positive definite")
    return (lambda z: A @ z), (lambda r: sla.cho_solve(chol, r))


def check_condition(M1: Metric, sigma_f, M2: Metric, K: LinearOperator,
                    tol: float = 1e-12, max_iter: int = 2000,
                    seed: int = 0) -> ConditionReport:
    """Estimate s = ||M2^{-1/2} K (M1 + Sigma_f/2)^{-1/2}||^2 and judge it.

    Runs power iteration on z <- A^{-1} K^T M2^{-1} K z with A = M1 +
    diag(sigma_f)/2, taking Rayleigh quotients in the A-inner product; this
    avoids any matrix square roots.  The verdict is "fail" when the
    estimate reaches 4/3 (minus a small slack), "pass-unit" when it is
    below 1 (the regime with per-iterate rate guarantees), and
    "pass-strict" in between.
    """
    a_apply, a_solve = _shifted_solver(M1, sigma_f)

    def big_c(z):
        return K.apply_adjoint(M2.solve(K.apply(z)))

    rng = np.random.default_rng(seed)
    z = rng.standard_normal(K.cols)
    z /= np.linalg.norm(z)
    s = 0.0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        cz = big_c(z)
        num = float(np.dot(z, cz))
        den = float(np.dot(z, a_apply(z)))
        s_new = num / den
        if num <= 0:
            s_new = 0.0
            converged = True
            break
        if it > 1 and abs(s_new - s) <= tol * max(abs(s_new), 1e-300):
            s = s_new
            converged = True
            break
        s = s_new
        z = a_solve(cz)
        nz = np.linalg.norm(z)
        if nz == 0:
            converged = True
            s = 0.0
            break
        z /= nz
    if s >= CONDITION_THRESHOLD - CHECKER_SLACK:
        verdict = "fail"
    elif s < 1.0 - CHECKER_SLACK:
        verdict = "pass-unit"
    else:
        verdict = "pass-strict"
    return ConditionReport(s_hat=s, threshold=CONDITION_THRESHOLD,
                           margin=CONDITION_THRESHOLD - s, verdict=verdict,
                           converged=converged, iterations=it)


def build_diag_preconditioner(K: LinearOperator, alpha: float, delta: float,
                              gamma1: float, gamma2: float):
    """Row/column-sum diagonal preconditioners.

    M1 = gamma1 * diag(tau_j) with tau_j = delta + sum_i |K_ij|^(2-alpha) and
    M2 = gamma2 * diag(sigma_i) with sigma_i = delta + sum_j |K_ij|^alpha,
    summing over the nonzero entries only.  The resulting condition estimate
    satisfies s_hat <= 1/(gamma1*gamma2).
    """
    if not 0.0 <= alpha <= 2.0:
        raise ConfigurationError("alpha must lie in [0, 2]")
    if delta < 0:
        raise ConfigurationError("delta must be nonnegative")
    if gamma1 <= 0 or gamma2 <= 0:
        raise ConfigurationError("gamma factors must be positive")
    A = np.abs(K.to_dense())
    nz = A > 0
    tau = delta + np.where(nz, A ** (2.0 - alpha), 0.0).sum(axis=0)
    sig = delta + np.where(nz, A ** alpha, 0.0).sum(axis=1)
    if np.any(tau <= 0) or np.any(sig <= 0):
        raise ConfigurationError(
            "zero row or column encountered; use delta > 0")
    return DiagonalMetric(gamma1 * tau), DiagonalMetric(gamma2 * sig)


def dense_sqrt(M: Metric, cap: int = 64):
    """(M^{1/2}, M^{-1/2}) by symmetric eigendecomposition, small dims only."""
    if M.dim > cap:
        raise ConfigurationError(f"matrix square root restricted to dim <= {cap}")
    A = M.to_dense()
    w, V = sla.eigh(0.5 * (A + A.T))
    if w[0] <= 0:
        raise ConfigurationError("metric not positive definite")
    S = (V * np.sqrt(w)) @ V.T
    Sinv = (V / np.sqrt(w)) @ V.T
    return S, Sinv
