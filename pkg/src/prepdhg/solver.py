"""Preconditioned primal-dual hybrid gradient iteration.

One step alternates two metric proximal subproblems with primal
extrapolation factor 2:

    x+ = argmin_x f(x) + <Kx, y>  + 1/2 ||x - x_k||_M1^2
    y+ = argmin_y g*(y) - <K(2 x+ - x_k), y> + 1/2 ||y - y_k||_M2^2

Stopping uses computable upper bounds of the KKT residual built from
consecutive iterates; compact bounds are substituted when g* is linear.
Configuration helpers cover the balanced augmented-Lagrangian specializations
(dual metric gamma*tau*K*K^T + theta*I, optionally realized through one
symmetric Gauss-Seidel block sweep).
"""

import math
import time
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np
import scipy.sparse as sp

from .exceptions import ConfigurationError
from .metrics import (BlockDiagMetric, DiagonalMetric, GramShiftMetric, Metric,
                      ScalarMetric, SGSMetric, _shifted_solver,
                      check_condition)
from .operators import LinearOperator
from .prox import (IndicatorLinfBall, IndicatorSimplex, Linear, Proximable,
                   QuadraticShift, SeparableSum, Zero, project_simplex)

GAMMA_MIN = 0.75


@dataclass
class SaddleProblem:
    """The triple (f, g*, K) of the min-max problem."""

    f: Proximable
    gstar: Proximable
    K: LinearOperator

    def __post_init__(self):
        if self.f.dim != self.K.cols:
            raise ConfigurationError("f dimension does not match K columns")
        if self.gstar.dim != self.K.rows:
            raise ConfigurationError("g* dimension does not match K rows")


@dataclass
class SolverConfig:
    """Metrics, tolerances and bookkeeping for one solve."""

    M1: Metric
    M2: Metric
    tol: float = 1e-8
    max_iter: int = 100000
    residual_mode: str = "khat-full"  # khat-full | khat-linear-g | custom
    x0: Optional[np.ndarray] = None
    y0: Optional[np.ndarray] = None
    record_every: int = 1
    override: bool = False
    blowup: float = 1e12
    bcd_epochs: int = 2
    feas_scale: float = 1.0
    gap_fn: Optional[Callable] = None
    custom_residual: Optional[Callable] = None
    inexact: bool = False
    check_tol: float = 1e-10
    check_max_iter: int = 500

    def __post_init__(self):
        if self.tol < 0:
            raise ConfigurationError("tol must be nonnegative")
        if self.max_iter < 1:
            raise ConfigurationError("max_iter must be positive")
        if self.residual_mode not in ("khat-full", "khat-linear-g", "custom"):
            raise ConfigurationError(f"unknown residual mode {self.residual_mode!r}")
        if self.residual_mode == "custom" and self.custom_residual is None:
            raise ConfigurationError("custom residual mode needs a callable")
        if self.record_every < 1:
            raise ConfigurationError("record_every must be positive")


class HistoryRow(NamedTuple):
    k: int
    rhat_full: float
    rhat_half: float
    gap: float
    elapsed_s: float


@dataclass
class SolveReport:
    status: str  # converged | max-iter | diverged
    iters: int
    history: list
    x_final: np.ndarray
    y_final: np.ndarray
    stop_residual: float = np.nan
    condition: object = None


def _diag_of(M: Metric):
    if isinstance(M, (ScalarMetric, DiagonalMetric)):
        return M.diagonal()
    return None


class BoxQuadBCD:
    """Cyclic exact coordinate descent for a box-constrained quadratic.

    Minimizes 1/2 ||y - y0||_M^2 - <r, y> over ||y||_inf <= radius, running a
    fixed number of epochs over a greedy coloring of the sparsity graph of M
    so that each color block updates in one vectorized pass.
    """

    def __init__(self, M, radius: float, epochs: int = 2):
        M = sp.csr_matrix(M)
        self.M = M
        self.Mc = M.tocsc()
        self.diag = M.diagonal()
        if np.any(self.diag <= 0):
            raise ConfigurationError("BCD needs positive diagonal entries")
        self.radius = float(radius)
        self.epochs = int(epochs)
        n = M.shape[0]
        colors = -np.ones(n, dtype=int)
        indptr, indices = M.indptr, M.indices
        for j in range(n):
            used = {colors[i] for i in indices[indptr[j]:indptr[j + 1]]
                    if i != j and colors[i] >= 0}
            c = 0
            while c in used:
                c += 1
            colors[j] = c
        self.groups = [np.nonzero(colors == c)[0] for c in range(colors.max() + 1)]

    def solve(self, y0: np.ndarray, r: np.ndarray) -> np.ndarray:
        delta = np.zeros_like(y0)
        g = np.zeros_like(y0)  # g = M @ delta, maintained incrementally
        for _ in range(self.epochs):
            for grp in self.groups:
                step = delta[grp] + (r[grp] - g[grp]) / self.diag[grp]
                new = np.clip(y0[grp] + step, -self.radius, self.radius) - y0[grp]
                change = new - delta[grp]
                if np.any(change):
                    delta[grp] = new
                    g += self.Mc[:, grp] @ change
        return y0 + delta


class _Engine:
    """Validated, cached step executor for one (problem, config) pair."""

    def __init__(self, p: SaddleProblem, cfg: SolverConfig):
        self.p, self.cfg = p, cfg
        self.K = p.K
        self.M1, self.M2 = cfg.M1, cfg.M2
        if self.M1.dim != p.K.cols or self.M2.dim != p.K.rows:
            raise ConfigurationError("metric dimensions do not match K")
        self.d1 = _diag_of(self.M1)
        self.d2 = _diag_of(self.M2)
        self._setup_x_update()
        self._setup_y_update()

    # -- x subproblem -------------------------------------------------
    def _setup_x_update(self):
        f = self.p.f
        if self.d1 is not None:
            self._inv_d1 = 1.0 / self.d1
            if isinstance(f, IndicatorSimplex) and isinstance(self.M1, ScalarMetric):
                self._xup = self._x_simplex_scalar
            else:
                self._xup = self._x_prox_diag
        elif isinstance(f, Zero):
            self._xup = self._x_zero
        elif isinstance(f, Linear):
            self._xup = self._x_linear
        elif isinstance(f, QuadraticShift):
            # (M1 + I) x+ = M1 x - K^T y + c
            _, self._qs_solve = _shifted_solver(self.M1, 2.0 * np.ones(f.dim))
            self._xup = self._x_quadratic_shift
        else:
            raise ConfigurationError(
                f"unsupported (f={type(f).__name__}, M1={type(self.M1).__name__}) pair")

    def _x_prox_diag(self, x, Kty):
        return self.p.f.prox(x - Kty * self._inv_d1, self.d1)

    def _x_simplex_scalar(self, x, Kty):
        return project_simplex(x - Kty * self._inv_d1)

    def _x_zero(self, x, Kty):
        return x - self.M1.solve(Kty)

    def _x_linear(self, x, Kty):
        return x - self.M1.solve(Kty + self.p.f.b)

    def _x_quadratic_shift(self, x, Kty):
        return self._qs_solve(self.M1.apply(x) - Kty + self.p.f.c)

    # -- y subproblem -------------------------------------------------
    def _setup_y_update(self):
        g = self.p.gstar
        self.b = None
        if self.d2 is not None:
            self._inv_d2 = 1.0 / self.d2
        if isinstance(g, Linear):
            self.b = g.b
            self._yup = self._y_linear
        elif isinstance(g, Zero):
            self.b = np.zeros(self.K.rows)
            self._yup = self._y_linear
        elif self.d2 is not None:
            if isinstance(g, IndicatorSimplex) and isinstance(self.M2, ScalarMetric):
                self._yup = self._y_simplex_scalar
            else:
                self._yup = self._y_prox_diag
        elif isinstance(g, SeparableSum) and isinstance(self.M2, BlockDiagMetric):
            self._setup_y_blocks()
            self._yup = self._y_blocks
        else:
            raise ConfigurationError(
                f"unsupported (g*={type(g).__name__}, M2={type(self.M2).__name__}) pair")

    def _y_prox_diag(self, y, Kz):
        y_new = self.p.gstar.prox(y + Kz * self._inv_d2, self.d2)
        return y_new, self.d2 * (y_new - y)

    def _y_simplex_scalar(self, y, Kz):
        y_new = project_simplex(y + Kz * self._inv_d2)
        return y_new, self.d2 * (y_new - y)

    def _y_linear(self, y, Kz):
        r = Kz - self.b
        return y + self.M2.solve(r), r

    def _setup_y_blocks(self):
        g, M2 = self.p.gstar, self.M2
        sizes_g = [c.dim for c in g.children]
        sizes_m = [m.dim for m in M2.metrics]
        if sizes_g != sizes_m:
            raise ConfigurationError("g* blocks and M2 blocks do not conform")
        self._yblocks = []
        off = 0
        for gi, mi in zip(g.children, M2.metrics):
            sl = slice(off, off + gi.dim)
            off += gi.dim
            di = _diag_of(mi)
            if isinstance(gi, (Linear, Zero)):
                bi = gi.b if isinstance(gi, Linear) else np.zeros(gi.dim)
                self._yblocks.append(("linear", sl, mi, bi))
            elif di is not None:
                self._yblocks.append(("prox", sl, gi, di, mi))
            elif isinstance(gi, IndicatorLinfBall):
                Ms = _metric_sparse(mi)
                bcd = BoxQuadBCD(Ms, gi.radius, self.cfg.bcd_epochs)
                self._yblocks.append(("bcd", sl, mi, bcd))
            else:
                raise ConfigurationError(
                    f"unsupported y block (g*={type(gi).__name__}, M2={type(mi).__name__})")

    def _y_blocks(self, y, Kz):
        y_new = np.empty_like(y)
        m2dy = np.empty_like(y)
        for blk in self._yblocks:
            kind, sl = blk[0], blk[1]
            if kind == "linear":
                _, _, mi, bi = blk
                r = Kz[sl] - bi
                y_new[sl] = y[sl] + mi.solve(r)
                m2dy[sl] = r
            elif kind == "prox":
                _, _, gi, di, mi = blk
                y_new[sl] = gi.prox(y[sl] + Kz[sl] / di, di)
                m2dy[sl] = di * (y_new[sl] - y[sl])
            else:
                _, _, mi, bcd = blk
                y_new[sl] = bcd.solve(y[sl], Kz[sl])
                m2dy[sl] = mi.apply(y_new[sl] - y[sl])
        return y_new, m2dy

    # -- one step -----------------------------------------------------
    def m1_apply(self, dx):
        return self.d1 * dx if self.d1 is not None else self.M1.apply(dx)

    def step(self, x, y, Kx=None, Kty=None):
        K = self.K
        if Kx is None:
            Kx = K.apply(x)
        if Kty is None:
            Kty = K.apply_adjoint(y)
        x_new = self._xup(x, Kty)
        Kx_new = K.apply(x_new)
        y_new, m2dy = self._yup(y, 2.0 * Kx_new - Kx)
        return x_new, y_new, Kx_new, m2dy


def prepdhg_step(p: SaddleProblem, cfg: SolverConfig, x, y):
    """One iteration of the preconditioned primal-dual update."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    eng = _Engine(p, cfg)
    x_new, y_new, _, _ = eng.step(x, y)
    return x_new, y_new


def residual_hat(p: SaddleProblem, M1: Metric, M2: Metric, x_new, x, y_new, y,
                 x_prev=None, y_prev=None):
    """Computable KKT residual bounds from consecutive iterates.

    Returns (rhat_full, rhat_half): the bound at (x_new, y_new) and, when a
    previous pair is supplied, the bound at (x_new, y); the latter is nan
    otherwise.
    """
    K = p.K
    dx = np.asarray(x_new, dtype=float) - np.asarray(x, dtype=float)
    dy = np.asarray(y_new, dtype=float) - np.asarray(y, dtype=float)
    m1dx = M1.apply(dx)
    full = max(float(np.linalg.norm(K.apply_adjoint(dy) - m1dx)),
               float(np.linalg.norm(K.apply(dx) - M2.apply(dy))))
    half = np.nan
    if x_prev is not None and y_prev is not None:
        t = (K.apply(np.asarray(x) - np.asarray(x_prev))
             + K.apply(np.asarray(x) - np.asarray(x_new))
             - M2.apply(np.asarray(y) - np.asarray(y_prev)))
        half = max(float(np.linalg.norm(m1dx)), float(np.linalg.norm(t)))
    return full, half


def solve(p: SaddleProblem, cfg: SolverConfig) -> SolveReport:
    """Run the iteration until the residual bound meets tol.

    Divergence (iterate blow-up past ``cfg.blowup``) is reported as a
    status, not an error, so counter-example runs terminate cleanly.
    """
    eng = _Engine(p, cfg)
    report_cond = None
    if not cfg.override:
        report_cond = check_condition(cfg.M1, p.f.sigma, cfg.M2, p.K,
                                      tol=cfg.check_tol,
                                      max_iter=cfg.check_max_iter)
        if not report_cond.passed:
            raise ConfigurationError(
                f"metric pair fails the convergence condition "
                f"(s_hat = {report_cond.s_hat:.6f} >= 4/3); "
                f"set override to run anyway")

    x = (np.zeros(p.K.cols) if cfg.x0 is None
         else np.asarray(cfg.x0, dtype=float).ravel().copy())
    y = (np.zeros(p.K.rows) if cfg.y0 is None
         else np.asarray(cfg.y0, dtype=float).ravel().copy())
    K = p.K
    Kx = K.apply(x)
    Kty = K.apply_adjoint(y)
    linear_mode = cfg.residual_mode == "khat-linear-g"
    if linear_mode and eng.b is None:
        raise ConfigurationError("khat-linear-g residual mode needs linear g*")

    history = []
    status = "max-iter"
    iters = cfg.max_iter
    stop_res = np.nan
    Kx_prev = None
    m2dy_prev = None
    msqrt = math.sqrt

    def nrm(v):
        return msqrt(v @ v)

    custom_mode = cfg.residual_mode == "custom"
    xup, yup, Kapply, Kadj = eng._xup, eng._yup, K.apply, K.apply_adjoint
    m1_apply = eng.m1_apply
    tol, blowup, record_every = cfg.tol, cfg.blowup, cfg.record_every
    t0 = time.perf_counter()
    for k in range(1, cfg.max_iter + 1):
        x_new = xup(x, Kty)
        Kx_new = Kapply(x_new)
        y_new, m2dy = yup(y, 2.0 * Kx_new - Kx)
        Kty_new = Kadj(y_new)

        m1dx = m1_apply(x_new - x)
        part_x = nrm(Kty_new - Kty - m1dx)
        rhat_half = None  # filled on recorded rows in khat-full mode
        if linear_mode:
            feas = nrm(Kx_new - eng.b) / cfg.feas_scale
            rhat_full = part_x if part_x > feas else feas
            nm1dx = nrm(m1dx)
            rhat_half = nm1dx if nm1dx > feas else feas
        else:
            part_y = nrm(Kx_new - Kx - m2dy)
            rhat_full = part_x if part_x > part_y else part_y

        if custom_mode:
            stop_res = float(cfg.custom_residual(x_new, y_new, x, y))
        elif linear_mode:
            stop_res = rhat_half
        else:
            stop_res = rhat_full

        done = stop_res <= tol
        blown = max(x_new.max(), -x_new.min(),
                    y_new.max(), -y_new.min()) > blowup
        if done or blown or k == cfg.max_iter or k % record_every == 0:
            if rhat_half is None:
                if Kx_prev is not None:
                    t = (Kx - Kx_prev) + (Kx - Kx_new) - m2dy_prev
                    rhat_half = max(float(nrm(m1dx)), float(nrm(t)))
                else:
                    rhat_half = np.nan
            gap = cfg.gap_fn(x_new, y_new) if cfg.gap_fn is not None else np.nan
            history.append(HistoryRow(k, float(rhat_full), float(rhat_half),
                                      gap, time.perf_counter() - t0))
        Kx_prev, m2dy_prev = Kx, m2dy
        x, y, Kx, Kty = x_new, y_new, Kx_new, Kty_new
        if done:
            status, iters = "converged", k
            break
        if blown:
            status, iters = "diverged", k
            break

    return SolveReport(status=status, iters=iters, history=history,
                       x_final=x, y_final=y, stop_residual=float(stop_res),
                       condition=report_cond)


def duality_gap_matrix_game(K: LinearOperator, x, y) -> float:
    """max_i (Kx)_i - min_j (K^T y)_j for simplex-feasible x, y."""
    x = project_simplex(np.asarray(x, dtype=float).ravel())
    y = project_simplex(np.asarray(y, dtype=float).ravel())
    return float(np.max(K.apply(x)) - np.min(K.apply_adjoint(y)))


@dataclass
class SublinearDiagnostic:
    table: np.ndarray  # columns (t, sqrt(t) * running-min residual)
    flagged: bool


def sublinear_diagnostic(history) -> SublinearDiagnostic:
    """Scaled running-minimum residual curve sqrt(t) * min_{k<=t} rhat_k.

    Converged runs should see this curve flatten or decay; the flag is
    raised when the final value exceeds 1.2x the value at a quarter of the
    horizon, which is inconsistent with the expected o(1/sqrt(t)) decay.
    """
    rows = list(history)
    if not rows:
        raise ValueError("history is empty")
    if isinstance(rows[0], HistoryRow):
        ks = np.array([r.k for r in rows], dtype=float)
        rh = np.array([r.rhat_full for r in rows], dtype=float)
    else:
        arr = np.asarray(rows, dtype=float)
        ks, rh = arr[:, 0], arr[:, 1]
    runmin = np.minimum.accumulate(rh)
    scaled = np.sqrt(ks) * runmin
    quarter = ks[-1] / 4.0
    iq = int(np.searchsorted(ks, quarter, side="right")) - 1
    iq = max(iq, 0)
    flagged = bool(scaled[-1] > 1.2 * scaled[iq])
    return SublinearDiagnostic(table=np.column_stack([ks, scaled]), flagged=flagged)


def _metric_sparse(M: Metric):
    """Sparse matrix of a metric, for inner BCD setup."""
    if isinstance(M, GramShiftMetric):
        op = M.op
        if hasattr(op, "to_sparse"):
            A = op.to_sparse()
            G = (M._gt * (A @ A.T)).tolil()
            if M.theta is not None:
                G.setdiag(G.diagonal() + M.theta)
                return G.tocsr()
            return sp.csr_matrix(G.toarray() + M.P.A)
    return sp.csr_matrix(M.to_dense())


def configure_ebalm(f: Proximable, K: LinearOperator, b, tau: float,
                    theta: float, gamma: float, tol: float = 1e-8,
                    max_iter: int = 100000, override: bool = False):
    """Balanced augmented-Lagrangian configuration for min f(x) s.t. Kx = b.

    M1 = (1/tau) I and M2 = gamma * (tau K K^T + theta I), so the dual update
    realizes  y+ = y + gamma^{-1} (tau K K^T + theta I)^{-1} (K(2x+ - x) - b).
    gamma = 1 recovers the balanced ALM; any gamma >= 3/4 is admissible.
    """
    if gamma < GAMMA_MIN and not override:
        raise ConfigurationError(
            f"gamma = {gamma} below the 3/4 bound; set override to force")
    if theta <= 0:
        raise ConfigurationError("theta must be positive")
    b = np.asarray(b, dtype=float).ravel()
    problem = SaddleProblem(f=f, gstar=Linear(b), K=K)
    M1 = ScalarMetric(1.0 / tau, K.cols)
    M2 = GramShiftMetric(gamma, tau, K, theta=gamma * theta)
    cfg = SolverConfig(M1=M1, M2=M2, tol=tol, max_iter=max_iter,
                       residual_mode="khat-linear-g", override=override)
    return problem, cfg


def configure_ebalm_sgs(f: Proximable, K: LinearOperator, b, tau: float,
                        theta: float, gamma: float, partition,
                        tol: float = 1e-8, max_iter: int = 100000,
                        override: bool = False):
    """Balanced ALM with one symmetric Gauss-Seidel block sweep per dual step.

    The sweep over the block partition of Q = gamma*tau*K*K^T + theta*I is an
    exact solve with Q + U D^{-1} U^T, so the method is the same iteration
    with that implied dual metric.  Requires a nonzero off-diagonal part; use
    ``configure_ebalm`` when the partition decouples.
    """
    if gamma < GAMMA_MIN and not override:
        raise ConfigurationError(
            f"gamma = {gamma} below the 3/4 bound; set override to force")
    if theta < 0:
        raise ConfigurationError("theta must be nonnegative")
    b = np.asarray(b, dtype=float).ravel()
    if hasattr(K, "gram_sparse"):
        G = K.gram_sparse()
    elif hasattr(K, "to_sparse"):
        A = K.to_sparse()
        G = sp.csr_matrix(A @ A.T)
    else:
        G = sp.csr_matrix(K.gram_dense())
    Q = (gamma * tau * G).tolil()
    Q.setdiag(Q.diagonal() + theta)
    M2 = SGSMetric(Q.tocsr(), partition)
    if M2.U.nnz == 0 or abs(M2.U).max() == 0.0:
        raise ConfigurationError(
            "partition has no off-diagonal coupling; use configure_ebalm")
    problem = SaddleProblem(f=f, gstar=Linear(b), K=K)
    M1 = ScalarMetric(1.0 / tau, K.cols)
    cfg = SolverConfig(M1=M1, M2=M2, tol=tol, max_iter=max_iter,
                       residual_mode="khat-linear-g", override=override)
    return problem, cfg
