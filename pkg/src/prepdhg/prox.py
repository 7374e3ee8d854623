"""Catalog of proximable convex functions.

Each entry evaluates the function (returning ``inf`` outside the domain of
an indicator) and computes the proximal point under a scalar or diagonal
metric D = diag(d):

    prox_f^D(v) = argmin_z  f(z) + 1/2 ||z - v||_D^2.

``sigma`` is the strong-convexity diagonal of the entry (all zeros unless
the function has a quadratic part).
"""

import numpy as np

from .exceptions import ConfigurationError


def _as_diag(d, dim):
    d = np.asarray(d, dtype=float)
    if d.ndim == 0:
        d = np.full(dim, float(d))
    if d.size != dim:
        raise ValueError(f"metric diagonal has length {d.size}, expected {dim}")
    if np.any(d <= 0):
        raise ValueError("metric diagonal must be strictly positive")
    return d


_SIMPLEX_KS = {}


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-based).

    The active set of the sorted thresholding rule is a prefix, so its size
    is the count of indices with k*u_k > cumsum(u)_k - 1.
    """
    if not (type(v) is np.ndarray and v.ndim == 1 and v.dtype == np.float64):
        v = np.asarray(v, dtype=float).ravel()
    n = v.size
    if n < 1:
        raise ValueError("empty input")
    ks = _SIMPLEX_KS.get(n)
    if ks is None:
        ks = _SIMPLEX_KS.setdefault(n, np.arange(1.0, n + 1.0))
    u = v.copy()
    u.sort()
    u = u[::-1]
    css = np.cumsum(u)
    rho = int(np.count_nonzero(u * ks > css - 1.0)) - 1
    theta = (css[rho] - 1.0) / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def project_simplex_weighted(v: np.ndarray, d: np.ndarray) -> np.ndarray:
    """argmin 1/2||z - v||_D^2 over the simplex, exact breakpoint search."""
    v = np.asarray(v, dtype=float).ravel()
    d = _as_diag(d, v.size)
    # z_i = max(0, v_i - lam/d_i); find lam with sum(z) = 1
    bp = d * v
    order = np.argsort(bp)[::-1]
    vs = v[order]
    ws = 1.0 / d[order]
    bps = bp[order]
    S = np.cumsum(vs)
    T = np.cumsum(ws)
    lam = None
    for k in range(v.size):
        cand = (S[k] - 1.0) / T[k]
        lo = bps[k + 1] if k + 1 < v.size else -np.inf
        if lo < cand <= bps[k] + 1e-15:
            lam = cand
            break
    if lam is None:
        lam = (S[-1] - 1.0) / T[-1]
    return np.maximum(v - lam / d, 0.0)


class Proximable:
    """Base class; subclasses set ``dim`` and ``sigma`` and implement prox."""

    dim: int

    def __init__(self, dim):
        self.dim = int(dim)
        self.sigma = np.zeros(self.dim)

    def __call__(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def prox(self, v: np.ndarray, d) -> np.ndarray:
        raise NotImplementedError

    def _v(self, v):
        v = np.asarray(v, dtype=float).ravel()
        if v.size != self.dim:
            raise ValueError(f"expected length {self.dim}, got {v.size}")
        return v


class Zero(Proximable):
    """f = 0."""

    def __call__(self, x):
        return 0.0

    def prox(self, v, d):
        return self._v(v).copy()


class Linear(Proximable):
    """f(x) = <b, x>."""

    def __init__(self, b):
        b = np.asarray(b, dtype=float).ravel()
        super().__init__(b.size)
        self.b = b

    def __call__(self, x):
        return float(np.dot(self.b, self._v(x)))

    def prox(self, v, d):
        return self._v(v) - self.b / _as_diag(d, self.dim)


class QuadraticShift(Proximable):
    """f(x) = 1/2 ||x - c||^2, with unit strong-convexity diagonal."""

    def __init__(self, c):
        c = np.asarray(c, dtype=float).ravel()
        super().__init__(c.size)
        self.c = c
        self.sigma = np.ones(self.dim)

    def __call__(self, x):
        return 0.5 * float(np.sum((self._v(x) - self.c) ** 2))

    def prox(self, v, d):
        d = _as_diag(d, self.dim)
        return (d * self._v(v) + self.c) / (d + 1.0)


class QuadraticShiftNonneg(Proximable):
    """f(x) = 1/2 ||x - c||^2 + indicator(x >= 0)."""

    def __init__(self, c):
        c = np.asarray(c, dtype=float).ravel()
        super().__init__(c.size)
        self.c = c
        self.sigma = np.ones(self.dim)

    def __call__(self, x):
        x = self._v(x)
        if np.any(x < 0):
            return np.inf
        return 0.5 * float(np.sum((x - self.c) ** 2))

    def prox(self, v, d):
        d = _as_diag(d, self.dim)
        return np.maximum(0.0, (d * self._v(v) + self.c) / (d + 1.0))


class IndicatorSimplex(Proximable):
    """Indicator of the probability simplex."""

    def __init__(self, dim):
        super().__init__(dim)

    def __call__(self, x):
        x = self._v(x)
        if np.any(x < -1e-12) or abs(x.sum() - 1.0) > 1e-9:
            return np.inf
        return 0.0

    def prox(self, v, d):
        v = self._v(v)
        d = _as_diag(d, self.dim)
        if np.allclose(d, d[0]):
            return project_simplex(v)
        return project_simplex_weighted(v, d)


class IndicatorNonneg(Proximable):
    """Indicator of the nonnegative orthant."""

    def __init__(self, dim):
        super().__init__(dim)

    def __call__(self, x):
        return 0.0 if np.all(self._v(x) >= 0) else np.inf

    def prox(self, v, d):
        return np.maximum(self._v(v), 0.0)


class IndicatorLinfBall(Proximable):
    """Indicator of the box {||x||_inf <= radius}."""

    def __init__(self, dim, radius):
        super().__init__(dim)
        if radius <= 0:
            raise ValueError("radius must be positive")
        self.radius = float(radius)

    def __call__(self, x):
        return 0.0 if np.max(np.abs(self._v(x))) <= self.radius else np.inf

    def prox(self, v, d):
        return np.clip(self._v(v), -self.radius, self.radius)


class IndicatorSingleton(Proximable):
    """Indicator of the single point {b}; its conjugate is <b, .>."""

    def __init__(self, b):
        b = np.asarray(b, dtype=float).ravel()
        super().__init__(b.size)
        self.b = b

    def __call__(self, x):
        return 0.0 if np.array_equal(self._v(x), self.b) else np.inf

    def prox(self, v, d):
        self._v(v)
        return self.b.copy()


class L1Norm(Proximable):
    """f(x) = weight * ||x||_1; prox is soft thresholding."""

    def __init__(self, dim, weight=1.0):
        super().__init__(dim)
        if weight < 0:
            raise ValueError("weight must be nonnegative")
        self.weight = float(weight)

    def __call__(self, x):
        return self.weight * float(np.sum(np.abs(self._v(x))))

    def prox(self, v, d):
        v = self._v(v)
        t = self.weight / _as_diag(d, self.dim)
        return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


class GroupL12(Proximable):
    """Sum of Euclidean norms of paired flux components on an M-by-N grid.

    The argument stacks two row-major (M, N) components; entry (i, j) of
    each forms one group.  The structural zeros of the grid flux (last row
    of the first component, last column of the second) are part of the
    domain, and the prox is blockwise vector soft thresholding.
    """

    def __init__(self, M, N):
        self.M, self.N = int(M), int(N)
        super().__init__(2 * self.M * self.N)
        mask = np.zeros((2, self.M, self.N), dtype=bool)
        mask[0, self.M - 1, :] = True
        mask[1, :, self.N - 1] = True
        self.zero_mask = mask.reshape(-1)

    def _pairs(self, x):
        mn = self.M * self.N
        return x[:mn], x[mn:]

    def __call__(self, x):
        x = self._v(x)
        if np.any(x[self.zero_mask] != 0.0):
            return np.inf
        a, b = self._pairs(x)
        return float(np.sum(np.hypot(a, b)))

    def prox(self, v, d):
        v = self._v(v)
        d = _as_diag(d, self.dim)
        da, db = self._pairs(d)
        if not np.allclose(da, db):
            raise ConfigurationError(
                "group-l12 prox needs equal metric weights within each pair")
        a, b = self._pairs(v)
        norms = np.hypot(a, b)
        scale = np.zeros_like(norms)
        pos = norms > 0
        scale[pos] = np.maximum(0.0, 1.0 - 1.0 / (da[pos] * norms[pos]))
        out = np.concatenate([a * scale, b * scale])
        out[self.zero_mask] = 0.0
        return out


class SeparableSum(Proximable):
    """Direct sum of proximable blocks; prox applies blockwise."""

    def __init__(self, children):
        self.children = list(children)
        super().__init__(sum(c.dim for c in self.children))
        self._offsets = np.cumsum([0] + [c.dim for c in self.children])
        self.sigma = np.concatenate([c.sigma for c in self.children])

    def blocks(self, x):
        x = self._v(x)
        return [x[lo:hi] for lo, hi in zip(self._offsets[:-1], self._offsets[1:])]

    def __call__(self, x):
        return float(sum(c(xb) for c, xb in zip(self.children, self.blocks(x))))

    def prox(self, v, d):
        d = _as_diag(d, self.dim)
        vb = self.blocks(v)
        db = self.blocks(d)
        return np.concatenate([c.prox(vi, di)
                               for c, vi, di in zip(self.children, vb, db)])


def prox_diag(f: Proximable, v, d) -> np.ndarray:
    """prox of f at v under the diagonal metric diag(d)."""
    return f.prox(v, d)


def moreau_conjugate_prox(f: Proximable, x, d) -> np.ndarray:
    """prox of the conjugate f* under diag(d)^{-1} evaluated at diag(d) x.

    Computed through the generalized Moreau identity, so that
    x = prox_f^D(x) + D^{-1} * result holds by construction.
    """
    x = np.asarray(x, dtype=float).ravel()
    d = _as_diag(d, f.dim)
    return d * (x - f.prox(x, d))
