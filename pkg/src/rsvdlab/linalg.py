"""Dense real linear algebra kernels.

numpy arrays (float64, 2-D) serve as the matrix container and products go
through ``@``; the factorizations (Householder QR, one-sided Jacobi SVD,
Cholesky) are written out here so their behaviour on degenerate input is
fully specified and identical across the scalar and batched code paths.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateColumn,
    DimensionMismatch,
    NoConvergence,
    NonFiniteResult,
    RankTooLarge,
    SingularGram,
)

# A Householder column whose remaining part is below this fraction of ||Y||_F
# is treated as lying in the span of the previous columns.
DEGENERACY_TOL = 1e-10
JACOBI_TOL = 1e-14
JACOBI_MAX_SWEEPS = 60
GRAM_COND_LIMIT = 1e12


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validate and convert ``a`` to a finite 2-D float64 array."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionMismatch(f"{name} must have at least one row and column, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteResult(f"{name} contains NaN or Inf entries")
    return arr


def check_finite(a: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(a)):
        raise NonFiniteResult(f"{what} produced non-finite entries")
    return a


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise DimensionMismatch(f"cannot multiply {a.shape} by {b.shape}")
    with np.errstate(over="ignore", invalid="ignore"):
        out = a @ b
    return check_finite(out, "matmul")


def transpose(a) -> np.ndarray:
    return np.ascontiguousarray(as_matrix(a).T)


def frobenius_norm(a) -> float:
    return float(np.linalg.norm(as_matrix(a), "fro"))


# --------------------------------------------------------------------------
# Householder QR
# --------------------------------------------------------------------------

def _apply_reflectors(vs: list[np.ndarray], x: np.ndarray, start: int, reverse: bool) -> None:
    """Apply H_j = I - 2 v_j v_j^T (acting on rows j:) to a batch ``x`` in place.

    ``vs[j]`` has shape (batch, m - j); zero rows encode the identity.
    """
    order = range(len(vs) - 1, start - 1, -1) if reverse else range(start, len(vs))
    for j in order:
        v = vs[j]
        block = x[:, j:, :]
        w = np.einsum("bi,bij->bj", v, block)
        block -= 2.0 * v[:, :, None] * w[:, None, :]


def householder_qr_batch(y: np.ndarray, *, strict: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal bases for a stack of matrices ``y`` of shape (batch, m, ell).

    Returns ``(q, degenerate)`` where ``q`` has shape (batch, m, ell) with
    orthonormal columns and ``degenerate[b]`` counts the columns of ``y[b]``
    that were numerically dependent on earlier ones. Such a column is
    replaced by the first standard basis vector with a non-negligible
    component outside the current span, so ``q`` always has ell columns.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 3:
        raise DimensionMismatch(f"expected a (batch, m, ell) stack, got shape {y.shape}")
    nb, m, ell = y.shape
    if ell > m:
        raise DimensionMismatch(f"need rows >= columns, got {m}x{ell}")
    # spans are scale-free; a power-of-two rescale is exact and keeps squared
    # norms clear of under/overflow
    _, exp = np.frexp(np.abs(y).max(axis=(1, 2), initial=0.0))
    y = np.ldexp(y, -exp[:, None, None])
    r = y.copy()
    tol = DEGENERACY_TOL * np.sqrt(np.einsum("bij,bij->b", y, y))
    degenerate = np.zeros(nb, dtype=np.int64)
    vs: list[np.ndarray] = []
    for j in range(ell):
        x = r[:, j:, j].copy()
        bad = np.sqrt(np.einsum("bi,bi->b", x, x)) <= tol
        if np.any(bad):
            if strict:
                raise DegenerateColumn(f"column {j} lies in the span of the previous columns")
            degenerate += bad
            idx = np.flatnonzero(bad)
            basis = np.broadcast_to(np.eye(m), (idx.size, m, m)).copy()
            _apply_reflectors([v[idx] for v in vs], basis, 0, reverse=False)
            tail = basis[:, j:, :]
            norms = np.sqrt(np.einsum("bij,bij->bj", tail, tail))
            pick = np.argmax(norms > DEGENERACY_TOL, axis=1)
            x[idx] = tail[np.arange(idx.size), :, pick]
        alpha = x[:, 0]
        below = np.einsum("bi,bi->b", x[:, 1:], x[:, 1:])
        norm_x = np.sqrt(alpha * alpha + below)
        sign = np.where(alpha >= 0.0, 1.0, -1.0)
        v = x
        v[:, 0] = alpha + sign * norm_x
        vnorm = np.sqrt(np.einsum("bi,bi->b", v, v))
        # nothing below the pivot: no reflection (H = I)
        skip = below == 0.0
        v = np.where(skip[:, None], 0.0, v / np.where(skip, 1.0, vnorm)[:, None])
        vs.append(v)
        if j + 1 < ell:
            rest = r[:, j:, j + 1:]
            w = np.einsum("bi,bij->bj", v, rest)
            rest -= 2.0 * v[:, :, None] * w[:, None, :]
    q = np.zeros((nb, m, ell))
    q[:, np.arange(ell), np.arange(ell)] = 1.0
    _apply_reflectors(vs, q, 0, reverse=True)
    return q, degenerate


def householder_qr(y, ell: int | None = None, *, strict: bool = False) -> tuple[np.ndarray, int]:
    """Single-matrix form of :func:`householder_qr_batch`: ``(q, n_degenerate)``."""
    y = as_matrix(y, "y")
    if ell is None:
        ell = y.shape[1]
    if y.shape[1] != ell or y.shape[0] < ell:
        raise DimensionMismatch(f"expected an m x {ell} matrix with m >= {ell}, got {y.shape}")
    q, degenerate = householder_qr_batch(y[None], strict=strict)
    return q[0], int(degenerate[0])


def householder_qr_basis(y, ell: int | None = None, *, strict: bool = False) -> np.ndarray:
    """Return an m x ell matrix whose columns are an orthonormal basis of ``y``.

    Leading columns span the same subspaces as the leading columns of ``y``
    while those are independent; the width is always ell.
    """
    return householder_qr(y, ell, strict=strict)[0]


# --------------------------------------------------------------------------
# SVD
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SvdResult:
    """Factors of ``A ~ u @ diag(sigma) @ v.T`` with sigma non-increasing."""

    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray

    @property
    def rank(self) -> int:
        return int(self.sigma.size)

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.sigma) @ self.v.T


def sign_canonical(u: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Flip column pairs so the largest-magnitude entry of each u column is >= 0.

    Ties go to the lowest row index.
    """
    u = u.copy()
    v = v.copy()
    rows = np.argmax(np.abs(u), axis=0)
    flip = u[rows, np.arange(u.shape[1])] < 0
    u[:, flip] *= -1.0
    v[:, flip] *= -1.0
    return u, v


def _orthonormal_complement(basis: np.ndarray, count: int) -> np.ndarray:
    p, g = basis.shape
    padded = np.hstack([basis, np.zeros((p, count))])
    q, _ = householder_qr(padded)
    return q[:, g:]


def jacobi_svd(a, *, tol: float = JACOBI_TOL, max_sweeps: int = JACOBI_MAX_SWEEPS) -> SvdResult:
    """Full SVD (r = min(m, n)) by one-sided Jacobi rotations.

    Works on the tall orientation of ``a``: its r columns are rotated until
    every pair satisfies |x_i . x_j| <= tol * ||x_i|| ||x_j||.
    """
    a = as_matrix(a, "a")
    m, n = a.shape
    # exact power-of-two rescale so column norms neither underflow nor overflow
    _, exp = np.frexp(np.abs(a).max())
    a = np.ldexp(a, -exp)
    flipped = m < n
    x = a.T.copy() if flipped else a.copy()
    p, r = x.shape
    rot = np.eye(r)
    # columns at roundoff level relative to ||A|| count as zero
    negligible_sq = (np.finfo(float).eps * np.linalg.norm(a)) ** 2

    converged = False
    sweep = 0
    while sweep < max_sweeps:
        sweep += 1
        rotated = False
        for i in range(r - 1):
            for j in range(i + 1, r):
                xi = x[:, i]
                xj = x[:, j]
                gamma = float(xi @ xj)
                if gamma == 0.0:
                    continue
                alpha = float(xi @ xi)
                beta = float(xj @ xj)
                if min(alpha, beta) <= negligible_sq or abs(gamma) <= tol * math.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = math.copysign(1.0, zeta) / (abs(zeta) + math.hypot(1.0, zeta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = c * t
                xi_old = xi.copy()
                x[:, i] = c * xi_old - s * xj
                x[:, j] = s * xi_old + c * x[:, j]
                ri = rot[:, i].copy()
                rot[:, i] = c * ri - s * rot[:, j]
                rot[:, j] = s * ri + c * rot[:, j]
        if not rotated:
            converged = True
            break
    if not converged:
        raise NoConvergence(f"Jacobi SVD did not converge after {sweep} sweeps", sweep)

    sigma = np.sqrt(np.einsum("ij,ij->j", x, x))
    order = np.argsort(-sigma, kind="stable")
    sigma = sigma[order]
    x = x[:, order]
    rot = rot[:, order]

    negligible = sigma <= max(p, r) * np.finfo(float).eps * (sigma[0] if sigma[0] > 0 else 1.0)
    good = int(np.count_nonzero(~negligible))
    left = np.empty_like(x)
    left[:, :good] = x[:, :good] / sigma[:good]
    if good < r:
        left[:, good:] = _orthonormal_complement(left[:, :good], r - good)

    u, v = (rot, left) if flipped else (left, rot)
    u, v = sign_canonical(u, v)
    return SvdResult(u=u, sigma=np.ldexp(sigma, exp), v=v)


def truncate(svd: SvdResult, k: int) -> SvdResult:
    """Keep the leading k singular triplets."""
    if k < 1 or k > svd.rank:
        raise RankTooLarge(f"cannot truncate a rank-{svd.rank} SVD to k={k}")
    return SvdResult(u=svd.u[:, :k].copy(), sigma=svd.sigma[:k].copy(), v=svd.v[:, :k].copy())


# --------------------------------------------------------------------------
# Symmetric positive definite solves
# --------------------------------------------------------------------------

def cholesky(g) -> np.ndarray:
    """Lower-triangular L with g = L L^T; SingularGram if a pivot is not positive."""
    g = as_matrix(g, "gram")
    n = g.shape[0]
    if g.shape[1] != n:
        raise DimensionMismatch(f"gram matrix must be square, got {g.shape}")
    low = np.zeros_like(g)
    for j in range(n):
        d = g[j, j] - low[j, :j] @ low[j, :j]
        if not d > 0.0:
            raise SingularGram(f"gram matrix is not positive definite (pivot {j} = {d:.3e})")
        low[j, j] = math.sqrt(d)
        low[j + 1:, j] = (g[j + 1:, j] - low[j + 1:, :j] @ low[j, :j]) / low[j, j]
    return low


def spd_solve(g, b, *, cond_limit: float = GRAM_COND_LIMIT) -> np.ndarray:
    """Solve g x = b for symmetric positive definite g.

    The condition number is estimated as (max L_jj / min L_jj)^2 from the
    Cholesky factor; anything above ``cond_limit`` raises SingularGram.
    """
    low = cholesky(g)
    b = np.asarray(b, dtype=np.float64)
    vector = b.ndim == 1
    rhs = b.reshape(b.shape[0], -1).copy()
    if rhs.shape[0] != low.shape[0]:
        raise DimensionMismatch(f"rhs has {rhs.shape[0]} rows, gram is {low.shape[0]}x{low.shape[0]}")
    diag = np.diag(low)
    cond = (diag.max() / diag.min()) ** 2
    if cond > cond_limit:
        raise SingularGram(f"gram matrix condition estimate {cond:.3e} exceeds {cond_limit:.0e}")
    n = low.shape[0]
    for i in range(n):
        rhs[i] = (rhs[i] - low[i, :i] @ rhs[:i]) / low[i, i]
    for i in range(n - 1, -1, -1):
        rhs[i] = (rhs[i] - low[i + 1:, i] @ rhs[i + 1:]) / low[i, i]
    return rhs[:, 0] if vector else rhs
