"""Randomized SVD and the per-sample identities behind its consistency.

``rsvd`` runs the range-finder pipeline: sketch, optional power steps,
orthonormalize, small SVD, lift back, truncate. The remaining functions
evaluate single-sketch quantities (the projector onto col(A @ omega) via the
normal equations, its expression in the singular basis of A, and the
rank-one update identity for its diagonal) that tests compare against the
pipeline's Q.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionMismatch, NonFiniteResult, TheoremModeViolation
from .linalg import (
    SvdResult,
    as_matrix,
    frobenius_norm,
    householder_qr,
    jacobi_svd,
    sign_canonical,
    spd_solve,
    truncate,
)
from .randgen import SketchDistribution, sample_sketch


@dataclass(frozen=True)
class RsvdConfig:
    k: int
    p: int = 0
    q: int = 0
    dist: SketchDistribution = SketchDistribution.GAUSSIAN
    seed: int = 0
    theorem_mode: bool = False
    ell: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "dist", SketchDistribution.parse(self.dist))
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if self.p < 0:
            raise ConfigError(f"p must be >= 0, got {self.p}")
        if self.q < 0:
            raise ConfigError(f"q must be >= 0, got {self.q}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must fit in 64 unsigned bits, got {self.seed}")
        object.__setattr__(self, "ell", self.k + self.p)

    def validate_for(self, m: int, n: int) -> None:
        """Check the sketch width against an m x n input."""
        if self.theorem_mode:
            if not self.ell < m <= n:
                raise TheoremModeViolation(
                    f"theorem mode needs ell < m <= n, got ell={self.ell}, m={m}, n={n}"
                )
        elif self.ell > min(m, n):
            raise ConfigError(f"ell={self.ell} exceeds min(m, n)={min(m, n)}")


@dataclass(frozen=True)
class RsvdResult:
    truncated: SvdResult
    full_ell: SvdResult
    q_basis: np.ndarray
    rank_deficient: bool


def power_sketch(a, omega, q: int = 0) -> np.ndarray:
    """Y = (A A^T)^q A omega, applied factor by factor."""
    a = as_matrix(a, "a")
    omega = as_matrix(omega, "omega")
    if a.shape[1] != omega.shape[0]:
        raise DimensionMismatch(f"A is {a.shape} but omega is {omega.shape}")
    if q < 0:
        raise ConfigError(f"q must be >= 0, got {q}")
    with np.errstate(over="ignore", invalid="ignore"):
        y = a @ omega
        for _ in range(q):
            y = a @ (a.T @ y)
    if not np.all(np.isfinite(y)):
        raise NonFiniteResult(
            f"power sketch overflowed (q={q}, ||A||_F={frobenius_norm(a):.3e})"
        )
    return y


def rsvd_with_sketch(a, omega, k: int, q: int = 0) -> RsvdResult:
    """Run the pipeline with a caller-supplied sketch matrix."""
    a = as_matrix(a, "a")
    y = power_sketch(a, omega, q)
    ell = y.shape[1]
    if not 1 <= k <= ell:
        raise ConfigError(f"k={k} must lie in [1, ell={ell}]")
    basis, degenerate = householder_qr(y, ell)
    small = jacobi_svd(basis.T @ a)
    u_ell, v_ell = sign_canonical(basis @ small.u, small.v)
    full = SvdResult(u=u_ell, sigma=small.sigma, v=v_ell)
    return RsvdResult(
        truncated=truncate(full, k),
        full_ell=full,
        q_basis=basis,
        rank_deficient=degenerate > 0,
    )


def rsvd(a, cfg: RsvdConfig) -> RsvdResult:
    """Approximate rank-k SVD of ``a``, deterministic in ``cfg.seed``."""
    a = as_matrix(a, "a")
    m, n = a.shape
    cfg.validate_for(m, n)
    omega = sample_sketch(n, cfg.ell, cfg.dist, cfg.seed)
    return rsvd_with_sketch(a, omega, cfg.k, cfg.q)


def exact_truncated_svd(a, k: int) -> SvdResult:
    return truncate(jacobi_svd(a), k)


def _gram_projector(s: np.ndarray) -> np.ndarray:
    # s (s^T s)^{-1} s^T through an SPD solve
    return s @ spd_solve(s.T @ s, s.T)


def projector_normal_eq(a, omega) -> np.ndarray:
    """A omega (omega^T A^T A omega)^{-1} omega^T A^T, the projector onto col(A omega)."""
    a = as_matrix(a, "a")
    omega = as_matrix(omega, "omega")
    if a.shape[1] != omega.shape[0]:
        raise DimensionMismatch(f"A is {a.shape} but omega is {omega.shape}")
    return _gram_projector(a @ omega)


def sketch_coordinates(v, omega) -> np.ndarray:
    """Z = omega^T V; column j is the sketch of the j-th right singular vector."""
    v = as_matrix(v, "v")
    omega = as_matrix(omega, "omega")
    if v.shape[0] != omega.shape[0]:
        raise DimensionMismatch(f"V is {v.shape} but omega is {omega.shape}")
    return omega.T @ v


def lambda_integrand(sigma, v, omega) -> np.ndarray:
    """One-sample value of S (S^T S)^{-1} S^T with S = diag(sigma) V^T omega.

    Equals U^T P U for the projector P of :func:`projector_normal_eq`, so its
    Monte Carlo mean estimates the diagonal weight matrix of E(QQ^T).
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    v = as_matrix(v, "v")
    if v.shape[1] != sigma.size:
        raise DimensionMismatch(f"V has {v.shape[1]} columns but sigma has {sigma.size} entries")
    s = sigma[:, None] * sketch_coordinates(v, omega).T
    return _gram_projector(s)


def sherman_morrison_check(sigma, z, j: int) -> tuple[float, float]:
    """Both sides of the rank-one update identity for diagonal entry ``j``.

    lhs = s_j^2 z_j^T (sum_l s_l^2 z_l z_l^T)^{-1} z_j
    rhs = 1 - 1 / (1 + s_j^2 z_j^T B_j^{-1} z_j),  B_j = sum_{l != j} s_l^2 z_l z_l^T
    with l running over the m = len(sigma) leading columns of ``z``.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    m = sigma.size
    if z.ndim != 2 or z.shape[1] < m:
        raise DimensionMismatch(f"z must have at least {m} columns, got shape {z.shape}")
    if not 0 <= j < m:
        raise DimensionMismatch(f"index j={j} outside 0..{m - 1}")
    zm = z[:, :m]
    weighted = zm * sigma**2
    full = weighted @ zm.T
    others = np.delete(weighted, j, axis=1) @ np.delete(zm, j, axis=1).T
    zj = zm[:, j]
    s2 = sigma[j] ** 2
    lhs = s2 * float(zj @ spd_solve(full, zj))
    rhs = 1.0 - 1.0 / (1.0 + s2 * float(zj @ spd_solve(others, zj)))
    return lhs, rhs
