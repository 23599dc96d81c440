"""Monte Carlo estimation of E(QQ^T) and diagnostics of its structure.

Trials are grouped into blocks whose size depends only on N. Each block
draws its sketches from per-trial seeds, so block sums are the same no
matter which process computes them, and the final reduction always runs
over blocks in ascending order with pairwise summation. The report is
therefore bit-identical for any worker count and across checkpoint/resume.
"""
from __future__ import annotations

import dataclasses
import math
import os
import time
from collections.abc import Callable
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .checkpoint import BlockMoments, Checkpoint, matrix_digest, read_checkpoint, write_checkpoint
from .errors import CheckpointMismatch, ConfigError, DimensionMismatch, NonFiniteResult, RsvdError
from .linalg import SvdResult, as_matrix, householder_qr_batch, jacobi_svd
from .randgen import SketchDistribution, derive_trial_seeds, sample_sketches
from .rsvd import RsvdConfig

PAPER_MATRIX = np.array([[3.0, 3.0, 3.0], [-2.0, -2.0, 4.0], [1.0, -1.0, 0.0]])
BUILTIN_MATRICES = {"paper3x3": PAPER_MATRIX}

MAX_BLOCK_SIZE = 16384
TARGET_BLOCKS = 64
SPOT_CHECK_EVERY = 1000
AXIOM_TOL = 1e-10


class ProjectorAxiomViolation(RsvdError, ArithmeticError):
    pass


def block_size(trials: int) -> int:
    """Trials per block; a function of N alone."""
    return max(1, min(MAX_BLOCK_SIZE, math.ceil(trials / TARGET_BLOCKS)))


def block_ranges(trials: int) -> list[tuple[int, int]]:
    size = block_size(trials)
    return [(start, min(size, trials - start)) for start in range(0, trials, size)]


def pairwise_sum(stack: np.ndarray) -> np.ndarray:
    """Sum along axis 0 by repeated halving (fixed association order)."""
    x = np.asarray(stack, dtype=np.float64)
    if x.shape[0] == 0:
        return np.zeros(x.shape[1:])
    while x.shape[0] > 1:
        if x.shape[0] % 2:
            x = np.concatenate([x, np.zeros((1,) + x.shape[1:])])
        x = x[0::2] + x[1::2]
    return x[0].copy()


@dataclass(frozen=True)
class ExperimentConfig:
    matrix: np.ndarray
    cfg: RsvdConfig
    trials: int
    workers: int = 0
    checkpoint_every: int = 0
    label: str = "inline"

    def __post_init__(self):
        a = as_matrix(self.matrix, "matrix")
        object.__setattr__(self, "matrix", a)
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        if self.workers < 0:
            raise ConfigError(f"workers must be >= 0, got {self.workers}")
        if self.checkpoint_every < 0:
            raise ConfigError(f"checkpoint_every must be >= 0, got {self.checkpoint_every}")
        dataclasses.replace(self.cfg, theorem_mode=True).validate_for(*a.shape)


@dataclass(frozen=True)
class Diagnostics:
    lambda_hat: np.ndarray
    lambda_standard_errors: np.ndarray
    rotated: np.ndarray
    max_offdiag_abs: float
    offdiag_argmax: tuple[int, int]
    diag_strictly_decreasing: bool
    diag_in_unit_interval: bool


@dataclass(frozen=True)
class ConsistencyReport:
    mean_projector: np.ndarray
    standard_errors: np.ndarray
    lambda_hat: np.ndarray
    lambda_standard_errors: np.ndarray
    max_offdiag_abs: float
    offdiag_argmax: tuple[int, int]
    trace: float
    diag_strictly_decreasing: bool
    diag_in_unit_interval: bool
    corollary_ratio: float
    rank_deficient_trials: int
    trials: int
    seed: int
    dist: SketchDistribution
    ell: int
    q: int
    oracle: SvdResult
    elapsed: float


def estimate_standard_errors(first: np.ndarray, second: np.ndarray, trials: int) -> np.ndarray:
    """Per-entry standard error of the mean from summed first and second moments."""
    if trials < 2:
        raise ValueError("standard errors need at least two samples")
    mean = first / trials
    raw = second / trials
    var = raw - mean * mean
    # cancellation noise of constant samples is not variance
    var[var <= 8.0 * np.finfo(float).eps * np.abs(raw)] = 0.0
    return np.sqrt(var / trials)


def analyze(mean_projector, oracle: SvdResult, standard_errors=None) -> Diagnostics:
    """Express the mean projector in the oracle's left singular basis."""
    mean = as_matrix(mean_projector, "mean_projector")
    m = mean.shape[0]
    if mean.shape != (m, m) or oracle.u.shape != (m, m):
        raise DimensionMismatch(
            f"need a square mean projector and a full m x m oracle U, got {mean.shape} and {oracle.u.shape}"
        )
    u = oracle.u
    rotated = u.T @ mean @ u
    lam = np.diag(rotated).copy()
    if standard_errors is None:
        lam_se = np.zeros(m)
    else:
        se = np.asarray(standard_errors, dtype=np.float64)
        if se.shape != (m, m):
            raise DimensionMismatch(f"standard errors must be {m}x{m}, got {se.shape}")
        # entries treated as independent when rotating the error estimates
        w = u * u
        lam_se = np.sqrt(np.diag(w.T @ (se * se) @ w))
    off = np.abs(rotated)
    np.fill_diagonal(off, -1.0)
    if m > 1:
        upper = np.triu_indices(m, 1)
        pos = int(np.argmax(off[upper]))
        argmax = (int(upper[0][pos]), int(upper[1][pos]))
        max_off = float(off[argmax])
    else:
        argmax, max_off = (0, 0), 0.0
    gaps = lam[:-1] - lam[1:]
    margins = 3.0 * np.sqrt(lam_se[:-1] ** 2 + lam_se[1:] ** 2)
    decreasing = bool(np.all(gaps > margins))
    in_unit = bool(np.all(lam - 3.0 * lam_se > 0.0) and np.all(lam + 3.0 * lam_se < 1.0))
    return Diagnostics(
        lambda_hat=lam,
        lambda_standard_errors=lam_se,
        rotated=rotated,
        max_offdiag_abs=max_off,
        offdiag_argmax=argmax,
        diag_strictly_decreasing=decreasing,
        diag_in_unit_interval=in_unit,
    )


def corollary_check(mean_projector, a, oracle: SvdResult, lambda_hat=None) -> float:
    """||M A - U diag(lambda * sigma) V^T||_F / ||A||_F."""
    mean = as_matrix(mean_projector, "mean_projector")
    a = as_matrix(a, "a")
    if mean.shape != (a.shape[0], a.shape[0]):
        raise DimensionMismatch(f"mean projector {mean.shape} does not match A {a.shape}")
    if lambda_hat is None:
        lambda_hat = analyze(mean, oracle).lambda_hat
    target = (oracle.u * (np.asarray(lambda_hat) * oracle.sigma)) @ oracle.v.T
    return float(np.linalg.norm(mean @ a - target) / np.linalg.norm(a))


def run_block(a: np.ndarray, ell: int, q: int, dist: SketchDistribution, seed: int,
              start: int, count: int) -> BlockMoments:
    """Moments of Q_i Q_i^T over trials start .. start+count-1."""
    n = a.shape[1]
    omega = sample_sketches(n, ell, dist, derive_trial_seeds(seed, start, count))
    with np.errstate(over="ignore", invalid="ignore"):
        y = a @ omega
        for _ in range(q):
            y = a @ (a.T @ y)
    if not np.all(np.isfinite(y)):
        raise NonFiniteResult(f"power sketch overflowed (q={q}, ||A||_F={np.linalg.norm(a):.3e})")
    basis, degenerate = householder_qr_batch(y)
    proj = basis @ basis.transpose(0, 2, 1)

    first_check = (-start) % SPOT_CHECK_EVERY
    for i in range(first_check, count, SPOT_CHECK_EVERY):
        p = proj[i]
        if (np.linalg.norm(p - p.T) > AXIOM_TOL or np.linalg.norm(p @ p - p) > AXIOM_TOL
                or abs(np.trace(p) - ell) > AXIOM_TOL):
            raise ProjectorAxiomViolation(f"trial {start + i}: Q Q^T is not a rank-{ell} projector")

    return BlockMoments(
        first=pairwise_sum(proj),
        second=pairwise_sum(proj * proj),
        rank_deficient=int(np.count_nonzero(degenerate)),
    )


def _block_job(args) -> BlockMoments:
    return run_block(*args)


def _resolve_workers(workers: int) -> int:
    return workers if workers > 0 else (os.cpu_count() or 1)


def _load_resume(path, ec: ExperimentConfig, digest: bytes) -> list[BlockMoments]:
    ckpt = read_checkpoint(path)
    cfg = ec.cfg
    expected = {
        "seed": (ckpt.master_seed, cfg.seed),
        "dist": (ckpt.dist, cfg.dist),
        "trials": (ckpt.trials, ec.trials),
        "ell": (ckpt.ell, cfg.ell),
        "q": (ckpt.q, cfg.q),
        "m": (ckpt.m, ec.matrix.shape[0]),
        "matrix hash": (ckpt.matrix_hash, digest),
    }
    for name, (found, wanted) in expected.items():
        if found != wanted:
            raise CheckpointMismatch(f"checkpoint {name} differs from the requested run")
    ranges = block_ranges(ec.trials)
    if len(ckpt.blocks) > len(ranges) or ckpt.trials_done != sum(c for _, c in ranges[: len(ckpt.blocks)]):
        raise CheckpointMismatch("checkpoint block layout is inconsistent with N")
    return ckpt.blocks


def run_consistency(
    ec: ExperimentConfig,
    *,
    checkpoint_path: str | os.PathLike | None = None,
    resume_from: str | os.PathLike | None = None,
    stop_after: int | None = None,
    progress: Callable[[int, int], None] | None = None,
) -> ConsistencyReport | None:
    """Average Q_i Q_i^T over ec.trials sketches and diagnose the result.

    With ``stop_after`` the run halts once at least that many trials are
    done, writes a checkpoint (``checkpoint_path`` is then required) and
    returns None.
    """
    started = time.perf_counter()
    a = ec.matrix
    cfg = ec.cfg
    m = a.shape[0]
    digest = matrix_digest(a)
    if stop_after is not None and checkpoint_path is None:
        raise ConfigError("stop_after needs a checkpoint path")

    blocks: list[BlockMoments] = []
    if resume_from is not None:
        blocks = list(_load_resume(resume_from, ec, digest))
    ranges = block_ranges(ec.trials)
    done = sum(c for _, c in ranges[: len(blocks)])

    def snapshot() -> Checkpoint:
        return Checkpoint(
            master_seed=cfg.seed, trials=ec.trials, trials_done=done, dist=cfg.dist, m=m,
            ell=cfg.ell, q=cfg.q, matrix_hash=digest, blocks=blocks,
        )

    pending = ranges[len(blocks):]
    jobs = [(a, cfg.ell, cfg.q, cfg.dist, cfg.seed, start, count) for start, count in pending]
    workers = min(_resolve_workers(ec.workers), max(1, len(jobs)))
    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    stopped = False
    try:
        results = pool.map(_block_job, jobs) if pool else map(_block_job, jobs)
        for (_, count), block in zip(pending, results):
            before = done
            blocks.append(block)
            done += count
            if progress is not None:
                progress(done, ec.trials)
            if checkpoint_path is not None and ec.checkpoint_every and (
                done // ec.checkpoint_every > before // ec.checkpoint_every
            ):
                write_checkpoint(checkpoint_path, snapshot())
            if stop_after is not None and done >= stop_after and done < ec.trials:
                stopped = True
                break
    finally:
        if pool is not None:
            pool.shutdown(wait=True, cancel_futures=True)

    if checkpoint_path is not None and (stopped or ec.checkpoint_every):
        write_checkpoint(checkpoint_path, snapshot())
    if stopped:
        return None

    first = pairwise_sum(np.stack([b.first for b in blocks]))
    second = pairwise_sum(np.stack([b.second for b in blocks]))
    mean = first / ec.trials
    mean = 0.5 * (mean + mean.T)
    if ec.trials >= 2:
        se = estimate_standard_errors(first, second, ec.trials)
    else:
        se = np.zeros((m, m))
    oracle = jacobi_svd(a)
    diag = analyze(mean, oracle, se)
    return ConsistencyReport(
        mean_projector=mean,
        standard_errors=se,
        lambda_hat=diag.lambda_hat,
        lambda_standard_errors=diag.lambda_standard_errors,
        max_offdiag_abs=diag.max_offdiag_abs,
        offdiag_argmax=diag.offdiag_argmax,
        trace=float(np.trace(mean)),
        diag_strictly_decreasing=diag.diag_strictly_decreasing,
        diag_in_unit_interval=diag.diag_in_unit_interval,
        corollary_ratio=corollary_check(mean, a, oracle, diag.lambda_hat),
        rank_deficient_trials=sum(b.rank_deficient for b in blocks),
        trials=ec.trials,
        seed=cfg.seed,
        dist=cfg.dist,
        ell=cfg.ell,
        q=cfg.q,
        oracle=oracle,
        elapsed=time.perf_counter() - started,
    )


def load_builtin(name: str) -> np.ndarray:
    try:
        return BUILTIN_MATRICES[name].copy()
    except KeyError:
        raise ConfigError(f"unknown demo matrix {name!r} (choose from {', '.join(BUILTIN_MATRICES)})") from None


def resolve_matrix(source: str | os.PathLike | np.ndarray) -> np.ndarray:
    """Builtin name, CSV path, or an in-memory array."""
    if isinstance(source, np.ndarray):
        return as_matrix(source)
    if str(source) in BUILTIN_MATRICES:
        return load_builtin(str(source))
    from .matrix_io import read_csv_matrix

    return read_csv_matrix(Path(source))
