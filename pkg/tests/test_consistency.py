import itertools
import math

import numpy as np
import pytest

from rsvdlab.checkpoint import BlockMoments, Checkpoint, matrix_digest, read_checkpoint, write_checkpoint
from rsvdlab.consistency import (
    PAPER_MATRIX,
    ExperimentConfig,
    analyze,
    block_ranges,
    block_size,
    corollary_check,
    estimate_standard_errors,
    pairwise_sum,
    resolve_matrix,
    run_block,
    run_consistency,
)
from rsvdlab.errors import CheckpointMismatch, ConfigError, DimensionMismatch, TheoremModeViolation
from rsvdlab.linalg import householder_qr_batch, jacobi_svd
from rsvdlab.randgen import SketchDistribution
from rsvdlab.rsvd import RsvdConfig

D = SketchDistribution

# Exact E(QQ^T) for the 3x3 example matrix under +-1 sketches (ell = 2), enumerated
# over all 64 sign patterns by rademacher_oracle below.
RADEMACHER_EXACT = np.array([
    [0.8796977329974811, 0.04488664987405539, 0.0],
    [0.04488664987405539, 0.8743324937027707, 0.0],
    [0.0, 0.0, 0.24596977329974803],
])


def rademacher_oracle():
    """Gram-Schmidt with standard-basis completion, independent of the Householder code."""
    total = np.zeros((3, 3))
    for signs in itertools.product([-1.0, 1.0], repeat=6):
        y = PAPER_MATRIX @ np.array(signs).reshape(3, 2)
        q1 = y[:, 0] / np.linalg.norm(y[:, 0])
        r = y[:, 1] - q1 * (q1 @ y[:, 1])
        if np.linalg.norm(r) <= 1e-10 * np.linalg.norm(y):
            for e in np.eye(3):
                r = e - q1 * (q1 @ e)
                if np.linalg.norm(r) > 1e-10:
                    break
        q2 = r / np.linalg.norm(r)
        total += np.outer(q1, q1) + np.outer(q2, q2)
    return total / 64


def test_rademacher_oracle_frozen():
    np.testing.assert_allclose(rademacher_oracle(), RADEMACHER_EXACT, atol=1e-15)


def test_householder_enumeration_matches_oracle():
    sketches = np.array([np.array(s).reshape(3, 2) for s in itertools.product([-1.0, 1.0], repeat=6)])
    q, degenerate = householder_qr_batch(PAPER_MATRIX @ sketches)
    mean = (q @ q.transpose(0, 2, 1)).mean(axis=0)
    np.testing.assert_allclose(mean, RADEMACHER_EXACT, atol=1e-14)
    assert degenerate.sum() == 16  # col2 = +-col1 for 16 of 64 patterns


def test_block_layout_depends_on_n_only():
    assert block_size(10_000) == 157
    assert block_size(10**6) == 15625
    assert block_size(10**8) == 16384
    assert block_size(1) == 1
    ranges = block_ranges(1000)
    assert sum(c for _, c in ranges) == 1000
    assert all(s == i * block_size(1000) for i, (s, _) in enumerate(ranges))


def test_pairwise_sum():
    x = np.arange(7 * 4, dtype=float).reshape(7, 2, 2)
    np.testing.assert_array_equal(pairwise_sum(x), x.sum(axis=0))
    assert pairwise_sum(np.zeros((0, 2))).shape == (2,)


def test_standard_errors():
    c = np.full((2, 2), 0.3)
    n = 1000
    se = estimate_standard_errors(c * n, c * c * n, n)
    assert np.all(se == 0.0)
    with pytest.raises(ValueError):
        estimate_standard_errors(c, c, 1)
    # Bernoulli(1/2) samples: SE = 0.5 / sqrt(n)
    se = estimate_standard_errors(np.array([[500.0]]), np.array([[500.0]]), n)
    assert se[0, 0] == pytest.approx(0.5 / math.sqrt(n))


def test_analyze_paper_matrix_is_identity_basis():
    oracle = jacobi_svd(PAPER_MATRIX)
    m = np.array([[0.8, 0.01, -0.02], [0.01, 0.7, 0.03], [-0.02, 0.03, 0.5]])
    d = analyze(m, oracle)
    np.testing.assert_allclose(d.lambda_hat, np.diag(m), atol=1e-12)
    assert d.offdiag_argmax == (1, 2)
    assert d.max_offdiag_abs == pytest.approx(0.03)
    assert d.diag_strictly_decreasing and d.diag_in_unit_interval
    se = np.full((3, 3), 0.04)
    assert not analyze(m, oracle, se).diag_strictly_decreasing
    with pytest.raises(DimensionMismatch):
        analyze(np.eye(2), oracle)


def test_corollary_exact_substitute():
    rng = np.random.default_rng(4)
    for _ in range(20):
        a = rng.standard_normal((4, 6))
        oracle = jacobi_svd(a)
        lam = rng.uniform(0, 1, 4)
        m = (oracle.u * lam) @ oracle.u.T
        assert corollary_check(m, a, oracle) <= 1e-12
    with pytest.raises(DimensionMismatch):
        corollary_check(np.eye(2), a, oracle)


def test_experiment_config_validation():
    cfg = RsvdConfig(k=2)
    with pytest.raises(TheoremModeViolation):
        ExperimentConfig(PAPER_MATRIX, RsvdConfig(k=3), 10)
    with pytest.raises(TheoremModeViolation):
        ExperimentConfig(np.ones((4, 3)), cfg, 10)  # needs m <= n
    with pytest.raises(ConfigError):
        ExperimentConfig(PAPER_MATRIX, cfg, 0)
    with pytest.raises(ConfigError):
        ExperimentConfig(PAPER_MATRIX, cfg, 10, workers=-1)


def test_run_block_counts_rank_deficiency():
    block = run_block(PAPER_MATRIX, 2, 0, D.RADEMACHER, 1, 0, 4000)
    assert 800 <= block.rank_deficient <= 1200
    assert np.trace(block.first) == pytest.approx(2 * 4000)


def test_single_trial_run():
    rep = run_consistency(ExperimentConfig(PAPER_MATRIX, RsvdConfig(k=1, p=1, seed=3), 1, workers=1))
    assert rep.trials == 1
    assert np.all(rep.standard_errors == 0)
    assert rep.trace == pytest.approx(2.0, abs=1e-12)


@pytest.mark.parametrize("dist", list(D))
def test_small_run_invariants(dist):
    rep = run_consistency(ExperimentConfig(PAPER_MATRIX, RsvdConfig(k=2, dist=dist, seed=9), 5000, workers=1))
    assert abs(rep.trace - 2) <= 1e-6
    assert np.array_equal(rep.mean_projector, rep.mean_projector.T)
    assert rep.rank_deficient_trials == 0 or dist is D.RADEMACHER
    assert np.all(rep.lambda_hat > 0) and np.all(rep.lambda_hat < 1)


def test_q_greater_than_zero_run():
    a = np.array([[2.0, 0.0, 0.0, 1.0], [0.0, 1.5, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]])
    rep0 = run_consistency(ExperimentConfig(a, RsvdConfig(k=1, q=0, seed=2), 20_000, workers=1))
    rep2 = run_consistency(ExperimentConfig(a, RsvdConfig(k=1, q=2, seed=2), 20_000, workers=1))
    # power steps push weight onto the leading direction
    assert rep2.lambda_hat[0] > rep0.lambda_hat[0] + 0.05
    assert abs(rep2.trace - 1) <= 1e-6


def test_general_matrix_oracle_basis():
    rng = np.random.default_rng(10)
    a = rng.standard_normal((4, 5))
    rep = run_consistency(ExperimentConfig(a, RsvdConfig(k=2, seed=4), 40_000, workers=1))
    # diagonal in the singular basis, ordered, inside (0, 1)
    assert rep.max_offdiag_abs <= 4 * rep.standard_errors.max() * 2
    assert np.all(np.diff(rep.lambda_hat) < 0)
    assert rep.diag_in_unit_interval


# -- checkpoints ------------------------------------------------------------

def make_checkpoint():
    blocks = [BlockMoments(np.arange(9.0).reshape(3, 3), np.ones((3, 3)) * 0.5, 7) for _ in range(3)]
    return Checkpoint(
        master_seed=2**64 - 1, trials=10, trials_done=6, dist=D.T3, m=3, ell=2, q=1,
        matrix_hash=matrix_digest(PAPER_MATRIX), blocks=blocks,
    )


def test_checkpoint_round_trip(tmp_path):
    path = tmp_path / "run.ckpt"
    ckpt = make_checkpoint()
    write_checkpoint(path, ckpt)
    data = path.read_bytes()
    assert data[:8] == b"RSVDCKPT"
    back = read_checkpoint(path)
    assert (back.master_seed, back.trials, back.trials_done, back.dist, back.m, back.ell, back.q) == (
        2**64 - 1, 10, 6, D.T3, 3, 2, 1)
    assert back.matrix_hash == ckpt.matrix_hash
    for a, b in zip(back.blocks, ckpt.blocks):
        np.testing.assert_array_equal(a.first, b.first)
        np.testing.assert_array_equal(a.second, b.second)
        assert a.rank_deficient == b.rank_deficient


def test_checkpoint_corruption(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"NOTACKPT" + bytes(100))
    with pytest.raises(CheckpointMismatch):
        read_checkpoint(path)
    write_checkpoint(path, make_checkpoint())
    path.write_bytes(path.read_bytes()[:-5])
    with pytest.raises(CheckpointMismatch):
        read_checkpoint(path)


def test_resume_matches_uninterrupted(tmp_path):
    ec = ExperimentConfig(PAPER_MATRIX, RsvdConfig(k=2, dist=D.UNIFORM, seed=5), 20_000, workers=1)
    full = run_consistency(ec)
    path = tmp_path / "half.ckpt"
    assert run_consistency(ec, checkpoint_path=path, stop_after=10_000) is None
    assert read_checkpoint(path).trials_done >= 10_000
    resumed = run_consistency(ec, checkpoint_path=path, resume_from=path)
    np.testing.assert_array_equal(resumed.mean_projector, full.mean_projector)
    np.testing.assert_array_equal(resumed.standard_errors, full.standard_errors)
    assert resumed.rank_deficient_trials == full.rank_deficient_trials


def test_periodic_checkpoints(tmp_path):
    path = tmp_path / "periodic.ckpt"
    ec = ExperimentConfig(PAPER_MATRIX, RsvdConfig(k=2, seed=5), 6400, workers=1, checkpoint_every=1000)
    seen = []
    run_consistency(ec, checkpoint_path=path, progress=lambda done, total: seen.append(done))
    assert seen[-1] == 6400 and len(seen) == 64
    assert read_checkpoint(path).trials_done == 6400


def test_resume_mismatch(tmp_path):
    path = tmp_path / "x.ckpt"
    ec = ExperimentConfig(PAPER_MATRIX, RsvdConfig(k=2, seed=5), 2000, workers=1)
    run_consistency(ec, checkpoint_path=path, stop_after=500)
    for other in (
        ExperimentConfig(PAPER_MATRIX, RsvdConfig(k=2, seed=6), 2000, workers=1),
        ExperimentConfig(PAPER_MATRIX, RsvdConfig(k=2, seed=5, dist=D.T3), 2000, workers=1),
        ExperimentConfig(PAPER_MATRIX, RsvdConfig(k=2, seed=5), 3000, workers=1),
        ExperimentConfig(PAPER_MATRIX * 2, RsvdConfig(k=2, seed=5), 2000, workers=1),
    ):
        with pytest.raises(CheckpointMismatch):
            run_consistency(other, resume_from=path)


def test_stop_after_requires_checkpoint():
    ec = ExperimentConfig(PAPER_MATRIX, RsvdConfig(k=2), 100, workers=1)
    with pytest.raises(ConfigError):
        run_consistency(ec, stop_after=10)


def test_worker_count_does_not_change_result():
    ec1 = ExperimentConfig(PAPER_MATRIX, RsvdConfig(k=2, dist=D.T3, seed=1), 10_000, workers=1)
    ec3 = ExperimentConfig(PAPER_MATRIX, RsvdConfig(k=2, dist=D.T3, seed=1), 10_000, workers=3)
    r1, r3 = run_consistency(ec1), run_consistency(ec3)
    np.testing.assert_array_equal(r1.mean_projector, r3.mean_projector)
    np.testing.assert_array_equal(r1.standard_errors, r3.standard_errors)


def test_resolve_matrix(tmp_path):
    np.testing.assert_array_equal(resolve_matrix("paper3x3"), PAPER_MATRIX)
    path = tmp_path / "a.csv"
    path.write_text("1,2\n3,4\n")
    np.testing.assert_array_equal(resolve_matrix(path), [[1, 2], [3, 4]])
    np.testing.assert_array_equal(resolve_matrix(np.eye(2)), np.eye(2))
