"""Command-line entry point: ``rsvdlab {svd,rsvd,consistency}``.

stdout carries exactly one JSON document; diagnostics go to stderr.
Exit codes: 0 ok, 1 numerical failure, 2 parse error, 3 dimension or
configuration error, 4 checkpoint mismatch.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import matrix_digest
from .consistency import BUILTIN_MATRICES, ExperimentConfig, load_builtin, run_consistency
from .errors import CheckpointMismatch, ConfigError, DimensionMismatch, MatrixParseError, RankTooLarge, RsvdError
from .linalg import frobenius_norm
from .matrix_io import read_csv_matrix
from .randgen import SketchDistribution
from .rsvd import RsvdConfig, exact_truncated_svd, rsvd

EXIT_OK = 0
EXIT_NUMERIC = 1
EXIT_PARSE = 2
EXIT_CONFIG = 3
EXIT_CHECKPOINT = 4

DEFAULT_TRIALS = 100_000
DEFAULT_CHECKPOINT_EVERY = 1_000_000


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_PARSE, f"{self.prog}: error: {message}\n")


def _matrix_args(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--matrix", type=Path, help="CSV file with one matrix row per line")
    src.add_argument("--demo", choices=sorted(BUILTIN_MATRICES), help="built-in matrix")


def _seed(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be in [0, 2**64), got {text}")
    return value


def _dist(text: str) -> SketchDistribution:
    try:
        return SketchDistribution.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rsvdlab", description="Randomized SVD laboratory.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("svd", help="exact truncated SVD")
    _matrix_args(p)
    p.add_argument("--k", type=int, help="rank to keep (default: min(m, n))")

    p = sub.add_parser("rsvd", help="randomized SVD of one matrix")
    _matrix_args(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--p", type=int, default=0, help="oversampling")
    p.add_argument("--q", type=int, default=0, help="power steps")
    p.add_argument("--dist", type=_dist, default=SketchDistribution.GAUSSIAN)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--theorem-mode", action="store_true", help="require ell < m <= n")

    p = sub.add_parser("consistency", help="Monte Carlo estimate of E(QQ^T)")
    _matrix_args(p)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--p", type=int, default=0)
    p.add_argument("--q", type=int, default=0)
    p.add_argument("--dist", type=_dist, default=SketchDistribution.GAUSSIAN)
    p.add_argument("--trials", type=int, default=DEFAULT_TRIALS)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--workers", type=int, default=None, help="0 = one per CPU (env RSVD_WORKERS)")
    p.add_argument("--checkpoint", type=Path, help="write resumable progress here")
    p.add_argument("--checkpoint-every", type=int, default=DEFAULT_CHECKPOINT_EVERY)
    p.add_argument("--resume", type=Path, help="continue from this checkpoint")
    p.add_argument("--stop-after", type=int, help="checkpoint and exit once this many trials are done")
    p.add_argument("--timing", action="store_true", help="record elapsed_seconds in the report")
    p.add_argument("--progress", action="store_true", help="trial counter on stderr")
    return parser


def _load(args) -> tuple[np.ndarray, str]:
    if args.demo:
        return load_builtin(args.demo), args.demo
    return read_csv_matrix(args.matrix), str(args.matrix)


def _matrix_info(a: np.ndarray, label: str) -> dict:
    return {"source": label, "rows": a.shape[0], "cols": a.shape[1], "sha256": matrix_digest(a).hex()}


def _svd_fields(svd) -> dict:
    return {"U": svd.u.tolist(), "sigma": svd.sigma.tolist(), "V": svd.v.tolist()}


def _header(command: str) -> dict:
    return {"tool_version": __version__, "command": command}


def cmd_svd(args) -> dict:
    a, label = _load(args)
    k = args.k if args.k is not None else min(a.shape)
    svd = exact_truncated_svd(a, k)
    return {**_header("svd"), "matrix": _matrix_info(a, label), "k": k, **_svd_fields(svd)}


def cmd_rsvd(args) -> dict:
    a, label = _load(args)
    cfg = RsvdConfig(k=args.k, p=args.p, q=args.q, dist=args.dist, seed=args.seed,
                     theorem_mode=args.theorem_mode)
    result = rsvd(a, cfg)
    oracle = exact_truncated_svd(a, min(a.shape))
    error = frobenius_norm(a - result.truncated.reconstruct())
    norm_a = frobenius_norm(a)
    return {
        **_header("rsvd"),
        "seed": cfg.seed,
        "dist": cfg.dist.value,
        "matrix": _matrix_info(a, label),
        "k": cfg.k,
        "p": cfg.p,
        "q": cfg.q,
        "ell": cfg.ell,
        **_svd_fields(result.truncated),
        "sigma_ell": result.full_ell.sigma.tolist(),
        "q_basis": result.q_basis.tolist(),
        "rank_deficient": result.rank_deficient,
        "frobenius_error": error,
        "relative_error": error / norm_a if norm_a > 0 else 0.0,
        "optimal_error": float(np.sqrt(np.sum(oracle.sigma[cfg.k:] ** 2))),
        "exact_sigma": oracle.sigma.tolist(),
    }


def _workers(args) -> int:
    if args.workers is not None:
        return args.workers
    env = os.environ.get("RSVD_WORKERS", "").strip()
    if env:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"RSVD_WORKERS must be an integer, got {env!r}") from None
    return 0


def consistency_document(report, ec: ExperimentConfig, label: str, timing: bool) -> dict:
    cfg = ec.cfg
    return {
        **_header("consistency"),
        "seed": report.seed,
        "dist": report.dist.value,
        "N": report.trials,
        "k": cfg.k,
        "p": cfg.p,
        "q": cfg.q,
        "ell": cfg.ell,
        "matrix": _matrix_info(ec.matrix, label),
        "mean_projector": report.mean_projector.tolist(),
        "lambda_hat": report.lambda_hat.tolist(),
        "lambda_standard_errors": report.lambda_standard_errors.tolist(),
        "standard_errors": report.standard_errors.tolist(),
        "max_offdiag_abs": report.max_offdiag_abs,
        "offdiag_argmax": list(report.offdiag_argmax),
        "trace": report.trace,
        "diag_strictly_decreasing": report.diag_strictly_decreasing,
        "diag_in_unit_interval": report.diag_in_unit_interval,
        "corollary_ratio": report.corollary_ratio,
        "oracle_sigma": report.oracle.sigma.tolist(),
        "rank_deficient_trials": report.rank_deficient_trials,
        "elapsed_seconds": report.elapsed if timing else None,
    }


def cmd_consistency(args) -> dict | None:
    a, label = _load(args)
    cfg = RsvdConfig(k=args.k, p=args.p, q=args.q, dist=args.dist, seed=args.seed, theorem_mode=True)
    checkpoint = args.checkpoint or args.resume
    ec = ExperimentConfig(
        matrix=a, cfg=cfg, trials=args.trials, workers=_workers(args),
        checkpoint_every=args.checkpoint_every if checkpoint else 0, label=label,
    )

    def progress(done: int, total: int) -> None:
        print(f"trials {done}/{total}", file=sys.stderr, flush=True)

    report = run_consistency(
        ec,
        checkpoint_path=checkpoint,
        resume_from=args.resume,
        stop_after=args.stop_after,
        progress=progress if args.progress else None,
    )
    if report is None:
        print(f"stopped early; progress saved to {checkpoint}", file=sys.stderr)
        return None
    return consistency_document(report, ec, label, args.timing)


COMMANDS = {"svd": cmd_svd, "rsvd": cmd_rsvd, "consistency": cmd_consistency}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        doc = COMMANDS[args.command](args)
    except MatrixParseError as exc:
        print(f"rsvdlab: parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except CheckpointMismatch as exc:
        print(f"rsvdlab: checkpoint mismatch: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except (ConfigError, DimensionMismatch, RankTooLarge) as exc:
        print(f"rsvdlab: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RsvdError, OSError) as exc:
        print(f"rsvdlab: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    if doc is not None:
        sys.stdout.write(json.dumps(doc, indent=2) + "\n")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
