"""Desk-scale exact minimizer of the full-data Gehan objective.

The objective is convex piecewise linear, so we run plain subgradient
descent with a c/sqrt(t) step and tail averaging, then polish the best
candidate with a compass search over coordinate and diagonal directions.
Intended as a ground-truth comparator and test oracle; the O(N^2) passes
make it impractical past a few thousand observations, which is the point.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from itertools import product

import numpy as np

from .errors import ConfigError, DataError, DegenerateProblemError
from .gehan import Dataset, full_loss_and_score


@dataclass
class OracleResult:
    beta: np.ndarray
    objective: float
    score_norm: float
    iterations: int
    converged: bool


def _directions(p: int) -> np.ndarray:
    dirs = list(np.eye(p)) + list(-np.eye(p))
    if p <= 4:
        # diagonal moves so the compass search does not stall on off-axis kinks
        for i in range(p):
            for j in range(i + 1, p):
                for si, sj in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                    d = np.zeros(p)
                    d[i], d[j] = si, sj
                    dirs.append(d / np.sqrt(2))
    return np.array(dirs)


def solve_batch(dataset: Dataset, init=None, max_iter: int = 300, tol: float = 1e-6,
                polish: bool = True) -> OracleResult:
    """Minimize the full-data Gehan objective.

    ``init`` warm-starts the search (e.g. from the streaming estimate).
    ``converged`` certifies local optimality on a probe grid of step ``tol``.
    ``polish=False`` skips the compass stage (fixed work, used for timing).
    """
    N = len(dataset)
    if N < 2:
        raise DataError("need at least two observations")
    if not dataset.events.any():
        raise DegenerateProblemError("every observation is censored; objective is identically zero")
    p = dataset.p
    rank_ok = bool(
        np.linalg.matrix_rank(dataset.covariates - dataset.covariates.mean(axis=0)) == p
    )
    if not rank_ok:
        warnings.warn("covariate matrix is rank deficient; minimizer may be non-unique")

    beta = np.zeros(p) if init is None else np.asarray(init, dtype=float).copy()
    if beta.shape != (p,):
        raise ConfigError(f"initial coefficients have shape {beta.shape}, expected ({p},)")

    loss, score = full_loss_and_score(dataset, beta)
    best_beta, best_loss = beta.copy(), loss
    evals = 1

    # Subgradient phase. Scale the step so the first move is O(1) in beta space.
    c = 1.0 / (np.linalg.norm(score) + 1e-12)
    tail_sum = np.zeros(p)
    tail_n = 0
    for t in range(1, max_iter + 1):
        beta = beta - (c / np.sqrt(t)) * score
        loss, score = full_loss_and_score(dataset, beta)
        evals += 1
        if loss < best_loss:
            best_loss, best_beta = loss, beta.copy()
        if t > max_iter // 2:
            tail_sum += beta
            tail_n += 1
        if np.linalg.norm(score) * np.sqrt(N) < tol:
            break
    if tail_n:
        tail_avg = tail_sum / tail_n
        tail_loss, _ = full_loss_and_score(dataset, tail_avg)
        evals += 1
        if tail_loss < best_loss:
            best_loss, best_beta = tail_loss, tail_avg

    # Compass polish down to the probe resolution; first-improvement moves
    # keep the evaluation count low on long descents.
    dirs = _directions(p)
    h = 0.05 if polish else 0.0
    while h > tol / 4:
        improved = False
        for d in dirs:
            cand = best_beta + h * d
            cand_loss, _ = full_loss_and_score(dataset, cand)
            evals += 1
            if cand_loss < best_loss - 1e-15:
                best_loss, best_beta = cand_loss, cand
                improved = True
                break
        if not improved:
            h /= 2

    _, final_score = full_loss_and_score(dataset, best_beta)

    # Local optimality certificate on a probe grid of step tol.
    if p <= 2:
        probes = [np.array(off) for off in product((-tol, 0.0, tol), repeat=p)]
    else:
        probes = [tol * d for d in np.vstack([np.eye(p), -np.eye(p)])]
    converged = rank_ok
    for off in probes:
        probe_loss, _ = full_loss_and_score(dataset, best_beta + off)
        if best_loss > probe_loss + tol * (1 + abs(probe_loss)):
            converged = False
            break

    return OracleResult(
        beta=best_beta,
        objective=best_loss,
        score_norm=float(np.linalg.norm(final_score)),
        iterations=evals,
        converged=converged,
    )
