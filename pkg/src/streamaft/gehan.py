"""Gehan rank loss and score for right-censored log-linear regression.

All evaluations work on the residuals e_l = log_time_l - beta'x_l. The loss
sums the negative parts of pairwise residual differences over uncensored
anchors; its subgradient replaces the negative part with the indicator
e_l <= e_j. Mini-batch quantities normalize by the batch size k, full-data
quantities by N.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import ConfigError, DataError

# Row block size for the O(N^2) full-data pass; bounds peak memory.
_BLOCK_ELEMS = 8_000_000


class Observation(NamedTuple):
    """One right-censored data point on the log-time scale."""

    log_time: float
    event: bool
    covariates: np.ndarray


def _as_arrays(observations: Sequence[Observation]):
    log_times = np.asarray([o.log_time for o in observations], dtype=float)
    events = np.asarray([o.event for o in observations], dtype=bool)
    X = np.asarray([np.asarray(o.covariates, dtype=float) for o in observations])
    if X.ndim != 2:
        raise ConfigError("covariate vectors must share a common length")
    if not (np.all(np.isfinite(log_times)) and np.all(np.isfinite(X))):
        raise DataError("log times and covariates must be finite")
    return log_times, events, X


@dataclass
class Dataset:
    """A full in-memory sample, stored columnwise for vectorized evaluation."""

    log_times: np.ndarray  # (N,)
    events: np.ndarray     # (N,) bool
    covariates: np.ndarray # (N, p)

    def __post_init__(self):
        self.log_times = np.asarray(self.log_times, dtype=float)
        self.events = np.asarray(self.events, dtype=bool)
        self.covariates = np.asarray(self.covariates, dtype=float)
        if self.covariates.ndim != 2 or len(self.log_times) != len(self.covariates):
            raise ConfigError("dataset arrays have inconsistent shapes")
        if not (np.all(np.isfinite(self.log_times)) and np.all(np.isfinite(self.covariates))):
            raise DataError("log times and covariates must be finite")

    @classmethod
    def from_observations(cls, observations: Sequence[Observation]) -> "Dataset":
        return cls(*_as_arrays(observations))

    def __len__(self):
        return len(self.log_times)

    @property
    def p(self) -> int:
        return self.covariates.shape[1]

    def observations(self):
        return [
            Observation(float(t), bool(d), x)
            for t, d, x in zip(self.log_times, self.events, self.covariates)
        ]


@dataclass
class MiniBatch:
    """A group of exactly k observations, the atomic SGD update unit.

    ``index`` is the 1-based position of the batch in the stream.
    """

    index: int
    log_times: np.ndarray
    events: np.ndarray
    covariates: np.ndarray

    def __post_init__(self):
        self.log_times = np.asarray(self.log_times, dtype=float)
        self.events = np.asarray(self.events, dtype=bool)
        self.covariates = np.asarray(self.covariates, dtype=float)
        if self.index < 1:
            raise ConfigError("batch index must be a positive integer")
        if self.covariates.ndim != 2 or len(self.log_times) != len(self.covariates):
            raise ConfigError("batch arrays have inconsistent shapes")
        if self.k < 2:
            raise ConfigError("batch size k must be at least 2")
        if not (np.all(np.isfinite(self.log_times)) and np.all(np.isfinite(self.covariates))):
            raise DataError("log times and covariates must be finite")

    @classmethod
    def from_observations(cls, index: int, observations: Sequence[Observation]) -> "MiniBatch":
        return cls(index, *_as_arrays(observations))

    @property
    def k(self) -> int:
        return len(self.log_times)

    @property
    def p(self) -> int:
        return self.covariates.shape[1]


def _check_beta(beta, p):
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (p,):
        raise ConfigError(f"coefficient vector has dimension {beta.shape}, expected ({p},)")
    return beta


def _pair_loss(log_times, events, X, beta, divisor):
    e = log_times - X @ beta
    diff = e[:, None] - e[None, :]
    neg = np.maximum(-diff, 0.0)
    return float((events[:, None] * neg).sum() / divisor)


def _pair_score(log_times, events, X, beta, divisor, row_weights=None):
    e = log_times - X @ beta
    ind = (e[:, None] <= e[None, :]).astype(float)
    w = events.astype(float) if row_weights is None else events * row_weights
    rows = w * ind.sum(axis=1)
    cols = w @ ind
    return (rows - cols) @ X / divisor


def batch_loss(batch: MiniBatch, beta) -> float:
    """Mini-batch Gehan objective, normalized by k. Convex piecewise linear."""
    beta = _check_beta(beta, batch.p)
    return _pair_loss(batch.log_times, batch.events, batch.covariates, beta, batch.k)


def batch_score(batch: MiniBatch, beta) -> np.ndarray:
    """Subgradient of :func:`batch_loss` at ``beta``."""
    beta = _check_beta(beta, batch.p)
    return _pair_score(batch.log_times, batch.events, batch.covariates, beta, batch.k)


def perturbed_batch_score(batch: MiniBatch, beta, weights) -> np.ndarray:
    """Batch score with each anchor row l scaled by a nonnegative weight.

    With all weights equal to one this reproduces :func:`batch_score` exactly.
    """
    beta = _check_beta(beta, batch.p)
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (batch.k,):
        raise ConfigError(f"expected {batch.k} perturbation weights, got {weights.shape}")
    if np.any(weights < 0):
        raise DataError("perturbation weights must be nonnegative")
    return _pair_score(
        batch.log_times, batch.events, batch.covariates, beta, batch.k, row_weights=weights
    )


def multi_batch_scores(batch: MiniBatch, betas, weights) -> np.ndarray:
    """Perturbed batch scores for m (beta, weight-row) pairs in one pass.

    ``betas`` is (m, p) and ``weights`` (m, k); returns (m, p). Row 0 with unit
    weights gives the unperturbed score, so the main SGD chain and all
    bootstrap replicates advance with a single kernel call.
    """
    betas = np.asarray(betas, dtype=float)
    weights = np.asarray(weights, dtype=float)
    k = batch.k
    E = batch.log_times[None, :] - betas @ batch.covariates.T      # (m, k)
    ind = (E[:, :, None] <= E[:, None, :]).astype(float)           # (m, k, k)
    w = batch.events[None, :] * weights                            # (m, k)
    rows = w * ind.sum(axis=2)
    cols = np.einsum("ml,mlj->mj", w, ind)
    return (rows - cols) @ batch.covariates / k


def full_loss(dataset: Dataset, beta) -> float:
    """Full-data Gehan objective, normalized by N."""
    if len(dataset) < 2:
        raise DataError("need at least two observations")
    beta = _check_beta(beta, dataset.p)
    loss, _ = full_loss_and_score(dataset, beta)
    return loss


def full_score(dataset: Dataset, beta) -> np.ndarray:
    """Subgradient of :func:`full_loss` at ``beta``."""
    if len(dataset) < 2:
        raise DataError("need at least two observations")
    beta = _check_beta(beta, dataset.p)
    _, score = full_loss_and_score(dataset, beta)
    return score


def full_loss_and_score(dataset: Dataset, beta):
    """Evaluate the full objective and a subgradient in one blocked O(N^2) pass."""
    beta = _check_beta(beta, dataset.p)
    N = len(dataset)
    X = dataset.covariates
    e = dataset.log_times - X @ beta
    w = dataset.events.astype(float)

    block = max(1, _BLOCK_ELEMS // N)
    loss = 0.0
    rows = np.empty(N)
    cols = np.zeros(N)
    for start in range(0, N, block):
        stop = min(start + block, N)
        diff = e[start:stop, None] - e[None, :]
        loss += float((w[start:stop, None] * np.maximum(-diff, 0.0)).sum())
        ind = (diff <= 0).astype(float)
        rows[start:stop] = ind.sum(axis=1)
        cols += w[start:stop] @ ind
    score = ((w * rows) @ X - cols @ X) / N
    return loss / N, score
