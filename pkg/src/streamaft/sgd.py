"""Recursive mini-batch SGD with Polyak-Ruppert averaging.

The iterate moves against the mini-batch Gehan score with a decaying
learning rate gamma_1 * i^(-alpha); the reported estimator is the running
mean of the iterates. The running mean is kept as an exact sum so that it
matches a shadow arithmetic mean to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import ConfigError, DataError, SequencingError
from .gehan import MiniBatch, batch_score


@dataclass(frozen=True)
class LearningRateSchedule:
    """gamma_i = gamma1 * i^(-alpha), with gamma1 > 0 and alpha in (0.5, 1)."""

    gamma1: float = 1.0
    alpha: float = 0.7

    def __post_init__(self):
        if not (self.gamma1 > 0):
            raise ConfigError("gamma1 must be positive")
        if not (0.5 < self.alpha < 1.0):
            raise ConfigError("alpha must lie strictly between 0.5 and 1")


def learning_rate(i: int, schedule: LearningRateSchedule) -> float:
    """Step size for the i-th batch (i >= 1)."""
    if i < 1:
        raise ConfigError("batch index must be >= 1")
    return schedule.gamma1 * float(i) ** (-schedule.alpha)


@dataclass
class EstimatorState:
    """Current SGD iterate plus the running average of past iterates.

    ``beta_bar_sum`` accumulates the iterates beta_hat_1..beta_hat_i; the
    averaged estimator is the sum divided by the batch count. Before any
    batch is consumed, beta_bar falls back to the initial iterate.
    """

    dimension: int
    schedule: LearningRateSchedule
    beta_hat: np.ndarray
    beta_bar_sum: np.ndarray
    batch_count: int = 0
    batch_size: Optional[int] = None  # locked on the first batch

    @property
    def beta_bar(self) -> np.ndarray:
        if self.batch_count == 0:
            return self.beta_hat.copy()
        return self.beta_bar_sum / self.batch_count


def init_state(p: int, schedule: LearningRateSchedule, beta0=None) -> EstimatorState:
    """Fresh state at the initial iterate (zero vector unless supplied)."""
    if p < 1:
        raise ConfigError("model dimension p must be positive")
    if beta0 is None:
        beta0 = np.zeros(p)
    beta0 = np.asarray(beta0, dtype=float)
    if beta0.shape != (p,):
        raise ConfigError(f"initial coefficients have shape {beta0.shape}, expected ({p},)")
    return EstimatorState(
        dimension=p,
        schedule=schedule,
        beta_hat=beta0.copy(),
        beta_bar_sum=np.zeros(p),
    )


def _check_batch(state: EstimatorState, batch: MiniBatch):
    if batch.index != state.batch_count + 1:
        raise SequencingError(
            f"batch index {batch.index} out of order (expected {state.batch_count + 1})"
        )
    if batch.p != state.dimension:
        raise ConfigError(
            f"batch covariate dimension {batch.p} does not match model dimension {state.dimension}"
        )
    if state.batch_size is not None and batch.k != state.batch_size:
        raise ConfigError(
            f"batch size changed mid-stream: {batch.k} after {state.batch_size}"
        )


def sgd_step(state: EstimatorState, batch: MiniBatch) -> EstimatorState:
    """Advance one batch: move against the score at the old iterate, then fold
    the new iterate into the running average."""
    _check_batch(state, batch)
    gamma = learning_rate(batch.index, state.schedule)
    new_hat = state.beta_hat - gamma * batch_score(batch, state.beta_hat)
    return replace(
        state,
        beta_hat=new_hat,
        beta_bar_sum=state.beta_bar_sum + new_hat,
        batch_count=batch.index,
        batch_size=batch.k,
    )


def finalize(state: EstimatorState) -> np.ndarray:
    """The averaged estimator after at least one batch."""
    if state.batch_count < 1:
        raise DataError("no batches consumed; nothing to report")
    return state.beta_bar
