"""Single-pass perturbation bootstrap for the streaming estimator.

B perturbed SGD trajectories run in lockstep with the main chain. Replicate b
reuses the main update rule but multiplies each anchor row of the batch score
by an i.i.d. nonnegative weight with mean and variance one (standard
exponential by default). The spread of the B averaged replicate estimates
around the main average estimates the sampling covariance.

Weights come from a counter-based Philox stream keyed by (seed, batch index);
replicate b consumes the b-th block of k uniforms from that stream. Draws are
therefore reproducible and independent of both batch arrival timing and
replicate evaluation order.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from statistics import NormalDist
from typing import List, Optional

import numpy as np

from .errors import ConfigError, DataError, SequencingError
from .gehan import MiniBatch, multi_batch_scores
from .sgd import EstimatorState, LearningRateSchedule, init_state, learning_rate

WEIGHT_LAWS = ("exponential", "unit")


def _uniform_stream(seed: int, batch_index: int, count: int) -> np.ndarray:
    key = np.array(
        [np.uint64(seed & 0xFFFFFFFFFFFFFFFF), np.uint64(batch_index)], dtype=np.uint64
    )
    gen = np.random.Generator(np.random.Philox(key=key))
    return gen.random(count)


def _weights_from_uniforms(u: np.ndarray, law: str) -> np.ndarray:
    if law == "exponential":
        return -np.log1p(-u)
    if law == "unit":
        return np.ones_like(u)
    raise ConfigError(f"unknown weight law {law!r}")


def draw_weights(replicate_id: int, batch_index: int, k: int, seed: int,
                 law: str = "exponential") -> np.ndarray:
    """The k perturbation weights replicate ``replicate_id`` uses on batch
    ``batch_index``. Deterministic in (seed, replicate_id, batch_index)."""
    if k < 2:
        raise ConfigError("batch size k must be at least 2")
    if replicate_id < 1:
        raise ConfigError("replicate ids are 1-based")
    u = _uniform_stream(seed, batch_index, replicate_id * k)[-k:]
    return _weights_from_uniforms(u, law)


def _weight_matrix(B: int, batch_index: int, k: int, seed: int, law: str) -> np.ndarray:
    """Rows 1..B of the per-batch weight table, identical to per-replicate
    :func:`draw_weights` calls."""
    u = _uniform_stream(seed, batch_index, B * k).reshape(B, k)
    return _weights_from_uniforms(u, law)


@dataclass
class ReplicateState:
    replicate_id: int
    state: EstimatorState
    rng_lineage: dict


@dataclass
class BootstrapEnsemble:
    """Main estimator state plus B perturbed replicate trajectories.

    Replicate iterates and running sums are stored as (B, p) arrays; use
    :meth:`replicate_states` for a per-replicate view.
    """

    main: EstimatorState
    B: int
    seed: int
    weight_law: str = "exponential"
    rep_hat: np.ndarray = None    # (B, p)
    rep_bar_sum: np.ndarray = None

    def __post_init__(self):
        if self.B < 0:
            raise ConfigError("number of replicates B must be nonnegative")
        if self.weight_law not in WEIGHT_LAWS:
            raise ConfigError(f"unknown weight law {self.weight_law!r}")
        p = self.main.dimension
        if self.rep_hat is None:
            self.rep_hat = np.tile(self.main.beta_hat, (self.B, 1))
        if self.rep_bar_sum is None:
            self.rep_bar_sum = np.zeros((self.B, p))

    @property
    def batch_count(self) -> int:
        return self.main.batch_count

    @property
    def rep_bar(self) -> np.ndarray:
        if self.batch_count == 0:
            return self.rep_hat.copy()
        return self.rep_bar_sum / self.batch_count

    def replicate_states(self) -> List[ReplicateState]:
        out = []
        for b in range(self.B):
            st = replace(
                self.main,
                beta_hat=self.rep_hat[b].copy(),
                beta_bar_sum=self.rep_bar_sum[b].copy(),
            )
            lineage = {"seed": self.seed, "replicate_id": b + 1, "law": self.weight_law}
            out.append(ReplicateState(b + 1, st, lineage))
        return out


def init_ensemble(p: int, schedule: LearningRateSchedule, B: int, seed: int,
                  beta0=None, weight_law: str = "exponential") -> BootstrapEnsemble:
    """All B replicates start from the same initial iterate as the main chain."""
    return BootstrapEnsemble(main=init_state(p, schedule, beta0), B=B, seed=seed,
                             weight_law=weight_law)


def ensemble_step(ensemble: BootstrapEnsemble, batch: MiniBatch) -> BootstrapEnsemble:
    """Advance main and all replicates exactly one batch.

    Row 0 of the stacked update carries unit weights (the main chain); rows
    1..B carry each replicate's drawn weights.
    """
    main = ensemble.main
    if batch.index != main.batch_count + 1:
        raise SequencingError(
            f"batch index {batch.index} out of order (expected {main.batch_count + 1})"
        )
    if batch.p != main.dimension:
        raise ConfigError(
            f"batch covariate dimension {batch.p} does not match model dimension {main.dimension}"
        )
    if main.batch_size is not None and batch.k != main.batch_size:
        raise ConfigError(f"batch size changed mid-stream: {batch.k} after {main.batch_size}")

    k = batch.k
    betas = np.vstack([main.beta_hat[None, :], ensemble.rep_hat])
    weights = np.vstack([
        np.ones((1, k)),
        _weight_matrix(ensemble.B, batch.index, k, ensemble.seed, ensemble.weight_law),
    ])
    scores = multi_batch_scores(batch, betas, weights)
    gamma = learning_rate(batch.index, main.schedule)
    new = betas - gamma * scores

    new_main = replace(
        main,
        beta_hat=new[0],
        beta_bar_sum=main.beta_bar_sum + new[0],
        batch_count=batch.index,
        batch_size=k,
    )
    return replace(
        ensemble,
        main=new_main,
        rep_hat=new[1:],
        rep_bar_sum=ensemble.rep_bar_sum + new[1:],
    )


def covariance(ensemble: BootstrapEnsemble) -> np.ndarray:
    """Sample covariance (divisor B-1) of the B averaged replicate estimates."""
    if ensemble.B < 2:
        raise DataError("need at least two replicates for a covariance estimate")
    if ensemble.batch_count < 1:
        raise DataError("no batches consumed")
    bars = ensemble.rep_bar
    centered = bars - bars.mean(axis=0)
    cov = centered.T @ centered / (ensemble.B - 1)
    return (cov + cov.T) / 2


@dataclass
class IntervalEstimate:
    lower: np.ndarray
    upper: np.ndarray
    level: float
    method: str


def confidence_intervals(ensemble: BootstrapEnsemble, level: float = 0.95,
                         method: str = "normal") -> IntervalEstimate:
    """Componentwise intervals for the averaged estimator.

    ``normal`` pairs the point estimate with the bootstrap standard error;
    ``percentile`` is the basic bootstrap on the replicate differences.
    """
    if not (0 < level < 1):
        raise ConfigError("confidence level must lie in (0, 1)")
    center = ensemble.main.beta_bar
    alpha = 1 - level
    if method == "normal":
        if ensemble.B < 2:
            raise DataError("normal intervals need at least two replicates")
        se = np.sqrt(np.diag(covariance(ensemble)))
        z = NormalDist().inv_cdf(1 - alpha / 2)
        lower, upper = center - z * se, center + z * se
    elif method == "percentile":
        if ensemble.B < 20:
            raise DataError("percentile intervals need at least 20 replicates")
        diffs = ensemble.rep_bar - center
        hi = np.quantile(diffs, 1 - alpha / 2, axis=0)
        lo = np.quantile(diffs, alpha / 2, axis=0)
        lower, upper = center - hi, center - lo
    else:
        raise ConfigError(f"unknown interval method {method!r}")
    return IntervalEstimate(lower=lower, upper=upper, level=level, method=method)
