"""Synthetic censored AFT experiments: table replications, timing curves,
and a Monte-Carlo evaluator for the batch-vs-streaming relative efficiency.

The generative design: covariates are independent standard normals,
log T = beta0'X + eps with eps standard normal, standard logistic, or the
standard minimum extreme-value (log-Weibull) law, and the censoring time is
Uniform(0, c) with c calibrated by bisection to hit a target censoring
proportion.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .bootstrap import BootstrapEnsemble, confidence_intervals, ensemble_step, init_ensemble
from .errors import ConfigError, DataError
from .gehan import Dataset, MiniBatch
from .oracle import solve_batch
from .sgd import LearningRateSchedule, finalize

ERROR_LAWS = ("normal", "logistic", "extreme_value")


def _draw_errors(rng: np.random.Generator, law: str, n: int) -> np.ndarray:
    if law == "normal":
        return rng.standard_normal(n)
    if law == "logistic":
        return rng.logistic(size=n)
    if law == "extreme_value":
        # minimum-type Gumbel (log-Weibull): F(u) = 1 - exp(-e^u)
        return -rng.gumbel(size=n)
    raise ConfigError(f"unknown error law {law!r}")


@dataclass
class SimSpec:
    """Declarative description of one synthetic experiment."""

    p: int = 2
    beta0: Sequence[float] = (1.0, 1.0)
    error_law: str = "normal"
    censor_target: float = 0.2
    N: int = 50000
    k: int = 50
    reps: int = 200
    B: int = 200
    seed: int = 2024
    schedule: Optional[LearningRateSchedule] = None
    ci_method: str = "normal"
    ci_level: float = 0.95

    def __post_init__(self):
        self.beta0 = np.asarray(self.beta0, dtype=float)
        if self.beta0.shape != (self.p,):
            raise ConfigError("beta0 dimension does not match p")
        if self.error_law not in ERROR_LAWS:
            raise ConfigError(f"unknown error law {self.error_law!r}")
        if not (0 <= self.censor_target < 1):
            raise ConfigError("censoring target must lie in [0, 1)")
        if self.k < 2:
            raise ConfigError("batch size k must be at least 2")

    def resolve_schedule(self) -> LearningRateSchedule:
        """The batch score magnitude grows linearly in k, so the default
        initial step scales as 1/k; the constant 3 keeps the start-up
        transient negligible without destabilizing early steps. alpha follows
        the simulation design."""
        if self.schedule is not None:
            return self.schedule
        return LearningRateSchedule(gamma1=3.0 / self.k, alpha=0.7)


def calibrate_censoring(spec: SimSpec, draws: int = 1_000_000) -> float:
    """Upper bound c of the Uniform(0, c) censoring law hitting the target
    censoring proportion, solved by bisection on a fixed Monte-Carlo sample.

    Returns ``inf`` when the target is zero (no censoring).
    """
    if spec.censor_target == 0:
        return math.inf
    rng = np.random.default_rng([spec.seed, 0xCA11B])
    X = rng.standard_normal((draws, spec.p))
    eps = _draw_errors(rng, spec.error_law, draws)
    T = np.exp(X @ spec.beta0 + eps)

    def censored_fraction(c):
        # P(T > C) with C ~ U(0, c), averaged over the sample of T
        return float(np.minimum(T / c, 1.0).mean())

    lo, hi = 1e-8, 1.0
    while censored_fraction(hi) > spec.censor_target:
        hi *= 2
        if hi > 1e12:
            raise DataError("censoring target unattainable")
    for _ in range(200):
        mid = (lo + hi) / 2
        if censored_fraction(mid) > spec.censor_target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-9 * max(1.0, hi):
            break
    c = (lo + hi) / 2
    if abs(censored_fraction(c) - spec.censor_target) > 0.005:
        raise DataError("censoring calibration failed to reach the target")
    return c


def generate_dataset(spec: SimSpec, rep_index: int, censor_bound: Optional[float] = None) -> Dataset:
    """One replication's dataset; deterministic in (spec.seed, rep_index)."""
    if censor_bound is None:
        censor_bound = calibrate_censoring(spec)
    rng = np.random.default_rng([spec.seed, 7, rep_index])
    X = rng.standard_normal((spec.N, spec.p))
    eps = _draw_errors(rng, spec.error_law, spec.N)
    T = np.exp(X @ spec.beta0 + eps)
    if math.isinf(censor_bound):
        events = np.ones(spec.N, dtype=bool)
        observed = T
    else:
        C = rng.uniform(0.0, censor_bound, spec.N)
        events = T <= C
        observed = np.minimum(T, C)
    return Dataset(np.log(observed), events, X)


def _replicate_seed(spec: SimSpec, rep_index: int) -> int:
    return int(np.random.SeedSequence([spec.seed, 13, rep_index]).generate_state(1)[0])


def stream_dataset(ensemble: BootstrapEnsemble, dataset: Dataset, k: int) -> BootstrapEnsemble:
    """Feed a dataset through the ensemble in arrival order, k at a time.
    A trailing partial batch is dropped."""
    n = len(dataset) // k
    for i in range(n):
        sl = slice(i * k, (i + 1) * k)
        batch = MiniBatch(
            ensemble.batch_count + 1,
            dataset.log_times[sl],
            dataset.events[sl],
            dataset.covariates[sl],
        )
        ensemble = ensemble_step(ensemble, batch)
    return ensemble


@dataclass
class ReplicationResults:
    """Raw per-replication outputs, the basis for every summary."""

    estimates: np.ndarray        # (reps, p) averaged estimates
    hits: Optional[np.ndarray]   # (reps, p) CI coverage indicators, None if B < 2
    runtimes: np.ndarray         # (reps,) seconds
    replicate_bars: Optional[np.ndarray]  # (reps, B, p) if collected
    censor_bound: float


def run_replications(spec: SimSpec, collect_replicates: bool = False,
                     censor_bound: Optional[float] = None) -> ReplicationResults:
    if censor_bound is None:
        censor_bound = calibrate_censoring(spec)
    schedule = spec.resolve_schedule()
    estimates = np.empty((spec.reps, spec.p))
    hits = np.empty((spec.reps, spec.p), dtype=bool) if spec.B >= 2 else None
    runtimes = np.empty(spec.reps)
    rep_bars = np.empty((spec.reps, spec.B, spec.p)) if collect_replicates else None

    for r in range(spec.reps):
        data = generate_dataset(spec, r, censor_bound)
        t0 = time.perf_counter()
        ens = init_ensemble(spec.p, schedule, spec.B, _replicate_seed(spec, r))
        ens = stream_dataset(ens, data, spec.k)
        est = finalize(ens.main)
        if spec.B >= 2:
            ci = confidence_intervals(ens, spec.ci_level, spec.ci_method)
            hits[r] = (ci.lower <= spec.beta0) & (spec.beta0 <= ci.upper)
        runtimes[r] = time.perf_counter() - t0
        estimates[r] = est
        if collect_replicates:
            rep_bars[r] = ens.rep_bar
    return ReplicationResults(estimates, hits, runtimes, rep_bars, censor_bound)


@dataclass
class ExperimentSummary:
    bias: np.ndarray
    emp_sd: np.ndarray
    coverage: Optional[np.ndarray]
    mean_runtime_s: float
    spec: SimSpec


def run_table_experiment(spec: SimSpec) -> ExperimentSummary:
    """Replicated bias / empirical SD / coverage summary for one design."""
    res = run_replications(spec)
    return ExperimentSummary(
        bias=res.estimates.mean(axis=0) - spec.beta0,
        emp_sd=res.estimates.std(axis=0, ddof=1),
        coverage=None if res.hits is None else res.hits.mean(axis=0),
        mean_runtime_s=float(res.runtimes.mean()),
        spec=spec,
    )


def run_timing_experiment(N_grid: Sequence[int], k: int, include_oracle_upto: int = 0,
                          seed: int = 2024, repeats: int = 3,
                          oracle_max_iter: int = 40) -> list:
    """Wall-time curves: the streaming pass (no replicates) per N, and the
    batch oracle for N up to ``include_oracle_upto``.

    Oracle timing disables the polish stage so the evaluation count is
    identical across N and the measured growth is the O(N^2) pass alone.
    """
    if list(N_grid) != sorted(N_grid):
        raise ConfigError("N grid must be sorted ascending")
    rows = []
    for N in N_grid:
        spec = SimSpec(N=N, k=k, B=0, reps=1, seed=seed)
        c = calibrate_censoring(spec, draws=200_000)
        data = generate_dataset(spec, 0, c)
        sgd_times = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            ens = init_ensemble(spec.p, spec.resolve_schedule(), 0, seed)
            ens = stream_dataset(ens, data, k)
            sgd_times.append(time.perf_counter() - t0)
        row = {"N": N, "sgd_s": float(np.median(sgd_times))}
        if N <= include_oracle_upto:
            t0 = time.perf_counter()
            solve_batch(data, max_iter=oracle_max_iter, tol=1e-3, polish=False)
            row["oracle_s"] = time.perf_counter() - t0
        rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# Monte-Carlo relative efficiency of the k-batch streaming estimator
# ---------------------------------------------------------------------------

def _sample_population(spec: SimSpec, rng: np.random.Generator, n: int, censor_bound: float):
    X = rng.standard_normal((n, spec.p))
    eps = _draw_errors(rng, spec.error_law, n)
    T = np.exp(X @ spec.beta0 + eps)
    if math.isinf(censor_bound):
        events = np.ones(n, dtype=bool)
        observed = T
    else:
        C = rng.uniform(0.0, censor_bound, n)
        events = T <= C
        observed = np.minimum(T, C)
    e = np.log(observed) - X @ spec.beta0  # residuals at the truth
    return e, events.astype(float), X


def _pair_kernel(e1, d1, X1, e2, d2, X2):
    """Symmetrized pairwise score kernel at the truth; shape (..., p)."""
    a = (d1 * (e1 <= e2))[..., None] * (X1 - X2)
    b = (d2 * (e2 <= e1))[..., None] * (X2 - X1)
    return 0.5 * (a + b)


@dataclass
class ReEstimate:
    k: int
    direction: np.ndarray
    value: float
    mc_se: float
    reciprocal: float
    q1: np.ndarray
    q2: np.ndarray
    hessian: np.ndarray


def _re_from_forms(k: int, q1_form: float, q2_form: float) -> float:
    num = 4.0 * (k - 1) ** 2 * q1_form
    den = 4.0 * (k - 2) * (k - 1) * q1_form + 2.0 * (k - 1) * q2_form
    return num / den


def estimate_re(spec: SimSpec, k: int, a: Sequence[float], M: int = 100_000,
                censor_bound: Optional[float] = None) -> ReEstimate:
    """Monte-Carlo estimate of the asymptotic efficiency of the k-batch
    streaming estimator relative to the full-data batch minimizer, for the
    contrast a'beta.

    Decomposition: Q1 is the covariance of the conditional pair-kernel mean
    (estimated with a fresh inner sample of ~sqrt(M) per outer draw, with the
    inner-noise inflation subtracted), Q2 the covariance of the raw pair
    kernel, and the population-score Jacobian comes from central finite
    differences with common random numbers. The relative efficiency is a
    ratio of quadratic forms in w = H^{-1} a, so the pairwise-vs-batch
    normalization of H cancels.
    """
    if M < 100_000:
        raise ConfigError("M must be at least 1e5 for a stable estimate")
    if k < 3:
        raise ConfigError("relative efficiency needs k >= 3")
    a = np.asarray(a, dtype=float)
    if a.shape != (spec.p,):
        raise ConfigError("contrast dimension does not match p")
    if censor_bound is None:
        censor_bound = calibrate_censoring(spec)
    # the stream is keyed by seed only, so estimates at different k share
    # draws and are exactly paired
    rng = np.random.default_rng([spec.seed, 0x2E])
    p = spec.p

    # Q2: covariance of the raw pair kernel over M independent pairs.
    e1, d1, X1 = _sample_population(spec, rng, M, censor_bound)
    e2, d2, X2 = _sample_population(spec, rng, M, censor_bound)
    q_pairs = _pair_kernel(e1, d1, X1, e2, d2, X2)  # (M, p)

    # Q1: covariance of the conditional mean, debiased for inner-sample noise.
    m_in = max(64, int(round(math.sqrt(M))))
    n_out = M
    chunk = max(1, 400_000 // m_in)
    q1_means = np.empty((n_out, p))
    inner_var_sum = np.zeros((p, p))
    for start in range(0, n_out, chunk):
        stop = min(start + chunk, n_out)
        m = stop - start
        eo, do, Xo = _sample_population(spec, rng, m, censor_bound)
        ei, di, Xi = _sample_population(spec, rng, m * m_in, censor_bound)
        ei = ei.reshape(m, m_in)
        di = di.reshape(m, m_in)
        Xi = Xi.reshape(m, m_in, p)
        q = _pair_kernel(eo[:, None], do[:, None], Xo[:, None, :], ei, di, Xi)  # (m, m_in, p)
        q1_means[start:stop] = q.mean(axis=1)
        centered = q - q.mean(axis=1, keepdims=True)
        inner_var_sum += np.einsum("mia,mib->ab", centered, centered) / (m_in - 1)
    inner_var = inner_var_sum / n_out
    centered = q1_means - q1_means.mean(axis=0)
    Q1 = centered.T @ centered / (n_out - 1) - inner_var / m_in
    centered2 = q_pairs - q_pairs.mean(axis=0)
    Q2 = centered2.T @ centered2 / (M - 1)

    # Jacobian of the population pair score via central differences with CRN.
    M_h = max(M, 1_000_000)
    h = 0.01
    eh1, dh1, Xh1 = _sample_population(spec, rng, M_h, censor_bound)
    eh2, dh2, Xh2 = _sample_population(spec, rng, M_h, censor_bound)

    def pair_score_at(beta_shift):
        # residuals under beta0 + shift: e(beta) = e(beta0) - shift'X
        f1 = eh1 - Xh1 @ beta_shift
        f2 = eh2 - Xh2 @ beta_shift
        term = (dh1 * (f1 <= f2))[:, None] * (Xh1 - Xh2)
        return term.mean(axis=0)

    H = np.empty((p, p))
    for j in range(p):
        shift = np.zeros(p)
        shift[j] = h
        H[:, j] = (pair_score_at(shift) - pair_score_at(-shift)) / (2 * h)
    H = (H + H.T) / 2
    eigvals = np.linalg.eigvalsh(H)
    if eigvals.min() <= 0:
        raise DataError(
            "estimated score Jacobian is not positive definite; increase M"
        )

    w = np.linalg.solve(H, a)
    q1_form = float(w @ Q1 @ w)
    q2_form = float(w @ Q2 @ w)
    value = _re_from_forms(k, q1_form, q2_form)

    # Grouped jackknife over the Q1 outer draws and Q2 pairs (w held fixed).
    G = 20
    groups1 = np.array_split(np.arange(n_out), G)
    groups2 = np.array_split(np.arange(M), G)
    jack = np.empty(G)
    for g in range(G):
        keep1 = np.setdiff1d(np.arange(n_out), groups1[g], assume_unique=True)
        keep2 = np.setdiff1d(np.arange(M), groups2[g], assume_unique=True)
        c1 = q1_means[keep1] - q1_means[keep1].mean(axis=0)
        Q1g = c1.T @ c1 / (len(keep1) - 1) - inner_var / m_in
        c2 = q_pairs[keep2] - q_pairs[keep2].mean(axis=0)
        Q2g = c2.T @ c2 / (len(keep2) - 1)
        jack[g] = _re_from_forms(k, float(w @ Q1g @ w), float(w @ Q2g @ w))
    mc_se = float(np.sqrt((G - 1) / G * np.sum((jack - jack.mean()) ** 2)))

    return ReEstimate(
        k=k,
        direction=a,
        value=value,
        mc_se=mc_se,
        reciprocal=1.0 / value,
        q1=Q1,
        q2=Q2,
        hessian=H,
    )


# ---------------------------------------------------------------------------
# Synthetic registry-style demo dataset
# ---------------------------------------------------------------------------

SEER_SCHEMA = (
    ["age_below35", "age_36_45", "age_46_55", "age_56_65", "age_66_75"]
    + ["race_white"]
    + ["grade_well", "grade_moderate", "grade_poor"]
    + ["stage_insitu", "stage_localized", "stage_regional"]
    + ["year_1997_2003", "year_2004_2009"]
    + ["log_tumor_size"]
)

_SEER_COEFS = np.array([
    0.34, 0.43, 0.41, 0.39, 0.36,   # age bands vs oldest
    0.11,                            # race flag
    0.16, 0.15, 0.13,                # grade vs undifferentiated
    1.00, 0.96, 0.94,                # stage vs distant
    1.23, 0.85,                      # diagnosis-year bands vs latest
    -0.01,                           # log tumor size
])


def make_synthetic_seer(n: int, seed: int = 0):
    """Registry-shaped demo rows: (raw_time, event, covariates) with roughly
    10% censoring. Purely synthetic; exercises ingestion and the pipeline."""
    rng = np.random.default_rng([seed, 0x5EE2])
    age = rng.choice(6, size=n, p=[0.05, 0.15, 0.25, 0.25, 0.20, 0.10])
    race = (rng.random(n) < 0.85).astype(float)
    grade = rng.choice(4, size=n, p=[0.25, 0.40, 0.30, 0.05])
    stage = rng.choice(4, size=n, p=[0.20, 0.50, 0.25, 0.05])
    year = rng.choice(3, size=n, p=[0.35, 0.35, 0.30])
    log_size = np.log(rng.uniform(1.0, 19.9, n))

    X = np.zeros((n, len(SEER_SCHEMA)))
    for lvl in range(5):
        X[:, lvl] = age == lvl
    X[:, 5] = race
    for lvl in range(3):
        X[:, 6 + lvl] = grade == lvl
        X[:, 9 + lvl] = stage == lvl
    for lvl in range(2):
        X[:, 12 + lvl] = year == lvl
    X[:, 14] = log_size

    eps = 0.8 * rng.standard_normal(n)
    T = np.exp(2.0 + X @ _SEER_COEFS + eps)

    # calibrate the uniform censoring bound on this sample for ~10% censoring
    lo, hi = 1e-6, float(T.max()) * 4
    for _ in range(200):
        mid = (lo + hi) / 2
        if np.minimum(T / mid, 1.0).mean() > 0.10:
            lo = mid
        else:
            hi = mid
    C = rng.uniform(0.0, (lo + hi) / 2, n)
    events = T <= C
    times = np.minimum(T, C)
    return times, events, X
