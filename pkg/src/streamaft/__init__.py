"""Streaming estimation and inference for censored accelerated failure time
models: mini-batch SGD on the Gehan rank objective with Polyak averaging and
a single-pass perturbation bootstrap."""

__version__ = "0.1.0"

from .bootstrap import (
    BootstrapEnsemble,
    IntervalEstimate,
    confidence_intervals,
    covariance,
    draw_weights,
    ensemble_step,
    init_ensemble,
)
from .errors import (
    CheckpointError,
    ConfigError,
    DataError,
    DegenerateProblemError,
    RecordError,
    SequencingError,
    StreamAFTError,
)
from .gehan import (
    Dataset,
    MiniBatch,
    Observation,
    batch_loss,
    batch_score,
    full_loss,
    full_score,
    perturbed_batch_score,
)
from .oracle import OracleResult, solve_batch
from .sgd import (
    EstimatorState,
    LearningRateSchedule,
    finalize,
    init_state,
    learning_rate,
    sgd_step,
)
from .simlab import (
    ExperimentSummary,
    ReEstimate,
    SimSpec,
    calibrate_censoring,
    estimate_re,
    generate_dataset,
    make_synthetic_seer,
    run_table_experiment,
    run_timing_experiment,
)
