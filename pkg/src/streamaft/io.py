"""Streaming ingestion, checkpoint persistence, and report emission.

Input records are CSV lines ``time,delta,x1,...,xp`` with time > 0 and
delta in {0,1}; times are logged once at parse and everything downstream is
log-scale. Checkpoints are versioned, checksummed binary envelopes holding
the full ensemble state at full precision, so a resumed run is bit-identical
to an uninterrupted one.
"""

from __future__ import annotations

import hashlib
import io as _io
import json
import math
import pickle
from dataclasses import asdict, dataclass, field
from typing import Iterable, Iterator, Optional

import numpy as np

from .bootstrap import BootstrapEnsemble, confidence_intervals, covariance
from .errors import CheckpointError, ConfigError, DataError, RecordError
from .gehan import MiniBatch, Observation
from .sgd import LearningRateSchedule

CHECKPOINT_MAGIC = b"SAFTCKPT"
CHECKPOINT_VERSION = 1


@dataclass
class RunConfig:
    """Validated configuration for one streaming fit."""

    k: int
    B: int = 200
    ci_level: float = 0.95
    ci_method: str = "normal"
    schedule: LearningRateSchedule = field(default_factory=LearningRateSchedule)
    seed: int = 0
    input: str = "-"
    checkpoint_path: Optional[str] = None
    output_format: str = "table"

    def __post_init__(self):
        if self.k < 2:
            raise ConfigError("batch size k must be at least 2")
        if self.B < 0:
            raise ConfigError("replicate count B must be nonnegative")
        if not (0 < self.ci_level < 1):
            raise ConfigError("confidence level must lie in (0, 1)")
        if self.ci_method not in ("normal", "percentile"):
            raise ConfigError(f"unknown CI method {self.ci_method!r}")
        if self.output_format not in ("json", "csv", "table"):
            raise ConfigError(f"unknown output format {self.output_format!r}")


def parse_record(line: str, p: int, line_number: Optional[int] = None) -> Observation:
    """One CSV record -> Observation, with the time logged here and only here."""
    parts = line.strip().split(",")
    if len(parts) != p + 2:
        raise RecordError(f"expected {p + 2} fields, got {len(parts)}", line_number)
    try:
        time_value = float(parts[0])
    except ValueError:
        raise RecordError(f"unparseable time {parts[0]!r}", line_number)
    if not (time_value > 0) or math.isinf(time_value):
        raise RecordError(f"time must be finite and positive, got {parts[0]!r}", line_number)
    if parts[1] not in ("0", "1"):
        raise RecordError(f"event indicator must be 0 or 1, got {parts[1]!r}", line_number)
    try:
        covariates = np.array([float(v) for v in parts[2:]], dtype=float)
    except ValueError:
        raise RecordError("unparseable covariate value", line_number)
    if not np.all(np.isfinite(covariates)):
        raise RecordError("covariates must be finite", line_number)
    return Observation(math.log(time_value), parts[1] == "1", covariates)


class BatchReader:
    """Single-pass batching of a record stream; never buffers more than one
    batch of raw records. Tracks skipped bad records and the dropped tail."""

    def __init__(self, lines: Iterable[str], k: int, p: int,
                 skip_bad: bool = False, start_index: int = 0, header: bool = False):
        if k < 2:
            raise ConfigError("batch size k must be at least 2")
        self.k = k
        self.p = p
        self.skip_bad = skip_bad
        self.header = header
        self.next_index = start_index + 1
        self.records_read = 0
        self.records_skipped = 0
        self.records_dropped = 0
        self._lines = lines

    def batches(self) -> Iterator[MiniBatch]:
        buffer = []
        for line_number, line in enumerate(self._lines, start=1):
            if line_number == 1 and self.header:
                continue
            if not line.strip():
                continue
            try:
                obs = parse_record(line, self.p, line_number)
            except RecordError:
                if self.skip_bad:
                    self.records_skipped += 1
                    continue
                raise
            self.records_read += 1
            buffer.append(obs)
            if len(buffer) == self.k:
                batch = MiniBatch.from_observations(self.next_index, buffer)
                self.next_index += 1
                buffer = []
                yield batch
        self.records_dropped = len(buffer)


def stream_batches(lines: Iterable[str], k: int, p: int, **kwargs) -> Iterator[MiniBatch]:
    """Convenience wrapper when the skip/drop counters are not needed."""
    return BatchReader(lines, k, p, **kwargs).batches()


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def _config_fingerprint(config: RunConfig) -> dict:
    d = asdict(config)
    # paths and output knobs may differ between the saving and resuming run
    for transient in ("input", "checkpoint_path", "output_format"):
        d.pop(transient, None)
    return d


def save_checkpoint(ensemble: BootstrapEnsemble, config: RunConfig, path: str,
                    records_skipped: int = 0) -> None:
    payload = pickle.dumps({
        "version": CHECKPOINT_VERSION,
        "config": asdict(config),
        "ensemble": ensemble,
        "batches_consumed": ensemble.batch_count,
        "records_skipped": records_skipped,
    }, protocol=pickle.HIGHEST_PROTOCOL)
    digest = hashlib.sha256(payload).digest()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(CHECKPOINT_VERSION.to_bytes(4, "little"))
        fh.write(digest)
        fh.write(payload)


@dataclass
class Checkpoint:
    version: int
    config: RunConfig
    ensemble: BootstrapEnsemble
    batches_consumed: int
    records_skipped: int = 0


def load_checkpoint(path: str) -> Checkpoint:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint: {exc}")
    if len(blob) < len(CHECKPOINT_MAGIC) + 36 or not blob.startswith(CHECKPOINT_MAGIC):
        raise CheckpointError("not a checkpoint file")
    offset = len(CHECKPOINT_MAGIC)
    version = int.from_bytes(blob[offset:offset + 4], "little")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    digest = blob[offset + 4:offset + 36]
    payload = blob[offset + 36:]
    if hashlib.sha256(payload).digest() != digest:
        raise CheckpointError("checkpoint checksum mismatch (file corrupted)")
    data = pickle.loads(payload)
    cfg = data["config"]
    cfg["schedule"] = LearningRateSchedule(**cfg["schedule"])
    config = RunConfig(**cfg)
    return Checkpoint(
        version=version,
        config=config,
        ensemble=data["ensemble"],
        batches_consumed=data["batches_consumed"],
        records_skipped=data.get("records_skipped", 0),
    )


def check_resume_compatible(checkpoint: Checkpoint, config: RunConfig) -> None:
    saved = _config_fingerprint(checkpoint.config)
    current = _config_fingerprint(config)
    if saved != current:
        diffs = {key for key in saved if saved[key] != current.get(key)}
        raise CheckpointError(
            f"checkpoint configuration differs from the current run: {sorted(diffs)}"
        )


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

def build_report(ensemble: BootstrapEnsemble, config: RunConfig,
                 records_dropped: int = 0, records_skipped: int = 0,
                 coefficient_names: Optional[list] = None) -> dict:
    if ensemble.batch_count < 1:
        raise DataError("no batches consumed; nothing to report")
    estimate = ensemble.main.beta_bar
    p = ensemble.main.dimension
    names = coefficient_names or [f"x{j + 1}" for j in range(p)]
    report = {
        "coefficients": names,
        "estimate": estimate.tolist(),
        "batches_consumed": ensemble.batch_count,
        "records_used": ensemble.batch_count * (ensemble.main.batch_size or config.k),
        "records_dropped": records_dropped,
        "records_skipped": records_skipped,
        "replicates": ensemble.B,
        "ci_level": config.ci_level,
        "ci_method": config.ci_method,
    }
    if ensemble.B >= 2:
        report["bootstrap_se"] = np.sqrt(np.diag(covariance(ensemble))).tolist()
        ci = confidence_intervals(ensemble, config.ci_level, config.ci_method)
        report["ci_lower"] = ci.lower.tolist()
        report["ci_upper"] = ci.upper.tolist()
    return report


def format_report(report: dict, output_format: str) -> str:
    if output_format == "json":
        return json.dumps(report, indent=2)
    names = report["coefficients"]
    est = report["estimate"]
    lower = report.get("ci_lower")
    upper = report.get("ci_upper")
    if output_format == "csv":
        out = _io.StringIO()
        out.write("name,estimate,lower,upper\n")
        for j, name in enumerate(names):
            lo = "" if lower is None else f"{lower[j]:.10g}"
            hi = "" if upper is None else f"{upper[j]:.10g}"
            out.write(f"{name},{est[j]:.10g},{lo},{hi}\n")
        return out.getvalue().rstrip("\n")
    # aligned table, estimate with the interval in parentheses
    width = max(len(n) for n in names)
    lines = [f"{'coefficient':<{width}}  estimate ({int(report['ci_level'] * 100)}% CI)"]
    for j, name in enumerate(names):
        if lower is None:
            lines.append(f"{name:<{width}}  {est[j]: .6f}")
        else:
            lines.append(
                f"{name:<{width}}  {est[j]: .6f} ({lower[j]: .6f}, {upper[j]: .6f})"
            )
    lines.append(
        f"batches={report['batches_consumed']} records_used={report['records_used']} "
        f"dropped={report['records_dropped']} skipped={report['records_skipped']}"
    )
    return "\n".join(lines)
