"""Pydantic request/response models for the HTTP service."""

from __future__ import annotations

from typing import List, Optional

from pydantic import BaseModel, Field


class SessionCreate(BaseModel):
    dimension: int = Field(gt=0, description="number of covariates p")
    k: int = Field(ge=2, description="mini-batch size")
    replicates: int = Field(default=200, ge=0, description="bootstrap replicates B")
    seed: int = 0
    gamma1: float = Field(default=1.0, gt=0)
    alpha: float = Field(default=0.7, gt=0.5, lt=1.0)
    ci_level: float = Field(default=0.95, gt=0, lt=1)
    ci_method: str = Field(default="normal", pattern="^(normal|percentile)$")


class SessionInfo(BaseModel):
    session_id: str
    dimension: int
    k: int
    replicates: int
    batches_consumed: int
    records_buffered: int
    records_received: int


class ObservationIn(BaseModel):
    time: float = Field(gt=0, description="raw (unlogged) observed time")
    event: bool
    covariates: List[float]


class RecordsIn(BaseModel):
    rows: List[ObservationIn]


class IngestResult(BaseModel):
    accepted: int
    batches_consumed: int
    records_buffered: int


class ReportOut(BaseModel):
    coefficients: List[str]
    estimate: List[float]
    bootstrap_se: Optional[List[float]] = None
    ci_lower: Optional[List[float]] = None
    ci_upper: Optional[List[float]] = None
    ci_level: float
    ci_method: str
    batches_consumed: int
    records_used: int
    records_dropped: int
    records_skipped: int
    replicates: int


class OracleIn(BaseModel):
    rows: List[ObservationIn]
    init: Optional[List[float]] = None
    max_iter: int = Field(default=300, ge=1)
    tol: float = Field(default=1e-6, gt=0)


class OracleOut(BaseModel):
    beta: List[float]
    objective: float
    score_norm: float
    iterations: int
    converged: bool


class SyntheticSeerIn(BaseModel):
    n: int = Field(gt=0, le=1_000_000)
    seed: int = 0


class SyntheticSeerOut(BaseModel):
    header: List[str]
    rows: List[List[float]]
