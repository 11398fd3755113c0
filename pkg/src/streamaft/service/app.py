"""FastAPI service wrapping the streaming estimator.

Sessions are held in process memory: a client creates a session with its
fit configuration, streams observations in arrival order, and asks for the
current report at any point. Full mini-batches are consumed as soon as they
complete; a trailing partial batch stays buffered.
"""

from __future__ import annotations

import math
import threading
import uuid
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np
from fastapi import FastAPI, HTTPException

from .. import __version__
from ..bootstrap import BootstrapEnsemble, ensemble_step, init_ensemble
from ..errors import DataError, StreamAFTError
from ..gehan import Dataset, MiniBatch, Observation
from ..io import RunConfig, build_report
from ..oracle import solve_batch
from ..sgd import LearningRateSchedule
from ..simlab import SEER_SCHEMA, make_synthetic_seer
from .schemas import (
    IngestResult,
    ObservationIn,
    OracleIn,
    OracleOut,
    RecordsIn,
    ReportOut,
    SessionCreate,
    SessionInfo,
    SyntheticSeerIn,
    SyntheticSeerOut,
)


@dataclass
class Session:
    config: SessionCreate
    ensemble: BootstrapEnsemble
    run_config: RunConfig
    buffer: List[Observation] = field(default_factory=list)
    records_received: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock)


def _to_observation(row: ObservationIn, p: int) -> Observation:
    if len(row.covariates) != p:
        raise HTTPException(422, f"expected {p} covariates, got {len(row.covariates)}")
    if not all(math.isfinite(v) for v in row.covariates) or not math.isfinite(row.time):
        raise HTTPException(422, "time and covariates must be finite")
    return Observation(math.log(row.time), row.event, np.array(row.covariates))


def create_app() -> FastAPI:
    app = FastAPI(title="streamaft", version=__version__)
    sessions: Dict[str, Session] = {}

    def get_session(session_id: str) -> Session:
        session = sessions.get(session_id)
        if session is None:
            raise HTTPException(404, "unknown session")
        return session

    def session_info(session_id: str, session: Session) -> SessionInfo:
        return SessionInfo(
            session_id=session_id,
            dimension=session.config.dimension,
            k=session.config.k,
            replicates=session.config.replicates,
            batches_consumed=session.ensemble.batch_count,
            records_buffered=len(session.buffer),
            records_received=session.records_received,
        )

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "version": __version__}

    @app.post("/sessions", response_model=SessionInfo, status_code=201)
    def create_session(config: SessionCreate):
        schedule = LearningRateSchedule(gamma1=config.gamma1, alpha=config.alpha)
        ensemble = init_ensemble(config.dimension, schedule, config.replicates, config.seed)
        run_config = RunConfig(
            k=config.k, B=config.replicates, ci_level=config.ci_level,
            ci_method=config.ci_method, schedule=schedule, seed=config.seed,
        )
        session_id = uuid.uuid4().hex
        sessions[session_id] = Session(config=config, ensemble=ensemble, run_config=run_config)
        return session_info(session_id, sessions[session_id])

    @app.get("/sessions/{session_id}", response_model=SessionInfo)
    def get_status(session_id: str):
        return session_info(session_id, get_session(session_id))

    @app.post("/sessions/{session_id}/records", response_model=IngestResult)
    def ingest(session_id: str, records: RecordsIn):
        session = get_session(session_id)
        k, p = session.config.k, session.config.dimension
        with session.lock:
            for row in records.rows:
                session.buffer.append(_to_observation(row, p))
                session.records_received += 1
                if len(session.buffer) == k:
                    batch = MiniBatch.from_observations(
                        session.ensemble.batch_count + 1, session.buffer
                    )
                    session.ensemble = ensemble_step(session.ensemble, batch)
                    session.buffer = []
            return IngestResult(
                accepted=len(records.rows),
                batches_consumed=session.ensemble.batch_count,
                records_buffered=len(session.buffer),
            )

    @app.get("/sessions/{session_id}/report", response_model=ReportOut)
    def report(session_id: str):
        session = get_session(session_id)
        with session.lock:
            try:
                payload = build_report(
                    session.ensemble,
                    session.run_config,
                    records_dropped=len(session.buffer),
                )
            except DataError as exc:
                raise HTTPException(409, str(exc))
        return ReportOut(**payload)

    @app.delete("/sessions/{session_id}", status_code=204)
    def delete_session(session_id: str):
        get_session(session_id)
        del sessions[session_id]

    @app.post("/oracle", response_model=OracleOut)
    def oracle(request: OracleIn):
        if len(request.rows) > 10_000:
            raise HTTPException(413, "oracle is a desk-scale solver; at most 10000 rows")
        if not request.rows:
            raise HTTPException(422, "empty dataset")
        p = len(request.rows[0].covariates)
        observations = [_to_observation(row, p) for row in request.rows]
        try:
            result = solve_batch(
                Dataset.from_observations(observations),
                init=request.init,
                max_iter=request.max_iter,
                tol=request.tol,
            )
        except StreamAFTError as exc:
            raise HTTPException(422, str(exc))
        return OracleOut(
            beta=result.beta.tolist(),
            objective=result.objective,
            score_norm=result.score_norm,
            iterations=result.iterations,
            converged=result.converged,
        )

    @app.post("/synthetic-seer", response_model=SyntheticSeerOut)
    def synthetic_seer(request: SyntheticSeerIn):
        times, events, X = make_synthetic_seer(request.n, request.seed)
        rows = np.column_stack([times, events.astype(float), X])
        return SyntheticSeerOut(header=["time", "delta"] + list(SEER_SCHEMA), rows=rows.tolist())

    return app


app = create_app()
