"""Command-line surface.

``fit`` streams records from a file or stdin through the estimator and
bootstrap in one pass (optionally against a running service with --server);
``oracle`` runs the desk-scale batch solver; ``simulate``/``re-eval`` drive
the simulation lab; ``gen-seer`` emits the synthetic registry demo dataset;
``inspect`` dumps a checkpoint; ``serve`` starts the HTTP service.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 checkpoint error.
"""

from __future__ import annotations

import itertools
import json
import sys

import click
import numpy as np

from .bootstrap import ensemble_step, init_ensemble
from .errors import (
    CheckpointError,
    ConfigError,
    DataError,
    RecordError,
    StreamAFTError,
)
from .gehan import Dataset
from .io import (
    BatchReader,
    RunConfig,
    build_report,
    check_resume_compatible,
    format_report,
    load_checkpoint,
    parse_record,
    save_checkpoint,
)
from .oracle import solve_batch
from .sgd import LearningRateSchedule
from .simlab import (
    SEER_SCHEMA,
    SimSpec,
    estimate_re,
    make_synthetic_seer,
    run_table_experiment,
)


@click.group()
def cli():
    """Streaming estimation and inference for censored AFT regression."""


def _open_input(path):
    if path == "-":
        return sys.stdin
    try:
        return open(path, "r")
    except OSError as exc:
        raise DataError(f"cannot open input: {exc}")


def _peek_dimension(lines, skip_bad=False):
    """Infer p from the first nonblank record; returns (p, rechained lines).

    With ``skip_bad`` the scan keeps going past records that do not parse, so
    a leading malformed line cannot poison the inferred dimension."""
    consumed = []
    for line in lines:
        consumed.append(line)
        if not line.strip():
            continue
        p = len(line.strip().split(",")) - 2
        if p >= 1:
            if not skip_bad:
                return p, itertools.chain(consumed, lines)
            try:
                parse_record(line, p)
            except RecordError:
                continue
            return p, itertools.chain(consumed, lines)
        if not skip_bad:
            raise DataError("records need at least one covariate column")
    if skip_bad:
        raise DataError("no parseable records in the input stream")
    raise DataError("input stream is empty")


@cli.command()
@click.argument("input", default="-")
@click.option("--k", type=int, default=None, help="mini-batch size (required for new runs)")
@click.option("--replicates", "-B", "replicates", type=int, default=200,
              help="bootstrap replicates B")
@click.option("--level", type=float, default=0.95, help="confidence level")
@click.option("--ci-method", type=click.Choice(["normal", "percentile"]), default="normal")
@click.option("--gamma1", type=float, default=1.0, help="initial learning rate")
@click.option("--alpha", type=float, default=0.7, help="learning-rate decay exponent")
@click.option("--seed", type=int, default=0)
@click.option("--checkpoint", "checkpoint_path", type=click.Path(), default=None,
              help="write the terminal state here")
@click.option("--resume", "resume_path", type=click.Path(exists=False), default=None,
              help="continue from a saved checkpoint")
@click.option("--format", "output_format", type=click.Choice(["json", "csv", "table"]),
              default="table")
@click.option("--skip-bad", is_flag=True, help="skip malformed records instead of aborting")
@click.option("--header", is_flag=True, help="input starts with a header line")
@click.option("--server", default=None, help="run against a streamaft service at this URL")
def fit(input, k, replicates, level, ci_method, gamma1, alpha, seed,
        checkpoint_path, resume_path, output_format, skip_bad, header, server):
    """Stream records (CSV: time,delta,x1,...,xp) through the estimator."""
    if server is not None:
        if resume_path or checkpoint_path:
            raise ConfigError("checkpointing is not available in --server mode")
        if k is None:
            raise ConfigError("--k is required")
        _fit_via_server(server, input, k, replicates, level, ci_method,
                        gamma1, alpha, seed, output_format, skip_bad, header)
        return

    records_skipped = 0
    if resume_path is not None:
        ck = load_checkpoint(resume_path)
        config = ck.config
        if k is not None and k != config.k:
            raise CheckpointError(
                f"checkpoint was written with k={config.k}, got --k {k}"
            )
        check_resume_compatible(ck, config)
        ensemble = ck.ensemble
        records_skipped = ck.records_skipped
        config.output_format = output_format
        config.checkpoint_path = checkpoint_path
    else:
        if k is None:
            raise ConfigError("--k is required")
        config = RunConfig(
            k=k, B=replicates, ci_level=level, ci_method=ci_method,
            schedule=LearningRateSchedule(gamma1=gamma1, alpha=alpha),
            seed=seed, input=input, checkpoint_path=checkpoint_path,
            output_format=output_format,
        )
        ensemble = None

    lines = _open_input(input)
    if header:
        next(iter(lines), None)
    p, lines = _peek_dimension(lines, skip_bad=skip_bad)
    if ensemble is None:
        ensemble = init_ensemble(p, config.schedule, config.B, config.seed)
    elif ensemble.main.dimension != p:
        raise DataError(
            f"input has {p} covariates but checkpoint expects {ensemble.main.dimension}"
        )

    reader = BatchReader(lines, config.k, p, skip_bad=skip_bad,
                         start_index=ensemble.batch_count)
    for batch in reader.batches():
        ensemble = ensemble_step(ensemble, batch)
    records_skipped += reader.records_skipped
    if reader.records_dropped:
        click.echo(
            f"warning: dropped {reader.records_dropped} trailing record(s) "
            f"short of a full batch", err=True,
        )

    if checkpoint_path is not None:
        save_checkpoint(ensemble, config, checkpoint_path, records_skipped)
    report = build_report(ensemble, config, reader.records_dropped, records_skipped)
    click.echo(format_report(report, output_format))


def _fit_via_server(server, input, k, replicates, level, ci_method,
                    gamma1, alpha, seed, output_format, skip_bad, header):
    import httpx

    lines = _open_input(input)
    if header:
        next(iter(lines), None)
    p, lines = _peek_dimension(lines, skip_bad=skip_bad)

    with httpx.Client(base_url=server.rstrip("/"), timeout=300.0) as client:
        created = client.post("/sessions", json={
            "dimension": p, "k": k, "replicates": replicates, "seed": seed,
            "gamma1": gamma1, "alpha": alpha, "ci_level": level, "ci_method": ci_method,
        })
        created.raise_for_status()
        session_id = created.json()["session_id"]

        chunk, skipped = [], 0
        def flush():
            if not chunk:
                return
            resp = client.post(f"/sessions/{session_id}/records", json={"rows": chunk})
            resp.raise_for_status()
            chunk.clear()

        for line in lines:
            parts = line.strip().split(",")
            if not line.strip():
                continue
            try:
                row = {"time": float(parts[0]), "event": parts[1] == "1",
                       "covariates": [float(v) for v in parts[2:]]}
                if len(row["covariates"]) != p or parts[1] not in ("0", "1") or row["time"] <= 0:
                    raise ValueError
            except (ValueError, IndexError):
                if skip_bad:
                    skipped += 1
                    continue
                raise DataError(f"malformed record: {line.strip()!r}")
            chunk.append(row)
            if len(chunk) >= 1000:
                flush()
        flush()

        resp = client.get(f"/sessions/{session_id}/report")
        if resp.status_code == 409:
            raise DataError(resp.json()["detail"])
        resp.raise_for_status()
        report = resp.json()
        report["records_skipped"] += skipped
        client.delete(f"/sessions/{session_id}")
    click.echo(format_report(report, output_format))


@cli.command()
@click.argument("input", default="-")
@click.option("--max-iter", type=int, default=300)
@click.option("--tol", type=float, default=1e-6)
@click.option("--init", default=None, help="comma-separated warm start")
@click.option("--header", is_flag=True)
@click.option("--format", "output_format", type=click.Choice(["json", "table"]), default="table")
def oracle(input, max_iter, tol, init, header, output_format):
    """Exact batch minimization of the full-data objective (desk scale)."""
    lines = _open_input(input)
    if header:
        next(iter(lines), None)
    p, lines = _peek_dimension(lines)
    observations = []
    for line_number, line in enumerate(lines, start=1):
        if line.strip():
            observations.append(parse_record(line, p, line_number))
    dataset = Dataset.from_observations(observations)
    init_beta = None if init is None else [float(v) for v in init.split(",")]
    result = solve_batch(dataset, init=init_beta, max_iter=max_iter, tol=tol)
    payload = {
        "beta": result.beta.tolist(),
        "objective": result.objective,
        "score_norm": result.score_norm,
        "iterations": result.iterations,
        "converged": result.converged,
    }
    if output_format == "json":
        click.echo(json.dumps(payload, indent=2))
    else:
        for j, b in enumerate(payload["beta"]):
            click.echo(f"x{j + 1}  {b: .6f}")
        click.echo(
            f"objective={payload['objective']:.8g} score_norm={payload['score_norm']:.3g} "
            f"iterations={payload['iterations']} converged={payload['converged']}"
        )


def _load_config_file(path):
    values = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"bad config line: {raw.strip()!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            values[key] = value
    return values


@cli.command()
@click.option("--config", "config_file", type=click.Path(exists=True), default=None,
              help="key=value experiment file; flags override")
@click.option("--error-law", type=click.Choice(["normal", "logistic", "extreme_value"]),
              default="normal")
@click.option("--censoring", type=float, default=0.2)
@click.option("--n", type=int, default=50000)
@click.option("--k", type=int, default=50)
@click.option("--reps", type=int, default=200)
@click.option("--replicates", "-B", "replicates", type=int, default=200)
@click.option("--seed", type=int, default=2024)
@click.option("--gamma1", type=float, default=None, help="default: 1/k")
@click.option("--alpha", type=float, default=0.7)
@click.option("--beta0", default="1,1")
@click.option("--format", "output_format", type=click.Choice(["json", "csv", "table"]),
              default="table")
def simulate(config_file, error_law, censoring, n, k, reps, replicates, seed,
             gamma1, alpha, beta0, output_format):
    """Replicated bias / empirical SD / coverage experiment."""
    values = dict(error_law=error_law, censor_target=censoring, N=n, k=k,
                  reps=reps, B=replicates, seed=seed,
                  beta0=[float(v) for v in beta0.split(",")])
    if config_file:
        raw = _load_config_file(config_file)
        casts = {"N": int, "k": int, "reps": int, "B": int, "seed": int,
                 "censor_target": float, "error_law": str,
                 "beta0": lambda s: [float(v) for v in s.split(",")]}
        for key, value in raw.items():
            if key == "gamma1":
                gamma1 = float(value)
            elif key == "alpha":
                alpha = float(value)
            elif key in casts:
                values[key] = casts[key](value)
            else:
                raise ConfigError(f"unknown config key {key!r}")
    values["p"] = len(values["beta0"])
    schedule = None
    if gamma1 is not None:
        schedule = LearningRateSchedule(gamma1=gamma1, alpha=alpha)
    spec = SimSpec(schedule=schedule, **values)
    summary = run_table_experiment(spec)

    rows = []
    for j in range(spec.p):
        rows.append({
            "coefficient": f"beta{j + 1}",
            "bias": summary.bias[j],
            "emp_sd": summary.emp_sd[j],
            "coverage": None if summary.coverage is None else summary.coverage[j],
        })
    if output_format == "json":
        click.echo(json.dumps({"rows": rows, "mean_runtime_s": summary.mean_runtime_s}, indent=2))
    elif output_format == "csv":
        click.echo("coefficient,bias,emp_sd,coverage")
        for row in rows:
            cov = "" if row["coverage"] is None else f"{row['coverage']:.3f}"
            click.echo(f"{row['coefficient']},{row['bias']:.6g},{row['emp_sd']:.6g},{cov}")
    else:
        click.echo(f"{'coef':<6} {'bias':>10} {'EmSd':>10} {'Cov_P':>7}")
        for row in rows:
            cov = "  n/a" if row["coverage"] is None else f"{row['coverage']:.3f}"
            click.echo(f"{row['coefficient']:<6} {row['bias']:>10.5f} {row['emp_sd']:>10.5f} {cov:>7}")
        click.echo(f"mean runtime per replication: {summary.mean_runtime_s:.3f}s")


@cli.command("re-eval")
@click.option("--k", "ks", type=int, multiple=True, default=(10, 50, 200))
@click.option("--direction", default="1,0", help="contrast vector a")
@click.option("--m", "mc_draws", type=int, default=100_000)
@click.option("--error-law", type=click.Choice(["normal", "logistic", "extreme_value"]),
              default="normal")
@click.option("--censoring", type=float, default=0.2)
@click.option("--beta0", default="1,1")
@click.option("--seed", type=int, default=2024)
@click.option("--format", "output_format", type=click.Choice(["json", "table"]), default="table")
def re_eval(ks, direction, mc_draws, error_law, censoring, beta0, seed, output_format):
    """Monte-Carlo relative efficiency of the k-batch streaming estimator.

    Reports both orientations: the efficiency RE(k) <= 1 and its reciprocal
    (the variance-ratio reading)."""
    beta = [float(v) for v in beta0.split(",")]
    a = np.array([float(v) for v in direction.split(",")])
    spec = SimSpec(p=len(beta), beta0=beta, error_law=error_law,
                   censor_target=censoring, seed=seed)
    results = [estimate_re(spec, k, a, M=mc_draws) for k in ks]
    if output_format == "json":
        click.echo(json.dumps([
            {"k": r.k, "re": r.value, "mc_se": r.mc_se, "variance_ratio": r.reciprocal}
            for r in results
        ], indent=2))
    else:
        click.echo(f"{'k':>5} {'RE(k)':>9} {'mc_se':>8} {'1/RE(k)':>9}")
        for r in results:
            click.echo(f"{r.k:>5} {r.value:>9.5f} {r.mc_se:>8.5f} {r.reciprocal:>9.5f}")


@cli.command("gen-seer")
@click.option("--n", type=int, default=1000)
@click.option("--seed", type=int, default=0)
@click.option("--output", type=click.Path(), default="-")
def gen_seer(n, seed, output):
    """Write the synthetic registry-style demo dataset as CSV."""
    times, events, X = make_synthetic_seer(n, seed)
    out = sys.stdout if output == "-" else open(output, "w")
    try:
        out.write("time,delta," + ",".join(SEER_SCHEMA) + "\n")
        for t, d, x in zip(times, events, X):
            out.write(f"{t:.10g},{int(d)}," + ",".join(f"{v:.10g}" for v in x) + "\n")
    finally:
        if output != "-":
            out.close()


@cli.command()
@click.argument("path", type=click.Path())
def inspect(path):
    """Dump a checkpoint summary as JSON."""
    ck = load_checkpoint(path)
    click.echo(json.dumps({
        "version": ck.version,
        "batches_consumed": ck.batches_consumed,
        "records_skipped": ck.records_skipped,
        "k": ck.config.k,
        "replicates": ck.config.B,
        "seed": ck.config.seed,
        "gamma1": ck.config.schedule.gamma1,
        "alpha": ck.config.schedule.alpha,
        "dimension": ck.ensemble.main.dimension,
        "estimate": ck.ensemble.main.beta_bar.tolist(),
    }, indent=2))


@cli.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8000)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    from .service import app
    uvicorn.run(app, host=host, port=port)


def main():
    try:
        cli(standalone_mode=False)
    except click.ClickException as exc:
        exc.show()
        sys.exit(2)
    except click.Abort:
        sys.exit(130)
    except CheckpointError as exc:
        click.echo(f"checkpoint error: {exc}", err=True)
        sys.exit(4)
    except ConfigError as exc:
        click.echo(f"configuration error: {exc}", err=True)
        sys.exit(2)
    except DataError as exc:
        click.echo(f"data error: {exc}", err=True)
        sys.exit(3)
    except StreamAFTError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    main()
