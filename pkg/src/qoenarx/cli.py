"""Command-line pipeline: synth, extract, train, predict, gridsearch, evaluate.

Exit codes: 0 success, 2 usage, 3 data validation, 4 numerical failure,
5 I/O. Errors print one machine-parsable line to stderr: ``E<code>: <text>``.
"""

from __future__ import annotations

import functools
import json
import os
import sys
from pathlib import Path

import click
import numpy as np

from .errors import DataValidationError, IoError, QoeNarxError
from .estimator import NarxRegressor
from .harness import (
    GridSpec,
    aggregate_report,
    ensemble_forecasts,
    run_grid,
    write_report_csv,
)
from .io import read_trace_csv, write_forecast_csv, write_trace_csv
from .lm import LmSettings
from .manifest import load_manifest, load_sessions
from .narx import NarxConfig, load_model, save_model, forward_closed_loop, forward_open_loop
from .synth import SynthSpec, synth_generate
from .traces import split_by_content
from .vqa import extract_trace, read_y_frames


def _fail(exc: QoeNarxError) -> None:
    click.echo(f"E{exc.exit_code}: {exc}", err=True)
    sys.exit(exc.exit_code)


def handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except QoeNarxError as exc:
            _fail(exc)
        except OSError as exc:
            click.echo(f"E5: {exc}", err=True)
            sys.exit(5)

    return wrapper


@click.group()
def main() -> None:
    """Continuous-time streaming QoE prediction with NARX networks."""


def _load_aligned(manifest_path: str):
    manifest = load_manifest(manifest_path)
    root = Path(manifest_path).parent
    return manifest, load_sessions(manifest, root)


def _default_delta(sessions) -> float:
    """10% of the pooled subjective score range."""
    pooled = np.concatenate(
        [s.subjective.values for s in sessions if s.subjective is not None]
    )
    span = float(pooled.max() - pooled.min())
    if span <= 0:
        raise DataValidationError("subjective range is zero; pass --delta explicitly")
    return 0.1 * span


# ---------------------------------------------------------------------------


@main.command()
@click.option("--spec", "spec_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="SynthSpec JSON; defaults to the built-in spec.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@handle_errors
def synth(spec_path, out_dir):
    """Generate a synthetic teacher-driven dataset."""
    spec = _read_synth_spec(spec_path) if spec_path else SynthSpec()
    manifest = synth_generate(spec, out_dir)
    click.echo(
        f"wrote {len(manifest.sessions)} sessions "
        f"({spec.n_contents} contents) to {out_dir}"
    )


def _read_synth_spec(path: str) -> SynthSpec:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise IoError(f"synth spec {path} is not valid JSON: {exc}") from exc
    teacher_doc = doc.pop("teacher", None)
    try:
        if teacher_doc is not None:
            doc["teacher"] = NarxConfig(**teacher_doc)
        for key in ("levels",):
            if key in doc:
                doc[key] = tuple(doc[key])
        return SynthSpec(**doc)
    except (TypeError, ValueError) as exc:
        raise DataValidationError(f"invalid synth spec {path}: {exc}") from exc


@main.command()
@click.option("--manifest", "manifest_path",
              type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None,
              help="Trace output directory (default: traces/ next to the manifest).")
@handle_errors
def extract(manifest_path, out_dir):
    """Compute built-in frame metrics for the manifest's raw video entries."""
    manifest = load_manifest(manifest_path)
    root = Path(manifest_path).parent
    out = Path(out_dir) if out_dir else root / "traces"
    out.mkdir(parents=True, exist_ok=True)
    if not manifest.videos:
        raise DataValidationError("manifest lists no raw video entries")
    for video in manifest.videos:
        ref = read_y_frames(root / video.reference, video.width, video.height)
        dist = read_y_frames(root / video.distorted, video.width, video.height)
        if ref.shape != dist.shape:
            raise DataValidationError(
                f"video {video.id!r}: frame counts differ "
                f"({ref.shape[0]} vs {dist.shape[0]})"
            )
        for metric in video.metrics:
            trace = extract_trace(ref, dist, metric, video.fps)
            path = out / f"{video.id}.{metric}.csv"
            write_trace_csv(path, trace)
            click.echo(f"wrote {path}")


@main.command()
@click.option("--manifest", "manifest_path",
              type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--du", type=int, required=True)
@click.option("--dy", type=int, required=True)
@click.option("--hidden", type=int, required=True)
@click.option("--mode", type=click.Choice(["ol", "cl-train"]), default="ol")
@click.option("--seed", type=int, default=0)
@click.option("--test-contents", default=None,
              help="Comma-separated contents to hold out from training.")
@click.option("--model-out", type=click.Path(dir_okay=False), required=True)
@handle_errors
def train(manifest_path, du, dy, hidden, mode, seed, test_contents, model_out):
    """Train a single NARX model on the manifest's sessions."""
    _, sessions = _load_aligned(manifest_path)
    if test_contents:
        sessions, _ = split_by_content(sessions, test_contents.split(","))
    est = NarxRegressor(d_u=du, d_y=dy, hidden=hidden, mode=mode, seed=seed)
    est.fit(sessions)
    save_model(est.model_, model_out)
    r = est.train_report_
    click.echo(
        f"trained on {len(sessions)} sessions: loss={r.final_loss:.6g} "
        f"epochs={r.epochs_run} stop={r.stop_reason} time={r.wall_time:.2f}s"
    )
    click.echo(f"wrote {model_out}")


@main.command()
@click.option("--model", "model_path",
              type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--manifest", "manifest_path",
              type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--session", "session_id", required=True)
@click.option("--mode", type=click.Choice(["ol", "cl"]), default="cl")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
@handle_errors
def predict(model_path, manifest_path, session_id, mode, out_path):
    """Forecast one session and dump t,truth,pred."""
    model = load_model(model_path)
    _, sessions = _load_aligned(manifest_path)
    matches = [s for s in sessions if s.id == session_id]
    if not matches:
        raise DataValidationError(f"manifest has no session {session_id!r}")
    session = matches[0]
    missing = set(model.channel_names) - set(session.channel_names)
    if missing:
        raise DataValidationError(
            f"model channels {model.channel_names} not satisfied by session "
            f"channels {session.channel_names}"
        )
    session.require_subjective()
    if mode == "ol":
        fc = forward_open_loop(model, session)
    else:
        fc = forward_closed_loop(model, session)
    write_forecast_csv(out_path, fc.values.times(), session.subjective.values,
                       fc.values.values)
    click.echo(f"wrote {out_path}")


def _read_grid_file(path: str) -> tuple[GridSpec, list[str] | None]:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise IoError(f"grid file {path} is not valid JSON: {exc}") from exc
    test_contents = doc.pop("test_contents", None)
    try:
        grid = GridSpec(**{k: tuple(v) for k, v in doc.items()})
    except (TypeError, ValueError, QoeNarxError) as exc:
        raise DataValidationError(f"invalid grid file {path}: {exc}") from exc
    return grid, test_contents


@main.command()
@click.option("--manifest", "manifest_path",
              type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--grid", "grid_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="GridSpec JSON; defaults to the standard grid.")
@click.option("--delta", type=float, default=None,
              help="Outage threshold (default: 10% of the training score range).")
@click.option("--test-contents", default=None,
              help="Comma-separated held-out contents (default: from the grid "
                   "file, else the lexicographically last content).")
@click.option("--jobs", type=int, default=None,
              help="Parallel workers (default: available CPUs).")
@click.option("--max-epochs", type=int, default=None,
              help="Override the trainer's epoch cap.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.option("--dump-forecasts", is_flag=True,
              help="Write per-session ensemble forecast CSVs.")
@click.option("--no-timing", is_flag=True,
              help="Blank wall-clock columns so repeated runs are byte-identical.")
@handle_errors
def gridsearch(manifest_path, grid_path, delta, test_contents, jobs, max_epochs,
               out_dir, dump_forecasts, no_timing):
    """Sweep configurations and seeds, ensemble the forecasts, write report.csv."""
    _, sessions = _load_aligned(manifest_path)
    if grid_path:
        grid, grid_test = _read_grid_file(grid_path)
    else:
        grid, grid_test = GridSpec(), None
    if test_contents:
        held_out = test_contents.split(",")
    elif grid_test:
        held_out = list(grid_test)
    else:
        held_out = [max(s.source_content for s in sessions)]
    train_sessions, test_sessions = split_by_content(sessions, held_out)
    if delta is None:
        delta = _default_delta(train_sessions)
    settings = LmSettings() if max_epochs is None else LmSettings(max_epochs=max_epochs)
    if jobs is None:
        jobs = os.cpu_count() or 1

    run = run_grid(train_sessions, test_sessions, grid, settings, delta, jobs=jobs)
    report = aggregate_report(run, test_sessions)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report_path = out / "report.csv"
    write_report_csv(report, report_path, include_timing=not no_timing)
    click.echo(f"wrote {report_path}")

    if dump_forecasts:
        fdir = out / "forecasts"
        fdir.mkdir(exist_ok=True)
        by_id = {s.id: s for s in test_sessions}
        for mode in grid.loop_modes:
            for sid, fc in ensemble_forecasts(run, mode).items():
                path = fdir / f"{mode}.{sid}.avg.csv"
                write_forecast_csv(path, fc.values.times(),
                                   by_id[sid].subjective.values, fc.values.values)
        click.echo(f"wrote forecast dumps to {fdir}")

    n_failed = sum(1 for r in run.results if r.failed)
    for row in report.aggregate_rows():
        click.echo(
            f"{row.mode:9s} {row.kind:5s} median: rmse={_num(row.rmse)} "
            f"plcc={_num(row.plcc)} srocc={_num(row.srocc)} or={_num(row.outage_rate)}%"
        )
    if n_failed:
        click.echo(f"{n_failed} training jobs diverged (flagged in report)")


def _num(v) -> str:
    return "n/a" if v is None else f"{v:.4f}"


@main.command()
@click.option("--pred", "pred_path", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--truth", "truth_path", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--delta", type=float, required=True)
@handle_errors
def evaluate(pred_path, truth_path, delta):
    """Compare a prediction trace against a ground-truth trace."""
    from .metrics import outage_rate, plcc, rmse, srocc
    from .errors import ConstantInput, LengthMismatch

    pred = read_trace_csv(pred_path)
    truth = read_trace_csv(truth_path)
    if len(pred) != len(truth):
        raise LengthMismatch(
            f"prediction has {len(pred)} samples, truth has {len(truth)}"
        )
    p, t = pred.values, truth.values

    def corr(fn):
        try:
            return repr(fn(p, t))
        except ConstantInput:
            return "n/a"

    click.echo(f"rmse={rmse(p, t)!r}")
    click.echo(f"plcc={corr(plcc)}")
    click.echo(f"srocc={corr(srocc)}")
    click.echo(f"or={outage_rate(p, t, delta)!r}")
    click.echo(f"n={len(pred)}")


if __name__ == "__main__":
    main()
