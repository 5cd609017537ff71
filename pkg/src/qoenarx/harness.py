"""Experiment harness: configuration grid search with repeated seeds,
best-single-predictor selection, forecast-averaging ensembles, and the
report table with per-session and median aggregate rows.

Loop modes:
  ol        train open loop, forecast with ground-truth feedback
  cl-eval   train open loop, forecast closed loop (deployment view)
  cl-train  train the closed-loop recurrence directly, forecast closed loop
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import AllFailed, Empty, IoError, MixedSessions, NumericalError
from .estimator import NarxRegressor
from .lm import LmSettings, TrainReport
from .metrics import EvalResult, evaluate
from .narx import Forecast, NarxConfig
from .traces import SessionTrace, TimeSeries
from .validation import check_same_grid, check_sessions

LOOP_MODES = ("ol", "cl-eval", "cl-train")


def _train_kind(mode: str) -> str:
    return "cl" if mode == "cl-train" else "ol"


@dataclass(frozen=True)
class GridSpec:
    """Search space. Defaults mirror the experiment protocol: lags 4..10
    step 2, hidden sizes {5, 8, 10}, five initialization seeds."""

    d_u_values: tuple[int, ...] = (4, 6, 8, 10)
    d_y_values: tuple[int, ...] = (4, 6, 8, 10)
    hidden_values: tuple[int, ...] = (5, 8, 10)
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    loop_modes: tuple[str, ...] = ("ol", "cl-eval")

    def __post_init__(self):
        for name in ("d_u_values", "d_y_values", "hidden_values", "seeds",
                     "loop_modes"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
            if not getattr(self, name):
                raise Empty(f"GridSpec.{name} must be non-empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError(f"seeds must be distinct, got {self.seeds}")
        bad = set(self.loop_modes) - set(LOOP_MODES)
        if bad:
            raise ValueError(f"unknown loop modes {sorted(bad)}; valid: {LOOP_MODES}")

    def configs(self, n_channels: int) -> list[NarxConfig]:
        return [
            NarxConfig(n_channels=n_channels, d_u=du, d_y=dy, hidden=h)
            for du in self.d_u_values
            for dy in self.d_y_values
            for h in self.hidden_values
        ]


@dataclass(frozen=True)
class GridJobResult:
    """Outcome of one (mode, config, seed) cell of the grid."""

    mode: str
    config: NarxConfig
    seed: int
    failed: bool
    train_report: TrainReport | None
    train_rmse: float  # sqrt of final loss, normalized units; nan when failed
    forecasts: tuple[Forecast, ...]  # one per test session, test order


@dataclass(frozen=True)
class GridRun:
    grid: GridSpec
    results: tuple[GridJobResult, ...]
    train_ids: tuple[str, ...]
    test_ids: tuple[str, ...]
    delta: float


def _forecast_all(est: NarxRegressor, mode: str,
                  test_sessions: Sequence[SessionTrace]) -> tuple[Forecast, ...]:
    loop = "ol" if mode == "ol" else "cl"
    out = []
    for s in test_sessions:
        fc = est.forecast(s, loop=loop)
        out.append(replace(fc, loop_mode=mode))
    return tuple(out)


def _run_cell(config: NarxConfig, seed: int, train_kind: str,
              harness_modes: tuple[str, ...],
              train_sessions: Sequence[SessionTrace],
              test_sessions: Sequence[SessionTrace],
              settings: LmSettings) -> list[GridJobResult]:
    est = NarxRegressor(
        d_u=config.d_u, d_y=config.d_y, hidden=config.hidden,
        mode="cl-train" if train_kind == "cl" else "ol",
        seed=seed, settings=settings,
    )
    try:
        est.fit(train_sessions)
        report = est.train_report_
        diverged = not np.isfinite(report.final_loss)
    except NumericalError:
        report = None
        diverged = True
    if diverged:
        return [
            GridJobResult(mode=m, config=config, seed=seed, failed=True,
                          train_report=report, train_rmse=float("nan"),
                          forecasts=())
            for m in harness_modes
        ]
    train_rmse = float(np.sqrt(report.final_loss))
    return [
        GridJobResult(mode=m, config=config, seed=seed, failed=False,
                      train_report=report, train_rmse=train_rmse,
                      forecasts=_forecast_all(est, m, test_sessions))
        for m in harness_modes
    ]


_WORKER_DATA: dict = {}


def _init_worker(train_sessions, test_sessions, settings) -> None:
    _WORKER_DATA["train"] = train_sessions
    _WORKER_DATA["test"] = test_sessions
    _WORKER_DATA["settings"] = settings


def _grid_worker(spec) -> list[GridJobResult]:
    config, seed, train_kind, harness_modes = spec
    return _run_cell(config, seed, train_kind, harness_modes,
                     _WORKER_DATA["train"], _WORKER_DATA["test"],
                     _WORKER_DATA["settings"])


def run_grid(
    train_sessions: Sequence[SessionTrace],
    test_sessions: Sequence[SessionTrace],
    grid: GridSpec,
    settings: LmSettings = LmSettings(),
    delta: float = 1.0,
    jobs: int = 1,
) -> GridRun:
    """Train every (config, seed) cell per loop mode and forecast every test
    session. Diverged jobs are kept with a failure flag.

    Modes sharing a training kind ('ol' and 'cl-eval' both train open loop)
    share one training run per cell. Results are keyed, so parallel and
    serial execution produce identical output.
    """
    train_sessions = check_sessions(train_sessions, require_subjective=True)
    test_sessions = check_sessions(test_sessions, require_subjective=True)
    check_same_grid(list(train_sessions) + list(test_sessions))
    overlap = {s.source_content for s in train_sessions} & {
        s.source_content for s in test_sessions
    }
    if overlap:
        raise ValueError(f"train/test share contents {sorted(overlap)}")

    n_channels = len(train_sessions[0].channel_names)
    specs = []
    for config in grid.configs(n_channels):
        for seed in grid.seeds:
            for kind in ("ol", "cl"):
                hmodes = tuple(m for m in grid.loop_modes if _train_kind(m) == kind)
                if hmodes:
                    specs.append((config, seed, kind, hmodes))

    collected: dict[tuple, GridJobResult] = {}
    if jobs > 1:
        with ProcessPoolExecutor(
            max_workers=jobs, initializer=_init_worker,
            initargs=(train_sessions, test_sessions, settings),
        ) as pool:
            for batch in pool.map(_grid_worker, specs):
                for res in batch:
                    collected[(res.mode, res.config, res.seed)] = res
    else:
        for spec in specs:
            config, seed, kind, hmodes = spec
            for res in _run_cell(config, seed, kind, hmodes, train_sessions,
                                 test_sessions, settings):
                collected[(res.mode, res.config, res.seed)] = res

    mode_order = {m: i for i, m in enumerate(LOOP_MODES)}
    ordered = sorted(
        collected.values(),
        key=lambda r: (mode_order[r.mode], r.config.d_u, r.config.d_y,
                       r.config.hidden, r.seed),
    )
    return GridRun(
        grid=grid,
        results=tuple(ordered),
        train_ids=tuple(s.id for s in train_sessions),
        test_ids=tuple(s.id for s in test_sessions),
        delta=delta,
    )


def average_forecasts(forecasts: Sequence[Forecast]) -> Forecast:
    """Pointwise mean of forecasts for one session. The combined warm-up is
    the largest member warm-up."""
    forecasts = list(forecasts)
    if not forecasts:
        raise Empty("cannot average zero forecasts")
    first = forecasts[0]
    for fc in forecasts[1:]:
        if fc.session_id != first.session_id:
            raise MixedSessions(
                f"cannot average forecasts for {first.session_id!r} and "
                f"{fc.session_id!r}"
            )
        if len(fc.values) != len(first.values):
            raise MixedSessions("forecasts for one session differ in length")
    stacked = np.vstack([fc.values.values for fc in forecasts])
    mean = stacked.mean(axis=0)
    modes = {fc.loop_mode for fc in forecasts}
    return Forecast(
        values=TimeSeries(mean, dt=first.values.dt, t0=first.values.t0),
        session_id=first.session_id,
        loop_mode=modes.pop() if len(modes) == 1 else "mixed",
        warmup_len=max(fc.warmup_len for fc in forecasts),
        kind="avg",
    )


@dataclass(frozen=True)
class BestSelection:
    """Winning configuration for one loop mode plus its seed-averaged test
    metrics (per session)."""

    mode: str
    config: NarxConfig
    mean_train_rmse: float
    per_session: dict[str, EvalResult] = field(compare=False)
    train_seconds: float = float("nan")


def _mean_or_none(values: list[float | None]) -> float | None:
    present = [v for v in values if v is not None]
    if not present:
        return None
    return float(np.mean(present))


def select_best(run: GridRun, test_sessions: Sequence[SessionTrace],
                mode: str, delta: float | None = None) -> BestSelection:
    """Pick the config with the lowest mean training RMSE across seeds
    (ties broken by lexicographic (d_u, d_y, hidden)), then average its test
    metrics across seeds."""
    if delta is None:
        delta = run.delta
    rows = [r for r in run.results if r.mode == mode]
    by_config: dict[NarxConfig, list[GridJobResult]] = {}
    for r in rows:
        by_config.setdefault(r.config, []).append(r)
    candidates = []
    for config, group in by_config.items():
        ok = [r for r in group if not r.failed]
        if not ok:
            continue
        mean_rmse = float(np.mean([r.train_rmse for r in ok]))
        candidates.append((mean_rmse, (config.d_u, config.d_y, config.hidden),
                           config, ok))
    if not candidates:
        raise AllFailed(f"every training job failed in mode {mode!r}")
    candidates.sort(key=lambda c: (c[0], c[1]))
    mean_rmse, _, config, ok = candidates[0]

    sessions = {s.id: s for s in test_sessions}
    per_session: dict[str, EvalResult] = {}
    for i, sid in enumerate(run.test_ids):
        evals = [evaluate(r.forecasts[i], sessions[sid], delta) for r in ok]
        per_session[sid] = EvalResult(
            rmse=float(np.mean([e.rmse for e in evals])),
            plcc=_mean_or_none([e.plcc for e in evals]),
            srocc=_mean_or_none([e.srocc for e in evals]),
            outage_rate=float(np.mean([e.outage_rate for e in evals])),
            n_samples=evals[0].n_samples,
        )
    return BestSelection(
        mode=mode, config=config, mean_train_rmse=mean_rmse,
        per_session=per_session,
        train_seconds=float(np.mean([r.train_report.wall_time for r in ok])),
    )


def ensemble_forecasts(run: GridRun, mode: str) -> dict[str, Forecast]:
    """Per-session mean over every successful (config, seed) forecast of a
    mode."""
    rows = [r for r in run.results if r.mode == mode and not r.failed]
    if not rows:
        raise AllFailed(f"every training job failed in mode {mode!r}")
    out = {}
    for i, sid in enumerate(run.test_ids):
        out[sid] = average_forecasts([r.forecasts[i] for r in rows])
    return out


# ---------------------------------------------------------------------------
# report table

REPORT_COLUMNS = (
    "mode", "kind", "config_du", "config_dy", "config_hidden", "seed",
    "session", "rmse", "plcc", "srocc", "or", "n", "train_seconds", "failed",
)

AGGREGATE_KEY = "AGGREGATE"


@dataclass(frozen=True)
class ReportRow:
    mode: str
    kind: str  # single | best | avg
    d_u: int | None
    d_y: int | None
    hidden: int | None
    seed: int | None
    session: str
    rmse: float | None
    plcc: float | None
    srocc: float | None
    outage_rate: float | None
    n: int | None
    train_seconds: float | None
    failed: int


@dataclass(frozen=True)
class ExperimentReport:
    rows: tuple[ReportRow, ...]

    def aggregate_rows(self) -> list[ReportRow]:
        return [r for r in self.rows if r.session == AGGREGATE_KEY]

    def session_rows(self) -> list[ReportRow]:
        return [r for r in self.rows if r.session != AGGREGATE_KEY]


def _median_or_none(values: list[float | None]) -> float | None:
    present = [v for v in values if v is not None]
    if not present:
        return None
    return float(np.median(present))


def recompute_aggregates(rows: Sequence[ReportRow]) -> list[ReportRow]:
    """Median-across-sessions rows for each (mode, kind in {best, avg}),
    derived purely from per-session rows (so a re-parsed CSV reproduces the
    stored aggregates)."""
    per_session = [r for r in rows if r.session != AGGREGATE_KEY]
    modes = []
    for r in per_session:
        if r.mode not in modes:
            modes.append(r.mode)
    out = []
    for mode in modes:
        n_failed = sum(r.failed for r in per_session
                       if r.mode == mode and r.kind == "single")
        timing = [r.train_seconds for r in per_session
                  if r.mode == mode and r.kind == "single"
                  and r.train_seconds is not None]
        mean_seconds = float(np.mean(timing)) if timing else None
        for kind in ("best", "avg"):
            group = [r for r in per_session if r.mode == mode and r.kind == kind]
            if not group:
                continue
            out.append(ReportRow(
                mode=mode, kind=kind, d_u=None, d_y=None, hidden=None,
                seed=None, session=AGGREGATE_KEY,
                rmse=_median_or_none([r.rmse for r in group]),
                plcc=_median_or_none([r.plcc for r in group]),
                srocc=_median_or_none([r.srocc for r in group]),
                outage_rate=_median_or_none([r.outage_rate for r in group]),
                n=len(group),
                train_seconds=mean_seconds,
                failed=n_failed,
            ))
    return out


def aggregate_report(run: GridRun, test_sessions: Sequence[SessionTrace],
                     delta: float | None = None) -> ExperimentReport:
    """Full table: per-forecast single rows, per-session best and avg rows,
    and median AGGREGATE rows per (mode, kind)."""
    if delta is None:
        delta = run.delta
    sessions = {s.id: s for s in test_sessions}
    rows: list[ReportRow] = []
    modes = [m for m in LOOP_MODES if m in run.grid.loop_modes]

    for mode in modes:
        for r in run.results:
            if r.mode != mode:
                continue
            cfg = r.config
            secs = r.train_report.wall_time if r.train_report else None
            if r.failed:
                rows.append(ReportRow(
                    mode=mode, kind="single", d_u=cfg.d_u, d_y=cfg.d_y,
                    hidden=cfg.hidden, seed=r.seed, session="",
                    rmse=None, plcc=None, srocc=None, outage_rate=None,
                    n=None, train_seconds=secs, failed=1,
                ))
                continue
            for i, sid in enumerate(run.test_ids):
                ev = evaluate(r.forecasts[i], sessions[sid], delta)
                rows.append(ReportRow(
                    mode=mode, kind="single", d_u=cfg.d_u, d_y=cfg.d_y,
                    hidden=cfg.hidden, seed=r.seed, session=sid,
                    rmse=ev.rmse, plcc=ev.plcc, srocc=ev.srocc,
                    outage_rate=ev.outage_rate, n=ev.n_samples,
                    train_seconds=secs, failed=0,
                ))
        best = select_best(run, test_sessions, mode, delta)
        for sid in run.test_ids:
            ev = best.per_session[sid]
            rows.append(ReportRow(
                mode=mode, kind="best", d_u=best.config.d_u, d_y=best.config.d_y,
                hidden=best.config.hidden, seed=None, session=sid,
                rmse=ev.rmse, plcc=ev.plcc, srocc=ev.srocc,
                outage_rate=ev.outage_rate, n=ev.n_samples,
                train_seconds=best.train_seconds, failed=0,
            ))
        ens = ensemble_forecasts(run, mode)
        for sid in run.test_ids:
            ev = evaluate(ens[sid], sessions[sid], delta)
            rows.append(ReportRow(
                mode=mode, kind="avg", d_u=None, d_y=None, hidden=None,
                seed=None, session=sid,
                rmse=ev.rmse, plcc=ev.plcc, srocc=ev.srocc,
                outage_rate=ev.outage_rate, n=ev.n_samples,
                train_seconds=None, failed=0,
            ))
    rows.extend(recompute_aggregates(rows))
    return ExperimentReport(rows=tuple(rows))


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_report_csv(report: ExperimentReport, path: str | Path,
                     include_timing: bool = True) -> None:
    """Write the report table. include_timing=False blanks the wall-clock
    column so two runs of the same experiment are byte-identical."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_COLUMNS)
        for r in report.rows:
            secs = r.train_seconds if include_timing else None
            w.writerow([
                r.mode, r.kind, _fmt(r.d_u), _fmt(r.d_y), _fmt(r.hidden),
                _fmt(r.seed), r.session, _fmt(r.rmse), _fmt(r.plcc),
                _fmt(r.srocc), _fmt(r.outage_rate), _fmt(r.n), _fmt(secs),
                _fmt(r.failed),
            ])


def _parse(text: str, cast):
    return None if text == "" else cast(text)


def read_report_csv(path: str | Path) -> ExperimentReport:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != REPORT_COLUMNS:
        raise IoError(f"report {path}: unexpected header")
    out = []
    for rec in rows[1:]:
        if not rec:
            continue
        vals = dict(zip(REPORT_COLUMNS, rec))
        out.append(ReportRow(
            mode=vals["mode"], kind=vals["kind"],
            d_u=_parse(vals["config_du"], int), d_y=_parse(vals["config_dy"], int),
            hidden=_parse(vals["config_hidden"], int),
            seed=_parse(vals["seed"], int), session=vals["session"],
            rmse=_parse(vals["rmse"], float), plcc=_parse(vals["plcc"], float),
            srocc=_parse(vals["srocc"], float),
            outage_rate=_parse(vals["or"], float), n=_parse(vals["n"], int),
            train_seconds=_parse(vals["train_seconds"], float),
            failed=int(vals["failed"]),
        ))
    return ExperimentReport(rows=tuple(out))
