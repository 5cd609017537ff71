"""CSV interchange for traces and forecast dumps.

Trace CSV format: header ``t,value``; t in seconds, monotone increasing with
uniform spacing (1e-9 s tolerance); values written with 9 significant digits.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .errors import IoError, NonFinite
from .traces import TIME_EPS, TimeSeries

# Fallback sample interval for a single-row trace, where spacing cannot be
# inferred from timestamps.
SINGLE_ROW_DT = 1.0


def quantize9(values: np.ndarray) -> np.ndarray:
    """Round-trip values through the 9-significant-digit CSV representation."""
    return np.array([float(format(v, ".9g")) for v in np.asarray(values, float)])


def write_trace_csv(path: str | Path, ts: TimeSeries) -> None:
    t = ts.times()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "value"])
        for ti, vi in zip(t, ts.values):
            w.writerow([format(ti, ".9f"), format(vi, ".9g")])


def read_trace_csv(path: str | Path) -> TimeSeries:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise IoError(f"cannot read trace {path}: {exc}") from exc
    if not rows or rows[0][:2] != ["t", "value"]:
        raise IoError(f"trace {path}: missing 't,value' header")
    body = [r for r in rows[1:] if r]
    if not body:
        raise IoError(f"trace {path}: no samples")
    try:
        t = np.array([float(r[0]) for r in body])
        values = np.array([float(r[1]) for r in body])
    except (ValueError, IndexError) as exc:
        raise IoError(f"trace {path}: malformed row: {exc}") from exc
    if not np.all(np.isfinite(values)):
        raise NonFinite(f"trace {path} contains non-finite values")
    if t[0] < 0:
        raise IoError(f"trace {path}: negative start time {t[0]}")
    if len(t) == 1:
        return TimeSeries(values, dt=SINGLE_ROW_DT, t0=float(t[0]))
    dts = np.diff(t)
    if np.any(dts <= 0):
        raise IoError(f"trace {path}: timestamps not strictly increasing")
    dt = float((t[-1] - t[0]) / (len(t) - 1))
    if np.max(np.abs(dts - dt)) > TIME_EPS:
        raise IoError(
            f"trace {path}: non-uniform spacing (max deviation "
            f"{np.max(np.abs(dts - dt)):.3g}s exceeds {TIME_EPS}s)"
        )
    return TimeSeries(values, dt=dt, t0=float(t[0]))


def write_forecast_csv(path: str | Path, t: np.ndarray, truth: np.ndarray,
                       pred: np.ndarray) -> None:
    """Dump one predicted series next to ground truth: columns t,truth,pred."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "truth", "pred"])
        for ti, yi, pi in zip(t, truth, pred):
            w.writerow([format(ti, ".9f"), repr(float(yi)), repr(float(pi))])


def read_forecast_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["t", "truth", "pred"]:
        raise IoError(f"forecast dump {path}: missing 't,truth,pred' header")
    body = [r for r in rows[1:] if r]
    t = np.array([float(r[0]) for r in body])
    truth = np.array([float(r[1]) for r in body])
    pred = np.array([float(r[2]) for r in body])
    return t, truth, pred
