"""Forecast-versus-truth evaluation: RMSE, Pearson and Spearman correlation,
and outage rate. Warm-up samples are excluded by evaluate()."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import ConstantInput, Empty, LengthMismatch, MixedSessions
from .narx import Forecast
from .traces import SessionTrace


@dataclass(frozen=True)
class EvalResult:
    """Correlations are None when undefined (constant input or n < 2)."""

    rmse: float
    plcc: float | None
    srocc: float | None
    outage_rate: float
    n_samples: int


def _pair(pred, truth) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(truth, dtype=np.float64)
    if p.shape != t.shape or p.ndim != 1:
        raise LengthMismatch(f"pred shape {p.shape} vs truth shape {t.shape}")
    if p.size == 0:
        raise Empty("empty vectors")
    return p, t


def rmse(pred, truth) -> float:
    p, t = _pair(pred, truth)
    d = p - t
    return float(np.sqrt(np.mean(d * d)))


def plcc(pred, truth) -> float:
    """Sample Pearson correlation, computed as cov / sqrt(var_p * var_t)."""
    p, t = _pair(pred, truth)
    if p.size < 2:
        raise ConstantInput("correlation needs at least 2 samples")
    dp = p - np.mean(p)
    dt = t - np.mean(t)
    var_p = np.mean(dp * dp)
    var_t = np.mean(dt * dt)
    if var_p == 0 or var_t == 0:
        raise ConstantInput("correlation undefined for a constant input")
    return float(np.mean(dp * dt) / np.sqrt(var_p * var_t))


def srocc(pred, truth) -> float:
    """Spearman rank correlation with average (fractional) ranks for ties."""
    p, t = _pair(pred, truth)
    if p.size < 2:
        raise ConstantInput("correlation needs at least 2 samples")
    return plcc(rankdata(p, method="average"), rankdata(t, method="average"))


def outage_rate(pred, truth, delta: float) -> float:
    """Percentage of samples deviating from truth by more than delta."""
    p, t = _pair(pred, truth)
    if not delta > 0:
        raise ValueError(f"delta must be > 0, got {delta}")
    return float(100.0 * np.count_nonzero(np.abs(p - t) > delta) / p.size)


def evaluate(forecast: Forecast, session: SessionTrace, delta: float) -> EvalResult:
    """All four metrics on the post-warm-up segment of one forecast."""
    if forecast.session_id != session.id:
        raise MixedSessions(
            f"forecast for {forecast.session_id!r} evaluated against {session.id!r}"
        )
    truth_series = session.require_subjective()
    if len(forecast.values) != len(truth_series):
        raise LengthMismatch(
            f"forecast length {len(forecast.values)} vs session length {len(truth_series)}"
        )
    lo = forecast.warmup_len
    pred = forecast.values.values[lo:]
    truth = truth_series.values[lo:]
    if pred.size == 0:
        raise Empty("no samples remain after the warm-up segment")
    result_rmse = rmse(pred, truth)
    result_or = outage_rate(pred, truth, delta)
    try:
        result_plcc = plcc(pred, truth)
    except ConstantInput:
        result_plcc = None
    try:
        result_srocc = srocc(pred, truth)
    except ConstantInput:
        result_srocc = None
    return EvalResult(
        rmse=result_rmse,
        plcc=result_plcc,
        srocc=result_srocc,
        outage_rate=result_or,
        n_samples=int(pred.size),
    )
