"""Continuous-time streaming QoE prediction: multi-input NARX networks
trained by Levenberg-Marquardt, evaluated closed loop, swept over a
configuration grid, and combined by forecast averaging."""

from .errors import QoeNarxError
from .estimator import NarxRegressor
from .harness import (
    GridSpec,
    GridRun,
    aggregate_report,
    average_forecasts,
    ensemble_forecasts,
    run_grid,
    select_best,
)
from .lm import LmSettings, TrainReport, lm_fit
from .metrics import EvalResult, evaluate, outage_rate, plcc, rmse, srocc
from .narx import (
    Forecast,
    NarxConfig,
    NarxModel,
    NarxWeights,
    forward_closed_loop,
    forward_open_loop,
    init_weights,
    load_model,
    save_model,
)
from .synth import SynthSpec, synth_generate
from .traces import (
    Normalizer,
    SessionTrace,
    TimeSeries,
    align_session,
    fit_normalizer,
    split_by_content,
)

__version__ = "0.1.0"

__all__ = [
    "EvalResult",
    "Forecast",
    "GridRun",
    "GridSpec",
    "LmSettings",
    "NarxConfig",
    "NarxModel",
    "NarxRegressor",
    "NarxWeights",
    "Normalizer",
    "QoeNarxError",
    "SessionTrace",
    "SynthSpec",
    "TimeSeries",
    "TrainReport",
    "aggregate_report",
    "align_session",
    "average_forecasts",
    "ensemble_forecasts",
    "evaluate",
    "fit_normalizer",
    "forward_closed_loop",
    "forward_open_loop",
    "init_weights",
    "lm_fit",
    "load_model",
    "outage_rate",
    "plcc",
    "rmse",
    "run_grid",
    "save_model",
    "select_best",
    "split_by_content",
    "srocc",
    "synth_generate",
]
