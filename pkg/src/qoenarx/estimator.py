"""Scikit-learn style estimator facade over the NARX core and LM trainer.

X for fit/predict is a list of aligned SessionTrace objects rather than a
2-D array: each sample of this learning problem is a whole session.
"""

from __future__ import annotations

from sklearn.base import BaseEstimator

from .lm import LmSettings, lm_fit
from .metrics import rmse
from .narx import (
    Forecast,
    NarxConfig,
    NarxModel,
    forward_closed_loop,
    forward_open_loop,
    init_weights,
)
from .traces import SessionTrace, fit_normalizer
from .validation import check_sessions

TRAIN_MODES = ("ol", "cl-eval", "cl-train")


class NarxRegressor(BaseEstimator):
    """NARX QoE predictor with tapped delay lines and one tanh hidden layer.

    Parameters
    ----------
    d_u : exogenous lag depth (d_u + 1 taps per channel, including u_t).
    d_y : feedback lag depth.
    hidden : hidden neuron count.
    mode : 'ol' trains open loop and forecasts open loop; 'cl-eval' trains
        open loop but forecasts closed loop; 'cl-train' trains the closed-loop
        recurrence directly (slower) and forecasts closed loop.
    seed : weight initialization seed (deterministic).
    settings : LmSettings, or None for defaults.
    """

    def __init__(self, d_u: int = 4, d_y: int = 4, hidden: int = 8,
                 mode: str = "ol", seed: int = 0,
                 settings: LmSettings | None = None):
        self.d_u = d_u
        self.d_y = d_y
        self.hidden = hidden
        self.mode = mode
        self.seed = seed
        self.settings = settings

    def fit(self, X, y=None) -> "NarxRegressor":
        """Train on a list of aligned sessions with subjective traces."""
        if self.mode not in TRAIN_MODES:
            raise ValueError(f"mode must be one of {TRAIN_MODES}, got {self.mode!r}")
        sessions = check_sessions(X, require_subjective=True)
        normalizer = fit_normalizer(sessions)
        config = NarxConfig(
            n_channels=len(normalizer.channel_names),
            d_u=self.d_u, d_y=self.d_y, hidden=self.hidden,
        )
        init = init_weights(config, self.seed)
        train_mode = "cl" if self.mode == "cl-train" else "ol"
        settings = self.settings if self.settings is not None else LmSettings()
        weights, report = lm_fit(init, config, train_mode, sessions, normalizer,
                                 settings)
        self.model_ = NarxModel(config, weights, normalizer,
                                normalizer.channel_names)
        self.train_report_ = report
        return self

    @property
    def _default_loop(self) -> str:
        return "ol" if self.mode == "ol" else "cl"

    def forecast(self, session: SessionTrace, loop: str | None = None) -> Forecast:
        """Full-provenance forecast for one session."""
        self._check_fitted()
        loop = loop or self._default_loop
        if loop == "ol":
            fc = forward_open_loop(self.model_, session)
        elif loop == "cl":
            fc = forward_closed_loop(self.model_, session)
        else:
            raise ValueError(f"loop must be 'ol' or 'cl', got {loop!r}")
        return Forecast(
            values=fc.values, session_id=fc.session_id, loop_mode=fc.loop_mode,
            warmup_len=fc.warmup_len, config=fc.config, seed=self.seed,
        )

    def predict(self, X, loop: str | None = None):
        """Predicted value arrays; a single session yields one array, a list
        yields a list of arrays (sessions may differ in length)."""
        self._check_fitted()
        single = isinstance(X, SessionTrace)
        sessions = check_sessions(X)
        preds = [self.forecast(s, loop).values.values for s in sessions]
        return preds[0] if single else preds

    def score(self, X, y=None) -> float:
        """Negative mean forecast RMSE over sessions (higher is better)."""
        sessions = check_sessions(X, require_subjective=True)
        total = 0.0
        for s in sessions:
            fc = self.forecast(s)
            lo = fc.warmup_len
            total += rmse(fc.values.values[lo:], s.subjective.values[lo:])
        return -total / len(sessions)

    def _check_fitted(self) -> None:
        if not hasattr(self, "model_"):
            raise RuntimeError("this NarxRegressor instance is not fitted yet")
