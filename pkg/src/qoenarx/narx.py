"""NARX network core: tapped-delay regressor construction, weight containers,
deterministic initialization, and open-/closed-loop forward passes.

Regressor layout is channel-major and fixed:

    [ch0: u_t, u_{t-1}, ..., u_{t-d_u} | ch1: ... | y_{t-1}, ..., y_{t-d_y}]

The first index with a full set of taps is t_min = max(d_u, d_y); samples
before t_min are the warm-up segment, copied from ground truth in forecasts
and excluded from evaluation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InsufficientWarmup, IoError, MissingChannel, TooShort
from .traces import Normalizer, SessionTrace, TimeSeries, _freeze


@dataclass(frozen=True)
class NarxConfig:
    """Architecture hyperparameters.

    d_u: exogenous lag depth (taps u_t ... u_{t-d_u}, so d_u+1 taps per channel)
    d_y: feedback lag depth (taps y_{t-1} ... y_{t-d_y})
    """

    n_channels: int
    d_u: int
    d_y: int
    hidden: int

    def __post_init__(self):
        if self.n_channels < 1:
            raise ValueError("n_channels must be >= 1")
        if self.d_u < 0:
            raise ValueError("d_u must be >= 0")
        if self.d_y < 1:
            raise ValueError("d_y must be >= 1")
        if self.hidden < 1:
            raise ValueError("hidden must be >= 1")

    @property
    def regressor_dim(self) -> int:
        return self.n_channels * (self.d_u + 1) + self.d_y

    @property
    def t_min(self) -> int:
        """First index where every exogenous and feedback tap exists."""
        return max(self.d_u, self.d_y)

    @property
    def n_params(self) -> int:
        r = self.regressor_dim
        return self.hidden * (r + 1) + self.hidden + 1

    def feedback_slice(self) -> slice:
        start = self.n_channels * (self.d_u + 1)
        return slice(start, start + self.d_y)


@dataclass(frozen=True)
class NarxWeights:
    """Single-hidden-layer weights: tanh hidden units, linear output."""

    W1: np.ndarray  # hidden x R
    b1: np.ndarray  # hidden
    W2: np.ndarray  # hidden (output row)
    b2: float

    def __post_init__(self):
        object.__setattr__(self, "W1", _freeze(self.W1))
        object.__setattr__(self, "b1", _freeze(self.b1))
        object.__setattr__(self, "W2", _freeze(self.W2))
        h, r = self.W1.shape
        if self.b1.shape != (h,) or self.W2.shape != (h,):
            raise ValueError("weight shapes are inconsistent")
        for arr in (self.W1, self.b1, self.W2):
            if not np.all(np.isfinite(arr)):
                raise ValueError("weights must be finite")
        if not np.isfinite(self.b2):
            raise ValueError("weights must be finite")

    def check_config(self, config: NarxConfig) -> None:
        if self.W1.shape != (config.hidden, config.regressor_dim):
            raise ValueError(
                f"W1 shape {self.W1.shape} does not match config "
                f"({config.hidden} x {config.regressor_dim})"
            )

    # canonical parameter vector ordering: W1 row-major, b1, W2, b2
    def pack(self) -> np.ndarray:
        return np.concatenate([self.W1.ravel(), self.b1, self.W2, [self.b2]])

    @classmethod
    def unpack(cls, theta: np.ndarray, config: NarxConfig) -> "NarxWeights":
        h, r = config.hidden, config.regressor_dim
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (config.n_params,):
            raise ValueError(f"expected {config.n_params} parameters, got {theta.shape}")
        w1 = theta[: h * r].reshape(h, r)
        b1 = theta[h * r : h * r + h]
        w2 = theta[h * r + h : h * r + 2 * h]
        b2 = float(theta[-1])
        return cls(w1, b1, w2, b2)


def init_weights(config: NarxConfig, seed: int) -> NarxWeights:
    """Deterministic initialization: entries i.i.d. uniform on [-0.5, 0.5).

    Uses the Philox 4x64 counter-based generator keyed by the seed, drawing
    parameters in canonical pack() order, so entry i is a pure function of
    (seed, i) independent of thread scheduling.
    """
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    theta = rng.random(config.n_params) - 0.5
    return NarxWeights.unpack(theta, config)


@dataclass(frozen=True)
class NarxModel:
    """A trained predictor: architecture, weights, input/output scaling, and
    the channel names that bind regressor columns to quality models."""

    config: NarxConfig
    weights: NarxWeights
    normalizer: Normalizer
    channel_names: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "channel_names", tuple(self.channel_names))
        if len(self.channel_names) != self.config.n_channels:
            raise ValueError(
                f"{len(self.channel_names)} channel names for "
                f"{self.config.n_channels} channels"
            )
        self.weights.check_config(self.config)


@dataclass(frozen=True)
class Forecast:
    """A predicted output series with provenance.

    kind is 'single' for one trained network, 'avg' for an ensemble mean.
    The first warmup_len samples are ground-truth copies and must be excluded
    from evaluation.
    """

    values: TimeSeries
    session_id: str
    loop_mode: str
    warmup_len: int
    config: NarxConfig | None = None
    seed: int | None = None
    kind: str = "single"


def _session_inputs(session: SessionTrace, model_channels: tuple[str, ...],
                    normalizer: Normalizer) -> np.ndarray:
    """Channel matrix in model channel order, normalized. (L, n_channels)."""
    session.require_aligned()
    missing = set(model_channels) - set(session.channel_names)
    if missing:
        raise MissingChannel(
            f"session {session.id!r} lacks channels {sorted(missing)}"
        )
    u = np.column_stack([session.channel(n).values for n in model_channels])
    try:
        cols = [normalizer.channel_names.index(n) for n in model_channels]
    except ValueError:
        raise MissingChannel(
            f"normalizer lacks statistics for some of {model_channels}"
        ) from None
    return (u - normalizer.channel_mean[cols]) / normalizer.channel_std[cols]


def _exog_taps(u_norm: np.ndarray, config: NarxConfig, t: int, out: np.ndarray) -> None:
    """Fill the exogenous part of a regressor row for index t."""
    k = 0
    for c in range(config.n_channels):
        for lag in range(config.d_u + 1):
            out[k] = u_norm[t - lag, c]
            k += 1


def build_regressors(
    session: SessionTrace,
    config: NarxConfig,
    feedback: TimeSeries,
    normalizer: Normalizer | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Tapped-delay design matrix and targets over all predictable indices.

    feedback supplies the values used for the y_{t-1}..y_{t-d_y} taps (ground
    truth for open-loop training). Returns (X, targets) in normalized units,
    rows t = t_min .. L-1.
    """
    session.require_aligned()
    subjective = session.require_subjective()
    L = len(session)
    if len(feedback) != L:
        raise ValueError(f"feedback length {len(feedback)} != session length {L}")
    t_min = config.t_min
    if L <= t_min:
        raise TooShort(
            f"session {session.id!r}: length {L} leaves no predictable index "
            f"(needs > max(d_u, d_y) = {t_min})"
        )
    if normalizer is None:
        normalizer = Normalizer.identity(session.channel_names)
    u = _session_inputs(session, tuple(normalizer.channel_names), normalizer)
    if u.shape[1] != config.n_channels:
        raise ValueError(
            f"config expects {config.n_channels} channels, normalizer has {u.shape[1]}"
        )
    f = normalizer.normalize_output(feedback.values)
    y = normalizer.normalize_output(subjective.values)

    T = L - t_min
    X = np.empty((T, config.regressor_dim))
    col = 0
    for c in range(config.n_channels):
        for lag in range(config.d_u + 1):
            X[:, col] = u[t_min - lag : L - lag, c]
            col += 1
    for k in range(1, config.d_y + 1):
        X[:, col] = f[t_min - k : L - k]
        col += 1
    return X, y[t_min:].copy()


def eval_row(weights: NarxWeights, x: np.ndarray) -> float:
    """One network evaluation: W2 . tanh(W1 x + b1) + b2.

    Shared by the open- and closed-loop paths so that feeding ground truth
    into the closed loop reproduces the open loop bit for bit.
    """
    a = weights.W1 @ x + weights.b1
    return float(weights.W2 @ np.tanh(a) + weights.b2)


def forward_open_loop(model: NarxModel, session: SessionTrace) -> Forecast:
    """Series-parallel pass: feedback taps read the ground-truth subjective
    trace. Warm-up samples are copied from ground truth."""
    subjective = session.require_subjective()
    config = model.config
    L = len(session)
    t_min = config.t_min
    if L <= t_min:
        raise TooShort(f"session {session.id!r} too short for d_u={config.d_u}, d_y={config.d_y}")
    u = _session_inputs(session, model.channel_names, model.normalizer)
    f = model.normalizer.normalize_output(subjective.values)

    out = np.empty(L)
    out[:t_min] = subjective.values[:t_min]
    x = np.empty(config.regressor_dim)
    fb = config.feedback_slice()
    for t in range(t_min, L):
        _exog_taps(u, config, t, x)
        x[fb] = f[t - config.d_y : t][::-1]
        y_norm = eval_row(model.weights, x)
        out[t] = model.normalizer.denormalize_output(y_norm)
    ref = session.channels[0][1]
    return Forecast(
        values=TimeSeries(out, dt=ref.dt, t0=ref.t0),
        session_id=session.id,
        loop_mode="ol",
        warmup_len=t_min,
        config=config,
    )


def forward_closed_loop(
    model: NarxModel, session: SessionTrace, warmup: TimeSeries | None = None
) -> Forecast:
    """Parallel pass: feedback taps read the model's own earlier predictions.

    warmup seeds the first t_min samples (ground truth); defaults to the
    session's subjective trace when present.
    """
    config = model.config
    L = len(session)
    t_min = config.t_min
    if L <= t_min:
        raise TooShort(f"session {session.id!r} too short for d_u={config.d_u}, d_y={config.d_y}")
    if warmup is None:
        if session.subjective is None:
            raise InsufficientWarmup(
                f"session {session.id!r} has no subjective trace and no warmup "
                "series was provided"
            )
        warmup = session.subjective
    if len(warmup) < t_min:
        raise InsufficientWarmup(
            f"closed loop needs {t_min} warm-up samples, got {len(warmup)}"
        )
    u = _session_inputs(session, model.channel_names, model.normalizer)

    f = np.empty(L)  # normalized rollout
    f[:t_min] = model.normalizer.normalize_output(warmup.values[:t_min])
    out = np.empty(L)
    out[:t_min] = warmup.values[:t_min]
    x = np.empty(config.regressor_dim)
    fb = config.feedback_slice()
    for t in range(t_min, L):
        _exog_taps(u, config, t, x)
        x[fb] = f[t - config.d_y : t][::-1]
        f[t] = eval_row(model.weights, x)
        out[t] = model.normalizer.denormalize_output(f[t])
    ref = session.channels[0][1]
    return Forecast(
        values=TimeSeries(out, dt=ref.dt, t0=ref.t0),
        session_id=session.id,
        loop_mode="cl",
        warmup_len=t_min,
        config=config,
    )


# ---------------------------------------------------------------------------
# persistence: JSON document, floats serialized losslessly (shortest
# round-trip decimal, up to 17 significant digits)

MODEL_SCHEMA_VERSION = 1


def save_model(model: NarxModel, path: str | Path) -> None:
    doc = {
        "schema_version": MODEL_SCHEMA_VERSION,
        "config": {
            "n_channels": model.config.n_channels,
            "d_u": model.config.d_u,
            "d_y": model.config.d_y,
            "hidden": model.config.hidden,
        },
        "channel_names": list(model.channel_names),
        "normalizer": {
            "channel_names": list(model.normalizer.channel_names),
            "channel_mean": model.normalizer.channel_mean.tolist(),
            "channel_std": model.normalizer.channel_std.tolist(),
            "output_mean": model.normalizer.output_mean,
            "output_std": model.normalizer.output_std,
        },
        "weights": {
            "W1": model.weights.W1.tolist(),  # row-major
            "b1": model.weights.b1.tolist(),
            "W2": model.weights.W2.tolist(),
            "b2": model.weights.b2,
        },
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_model(path: str | Path) -> NarxModel:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise IoError(f"cannot read model {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise IoError(f"model {path} is not valid JSON: {exc}") from exc
    if doc.get("schema_version") != MODEL_SCHEMA_VERSION:
        raise IoError(
            f"model {path}: unsupported schema_version {doc.get('schema_version')!r}"
        )
    cfg = NarxConfig(**doc["config"])
    norm = doc["normalizer"]
    w = doc["weights"]
    return NarxModel(
        config=cfg,
        weights=NarxWeights(
            np.array(w["W1"], dtype=np.float64),
            np.array(w["b1"], dtype=np.float64),
            np.array(w["W2"], dtype=np.float64),
            float(w["b2"]),
        ),
        normalizer=Normalizer(
            tuple(norm["channel_names"]),
            np.array(norm["channel_mean"], dtype=np.float64),
            np.array(norm["channel_std"], dtype=np.float64),
            float(norm["output_mean"]),
            float(norm["output_std"]),
        ),
        channel_names=tuple(doc["channel_names"]),
    )
