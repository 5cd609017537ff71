"""Sampled-signal data model: time series, multi-channel sessions, alignment,
z-score normalization, and content-disjoint train/test splitting.

All types are immutable after construction and safe to share across workers.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    ConstantChannel,
    DataValidationError,
    EmptyOverlap,
    Empty,
    MissingChannel,
    MissingSubjective,
    NonFinite,
    UnknownContent,
)

# Absolute timestamp tolerance (seconds) used when binning samples into
# resampling windows; matches the trace CSV uniformity tolerance.
TIME_EPS = 1e-9


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.asarray(arr, dtype=np.float64)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class TimeSeries:
    """Uniformly sampled scalar signal.

    values may contain non-finite entries at construction time; ingestion
    (CSV reading) and alignment are the validation points.
    """

    values: np.ndarray
    dt: float
    t0: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "values", _freeze(self.values))
        if self.values.ndim != 1 or self.values.size == 0:
            raise Empty("TimeSeries requires a non-empty 1-D value array")
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if self.t0 < 0:
            raise ValueError(f"t0 must be >= 0, got {self.t0}")

    def __len__(self) -> int:
        return self.values.size

    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.values.size) * self.dt

    @property
    def end(self) -> float:
        """End of the covered span (each sample covers [t, t + dt))."""
        return self.t0 + self.values.size * self.dt


@dataclass(frozen=True)
class SessionTrace:
    """One viewing session: exogenous quality channels plus, optionally, the
    continuously recorded subjective score trace.

    source_content identifies the reference video so splits can be made
    content-disjoint.
    """

    id: str
    channels: tuple[tuple[str, TimeSeries], ...]
    subjective: TimeSeries | None
    source_content: str

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))
        names = [n for n, _ in self.channels]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate channel names in session {self.id!r}")
        if not self.channels:
            raise Empty(f"session {self.id!r} has no channels")

    @property
    def channel_names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.channels)

    def channel(self, name: str) -> TimeSeries:
        for n, ts in self.channels:
            if n == name:
                return ts
        raise MissingChannel(f"session {self.id!r} has no channel {name!r}")

    def channel_matrix(self) -> np.ndarray:
        """Stack channels into an (L, n_channels) array. Requires alignment."""
        self.require_aligned()
        return np.column_stack([ts.values for _, ts in self.channels])

    def require_aligned(self) -> None:
        series = [ts for _, ts in self.channels]
        if self.subjective is not None:
            series.append(self.subjective)
        ref = series[0]
        for ts in series[1:]:
            if len(ts) != len(ref) or ts.dt != ref.dt or ts.t0 != ref.t0:
                raise ValueError(
                    f"session {self.id!r} is not aligned: series differ in "
                    "length, dt, or t0 (run align_session first)"
                )

    def require_subjective(self) -> TimeSeries:
        if self.subjective is None:
            raise MissingSubjective(f"session {self.id!r} has no subjective trace")
        return self.subjective

    def __len__(self) -> int:
        return len(self.channels[0][1])

    @property
    def dt(self) -> float:
        return self.channels[0][1].dt

    def with_channels(self, names: Sequence[str]) -> "SessionTrace":
        """View of this session restricted to the given channels, in order."""
        return replace(self, channels=tuple((n, self.channel(n)) for n in names))


def _pool_windows(ts: TimeSeries, target_dt: float, k_start: int, k_end: int,
                  pooling: str) -> np.ndarray:
    t = ts.times()
    win = np.floor((t + TIME_EPS) / target_dt).astype(np.int64)
    keep = (win >= k_start) & (win < k_end)
    vals = ts.values[keep]
    win = win[keep]
    if not np.all(np.isfinite(vals)):
        raise NonFinite("non-finite value inside a pooled window")
    # timestamps are monotone, so window indices are sorted
    bounds = np.searchsorted(win, np.arange(k_start, k_end))
    if np.any(np.diff(np.append(bounds, vals.size)) < 1):
        raise EmptyOverlap("a resampling window received no samples")
    if pooling == "mean":
        sums = np.add.reduceat(vals, bounds)
        counts = np.diff(np.append(bounds, vals.size))
        return sums / counts
    if pooling == "min":
        return np.minimum.reduceat(vals, bounds)
    if pooling == "last":
        last_idx = np.append(bounds[1:], vals.size) - 1
        return vals[last_idx]
    raise ValueError(f"unknown pooling {pooling!r}")


def align_session(raw: SessionTrace, target_dt: float = 1.0,
                  pooling: str = "mean") -> SessionTrace:
    """Resample every series of a session onto a shared target_dt grid.

    Window k covers [k * target_dt, (k+1) * target_dt); a window is kept only
    if every series fully covers it, so leading/trailing partial windows are
    dropped rather than padded.
    """
    series = [ts for _, ts in raw.channels]
    if raw.subjective is not None:
        series.append(raw.subjective)
    for ts in series:
        if ts.dt > target_dt + TIME_EPS:
            raise ValueError(
                f"target_dt {target_dt} is finer than source dt {ts.dt}"
            )
    t_start = max(ts.t0 for ts in series)
    t_end = min(ts.end for ts in series)
    k_start = int(np.ceil((t_start - TIME_EPS) / target_dt))
    k_end = int(np.floor((t_end + TIME_EPS) / target_dt))
    if k_end <= k_start:
        raise EmptyOverlap(
            f"session {raw.id!r}: common span [{t_start}, {t_end}) holds no "
            f"full {target_dt}s window"
        )
    t0 = k_start * target_dt

    def resample(ts: TimeSeries) -> TimeSeries:
        return TimeSeries(_pool_windows(ts, target_dt, k_start, k_end, pooling),
                          dt=target_dt, t0=t0)

    channels = tuple((name, resample(ts)) for name, ts in raw.channels)
    subjective = resample(raw.subjective) if raw.subjective is not None else None
    return replace(raw, channels=channels, subjective=subjective)


@dataclass(frozen=True)
class Normalizer:
    """Per-channel and output z-score statistics, fit on the training set.

    Uses the population (divide-by-N) standard deviation so stored statistics
    are stable against resampling conventions.
    """

    channel_names: tuple[str, ...]
    channel_mean: np.ndarray
    channel_std: np.ndarray
    output_mean: float
    output_std: float

    def __post_init__(self):
        object.__setattr__(self, "channel_mean", _freeze(self.channel_mean))
        object.__setattr__(self, "channel_std", _freeze(self.channel_std))
        if np.any(self.channel_std <= 0) or self.output_std <= 0:
            raise ConstantChannel("normalizer std components must be > 0")

    @classmethod
    def identity(cls, channel_names: Sequence[str]) -> "Normalizer":
        n = len(channel_names)
        return cls(tuple(channel_names), np.zeros(n), np.ones(n), 0.0, 1.0)

    def normalize_inputs(self, u: np.ndarray) -> np.ndarray:
        return (u - self.channel_mean) / self.channel_std

    def denormalize_inputs(self, u: np.ndarray) -> np.ndarray:
        return u * self.channel_std + self.channel_mean

    def normalize_output(self, y: np.ndarray) -> np.ndarray:
        return (y - self.output_mean) / self.output_std

    def denormalize_output(self, y: np.ndarray) -> np.ndarray:
        return y * self.output_std + self.output_mean


def fit_normalizer(train: Sequence[SessionTrace]) -> Normalizer:
    """Pool all training samples and compute per-channel / output statistics.

    Every session must provide the same channel set and a subjective trace;
    a constant channel is rejected as an ingestion error.
    """
    if not train:
        raise Empty("cannot fit a normalizer on an empty training set")
    names = train[0].channel_names
    for s in train:
        missing = set(names) - set(s.channel_names)
        extra = set(s.channel_names) - set(names)
        if missing or extra:
            raise MissingChannel(
                f"session {s.id!r} channel set differs from {names} "
                f"(missing {sorted(missing)}, extra {sorted(extra)})"
            )
    means = np.empty(len(names))
    stds = np.empty(len(names))
    for i, name in enumerate(names):
        pooled = np.concatenate([s.channel(name).values for s in train])
        means[i] = np.mean(pooled)
        stds[i] = np.std(pooled)
        if stds[i] == 0:
            raise ConstantChannel(f"channel {name!r} is constant over the training set")
    y = np.concatenate([s.require_subjective().values for s in train])
    y_mean = float(np.mean(y))
    y_std = float(np.std(y))
    if y_std == 0:
        raise ConstantChannel("subjective output is constant over the training set")
    return Normalizer(tuple(names), means, stds, y_mean, y_std)


def split_by_content(
    data: Sequence[SessionTrace], test_contents: Iterable[str]
) -> tuple[list[SessionTrace], list[SessionTrace]]:
    """Partition sessions so no reference content appears on both sides."""
    test_set = set(test_contents)
    if not test_set:
        raise Empty("test_contents must be non-empty")
    present = {s.source_content for s in data}
    unknown = test_set - present
    if unknown:
        raise UnknownContent(f"unknown content ids: {sorted(unknown)}")
    if test_set >= present:
        raise DataValidationError(
            f"test_contents covers all contents {sorted(present)}; "
            "train split would be empty"
        )
    train = [s for s in data if s.source_content not in test_set]
    test = [s for s in data if s.source_content in test_set]
    return train, test
