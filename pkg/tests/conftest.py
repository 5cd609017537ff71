"""Shared builders for synthetic sessions and models."""

import numpy as np
import pytest

from qoenarx.narx import NarxConfig, NarxModel, init_weights
from qoenarx.traces import Normalizer, SessionTrace, TimeSeries


def make_series(values, dt=1.0, t0=0.0) -> TimeSeries:
    return TimeSeries(np.asarray(values, dtype=np.float64), dt=dt, t0=t0)


def make_session(sid="s0", content="A", n_channels=1, length=40, seed=0,
                 dt=1.0, subjective=True) -> SessionTrace:
    """Random aligned session with smooth-ish channels and subjective trace."""
    rng = np.random.default_rng(seed)
    channels = tuple(
        (f"ch{i}", make_series(np.cumsum(rng.normal(size=length)) * 0.1, dt=dt))
        for i in range(n_channels)
    )
    subj = (
        make_series(np.cumsum(rng.normal(size=length)) * 0.1 + 1.0, dt=dt)
        if subjective
        else None
    )
    return SessionTrace(id=sid, channels=channels, subjective=subj,
                        source_content=content)


def make_model(config: NarxConfig, seed=0, normalizer=None) -> NarxModel:
    names = tuple(f"ch{i}" for i in range(config.n_channels))
    if normalizer is None:
        normalizer = Normalizer.identity(names)
    return NarxModel(config, init_weights(config, seed), normalizer, names)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
