"""Input validation helpers shared by the estimator and the harness."""

from __future__ import annotations

from typing import Sequence

from .errors import Empty, MissingChannel
from .traces import SessionTrace


def check_sessions(
    sessions, require_subjective: bool = False
) -> list[SessionTrace]:
    """Validate a session collection: non-empty, aligned, identical channel
    sets. Accepts a single SessionTrace or any sequence of them."""
    if isinstance(sessions, SessionTrace):
        sessions = [sessions]
    sessions = list(sessions)
    if not sessions:
        raise Empty("need at least one session")
    for s in sessions:
        if not isinstance(s, SessionTrace):
            raise TypeError(f"expected SessionTrace, got {type(s).__name__}")
        s.require_aligned()
        if require_subjective:
            s.require_subjective()
    names = sessions[0].channel_names
    for s in sessions[1:]:
        if set(s.channel_names) != set(names):
            raise MissingChannel(
                f"session {s.id!r} channels {s.channel_names} differ from "
                f"{names}"
            )
    return sessions


def check_same_grid(sessions: Sequence[SessionTrace]) -> None:
    """All sessions must share one sample interval."""
    dt = sessions[0].dt
    for s in sessions[1:]:
        if s.dt != dt:
            raise ValueError(
                f"session {s.id!r} has dt={s.dt}, expected {dt}; align sessions "
                "to a common grid first"
            )
