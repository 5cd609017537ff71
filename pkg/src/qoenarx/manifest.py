"""Dataset manifest: a single JSON document listing sessions (trace CSV paths
per channel, optional subjective trace) and optional raw-video extraction
entries. Paths are relative to the manifest file's directory."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import DataValidationError, IoError
from .io import read_trace_csv
from .traces import SessionTrace, align_session

MANIFEST_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class SessionEntry:
    id: str
    source_content: str
    subjective: str | None
    channels: tuple[tuple[str, str], ...]  # (channel name, trace path)

    @property
    def channel_names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.channels)


@dataclass(frozen=True)
class VideoEntry:
    """Raw planar Y-only 8-bit video pair to extract frame metrics from."""

    id: str
    reference: str
    distorted: str
    width: int
    height: int
    fps: float
    metrics: tuple[str, ...]


@dataclass(frozen=True)
class Manifest:
    dataset: str
    target_dt: float
    sessions: tuple[SessionEntry, ...]
    videos: tuple[VideoEntry, ...] = ()

    def __post_init__(self):
        ids = [s.id for s in self.sessions]
        if len(set(ids)) != len(ids):
            raise DataValidationError("session ids must be unique")
        if self.sessions:
            names = set(self.sessions[0].channel_names)
            for s in self.sessions[1:]:
                if set(s.channel_names) != names:
                    raise DataValidationError(
                        f"session {s.id!r} lists channels "
                        f"{sorted(s.channel_names)}, expected {sorted(names)}"
                    )
        vids = [v.id for v in self.videos]
        if len(set(vids)) != len(vids):
            raise DataValidationError("video ids must be unique")
        if not self.target_dt > 0:
            raise DataValidationError("target_dt must be > 0")


def save_manifest(manifest: Manifest, path: str | Path) -> None:
    doc = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "dataset": manifest.dataset,
        "target_dt": manifest.target_dt,
        "sessions": [
            {
                "id": s.id,
                "source_content": s.source_content,
                "subjective": s.subjective,
                "channels": {name: p for name, p in s.channels},
            }
            for s in manifest.sessions
        ],
        "videos": [
            {
                "id": v.id,
                "reference": v.reference,
                "distorted": v.distorted,
                "width": v.width,
                "height": v.height,
                "fps": v.fps,
                "metrics": list(v.metrics),
            }
            for v in manifest.videos
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_manifest(path: str | Path, check_files: bool = True) -> Manifest:
    path = Path(path)
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise IoError(f"cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise IoError(f"manifest {path} is not valid JSON: {exc}") from exc
    if doc.get("schema_version") != MANIFEST_SCHEMA_VERSION:
        raise IoError(
            f"manifest {path}: unsupported schema_version "
            f"{doc.get('schema_version')!r}"
        )
    try:
        sessions = tuple(
            SessionEntry(
                id=str(s["id"]),
                source_content=str(s["source_content"]),
                subjective=s.get("subjective"),
                channels=tuple((str(k), str(v)) for k, v in s["channels"].items()),
            )
            for s in doc.get("sessions", [])
        )
        videos = tuple(
            VideoEntry(
                id=str(v["id"]),
                reference=str(v["reference"]),
                distorted=str(v["distorted"]),
                width=int(v["width"]),
                height=int(v["height"]),
                fps=float(v["fps"]),
                metrics=tuple(str(m) for m in v["metrics"]),
            )
            for v in doc.get("videos", [])
        )
        manifest = Manifest(
            dataset=str(doc["dataset"]),
            target_dt=float(doc["target_dt"]),
            sessions=sessions,
            videos=videos,
        )
    except (KeyError, TypeError) as exc:
        raise IoError(f"manifest {path}: malformed entry: {exc}") from exc
    if check_files:
        root = path.parent
        missing = []
        for s in manifest.sessions:
            for _, rel in s.channels:
                if not (root / rel).is_file():
                    missing.append(rel)
            if s.subjective and not (root / s.subjective).is_file():
                missing.append(s.subjective)
        for v in manifest.videos:
            for rel in (v.reference, v.distorted):
                if not (root / rel).is_file():
                    missing.append(rel)
        if missing:
            raise DataValidationError(
                f"manifest {path}: missing referenced files: {sorted(set(missing))}"
            )
    return manifest


def load_sessions(manifest: Manifest, root: str | Path,
                  pooling: str = "mean") -> list[SessionTrace]:
    """Read every session's traces and align them onto the manifest grid."""
    root = Path(root)
    out = []
    for entry in manifest.sessions:
        channels = tuple(
            (name, read_trace_csv(root / rel)) for name, rel in entry.channels
        )
        subjective = (
            read_trace_csv(root / entry.subjective) if entry.subjective else None
        )
        raw = SessionTrace(
            id=entry.id,
            channels=channels,
            subjective=subjective,
            source_content=entry.source_content,
        )
        out.append(align_session(raw, manifest.target_dt, pooling))
    return out
