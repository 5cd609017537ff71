"""Synthetic benchmark generator.

Exogenous channels imitate bitrate-ladder quality traces: piecewise-constant
levels with smoothed switches plus per-channel observation noise. The
subjective output is produced by rolling a randomly initialized NARX teacher
in closed loop over those channels, so a trained model of the same
architecture can realize the target exactly; the teacher is saved next to
the data for self-consistency tests.

Channel values are quantized to the trace-CSV 9-significant-digit
representation *before* the teacher rollout, and the teacher's output layer
is scaled into (-1, 1), so regenerating the rollout from the stored CSVs
reproduces the stored subjective trace to well under 1e-9.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .io import quantize9, write_trace_csv
from .manifest import Manifest, SessionEntry, save_manifest
from .narx import (
    NarxConfig,
    NarxModel,
    NarxWeights,
    forward_closed_loop,
    init_weights,
    save_model,
)
from .traces import Normalizer, SessionTrace, TimeSeries

# Teacher shaping: the output layer is rescaled so |y| < 1 (keeps the 9-digit
# CSV quantization error below 1e-9 absolute).
OUTPUT_GAIN = 1.8
BIAS_GAIN = 0.1

TEACHER_FILE = "teacher.json"


@dataclass(frozen=True)
class SynthSpec:
    """Benchmark shape: 3 contents x 5 sessions of 300 s by default."""

    n_contents: int = 3
    sessions_per_content: int = 5
    length_s: float = 300.0
    target_dt: float = 1.0
    teacher: NarxConfig = field(
        default_factory=lambda: NarxConfig(n_channels=3, d_u=2, d_y=2, hidden=4)
    )
    teacher_seed: int = 7
    # damping applied to the teacher's feedback weights; < 1 keeps the rollout
    # stable, values near 1 give strong memory so closed-loop evaluation
    # visibly accumulates error
    teacher_feedback_scale: float = 0.5
    levels: tuple[float, ...] = (0.2, 0.8, 1.4, 2.0, 2.6)
    switch_rate: float = 0.05  # expected level switches per second
    channel_noise_std: float = 0.0
    noise_std: float = 0.0
    # AR(1) coefficient of the subjective noise (0 = white). Correlated noise
    # imitates viewer-memory effects: visible to ground-truth feedback taps,
    # invisible to a closed-loop rollout.
    noise_ar: float = 0.0
    seed: int = 0
    dataset: str = "synth"

    def __post_init__(self):
        if self.n_contents < 1 or self.sessions_per_content < 1:
            raise ValueError("need at least one content and one session per content")
        if len(self.levels) < 2:
            raise ValueError("need at least two quality levels")
        if not 0 < self.switch_rate * self.target_dt <= 1:
            raise ValueError("switch_rate * target_dt must be in (0, 1]")
        if not 0 <= self.teacher_feedback_scale <= 1:
            raise ValueError("teacher_feedback_scale must be in [0, 1]")
        if not 0 <= self.noise_ar < 1:
            raise ValueError("noise_ar must be in [0, 1)")
        if self.n_samples <= self.teacher.t_min + 50:
            raise ValueError(
                f"length_s={self.length_s} gives {self.n_samples} samples; need "
                f"more than max teacher lag + 50 = {self.teacher.t_min + 50}"
            )

    @property
    def n_samples(self) -> int:
        return int(round(self.length_s / self.target_dt))

    @property
    def channel_names(self) -> tuple[str, ...]:
        return tuple(f"ch{i}" for i in range(self.teacher.n_channels))


def make_teacher(spec: SynthSpec) -> NarxModel:
    """Deterministic teacher: random init, damped feedback, bounded output."""
    raw = init_weights(spec.teacher, spec.teacher_seed)
    w1 = raw.W1.copy()
    w1[:, spec.teacher.feedback_slice()] *= spec.teacher_feedback_scale
    weights = NarxWeights(
        W1=w1,
        b1=raw.b1,
        W2=raw.W2 * (OUTPUT_GAIN / spec.teacher.hidden),
        b2=raw.b2 * BIAS_GAIN,
    )
    return NarxModel(
        config=spec.teacher,
        weights=weights,
        normalizer=Normalizer.identity(spec.channel_names),
        channel_names=spec.channel_names,
    )


def _latent_quality(rng: np.random.Generator, spec: SynthSpec) -> np.ndarray:
    """Piecewise-constant level sequence with 3-tap smoothed transitions."""
    n = spec.n_samples
    p_switch = spec.switch_rate * spec.target_dt
    levels = np.asarray(spec.levels)
    out = np.empty(n)
    pos = 0
    while pos < n:
        run = int(rng.geometric(p_switch))
        level = levels[rng.integers(len(levels))]
        out[pos : pos + run] = level
        pos += run
    padded = np.concatenate([out[:1], out, out[-1:]])
    return 0.25 * padded[:-2] + 0.5 * padded[1:-1] + 0.25 * padded[2:]


def _session_rng(spec: SynthSpec, content_idx: int, session_idx: int
                 ) -> np.random.Generator:
    return np.random.default_rng([spec.seed, content_idx, session_idx])


def _subjective_noise(rng: np.random.Generator, spec: SynthSpec, n: int
                      ) -> np.ndarray:
    """Measurement noise on the subjective trace with stationary standard
    deviation noise_std; AR(1)-correlated when noise_ar > 0."""
    w = rng.standard_normal(n)
    if spec.noise_ar == 0.0:
        return spec.noise_std * w
    rho = spec.noise_ar
    e = np.empty(n)
    e[0] = w[0]
    for t in range(1, n):
        e[t] = rho * e[t - 1] + np.sqrt(1.0 - rho * rho) * w[t]
    return spec.noise_std * e


def generate_session(spec: SynthSpec, teacher: NarxModel, content_idx: int,
                     session_idx: int) -> SessionTrace:
    """One synthetic session with CSV-quantized channel and subjective values.

    The teacher responds to the latent quality signal; the stored channels are
    per-channel noisy views of that latent, so with channel_noise_std = 0 the
    stored channels are exactly what drove the teacher (self-consistency
    oracle), and with noise > 0 the channels carry complementary errors.
    """
    rng = _session_rng(spec, content_idx, session_idx)
    n = spec.n_samples
    latent = quantize9(_latent_quality(rng, spec))
    sid = f"c{content_idx}s{session_idx}"
    content = f"content{content_idx}"
    latent_ts = TimeSeries(latent, dt=spec.target_dt)
    teacher_view = SessionTrace(
        id=sid,
        channels=tuple((name, latent_ts) for name in spec.channel_names),
        subjective=None,
        source_content=content,
    )
    warmup = TimeSeries(np.zeros(teacher.config.t_min), dt=spec.target_dt)
    rolled = forward_closed_loop(teacher, teacher_view, warmup=warmup)
    y = rolled.values.values + _subjective_noise(rng, spec, n)
    channels = tuple(
        (name, TimeSeries(
            quantize9(latent + spec.channel_noise_std * rng.standard_normal(n)),
            dt=spec.target_dt,
        ))
        for name in spec.channel_names
    )
    return SessionTrace(
        id=sid,
        channels=channels,
        subjective=TimeSeries(quantize9(y), dt=spec.target_dt),
        source_content=content,
    )


def generate_sessions(spec: SynthSpec) -> list[SessionTrace]:
    teacher = make_teacher(spec)
    return [
        generate_session(spec, teacher, c, s)
        for c in range(spec.n_contents)
        for s in range(spec.sessions_per_content)
    ]


def synth_generate(spec: SynthSpec, out_dir: str | Path) -> Manifest:
    """Write trace CSVs, a manifest, and the teacher model into out_dir."""
    out = Path(out_dir)
    traces = out / "traces"
    traces.mkdir(parents=True, exist_ok=True)
    teacher = make_teacher(spec)
    save_model(teacher, out / TEACHER_FILE)

    entries = []
    for session in generate_sessions(spec):
        chans = []
        for name, ts in session.channels:
            rel = f"traces/{session.id}.{name}.csv"
            write_trace_csv(out / rel, ts)
            chans.append((name, rel))
        subj_rel = f"traces/{session.id}.subjective.csv"
        write_trace_csv(out / subj_rel, session.subjective)
        entries.append(SessionEntry(
            id=session.id,
            source_content=session.source_content,
            subjective=subj_rel,
            channels=tuple(chans),
        ))
    manifest = Manifest(
        dataset=spec.dataset,
        target_dt=spec.target_dt,
        sessions=tuple(entries),
        videos=(),
    )
    save_manifest(manifest, out / "manifest.json")
    return manifest
