"""Synthetic generator: determinism, shape, and the teacher oracle."""

import numpy as np
import pytest

from qoenarx.manifest import load_manifest, load_sessions
from qoenarx.metrics import rmse
from qoenarx.narx import NarxConfig, forward_closed_loop, load_model
from qoenarx.synth import (
    SynthSpec,
    TEACHER_FILE,
    generate_sessions,
    make_teacher,
    synth_generate,
)


def small_spec(**kwargs):
    defaults = dict(
        n_contents=2, sessions_per_content=2, length_s=80.0,
        teacher=NarxConfig(n_channels=2, d_u=2, d_y=2, hidden=4),
        teacher_seed=7, seed=21,
    )
    defaults.update(kwargs)
    return SynthSpec(**defaults)


def test_default_shape():
    sessions = generate_sessions(SynthSpec())
    assert len(sessions) == 15
    assert len({s.source_content for s in sessions}) == 3


def test_regeneration_is_bitwise_identical(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    spec = small_spec(noise_std=0.0)
    synth_generate(spec, a)
    synth_generate(spec, b)
    files_a = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    assert files_a == files_b
    for rel in files_a:
        assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel


def test_teacher_self_consistency_through_csv(tmp_path):
    # noise-free: rolling the stored teacher over the stored channels must
    # reproduce the stored subjective trace
    from qoenarx.metrics import evaluate

    spec = small_spec(noise_std=0.0)
    synth_generate(spec, tmp_path)
    manifest = load_manifest(tmp_path / "manifest.json")
    sessions = load_sessions(manifest, tmp_path)
    teacher = load_model(tmp_path / TEACHER_FILE)
    for s in sessions:
        fc = forward_closed_loop(teacher, s)
        result = evaluate(fc, s, delta=0.01)
        assert result.rmse <= 1e-9
        assert result.outage_rate == 0.0
        lo = fc.warmup_len
        assert rmse(fc.values.values[lo:], s.subjective.values[lo:]) == result.rmse


def test_teacher_output_bounded():
    teacher = make_teacher(small_spec())
    sessions = generate_sessions(small_spec(noise_std=0.0))
    for s in sessions:
        assert np.max(np.abs(s.subjective.values)) < 1.0
    assert teacher.config.t_min == 2


def test_noise_changes_subjective_only():
    clean = generate_sessions(small_spec(noise_std=0.0))
    noisy = generate_sessions(small_spec(noise_std=0.05))
    for a, b in zip(clean, noisy):
        for (_, ta), (_, tb) in zip(a.channels, b.channels):
            assert np.array_equal(ta.values, tb.values)
        assert not np.array_equal(a.subjective.values, b.subjective.values)


def test_ar_noise_has_requested_scale():
    spec = small_spec(noise_std=0.05, noise_ar=0.9, length_s=3000.0)
    sessions = generate_sessions(spec)
    clean = generate_sessions(small_spec(noise_std=0.0, length_s=3000.0))
    resid = sessions[0].subjective.values - clean[0].subjective.values
    assert np.std(resid) == pytest.approx(0.05, rel=0.25)


def test_manifest_loadable_and_aligned(tmp_path):
    synth_generate(small_spec(), tmp_path)
    sessions = load_sessions(load_manifest(tmp_path / "manifest.json"), tmp_path)
    assert len(sessions) == 4
    for s in sessions:
        s.require_aligned()
        assert len(s) == 80


def test_spec_validation():
    with pytest.raises(ValueError):
        small_spec(length_s=10.0)  # shorter than max lag + 50
    with pytest.raises(ValueError):
        small_spec(levels=(1.0,))
    with pytest.raises(ValueError):
        small_spec(noise_ar=1.0)
