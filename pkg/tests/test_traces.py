"""Trace data model: alignment, normalization, content splitting."""

import numpy as np
import pytest

from qoenarx.errors import (
    ConstantChannel,
    DataValidationError,
    EmptyOverlap,
    Empty,
    MissingChannel,
    NonFinite,
    UnknownContent,
)
from qoenarx.traces import (
    SessionTrace,
    TimeSeries,
    align_session,
    fit_normalizer,
    split_by_content,
)

from conftest import make_series, make_session


class TestTimeSeries:
    def test_rejects_empty(self):
        with pytest.raises(Empty):
            TimeSeries(np.array([]), dt=1.0)

    def test_rejects_bad_dt(self):
        with pytest.raises(ValueError):
            TimeSeries(np.array([1.0]), dt=0.0)

    def test_values_immutable(self):
        ts = make_series([1.0, 2.0])
        with pytest.raises(ValueError):
            ts.values[0] = 5.0

    def test_times(self):
        ts = make_series([1.0, 2.0, 3.0], dt=0.5, t0=1.0)
        assert np.allclose(ts.times(), [1.0, 1.5, 2.0])


def session_of(values, dt=1.0, t0=0.0, subjective=None):
    return SessionTrace(
        id="s", channels=(("m", make_series(values, dt=dt, t0=t0)),),
        subjective=subjective, source_content="A",
    )


class TestAlignSession:
    def test_single_window_mean(self):
        # 30 samples at 1/30 s pooled into one 1 s window
        vals = np.random.default_rng(0).uniform(size=30)
        out = align_session(session_of(vals, dt=1 / 30), 1.0, "mean")
        got = out.channels[0][1]
        assert len(got) == 1
        assert got.values[0] == pytest.approx(vals.mean(), rel=1e-12)

    def test_constant_series_preserved(self):
        out = align_session(session_of([3.25] * 90, dt=1 / 30), 1.0, "mean")
        assert np.all(out.channels[0][1].values == 3.25)

    def test_two_window_means(self):
        # values 1..60 at 1/30 s -> [15.5, 45.5]
        out = align_session(session_of(np.arange(1.0, 61.0), dt=1 / 30), 1.0)
        assert out.channels[0][1].values.tolist() == [15.5, 45.5]

    def test_idempotent_bitwise(self):
        raw = session_of(np.random.default_rng(1).normal(size=95), dt=1 / 30)
        once = align_session(raw, 1.0, "mean")
        twice = align_session(once, 1.0, "mean")
        assert np.array_equal(once.channels[0][1].values,
                              twice.channels[0][1].values)
        assert twice.channels[0][1].t0 == once.channels[0][1].t0

    def test_min_and_last_pooling(self):
        vals = np.array([4.0, 1.0, 3.0, 9.0, 5.0, 7.0])
        out_min = align_session(session_of(vals, dt=0.5), 1.5, "min")
        out_last = align_session(session_of(vals, dt=0.5), 1.5, "last")
        assert out_min.channels[0][1].values.tolist() == [1.0, 5.0]
        assert out_last.channels[0][1].values.tolist() == [3.0, 7.0]

    def test_equal_lengths_and_grid_across_series(self):
        # channels sampled at different rates with offsets still align
        s = SessionTrace(
            id="s",
            channels=(
                ("a", make_series(np.arange(120.0), dt=1 / 30)),
                ("b", make_series(np.arange(40.0), dt=0.1, t0=0.35)),
            ),
            subjective=make_series(np.arange(9.0), dt=0.5, t0=0.1),
            source_content="A",
        )
        out = align_session(s, 1.0, "mean")
        lengths = {len(ts) for _, ts in out.channels}
        lengths.add(len(out.subjective))
        assert len(lengths) == 1
        grids = {(ts.dt, ts.t0) for _, ts in out.channels}
        grids.add((out.subjective.dt, out.subjective.t0))
        assert grids == {(1.0, out.subjective.t0)}

    def test_partial_windows_dropped(self):
        # 45 samples at 1/30 s cover 1.5 s: only one full window survives
        out = align_session(session_of(np.arange(45.0), dt=1 / 30), 1.0)
        assert len(out.channels[0][1]) == 1

    def test_empty_overlap(self):
        with pytest.raises(EmptyOverlap):
            align_session(session_of([1.0, 2.0], dt=0.25), 1.0)

    def test_target_finer_than_source_rejected(self):
        with pytest.raises(ValueError):
            align_session(session_of(np.arange(10.0), dt=1.0), 0.5)

    def test_non_finite_rejected(self):
        vals = np.arange(60.0)
        vals[7] = np.nan
        with pytest.raises(NonFinite):
            align_session(session_of(vals, dt=1 / 30), 1.0)


class TestNormalizer:
    def test_population_convention(self):
        s = session_of([0.0, 2.0], subjective=make_series([0.0, 2.0]))
        nz = fit_normalizer([s])
        assert nz.channel_mean[0] == 1.0
        assert nz.channel_std[0] == 1.0

    def test_duplicated_sessions_same_stats(self):
        # sample-weighted pooling: duplicating every sample leaves the
        # statistics unchanged (up to summation-order roundoff)
        s = make_session(length=30, seed=3)
        one = fit_normalizer([s])
        two = fit_normalizer([s, s])
        assert np.allclose(one.channel_mean, two.channel_mean, rtol=1e-12)
        assert np.allclose(one.channel_std, two.channel_std, rtol=1e-12)
        assert two.output_mean == pytest.approx(one.output_mean, rel=1e-12)
        assert two.output_std == pytest.approx(one.output_std, rel=1e-12)

    def test_output_stats_match_identical_channel(self):
        vals = make_series([1.0, 4.0, 2.0, 5.0])
        s = SessionTrace(id="s", channels=(("m", vals),), subjective=vals,
                         source_content="A")
        nz = fit_normalizer([s])
        assert nz.output_mean == nz.channel_mean[0]
        assert nz.output_std == nz.channel_std[0]

    def test_constant_channel_rejected(self):
        s = session_of([5.0, 5.0, 5.0], subjective=make_series([1.0, 2.0, 3.0]))
        with pytest.raises(ConstantChannel):
            fit_normalizer([s])

    def test_missing_channel_rejected(self):
        a = make_session(sid="a", n_channels=2)
        b = make_session(sid="b", n_channels=1)
        with pytest.raises(MissingChannel):
            fit_normalizer([a, b])

    def test_roundtrip_identity(self, rng):
        sessions = [make_session(sid=f"s{i}", seed=i, n_channels=2)
                    for i in range(3)]
        nz = fit_normalizer(sessions)
        u = rng.normal(size=(50, 2)) * 7 + 3
        back = nz.denormalize_inputs(nz.normalize_inputs(u))
        assert np.allclose(back, u, rtol=1e-12, atol=0)
        y = rng.normal(size=50) * 4 - 2
        assert np.allclose(nz.denormalize_output(nz.normalize_output(y)), y,
                           rtol=1e-12, atol=1e-14)
        assert np.allclose(nz.normalize_output(nz.denormalize_output(y)), y,
                           rtol=1e-12, atol=1e-14)

    def test_empty_train_rejected(self):
        with pytest.raises(Empty):
            fit_normalizer([])


class TestSplitByContent:
    def make_dataset(self):
        return [
            make_session(sid=f"{c}{i}", content=c, seed=hash((c, i)) % 1000)
            for c in "ABC"
            for i in range(5)
        ]

    def test_ten_five_split(self):
        train, test = split_by_content(self.make_dataset(), {"C"})
        assert len(train) == 10
        assert len(test) == 5
        assert all(s.source_content == "C" for s in test)

    def test_all_contents_rejected(self):
        with pytest.raises(DataValidationError):
            split_by_content(self.make_dataset(), {"A", "B", "C"})

    def test_unknown_content(self):
        with pytest.raises(UnknownContent):
            split_by_content([make_session(content="A")], {"B"})

    def test_partition(self):
        data = self.make_dataset()
        train, test = split_by_content(data, {"A", "B"})
        assert len(train) + len(test) == len(data)
        assert {s.id for s in train}.isdisjoint({s.id for s in test})
