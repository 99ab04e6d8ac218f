import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from inklab import dynamics
from inklab.dynamics import (
    EMD_MAX_IMFS,
    Scaler,
    SummaryStats,
    assemble_dynamic_vector,
    emd,
    imf_energy,
    kinematics,
    pressure_features,
    renyi_entropy,
    schema,
    shannon_entropy,
    snr,
    spatio_temporal,
    summarize,
    zero_crossing_rate,
    zscore_apply,
    zscore_fit,
)
from inklab.errors import (
    DataError,
    EmptyVector,
    InsufficientSamples,
    NoOnSurfaceStrokes,
)
from inklab.fixtures import HC_PARAMS, synth_trajectory
from inklab.ingest import StrokeKind, Trajectory, segment_strokes


def float_traj(x, y, button=None, pressure=None, rate=200.0):
    n = len(x)
    return Trajectory(
        x=np.asarray(x, dtype=np.float64),
        y=np.asarray(y, dtype=np.float64),
        t=np.arange(n, dtype=np.int64),
        button=np.asarray(button if button is not None else np.ones(n), dtype=np.int64),
        azimuth=np.zeros(n, dtype=np.int64),
        altitude=np.zeros(n, dtype=np.int64),
        pressure=np.asarray(pressure if pressure is not None else np.zeros(n),
                            dtype=np.float64),
        sample_rate_hz=rate,
    )


class TestKinematics:
    def test_three_four_five_velocity(self):
        # consecutive samples step by (3, 4) per unit time -> speed 5
        traj = float_traj([0, 3, 6, 9], [0, 4, 8, 12], rate=1.0)
        kin = kinematics(traj, segment_strokes(traj), StrokeKind.ON_SURFACE)
        assert kin["velocity_resultant"].values[0] == pytest.approx(5.0)
        assert np.allclose(kin["velocity_resultant"].values, 5.0)

    def test_constant_position_all_zero(self):
        traj = float_traj([7] * 20, [3] * 20)
        kin = kinematics(traj, segment_strokes(traj), StrokeKind.ON_SURFACE)
        for key in ("velocity_resultant", "acceleration_resultant", "jerk_resultant"):
            assert np.allclose(kin[key].values, 0.0)

    def test_sinusoid_matches_analytic_derivative(self):
        t = np.arange(200) / 200.0
        traj = float_traj(np.sin(2 * np.pi * t), np.zeros(200))
        kin = kinematics(traj, segment_strokes(traj), StrokeKind.ON_SURFACE)
        expected = 2 * np.pi * np.cos(2 * np.pi * t)
        err = np.abs(kin["velocity_horizontal"].values - expected).max()
        assert err <= 1e-3

    def test_no_differencing_across_strokes(self):
        # a huge positional jump between two strokes must not leak into velocity
        x = np.concatenate([np.linspace(0, 1, 50), np.linspace(100, 101, 50)])
        button = np.array([1] * 50 + [0] * 0 + [1] * 50)
        traj = float_traj(x, np.zeros(100), button=button)
        # force two separate strokes via an in-air sample in the middle
        button2 = button.copy()
        button2[50] = 0
        traj2 = float_traj(x, np.zeros(100), button=button2)
        kin = kinematics(traj2, segment_strokes(traj2), StrokeKind.ON_SURFACE)
        v = kin["velocity_horizontal"].values
        assert np.abs(v).max() < 50  # jump would be ~2e4 units/s

    def test_insufficient_samples(self):
        traj = float_traj([0, 1, 2], [0, 0, 0], button=[1, 1, 0])
        with pytest.raises(InsufficientSamples):
            kinematics(traj, segment_strokes(traj), StrokeKind.IN_AIR)


class TestSpatioTemporal:
    def test_on_surface_time_interval_counting(self):
        traj = float_traj(np.arange(10), np.zeros(10))
        feats = spatio_temporal(traj, segment_strokes(traj))
        assert feats["time_on_surface"] == pytest.approx(0.045)

    def test_stroke_counts(self):
        traj = float_traj(np.arange(6), np.zeros(6), button=[1, 1, 0, 0, 1, 1])
        feats = spatio_temporal(traj, segment_strokes(traj))
        assert feats["stroke_count_on_surface"] == 2.0
        assert feats["stroke_count_in_air"] == 1.0

    def test_square_path_speed(self):
        # side 1 at constant speed 2: 100 intervals of 0.01 per side
        step = np.linspace(0, 1, 101)
        x = np.concatenate([step[:-1], np.ones(100), 1 - step[:-1], np.zeros(101)])
        y = np.concatenate([np.zeros(100), step[:-1], np.ones(100), 1 - step])
        traj = float_traj(x, y)
        feats = spatio_temporal(traj, segment_strokes(traj))
        assert feats["speed_on_surface"] == pytest.approx(2.0, abs=1e-9)

    def test_no_on_surface_strokes(self):
        traj = float_traj([0, 1], [0, 0], button=[0, 0])
        with pytest.raises(NoOnSurfaceStrokes):
            spatio_temporal(traj, segment_strokes(traj))


class TestPressure:
    def test_constant_pressure(self):
        traj = float_traj(np.arange(10), np.zeros(10), pressure=[512] * 10)
        feats = pressure_features(traj, segment_strokes(traj))
        assert feats["pressure"].mean() == 512
        assert feats["pressure"].std() == 0
        assert np.allclose(feats["pressure_rate"], 0.0)

    def test_linear_ramp_constant_rate(self):
        traj = float_traj(np.arange(10), np.zeros(10),
                          pressure=np.arange(10) * 3.0, rate=1.0)
        feats = pressure_features(traj, segment_strokes(traj))
        assert np.allclose(feats["pressure_rate"], 3.0)

    def test_random_series_stats_match_recomputation(self):
        rng = np.random.default_rng(8)
        p = rng.integers(100, 900, size=50).astype(float)
        traj = float_traj(np.arange(50), np.zeros(50), pressure=p)
        feats = pressure_features(traj, segment_strokes(traj))
        stats = summarize(feats["pressure"])
        assert stats.mean == pytest.approx(p.mean())
        assert stats.median == pytest.approx(np.median(p))
        assert stats.std == pytest.approx(p.std())
        assert stats.p01 == pytest.approx(np.percentile(p, 1))
        assert stats.p99 == pytest.approx(np.percentile(p, 99))


class TestEntropy:
    def test_uniform_fill_gives_log_k(self):
        for k in (2, 4, 8):
            series = np.arange(k, dtype=float)
            assert shannon_entropy(series, n_bins=k) == pytest.approx(np.log(k))

    def test_identical_samples_zero(self):
        assert shannon_entropy([5.0] * 30) == 0.0
        assert renyi_entropy([5.0] * 30) == 0.0

    def test_renyi_limits_to_shannon(self):
        rng = np.random.default_rng(4)
        series = rng.normal(size=500)
        h_sh = shannon_entropy(series)
        h_re = renyi_entropy(series, alpha=1.0001)
        assert abs(h_re - h_sh) < 1e-3

    def test_parameter_validation(self):
        with pytest.raises(DataError):
            renyi_entropy([1, 2, 3], alpha=1.0)
        with pytest.raises(DataError):
            renyi_entropy([1, 2, 3], alpha=-2.0)
        with pytest.raises(DataError):
            shannon_entropy([1, 2, 3], n_bins=1)
        with pytest.raises(EmptyVector):
            shannon_entropy([])

    @settings(max_examples=50)
    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=200),
           st.integers(2, 32))
    def test_nonnegative(self, series, bins):
        assert shannon_entropy(series, n_bins=bins) >= 0.0
        assert renyi_entropy(series, alpha=2.0, n_bins=bins) >= 0.0
        assert renyi_entropy(series, alpha=0.5, n_bins=bins) >= 0.0


class TestSnr:
    def test_constant_series_capped(self):
        assert snr(np.full(50, 3.3)) == 120.0

    def test_insufficient(self):
        with pytest.raises(InsufficientSamples):
            snr(np.arange(5))

    def test_ramp_raises_snr_of_noise(self):
        rng = np.random.default_rng(0)
        noise = rng.normal(size=400)
        with_ramp = noise + np.linspace(0, 40, 400)
        assert snr(with_ramp) > snr(noise)
        assert snr(noise) < 3.0  # white noise sits near/below 0 dB

    def test_monotone_in_noise_amplitude(self):
        rng = np.random.default_rng(1)
        t = np.arange(400) / 200.0
        clean = np.sin(2 * np.pi * 1.5 * t)
        noise = rng.normal(size=400)
        assert snr(clean + 0.05 * noise) > snr(clean + 0.5 * noise)


class TestEmd:
    def test_monotone_ramp_no_imfs(self):
        series = np.linspace(0, 5, 40)
        out = emd(series)
        assert out.imfs == []
        np.testing.assert_array_equal(out.residual, series)

    def test_reconstruction_identity(self):
        rng = np.random.default_rng(11)
        series = np.cumsum(rng.normal(size=300))
        out = emd(series)
        assert len(out.imfs) >= 1
        recon = np.sum(out.imfs, axis=0) + out.residual
        assert np.abs(recon - series).max() <= 1e-8

    def test_two_tone_first_imf_near_20hz(self):
        t = np.arange(800) / 200.0
        series = np.sin(2 * np.pi * 2 * t) + np.sin(2 * np.pi * 20 * t)
        out = emd(series)
        freq = zero_crossing_rate(out.imfs[0], dt=1 / 200.0)
        assert abs(freq - 20.0) <= 4.0  # within 20%

    def test_insufficient(self):
        with pytest.raises(InsufficientSamples):
            emd(np.arange(10))

    def test_energy(self):
        assert imf_energy(np.array([1.0, -1.0, 1.0])) == pytest.approx(1.0)


class TestSummarize:
    def test_frozen_1_to_100(self):
        stats = summarize(np.arange(1, 101, dtype=float))
        assert stats.mean == pytest.approx(50.5)
        assert stats.median == pytest.approx(50.5)
        assert stats.p01 == pytest.approx(1.99)
        assert stats.p99 == pytest.approx(99.01)
        assert stats.range_robust == pytest.approx(97.02)

    def test_single_element_collapses(self):
        stats = summarize([7.0])
        assert (stats.mean, stats.median, stats.p01, stats.p99) == (7, 7, 7, 7)
        assert stats.std == 0.0 and stats.range_robust == 0.0

    def test_symmetric_mean_equals_median(self):
        stats = summarize([-3, -1, 0, 1, 3])
        assert stats.mean == stats.median == 0.0

    def test_empty_rejected(self):
        with pytest.raises(EmptyVector):
            summarize([])

    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=100))
    def test_percentile_ordering(self, values):
        stats = summarize(values)
        assert stats.p01 <= stats.median <= stats.p99
        assert stats.range_robust >= 0


class TestZscore:
    def test_two_point_column(self):
        scaler = zscore_fit(np.array([[2.0], [4.0]]))
        assert scaler.mean[0] == 3.0 and scaler.std[0] == 1.0
        out = zscore_apply(scaler, np.array([[2.0], [4.0]]))
        assert out.ravel().tolist() == [-1.0, 1.0]

    def test_constant_column_zeroed(self):
        X = np.array([[5.0, 1.0], [5.0, 3.0]])
        out = zscore_apply(zscore_fit(X), X)
        assert np.all(out[:, 0] == 0.0)

    def test_train_columns_standardized(self):
        rng = np.random.default_rng(2)
        X = rng.normal(3, 7, size=(40, 6))
        out = zscore_apply(zscore_fit(X), X)
        assert np.abs(out.mean(axis=0)).max() < 1e-9
        assert np.abs(out.std(axis=0) - 1).max() < 1e-9

    def test_masked_cells_map_to_zero(self):
        X = np.array([[1.0, 10.0], [3.0, 0.0], [5.0, 30.0]])
        mask = np.array([[True, True], [True, False], [True, True]])
        scaler = zscore_fit(X, mask)
        assert scaler.mean[1] == pytest.approx(20.0)  # imputed cell excluded
        out = zscore_apply(scaler, X, mask)
        assert out[1, 1] == 0.0

    def test_json_roundtrip(self):
        scaler = zscore_fit(np.array([[2.0, 1.0], [4.0, 1.0]]))
        again = Scaler.from_json(scaler.to_json())
        np.testing.assert_array_equal(scaler.mean, again.mean)
        np.testing.assert_array_equal(scaler.std, again.std)


class TestAssemble:
    def test_schema_stable_across_subjects(self):
        va, ma = assemble_dynamic_vector(synth_trajectory(HC_PARAMS, 1, 5))
        vb, mb = assemble_dynamic_vector(synth_trajectory(HC_PARAMS, 2, 5))
        assert va.dim_names == vb.dim_names
        assert len(va) == len(schema()) == dynamics.schema_size()
        assert va.modality == "dynamic"
        assert not np.array_equal(va.values, vb.values)

    def test_no_in_air_features_masked(self):
        traj = float_traj(np.sin(np.arange(100) / 5), np.cos(np.arange(100) / 7))
        vec, mask = assemble_dynamic_vector(traj)
        names = schema()
        idx = names.index("in_air_velocity_resultant_mean")
        assert not mask[idx] and vec.values[idx] == 0.0
        idx_on = names.index("on_surface_velocity_resultant_mean")
        assert mask[idx_on]

    def test_compositional_recheck(self):
        traj = synth_trajectory(HC_PARAMS, 3, 4)
        vec, mask = assemble_dynamic_vector(traj)
        names = schema()
        from inklab.ingest import normalize_coords

        norm = normalize_coords(traj)
        strokes = segment_strokes(norm)
        st_feats = spatio_temporal(norm, strokes)
        assert vec.values[names.index("time_on_surface")] == pytest.approx(
            st_feats["time_on_surface"])
        assert vec.values[names.index("snr_x")] == pytest.approx(
            snr(np.asarray(norm.x, dtype=float)))
        assert vec.values[names.index("shannon_y")] == pytest.approx(
            shannon_entropy(np.asarray(norm.y, dtype=float)))
        kin = kinematics(norm, strokes, StrokeKind.ON_SURFACE)
        assert vec.values[names.index("on_surface_velocity_resultant_mean")] == \
            pytest.approx(kin["velocity_resultant"].values.mean())

    def test_time_shift_invariance(self):
        traj = synth_trajectory(HC_PARAMS, 9, 2)
        shifted = Trajectory(
            x=traj.x, y=traj.y, t=traj.t + 1000, button=traj.button,
            azimuth=traj.azimuth, altitude=traj.altitude, pressure=traj.pressure,
            sample_rate_hz=traj.sample_rate_hz)
        va, _ = assemble_dynamic_vector(traj)
        vb, _ = assemble_dynamic_vector(shifted)
        np.testing.assert_array_equal(va.values, vb.values)

    def test_translation_invariance(self):
        traj = synth_trajectory(HC_PARAMS, 10, 3)
        moved = Trajectory(
            x=traj.x + 5000, y=traj.y - 1200, t=traj.t, button=traj.button,
            azimuth=traj.azimuth, altitude=traj.altitude, pressure=traj.pressure,
            sample_rate_hz=traj.sample_rate_hz)
        va, _ = assemble_dynamic_vector(traj)
        vb, _ = assemble_dynamic_vector(moved)
        np.testing.assert_allclose(va.values, vb.values, atol=1e-9)

    def test_determinism(self):
        traj = synth_trajectory(HC_PARAMS, 12, 6)
        va, ma = assemble_dynamic_vector(traj)
        vb, mb = assemble_dynamic_vector(traj)
        np.testing.assert_array_equal(va.values, vb.values)
        np.testing.assert_array_equal(ma, mb)

    def test_describe_schema_lists_all(self):
        doc = dynamics.describe_schema()
        assert len(doc.strip().splitlines()) == dynamics.schema_size() + 1
        assert "snr_x" in doc
