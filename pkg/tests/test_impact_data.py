"""Synthetic impact generation, augmentation, labels, and dataset IO."""

import numpy as np
import numpy.testing as npt
import pytest

from drift_adapt import featurize, impact_data
from drift_adapt.errors import ConfigError, DataFormatError, DimensionError
from drift_adapt.impact_data import Dataset, DriftConfig, ImpactRecording, LabelField


def _flat_config(**kw) -> DriftConfig:
    """Collapsed parameter ranges and neutral drift knobs."""
    base = dict(
        pulse_duration_range=(0.05, 0.05),
        peak_ang_vel_range=(10.0, 10.0),
        peak_lin_acc_range=(80.0, 80.0),
        noise_std=0.0,
    )
    base.update(kw)
    return DriftConfig(**base)


class TestSynthImpacts:
    def test_deterministic_for_equal_seeds(self):
        a = impact_data.synth_impacts(DriftConfig(seed=7), 5)
        b = impact_data.synth_impacts(DriftConfig(seed=7), 5)
        for ra, rb in zip(a.recordings, b.recordings):
            assert ra.impact_id == rb.impact_id
            npt.assert_array_equal(ra.lin_acc, rb.lin_acc)
            npt.assert_array_equal(ra.ang_vel, rb.ang_vel)
        c = impact_data.synth_impacts(DriftConfig(seed=8), 5)
        assert not np.array_equal(a.recordings[0].lin_acc, c.recordings[0].lin_acc)

    def test_collapsed_ranges_hit_configured_peaks(self):
        ds = impact_data.synth_impacts(_flat_config(seed=3), 4)
        for rec in ds.recordings:
            peak_a = np.max(featurize.vector_magnitude(rec.lin_acc))
            peak_w = np.max(featurize.vector_magnitude(rec.ang_vel))
            npt.assert_allclose(peak_a, 80.0, rtol=1e-12)
            npt.assert_allclose(peak_w, 10.0, rtol=1e-12)

    def test_ids_and_sizes(self):
        ds = impact_data.synth_impacts(DriftConfig(seed=0), 3, domain_tag="lab")
        assert len(ds) == 3
        assert [r.impact_id for r in ds.recordings] == [
            "lab-00000", "lab-00001", "lab-00002",
        ]
        assert ds.domain_tag == "lab"
        n_samples = int(round(0.1 * 1000.0))
        for rec in ds.recordings:
            assert rec.t.shape == (n_samples,)
            assert rec.lin_acc.shape == (3, n_samples)
            assert rec.ang_vel.shape == (3, n_samples)

    def test_dc_offset_shifts_channel_mean(self):
        plain = impact_data.synth_impacts(_flat_config(seed=2), 1)
        shifted = impact_data.synth_impacts(
            _flat_config(seed=2, dc_offset=(0.5, 0.0, 0.0)), 1
        )
        delta = shifted.recordings[0].lin_acc - plain.recordings[0].lin_acc
        npt.assert_allclose(delta[0], 0.5 * 80.0, rtol=1e-12)
        npt.assert_allclose(delta[1:], 0.0, atol=1e-12)

    def test_invalid_sizes_rejected(self):
        with pytest.raises(ConfigError):
            impact_data.synth_impacts(DriftConfig(), 0)
        with pytest.raises(ConfigError):
            impact_data.synth_impacts(DriftConfig(duration=0.004), 2)

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            DriftConfig(noise_std=-0.1).validate()
        with pytest.raises(ConfigError):
            DriftConfig(channel_gain=(1.0, -1.0, 1.0)).validate()
        with pytest.raises(ConfigError):
            DriftConfig(pulse_duration_range=(0.08, 0.03)).validate()
        with pytest.raises(ConfigError):
            DriftConfig(frequency_shift=-100.0).validate()


class TestAugmentAxes:
    def test_sixfold_expansion_and_identity_member(self):
        ds = impact_data.synth_impacts(DriftConfig(seed=1), 3)
        ds = impact_data.label_dataset(ds, 8, seed=0)
        aug = impact_data.augment_axes(ds)
        assert len(aug) == 18
        for i, rec in enumerate(ds.recordings):
            group = aug.recordings[6 * i: 6 * (i + 1)]
            assert group[0] is rec
            for member in group[1:]:
                base, _, tag = member.impact_id.partition("|")
                assert base == rec.impact_id
                perm = ["xyz".index(c) for c in tag]
                assert sorted(perm) == [0, 1, 2] and perm != [0, 1, 2]
                npt.assert_array_equal(member.lin_acc, rec.lin_acc[perm, :])
                npt.assert_array_equal(member.ang_vel, rec.ang_vel[perm, :])

    def test_magnitude_channels_bit_identical(self):
        ds = impact_data.synth_impacts(DriftConfig(seed=5, noise_std=0.05), 2)
        aug = impact_data.augment_axes(ds)
        for i, rec in enumerate(ds.recordings):
            ref = featurize.derive_channels(rec)
            for member in aug.recordings[6 * i: 6 * (i + 1)]:
                ch = featurize.derive_channels(member)
                for q in featurize.QUANTITIES:
                    npt.assert_array_equal(
                        ch.series(f"{q}_mag"), ref.series(f"{q}_mag")
                    )

    def test_labels_copied_per_variant(self):
        ds = impact_data.synth_impacts(DriftConfig(seed=1), 2)
        ds = impact_data.label_dataset(ds, 4, seed=9)
        aug = impact_data.augment_axes(ds)
        assert aug.labels_mps.shape == (12, 4)
        for i in range(2):
            for j in range(6):
                npt.assert_array_equal(aug.labels_mps[6 * i + j], ds.labels_mps[i])
                npt.assert_array_equal(aug.labels_mpsr[6 * i + j], ds.labels_mpsr[i])


class TestSurrogateLabels:
    def _channels(self, rec):
        return featurize.derive_channels(rec)

    def test_zero_recording_maps_to_zero(self):
        t = np.arange(64) / 1000.0
        rec = ImpactRecording("z", t, np.zeros((3, 64)), np.zeros((3, 64)), 1000.0)
        mps, mpsr = impact_data.surrogate_labels(self._channels(rec), 16, seed=0)
        npt.assert_array_equal(mps, 0.0)
        npt.assert_array_equal(mpsr, 0.0)

    def test_deterministic_in_seed(self):
        ds = impact_data.synth_impacts(DriftConfig(seed=2), 1)
        ch = self._channels(ds.recordings[0])
        a = impact_data.surrogate_labels(ch, 12, seed=4)
        b = impact_data.surrogate_labels(ch, 12, seed=4)
        npt.assert_array_equal(a[0], b[0])
        npt.assert_array_equal(a[1], b[1])
        c = impact_data.surrogate_labels(ch, 12, seed=5)
        assert not np.array_equal(a[0], c[0])

    def test_amplitude_doubling_strictly_increases_labels(self):
        ds = impact_data.synth_impacts(DriftConfig(seed=11, noise_std=0.02), 100)
        for rec in ds.recordings:
            doubled = ImpactRecording(
                rec.impact_id, rec.t, 2.0 * rec.lin_acc, 2.0 * rec.ang_vel,
                rec.sample_rate,
            )
            lo = impact_data.surrogate_labels(self._channels(rec), 16, seed=0)
            hi = impact_data.surrogate_labels(self._channels(doubled), 16, seed=0)
            assert np.all(hi[0] > lo[0])
            assert np.all(hi[1] > lo[1])

    def test_values_bounded_by_caps(self):
        ds = impact_data.synth_impacts(DriftConfig(seed=6), 10)
        labeled = impact_data.label_dataset(ds, 32, seed=1)
        assert np.all(labeled.labels_mps >= 0.0)
        assert np.all(labeled.labels_mps < impact_data.MPS_CAP)
        assert np.all(labeled.labels_mpsr >= 0.0)
        assert np.all(labeled.labels_mpsr < impact_data.MPSR_CAP)

    def test_axis_permutation_leaves_labels_unchanged(self):
        ds = impact_data.synth_impacts(DriftConfig(seed=3, noise_std=0.05), 2)
        for rec in ds.recordings:
            ref = impact_data.surrogate_labels(self._channels(rec), 8, seed=2)
            perm = [2, 0, 1]
            swapped = ImpactRecording(
                rec.impact_id, rec.t, rec.lin_acc[perm, :], rec.ang_vel[perm, :],
                rec.sample_rate,
            )
            got = impact_data.surrogate_labels(self._channels(swapped), 8, seed=2)
            npt.assert_array_equal(got[0], ref[0])
            npt.assert_array_equal(got[1], ref[1])

    def test_label_dataset_shapes_and_fields(self):
        ds = impact_data.synth_impacts(DriftConfig(seed=0), 5)
        labeled = impact_data.label_dataset(ds, 24, seed=7)
        assert labeled.labels_mps.shape == (5, 24)
        assert labeled.labels_mpsr.shape == (5, 24)
        fields = labeled.label_fields("mpsr")
        assert len(fields) == 5
        assert all(f.kind == "mpsr" for f in fields)
        npt.assert_array_equal(fields[2].element_values, labeled.labels_mpsr[2])
        with pytest.raises(DataFormatError):
            ds.label_fields("mps")

    def test_label_field_validation(self):
        with pytest.raises(DataFormatError):
            LabelField(np.array([0.1, -0.2]), "mps")
        with pytest.raises(DataFormatError):
            LabelField(np.array([0.1]), "strain")
        with pytest.raises(DimensionError):
            LabelField(np.ones((2, 2)), "mps")

    def test_element_count_must_be_positive(self):
        ds = impact_data.synth_impacts(DriftConfig(seed=0), 1)
        ch = self._channels(ds.recordings[0])
        with pytest.raises(ConfigError):
            impact_data.surrogate_labels(ch, 0, seed=0)


class TestDatasetIO:
    def test_round_trip_exact(self, tmp_path):
        ds = impact_data.synth_impacts(DriftConfig(seed=9, noise_std=0.03), 3, "fld")
        ds = impact_data.label_dataset(ds, 6, seed=1)
        impact_data.save_dataset(ds, tmp_path / "d")
        back = impact_data.load_dataset(tmp_path / "d")
        assert back.domain_tag == "fld"
        assert len(back) == 3
        for orig, got in zip(ds.recordings, back.recordings):
            assert got.impact_id == orig.impact_id
            npt.assert_array_equal(got.t, orig.t)
            npt.assert_array_equal(got.lin_acc, orig.lin_acc)
            npt.assert_array_equal(got.ang_vel, orig.ang_vel)
            npt.assert_allclose(got.sample_rate, orig.sample_rate, rtol=1e-9)
        npt.assert_array_equal(back.labels_mps, ds.labels_mps)
        npt.assert_array_equal(back.labels_mpsr, ds.labels_mpsr)

    def test_missing_column_named_in_error(self, tmp_path):
        p = tmp_path / "r.csv"
        p.write_text("t,ax,ay,az,wx,wy\n0,1,1,1,1,1\n0.001,1,1,1,1,1\n")
        with pytest.raises(DataFormatError, match=r"missing columns \['wz'\]"):
            impact_data.load_recording(p)

    def test_decreasing_timestamps_rejected(self, tmp_path):
        p = tmp_path / "r.csv"
        p.write_text(
            "t,ax,ay,az,wx,wy,wz\n0,1,1,1,1,1,1\n0.002,1,1,1,1,1,1\n0.001,1,1,1,1,1,1\n"
        )
        with pytest.raises(DataFormatError, match="not strictly increasing"):
            impact_data.load_recording(p)

    def test_non_uniform_spacing_rejected(self, tmp_path):
        p = tmp_path / "r.csv"
        p.write_text(
            "t,ax,ay,az,wx,wy,wz\n0,1,1,1,1,1,1\n0.001,1,1,1,1,1,1\n0.005,1,1,1,1,1,1\n"
        )
        with pytest.raises(DataFormatError, match="uniformly spaced"):
            impact_data.load_recording(p)

    def test_short_and_ragged_and_nonfinite_rejected(self, tmp_path):
        one_row = tmp_path / "a.csv"
        one_row.write_text("t,ax,ay,az,wx,wy,wz\n0,1,1,1,1,1,1\n")
        with pytest.raises(DataFormatError, match="at least two samples"):
            impact_data.load_recording(one_row)
        ragged = tmp_path / "b.csv"
        ragged.write_text("t,ax,ay,az,wx,wy,wz\n0,1,1,1,1,1,1\n0.001,1,1\n")
        with pytest.raises(DataFormatError, match="too few fields"):
            impact_data.load_recording(ragged)
        bad = tmp_path / "c.csv"
        bad.write_text("t,ax,ay,az,wx,wy,wz\n0,1,1,1,1,1,1\n0.001,nan,1,1,1,1,1\n")
        with pytest.raises(DataFormatError, match="non-finite"):
            impact_data.load_recording(bad)

    def test_missing_file_rejected(self, tmp_path):
        with pytest.raises(DataFormatError, match="not found"):
            impact_data.load_recording(tmp_path / "nope.csv")

    def test_label_csv_requires_contiguous_ids(self, tmp_path):
        ds = impact_data.synth_impacts(DriftConfig(seed=0), 1)
        ds = impact_data.label_dataset(ds, 3, seed=0)
        impact_data.save_dataset(ds, tmp_path / "d")
        label = tmp_path / "d" / "labels" / "mps_00000.csv"
        lines = label.read_text().splitlines()
        lines[1] = lines[1].replace("0,", "5,", 1)
        label.write_text("\n".join(lines) + "\n")
        with pytest.raises(DataFormatError, match="element ids"):
            impact_data.load_dataset(tmp_path / "d")


class TestDeriveChannels:
    def test_constant_angular_velocity(self):
        t = np.arange(32) / 1000.0
        ang = np.zeros((3, 32))
        ang[0] = 1.0
        lin = np.zeros((3, 32))
        lin[0], lin[1] = 3.0, 4.0
        ch = featurize.derive_channels(ImpactRecording("c", t, lin, ang, 1000.0))
        npt.assert_allclose(ch.series("ang_acc_x"), 0.0, atol=1e-12)
        npt.assert_allclose(ch.series("ang_jerk_mag"), 0.0, atol=1e-12)
        npt.assert_allclose(ch.series("ang_vel_mag"), 1.0, rtol=1e-12)
        npt.assert_allclose(ch.series("lin_acc_mag"), 5.0, rtol=1e-12)

    def test_linear_ramp_derivative(self):
        t = np.arange(50) / 1000.0
        ang = np.zeros((3, 50))
        ang[0] = t
        ch = featurize.derive_channels(
            ImpactRecording("r", t, np.zeros((3, 50)), ang, 1000.0)
        )
        assert np.max(np.abs(ch.series("ang_acc_x") - 1.0)) < 1e-6
        assert np.max(np.abs(ch.series("ang_jerk_x"))) < 1e-6

    def test_axis_channels_are_linear_in_the_recording(self):
        g = np.random.default_rng(0)
        t = np.arange(40) / 1000.0
        a1, w1 = g.standard_normal((3, 40)), g.standard_normal((3, 40))
        a2, w2 = g.standard_normal((3, 40)), g.standard_normal((3, 40))
        ch1 = featurize.derive_channels(ImpactRecording("a", t, a1, w1, 1000.0))
        ch2 = featurize.derive_channels(ImpactRecording("b", t, a2, w2, 1000.0))
        both = featurize.derive_channels(
            ImpactRecording("ab", t, a1 + a2, w1 + w2, 1000.0)
        )
        for q in featurize.QUANTITIES:
            for axis in ("x", "y", "z"):
                name = f"{q}_{axis}"
                npt.assert_allclose(
                    both.series(name), ch1.series(name) + ch2.series(name),
                    atol=1e-9,
                )

    def test_shape_validation(self):
        t = np.arange(10) / 1000.0
        with pytest.raises(DimensionError):
            featurize.derive_channels(
                ImpactRecording("x", t, np.zeros((2, 10)), np.zeros((3, 10)), 1000.0)
            )
        with pytest.raises(DimensionError):
            featurize.derive_channels(
                ImpactRecording("x", t[:5], np.zeros((3, 10)), np.zeros((3, 10)), 1000.0)
            )
