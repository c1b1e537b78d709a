"""Tests for the synthetic study generator."""

import json
from pathlib import Path

import numpy as np
import pytest

from gazesense import synthgen as sg
from gazesense.errors import BadConfig
from gazesense.events import detect_events, read_events_csv
from gazesense.signals import load_manifest, load_study_trip


class TestEffectProfile:
    def test_no_effect_is_all_ones(self):
        p = sg.NO_EFFECT
        assert (p.fixation_duration_scale, p.saccade_rate_scale,
                p.saccade_amplitude_scale, p.jitter_scale,
                p.head_drift_scale) == (1.0, 1.0, 1.0, 1.0, 1.0)

    def test_positive_required(self):
        with pytest.raises(BadConfig):
            sg.EffectProfile(jitter_scale=0.0)
        with pytest.raises(BadConfig):
            sg.EffectProfile(head_drift_scale=-1.0)

    def test_direction_constraints(self):
        with pytest.raises(BadConfig):
            sg.EffectProfile(fixation_duration_scale=0.9)
        with pytest.raises(BadConfig):
            sg.EffectProfile(saccade_rate_scale=1.1)
        with pytest.raises(BadConfig):
            sg.EffectProfile(saccade_amplitude_scale=1.2)

    def test_block_profile_sets(self):
        for profiles in (sg.default_profiles(), sg.strong_profiles(),
                         sg.event_only_profiles()):
            assert set(profiles) == {"no_alcohol", "moderate", "severe"}
            assert profiles["no_alcohol"] == sg.NO_EFFECT
            assert (profiles["severe"].fixation_duration_scale
                    > profiles["moderate"].fixation_duration_scale > 1.0)

    def test_event_only_leaves_noise_untouched(self):
        for prof in sg.event_only_profiles().values():
            assert prof.jitter_scale == 1.0
            assert prof.head_drift_scale == 1.0


class TestInterpolateProfile:
    def test_endpoints(self):
        assert sg.interpolate_profile(0.0) == sg.NO_EFFECT
        ref = sg.strong_profiles()["severe"]
        assert sg.interpolate_profile(0.062, ref, 0.062) == ref

    def test_midpoint(self):
        ref = sg.EffectProfile(fixation_duration_scale=1.5,
                               saccade_rate_scale=0.7)
        mid = sg.interpolate_profile(0.031, ref, 0.062)
        assert mid.fixation_duration_scale == pytest.approx(1.25)
        assert mid.saccade_rate_scale == pytest.approx(0.85)

    def test_bad_inputs(self):
        with pytest.raises(BadConfig):
            sg.interpolate_profile(-0.01)
        with pytest.raises(BadConfig):
            sg.interpolate_profile(0.03, reference_bac=0.0)


class TestSynthConfig:
    def test_defaults_valid(self):
        cfg = sg.SynthConfig()
        assert cfg.n_participants == 10
        assert cfg.trips_per_block == 3

    def test_validation(self):
        with pytest.raises(BadConfig):
            sg.SynthConfig(n_participants=0)
        with pytest.raises(BadConfig):
            sg.SynthConfig(trips_per_block=0)
        with pytest.raises(BadConfig):
            sg.SynthConfig(duration_s=60.0)
        with pytest.raises(BadConfig):
            sg.SynthConfig(sample_rate_hz=0.0)
        with pytest.raises(BadConfig):
            sg.SynthConfig(trait_spread=1.0)


class TestGenerateTrip:
    def test_grid_and_validity(self):
        trip, _ = sg.generate_trip(sg.NO_EFFECT, 120.0, 3)
        assert trip.n_samples == 120 * 60 + 1
        np.testing.assert_allclose(np.diff(trip.t_s), 1.0 / 60.0, rtol=1e-9)
        assert trip.t_s[0] == 0.0
        assert bool(np.all(trip.valid))

    def test_too_short_rejected(self):
        with pytest.raises(BadConfig):
            sg.generate_trip(sg.NO_EFFECT, 60.0, 1)

    def test_events_tile_trip(self):
        trip, events = sg.generate_trip(sg.NO_EFFECT, 300.0, 4)
        assert events[0].onset_s == 0.0
        assert events[-1].offset_s == 300.0
        for a, b in zip(events[:-1], events[1:]):
            assert a.offset_s == b.onset_s
        # strict alternation, bracketed by fixations
        kinds = [e.kind for e in events]
        assert kinds[0] == "fixation" and kinds[-1] == "fixation"
        assert all(x != y for x, y in zip(kinds[:-1], kinds[1:]))

    def test_event_kinematics_consistent(self):
        _, events = sg.generate_trip(sg.NO_EFFECT, 300.0, 5)
        for e in events:
            assert e.duration_s == pytest.approx(e.offset_s - e.onset_s,
                                                 abs=1e-12)
            if e.kind == "saccade":
                assert e.amplitude > 0
                assert e.mean_velocity == pytest.approx(
                    e.amplitude / e.duration_s, rel=1e-12)
                assert e.peak_velocity == pytest.approx(
                    1.875 * e.mean_velocity, rel=1e-12)
            else:
                assert e.amplitude == 0.0

    def test_gaze_stays_in_bounds(self):
        trip, _ = sg.generate_trip(sg.NO_EFFECT, 300.0, 6)
        assert float(np.max(np.abs(trip.gaze_x_mm))) <= 250.0 + 8.0
        assert float(np.max(np.abs(trip.gaze_y_mm))) <= 150.0 + 8.0

    def test_main_sequence_saturates(self):
        amps = np.array([10.0, 50.0, 100.0, 200.0])
        peaks = np.array([sg.saccade_peak_velocity(a) for a in amps])
        assert bool(np.all(np.diff(peaks) > 0))
        # peak velocity per unit amplitude falls as amplitude grows
        assert bool(np.all(np.diff(peaks / amps) < 0))

    def test_fixation_duration_scaling(self):
        base, scaled = [], []
        for seed in (5, 6):
            _, tr0 = sg.generate_trip(sg.NO_EFFECT, 600.0, seed)
            _, tr1 = sg.generate_trip(
                sg.EffectProfile(fixation_duration_scale=1.3), 600.0, seed)
            base.append(np.mean([e.duration_s for e in tr0
                                 if e.kind == "fixation"]))
            scaled.append(np.mean([e.duration_s for e in tr1
                                   if e.kind == "fixation"]))
        ratio = np.mean(scaled) / np.mean(base)
        assert ratio == pytest.approx(1.3, rel=0.05)

    def test_rate_scale_thins_saccades(self):
        _, tr0 = sg.generate_trip(sg.NO_EFFECT, 600.0, 7)
        _, tr1 = sg.generate_trip(
            sg.EffectProfile(saccade_rate_scale=0.7), 600.0, 7)
        n0 = sum(1 for e in tr0 if e.kind == "saccade")
        n1 = sum(1 for e in tr1 if e.kind == "saccade")
        assert n1 < 0.85 * n0

    def test_amplitude_scale_shrinks_saccades(self):
        _, tr0 = sg.generate_trip(sg.NO_EFFECT, 600.0, 8)
        _, tr1 = sg.generate_trip(
            sg.EffectProfile(saccade_amplitude_scale=0.8), 600.0, 8)
        a0 = np.mean([e.amplitude for e in tr0 if e.kind == "saccade"])
        a1 = np.mean([e.amplitude for e in tr1 if e.kind == "saccade"])
        assert a1 / a0 == pytest.approx(0.8, abs=0.07)

    def test_jitter_scale_widens_fixation_noise(self):
        trip0, ev0 = sg.generate_trip(sg.NO_EFFECT, 300.0, 9)
        trip1, ev1 = sg.generate_trip(
            sg.EffectProfile(jitter_scale=2.0), 300.0, 9)

        def fixation_noise(trip, events):
            devs = []
            for e in events:
                if e.kind != "fixation" or e.duration_s < 0.3:
                    continue
                i0 = np.searchsorted(trip.t_s, e.onset_s)
                i1 = np.searchsorted(trip.t_s, e.offset_s)
                seg = trip.gaze_x_mm[i0:i1]
                devs.append(np.std(seg))
            return float(np.mean(devs))

        s0 = fixation_noise(trip0, ev0)
        s1 = fixation_noise(trip1, ev1)
        assert s1 / s0 == pytest.approx(2.0, rel=0.15)

    def test_head_drift_scale(self):
        trip0, _ = sg.generate_trip(sg.NO_EFFECT, 300.0, 10)
        trip1, _ = sg.generate_trip(
            sg.EffectProfile(head_drift_scale=1.5), 300.0, 10)
        r = np.std(trip1.eye_x_mm) / np.std(trip0.eye_x_mm)
        assert r == pytest.approx(1.5, rel=0.2)
        assert float(np.mean(trip0.eye_z_mm)) == pytest.approx(650.0, abs=15.0)

    def test_deterministic(self):
        t1, e1 = sg.generate_trip(sg.NO_EFFECT, 120.0, 99, with_can=True)
        t2, e2 = sg.generate_trip(sg.NO_EFFECT, 120.0, 99, with_can=True)
        assert np.array_equal(t1.gaze_x_mm, t2.gaze_x_mm)
        assert np.array_equal(t1.eye_z_mm, t2.eye_z_mm)
        assert np.array_equal(t1.can["lane_position"].values,
                              t2.can["lane_position"].values)
        assert e1 == e2
        t3, _ = sg.generate_trip(sg.NO_EFFECT, 120.0, 100)
        assert not np.array_equal(t1.gaze_x_mm, t3.gaze_x_mm)

    def test_traits_shift_fixation_mean(self):
        slow = sg.ParticipantTraits(fixation_scale=1.2)
        fast = sg.ParticipantTraits(fixation_scale=0.8)
        _, ev_slow = sg.generate_trip(sg.NO_EFFECT, 600.0, 11, traits=slow)
        _, ev_fast = sg.generate_trip(sg.NO_EFFECT, 600.0, 11, traits=fast)
        m_slow = np.mean([e.duration_s for e in ev_slow if e.kind == "fixation"])
        m_fast = np.mean([e.duration_s for e in ev_fast if e.kind == "fixation"])
        assert m_slow / m_fast == pytest.approx(1.2 / 0.8, rel=0.08)

    def test_detector_agrees_with_truth_counts(self):
        trip, truth = sg.generate_trip(sg.NO_EFFECT, 600.0, 12)
        n_truth = sum(1 for e in truth if e.kind == "saccade")
        n_det = sum(1 for e in detect_events(trip) if e.kind == "saccade")
        assert abs(n_det - n_truth) <= 0.1 * n_truth


class TestDoseResponse:
    def test_interpolated_profiles_monotone_in_bac(self):
        means = []
        for bac in (0.0, 0.03, 0.062):
            profile = sg.interpolate_profile(bac)
            _, events = sg.generate_trip(profile, 600.0, 21)
            means.append(np.mean([e.duration_s for e in events
                                  if e.kind == "fixation"]))
        assert means[0] < means[1] < means[2]


@pytest.fixture(scope="module")
def study(tmp_path_factory):
    out = tmp_path_factory.mktemp("study")
    cfg = sg.SynthConfig(n_participants=2, trips_per_block=3,
                         duration_s=120.0, master_seed=7, with_can=True)
    manifest, files = sg.generate_study(cfg, out, write_truth=True)
    return cfg, out, manifest, files


class TestGenerateStudy:
    def test_layout(self, study):
        cfg, out, manifest, files = study
        assert (out / "manifest.json").is_file()
        assert len(manifest.entries) == 2 * 3 * 3
        assert len(list((out / "trips").glob("*.csv"))) == 18
        assert len(list((out / "can").glob("*.csv"))) == 18
        assert len(list((out / "truth").glob("*_events.csv"))) == 18
        for f in files:
            assert Path(f).is_file()

    def test_scenarios_cycle(self, study):
        _, _, manifest, _ = study
        per_block = [e.scenario for e in manifest.entries[:3]]
        assert per_block == ["highway", "rural", "urban"]

    def test_bac_ranges(self, study):
        _, _, manifest, _ = study
        for e in manifest.entries:
            if e.block == "no_alcohol":
                assert e.bac_gdl == 0.0
            elif e.block == "moderate":
                assert 0.0 < e.bac_gdl <= 0.03
            else:
                assert e.bac_gdl >= 0.05

    def test_bac_same_within_participant_block(self, study):
        _, _, manifest, _ = study
        seen = {}
        for e in manifest.entries:
            key = (e.participant_id, e.block)
            assert seen.setdefault(key, e.bac_gdl) == e.bac_gdl

    def test_round_trip_load(self, study):
        _, out, _, _ = study
        manifest = load_manifest(out / "manifest.json")
        assert manifest.can_channels == ["lane_position"]
        assert manifest.can_derivatives == {"lane_position": 2}
        entry = manifest.entries[0]
        trip = load_study_trip(manifest, entry)
        assert trip.n_samples == 120 * 60 + 1
        assert set(trip.can) == {"lane_position"}
        truth = read_events_csv(out / "truth" / f"{entry.trip_id}_events.csv")
        assert truth[0].onset_s == 0.0
        assert truth[-1].offset_s == pytest.approx(120.0)

    def test_missing_profile_block(self, tmp_path):
        cfg = sg.SynthConfig(n_participants=1, duration_s=120.0)
        with pytest.raises(BadConfig):
            sg.generate_study(cfg, tmp_path, profiles={"no_alcohol": sg.NO_EFFECT})

    def test_reproducible_bytes(self, tmp_path):
        cfg = sg.SynthConfig(n_participants=1, trips_per_block=1,
                             duration_s=120.0, master_seed=5, with_can=True)
        a, b = tmp_path / "a", tmp_path / "b"
        man_a, files_a = sg.generate_study(cfg, a)
        man_b, files_b = sg.generate_study(cfg, b)
        rel_a = sorted(p.relative_to(a) for p in files_a)
        rel_b = sorted(p.relative_to(b) for p in files_b)
        assert rel_a == rel_b
        for rel in rel_a:
            assert (a / rel).read_bytes() == (b / rel).read_bytes()

    def test_bac_distribution_means(self):
        rng = np.random.default_rng(0)
        moderate = [sg._draw_bac(rng, "moderate") for _ in range(2000)]
        severe = [sg._draw_bac(rng, "severe") for _ in range(2000)]
        assert np.mean(moderate) == pytest.approx(0.027, abs=0.002)
        assert np.mean(severe) == pytest.approx(0.062, abs=0.002)
        assert max(moderate) <= 0.03
        assert min(severe) >= 0.05

    def test_dose_monotone_across_blocks(self, study):
        _, out, manifest, _ = study
        durs = {b: [] for b in ("no_alcohol", "moderate", "severe")}
        for e in manifest.entries:
            events = read_events_csv(out / "truth" / f"{e.trip_id}_events.csv")
            durs[e.block].extend(ev.duration_s for ev in events
                                 if ev.kind == "fixation")
        means = {b: np.mean(v) for b, v in durs.items()}
        assert means["no_alcohol"] < means["moderate"] < means["severe"]
