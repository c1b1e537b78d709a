"""Event detection: adaptive threshold, segmentation, run merging."""

import numpy as np
import pytest

from gazesense.errors import BadParams, InsufficientData
from gazesense.events import (
    EventDetectorParams,
    GazeEvent,
    adaptive_velocity_threshold,
    detect_events,
    events_to_csv,
    read_events_csv,
    speed_channel,
)
from gazesense.signals import TripRecording


def minimum_jerk(tau):
    return 10 * tau**3 - 15 * tau**4 + 6 * tau**5


def scripted_trip(script, rate=60.0, noise_mm=1.0, seed=0, valid=None):
    """Build a trip from ('fix', dur) / ('sac', dur, (x, y)) steps."""
    segments = []
    t0, pos = 0.0, np.array([0.0, 0.0])
    for step in script:
        if step[0] == "fix":
            segments.append(("fix", t0, t0 + step[1], pos.copy(), pos.copy()))
            t0 += step[1]
        else:
            target = np.asarray(step[2], dtype=float)
            segments.append(("sac", t0, t0 + step[1], pos.copy(), target))
            t0, pos = t0 + step[1], target
    n = int(round(t0 * rate)) + 1
    t = np.arange(n) / rate
    xy = np.zeros((n, 2))
    for kind, a, b, p0, p1 in segments:
        sel = (t >= a) & (t < b)
        if kind == "fix":
            xy[sel] = p0
        else:
            tau = (t[sel] - a) / (b - a)
            xy[sel] = p0 + np.outer(minimum_jerk(tau), p1 - p0)
    xy[t >= segments[-1][2]] = segments[-1][4]
    rng = np.random.default_rng(seed)
    xy += rng.normal(0.0, noise_mm, xy.shape)
    if valid is None:
        valid = np.ones(n, dtype=bool)
    return TripRecording(
        participant_id="P01", trip_id="no_alcohol_highway", scenario="highway",
        block="no_alcohol", bac_gdl=0.0,
        t_s=t, gaze_x_mm=xy[:, 0], gaze_y_mm=xy[:, 1],
        eye_x_mm=np.zeros(n), eye_y_mm=np.zeros(n), eye_z_mm=np.full(n, 650.0),
        valid=np.asarray(valid, dtype=bool),
    )


# ---------------------------------------------------------------- threshold

def test_threshold_constant_speeds():
    res = adaptive_velocity_threshold(np.full(200, 42.0))
    assert res.converged
    assert res.value == pytest.approx(42.0)


def test_threshold_bimodal_matches_hand_iteration():
    rng = np.random.default_rng(1)
    speeds = np.concatenate([rng.normal(10, 2, 1000), rng.normal(500, 30, 50)])
    params = EventDetectorParams()
    res = adaptive_velocity_threshold(speeds, params)

    # independent re-run of the published iteration
    pt = params.initial_threshold
    for _ in range(params.max_iter):
        below = speeds[speeds < pt]
        new = below.mean() + 6 * below.std()
        if abs(new - pt) < params.convergence_tol:
            pt = new
            break
        pt = new
    assert res.converged
    assert res.value == pytest.approx(pt, abs=1e-9)
    assert 15.0 < res.value < 450.0  # lands between the modes


def test_threshold_insufficient_data():
    with pytest.raises(InsufficientData):
        adaptive_velocity_threshold(np.full(50, 10.0))


def test_detector_params_validation():
    with pytest.raises(BadParams):
        EventDetectorParams(initial_threshold=0.0)
    with pytest.raises(BadParams):
        EventDetectorParams(min_fixation_s=-1.0)
    with pytest.raises(BadParams):
        EventDetectorParams(max_iter=0)


# ------------------------------------------------------------ detect_events

def test_detects_still_ramp_still():
    trip = scripted_trip([
        ("fix", 2.0),
        ("sac", 0.040, (100.0, 0.0)),
        ("fix", 2.0),
    ])
    events = detect_events(trip)
    kinds = [e.kind for e in events]
    assert kinds == ["fixation", "saccade", "fixation"]
    fix1, sac, fix2 = events
    assert fix1.duration_s == pytest.approx(2.0, abs=0.05)
    assert fix2.duration_s == pytest.approx(2.0, abs=0.08)
    assert sac.onset_s == pytest.approx(2.0, abs=0.021)
    assert sac.offset_s == pytest.approx(2.04, abs=0.021)
    assert sac.amplitude == pytest.approx(100.0, rel=0.10)


def test_events_tile_the_valid_span():
    trip = scripted_trip([
        ("fix", 1.0),
        ("sac", 0.05, (120.0, 40.0)),
        ("fix", 0.8),
        ("sac", 0.04, (-60.0, 10.0)),
        ("fix", 1.2),
    ])
    events = detect_events(trip)
    assert len(events) >= 3
    for a, b in zip(events, events[1:]):
        assert b.onset_s == pytest.approx(a.offset_s, abs=1e-9)
        assert a.kind != b.kind  # alternation within one valid segment
    total = sum(e.duration_s for e in events)
    assert total <= trip.duration_s + 1e-9
    for e in events:
        assert e.offset_s > e.onset_s
        assert e.duration_s == pytest.approx(e.offset_s - e.onset_s, abs=1e-12)
        assert 0.0 <= e.mean_velocity <= e.peak_velocity
        assert e.amplitude >= 0.0


def test_invalid_block_breaks_events():
    trip = scripted_trip([("fix", 5.0)])
    trip.valid[150:180] = False  # 500 ms dropout inside the fixation
    events = detect_events(trip)
    assert len(events) == 2
    assert all(e.kind == "fixation" for e in events)
    gap_lo, gap_hi = trip.t_s[150], trip.t_s[179]
    for e in events:
        assert e.offset_s <= gap_lo + 1e-9 or e.onset_s >= gap_hi - 1e-9


def test_subminimum_fixation_merges_into_saccade():
    # 30 ms still period between two saccades is below the 50 ms minimum
    trip = scripted_trip([
        ("fix", 1.0),
        ("sac", 0.040, (80.0, 0.0)),
        ("fix", 0.030),
        ("sac", 0.040, (160.0, 0.0)),
        ("fix", 1.0),
    ])
    events = detect_events(trip)
    kinds = [e.kind for e in events]
    assert kinds == ["fixation", "saccade", "fixation"]
    sac = events[1]
    assert sac.duration_s == pytest.approx(0.110, abs=0.04)
    assert sac.amplitude == pytest.approx(160.0, rel=0.10)


def test_lone_subminimum_run_is_dropped():
    # an isolated valid islet too short for any event yields nothing
    trip = scripted_trip([("fix", 10.0)])
    trip.valid[:] = False
    trip.valid[100:500] = True          # main segment
    trip.valid[520:522] = True          # 2-sample islet, ~17 ms
    events = detect_events(trip)
    for e in events:
        assert e.duration_s >= EventDetectorParams().min_fixation_s - 1e-9


def test_detect_events_insufficient_data():
    trip = scripted_trip([("fix", 1.5)])
    with pytest.raises(InsufficientData):
        detect_events(trip)


def test_speed_channel_validity_shrinks_around_gaps():
    trip = scripted_trip([("fix", 3.0)])
    trip.valid[90] = False
    sp = speed_channel(trip)
    # the single-sample gap is interpolated away upstream
    assert sp.valid[90]
    trip2 = scripted_trip([("fix", 3.0)])
    trip2.valid[60:80] = False  # too long to interpolate
    sp2 = speed_channel(trip2)
    assert not sp2.valid[60:80].any()
    assert not sp2.valid[59] and not sp2.valid[80]  # stencils overlap the gap


def test_events_csv_roundtrip(tmp_path):
    events = [
        GazeEvent("fixation", 0.0, 0.5, 0.5, 1.25, 30.0, 12.5),
        GazeEvent("saccade", 0.5, 0.55, 0.05, 101.0, 4200.0, 2100.0),
    ]
    path = tmp_path / "events.csv"
    events_to_csv(events, path)
    back = read_events_csv(path)
    assert back == events
    header = path.read_text().splitlines()[0]
    assert header == "kind,onset_s,offset_s,duration_s,amplitude,peak_velocity,mean_velocity"
