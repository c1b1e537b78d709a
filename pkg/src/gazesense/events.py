"""Fixation and saccade detection from gaze speed.

The detector follows the classic adaptive-velocity-threshold recipe:
differentiate the gaze point, smooth the velocity components, take the
speed norm, then iterate ``threshold = mean + 6*sd`` over the samples
below the current threshold until the iteration settles.  Contiguous
above-threshold runs become saccades, the rest fixations; runs shorter
than their kind's minimum duration are absorbed by their neighbours.

Events never span invalid samples: each contiguous valid stretch of the
speed signal is segmented independently.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import BadParams, InsufficientData
from .signals import SignalChannel, TripRecording, combine_norm, differentiate, interpolate_gaps, smooth

__all__ = [
    "EVENT_KINDS",
    "GazeEvent",
    "EventDetectorParams",
    "ThresholdResult",
    "adaptive_velocity_threshold",
    "detect_events",
    "speed_channel",
    "events_to_csv",
    "read_events_csv",
]

EVENT_KINDS = ("fixation", "saccade")

# Below this many valid speed samples the threshold iteration is meaningless.
_MIN_SPEED_SAMPLES = 100


@dataclass(frozen=True)
class GazeEvent:
    """One oculomotor event with summary kinematics.

    amplitude is the Euclidean distance between the gaze positions at
    event start and end (same units as the input channels); velocities
    are taken from the smoothed speed signal inside the event.
    """

    kind: str
    onset_s: float
    offset_s: float
    duration_s: float
    amplitude: float
    peak_velocity: float
    mean_velocity: float

    @property
    def midpoint_s(self) -> float:
        return 0.5 * (self.onset_s + self.offset_s)


@dataclass(frozen=True)
class EventDetectorParams:
    """Tuning knobs of the event detector (units follow the input channels)."""

    initial_threshold: float = 300.0   # mm/s
    min_fixation_s: float = 0.050
    min_saccade_s: float = 0.010
    convergence_tol: float = 1.0       # mm/s change between iterations
    max_iter: int = 100
    smooth_window: int = 5
    smooth_polyorder: int = 2
    max_gap_s: float = 0.075           # gap interpolation before differentiating

    def __post_init__(self):
        if self.initial_threshold <= 0:
            raise BadParams("initial_threshold must be positive")
        if self.min_fixation_s <= 0 or self.min_saccade_s <= 0:
            raise BadParams("minimum durations must be positive")
        if self.convergence_tol <= 0:
            raise BadParams("convergence_tol must be positive")
        if self.max_iter < 1:
            raise BadParams("max_iter must be at least 1")


@dataclass(frozen=True)
class ThresholdResult:
    """Converged (or last-iterate) saccade velocity threshold."""

    value: float
    converged: bool
    iterations: int


def adaptive_velocity_threshold(
    speeds: np.ndarray,
    params: EventDetectorParams = EventDetectorParams(),
) -> ThresholdResult:
    """Data-driven saccade threshold: iterate mean + 6*sd of sub-threshold speeds.

    ``speeds`` must hold only valid, finite speed samples.  When no
    sample lies below the current threshold the iteration cannot move
    and the current value is returned as converged.
    """
    speeds = np.asarray(speeds, dtype=np.float64)
    if len(speeds) < _MIN_SPEED_SAMPLES:
        raise InsufficientData(
            f"need at least {_MIN_SPEED_SAMPLES} valid speed samples, got {len(speeds)}"
        )
    pt = float(params.initial_threshold)
    for it in range(1, params.max_iter + 1):
        below = speeds[speeds < pt]
        if len(below) == 0:
            return ThresholdResult(pt, True, it)
        new = float(np.mean(below) + 6.0 * np.std(below))
        moved = abs(new - pt)
        pt = new
        if moved < params.convergence_tol:
            return ThresholdResult(pt, True, it)
    return ThresholdResult(pt, False, params.max_iter)


def _speed_channels(trip: TripRecording, params: EventDetectorParams):
    """(smoothed, raw) gaze speed: gap-filled positions, differentiated, normed.

    The speed norm is smoothed rather than the velocity components: a
    polynomial filter's negative side lobes then undershoot ahead of a
    saccade instead of folding into the magnitude, which would smear
    event onsets outward by an extra sample or two.
    """
    x = interpolate_gaps(trip.channel("gaze_x_mm"), params.max_gap_s)
    y = interpolate_gaps(trip.channel("gaze_y_mm"), params.max_gap_s)
    raw = combine_norm(differentiate(x), differentiate(y))
    raw.name = "gaze_speed_raw"
    sp = smooth(raw, params.smooth_window, params.smooth_polyorder)
    np.clip(sp.values, 0.0, None, out=sp.values)  # speed is a magnitude
    sp.name = "gaze_speed"
    return sp, raw


def speed_channel(trip: TripRecording,
                  params: EventDetectorParams = EventDetectorParams()) -> SignalChannel:
    """Smoothed gaze speed used for thresholding and event kinematics."""
    return _speed_channels(trip, params)[0]


def detect_events(trip: TripRecording,
                  params: EventDetectorParams = EventDetectorParams()) -> list[GazeEvent]:
    """Detect alternating fixations and saccades on one trip.

    Within each contiguous valid stretch the events tile the stretch
    exactly: an event's offset is the next event's onset (the stretch's
    last timestamp for the final event).  Runs shorter than their kind's
    minimum duration are merged with their neighbours; a lone
    sub-minimum run is dropped.

    Saccade runs are located on the smoothed speed and their boundaries
    then tightened against the raw speed, so the smoothing filter's
    spread does not push onsets and offsets outward.
    """
    sp, raw = _speed_channels(trip, params)
    valid_speeds = sp.values[sp.valid]
    threshold = adaptive_velocity_threshold(valid_speeds, params).value

    # Gap-filled positions for amplitudes, consistent with the speed signal.
    x = interpolate_gaps(trip.channel("gaze_x_mm"), params.max_gap_s).values
    y = interpolate_gaps(trip.channel("gaze_y_mm"), params.max_gap_s).values

    t = sp.t
    events: list[GazeEvent] = []
    for seg_start, seg_stop in _true_runs(sp.valid):
        seg_end = seg_stop - 1
        if seg_end <= seg_start:
            continue
        sac = sp.values[seg_start:seg_stop] >= threshold
        raw_seg = raw.values[seg_start:seg_stop]
        for k, a, b in _label_runs(sac):
            if not k:
                continue
            core = np.flatnonzero(raw_seg[a:b] >= threshold)
            if len(core) == 0:
                sac[a:b] = False  # smoothing artefact, no raw support
            else:
                sac[a:a + core[0]] = False
                sac[a + core[-1] + 1:b] = False
        runs = [[("saccade" if k else "fixation"), seg_start + a, seg_start + b - 1]
                for k, a, b in _label_runs(sac)]
        runs = _merge_subminimum(runs, t, seg_end, params)
        for kind, i, j in runs:
            bound = min(j + 1, seg_end)
            onset = float(t[i])
            offset = float(t[bound]) if j < seg_end else float(t[seg_end])
            seg_speeds = sp.values[i:j + 1]
            events.append(GazeEvent(
                kind=kind,
                onset_s=onset,
                offset_s=offset,
                duration_s=offset - onset,
                amplitude=float(np.hypot(x[bound] - x[i], y[bound] - y[i])),
                peak_velocity=float(np.max(seg_speeds)),
                mean_velocity=float(np.mean(seg_speeds)),
            ))
    return events


def _true_runs(mask: np.ndarray):
    """(start, stop) pairs of maximal True runs, stop exclusive."""
    idx = np.flatnonzero(mask)
    if len(idx) == 0:
        return []
    breaks = np.flatnonzero(np.diff(idx) > 1)
    starts = np.concatenate(([idx[0]], idx[breaks + 1]))
    stops = np.concatenate((idx[breaks] + 1, [idx[-1] + 1]))
    return list(zip(starts, stops))


def _label_runs(mask: np.ndarray):
    """(label, start, stop) pairs over a boolean label array, stop exclusive."""
    edges = np.flatnonzero(np.diff(mask)) + 1
    bounds = np.concatenate(([0], edges, [len(mask)]))
    return [(bool(mask[a]), int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]


def _merge_subminimum(runs, t, seg_end, params: EventDetectorParams):
    """Absorb runs shorter than their kind's minimum into their neighbours.

    Shortest offender first (ties: earliest).  Merging an interior run
    always coalesces its two same-kind neighbours with it, which is what
    the merge-into-the-longer-neighbour rule produces once alternation
    is restored.  Edge runs fold into their only neighbour.
    """
    min_dur = {"fixation": params.min_fixation_s, "saccade": params.min_saccade_s}

    def duration(run):
        _, i, j = run
        end = t[j + 1] if j < seg_end else t[seg_end]
        return float(end - t[i])

    while True:
        offenders = [(duration(r), k) for k, r in enumerate(runs)
                     if duration(r) < min_dur[r[0]] - 1e-12]
        if not offenders:
            return runs
        if len(runs) == 1:
            return []
        _, k = min(offenders)
        if k == 0:
            runs[1][1] = runs[0][1]
            del runs[0]
        elif k == len(runs) - 1:
            runs[-2][2] = runs[-1][2]
            del runs[-1]
        else:
            runs[k - 1][2] = runs[k + 1][2]
            del runs[k:k + 2]


def events_to_csv(events: list[GazeEvent], path) -> None:
    """Write events to the debug CSV format."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["kind", "onset_s", "offset_s", "duration_s",
                         "amplitude", "peak_velocity", "mean_velocity"])
        for e in events:
            writer.writerow([e.kind, repr(e.onset_s), repr(e.offset_s),
                             repr(e.duration_s), repr(e.amplitude),
                             repr(e.peak_velocity), repr(e.mean_velocity)])


def read_events_csv(path) -> list[GazeEvent]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return [GazeEvent(
            kind=row["kind"],
            onset_s=float(row["onset_s"]),
            offset_s=float(row["offset_s"]),
            duration_s=float(row["duration_s"]),
            amplitude=float(row["amplitude"]),
            peak_velocity=float(row["peak_velocity"]),
            mean_velocity=float(row["mean_velocity"]),
        ) for row in reader]
