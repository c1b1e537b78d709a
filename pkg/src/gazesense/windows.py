"""Sliding-window feature extraction.

Windows of ``length_s`` step forward by ``shift_s``; the first window
ends ``length_s`` after the first sample and a window covers samples
with ``start <= t < end``.  Every signal inside a window is summarized
by seven statistics (mean, sample SD, 5%/95% quantiles with linear
interpolation, population skewness, excess kurtosis, mean power).
Skewness and kurtosis are defined as 0 for constant input; sample SD
uses the n-1 denominator and is 0 for a single value.

The camera feature set is fixed: 56 eye movement values (8 signals x 7
stats), 58 gaze event values (2 kinds x 4 attributes x 7 stats plus two
counts), 56 head movement values.  CAN features follow the channel
declaration of the study manifest.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import (
    AllInvalid,
    BadParams,
    EmptyInput,
    EmptyMatrix,
    MalformedCsv,
    MissingChannel,
    TripTooShort,
)
from .events import EventDetectorParams, GazeEvent, detect_events
from .signals import SignalChannel, TripRecording, combine_norm, differentiate, interpolate_gaps

__all__ = [
    "STAT_NAMES",
    "WindowSpec",
    "Window",
    "StatSummary",
    "FeatureVector",
    "FeatureMatrix",
    "sliding_windows",
    "aggregate_stats",
    "eye_movement_features",
    "gaze_event_features",
    "head_movement_features",
    "can_features",
    "camera_feature_names",
    "can_feature_names",
    "feature_names",
    "feature_groups",
    "trip_feature_table",
    "iter_window_features",
    "build_dataset",
    "concat_tables",
    "write_matrix_csv",
    "read_matrix_csv",
    "write_matrix_binary",
    "read_matrix_binary",
]

STAT_NAMES = ("mean", "sd", "q05", "q95", "skew", "kurt", "power")
EYE_SIGNALS = ("pos_x", "pos_y", "vel_x", "vel_y", "vel_norm",
               "acc_x", "acc_y", "acc_norm")
HEAD_SIGNALS = ("vel_x", "vel_y", "vel_z", "vel_norm",
                "acc_x", "acc_y", "acc_z", "acc_norm")
EVENT_ATTRS = ("duration", "amplitude", "peak_velocity", "mean_velocity")

META_COLUMNS = ["participant_id", "trip_id", "scenario", "block",
                "bac_gdl", "window_end_s"]

_BINARY_MAGIC = b"GZFM1"


@dataclass(frozen=True)
class WindowSpec:
    """Sliding-window geometry and the window drop rule."""

    length_s: float = 60.0
    shift_s: float = 1.0
    min_valid_fraction: float = 0.5

    def __post_init__(self):
        if self.length_s <= 0 or self.shift_s <= 0:
            raise BadParams("window length and shift must be positive")
        if not (0.0 <= self.min_valid_fraction <= 1.0):
            raise BadParams("min_valid_fraction must lie in [0, 1]")


@dataclass(frozen=True)
class Window:
    """One window placement; dropped windows carry too few valid samples."""

    start_s: float
    end_s: float
    valid_fraction: float
    dropped: bool


@dataclass(frozen=True)
class StatSummary:
    """The seven per-window summary statistics of one signal."""

    mean: float
    sd: float
    q05: float
    q95: float
    skewness: float
    kurtosis: float
    power: float

    def as_tuple(self) -> tuple:
        return (self.mean, self.sd, self.q05, self.q95,
                self.skewness, self.kurtosis, self.power)


@dataclass(frozen=True)
class FeatureVector:
    """One window's feature values (order matches the dataset's names)."""

    window_end_s: float
    values: np.ndarray
    valid_fraction: float
    dropped: bool


@dataclass
class FeatureMatrix:
    """Windows x features, with per-row trip metadata."""

    feature_names: list[str]
    values: np.ndarray
    participant_id: np.ndarray
    trip_id: np.ndarray
    scenario: np.ndarray
    block: np.ndarray
    bac_gdl: np.ndarray
    window_end_s: np.ndarray
    n_dropped: int = 0

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({
            "participant_id": self.participant_id,
            "trip_id": self.trip_id,
            "scenario": self.scenario,
            "block": self.block,
            "bac_gdl": self.bac_gdl,
            "window_end_s": self.window_end_s,
        })
        feat = pd.DataFrame(self.values, columns=self.feature_names)
        return pd.concat([frame, feat], axis=1)


# ----------------------------------------------------------------- statistics

def _stats_kernel(v: np.ndarray) -> tuple:
    """mean, sd, q05, q95, skew, kurt, power of a 1-D float array (n >= 1)."""
    n = v.size
    power = float(np.dot(v, v) / n)
    vmin = float(np.min(v))
    vmax = float(np.max(v))
    if n == 1 or vmin == vmax:
        c = float(v[0])
        return (c, 0.0, c, c, 0.0, 0.0, power)
    mean = float(np.mean(v))
    d = v - mean
    ss = float(np.dot(d, d))
    m2 = ss / n
    sd = float(np.sqrt(ss / (n - 1)))
    d2 = d * d
    m3 = float(np.dot(d2, d)) / n
    m4 = float(np.dot(d2, d2)) / n
    skew = m3 / m2**1.5
    kurt = m4 / (m2 * m2) - 3.0
    k = n - 1
    h05 = 0.05 * k
    h95 = 0.95 * k
    f05, f95 = int(h05), int(h95)
    c05, c95 = min(f05 + 1, k), min(f95 + 1, k)
    # a full sort beats repeated introselect for the four order statistics
    part = np.sort(v)
    q05 = float(part[f05] + (h05 - f05) * (part[c05] - part[f05]))
    q95 = float(part[f95] + (h95 - f95) * (part[c95] - part[f95]))
    return (mean, sd, q05, q95, skew, kurt, power)


_ZERO_STATS = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)


def aggregate_stats(values) -> StatSummary:
    """Summarize a batch of values; see the module docstring for conventions."""
    v = np.ascontiguousarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise EmptyInput("aggregate_stats needs at least one value")
    return StatSummary(*_stats_kernel(v))


# ------------------------------------------------------------------- windows

def _window_ends(t0: float, duration: float, spec: WindowSpec) -> np.ndarray:
    if duration + 1e-9 < spec.length_s:
        raise TripTooShort(
            f"trip spans {duration:.3f} s, below the {spec.length_s:.0f} s window"
        )
    count = int(np.floor((duration - spec.length_s) / spec.shift_s + 1e-9)) + 1
    return t0 + spec.length_s + np.arange(count) * spec.shift_s


def sliding_windows(trip: TripRecording, spec: WindowSpec = WindowSpec()) -> list[Window]:
    """Window placements for one trip, with the drop flag from raw validity."""
    ends = _window_ends(float(trip.t_s[0]), trip.duration_s, spec)
    starts = ends - spec.length_s
    i0 = np.searchsorted(trip.t_s, starts, side="left")
    i1 = np.searchsorted(trip.t_s, ends, side="left")
    cs = np.concatenate(([0], np.cumsum(trip.valid.astype(np.int64))))
    out = []
    for a, b, e in zip(i0, i1, ends):
        total = b - a
        frac = (cs[b] - cs[a]) / total if total else 0.0
        out.append(Window(float(e - spec.length_s), float(e), float(frac),
                          bool(frac < spec.min_valid_fraction)))
    return out


# ------------------------------------------------------------- feature names

def camera_feature_names() -> list[str]:
    names = [f"eye_{sig}_{st}" for sig in EYE_SIGNALS for st in STAT_NAMES]
    names += [f"{kind}_{attr}_{st}"
              for kind in ("fixation", "saccade")
              for attr in EVENT_ATTRS
              for st in STAT_NAMES]
    names += ["fixation_count", "saccade_count"]
    names += [f"head_{sig}_{st}" for sig in HEAD_SIGNALS for st in STAT_NAMES]
    return names


def can_signal_names(channels: list[str], derivatives: dict[str, int] | None = None) -> list[str]:
    derivatives = derivatives or {}
    signals = []
    for ch in channels:
        signals.append(ch)
        for d in range(1, int(derivatives.get(ch, 0)) + 1):
            signals.append(f"{ch}_d{d}")
    return signals


def can_feature_names(channels: list[str], derivatives: dict[str, int] | None = None) -> list[str]:
    return [f"can_{sig}_{st}"
            for sig in can_signal_names(channels, derivatives)
            for st in STAT_NAMES]


def feature_names(source: str = "camera", can_channels: list[str] | None = None,
                  can_derivatives: dict[str, int] | None = None) -> list[str]:
    """Deterministic feature order for a dataset of the given source."""
    if source not in ("camera", "can", "both"):
        raise BadParams(f"unknown source {source!r}")
    names: list[str] = []
    if source in ("camera", "both"):
        names += camera_feature_names()
    if source in ("can", "both"):
        names += can_feature_names(can_channels or [], can_derivatives)
    return names


def feature_groups(names: list[str]) -> dict[str, list[str]]:
    """Interpretability groups keyed by feature-name prefix."""
    groups: dict[str, list[str]] = {
        "eye_movements": [], "gaze_events": [], "head_movements": [], "can": [],
    }
    for name in names:
        if name.startswith("eye_"):
            groups["eye_movements"].append(name)
        elif name.startswith(("fixation_", "saccade_")):
            groups["gaze_events"].append(name)
        elif name.startswith("head_"):
            groups["head_movements"].append(name)
        elif name.startswith("can_"):
            groups["can"].append(name)
        else:
            raise BadParams(f"feature {name!r} belongs to no known group")
    return {k: v for k, v in groups.items() if v}


# ------------------------------------------------------ channel preparation

class _Signal:
    """One continuous channel with O(1) validity lookups per window."""

    __slots__ = ("name", "values", "valid", "invalid_cs")

    def __init__(self, name: str, ch: SignalChannel):
        self.name = name
        self.values = ch.values
        if ch.valid.all():
            self.valid = None
            self.invalid_cs = None
        else:
            self.valid = ch.valid
            self.invalid_cs = np.concatenate(
                ([0], np.cumsum((~ch.valid).astype(np.int64))))

    def stats(self, out: np.ndarray, pos: int, i0: int, i1: int) -> int:
        if i1 <= i0:
            raise AllInvalid(f"window holds no samples for {self.name}")
        if self.valid is None or self.invalid_cs[i1] == self.invalid_cs[i0]:
            v = self.values[i0:i1]
        else:
            v = self.values[i0:i1][self.valid[i0:i1]]
            if v.size == 0:
                raise AllInvalid(f"window holds no valid samples for {self.name}")
        out[pos:pos + 7] = _stats_kernel(v)
        return pos + 7


def _event_arrays(events: list[GazeEvent]):
    """Sorted midpoints and a (n, 4) attribute table per event kind."""
    mid: dict[str, np.ndarray] = {}
    attrs: dict[str, np.ndarray] = {}
    for kind in ("fixation", "saccade"):
        evs = [e for e in events if e.kind == kind]
        mid[kind] = np.array([e.midpoint_s for e in evs])
        attrs[kind] = np.array(
            [[e.duration_s, e.amplitude, e.peak_velocity, e.mean_velocity]
             for e in evs]).reshape(len(evs), 4)
    return mid, attrs


def _event_block(mid: dict, attrs: dict, out: np.ndarray, pos: int,
                 start: float, end: float) -> int:
    """Gaze-event block: 2 kinds x 4 attrs x 7 stats, then the two counts.

    An event belongs to the window containing its midpoint; a kind absent
    from the window contributes all-zero statistics and a zero count.
    """
    counts = []
    for kind in ("fixation", "saccade"):
        a, b = np.searchsorted(mid[kind], (start, end), side="left")
        counts.append(b - a)
        table = attrs[kind]
        for col in range(4):
            if b > a:
                out[pos:pos + 7] = _stats_kernel(
                    np.ascontiguousarray(table[a:b, col]))
            else:
                out[pos:pos + 7] = _ZERO_STATS
            pos += 7
    out[pos] = counts[0]
    out[pos + 1] = counts[1]
    return pos + 2


class _PreparedSignals:
    """Per-trip channel arrays shared by the batch and streaming paths."""

    def __init__(self, trip: TripRecording, detector: EventDetectorParams,
                 source: str, can_channels: list[str] | None,
                 can_derivatives: dict[str, int] | None):
        if source not in ("camera", "can", "both"):
            raise BadParams(f"unknown source {source!r}")
        self.t = trip.t_s
        self.valid_cs = np.concatenate(
            ([0], np.cumsum(trip.valid.astype(np.int64))))
        self.eye: list[_Signal] = []
        self.head: list[_Signal] = []
        self.can: list[_Signal] = []
        self.events: list[GazeEvent] = []
        self.event_mid: dict[str, np.ndarray] = {}
        self.event_attrs: dict[str, np.ndarray] = {}
        self.can_t: np.ndarray | None = None

        if source in ("camera", "both"):
            gap = detector.max_gap_s
            x = interpolate_gaps(trip.channel("gaze_x_mm"), gap)
            y = interpolate_gaps(trip.channel("gaze_y_mm"), gap)
            vx, vy = differentiate(x), differentiate(y)
            ax, ay = differentiate(vx), differentiate(vy)
            chans = [x, y, vx, vy, combine_norm(vx, vy),
                     ax, ay, combine_norm(ax, ay)]
            self.eye = [_Signal(f"eye_{sig}", ch)
                        for sig, ch in zip(EYE_SIGNALS, chans)]

            self.events = detect_events(trip, detector)
            self.event_mid, self.event_attrs = _event_arrays(self.events)

            hx = interpolate_gaps(trip.channel("eye_x_mm"), gap)
            hy = interpolate_gaps(trip.channel("eye_y_mm"), gap)
            hz = interpolate_gaps(trip.channel("eye_z_mm"), gap)
            hvx, hvy, hvz = differentiate(hx), differentiate(hy), differentiate(hz)
            hax, hay, haz = differentiate(hvx), differentiate(hvy), differentiate(hvz)
            chans = [hvx, hvy, hvz, combine_norm(hvx, hvy, hvz),
                     hax, hay, haz, combine_norm(hax, hay, haz)]
            self.head = [_Signal(f"head_{sig}", ch)
                         for sig, ch in zip(HEAD_SIGNALS, chans)]

        if source in ("can", "both"):
            if trip.can is None:
                raise MissingChannel(
                    f"trip {trip.trip_id}: CAN features requested but no CAN data")
            for name in can_channels or []:
                if name not in trip.can:
                    raise MissingChannel(
                        f"trip {trip.trip_id}: CAN channel {name!r} not recorded")
                chain = trip.can[name]
                self.can_t = chain.t
                self.can.append(_Signal(f"can_{name}", chain))
                for d in range(1, int((can_derivatives or {}).get(name, 0)) + 1):
                    chain = differentiate(chain)
                    self.can.append(_Signal(f"can_{name}_d{d}", chain))

    def event_stats(self, out: np.ndarray, pos: int, start: float, end: float) -> int:
        return _event_block(self.event_mid, self.event_attrs, out, pos, start, end)

    def fill_row(self, out: np.ndarray, start: float, end: float,
                 i0: int, i1: int, j0: int, j1: int) -> None:
        """One window's full feature row; raises AllInvalid on a starved signal."""
        pos = 0
        for sig in self.eye:
            pos = sig.stats(out, pos, i0, i1)
        if self.eye:
            pos = self.event_stats(out, pos, start, end)
        for sig in self.head:
            pos = sig.stats(out, pos, i0, i1)
        for sig in self.can:
            pos = sig.stats(out, pos, j0, j1)


def _trip_rows(trip: TripRecording, spec: WindowSpec, source: str,
               detector: EventDetectorParams,
               can_channels: list[str] | None,
               can_derivatives: dict[str, int] | None):
    """Batch path: kept windows of one trip as (ends, values, n_dropped)."""
    prep = _PreparedSignals(trip, detector, source, can_channels, can_derivatives)
    ends = _window_ends(float(trip.t_s[0]), trip.duration_s, spec)
    starts = ends - spec.length_s
    i0 = np.searchsorted(trip.t_s, starts, side="left")
    i1 = np.searchsorted(trip.t_s, ends, side="left")
    if prep.can_t is not None:
        j0 = np.searchsorted(prep.can_t, starts, side="left")
        j1 = np.searchsorted(prep.can_t, ends, side="left")
    else:
        j0 = j1 = np.zeros(len(ends), dtype=np.int64)

    width = len(feature_names(source, can_channels, can_derivatives))
    rows, kept_ends = [], []
    n_dropped = 0
    for k in range(len(ends)):
        a, b = int(i0[k]), int(i1[k])
        total = b - a
        frac = (prep.valid_cs[b] - prep.valid_cs[a]) / total if total else 0.0
        if frac < spec.min_valid_fraction:
            n_dropped += 1
            continue
        row = np.empty(width)
        try:
            prep.fill_row(row, float(starts[k]), float(ends[k]),
                          a, b, int(j0[k]), int(j1[k]))
        except AllInvalid:
            n_dropped += 1
            continue
        rows.append(row)
        kept_ends.append(float(ends[k]))
    values = np.vstack(rows) if rows else np.empty((0, width))
    return np.asarray(kept_ends), values, n_dropped


# ------------------------------------------------- per-window feature views

def _one_window_block(prep: _PreparedSignals, window: Window, which: str) -> np.ndarray:
    i0 = int(np.searchsorted(prep.t, window.start_s, side="left"))
    i1 = int(np.searchsorted(prep.t, window.end_s, side="left"))
    if which == "eye":
        out = np.empty(56)
        pos = 0
        for sig in prep.eye:
            pos = sig.stats(out, pos, i0, i1)
    elif which == "events":
        out = np.empty(58)
        prep.event_stats(out, 0, window.start_s, window.end_s)
    elif which == "head":
        out = np.empty(56)
        pos = 0
        for sig in prep.head:
            pos = sig.stats(out, pos, i0, i1)
    else:
        j0 = int(np.searchsorted(prep.can_t, window.start_s, side="left"))
        j1 = int(np.searchsorted(prep.can_t, window.end_s, side="left"))
        out = np.empty(7 * len(prep.can))
        pos = 0
        for sig in prep.can:
            pos = sig.stats(out, pos, j0, j1)
    return out


def eye_movement_features(trip: TripRecording, window: Window,
                          detector: EventDetectorParams = EventDetectorParams()) -> np.ndarray:
    """56 eye movement values of one window (order: camera_feature_names)."""
    prep = _PreparedSignals(trip, detector, "camera", None, None)
    return _one_window_block(prep, window, "eye")


def gaze_event_features(events: list[GazeEvent], window: Window) -> np.ndarray:
    """58 gaze event values of one window, from a precomputed event list."""
    mid, attrs = _event_arrays(events)
    out = np.empty(58)
    _event_block(mid, attrs, out, 0, window.start_s, window.end_s)
    return out


def head_movement_features(trip: TripRecording, window: Window,
                           detector: EventDetectorParams = EventDetectorParams()) -> np.ndarray:
    """56 head movement values of one window."""
    prep = _PreparedSignals(trip, detector, "camera", None, None)
    return _one_window_block(prep, window, "head")


def can_features(trip: TripRecording, window: Window, channels: list[str],
                 derivatives: dict[str, int] | None = None) -> np.ndarray:
    """CAN feature values of one window per the channel declaration."""
    prep = _PreparedSignals(trip, EventDetectorParams(), "can", channels, derivatives)
    return _one_window_block(prep, window, "can")


# ----------------------------------------------------------- streaming path

def iter_window_features(trip: TripRecording, spec: WindowSpec = WindowSpec(),
                         source: str = "camera",
                         detector: EventDetectorParams = EventDetectorParams(),
                         can_channels: list[str] | None = None,
                         can_derivatives: dict[str, int] | None = None):
    """Yield one FeatureVector per window, in time order, dropped ones included.

    Window boundaries advance by two monotone sample pointers, so a
    consumer sees each window as soon as its last sample is in hand.
    Values are computed by the same kernel as the batch path and are
    bit-identical to it.
    """
    prep = _PreparedSignals(trip, detector, source, can_channels, can_derivatives)
    ends = _window_ends(float(trip.t_s[0]), trip.duration_s, spec)
    width = len(feature_names(source, can_channels, can_derivatives))
    t = trip.t_s
    n = t.size
    can_t = prep.can_t
    i0 = i1 = j0 = j1 = 0
    for e in ends:
        s = e - spec.length_s
        while i0 < n and t[i0] < s:
            i0 += 1
        while i1 < n and t[i1] < e:
            i1 += 1
        if can_t is not None:
            m = can_t.size
            while j0 < m and can_t[j0] < s:
                j0 += 1
            while j1 < m and can_t[j1] < e:
                j1 += 1
        total = i1 - i0
        frac = (prep.valid_cs[i1] - prep.valid_cs[i0]) / total if total else 0.0
        if frac < spec.min_valid_fraction:
            yield FeatureVector(float(e), np.full(width, np.nan), float(frac), True)
            continue
        row = np.empty(width)
        try:
            prep.fill_row(row, float(s), float(e), i0, i1, j0, j1)
        except AllInvalid:
            yield FeatureVector(float(e), np.full(width, np.nan), float(frac), True)
            continue
        yield FeatureVector(float(e), row, float(frac), False)


# ------------------------------------------------------------ dataset build

def trip_feature_table(trip: TripRecording, spec: WindowSpec = WindowSpec(),
                       source: str = "camera",
                       detector: EventDetectorParams = EventDetectorParams(),
                       can_channels: list[str] | None = None,
                       can_derivatives: dict[str, int] | None = None) -> FeatureMatrix:
    """Feature matrix of a single trip (kept windows only)."""
    ends, values, n_dropped = _trip_rows(trip, spec, source, detector,
                                         can_channels, can_derivatives)
    n = len(ends)
    return FeatureMatrix(
        feature_names=feature_names(source, can_channels, can_derivatives),
        values=values,
        participant_id=np.full(n, trip.participant_id, dtype=object),
        trip_id=np.full(n, trip.trip_id, dtype=object),
        scenario=np.full(n, trip.scenario, dtype=object),
        block=np.full(n, trip.block, dtype=object),
        bac_gdl=np.full(n, trip.bac_gdl, dtype=np.float64),
        window_end_s=np.asarray(ends, dtype=np.float64),
        n_dropped=n_dropped,
    )


def concat_tables(tables: list[FeatureMatrix], names: list[str]) -> FeatureMatrix:
    """Stack per-trip tables (same feature set) into one matrix."""
    if not tables or all(t.n_rows == 0 for t in tables):
        raise EmptyMatrix("no windows survived extraction")
    return FeatureMatrix(
        feature_names=names,
        values=np.vstack([t.values for t in tables]),
        participant_id=np.concatenate([t.participant_id for t in tables]),
        trip_id=np.concatenate([t.trip_id for t in tables]),
        scenario=np.concatenate([t.scenario for t in tables]),
        block=np.concatenate([t.block for t in tables]),
        bac_gdl=np.concatenate([t.bac_gdl for t in tables]),
        window_end_s=np.concatenate([t.window_end_s for t in tables]),
        n_dropped=sum(t.n_dropped for t in tables),
    )


def build_dataset(trips, spec: WindowSpec = WindowSpec(), source: str = "camera",
                  detector: EventDetectorParams = EventDetectorParams(),
                  can_channels: list[str] | None = None,
                  can_derivatives: dict[str, int] | None = None) -> FeatureMatrix:
    """Stack per-trip feature tables; rows follow trip order, then time."""
    names = feature_names(source, can_channels, can_derivatives)
    tables = [trip_feature_table(trip, spec, source, detector,
                                 can_channels, can_derivatives)
              for trip in trips]
    return concat_tables(tables, names)


# -------------------------------------------------------------- persistence

def write_matrix_csv(matrix: FeatureMatrix, path) -> None:
    """Metadata columns first, then features; floats as shortest round-trip."""
    header = META_COLUMNS + matrix.feature_names
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(matrix.n_rows):
            cells = [str(matrix.participant_id[i]), str(matrix.trip_id[i]),
                     str(matrix.scenario[i]), str(matrix.block[i]),
                     repr(float(matrix.bac_gdl[i])), repr(float(matrix.window_end_s[i]))]
            cells += [repr(float(v)) for v in matrix.values[i]]
            fh.write(",".join(cells) + "\n")


def read_matrix_csv(path) -> FeatureMatrix:
    frame = pd.read_csv(path, dtype={c: str for c in META_COLUMNS[:4]},
                        float_precision="round_trip")
    cols = list(frame.columns)
    if cols[:len(META_COLUMNS)] != META_COLUMNS:
        raise MalformedCsv(f"{path}: expected metadata columns {META_COLUMNS}")
    names = cols[len(META_COLUMNS):]
    if not names:
        raise MalformedCsv(f"{path}: no feature columns")
    return FeatureMatrix(
        feature_names=names,
        values=frame[names].to_numpy(dtype=np.float64),
        participant_id=frame["participant_id"].to_numpy(dtype=object),
        trip_id=frame["trip_id"].to_numpy(dtype=object),
        scenario=frame["scenario"].to_numpy(dtype=object),
        block=frame["block"].to_numpy(dtype=object),
        bac_gdl=frame["bac_gdl"].to_numpy(dtype=np.float64),
        window_end_s=frame["window_end_s"].to_numpy(dtype=np.float64),
    )


def write_matrix_binary(matrix: FeatureMatrix, path) -> None:
    """Compact numeric form: magic, u32 rows/cols, f64 column-major values,
    then a name table of u16-length-prefixed UTF-8 feature names.  Metadata
    is not stored; pair with the CSV form when provenance must travel."""
    rows, cols = matrix.values.shape
    with open(path, "wb") as fh:
        fh.write(_BINARY_MAGIC)
        fh.write(struct.pack("<II", rows, cols))
        fh.write(np.asfortranarray(matrix.values, dtype="<f8").tobytes(order="F"))
        for name in matrix.feature_names:
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)


def read_matrix_binary(path) -> tuple[np.ndarray, list[str]]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:5] != _BINARY_MAGIC:
        raise MalformedCsv(f"{path}: bad magic, not a feature matrix file")
    rows, cols = struct.unpack_from("<II", blob, 5)
    off = 13
    nbytes = rows * cols * 8
    if len(blob) < off + nbytes:
        raise MalformedCsv(f"{path}: truncated value block")
    values = np.frombuffer(blob, dtype="<f8", count=rows * cols, offset=off)
    values = values.reshape((rows, cols), order="F").copy()
    off += nbytes
    names = []
    for _ in range(cols):
        if len(blob) < off + 2:
            raise MalformedCsv(f"{path}: truncated name table")
        (ln,) = struct.unpack_from("<H", blob, off)
        off += 2
        names.append(blob[off:off + ln].decode("utf-8"))
        off += ln
    return values, names