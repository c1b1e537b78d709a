"""Core gaze signal types and channel operations.

A trip is one continuous drive by one participant, recorded as a gaze
point on the stimulus plane (mm), an eye position in tracker space (mm)
and a per-sample validity flag, all nominally at 60 Hz.  Optional CAN
bus channels ride along at their own (30 Hz) time base.

All channel operations work on actual timestamps rather than assuming a
perfectly uniform grid, and propagate sample validity explicitly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import (
    BadParams,
    EmptyTrip,
    LengthMismatch,
    MalformedCsv,
    MetadataMismatch,
    NegativeInput,
    NonMonotonicTime,
    TripTooShort,
)

__all__ = [
    "BLOCKS",
    "GAZE_CSV_COLUMNS",
    "GazeSample",
    "SignalChannel",
    "TripRecording",
    "ManifestEntry",
    "StudyManifest",
    "ValidationReport",
    "load_trip",
    "load_study_trip",
    "load_manifest",
    "save_manifest",
    "validate_trip",
    "interpolate_gaps",
    "differentiate",
    "smooth",
    "combine_norm",
    "brac_to_bac",
    "to_visual_degrees",
]

# Dose blocks, in increasing-dose order.
BLOCKS = ("no_alcohol", "moderate", "severe")

GAZE_CSV_COLUMNS = [
    "t_s",
    "gaze_x_mm",
    "gaze_y_mm",
    "eye_x_mm",
    "eye_y_mm",
    "eye_z_mm",
    "valid",
]

# Blocks constrain the blood alcohol concentration (g/dL).
_BAC_SLACK = 1e-12
_MODERATE_MAX = 0.03
_SEVERE_MIN = 0.05


@dataclass(frozen=True)
class GazeSample:
    """One gaze sample: timestamp, gaze point, eye position, validity."""

    t_s: float
    gaze_x_mm: float
    gaze_y_mm: float
    eye_x_mm: float
    eye_y_mm: float
    eye_z_mm: float
    valid: bool


@dataclass
class SignalChannel:
    """A named scalar time series with per-sample validity."""

    t: np.ndarray
    values: np.ndarray
    valid: np.ndarray
    name: str = ""
    units: str = ""

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        self.valid = np.asarray(self.valid, dtype=bool)
        if not (len(self.t) == len(self.values) == len(self.valid)):
            raise LengthMismatch(
                f"channel {self.name!r}: t/values/valid lengths differ "
                f"({len(self.t)}/{len(self.values)}/{len(self.valid)})"
            )

    def __len__(self) -> int:
        return len(self.values)

    def copy(self) -> "SignalChannel":
        return SignalChannel(
            self.t.copy(), self.values.copy(), self.valid.copy(),
            name=self.name, units=self.units,
        )


@dataclass
class TripRecording:
    """One trip: columnar gaze arrays plus metadata and optional CAN channels."""

    participant_id: str
    trip_id: str
    scenario: str
    block: str
    bac_gdl: float
    t_s: np.ndarray
    gaze_x_mm: np.ndarray
    gaze_y_mm: np.ndarray
    eye_x_mm: np.ndarray
    eye_y_mm: np.ndarray
    eye_z_mm: np.ndarray
    valid: np.ndarray
    can: dict[str, SignalChannel] | None = None

    @property
    def n_samples(self) -> int:
        return len(self.t_s)

    @property
    def duration_s(self) -> float:
        """Time span between first and last sample."""
        return float(self.t_s[-1] - self.t_s[0]) if self.n_samples else 0.0

    def sample(self, i: int) -> GazeSample:
        return GazeSample(
            float(self.t_s[i]),
            float(self.gaze_x_mm[i]),
            float(self.gaze_y_mm[i]),
            float(self.eye_x_mm[i]),
            float(self.eye_y_mm[i]),
            float(self.eye_z_mm[i]),
            bool(self.valid[i]),
        )

    def channel(self, column: str) -> SignalChannel:
        """A gaze column as a SignalChannel sharing the trip's validity."""
        if column not in GAZE_CSV_COLUMNS[1:-1]:
            raise BadParams(f"unknown gaze column {column!r}")
        return SignalChannel(
            self.t_s, getattr(self, column), self.valid,
            name=column, units="mm",
        )


@dataclass(frozen=True)
class ManifestEntry:
    """One trip's metadata and file location within a study."""

    participant_id: str
    trip_id: str
    scenario: str
    block: str
    bac_gdl: float
    file_path: str
    can_file_path: str | None = None


@dataclass
class StudyManifest:
    """A study: trip entries plus the declared CAN channel set."""

    entries: list[ManifestEntry]
    can_channels: list[str] = field(default_factory=list)
    # Derivative orders per CAN channel (0 = use the raw signal only).
    can_derivatives: dict[str, int] = field(default_factory=dict)
    base_dir: Path | None = None

    def participants(self) -> list[str]:
        seen: list[str] = []
        for e in self.entries:
            if e.participant_id not in seen:
                seen.append(e.participant_id)
        return seen

    def resolve(self, rel: str) -> Path:
        p = Path(rel)
        if not p.is_absolute() and self.base_dir is not None:
            p = self.base_dir / p
        return p


@dataclass(frozen=True)
class ValidationReport:
    """Quality summary of one trip."""

    nominal_rate_hz: float
    rate_ok: bool
    gap_count: int
    invalid_fraction: float
    duration_s: float


def _check_block_bac(block: str, bac_gdl: float) -> None:
    if block not in BLOCKS:
        raise MetadataMismatch(f"unknown block {block!r}")
    if block == "no_alcohol" and bac_gdl != 0.0:
        raise MetadataMismatch(f"no_alcohol trip with BAC {bac_gdl}")
    if block == "moderate" and not (0.0 < bac_gdl <= _MODERATE_MAX + _BAC_SLACK):
        raise MetadataMismatch(f"moderate trip with BAC {bac_gdl}")
    if block == "severe" and bac_gdl < _SEVERE_MIN - _BAC_SLACK:
        raise MetadataMismatch(f"severe trip with BAC {bac_gdl}")


def load_trip(gaze_csv_path, entry: ManifestEntry,
              can_channels: list[str] | None = None,
              can_csv_path=None) -> TripRecording:
    """Load one trip's gaze CSV (and optional CAN CSV) into a TripRecording.

    The gaze CSV must carry exactly the documented header.  Values in
    rows flagged valid must be finite; invalid rows may hold anything.
    can_csv_path overrides the entry's (possibly relative) CAN path.
    """
    path = Path(gaze_csv_path)
    try:
        frame = pd.read_csv(path)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise MalformedCsv(f"{path}: {exc}") from exc
    if list(frame.columns) != GAZE_CSV_COLUMNS:
        raise MalformedCsv(
            f"{path}: expected header {','.join(GAZE_CSV_COLUMNS)}, "
            f"got {','.join(map(str, frame.columns))}"
        )
    if len(frame) == 0:
        raise EmptyTrip(f"{path}: no samples")

    try:
        cols = {c: frame[c].to_numpy(dtype=np.float64) for c in GAZE_CSV_COLUMNS}
    except (TypeError, ValueError) as exc:
        raise MalformedCsv(f"{path}: non-numeric cell ({exc})") from exc

    t = cols["t_s"]
    if not np.all(np.isfinite(t)):
        raise MalformedCsv(f"{path}: non-finite timestamp")
    if np.any(np.diff(t) <= 0.0):
        raise NonMonotonicTime(f"{path}: timestamps not strictly increasing")

    raw_valid = cols["valid"]
    if not np.all(np.isin(raw_valid, (0.0, 1.0))):
        raise MalformedCsv(f"{path}: valid column must be 0 or 1")
    valid = raw_valid.astype(bool)

    value_cols = GAZE_CSV_COLUMNS[1:-1]
    for c in value_cols:
        if not np.all(np.isfinite(cols[c][valid])):
            raise MalformedCsv(f"{path}: non-finite {c} in a valid row")

    _check_block_bac(entry.block, entry.bac_gdl)

    can = None
    if entry.can_file_path is not None and can_channels:
        can = _load_can_csv(Path(can_csv_path or entry.can_file_path),
                            can_channels)

    return TripRecording(
        participant_id=entry.participant_id,
        trip_id=entry.trip_id,
        scenario=entry.scenario,
        block=entry.block,
        bac_gdl=entry.bac_gdl,
        t_s=t,
        gaze_x_mm=cols["gaze_x_mm"],
        gaze_y_mm=cols["gaze_y_mm"],
        eye_x_mm=cols["eye_x_mm"],
        eye_y_mm=cols["eye_y_mm"],
        eye_z_mm=cols["eye_z_mm"],
        valid=valid,
        can=can,
    )


def load_study_trip(manifest: StudyManifest, entry: ManifestEntry) -> TripRecording:
    """Load one manifest entry, resolving paths against the manifest dir."""
    can_path = (manifest.resolve(entry.can_file_path)
                if entry.can_file_path is not None else None)
    return load_trip(manifest.resolve(entry.file_path), entry,
                     can_channels=manifest.can_channels or None,
                     can_csv_path=can_path)


def _load_can_csv(path: Path, channels: list[str]) -> dict[str, SignalChannel]:
    try:
        frame = pd.read_csv(path)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise MalformedCsv(f"{path}: {exc}") from exc
    if len(frame.columns) == 0 or frame.columns[0] != "t_s":
        raise MalformedCsv(f"{path}: first column must be t_s")
    missing = [c for c in channels if c not in frame.columns]
    if missing:
        raise MalformedCsv(f"{path}: missing declared channels {missing}")
    t = frame["t_s"].to_numpy(dtype=np.float64)
    if np.any(np.diff(t) <= 0.0):
        raise NonMonotonicTime(f"{path}: timestamps not strictly increasing")
    out = {}
    for c in channels:
        v = frame[c].to_numpy(dtype=np.float64)
        if not np.all(np.isfinite(v)):
            raise MalformedCsv(f"{path}: non-finite value in {c}")
        out[c] = SignalChannel(t, v, np.ones(len(v), dtype=bool), name=c)
    return out


def load_manifest(path) -> StudyManifest:
    """Read a study manifest JSON; relative paths resolve against its directory."""
    path = Path(path)
    with open(path) as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict) or "entries" not in doc:
        raise MalformedCsv(f"{path}: manifest must be an object with 'entries'")
    entries = []
    for i, raw in enumerate(doc["entries"]):
        try:
            entries.append(ManifestEntry(
                participant_id=str(raw["participant_id"]),
                trip_id=str(raw["trip_id"]),
                scenario=str(raw["scenario"]),
                block=str(raw["block"]),
                bac_gdl=float(raw["bac_gdl"]),
                file_path=str(raw["file_path"]),
                can_file_path=(str(raw["can_file_path"])
                               if raw.get("can_file_path") is not None else None),
            ))
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedCsv(f"{path}: bad entry {i}: {exc}") from exc
        _check_block_bac(entries[-1].block, entries[-1].bac_gdl)
    return StudyManifest(
        entries=entries,
        can_channels=[str(c) for c in doc.get("can_channels", [])],
        can_derivatives={str(k): int(v)
                         for k, v in doc.get("can_derivatives", {}).items()},
        base_dir=path.parent,
    )


def save_manifest(manifest: StudyManifest, path) -> None:
    doc = {
        "schema_version": 1,
        "can_channels": manifest.can_channels,
        "can_derivatives": manifest.can_derivatives,
        "entries": [
            {
                "participant_id": e.participant_id,
                "trip_id": e.trip_id,
                "scenario": e.scenario,
                "block": e.block,
                "bac_gdl": e.bac_gdl,
                "file_path": e.file_path,
                **({"can_file_path": e.can_file_path}
                   if e.can_file_path is not None else {}),
            }
            for e in manifest.entries
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def validate_trip(trip: TripRecording, expected_rate_hz: float = 60.0,
                  rate_tolerance: float = 0.05) -> ValidationReport:
    """Summarize a trip's sampling rate, dropouts and validity.

    A gap is either a maximal run of invalid samples or a jump between
    consecutive timestamps larger than 1.5x the nominal spacing.
    """
    n = trip.n_samples
    if n < 2:
        raise EmptyTrip("trip has fewer than 2 samples")
    duration = trip.duration_s
    rate = (n - 1) / duration
    rate_ok = abs(rate - expected_rate_hz) <= rate_tolerance * expected_rate_hz

    invalid = ~trip.valid
    # Count maximal invalid runs.
    starts = int(np.sum(invalid[1:] & ~invalid[:-1])) + int(invalid[0])
    # Count oversized timestamp jumps.
    dt = np.diff(trip.t_s)
    jumps = int(np.sum(dt > 1.5 / rate))

    return ValidationReport(
        nominal_rate_hz=float(rate),
        rate_ok=bool(rate_ok),
        gap_count=starts + jumps,
        invalid_fraction=float(np.mean(invalid)),
        duration_s=float(duration),
    )


def interpolate_gaps(channel: SignalChannel, max_gap_s: float = 0.075) -> SignalChannel:
    """Fill short invalid runs by linear interpolation on actual timestamps.

    A run qualifies when it is bounded by valid samples on both sides
    and the time between those bounding samples is at most max_gap_s.
    Valid samples are never altered; runs at the edges stay invalid.
    """
    if max_gap_s < 0:
        raise BadParams("max_gap_s must be non-negative")
    out = channel.copy()
    n = len(out)
    if n == 0:
        return out
    valid = out.valid
    invalid_idx = np.flatnonzero(~valid)
    if len(invalid_idx) == 0:
        return out
    # Maximal invalid runs as (start, stop) index pairs, stop exclusive.
    breaks = np.flatnonzero(np.diff(invalid_idx) > 1)
    run_starts = np.concatenate(([invalid_idx[0]], invalid_idx[breaks + 1]))
    run_stops = np.concatenate((invalid_idx[breaks] + 1, [invalid_idx[-1] + 1]))
    for a, b in zip(run_starts, run_stops):
        if a == 0 or b == n:
            continue
        lo, hi = a - 1, b  # bounding valid samples
        if not (valid[lo] and valid[hi]):
            continue
        if out.t[hi] - out.t[lo] > max_gap_s + 1e-12:
            continue
        frac = (out.t[a:b] - out.t[lo]) / (out.t[hi] - out.t[lo])
        out.values[a:b] = out.values[lo] + frac * (out.values[hi] - out.values[lo])
        out.valid[a:b] = True
    return out


def differentiate(channel: SignalChannel) -> SignalChannel:
    """Numerical time derivative: central differences on actual timestamps.

    Endpoints use one-sided differences.  An output sample is valid only
    when every input sample its stencil touches is valid.
    """
    n = len(channel)
    if n < 3:
        raise TripTooShort("differentiate needs at least 3 samples")
    t, x, valid = channel.t, channel.values, channel.valid
    if np.any(np.diff(t) <= 0.0):
        raise NonMonotonicTime("timestamps not strictly increasing")

    v = np.empty(n)
    v[1:-1] = (x[2:] - x[:-2]) / (t[2:] - t[:-2])
    v[0] = (x[1] - x[0]) / (t[1] - t[0])
    v[-1] = (x[-1] - x[-2]) / (t[-1] - t[-2])

    out_valid = np.empty(n, dtype=bool)
    out_valid[1:-1] = valid[:-2] & valid[1:-1] & valid[2:]
    out_valid[0] = valid[0] & valid[1]
    out_valid[-1] = valid[-2] & valid[-1]
    v[~out_valid] = np.nan

    units = f"{channel.units}/s" if channel.units else ""
    return SignalChannel(t, v, out_valid, name=f"d({channel.name})", units=units)


def _polyfit_at_zero(tau: np.ndarray, y: np.ndarray, order: int) -> float:
    """Least-squares polynomial value at tau = 0."""
    order = min(order, len(tau) - 1)
    if order <= 0:
        return float(np.mean(y))
    vand = np.vander(tau, order + 1, increasing=True)
    coef, *_ = np.linalg.lstsq(vand, y, rcond=None)
    return float(coef[0])


def smooth(channel: SignalChannel, window: int = 5, polyorder: int = 2) -> SignalChannel:
    """Savitzky-Golay style local polynomial smoothing on actual timestamps.

    Each output sample is the value at its own timestamp of a
    least-squares polynomial fit over a centered window.  Near the edges
    the window shrinks symmetrically (degenerating to the identity at
    the first and last sample).  Validity propagates through the window:
    an output is valid only when every sample under its window is.
    """
    if window < 1 or window % 2 == 0:
        raise BadParams("window must be a positive odd integer")
    if polyorder < 0 or polyorder >= window:
        raise BadParams("polyorder must satisfy 0 <= polyorder < window")

    out = channel.copy()
    n = len(channel)
    if n == 0:
        return out
    h = window // 2
    t, y, valid = channel.t, channel.values, channel.valid
    sm = out.values
    sm[:] = y  # size-1 windows at the very edges stay as-is

    if n >= window:
        # Interior: batched normal equations, offsets scaled for conditioning.
        tw = np.lib.stride_tricks.sliding_window_view(t, window)
        yw = np.lib.stride_tricks.sliding_window_view(y, window)
        centers = t[h:n - h]
        scale = max(float(np.median(np.diff(t))), 1e-12)
        tau = (tw - centers[:, None]) / scale
        vand = tau[:, :, None] ** np.arange(polyorder + 1)
        gram = np.einsum("nwi,nwj->nij", vand, vand)
        rhs = np.einsum("nwi,nw->ni", vand, yw)
        coef = np.linalg.solve(gram, rhs[:, :, None])
        sm[h:n - h] = coef[:, 0, 0]

    # Shrunken symmetric windows near the edges.
    for i in range(min(h, n)):
        for j in (i, n - 1 - i):
            hi = min(j, n - 1 - j)
            if hi == 0:
                continue
            lo, hii = j - hi, j + hi + 1
            sm[j] = _polyfit_at_zero(t[lo:hii] - t[j], y[lo:hii], polyorder)

    # Window-AND validity via a running count of invalid samples.
    bad = (~valid).astype(np.int64)
    cs = np.concatenate(([0], np.cumsum(bad)))
    out_valid = np.empty(n, dtype=bool)
    for_idx = np.arange(n)
    half = np.minimum(np.minimum(for_idx, n - 1 - for_idx), h)
    lo = for_idx - half
    hi = for_idx + half + 1
    out_valid[:] = (cs[hi] - cs[lo]) == 0
    sm[~out_valid] = np.nan
    out.valid = out_valid
    return out


def combine_norm(*channels: SignalChannel) -> SignalChannel:
    """Pointwise Euclidean norm of aligned channels.

    Output validity is the AND of the inputs' validity.
    """
    if not channels:
        raise BadParams("combine_norm needs at least one channel")
    first = channels[0]
    acc = np.zeros(len(first))
    valid = np.ones(len(first), dtype=bool)
    for ch in channels:
        if len(ch) != len(first) or not np.array_equal(ch.t, first.t):
            raise LengthMismatch("channels are not aligned on the same time base")
        with np.errstate(invalid="ignore"):
            acc = acc + np.square(ch.values)
        valid &= ch.valid
    norm = np.sqrt(acc)
    norm[~valid] = np.nan
    return SignalChannel(first.t, norm, valid, name="norm", units=first.units)


def brac_to_bac(brac_mgl: float) -> float:
    """Convert breath alcohol (mg/L) to blood alcohol (g/dL) by factor 0.2.

    The conversion is carried out in decimal arithmetic so that decimal
    instrument readings convert exactly (0.35 -> 0.07); plain binary
    multiplication would land one ulp off.
    """
    value = float(brac_mgl)
    if value < 0:
        raise NegativeInput(f"breath alcohol must be non-negative, got {value}")
    return float(Decimal(repr(value)) * Decimal("0.2"))


def to_visual_degrees(values_mm: np.ndarray, distance_mm: float) -> np.ndarray:
    """On-plane millimetres to visual angle in degrees at a viewing distance."""
    if distance_mm <= 0:
        raise BadParams("viewing distance must be positive")
    return np.degrees(np.arctan(np.asarray(values_mm, dtype=np.float64) / distance_mm))
