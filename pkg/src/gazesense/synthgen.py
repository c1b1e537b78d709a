"""Seeded synthetic gaze/head/CAN study generator.

Trips are built from an explicit alternating fixation/saccade process,
so every recording comes with the exact event list used to construct
it: a ground-truth oracle for the detection and feature pipeline, not a
physiological model.  Effect profiles push the process in the
directions associated with rising alcohol dose (longer fixations, fewer
and smaller saccades, noisier fixation and head drift); the magnitudes
are free parameters with documented defaults.

Time runs on a fixed-rate grid starting at 0.  Gaze during fixations is
the current target plus white jitter; saccades move between targets on
a minimum-jerk profile whose duration and peak velocity follow a
main-sequence relation (peak velocity grows with amplitude and
saturates).  Head position and the optional lane-position CAN channel
are stationary Ornstein-Uhlenbeck drifts.

Randomness is layered so output never depends on generation order or
parallelism: every trip derives its own stream from
(master seed, participant index, trip index), and per-participant
traits and doses derive from (master seed, participant index).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .errors import BadConfig
from .events import GazeEvent, events_to_csv
from .signals import BLOCKS, ManifestEntry, StudyManifest, TripRecording, save_manifest

__all__ = [
    "SCENARIOS",
    "EffectProfile",
    "ParticipantTraits",
    "SynthConfig",
    "NO_EFFECT",
    "default_profiles",
    "strong_profiles",
    "event_only_profiles",
    "interpolate_profile",
    "saccade_duration_s",
    "saccade_peak_velocity",
    "generate_trip",
    "generate_study",
    "write_trip_csv",
]

SCENARIOS = ("highway", "rural", "urban")

# Fixation durations: lognormal around a 450 ms median (drivers hold the
# road ahead for long stretches); a multiplier on the median scales the
# mean by exactly the same factor.  Densities much above 2.5 saccades/s
# leave the adaptive threshold no clean noise floor at 60 Hz.
_FIX_MEDIAN_S = 0.45
_FIX_SIGMA = 0.45
_MIN_FIX_S = 0.06

# Saccade amplitudes: gamma with 90 mm mean, clipped away from zero.
_AMP_SHAPE = 3.0
_AMP_SCALE_MM = 30.0
_MIN_AMP_MM = 5.0

# Gaze targets stay on a bounded screen region (mm, screen coordinates).
_BOUND_X_MM = 250.0
_BOUND_Y_MM = 150.0

_JITTER_SD_MM = 1.0

# Main sequence: duration grows linearly with amplitude expressed in
# visual degrees (10.5 mm per degree at the nominal viewing distance),
# so peak velocity rises with amplitude but saturates.
_MM_PER_DEG = 10.5
_SACC_D0_S = 0.021
_SACC_SLOPE_S_PER_DEG = 0.0022
_PEAK_OVER_MEAN = 1.875  # minimum-jerk peak/mean velocity ratio

# Head rest position (mm) and drift dynamics.
_HEAD_BASE_MM = (0.0, 0.0, 650.0)
_HEAD_SD_MM = (6.0, 6.0, 9.0)
_HEAD_THETA = 0.15  # 1/s mean reversion

# Lane-position drift (m), variance scaled by the profile's drift knob.
_LANE_SD_M = 0.25
_LANE_THETA = 0.3

_BAC_BY_BLOCK = {
    "no_alcohol": (0.0, 0.0),
    "moderate": (0.027, 0.003),
    "severe": (0.062, 0.005),
}


@dataclass(frozen=True)
class EffectProfile:
    """Multipliers an alcohol dose applies to the generating process.

    fixation_duration_scale (>= 1) multiplies the mean fixation
    duration; saccade_rate_scale and saccade_amplitude_scale (<= 1)
    thin out and shrink saccades; jitter_scale and head_drift_scale
    widen fixation noise and the slow drift processes.
    """

    fixation_duration_scale: float = 1.0
    saccade_rate_scale: float = 1.0
    saccade_amplitude_scale: float = 1.0
    jitter_scale: float = 1.0
    head_drift_scale: float = 1.0

    def __post_init__(self):
        for field in ("fixation_duration_scale", "saccade_rate_scale",
                      "saccade_amplitude_scale", "jitter_scale",
                      "head_drift_scale"):
            if not getattr(self, field) > 0.0:
                raise BadConfig(f"{field} must be positive")
        if self.fixation_duration_scale < 1.0:
            raise BadConfig("fixation_duration_scale must be >= 1")
        if self.saccade_rate_scale > 1.0:
            raise BadConfig("saccade_rate_scale must be <= 1")
        if self.saccade_amplitude_scale > 1.0:
            raise BadConfig("saccade_amplitude_scale must be <= 1")


NO_EFFECT = EffectProfile()


def default_profiles() -> dict[str, EffectProfile]:
    """Mild per-block profiles: fixation duration only."""
    return {
        "no_alcohol": NO_EFFECT,
        "moderate": EffectProfile(fixation_duration_scale=1.15),
        "severe": EffectProfile(fixation_duration_scale=1.30),
    }


def strong_profiles() -> dict[str, EffectProfile]:
    """Per-block profiles that move every effect channel."""
    return {
        "no_alcohol": NO_EFFECT,
        "moderate": EffectProfile(
            fixation_duration_scale=1.25, saccade_rate_scale=0.85,
            saccade_amplitude_scale=0.90, jitter_scale=1.15,
            head_drift_scale=1.25),
        "severe": EffectProfile(
            fixation_duration_scale=1.50, saccade_rate_scale=0.70,
            saccade_amplitude_scale=0.80, jitter_scale=1.30,
            head_drift_scale=1.50),
    }


def event_only_profiles() -> dict[str, EffectProfile]:
    """Profiles that change only the event process, not jitter or drift."""
    return {
        "no_alcohol": NO_EFFECT,
        "moderate": EffectProfile(fixation_duration_scale=1.30,
                                  saccade_rate_scale=0.80),
        "severe": EffectProfile(fixation_duration_scale=1.60,
                                saccade_rate_scale=0.65),
    }


def interpolate_profile(bac_gdl: float,
                        reference: EffectProfile | None = None,
                        reference_bac: float = 0.062) -> EffectProfile:
    """Profile with every scale interpolated linearly in BAC.

    At 0 the profile is all ones; at reference_bac it equals the
    reference (default: the strong severe profile).
    """
    if bac_gdl < 0:
        raise BadConfig("bac_gdl must be non-negative")
    if reference_bac <= 0:
        raise BadConfig("reference_bac must be positive")
    if reference is None:
        reference = strong_profiles()["severe"]
    f = bac_gdl / reference_bac
    mix = lambda v: 1.0 + f * (v - 1.0)
    return EffectProfile(
        fixation_duration_scale=mix(reference.fixation_duration_scale),
        saccade_rate_scale=mix(reference.saccade_rate_scale),
        saccade_amplitude_scale=mix(reference.saccade_amplitude_scale),
        jitter_scale=mix(reference.jitter_scale),
        head_drift_scale=mix(reference.head_drift_scale),
    )


@dataclass(frozen=True)
class ParticipantTraits:
    """Stable per-participant variation of the generating process."""

    fixation_scale: float = 1.0

    def __post_init__(self):
        if not self.fixation_scale > 0:
            raise BadConfig("fixation_scale must be positive")


@dataclass(frozen=True)
class SynthConfig:
    """Shape of a synthetic study."""

    n_participants: int = 10
    trips_per_block: int = 3
    duration_s: float = 600.0
    sample_rate_hz: float = 60.0
    trait_spread: float = 0.2
    master_seed: int = 42
    with_can: bool = False

    def __post_init__(self):
        if self.n_participants < 1:
            raise BadConfig("n_participants must be >= 1")
        if self.trips_per_block < 1:
            raise BadConfig("trips_per_block must be >= 1")
        if self.duration_s < 120.0:
            raise BadConfig("duration_s must be >= 120")
        if self.sample_rate_hz <= 0:
            raise BadConfig("sample_rate_hz must be positive")
        if not 0.0 <= self.trait_spread < 1.0:
            raise BadConfig("trait_spread must be in [0, 1)")


def saccade_duration_s(amplitude_mm: float) -> float:
    """Main-sequence saccade duration for an amplitude in mm."""
    return _SACC_D0_S + _SACC_SLOPE_S_PER_DEG * (amplitude_mm / _MM_PER_DEG)


def saccade_peak_velocity(amplitude_mm: float) -> float:
    """Main-sequence peak velocity (mm/s): increasing, saturating."""
    return _PEAK_OVER_MEAN * amplitude_mm / saccade_duration_s(amplitude_mm)


def _min_jerk(tau: np.ndarray) -> np.ndarray:
    return tau**3 * (10.0 - 15.0 * tau + 6.0 * tau * tau)


def _draw_target(rng: np.random.Generator, current: np.ndarray,
                 amplitude: float) -> np.ndarray:
    """A point at the given distance from current, inside the screen bounds."""
    for _ in range(32):
        angle = rng.uniform(0.0, 2.0 * math.pi)
        cand = current + amplitude * np.array([math.cos(angle), math.sin(angle)])
        if abs(cand[0]) <= _BOUND_X_MM and abs(cand[1]) <= _BOUND_Y_MM:
            return cand
    # amplitude too large for any direction from here: clip to the bounds
    return np.array([
        float(np.clip(cand[0], -_BOUND_X_MM, _BOUND_X_MM)),
        float(np.clip(cand[1], -_BOUND_Y_MM, _BOUND_Y_MM)),
    ])


def _ou_series(rng: np.random.Generator, n: int, dt: float, sd: float,
               theta: float) -> np.ndarray:
    """Stationary Ornstein-Uhlenbeck samples (mean 0, given sd)."""
    a = math.exp(-theta * dt)
    noise_sd = sd * math.sqrt(1.0 - a * a)
    out = np.empty(n)
    out[0] = sd * rng.standard_normal()
    shocks = noise_sd * rng.standard_normal(n - 1)
    # first-order recursion out[i] = a*out[i-1] + shocks[i-1]
    out[1:], _ = lfilter([1.0], [1.0, -a], shocks, zi=np.array([a * out[0]]))
    return out


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def generate_trip(profile: EffectProfile, duration_s: float, seed, *,
                  traits: ParticipantTraits | None = None,
                  sample_rate_hz: float = 60.0,
                  participant_id: str = "p00", trip_id: str = "trip000",
                  scenario: str = "highway", block: str = "no_alcohol",
                  bac_gdl: float = 0.0,
                  with_can: bool = False) -> tuple[TripRecording, list[GazeEvent]]:
    """Build one trip and the exact event list it was constructed from.

    Fixation ground-truth events carry zero amplitude and velocity (the
    jitter is not a movement); saccade events carry the constructed
    amplitude, the main-sequence peak velocity and the mean velocity
    amplitude/duration.
    """
    if duration_s < 120.0:
        raise BadConfig("duration_s must be >= 120")
    if sample_rate_hz <= 0:
        raise BadConfig("sample_rate_hz must be positive")
    if traits is None:
        traits = ParticipantTraits()
    rng = _as_rng(seed)

    dt = 1.0 / sample_rate_hz
    n = int(round(duration_s * sample_rate_hz)) + 1
    t = np.arange(n) * dt

    mean_scale = profile.fixation_duration_scale * traits.fixation_scale
    mu = math.log(_FIX_MEDIAN_S * mean_scale)

    def draw_fix() -> float:
        return max(_MIN_FIX_S, float(rng.lognormal(mu, _FIX_SIGMA)))

    gaze = np.empty((n, 2))
    events: list[GazeEvent] = []
    target = np.array([rng.uniform(-100.0, 100.0), rng.uniform(-60.0, 60.0)])
    jitter_sd = _JITTER_SD_MM * profile.jitter_scale

    def fill_fixation(i0: int, i1: int, point: np.ndarray) -> None:
        m = i1 - i0
        if m > 0:
            gaze[i0:i1] = point + jitter_sd * rng.standard_normal((m, 2))

    fix_start = 0.0
    fix_dur = draw_fix()
    while True:
        fix_end = fix_start + fix_dur
        if fix_end >= duration_s:
            fix_end = duration_s
            i0 = int(np.searchsorted(t, fix_start, side="left"))
            fill_fixation(i0, n, target)
            events.append(GazeEvent("fixation", fix_start, fix_end,
                                    fix_end - fix_start, 0.0, 0.0, 0.0))
            break
        # a suppressed saccade extends the current fixation instead
        if rng.uniform() >= profile.saccade_rate_scale:
            fix_dur += draw_fix()
            continue
        amp = max(_MIN_AMP_MM,
                  float(rng.gamma(_AMP_SHAPE, _AMP_SCALE_MM))
                  * profile.saccade_amplitude_scale)
        new_target = _draw_target(rng, target, amp)
        amp = float(np.hypot(*(new_target - target)))
        sacc_dur = saccade_duration_s(amp)
        sacc_end = fix_end + sacc_dur
        if sacc_end >= duration_s:
            fix_end = duration_s
            i0 = int(np.searchsorted(t, fix_start, side="left"))
            fill_fixation(i0, n, target)
            events.append(GazeEvent("fixation", fix_start, fix_end,
                                    fix_end - fix_start, 0.0, 0.0, 0.0))
            break
        i0 = int(np.searchsorted(t, fix_start, side="left"))
        i1 = int(np.searchsorted(t, fix_end, side="left"))
        fill_fixation(i0, i1, target)
        events.append(GazeEvent("fixation", fix_start, fix_end,
                                fix_end - fix_start, 0.0, 0.0, 0.0))
        i2 = int(np.searchsorted(t, sacc_end, side="left"))
        if i2 > i1:
            tau = (t[i1:i2] - fix_end) / sacc_dur
            s = _min_jerk(tau)[:, None]
            gaze[i1:i2] = target + s * (new_target - target)
        events.append(GazeEvent("saccade", fix_end, sacc_end, sacc_dur, amp,
                                saccade_peak_velocity(amp), amp / sacc_dur))
        target = new_target
        fix_start = sacc_end
        fix_dur = draw_fix()

    head_sd = np.asarray(_HEAD_SD_MM) * profile.head_drift_scale
    eye = np.column_stack([
        base + _ou_series(rng, n, dt, float(sd), _HEAD_THETA)
        for base, sd in zip(_HEAD_BASE_MM, head_sd)
    ])

    can = None
    if with_can:
        from .signals import SignalChannel

        lane = _ou_series(rng, n, dt, _LANE_SD_M * profile.head_drift_scale,
                          _LANE_THETA)
        can = {"lane_position": SignalChannel(
            t, lane, np.ones(n, dtype=bool), name="lane_position", units="m")}

    trip = TripRecording(
        participant_id=participant_id, trip_id=trip_id, scenario=scenario,
        block=block, bac_gdl=bac_gdl, t_s=t,
        gaze_x_mm=gaze[:, 0], gaze_y_mm=gaze[:, 1],
        eye_x_mm=eye[:, 0], eye_y_mm=eye[:, 1], eye_z_mm=eye[:, 2],
        valid=np.ones(n, dtype=bool), can=can,
    )
    return trip, events


def write_trip_csv(trip: TripRecording, path) -> None:
    """Write a trip in the gaze CSV format the loader expects."""
    data = np.column_stack([
        trip.t_s, trip.gaze_x_mm, trip.gaze_y_mm,
        trip.eye_x_mm, trip.eye_y_mm, trip.eye_z_mm,
        trip.valid.astype(np.float64),
    ])
    with open(path, "w") as fh:
        fh.write("t_s,gaze_x_mm,gaze_y_mm,eye_x_mm,eye_y_mm,eye_z_mm,valid\n")
        np.savetxt(fh, data, fmt="%.6f,%.3f,%.3f,%.3f,%.3f,%.3f,%d")


def _write_can_csv(trip: TripRecording, path) -> None:
    lane = trip.can["lane_position"]
    data = np.column_stack([trip.t_s, lane.values])
    with open(path, "w") as fh:
        fh.write("t_s,lane_position\n")
        np.savetxt(fh, data, fmt="%.6f,%.6f")


def _draw_bac(rng: np.random.Generator, block: str) -> float:
    mean, sd = _BAC_BY_BLOCK[block]
    if block == "no_alcohol":
        return 0.0
    v = float(rng.normal(mean, sd))
    if block == "severe":
        return max(v, 0.05)
    return min(max(v, 0.001), 0.03)


def _participant_setup(cfg: SynthConfig, p_idx: int):
    """Traits and per-block doses, from the participant's own stream."""
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=cfg.master_seed, spawn_key=(p_idx,)))
    lo, hi = 1.0 - cfg.trait_spread, 1.0 + cfg.trait_spread
    traits = ParticipantTraits(fixation_scale=float(rng.uniform(lo, hi)))
    bac = {block: _draw_bac(rng, block) for block in BLOCKS}
    return traits, bac


def generate_study(cfg: SynthConfig, out_dir,
                   profiles: dict[str, EffectProfile] | None = None,
                   write_truth: bool = False) -> tuple[StudyManifest, list[Path]]:
    """Write a full study (manifest + per-trip CSVs) under out_dir.

    Each trip is generated from an independent substream keyed by
    (master seed, participant index, trip index), so the output is
    identical no matter how generation is ordered or parallelized.
    """
    if profiles is None:
        profiles = default_profiles()
    missing = [b for b in BLOCKS if b not in profiles]
    if missing:
        raise BadConfig(f"profiles missing blocks {missing}")

    out = Path(out_dir)
    trips_dir = out / "trips"
    trips_dir.mkdir(parents=True, exist_ok=True)
    if cfg.with_can:
        (out / "can").mkdir(exist_ok=True)
    if write_truth:
        (out / "truth").mkdir(exist_ok=True)

    entries: list[ManifestEntry] = []
    written: list[Path] = []
    for p_idx in range(cfg.n_participants):
        pid = f"p{p_idx:02d}"
        traits, bac = _participant_setup(cfg, p_idx)
        trip_idx = 0
        for block in BLOCKS:
            for k in range(cfg.trips_per_block):
                scenario = SCENARIOS[k % len(SCENARIOS)]
                trip_id = f"{pid}_{block}_{k:02d}"
                seed = np.random.SeedSequence(
                    entropy=cfg.master_seed, spawn_key=(p_idx, trip_idx))
                trip, truth = generate_trip(
                    profiles[block], cfg.duration_s, seed, traits=traits,
                    sample_rate_hz=cfg.sample_rate_hz,
                    participant_id=pid, trip_id=trip_id, scenario=scenario,
                    block=block, bac_gdl=bac[block], with_can=cfg.with_can)
                rel = f"trips/{trip_id}.csv"
                write_trip_csv(trip, out / rel)
                written.append(out / rel)
                can_rel = None
                if cfg.with_can:
                    can_rel = f"can/{trip_id}.csv"
                    _write_can_csv(trip, out / can_rel)
                    written.append(out / can_rel)
                if write_truth:
                    truth_path = out / "truth" / f"{trip_id}_events.csv"
                    events_to_csv(truth, truth_path)
                    written.append(truth_path)
                entries.append(ManifestEntry(
                    participant_id=pid, trip_id=trip_id, scenario=scenario,
                    block=block, bac_gdl=bac[block], file_path=rel,
                    can_file_path=can_rel))
                trip_idx += 1

    manifest = StudyManifest(
        entries=entries,
        can_channels=["lane_position"] if cfg.with_can else [],
        can_derivatives={"lane_position": 2} if cfg.with_can else {},
        base_dir=out,
    )
    save_manifest(manifest, out / "manifest.json")
    written.append(out / "manifest.json")
    return manifest, written
