"""Decision-time aggregation of per-window probabilities.

A trip's window scores become an online decision signal in two ways:
the cumulative moving average (the value at time t uses every window up
to t), and non-overlapping majority-vote groups of consecutive windows.
Group decisions come from the literal vote of thresholded windows (ties
to the positive class); group scores are the group's mean probability,
which keeps ranking metrics meaningful where a binary vote would
collapse the curve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadGroupSize,
    BadParams,
    EmptyInput,
    InsufficientTrips,
    LengthMismatch,
    NonMonotonicTime,
)

__all__ = [
    "TripScoreSeries",
    "GroupedTrip",
    "cumulative_moving_average",
    "majority_vote_groups",
    "series_from_report",
    "decision_time_curve",
    "group_size_sweep",
]

DEFAULT_GROUP_SIZES = (1, 5, 30, 60, 90, 120, 150, 180)


@dataclass
class TripScoreSeries:
    """Per-window positive-class probabilities of one trip, in time order."""

    trip_id: str
    window_end_s: np.ndarray
    probability: np.ndarray
    label: int
    participant_id: str = ""
    block: str = ""
    scenario: str = ""

    def __post_init__(self):
        self.window_end_s = np.asarray(self.window_end_s, dtype=np.float64)
        self.probability = np.asarray(self.probability, dtype=np.float64)
        if self.window_end_s.shape[0] != self.probability.shape[0]:
            raise LengthMismatch(
                f"trip {self.trip_id}: {self.window_end_s.shape[0]} times vs "
                f"{self.probability.shape[0]} probabilities")
        if self.window_end_s.size == 0:
            raise EmptyInput(f"trip {self.trip_id}: empty score series")
        if np.any(np.diff(self.window_end_s) <= 0):
            raise NonMonotonicTime(
                f"trip {self.trip_id}: window times must strictly increase")
        if np.any((self.probability < 0) | (self.probability > 1)):
            raise BadParams(f"trip {self.trip_id}: probabilities outside [0, 1]")

    def __len__(self) -> int:
        return self.window_end_s.shape[0]


@dataclass
class GroupedTrip:
    """Majority-vote groups of one trip: decision, mean score, group end."""

    trip_id: str
    label: int
    group_end_s: np.ndarray
    decision: np.ndarray
    score: np.ndarray
    participant_id: str = ""


def cumulative_moving_average(series: TripScoreSeries) -> TripScoreSeries:
    """Running mean of the probabilities; timestamps are kept as-is."""
    cma = np.cumsum(series.probability) / np.arange(1, len(series) + 1)
    return TripScoreSeries(
        trip_id=series.trip_id, window_end_s=series.window_end_s.copy(),
        probability=cma, label=series.label,
        participant_id=series.participant_id, block=series.block,
        scenario=series.scenario,
    )


def majority_vote_groups(series: TripScoreSeries, group_size: int,
                         threshold: float = 0.5) -> GroupedTrip:
    """Partition consecutive windows into groups of ``group_size``.

    The final partial group is kept.  Each window votes by thresholding
    its probability; the group decision is the majority vote with exact
    ties going positive, and the group score is the mean probability.
    """
    if not isinstance(group_size, (int, np.integer)) or group_size < 1:
        raise BadGroupSize(f"group_size must be an integer >= 1, got {group_size!r}")
    n = len(series)
    n_groups = math.ceil(n / group_size)
    ends = np.empty(n_groups)
    decisions = np.empty(n_groups, dtype=np.int64)
    scores = np.empty(n_groups)
    votes = (series.probability >= threshold).astype(np.int64)
    for k in range(n_groups):
        a = k * group_size
        b = min(a + group_size, n)
        ends[k] = series.window_end_s[b - 1]
        scores[k] = float(np.mean(series.probability[a:b]))
        ones = int(votes[a:b].sum())
        decisions[k] = 1 if 2 * ones >= (b - a) else 0
    return GroupedTrip(trip_id=series.trip_id, label=series.label,
                       group_end_s=ends, decision=decisions, score=scores,
                       participant_id=series.participant_id)


def series_from_report(report: dict) -> list[TripScoreSeries]:
    """Rebuild each test trip's score series from an evaluation report."""
    if report.get("task") == "multiclass":
        raise BadParams("decision aggregation applies to the binary tasks")
    out = []
    for fold in report["folds"]:
        rec = fold["test"]
        trip_ids = np.asarray(rec["trip_id"], dtype=object)
        ends = np.asarray(rec["window_end_s"], dtype=np.float64)
        scores = np.asarray(rec["score"], dtype=np.float64)
        labels = np.asarray(rec["label"])
        blocks = np.asarray(rec["block"], dtype=object)
        scenarios = np.asarray(rec["scenario"], dtype=object)
        for trip in sorted(set(trip_ids.tolist())):
            mask = trip_ids == trip
            order = np.argsort(ends[mask], kind="mergesort")
            idx = np.flatnonzero(mask)[order]
            out.append(TripScoreSeries(
                trip_id=str(trip),
                window_end_s=ends[idx],
                probability=scores[idx],
                label=int(labels[idx][0]),
                participant_id=fold["test_participant"],
                block=str(blocks[idx][0]),
                scenario=str(scenarios[idx][0]),
            ))
    return out


def _bootstrap_occurrences(participants: list[str], n_boot: int, seed: int):
    """(B, P) resample counts: how many times each participant appears."""
    rng = np.random.default_rng(seed)
    p = len(participants)
    idx = rng.integers(0, p, size=(n_boot, p))
    occ = np.zeros((n_boot, p))
    np.add.at(occ, (np.repeat(np.arange(n_boot), p), idx.ravel()), 1.0)
    return occ


def decision_time_curve(series_list: list[TripScoreSeries],
                        times: np.ndarray | None = None,
                        threshold: float = 0.5,
                        n_boot: int = 1000, seed: int = 0) -> dict:
    """Balanced accuracy of CMA-thresholded trip decisions at each second.

    At time t a trip contributes its latest CMA value at or before t.
    The default grid is every integer second from the earliest first
    window to the latest last window.  The confidence band is a cluster
    bootstrap over participants (percentile method, fixed seed); at
    every evaluated time both classes must have at least 2 trips.
    """
    if not series_list:
        raise InsufficientTrips("no trips to aggregate")
    cmas = [cumulative_moving_average(s) for s in series_list]
    labels = np.array([s.label for s in series_list], dtype=np.int64)
    if times is None:
        t_lo = int(math.ceil(min(s.window_end_s[0] for s in cmas)))
        t_hi = int(math.floor(max(s.window_end_s[-1] for s in cmas)))
        times = np.arange(t_lo, t_hi + 1, dtype=np.float64)
    else:
        times = np.asarray(times, dtype=np.float64)

    n_trips = len(cmas)
    n_times = times.shape[0]
    # latest window at or before each time; -1 marks "no prediction yet"
    pred = np.full((n_trips, n_times), -1, dtype=np.int8)
    for i, s in enumerate(cmas):
        pos = np.searchsorted(s.window_end_s, times, side="right") - 1
        have = pos >= 0
        vals = s.probability[np.maximum(pos, 0)]
        pred[i, have] = (vals[have] >= threshold).astype(np.int8)

    participants = sorted(set(s.participant_id for s in cmas))
    pidx = np.array([participants.index(s.participant_id) for s in cmas])
    n_part = len(participants)

    # per-time, per-participant confusion mass: tp, fn, tn, fp
    counts = np.zeros((n_times, n_part, 4))
    for i in range(n_trips):
        have = pred[i] >= 0
        hit = pred[i] == labels[i]
        if labels[i] == 1:
            counts[have & hit, pidx[i], 0] += 1.0
            counts[have & ~hit, pidx[i], 1] += 1.0
        else:
            counts[have & hit, pidx[i], 2] += 1.0
            counts[have & ~hit, pidx[i], 3] += 1.0

    tot = counts.sum(axis=1)  # (T, 4)
    n_pos = tot[:, 0] + tot[:, 1]
    n_neg = tot[:, 2] + tot[:, 3]
    if np.any(n_pos < 2) or np.any(n_neg < 2):
        raise InsufficientTrips(
            "need at least 2 decided trips per class at every evaluated time")
    bacc = 0.5 * (tot[:, 0] / n_pos + tot[:, 2] / n_neg)

    occ = _bootstrap_occurrences(participants, n_boot, seed)  # (B, P)
    boot = np.einsum("tpc,bp->tbc", counts, occ)  # (T, B, 4)
    bpos = boot[:, :, 0] + boot[:, :, 1]
    bneg = boot[:, :, 2] + boot[:, :, 3]
    with np.errstate(invalid="ignore", divide="ignore"):
        bacc_b = 0.5 * (boot[:, :, 0] / bpos + boot[:, :, 2] / bneg)
    bacc_b[(bpos == 0) | (bneg == 0)] = np.nan  # replicate lost a class
    ci_low = np.nanpercentile(bacc_b, 2.5, axis=1)
    ci_high = np.nanpercentile(bacc_b, 97.5, axis=1)

    n_decided = (pred >= 0).sum(axis=0)
    return {
        "times": times.tolist(),
        "balanced_accuracy": bacc.tolist(),
        "ci_low": ci_low.tolist(),
        "ci_high": ci_high.tolist(),
        "n_trips": [int(v) for v in n_decided],
        "n_boot": int(n_boot),
        "seed": int(seed),
    }


def group_size_sweep(series_list: list[TripScoreSeries],
                     sizes=DEFAULT_GROUP_SIZES, threshold: float = 0.5) -> dict:
    """Pooled group-level metrics per group size.

    Size 1 reproduces the ungrouped window-level metrics exactly.
    """
    from .evaluation import auroc, balanced_accuracy

    if not series_list:
        raise InsufficientTrips("no trips to aggregate")
    rows = {"group_size": [], "n_groups": [], "auroc": [],
            "balanced_accuracy": []}
    for g in sizes:
        scores, decisions, labels = [], [], []
        for s in series_list:
            grouped = majority_vote_groups(s, int(g), threshold)
            scores.append(grouped.score)
            decisions.append(grouped.decision)
            labels.append(np.full(grouped.score.shape[0], s.label, dtype=np.int64))
        scores = np.concatenate(scores)
        decisions = np.concatenate(decisions)
        labels = np.concatenate(labels)
        rows["group_size"].append(int(g))
        rows["n_groups"].append(int(scores.shape[0]))
        rows["auroc"].append(auroc(labels, scores))
        rows["balanced_accuracy"].append(balanced_accuracy(labels, decisions))
    return rows
