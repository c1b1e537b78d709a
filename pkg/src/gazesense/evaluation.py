"""Subject-wise cross-validated evaluation.

Windows of one participant never appear on both sides of a fold: the
``loso`` scheme holds out every window of one participant per fold, and
``loso_lodso`` additionally drops the held-out scenario from the
training side, so the model has seen neither the person nor the road
type of the test windows.

Metrics are computed from first principles: AUROC through average ranks
(ties counted half), AUPRC as the step-function average precision, and
balanced accuracy as the mean of per-class recalls.  Classification
uses the fixed 0.5 threshold with exact ties going to the positive
class.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import BadParams, LengthMismatch, MissingScenario, SingleClass, TooFewParticipants
from .model import Scaler, fit_logreg, fit_multinomial, group_importance
from .signals import BLOCKS
from .windows import FeatureMatrix

__all__ = [
    "TASKS",
    "labels_for_task",
    "auroc",
    "auprc",
    "balanced_accuracy",
    "f1_weighted",
    "confusion_binary",
    "loso_folds",
    "loso_lodso_folds",
    "evaluate",
    "save_report",
    "load_report",
]

TASKS = ("early_warning", "above_limit", "multiclass")
SCHEMA_VERSION = 1
_LIMIT_BAC = 0.05
_BAC_SLACK = 1e-12


def labels_for_task(task: str, block, bac_gdl) -> np.ndarray:
    """Window labels: early_warning is any alcohol, above_limit is
    BAC at or over 0.05 g/dl, multiclass is the dosing block itself."""
    block = np.asarray(block)
    bac = np.asarray(bac_gdl, dtype=np.float64)
    if task == "early_warning":
        return (bac > _BAC_SLACK).astype(np.int64)
    if task == "above_limit":
        return (bac >= _LIMIT_BAC - _BAC_SLACK).astype(np.int64)
    if task == "multiclass":
        return block.astype(object)
    raise BadParams(f"unknown task {task!r}; expected one of {TASKS}")


# ------------------------------------------------------------------- metrics

def _check_binary(y_true, scores):
    y = np.asarray(y_true)
    s = np.asarray(scores, dtype=np.float64)
    if y.shape[0] != s.shape[0]:
        raise LengthMismatch(f"{y.shape[0]} labels vs {s.shape[0]} scores")
    pos = y == 1
    n1 = int(pos.sum())
    if n1 == 0 or n1 == y.shape[0]:
        raise SingleClass("both classes are needed to rank scores")
    return pos, s


def _average_ranks(s: np.ndarray) -> np.ndarray:
    order = np.argsort(s, kind="mergesort")
    sorted_s = s[order]
    n = s.shape[0]
    ranks = np.empty(n)
    bounds = np.concatenate(([0], np.flatnonzero(np.diff(sorted_s)) + 1, [n]))
    for a, b in zip(bounds[:-1], bounds[1:]):
        ranks[order[a:b]] = 0.5 * (a + b - 1) + 1.0
    return ranks


def auroc(y_true, scores) -> float:
    """P(score+ > score-) with ties counted half, via average ranks."""
    pos, s = _check_binary(y_true, scores)
    n1 = int(pos.sum())
    n0 = s.shape[0] - n1
    ranks = _average_ranks(s)
    return float((ranks[pos].sum() - n1 * (n1 + 1) / 2.0) / (n1 * n0))


def auprc(y_true, scores) -> float:
    """Average precision: sum of (recall step) x (precision) over
    distinct score thresholds, descending."""
    pos, s = _check_binary(y_true, scores)
    n1 = int(pos.sum())
    order = np.argsort(-s, kind="mergesort")
    sy = pos[order].astype(np.float64)
    ss = s[order]
    tp = np.cumsum(sy)
    fp = np.cumsum(1.0 - sy)
    last = np.concatenate((np.flatnonzero(np.diff(ss)), [s.shape[0] - 1]))
    ap = 0.0
    prev_recall = 0.0
    for i in last:
        recall = tp[i] / n1
        precision = tp[i] / (tp[i] + fp[i])
        ap += (recall - prev_recall) * precision
        prev_recall = recall
    return float(ap)


def balanced_accuracy(y_true, y_pred) -> float:
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape[0] != y_pred.shape[0]:
        raise LengthMismatch("label/prediction length mismatch")
    recalls = []
    for c in np.unique(y_true):
        mask = y_true == c
        recalls.append(float(np.mean(y_pred[mask] == c)))
    return float(np.mean(recalls))


def f1_weighted(y_true, y_pred) -> float:
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    n = y_true.shape[0]
    total = 0.0
    for c in np.unique(y_true):
        tp = float(np.sum((y_pred == c) & (y_true == c)))
        fp = float(np.sum((y_pred == c) & (y_true != c)))
        fn = float(np.sum((y_pred != c) & (y_true == c)))
        denom = 2 * tp + fp + fn
        f1 = (2 * tp / denom) if denom > 0 else 0.0
        total += (np.sum(y_true == c) / n) * f1
    return float(total)


def confusion_binary(y_true, y_pred) -> list[list[int]]:
    """[[tn, fp], [fn, tp]]"""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    tn = int(np.sum((y_true == 0) & (y_pred == 0)))
    fp = int(np.sum((y_true == 0) & (y_pred == 1)))
    fn = int(np.sum((y_true == 1) & (y_pred == 0)))
    tp = int(np.sum((y_true == 1) & (y_pred == 1)))
    return [[tn, fp], [fn, tp]]


# --------------------------------------------------------------------- folds

def loso_folds(participants) -> list[dict]:
    """Leave-one-subject-out index folds, one per participant, sorted."""
    participants = np.asarray(participants)
    unique = sorted(set(participants.tolist()))
    if len(unique) < 2:
        raise TooFewParticipants("leave-one-subject-out needs at least 2 participants")
    folds = []
    for p in unique:
        test = np.flatnonzero(participants == p)
        train = np.flatnonzero(participants != p)
        folds.append({"fold_id": str(p), "test_participant": str(p),
                      "test_scenario": None, "train": train, "test": test})
    return folds


def loso_lodso_folds(participants, scenarios) -> list[dict]:
    """Hold out one participant x one scenario; train on the remaining
    participants' remaining scenarios only."""
    participants = np.asarray(participants)
    scenarios = np.asarray(scenarios)
    if participants.shape[0] != scenarios.shape[0]:
        raise LengthMismatch("participant/scenario length mismatch")
    unique_p = sorted(set(participants.tolist()))
    unique_s = sorted(set(scenarios.tolist()))
    if len(unique_p) < 2:
        raise TooFewParticipants("scheme needs at least 2 participants")
    if len(unique_s) < 2:
        raise MissingScenario("scheme needs at least 2 scenarios")
    folds = []
    for p in unique_p:
        for s in unique_s:
            test = np.flatnonzero((participants == p) & (scenarios == s))
            if test.size == 0:
                raise MissingScenario(f"participant {p} has no {s} windows")
            train = np.flatnonzero((participants != p) & (scenarios != s))
            folds.append({"fold_id": f"{p}|{s}", "test_participant": str(p),
                          "test_scenario": str(s), "train": train, "test": test})
    return folds


# ------------------------------------------------------------------ evaluate

def _fit_for_task(task, X, y, C, class_weight, tol, max_iter, names):
    if task == "multiclass":
        return fit_multinomial(X, y, C=C, class_weight=class_weight,
                               tol=tol, max_iter=max_iter, feature_names=names)
    return fit_logreg(X, y, C=C, class_weight=class_weight,
                      tol=tol, max_iter=max_iter, feature_names=names)


def _stat_pair(values) -> dict:
    arr = np.asarray([v for v in values if v is not None], dtype=np.float64)
    if arr.size == 0:
        return {"mean": None, "sd": None}
    sd = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return {"mean": float(arr.mean()), "sd": sd}


def evaluate(matrix: FeatureMatrix, task: str = "early_warning",
             scheme: str = "loso", C: float = 1.0, class_weight="balanced",
             tol: float = 1e-6, max_iter: int = 100,
             permute_labels: bool = False, seed: int = 0) -> dict:
    """Cross-validate one task over a feature matrix and return the report.

    The report carries every fold's per-window scores (keyed by trip and
    window end time) so decision-time aggregation can run downstream
    without re-scoring, plus macro metrics, a per-scenario breakdown,
    pooled confusion tables, and a full-data model for interpretation.
    ``permute_labels`` permutes window labels globally with the given
    seed before training, which destroys any real class signal.
    """
    if task not in TASKS:
        raise BadParams(f"unknown task {task!r}; expected one of {TASKS}")
    if scheme not in ("loso", "loso_lodso"):
        raise BadParams(f"unknown scheme {scheme!r}")
    y = labels_for_task(task, matrix.block, matrix.bac_gdl)
    if permute_labels:
        rng = np.random.default_rng(seed)
        y = y[rng.permutation(y.shape[0])]
    binary = task != "multiclass"

    if scheme == "loso":
        folds = loso_folds(matrix.participant_id)
    else:
        folds = loso_lodso_folds(matrix.participant_id, matrix.scenario)

    X = matrix.values
    names = matrix.feature_names
    fold_records = []
    pooled_scores, pooled_y, pooled_pred = [], [], []
    pooled_scenario, pooled_block = [], []
    for fold in folds:
        tr, te = fold["train"], fold["test"]
        scaler = Scaler.fit(X[tr], feature_names=names)
        model = _fit_for_task(task, scaler.transform(X[tr]), y[tr], C,
                              class_weight, tol, max_iter, names)
        Xte = scaler.transform(X[te])
        record = {
            "fold_id": fold["fold_id"],
            "test_participant": fold["test_participant"],
            "test_scenario": fold["test_scenario"],
            "train_participants": sorted(set(matrix.participant_id[tr].tolist())),
            "train_scenarios": sorted(set(matrix.scenario[tr].tolist())),
            "n_train": int(tr.size),
            "n_test": int(te.size),
            "converged": bool(model.converged),
        }
        if binary:
            score = model.predict_proba(Xte)[:, 1]
            pred = (score >= 0.5).astype(np.int64)
            record["metrics"] = {
                "auroc": auroc(y[te], score),
                "auprc": auprc(y[te], score),
                "balanced_accuracy": balanced_accuracy(y[te], pred),
                "f1_weighted": f1_weighted(y[te], pred),
            }
            record["test"] = {
                "trip_id": matrix.trip_id[te].tolist(),
                "window_end_s": matrix.window_end_s[te].tolist(),
                "score": score.tolist(),
                "label": y[te].tolist(),
                "block": matrix.block[te].tolist(),
                "scenario": matrix.scenario[te].tolist(),
            }
        else:
            pred = model.predict(Xte)
            record["metrics"] = {
                "auroc": None,
                "auprc": None,
                "balanced_accuracy": balanced_accuracy(y[te], pred),
                "f1_weighted": f1_weighted(y[te], pred),
            }
            record["test"] = {
                "trip_id": matrix.trip_id[te].tolist(),
                "window_end_s": matrix.window_end_s[te].tolist(),
                "predicted": [str(v) for v in pred],
                "label": [str(v) for v in y[te]],
                "block": matrix.block[te].tolist(),
                "scenario": matrix.scenario[te].tolist(),
            }
            score = None
        fold_records.append(record)
        if binary:
            pooled_scores.append(score)
        pooled_pred.append(pred)
        pooled_y.append(y[te])
        pooled_scenario.append(matrix.scenario[te])
        pooled_block.append(matrix.block[te])

    pooled_y = np.concatenate(pooled_y)
    pooled_pred = np.concatenate(pooled_pred)
    pooled_scenario = np.concatenate(pooled_scenario)
    pooled_block = np.concatenate(pooled_block)

    macro = {
        key: _stat_pair([f["metrics"][key] for f in fold_records])
        for key in ("auroc", "auprc", "balanced_accuracy", "f1_weighted")
    }

    pooled = {
        "balanced_accuracy": balanced_accuracy(pooled_y, pooled_pred),
        "f1_weighted": f1_weighted(pooled_y, pooled_pred),
        "auroc": None,
        "auprc": None,
    }
    if binary:
        pooled_scores = np.concatenate(pooled_scores)
        pooled["auroc"] = auroc(pooled_y, pooled_scores)
        pooled["auprc"] = auprc(pooled_y, pooled_scores)

    per_scenario = {}
    for s in sorted(set(pooled_scenario.tolist())):
        mask = pooled_scenario == s
        entry = {
            "n_windows": int(mask.sum()),
            "balanced_accuracy": balanced_accuracy(pooled_y[mask], pooled_pred[mask]),
            "auroc": auroc(pooled_y[mask], pooled_scores[mask]) if binary else None,
        }
        per_scenario[s] = entry

    confusion: dict = {}
    if binary:
        confusion["binary"] = confusion_binary(pooled_y, pooled_pred)
        by_block = {}
        for b in BLOCKS:
            mask = pooled_block == b
            if not mask.any():
                continue
            pos_rate = float(np.mean(pooled_pred[mask] == 1))
            by_block[b] = [1.0 - pos_rate, pos_rate]
        confusion["by_block"] = by_block
    else:
        classes = [b for b in BLOCKS if b in set(pooled_y.tolist())]
        table = [[int(np.sum((pooled_y == a) & (pooled_pred == p)))
                  for p in classes] for a in classes]
        confusion["classes"] = classes
        confusion["table"] = table

    scaler = Scaler.fit(X, feature_names=names)
    full_model = _fit_for_task(task, scaler.transform(X), y, C, class_weight,
                               tol, max_iter, names)
    coef = np.atleast_2d(full_model.coef_)
    nonzero = {}
    for j, name in enumerate(names):
        mass = float(np.abs(coef[:, j]).sum())
        if mass > 0:
            nonzero[name] = [float(v) for v in coef[:, j]] if coef.shape[0] > 1 \
                else float(coef[0, j])

    return {
        "schema_version": SCHEMA_VERSION,
        "task": task,
        "scheme": scheme,
        "params": {"C": float(C), "class_weight": str(class_weight),
                   "tol": float(tol), "max_iter": int(max_iter),
                   "permute_labels": bool(permute_labels), "seed": int(seed)},
        "n_windows": int(X.shape[0]),
        "n_features": int(X.shape[1]),
        "n_participants": len(set(matrix.participant_id.tolist())),
        "folds": fold_records,
        "macro": macro,
        "pooled": pooled,
        "per_scenario": per_scenario,
        "confusion": confusion,
        "full_model": {
            "nonzero_coefficients": nonzero,
            "intercept": (float(full_model.intercept_)
                          if not full_model.is_multinomial
                          else [float(v) for v in full_model.intercept_]),
            "n_nonzero": len(nonzero),
            "group_importance": group_importance(full_model),
            "converged": bool(full_model.converged),
        },
    }


def save_report(report: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(report, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_report(path) -> dict:
    with open(path) as fh:
        return json.load(fh)
