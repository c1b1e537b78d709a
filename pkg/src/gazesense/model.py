"""L1-penalized logistic regression, written against a fixed objective.

Binary objective, with per-sample class weights w and inverse penalty C:

    F(beta, b) = sum_i w_i * log(1 + exp(-ytil_i * (x_i beta + b)))
                 + (1 / C) * ||beta||_1,   ytil in {-1, +1}

The solver is a proximal Newton method: each sweep forms the quadratic
model at the current point (weights W_i = w_i p_i (1 - p_i)), solves it
by cyclic coordinate descent with the soft-threshold update

    beta_j <- S(c_j, 1/C) / a_j,
    c_j = sum_i W_i rho_i x_ij + a_j beta_j,   a_j = sum_i W_i x_ij^2,

and then backtracks along the sweep direction until the true objective
does not increase, so the recorded objective history is monotone by
construction.  The intercept is never penalized.  The multinomial task
cycles the same machinery over one class column at a time against the
full softmax objective.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg.blas import daxpy
from scipy.special import expit, logsumexp

from .errors import (
    BadParams,
    EmptyMatrix,
    LengthMismatch,
    NameMismatch,
    SingleClass,
)

__all__ = [
    "Scaler",
    "LogisticModel",
    "fit_logreg",
    "fit_multinomial",
    "group_importance",
    "save_model",
    "load_model",
]

# variance floor, relative to p(1-p): keeps the working residual
# (y - p) / max(p(1-p), floor) bounded when probabilities saturate
_VAR_FLOOR = 1e-6
_MAX_BACKTRACK = 50


@dataclass
class Scaler:
    """Per-feature z-scoring; a zero-spread feature is left unscaled."""

    mean_: np.ndarray
    scale_: np.ndarray
    feature_names: list[str] | None = None

    @classmethod
    def fit(cls, X, feature_names: list[str] | None = None) -> "Scaler":
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] == 0:
            raise EmptyMatrix("scaler needs a non-empty 2-D matrix")
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        scale = np.where(scale == 0.0, 1.0, scale)
        return cls(mean, scale, list(feature_names) if feature_names else None)

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[1] != self.mean_.shape[0]:
            raise LengthMismatch(
                f"scaler was fit on {self.mean_.shape[0]} features, got {X.shape[1]}")
        return (X - self.mean_) / self.scale_

    def to_dict(self) -> dict:
        return {"mean": self.mean_.tolist(), "scale": self.scale_.tolist(),
                "feature_names": self.feature_names}

    @classmethod
    def from_dict(cls, data: dict) -> "Scaler":
        return cls(np.asarray(data["mean"], dtype=np.float64),
                   np.asarray(data["scale"], dtype=np.float64),
                   data.get("feature_names"))


@dataclass
class LogisticModel:
    """Fitted coefficients plus solver diagnostics.

    ``coef_`` has shape (p,) for binary models and (k, p) for multinomial
    ones; ``predict_proba`` columns follow ``classes_`` in sorted order.
    """

    classes_: list
    coef_: np.ndarray
    intercept_: float | np.ndarray
    C: float
    converged: bool
    n_sweeps: int
    objective_history: list[float] = field(default_factory=list)
    feature_names: list[str] | None = None

    @property
    def is_multinomial(self) -> bool:
        return np.ndim(self.coef_) == 2

    def _check_names(self, feature_names):
        if feature_names is not None and self.feature_names is not None:
            if list(feature_names) != self.feature_names:
                raise NameMismatch(
                    "feature names at prediction differ from the fitted ones")

    def decision_scores(self, X, feature_names=None) -> np.ndarray:
        self._check_names(feature_names)
        X = np.asarray(X, dtype=np.float64)
        if self.is_multinomial:
            return X @ self.coef_.T + self.intercept_
        return X @ self.coef_ + self.intercept_

    def predict_proba(self, X, feature_names=None) -> np.ndarray:
        z = self.decision_scores(X, feature_names)
        if self.is_multinomial:
            z = z - z.max(axis=1, keepdims=True)
            ez = np.exp(z)
            return ez / ez.sum(axis=1, keepdims=True)
        p = expit(z)
        return np.column_stack([1.0 - p, p])

    def predict(self, X, feature_names=None) -> np.ndarray:
        proba = self.predict_proba(X, feature_names)
        idx = np.argmax(proba, axis=1)
        if not self.is_multinomial:
            # exact ties at 0.5 go to the positive class
            idx = (proba[:, 1] >= 0.5).astype(int)
        return np.asarray(self.classes_, dtype=object)[idx]

    def to_dict(self) -> dict:
        return {
            "classes": [c.item() if hasattr(c, "item") else c
                        for c in self.classes_],
            "coef": np.asarray(self.coef_).tolist(),
            "intercept": (float(self.intercept_) if not self.is_multinomial
                          else np.asarray(self.intercept_).tolist()),
            "C": self.C,
            "converged": self.converged,
            "n_sweeps": self.n_sweeps,
            "objective_history": [float(v) for v in self.objective_history],
            "feature_names": self.feature_names,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LogisticModel":
        coef = np.asarray(data["coef"], dtype=np.float64)
        intercept = data["intercept"]
        if coef.ndim == 2:
            intercept = np.asarray(intercept, dtype=np.float64)
        else:
            intercept = float(intercept)
        return cls(
            classes_=list(data["classes"]),
            coef_=coef,
            intercept_=intercept,
            C=float(data["C"]),
            converged=bool(data["converged"]),
            n_sweeps=int(data["n_sweeps"]),
            objective_history=[float(v) for v in data.get("objective_history", [])],
            feature_names=data.get("feature_names"),
        )


def save_model(model: LogisticModel, path) -> None:
    with open(path, "w") as fh:
        json.dump(model.to_dict(), fh, indent=1, sort_keys=True)


def load_model(path) -> LogisticModel:
    with open(path) as fh:
        return LogisticModel.from_dict(json.load(fh))


# ----------------------------------------------------------------- fitting

def _check_xy(X, y):
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
        raise EmptyMatrix("design matrix must be non-empty and 2-D")
    y = np.asarray(y)
    if y.shape[0] != X.shape[0]:
        raise LengthMismatch(f"{X.shape[0]} rows but {y.shape[0]} labels")
    classes = np.unique(y)
    if classes.size < 2:
        raise SingleClass("training labels contain a single class")
    return X, y, classes


def _sample_weights(y, classes, class_weight):
    n = y.shape[0]
    k = classes.size
    if class_weight is None:
        per_class = {c: 1.0 for c in classes}
    elif class_weight == "balanced":
        counts = {c: int(np.sum(y == c)) for c in classes}
        per_class = {c: n / (k * counts[c]) for c in classes}
    elif isinstance(class_weight, dict):
        per_class = {c: float(class_weight.get(c, 1.0)) for c in classes}
    else:
        raise BadParams(f"unsupported class_weight {class_weight!r}")
    w = np.empty(n)
    for c in classes:
        w[y == c] = per_class[c]
    return w


_MAX_GRAM = 64   # widest coordinate set cycled with scalar arithmetic
_GRAM_PASS = 1600  # baseline pass budget for one Gram-space call


def _gram_cycle(G, m, aV, u, swr, bV, intercept, sw, lam, inner_tol,
                max_pass):
    """Cyclic soft-threshold passes entirely in Gram space.

    One coordinate update costs O(k): the weighted gradient entries
    u_j = (W rho) @ x_j and the residual mass swr = W @ rho evolve
    through rows of G instead of touching the n-vector rho.  Returns the
    updated intercept and the passes used; bV and u mutate in place.

    The coordinate sets here are small (at most _MAX_GRAM), so the inner
    arithmetic runs on plain floats: per-element ufunc dispatch would
    cost more than the update itself, and scalar IEEE ops produce the
    exact same values.
    """
    k = bV.size
    Gl = G.tolist()
    ml = m.tolist()
    av = aV.tolist()
    ul = u.tolist()
    bl = bV.tolist()
    rng = range(k)
    used = 0
    for _ in range(max_pass):
        moved = 0.0
        used += 1
        for l in rng:
            al = av[l]
            if al <= 0.0:
                continue
            c = ul[l] + al * bl[l]
            new = 0.0
            if c > lam:
                new = (c - lam) / al
            elif c < -lam:
                new = (c + lam) / al
            delta = new - bl[l]
            if delta != 0.0:
                row = Gl[l]
                for i in rng:
                    ul[i] -= delta * row[i]
                swr -= delta * ml[l]
                bl[l] = new
                d = abs(delta)
                if d > moved:
                    moved = d
        if sw > 0.0:
            db = swr / sw
            if db != 0.0:
                for i in rng:
                    ul[i] -= db * ml[i]
                swr -= db * sw
                intercept += db
                d = abs(db)
                if d > moved:
                    moved = d
        if moved < inner_tol:
            break
    u[:] = ul
    bV[:] = bl
    return intercept, used


def _gram_cycle_wide(G, m, aV, u, swr, bV, intercept, sw, lam, inner_tol,
                     max_pass):
    """Gram-space cyclic passes for wide coordinate sets.

    Same update algebra as _gram_cycle, but each update touches a
    k-vector, so past k ~ _MAX_GRAM the array form beats scalar loops.
    """
    k = bV.size
    used = 0
    for _ in range(max_pass):
        moved = 0.0
        used += 1
        for l in range(k):
            al = aV[l]
            if al <= 0.0:
                continue
            c = u[l] + al * bV[l]
            new = 0.0
            if c > lam:
                new = (c - lam) / al
            elif c < -lam:
                new = (c + lam) / al
            delta = new - bV[l]
            if delta != 0.0:
                u -= delta * G[l]
                swr -= delta * m[l]
                bV[l] = new
                d = abs(delta)
                if d > moved:
                    moved = d
        if sw > 0.0:
            db = swr / sw
            if db != 0.0:
                u -= db * m
                swr -= db * sw
                intercept += db
                d = abs(db)
                if d > moved:
                    moved = d
        if moved < inner_tol:
            break
    return intercept, used


def _cd_solve(X, X2, W, rho, beta, intercept, lam, inner_tol,
              max_pass=200, gram_mult=1):
    """Cyclic coordinate descent to convergence on one quadratic model.

    ``X`` must be Fortran ordered so column slices are contiguous.
    Small problems (p <= _MAX_GRAM) are solved entirely through the Gram
    matrix: correlated columns make the cyclic updates zigzag for
    hundreds of passes, and O(k) updates are what keep that affordable.
    Larger problems run full passes that update the working residual
    ``rho`` in place (weighted gradient recovered as ``rho @ WX[:, j]``),
    with the current support cycled through a Gram between full passes.
    Only a quiet full pass ends the loop.

    Budgets are split by what a pass touches.  Passes over the n-vector
    (full and naive support passes) are bounded by ``max_pass`` and are
    the expensive kind; Gram passes never see n, so each Gram call gets
    its own ``_GRAM_PASS * gram_mult`` allowance and is charged to the
    outer budget per call, not per pass.  Callers raise ``gram_mult``
    when sweeps pile up; that buys near-exact model solves without ever
    multiplying O(n) work.
    """
    n, p = X.shape
    a = X2.T @ W
    sw = float(W.sum())

    if 0 < p <= _MAX_GRAM:
        WXs = X * W[:, None]
        G = X.T @ WXs
        m = WXs.sum(axis=0)
        u = rho @ WXs
        swr = float(W @ rho)
        b0 = beta.copy()
        i0 = intercept
        intercept, _ = _gram_cycle(G, m, a, u, swr, beta, intercept, sw, lam,
                                   inner_tol, max_pass=_GRAM_PASS * gram_mult)
        dB = beta - b0
        if np.any(dB != 0.0):
            rho -= X @ dB
        if intercept != i0:
            rho -= intercept - i0
        return intercept

    WX = np.multiply(X, W[:, None], order="F")

    def full_pass():
        nonlocal intercept, rho
        moved = 0.0
        for j in range(p):
            aj = a[j]
            if aj <= 0.0:
                continue
            c = float(rho @ WX[:, j]) + aj * beta[j]
            new = 0.0
            if c > lam:
                new = (c - lam) / aj
            elif c < -lam:
                new = (c + lam) / aj
            delta = new - beta[j]
            if delta != 0.0:
                daxpy(X[:, j], rho, a=-delta)
                beta[j] = new
                moved = max(moved, abs(delta))
        if sw > 0.0:
            db = float(W @ rho) / sw
            if db != 0.0:
                rho -= db
                intercept += db
                moved = max(moved, abs(db))
        return moved

    def cycle_gram(idx, budget):
        nonlocal intercept, rho
        XA = X[:, idx]
        WXA = WX[:, idx]
        G = XA.T @ WXA
        m = WXA.sum(axis=0)
        u = rho @ WXA
        swr = float(W @ rho)
        bA = beta[idx].copy()
        bA0 = bA.copy()
        i0 = intercept
        kern = _gram_cycle if idx.size <= _MAX_GRAM else _gram_cycle_wide
        intercept, used = kern(G, m, a[idx], u, swr, bA, intercept,
                               sw, lam, inner_tol, max_pass=budget)
        beta[idx] = bA
        dB = bA - bA0
        if np.any(dB != 0.0):
            rho -= XA @ dB
        if intercept != i0:
            rho -= intercept - i0
        return used

    def cycle_naive(idx, budget):
        nonlocal intercept, rho
        used = 0
        moved = inner_tol
        while used < budget:
            moved = 0.0
            for j in idx:
                aj = a[j]
                if aj <= 0.0:
                    continue
                c = float(rho @ WX[:, j]) + aj * beta[j]
                new = 0.0
                if c > lam:
                    new = (c - lam) / aj
                elif c < -lam:
                    new = (c + lam) / aj
                delta = new - beta[j]
                if delta != 0.0:
                    daxpy(X[:, j], rho, a=-delta)
                    beta[j] = new
                    moved = max(moved, abs(delta))
            if sw > 0.0:
                db = float(W @ rho) / sw
                if db != 0.0:
                    rho -= db
                    intercept += db
                    moved = max(moved, abs(db))
            used += 1
            if moved < inner_tol:
                break
        return used, moved

    passes = 0
    while passes < max_pass:
        moved = full_pass()
        passes += 1
        if moved < inner_tol:
            break
        idx = np.flatnonzero(beta)
        if idx.size == 0:
            continue
        if idx.size <= _MAX_GRAM:
            cycle_gram(idx, _GRAM_PASS * gram_mult)
            passes += 1
        else:
            # Probe two cheap support passes first: a nearly solved
            # subproblem finishes here and skips the Gram build.
            used, moved = cycle_naive(idx, 2)
            passes += used
            if moved >= inner_tol and passes < max_pass:
                # Wide Gram passes cost O(k) numpy work per update and
                # the build is a GEMM, so charge the call like a short
                # burst of full passes rather than per pass.
                cycle_gram(idx, _GRAM_PASS * min(gram_mult, 4))
                passes += 16
    return intercept


def fit_logreg(X, y, C: float = 1.0, class_weight="balanced",
               tol: float = 1e-6, max_iter: int = 100,
               feature_names: list[str] | None = None) -> LogisticModel:
    """Fit the binary L1 model; see the module docstring for the objective.

    ``max_iter`` bounds the number of proximal Newton sweeps.  A model
    that stops without meeting ``tol`` is returned with a warning and
    ``converged=False``, never raised.
    """
    X, y, classes = _check_xy(X, y)
    if classes.size != 2:
        raise BadParams(f"binary fit needs 2 classes, got {classes.size}")
    if C <= 0:
        raise BadParams("C must be positive")
    y01 = (y == classes[1]).astype(np.float64)
    w = _sample_weights(y, classes, class_weight)
    lam = 1.0 / C
    n, p = X.shape
    X = np.asfortranarray(X)
    X2 = np.asfortranarray(X * X)

    beta = np.zeros(p)
    mu = float(w @ y01) / float(w.sum())
    intercept = float(np.log(mu / (1.0 - mu)))
    z = np.full(n, intercept)
    sign = 1.0 - 2.0 * y01  # -ytil

    def objective(zv, bv, lam_v):
        return float(w @ np.logaddexp(0.0, sign * zv)) + lam_v * float(
            np.abs(bv).sum())

    def newton_sweep(Xv, X2v, beta_v, lam_v, hist):
        """One damped proximal Newton sweep over the columns of Xv.

        Mutates z and intercept in the enclosing scope, appends the
        accepted objective to hist, and returns the accepted
        coefficient vector with the largest accepted move.
        """
        nonlocal intercept, z
        prob = expit(z)
        var = np.maximum(prob * (1.0 - prob), _VAR_FLOOR)
        W = w * var
        rho = (y01 - prob) / var
        rho0 = rho.copy()
        beta_old = beta_v.copy()
        b_old = intercept
        # Early sweeps get a small pass budget: an approximate model
        # solve is plenty while the relinearization still moves a lot.
        # If sweeps pile up (badly conditioned supports), the budget
        # escalates so the model solves become near-exact and the sweep
        # count cannot stall against max_iter.
        budget = 200 * min(16, 2 ** (sweeps // 8))
        b_new = _cd_solve(Xv, X2v, W, rho, beta_v, b_old, lam_v,
                          inner_tol=max(0.5 * tol, 1e-9), max_pass=budget)
        z_new = z + (rho0 - rho)

        f0 = hist[-1]
        alpha = 1.0
        beta_try, b_try, z_try = beta_v, b_new, z_new
        accepted = objective(z_new, beta_try, lam_v)
        for _ in range(_MAX_BACKTRACK):
            if accepted <= f0:
                break
            alpha *= 0.5
            beta_try = beta_old + alpha * (beta_v - beta_old)
            b_try = b_old + alpha * (b_new - b_old)
            z_try = z + alpha * (z_new - z)
            accepted = objective(z_try, beta_try, lam_v)
        else:
            beta_try, b_try, z_try, accepted = beta_old, b_old, z, f0
        intercept = float(b_try)
        z = np.array(z_try)
        hist.append(accepted)
        moved = abs(intercept - b_old)
        if beta_try.size:
            moved = max(moved, float(np.max(np.abs(beta_try - beta_old))))
        return np.array(beta_try), moved

    converged = False
    sweeps = 0

    # Pathwise warm start: walk the penalty down geometrically from just
    # under the level that zeroes every coefficient.  A cold start at a
    # weak penalty activates nearly every coordinate for a few expensive
    # sweeps before the support collapses; along the path the support
    # stays near its final size the whole way.
    lam_max = float(np.abs((w * (y01 - expit(z))) @ X).max(initial=0.0))
    lam_t = lam_max / 3.0
    while lam_t > 3.0 * lam:
        hist_t = [objective(z, beta, lam_t)]
        for _ in range(10):
            beta, delta = newton_sweep(X, X2, beta, lam_t, hist_t)
            if delta < max(tol, 1e-3):
                break
        lam_t /= 3.0

    history = [objective(z, beta, lam)]

    # Separable directions make the Newton iteration creep toward the
    # penalty balance in near-constant increments, so most sweeps happen
    # on a frozen support; convergence is only ever declared by a full
    # sweep moving every coordinate less than tol.
    while sweeps < max_iter:
        beta, delta = newton_sweep(X, X2, beta, lam, history)
        sweeps += 1
        if delta < tol:
            converged = True
            break
        active = np.flatnonzero(beta)
        if active.size == 0 or active.size == p:
            continue
        Xa = np.asfortranarray(X[:, active])
        X2a = np.asfortranarray(X2[:, active])
        beta_a = beta[active].copy()
        while sweeps < max_iter:
            beta_a, delta_a = newton_sweep(Xa, X2a, beta_a, lam, history)
            sweeps += 1
            if delta_a < tol:
                break
        beta = np.zeros(p)
        beta[active] = beta_a

    if not converged:
        warnings.warn(f"solver stopped after {sweeps} sweeps without meeting "
                      f"tol={tol}", RuntimeWarning, stacklevel=2)
    return LogisticModel(
        classes_=list(classes), coef_=beta, intercept_=intercept, C=C,
        converged=converged, n_sweeps=sweeps, objective_history=history,
        feature_names=list(feature_names) if feature_names else None,
    )


def fit_multinomial(X, y, C: float = 1.0, class_weight="balanced",
                    tol: float = 1e-6, max_iter: int = 100,
                    feature_names: list[str] | None = None) -> LogisticModel:
    """Symmetric multinomial L1 model, one class column updated at a time."""
    X, y, classes = _check_xy(X, y)
    if C <= 0:
        raise BadParams("C must be positive")
    k = classes.size
    n, p = X.shape
    w = _sample_weights(y, classes, class_weight)
    Y = np.column_stack([(y == c).astype(np.float64) for c in classes])
    lam = 1.0 / C
    X = np.asfortranarray(X)
    X2 = np.asfortranarray(X * X)

    B = np.zeros((k, p))
    bias = np.zeros(k)
    Z = np.zeros((n, k))
    yi = np.argmax(Y, axis=1)

    def objective(Zv, Bv):
        ll = logsumexp(Zv, axis=1) - Zv[np.arange(n), yi]
        return float(w @ ll) + lam * float(np.abs(Bv).sum())

    history = [objective(Z, B)]
    converged = False
    sweeps = 0
    for sweeps in range(1, max_iter + 1):
        delta = 0.0
        for c in range(k):
            Zmax = Z.max(axis=1, keepdims=True)
            ez = np.exp(Z - Zmax)
            prob = ez[:, c] / ez.sum(axis=1)
            var = np.maximum(prob * (1.0 - prob), _VAR_FLOOR)
            W = w * var
            rho = (Y[:, c] - prob) / var
            rho0 = rho.copy()
            beta = B[c].copy()
            beta_old = B[c].copy()
            b_old = float(bias[c])
            b_new = _cd_solve(X, X2, W, rho, beta, b_old, lam,
                              inner_tol=max(0.5 * tol, 1e-9))
            z_new = Z[:, c] + (rho0 - rho)

            f0 = history[-1]
            Zt = Z.copy()
            Zt[:, c] = z_new
            Bt = B.copy()
            Bt[c] = beta
            accepted = objective(Zt, Bt)
            alpha = 1.0
            beta_acc, b_acc, z_acc = beta, b_new, z_new
            for _ in range(_MAX_BACKTRACK):
                if accepted <= f0:
                    break
                alpha *= 0.5
                beta_acc = beta_old + alpha * (beta - beta_old)
                b_acc = b_old + alpha * (b_new - b_old)
                z_acc = Z[:, c] + alpha * (z_new - Z[:, c])
                Zt[:, c] = z_acc
                Bt[c] = beta_acc
                accepted = objective(Zt, Bt)
            else:
                beta_acc, b_acc, z_acc, accepted = beta_old, b_old, Z[:, c], f0
            delta = max(delta, float(np.max(np.abs(beta_acc - B[c]))),
                        abs(b_acc - bias[c]))
            B[c] = beta_acc
            bias[c] = b_acc
            Z[:, c] = z_acc
            history.append(accepted)
        if delta < tol:
            converged = True
            break

    if not converged:
        warnings.warn(f"solver stopped after {sweeps} sweeps without meeting "
                      f"tol={tol}", RuntimeWarning, stacklevel=2)
    return LogisticModel(
        classes_=list(classes), coef_=B, intercept_=bias, C=C,
        converged=converged, n_sweeps=sweeps, objective_history=history,
        feature_names=list(feature_names) if feature_names else None,
    )


def group_importance(model: LogisticModel,
                     groups: dict[str, list[str]] | None = None) -> dict[str, float]:
    """Share of total |coefficient| mass per feature group (shares sum to 1).

    Without an explicit grouping the model's feature names are split by
    their prefix family (eye_/fixation_/saccade_/head_/can_).
    """
    if model.feature_names is None:
        raise BadParams("model carries no feature names to group")
    if groups is None:
        from .windows import feature_groups
        groups = feature_groups(model.feature_names)
    coef = np.atleast_2d(np.asarray(model.coef_))
    mass = np.abs(coef).sum(axis=0)
    index = {name: i for i, name in enumerate(model.feature_names)}
    total = float(mass.sum())
    out = {}
    for gname, names in groups.items():
        idx = [index[n] for n in names if n in index]
        share = float(mass[idx].sum()) / total if total > 0 else 0.0
        out[gname] = share
    return out
