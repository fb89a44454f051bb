"""Binary logistic regression: regularized maximum likelihood and
probability prediction.

Training minimizes mean negative log-likelihood plus (lambda/2)*||w||^2
(intercept unpenalized) with damped Newton steps and a backtracking line
search. Full-batch and free of randomness, so identical inputs yield
bitwise-identical models.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .features import N_FEATURES, ScalingParams, apply_scaling


class LearnerError(ValueError):
    pass


@dataclass(frozen=True)
class Hyper:
    lam: float = 1e-8
    tol: float = 1e-6
    max_iter: int = 1000


@dataclass(frozen=True)
class Model:
    """Weights aligned to `selected_features`, plus the scaling that maps
    raw feature vectors into the space the weights were trained in."""

    weights: np.ndarray
    intercept: float
    selected_features: tuple[int, ...]
    scaling: ScalingParams | None
    hyper: Hyper
    converged: bool
    n_iter: int


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _loss(Xs, y, w, b, lam) -> float:
    z = Xs @ w + b
    nll = float(np.mean(np.logaddexp(0.0, z) - y * z))
    return nll + 0.5 * lam * float(w @ w)


def _gradient(Xs, y, w, b, lam) -> np.ndarray:
    p = _sigmoid(Xs @ w + b)
    resid = (p - y) / len(y)
    return np.concatenate([Xs.T @ resid + lam * w, [float(np.sum(resid))]])


def train(
    vectors: np.ndarray,
    labels: Sequence[int] | np.ndarray,
    selected: Sequence[int],
    hyper: Hyper = Hyper(),
    scaling: ScalingParams | None = None,
) -> Model:
    """Fit the model on pre-scaled feature vectors.

    `vectors` holds full feature rows; `selected` names the feature ids
    (1-based) the model actually uses. Requires both classes present and
    finite values in every selected column.
    """
    X = np.asarray(vectors, dtype=np.float64)
    if X.ndim != 2:
        raise LearnerError("vectors must be a 2-d array")
    y = np.asarray(labels, dtype=np.float64)
    if y.shape[0] != X.shape[0]:
        raise LearnerError("labels length does not match vectors")
    selected = tuple(int(s) for s in selected)
    if not selected:
        raise LearnerError("no features selected")
    for ft in selected:
        if not 1 <= ft <= X.shape[1]:
            raise LearnerError(f"selected feature FT{ft} outside vector width {X.shape[1]}")
    if len(np.unique(y)) < 2:
        raise LearnerError("degenerate labels: need at least one example of each class")

    cols = [ft - 1 for ft in selected]
    Xs = X[:, cols]
    bad = ~np.isfinite(Xs)
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise LearnerError(f"non-finite feature value at instance row {row}, FT{selected[col]}")

    lam, tol, max_iter = hyper.lam, hyper.tol, hyper.max_iter
    k = len(cols)
    w = np.zeros(k)
    b = 0.0
    converged = False
    n_iter = 0
    loss = _loss(Xs, y, w, b, lam)

    for n_iter in range(max_iter + 1):
        g = _gradient(Xs, y, w, b, lam)
        if float(np.max(np.abs(g))) < tol:
            converged = True
            break
        if n_iter == max_iter:
            break

        p = _sigmoid(Xs @ w + b)
        d = np.maximum(p * (1.0 - p), 1e-12) / len(y)
        H = np.empty((k + 1, k + 1))
        Xd = Xs * d[:, None]
        H[:k, :k] = Xs.T @ Xd + lam * np.eye(k)
        H[:k, k] = H[k, :k] = Xd.sum(axis=0)
        H[k, k] = float(d.sum())

        damping = 0.0
        while True:
            try:
                step = np.linalg.solve(H + damping * np.eye(k + 1), -g)
            except np.linalg.LinAlgError:
                step = None
            if step is not None and float(g @ step) < 0:
                break
            damping = 1e-10 if damping == 0.0 else damping * 100.0

        slope = float(g @ step)
        t = 1.0
        improved = False
        while t > 1e-12:
            w_new = w + t * step[:k]
            b_new = b + t * float(step[k])
            loss_new = _loss(Xs, y, w_new, b_new, lam)
            if loss_new <= loss + 1e-4 * t * slope:
                improved = True
                break
            t *= 0.5
        if not improved:
            break  # step size underflow: no further numeric progress
        w, b, loss = w_new, b_new, loss_new

    return Model(
        weights=w,
        intercept=b,
        selected_features=selected,
        scaling=scaling,
        hyper=hyper,
        converged=converged,
        n_iter=n_iter,
    )


def _prepare(model: Model, vectors: np.ndarray) -> np.ndarray:
    X = np.asarray(vectors, dtype=np.float64)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    needed = max(model.selected_features)
    if X.shape[1] < needed:
        raise LearnerError(
            f"vector has {X.shape[1]} coordinates, model needs FT{needed}"
        )
    if model.scaling is not None:
        if X.shape[1] != N_FEATURES:
            raise LearnerError(
                f"scaled models score full {N_FEATURES}-feature vectors, got {X.shape[1]}"
            )
        X = apply_scaling(X, model.scaling)
    Xs = X[:, [ft - 1 for ft in model.selected_features]]
    return Xs[0] if single else Xs


def decision_values(model: Model, vectors: np.ndarray) -> np.ndarray:
    Xs = np.atleast_2d(_prepare(model, vectors))
    return Xs @ model.weights + model.intercept


def predict_proba(model: Model, vector: np.ndarray) -> float:
    """Retweet probability for one raw feature vector."""
    Xs = _prepare(model, vector)
    if Xs.ndim != 1:
        raise LearnerError("predict_proba scores a single vector; use predict_proba_matrix")
    z = float(Xs @ model.weights + model.intercept)
    return float(_sigmoid(np.array([z]))[0])


def predict_proba_matrix(model: Model, vectors: np.ndarray) -> np.ndarray:
    return _sigmoid(decision_values(model, vectors))


def classify(model: Model, vector: np.ndarray, threshold: float = 0.5) -> bool:
    """True when the retweet probability reaches the threshold."""
    if not 0.0 < threshold < 1.0:
        raise LearnerError("threshold must lie in (0, 1)")
    return predict_proba(model, vector) >= threshold


# ---------------------------------------------------------------------------
# serialization: one self-describing JSON record


def model_to_json(model: Model) -> str:
    record = {
        "format": "refilter-model-v1",
        "selected_features": list(model.selected_features),
        "weights": [float(v) for v in model.weights],
        "intercept": float(model.intercept),
        "scaling": None
        if model.scaling is None
        else {
            "mins": [float(v) for v in model.scaling.mins],
            "maxs": [float(v) for v in model.scaling.maxs],
        },
        "hyper": {"lam": model.hyper.lam, "tol": model.hyper.tol, "max_iter": model.hyper.max_iter},
        "converged": model.converged,
        "n_iter": model.n_iter,
    }
    return json.dumps(record, separators=(",", ":"))


def model_from_json(text: str) -> Model:
    try:
        record = json.loads(text)
    except json.JSONDecodeError as exc:
        raise LearnerError(f"invalid model record: {exc.msg}") from exc
    if record.get("format") != "refilter-model-v1":
        raise LearnerError("unrecognized model format")
    scaling = record["scaling"]
    return Model(
        weights=np.array(record["weights"], dtype=np.float64),
        intercept=float(record["intercept"]),
        selected_features=tuple(int(f) for f in record["selected_features"]),
        scaling=None
        if scaling is None
        else ScalingParams(
            mins=np.array(scaling["mins"], dtype=np.float64),
            maxs=np.array(scaling["maxs"], dtype=np.float64),
        ),
        hyper=Hyper(
            lam=float(record["hyper"]["lam"]),
            tol=float(record["hyper"]["tol"]),
            max_iter=int(record["hyper"]["max_iter"]),
        ),
        converged=bool(record["converged"]),
        n_iter=int(record["n_iter"]),
    )
