import math

import numpy as np
import pytest
from scipy.optimize import minimize

from refilter.features import N_FEATURES, fit_scaling, apply_scaling
from refilter.learner import (
    Hyper,
    LearnerError,
    Model,
    classify,
    decision_values,
    model_from_json,
    model_to_json,
    predict_proba,
    predict_proba_matrix,
    train,
)


def reference_loss(theta, X, y, lam):
    """Objective evaluated independently (used by the restart oracle)."""
    w, b = theta[:-1], theta[-1]
    z = X @ w + b
    nll = np.mean(np.logaddexp(0.0, z) - y * z)
    return nll + 0.5 * lam * float(w @ w)


def restart_oracle(X, y, lam, restarts=20, seed=0):
    """Best loss found by an independent optimizer from random starts."""
    rng = np.random.default_rng(seed)
    best = math.inf
    for _ in range(restarts):
        theta0 = rng.normal(0.0, 2.0, size=X.shape[1] + 1)
        res = minimize(reference_loss, theta0, args=(X, y, lam), method="L-BFGS-B",
                       options={"maxiter": 2000, "ftol": 1e-14, "gtol": 1e-10})
        best = min(best, float(res.fun))
    return best


def grad_max_norm(model, X, y):
    w, b = model.weights, model.intercept
    z = X @ w + b
    p = 1.0 / (1.0 + np.exp(-z))
    resid = (p - y) / len(y)
    grad_w = X.T @ resid + model.hyper.lam * w
    grad_b = float(np.sum(resid))
    return max(float(np.max(np.abs(grad_w))), abs(grad_b))


def test_uninformative_features_give_half_probability():
    X = np.zeros((10, 2))
    y = np.array([0, 1] * 5)
    model = train(X, y, selected=(1, 2))
    assert np.allclose(model.weights, 0.0)
    assert abs(model.intercept) < 1e-8
    assert predict_proba(model, np.zeros(2)) == pytest.approx(0.5)
    assert model.converged


def test_perfectly_separable_1d():
    X = np.linspace(-1, 1, 40).reshape(-1, 1)
    y = (X[:, 0] > 0).astype(float)
    model = train(X, y, selected=(1,), hyper=Hyper(lam=1e-8))
    assert model.converged
    assert np.isfinite(model.weights).all()
    assert grad_max_norm(model, X, y) < model.hyper.tol
    preds = predict_proba_matrix(model, X) >= 0.5
    assert np.array_equal(preds, y.astype(bool))


def test_matches_restart_oracle_on_random_problems():
    rng = np.random.default_rng(5150)
    for trial in range(10):
        n = int(rng.integers(20, 200))
        d = int(rng.integers(1, 7))
        X = rng.normal(0, 1, size=(n, d))
        w_true = rng.normal(0, 2, size=d)
        y = (rng.random(n) < 1 / (1 + np.exp(-(X @ w_true)))).astype(float)
        if y.min() == y.max():
            continue
        lam = 10.0 ** rng.uniform(-8, -2)
        model = train(X, y, selected=tuple(range(1, d + 1)), hyper=Hyper(lam=lam))
        mine = reference_loss(np.concatenate([model.weights, [model.intercept]]), X, y, lam)
        best = restart_oracle(X, y, lam, seed=trial)
        assert mine <= best + 1e-6
        assert grad_max_norm(model, X, y) < 1e-6


def test_predict_examples():
    model = Model(weights=np.zeros(1), intercept=0.0, selected_features=(1,),
                  scaling=None, hyper=Hyper(), converged=True, n_iter=0)
    assert predict_proba(model, np.zeros(1)) == pytest.approx(0.5)
    model_b = Model(weights=np.zeros(1), intercept=math.log(3), selected_features=(1,),
                    scaling=None, hyper=Hyper(), converged=True, n_iter=0)
    assert predict_proba(model_b, np.zeros(1)) == pytest.approx(0.75)


def test_negating_parameters_flips_probability():
    rng = np.random.default_rng(3)
    w = rng.normal(0, 1, size=3)
    b = 0.7
    model = Model(weights=w, intercept=b, selected_features=(1, 2, 3),
                  scaling=None, hyper=Hyper(), converged=True, n_iter=0)
    flipped = Model(weights=-w, intercept=-b, selected_features=(1, 2, 3),
                    scaling=None, hyper=Hyper(), converged=True, n_iter=0)
    for _ in range(20):
        x = rng.normal(0, 1, size=3)
        assert predict_proba(flipped, x) == pytest.approx(1 - predict_proba(model, x))


def test_classify_boundary_is_inclusive():
    model = Model(weights=np.zeros(1), intercept=0.0, selected_features=(1,),
                  scaling=None, hyper=Hyper(), converged=True, n_iter=0)
    assert classify(model, np.zeros(1), threshold=0.5) is True
    low = Model(weights=np.zeros(1), intercept=-0.05, selected_features=(1,),
                scaling=None, hyper=Hyper(), converged=True, n_iter=0)
    assert classify(low, np.zeros(1), threshold=0.5) is False


def test_classify_threshold_validation():
    model = Model(weights=np.zeros(1), intercept=0.0, selected_features=(1,),
                  scaling=None, hyper=Hyper(), converged=True, n_iter=0)
    with pytest.raises(LearnerError):
        classify(model, np.zeros(1), threshold=0.0)
    with pytest.raises(LearnerError):
        classify(model, np.zeros(1), threshold=1.0)


def test_recall_monotone_in_threshold():
    rng = np.random.default_rng(12)
    X = rng.normal(0, 1, size=(300, 3))
    y = (X[:, 0] + 0.5 * rng.normal(size=300) > 0).astype(float)
    model = train(X, y, selected=(1, 2, 3))
    probs = predict_proba_matrix(model, X)
    last_recall = 1.1
    for threshold in np.linspace(0.05, 0.95, 19):
        preds = probs >= threshold
        tp = np.sum(preds & (y == 1))
        recall = tp / y.sum()
        assert recall <= last_recall + 1e-12
        last_recall = recall


def test_training_is_deterministic():
    rng = np.random.default_rng(77)
    X = rng.normal(0, 1, size=(150, 4))
    y = (rng.random(150) < 0.5).astype(float)
    m1 = train(X, y, selected=(1, 2, 3, 4))
    m2 = train(X, y, selected=(1, 2, 3, 4))
    assert np.array_equal(m1.weights, m2.weights)
    assert m1.intercept == m2.intercept
    assert m1.n_iter == m2.n_iter


def test_regularization_shrinks_weights():
    rng = np.random.default_rng(8)
    X = rng.normal(0, 1, size=(200, 3))
    y = (X @ np.array([1.5, -2.0, 0.5]) + rng.normal(0, 0.5, 200) > 0).astype(float)
    norms = []
    for lam in (1e-6, 1e-2, 1.0):
        model = train(X, y, selected=(1, 2, 3), hyper=Hyper(lam=lam))
        norms.append(float(np.linalg.norm(model.weights)))
    assert norms[0] > norms[1] > norms[2]


def test_single_class_labels_rejected():
    X = np.zeros((5, 1))
    with pytest.raises(LearnerError, match="degenerate labels"):
        train(X, np.ones(5), selected=(1,))


def test_non_finite_feature_names_ft_id():
    X = np.zeros((4, 3))
    X[2, 1] = np.nan
    y = np.array([0, 1, 0, 1])
    with pytest.raises(LearnerError, match="FT2"):
        train(X, y, selected=(1, 2, 3))


def test_missing_coordinate_rejected():
    model = Model(weights=np.ones(2), intercept=0.0, selected_features=(1, 40),
                  scaling=None, hyper=Hyper(), converged=True, n_iter=0)
    with pytest.raises(LearnerError, match="FT40"):
        predict_proba(model, np.zeros(5))


def test_selected_feature_out_of_range():
    with pytest.raises(LearnerError, match="FT7"):
        train(np.zeros((4, 3)), np.array([0, 1, 0, 1]), selected=(7,))


def test_serialization_round_trip_exact():
    rng = np.random.default_rng(2)
    X = rng.normal(0, 1, size=(80, 50))
    y = (rng.random(80) < 0.5).astype(float)
    scaling = fit_scaling(X)
    model = train(apply_scaling(X, scaling), y, selected=(3, 17, 44), scaling=scaling)
    text = model_to_json(model)
    back = model_from_json(text)
    assert np.array_equal(back.weights, model.weights)
    assert back.intercept == model.intercept
    assert back.selected_features == model.selected_features
    assert np.array_equal(back.scaling.mins, model.scaling.mins)
    assert np.array_equal(back.scaling.maxs, model.scaling.maxs)
    assert back.hyper == model.hyper
    assert model_to_json(back) == text


def test_scaled_model_scores_raw_vectors():
    rng = np.random.default_rng(4)
    X = np.zeros((60, N_FEATURES))
    X[:, 0] = rng.uniform(0, 280, size=60)  # FT1 raw char length
    y = (X[:, 0] > 140).astype(float)
    scaling = fit_scaling(X)
    model = train(apply_scaling(X, scaling), y, selected=(1,), scaling=scaling)
    probs = predict_proba_matrix(model, X)
    assert np.array_equal(probs >= 0.5, y.astype(bool))
    # scoring with scaling demands full-width vectors
    with pytest.raises(LearnerError):
        predict_proba(model, np.zeros(10))


def test_decision_values_match_probabilities():
    rng = np.random.default_rng(6)
    X = rng.normal(0, 1, size=(30, 2))
    y = (X[:, 0] > 0).astype(float)
    model = train(X, y, selected=(1, 2))
    z = decision_values(model, X)
    p = predict_proba_matrix(model, X)
    assert np.allclose(1 / (1 + np.exp(-z)), p)
