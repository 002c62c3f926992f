# File Name: test_linear.py
# Created By: ZW
# Created On: 2023-03-09
# Purpose: tests for the ridge localizers and refiners

# module imports
# ----------------------------------------------------------------------------
import numpy as np
import pytest

from sitground.core.boxes import ImageDims, PixelBox
from sitground.core.errors import ModelError, RidgeError
from sitground.core.linear import (MAX_LOG_SCALE, LinearModel, RefinerModel, apply_refinement, fit_ridge,
                                   predict)


# solve the ridge problem with an unpenalized bias column directly
def normal_equations(X, y, lam):
    Z = np.hstack([X, np.ones((X.shape[0], 1))])
    penalty = lam * np.eye(Z.shape[1])
    penalty[-1, -1] = 0.0
    theta = np.linalg.solve(Z.T @ Z + penalty, Z.T @ y)
    return theta[:-1], theta[-1]


# test definitions
# ----------------------------------------------------------------------------

def test_fit_matches_normal_equations():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n, d = int(rng.integers(10, 40)), int(rng.integers(1, 8))
        X, y = rng.standard_normal((n, d)), rng.standard_normal(n)
        lam = float(rng.uniform(0.01, 5.0))
        model = fit_ridge(X, y, lam)
        w, b = normal_equations(X, y, lam)
        assert np.linalg.norm(model.weights - w) <= 1e-8 * max(1.0, np.linalg.norm(w))
        assert model.bias == pytest.approx(b, rel=1e-8, abs=1e-10)


def test_noiseless_planted_model_recovered():
    rng = np.random.default_rng(1)
    w_true, b_true = rng.standard_normal(6), 0.7
    X = rng.standard_normal((50, 6))
    model = fit_ridge(X, X @ w_true + b_true, lam=0.0)
    assert model.weights == pytest.approx(w_true, abs=1e-6)
    assert model.bias == pytest.approx(b_true, abs=1e-6)


def test_weight_norm_shrinks_with_lambda():
    rng = np.random.default_rng(2)
    for _ in range(20):
        X, y = rng.standard_normal((30, 5)), rng.standard_normal(30)
        norms = [np.linalg.norm(fit_ridge(X, y, lam).weights) for lam in (0.01, 0.1, 1.0, 10.0, 100.0)]
        assert all(a >= b - 1e-12 for a, b in zip(norms, norms[1:]))


def test_exact_interpolation_at_zero_lambda():
    rng = np.random.default_rng(3)
    X, y = rng.standard_normal((4, 3)), rng.standard_normal(4)
    model = fit_ridge(X, y, lam=0.0)
    assert [predict(model, x) for x in X] == pytest.approx(y.tolist(), abs=1e-9)


def test_rank_deficient_design_needs_lambda():
    rng = np.random.default_rng(4)
    col = rng.standard_normal((10, 1))
    X = np.hstack([col, col, rng.standard_normal((10, 1))])
    with pytest.raises(RidgeError):
        fit_ridge(X, rng.standard_normal(10), lam=0.0)
    assert np.all(np.isfinite(fit_ridge(X, rng.standard_normal(10), lam=0.5).weights))


def test_fit_and_predict_errors():
    with pytest.raises(ModelError):
        fit_ridge(np.zeros((3, 2)), np.zeros(4))
    with pytest.raises(ModelError):
        fit_ridge(np.zeros((3, 2)), np.zeros(3), lam=-1.0)
    model = LinearModel(np.ones(3), 0.0)
    with pytest.raises(ModelError):
        predict(model, np.ones(2))


def _constant_refiner(tx, ty, tw, th, dim=2):
    return RefinerModel(*(LinearModel(np.zeros(dim), t) for t in (tx, ty, tw, th)))


def test_refinement_moves_box_by_predicted_deltas():
    dims = ImageDims(200, 200)
    box = PixelBox(50, 50, 20, 40)
    moved = apply_refinement(_constant_refiner(0.5, -0.25, np.log(2.0), 0.0), np.ones(2), box, dims)
    assert moved.cx == pytest.approx(box.cx + 10)
    assert moved.cy == pytest.approx(box.cy - 10)
    assert (moved.w, moved.h) == pytest.approx((40, 40))


def test_refinement_clamps_runaway_deltas():
    dims = ImageDims(10_000, 10_000)
    box = PixelBox(4990, 4990, 2, 2)
    grown = apply_refinement(_constant_refiner(0.0, 0.0, 50.0, -50.0), np.ones(2), box, dims)
    assert grown.w == pytest.approx(2 * np.exp(MAX_LOG_SCALE))
    assert grown.h == pytest.approx(1.0)


def test_refiner_document_round_trip():
    refiner = _constant_refiner(0.1, 0.2, 0.3, 0.4, dim=3)
    back = RefinerModel.from_document(refiner.to_document())
    assert back.predict_deltas(np.ones(3)) == pytest.approx((0.1, 0.2, 0.3, 0.4))
    with pytest.raises(ModelError):
        RefinerModel(LinearModel(np.ones(2), 0), LinearModel(np.ones(3), 0),
                     LinearModel(np.ones(2), 0), LinearModel(np.ones(2), 0))
