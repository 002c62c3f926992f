# File Name: linear.py
# Created By: ZW
# Created On: 2023-03-09
# Purpose: defines the ridge regression linear model used for object
#  localization (predicted IOU) and the four-model bounding-box refiner.

# module imports
# ----------------------------------------------------------------------------
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .boxes import ImageDims, PixelBox, clip_box, decode_deltas
from .errors import ModelError, RidgeError


# constants definitions
# ----------------------------------------------------------------------------
DEFAULT_LAMBDA = 1.0
DELTA_NAMES = ("t_x", "t_y", "t_w", "t_h")
MAX_LOG_SCALE = 4.135  # ~ln(1000/16); keeps exp(t_w) finite
MAX_SHIFT = 10.0


# class definitions
# ----------------------------------------------------------------------------

# class LinearModel() - y = w.x + b. the bias is learned unregularized.
@dataclass(frozen=True, eq=False)
class LinearModel:
    weights: np.ndarray
    bias: float
    lam: float = DEFAULT_LAMBDA

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if weights.size == 0:
            raise ModelError("a linear model needs at least one weight")
        if not (np.all(np.isfinite(weights)) and np.isfinite(self.bias)):
            raise ModelError("linear model weights and bias must be finite")
        if self.lam < 0:
            raise ModelError(f"ridge strength must be >= 0, got {self.lam}")
        weights.setflags(write=False)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "bias", float(self.bias))
        object.__setattr__(self, "lam", float(self.lam))

    @property
    def dim(self):
        return self.weights.size

    def to_document(self):
        return {
            "type": "linear",
            "weights": [float(w) for w in self.weights],
            "bias": self.bias,
            "lambda": self.lam,
        }

    @classmethod
    def from_document(cls, doc):
        if doc.get("type") != "linear":
            raise ModelError(f"expected a linear model document, got type {doc.get('type')!r}")
        return cls(np.asarray(doc["weights"], dtype=float), doc["bias"], doc["lambda"])


# class RefinerModel() - one LinearModel per box delta (t_x, t_y, t_w, t_h),
# all sharing the same feature dimension
@dataclass(frozen=True, eq=False)
class RefinerModel:
    t_x: LinearModel
    t_y: LinearModel
    t_w: LinearModel
    t_h: LinearModel

    def __post_init__(self):
        dims = {m.dim for m in self.models()}
        if len(dims) != 1:
            raise ModelError(f"refiner delta models disagree on feature dimension: {sorted(dims)}")

    def models(self):
        return (self.t_x, self.t_y, self.t_w, self.t_h)

    @property
    def dim(self):
        return self.t_x.dim

    def predict_deltas(self, feature):
        return tuple(predict(m, feature) for m in self.models())

    def to_document(self):
        return {"type": "refiner", **{name: m.to_document() for name, m in zip(DELTA_NAMES, self.models())}}

    @classmethod
    def from_document(cls, doc):
        if doc.get("type") != "refiner":
            raise ModelError(f"expected a refiner model document, got type {doc.get('type')!r}")
        return cls(*(LinearModel.from_document(doc[name]) for name in DELTA_NAMES))


# function definitions
# ----------------------------------------------------------------------------

# define fit_ridge() which takes an (n x d) feature matrix and n targets and
# solves (Xc^T Xc + lam I) w = Xc^T yc on centered data, so the bias
# b = mean(y) - mean(X) w stays out of the penalty.
def fit_ridge(features, targets, lam=DEFAULT_LAMBDA) -> LinearModel:
    X = np.asarray(features, dtype=float)
    y = np.asarray(targets, dtype=float).reshape(-1)
    if X.ndim == 1: X = X.reshape(-1, 1)
    if X.shape[0] < 1 or X.shape[0] != y.size:
        raise ModelError(f"fit_ridge needs matching rows, got X {X.shape} and y {y.shape}")
    if lam < 0:
        raise ModelError(f"ridge strength must be >= 0, got {lam}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ModelError("fit_ridge inputs must be finite")

    x_mean, y_mean = X.mean(axis=0), y.mean()
    Xc, yc = X - x_mean, y - y_mean
    gram = Xc.T @ Xc
    rhs = Xc.T @ yc
    if lam == 0 and np.linalg.matrix_rank(Xc) < X.shape[1]:
        raise RidgeError(
            f"centered design of shape {X.shape} is rank deficient at lambda=0; increase lambda"
        )
    try:
        w = linalg.solve(gram + lam * np.eye(X.shape[1]), rhs, assume_a="pos")
    except linalg.LinAlgError:
        raise RidgeError("ridge normal equations are singular; increase lambda") from None
    return LinearModel(w, float(y_mean - x_mean @ w), lam)


# define predict() which returns the unclamped w.x + b for one feature vector
def predict(model: LinearModel, feature) -> float:
    x = np.asarray(feature, dtype=float).reshape(-1)
    if x.size != model.dim:
        raise ModelError(f"feature of dim {x.size} does not match model dim {model.dim}")
    return float(model.weights @ x + model.bias)


# define apply_refinement() which predicts box deltas from the feature of a
# box, moves the box by them and clips the result to the image frame
def apply_refinement(refiner: RefinerModel, feature, box: PixelBox, dims: ImageDims) -> PixelBox:
    bounds = (MAX_SHIFT, MAX_SHIFT, MAX_LOG_SCALE, MAX_LOG_SCALE)
    deltas = tuple(min(max(float(t), -b), b) for t, b in zip(refiner.predict_deltas(feature), bounds))
    return clip_box(decode_deltas(box, deltas), dims)
