# File Name: gaussian.py
# Created By: ZW
# Created On: 2023-03-06
# Purpose: defines the block structured multivariate Gaussian that houses the
#  relationship model, with fitting, conditioning, marginals, sampling and
#  Mahalanobis distances. every solve goes through a Cholesky factorization;
#  no covariance is ever explicitly inverted.

# module imports
# ----------------------------------------------------------------------------
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from .errors import ConditioningError, ModelError


# constants definitions
# ----------------------------------------------------------------------------
DEFAULT_RIDGE = 1e-6
ABSOLUTE_FLOOR = 1e-8  # used when the sample covariance has zero trace
PARAM_NAMES = ("cx", "cy", "area_ratio", "aspect_ratio")
BLOCK = len(PARAM_NAMES)

Layout = Dict[str, Tuple[int, ...]]


# function definitions
# ----------------------------------------------------------------------------

# define regularize() which adds eps_eff * I to a covariance, with
# eps_eff = ridge * trace / dim, falling back to ABSOLUTE_FLOOR for a
# degenerate (zero trace) covariance
def regularize(cov, ridge=DEFAULT_RIDGE):
    dim = cov.shape[0]
    eps = max(ridge * float(np.trace(cov)) / dim, ABSOLUTE_FLOOR)
    cov = 0.5 * (cov + cov.T)
    return cov + eps * np.eye(dim)


# define lower_factor() which returns the lower Cholesky factor of a
# covariance. conditioned covariances can lose definiteness to rounding, so
# failing factorizations are retried with a growing diagonal jitter.
def lower_factor(cov):
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    scale = max(float(np.trace(cov)) / cov.shape[0], ABSOLUTE_FLOOR)
    for power in range(-12, -3):
        try:
            return np.linalg.cholesky(cov + (10.0 ** power) * scale * np.eye(cov.shape[0]))
        except np.linalg.LinAlgError:
            continue
    raise ModelError("covariance is not positive definite")


# define block_layout() which assigns 4 consecutive dims to each category
def block_layout(categories: Sequence[str]) -> Layout:
    return {cat: tuple(range(i * BLOCK, (i + 1) * BLOCK)) for i, cat in enumerate(categories)}


# class definitions
# ----------------------------------------------------------------------------

# class GaussianModel() - a multivariate Gaussian over the box parameters of
# several categories.
# * layout maps category name -> the dimension indices that hold its
#   (cx, cy, area_ratio, aspect_ratio) parameters, in order. the layout blocks
#   partition [0, dim).
# * models are immutable after fitting; the Cholesky factor is cached on
#   first use.
@dataclass(frozen=True, eq=False)
class GaussianModel:
    mean: np.ndarray
    cov: np.ndarray
    layout: Layout = field(default_factory=dict)

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        cov = np.asarray(self.cov, dtype=float)
        if cov.shape != (mean.size, mean.size):
            raise ModelError(f"covariance shape {cov.shape} does not match mean of size {mean.size}")
        if not np.allclose(cov, cov.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(cov).max())):
            raise ModelError("covariance must be symmetric")
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        covered = sorted(i for idx in self.layout.values() for i in idx)
        if self.layout and covered != list(range(mean.size)):
            raise ModelError(f"layout {dict(self.layout)} does not partition {mean.size} dims")
        object.__setattr__(self, "layout", {k: tuple(v) for k, v in self.layout.items()})

    @property
    def dim(self):
        return self.mean.size

    @property
    def categories(self):
        return tuple(self.layout.keys())

    @cached_property
    def chol(self):
        return lower_factor(self.cov)

    def logpdf(self, x):
        diff = np.asarray(x, dtype=float) - self.mean
        z = linalg.solve_triangular(self.chol, diff, lower=True)
        logdet = 2.0 * np.sum(np.log(np.diag(self.chol)))
        return -0.5 * (float(z @ z) + logdet + self.dim * np.log(2.0 * np.pi))

    def to_document(self):
        return {
            "type": "gaussian",
            "dim": self.dim,
            "mean": [float(v) for v in self.mean],
            "cov": [float(v) for v in self.cov.reshape(-1)],
            "layout": {cat: list(idx) for cat, idx in self.layout.items()},
        }

    @classmethod
    def from_document(cls, doc):
        if doc.get("type") != "gaussian":
            raise ModelError(f"expected a gaussian model document, got type {doc.get('type')!r}")
        dim = int(doc["dim"])
        cov = np.asarray(doc["cov"], dtype=float).reshape(dim, dim)
        layout = {cat: tuple(idx) for cat, idx in doc.get("layout", {}).items()}
        return cls(np.asarray(doc["mean"], dtype=float), cov, layout)


# define fit_gaussian() which takes an (n x dim) array of samples and returns
# the maximum likelihood Gaussian (covariance divides by n) with the trace
# scaled ridge added to the diagonal.
def fit_gaussian(samples, ridge=DEFAULT_RIDGE, layout: Optional[Layout] = None) -> GaussianModel:
    try:
        X = np.asarray(samples, dtype=float)
    except ValueError as err:
        raise ModelError(f"samples have inconsistent dimensions: {err}") from None
    if X.ndim == 1: X = X.reshape(-1, 1)
    if X.ndim != 2:
        raise ModelError(f"samples must form a 2-D array, got shape {X.shape}")
    if X.shape[0] < 2:
        raise ModelError(f"fit_gaussian needs at least 2 samples, got {X.shape[0]}")
    mu = X.mean(axis=0)
    diff = X - mu
    cov = regularize(diff.T @ diff / X.shape[0], ridge)
    return GaussianModel(mu, cov, layout or {})


# define select() which extracts the sub-Gaussian on the given dimension
# indices (in the given order); the layout keeps every category whose dims
# survive, remapped to their new positions.
def select(model: GaussianModel, indices: Sequence[int]) -> GaussianModel:
    idx = list(indices)
    position = {old: new for new, old in enumerate(idx)}
    layout = {}
    for cat, dims in model.layout.items():
        kept = tuple(position[d] for d in dims if d in position)
        if kept: layout[cat] = kept
    return GaussianModel(model.mean[idx], model.cov[np.ix_(idx, idx)], layout)


# define marginal() which copies out one category's 4-dim block
def marginal(model: GaussianModel, category: str) -> GaussianModel:
    if category not in model.layout:
        raise ModelError(f"unknown category {category!r}; model has {list(model.layout)}")
    return select(model, model.layout[category])


# define condition() which takes a model and a map of observed dim index ->
# value and returns the Gaussian over the unobserved dims:
#   mu_A|B = mu_A + S_AB S_BB^-1 (x_B - mu_B)
#   S_A|B  = S_AA - S_AB S_BB^-1 S_BA
# both solves use the Cholesky factor of S_BB.
def condition(model: GaussianModel, observed: Mapping[int, float]) -> GaussianModel:
    if not observed: return model
    B = sorted(int(i) for i in observed)
    if B[0] < 0 or B[-1] >= model.dim:
        raise ModelError(f"observed indices {B} out of range for dim {model.dim}")
    A = [i for i in range(model.dim) if i not in set(B)]
    if not A:
        raise ModelError("cannot condition on every dimension of the model")

    x_B = np.array([observed[i] for i in B], dtype=float)
    S_BB = model.cov[np.ix_(B, B)]
    S_AB = model.cov[np.ix_(A, B)]
    try:
        factor = linalg.cho_factor(S_BB, lower=True, check_finite=True)
    except linalg.LinAlgError:
        raise ConditioningError(
            f"observed covariance block over dims {B} is numerically singular"
        ) from None
    K = linalg.cho_solve(factor, S_AB.T)  # S_BB^-1 S_BA, shape |B| x |A|
    mean = model.mean[A] + K.T @ (x_B - model.mean[B])
    cov = model.cov[np.ix_(A, A)] - S_AB @ K
    cov = 0.5 * (cov + cov.T)

    skeleton = select(model, A)
    return GaussianModel(mean, cov, skeleton.layout)


# define condition_on() which conditions on whole categories, given a map of
# category -> 4-vector of box parameters
def condition_on(model: GaussianModel, values: Mapping[str, Sequence[float]]) -> GaussianModel:
    observed = {}
    for cat, vec in values.items():
        if cat not in model.layout:
            raise ModelError(f"unknown category {cat!r}; model has {list(model.layout)}")
        for i, v in zip(model.layout[cat], vec): observed[i] = float(v)
    return condition(model, observed)


# define sample_gaussian() which draws mu + L z with L the lower Cholesky
# factor and z standard normal drawn from the caller's generator
def sample_gaussian(model: GaussianModel, rng: np.random.Generator):
    z = rng.standard_normal(model.dim)
    return model.mean + model.chol @ z


# define mahalanobis_sq() which returns (x - mu)^T S^-1 (x - mu) through a
# triangular solve against the cached factor
def mahalanobis_sq(model: GaussianModel, x) -> float:
    diff = np.asarray(x, dtype=float).reshape(-1) - model.mean
    if diff.size != model.dim:
        raise ModelError(f"point of dim {diff.size} does not match model dim {model.dim}")
    z = linalg.solve_triangular(model.chol, diff, lower=True, check_finite=False)
    return max(0.0, float(z @ z))
