# File Name: gmm.py
# Created By: ZW
# Created On: 2023-03-08
# Purpose: defines a full covariance Gaussian mixture model fitted by EM with
#  k-means++ style seeding. used by the pairwise relationship scoring of the
#  scene-graph style baseline.

# module imports
# ----------------------------------------------------------------------------
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np
from scipy import linalg
from scipy.special import logsumexp

from .errors import ModelError
from .gaussian import DEFAULT_RIDGE, lower_factor, regularize


# constants definitions
# ----------------------------------------------------------------------------
DEFAULT_COMPONENTS = 3
TOLERANCE = 1e-6
MAX_ITERATIONS = 200


# class definitions
# ----------------------------------------------------------------------------

# class GmmModel() - k weighted full covariance Gaussian components.
#     1. weights - (k,) simplex vector
#     2. means - (k, dim)
#     3. covs - (k, dim, dim), each positive definite
#     4. log_likelihoods - per-iteration training log-likelihoods (kept for
#        inspection; empty for models loaded from a document)
@dataclass(frozen=True, eq=False)
class GmmModel:
    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    log_likelihoods: Tuple[float, ...] = field(default=())

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        means = np.asarray(self.means, dtype=float)
        covs = np.asarray(self.covs, dtype=float)
        k = weights.size
        if means.ndim != 2 or means.shape[0] != k or covs.shape != (k, means.shape[1], means.shape[1]):
            raise ModelError(
                f"inconsistent mixture shapes: weights {weights.shape}, means {means.shape}, covs {covs.shape}"
            )
        if abs(weights.sum() - 1.0) > 1e-9 or np.any(weights < 0):
            raise ModelError(f"mixture weights must lie on the simplex, got {weights}")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covs", covs)
        object.__setattr__(self, "log_likelihoods", tuple(float(v) for v in self.log_likelihoods))
        object.__setattr__(self, "_chols", np.stack([lower_factor(c) for c in covs]))

    @property
    def k(self):
        return self.weights.size

    @property
    def dim(self):
        return self.means.shape[1]

    def to_document(self):
        return {
            "type": "gmm",
            "k": self.k,
            "dim": self.dim,
            "weights": [float(w) for w in self.weights],
            "means": [[float(v) for v in m] for m in self.means],
            "covs": [[float(v) for v in c.reshape(-1)] for c in self.covs],
        }

    @classmethod
    def from_document(cls, doc):
        if doc.get("type") != "gmm":
            raise ModelError(f"expected a gmm model document, got type {doc.get('type')!r}")
        k, dim = int(doc["k"]), int(doc["dim"])
        covs = np.asarray(doc["covs"], dtype=float).reshape(k, dim, dim)
        return cls(np.asarray(doc["weights"]), np.asarray(doc["means"]).reshape(k, dim), covs)


# function definitions
# ----------------------------------------------------------------------------

# define component_logpdf() which returns the (n x k) matrix of
# log N(x_i; mu_j, S_j) using each component's Cholesky factor
def component_logpdf(X, means, chols):
    n, dim = X.shape
    out = np.empty((n, means.shape[0]))
    for j in range(means.shape[0]):
        L = chols[j]
        z = linalg.solve_triangular(L, (X - means[j]).T, lower=True)
        logdet = 2.0 * np.sum(np.log(np.diag(L)))
        out[:, j] = -0.5 * (np.sum(z ** 2, axis=0) + logdet + dim * np.log(2.0 * np.pi))
    return out


# define kmeanspp_centers() which seeds k centers: the first uniformly at
# random, the rest with probability proportional to squared distance
def kmeanspp_centers(X, k, rng):
    centers = [X[rng.integers(X.shape[0])]]
    for _ in range(1, k):
        d2 = np.min(((X[:, None, :] - np.asarray(centers)[None]) ** 2).sum(axis=2), axis=1)
        total = d2.sum()
        if total <= 0:
            centers.append(X[rng.integers(X.shape[0])])
        else:
            centers.append(X[rng.choice(X.shape[0], p=d2 / total)])
    return np.asarray(centers)


# define m_step() which turns responsibilities into weights, means and
# regularized covariances. a component that has lost all its mass is
# restarted on the pooled covariance around a random sample.
def m_step(X, resp, ridge, rng):
    n, dim = X.shape
    mass = resp.sum(axis=0)
    pooled = regularize(np.cov(X.T, bias=True).reshape(dim, dim), ridge)
    weights = mass / n
    means = np.empty((resp.shape[1], dim))
    covs = np.empty((resp.shape[1], dim, dim))
    for j in range(resp.shape[1]):
        if mass[j] < 1e-10:
            means[j] = X[rng.integers(n)]
            covs[j] = pooled
            continue
        means[j] = resp[:, j] @ X / mass[j]
        diff = X - means[j]
        covs[j] = regularize((resp[:, j, None] * diff).T @ diff / mass[j], ridge)
    weights = weights / weights.sum()
    return weights, means, covs


# define fit_gmm() which takes an (n x dim) sample array and fits a k
# component mixture by EM. iteration stops once the log-likelihood gain drops
# below TOLERANCE or after MAX_ITERATIONS.
def fit_gmm(samples, k=DEFAULT_COMPONENTS, rng=None, ridge=DEFAULT_RIDGE,
            tol=TOLERANCE, max_iter=MAX_ITERATIONS) -> GmmModel:
    rng = rng if rng is not None else np.random.default_rng(0)
    X = np.asarray(samples, dtype=float)
    if X.ndim == 1: X = X.reshape(-1, 1)
    n, dim = X.shape
    if k < 1:
        raise ModelError(f"a mixture needs at least one component, got k={k}")
    if n < k * (dim + 1):
        raise ModelError(f"fit_gmm needs at least {k * (dim + 1)} samples for k={k}, dim={dim}; got {n}")

    # seed with a hard assignment to the nearest k-means++ center
    centers = kmeanspp_centers(X, k, rng)
    nearest = np.argmin(((X[:, None, :] - centers[None]) ** 2).sum(axis=2), axis=1)
    resp = np.zeros((n, k))
    resp[np.arange(n), nearest] = 1.0
    weights, means, covs = m_step(X, resp, ridge, rng)

    history = []
    for _ in range(max_iter):
        chols = np.stack([lower_factor(c) for c in covs])
        joint = component_logpdf(X, means, chols) + np.log(np.maximum(weights, 1e-300))
        per_point = logsumexp(joint, axis=1)
        history.append(float(per_point.sum()))
        if len(history) > 1 and history[-1] - history[-2] < tol:
            break
        resp = np.exp(joint - per_point[:, None])
        weights, means, covs = m_step(X, resp, ridge, rng)
    else:
        # the final m-step has not been scored yet; the history reflects the
        # parameters returned below
        chols = np.stack([lower_factor(c) for c in covs])
        joint = component_logpdf(X, means, chols) + np.log(np.maximum(weights, 1e-300))
        history.append(float(logsumexp(joint, axis=1).sum()))
    return GmmModel(weights, means, covs, tuple(history))


# define gmm_logdensity() which returns log sum_j w_j N(x; mu_j, S_j) for a
# single point or an (n x dim) array of points
def gmm_logdensity(model: GmmModel, x):
    X = np.asarray(x, dtype=float)
    single = X.ndim == 0 or (X.ndim == 1 and X.size == model.dim)
    X = X.reshape(-1, model.dim)
    joint = component_logpdf(X, model.means, model._chols) + np.log(np.maximum(model.weights, 1e-300))
    out = logsumexp(joint, axis=1)
    return float(out[0]) if single else out


def gmm_density(model: GmmModel, x):
    return np.exp(gmm_logdensity(model, x))
