# File Name: lognormal.py
# Created By: ZW
# Created On: 2023-03-07
# Purpose: defines the category specific log-normal priors over box area
#  ratio ("size") and aspect ratio ("shape").

# module imports
# ----------------------------------------------------------------------------
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import ModelError


# constants definitions
# ----------------------------------------------------------------------------
SIGMA_FLOOR = 1e-4


# class definitions
# ----------------------------------------------------------------------------

# class LogNormalModel() - ln(v) ~ N(mu, sigma^2), with sigma kept at or
# above SIGMA_FLOOR so a degenerate prior never collapses explorer sampling
@dataclass(frozen=True)
class LogNormalModel:
    mu: float
    sigma: float

    def __post_init__(self):
        object.__setattr__(self, "mu", float(self.mu))
        object.__setattr__(self, "sigma", float(self.sigma))
        if not np.isfinite(self.mu):
            raise ModelError(f"log-normal mu must be finite, got {self.mu}")
        if not self.sigma >= SIGMA_FLOOR:
            raise ModelError(f"log-normal sigma must be >= {SIGMA_FLOOR}, got {self.sigma}")

    @property
    def median(self):
        return float(np.exp(self.mu))

    def to_document(self):
        return {"type": "lognormal", "mu": self.mu, "sigma": self.sigma}

    @classmethod
    def from_document(cls, doc):
        if doc.get("type") != "lognormal":
            raise ModelError(f"expected a lognormal model document, got type {doc.get('type')!r}")
        return cls(doc["mu"], doc["sigma"])


# function definitions
# ----------------------------------------------------------------------------

# define fit_lognormal() which takes positive values and returns the
# log-space mean and population standard deviation (floored)
def fit_lognormal(values) -> LogNormalModel:
    v = np.asarray(values, dtype=float).reshape(-1)
    if v.size < 2:
        raise ModelError(f"fit_lognormal needs at least 2 values, got {v.size}")
    if np.any(~(v > 0)):
        raise ModelError(f"fit_lognormal needs positive values, got min {v.min()}")
    logs = np.log(v)
    return LogNormalModel(float(logs.mean()), max(float(logs.std()), SIGMA_FLOOR))


def sample_lognormal(model: LogNormalModel, rng: np.random.Generator) -> float:
    return float(rng.lognormal(model.mu, model.sigma))


# define density_lognormal() which evaluates the log-normal pdf at v > 0
def density_lognormal(model: LogNormalModel, v) -> float:
    v = float(v)
    if not v > 0:
        raise ModelError(f"log-normal density is undefined at {v}")
    return float(stats.lognorm.pdf(v, s=model.sigma, scale=np.exp(model.mu)))
