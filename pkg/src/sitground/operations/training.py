# File Name: training.py
# Created By: ZW
# Created On: 2023-03-16
# Purpose: define the learned situation model (relationship Gaussian, size
#  and shape priors, localizers, refiners) and the routine that trains it
#  from labeled positive images.

# module imports
# ----------------------------------------------------------------------------
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, Tuple

import numpy as np

from ..core.boxes import to_params
from ..core.errors import ConfigError, ModelError
from ..core.gaussian import DEFAULT_RIDGE, GaussianModel, block_layout, fit_gaussian
from ..core.gmm import DEFAULT_COMPONENTS, GmmModel
from ..core.linear import DEFAULT_LAMBDA, LinearModel, RefinerModel
from ..core.lognormal import LogNormalModel, fit_lognormal
from ..core.records import AnnotationRecord, SituationSpec
from .features import FeatureProvider
from .learners import build_crops, train_localizer, train_refiner

logger = logging.getLogger(__name__)


# constants definitions
# ----------------------------------------------------------------------------
MODEL_FORMAT = "sitground.model"
MODEL_VERSION = 1
PAIR_SEPARATOR = "|"


# class definitions
# ----------------------------------------------------------------------------

# class TrainingConfig() - hyperparameters of train_situation()
@dataclass(frozen=True)
class TrainingConfig:
    lam: float = DEFAULT_LAMBDA
    covariance_ridge: float = DEFAULT_RIDGE
    crops_per_image: int = 10
    gmm_components: int = DEFAULT_COMPONENTS
    seed: int = 0

    def __post_init__(self):
        if self.lam < 0:
            raise ConfigError(f"lam must be >= 0, got {self.lam}")
        if self.covariance_ridge < 0:
            raise ConfigError(f"covariance_ridge must be >= 0, got {self.covariance_ridge}")
        if self.crops_per_image < 0:
            raise ConfigError(f"crops_per_image must be >= 0, got {self.crops_per_image}")
        if self.gmm_components < 1:
            raise ConfigError(f"gmm_components must be >= 1, got {self.gmm_components}")


# class TrainedSituationModel() - everything learned for one situation.
#     1. categories - ordered situation categories
#     2. relationship - joint Gaussian over every category's box params
#     3. size_shape_priors - category -> (area ratio prior, aspect ratio prior)
#     4. localizers - category -> IOU predictor
#     5. refiners - category -> box delta predictor
#     6. pair_gmms - (category, category) -> GMM, for the scene-graph style
#        baseline; may be empty
# * there is no prior over box location, only over size and shape
@dataclass(frozen=True, eq=False)
class TrainedSituationModel:
    categories: Tuple[str, ...]
    relationship: GaussianModel
    size_shape_priors: Dict[str, Tuple[LogNormalModel, LogNormalModel]]
    localizers: Dict[str, LinearModel]
    refiners: Dict[str, RefinerModel]
    pair_gmms: Dict[Tuple[str, str], GmmModel] = field(default_factory=dict)

    def __post_init__(self):
        cats = tuple(self.categories)
        object.__setattr__(self, "categories", cats)
        for name in ("size_shape_priors", "localizers", "refiners"):
            if set(getattr(self, name)) != set(cats):
                raise ModelError(f"{name} covers {sorted(getattr(self, name))}; expected {sorted(cats)}")
        if tuple(self.relationship.layout) != cats:
            raise ModelError(f"relationship layout {list(self.relationship.layout)} does not match {list(cats)}")

    @property
    def feature_dim(self):
        return self.localizers[self.categories[0]].dim

    def to_document(self):
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "categories": list(self.categories),
            "relationship": self.relationship.to_document(),
            "size_shape_priors": {
                cat: {"area_ratio": a.to_document(), "aspect_ratio": s.to_document()}
                for cat, (a, s) in self.size_shape_priors.items()
            },
            "localizers": {cat: m.to_document() for cat, m in self.localizers.items()},
            "refiners": {cat: m.to_document() for cat, m in self.refiners.items()},
            "pair_gmms": {PAIR_SEPARATOR.join(pair): g.to_document() for pair, g in self.pair_gmms.items()},
        }

    @classmethod
    def from_document(cls, doc):
        if doc.get("format") != MODEL_FORMAT or doc.get("version") != MODEL_VERSION:
            raise ModelError(
                f"expected a {MODEL_FORMAT} v{MODEL_VERSION} document, "
                f"got {doc.get('format')!r} v{doc.get('version')!r}"
            )
        priors = {
            cat: (LogNormalModel.from_document(p["area_ratio"]), LogNormalModel.from_document(p["aspect_ratio"]))
            for cat, p in doc["size_shape_priors"].items()
        }
        return cls(
            categories=tuple(doc["categories"]),
            relationship=GaussianModel.from_document(doc["relationship"]),
            size_shape_priors=priors,
            localizers={cat: LinearModel.from_document(m) for cat, m in doc["localizers"].items()},
            refiners={cat: RefinerModel.from_document(m) for cat, m in doc["refiners"].items()},
            pair_gmms={
                tuple(key.split(PAIR_SEPARATOR)): GmmModel.from_document(g)
                for key, g in doc.get("pair_gmms", {}).items()
            },
        )


# function definitions
# ----------------------------------------------------------------------------

# define situation_vector() which concatenates the box params of every
# category of a positive record in situation order
def situation_vector(record: AnnotationRecord, categories) -> np.ndarray:
    return np.concatenate([to_params(record.box_for(c), record.dims).as_vector() for c in categories])


# define train_situation() which learns every model family from the positive
# training images. each positive must carry exactly one box per category.
def train_situation(annotations: Iterable[AnnotationRecord], situation: SituationSpec,
                    provider: FeatureProvider, config: TrainingConfig = TrainingConfig()) -> TrainedSituationModel:
    cats = situation.categories
    positives = [r.validate(situation) for r in annotations if r.is_positive]
    if len(positives) < 2:
        raise ModelError(f"training needs at least 2 positive images, got {len(positives)}")
    logger.info(f"Training situation {situation.name!r} on {len(positives)} positive images..")

    vectors = np.stack([situation_vector(r, cats) for r in positives])
    relationship = fit_gaussian(vectors, config.covariance_ridge, block_layout(cats))
    priors = {}
    for i, cat in enumerate(cats):
        priors[cat] = (fit_lognormal(vectors[:, 4 * i + 2]), fit_lognormal(vectors[:, 4 * i + 3]))

    rng = np.random.default_rng(config.seed)
    crops = build_crops(positives, cats, provider, rng, config.crops_per_image)
    localizers = {cat: train_localizer(cat, crops, config.lam) for cat in cats}
    refiners = {cat: train_refiner(cat, crops, config.lam) for cat in cats}
    logger.info(f"Done training situation {situation.name!r}..")
    return TrainedSituationModel(cats, relationship, priors, localizers, refiners)
