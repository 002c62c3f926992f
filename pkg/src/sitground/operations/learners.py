# File Name: learners.py
# Created By: ZW
# Created On: 2023-03-15
# Purpose: define the training-crop generator and the trainers for the
#  per-category object-localization (IOU) and object-refinement (box delta)
#  ridge models.

# module imports
# ----------------------------------------------------------------------------
import logging
from dataclasses import dataclass
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from ..core.boxes import PixelBox, clip_box, encode_deltas
from ..core.errors import ModelError
from ..core.linear import DEFAULT_LAMBDA, LinearModel, RefinerModel, fit_ridge
from ..core.records import AnnotationRecord
from .features import FeatureProvider
from .intersect import iou

logger = logging.getLogger(__name__)


# constants definitions
# ----------------------------------------------------------------------------
CENTER_JITTER = 0.3  # +- fraction of the side length
SCALE_JITTER = (0.7, 1.4)
MIN_CROP_IOU = 0.1
MAX_JITTER_ATTEMPTS = 50
MIN_TRAINING_CROPS = 10


# class definitions
# ----------------------------------------------------------------------------

# class TrainingCrop() - a box cut from a training image around a ground
# truth object, with its feature and the regression targets
#     1. image_id / category - where the crop came from
#     2. box - the crop itself
#     3. feature - provider feature of the crop
#     4. target_iou - IOU of the crop with the ground truth, in [0, 1]
#     5. target_deltas - (t_x, t_y, t_w, t_h) moving the crop onto the truth
@dataclass(frozen=True, eq=False)
class TrainingCrop:
    image_id: str
    category: str
    box: PixelBox
    feature: np.ndarray
    target_iou: float
    target_deltas: Tuple[float, float, float, float]

    def __post_init__(self):
        if not 0.0 <= self.target_iou <= 1.0:
            raise ModelError(f"crop target IOU must lie in [0, 1], got {self.target_iou}")


# function definitions
# ----------------------------------------------------------------------------

# define jitter_box() which draws one jittered copy of a ground truth box with
# IOU >= MIN_CROP_IOU, or returns None after MAX_JITTER_ATTEMPTS failures
def jitter_box(gt: PixelBox, dims, rng, center_jitter=CENTER_JITTER, scale_jitter=SCALE_JITTER):
    for _ in range(MAX_JITTER_ATTEMPTS):
        cx = gt.cx + rng.uniform(-center_jitter, center_jitter) * gt.w
        cy = gt.cy + rng.uniform(-center_jitter, center_jitter) * gt.h
        w = gt.w * rng.uniform(*scale_jitter)
        h = gt.h * rng.uniform(*scale_jitter)
        box = clip_box(PixelBox.from_center(cx, cy, w, h), dims)
        if iou(box, gt) >= MIN_CROP_IOU: return box
    return None


def make_crop(record: AnnotationRecord, category, box, gt, provider: FeatureProvider) -> TrainingCrop:
    return TrainingCrop(
        image_id=record.image_id,
        category=category,
        box=box,
        feature=np.asarray(provider.features(record.image_id, box), dtype=float),
        target_iou=iou(box, gt),
        target_deltas=encode_deltas(box, gt),
    )


# define build_crops() which, for every positive image and situation
# category, emits the ground truth box plus crops_per_image jittered boxes
def build_crops(annotations: Iterable[AnnotationRecord], categories: Sequence[str],
                provider: FeatureProvider, rng: np.random.Generator,
                crops_per_image=10) -> List[TrainingCrop]:
    crops = []
    for record in annotations:
        if not record.is_positive: continue
        for cat in categories:
            gt = record.box_for(cat)
            if gt is None: continue
            crops.append(make_crop(record, cat, gt, gt, provider))
            for _ in range(crops_per_image):
                box = jitter_box(gt, record.dims, rng)
                if box is None:
                    logger.debug(f"jitter gave up on {cat} in {record.image_id}; keeping ground truth only")
                    break
                crops.append(make_crop(record, cat, box, gt, provider))
    logger.info(f"Built {len(crops)} training crops..")
    return crops


def _category_crops(category, crops):
    chosen = [c for c in crops if c.category == category]
    if len(chosen) < MIN_TRAINING_CROPS:
        raise ModelError(
            f"need at least {MIN_TRAINING_CROPS} training crops for {category!r}, got {len(chosen)}"
        )
    return chosen


# define train_localizer() which fits the category's IOU predictor
def train_localizer(category, crops: Sequence[TrainingCrop], lam=DEFAULT_LAMBDA) -> LinearModel:
    chosen = _category_crops(category, crops)
    X = np.stack([c.feature for c in chosen])
    y = np.array([c.target_iou for c in chosen])
    return fit_ridge(X, y, lam)


# define train_refiner() which fits one ridge model per box delta
def train_refiner(category, crops: Sequence[TrainingCrop], lam=DEFAULT_LAMBDA) -> RefinerModel:
    chosen = _category_crops(category, crops)
    X = np.stack([c.feature for c in chosen])
    T = np.array([c.target_deltas for c in chosen])
    return RefinerModel(*(fit_ridge(X, T[:, j], lam) for j in range(4)))
