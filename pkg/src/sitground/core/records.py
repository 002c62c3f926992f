# File Name: records.py
# Created By: ZW
# Created On: 2023-03-10
# Purpose: defines the dataset record types: the situation being searched
#  for, labeled images, detector prior proposals and synthetic scenes.

# module imports
# ----------------------------------------------------------------------------
from dataclasses import dataclass, field
from math import isfinite
from typing import Dict, Optional, Tuple

from .boxes import ImageDims, PixelBox
from .errors import AnnotationError


# class definitions
# ----------------------------------------------------------------------------

# class SituationSpec() - the user's description of a visual situation: a
# name and the ordered list of object categories that take part in it.
# * at least two categories, all names unique
@dataclass(frozen=True)
class SituationSpec:
    name: str
    categories: Tuple[str, ...]

    def __post_init__(self):
        cats = tuple(str(c) for c in self.categories)
        object.__setattr__(self, "categories", cats)
        if len(cats) < 2:
            raise AnnotationError(f"a situation needs at least 2 categories, got {list(cats)}")
        if len(set(cats)) != len(cats):
            raise AnnotationError(f"situation categories must be unique, got {list(cats)}")

    def to_document(self):
        return {"name": self.name, "categories": list(self.categories)}


# class AnnotationRecord() - one labeled image.
#     1. image_id - unique identifier of the image
#     2. dims - image width and height
#     3. boxes - tuple of (category, PixelBox) pairs; may contain labels that
#        are not part of the situation
#     4. is_positive - whether the image is an instance of the situation
# * positive records carry exactly one box per situation category, checked
#   by validate() against a SituationSpec
@dataclass(frozen=True)
class AnnotationRecord:
    image_id: str
    dims: ImageDims
    boxes: Tuple[Tuple[str, PixelBox], ...]
    is_positive: bool

    def __post_init__(self):
        object.__setattr__(self, "image_id", str(self.image_id))
        object.__setattr__(self, "boxes", tuple((str(c), b) for c, b in self.boxes))
        object.__setattr__(self, "is_positive", bool(self.is_positive))

    # return the box of a category, or None when the category is absent or
    # labeled more than once
    def box_for(self, category) -> Optional[PixelBox]:
        found = [b for c, b in self.boxes if c == category]
        return found[0] if len(found) == 1 else None

    def validate(self, situation: SituationSpec):
        if not self.is_positive: return self
        for cat in situation.categories:
            count = sum(1 for c, _ in self.boxes if c == cat)
            if count != 1:
                raise AnnotationError(
                    f"positive record {self.image_id!r} has {count} {cat!r} boxes; expected exactly 1"
                )
        return self


# class PriorProposal() - a detector box computed before a run, with the
# detector's confidence in [0, 1]
@dataclass(frozen=True)
class PriorProposal:
    image_id: str
    category: str
    box: PixelBox
    detector_confidence: float

    def __post_init__(self):
        conf = float(self.detector_confidence)
        object.__setattr__(self, "detector_confidence", conf)
        if not (isfinite(conf) and 0.0 <= conf <= 1.0):
            raise AnnotationError(
                f"prior confidence must lie in [0, 1], got {conf} for image {self.image_id!r}"
            )


# class SyntheticScene() - the hidden ground truth behind a synthetic image:
# one box per situation category present plus labeled distractor boxes
@dataclass(frozen=True)
class SyntheticScene:
    image_id: str
    dims: ImageDims
    gt_boxes: Dict[str, PixelBox] = field(default_factory=dict)
    distractors: Tuple[Tuple[str, PixelBox], ...] = ()

    def annotation(self, is_positive) -> AnnotationRecord:
        boxes = tuple(self.gt_boxes.items()) + tuple(self.distractors)
        return AnnotationRecord(self.image_id, self.dims, boxes, is_positive)
