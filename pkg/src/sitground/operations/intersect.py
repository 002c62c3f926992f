# File Name: intersect.py
# Created By: ZW
# Created On: 2023-03-03
# Purpose: define functions for box overlap algebra, specifically the
#  intersection-over-union measure every support and evaluation score uses.

# module imports
# ----------------------------------------------------------------------------
from ..core.boxes import PixelBox


# function definitions
# ----------------------------------------------------------------------------

# define box_area() which measures a box from its edges, the same float path
# intersection_area() takes, so a box overlaps itself exactly
def box_area(box: PixelBox) -> float:
    return (box.x2 - box.x) * (box.y2 - box.y)


# define intersection_area() which takes two pixel boxes and returns the area
# they share. disjoint or edge-touching boxes share zero area.
def intersection_area(boxA: PixelBox, boxB: PixelBox) -> float:
    iw = min(boxA.x2, boxB.x2) - max(boxA.x, boxB.x)
    ih = min(boxA.y2, boxB.y2) - max(boxA.y, boxB.y)
    if iw <= 0 or ih <= 0: return 0.0
    return iw * ih


# define iou() which returns the intersection over union of two boxes in the
# unit interval. the measure is symmetric and iou(a, a) == 1.
def iou(boxA: PixelBox, boxB: PixelBox) -> float:
    inter = intersection_area(boxA, boxB)
    if inter == 0.0: return 0.0
    union = box_area(boxA) + box_area(boxB) - inter
    return min(1.0, max(0.0, inter / union))
