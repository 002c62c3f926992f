# File Name: boxes.py
# Created By: ZW
# Created On: 2023-03-02
# Purpose: defines the box value types used everywhere in sitground (pixel
#  boxes, image dimensions, normalized box parameters) along with the
#  conversions between them and the bounding-box delta coding.


# module imports
# ----------------------------------------------------------------------------
from dataclasses import dataclass
from math import exp, isfinite, log, sqrt
from typing import Tuple

import numpy as np

from .errors import BoxError


# constants definitions
# ----------------------------------------------------------------------------
MIN_SIDE = 1.0  # minimum side length (pixels) of a clipped box
SNAP_DECIMALS = 2  # boxes are snapped to 0.01 pixel when written to file


# class definitions
# ----------------------------------------------------------------------------

# class ImageDims() - width and height of an image in pixels.
@dataclass(frozen=True)
class ImageDims:
    width: float
    height: float

    def __post_init__(self):
        object.__setattr__(self, "width", float(self.width))
        object.__setattr__(self, "height", float(self.height))
        if not (self.width > 0 and self.height > 0):
            raise BoxError(
                f"image dimensions must be positive, got {self.width}x{self.height}"
            )

    @property
    def area(self):
        return self.width * self.height


# class PixelBox() - an axis aligned box in pixel space.
# * coordinates are continuous; (x, y) is the top-left corner and the box
#   covers [x, x+w) x [y, y+h). nothing is snapped to the integer grid until
#   the box is written out to a file.
#
# * the class contains four attributes:
#     1. x - left edge (pixels)
#     2. y - top edge (pixels)
#     3. w - width (pixels, > 0)
#     4. h - height (pixels, > 0)
@dataclass(frozen=True)
class PixelBox:
    x: float
    y: float
    w: float
    h: float

    # define a post-init method to coerce to floats and check the invariants
    def __post_init__(self):
        for field in ("x", "y", "w", "h"):
            object.__setattr__(self, field, float(getattr(self, field)))
        if not all(isfinite(v) for v in (self.x, self.y, self.w, self.h)):
            raise BoxError(f"box coordinates must be finite, got {self!r}")
        if not (self.w > 0 and self.h > 0):
            raise BoxError(f"box width and height must be positive, got {self!r}")

    def __repr__(self):
        return f"PixelBox({self.x:g}, {self.y:g}, {self.w:g}, {self.h:g})"

    @property
    def x2(self):
        return self.x + self.w

    @property
    def y2(self):
        return self.y + self.h

    @property
    def cx(self):
        return self.x + self.w / 2.0

    @property
    def cy(self):
        return self.y + self.h / 2.0

    @property
    def area(self):
        return self.w * self.h

    def as_tuple(self) -> Tuple[float, float, float, float]:
        return (self.x, self.y, self.w, self.h)

    # build a box from its center-form coordinates
    @classmethod
    def from_center(cls, cx, cy, w, h):
        return cls(cx - w / 2.0, cy - h / 2.0, w, h)

    # check whether any part of the box lies inside the image frame
    def intersects_frame(self, dims: ImageDims):
        return (self.x < dims.width and self.x2 > 0 and
                self.y < dims.height and self.y2 > 0)

    def snapped(self, decimals=SNAP_DECIMALS):
        return PixelBox(*(round(v, decimals) for v in self.as_tuple()))


# class BoxParams() - the normalized parameterization of a box that the
# relationship model and the size/shape priors are defined over.
#     1. cx - box center x divided by image width  [0, 1]
#     2. cy - box center y divided by image height  [0, 1]
#     3. area_ratio - box area divided by image area  (0, 1]
#     4. aspect_ratio - box width divided by box height  > 0
@dataclass(frozen=True)
class BoxParams:
    cx: float
    cy: float
    area_ratio: float
    aspect_ratio: float

    def __post_init__(self):
        for field in ("cx", "cy", "area_ratio", "aspect_ratio"):
            object.__setattr__(self, field, float(getattr(self, field)))
        if not (self.area_ratio > 0 and self.aspect_ratio > 0):
            raise BoxError(f"area and aspect ratios must be positive, got {self!r}")

    def as_vector(self):
        return np.array([self.cx, self.cy, self.area_ratio, self.aspect_ratio])

    @classmethod
    def from_vector(cls, vec):
        cx, cy, area_ratio, aspect_ratio = (float(v) for v in vec)
        return cls(cx, cy, area_ratio, aspect_ratio)


# function definitions
# ----------------------------------------------------------------------------

# define clip_box() which restricts a box to the image frame while keeping
# each side at least MIN_SIDE pixels long. clipping a clipped box is the
# identity.
def clip_box(box: PixelBox, dims: ImageDims) -> PixelBox:
    x1 = min(max(box.x, 0.0), dims.width - MIN_SIDE)
    x2 = min(max(box.x2, 0.0), dims.width)
    if x2 - x1 < MIN_SIDE: x2 = x1 + MIN_SIDE
    y1 = min(max(box.y, 0.0), dims.height - MIN_SIDE)
    y2 = min(max(box.y2, 0.0), dims.height)
    if y2 - y1 < MIN_SIDE: y2 = y1 + MIN_SIDE
    return PixelBox(x1, y1, x2 - x1, y2 - y1)


# define to_params() which takes a pixel box and the image dimensions and
# returns the normalized (cx, cy, area ratio, aspect ratio) parameters.
def to_params(box: PixelBox, dims: ImageDims) -> BoxParams:
    if not box.intersects_frame(dims):
        raise BoxError(f"{box!r} does not intersect the {dims.width:g}x{dims.height:g} frame")
    return BoxParams(
        cx=box.cx / dims.width,
        cy=box.cy / dims.height,
        area_ratio=box.area / dims.area,
        aspect_ratio=box.w / box.h,
    )


# define from_params() which inverts to_params(); the result is clipped to
# the frame so samples near the image edges stay usable.
def from_params(params: BoxParams, dims: ImageDims) -> PixelBox:
    w = sqrt(params.area_ratio * dims.area * params.aspect_ratio)
    h = w / params.aspect_ratio
    box = PixelBox.from_center(params.cx * dims.width, params.cy * dims.height, w, h)
    return clip_box(box, dims)


# define encode_deltas() which returns the (t_x, t_y, t_w, t_h) regression
# targets that move the reference box onto the target box, using center-form
# coordinates: t_x = (G_x - P_x) / P_w and t_w = ln(G_w / P_w).
def encode_deltas(reference: PixelBox, target: PixelBox):
    return (
        (target.cx - reference.cx) / reference.w,
        (target.cy - reference.cy) / reference.h,
        log(target.w / reference.w),
        log(target.h / reference.h),
    )


# define decode_deltas() which applies (t_x, t_y, t_w, t_h) to a reference
# box. the result is not clipped; callers clip against their own frame.
def decode_deltas(reference: PixelBox, deltas) -> PixelBox:
    tx, ty, tw, th = (float(t) for t in deltas)
    return PixelBox.from_center(
        reference.cx + reference.w * tx,
        reference.cy + reference.h * ty,
        reference.w * exp(tw),
        reference.h * exp(th),
    )
