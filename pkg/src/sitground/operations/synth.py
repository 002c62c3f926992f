# File Name: synth.py
# Created By: ZW
# Created On: 2023-03-23
# Purpose: define the synthetic corpus generator: positives drawn from a
#  planted relationship Gaussian, three flavors of negatives, distractor
#  clutter and noisy detector prior proposals, all from a single seed.

# module imports
# ----------------------------------------------------------------------------
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..core.boxes import BoxParams, ImageDims, PixelBox, clip_box, from_params
from ..core.errors import SynthSpecError
from ..core.gaussian import BLOCK, GaussianModel, block_layout, marginal, sample_gaussian
from ..core.records import AnnotationRecord, PriorProposal, SituationSpec, SyntheticScene
from .features import OracleConfig
from .intersect import iou
from .learners import jitter_box

logger = logging.getLogger(__name__)


# constants definitions
# ----------------------------------------------------------------------------
DEFAULT_SITUATION = SituationSpec("walking-the-dog", ("walker", "dog", "leash"))
MAX_SAMPLE_ATTEMPTS = 100
DISTRACTOR_LABELS = ("person", "car", "tree", "bench", "bicycle")
NEGATIVE_FLAVORS = ("drop_one", "drop_one", "independent", "independent", "distractors_only")
SYNTH_SPEC_FORMAT = "sitground.synth_spec"
SYNTH_SPEC_VERSION = 1

# planted (cx, cy, area_ratio, aspect_ratio) means and standard deviations
DEFAULT_MEANS = {
    "walker": (0.42, 0.50, 0.12, 0.42),
    "dog": (0.62, 0.72, 0.035, 1.4),
    "leash": (0.53, 0.60, 0.012, 1.0),
}
DEFAULT_STDS = {
    "walker": (0.10, 0.05, 0.025, 0.06),
    "dog": (0.10, 0.05, 0.010, 0.25),
    "leash": (0.10, 0.05, 0.004, 0.20),
}
# correlation of the same parameter across two different categories
DEFAULT_CROSS_CORRELATION = (0.85, 0.85, 0.6, 0.3)


# function definitions
# ----------------------------------------------------------------------------

# define planted_relationship() which builds the joint Gaussian the
# synthetic positives are drawn from: per-dim standard deviations and an
# equicorrelation between the same parameter of different categories
def planted_relationship(categories: Sequence[str], means: Optional[Mapping] = None,
                         stds: Optional[Mapping] = None,
                         cross_correlation=DEFAULT_CROSS_CORRELATION) -> GaussianModel:
    cats = tuple(categories)
    k = len(cats)
    means = dict(means or {})
    stds = dict(stds or {})
    for i, cat in enumerate(cats):
        # categories without a planted block are spread across the frame
        means.setdefault(cat, DEFAULT_MEANS.get(cat, (0.3 + 0.4 * i / max(k - 1, 1), 0.55, 0.05, 1.0)))
        stds.setdefault(cat, DEFAULT_STDS.get(cat, (0.08, 0.05, 0.01, 0.15)))
    mean = np.concatenate([np.asarray(means[c], dtype=float) for c in cats])
    sd = np.concatenate([np.asarray(stds[c], dtype=float) for c in cats])
    corr = np.eye(BLOCK * k)
    for a in range(k):
        for b in range(k):
            if a == b: continue
            for j in range(BLOCK):
                corr[BLOCK * a + j, BLOCK * b + j] = cross_correlation[j]
    return GaussianModel(mean, corr * np.outer(sd, sd), block_layout(cats))


# class definitions
# ----------------------------------------------------------------------------

# class SynthSpec() - everything that determines a synthetic corpus.
#     1. situation / planted - categories and the Gaussian positives follow
#     2. n_train, n_pos_test, n_neg_test - corpus sizes
#     3. distractor_range - inclusive (min, max) clutter boxes per image
#     4. detector_slope, detector_noise - confidence = slope * IOU + noise
#     5. priors_per_category, true_copies, miss_rate - prior proposals per
#        image; with probability miss_rate a category gets no copy of its
#        true box
#     6. width, height, seed, oracle
@dataclass(frozen=True, eq=False)
class SynthSpec:
    situation: SituationSpec = DEFAULT_SITUATION
    planted: Optional[GaussianModel] = None
    n_train: int = 100
    n_pos_test: int = 50
    n_neg_test: int = 200
    distractor_range: Tuple[int, int] = (1, 3)
    detector_slope: float = 0.9
    detector_noise: float = 0.1
    priors_per_category: int = 10
    true_copies: int = 3
    miss_rate: float = 0.3
    width: float = 640.0
    height: float = 480.0
    seed: int = 0
    oracle: OracleConfig = OracleConfig()

    def __post_init__(self):
        if self.planted is None:
            object.__setattr__(self, "planted", planted_relationship(self.situation.categories))
        if tuple(self.planted.layout) != self.situation.categories:
            raise SynthSpecError(
                f"planted layout {list(self.planted.layout)} does not match {list(self.situation.categories)}"
            )
        if min(self.n_train, self.n_pos_test, self.n_neg_test) < 1:
            raise SynthSpecError("corpus counts must be positive")
        if np.any(np.linalg.eigvalsh(self.planted.cov) <= 0):
            raise SynthSpecError("planted covariance must be positive definite")
        lo, hi = self.distractor_range
        if not 0 <= lo <= hi:
            raise SynthSpecError(f"invalid distractor range {self.distractor_range}")
        if not 0.0 <= self.miss_rate <= 1.0:
            raise SynthSpecError(f"miss_rate must lie in [0, 1], got {self.miss_rate}")
        if self.priors_per_category < 1 or self.true_copies < 0:
            raise SynthSpecError("priors_per_category must be positive and true_copies >= 0")

    @property
    def dims(self):
        return ImageDims(self.width, self.height)

    def to_document(self):
        return {
            "format": SYNTH_SPEC_FORMAT,
            "version": SYNTH_SPEC_VERSION,
            "situation": self.situation.to_document(),
            "planted": self.planted.to_document(),
            "n_train": self.n_train,
            "n_pos_test": self.n_pos_test,
            "n_neg_test": self.n_neg_test,
            "distractor_range": list(self.distractor_range),
            "detector_slope": self.detector_slope,
            "detector_noise": self.detector_noise,
            "priors_per_category": self.priors_per_category,
            "true_copies": self.true_copies,
            "miss_rate": self.miss_rate,
            "width": self.width,
            "height": self.height,
            "seed": self.seed,
            "oracle": {
                "feature_dim": self.oracle.feature_dim,
                "noise_sigma": self.oracle.noise_sigma,
                "projection_seed": self.oracle.projection_seed,
            },
        }

    # hand written partial documents carry no header; a header that is
    # present must name this format and version
    @classmethod
    def from_document(cls, doc):
        doc = dict(doc)
        if "format" in doc or "version" in doc:
            kind, version = doc.pop("format", None), doc.pop("version", None)
            if kind != SYNTH_SPEC_FORMAT or version != SYNTH_SPEC_VERSION:
                raise SynthSpecError(
                    f"expected a {SYNTH_SPEC_FORMAT} v{SYNTH_SPEC_VERSION} document, got {kind!r} v{version!r}"
                )
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise SynthSpecError(f"unknown synth spec fields {sorted(unknown)}")
        if "situation" in doc:
            sit = doc["situation"]
            doc["situation"] = SituationSpec(sit["name"], tuple(sit["categories"]))
        if "planted" in doc and doc["planted"] is not None:
            doc["planted"] = GaussianModel.from_document(doc["planted"])
        if "oracle" in doc:
            doc["oracle"] = OracleConfig(**doc["oracle"])
        if "distractor_range" in doc:
            doc["distractor_range"] = tuple(doc["distractor_range"])
        return cls(**doc)


# class SyntheticCorpus() - the generator output
@dataclass(frozen=True, eq=False)
class SyntheticCorpus:
    spec: SynthSpec
    train: List[AnnotationRecord]
    test: List[AnnotationRecord]
    priors: List[PriorProposal]
    scenes: Dict[str, SyntheticScene]
    flavors: Dict[str, str] = field(default_factory=dict)

    @property
    def situation(self):
        return self.spec.situation


# define snap_to_frame() which clips a box and snaps it to 0.01 px without
# letting the rounding push its far edges past the frame
def snap_to_frame(box: PixelBox, dims: ImageDims) -> PixelBox:
    b = clip_box(box, dims).snapped()
    w = min(b.w, round(dims.width - b.x, 2))
    h = min(b.h, round(dims.height - b.y, 2))
    return PixelBox(b.x, b.y, w, h)


# define boxes_from_vector() which turns a joint param sample into pixel
# boxes without clipping, or None when any box is invalid or leaves the frame
def boxes_from_vector(vec, categories, dims: ImageDims) -> Optional[Dict[str, PixelBox]]:
    out = {}
    for i, cat in enumerate(categories):
        cx, cy, area, aspect = vec[BLOCK * i:BLOCK * (i + 1)]
        if not (area > 0 and aspect > 0 and area <= 1): return None
        w = np.sqrt(area * dims.area * aspect)
        h = w / aspect
        box = PixelBox.from_center(cx * dims.width, cy * dims.height, w, h)
        if box.x < 0 or box.y < 0 or box.x2 > dims.width or box.y2 > dims.height: return None
        out[cat] = box
    return out


# define sample_boxes() which draws in-frame boxes from a model by rejection,
# clipping the last draw after MAX_SAMPLE_ATTEMPTS failures
def sample_boxes(model: GaussianModel, categories, dims, rng) -> Dict[str, PixelBox]:
    vec = None
    for _ in range(MAX_SAMPLE_ATTEMPTS):
        vec = sample_gaussian(model, rng)
        boxes = boxes_from_vector(vec, categories, dims)
        if boxes is not None:
            return {c: snap_to_frame(b, dims) for c, b in boxes.items()}
    out = {}
    for i, cat in enumerate(categories):
        cx, cy, area, aspect = vec[BLOCK * i:BLOCK * (i + 1)]
        params = BoxParams(float(np.clip(cx, 0, 1)), float(np.clip(cy, 0, 1)),
                           float(np.clip(area, 1e-4, 1.0)), float(np.clip(aspect, 0.05, 20.0)))
        out[cat] = snap_to_frame(from_params(params, dims), dims)
    return out


# define random_box() which draws a box of arbitrary position, log-uniform
# size and log-uniform shape
def random_box(dims: ImageDims, rng, area_range=(0.005, 0.15), aspect_range=(0.3, 3.0)) -> PixelBox:
    cx, cy = rng.uniform(0.0, 1.0, size=2)
    area = float(np.exp(rng.uniform(*np.log(area_range))))
    aspect = float(np.exp(rng.uniform(*np.log(aspect_range))))
    return snap_to_frame(from_params(BoxParams(cx, cy, area, aspect), dims), dims)


def make_distractors(spec: SynthSpec, rng, minimum=0):
    lo, hi = spec.distractor_range
    count = max(int(rng.integers(lo, hi + 1)), minimum)
    return tuple((DISTRACTOR_LABELS[int(rng.integers(len(DISTRACTOR_LABELS)))], random_box(spec.dims, rng))
                 for _ in range(count))


# define make_negative() which builds one negative scene of the given flavor:
#   drop_one - one category missing, the rest moved to random positions
#   independent - every category drawn alone from its marginal
#   distractors_only - clutter only
def make_negative(spec: SynthSpec, image_id, flavor, rng) -> SyntheticScene:
    cats, dims = spec.situation.categories, spec.dims
    gt = {}
    if flavor == "drop_one":
        boxes = sample_boxes(spec.planted, cats, dims, rng)
        dropped = cats[int(rng.integers(len(cats)))]
        for cat in cats:
            if cat == dropped: continue
            b = boxes[cat]
            x = rng.uniform(0.0, max(dims.width - b.w, 0.0))
            y = rng.uniform(0.0, max(dims.height - b.h, 0.0))
            gt[cat] = snap_to_frame(PixelBox(x, y, b.w, b.h), dims)
    elif flavor == "independent":
        for cat in cats:
            gt[cat] = sample_boxes(marginal(spec.planted, cat), (cat,), dims, rng)[cat]
    minimum = 1 if flavor == "distractors_only" else 0
    return SyntheticScene(image_id, dims, gt, make_distractors(spec, rng, minimum))


# define make_priors() which emits priors_per_category detector boxes per
# category: jittered copies of the true box (unless missed) padded with
# random boxes, each scored slope * IOU + gaussian noise, clamped to [0, 1]
def make_priors(spec: SynthSpec, scene: SyntheticScene, rng) -> List[PriorProposal]:
    out = []
    for cat in spec.situation.categories:
        gt = scene.gt_boxes.get(cat)
        boxes = []
        if gt is not None and rng.random() >= spec.miss_rate:
            for _ in range(spec.true_copies):
                box = jitter_box(gt, scene.dims, rng, center_jitter=0.15, scale_jitter=(0.8, 1.25))
                if box is not None: boxes.append(snap_to_frame(box, scene.dims))
        while len(boxes) < spec.priors_per_category:
            boxes.append(random_box(scene.dims, rng))
        for box in boxes[:spec.priors_per_category]:
            overlap = iou(box, gt) if gt is not None else 0.0
            conf = spec.detector_slope * overlap + spec.detector_noise * rng.standard_normal()
            out.append(PriorProposal(scene.image_id, cat, box, round(float(np.clip(conf, 0.0, 1.0)), 6)))
    return out


# define check_feasible() which rejects specs whose mean configuration does
# not fit inside the image frame
def check_feasible(spec: SynthSpec):
    if boxes_from_vector(spec.planted.mean, spec.situation.categories, spec.dims) is None:
        raise SynthSpecError(
            "planted mean boxes do not fit inside the "
            f"{spec.width:g}x{spec.height:g} frame; no valid positive can be drawn"
        )


# define generate_synthetic() which builds the full corpus. everything is a
# function of the SynthSpec (and its seed) unless an explicit generator is given.
def generate_synthetic(spec: SynthSpec = SynthSpec(), rng: Optional[np.random.Generator] = None) -> SyntheticCorpus:
    check_feasible(spec)
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    cats, dims = spec.situation.categories, spec.dims
    logger.info(f"Generating synthetic corpus for {spec.situation.name!r}..")

    scenes, flavors = {}, {}
    train, test, priors = [], [], []
    for i in range(spec.n_train):
        scene = SyntheticScene(f"train-{i:04d}", dims, sample_boxes(spec.planted, cats, dims, rng),
                               make_distractors(spec, rng))
        scenes[scene.image_id] = scene
        train.append(scene.annotation(True))
    for i in range(spec.n_pos_test):
        scene = SyntheticScene(f"pos-{i:04d}", dims, sample_boxes(spec.planted, cats, dims, rng),
                               make_distractors(spec, rng))
        scenes[scene.image_id] = scene
        test.append(scene.annotation(True))
        priors.extend(make_priors(spec, scene, rng))
    for i in range(spec.n_neg_test):
        flavor = NEGATIVE_FLAVORS[i % len(NEGATIVE_FLAVORS)]
        scene = make_negative(spec, f"neg-{i:04d}", flavor, rng)
        scenes[scene.image_id] = scene
        flavors[scene.image_id] = flavor
        test.append(scene.annotation(False))
        priors.extend(make_priors(spec, scene, rng))
    logger.info(f"Done generating {len(train)} training and {len(test)} test images..")
    return SyntheticCorpus(spec, train, test, priors, scenes, flavors)
