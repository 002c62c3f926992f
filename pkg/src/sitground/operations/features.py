# File Name: features.py
# Created By: ZW
# Created On: 2023-03-14
# Purpose: define feature providers that turn (image, box) queries into
#  appearance vectors: a synthetic oracle whose features make IOU and box
#  deltas linearly decodable, and a file backed store of precomputed vectors.

# module imports
# ----------------------------------------------------------------------------
import hashlib
import logging
import struct
from dataclasses import dataclass, field
from math import floor, log
from pathlib import Path
from typing import Dict, List, Mapping, Protocol, Sequence, Tuple

import numpy as np

from ..core.boxes import ImageDims, PixelBox, encode_deltas, to_params
from ..core.errors import ConfigError, FeatureStoreFormatError, LookupMissError
from ..core.records import SyntheticScene
from .intersect import iou

logger = logging.getLogger(__name__)


# constants definitions
# ----------------------------------------------------------------------------
STORE_MAGIC = b"SITF"
STORE_VERSION = 1
CENTER_STEPS = 64  # cx, cy quantized to 1/64
LOG_STEPS = 16  # ln(area ratio), ln(aspect ratio) quantized to 1/16
DELTA_BOUND = 1.0
ASPECT_BOUNDS = (0.1, 10.0)
QKey = Tuple[int, int, int, int]


# class definitions
# ----------------------------------------------------------------------------

# FeatureProvider - anything that answers features(image_id, box) with a
# vector of length feature_dim. answers must be a pure function of the query.
class FeatureProvider(Protocol):
    feature_dim: int

    def features(self, image_id: str, box: PixelBox) -> np.ndarray: ...


# class OracleConfig() - settings shared by every oracle built for a corpus
@dataclass(frozen=True)
class OracleConfig:
    feature_dim: int = 64
    noise_sigma: float = 0.05
    projection_seed: int = 7

    def __post_init__(self):
        if self.feature_dim < 1:
            raise ConfigError(f"feature_dim must be positive, got {self.feature_dim}")
        if self.noise_sigma < 0:
            raise ConfigError(f"noise_sigma must be >= 0, got {self.noise_sigma}")


# class OracleFeatures() - synthetic stand-in for a CNN feature extractor.
# * for a query box the latent vector psi holds, per category, the IOU with
#   that category's ground truth and the four deltas from the box to it
#   (clipped to +-1), then the box's cx, cy, area ratio and (clamped) aspect
#   ratio and a constant 1.
# * the feature is A psi + noise_sigma * eta, with A a seeded full column
#   rank projection and eta unit variance noise derived by hashing the query
class OracleFeatures:
    def __init__(self, scenes: Mapping[str, SyntheticScene], categories: Sequence[str],
                 config: OracleConfig = OracleConfig()):
        self.scenes = dict(scenes)
        self.categories = tuple(categories)
        self.config = config
        self.psi_dim = 5 * len(self.categories) + 5
        self.feature_dim = config.feature_dim
        if self.feature_dim < self.psi_dim:
            raise ConfigError(
                f"feature_dim {self.feature_dim} is below the {self.psi_dim} latent dims "
                f"needed for {len(self.categories)} categories"
            )
        self.projection = self._make_projection()

    # draw A from the projection seed until it has full column rank
    def _make_projection(self):
        rng = np.random.default_rng(self.config.projection_seed)
        while True:
            A = rng.standard_normal((self.feature_dim, self.psi_dim)) / np.sqrt(self.psi_dim)
            if np.linalg.matrix_rank(A) == self.psi_dim:
                A.setflags(write=False)
                return A

    def scene(self, image_id) -> SyntheticScene:
        if image_id not in self.scenes:
            raise LookupMissError(f"no synthetic scene for image {image_id!r}")
        return self.scenes[image_id]

    def psi(self, image_id: str, box: PixelBox) -> np.ndarray:
        scene = self.scene(image_id)
        overlaps, deltas = [], []
        for cat in self.categories:
            gt = scene.gt_boxes.get(cat)
            if gt is None:
                overlaps.append(0.0)
                deltas.extend((0.0, 0.0, 0.0, 0.0))
                continue
            overlaps.append(iou(box, gt))
            deltas.extend(min(max(t, -DELTA_BOUND), DELTA_BOUND) for t in encode_deltas(box, gt))
        dims = scene.dims
        geometry = (
            box.cx / dims.width,
            box.cy / dims.height,
            box.area / dims.area,
            min(max(box.w / box.h, ASPECT_BOUNDS[0]), ASPECT_BOUNDS[1]),
            1.0,
        )
        return np.array(overlaps + deltas + list(geometry))

    # unit variance pseudo-noise keyed on (image_id, box quantized to 0.1px)
    def _noise(self, image_id: str, box: PixelBox):
        key = "|".join([image_id] + [str(floor(v * 10.0 + 0.5)) for v in box.as_tuple()])
        digest = hashlib.blake2b(key.encode("utf-8"), digest_size=8).digest()
        return np.random.default_rng(int.from_bytes(digest, "little")).standard_normal(self.feature_dim)

    def features(self, image_id: str, box: PixelBox) -> np.ndarray:
        out = self.projection @ self.psi(image_id, box)
        if self.config.noise_sigma > 0:
            out = out + self.config.noise_sigma * self._noise(image_id, box)
        return out


# class FeatureStore() - precomputed feature vectors indexed by image and
# quantized box parameters.
#     1. feature_dim - length of every vector
#     2. index - image_id -> {quantized key -> row in vectors}
#     3. vectors - (count x feature_dim) little-endian float32 array
#     4. pending - rows added since the last flush(), stacked onto vectors
#        in one go
@dataclass
class FeatureStore:
    feature_dim: int
    index: Dict[str, Dict[QKey, int]] = field(default_factory=dict)
    vectors: np.ndarray = None
    pending: List[np.ndarray] = field(default_factory=list, repr=False)

    def __post_init__(self):
        if self.vectors is None:
            self.vectors = np.zeros((0, self.feature_dim), dtype="<f4")

    def __len__(self):
        return sum(len(v) for v in self.index.values())

    # add or overwrite the vector stored for a quantized key
    def add(self, image_id: str, key: QKey, vector):
        vec = np.array(vector, dtype="<f4").reshape(-1)
        if vec.size != self.feature_dim:
            raise FeatureStoreFormatError(
                f"vector of dim {vec.size} does not match store dim {self.feature_dim}"
            )
        slots = self.index.setdefault(image_id, {})
        stacked = self.vectors.shape[0]
        row = slots.get(key)
        if row is None:
            slots[key] = stacked + len(self.pending)
            self.pending.append(vec)
        elif row < stacked:
            self.vectors[row] = vec
        else:
            self.pending[row - stacked] = vec

    def flush(self) -> np.ndarray:
        if self.pending:
            self.vectors = np.vstack([self.vectors, np.stack(self.pending)])
            self.pending = []
        return self.vectors


# class FileFeatures() - FeatureProvider over a FeatureStore; needs the image
# dimensions to turn boxes into quantized parameters
class FileFeatures:
    def __init__(self, store: FeatureStore, dims_by_image: Mapping[str, ImageDims]):
        self.store = store
        self.dims_by_image = dict(dims_by_image)
        self.feature_dim = store.feature_dim

    def features(self, image_id: str, box: PixelBox) -> np.ndarray:
        if image_id not in self.dims_by_image:
            raise LookupMissError(f"no image dimensions known for image {image_id!r}")
        vec = store_lookup(self.store, image_id, box, self.dims_by_image[image_id])
        return vec.astype(np.float64)


# function definitions
# ----------------------------------------------------------------------------

def _continuous_key(box: PixelBox, dims: ImageDims):
    p = to_params(box, dims)
    return (p.cx * CENTER_STEPS, p.cy * CENTER_STEPS,
            log(p.area_ratio) * LOG_STEPS, log(p.aspect_ratio) * LOG_STEPS)


# define quantize_box() which returns the integer store key of a box
def quantize_box(box: PixelBox, dims: ImageDims) -> QKey:
    return tuple(int(floor(v + 0.5)) for v in _continuous_key(box, dims))


# define store_lookup() which returns the vector stored at the nearest key
# within one quantization step of the query box. an exact key hit returns the
# stored float32 values unchanged.
def store_lookup(store: FeatureStore, image_id: str, box: PixelBox, dims: ImageDims) -> np.ndarray:
    if image_id not in store.index:
        raise LookupMissError(f"image {image_id!r} is absent from the feature store")
    slots = store.index[image_id]
    vectors = store.flush()
    cont = _continuous_key(box, dims)
    key = tuple(int(floor(v + 0.5)) for v in cont)
    if key in slots:
        return vectors[slots[key]].copy()
    best, best_dist = None, None
    for cand in sorted(slots):
        if max(abs(a - b) for a, b in zip(cand, key)) > 1: continue
        dist = sum((a - b) ** 2 for a, b in zip(cand, cont))
        if best_dist is None or dist < best_dist:
            best, best_dist = cand, dist
    if best is None:
        raise LookupMissError(
            f"no stored feature within one quantization step of {box!r} in image {image_id!r}"
        )
    return vectors[slots[best]].copy()


# define store_write() which serializes a store: magic, u32 version, u32 dim,
# u64 count, index records, then the float32 blob. integers are little-endian.
def store_write(store: FeatureStore, filepath) -> Path:
    fpath = Path(filepath).resolve()
    logger.info(f"Writing {len(store)} feature records to {fpath}..")
    vectors = store.flush()
    records = []
    blob = []
    for image_id in store.index:
        for key, row in store.index[image_id].items():
            encoded = image_id.encode("utf-8")
            offset = len(blob) * store.feature_dim * 4
            records.append(struct.pack("<I", len(encoded)) + encoded + struct.pack("<4iQ", *key, offset))
            blob.append(vectors[row])
    payload = np.asarray(blob, dtype="<f4").reshape(-1, store.feature_dim)
    with open(fpath, "wb") as fobj:
        fobj.write(STORE_MAGIC)
        fobj.write(struct.pack("<IIQ", STORE_VERSION, store.feature_dim, len(records)))
        for rec in records: fobj.write(rec)
        fobj.write(payload.tobytes())
    logger.info(f"Done writing feature records to {fpath}..")
    return fpath


# define store_read() which parses a store file and validates that every
# index entry resolves inside the blob
def store_read(filepath, expected_dim=None) -> FeatureStore:
    fpath = Path(filepath).resolve()
    data = fpath.read_bytes()
    if data[:4] != STORE_MAGIC:
        raise FeatureStoreFormatError(f"{fpath} is not a feature store (bad magic {data[:4]!r})")
    if len(data) < 20:
        raise FeatureStoreFormatError(f"{fpath} has a truncated header")
    version, dim, count = struct.unpack_from("<IIQ", data, 4)
    if version != STORE_VERSION:
        raise FeatureStoreFormatError(f"{fpath} has store version {version}; expected {STORE_VERSION}")
    if dim < 1 or (expected_dim is not None and dim != expected_dim):
        raise FeatureStoreFormatError(f"{fpath} stores dim {dim}; expected {expected_dim}")

    pos = 20
    entries = []
    try:
        for _ in range(count):
            (length,) = struct.unpack_from("<I", data, pos)
            pos += 4
            if pos + length > len(data): raise struct.error("image id overruns file")
            image_id = data[pos:pos + length].decode("utf-8")
            pos += length
            *key, offset = struct.unpack_from("<4iQ", data, pos)
            pos += 24
            entries.append((image_id, tuple(key), offset))
    except (struct.error, UnicodeDecodeError) as err:
        raise FeatureStoreFormatError(f"{fpath} has a truncated or corrupt index: {err}") from None

    raw = data[pos:]
    width = dim * 4
    if len(raw) % width != 0:
        raise FeatureStoreFormatError(f"{fpath} blob of {len(raw)} bytes is not a whole number of vectors")
    blob = np.frombuffer(raw, dtype="<f4").reshape(-1, dim)
    store = FeatureStore(dim)
    rows = []
    for image_id, key, offset in entries:
        if offset % width != 0 or offset + width > len(raw):
            raise FeatureStoreFormatError(f"{fpath} index entry for {image_id!r} points outside the blob")
        store.index.setdefault(image_id, {})[key] = len(rows)
        rows.append(offset // width)
    store.vectors = blob[rows].copy() if rows else np.zeros((0, dim), dtype="<f4")
    logger.info(f"Read {len(entries)} feature records from {fpath}..")
    return store
