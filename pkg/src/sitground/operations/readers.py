# File Name: readers.py
# Created By: ZW
# Created On: 2023-01-12
# Purpose: defines functions that load sitground records back from the files
#  written by writers.py. every loader checks the header record and raises a
#  typed error instead of coercing malformed input.

# module imports
# ----------------------------------------------------------------------------
import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from ..core.boxes import ImageDims, PixelBox
from ..core.errors import AnnotationError, FormatError
from ..core.records import AnnotationRecord, PriorProposal, SituationSpec, SyntheticScene
from .features import OracleConfig
from .synth import SYNTH_SPEC_FORMAT, SYNTH_SPEC_VERSION, SynthSpec
from .training import TrainedSituationModel
from .writers import ANNOTATIONS_FORMAT, FORMAT_VERSION, PRIORS_FORMAT, SCENES_FORMAT

logger = logging.getLogger(__name__)


# function definitions
# ----------------------------------------------------------------------------

# define read_jsonl() which returns the header and the (line number, record)
# pairs of a JSON-lines file of the given kind. a zero-byte file holds no
# records and has no header.
def read_jsonl(filepath, kind) -> Tuple[Optional[dict], List[Tuple[int, dict]]]:
    fpath = Path(filepath).resolve()
    with open(fpath, "r", encoding="utf-8") as fobj:
        lines = fobj.read().splitlines()
    if not lines: return None, []
    parsed = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip(): continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as err:
            raise FormatError(f"{fpath}:{lineno} is not valid JSON ({err.msg})") from None
        if not isinstance(obj, dict):
            raise FormatError(f"{fpath}:{lineno} must hold a JSON object")
        parsed.append((lineno, obj))
    if not parsed: return None, []
    _, header = parsed[0]
    if header.get("format") != kind or header.get("version") != FORMAT_VERSION:
        raise FormatError(
            f"{fpath} has header {header.get('format')!r} v{header.get('version')!r}; "
            f"expected {kind!r} v{FORMAT_VERSION}"
        )
    return header, parsed[1:]


def _field(fpath, lineno, record, name):
    if not isinstance(record, dict):
        raise FormatError(f"{fpath}:{lineno} expected a JSON object holding {name!r}, got {record!r}")
    if name not in record:
        raise FormatError(f"{fpath}:{lineno} is missing field {name!r}")
    return record[name]


# define _number() which coerces one numeric field, reporting the file and
# line of anything that is not a number
def _number(fpath, lineno, value, name) -> float:
    if isinstance(value, bool):
        raise FormatError(f"{fpath}:{lineno} {name} must be a number, got {value!r}")
    try:
        return float(value)
    except (TypeError, ValueError):
        raise FormatError(f"{fpath}:{lineno} {name} must be a number, got {value!r}") from None


def _box(fpath, lineno, value) -> PixelBox:
    if not (isinstance(value, list) and len(value) == 4):
        raise FormatError(f"{fpath}:{lineno} box must be a list of 4 numbers, got {value!r}")
    return PixelBox(*(_number(fpath, lineno, v, "box coordinate") for v in value))


def _dims(fpath, lineno, record) -> ImageDims:
    return ImageDims(_number(fpath, lineno, _field(fpath, lineno, record, "width"), "width"),
                     _number(fpath, lineno, _field(fpath, lineno, record, "height"), "height"))


def _list(fpath, lineno, value, name) -> list:
    if not isinstance(value, list):
        raise FormatError(f"{fpath}:{lineno} {name} must be a list, got {value!r}")
    return value


# define load_annotations() which reads annotation records, rejecting
# duplicate image ids and, when a situation is given, positive records that
# lack exactly one box per category
def load_annotations(filepath, situation: Optional[SituationSpec] = None) -> List[AnnotationRecord]:
    fpath = Path(filepath).resolve()
    _, lines = read_jsonl(fpath, ANNOTATIONS_FORMAT)
    records, seen = [], set()
    for lineno, rec in lines:
        image_id = _field(fpath, lineno, rec, "image_id")
        if not isinstance(image_id, str):
            raise FormatError(f"{fpath}:{lineno} image_id must be a string, got {image_id!r}")
        if image_id in seen:
            raise AnnotationError(f"{fpath}:{lineno} repeats image_id {image_id!r}")
        seen.add(image_id)
        boxes = tuple(
            (_field(fpath, lineno, b, "category"), _box(fpath, lineno, _field(fpath, lineno, b, "box")))
            for b in _list(fpath, lineno, _field(fpath, lineno, rec, "boxes"), "boxes")
        )
        dims = _dims(fpath, lineno, rec)
        record = AnnotationRecord(image_id, dims, boxes, _field(fpath, lineno, rec, "is_positive"))
        if situation is not None: record.validate(situation)
        records.append(record)
    logger.info(f"Read {len(records)} annotation records from {fpath}..")
    return records


def load_priors(filepath) -> List[PriorProposal]:
    fpath = Path(filepath).resolve()
    _, lines = read_jsonl(fpath, PRIORS_FORMAT)
    priors = [
        PriorProposal(
            _field(fpath, lineno, rec, "image_id"),
            _field(fpath, lineno, rec, "category"),
            _box(fpath, lineno, _field(fpath, lineno, rec, "box")),
            _number(fpath, lineno, _field(fpath, lineno, rec, "confidence"), "confidence"),
        )
        for lineno, rec in lines
    ]
    logger.info(f"Read {len(priors)} prior records from {fpath}..")
    return priors


# define load_scenes() which returns the scenes of a synthetic corpus with the
# categories and oracle settings recorded in the header
def load_scenes(filepath) -> Tuple[Dict[str, SyntheticScene], Tuple[str, ...], OracleConfig]:
    fpath = Path(filepath).resolve()
    header, lines = read_jsonl(fpath, SCENES_FORMAT)
    if header is None:
        raise FormatError(f"{fpath} is empty; a scene file needs its header")
    try:
        categories = tuple(header["categories"])
        oracle = OracleConfig(**header["oracle"])
    except (KeyError, TypeError) as err:
        raise FormatError(f"{fpath} has an incomplete scene header: {err}") from None
    scenes = {}
    for lineno, rec in lines:
        image_id = _field(fpath, lineno, rec, "image_id")
        if not isinstance(image_id, str):
            raise FormatError(f"{fpath}:{lineno} image_id must be a string, got {image_id!r}")
        if image_id in scenes:
            raise AnnotationError(f"{fpath}:{lineno} repeats image_id {image_id!r}")
        gt = _field(fpath, lineno, rec, "gt")
        if not isinstance(gt, dict):
            raise FormatError(f"{fpath}:{lineno} gt must map categories to boxes, got {gt!r}")
        gt = {c: _box(fpath, lineno, b) for c, b in gt.items()}
        distractors = tuple(
            (_field(fpath, lineno, d, "category"), _box(fpath, lineno, _field(fpath, lineno, d, "box")))
            for d in _list(fpath, lineno, rec.get("distractors", []), "distractors")
        )
        dims = _dims(fpath, lineno, rec)
        scenes[image_id] = SyntheticScene(image_id, dims, gt, distractors)
    logger.info(f"Read {len(scenes)} scene records from {fpath}..")
    return scenes, categories, oracle


# define load_json() which reads a single JSON document
def load_json(filepath) -> dict:
    fpath = Path(filepath).resolve()
    with open(fpath, "r", encoding="utf-8") as fobj:
        try:
            doc = json.load(fobj)
        except json.JSONDecodeError as err:
            raise FormatError(f"{fpath} is not valid JSON ({err.msg} at line {err.lineno})") from None
    if not isinstance(doc, dict):
        raise FormatError(f"{fpath} must hold a JSON object")
    return doc


def load_situation(filepath) -> SituationSpec:
    doc = load_json(filepath)
    if "name" not in doc or "categories" not in doc:
        raise FormatError(f"{filepath} must carry 'name' and 'categories'")
    return SituationSpec(doc["name"], tuple(doc["categories"]))


def load_model(filepath) -> TrainedSituationModel:
    doc = load_json(filepath)
    try:
        return TrainedSituationModel.from_document(doc)
    except (KeyError, TypeError) as err:
        raise FormatError(f"{filepath} is not a complete model document: {err}") from None


# define load_synth_spec() which reads a spec written by the synth command;
# the file must open with the synth spec format and version
def load_synth_spec(filepath) -> SynthSpec:
    doc = load_json(filepath)
    if doc.get("format") != SYNTH_SPEC_FORMAT or doc.get("version") != SYNTH_SPEC_VERSION:
        raise FormatError(
            f"{filepath} has header {doc.get('format')!r} v{doc.get('version')!r}; "
            f"expected {SYNTH_SPEC_FORMAT!r} v{SYNTH_SPEC_VERSION}"
        )
    return SynthSpec.from_document(doc)
