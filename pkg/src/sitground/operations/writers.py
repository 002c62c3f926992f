# File Name: writers.py
# Created By: ZW
# Created On: 2023-01-12
# Purpose: defines functions that write sitground records out to files in
#  the proper format. each JSON-lines writer is specific to a single record
#  type and starts its file with a {"format", "version"} header record.

# module imports
# ----------------------------------------------------------------------------
import csv
import json
import logging
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from ..core.records import AnnotationRecord, PriorProposal, SituationSpec, SyntheticScene
from .evaluation import DESCENDING, ScoredImage
from .features import OracleConfig

logger = logging.getLogger(__name__)


# constants definitions
# ----------------------------------------------------------------------------
FORMAT_VERSION = 1
ANNOTATIONS_FORMAT = "sitground.annotations"
PRIORS_FORMAT = "sitground.priors"
SCENES_FORMAT = "sitground.scenes"
TRACE_FORMAT = "sitground.trace"
RANKING_COLUMNS = ("rank", "image_id", "score", "is_positive")


# function definitions
# ----------------------------------------------------------------------------

# define dumps() which serializes one record the same way every time
def dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False)


def box_record(box):
    return list(box.snapped().as_tuple())


# open a file pointer and ensure files to append exist
def open_output(filepath, fappend=False):
    fpath = Path(filepath).resolve()
    if not fappend: return fpath, open(fpath, "w", encoding="utf-8", newline="\n")
    if fpath.exists(): return fpath, open(fpath, "a", encoding="utf-8", newline="\n")
    msg = (
        f"Cannot find existing file {fpath} for append mode.. "
        "please ensure the file exists or switch to write mode"
    )
    raise FileNotFoundError(msg)


# define write_jsonl() which writes a header record (unless appending to a
# non-empty file) and then one JSON object per line
def write_jsonl(records: Iterable[dict], filepath, kind, label, fappend=False, header_extra=None) -> Path:
    fpath, fobj = open_output(filepath, fappend)
    with fobj:
        logger.info(f"Writing {label} records to {fpath}..")
        if not fappend or fobj.tell() == 0:
            header = {"format": kind, "version": FORMAT_VERSION}
            header.update(header_extra or {})
            fobj.write(dumps(header) + "\n")
        for record in records:
            fobj.write(dumps(record) + "\n")
        logger.info(f"Done writing {label} records to {fpath}..")
    return fpath


def _check_types(objects, cls):
    if not all(type(o) == cls for o in objects):
        raise TypeError(f"not all records in passed list are {cls.__name__}")


# define write_annotations() which takes a list of annotation records and a
# file path and writes them out one image per line. optionally, you can
# append the records to a pre-existing file.
def write_annotations(records: Sequence[AnnotationRecord], filepath, fappend=False) -> Path:
    _check_types(records, AnnotationRecord)
    lines = (
        {
            "image_id": r.image_id,
            "width": r.dims.width,
            "height": r.dims.height,
            "is_positive": r.is_positive,
            "boxes": [{"category": c, "box": box_record(b)} for c, b in r.boxes],
        }
        for r in records
    )
    return write_jsonl(lines, filepath, ANNOTATIONS_FORMAT, "annotation", fappend)


def write_priors(priors: Sequence[PriorProposal], filepath, fappend=False) -> Path:
    _check_types(priors, PriorProposal)
    lines = (
        {"image_id": p.image_id, "category": p.category, "box": box_record(p.box),
         "confidence": p.detector_confidence}
        for p in priors
    )
    return write_jsonl(lines, filepath, PRIORS_FORMAT, "prior", fappend)


# define write_scenes() which writes the hidden ground truth of a synthetic
# corpus; the header carries the oracle settings so every later command
# rebuilds the same feature projection
def write_scenes(scenes: Mapping[str, SyntheticScene], categories, oracle: OracleConfig, filepath) -> Path:
    lines = (
        {
            "image_id": s.image_id,
            "width": s.dims.width,
            "height": s.dims.height,
            "gt": {c: box_record(b) for c, b in s.gt_boxes.items()},
            "distractors": [{"category": c, "box": box_record(b)} for c, b in s.distractors],
        }
        for s in scenes.values()
    )
    extra = {
        "categories": list(categories),
        "oracle": {
            "feature_dim": oracle.feature_dim,
            "noise_sigma": oracle.noise_sigma,
            "projection_seed": oracle.projection_seed,
        },
    }
    return write_jsonl(lines, filepath, SCENES_FORMAT, "scene", header_extra=extra)


# define write_trace() which writes one line per executed agent
def write_trace(events, filepath, image_id=None) -> Path:
    extra = {"image_id": image_id} if image_id is not None else None
    return write_jsonl((e.to_record() for e in events), filepath, TRACE_FORMAT, "trace", header_extra=extra)


# define write_json() which writes a single indented JSON document (situation
# specs, trained models, manifests and reports)
def write_json(document, filepath, label="JSON") -> Path:
    fpath, fobj = open_output(filepath)
    with fobj:
        logger.info(f"Writing {label} document to {fpath}..")
        json.dump(document, fobj, indent=2, ensure_ascii=False)
        fobj.write("\n")
    logger.info(f"Done writing {label} document to {fpath}..")
    return fpath


def write_situation(situation: SituationSpec, filepath) -> Path:
    return write_json(situation.to_document(), filepath, "situation")


def write_model(model, filepath) -> Path:
    return write_json(model.to_document(), filepath, "model")


# define sort_ranking() which orders scored images best first; equal scores
# fall back to image_id so the order never depends on scheduling
def sort_ranking(scored: Sequence[ScoredImage]):
    sign = -1.0 if all(s.ordering == DESCENDING for s in scored) else 1.0
    return sorted(scored, key=lambda s: (sign * s.score, s.image_id))


# define write_rankings() which writes a ranked CSV with columns rank,
# image_id, score, is_positive
def write_rankings(scored: Sequence[ScoredImage], filepath) -> Path:
    fpath, fobj = open_output(filepath)
    with fobj:
        logger.info(f"Writing {len(scored)} ranking records to {fpath}..")
        writer = csv.writer(fobj, lineterminator="\n")
        writer.writerow(RANKING_COLUMNS)
        for rank, s in enumerate(sort_ranking(scored), start=1):
            writer.writerow([rank, s.image_id, repr(s.score), int(s.is_positive)])
    logger.info(f"Done writing ranking records to {fpath}..")
    return fpath
