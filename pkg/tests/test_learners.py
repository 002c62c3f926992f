# File Name: test_learners.py
# Created By: ZW
# Created On: 2023-03-15
# Purpose: tests for training crops, the localizers and refiners, and the
#  full situation model trainer

# module imports
# ----------------------------------------------------------------------------
import json

import numpy as np
import pytest

from sitground.core.boxes import ImageDims, PixelBox, to_params
from sitground.core.errors import AnnotationError, ModelError
from sitground.core.linear import apply_refinement, predict
from sitground.core.records import AnnotationRecord, SituationSpec
from sitground.operations.intersect import iou
from sitground.operations.learners import (MIN_CROP_IOU, build_crops, jitter_box, train_localizer,
                                           train_refiner)
from sitground.operations.training import TrainedSituationModel, TrainingConfig, train_situation


# test definitions
# ----------------------------------------------------------------------------

def test_jitter_box_overlaps_and_is_seeded():
    dims, gt = ImageDims(640, 480), PixelBox(300, 200, 80, 120)
    a = [jitter_box(gt, dims, np.random.default_rng(3)) for _ in range(2)]
    assert a[0] == a[1]
    rng = np.random.default_rng(4)
    for _ in range(100):
        box = jitter_box(gt, dims, rng)
        assert iou(box, gt) >= MIN_CROP_IOU
        assert box.x >= 0 and box.x2 <= dims.width + 1e-9


def test_build_crops_covers_positives_only(small_corpus, oracle):
    cats = small_corpus.situation.categories
    negatives = [r for r in small_corpus.test if not r.is_positive]
    crops = build_crops(small_corpus.train + negatives, cats, oracle, np.random.default_rng(0), 5)
    assert {c.image_id for c in crops} == {r.image_id for r in small_corpus.train}
    assert len(crops) == len(small_corpus.train) * len(cats) * 6
    exact = [c for c in crops if c.target_iou == 1.0]
    assert len(exact) >= len(small_corpus.train) * len(cats)
    assert all(np.allclose(c.target_deltas, 0.0) for c in exact)
    assert all(c.feature.shape == (oracle.feature_dim,) for c in crops)


def test_learners_need_enough_crops(small_corpus, oracle):
    crops = build_crops(small_corpus.train[:1], small_corpus.situation.categories, oracle,
                        np.random.default_rng(0), 3)
    with pytest.raises(ModelError):
        train_localizer("dog", crops)
    with pytest.raises(ModelError):
        train_refiner("dog", crops)


def test_localizer_predicts_overlap(small_corpus, oracle, trained_model):
    cats = small_corpus.situation.categories
    positives = [r for r in small_corpus.test if r.is_positive]
    crops = build_crops(positives, cats, oracle, np.random.default_rng(7), 10)
    predicted = [predict(trained_model.localizers[c.category], c.feature) for c in crops]
    truth = [c.target_iou for c in crops]
    assert np.corrcoef(predicted, truth)[0, 1] > 0.9
    assert np.mean(np.abs(np.subtract(predicted, truth))) < 0.1


def test_refinement_raises_overlap(small_corpus, oracle, trained_model):
    cats = small_corpus.situation.categories
    rng = np.random.default_rng(11)
    before, after = [], []
    for record in (r for r in small_corpus.test if r.is_positive):
        for cat in cats:
            gt = record.box_for(cat)
            for _ in range(25):
                box = jitter_box(gt, record.dims, rng)
                refined = apply_refinement(trained_model.refiners[cat], oracle.features(record.image_id, box),
                                           box, record.dims)
                before.append(iou(box, gt))
                after.append(iou(refined, gt))
    assert len(before) >= 500
    assert np.mean(after) > np.mean(before)


def test_trained_model_shape(small_corpus, trained_model):
    cats = small_corpus.situation.categories
    assert trained_model.categories == cats
    assert trained_model.relationship.dim == 4 * len(cats)
    assert trained_model.relationship.categories == cats
    assert set(trained_model.size_shape_priors) == set(cats)
    assert trained_model.feature_dim == 64
    area_prior, _ = trained_model.size_shape_priors["walker"]
    assert area_prior.median == pytest.approx(0.12, abs=0.03)


def test_relationship_mean_tracks_training_boxes(small_corpus, trained_model):
    cats = small_corpus.situation.categories
    vectors = np.stack([np.concatenate([to_params(r.box_for(c), r.dims).as_vector() for c in cats])
                        for r in small_corpus.train])
    assert trained_model.relationship.mean == pytest.approx(vectors.mean(axis=0))


def test_training_is_deterministic_and_round_trips(small_corpus, oracle):
    config = TrainingConfig(seed=5, crops_per_image=4)
    first = train_situation(small_corpus.train, small_corpus.situation, oracle, config)
    second = train_situation(small_corpus.train, small_corpus.situation, oracle, config)
    doc = json.dumps(first.to_document())
    assert doc == json.dumps(second.to_document())
    back = TrainedSituationModel.from_document(json.loads(doc))
    assert json.dumps(back.to_document()) == doc


def test_training_rejects_bad_annotations(small_corpus, oracle):
    situation = small_corpus.situation
    with pytest.raises(ModelError):
        train_situation(small_corpus.train[:1], situation, oracle)
    broken = small_corpus.train[0]
    missing = AnnotationRecord(broken.image_id, broken.dims,
                               tuple((c, b) for c, b in broken.boxes if c != "leash"), True)
    with pytest.raises(AnnotationError):
        train_situation([missing] + small_corpus.train[1:], situation, oracle)


def test_model_document_checks_format():
    with pytest.raises(ModelError):
        TrainedSituationModel.from_document({"format": "other", "version": 1})


def test_training_config_validation():
    with pytest.raises(ValueError):
        TrainingConfig(lam=-1.0)
    with pytest.raises(ValueError):
        TrainingConfig(gmm_components=0)
    with pytest.raises(ValueError):
        SituationSpec("solo", ("dog",))
