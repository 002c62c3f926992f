# File Name: test_synth.py
# Created By: ZW
# Created On: 2023-03-23
# Purpose: tests for the synthetic corpus generator

# module imports
# ----------------------------------------------------------------------------
import numpy as np
import pytest

from sitground.core.boxes import to_params
from sitground.core.errors import SynthSpecError
from sitground.core.gaussian import GaussianModel, block_layout, fit_gaussian
from sitground.core.records import SituationSpec
from sitground.operations.intersect import iou
from sitground.operations.synth import (DEFAULT_MEANS, NEGATIVE_FLAVORS, SynthSpec, generate_synthetic,
                                        planted_relationship)


def all_boxes(corpus):
    for scene in corpus.scenes.values():
        for box in scene.gt_boxes.values():
            yield scene.dims, box
        for _, box in scene.distractors:
            yield scene.dims, box


# test definitions
# ----------------------------------------------------------------------------

def test_counts_match_the_spec(small_spec, small_corpus):
    assert len(small_corpus.train) == small_spec.n_train
    assert sum(r.is_positive for r in small_corpus.test) == small_spec.n_pos_test
    assert sum(not r.is_positive for r in small_corpus.test) == small_spec.n_neg_test
    assert len(small_corpus.scenes) == small_spec.n_train + small_spec.n_pos_test + small_spec.n_neg_test
    n_test = small_spec.n_pos_test + small_spec.n_neg_test
    assert len(small_corpus.priors) == n_test * 3 * small_spec.priors_per_category


def test_every_box_lies_in_the_frame(small_corpus):
    for dims, box in all_boxes(small_corpus):
        assert box.x >= 0 and box.y >= 0
        assert box.x2 <= dims.width + 1e-6 and box.y2 <= dims.height + 1e-6
    for prior in small_corpus.priors:
        assert 0.0 <= prior.detector_confidence <= 1.0


def test_boxes_are_snapped(small_corpus):
    for _, box in all_boxes(small_corpus):
        assert box.as_tuple() == tuple(round(v, 2) for v in box.as_tuple())


def test_generation_is_deterministic(small_spec, small_corpus):
    again = generate_synthetic(small_spec)
    assert again.train == small_corpus.train
    assert again.test == small_corpus.test
    assert again.priors == small_corpus.priors
    other = generate_synthetic(SynthSpec(n_train=30, n_pos_test=8, n_neg_test=10, seed=4))
    assert other.train != small_corpus.train


def test_positives_carry_every_category(small_corpus):
    situation = small_corpus.situation
    for record in small_corpus.train + [r for r in small_corpus.test if r.is_positive]:
        record.validate(situation)


def test_negative_flavors_rotate(small_corpus):
    cats = small_corpus.situation.categories
    negatives = [r for r in small_corpus.test if not r.is_positive]
    for i, record in enumerate(negatives):
        flavor = small_corpus.flavors[record.image_id]
        assert flavor == NEGATIVE_FLAVORS[i % len(NEGATIVE_FLAVORS)]
        present = [c for c in cats if record.box_for(c) is not None]
        if flavor == "drop_one": assert len(present) == len(cats) - 1
        if flavor == "independent": assert len(present) == len(cats)
        if flavor == "distractors_only":
            assert present == []
            assert len(record.boxes) >= 1


def test_planted_mean_recovered_from_training_boxes():
    spec = SynthSpec(n_train=100, n_pos_test=1, n_neg_test=1, seed=0)
    corpus = generate_synthetic(spec)
    cats = spec.situation.categories
    vectors = np.stack([np.concatenate([to_params(r.box_for(c), r.dims).as_vector() for c in cats])
                        for r in corpus.train])
    fitted = fit_gaussian(vectors)
    assert np.max(np.abs(fitted.mean - spec.planted.mean)) < 0.05


def test_negatives_fit_the_planted_model_worse_than_positives():
    spec = SynthSpec(n_train=10, n_pos_test=40, n_neg_test=40, seed=2)
    corpus = generate_synthetic(spec)
    cats = spec.situation.categories

    def loglik(record):
        return spec.planted.logpdf(np.concatenate([to_params(record.box_for(c), record.dims).as_vector()
                                                   for c in cats]))

    pos = [loglik(r) for r in corpus.test if r.is_positive]
    full_negatives = [r for r in corpus.test
                      if not r.is_positive and all(r.box_for(c) is not None for c in cats)]
    assert full_negatives
    neg = [loglik(r) for r in full_negatives]
    assert np.mean(neg) < np.percentile(pos, 5)


def test_detector_confidence_tracks_overlap(small_corpus):
    scenes = small_corpus.scenes
    overlaps, confs = [], []
    for prior in small_corpus.priors:
        gt = scenes[prior.image_id].gt_boxes.get(prior.category)
        overlaps.append(iou(prior.box, gt) if gt is not None else 0.0)
        confs.append(prior.detector_confidence)
    assert np.corrcoef(overlaps, confs)[0, 1] > 0.7


def test_full_miss_rate_leaves_only_random_boxes():
    spec = SynthSpec(n_train=2, n_pos_test=5, n_neg_test=1, miss_rate=1.0, seed=1)
    corpus = generate_synthetic(spec)
    best = max(p.detector_confidence for p in corpus.priors)
    assert best < 0.95


def test_planted_relationship_defaults():
    model = planted_relationship(("walker", "dog", "leash"))
    assert model.mean[:4].tolist() == list(DEFAULT_MEANS["walker"])
    assert np.all(np.linalg.eigvalsh(model.cov) > 0)
    generic = planted_relationship(("a", "b"))
    assert generic.categories == ("a", "b")


def test_spec_validation():
    with pytest.raises(SynthSpecError):
        SynthSpec(n_train=0)
    with pytest.raises(SynthSpecError):
        SynthSpec(miss_rate=1.5)
    with pytest.raises(SynthSpecError):
        SynthSpec(situation=SituationSpec("s", ("x", "y")), planted=planted_relationship(("walker", "dog")))
    singular = GaussianModel(np.full(8, 0.5), np.zeros((8, 8)), block_layout(("a", "b")))
    with pytest.raises(SynthSpecError):
        SynthSpec(situation=SituationSpec("s", ("a", "b")), planted=singular)


def test_infeasible_spec_is_rejected():
    cats = ("a", "b")
    means = {"a": (0.5, 0.5, 0.9, 5.0), "b": (0.5, 0.5, 0.1, 1.0)}
    spec = SynthSpec(situation=SituationSpec("huge", cats), planted=planted_relationship(cats, means))
    with pytest.raises(SynthSpecError):
        generate_synthetic(spec)


def test_spec_document_round_trip(small_spec):
    back = SynthSpec.from_document(small_spec.to_document())
    assert back.to_document() == small_spec.to_document()
    with pytest.raises(SynthSpecError):
        SynthSpec.from_document({"bogus": 1})
