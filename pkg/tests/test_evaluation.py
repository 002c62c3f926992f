# File Name: test_evaluation.py
# Created By: ZW
# Created On: 2023-03-27
# Purpose: tests for the ranking metrics, the baseline rankers and the method
#  comparison

# module imports
# ----------------------------------------------------------------------------
from itertools import combinations, product
from math import inf, log, sqrt

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sitground.core.boxes import ImageDims, PixelBox, to_params
from sitground.core.errors import ModelError, ValidationError
from sitground.core.gmm import fit_gmm, gmm_logdensity
from sitground.core.records import AnnotationRecord, PriorProposal
from sitground.operations.engine import Detection, EngineConfig, Proposal, RunResult
from sitground.operations.evaluation import (ASCENDING, DENSITY_EPS, DESCENDING, N_GRID, UNARY_EPS,
                                             WORST_ENERGY, RecallTable, ScoredImage, aggregate_runs,
                                             compare_methods, evaluate_method, fit_pairwise_gmms,
                                             format_table, grounding_accuracy, group_priors, irsg_energy,
                                             irsg_ranking, pair_features, positive_ranks, recall_at_n,
                                             recall_row, score_corpus, topbox_score)
from sitground.operations.features import OracleFeatures
from sitground.operations.synth import SynthSpec, generate_synthetic
from sitground.operations.training import TrainingConfig, train_situation

DIMS = ImageDims(640, 480)
CATS = ("walker", "dog", "leash")

scores = st.lists(st.floats(-50, 50, allow_nan=False), min_size=1, max_size=50)
coarse_scores = st.lists(st.integers(-500, 500).map(lambda i: i / 10), min_size=1, max_size=50)


def prior(category, confidence, x=10.0, y=10.0, w=40.0, h=60.0, image_id="img"):
    return PriorProposal(image_id, category, PixelBox(x, y, w, h), confidence)


def positive(image_id, walker, dog, leash):
    return AnnotationRecord(image_id, DIMS, (("walker", walker), ("dog", dog), ("leash", leash)), True)


# test definitions
# ----------------------------------------------------------------------------

def test_rank_among_three_negatives():
    assert positive_ranks([0.6], [0.9, 0.5, 0.2]).tolist() == [2]
    assert recall_at_n([0.6], [0.9, 0.5, 0.2], 1) == 0.0
    assert recall_at_n([0.6], [0.9, 0.5, 0.2], 2) == 1.0


def test_ties_count_against_the_positive():
    assert positive_ranks([0.5], [0.5, 0.1]).tolist() == [2]
    assert positive_ranks([0.5], [0.5, 0.9], ASCENDING).tolist() == [2]
    assert positive_ranks([1.0], [0.5, 2.0], ASCENDING).tolist() == [2]


def test_recall_rejects_bad_arguments():
    with pytest.raises(ValidationError):
        recall_at_n([0.5], [0.1], 0)
    with pytest.raises(ValidationError):
        recall_at_n([], [0.1], 1)
    with pytest.raises(ValidationError):
        positive_ranks([0.5], [0.1], "sideways")
    with pytest.raises(ValidationError):
        ScoredImage("a", inf, True)
    with pytest.raises(ValidationError):
        recall_row([ScoredImage("a", 1.0, True), ScoredImage("b", 1.0, False, ASCENDING)])


@given(scores, scores)
def test_recall_is_monotone_in_n(pos, neg):
    row = [recall_at_n(pos, neg, n) for n in N_GRID]
    assert row == sorted(row)
    assert recall_at_n(pos, neg, len(neg) + 1) == 1.0


@given(coarse_scores, coarse_scores)
def test_recall_ignores_increasing_transforms(pos, neg):
    def squash(v):
        v = np.asarray(v)
        return np.exp(v / 10.0) + v ** 3

    for n in N_GRID:
        assert recall_at_n(pos, neg, n) == recall_at_n(squash(pos), squash(neg), n)


@given(scores, scores)
def test_energy_ordering_is_the_mirror_of_score_ordering(pos, neg):
    for n in N_GRID:
        assert recall_at_n(pos, neg, n, DESCENDING) == recall_at_n(np.negative(pos), np.negative(neg), n, ASCENDING)


def test_fuzz_corpus_recall_row():
    rng = np.random.default_rng(11)
    scored = [ScoredImage(f"img-{i}", rng.normal(1.0 if i < 20 else 0.0), i < 20) for i in range(100)]
    row = recall_row(scored)
    assert len(row) == len(N_GRID)
    assert list(row) == sorted(row)
    assert row[-1] == 1.0


def test_aggregate_runs_uses_population_std():
    table = aggregate_runs([[0.3] * 6, [0.5] * 6], "situate")
    assert table.mean_at(10) == pytest.approx(0.4)
    assert table.std_at(10) == pytest.approx(0.1)
    assert table.runs == 2
    with pytest.raises(ValidationError):
        aggregate_runs([[0.3, 0.4]], "situate")
    with pytest.raises(ValidationError):
        RecallTable("x", (0.1,), (0.0, 0.0))


def test_topbox_score():
    priors = [prior("walker", 0.9), prior("walker", 0.5), prior("dog", 0.8), prior("leash", 0.7)]
    assert topbox_score(priors, CATS) == pytest.approx((0.91 * 0.81 * 0.71) ** (1 / 3))
    assert topbox_score(priors[:3], CATS) == 0.01
    assert topbox_score([], CATS, pad=0.05) == 0.05


def test_pair_features_are_relative_offsets():
    a, b = [0.2, 0.3, 0.01, 1.0], [0.5, 0.1, 0.04, 0.5]
    assert pair_features(a, b) == pytest.approx([0.3, -0.2, log(4.0), log(0.5)])


def test_pair_gmm_recovers_a_planted_offset():
    rng = np.random.default_rng(5)
    records = []
    for i in range(30):
        x, y = rng.uniform(50, 400), rng.uniform(50, 250)
        walker = PixelBox(x, y, 80, 160)
        dog = PixelBox(x + 128 + rng.normal(0, 2), y + 136 + rng.normal(0, 2), 80, 80)
        leash = PixelBox(x + 60, y + 80, 40, 40)
        records.append(positive(f"pos-{i}", walker, dog, leash))
    gmms = fit_pairwise_gmms(records, CATS, k=1, rng=np.random.default_rng(0))
    assert set(gmms) == set(combinations(CATS, 2))
    walker_dog = gmms[("walker", "dog")]
    assert walker_dog.means[0][:2] == pytest.approx([0.2, 0.2], abs=0.01)
    assert walker_dog.means[0][2] == pytest.approx(log(0.5), abs=1e-6)
    with pytest.raises(ModelError):
        fit_pairwise_gmms(records[:4], CATS, k=1)


def brute_force_energy(by_cat, gmms, dims):
    best = (inf, None)
    for config in product(*(by_cat[c] for c in CATS)):
        params = [to_params(p.box, dims).as_vector() for p in config]
        energy = -sum(log(p.detector_confidence + UNARY_EPS) for p in config)
        for i, j in combinations(range(len(CATS)), 2):
            feats = pair_features(params[i], params[j])[None, :]
            energy -= log(float(np.exp(gmm_logdensity(gmms[(CATS[i], CATS[j])], feats))[0]) + DENSITY_EPS)
        if energy < best[0]: best = (energy, config)
    return best


@pytest.mark.parametrize("k", [1, 2, 3])
def test_irsg_energy_matches_enumeration(k):
    rng = np.random.default_rng(k)
    gmms = {pair: fit_gmm(rng.normal(0.0, 0.3, size=(40, 4)), k=1, rng=rng) for pair in combinations(CATS, 2)}
    by_cat = {
        cat: [prior(cat, float(rng.uniform(0.05, 1.0)), rng.uniform(10, 300), rng.uniform(10, 250),
                    *rng.uniform(20, 200, size=2))
              for _ in range(k)]
        for cat in CATS
    }
    result = irsg_energy(by_cat, gmms, CATS, DIMS, top_k=20)
    energy, config = brute_force_energy(by_cat, gmms, DIMS)
    assert result.energy == pytest.approx(energy, rel=1e-9)
    assert tuple(result.config[c] for c in CATS) == config


def test_irsg_without_boxes_ranks_last():
    rng = np.random.default_rng(0)
    gmms = {pair: fit_gmm(rng.normal(size=(20, 4)), k=1, rng=rng) for pair in combinations(CATS, 2)}
    by_cat = {"walker": [prior("walker", 0.9)], "dog": [prior("dog", 0.9)]}
    result = irsg_energy(by_cat, gmms, CATS, DIMS)
    assert result.config is None and result.energy == inf
    record = AnnotationRecord("img", DIMS, (), False)
    ranking = irsg_ranking([record], {"img": [p for ps in by_cat.values() for p in ps]}, gmms, CATS)
    assert ranking[0].score == WORST_ENERGY
    assert ranking[0].ordering == ASCENDING


def test_raising_a_chosen_unary_lowers_the_energy():
    rng = np.random.default_rng(2)
    gmms = {pair: fit_gmm(rng.normal(size=(20, 4)), k=1, rng=rng) for pair in combinations(CATS, 2)}
    by_cat = {cat: [prior(cat, 0.5, 40.0 * i, 30.0 * i)] for i, cat in enumerate(CATS, start=1)}
    before = irsg_energy(by_cat, gmms, CATS, DIMS).energy
    by_cat["dog"] = [prior("dog", 0.9, 80.0, 60.0)]
    assert irsg_energy(by_cat, gmms, CATS, DIMS).energy < before


def test_grounding_accuracy():
    gt = positive("pos-0", PixelBox(10, 10, 100, 200), PixelBox(200, 300, 50, 40), PixelBox(150, 150, 20, 20))

    def det(box):
        return Detection(Proposal("x", box, to_params(box, DIMS), 1.0, 0.5, 0.8, "test"))

    detections = {"walker": det(PixelBox(12, 10, 100, 200)), "dog": det(PixelBox(400, 10, 50, 40)), "leash": None}
    results = [RunResult("pos-0", 0.5, detections, ())]
    assert grounding_accuracy(results, [gt], CATS) == {"walker": 1.0, "dog": 0.0, "leash": 0.0}
    with pytest.raises(ValidationError):
        grounding_accuracy(results, [], CATS)


def test_format_table():
    tables = [aggregate_runs([[0.5] * 6, [0.7] * 6], "situate"),
              aggregate_runs([[0.25] * 6], "topbox", stochastic=False)]
    text = format_table(tables)
    lines = text.splitlines()
    assert lines[0].split() == ["method"] + [f"R@{n}" for n in N_GRID]
    assert lines[1].split() == ["situate"] + ["0.600", "(0.100)"] * 6
    assert lines[2].split() == ["topbox"] + ["0.250"] * 6
    assert format_table([]) == ""


def test_compare_small_corpus(small_corpus, trained_model, oracle):
    report = compare_methods(small_corpus.test, small_corpus.priors, trained_model, oracle,
                             EngineConfig(max_iterations=60), seeds=(0, 1))
    assert [t.method for t in report.tables] == ["situate", "uniform", "topbox", "irsg"]
    assert report.n_positive == 8 and report.n_negative == 10
    for table in report.tables:
        assert len(table.means) == 6
        assert all(0.0 <= m <= 1.0 for m in table.means)
    for method in ("topbox", "irsg"):
        assert report.table(method).stds == (0.0,) * 6
        assert not report.table(method).stochastic
    assert report.table("situate").runs == 2
    doc = report.to_document()
    assert [m["method"] for m in doc["methods"]] == ["situate", "uniform", "topbox", "irsg"]


def test_evaluate_method_rejects_unknowns(small_corpus, trained_model, oracle):
    with pytest.raises(ValidationError):
        evaluate_method("random", small_corpus.test, small_corpus.priors, trained_model, oracle, EngineConfig())
    with pytest.raises(ValidationError):
        evaluate_method("irsg", small_corpus.test, small_corpus.priors, trained_model, oracle, EngineConfig(),
                        unary="both")


def test_irsg_with_localizer_unary(small_corpus, trained_model, oracle):
    table = evaluate_method("irsg", small_corpus.test, small_corpus.priors, trained_model, oracle,
                            EngineConfig(), unary="localizer", top_k=5)
    assert table.runs == 1 and len(table.means) == 6


def test_worker_processes_match_a_serial_run(small_corpus, trained_model, oracle):
    config = EngineConfig(categories=trained_model.categories, max_iterations=40, seed=5)
    by_image = group_priors(small_corpus.priors)
    serial = score_corpus(small_corpus.test, by_image, trained_model, oracle, config, jobs=1)
    parallel = score_corpus(small_corpus.test, by_image, trained_model, oracle, config, jobs=3)
    assert [r.image_id for r in parallel] == [r.image_id for r in small_corpus.test]
    assert [r.score for r in parallel] == [r.score for r in serial]
    assert [len(r.trace) for r in parallel] == [len(r.trace) for r in serial]


def test_irsg_beats_chance_on_the_default_corpus():
    corpus = generate_synthetic(SynthSpec())
    cats = corpus.situation.categories
    gmms = fit_pairwise_gmms(corpus.train, cats, rng=np.random.default_rng(0))
    scored = irsg_ranking(corpus.test, group_priors(corpus.priors), gmms, cats)
    n_neg = sum(1 for r in corpus.test if not r.is_positive)
    recall = recall_row(scored, (100,))[0]
    # a random ranking puts a positive in the top 100 with probability 100 / (n_neg + 1)
    assert recall > 100 / (n_neg + 1)


@pytest.mark.slow
def test_situate_beats_uniform_on_the_default_corpus():
    corpus = generate_synthetic(SynthSpec())
    cats = corpus.situation.categories
    oracle = OracleFeatures(corpus.scenes, cats, corpus.spec.oracle)
    model = train_situation(corpus.train, corpus.situation, oracle, TrainingConfig(seed=0))
    config = EngineConfig()
    situate = evaluate_method("situate", corpus.test, corpus.priors, model, oracle, config, jobs=4)
    uniform = evaluate_method("uniform", corpus.test, corpus.priors, model, oracle, config, jobs=4)
    pooled = sqrt((situate.std_at(10) ** 2 + uniform.std_at(10) ** 2) / 2)
    assert situate.mean_at(10) - uniform.mean_at(10) > pooled
    assert uniform.mean_at(10) > 10 / 201
