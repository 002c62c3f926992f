# File Name: conftest.py
# Created By: ZW
# Created On: 2023-03-06
# Purpose: shared fixtures (a small synthetic corpus, its oracle and a model
#  trained on it) and the hypothesis profiles for the sitground test-suite.

# module imports
# ----------------------------------------------------------------------------
import os

import hypothesis
import numpy as np
import pytest

from sitground.operations.evaluation import fit_pairwise_gmms
from sitground.operations.features import OracleFeatures
from sitground.operations.synth import SynthSpec, generate_synthetic
from sitground.operations.training import TrainedSituationModel, TrainingConfig, train_situation

np.seterr(all="warn")

hypothesis.settings.register_profile("fast", max_examples=10, deadline=None)
hypothesis.settings.register_profile("ci", max_examples=100, deadline=None)
hypothesis.settings.register_profile("debugger", report_multiple_bugs=False, deadline=None)
hypothesis.settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "ci"))


# fixture definitions
# ----------------------------------------------------------------------------

@pytest.fixture(scope="session")
def small_spec():
    return SynthSpec(n_train=30, n_pos_test=8, n_neg_test=10, seed=3)


@pytest.fixture(scope="session")
def small_corpus(small_spec):
    return generate_synthetic(small_spec)


@pytest.fixture(scope="session")
def oracle(small_corpus):
    return OracleFeatures(small_corpus.scenes, small_corpus.situation.categories, small_corpus.spec.oracle)


@pytest.fixture(scope="session")
def trained_model(small_corpus, oracle):
    model = train_situation(small_corpus.train, small_corpus.situation, oracle, TrainingConfig(seed=0))
    gmms = fit_pairwise_gmms(small_corpus.train, small_corpus.situation.categories, k=2,
                             rng=np.random.default_rng(0))
    return TrainedSituationModel(model.categories, model.relationship, model.size_shape_priors,
                                 model.localizers, model.refiners, gmms)
