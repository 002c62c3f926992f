# File Name: test_lognormal.py
# Created By: ZW
# Created On: 2023-03-08
# Purpose: tests for the log-normal size and shape priors

# module imports
# ----------------------------------------------------------------------------
import numpy as np
import pytest
from scipy import integrate

from sitground.core.errors import ModelError
from sitground.core.lognormal import (SIGMA_FLOOR, LogNormalModel, density_lognormal, fit_lognormal,
                                      sample_lognormal)


# test definitions
# ----------------------------------------------------------------------------

def test_fit_two_point_example():
    model = fit_lognormal([1.0, np.e ** 2])
    assert model.mu == pytest.approx(1.0, abs=1e-12)
    assert model.sigma == pytest.approx(1.0, abs=1e-12)


def test_constant_values_hit_the_sigma_floor():
    model = fit_lognormal([0.2, 0.2, 0.2])
    assert model.sigma == SIGMA_FLOOR
    assert model.median == pytest.approx(0.2)


def test_planted_parameters_recovered():
    rng = np.random.default_rng(11)
    model = fit_lognormal(rng.lognormal(-2.0, 0.5, size=100_000))
    assert model.mu == pytest.approx(-2.0, abs=0.01)
    assert model.sigma == pytest.approx(0.5, abs=0.01)


def test_fit_rejects_bad_input():
    with pytest.raises(ModelError):
        fit_lognormal([0.3])
    with pytest.raises(ModelError):
        fit_lognormal([0.3, 0.0, 0.2])


def test_samples_are_positive_and_seeded():
    model = LogNormalModel(-1.0, 0.3)
    a = [sample_lognormal(model, np.random.default_rng(5)) for _ in range(3)]
    b = [sample_lognormal(model, np.random.default_rng(5)) for _ in range(3)]
    assert a == b
    assert all(v > 0 for v in a)


def test_density_integrates_to_one():
    model = LogNormalModel(0.0, 0.5)
    total, _ = integrate.quad(lambda v: density_lognormal(model, v), 1e-9, 50)
    assert total == pytest.approx(1.0, abs=1e-6)
    with pytest.raises(ModelError):
        density_lognormal(model, 0.0)


def test_document_round_trip():
    model = LogNormalModel(-0.7, 0.25)
    assert LogNormalModel.from_document(model.to_document()) == model
