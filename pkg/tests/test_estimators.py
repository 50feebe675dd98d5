import math

import numpy as np
import pytest
from sklearn.base import clone

from stratabc import ABCSMCSampler, RejectionABC, get_model


def test_get_params_round_trip():
    sampler = ABCSMCSampler(n_particles=123, method="local", seed=7)
    params = sampler.get_params()
    assert params["n_particles"] == 123
    assert params["method"] == "local"
    twin = clone(sampler)
    assert twin.get_params() == params
    sampler.set_params(seed=9)
    assert sampler.seed == 9


def test_fit_sets_posterior_attributes():
    sampler = ABCSMCSampler(
        model="gaussian_toy", thresholds=(math.inf, 3, 2), n_particles=80, seed=1
    ).fit()
    assert sampler.samples_.shape == (80, 1)
    assert sampler.weights_.sum() == pytest.approx(1.0, abs=1e-12)
    assert sampler.n_iterations_ == 3
    assert not sampler.stopped_early_
    np.testing.assert_array_equal(sampler.observed_, [0.0])
    assert sampler.posterior_mean_.shape == (1,)


def test_fit_accepts_explicit_observation_and_model_instance():
    banana = get_model("banana")
    observed = np.array([0.1, -0.2])
    sampler = ABCSMCSampler(
        model=banana, thresholds=(math.inf, 60, 30), n_particles=60, seed=3
    ).fit(observed)
    np.testing.assert_array_equal(sampler.observed_, observed)
    assert sampler.samples_.shape == (60, 2)


def test_fit_is_reproducible_given_seed():
    kwargs = dict(model="gaussian_toy", thresholds=(math.inf, 3, 2), n_particles=50, seed=5)
    a = ABCSMCSampler(**kwargs).fit()
    b = ABCSMCSampler(**kwargs).fit()
    np.testing.assert_array_equal(a.samples_, b.samples_)
    np.testing.assert_array_equal(a.weights_, b.weights_)


def test_sample_draws_from_posterior_support():
    sampler = ABCSMCSampler(
        model="gaussian_toy", thresholds=(math.inf, 3, 2), n_particles=40, seed=2
    ).fit()
    draws = sampler.sample(200, random_state=0)
    assert draws.shape == (200, 1)
    rows = {tuple(row) for row in draws}
    assert rows <= {tuple(row) for row in sampler.samples_}
    again = sampler.sample(200, random_state=0)
    np.testing.assert_array_equal(draws, again)


def test_unfitted_sample_raises():
    with pytest.raises(RuntimeError, match="not been fitted"):
        ABCSMCSampler().sample(3)


def test_invalid_parameters_raise_on_fit():
    with pytest.raises(ValueError):
        ABCSMCSampler(method="bogus").fit()
    with pytest.raises(ValueError):
        ABCSMCSampler(thresholds=(1, 2)).fit()
    with pytest.raises(ValueError):
        ABCSMCSampler(n_particles=1).fit()
    with pytest.raises(ValueError):
        ABCSMCSampler(model="banana", model_options={"horizon": 3}).fit()


def test_rejection_estimator():
    rej = RejectionABC(model="gaussian_toy", epsilon=1.0, n_particles=300, seed=4).fit()
    assert rej.samples_.shape == (300, 1)
    assert 0 < rej.acceptance_rate_ <= 1
    assert rej.n_generated_ >= 300
    assert np.all(np.abs(rej.distances_) < 1.0)
    twin = RejectionABC(model="gaussian_toy", epsilon=1.0, n_particles=300, seed=4).fit()
    np.testing.assert_array_equal(rej.samples_, twin.samples_)


def test_rejection_estimator_lv_options_forwarded():
    rej = RejectionABC(
        model="lotka_volterra",
        epsilon=math.inf,
        n_particles=5,
        seed=8,
        model_options={"horizon": 4.0, "grid_dt": 0.5, "max_events": 20_000},
    ).fit()
    assert rej.model_.horizon == 4.0
    assert rej.samples_.shape == (5, 3)
