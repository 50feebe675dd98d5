import math

import numpy as np
import pytest

from stratabc import (
    Population,
    RngStream,
    ThresholdSchedule,
    active_strata,
    landing_stratum,
    stratum_of,
    validate_schedule,
)
from stratabc.core import ScheduleError


def test_validate_schedule_accepts_benchmark_sequences():
    schedule = validate_schedule([math.inf, 4, 3, 2, 1])
    assert schedule.n_strata == 5
    assert schedule.final == 1.0
    single = validate_schedule([5.0])
    assert single.n_strata == 1


@pytest.mark.parametrize(
    "raw",
    [
        [],
        [math.inf, 1, 2],
        [4, 4, 3],
        [3, 2, 0.0],
        [3, 2, -1],
        [4, math.inf, 1],
        [math.nan, 1],
    ],
)
def test_validate_schedule_rejects_bad_sequences(raw):
    with pytest.raises(ScheduleError):
        validate_schedule(raw)


def test_stratum_of_band_conventions():
    schedule = validate_schedule([math.inf, 4, 3, 2, 1])
    assert stratum_of(0.5, schedule) == 5
    assert stratum_of(1.0, schedule) == 4  # lower bound inclusive
    assert stratum_of(7.3, schedule) == 1  # catch-all outer band
    assert stratum_of(4.0, schedule) == 1
    assert stratum_of(0.0, schedule) == 5


def test_stratum_of_partition_is_exhaustive_and_consistent():
    schedule = validate_schedule([math.inf, 4, 3, 2, 1])
    eps = (math.inf,) + schedule.eps[1:] + (0.0,)
    rng = np.random.default_rng(7)
    for d in rng.uniform(0, 10, size=500):
        k = stratum_of(float(d), schedule)
        assert eps[k] <= d < eps[k - 1]


def test_stratum_of_rejects_invalid_distances():
    schedule = validate_schedule([math.inf, 2, 1])
    with pytest.raises(ValueError):
        stratum_of(math.inf, schedule)
    with pytest.raises(ValueError):
        stratum_of(-0.5, schedule)
    finite = validate_schedule([4.0, 1.0])
    with pytest.raises(ValueError):
        stratum_of(5.0, finite)


def test_landing_stratum_sentinel_goes_to_outer_band():
    schedule = validate_schedule([math.inf, 2, 1])
    assert landing_stratum(math.inf, schedule) == 1
    assert landing_stratum(0.2, schedule) == 3
    finite = validate_schedule([4.0, 1.0])
    assert landing_stratum(9.0, finite) == 1


def test_active_strata():
    schedule = validate_schedule([math.inf, 4, 3, 2, 1])
    assert list(active_strata(1, schedule)) == [1, 2, 3, 4, 5]
    assert list(active_strata(5, schedule)) == [5]
    assert list(active_strata(3, schedule)) == [3, 4, 5]
    with pytest.raises(ValueError):
        active_strata(6, schedule)


def _population(n=5, dim=2, seed=0, iteration=1):
    rng = np.random.default_rng(seed)
    w = rng.random(n)
    return Population(
        thetas=rng.normal(size=(n, dim)),
        weights=w / w.sum(),
        distances=rng.uniform(0, 1, n),
        strata=np.full(n, 1),
        iteration=iteration,
    )


def test_population_validation():
    pop = _population()
    assert pop.size == 5 and pop.dim == 2
    assert math.isclose(pop.weights.sum(), 1.0, abs_tol=1e-12)
    with pytest.raises(ValueError):
        Population(np.zeros((2, 1)), np.array([0.5, 0.2]), np.zeros(2), np.ones(2, int))
    with pytest.raises(ValueError):
        Population(np.zeros((2, 1)), np.array([1.0, 0.0]), np.zeros(2), np.ones(2, int))
    with pytest.raises(ValueError):
        Population(np.zeros((0, 1)), np.zeros(0), np.zeros(0), np.zeros(0, int))


def test_population_is_frozen():
    pop = _population()
    with pytest.raises(ValueError):
        pop.thetas[0, 0] = 99.0
    with pytest.raises(ValueError):
        pop.weights[0] = 99.0


def test_population_particle_views_and_masses():
    pop = _population()
    particles = list(pop.particles())
    assert len(particles) == pop.size
    assert particles[0].stratum == 1
    masses = pop.stratum_masses(3)
    assert math.isclose(masses[0], 1.0, abs_tol=1e-12)
    assert masses[1] == masses[2] == 0.0


def test_population_weighted_moments_match_numpy():
    pop = _population(n=40, dim=3, seed=3)
    mean = pop.weighted_mean()
    sd = pop.weighted_sd()
    np.testing.assert_allclose(mean, pop.weights @ pop.thetas, rtol=1e-12)
    var = pop.weights @ (pop.thetas - mean) ** 2
    np.testing.assert_allclose(sd, np.sqrt(var), rtol=1e-12)


def test_rng_stream_reproducible_and_independent_of_construction_order():
    a = RngStream(123).child(4, 7).generator().random(5)
    b = RngStream(123, (4, 7)).generator().random(5)
    np.testing.assert_array_equal(a, b)
    c = RngStream(123).child_generator(4, 7).random(5)
    np.testing.assert_array_equal(a, c)
    other = RngStream(123).child(4, 8).generator().random(5)
    assert not np.array_equal(a, other)
    different_seed = RngStream(124).child(4, 7).generator().random(5)
    assert not np.array_equal(a, different_seed)
